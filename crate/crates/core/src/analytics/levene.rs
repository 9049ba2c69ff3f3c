use serde::{Deserialize, Serialize};

use super::{f_survival, mean, AnalyticsError, DecisionPanel, Factor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LeveneResult {
    pub factors: Vec<Factor>,
    pub w: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p: f64,
}

/// Levene's test on absolute deviations from the group means, grouping by
/// every combination of `factors`. Empty groups are ignored.
pub fn levene_w(panel: &DecisionPanel, factors: &[Factor]) -> Result<LeveneResult, AnalyticsError> {
    let groups: Vec<Vec<f64>> = panel.groups(factors).into_iter().filter(|g| !g.is_empty()).collect();
    let (w, df_between, df_within) = levene_groups(&groups)?;
    Ok(LeveneResult {
        factors: factors.to_vec(),
        w,
        df_between,
        df_within,
        p: f_survival(w, df_between as f64, df_within as f64).unwrap_or(f64::NAN),
    })
}

pub(crate) fn levene_groups(groups: &[Vec<f64>]) -> Result<(f64, usize, usize), AnalyticsError> {
    let k = groups.len();
    let n: usize = groups.iter().map(Vec::len).sum();
    if k < 2 || n <= k {
        return Err(AnalyticsError::TooFewGroups { needed: 2 });
    }
    let deviations: Vec<Vec<f64>> = groups
        .iter()
        .map(|g| {
            let c = mean(g);
            g.iter().map(|y| (y - c).abs()).collect()
        })
        .collect();
    let group_means: Vec<f64> = deviations.iter().map(|z| mean(z)).collect();
    let grand = deviations.iter().flatten().sum::<f64>() / n as f64;
    let between: f64 = deviations
        .iter()
        .zip(&group_means)
        .map(|(z, zm)| z.len() as f64 * (zm - grand).powi(2))
        .sum();
    let within: f64 = deviations
        .iter()
        .zip(&group_means)
        .flat_map(|(z, zm)| z.iter().map(move |v| (v - zm).powi(2)))
        .sum();
    if within <= 1e-300 {
        return Err(AnalyticsError::DegenerateGroups);
    }
    let (dfb, dfw) = (k - 1, n - k);
    Ok(((dfw as f64 / dfb as f64) * between / within, dfb, dfw))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_computed_two_groups() {
        let groups = vec![vec![0.0, 2.0], vec![0.0, 3.0, 3.0]];
        let (w, dfb, dfw) = levene_groups(&groups).unwrap();
        // z: a {1, 1} mean 1; b {2, 1, 1} mean 4/3; grand 6/5.
        let between = 2.0 * (1.0f64 - 1.2).powi(2) + 3.0 * (4.0f64 / 3.0 - 1.2).powi(2);
        let within = (2.0f64 - 4.0 / 3.0).powi(2) + 2.0 * (1.0f64 - 4.0 / 3.0).powi(2);
        assert_eq!((dfb, dfw), (1, 3));
        assert!((w - 3.0 * between / within).abs() < 1e-12);
    }

    #[test]
    fn constant_groups_are_degenerate() {
        let groups = vec![vec![1.0, 1.0], vec![2.0, 2.0]];
        assert_eq!(levene_groups(&groups), Err(AnalyticsError::DegenerateGroups));
        assert!(matches!(levene_groups(&[vec![1.0, 2.0]]), Err(AnalyticsError::TooFewGroups { .. })));
    }

    proptest! {
        #[test]
        fn invariant_to_per_group_shift_and_common_scale(
            data in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3..6), 2..6),
            shifts in prop::collection::vec(-10.0f64..10.0, 6),
            scale in 0.1f64..10.0,
        ) {
            let base = levene_groups(&data);
            prop_assume!(base.is_ok());
            let moved: Vec<Vec<f64>> = data
                .iter()
                .zip(&shifts)
                .map(|(g, s)| g.iter().map(|y| scale * y + s).collect())
                .collect();
            let (w0, ..) = base.unwrap();
            let (w1, ..) = levene_groups(&moved).unwrap();
            prop_assert!((w0 - w1).abs() <= 1e-7 * (1.0 + w0.abs()));
        }
    }
}
