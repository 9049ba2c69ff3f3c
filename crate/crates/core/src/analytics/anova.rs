use serde::{Deserialize, Serialize};

use super::{cell_index, f_survival, AnalyticsError, DecisionPanel, Factor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AnovaRow {
    /// Factor names joined by ` × `, or `Residual`.
    pub source: String,
    pub factors: Vec<Factor>,
    pub ss: f64,
    pub df: usize,
    pub ms: f64,
    /// `None` for the residual row and whenever the residual is empty.
    pub f: Option<f64>,
    pub p: Option<f64>,
    /// Effect share of the total sum of squares.
    pub eta_sq: Option<f64>,
    /// Effect share of effect plus residual.
    pub partial_eta_sq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AnovaTable {
    pub factors: Vec<Factor>,
    /// Observations per cell.
    pub replicates: usize,
    /// Effects in order of subset size then factor order, followed by the
    /// residual.
    pub rows: Vec<AnovaRow>,
    pub ss_total: f64,
    pub df_total: usize,
    /// Set when some statistic came out non-finite (e.g. zero residual).
    pub has_nan: bool,
}

impl AnovaTable {
    pub fn row(&self, source: &str) -> Option<&AnovaRow> {
        self.rows.iter().find(|r| r.source == source)
    }

    pub fn residual(&self) -> &AnovaRow {
        self.rows.last().expect("residual row")
    }
}

/// Balanced full-factorial ANOVA over `factors` with all interactions. Axes
/// not named in `factors` act as replicates within each cell.
pub fn anova_factorial(panel: &DecisionPanel, factors: &[Factor]) -> Result<AnovaTable, AnalyticsError> {
    let f = factors.len();
    let mut sorted = factors.to_vec();
    sorted.sort();
    sorted.dedup();
    if f == 0 || f > 4 || sorted.len() != f {
        return Err(AnalyticsError::BadFactors);
    }
    if panel.observations.is_empty() {
        return Err(AnalyticsError::Empty);
    }
    let sizes: Vec<usize> = factors.iter().map(|&x| panel.levels(x)).collect();
    let cells: usize = sizes.iter().product();
    let mut cell_sum = vec![0.0; cells];
    let mut cell_n = vec![0usize; cells];
    for o in &panel.observations {
        let c = cell_index(o, factors, &sizes);
        cell_sum[c] += o.value;
        cell_n[c] += 1;
    }
    let (min, max) = (*cell_n.iter().min().unwrap(), *cell_n.iter().max().unwrap());
    if min != max || min == 0 {
        return Err(AnalyticsError::UnbalancedDesign { min, max });
    }
    let r = min;
    let n = panel.observations.len();
    let grand = panel.values().sum::<f64>() / n as f64;
    let cell_mean: Vec<f64> = cell_sum.iter().map(|s| s / r as f64).collect();

    // Marginal means for every subset of factors (bitmask over positions),
    // indexed by the mixed-radix index of the subset's own levels.
    let subsets = 1usize << f;
    let marginal: Vec<Vec<f64>> = (0..subsets)
        .map(|mask| {
            let dims = subset_dims(mask, &sizes);
            let len: usize = dims.iter().product();
            let mut acc = vec![0.0; len];
            for (c, m) in cell_mean.iter().enumerate() {
                acc[project(c, mask, &sizes)] += m;
            }
            let per = (cells / len) as f64;
            acc.iter().map(|s| s / per).collect()
        })
        .collect();

    // Effect of a subset at a cell by inclusion-exclusion over its subsets.
    let effect = |mask: usize, c: usize| -> f64 {
        let mut e = 0.0;
        let mut sub = mask;
        loop {
            let sign = if (mask.count_ones() - sub.count_ones()).is_multiple_of(2) { 1.0 } else { -1.0 };
            e += sign * marginal[sub][project(c, sub, &sizes)];
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & mask;
        }
        e
    };

    let ss_total: f64 = panel.values().map(|y| (y - grand).powi(2)).sum();
    let ss_res: f64 = panel
        .observations
        .iter()
        .map(|o| (o.value - cell_mean[cell_index(o, factors, &sizes)]).powi(2))
        .sum();
    let df_res = n - cells;
    let ms_res = if df_res > 0 { ss_res / df_res as f64 } else { f64::NAN };

    let mut masks: Vec<usize> = (1..subsets).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    let mut rows = Vec::with_capacity(subsets);
    for mask in masks {
        let ss = (0..cells).map(|c| effect(mask, c).powi(2)).sum::<f64>() * r as f64;
        let df: usize = (0..f).filter(|b| mask >> b & 1 == 1).map(|b| sizes[b].saturating_sub(1)).product();
        let ms = if df > 0 { ss / df as f64 } else { f64::NAN };
        let fv = (df > 0 && df_res > 0).then(|| ms / ms_res);
        let members: Vec<Factor> = (0..f).filter(|b| mask >> b & 1 == 1).map(|b| factors[b]).collect();
        rows.push(AnovaRow {
            source: members.iter().map(|x| x.label()).collect::<Vec<_>>().join(" × "),
            factors: members,
            ss,
            df,
            ms,
            f: fv,
            p: fv.and_then(|v| f_survival(v, df as f64, df_res as f64)),
            eta_sq: (ss_total > 0.0).then(|| ss / ss_total),
            partial_eta_sq: (ss + ss_res > 0.0).then(|| ss / (ss + ss_res)),
        });
    }
    rows.push(AnovaRow {
        source: "Residual".into(),
        factors: Vec::new(),
        ss: ss_res,
        df: df_res,
        ms: ms_res,
        f: None,
        p: None,
        eta_sq: None,
        partial_eta_sq: None,
    });
    let has_nan = rows.iter().any(|row| {
        [Some(row.ss), Some(row.ms), row.f, row.p, row.eta_sq, row.partial_eta_sq]
            .iter()
            .flatten()
            .any(|v| !v.is_finite())
    });
    Ok(AnovaTable {
        factors: factors.to_vec(),
        replicates: r,
        rows,
        ss_total,
        df_total: n - 1,
        has_nan,
    })
}

fn subset_dims(mask: usize, sizes: &[usize]) -> Vec<usize> {
    (0..sizes.len()).filter(|b| mask >> b & 1 == 1).map(|b| sizes[b]).collect()
}

/// Maps a full cell index to the index of its levels on the factors in `mask`.
fn project(cell: usize, mask: usize, sizes: &[usize]) -> usize {
    let mut levels = vec![0; sizes.len()];
    let mut rest = cell;
    for b in (0..sizes.len()).rev() {
        levels[b] = rest % sizes[b];
        rest /= sizes[b];
    }
    (0..sizes.len())
        .filter(|b| mask >> b & 1 == 1)
        .fold(0, |acc, b| acc * sizes[b] + levels[b])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::Observation;
    use proptest::prelude::*;

    fn panel_from(values: &[f64], dims: [usize; 4]) -> DecisionPanel {
        let mut observations = Vec::new();
        let mut it = values.iter();
        for t in 0..dims[0] {
            for i in 0..dims[1] {
                for j in 0..dims[2] {
                    for k in 0..dims[3] {
                        observations.push(Observation {
                            levels: [t, i, j, k],
                            value: *it.next().unwrap(),
                        });
                    }
                }
            }
        }
        DecisionPanel { observations }
    }

    /// Textbook one-way ANOVA.
    fn one_way_oracle(groups: &[Vec<f64>]) -> (f64, f64) {
        let all: Vec<f64> = groups.iter().flatten().copied().collect();
        let g = all.iter().sum::<f64>() / all.len() as f64;
        let mut between = 0.0;
        let mut within = 0.0;
        for grp in groups {
            let m = grp.iter().sum::<f64>() / grp.len() as f64;
            between += grp.len() as f64 * (m - g).powi(2);
            within += grp.iter().map(|y| (y - m).powi(2)).sum::<f64>();
        }
        (between, within)
    }

    #[test]
    fn one_factor_matches_textbook() {
        let values: Vec<f64> = (0..24).map(|v| ((v * 7919) % 13) as f64 / 3.0).collect();
        let panel = panel_from(&values, [3, 2, 2, 2]);
        let table = anova_factorial(&panel, &[Factor::Site]).unwrap();
        let (between, within) = one_way_oracle(&panel.groups(&[Factor::Site]));
        assert!((table.rows[0].ss - between).abs() < 1e-10);
        assert!((table.residual().ss - within).abs() < 1e-10);
        assert_eq!((table.rows[0].df, table.residual().df), (1, 22));
    }

    #[test]
    fn two_factor_interaction_by_hand() {
        // 2×2 with 2 replicates, cell means 1, 2, 3, 8.
        let mut observations = Vec::new();
        let cells = [[1.0, 2.0], [3.0, 8.0]];
        for (a, row) in cells.iter().enumerate() {
            for (b, m) in row.iter().enumerate() {
                for (t, d) in [-0.5, 0.5].iter().enumerate() {
                    observations.push(Observation { levels: [t, a, b, 0], value: m + d });
                }
            }
        }
        let panel = DecisionPanel { observations };
        let table = anova_factorial(&panel, &[Factor::Actor, Factor::Site]).unwrap();
        // Grand 3.5; actor means 1.5, 5.5; site means 2, 5.
        assert!((table.row("Actor").unwrap().ss - 8.0 * 4.0).abs() < 1e-12);
        assert!((table.row("Site").unwrap().ss - 8.0 * 2.25).abs() < 1e-12);
        // Interaction effects ±1 at every cell.
        assert!((table.row("Actor × Site").unwrap().ss - 8.0).abs() < 1e-12);
        assert!((table.residual().ss - 2.0).abs() < 1e-12);
        assert_eq!(table.residual().df, 4);
    }

    #[test]
    fn workshop_shaped_degrees_of_freedom() {
        let values: Vec<f64> = (0..420).map(|v| ((v * 37) % 101) as f64 / 101.0).collect();
        let panel = panel_from(&values, [3, 5, 7, 4]);
        let three = anova_factorial(&panel, &[Factor::Actor, Factor::Site, Factor::Colour]).unwrap();
        let dfs: Vec<(String, usize)> = three.rows.iter().map(|r| (r.source.clone(), r.df)).collect();
        let want = [
            ("Actor", 4),
            ("Site", 6),
            ("Colour", 3),
            ("Actor × Site", 24),
            ("Actor × Colour", 12),
            ("Site × Colour", 18),
            ("Actor × Site × Colour", 72),
            ("Residual", 280),
        ];
        assert_eq!(dfs, want.iter().map(|(s, d)| (s.to_string(), *d)).collect::<Vec<_>>());
        let two = anova_factorial(&panel, &[Factor::Round, Factor::Colour]).unwrap();
        assert_eq!(two.residual().df, 408);
        assert_eq!(two.replicates, 35);
    }

    #[test]
    fn unbalanced_and_bad_factors_rejected() {
        let mut panel = panel_from(&[1.0, 2.0, 3.0, 4.0], [1, 2, 2, 1]);
        panel.observations.pop();
        assert!(matches!(
            anova_factorial(&panel, &[Factor::Actor]),
            Err(AnalyticsError::UnbalancedDesign { min: 1, max: 2 })
        ));
        assert_eq!(anova_factorial(&panel, &[]), Err(AnalyticsError::BadFactors));
        assert_eq!(anova_factorial(&panel, &[Factor::Site, Factor::Site]), Err(AnalyticsError::BadFactors));
    }

    #[test]
    fn saturated_model_flags_nan() {
        let panel = panel_from(&[1.0, 2.0, 4.0, 3.0], [1, 2, 2, 1]);
        let table = anova_factorial(&panel, &[Factor::Actor, Factor::Site]).unwrap();
        assert_eq!(table.residual().df, 0);
        assert!(table.has_nan);
        assert!(table.rows[0].f.is_none());
    }

    proptest! {
        #[test]
        fn sums_of_squares_partition_total(
            values in prop::collection::vec(-3.0f64..3.0, 2 * 3 * 2 * 2),
            choice in 1usize..16,
        ) {
            let panel = panel_from(&values, [2, 3, 2, 2]);
            let factors: Vec<Factor> = Factor::ALL.iter().enumerate().filter(|(b, _)| choice >> b & 1 == 1).map(|(_, f)| *f).collect();
            let table = anova_factorial(&panel, &factors).unwrap();
            let sum: f64 = table.rows.iter().map(|r| r.ss).sum();
            prop_assert!((sum - table.ss_total).abs() <= 1e-9 * (1.0 + table.ss_total));
            let dfs: usize = table.rows.iter().map(|r| r.df).sum();
            prop_assert_eq!(dfs, table.df_total);
        }
    }
}
