use serde::{Deserialize, Serialize};

use super::{mean, t_two_sided, DecisionPanel, Factor};

/// Pairwise comparison of factor-level means using the residual mean square
/// of a fitted ANOVA, with Bonferroni adjustment. This is not Tukey's HSD.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PairwiseComparison {
    pub factor: Factor,
    pub a: usize,
    pub b: usize,
    /// Mean of level `b` minus mean of level `a`.
    pub diff: f64,
    pub t: f64,
    pub p: f64,
    pub p_bonferroni: f64,
    pub significant: bool,
}

pub const METHOD: &str = "pairwise t on pooled residual variance, Bonferroni-adjusted (not Tukey HSD)";

pub fn pairwise_tests(
    panel: &DecisionPanel,
    factor: Factor,
    ms_residual: f64,
    df_residual: usize,
    alpha: f64,
) -> Vec<PairwiseComparison> {
    let groups: Vec<Vec<f64>> = panel.groups(&[factor]);
    let k = groups.len();
    let comparisons = (k * k.saturating_sub(1) / 2).max(1) as f64;
    let mut out = Vec::new();
    for a in 0..k {
        for b in a + 1..k {
            let (ga, gb) = (&groups[a], &groups[b]);
            if ga.is_empty() || gb.is_empty() {
                continue;
            }
            let diff = mean(gb) - mean(ga);
            let se = (ms_residual * (1.0 / ga.len() as f64 + 1.0 / gb.len() as f64)).sqrt();
            let t = diff / se;
            let p = t_two_sided(t, df_residual as f64).unwrap_or(f64::NAN);
            let p_bonferroni = (p * comparisons).min(1.0);
            out.push(PairwiseComparison {
                factor,
                a,
                b,
                diff,
                t,
                p,
                p_bonferroni,
                significant: p_bonferroni < alpha,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::Observation;

    #[test]
    fn separated_levels_are_flagged() {
        let mut observations = Vec::new();
        for t in 0..10 {
            let noise = (t as f64 - 4.5) * 0.01;
            for (i, centre) in [0.0, 0.0, 1.0].iter().enumerate() {
                observations.push(Observation { levels: [t, i, 0, 0], value: centre + noise });
            }
        }
        let panel = DecisionPanel { observations };
        let pairs = pairwise_tests(&panel, Factor::Actor, 0.01, 27, 0.05);
        assert_eq!(pairs.len(), 3);
        assert!(!pairs[0].significant);
        assert!(pairs[1].significant && pairs[2].significant);
        assert!((pairs[1].diff - 1.0).abs() < 1e-12);
        // Standard error sqrt(0.01 * 2 / 10).
        assert!((pairs[1].t - 1.0 / 0.002f64.sqrt()).abs() < 1e-9);
        assert!(pairs.iter().all(|p| p.p_bonferroni >= p.p));
    }
}
