//! Game-master statistics over the decision history: variance homogeneity,
//! balanced factorial ANOVA, per-round descriptives, pairwise comparisons and
//! discussion-time correlation.

mod anova;
mod correlation;
mod levene;
mod pairwise;
mod report;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};
use thiserror::Error;

pub use anova::{anova_factorial, AnovaRow, AnovaTable};
pub use correlation::{pearson, round_stats, time_score_correlation, Correlation, RoundStats};
pub use levene::{levene_w, LeveneResult};
pub use pairwise::{pairwise_tests, PairwiseComparison};
pub use report::{analyze, interaction_means, write_interaction_csv, AnalyticsReport, InteractionPoint, Section};

use crate::engine::{DecisionDataset, RoundRecord};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyticsError {
    #[error("need at least {needed} groups with at least 2 observations each")]
    TooFewGroups { needed: usize },
    #[error("every group is constant, the statistic is undefined")]
    DegenerateGroups,
    #[error("design is unbalanced: cell sizes range from {min} to {max}")]
    UnbalancedDesign { min: usize, max: usize },
    #[error("need 1 to 4 distinct factors")]
    BadFactors,
    #[error("panel is empty")]
    Empty,
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Factor {
    Round,
    Actor,
    Site,
    Colour,
}

impl Factor {
    pub const ALL: [Factor; 4] = [Factor::Round, Factor::Actor, Factor::Site, Factor::Colour];

    fn axis(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Factor::Round => "Round",
            Factor::Actor => "Actor",
            Factor::Site => "Site",
            Factor::Colour => "Colour",
        }
    }
}

/// One decision value with its (round, actor, site, colour) levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub levels: [usize; 4],
    pub value: f64,
}

/// Long-format decision values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DecisionPanel {
    pub observations: Vec<Observation>,
}

impl DecisionPanel {
    pub fn from_dataset(ds: &DecisionDataset) -> Self {
        let mut observations = Vec::new();
        for (t, x) in ds.rounds.iter().enumerate() {
            let (m, n, o) = x.dims();
            for i in 0..m {
                for j in 0..n {
                    for k in 0..o {
                        observations.push(Observation {
                            levels: [t, i, j, k],
                            value: x[(i, j, k)],
                        });
                    }
                }
            }
        }
        DecisionPanel { observations }
    }

    pub fn from_records(records: &[RoundRecord]) -> Self {
        Self::from_dataset(&DecisionDataset {
            rounds: records.iter().map(|r| r.interests.clone()).collect(),
        })
    }

    /// Number of distinct levels on a factor (largest index + 1).
    pub fn levels(&self, f: Factor) -> usize {
        self.observations.iter().map(|o| o.levels[f.axis()] + 1).max().unwrap_or(0)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.observations.iter().map(|o| o.value)
    }

    /// Values grouped by every combination of `factors`, in lexicographic
    /// level order; empty combinations are kept as empty groups.
    pub fn groups(&self, factors: &[Factor]) -> Vec<Vec<f64>> {
        let sizes: Vec<usize> = factors.iter().map(|&f| self.levels(f)).collect();
        let count: usize = sizes.iter().product();
        let mut groups = vec![Vec::new(); count];
        for o in &self.observations {
            groups[cell_index(o, factors, &sizes)].push(o.value);
        }
        groups
    }
}

pub(crate) fn cell_index(o: &Observation, factors: &[Factor], sizes: &[usize]) -> usize {
    factors.iter().zip(sizes).fold(0, |acc, (f, s)| acc * s + o.levels[f.axis()])
}

/// Per-round outcome series: named scores plus one gain per actor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScorePanel {
    pub names: Vec<String>,
    /// One row per round.
    pub rows: Vec<Vec<f64>>,
    pub durations_secs: Vec<f64>,
}

impl ScorePanel {
    pub fn from_records(records: &[RoundRecord]) -> Self {
        let names = records
            .first()
            .map(|r| {
                let mut names = r.outputs.scores.names.clone();
                names.extend((0..r.outputs.gains.len()).map(|i| format!("gain{i}")));
                names
            })
            .unwrap_or_default();
        let rows = records
            .iter()
            .map(|r| r.outputs.scores.values.iter().chain(&r.outputs.gains).copied().collect())
            .collect();
        ScorePanel {
            names,
            rows,
            durations_secs: records.iter().map(|r| r.duration_secs).collect(),
        }
    }
}

/// Upper tail `P(F > x)` of the F distribution; `None` when undefined.
pub fn f_survival(x: f64, d1: f64, d2: f64) -> Option<f64> {
    if !x.is_finite() || x < 0.0 {
        return None;
    }
    FisherSnedecor::new(d1, d2).ok().map(|f| f.sf(x))
}

/// Two-sided p-value of a t statistic.
pub fn t_two_sided(t: f64, df: f64) -> Option<f64> {
    if !t.is_finite() {
        return None;
    }
    StudentsT::new(0.0, 1.0, df).ok().map(|d| (2.0 * d.sf(t.abs())).min(1.0))
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `I_x(a, b)` for integer `a, b` as the terminating binomial sum
    /// `Σ_{j=a}^{a+b−1} C(a+b−1, j) x^j (1−x)^{a+b−1−j}`.
    fn beta_reg_binomial(x: f64, a: u32, b: u32) -> f64 {
        let n = a + b - 1;
        let mut total = 0.0;
        for j in a..=n {
            let mut c = 1.0;
            for q in 0..j {
                c *= (n - q) as f64 / (q + 1) as f64;
            }
            total += c * x.powi(j as i32) * (1.0 - x).powi((n - j) as i32);
        }
        total
    }

    #[test]
    fn f_tail_matches_binomial_series() {
        // P(F ≤ x) = I_{d1 x / (d1 x + d2)}(d1/2, d2/2).
        let cases = [(2, 4), (4, 6), (6, 10), (8, 20), (10, 2)];
        let xs = [0.1, 0.7, 1.3, 2.9];
        for &(d1, d2) in &cases {
            for &x in &xs {
                let z = d1 as f64 * x / (d1 as f64 * x + d2 as f64);
                let cdf = beta_reg_binomial(z, d1 / 2, d2 / 2);
                let got = 1.0 - f_survival(x, d1 as f64, d2 as f64).unwrap();
                assert!((got - cdf).abs() < 1e-8, "F({d1},{d2}) at {x}: {got} vs {cdf}");
            }
        }
    }

    #[test]
    fn f_tail_closed_form_two_numerator_df() {
        // With d1 = 2 the tail is (1 + 2x/d2)^(-d2/2).
        for &d2 in &[3.0f64, 7.5, 40.0] {
            for &x in &[0.2, 1.0, 5.0] {
                let want = (1.0 + 2.0 * x / d2).powf(-d2 / 2.0);
                assert!((f_survival(x, 2.0, d2).unwrap() - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn f_tail_is_monotone() {
        let mut prev = 1.0;
        for i in 0..50 {
            let p = f_survival(i as f64 * 0.2, 4.0, 280.0).unwrap();
            assert!(p <= prev);
            prev = p;
        }
    }

    #[test]
    fn groups_follow_factor_order() {
        let ds = DecisionDataset {
            rounds: vec![crate::tensor::Tensor3::from_fn(2, 1, 2, |i, _, k| (10 * i + k) as f64)],
        };
        let panel = DecisionPanel::from_dataset(&ds);
        assert_eq!(panel.groups(&[Factor::Actor]), vec![vec![0.0, 1.0], vec![10.0, 11.0]]);
        assert_eq!(panel.groups(&[Factor::Colour, Factor::Actor]), vec![vec![0.0], vec![10.0], vec![1.0], vec![11.0]]);
    }
}
