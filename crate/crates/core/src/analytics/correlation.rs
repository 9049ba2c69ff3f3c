use serde::{Deserialize, Serialize};

use super::{mean, AnalyticsError, DecisionPanel, Factor, ScorePanel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RoundStats {
    pub round: usize,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; NaN for a single observation.
    pub std: f64,
}

pub fn round_stats(panel: &DecisionPanel) -> Vec<RoundStats> {
    panel
        .groups(&[Factor::Round])
        .into_iter()
        .enumerate()
        .filter(|(_, g)| !g.is_empty())
        .map(|(round, g)| {
            let m = mean(&g);
            let var = g.iter().map(|y| (y - m).powi(2)).sum::<f64>() / (g.len() as f64 - 1.0);
            RoundStats {
                round,
                n: g.len(),
                mean: m,
                std: if g.len() > 1 { var.sqrt() } else { f64::NAN },
            }
        })
        .collect()
}

/// Pearson's r, `None` when either series has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>, AnalyticsError> {
    if x.len() != y.len() {
        return Err(AnalyticsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(AnalyticsError::Empty);
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    let scale = 1e-24 * (1.0 + mx * mx) * (1.0 + my * my) * x.len() as f64;
    if sxx <= scale || syy <= scale {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "camelCase")]
pub enum Correlation {
    Defined { r: f64, pairs: usize },
    /// Fewer than three round-to-round changes.
    Insufficient { pairs: usize },
    ZeroVariance { pairs: usize },
}

/// Correlates each round's discussion time with the change it produced in
/// every score: pairs `(duration_t, score_t − score_{t−1})` for `t ≥ 1`.
pub fn time_score_correlation(panel: &ScorePanel) -> Vec<(String, Correlation)> {
    let rounds = panel.rows.len();
    let pairs = rounds.saturating_sub(1);
    panel
        .names
        .iter()
        .enumerate()
        .map(|(c, name)| {
            let result = if pairs < 3 {
                Correlation::Insufficient { pairs }
            } else {
                let deltas: Vec<f64> = (1..rounds).map(|t| panel.rows[t][c] - panel.rows[t - 1][c]).collect();
                match pearson(&panel.durations_secs[1..rounds], &deltas) {
                    Ok(Some(r)) => Correlation::Defined { r, pairs },
                    _ => Correlation::ZeroVariance { pairs },
                }
            };
            (name.clone(), result)
        })
        .collect()
}
