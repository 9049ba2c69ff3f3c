use std::io::Write;

use serde::{Deserialize, Serialize};

use super::pairwise::METHOD;
use super::{
    anova_factorial, levene_w, mean, pairwise_tests, round_stats, time_score_correlation, AnovaTable,
    Correlation, DecisionPanel, Factor, LeveneResult, PairwiseComparison, RoundStats, ScorePanel,
};

/// A statistic that may be unavailable for the data at hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "camelCase")]
pub enum Section<T> {
    Ok(T),
    Unavailable(String),
}

impl<T> Section<T> {
    pub fn ok(&self) -> Option<&T> {
        match self {
            Section::Ok(v) => Some(v),
            Section::Unavailable(_) => None,
        }
    }
}

impl<T, E: std::fmt::Display> From<Result<T, E>> for Section<T> {
    fn from(r: Result<T, E>) -> Self {
        match r {
            Ok(v) => Section::Ok(v),
            Err(e) => Section::Unavailable(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PairwiseSection {
    pub method: String,
    pub comparisons: Vec<PairwiseComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AnalyticsReport {
    pub rounds: usize,
    pub observations: usize,
    pub round_stats: Vec<RoundStats>,
    /// Variance homogeneity across actor × site × colour cells.
    pub cell_levene: Section<LeveneResult>,
    pub cell_anova: Section<AnovaTable>,
    /// Variance homogeneity across round × colour cells.
    pub round_levene: Section<LeveneResult>,
    pub round_anova: Section<AnovaTable>,
    pub pairwise: Section<PairwiseSection>,
    pub time_correlation: Vec<(String, Correlation)>,
}

const CELL_FACTORS: [Factor; 3] = [Factor::Actor, Factor::Site, Factor::Colour];
const ROUND_FACTORS: [Factor; 2] = [Factor::Round, Factor::Colour];

pub fn analyze(decisions: &DecisionPanel, scores: Option<&ScorePanel>) -> AnalyticsReport {
    let cell_anova: Section<AnovaTable> = anova_factorial(decisions, &CELL_FACTORS).into();
    let pairwise = match cell_anova.ok() {
        Some(t) if t.residual().df > 0 && t.residual().ms > 0.0 => {
            let res = t.residual();
            Section::Ok(PairwiseSection {
                method: METHOD.into(),
                comparisons: CELL_FACTORS
                    .iter()
                    .flat_map(|&f| pairwise_tests(decisions, f, res.ms, res.df, 0.05))
                    .collect(),
            })
        }
        _ => Section::Unavailable("no residual variance in the actor × site × colour model".into()),
    };
    AnalyticsReport {
        rounds: decisions.levels(Factor::Round),
        observations: decisions.observations.len(),
        round_stats: round_stats(decisions),
        cell_levene: levene_w(decisions, &CELL_FACTORS).into(),
        cell_anova,
        round_levene: levene_w(decisions, &ROUND_FACTORS).into(),
        round_anova: anova_factorial(decisions, &ROUND_FACTORS).into(),
        pairwise,
        time_correlation: scores.map(time_score_correlation).unwrap_or_default(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionPoint {
    pub a: usize,
    pub b: usize,
    pub mean: f64,
    pub n: usize,
}

/// Cell means of factor `a` against factor `b`, the data behind an
/// interaction plot. Empty cells are omitted.
pub fn interaction_means(panel: &DecisionPanel, a: Factor, b: Factor) -> Vec<InteractionPoint> {
    let nb = panel.levels(b);
    panel
        .groups(&[a, b])
        .iter()
        .enumerate()
        .filter(|(_, g)| !g.is_empty())
        .map(|(c, g)| InteractionPoint {
            a: c / nb,
            b: c % nb,
            mean: mean(g),
            n: g.len(),
        })
        .collect()
}

/// Writes interaction means as CSV with the two factor names as headers.
pub fn write_interaction_csv(
    points: &[InteractionPoint],
    a: Factor,
    b: Factor,
    writer: impl Write,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([a.label().to_lowercase(), b.label().to_lowercase(), "mean".into(), "n".into()])?;
    for p in points {
        w.write_record([p.a.to_string(), p.b.to_string(), p.mean.to_string(), p.n.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
