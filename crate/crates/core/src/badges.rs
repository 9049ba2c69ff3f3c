//! Per-round badges: Gainer (and the undisclosed Loser) by closeness of an
//! actor's interests to the collective decision, Player and Contributor by
//! where an actor's power surplus falls on the decision.

use serde::{Deserialize, Serialize};

use crate::pooling::{AllocationMatrix, ControlTensor, InterestTensor};
use crate::tensor::{shape_err, Tensor3, TensorError};

/// `Π[i, j, k] = C[j, i, k] − X[i, j, k]` split into its positive and
/// negative parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSurplus {
    pub surplus: Tensor3,
    pub positive: Tensor3,
    pub negative: Tensor3,
    /// `‖Π‖_F`, the overall pressure to negotiate.
    pub norm: f64,
}

pub fn power_surplus(c: &ControlTensor, x: &InterestTensor) -> Result<PowerSurplus, TensorError> {
    let (m, n, o) = x.dims();
    let (cn, cm, co) = c.dims();
    if (cm, cn, co) != (m, n, o) {
        return Err(shape_err(format!("control ({n}, {m}, {o})"), format!("({cn}, {cm}, {co})")));
    }
    let surplus = c.tensor().swap01().zip_map(x.tensor(), |a, b| a - b)?;
    Ok(PowerSurplus {
        positive: surplus.map(|v| v.max(0.0)),
        negative: surplus.map(|v| (-v).max(0.0)),
        norm: surplus.frobenius_norm(),
        surplus,
    })
}

/// Lowest index among the minima; `None` entries are skipped.
fn argmin_by_index(values: impl IntoIterator<Item = Option<f64>>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        if let Some(v) = v {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// Frobenius distances `‖X[i] − A‖` with the closest (gainer) and farthest
/// (loser) actor.
pub fn gainer_loser(x: &InterestTensor, a: &AllocationMatrix) -> Result<(usize, usize, Vec<f64>), TensorError> {
    let (m, n, o) = x.dims();
    if a.matrix().shape() != (n, o) {
        return Err(shape_err(format!("{n}x{o}"), format!("{:?}", a.matrix().shape())));
    }
    let distances: Vec<f64> = (0..m)
        .map(|i| frob_diff(x, i, a))
        .collect();
    let gainer = argmin_by_index(distances.iter().map(|&d| Some(d))).unwrap_or(0);
    let loser = argmin_by_index(distances.iter().map(|&d| Some(-d))).unwrap_or(0);
    Ok((gainer, loser, distances))
}

fn frob_diff(x: &InterestTensor, i: usize, a: &AllocationMatrix) -> f64 {
    let slice = x.actor(i);
    slice
        .as_slice()
        .iter()
        .zip(a.matrix().as_slice())
        .map(|(p, q)| (p - q) * (p - q))
        .sum::<f64>()
        .sqrt()
}

/// `π[i] = Σ Πpart[i]⊙A / Σ Πpart[i]`; `None` marks an actor whose part is
/// identically zero.
pub fn badge_scores(part: &Tensor3, a: &AllocationMatrix) -> Result<Vec<Option<f64>>, TensorError> {
    let (m, n, o) = part.dims();
    if a.matrix().shape() != (n, o) {
        return Err(shape_err(format!("{n}x{o}"), format!("{:?}", a.matrix().shape())));
    }
    let stride = n * o;
    Ok((0..m)
        .map(|i| {
            let slice = &part.as_slice()[i * stride..(i + 1) * stride];
            let denom: f64 = slice.iter().sum();
            (denom > 0.0).then(|| slice.iter().zip(a.matrix().as_slice()).map(|(p, q)| p * q).sum::<f64>() / denom)
        })
        .collect())
}

/// Everything the badge issuer decided for one round, including the loser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RoundBadges {
    pub gainer: usize,
    pub loser: usize,
    pub player: Option<usize>,
    pub contributor: Option<usize>,
    pub gain_distances: Vec<f64>,
    pub player_scores: Vec<Option<f64>>,
    pub contributor_scores: Vec<Option<f64>>,
}

/// The badges safe to show to players: no loser, and no gain distances,
/// whose maximum would name the loser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PublicBadges {
    pub gainer: usize,
    pub player: Option<usize>,
    pub contributor: Option<usize>,
    pub player_scores: Vec<Option<f64>>,
    pub contributor_scores: Vec<Option<f64>>,
}

impl RoundBadges {
    pub fn public(&self) -> PublicBadges {
        PublicBadges {
            gainer: self.gainer,
            player: self.player,
            contributor: self.contributor,
            player_scores: self.player_scores.clone(),
            contributor_scores: self.contributor_scores.clone(),
        }
    }
}

/// Issues all badges from the consensus fractions `A`; volumes never enter.
pub fn issue_badges(x: &InterestTensor, c: &ControlTensor, a: &AllocationMatrix) -> Result<RoundBadges, TensorError> {
    let surplus = power_surplus(c, x)?;
    let (gainer, loser, gain_distances) = gainer_loser(x, a)?;
    let player_scores = badge_scores(&surplus.negative, a)?;
    let contributor_scores = badge_scores(&surplus.positive, a)?;
    Ok(RoundBadges {
        gainer,
        loser,
        player: argmin_by_index(player_scores.iter().copied()),
        contributor: argmin_by_index(contributor_scores.iter().copied()),
        gain_distances,
        player_scores,
        contributor_scores,
    })
}
