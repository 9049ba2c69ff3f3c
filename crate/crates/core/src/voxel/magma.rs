//! Weighted-product voxel valuation and top-N mass selection per site.

use serde::{Deserialize, Serialize};

use super::fields::SensitivityFields;
use super::grid::VoxelGrid;
use super::VoxelError;
use crate::ipf::VolumeMatrix;
use crate::tensor::Matrix;

/// Fuzzy AND of the criteria: `υ_l = Π_ι φ[l, ι]^w_ι`.
///
/// A zero weight removes a criterion entirely, even where its field is zero.
pub fn aggregate_value(fields: &SensitivityFields, weights: &[f64]) -> Result<Vec<f64>, VoxelError> {
    let values = fields.values();
    if weights.len() != values.cols() {
        return Err(VoxelError::ShapeMismatch(format!(
            "{} weights for {} criteria",
            weights.len(),
            values.cols()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(VoxelError::NegativeWeight);
    }
    Ok((0..values.rows())
        .map(|l| {
            values
                .row(l)
                .iter()
                .zip(weights)
                .filter(|(_, &w)| w > 0.0)
                .map(|(&phi, &w)| phi.powf(w))
                .product()
        })
        .collect())
}

/// Row means of the criteria × actors weight matrix, renormalized to sum to one.
pub fn mean_weights(w: &Matrix) -> Result<Vec<f64>, VoxelError> {
    if w.as_slice().iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(VoxelError::NegativeWeight);
    }
    let m = w.cols() as f64;
    let means: Vec<f64> = w.row_sums().into_iter().map(|s| s / m).collect();
    let total: f64 = means.iter().sum();
    if !(total > 0.0) {
        return Err(VoxelError::AllZeroWeights);
    }
    Ok(means.into_iter().map(|v| v / total).collect())
}

/// Min-max normalization to `[0, 1]`; a constant field maps to all ones.
pub fn normalize_field(raw: &[f64]) -> Result<Vec<f64>, VoxelError> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(VoxelError::NonFinite);
    }
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Ok(vec![1.0; raw.len()]);
    }
    Ok(raw.iter().map(|v| (v - lo) / (hi - lo)).collect())
}

/// Binary massing `κ` over buildable ranks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MassConfiguration {
    selected: Vec<bool>,
    per_site: Vec<usize>,
}

impl MassConfiguration {
    pub fn new(selected: Vec<bool>, grid: &VoxelGrid) -> Result<Self, VoxelError> {
        if selected.len() != grid.buildable_count() {
            return Err(VoxelError::ShapeMismatch(format!(
                "{} selection flags for {} buildable voxels",
                selected.len(),
                grid.buildable_count()
            )));
        }
        let per_site = (0..grid.site_count())
            .map(|j| grid.site_ranks(j).iter().filter(|&&l| selected[l]).count())
            .collect();
        Ok(MassConfiguration { selected, per_site })
    }

    pub fn selected(&self) -> &[bool] {
        &self.selected
    }

    pub fn is_selected(&self, l: usize) -> bool {
        self.selected[l]
    }

    pub fn per_site(&self) -> &[usize] {
        &self.per_site
    }

    pub fn total(&self) -> usize {
        self.per_site.iter().sum()
    }

    /// Buildable ranks of the selected voxels, ascending.
    pub fn selected_ranks(&self) -> impl Iterator<Item = usize> + '_ {
        self.selected.iter().enumerate().filter(|(_, s)| **s).map(|(l, _)| l)
    }
}

/// Picks, in every site, the `Σ_k V[j, k]` buildable voxels of highest value.
/// Equal values are resolved toward the lower Morton code.
pub fn mass_select(grid: &VoxelGrid, value: &[f64], volumes: &VolumeMatrix) -> Result<MassConfiguration, VoxelError> {
    if value.len() != grid.buildable_count() {
        return Err(VoxelError::ShapeMismatch(format!(
            "{} values for {} buildable voxels",
            value.len(),
            grid.buildable_count()
        )));
    }
    if volumes.shape().0 != grid.site_count() {
        return Err(VoxelError::ShapeMismatch(format!(
            "volume matrix has {} sites, grid has {}",
            volumes.shape().0,
            grid.site_count()
        )));
    }
    let mut selected = vec![false; value.len()];
    for j in 0..grid.site_count() {
        let required = volumes.row_sum(j);
        let ranks = grid.site_ranks(j);
        if required > ranks.len() as u64 {
            return Err(VoxelError::SiteOverflow {
                site: j,
                required,
                capacity: ranks.len(),
            });
        }
        let mut order = ranks.to_vec();
        // Ranks ascend with Morton code, so the rank is the tie-break key.
        order.sort_unstable_by(|&a, &b| value[b].total_cmp(&value[a]).then(a.cmp(&b)));
        for &l in &order[..required as usize] {
            selected[l] = true;
        }
    }
    MassConfiguration::new(selected, grid)
}

/// Colour per buildable rank; `None` marks an empty voxel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ZoningConfiguration(Vec<Option<usize>>);

impl ZoningConfiguration {
    pub fn colours(&self) -> &[Option<usize>] {
        &self.0
    }

    /// The massing implied by the zoning.
    pub fn mass(&self, grid: &VoxelGrid) -> Result<MassConfiguration, VoxelError> {
        MassConfiguration::new(self.0.iter().map(Option::is_some).collect(), grid)
    }

    /// Colour counts per site: `hist[j][k]`.
    pub fn histogram(&self, grid: &VoxelGrid, colours: usize) -> Vec<Vec<u64>> {
        (0..grid.site_count())
            .map(|j| {
                let mut h = vec![0; colours];
                for &l in grid.site_ranks(j) {
                    if let Some(k) = self.0[l] {
                        h[k] += 1;
                    }
                }
                h
            })
            .collect()
    }
}

/// Paints each site's selected voxels bottom-up (then by Morton code) in
/// colour-index order, in blocks of `V[j, k]`.
pub fn zone_assign(
    grid: &VoxelGrid,
    mass: &MassConfiguration,
    volumes: &VolumeMatrix,
) -> Result<ZoningConfiguration, VoxelError> {
    let (n, o) = volumes.shape();
    if n != grid.site_count() || mass.selected().len() != grid.buildable_count() {
        return Err(VoxelError::ShapeMismatch("zoning inputs disagree with the grid".into()));
    }
    let mut colours = vec![None; grid.buildable_count()];
    for j in 0..n {
        let mut chosen: Vec<usize> = grid.site_ranks(j).iter().copied().filter(|&l| mass.is_selected(l)).collect();
        let required = volumes.row_sum(j);
        if chosen.len() as u64 != required {
            return Err(VoxelError::CountMismatch {
                site: j,
                selected: chosen.len(),
                required,
            });
        }
        chosen.sort_by_key(|&l| (grid.buildable(l).coords[2], l));
        let mut cursor = chosen.into_iter();
        for k in 0..o {
            for l in cursor.by_ref().take(volumes.get(j, k) as usize) {
                colours[l] = Some(k);
            }
        }
    }
    Ok(ZoningConfiguration(colours))
}
