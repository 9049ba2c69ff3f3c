//! Per-voxel sensitivity fields and their file format.
//!
//! The physical simulations behind real fields are external; the generators
//! here are deterministic geometric proxies so a game can run without them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::VoxelGrid;
use super::magma::normalize_field;
use super::VoxelError;
use crate::tensor::Matrix;

/// Field matrix `Φ` (buildable voxels × criteria) with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityFields {
    names: Vec<String>,
    values: Matrix,
}

impl SensitivityFields {
    pub fn new(names: Vec<String>, values: Matrix) -> Result<Self, VoxelError> {
        if names.len() != values.cols() {
            return Err(VoxelError::ShapeMismatch(format!(
                "{} criterion names for {} field columns",
                names.len(),
                values.cols()
            )));
        }
        for (idx, &v) in values.as_slice().iter().enumerate() {
            if !v.is_finite() {
                return Err(VoxelError::NonFinite);
            }
            if !(0.0..=1.0).contains(&v) {
                return Err(VoxelError::OutOfRange { index: idx / values.cols().max(1), value: v });
            }
        }
        Ok(SensitivityFields { names, values })
    }

    /// Stacks per-criterion columns of equal length.
    pub fn from_columns(columns: Vec<(String, Vec<f64>)>) -> Result<Self, VoxelError> {
        let len = columns.first().map(|(_, c)| c.len()).unwrap_or(0);
        if columns.iter().any(|(_, c)| c.len() != len) {
            return Err(VoxelError::ShapeMismatch("field columns differ in length".into()));
        }
        let values = Matrix::from_fn(len, columns.len(), |l, i| columns[i].1[l]);
        SensitivityFields::new(columns.into_iter().map(|(n, _)| n).collect(), values)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn voxel_count(&self) -> usize {
        self.values.rows()
    }

    pub fn criteria_count(&self) -> usize {
        self.values.cols()
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.values.column(i)
    }
}

/// On-disk field: one value per buildable voxel in Morton order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FieldFile {
    pub grid_hash: String,
    pub criterion_name: String,
    pub values: Vec<f64>,
}

impl FieldFile {
    pub fn read(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(path, text)
    }

    /// Checks the grid hash and length, then min-max normalizes the values.
    pub fn normalized_for(&self, grid: &VoxelGrid) -> Result<Vec<f64>, VoxelError> {
        if self.grid_hash != grid.hash() {
            return Err(VoxelError::GridHashMismatch {
                expected: grid.hash().to_string(),
                found: self.grid_hash.clone(),
            });
        }
        if self.values.len() != grid.buildable_count() {
            return Err(VoxelError::ShapeMismatch(format!(
                "field {} has {} values for {} buildable voxels",
                self.criterion_name,
                self.values.len(),
                grid.buildable_count()
            )));
        }
        normalize_field(&self.values)
    }
}

/// Solar-access proxy: grows with height and shrinks with the number of
/// buildable voxels inside a 45° obstruction cone opening toward −y.
///
/// Voxel `(i', j', k')` obstructs `(i, j, k)` when `d = j − j' ≥ 1`,
/// `|i' − i| ≤ d` and `k' ≥ k + d`. The raw value `(k + 1) / (1 + count)` is
/// min-max normalized.
pub fn synth_solar_field(grid: &VoxelGrid) -> Vec<f64> {
    let [nx, ny, nz] = grid.spec().extents.map(|e| e as usize);
    // prefix[(y * (nx + 1) + x) * (nz + 1) + z]: buildable cells in slice y
    // with column < x and layer >= z.
    let idx = |y: usize, x: usize, z: usize| (y * (nx + 1) + x) * (nz + 1) + z;
    let mut prefix = vec![0u32; ny * (nx + 1) * (nz + 1)];
    let mut occupied = vec![false; nx * ny * nz];
    for v in grid.buildable_iter() {
        let [x, y, z] = v.coords.map(|c| c as usize);
        occupied[(y * nx + x) * nz + z] = true;
    }
    for y in 0..ny {
        for x in 0..nx {
            for z in (0..nz).rev() {
                let cell = occupied[(y * nx + x) * nz + z] as u32;
                prefix[idx(y, x + 1, z)] =
                    cell + prefix[idx(y, x + 1, z + 1)] + prefix[idx(y, x, z)] - prefix[idx(y, x, z + 1)];
            }
        }
    }
    let raw: Vec<f64> = grid
        .buildable_iter()
        .map(|v| {
            let [x, y, z] = v.coords.map(|c| c as usize);
            let mut count = 0u64;
            for d in 1..=y {
                let zmin = z + d;
                if zmin >= nz {
                    break;
                }
                let (lo, hi) = (x.saturating_sub(d), (x + d + 1).min(nx));
                let s = y - d;
                count += (prefix[idx(s, hi, zmin)] - prefix[idx(s, lo, zmin)]) as u64;
            }
            (z as f64 + 1.0) / (1.0 + count as f64)
        })
        .collect();
    normalize_field(&raw).expect("finite by construction")
}

/// Prefers low voxels: `1 − normalized layer index`.
pub fn low_rise_field(grid: &VoxelGrid) -> Vec<f64> {
    let raw: Vec<f64> = grid.buildable_iter().map(|v| -(v.coords[2] as f64)).collect();
    normalize_field(&raw).expect("finite by construction")
}

/// Prefers voxels near their own site's ground entry point.
pub fn entry_proximity_field(grid: &VoxelGrid, entry_points: &[[f64; 2]]) -> Result<Vec<f64>, VoxelError> {
    if entry_points.len() != grid.site_count() {
        return Err(VoxelError::ShapeMismatch(format!(
            "{} entry points for {} sites",
            entry_points.len(),
            grid.site_count()
        )));
    }
    let ground = grid.spec().origin[2];
    let raw: Vec<f64> = grid
        .buildable_iter()
        .map(|v| {
            let c = grid.spec().center(v.coords);
            let e = entry_points[v.site.expect("buildable voxel has a site")];
            -((c[0] - e[0]).powi(2) + (c[1] - e[1]).powi(2) + (c[2] - ground).powi(2)).sqrt()
        })
        .collect();
    normalize_field(&raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::voxel::{build_grid, GridSpec, SiteFootprint};

    fn grid(extents: [u32; 3], max_height: f64) -> VoxelGrid {
        let w = extents[0] as f64;
        let h = extents[1] as f64;
        let site = SiteFootprint {
            polygon: vec![[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]],
            max_height,
        };
        build_grid(
            &[site],
            &GridSpec {
                origin: [0.0; 3],
                cell_size: 1.0,
                extents,
            },
        )
        .unwrap()
    }

    /// Brute-force cone count, independent of the prefix-sum table.
    fn brute_solar_raw(g: &VoxelGrid) -> Vec<f64> {
        let cells: Vec<[i64; 3]> = g.buildable_iter().map(|v| v.coords.map(|c| c as i64)).collect();
        cells
            .iter()
            .map(|&[x, y, z]| {
                let count = cells
                    .iter()
                    .filter(|&&[a, b, c]| {
                        let d = y - b;
                        d >= 1 && (a - x).abs() <= d && c >= z + d
                    })
                    .count();
                (z as f64 + 1.0) / (1.0 + count as f64)
            })
            .collect()
    }

    #[test]
    fn isolated_voxel_is_fully_lit() {
        assert_eq!(synth_solar_field(&grid([1, 1, 1], 1.0)), vec![1.0]);
    }

    #[test]
    fn stacked_voxels_top_not_darker() {
        let g = grid([1, 1, 2], 2.0);
        let f = synth_solar_field(&g);
        let top = (0..2).find(|&l| g.buildable(l).coords[2] == 1).unwrap();
        assert!(f[top] >= f[1 - top]);
    }

    #[test]
    fn solar_matches_brute_force_cone() {
        let g = grid([6, 7, 5], 4.0);
        let expected = normalize_field(&brute_solar_raw(&g)).unwrap();
        let got = synth_solar_field(&g);
        for (a, b) in got.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn solar_field_is_bounded_and_repeatable() {
        let g = grid([8, 8, 8], 8.0);
        let a = synth_solar_field(&g);
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(a, synth_solar_field(&g));
    }

    #[test]
    fn field_file_hash_checked() {
        let g = grid([2, 2, 2], 2.0);
        let mut file = FieldFile {
            grid_hash: g.hash().to_string(),
            criterion_name: "x".into(),
            values: (0..8).map(|v| v as f64).collect(),
        };
        let norm = file.normalized_for(&g).unwrap();
        assert_eq!(norm[7], 1.0);
        file.grid_hash = "nope".into();
        assert!(matches!(file.normalized_for(&g), Err(VoxelError::GridHashMismatch { .. })));
    }

    #[test]
    fn fields_reject_out_of_range() {
        let m = Matrix::from_rows(&[[0.5], [1.5]]).unwrap();
        assert!(matches!(
            SensitivityFields::new(vec!["a".into()], m),
            Err(VoxelError::OutOfRange { index: 1, .. })
        ));
    }
}
