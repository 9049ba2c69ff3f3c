use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::morton::{morton_encode, AXIS_LIMIT};
use super::VoxelError;

/// Regular grid placement: `origin` is the minimum corner, cells are cubes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GridSpec {
    pub origin: [f64; 3],
    pub cell_size: f64,
    pub extents: [u32; 3],
}

impl GridSpec {
    pub fn voxel_volume(&self) -> f64 {
        self.cell_size.powi(3)
    }

    pub fn voxel_floor_area(&self) -> f64 {
        self.cell_size.powi(2)
    }

    /// World-space center of cell `(i, j, k)`.
    pub fn center(&self, [i, j, k]: [u32; 3]) -> [f64; 3] {
        let c = |o: f64, n: u32| o + (n as f64 + 0.5) * self.cell_size;
        [c(self.origin[0], i), c(self.origin[1], j), c(self.origin[2], k)]
    }
}

/// A site's ground polygon (x, y vertices, either winding) and height cap in
/// metres above the grid origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SiteFootprint {
    pub polygon: Vec<[f64; 2]>,
    pub max_height: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Voxel {
    pub morton: u64,
    pub coords: [u32; 3],
    pub site: Option<usize>,
    pub buildable: bool,
}

/// All cells of the grid in Morton order, plus the buildable subset.
///
/// Per-voxel fields are indexed by *buildable rank*: the position of a voxel
/// among the buildable voxels sorted by Morton code.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    spec: GridSpec,
    voxels: Vec<Voxel>,
    buildable: Vec<usize>,
    site_ranks: Vec<Vec<usize>>,
    hash: String,
}

impl VoxelGrid {
    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn voxels(&self) -> &[Voxel] {
        &self.voxels
    }

    /// Number of buildable voxels.
    pub fn buildable_count(&self) -> usize {
        self.buildable.len()
    }

    /// Buildable voxel at rank `l`.
    pub fn buildable(&self, l: usize) -> &Voxel {
        &self.voxels[self.buildable[l]]
    }

    pub fn buildable_iter(&self) -> impl Iterator<Item = &Voxel> + '_ {
        self.buildable.iter().map(|&i| &self.voxels[i])
    }

    pub fn site_count(&self) -> usize {
        self.site_ranks.len()
    }

    /// Buildable ranks belonging to site `j`, ascending (so Morton-ascending).
    pub fn site_ranks(&self, j: usize) -> &[usize] {
        &self.site_ranks[j]
    }

    pub fn site_capacity(&self, j: usize) -> usize {
        self.site_ranks[j].len()
    }

    /// Content hash of the grid description; field files must quote it.
    pub fn hash(&self) -> &str {
        &self.hash
    }
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2], tol: f64) -> bool {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a[0] + t * dx - p[0], a[1] + t * dy - p[1]);
    qx * qx + qy * qy <= tol * tol
}

/// Point-in-polygon by crossing number; points on an edge count as inside.
pub(crate) fn contains(poly: &[[f64; 2]], p: [f64; 2], tol: f64) -> bool {
    let n = poly.len();
    let mut inside = false;
    for e in 0..n {
        let (a, b) = (poly[e], poly[(e + 1) % n]);
        if on_segment(p, a, b, tol) {
            return true;
        }
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

fn grid_hash(spec: &GridSpec, sites: &[SiteFootprint]) -> String {
    let canonical = serde_json::to_vec(&(spec, sites)).expect("grid description serializes");
    hex::encode(&Sha256::digest(&canonical)[..16])
}

/// Voxelizes the district. A cell belongs to the lowest-index site whose
/// footprint contains its ground-projected center, and is buildable when its
/// center also lies below that site's height cap.
pub fn build_grid(sites: &[SiteFootprint], spec: &GridSpec) -> Result<VoxelGrid, VoxelError> {
    if !(spec.cell_size > 0.0) || !spec.cell_size.is_finite() {
        return Err(VoxelError::InvalidGrid("cell size must be positive".into()));
    }
    if spec.extents.iter().any(|&e| e == 0 || e > AXIS_LIMIT) {
        return Err(VoxelError::InvalidGrid(format!("bad extents {:?}", spec.extents)));
    }
    for (j, s) in sites.iter().enumerate() {
        if s.polygon.len() < 3 {
            return Err(VoxelError::InvalidGrid(format!("site {j} polygon has fewer than 3 vertices")));
        }
    }
    let [nx, ny, nz] = spec.extents;
    let tol = spec.cell_size * 1e-9;

    // Site of each ground column, row-major over (j, i).
    let mut column_site = vec![None; (nx * ny) as usize];
    for y in 0..ny {
        for x in 0..nx {
            let c = spec.center([x, y, 0]);
            column_site[(y * nx + x) as usize] = sites.iter().position(|s| contains(&s.polygon, [c[0], c[1]], tol));
        }
    }

    let mut voxels = Vec::with_capacity((nx * ny * nz) as usize);
    for z in 0..nz {
        let height = (z as f64 + 0.5) * spec.cell_size;
        for y in 0..ny {
            for x in 0..nx {
                let site = column_site[(y * nx + x) as usize];
                let buildable = site.is_some_and(|j| height < sites[j].max_height);
                voxels.push(Voxel {
                    morton: morton_encode(x, y, z)?,
                    coords: [x, y, z],
                    site,
                    buildable,
                });
            }
        }
    }
    voxels.sort_unstable_by_key(|v| v.morton);

    let buildable: Vec<usize> = (0..voxels.len()).filter(|&i| voxels[i].buildable).collect();
    let mut site_ranks = vec![Vec::new(); sites.len()];
    for (rank, &i) in buildable.iter().enumerate() {
        site_ranks[voxels[i].site.expect("buildable implies a site")].push(rank);
    }
    if let Some(j) = site_ranks.iter().position(Vec::is_empty) {
        return Err(VoxelError::EmptySite(j));
    }
    Ok(VoxelGrid {
        hash: grid_hash(spec, sites),
        spec: spec.clone(),
        voxels,
        buildable,
        site_ranks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, w: f64, h: f64, max_height: f64) -> SiteFootprint {
        SiteFootprint {
            polygon: vec![[x0, y0], [x0 + w, y0], [x0 + w, y0 + h], [x0, y0 + h]],
            max_height,
        }
    }

    #[test]
    fn single_square_site() {
        let spec = GridSpec {
            origin: [0.0; 3],
            cell_size: 5.0,
            extents: [2, 2, 4],
        };
        let g = build_grid(&[square(0.0, 0.0, 10.0, 10.0, 10.0)], &spec).unwrap();
        assert_eq!(g.buildable_count(), 8);
        assert_eq!(g.site_capacity(0), 8);
        assert_eq!(g.voxels().len(), 16);
    }

    #[test]
    fn cells_outside_every_polygon_have_no_site() {
        let spec = GridSpec {
            origin: [0.0; 3],
            cell_size: 1.0,
            extents: [4, 1, 1],
        };
        let g = build_grid(&[square(0.0, 0.0, 2.0, 1.0, 5.0)], &spec).unwrap();
        let outside: Vec<_> = g.voxels().iter().filter(|v| v.coords[0] >= 2).collect();
        assert_eq!(outside.len(), 2);
        assert!(outside.iter().all(|v| v.site.is_none() && !v.buildable));
    }

    #[test]
    fn shared_edge_goes_to_lower_index() {
        // Cell centers at x = 0.5, 1.5, 2.5; the sites share the edge x = 1.5.
        let spec = GridSpec {
            origin: [0.0; 3],
            cell_size: 1.0,
            extents: [3, 1, 1],
        };
        let sites = [square(0.0, 0.0, 1.5, 1.0, 9.0), square(1.5, 0.0, 1.5, 1.0, 9.0)];
        let g = build_grid(&sites, &spec).unwrap();
        let by_x: Vec<_> = {
            let mut v: Vec<_> = g.voxels().to_vec();
            v.sort_by_key(|v| v.coords[0]);
            v.into_iter().map(|v| v.site).collect()
        };
        assert_eq!(by_x, vec![Some(0), Some(0), Some(1)]);
    }

    #[test]
    fn empty_site_is_an_error() {
        let spec = GridSpec {
            origin: [0.0; 3],
            cell_size: 1.0,
            extents: [2, 2, 2],
        };
        let sites = [square(0.0, 0.0, 2.0, 2.0, 2.0), square(50.0, 50.0, 1.0, 1.0, 2.0)];
        assert_eq!(build_grid(&sites, &spec).unwrap_err(), VoxelError::EmptySite(1));
    }

    #[test]
    fn morton_order_and_ranks() {
        let spec = GridSpec {
            origin: [0.0; 3],
            cell_size: 1.0,
            extents: [3, 3, 3],
        };
        let g = build_grid(&[square(0.0, 0.0, 3.0, 3.0, 2.0)], &spec).unwrap();
        assert!(g.voxels().windows(2).all(|w| w[0].morton < w[1].morton));
        assert!(g.buildable_iter().all(|v| v.coords[2] < 2));
        assert_eq!(g.site_ranks(0).len(), 18);
    }

    #[test]
    fn hash_tracks_the_description() {
        let spec = GridSpec {
            origin: [0.0; 3],
            cell_size: 1.0,
            extents: [2, 2, 2],
        };
        let a = build_grid(&[square(0.0, 0.0, 2.0, 2.0, 2.0)], &spec).unwrap();
        let b = build_grid(&[square(0.0, 0.0, 2.0, 2.0, 1.0)], &spec).unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 32);
    }
}
