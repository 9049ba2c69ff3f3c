//! Voxel space of the district: Morton-indexed grid, sensitivity fields,
//! mass selection and the illustrative zoning pass.

mod fields;
mod grid;
mod magma;
mod morton;

use thiserror::Error;

pub use fields::{
    entry_proximity_field, low_rise_field, synth_solar_field, FieldFile, SensitivityFields,
};
pub use grid::{build_grid, GridSpec, SiteFootprint, Voxel, VoxelGrid};
pub use magma::{
    aggregate_value, mass_select, mean_weights, normalize_field, zone_assign, MassConfiguration,
    ZoningConfiguration,
};
pub use morton::{morton_decode, morton_encode, AXIS_LIMIT};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VoxelError {
    #[error("coordinates {0:?} exceed 21 bits")]
    CoordOverflow([u32; 3]),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("site {0} has no buildable voxels")]
    EmptySite(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("field values must be finite")]
    NonFinite,
    #[error("field value {value} at voxel {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("weights must be nonnegative and finite")]
    NegativeWeight,
    #[error("every submitted weight is zero")]
    AllZeroWeights,
    #[error("site {site} needs {required} voxels but only {capacity} are buildable")]
    SiteOverflow { site: usize, required: u64, capacity: usize },
    #[error("site {site} has {selected} selected voxels but {required} allocated")]
    CountMismatch { site: usize, selected: usize, required: u64 },
    #[error("field file targets grid {found}, expected {expected}")]
    GridHashMismatch { expected: String, found: String },
}
