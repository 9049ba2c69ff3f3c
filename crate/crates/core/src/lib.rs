//! Participatory spatial-allocation game: opinion pooling, marginal fitting,
//! voxel massing, evaluation and badges.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod badges;
pub mod engine;
pub mod evaluation;
pub mod ipf;
pub mod pooling;
pub mod tensor;
pub mod voxel;
