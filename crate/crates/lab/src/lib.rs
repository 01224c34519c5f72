//! Validation lab: a synthetic fixture with known ground truth and the
//! experiments that check recommendations against it.

pub mod distance;
pub mod experiments;
pub mod fixture;
pub mod incremental;
pub mod stats;
pub mod svg;
