//! Fisher information for joint position and orientation estimation over a
//! single MIMO link, under spherical (near-field) and planar (far-field)
//! propagation models.

pub mod derivs;
pub mod error;
pub mod fisher;
pub mod geometry;
pub mod harness;
pub mod signal;
mod twofold;

pub use error::{Error, Result};
