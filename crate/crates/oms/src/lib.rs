//! Spatial memory and search optimization for household objects.
//!
//! The pipeline: depth + relevancy images are unprojected into world-frame
//! point clouds ([`geometry`]), each observation is reduced to a single 3D
//! location and logged ([`memory`]), a Gaussian mixture is fitted over the
//! location history with BIC component-count selection ([`gmm`]), and the
//! fitted mixture drives first-try search planning ([`search`]). A Monte
//! Carlo harness ([`sim`]) benchmarks the learned policy against random
//! search over the known cluster locations.

pub mod error;
pub mod geometry;
pub mod gmm;
pub mod memory;
pub mod search;
pub mod seeding;
pub mod sim;

pub use error::{Error, Result};
