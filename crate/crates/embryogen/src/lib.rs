//! Semi-synthetic 3D+t fluorescence microscopy benchmark generator.
//!
//! The pipeline evolves a simulated cell population guided by a real (or
//! procedurally generated) embryo point cloud, rasterizes the population into
//! voxel volumes using a single-cell video library, and degrades the raw
//! volumes through a simulated microscope acquisition chain. Each frame emits
//! a raw image, a label ground-truth image, a degraded "final" image and an
//! object table.

pub mod dynamics;
pub mod error;
pub mod geom;
pub mod guide;
pub mod imaging;
pub mod io;
pub mod pipeline;
pub mod rng;
pub mod spatial;

pub use error::{Error, Result};
