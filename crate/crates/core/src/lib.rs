//! Pixel- and voxel-aligned implicit surface reconstruction from single RGB-D views.
//!
//! The pipeline back-projects a depth map into a sparse voxel set, decorates the
//! voxels with low-resolution image features, runs a sparse 3D U-Net over them,
//! and feeds an MLP with high-resolution pixel-aligned features, trilinearly
//! interpolated voxel codes and camera depth to predict a signed distance.
//! Meshes are extracted from the predicted field with marching cubes.
//!
//! Signed distances are negative inside and positive outside throughout.

pub mod cli;
pub mod config;
pub mod error;
pub mod geometry;
pub mod io;
pub mod mesh;
pub mod metrics;
pub mod nets;
pub mod raster;
pub mod reconstruct;
pub mod sampling;
pub mod scene;
pub mod sdf_oracle;
pub mod sparsegrid;
pub mod training;

pub use error::{Error, Result};

/// World-space 3-vector.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Deterministic RNG used everywhere a seed is accepted.
pub type Rng = rand_chacha::ChaCha8Rng;

pub(crate) fn rng_from_seed(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
