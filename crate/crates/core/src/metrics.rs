//! Mesh comparison metrics: Chamfer distance, point-to-surface distance and
//! normal reprojection error.

use crate::error::{arg, Result};
use crate::geometry::OrthoCamera;
use crate::mesh::TriMesh;
use crate::raster::rasterize;
use crate::sdf_oracle::SdfOracle;
use crate::Vec3;

pub const DEFAULT_SAMPLES: usize = 10_000;
pub const DEFAULT_NORMAL_RESOLUTION: usize = 512;

fn samples(mesh: &TriMesh, n: usize, seed: u64) -> Result<Vec<Vec3>> {
    if mesh.is_empty() || !(mesh.total_area() > 0.0) {
        return arg("metric needs a non-empty mesh with positive area");
    }
    if n == 0 {
        return arg("metric needs at least one sample");
    }
    let mut rng = crate::rng_from_seed(seed);
    Ok(mesh.sample_surface(n, &mut rng).0)
}

/// Mean distance from `n` area-weighted samples of `from` to the surface of `to`.
fn one_sided(from: &TriMesh, to: &TriMesh, n: usize, seed: u64) -> Result<f64> {
    let pts = samples(from, n, seed)?;
    if to.is_empty() {
        return arg("metric needs a non-empty mesh");
    }
    let oracle = SdfOracle::new(to)?;
    Ok(pts.iter().map(|p| oracle.closest(p).0).sum::<f64>() / pts.len() as f64)
}

/// Symmetric Chamfer distance: the average of both one-sided mean
/// point-to-surface distances. Each mesh is sampled with the same seed, so
/// the result does not depend on argument order.
pub fn chamfer(a: &TriMesh, b: &TriMesh, n_samples: usize, seed: u64) -> Result<f64> {
    Ok(0.5 * (one_sided(a, b, n_samples, seed)? + one_sided(b, a, n_samples, seed)?))
}

/// Mean distance from samples of `recon` to the surface of `gt`.
pub fn p2s(recon: &TriMesh, gt: &TriMesh, n_samples: usize, seed: u64) -> Result<f64> {
    one_sided(recon, gt, n_samples, seed)
}

/// `cam` with its image resampled to `resolution x resolution` pixels over
/// the same field of view (width-based).
fn resampled(cam: &OrthoCamera, resolution: usize) -> Result<OrthoCamera> {
    if resolution == 0 {
        return arg("normal map resolution must be positive");
    }
    let scale = cam.image_w as f64 / resolution as f64;
    let mut c = cam.clone();
    c.pixel_size = cam.pixel_size * scale;
    c.image_w = resolution;
    c.image_h = ((cam.image_h as f64 / scale).round() as usize).max(1);
    c.validate()?;
    Ok(c)
}

/// Mean over pixels covered by both renders of `|n_recon - n_gt| / 2`, with
/// flat front-facing normals. No joint coverage gives 1.
pub fn normal_reprojection(recon: &TriMesh, gt: &TriMesh, cam: &OrthoCamera, resolution: usize) -> Result<f64> {
    let c = resampled(cam, resolution)?;
    let (ra, rb) = (rasterize(recon, &c), rasterize(gt, &c));
    let mut sum = 0.0;
    let mut n = 0usize;
    for k in 0..ra.triangle.len() {
        if ra.triangle[k].is_none() || rb.triangle[k].is_none() {
            continue;
        }
        let (x, y) = (k % c.image_w, k / c.image_w);
        let na = Vec3::from_column_slice(ra.normals.pixel(x, y));
        let nb = Vec3::from_column_slice(rb.normals.pixel(x, y));
        sum += (na - nb).norm() / 2.0;
        n += 1;
    }
    Ok(if n == 0 { 1.0 } else { sum / n as f64 })
}
