//! Camera model, depth-map geometry, voxelization and inference grids.

mod camera;
mod image;

pub use camera::{depth_to_points, normals_from_depth, orthographic_project, OrthoCamera};
pub(crate) use image::{bilinear_sample_into, bilinear_scatter};
pub use image::{bilinear_sample, bilinear_taps, BilinearTaps, ScalarImage, VectorImage};

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::Vec3;

/// Integer voxel coordinate.
pub type Site = [i32; 3];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self { points, normals: None }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Axis-aligned bounds `(min, max)`; `None` when empty.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        bounds_of(self.points.iter())
    }
}

pub(crate) fn bounds_of<'a>(points: impl Iterator<Item = &'a Vec3>) -> Option<(Vec3, Vec3)> {
    let mut it = points.peekable();
    let first = **it.peek()?;
    Some(it.fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
}

/// Voxel site containing `p`.
#[inline]
pub fn site_of(p: &Vec3, spacing: f64, origin: &Vec3) -> Site {
    let g = (p - origin) / spacing;
    [g.x.floor() as i32, g.y.floor() as i32, g.z.floor() as i32]
}

/// World-space center of a voxel site whose cells are `spacing` wide.
#[inline]
pub fn site_center(site: &Site, spacing: f64, origin: &Vec3) -> Vec3 {
    origin + Vec3::new(site[0] as f64 + 0.5, site[1] as f64 + 0.5, site[2] as f64 + 0.5) * spacing
}

/// Unique occupied voxel sites of a point cloud, sorted lexicographically.
pub fn voxelize(pc: &PointCloud, spacing: f64, origin: Vec3) -> Result<Vec<Site>> {
    if !(spacing > 0.0) {
        return arg("voxel spacing must be positive");
    }
    let mut sites: Vec<Site> = pc.points.iter().map(|p| site_of(p, spacing, &origin)).collect();
    sites.sort_unstable();
    sites.dedup();
    Ok(sites)
}

/// Regular sampling grid. Samples sit at cell centers
/// `origin + (i + 0.5) * spacing`; x varies fastest in linear order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: [f64; 3],
    pub spacing: f64,
    pub dims: [usize; 3],
}

impl GridSpec {
    pub fn new(origin: Vec3, spacing: f64, dims: [usize; 3]) -> Result<Self> {
        if !(spacing > 0.0) {
            return arg("grid spacing must be positive");
        }
        if dims.iter().any(|&d| d < 2) {
            return arg(format!("grid dims must be at least 2 per axis, got {dims:?}"));
        }
        Ok(Self { origin: origin.into(), spacing, dims })
    }

    /// Grid of `n` samples per axis covering the cube `[lo, hi]^3`.
    pub fn cube(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(Vec3::repeat(lo), (hi - lo) / n as f64, [n; 3])
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3 {
        Vec3::from(self.origin) + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * self.spacing
    }

    /// Sample position for a linear index.
    pub fn point_at(&self, idx: usize) -> Vec3 {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        self.point(i, j, k)
    }
}

/// Sampling grid fitted to a point cloud: the bounding box of the cloud and
/// one Gaussian-jittered copy of it, padded by `pad` on every side, is
/// resolved with `m = cbrt(M^3 / L)` cells per world unit, `L` being the box
/// volume. The grid is centered on the box.
pub fn inference_grid(pc: &PointCloud, m_res: usize, jitter_sigma: f64, pad: f64, seed: u64) -> Result<GridSpec> {
    if pc.is_empty() {
        return arg("inference grid needs a non-empty point cloud");
    }
    if m_res < 2 {
        return arg("inference grid resolution M must be at least 2");
    }
    if jitter_sigma < 0.0 || pad < 0.0 {
        return arg("jitter sigma and pad must be non-negative");
    }
    let (mut lo, mut hi) = pc.bounds().expect("non-empty");
    if jitter_sigma > 0.0 {
        let normal = Normal::new(0.0, jitter_sigma).map_err(|e| crate::Error::Argument(e.to_string()))?;
        let mut rng = crate::rng_from_seed(seed);
        for p in &pc.points {
            let q = p + Vec3::new(normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng));
            lo = lo.inf(&q);
            hi = hi.sup(&q);
        }
    }
    lo -= Vec3::repeat(pad);
    hi += Vec3::repeat(pad);
    let extent = hi - lo;
    if extent.iter().any(|e| !(*e > 0.0)) {
        return arg(format!("degenerate bounding box with extents {:?}", extent.as_slice()));
    }
    let volume = extent.x * extent.y * extent.z;
    let m = ((m_res as f64).powi(3) / volume).cbrt();
    let dims = [0, 1, 2].map(|a| ((m * extent[a]).round() as usize).max(2));
    let spacing = 1.0 / m;
    let size = Vec3::new(dims[0] as f64, dims[1] as f64, dims[2] as f64) * spacing;
    let origin = (lo + hi) / 2.0 - size / 2.0;
    GridSpec::new(origin, spacing, dims)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn voxelize_merges_and_orders() {
        let pc = PointCloud::new(vec![Vec3::new(1.1, 0.1, 0.1), Vec3::new(0.1, 0.1, 0.1), Vec3::new(0.2, 0.3, 0.9)]);
        let sites = voxelize(&pc, 1.0, Vec3::zeros()).unwrap();
        assert_eq!(sites, vec![[0, 0, 0], [1, 0, 0]]);
        assert!(voxelize(&PointCloud::default(), 1.0, Vec3::zeros()).unwrap().is_empty());
        assert!(voxelize(&pc, 0.0, Vec3::zeros()).is_err());
    }

    #[test]
    fn voxelize_membership_and_count() {
        let mut rng = crate::rng_from_seed(4);
        let pts: Vec<Vec3> = (0..500)
            .map(|_| Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)))
            .collect();
        let pc = PointCloud::new(pts.clone());
        let origin = Vec3::new(0.3, -0.1, 0.05);
        let sites = voxelize(&pc, 0.5, origin).unwrap();
        assert!(sites.len() <= pts.len());
        for p in &pts {
            let g = (p - origin) / 0.5;
            let s = [g.x.floor() as i32, g.y.floor() as i32, g.z.floor() as i32];
            assert!(sites.binary_search(&s).is_ok());
        }
        let mut rev = pts;
        rev.reverse();
        assert_eq!(voxelize(&PointCloud::new(rev), 0.5, origin).unwrap(), sites);
    }

    fn box_cloud(ext: Vec3) -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    pts.push(Vec3::new(i as f64 * ext.x, j as f64 * ext.y, k as f64 * ext.z));
                }
            }
        }
        PointCloud::new(pts)
    }

    #[test]
    fn unit_cube_at_m256() {
        let g = inference_grid(&box_cloud(Vec3::repeat(1.0)), 256, 0.0, 0.0, 0).unwrap();
        assert_eq!(g.dims, [256, 256, 256]);
    }

    #[test]
    fn anisotropic_box_keeps_cell_budget() {
        let g = inference_grid(&box_cloud(Vec3::new(2.0, 1.0, 0.5)), 256, 0.0, 0.0, 0).unwrap();
        assert_eq!(g.dims, [512, 256, 128]);
        assert_eq!(g.len(), 256usize.pow(3));
    }

    #[test]
    fn degenerate_box_is_rejected() {
        let pc = PointCloud::new(vec![Vec3::zeros(), Vec3::new(1.0, 1.0, 0.0)]);
        assert!(inference_grid(&pc, 16, 0.0, 0.0, 0).is_err());
        assert!(inference_grid(&pc, 16, 0.0, 0.1, 0).is_ok());
        assert!(inference_grid(&PointCloud::default(), 16, 0.0, 0.1, 0).is_err());
    }

    #[test]
    fn jitter_only_grows_the_box() {
        let pc = box_cloud(Vec3::new(1.0, 2.0, 0.5));
        let a = inference_grid(&pc, 32, 0.0, 0.1, 7).unwrap();
        let b = inference_grid(&pc, 32, 0.2, 0.1, 7).unwrap();
        let size = |g: &GridSpec| g.dims.map(|d| d as f64 * g.spacing);
        for ax in 0..3 {
            assert!(size(&b)[ax] >= size(&a)[ax] - 2.0 * b.spacing);
        }
        assert_eq!(b, inference_grid(&pc, 32, 0.2, 0.1, 7).unwrap());
    }
}
