//! Sparse voxel tensors, submanifold sparse convolution and the volume
//! feature extractor (a sparse 3D U-Net) that turns depth voxels decorated
//! with image features into multi-scale code volumes.

mod conv;
mod sitemap;
mod trilinear;
mod vfe;

pub use conv::{sparse_conv, sparse_conv_backward, ConvMode, ConvWeights, Rulebook, KERNEL_TAPS};
pub use sitemap::SiteMap;
pub use trilinear::{trilinear_query, CodeTaps, MultiScaleCodes};
pub use vfe::{vfe_backward, vfe_forward, VfeGrads, VfeOutput, VfeParams, VfeTape, VFE_LAYERS};


use rand_distr::{Distribution, StandardNormal};

use crate::error::{arg, Result};
use crate::geometry::{bilinear_sample_into, orthographic_project, site_center, OrthoCamera, Site, VectorImage};
use crate::Vec3;

/// Features on a set of unique voxel sites. Row `i` of `features` belongs
/// to `sites[i]`. `stride` is the number of finest-level cells per site edge.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseVoxelTensor {
    pub sites: Vec<Site>,
    pub features: Vec<f64>,
    pub channels: usize,
    pub stride: u32,
}

impl SparseVoxelTensor {
    pub fn new(sites: Vec<Site>, features: Vec<f64>, channels: usize, stride: u32) -> Result<Self> {
        if features.len() != sites.len() * channels {
            return arg(format!(
                "{} sites x {} channels needs {} features, got {}",
                sites.len(),
                channels,
                sites.len() * channels,
                features.len()
            ));
        }
        if stride == 0 || !stride.is_power_of_two() {
            return arg(format!("stride {stride} is not a power of two"));
        }
        let map = SiteMap::build(&sites);
        if map.len() != sites.len() {
            return arg("duplicate voxel sites");
        }
        Ok(Self { sites, features, channels, stride })
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    #[inline]
    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.channels..(i + 1) * self.channels]
    }

    /// Same tensor with sites in lexicographic order.
    pub fn canonicalized(&self) -> Self {
        let mut order: Vec<usize> = (0..self.sites.len()).collect();
        order.sort_by_key(|&i| self.sites[i]);
        let sites = order.iter().map(|&i| self.sites[i]).collect();
        let features = order.iter().flat_map(|&i| self.feature(i).iter().copied()).collect();
        Self { sites, features, channels: self.channels, stride: self.stride }
    }
}

/// Scale from full-resolution camera pixel coordinates to a feature map's
/// pixel coordinates.
#[inline]
pub(crate) fn map_coords(u: f64, v: f64, cam: &OrthoCamera, map: &VectorImage) -> (f64, f64) {
    (u * map.width as f64 / cam.image_w as f64, v * map.height as f64 / cam.image_h as f64)
}

/// Voxel tensor whose site features are the low-resolution image features
/// sampled at the projection of each site center.
pub fn build_sparse(
    sites: &[Site],
    lr_map: &VectorImage,
    cam: &OrthoCamera,
    spacing: f64,
    origin: Vec3,
) -> Result<SparseVoxelTensor> {
    let c = lr_map.channels;
    let mut features = vec![0.0; sites.len() * c];
    for (s, row) in sites.iter().zip(features.chunks_mut(c)) {
        let (u, v, _) = orthographic_project(&site_center(s, spacing, &origin), cam);
        let (mu, mv) = map_coords(u, v, cam, lr_map);
        bilinear_sample_into(lr_map, mu, mv, row);
    }
    SparseVoxelTensor::new(sites.to_vec(), features, c, 1)
}

/// Adjoint of [`build_sparse`] with respect to the feature map.
pub(crate) fn build_sparse_backward(
    sites: &[Site],
    grad_features: &[f64],
    lr_grad: &mut VectorImage,
    cam: &OrthoCamera,
    spacing: f64,
    origin: Vec3,
) {
    let c = lr_grad.channels;
    for (s, g) in sites.iter().zip(grad_features.chunks(c)) {
        let (u, v, _) = orthographic_project(&site_center(s, spacing, &origin), cam);
        let (mu, mv) = map_coords(u, v, cam, lr_grad);
        crate::geometry::bilinear_scatter(lr_grad, mu, mv, g);
    }
}

/// Voxel tensor with seeded standard-normal features, ignoring the image.
pub fn build_sparse_random(sites: &[Site], channels: usize, seed: u64) -> Result<SparseVoxelTensor> {
    let mut rng = crate::rng_from_seed(seed);
    let features = (0..sites.len() * channels).map(|_| StandardNormal.sample(&mut rng)).collect();
    SparseVoxelTensor::new(sites.to_vec(), features, channels, 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> OrthoCamera {
        OrthoCamera::axis_aligned(Vec3::zeros(), 0.1, 8, 8, 0.0, 10.0).unwrap()
    }

    #[test]
    fn constant_map_gives_constant_features() {
        let map = VectorImage::new(4, 4, 2, [0.25, -1.0].repeat(16)).unwrap();
        let sites = vec![[0, 0, 10], [1, -2, 11], [-3, 2, 12]];
        let t = build_sparse(&sites, &map, &cam(), 0.1, Vec3::zeros()).unwrap();
        assert_eq!(t.stride, 1);
        for i in 0..3 {
            assert_eq!(t.feature(i), &[0.25, -1.0]);
        }
        assert!(build_sparse(&[], &map, &cam(), 0.1, Vec3::zeros()).unwrap().is_empty());
    }

    #[test]
    fn ramp_map_matches_projected_bilinear_sample() {
        let data: Vec<f64> = (0..16).map(|i| (i % 4) as f64 * 0.5 + (i / 4) as f64).collect();
        let map = VectorImage::new(4, 4, 1, data).unwrap();
        let c = cam();
        let site = [1, -1, 20];
        let t = build_sparse(&[site], &map, &c, 0.07, Vec3::new(0.01, 0.02, 0.0)).unwrap();
        let (u, v, _) = orthographic_project(&site_center(&site, 0.07, &Vec3::new(0.01, 0.02, 0.0)), &c);
        let want = crate::geometry::bilinear_sample(&map, u / 2.0, v / 2.0)[0];
        assert!((t.features[0] - want).abs() <= 1e-7);
    }

    #[test]
    fn random_embedding_is_seeded() {
        let sites = vec![[0, 0, 0], [1, 0, 0]];
        let a = build_sparse_random(&sites, 3, 1).unwrap();
        assert_eq!(a, build_sparse_random(&sites, 3, 1).unwrap());
        assert_ne!(a.features, build_sparse_random(&sites, 3, 2).unwrap().features);
    }

    #[test]
    fn tensor_invariants() {
        assert!(SparseVoxelTensor::new(vec![[0, 0, 0], [0, 0, 0]], vec![0.0; 2], 1, 1).is_err());
        assert!(SparseVoxelTensor::new(vec![[0, 0, 0]], vec![0.0; 2], 1, 1).is_err());
        assert!(SparseVoxelTensor::new(vec![[0, 0, 0]], vec![0.0], 1, 3).is_err());
    }
}
