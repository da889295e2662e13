//! Labeled training points: near-surface baseline samples, semantic
//! augmentation around face and hand regions, and depth-surface points.

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{arg, Error, Result};
use crate::geometry::{orthographic_project, OrthoCamera, PointCloud};
use crate::io::{Archive, Tensor};
use crate::mesh::TriMesh;
use crate::sdf_oracle::SdfOracle;
use crate::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum PointTag {
    Body = 0,
    Face = 1,
    Hand = 2,
    DepthSurface = 3,
}

impl TryFrom<u8> for PointTag {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        Ok(match v {
            0 => Self::Body,
            1 => Self::Face,
            2 => Self::Hand,
            3 => Self::DepthSurface,
            _ => return Err(Error::Format(format!("unknown point tag {v}"))),
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LabeledPointSet {
    pub points: Vec<Vec3>,
    pub sdf: Vec<f64>,
    pub tag: Vec<PointTag>,
}

impl LabeledPointSet {
    pub fn new(points: Vec<Vec3>, sdf: Vec<f64>, tag: Vec<PointTag>) -> Result<Self> {
        if points.len() != sdf.len() || points.len() != tag.len() {
            return arg(format!("{} points, {} labels, {} tags", points.len(), sdf.len(), tag.len()));
        }
        if sdf.iter().zip(&tag).any(|(s, t)| *t == PointTag::DepthSurface && *s != 0.0) {
            return arg("depth-surface points must carry sdf = 0");
        }
        Ok(Self { points, sdf, tag })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn extend(&mut self, other: &LabeledPointSet) {
        self.points.extend_from_slice(&other.points);
        self.sdf.extend_from_slice(&other.sdf);
        self.tag.extend_from_slice(&other.tag);
    }

    pub fn count(&self, tag: PointTag) -> usize {
        self.tag.iter().filter(|t| **t == tag).count()
    }

    /// Rows at `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            points: idx.iter().map(|&i| self.points[i]).collect(),
            sdf: idx.iter().map(|&i| self.sdf[i]).collect(),
            tag: idx.iter().map(|&i| self.tag[i]).collect(),
        }
    }

    /// Uniform subsample of `n` rows without replacement, original order
    /// kept; everything when `n >= len`.
    pub fn subsample(&self, n: usize, seed: u64) -> Self {
        if n >= self.len() {
            return self.clone();
        }
        let mut rng = crate::rng_from_seed(seed);
        let mut idx = index::sample(&mut rng, self.len(), n).into_vec();
        idx.sort_unstable();
        self.select(&idx)
    }

    /// Appends `{prefix}.points` (N x 3 f32), `{prefix}.sdf` (N f32) and
    /// `{prefix}.tag` (N u8).
    pub fn push_to(&self, archive: &mut Archive, prefix: &str) -> Result<()> {
        let n = self.len() as u32;
        let flat: Vec<f64> = self.points.iter().flat_map(|p| [p.x, p.y, p.z]).collect();
        archive.push(format!("{prefix}.points"), Tensor::f32_from_f64(vec![n, 3], &flat)?);
        archive.push(format!("{prefix}.sdf"), Tensor::f32_from_f64(vec![n], &self.sdf)?);
        archive.push(format!("{prefix}.tag"), Tensor::u8(vec![n], self.tag.iter().map(|t| *t as u8).collect())?);
        Ok(())
    }

    pub fn from_archive(archive: &Archive, prefix: &str) -> Result<Self> {
        let pts = archive.get(&format!("{prefix}.points"))?;
        let n = pts.dims.first().copied().unwrap_or(0);
        pts.expect_dims(&[n, 3])?;
        let sdf = archive.get(&format!("{prefix}.sdf"))?;
        sdf.expect_dims(&[n])?;
        let tag = archive.get(&format!("{prefix}.tag"))?;
        tag.expect_dims(&[n])?;
        let points = pts.to_f64()?.chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
        let tags = tag.as_u8()?.iter().map(|&t| PointTag::try_from(t)).collect::<Result<_>>()?;
        Self::new(points, sdf.to_f64()?, tags).map_err(|e| Error::Format(e.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MaskLabel {
    Background = 0,
    Body = 1,
    Face = 2,
    Hand = 3,
}

impl TryFrom<u8> for MaskLabel {
    type Error = Error;
    fn try_from(v: u8) -> Result<Self> {
        Ok(match v {
            0 => Self::Background,
            1 => Self::Body,
            2 => Self::Face,
            3 => Self::Hand,
            _ => return Err(Error::Format(format!("unknown mask label {v}"))),
        })
    }
}

/// Per-pixel semantic labels, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticMask {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<MaskLabel>,
}

impl SemanticMask {
    pub fn new(width: usize, height: usize, labels: Vec<MaskLabel>) -> Result<Self> {
        if labels.len() != width * height {
            return arg(format!("{width}x{height} mask needs {} labels, got {}", width * height, labels.len()));
        }
        Ok(Self { width, height, labels })
    }

    pub fn filled(width: usize, height: usize, label: MaskLabel) -> Self {
        Self { width, height, labels: vec![label; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> MaskLabel {
        self.labels[y * self.width + x]
    }

    pub fn count(&self, label: MaskLabel) -> usize {
        self.labels.iter().filter(|l| **l == label).count()
    }

    /// Label under continuous pixel coordinates; background outside.
    pub fn at(&self, u: f64, v: f64) -> MaskLabel {
        if !(u >= 0.0 && v >= 0.0) {
            return MaskLabel::Background;
        }
        let (x, y) = (u.floor() as usize, v.floor() as usize);
        if x >= self.width || y >= self.height {
            return MaskLabel::Background;
        }
        self.get(x, y)
    }

    /// Mask label at the projection of `p`.
    pub fn label_of(&self, p: &Vec3, cam: &OrthoCamera) -> MaskLabel {
        let (u, v, _) = orthographic_project(p, cam);
        self.at(u, v)
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::u8(vec![self.height as u32, self.width as u32], self.labels.iter().map(|l| *l as u8).collect())
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        if t.dims.len() != 2 {
            return Err(Error::Format(format!("mask must be H x W, found dims {:?}", t.dims)));
        }
        let labels = t.as_u8()?.iter().map(|&l| MaskLabel::try_from(l)).collect::<Result<_>>()?;
        Self::new(t.dims[1] as usize, t.dims[0] as usize, labels)
    }
}

/// Rounds coordinates to float32 so labels survive the f32 on-disk format.
fn storable(p: Vec3) -> Vec3 {
    p.map(|c| c as f32 as f64)
}

fn gaussian(sigma: f64) -> Result<Option<Normal<f64>>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return arg(format!("sigma must be finite and >= 0, got {sigma}"));
    }
    Ok((sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("valid sigma")))
}

fn jitter(p: &Vec3, noise: &Option<Normal<f64>>, rng: &mut crate::Rng) -> Vec3 {
    match noise {
        Some(n) => p + Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng)),
        None => *p,
    }
}

/// Fraction of the bounding-box extent added on every side for the uniform
/// share of baseline samples.
pub const UNIFORM_BOX_PAD: f64 = 0.25;

/// Area-weighted surface samples displaced by isotropic Gaussian noise,
/// plus a `uniform_frac` share drawn uniformly from the padded bounding
/// box. All points are labeled by the signed-distance oracle and tagged
/// body.
pub fn sample_baseline(
    mesh: &TriMesh,
    x_b: usize,
    sigma_lr: f64,
    uniform_frac: f64,
    seed: u64,
) -> Result<LabeledPointSet> {
    if !(0.0..=1.0).contains(&uniform_frac) {
        return arg(format!("uniform_frac must lie in [0, 1], got {uniform_frac}"));
    }
    let noise = gaussian(sigma_lr)?;
    if x_b == 0 {
        return Ok(LabeledPointSet::default());
    }
    if !mesh.is_closed_manifold() {
        return arg("baseline sampling needs a watertight mesh");
    }
    let oracle = SdfOracle::new(mesh)?;
    let mut rng = crate::rng_from_seed(seed);
    let n_uniform = (uniform_frac * x_b as f64).round() as usize;
    let (surface, _) = mesh.sample_surface(x_b - n_uniform, &mut rng);
    let mut points: Vec<Vec3> = surface.iter().map(|p| storable(jitter(p, &noise, &mut rng))).collect();
    let (lo, hi) = mesh.bounds().expect("closed mesh is non-empty");
    let pad = (hi - lo).max() * UNIFORM_BOX_PAD;
    let (lo, hi) = (lo - Vec3::repeat(pad), hi + Vec3::repeat(pad));
    for _ in 0..n_uniform {
        let p = Vec3::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y), rng.gen_range(lo.z..hi.z));
        points.push(storable(p));
    }
    let sdf = oracle.signed_distances(&points);
    let tag = vec![PointTag::Body; points.len()];
    LabeledPointSet::new(points, sdf, tag)
}

/// Points appended by [`semantic_augment`] for a given seed set size:
/// every recursion step adds a perturbed copy of the whole current set.
pub fn augment_count(n_hh: usize, n_k: u32) -> usize {
    n_hh * ((1usize << n_k) - 1)
}

/// Recursive Gaussian augmentation around base points that project onto
/// face or hand pixels. Appended points inherit the region of the point
/// they descend from and are capped at half the base size.
pub fn semantic_augment(
    base: &LabeledPointSet,
    mask: &SemanticMask,
    cam: &OrthoCamera,
    mesh: &TriMesh,
    sigma_hr: f64,
    n_k: u32,
    seed: u64,
) -> Result<LabeledPointSet> {
    if (mask.width, mask.height) != (cam.image_w, cam.image_h) {
        return arg(format!(
            "mask is {}x{} but camera expects {}x{}",
            mask.width, mask.height, cam.image_w, cam.image_h
        ));
    }
    if n_k >= 32 {
        return arg(format!("recursion depth {n_k} is too large"));
    }
    let noise = gaussian(sigma_hr)?;
    let mut seeds: Vec<(Vec3, PointTag)> = Vec::new();
    for p in &base.points {
        match mask.label_of(p, cam) {
            MaskLabel::Face => seeds.push((*p, PointTag::Face)),
            MaskLabel::Hand => seeds.push((*p, PointTag::Hand)),
            _ => {}
        }
    }
    let mut out = base.clone();
    if seeds.is_empty() {
        return Ok(out);
    }
    let cap = base.len() / 2;
    let mut rng = crate::rng_from_seed(seed);
    let mut current = seeds;
    let mut added: Vec<(Vec3, PointTag)> = Vec::new();
    for _ in 0..n_k {
        if added.len() >= cap {
            break;
        }
        let copy: Vec<(Vec3, PointTag)> = current.iter().map(|(p, t)| (storable(jitter(p, &noise, &mut rng)), *t)).collect();
        added.extend_from_slice(&copy);
        current.extend(copy);
    }
    added.truncate(cap);
    if added.is_empty() {
        return Ok(out);
    }
    let oracle = SdfOracle::new(mesh)?;
    let points: Vec<Vec3> = added.iter().map(|(p, _)| *p).collect();
    let sdf = oracle.signed_distances(&points);
    out.extend(&LabeledPointSet::new(points, sdf, added.iter().map(|(_, t)| *t).collect())?);
    Ok(out)
}

/// Uniform subsample of the depth point cloud, labeled as on-surface.
pub fn select_depth_points(pc: &PointCloud, n_pc: usize, seed: u64) -> Result<LabeledPointSet> {
    if pc.is_empty() {
        return arg("depth point cloud is empty");
    }
    let points: Vec<Vec3> = if pc.len() <= n_pc {
        pc.points.clone()
    } else {
        let mut rng = crate::rng_from_seed(seed);
        let mut idx = index::sample(&mut rng, pc.len(), n_pc).into_vec();
        idx.sort_unstable();
        idx.iter().map(|&i| pc.points[i]).collect()
    };
    let n = points.len();
    LabeledPointSet::new(points, vec![0.0; n], vec![PointTag::DepthSurface; n])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere() -> TriMesh {
        TriMesh::icosphere(3).transformed(|v| v * 0.5)
    }

    fn front_cam(n: usize) -> OrthoCamera {
        OrthoCamera::axis_aligned(Vec3::new(0.0, 0.0, -2.0), 1.2 / n as f64, n, n, 0.5, 3.5).unwrap()
    }

    #[test]
    fn baseline_counts_and_tags() {
        let s = sample_baseline(&sphere(), 1000, 0.05, 1.0 / 16.0, 1).unwrap();
        assert_eq!(s.len(), 1000);
        assert_eq!(s.count(PointTag::Body), 1000);
        assert!(sample_baseline(&sphere(), 0, 0.05, 0.1, 1).unwrap().is_empty());
        assert!(sample_baseline(&sphere(), 10, 0.05, 1.5, 1).is_err());
        assert!(sample_baseline(&sphere(), 10, -1.0, 0.5, 1).is_err());
    }

    #[test]
    fn zero_sigma_samples_lie_on_surface() {
        let s = sample_baseline(&sphere(), 500, 0.0, 0.0, 2).unwrap();
        assert!(s.sdf.iter().all(|d| d.abs() <= 1e-6));
    }

    #[test]
    fn labels_match_oracle_requery() {
        let m = sphere();
        let s = sample_baseline(&m, 400, 0.05, 0.25, 3).unwrap();
        let oracle = SdfOracle::new(&m).unwrap();
        for (p, d) in s.points.iter().zip(&s.sdf) {
            assert_eq!(oracle.signed_distance(p), *d);
        }
    }

    #[test]
    fn baseline_is_seeded() {
        let a = sample_baseline(&sphere(), 200, 0.05, 0.1, 4).unwrap();
        assert_eq!(a, sample_baseline(&sphere(), 200, 0.05, 0.1, 4).unwrap());
        assert_ne!(a.points, sample_baseline(&sphere(), 200, 0.05, 0.1, 5).unwrap().points);
    }

    #[test]
    fn open_mesh_rejected() {
        let mut m = sphere();
        m.triangles.pop();
        assert!(sample_baseline(&m, 10, 0.05, 0.1, 1).is_err());
    }

    #[test]
    fn empty_mask_leaves_base_unchanged() {
        let base = sample_baseline(&sphere(), 300, 0.05, 0.0, 6).unwrap();
        let mask = SemanticMask::filled(16, 16, MaskLabel::Body);
        let out = semantic_augment(&base, &mask, &front_cam(16), &sphere(), 0.007, 2, 1).unwrap();
        assert_eq!(out, base);
    }

    #[test]
    fn doubling_recursion_count() {
        let base = sample_baseline(&sphere(), 4000, 0.05, 0.0, 7).unwrap();
        let cam = front_cam(16);
        let mut mask = SemanticMask::filled(16, 16, MaskLabel::Body);
        for y in 2..5 {
            for x in 2..8 {
                mask.labels[y * 16 + x] = if x < 5 { MaskLabel::Face } else { MaskLabel::Hand };
            }
        }
        let hh = base.points.iter().filter(|p| matches!(mask.label_of(p, &cam), MaskLabel::Face | MaskLabel::Hand)).count();
        assert!(hh > 0 && augment_count(hh, 2) <= 2000, "{hh}");
        let out = semantic_augment(&base, &mask, &cam, &sphere(), 0.007, 2, 8).unwrap();
        assert_eq!(out.len() - base.len(), 3 * hh);
        assert_eq!(augment_count(1000, 2), 3000);
        let appended = out.select(&(base.len()..out.len()).collect::<Vec<_>>());
        let on_region = appended.points.iter().filter(|p| matches!(mask.label_of(p, &cam), MaskLabel::Face | MaskLabel::Hand)).count();
        assert!(on_region as f64 >= 0.9 * appended.len() as f64);
        let oracle = SdfOracle::new(&sphere()).unwrap();
        for (p, d) in appended.points.iter().zip(&appended.sdf) {
            assert_eq!(oracle.signed_distance(p), *d);
        }
    }

    #[test]
    fn augmentation_is_capped_at_half_the_base() {
        let base = sample_baseline(&sphere(), 600, 0.05, 0.0, 9).unwrap();
        let mask = SemanticMask::filled(16, 16, MaskLabel::Face);
        let out = semantic_augment(&base, &mask, &front_cam(16), &sphere(), 0.007, 5, 2).unwrap();
        assert_eq!(out.len() - base.len(), 300);
        assert!(out.tag[600..].iter().all(|t| *t == PointTag::Face));
    }

    #[test]
    fn mask_camera_mismatch_rejected() {
        let base = sample_baseline(&sphere(), 50, 0.05, 0.0, 1).unwrap();
        let mask = SemanticMask::filled(8, 16, MaskLabel::Face);
        assert!(semantic_augment(&base, &mask, &front_cam(16), &sphere(), 0.007, 2, 1).is_err());
    }

    #[test]
    fn depth_selection() {
        let pc = PointCloud::new((0..100).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect());
        let s = select_depth_points(&pc, 15_000, 1).unwrap();
        assert_eq!(s.points, pc.points);
        assert!(s.sdf.iter().all(|d| *d == 0.0));
        assert_eq!(s.count(PointTag::DepthSurface), 100);
        let big = PointCloud::new((0..30_000).map(|i| Vec3::new(i as f64, 0.0, 0.0)).collect());
        let s = select_depth_points(&big, 15_000, 2).unwrap();
        let mut xs: Vec<i64> = s.points.iter().map(|p| p.x as i64).collect();
        xs.dedup();
        assert_eq!(xs.len(), 15_000);
        assert!(select_depth_points(&PointCloud::default(), 10, 1).is_err());
    }

    #[test]
    fn archive_round_trip() {
        let s = sample_baseline(&sphere(), 100, 0.05, 0.1, 10).unwrap();
        let mut a = Archive::new("");
        s.push_to(&mut a, "body").unwrap();
        let back = LabeledPointSet::from_archive(&Archive::from_bytes(&a.to_bytes()).unwrap(), "body").unwrap();
        assert_eq!(back.points, s.points);
        assert_eq!(back.tag, s.tag);
        for (x, y) in back.sdf.iter().zip(&s.sdf) {
            assert_eq!(*x, *y as f32 as f64);
        }
    }

    #[test]
    fn subsample_keeps_order() {
        let s = sample_baseline(&sphere(), 100, 0.05, 0.1, 11).unwrap();
        let sub = s.subsample(40, 3);
        assert_eq!(sub.len(), 40);
        let pos: Vec<usize> = sub.points.iter().map(|p| s.points.iter().position(|q| q == p).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(s.subsample(500, 3), s);
    }
}
