//! Image feature extractors, the SDF head, and the assembled model with its
//! reverse pass.

mod conv2d;
mod hourglass;
mod mlp;

pub use conv2d::Conv2d;
pub use hourglass::{FeTape, FeatureExtractor, StackBlock};
pub use mlp::{Linear, Mlp, MlpTape, LEAKY_SLOPE};

use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};
use crate::geometry::{
    bilinear_sample_into, bilinear_scatter, orthographic_project, voxelize, OrthoCamera, PointCloud, Site, VectorImage,
};
use crate::sparsegrid::{
    build_sparse, build_sparse_backward, map_coords, build_sparse_random, vfe_backward, vfe_forward, CodeTaps, MultiScaleCodes,
    VfeParams, VfeTape,
};
use crate::Vec3;

/// Channels of the image-network input: RGB followed by normals.
pub const IMAGE_CHANNELS: usize = 6;

/// Architecture and voxelization settings stored with every checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub lr_width: usize,
    pub hr_width: usize,
    pub vfe_base: usize,
    pub stacks: usize,
    pub mlp_hidden: Vec<usize>,
    /// Edge length of a finest VFE voxel, world units.
    pub voxel_size: f64,
    /// Feed seeded N(0,1) voxel features instead of sampled LR features.
    pub random_features: bool,
    pub random_feature_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            lr_width: 32,
            hr_width: 32,
            vfe_base: 16,
            stacks: 2,
            mlp_hidden: vec![512, 256, 128],
            voxel_size: 1.0 / 64.0,
            random_features: false,
            random_feature_seed: 0,
        }
    }
}

impl ModelConfig {
    /// Full-size widths: 256-channel feature maps, four stacks.
    pub fn full_scale() -> Self {
        Self { lr_width: 256, hr_width: 256, stacks: 4, ..Self::default() }
    }

    pub fn mlp_input(&self) -> usize {
        self.hr_width + 7 * self.vfe_base + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.lr_width == 0 || self.hr_width == 0 || self.vfe_base == 0 {
            return arg("network widths must be positive");
        }
        if self.mlp_hidden.iter().any(|w| *w == 0) {
            return arg("MLP hidden widths must be positive");
        }
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return arg(format!("voxel_size must be positive, got {}", self.voxel_size));
        }
        Ok(())
    }
}

/// LR-FE, HR-FE, VFE and the SDF MLP.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconModel {
    pub config: ModelConfig,
    pub lr_fe: FeatureExtractor,
    pub hr_fe: FeatureExtractor,
    pub vfe: VfeParams,
    pub mlp: Mlp,
}

/// Mutable view of one named parameter tensor.
pub struct ParamView<'a> {
    pub name: String,
    pub dims: Vec<u32>,
    pub data: &'a mut Vec<f64>,
}

impl ReconModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = crate::rng_from_seed(seed);
        let c = &config;
        Ok(Self {
            lr_fe: FeatureExtractor::init(IMAGE_CHANNELS, c.lr_width, 2, c.stacks, &mut rng),
            hr_fe: FeatureExtractor::init(IMAGE_CHANNELS, c.hr_width, 1, c.stacks, &mut rng),
            vfe: VfeParams::init(c.lr_width, c.vfe_base, &mut rng),
            mlp: Mlp::init(c.mlp_input(), &c.mlp_hidden, &mut rng),
            config,
        })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let c = &config;
        Ok(Self {
            lr_fe: FeatureExtractor::zeros(IMAGE_CHANNELS, c.lr_width, 2, c.stacks),
            hr_fe: FeatureExtractor::zeros(IMAGE_CHANNELS, c.hr_width, 1, c.stacks),
            vfe: VfeParams::zeros(c.lr_width, c.vfe_base),
            mlp: Mlp::zeros(c.mlp_input(), &c.mlp_hidden),
            config,
        })
    }

    /// Zero-filled model of identical shape, used to accumulate gradients.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.config.clone()).expect("config already validated")
    }

    /// Every parameter tensor with a stable name, in a fixed order.
    pub fn param_views(&mut self) -> Vec<ParamView<'_>> {
        let mut v = Vec::new();
        for (prefix, fe) in [("lr_fe", &mut self.lr_fe), ("hr_fe", &mut self.hr_fe)] {
            for (name, c) in fe.convs_mut() {
                let (ci, co) = (c.c_in as u32, c.c_out as u32);
                v.push(ParamView { name: format!("{prefix}.{name}.weight"), dims: vec![3, 3, ci, co], data: &mut c.weight });
                v.push(ParamView { name: format!("{prefix}.{name}.bias"), dims: vec![co], data: &mut c.bias });
            }
        }
        for (i, l) in self.vfe.layers.iter_mut().enumerate() {
            let (ci, co) = (l.c_in as u32, l.c_out as u32);
            v.push(ParamView { name: format!("vfe.{i:02}.weight"), dims: vec![27, ci, co], data: &mut l.weight });
            v.push(ParamView { name: format!("vfe.{i:02}.bias"), dims: vec![co], data: &mut l.bias });
        }
        for (i, l) in self.mlp.layers.iter_mut().enumerate() {
            let (ni, no) = (l.n_in as u32, l.n_out as u32);
            v.push(ParamView { name: format!("mlp.{i}.weight"), dims: vec![ni, no], data: &mut l.weight });
            v.push(ParamView { name: format!("mlp.{i}.bias"), dims: vec![no], data: &mut l.bias });
        }
        v
    }

    pub fn param_count(&self) -> usize {
        self.clone().param_views().iter().map(|p| p.data.len()).sum()
    }

    pub fn check(&self) -> Result<()> {
        self.config.validate()?;
        self.lr_fe.check()?;
        self.hr_fe.check()?;
        self.vfe.check()?;
        self.mlp.check()?;
        let c = &self.config;
        if self.lr_fe.width() != c.lr_width
            || self.hr_fe.width() != c.hr_width
            || self.lr_fe.stacks.len() != c.stacks
            || self.hr_fe.stacks.len() != c.stacks
            || self.lr_fe.stem.stride != 2
            || self.hr_fe.stem.stride != 1
            || self.lr_fe.stem.c_in != IMAGE_CHANNELS
            || self.hr_fe.stem.c_in != IMAGE_CHANNELS
            || self.vfe.input != c.lr_width
            || self.vfe.base != c.vfe_base
            || self.mlp.input_width() != c.mlp_input()
        {
            return arg("model parameters do not match the model config");
        }
        Ok(())
    }
}

/// Concatenates RGB and NaN-cleaned normals into the 6-channel network input.
pub fn image_input(rgb: &VectorImage, normals: &VectorImage) -> Result<VectorImage> {
    if rgb.channels != 3 || normals.channels != 3 {
        return arg(format!("rgb and normals need 3 channels, got {} and {}", rgb.channels, normals.channels));
    }
    if (rgb.width, rgb.height) != (normals.width, normals.height) {
        return arg(format!(
            "rgb is {}x{} but normals are {}x{}",
            rgb.width, rgb.height, normals.width, normals.height
        ));
    }
    rgb.concat_channels(&normals.nan_to_zero())
}

/// LR (half resolution) and HR (full resolution) feature maps.
pub fn extract_features(
    rgb: &VectorImage,
    normals: &VectorImage,
    model: &ReconModel,
) -> Result<(VectorImage, VectorImage)> {
    let x = image_input(rgb, normals)?;
    Ok((model.lr_fe.forward(&x), model.hr_fe.forward(&x)))
}

fn check_head(hr: &VectorImage, codes: &MultiScaleCodes, mlp: &Mlp) -> Result<()> {
    let want = hr.channels + codes.width() + 1;
    if mlp.input_width() != want {
        return arg(format!(
            "MLP takes {} inputs but features provide {} ({} image + {} code + 1 depth)",
            mlp.input_width(),
            want,
            hr.channels,
            codes.width()
        ));
    }
    Ok(())
}

/// Signed distance per point: pixel-aligned HR feature, multi-scale code and
/// normalized camera depth, fed through the MLP.
pub fn predict_sdf(
    points: &[Vec3],
    hr: &VectorImage,
    codes: &MultiScaleCodes,
    cam: &OrthoCamera,
    mlp: &Mlp,
) -> Result<Vec<f64>> {
    check_head(hr, codes, mlp)?;
    let (ch, cw) = (hr.channels, codes.width());
    let mut row = vec![0.0; ch + cw + 1];
    let mut scratch = mlp.scratch();
    Ok(points
        .iter()
        .map(|p| {
            let (u, v, z) = orthographic_project(p, cam);
            let (mu, mv) = map_coords(u, v, cam, hr);
            bilinear_sample_into(hr, mu, mv, &mut row[..ch]);
            codes.query_into(p, &mut row[ch..ch + cw]);
            row[ch + cw] = cam.normalized_depth(z);
            mlp.eval(&row, &mut scratch)
        })
        .collect())
}

/// Per-query record for the reverse pass of [`predict_sdf`].
#[derive(Clone, Debug)]
pub struct QueryTape {
    uv: Vec<(f64, f64)>,
    taps: Vec<CodeTaps>,
    mlp: MlpTape,
}

pub fn predict_sdf_tape(
    points: &[Vec3],
    hr: &VectorImage,
    codes: &MultiScaleCodes,
    cam: &OrthoCamera,
    mlp: &Mlp,
) -> Result<(Vec<f64>, QueryTape)> {
    check_head(hr, codes, mlp)?;
    let (ch, cw) = (hr.channels, codes.width());
    let w = ch + cw + 1;
    let mut x = vec![0.0; points.len() * w];
    let mut uv = Vec::with_capacity(points.len());
    let mut taps = Vec::with_capacity(points.len());
    for (p, row) in points.iter().zip(x.chunks_mut(w)) {
        let (u, v, z) = orthographic_project(p, cam);
        let (mu, mv) = map_coords(u, v, cam, hr);
        bilinear_sample_into(hr, mu, mv, &mut row[..ch]);
        let t = codes.taps(p);
        codes.gather(&t, &mut row[ch..ch + cw]);
        row[ch + cw] = cam.normalized_depth(z);
        uv.push((mu, mv));
        taps.push(t);
    }
    let (y, mt) = mlp.forward_tape(x, points.len());
    Ok((y, QueryTape { uv, taps, mlp: mt }))
}

/// Reverse pass of [`predict_sdf_tape`]: accumulates MLP gradients into
/// `grad_mlp`, HR-map gradients into `grad_hr` and code gradients into
/// `grad_codes` (one buffer per volume).
pub fn predict_sdf_backward(
    tape: &QueryTape,
    gy: &[f64],
    codes: &MultiScaleCodes,
    mlp: &Mlp,
    grad_mlp: &mut Mlp,
    grad_hr: &mut VectorImage,
    grad_codes: &mut [Vec<f64>],
) {
    let gx = mlp.backward(&tape.mlp, gy, grad_mlp);
    let (ch, cw) = (grad_hr.channels, codes.width());
    for ((row, &(mu, mv)), t) in gx.chunks(ch + cw + 1).zip(&tape.uv).zip(&tape.taps) {
        bilinear_scatter(grad_hr, mu, mv, &row[..ch]);
        codes.scatter(t, &row[ch..ch + cw], grad_codes);
    }
}

/// Image features and code volumes for one RGB-D view.
#[derive(Clone, Debug)]
pub struct Encoded {
    pub cam: OrthoCamera,
    pub lr: VectorImage,
    pub hr: VectorImage,
    pub codes: MultiScaleCodes,
    pub sites: Vec<Site>,
    tape: Option<EncodeTape>,
}

#[derive(Clone, Debug)]
struct EncodeTape {
    lr: FeTape,
    hr: FeTape,
    vfe: VfeTape,
}

impl ReconModel {
    /// Runs both feature extractors, voxelizes the depth points (voxel grid
    /// anchored at the camera center) and runs the VFE.
    pub fn encode(
        &self,
        rgb: &VectorImage,
        normals: &VectorImage,
        depth_points: &PointCloud,
        cam: &OrthoCamera,
    ) -> Result<Encoded> {
        self.encode_impl(rgb, normals, depth_points, cam, false)
    }

    /// Like [`ReconModel::encode`] but keeps what [`ReconModel::backward`] needs.
    pub fn encode_tape(
        &self,
        rgb: &VectorImage,
        normals: &VectorImage,
        depth_points: &PointCloud,
        cam: &OrthoCamera,
    ) -> Result<Encoded> {
        self.encode_impl(rgb, normals, depth_points, cam, true)
    }

    fn encode_impl(
        &self,
        rgb: &VectorImage,
        normals: &VectorImage,
        depth_points: &PointCloud,
        cam: &OrthoCamera,
        keep: bool,
    ) -> Result<Encoded> {
        self.check()?;
        if (rgb.width, rgb.height) != (cam.image_w, cam.image_h) {
            return arg(format!(
                "image is {}x{} but camera expects {}x{}",
                rgb.width, rgb.height, cam.image_w, cam.image_h
            ));
        }
        let x = image_input(rgb, normals)?;
        let (lr, lr_tape) = self.lr_fe.forward_tape(&x);
        let (hr, hr_tape) = self.hr_fe.forward_tape(&x);
        let c = &self.config;
        let origin = cam.center();
        let sites = voxelize(depth_points, c.voxel_size, origin)?;
        let voxels = if c.random_features {
            build_sparse_random(&sites, c.lr_width, c.random_feature_seed)?
        } else {
            build_sparse(&sites, &lr, cam, c.voxel_size, origin)?
        };
        let out = vfe_forward(&voxels, &self.vfe)?;
        let codes = MultiScaleCodes::new(out.codes, c.voxel_size, origin)?;
        let tape = keep.then(|| EncodeTape { lr: lr_tape, hr: hr_tape, vfe: out.tape });
        Ok(Encoded { cam: cam.clone(), lr, hr, codes, sites, tape })
    }

    pub fn predict(&self, enc: &Encoded, points: &[Vec3]) -> Result<Vec<f64>> {
        predict_sdf(points, &enc.hr, &enc.codes, &enc.cam, &self.mlp)
    }

    pub fn predict_tape(&self, enc: &Encoded, points: &[Vec3]) -> Result<(Vec<f64>, QueryTape)> {
        predict_sdf_tape(points, &enc.hr, &enc.codes, &enc.cam, &self.mlp)
    }

    /// Gradient of `sum_i <gy_i, prediction_i>` over several query batches
    /// against one encoding, with respect to every model parameter.
    pub fn backward(&self, enc: &Encoded, queries: &[(&QueryTape, &[f64])]) -> Result<ReconModel> {
        let tape = enc
            .tape
            .as_ref()
            .ok_or_else(|| crate::Error::State("encoding was made without a tape".into()))?;
        let mut grad = self.zeros_like();
        let mut g_hr = VectorImage::zeros(enc.hr.width, enc.hr.height, enc.hr.channels);
        let mut g_codes: Vec<Vec<f64>> = enc.codes.volumes.iter().map(|v| vec![0.0; v.features.len()]).collect();
        for (qt, gy) in queries {
            predict_sdf_backward(qt, gy, &enc.codes, &self.mlp, &mut grad.mlp, &mut g_hr, &mut g_codes);
        }
        let (vfe_grad, g_voxels) = vfe_backward(&self.vfe, &tape.vfe, &g_codes);
        grad.vfe = vfe_grad;
        if !self.config.random_features {
            let mut g_lr = VectorImage::zeros(enc.lr.width, enc.lr.height, enc.lr.channels);
            let c = &self.config;
            build_sparse_backward(&enc.sites, &g_voxels, &mut g_lr, &enc.cam, c.voxel_size, enc.cam.center());
            self.lr_fe.backward(&tape.lr, &g_lr, &mut grad.lr_fe);
        }
        self.hr_fe.backward(&tape.hr, &g_hr, &mut grad.hr_fe);
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy_config() -> ModelConfig {
        ModelConfig {
            lr_width: 3,
            hr_width: 2,
            vfe_base: 1,
            stacks: 1,
            mlp_hidden: vec![6, 4],
            voxel_size: 0.1,
            ..ModelConfig::default()
        }
    }

    struct View {
        rgb: VectorImage,
        normals: VectorImage,
        cam: OrthoCamera,
        pc: PointCloud,
    }

    /// Small orthographic view of a sphere of radius 0.4 at the origin.
    fn view(rng: &mut crate::Rng, n: usize) -> View {
        let cam = OrthoCamera::axis_aligned(Vec3::new(0.0, 0.0, -2.0), 1.0 / n as f64, n, n, 0.5, 3.5).unwrap();
        let mut rgb = VectorImage::zeros(n, n, 3);
        let mut normals = VectorImage::zeros(n, n, 3);
        let mut pts = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let p = cam.unproject(i as f64 + 0.5, j as f64 + 0.5, 0.0);
                let r2 = p.x * p.x + p.y * p.y;
                if r2 < 0.16 {
                    let z = -(0.16 - r2).sqrt();
                    let s = Vec3::new(p.x, p.y, z);
                    pts.push(s);
                    normals.pixel_mut(i, j).copy_from_slice((s / 0.4).as_slice());
                    for c in rgb.pixel_mut(i, j) {
                        *c = rng.gen_range(0.2..0.9);
                    }
                }
            }
        }
        View { rgb, normals, cam, pc: PointCloud::new(pts) }
    }

    #[test]
    fn mlp_input_composition() {
        assert_eq!(ModelConfig::full_scale().mlp_input(), 369);
        let m = ReconModel::new(ModelConfig::full_scale(), 0).unwrap();
        assert_eq!(m.mlp.input_width(), 369);
        let widths: Vec<usize> = m.mlp.layers.iter().map(|l| l.n_out).collect();
        assert_eq!(widths, vec![512, 256, 128, 1]);
        assert!(m.check().is_ok());
    }

    #[test]
    fn feature_map_shapes() {
        let mut rng = crate::rng_from_seed(1);
        let v = view(&mut rng, 16);
        let m = ReconModel::new(toy_config(), 1).unwrap();
        let (lr, hr) = extract_features(&v.rgb, &v.normals, &m).unwrap();
        assert_eq!((lr.width, lr.height, lr.channels), (8, 8, 3));
        assert_eq!((hr.width, hr.height, hr.channels), (16, 16, 2));
        let bad = VectorImage::zeros(8, 16, 3);
        assert!(extract_features(&bad, &v.normals, &m).is_err());
    }

    #[test]
    fn zero_model_predicts_zero() {
        let mut rng = crate::rng_from_seed(2);
        let v = view(&mut rng, 12);
        let m = ReconModel::zeros(toy_config()).unwrap();
        let (lr, hr) = extract_features(&v.rgb, &v.normals, &m).unwrap();
        assert!(lr.data.iter().chain(&hr.data).all(|x| *x == 0.0));
        let enc = m.encode(&v.rgb, &v.normals, &v.pc, &v.cam).unwrap();
        assert!(m.predict(&enc, &v.pc.points).unwrap().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn identical_points_identical_outputs() {
        let mut rng = crate::rng_from_seed(3);
        let v = view(&mut rng, 12);
        let m = ReconModel::new(toy_config(), 3).unwrap();
        let enc = m.encode(&v.rgb, &v.normals, &v.pc, &v.cam).unwrap();
        let p = v.pc.points[5];
        let out = m.predict(&enc, &[p, p]).unwrap();
        assert_eq!(out[0].to_bits(), out[1].to_bits());
        let again = m.encode(&v.rgb, &v.normals, &v.pc, &v.cam).unwrap();
        assert_eq!(m.predict(&again, &[p]).unwrap()[0].to_bits(), out[0].to_bits());
    }

    #[test]
    fn tape_and_plain_predictions_agree() {
        let mut rng = crate::rng_from_seed(4);
        let v = view(&mut rng, 12);
        let m = ReconModel::new(toy_config(), 4).unwrap();
        let enc = m.encode_tape(&v.rgb, &v.normals, &v.pc, &v.cam).unwrap();
        let pts: Vec<Vec3> = (0..30).map(|_| Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))).collect();
        let a = m.predict(&enc, &pts).unwrap();
        let (b, _) = m.predict_tape(&enc, &pts).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn translation_consistent() {
        let mut rng = crate::rng_from_seed(5);
        let v = view(&mut rng, 12);
        let m = ReconModel::new(toy_config(), 5).unwrap();
        let pts: Vec<Vec3> = (0..50).map(|_| Vec3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5))).collect();
        let enc = m.encode(&v.rgb, &v.normals, &v.pc, &v.cam).unwrap();
        let base = m.predict(&enc, &pts).unwrap();
        let t = Vec3::new(0.3125, -0.75, 1.5);
        let cam = v.cam.translated(t);
        let pc = PointCloud::new(v.pc.points.iter().map(|p| p + t).collect());
        let moved: Vec<Vec3> = pts.iter().map(|p| p + t).collect();
        let enc2 = m.encode(&v.rgb, &v.normals, &pc, &cam).unwrap();
        assert_eq!(enc.sites, enc2.sites);
        for (a, b) in base.iter().zip(m.predict(&enc2, &moved).unwrap()) {
            assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn param_views_cover_every_tensor_once() {
        let mut m = ReconModel::new(toy_config(), 6).unwrap();
        let views = m.param_views();
        let mut names: Vec<&str> = views.iter().map(|v| v.name.as_str()).collect();
        let n = names.len();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), n);
        assert!(views.iter().all(|v| v.dims.iter().product::<u32>() as usize == v.data.len()));
        // stem + 4 convs per stack, two extractors; 28 VFE layers; 3 MLP layers
        assert_eq!(n, 2 * (2 * 5) + 2 * 28 + 2 * 3);
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        let mut rng = crate::rng_from_seed(7);
        let v = view(&mut rng, 10);
        let mut m = ReconModel::new(toy_config(), 7).unwrap();
        for p in m.param_views() {
            if p.name.ends_with("bias") {
                p.data.iter_mut().for_each(|b| *b = 0.05);
            }
        }
        let pts: Vec<Vec3> = (0..40).map(|_| Vec3::new(rng.gen_range(-0.45..0.45), rng.gen_range(-0.45..0.45), rng.gen_range(-0.45..0.2))).collect();
        let gy: Vec<f64> = (0..pts.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |m: &ReconModel| -> f64 {
            let enc = m.encode(&v.rgb, &v.normals, &v.pc, &v.cam).unwrap();
            m.predict(&enc, &pts).unwrap().iter().zip(&gy).map(|(a, b)| a * b).sum()
        };
        let enc = m.encode_tape(&v.rgb, &v.normals, &v.pc, &v.cam).unwrap();
        let (_, qt) = m.predict_tape(&enc, &pts).unwrap();
        let mut grad = m.backward(&enc, &[(&qt, &gy)]).unwrap();
        let grads: Vec<(String, Vec<f64>)> = grad.param_views().into_iter().map(|p| (p.name, p.data.clone())).collect();
        let n_tensors = grads.len();
        let mut seen = std::collections::BTreeSet::new();
        let mut checked = 0;
        let mut attempts = 0;
        while checked < 24 && attempts < 2000 {
            attempts += 1;
            let ti = rng.gen_range(0..n_tensors);
            let k = rng.gen_range(0..grads[ti].1.len());
            let an = grads[ti].1[k];
            let (mut p, mut q) = (m.clone(), m.clone());
            p.param_views()[ti].data[k] += 1e-6;
            q.param_views()[ti].data[k] -= 1e-6;
            let fd = (loss(&p) - loss(&q)) / 2e-6;
            if fd.abs() < 1e-9 && an.abs() < 1e-9 {
                continue;
            }
            assert!((fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()), "{} [{k}]: fd {fd} an {an}", grads[ti].0);
            seen.insert(grads[ti].0.split('.').next().unwrap().to_string());
            checked += 1;
        }
        assert_eq!(checked, 24);
        for part in ["lr_fe", "hr_fe", "vfe", "mlp"] {
            assert!(seen.contains(part), "no nonzero gradient checked in {part}: {seen:?}");
        }
    }
}
