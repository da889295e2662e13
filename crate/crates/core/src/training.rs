//! Huber losses, the end-to-end training step, Adam and checkpoints.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::geometry::{depth_to_points, OrthoCamera, PointCloud, ScalarImage, VectorImage};
use crate::io::{Archive, Tensor};
use crate::nets::{ModelConfig, ReconModel};
use crate::sampling::{LabeledPointSet, PointTag};

/// Quadratic below `delta`, linear above, C1 at the seam.
#[inline]
pub fn huber(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a < delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

#[inline]
fn huber_grad(r: f64, delta: f64) -> f64 {
    if r.abs() < delta {
        r
    } else {
        delta * r.signum()
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return arg(format!("huber delta must be positive, got {delta}"));
    }
    Ok(())
}

/// Mean Huber loss of `pred - gt`.
pub fn loss_sdf(pred: &[f64], gt: &[f64], delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if pred.len() != gt.len() {
        return arg(format!("{} predictions for {} labels", pred.len(), gt.len()));
    }
    if pred.is_empty() {
        return arg("sdf loss needs at least one point");
    }
    Ok(pred.iter().zip(gt).map(|(p, g)| huber(p - g, delta)).sum::<f64>() / pred.len() as f64)
}

/// Mean Huber loss pulling predictions at on-surface points to zero; an
/// empty batch contributes nothing.
pub fn loss_depth(pred: &[f64], delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    Ok(pred.iter().map(|p| huber(*p, delta)).sum::<f64>() / pred.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub delta: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Body points drawn per step; 0 uses every point.
    pub batch_points: usize,
    pub iterations: usize,
    pub seed: u64,
    pub depth_loss_weight: f64,
    /// Checkpoint period in steps; 0 writes only the final one.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            delta: 1.25,
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_points: 0,
            iterations: 500,
            seed: 0,
            depth_loss_weight: 1.0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        check_delta(self.delta)?;
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return arg(format!("learning rate must be non-negative, got {}", self.lr));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return arg("adam betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return arg("adam eps must be positive");
        }
        if !(self.depth_loss_weight >= 0.0 && self.depth_loss_weight.is_finite()) {
            return arg(format!("depth_loss_weight must be non-negative, got {}", self.depth_loss_weight));
        }
        Ok(())
    }
}

/// One RGB-D view with its supervision: labeled body points and on-surface
/// depth points. The voxel codes are built from every valid depth pixel.
#[derive(Clone, Debug)]
pub struct SceneSample {
    pub rgb: VectorImage,
    pub normals: VectorImage,
    pub depth: ScalarImage,
    pub cam: OrthoCamera,
    pub depth_points: PointCloud,
    pub body: LabeledPointSet,
    pub zeta: LabeledPointSet,
}

impl SceneSample {
    pub fn new(
        rgb: VectorImage,
        normals: VectorImage,
        depth: ScalarImage,
        cam: OrthoCamera,
        body: LabeledPointSet,
        zeta: LabeledPointSet,
    ) -> Result<Self> {
        cam.validate()?;
        let dims = [(rgb.width, rgb.height), (normals.width, normals.height), (depth.width, depth.height)];
        if dims.iter().any(|d| *d != (cam.image_w, cam.image_h)) {
            return arg(format!("scene images do not all match the {}x{} camera", cam.image_w, cam.image_h));
        }
        if body.is_empty() {
            return arg("scene has no body points");
        }
        if zeta.tag.iter().any(|t| *t != PointTag::DepthSurface) {
            return arg("depth-supervision points must be tagged depth_surface");
        }
        let depth_points = depth_to_points(&depth, &cam)?;
        if depth_points.is_empty() {
            return arg("depth map has no valid pixels");
        }
        Ok(Self { rgb, normals, depth, cam, depth_points, body, zeta })
    }
}

/// Adam moments, one buffer per parameter tensor in `param_views` order.
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    pub fn new(model: &mut ReconModel) -> Self {
        let zeros: Vec<Vec<f64>> = model.param_views().iter().map(|p| vec![0.0; p.data.len()]).collect();
        Self { m: zeros.clone(), v: zeros, t: 0 }
    }

    pub fn step(&mut self, model: &mut ReconModel, grad: &mut ReconModel, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        let params = model.param_views();
        let grads = grad.param_views();
        for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for k in 0..p.data.len() {
                let gk = g.data[k];
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                p.data[k] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepLosses {
    pub l_sdf: f64,
    pub l_depth: f64,
    pub total: f64,
}

/// Total loss and its gradient for one scene, without updating anything.
pub fn loss_and_grad(model: &ReconModel, scene: &SceneSample, body: &LabeledPointSet, cfg: &TrainConfig) -> Result<(StepLosses, ReconModel)> {
    let enc = model.encode_tape(&scene.rgb, &scene.normals, &scene.depth_points, &scene.cam)?;
    let (pred, body_tape) = model.predict_tape(&enc, &body.points)?;
    let l_sdf = loss_sdf(&pred, &body.sdf, cfg.delta)?;
    let n = pred.len() as f64;
    let g_body: Vec<f64> = pred.iter().zip(&body.sdf).map(|(p, g)| huber_grad(p - g, cfg.delta) / n).collect();
    let (pz, zeta_tape) = model.predict_tape(&enc, &scene.zeta.points)?;
    let l_depth = loss_depth(&pz, cfg.delta)?;
    let total = l_sdf + cfg.depth_loss_weight * l_depth;
    if !total.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss: l_sdf {l_sdf}, l_depth {l_depth}")));
    }
    let mut queries: Vec<(&_, &[f64])> = vec![(&body_tape, &g_body)];
    let g_zeta: Vec<f64>;
    if cfg.depth_loss_weight > 0.0 && !pz.is_empty() {
        let w = cfg.depth_loss_weight / pz.len() as f64;
        g_zeta = pz.iter().map(|p| w * huber_grad(*p, cfg.delta)).collect();
        queries.push((&zeta_tape, &g_zeta));
    }
    let grad = model.backward(&enc, &queries)?;
    Ok((StepLosses { l_sdf, l_depth, total }, grad))
}

fn step_batch(scene: &SceneSample, cfg: &TrainConfig, step: usize) -> LabeledPointSet {
    if cfg.batch_points == 0 || cfg.batch_points >= scene.body.len() {
        return scene.body.clone();
    }
    let seed = cfg.seed ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    scene.body.subsample(cfg.batch_points, seed)
}

/// Forward, backward and one Adam update. `step` counts from 1.
pub fn train_step(
    model: &mut ReconModel,
    adam: &mut Adam,
    scene: &SceneSample,
    cfg: &TrainConfig,
    step: usize,
) -> Result<StepLosses> {
    let body = step_batch(scene, cfg, step);
    let (losses, mut grad) = loss_and_grad(model, scene, &body, cfg)?;
    adam.step(model, &mut grad, cfg);
    Ok(losses)
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub l_sdf: f64,
    pub l_depth: f64,
    pub wall_s: f64,
}

impl LogRecord {
    pub fn to_line(&self) -> String {
        format!("step = {}, l_sdf = {:e}, l_depth = {:e}, wall_s = {:.3}", self.step, self.l_sdf, self.l_depth, self.wall_s)
    }
}

/// Runs `cfg.iterations` steps, calling `after_step` with every record.
pub fn train(
    model: &mut ReconModel,
    scene: &SceneSample,
    cfg: &TrainConfig,
    mut after_step: impl FnMut(&LogRecord, &ReconModel) -> Result<()>,
) -> Result<Vec<LogRecord>> {
    cfg.validate()?;
    let mut adam = Adam::new(model);
    let start = Instant::now();
    let mut log = Vec::with_capacity(cfg.iterations);
    for step in 1..=cfg.iterations {
        let l = train_step(model, &mut adam, scene, cfg, step)?;
        let rec = LogRecord { step, l_sdf: l.l_sdf, l_depth: l.l_depth, wall_s: start.elapsed().as_secs_f64() };
        after_step(&rec, model)?;
        log.push(rec);
    }
    Ok(log)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointHeader {
    step: usize,
    model: ModelConfig,
}

/// Model parameters as float64 tensors named after `param_views`, with the
/// architecture in the archive header.
pub fn checkpoint_archive(model: &ReconModel, step: usize) -> Result<Archive> {
    let header = CheckpointHeader { step, model: model.config.clone() };
    let mut archive = Archive::new(toml::to_string(&header).map_err(|e| Error::Format(e.to_string()))?);
    let mut m = model.clone();
    for p in m.param_views() {
        archive.push(p.name, Tensor::f64(p.dims, p.data.clone())?);
    }
    Ok(archive)
}

pub fn model_from_archive(archive: &Archive) -> Result<(ReconModel, usize)> {
    let header: CheckpointHeader =
        toml::from_str(&archive.header).map_err(|e| Error::Format(format!("checkpoint header: {e}")))?;
    let mut model = ReconModel::zeros(header.model)?;
    for p in model.param_views() {
        let t = archive.get(&p.name)?;
        t.expect_dims(&p.dims)?;
        *p.data = t.to_f64()?;
    }
    model.check().map_err(|e| Error::Format(e.to_string()))?;
    Ok((model, header.step))
}

pub fn save_checkpoint(model: &ReconModel, step: usize, path: impl AsRef<Path>) -> Result<()> {
    checkpoint_archive(model, step)?.write(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ReconModel, usize)> {
    model_from_archive(&Archive::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{sample_baseline, select_depth_points};
    use crate::scene::{generate, RenderParams, SceneKind, ShapeParams};
    use rand::Rng;

    #[test]
    fn huber_values() {
        assert_eq!(huber(0.0, 1.25), 0.0);
        assert_eq!(huber(2.0, 1.25), 1.71875);
        assert_eq!(huber(-2.0, 1.25), 1.71875);
        assert_eq!(huber(1.0, 1.25), 0.5);
        let d = 1.25;
        assert!((huber(d - 1e-6, d) - huber(d + 1e-6, d)).abs() < 1e-5);
        // slopes meet at the seam
        assert!((huber_grad(d - 1e-12, d) - huber_grad(d + 1e-12, d)).abs() < 1e-9);
    }

    #[test]
    fn losses() {
        assert_eq!(loss_sdf(&[0.0, 2.0], &[0.0, 0.0], 1.25).unwrap(), 0.859375);
        assert_eq!(loss_sdf(&[0.3, -0.2], &[0.3, -0.2], 1.25).unwrap(), 0.0);
        assert!(loss_sdf(&[], &[], 1.25).is_err());
        assert!(loss_sdf(&[1.0], &[], 1.25).is_err());
        assert_eq!(loss_depth(&[], 1.25).unwrap(), 0.0);
        assert_eq!(loss_depth(&[1.0], 1.25).unwrap(), 0.5);
        assert_eq!(loss_depth(&[0.0, 0.0], 1.25).unwrap(), 0.0);
        assert!(loss_depth(&[1e-9], 1.25).unwrap() > 0.0);
        assert!(loss_depth(&[1.0], 0.0).is_err());
    }

    #[test]
    fn loss_sdf_matches_elementwise_sum() {
        let mut rng = crate::rng_from_seed(1);
        let p: Vec<f64> = (0..100).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let g: Vec<f64> = (0..100).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mut s = 0.0;
        for i in 0..100 {
            let r: f64 = p[i] - g[i];
            s += if r.abs() < 1.25 { 0.5 * r * r } else { 1.25 * (r.abs() - 0.625) };
        }
        assert!((loss_sdf(&p, &g, 1.25).unwrap() - s / 100.0).abs() < 1e-12);
    }

    fn toy_model() -> ModelConfig {
        ModelConfig { lr_width: 3, hr_width: 3, vfe_base: 1, stacks: 1, mlp_hidden: vec![8, 4], voxel_size: 0.125, ..ModelConfig::default() }
    }

    fn toy_scene(res: usize) -> SceneSample {
        let shape = ShapeParams { kind: SceneKind::Capsule, mesh_cells: 24, ..ShapeParams::default() };
        let s = generate(&shape, &RenderParams { resolution: res, ..RenderParams::default() }, 100.0, 0).unwrap();
        let v = s.views[0].clone();
        let body = sample_baseline(&s.mesh, 200, 0.05, 1.0 / 16.0, 1).unwrap();
        let pc = depth_to_points(&v.depth, &v.cam).unwrap();
        let zeta = select_depth_points(&pc, 50, 2).unwrap();
        SceneSample::new(v.rgb, v.normals, v.depth, v.cam, body, zeta).unwrap()
    }

    #[test]
    fn zero_lr_keeps_parameters() {
        let scene = toy_scene(16);
        let mut m = ReconModel::new(toy_model(), 1).unwrap();
        let before = m.clone();
        let cfg = TrainConfig { lr: 0.0, ..TrainConfig::default() };
        let mut adam = Adam::new(&mut m);
        train_step(&mut m, &mut adam, &scene, &cfg, 1).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn step_is_reproducible() {
        let scene = toy_scene(16);
        let cfg = TrainConfig { lr: 1e-3, batch_points: 64, ..TrainConfig::default() };
        let run = || {
            let mut m = ReconModel::new(toy_model(), 2).unwrap();
            let mut adam = Adam::new(&mut m);
            let l = train_step(&mut m, &mut adam, &scene, &cfg, 1).unwrap();
            (m, l)
        };
        let (a, la) = run();
        let (b, lb) = run();
        assert_eq!(a, b);
        assert_eq!(la.total.to_bits(), lb.total.to_bits());
    }

    #[test]
    fn total_loss_gradient_matches_finite_differences() {
        let scene = toy_scene(12);
        let mut m = ReconModel::new(toy_model(), 3).unwrap();
        for p in m.param_views() {
            if p.name.ends_with("bias") {
                p.data.iter_mut().for_each(|b| *b = 0.05);
            }
        }
        let cfg = TrainConfig { depth_loss_weight: 0.7, ..TrainConfig::default() };
        let (_, mut grad) = loss_and_grad(&m, &scene, &scene.body, &cfg).unwrap();
        let grads: Vec<Vec<f64>> = grad.param_views().into_iter().map(|p| p.data.clone()).collect();
        let total = |m: &ReconModel| loss_and_grad(m, &scene, &scene.body, &cfg).unwrap().0.total;
        let mut rng = crate::rng_from_seed(4);
        let (mut checked, mut attempts) = (0, 0);
        while checked < 20 && attempts < 2000 {
            attempts += 1;
            let ti = rng.gen_range(0..grads.len());
            let k = rng.gen_range(0..grads[ti].len());
            let an = grads[ti][k];
            let (mut p, mut q) = (m.clone(), m.clone());
            p.param_views()[ti].data[k] += 1e-6;
            q.param_views()[ti].data[k] -= 1e-6;
            let fd = (total(&p) - total(&q)) / 2e-6;
            if fd.abs() < 1e-9 && an.abs() < 1e-9 {
                continue;
            }
            assert!((fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()), "tensor {ti} [{k}]: fd {fd} an {an}");
            checked += 1;
        }
        assert_eq!(checked, 20);
    }

    #[test]
    fn depth_weight_zero_ignores_zeta() {
        let scene = toy_scene(16);
        let mut other = scene.clone();
        let pc = depth_to_points(&scene.depth, &scene.cam).unwrap();
        other.zeta = select_depth_points(&pc, 50, 99).unwrap();
        let cfg = TrainConfig { lr: 1e-3, depth_loss_weight: 0.0, iterations: 3, ..TrainConfig::default() };
        let mut a = ReconModel::new(toy_model(), 5).unwrap();
        let mut b = a.clone();
        train(&mut a, &scene, &cfg, |_, _| Ok(())).unwrap();
        train(&mut b, &other, &cfg, |_, _| Ok(())).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let m = ReconModel::new(toy_model(), 6).unwrap();
        let archive = checkpoint_archive(&m, 17).unwrap();
        let bytes = archive.to_bytes();
        let (back, step) = model_from_archive(&Archive::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(step, 17);
        assert_eq!(back, m);
    }

    #[test]
    fn few_steps_reduce_loss() {
        let scene = toy_scene(16);
        let cfg = TrainConfig { lr: 3e-3, iterations: 30, ..TrainConfig::default() };
        let mut m = ReconModel::new(toy_model(), 7).unwrap();
        let log = train(&mut m, &scene, &cfg, |_, _| Ok(())).unwrap();
        assert!(log.last().unwrap().l_sdf < log[0].l_sdf);
    }

    #[test]
    fn scene_shape_checks() {
        let s = toy_scene(16);
        let bad = VectorImage::zeros(8, 16, 3);
        assert!(SceneSample::new(bad, s.normals.clone(), s.depth.clone(), s.cam.clone(), s.body.clone(), s.zeta.clone()).is_err());
        assert!(SceneSample::new(s.rgb.clone(), s.normals.clone(), s.depth.clone(), s.cam.clone(), LabeledPointSet::default(), s.zeta.clone()).is_err());
    }
}
