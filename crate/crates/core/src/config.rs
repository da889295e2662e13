//! Flat `key = value` run configuration shared by every command. Keys carry
//! their units (`_norm` for normalized scene units, `_px`, `_deg`, `_cm`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::ModelConfig;
use crate::reconstruct::{GridOptions, DEFAULT_CHUNK};
use crate::scene::{RenderParams, SceneKind, ShapeParams};
use crate::training::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scene_kind: SceneKind,
    pub body_height_norm: f64,
    pub capsule_length_norm: f64,
    pub capsule_radius_norm: f64,
    pub blend_radius_norm: f64,
    pub pose_jitter_deg: f64,
    pub mesh_cells: usize,
    pub render_resolution_px: usize,
    pub view_angle_deg: f64,
    pub view_count: usize,
    pub view_step_deg: f64,
    pub scale_to_cm: f64,
    /// View used by `sample`, `train`, `reconstruct` and `evaluate`.
    pub view_index: usize,

    pub x_b_points: usize,
    pub sigma_lr_norm: f64,
    pub sigma_hr_norm: f64,
    pub uniform_fraction: f64,
    pub n_k_steps: u32,
    /// Downsample target for the body points after augmentation; 0 keeps all.
    pub x_t_points: usize,
    pub n_pc_points: usize,

    pub lr_width: usize,
    pub hr_width: usize,
    pub vfe_base_width: usize,
    pub hourglass_stacks: usize,
    pub mlp_hidden: Vec<usize>,
    pub voxel_size_norm: f64,
    pub random_voxel_features: bool,

    pub huber_delta_norm: f64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_points: usize,
    pub iterations: usize,
    pub depth_loss_weight: f64,
    pub checkpoint_every: usize,

    pub m_resolution: usize,
    pub grid_jitter_sigma_norm: f64,
    pub grid_pad_norm: f64,
    pub chunk_points: usize,

    pub eval_samples: usize,
    pub normal_resolution_px: usize,
}

impl Default for Config {
    fn default() -> Self {
        let shape = ShapeParams::default();
        let model = ModelConfig::default();
        let train = TrainConfig::default();
        Self {
            scene_kind: shape.kind,
            body_height_norm: shape.body_height,
            capsule_length_norm: shape.capsule_length,
            capsule_radius_norm: shape.capsule_radius,
            blend_radius_norm: shape.blend,
            pose_jitter_deg: shape.pose_jitter_deg,
            mesh_cells: shape.mesh_cells,
            render_resolution_px: 512,
            view_angle_deg: 0.0,
            view_count: 1,
            view_step_deg: 2.0,
            scale_to_cm: 100.0,
            view_index: 0,
            x_b_points: 48_000,
            sigma_lr_norm: 0.05,
            sigma_hr_norm: 0.007,
            uniform_fraction: 1.0 / 16.0,
            n_k_steps: 2,
            x_t_points: 0,
            n_pc_points: 15_000,
            lr_width: model.lr_width,
            hr_width: model.hr_width,
            vfe_base_width: model.vfe_base,
            hourglass_stacks: model.stacks,
            mlp_hidden: model.mlp_hidden,
            voxel_size_norm: model.voxel_size,
            random_voxel_features: model.random_features,
            huber_delta_norm: train.delta,
            learning_rate: train.lr,
            adam_beta1: train.beta1,
            adam_beta2: train.beta2,
            adam_eps: train.eps,
            batch_points: train.batch_points,
            iterations: train.iterations,
            depth_loss_weight: train.depth_loss_weight,
            checkpoint_every: train.checkpoint_every,
            m_resolution: 256,
            grid_jitter_sigma_norm: 0.0,
            grid_pad_norm: 0.0,
            chunk_points: DEFAULT_CHUNK,
            eval_samples: crate::metrics::DEFAULT_SAMPLES,
            normal_resolution_px: crate::metrics::DEFAULT_NORMAL_RESOLUTION,
        }
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_text(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    pub fn shape(&self) -> ShapeParams {
        ShapeParams {
            kind: self.scene_kind,
            body_height: self.body_height_norm,
            capsule_length: self.capsule_length_norm,
            capsule_radius: self.capsule_radius_norm,
            blend: self.blend_radius_norm,
            pose_jitter_deg: self.pose_jitter_deg,
            mesh_cells: self.mesh_cells,
        }
    }

    pub fn render(&self) -> RenderParams {
        RenderParams {
            resolution: self.render_resolution_px,
            first_angle_deg: self.view_angle_deg,
            views: self.view_count,
            step_deg: self.view_step_deg,
        }
    }

    pub fn model(&self, seed: u64) -> ModelConfig {
        ModelConfig {
            lr_width: self.lr_width,
            hr_width: self.hr_width,
            vfe_base: self.vfe_base_width,
            stacks: self.hourglass_stacks,
            mlp_hidden: self.mlp_hidden.clone(),
            voxel_size: self.voxel_size_norm,
            random_features: self.random_voxel_features,
            random_feature_seed: seed,
        }
    }

    pub fn train(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            delta: self.huber_delta_norm,
            lr: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            batch_points: self.batch_points,
            iterations: self.iterations,
            seed,
            depth_loss_weight: self.depth_loss_weight,
            checkpoint_every: self.checkpoint_every,
        }
    }

    pub fn grid(&self, seed: u64) -> GridOptions {
        GridOptions { jitter_sigma: self.grid_jitter_sigma_norm, pad: self.grid_pad_norm, seed, chunk: self.chunk_points }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        assert_eq!(Config::parse(&c.to_text()).unwrap(), c);
        assert_eq!(Config::parse("").unwrap(), c);
    }

    #[test]
    fn recorded_defaults() {
        let c = Config::default();
        assert_eq!(c.sigma_lr_norm, 0.05);
        assert_eq!(c.sigma_hr_norm, 0.007);
        assert_eq!(c.uniform_fraction, 0.0625);
        assert_eq!(c.n_k_steps, 2);
        assert_eq!(c.x_b_points, 48_000);
        assert_eq!(c.n_pc_points, 15_000);
        assert_eq!(c.render_resolution_px, 512);
        assert_eq!((c.m_resolution, c.view_step_deg), (256, 2.0));
        let t = c.train(0);
        assert_eq!((t.delta, t.lr, t.beta1, t.beta2, t.eps, t.depth_loss_weight), (1.25, 1e-4, 0.9, 0.999, 1e-8, 1.0));
    }

    #[test]
    fn partial_override_and_unknown_keys() {
        let c = Config::parse("iterations = 7\nscene_kind = \"capsule\"\nmlp_hidden = [4, 2]\n").unwrap();
        assert_eq!(c.iterations, 7);
        assert_eq!(c.scene_kind, SceneKind::Capsule);
        assert_eq!(c.model(0).mlp_hidden, vec![4, 2]);
        assert!(matches!(Config::parse("no_such_key = 1"), Err(Error::Config(_))));
        assert!(matches!(Config::parse("iterations = \"many\""), Err(Error::Config(_))));
    }
}
