//! Batch command-line surface: genscene, sample, train, reconstruct,
//! evaluate. Every command is a function of its inputs, config and seed.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::error::{arg, Error, Result};
use crate::geometry::depth_to_points;
use crate::io::{read_obj, write_obj, Archive};
use crate::mesh::TriMesh;
use crate::metrics::{chamfer, normal_reprojection, p2s};
use crate::nets::ReconModel;
use crate::reconstruct::{evaluate_field, marching_cubes};
use crate::sampling::{sample_baseline, select_depth_points, semantic_augment, LabeledPointSet};
use crate::scene::{bounds_camera, generate, read_scene, write_scene, LoadedScene, SceneDescriptor, View};
use crate::training::{load_checkpoint, save_checkpoint, train, LogRecord, SceneSample};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

pub const SAMPLES_FILE: &str = "samples.tnsr";
pub const MODEL_FILE: &str = "model.tnsr";
pub const LOG_FILE: &str = "train.log";

#[derive(Parser, Debug)]
#[command(name = "voxpix", version, about = "Single-view RGB-D surface reconstruction toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Flat key = value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a procedural scene directory.
    Genscene {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write labeled body points and depth-surface points for a scene.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scene: PathBuf,
        /// Defaults to `<scene>/samples.tnsr`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model on one scene; writes checkpoints and a log into `--out`.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scene: PathBuf,
        /// Defaults to `<scene>/samples.tnsr`.
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Start from these weights instead of a fresh initialization.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Reconstruct a mesh from one view of a scene.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "m-resolution")]
        m_resolution: Option<usize>,
        /// Also dump the evaluated field as a TNSR tensor.
        #[arg(long)]
        field: Option<PathBuf>,
    },
    /// Compare a reconstruction with the ground-truth mesh.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        recon: PathBuf,
        /// Ground-truth mesh; defaults to the scene mesh.
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Supplies the ground truth, camera and centimeter scale.
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Metric record file; printed to standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Argument(_) | Error::Config(_) => EXIT_USAGE,
        Error::Io(_) | Error::Format(_) | Error::State(_) => EXIT_DATA,
        Error::Numeric(_) => EXIT_NUMERIC,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code, printing a one-line diagnostic on failure.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            eprintln!("{}", msg.lines().find(|l| !l.trim().is_empty()).unwrap_or("invalid arguments"));
            return EXIT_USAGE;
        }
    };
    match run(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            exit_code(&e)
        }
    }
}

fn load_config(common: &Common) -> Result<Config> {
    match &common.config {
        Some(p) => {
            if !p.exists() {
                return Err(Error::Config(format!("config file {} does not exist", p.display())));
            }
            Config::load(p)
        }
        None => Ok(Config::default()),
    }
}

pub fn run(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Genscene { common, out } => cmd_genscene(&load_config(common)?, common.seed, out).map(|_| ()),
        Command::Sample { common, scene, out } => {
            let out = out.clone().unwrap_or_else(|| scene.join(SAMPLES_FILE));
            cmd_sample(&load_config(common)?, common.seed, scene, &out).map(|_| ())
        }
        Command::Train { common, scene, samples, out, checkpoint } => {
            let samples = samples.clone().unwrap_or_else(|| scene.join(SAMPLES_FILE));
            cmd_train(&load_config(common)?, common.seed, scene, &samples, out, checkpoint.as_deref()).map(|_| ())
        }
        Command::Reconstruct { common, scene, checkpoint, out, m_resolution, field } => {
            let mut cfg = load_config(common)?;
            if let Some(m) = m_resolution {
                cfg.m_resolution = *m;
            }
            cmd_reconstruct(&cfg, common.seed, scene, checkpoint, out, field.as_deref()).map(|_| ())
        }
        Command::Evaluate { common, recon, gt, scene, out } => {
            let rec = cmd_evaluate(&load_config(common)?, common.seed, recon, gt.as_deref(), scene.as_deref())?;
            match out {
                Some(p) => std::fs::write(p, rec.to_line() + "\n")?,
                None => println!("{}", rec.to_line()),
            }
            Ok(())
        }
    }
}

pub fn cmd_genscene(cfg: &Config, seed: u64, out: &Path) -> Result<SceneDescriptor> {
    let rp = cfg.render();
    let scene = generate(&cfg.shape(), &rp, cfg.scale_to_cm, seed)?;
    let angles: Vec<f64> = (0..rp.views).map(|i| rp.first_angle_deg + i as f64 * rp.step_deg).collect();
    write_scene(&scene, out, &angles)
}

fn pick_view<'a>(scene: &'a LoadedScene, cfg: &Config) -> Result<&'a View> {
    scene.views.get(cfg.view_index).ok_or_else(|| {
        Error::Argument(format!("view_index {} but the scene has {} views", cfg.view_index, scene.views.len()))
    })
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SamplesHeader {
    seed: u64,
    view_index: usize,
    baseline: usize,
    appended: usize,
    body: usize,
    zeta: usize,
}

/// Body points (`body.*`) and depth-surface points (`zeta.*`) for one view.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    pub body: LabeledPointSet,
    pub zeta: LabeledPointSet,
}

pub fn cmd_sample(cfg: &Config, seed: u64, scene_dir: &Path, out: &Path) -> Result<Samples> {
    let scene = read_scene(scene_dir)?;
    let view = pick_view(&scene, cfg)?;
    let base = sample_baseline(&scene.mesh, cfg.x_b_points, cfg.sigma_lr_norm, cfg.uniform_fraction, seed)?;
    let augmented = semantic_augment(
        &base,
        &view.mask,
        &view.cam,
        &scene.mesh,
        cfg.sigma_hr_norm,
        cfg.n_k_steps,
        seed.wrapping_add(1),
    )?;
    let body = if cfg.x_t_points > 0 { augmented.subsample(cfg.x_t_points, seed.wrapping_add(2)) } else { augmented.clone() };
    let pc = depth_to_points(&view.depth, &view.cam)?;
    let zeta = select_depth_points(&pc, cfg.n_pc_points, seed.wrapping_add(3))?;
    let header = SamplesHeader {
        seed,
        view_index: cfg.view_index,
        baseline: base.len(),
        appended: augmented.len() - base.len(),
        body: body.len(),
        zeta: zeta.len(),
    };
    let mut archive = Archive::new(toml::to_string(&header).map_err(|e| Error::Format(e.to_string()))?);
    body.push_to(&mut archive, "body")?;
    zeta.push_to(&mut archive, "zeta")?;
    archive.write(out)?;
    Ok(Samples { body, zeta })
}

pub fn read_samples(path: &Path) -> Result<Samples> {
    let archive = Archive::read(path)?;
    Ok(Samples { body: LabeledPointSet::from_archive(&archive, "body")?, zeta: LabeledPointSet::from_archive(&archive, "zeta")? })
}

/// Training input for the configured view of a scene directory.
pub fn load_training_scene(cfg: &Config, scene_dir: &Path, samples: &Path) -> Result<SceneSample> {
    let scene = read_scene(scene_dir)?;
    let view = pick_view(&scene, cfg)?.clone();
    let s = read_samples(samples)?;
    SceneSample::new(view.rgb, view.normals, view.depth, view.cam, s.body, s.zeta)
}

pub fn checkpoint_name(step: usize) -> String {
    format!("ckpt_{step:06}.tnsr")
}

pub fn cmd_train(
    cfg: &Config,
    seed: u64,
    scene_dir: &Path,
    samples: &Path,
    out: &Path,
    init: Option<&Path>,
) -> Result<(ReconModel, Vec<LogRecord>)> {
    let scene = load_training_scene(cfg, scene_dir, samples)?;
    let tc = cfg.train(seed);
    tc.validate()?;
    let mut model = match init {
        Some(p) => load_checkpoint(p)?.0,
        None => ReconModel::new(cfg.model(seed), seed)?,
    };
    std::fs::create_dir_all(out)?;
    let mut log_text = String::new();
    let log = train(&mut model, &scene, &tc, |rec, m| {
        writeln!(log_text, "{}", rec.to_line()).expect("string write");
        if tc.checkpoint_every > 0 && rec.step % tc.checkpoint_every == 0 {
            save_checkpoint(m, rec.step, out.join(checkpoint_name(rec.step)))?;
        }
        Ok(())
    });
    // keep the records of completed steps even when a step fails
    std::fs::write(out.join(LOG_FILE), &log_text)?;
    let log = log?;
    save_checkpoint(&model, tc.iterations, out.join(MODEL_FILE))?;
    Ok((model, log))
}

pub fn cmd_reconstruct(
    cfg: &Config,
    seed: u64,
    scene_dir: &Path,
    checkpoint: &Path,
    out: &Path,
    field_out: Option<&Path>,
) -> Result<TriMesh> {
    let (model, _) = load_checkpoint(checkpoint)?;
    let scene = read_scene(scene_dir)?;
    let view = pick_view(&scene, cfg)?;
    let field = evaluate_field(&model, &view.rgb, &view.normals, &view.depth, &view.cam, cfg.m_resolution, &cfg.grid(seed))?;
    if let Some(p) = field_out {
        field.to_tensor()?.write(p)?;
    }
    let mesh = marching_cubes(&field, 0.0)?;
    write_obj(&mesh, out)?;
    Ok(mesh)
}

/// One evaluation record. Distances are reported in normalized units and
/// in centimeters.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub scene: String,
    pub scale_to_cm: f64,
    pub cd: f64,
    pub p2s: f64,
    pub normal: f64,
}

impl MetricRecord {
    pub fn to_line(&self) -> String {
        format!(
            "scene = {:?}, cd_norm = {:e}, p2s_norm = {:e}, cd_cm = {:e}, p2s_cm = {:e}, normal = {:e}",
            self.scene,
            self.cd,
            self.p2s,
            self.cd * self.scale_to_cm,
            self.p2s * self.scale_to_cm,
            self.normal
        )
    }
}

pub fn cmd_evaluate(cfg: &Config, seed: u64, recon: &Path, gt: Option<&Path>, scene_dir: Option<&Path>) -> Result<MetricRecord> {
    let recon_mesh = read_obj(recon)?;
    let (gt_mesh, cam, scale, name) = match (scene_dir, gt) {
        (Some(dir), gt) => {
            let scene = read_scene(dir)?;
            let cam = pick_view(&scene, cfg)?.cam.clone();
            let mesh = match gt {
                Some(p) => read_obj(p)?,
                None => scene.mesh,
            };
            let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            (mesh, cam, scene.descriptor.scale_to_cm, name)
        }
        (None, Some(p)) => {
            let mesh = read_obj(p)?;
            let (lo, hi) = mesh.bounds().ok_or_else(|| Error::Format("ground-truth mesh is empty".into()))?;
            let cam = bounds_camera(lo, hi, 0.0, cfg.normal_resolution_px)?;
            let name = p.file_stem().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            (mesh, cam, 1.0, name)
        }
        (None, None) => return arg("evaluate needs --scene or --gt"),
    };
    if recon_mesh.is_empty() {
        return Err(Error::Format(format!("{} has no triangles", recon.display())));
    }
    Ok(MetricRecord {
        scene: name,
        scale_to_cm: scale,
        cd: chamfer(&recon_mesh, &gt_mesh, cfg.eval_samples, seed)?,
        p2s: p2s(&recon_mesh, &gt_mesh, cfg.eval_samples, seed)?,
        normal: normal_reprojection(&recon_mesh, &gt_mesh, &cam, cfg.normal_resolution_px)?,
    })
}
