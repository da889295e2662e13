//! Procedural articulated-capsule figures, their meshes, orthographic
//! renders, analytic semantic masks and on-disk scene directories.

use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{arg, Error, Result};
use crate::geometry::{GridSpec, OrthoCamera, ScalarImage, VectorImage};
use crate::io::{self, read_obj, write_obj, Tensor};
use crate::mesh::TriMesh;
use crate::raster::rasterize;
use crate::reconstruct::{marching_cubes, ScalarField};
use crate::sampling::{MaskLabel, SemanticMask};
use crate::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneKind {
    /// Torso, neck, head, two-segment limbs and hand spheres.
    Body,
    /// A single upright capsule.
    Capsule,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Torso,
    Limb,
    Head,
    Hand,
}

impl Part {
    pub fn mask_label(self) -> MaskLabel {
        match self {
            Part::Head => MaskLabel::Face,
            Part::Hand => MaskLabel::Hand,
            Part::Torso | Part::Limb => MaskLabel::Body,
        }
    }

    fn albedo(self) -> [f64; 3] {
        match self {
            Part::Torso => [0.25, 0.35, 0.75],
            Part::Limb => [0.75, 0.55, 0.35],
            Part::Head => [0.95, 0.75, 0.6],
            Part::Hand => [0.9, 0.65, 0.5],
        }
    }
}

/// Segment `a`-`b` swept by a ball of radius `r`; a sphere when `a == b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Capsule {
    pub a: Vec3,
    pub b: Vec3,
    pub r: f64,
    pub part: Part,
}

impl Capsule {
    pub fn sdf(&self, p: &Vec3) -> f64 {
        let ab = self.b - self.a;
        let len2 = ab.norm_squared();
        let t = if len2 > 0.0 { ((p - self.a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
        (p - (self.a + ab * t)).norm() - self.r
    }
}

/// Shape parameters of a procedural scene, in normalized units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub kind: SceneKind,
    pub body_height: f64,
    pub capsule_length: f64,
    pub capsule_radius: f64,
    /// Smooth-union radius between body parts.
    pub blend: f64,
    /// Uniform seeded perturbation of limb angles, degrees.
    pub pose_jitter_deg: f64,
    /// Marching-cubes cells along the longest side of the figure.
    pub mesh_cells: usize,
}

impl Default for ShapeParams {
    fn default() -> Self {
        Self {
            kind: SceneKind::Body,
            body_height: 1.8,
            capsule_length: 1.0,
            capsule_radius: 0.3,
            blend: 0.03,
            pose_jitter_deg: 10.0,
            mesh_cells: 128,
        }
    }
}

impl ShapeParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("body_height", self.body_height),
            ("capsule_radius", self.capsule_radius),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return arg(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.capsule_length >= 0.0 && self.capsule_length.is_finite()) {
            return arg(format!("capsule_length must be non-negative, got {}", self.capsule_length));
        }
        if !(self.blend >= 0.0 && self.blend.is_finite()) {
            return arg(format!("blend must be non-negative, got {}", self.blend));
        }
        if !(0.0..=45.0).contains(&self.pose_jitter_deg) {
            return arg(format!("pose_jitter_deg must lie in [0, 45], got {}", self.pose_jitter_deg));
        }
        if self.mesh_cells < 8 {
            return arg(format!("mesh_cells must be at least 8, got {}", self.mesh_cells));
        }
        Ok(())
    }
}

/// Union of capsules under a polynomial smooth minimum, centered on the
/// origin.
#[derive(Clone, Debug, PartialEq)]
pub struct Figure {
    pub parts: Vec<Capsule>,
    pub blend: f64,
}

fn smooth_min(a: f64, b: f64, k: f64) -> f64 {
    if k <= 0.0 {
        return a.min(b);
    }
    let h = (k - (a - b).abs()).max(0.0) / k;
    a.min(b) - h * h * k / 4.0
}

impl Figure {
    pub fn build(params: &ShapeParams, seed: u64) -> Result<Self> {
        params.validate()?;
        let parts = match params.kind {
            SceneKind::Capsule => {
                let h = params.capsule_length / 2.0;
                vec![Capsule { a: Vec3::new(0.0, -h, 0.0), b: Vec3::new(0.0, h, 0.0), r: params.capsule_radius, part: Part::Torso }]
            }
            SceneKind::Body => body_parts(params, seed),
        };
        let mut fig = Self { parts, blend: params.blend };
        let (lo, hi) = fig.bounds();
        let c = (lo + hi) / 2.0;
        for p in &mut fig.parts {
            p.a -= c;
            p.b -= c;
        }
        Ok(fig)
    }

    pub fn sdf(&self, p: &Vec3) -> f64 {
        self.parts.iter().map(|c| c.sdf(p)).fold(f64::INFINITY, |acc, d| smooth_min(acc, d, self.blend))
    }

    /// Part whose capsule is closest to `p`.
    pub fn part_at(&self, p: &Vec3) -> Part {
        self.parts
            .iter()
            .map(|c| (c.sdf(p), c.part))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, part)| part)
            .unwrap_or(Part::Torso)
    }

    /// Box containing the zero set (smooth union never grows past the hard
    /// union by more than a quarter of the blend radius).
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for c in &self.parts {
            let r = Vec3::repeat(c.r + self.blend / 4.0);
            lo = lo.inf(&(c.a.inf(&c.b) - r));
            hi = hi.sup(&(c.a.sup(&c.b) + r));
        }
        (lo, hi)
    }

    /// Zero set extracted by marching cubes with `cells` along the longest
    /// side and two empty cells of margin.
    pub fn mesh(&self, cells: usize) -> Result<TriMesh> {
        let (lo, hi) = self.bounds();
        let spacing = (hi - lo).max() / cells as f64;
        let dims = [0, 1, 2].map(|a| ((hi[a] - lo[a]) / spacing).ceil() as usize + 4);
        let size = Vec3::new(dims[0] as f64, dims[1] as f64, dims[2] as f64) * spacing;
        let origin = (lo + hi) / 2.0 - size / 2.0;
        let field = ScalarField::from_fn(GridSpec::new(origin, spacing, dims)?, |p| self.sdf(p))?;
        marching_cubes(&field, 0.0)
    }
}

fn body_parts(params: &ShapeParams, seed: u64) -> Vec<Capsule> {
    let s = params.body_height / 1.8;
    let mut rng = crate::rng_from_seed(seed);
    let j = params.pose_jitter_deg;
    let mut jitter = move || if j > 0.0 { rng.gen_range(-j..=j).to_radians() } else { 0.0 };
    let v = |x: f64, y: f64, z: f64| Vec3::new(x, y, z) * s;
    let cap = |a: Vec3, b: Vec3, r: f64, part: Part| Capsule { a, b, r: r * s, part };
    let mut parts = vec![
        cap(v(0.0, -0.05, 0.0), v(0.0, 0.38, 0.0), 0.16, Part::Torso),
        cap(v(0.0, 0.45, 0.0), v(0.0, 0.58, 0.0), 0.05, Part::Limb),
        cap(v(0.0, 0.7, 0.0), v(0.0, 0.7, 0.0), 0.12, Part::Head),
    ];
    for side in [-1.0, 1.0] {
        // arm hangs away from the torso, elbow bent forward-down
        let shoulder = v(side * 0.2, 0.42, 0.0);
        let abd = 25f64.to_radians() + jitter();
        let upper = Vec3::new(side * abd.sin(), -abd.cos(), 0.0);
        let elbow = shoulder + upper * (0.28 * s);
        let bend = 15f64.to_radians() + jitter();
        let lower = Vec3::new(side * (abd + bend).sin(), -(abd + bend).cos(), 0.0);
        let wrist = elbow + lower * (0.25 * s);
        let hand = wrist + lower * (0.05 * s);
        parts.push(cap(shoulder, elbow, 0.055, Part::Limb));
        parts.push(cap(elbow, wrist, 0.045, Part::Limb));
        parts.push(cap(hand, hand, 0.06, Part::Hand));
        let hip = v(side * 0.09, -0.12, 0.0);
        let spread = 4f64.to_radians() + jitter() / 2.0;
        let thigh = Vec3::new(side * spread.sin(), -spread.cos(), 0.0);
        let knee = hip + thigh * (0.38 * s);
        let ankle = knee + Vec3::new(0.0, -1.0, 0.0) * (0.37 * s);
        parts.push(cap(hip, knee, 0.08, Part::Limb));
        parts.push(cap(knee, ankle, 0.06, Part::Limb));
    }
    parts
}

/// Camera orbiting the figure's vertical axis at `angle_deg`, framing its
/// bounding sphere with a small margin and a tight depth range.
pub fn framing_camera(fig: &Figure, angle_deg: f64, resolution: usize) -> Result<OrthoCamera> {
    let (lo, hi) = fig.bounds();
    bounds_camera(lo, hi, angle_deg, resolution)
}

/// Same framing for an arbitrary box.
pub fn bounds_camera(lo: Vec3, hi: Vec3, angle_deg: f64, resolution: usize) -> Result<OrthoCamera> {
    if resolution == 0 {
        return arg("render resolution must be positive");
    }
    let radius = (hi - lo).norm() / 2.0;
    let pixel_size = 2.0 * radius * 1.05 / resolution as f64;
    OrthoCamera::orbit((lo + hi) / 2.0, angle_deg, radius + 1.0, pixel_size, resolution, resolution, radius + 0.5)
}

/// One rendered view: flat-shaded RGB, camera depth, world normals (NaN on
/// background) and the semantic mask.
#[derive(Clone, Debug)]
pub struct View {
    pub cam: OrthoCamera,
    pub rgb: VectorImage,
    pub depth: ScalarImage,
    pub normals: VectorImage,
    pub mask: SemanticMask,
}

pub fn render(mesh: &TriMesh, fig: &Figure, cam: &OrthoCamera) -> Result<View> {
    let r = rasterize(mesh, cam);
    let (w, h) = (cam.image_w, cam.image_h);
    let mut rgb = VectorImage::zeros(w, h, 3);
    let mut labels = vec![MaskLabel::Background; w * h];
    // headlight tilted up and to the side
    let light = (-cam.forward() + cam.up() * 0.4 + cam.right() * 0.3).normalize();
    for y in 0..h {
        for x in 0..w {
            if !r.covered(x, y) {
                continue;
            }
            let p = cam.unproject(x as f64 + 0.5, y as f64 + 0.5, r.depth.get(x, y));
            let part = fig.part_at(&p);
            labels[y * w + x] = part.mask_label();
            let n = Vec3::from_column_slice(r.normals.pixel(x, y));
            let shade = 0.25 + 0.75 * n.dot(&light).max(0.0);
            let albedo = part.albedo();
            for (c, a) in rgb.pixel_mut(x, y).iter_mut().zip(albedo) {
                *c = a * shade;
            }
        }
    }
    Ok(View { cam: cam.clone(), rgb, depth: r.depth, normals: r.normals, mask: SemanticMask::new(w, h, labels)? })
}

/// Rendering and multi-view settings.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderParams {
    pub resolution: usize,
    pub first_angle_deg: f64,
    pub views: usize,
    /// Orbit step between consecutive views.
    pub step_deg: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self { resolution: 512, first_angle_deg: 0.0, views: 1, step_deg: 2.0 }
    }
}

/// A generated scene held in memory.
#[derive(Clone, Debug)]
pub struct Scene {
    pub figure: Figure,
    pub mesh: TriMesh,
    pub views: Vec<View>,
    pub scale_to_cm: f64,
}

pub fn generate(shape: &ShapeParams, render_params: &RenderParams, scale_to_cm: f64, seed: u64) -> Result<Scene> {
    if render_params.views == 0 {
        return arg("at least one view is required");
    }
    if !(scale_to_cm > 0.0 && scale_to_cm.is_finite()) {
        return arg(format!("scale_to_cm must be positive, got {scale_to_cm}"));
    }
    let figure = Figure::build(shape, seed)?;
    let mesh = figure.mesh(shape.mesh_cells)?;
    let views = (0..render_params.views)
        .map(|i| {
            let angle = render_params.first_angle_deg + i as f64 * render_params.step_deg;
            render(&mesh, &figure, &framing_camera(&figure, angle, render_params.resolution)?)
        })
        .collect::<Result<_>>()?;
    Ok(Scene { figure, mesh, views, scale_to_cm })
}

pub const SCENE_FILE: &str = "scene.cfg";

/// File names of one view inside a scene directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewEntry {
    pub angle_deg: f64,
    pub rgb: String,
    pub depth: String,
    pub normals: String,
    pub mask: String,
    pub camera: OrthoCamera,
}

/// Contents of `scene.cfg`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneDescriptor {
    pub mesh: String,
    pub scale_to_cm: f64,
    pub resolution: usize,
    pub views: Vec<ViewEntry>,
}

/// Writes mesh, per-view TNSR images and `scene.cfg` into `dir`.
pub fn write_scene(scene: &Scene, dir: &Path, angles: &[f64]) -> Result<SceneDescriptor> {
    if angles.len() != scene.views.len() {
        return arg("one angle per view is required");
    }
    std::fs::create_dir_all(dir)?;
    write_obj(&scene.mesh, dir.join("mesh.obj"))?;
    let mut entries = Vec::new();
    for (i, (view, angle)) in scene.views.iter().zip(angles).enumerate() {
        let name = |what: &str| format!("view{i:03}_{what}.tnsr");
        io::vector_image_tensor(&view.rgb)?.write(dir.join(name("rgb")))?;
        io::scalar_image_tensor(&view.depth)?.write(dir.join(name("depth")))?;
        io::vector_image_tensor(&view.normals)?.write(dir.join(name("normals")))?;
        view.mask.to_tensor()?.write(dir.join(name("mask")))?;
        entries.push(ViewEntry {
            angle_deg: *angle,
            rgb: name("rgb"),
            depth: name("depth"),
            normals: name("normals"),
            mask: name("mask"),
            camera: view.cam.clone(),
        });
    }
    let desc = SceneDescriptor {
        mesh: "mesh.obj".into(),
        scale_to_cm: scene.scale_to_cm,
        resolution: scene.views[0].cam.image_w,
        views: entries,
    };
    let text = toml::to_string(&desc).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(dir.join(SCENE_FILE), text)?;
    Ok(desc)
}

/// A scene directory loaded back from disk. Images carry float32 precision.
#[derive(Clone, Debug)]
pub struct LoadedScene {
    pub dir: PathBuf,
    pub descriptor: SceneDescriptor,
    pub mesh: TriMesh,
    pub views: Vec<View>,
}

pub fn read_scene(dir: &Path) -> Result<LoadedScene> {
    let text = std::fs::read_to_string(dir.join(SCENE_FILE))?;
    let descriptor: SceneDescriptor = toml::from_str(&text).map_err(|e| Error::Format(format!("{SCENE_FILE}: {e}")))?;
    if descriptor.views.is_empty() {
        return Err(Error::Format(format!("{SCENE_FILE} lists no views")));
    }
    let mesh = read_obj(dir.join(&descriptor.mesh))?;
    let views = descriptor.views.iter().map(|e| read_view(dir, e)).collect::<Result<_>>()?;
    Ok(LoadedScene { dir: dir.to_path_buf(), descriptor, mesh, views })
}

fn read_view(dir: &Path, e: &ViewEntry) -> Result<View> {
    e.camera.validate()?;
    let rgb = io::vector_image_from_tensor(&Tensor::read(dir.join(&e.rgb))?)?;
    let depth = io::scalar_image_from_tensor(&Tensor::read(dir.join(&e.depth))?)?;
    let normals = io::vector_image_from_tensor(&Tensor::read(dir.join(&e.normals))?)?;
    let mask = SemanticMask::from_tensor(&Tensor::read(dir.join(&e.mask))?)?;
    let (w, h) = (e.camera.image_w, e.camera.image_h);
    let sizes = [(rgb.width, rgb.height), (depth.width, depth.height), (normals.width, normals.height), (mask.width, mask.height)];
    if sizes.iter().any(|s| *s != (w, h)) || rgb.channels != 3 || normals.channels != 3 {
        return Err(Error::Format(format!("view images do not match the {w}x{h} camera")));
    }
    Ok(View { cam: e.camera.clone(), rgb, depth, normals, mask })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sdf_oracle::SdfOracle;

    fn small_body() -> ShapeParams {
        ShapeParams { mesh_cells: 64, ..ShapeParams::default() }
    }

    #[test]
    fn capsule_sdf_is_analytic() {
        let c = Capsule { a: Vec3::new(0.0, -1.0, 0.0), b: Vec3::new(0.0, 1.0, 0.0), r: 0.5, part: Part::Torso };
        assert!((c.sdf(&Vec3::new(2.0, 0.3, 0.0)) - 1.5).abs() < 1e-15);
        assert!((c.sdf(&Vec3::new(0.0, 3.0, 0.0)) - 1.5).abs() < 1e-15);
        assert!((c.sdf(&Vec3::zeros()) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn smooth_min_bounds() {
        assert_eq!(smooth_min(1.0, 3.0, 0.5), 1.0);
        let m = smooth_min(1.0, 1.0, 0.4);
        assert!((m - 0.9).abs() < 1e-12);
        assert_eq!(smooth_min(1.0, 2.0, 0.0), 1.0);
    }

    #[test]
    fn default_body_is_watertight_and_centered() {
        let fig = Figure::build(&small_body(), 3).unwrap();
        let (lo, hi) = fig.bounds();
        assert!(((lo + hi) / 2.0).norm() < 1e-12);
        assert!(hi.y - lo.y <= 2.0);
        let mesh = fig.mesh(64).unwrap();
        assert!(mesh.is_closed_manifold());
        let oracle = SdfOracle::new(&mesh).unwrap();
        let torso = fig.parts[0].a.lerp(&fig.parts[0].b, 0.5);
        assert!((oracle.winding_number(&torso) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn seeds_vary_the_pose() {
        let a = Figure::build(&small_body(), 1).unwrap();
        let b = Figure::build(&small_body(), 2).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, Figure::build(&small_body(), 1).unwrap());
    }

    #[test]
    fn renders_back_project_onto_mesh() {
        let shape = small_body();
        let scene = generate(&shape, &RenderParams { resolution: 96, ..RenderParams::default() }, 100.0, 5).unwrap();
        let view = &scene.views[0];
        let oracle = SdfOracle::new(&scene.mesh).unwrap();
        let half_px = view.cam.pixel_size / 2.0;
        let (mut ok, mut n) = (0, 0);
        for y in 0..96 {
            for x in 0..96 {
                let d = view.depth.get(x, y);
                if d.is_nan() {
                    continue;
                }
                n += 1;
                let p = view.cam.unproject(x as f64 + 0.5, y as f64 + 0.5, d);
                if oracle.signed_distance(&p).abs() <= half_px {
                    ok += 1;
                }
            }
        }
        assert!(n > 500);
        assert!(ok as f64 >= 0.99 * n as f64);
        assert!(view.mask.count(MaskLabel::Face) > 0);
        assert!(view.mask.count(MaskLabel::Hand) > 0);
        assert_eq!(view.mask.count(MaskLabel::Background), 96 * 96 - n);
        assert!(view.rgb.data.iter().all(|c| (0.0..=1.0).contains(c)));
    }

    #[test]
    fn orbit_views_step_two_degrees() {
        let shape = ShapeParams { kind: SceneKind::Capsule, mesh_cells: 32, ..ShapeParams::default() };
        let rp = RenderParams { resolution: 32, views: 3, ..RenderParams::default() };
        let scene = generate(&shape, &rp, 100.0, 0).unwrap();
        let f0 = scene.views[0].cam.forward();
        let f2 = scene.views[2].cam.forward();
        assert!((f0.angle(&f2).to_degrees() - 4.0).abs() < 1e-9);
    }

    #[test]
    fn scene_directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let shape = ShapeParams { kind: SceneKind::Capsule, mesh_cells: 24, ..ShapeParams::default() };
        let scene = generate(&shape, &RenderParams { resolution: 24, ..RenderParams::default() }, 50.0, 0).unwrap();
        let desc = write_scene(&scene, dir.path(), &[0.0]).unwrap();
        let loaded = read_scene(dir.path()).unwrap();
        assert_eq!(loaded.descriptor, desc);
        assert_eq!(loaded.mesh.triangles, scene.mesh.triangles);
        let v = &loaded.views[0];
        assert_eq!(v.mask, scene.views[0].mask);
        for (a, b) in v.depth.data.iter().zip(&scene.views[0].depth.data) {
            assert!((a.is_nan() && b.is_nan()) || (a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn invalid_params_rejected() {
        let bad = ShapeParams { capsule_radius: -1.0, ..ShapeParams::default() };
        assert!(Figure::build(&bad, 0).is_err());
        let bad = ShapeParams { mesh_cells: 2, ..ShapeParams::default() };
        assert!(Figure::build(&bad, 0).is_err());
    }
}
