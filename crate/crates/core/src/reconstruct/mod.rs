//! Field evaluation on the inference grid and iso-surface extraction.

mod tables;

use std::collections::HashMap;

use crate::error::{arg, Error, Result};
use crate::geometry::{depth_to_points, inference_grid, GridSpec, OrthoCamera, ScalarImage, VectorImage};
use crate::io::Tensor;
use crate::mesh::TriMesh;
use crate::nets::{Encoded, ReconModel};
use crate::Vec3;

use tables::TRI_TABLE;

pub const DEFAULT_CHUNK: usize = 65_536;

/// Signed distances sampled at the cell centers of a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub spec: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return arg(format!("grid has {} samples, got {} values", spec.len(), values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("field value {} at sample {i} is not finite", values[i])));
        }
        Ok(Self { spec, values })
    }

    pub fn from_fn(spec: GridSpec, f: impl Fn(&Vec3) -> f64) -> Result<Self> {
        let values = (0..spec.len()).map(|i| f(&spec.point_at(i))).collect();
        Self::new(spec, values)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.spec.index(i, j, k)]
    }

    /// `nz x ny x nx` float32 tensor.
    pub fn to_tensor(&self) -> Result<Tensor> {
        let [nx, ny, nz] = self.spec.dims;
        Tensor::f32_from_f64(vec![nz as u32, ny as u32, nx as u32], &self.values)
    }

    pub fn negated(&self) -> Self {
        Self { spec: self.spec.clone(), values: self.values.iter().map(|v| -v).collect() }
    }
}

/// Inference grid placement and evaluation batching.
#[derive(Clone, Debug, PartialEq)]
pub struct GridOptions {
    pub jitter_sigma: f64,
    pub pad: f64,
    pub seed: u64,
    pub chunk: usize,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self { jitter_sigma: 0.0, pad: 0.0, seed: 0, chunk: DEFAULT_CHUNK }
    }
}

/// Predicted signed distance at every sample of `spec`, in chunks.
pub fn evaluate_on_grid(model: &ReconModel, enc: &Encoded, spec: &GridSpec, chunk: usize) -> Result<ScalarField> {
    let chunk = chunk.max(1);
    let mut values = Vec::with_capacity(spec.len());
    let mut pts = Vec::with_capacity(chunk.min(spec.len()));
    for start in (0..spec.len()).step_by(chunk) {
        pts.clear();
        pts.extend((start..(start + chunk).min(spec.len())).map(|i| spec.point_at(i)));
        values.extend(model.predict(enc, &pts)?);
    }
    ScalarField::new(spec.clone(), values)
}

/// Back-projects the depth map, encodes the view and evaluates the model on
/// the inference grid fitted to the depth points.
pub fn evaluate_field(
    model: &ReconModel,
    rgb: &VectorImage,
    normals: &VectorImage,
    depth: &ScalarImage,
    cam: &OrthoCamera,
    m_res: usize,
    opts: &GridOptions,
) -> Result<ScalarField> {
    let pc = depth_to_points(depth, cam)?;
    if pc.is_empty() {
        return arg("depth map has no valid pixels");
    }
    let spec = inference_grid(&pc, m_res, opts.jitter_sigma, opts.pad, opts.seed)?;
    let enc = model.encode(rgb, normals, &pc, cam)?;
    evaluate_on_grid(model, &enc, &spec, opts.chunk)
}

pub fn reconstruct(
    model: &ReconModel,
    rgb: &VectorImage,
    normals: &VectorImage,
    depth: &ScalarImage,
    cam: &OrthoCamera,
    m_res: usize,
    opts: &GridOptions,
) -> Result<TriMesh> {
    let field = evaluate_field(model, rgb, normals, depth, cam, m_res, opts)?;
    marching_cubes(&field, 0.0)
}

const CORNERS: [[usize; 3]; 8] = [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0], [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]];
const EDGES: [(usize, usize); 12] =
    [(0, 1), (1, 2), (2, 3), (3, 0), (4, 5), (5, 6), (6, 7), (7, 4), (0, 4), (1, 5), (2, 6), (3, 7)];

/// Marching cubes over the cubes spanned by adjacent samples. Vertices on
/// shared edges are welded; triangles face the positive side of the field.
/// Zero-area triangles (vertices collapsing onto a sample exactly at `iso`)
/// are dropped.
pub fn marching_cubes(field: &ScalarField, iso: f64) -> Result<TriMesh> {
    if !iso.is_finite() {
        return arg("iso value must be finite");
    }
    let spec = &field.spec;
    let [nx, ny, nz] = spec.dims;
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    let mut welded: HashMap<(usize, u8), u32> = HashMap::new();
    let mut edge_vertex = |i: usize, j: usize, k: usize, e: usize, vertices: &mut Vec<Vec3>| -> u32 {
        let (a, b) = EDGES[e];
        let (ca, cb) = (CORNERS[a], CORNERS[b]);
        // canonical direction: from the lower corner along the edge axis
        let (lo, hi) = if ca <= cb { (ca, cb) } else { (cb, ca) };
        let axis = (0..3).find(|&d| lo[d] != hi[d]).expect("edge spans one axis");
        let (li, lj, lk) = (i + lo[0], j + lo[1], k + lo[2]);
        let key = (spec.index(li, lj, lk), axis as u8);
        *welded.entry(key).or_insert_with(|| {
            let va = field.get(li, lj, lk);
            let vb = field.get(i + hi[0], j + hi[1], k + hi[2]);
            let t = if va == vb { 0.5 } else { (iso - va) / (vb - va) };
            let mut p = spec.point(li, lj, lk);
            p[axis] += t * spec.spacing;
            vertices.push(p);
            (vertices.len() - 1) as u32
        })
    };
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let mut case = 0usize;
                for (c, o) in CORNERS.iter().enumerate() {
                    if field.get(i + o[0], j + o[1], k + o[2]) < iso {
                        case |= 1 << c;
                    }
                }
                let row = &TRI_TABLE[case];
                for tri in row.chunks(3).take_while(|t| t[0] >= 0) {
                    let v = [tri[0], tri[1], tri[2]].map(|e| edge_vertex(i, j, k, e as usize, &mut vertices));
                    // table winding faces the negative side; reverse it
                    let t = [v[0], v[2], v[1]];
                    if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                        continue;
                    }
                    let (a, b, c) = (vertices[t[0] as usize], vertices[t[1] as usize], vertices[t[2] as usize]);
                    if (b - a).cross(&(c - a)).norm() == 0.0 {
                        continue;
                    }
                    triangles.push(t);
                }
            }
        }
    }
    TriMesh::new(vertices, triangles)
}
