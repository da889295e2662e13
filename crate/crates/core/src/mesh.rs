//! Indexed triangle meshes.

use std::collections::HashMap;

use rand::Rng as _;

use crate::error::{arg, Result};
use crate::Vec3;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriMesh {
    /// Builds a mesh, checking that every index is in range.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some(t) = triangles.iter().find(|t| t.iter().any(|&i| i as usize >= n)) {
            return arg(format!("triangle {t:?} indexes past {n} vertices"));
        }
        Ok(Self { vertices, triangles })
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    #[inline]
    pub fn corners(&self, t: usize) -> [Vec3; 3] {
        self.triangles[t].map(|i| self.vertices[i as usize])
    }

    /// Unnormalized face normal (length = 2 * area), right-hand rule.
    #[inline]
    pub fn face_cross(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.corners(t);
        (b - a).cross(&(c - a))
    }

    pub fn area(&self, t: usize) -> f64 {
        0.5 * self.face_cross(t).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.area(t)).sum()
    }

    /// Fails when any triangle has zero area.
    pub fn check_nondegenerate(&self) -> Result<()> {
        for t in 0..self.triangles.len() {
            if !(self.area(t) > 0.0) {
                return arg(format!("triangle {t} is degenerate"));
            }
        }
        Ok(())
    }

    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        crate::geometry::bounds_of(self.vertices.iter())
    }

    /// Signed volume enclosed by the mesh (positive for outward orientation).
    pub fn signed_volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.corners(t);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Number of incident triangles per undirected edge.
    pub fn edge_valence(&self) -> HashMap<(u32, u32), usize> {
        let mut map = HashMap::new();
        for t in &self.triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                *map.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        map
    }

    /// Every edge is shared by exactly two triangles.
    pub fn is_closed_manifold(&self) -> bool {
        !self.triangles.is_empty() && self.edge_valence().values().all(|&c| c == 2)
    }

    /// Same surface with every triangle's orientation reversed.
    pub fn flipped(&self) -> Self {
        Self {
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|t| [t[0], t[2], t[1]]).collect(),
        }
    }

    pub fn transformed(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        Self { vertices: self.vertices.iter().map(f).collect(), triangles: self.triangles.clone() }
    }

    /// Splits every triangle into four.
    pub fn subdivided(&self) -> Self {
        let mut vertices = self.vertices.clone();
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<Vec3>| -> u32 {
            *mid.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push((vertices[a as usize] + vertices[b as usize]) / 2.0);
                (vertices.len() - 1) as u32
            })
        };
        let mut triangles = Vec::with_capacity(self.triangles.len() * 4);
        for &[a, b, c] in &self.triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            triangles.extend_from_slice(&[[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
        }
        Self { vertices, triangles }
    }

    /// Unit icosphere: icosahedron subdivided `levels` times (20 * 4^levels
    /// triangles), outward-facing.
    pub fn icosphere(levels: u32) -> Self {
        let t = (1.0 + 5f64.sqrt()) / 2.0;
        let raw = [
            (-1.0, t, 0.0),
            (1.0, t, 0.0),
            (-1.0, -t, 0.0),
            (1.0, -t, 0.0),
            (0.0, -1.0, t),
            (0.0, 1.0, t),
            (0.0, -1.0, -t),
            (0.0, 1.0, -t),
            (t, 0.0, -1.0),
            (t, 0.0, 1.0),
            (-t, 0.0, -1.0),
            (-t, 0.0, 1.0),
        ];
        let vertices = raw.iter().map(|&(x, y, z)| Vec3::new(x, y, z).normalize()).collect();
        let triangles = vec![
            [0, 11, 5],
            [0, 5, 1],
            [0, 1, 7],
            [0, 7, 10],
            [0, 10, 11],
            [1, 5, 9],
            [5, 11, 4],
            [11, 10, 2],
            [10, 7, 6],
            [7, 1, 8],
            [3, 9, 4],
            [3, 4, 2],
            [3, 2, 6],
            [3, 6, 8],
            [3, 8, 9],
            [4, 9, 5],
            [2, 4, 11],
            [6, 2, 10],
            [8, 6, 7],
            [9, 8, 1],
        ];
        let mut mesh = Self { vertices, triangles };
        for _ in 0..levels {
            mesh = mesh.subdivided();
            mesh.vertices.iter_mut().for_each(|v| *v = v.normalize());
        }
        mesh
    }

    /// Axis-aligned box `[lo, hi]`, two outward triangles per face.
    pub fn cuboid(lo: Vec3, hi: Vec3) -> Self {
        let v = |i: usize| Vec3::new(if i & 1 == 0 { lo.x } else { hi.x }, if i & 2 == 0 { lo.y } else { hi.y }, if i & 4 == 0 { lo.z } else { hi.z });
        let vertices = (0..8).map(v).collect();
        let quads: [[u32; 4]; 6] = [
            [0, 2, 3, 1], // -z
            [4, 5, 7, 6], // +z
            [0, 1, 5, 4], // -y
            [2, 6, 7, 3], // +y
            [0, 4, 6, 2], // -x
            [1, 3, 7, 5], // +x
        ];
        let triangles = quads.iter().flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]]).collect();
        Self { vertices, triangles }
    }

    /// Stratified area-weighted surface samples: sample `k` falls at
    /// cumulative area `(k + U) / n` of the total. Returns points and the
    /// triangle each came from.
    pub fn sample_surface(&self, n: usize, rng: &mut crate::Rng) -> (Vec<Vec3>, Vec<usize>) {
        let mut cumulative = Vec::with_capacity(self.triangles.len());
        let mut acc = 0.0;
        for t in 0..self.triangles.len() {
            acc += self.area(t);
            cumulative.push(acc);
        }
        let mut points = Vec::with_capacity(n);
        let mut tris = Vec::with_capacity(n);
        if acc <= 0.0 {
            return (points, tris);
        }
        for k in 0..n {
            let target = (k as f64 + rng.gen::<f64>()) / n as f64 * acc;
            let t = cumulative.partition_point(|&c| c <= target).min(self.triangles.len() - 1);
            let [a, b, c] = self.corners(t);
            let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
            let s = r1.sqrt();
            points.push(a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2));
            tris.push(t);
        }
        (points, tris)
    }
}
