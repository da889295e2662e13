//! Orthographic z-buffer rasterization of triangle meshes.

use crate::geometry::{orthographic_project, OrthoCamera, ScalarImage, VectorImage};
use crate::mesh::TriMesh;
use crate::Vec3;

/// Per-pixel nearest front-facing surface: camera depth (NaN where empty),
/// unit world-space face normal (NaN where empty) and triangle index.
#[derive(Clone, Debug)]
pub struct Raster {
    pub depth: ScalarImage,
    pub normals: VectorImage,
    pub triangle: Vec<Option<u32>>,
}

impl Raster {
    pub fn covered(&self, x: usize, y: usize) -> bool {
        self.triangle[y * self.depth.width + x].is_some()
    }

    pub fn coverage(&self) -> usize {
        self.triangle.iter().filter(|t| t.is_some()).count()
    }
}

#[inline]
fn edge(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

/// Rasterizes triangles facing the camera (`n . forward < 0`), sampling at
/// pixel centers. Ties in depth keep the lower triangle index.
pub fn rasterize(mesh: &TriMesh, cam: &OrthoCamera) -> Raster {
    let (w, h) = (cam.image_w, cam.image_h);
    let mut depth = ScalarImage::filled(w, h, f64::NAN);
    let mut normals = VectorImage::new(w, h, 3, vec![f64::NAN; w * h * 3]).expect("sized buffer");
    let mut triangle = vec![None; w * h];
    let fwd = cam.forward();
    let proj: Vec<(f64, f64, f64)> = mesh.vertices.iter().map(|v| orthographic_project(v, cam)).collect();
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let n = mesh.face_cross(t);
        let len = n.norm();
        if !(len > 0.0) || n.dot(&fwd) >= 0.0 {
            continue;
        }
        let n: Vec3 = n / len;
        let [a, b, c] = tri.map(|i| proj[i as usize]);
        let area = edge(a.0, a.1, b.0, b.1, c.0, c.1);
        if area == 0.0 {
            continue;
        }
        let (umin, umax) = (a.0.min(b.0).min(c.0), a.0.max(b.0).max(c.0));
        let (vmin, vmax) = (a.1.min(b.1).min(c.1), a.1.max(b.1).max(c.1));
        if umax < 0.0 || vmax < 0.0 || umin > w as f64 || vmin > h as f64 {
            continue;
        }
        let x0 = (umin - 0.5).ceil().max(0.0) as usize;
        let x1 = ((umax - 0.5).floor().min(w as f64 - 1.0)).max(-1.0);
        let y0 = (vmin - 0.5).ceil().max(0.0) as usize;
        let y1 = ((vmax - 0.5).floor().min(h as f64 - 1.0)).max(-1.0);
        if x1 < 0.0 || y1 < 0.0 {
            continue;
        }
        for y in y0..=y1 as usize {
            let py = y as f64 + 0.5;
            for x in x0..=x1 as usize {
                let px = x as f64 + 0.5;
                let wa = edge(b.0, b.1, c.0, c.1, px, py) / area;
                let wb = edge(c.0, c.1, a.0, a.1, px, py) / area;
                let wc = 1.0 - wa - wb;
                if wa < 0.0 || wb < 0.0 || wc < 0.0 {
                    continue;
                }
                let z = wa * a.2 + wb * b.2 + wc * c.2;
                let k = y * w + x;
                let cur = depth.data[k];
                if cur.is_nan() || z < cur {
                    depth.data[k] = z;
                    normals.data[k * 3..k * 3 + 3].copy_from_slice(n.as_slice());
                    triangle[k] = Some(t as u32);
                }
            }
        }
    }
    Raster { depth, normals, triangle }
}
