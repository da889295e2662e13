use serde::{Deserialize, Serialize};

use super::image::{ScalarImage, VectorImage};
use super::PointCloud;
use crate::error::{arg, Result};
use crate::Vec3;

/// Orthographic camera. Pixel `(i, j)` has continuous coordinates
/// `(i + 0.5, j + 0.5)`; `u` grows along `right`, `v` grows against `up`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthoCamera {
    pub center: [f64; 3],
    pub right: [f64; 3],
    pub up: [f64; 3],
    pub forward: [f64; 3],
    pub pixel_size: f64,
    pub image_w: usize,
    pub image_h: usize,
    pub near: f64,
    pub far: f64,
}

const ORTHO_TOL: f64 = 1e-9;

impl OrthoCamera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        center: Vec3,
        right: Vec3,
        up: Vec3,
        forward: Vec3,
        pixel_size: f64,
        image_w: usize,
        image_h: usize,
        near: f64,
        far: f64,
    ) -> Result<Self> {
        let cam = Self {
            center: center.into(),
            right: right.into(),
            up: up.into(),
            forward: forward.into(),
            pixel_size,
            image_w,
            image_h,
            near,
            far,
        };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera looking down +z with +y up. The frame is right-handed, so
    /// `right` is -x.
    pub fn axis_aligned(center: Vec3, pixel_size: f64, w: usize, h: usize, near: f64, far: f64) -> Result<Self> {
        Self::new(
            center,
            -Vec3::x(),
            Vec3::y(),
            Vec3::z(),
            pixel_size,
            w,
            h,
            near,
            far,
        )
    }

    /// Camera orbiting the vertical axis through `target` at `angle_deg`,
    /// `distance` away. Angle 0 looks down +z.
    pub fn orbit(
        target: Vec3,
        angle_deg: f64,
        distance: f64,
        pixel_size: f64,
        w: usize,
        h: usize,
        depth_range: f64,
    ) -> Result<Self> {
        let a = angle_deg.to_radians();
        let forward = Vec3::new(a.sin(), 0.0, a.cos());
        let up = Vec3::y();
        let right = forward.cross(&up);
        let center = target - forward * distance;
        Self::new(
            center,
            right,
            up,
            forward,
            pixel_size,
            w,
            h,
            distance - depth_range,
            distance + depth_range,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let (r, u, f) = (self.right(), self.up(), self.forward());
        for (name, v) in [("right", r), ("up", u), ("forward", f)] {
            if (v.norm() - 1.0).abs() > ORTHO_TOL {
                return arg(format!("camera {name} axis is not unit length"));
            }
        }
        if r.dot(&u).abs() > ORTHO_TOL || r.dot(&f).abs() > ORTHO_TOL || u.dot(&f).abs() > ORTHO_TOL {
            return arg("camera axes are not orthogonal");
        }
        if !(self.pixel_size > 0.0) {
            return arg("camera pixel_size must be positive");
        }
        if !(self.near < self.far) {
            return arg("camera near must be less than far");
        }
        if self.image_w == 0 || self.image_h == 0 {
            return arg("camera image size must be non-zero");
        }
        Ok(())
    }

    #[inline]
    pub fn center(&self) -> Vec3 {
        Vec3::from(self.center)
    }
    #[inline]
    pub fn right(&self) -> Vec3 {
        Vec3::from(self.right)
    }
    #[inline]
    pub fn up(&self) -> Vec3 {
        Vec3::from(self.up)
    }
    #[inline]
    pub fn forward(&self) -> Vec3 {
        Vec3::from(self.forward)
    }

    /// Same camera with the center moved by `offset`.
    pub fn translated(&self, offset: Vec3) -> Self {
        Self { center: (self.center() + offset).into(), ..self.clone() }
    }

    /// World point for continuous pixel `(u, v)` at camera depth `depth`.
    #[inline]
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        let w2 = self.image_w as f64 / 2.0;
        let h2 = self.image_h as f64 / 2.0;
        self.center()
            + self.right() * ((u - w2) * self.pixel_size)
            + self.up() * ((h2 - v) * self.pixel_size)
            + self.forward() * depth
    }

    /// Camera depth mapped linearly from `[near, far]` to `[-1, 1]`.
    #[inline]
    pub fn normalized_depth(&self, z: f64) -> f64 {
        2.0 * (z - self.near) / (self.far - self.near) - 1.0
    }

    fn check_dims(&self, w: usize, h: usize) -> Result<()> {
        if w != self.image_w || h != self.image_h {
            return arg(format!(
                "image is {}x{} but camera expects {}x{}",
                w, h, self.image_w, self.image_h
            ));
        }
        Ok(())
    }
}

/// Orthographic projection: continuous pixel coordinates and camera depth.
/// Points outside the frustum are returned as-is.
#[inline]
pub fn orthographic_project(p: &Vec3, cam: &OrthoCamera) -> (f64, f64, f64) {
    let d = p - cam.center();
    let u = d.dot(&cam.right()) / cam.pixel_size + cam.image_w as f64 / 2.0;
    let v = cam.image_h as f64 / 2.0 - d.dot(&cam.up()) / cam.pixel_size;
    let z = d.dot(&cam.forward());
    (u, v, z)
}

#[inline]
fn depth_is_valid(d: f64, cam: &OrthoCamera) -> bool {
    !d.is_nan() && d >= cam.near && d <= cam.far
}

/// Back-projects every valid pixel of `depth` to a world point, in row-major
/// pixel order.
pub fn depth_to_points(depth: &ScalarImage, cam: &OrthoCamera) -> Result<PointCloud> {
    cam.check_dims(depth.width, depth.height)?;
    let mut points = Vec::with_capacity(depth.valid_count());
    for v in 0..depth.height {
        for u in 0..depth.width {
            let d = depth.get(u, v);
            if depth_is_valid(d, cam) {
                points.push(cam.unproject(u as f64 + 0.5, v as f64 + 0.5, d));
            }
        }
    }
    Ok(PointCloud::new(points))
}

/// Per-pixel surface normals from back-projected neighbor differences.
/// Normals face the camera; pixels whose stencil touches an invalid depth
/// get NaN.
pub fn normals_from_depth(depth: &ScalarImage, cam: &OrthoCamera) -> Result<VectorImage> {
    cam.check_dims(depth.width, depth.height)?;
    let (w, h) = (depth.width, depth.height);
    let point = |x: usize, y: usize| -> Option<Vec3> {
        let d = depth.get(x, y);
        depth_is_valid(d, cam).then(|| cam.unproject(x as f64 + 0.5, y as f64 + 0.5, d))
    };
    let fwd = cam.forward();
    let mut out = VectorImage::new(w, h, 3, vec![f64::NAN; w * h * 3])?;
    // (low, high) neighbor indices: central inside, one-sided at the border
    let span = |i: usize, n: usize| -> Option<(usize, usize)> {
        if n < 2 {
            None
        } else if i == 0 {
            Some((0, 1))
        } else if i == n - 1 {
            Some((n - 2, n - 1))
        } else {
            Some((i - 1, i + 1))
        }
    };
    for y in 0..h {
        for x in 0..w {
            if point(x, y).is_none() {
                continue;
            }
            let (Some((x0, x1)), Some((y0, y1))) = (span(x, w), span(y, h)) else {
                continue;
            };
            let (Some(px0), Some(px1), Some(py0), Some(py1)) =
                (point(x0, y), point(x1, y), point(x, y0), point(x, y1))
            else {
                continue;
            };
            let n = (px1 - px0).cross(&(py1 - py0));
            let len = n.norm();
            if !(len > 0.0) {
                continue;
            }
            let mut n = n / len;
            if n.dot(&fwd) > 0.0 {
                n = -n;
            }
            out.pixel_mut(x, y).copy_from_slice(n.as_slice());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn cam(w: usize, h: usize, ps: f64) -> OrthoCamera {
        OrthoCamera::axis_aligned(Vec3::zeros(), ps, w, h, 0.0, 100.0).unwrap()
    }

    #[test]
    fn constant_depth_gives_plane() {
        let c = cam(2, 2, 1.0);
        let d = ScalarImage::filled(2, 2, 1.0);
        let pc = depth_to_points(&d, &c).unwrap();
        assert_eq!(pc.len(), 4);
        assert!(pc.points.iter().all(|p| p.z == 1.0));
    }

    #[test]
    fn nan_pixels_are_skipped() {
        let c = cam(2, 2, 1.0);
        let mut d = ScalarImage::filled(2, 2, f64::NAN);
        d.set(0, 0, 3.0);
        assert_eq!(depth_to_points(&d, &c).unwrap().len(), 1);
    }

    #[test]
    fn depth_outside_near_far_is_invalid() {
        let c = OrthoCamera::axis_aligned(Vec3::zeros(), 1.0, 2, 1, 1.0, 2.0).unwrap();
        let d = ScalarImage::new(2, 1, vec![0.5, 1.5]).unwrap();
        assert_eq!(depth_to_points(&d, &c).unwrap().len(), 1);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let c = cam(3, 3, 1.0);
        assert!(depth_to_points(&ScalarImage::filled(2, 2, 1.0), &c).is_err());
    }

    #[test]
    fn center_projects_to_image_center() {
        let c = OrthoCamera::orbit(Vec3::new(0.3, -0.2, 1.0), 37.0, 2.0, 0.01, 64, 48, 1.5).unwrap();
        let (u, v, z) = orthographic_project(&c.center(), &c);
        assert_eq!((u, v, z), (32.0, 24.0, 0.0));
        let (_, _, z1) = orthographic_project(&(c.center() + c.forward()), &c);
        assert!((z1 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn project_back_project_round_trip() {
        let c = OrthoCamera::orbit(Vec3::new(0.1, 0.2, 0.3), 12.0, 3.0, 0.02, 40, 30, 2.0).unwrap();
        let mut rng = crate::rng_from_seed(1);
        let depth = ScalarImage::new(40, 30, (0..1200).map(|_| rng.gen_range(1.5..4.5)).collect()).unwrap();
        let pc = depth_to_points(&depth, &c).unwrap();
        assert_eq!(pc.len(), 1200);
        for (k, p) in pc.points.iter().enumerate() {
            let (u, v, z) = orthographic_project(p, &c);
            let (x, y) = (k % 40, k / 40);
            assert!((u - (x as f64 + 0.5)).abs() <= 1e-6);
            assert!((v - (y as f64 + 0.5)).abs() <= 1e-6);
            assert!((z - depth.get(x, y)).abs() <= 1e-6);
        }
    }

    #[test]
    fn random_points_survive_single_pixel_round_trip() {
        let mut rng = crate::rng_from_seed(2);
        for _ in 0..200 {
            let p = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(1.0..3.0));
            let c = OrthoCamera::orbit(Vec3::zeros(), rng.gen_range(0.0..360.0), 5.0, 0.1, 1, 1, 10.0).unwrap();
            // one-pixel camera centered on the projection of p
            let (u, v, z) = orthographic_project(&p, &c);
            let shift = c.right() * ((u - 0.5) * c.pixel_size) + c.up() * ((0.5 - v) * c.pixel_size);
            let c1 = c.translated(shift);
            let (u1, v1, z1) = orthographic_project(&p, &c1);
            assert!((u1 - 0.5).abs() < 1e-9 && (v1 - 0.5).abs() < 1e-9 && (z1 - z).abs() < 1e-9);
            let pc = depth_to_points(&ScalarImage::filled(1, 1, z1), &c1).unwrap();
            assert!((pc.points[0] - p).norm() <= 1e-6);
        }
    }

    #[test]
    fn plane_normals_face_camera() {
        let c = cam(6, 5, 0.1);
        let n = normals_from_depth(&ScalarImage::filled(6, 5, 2.0), &c).unwrap();
        for y in 0..5 {
            for x in 0..6 {
                let px = n.pixel(x, y);
                assert!((px[0]).abs() < 1e-12 && (px[1]).abs() < 1e-12 && (px[2] + 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ramp_normal_is_tilted_plane_normal() {
        let ps = 0.1;
        let c = cam(6, 5, ps);
        let mut d = ScalarImage::filled(6, 5, 0.0);
        for y in 0..5 {
            for x in 0..6 {
                d.set(x, y, 1.0 + x as f64 * ps);
            }
        }
        let n = normals_from_depth(&d, &c).unwrap();
        // depth grows along +u, i.e. along right = -x
        let want = Vec3::new(-1.0, 0.0, -1.0) / 2f64.sqrt();
        for y in 0..5 {
            for x in 0..6 {
                let got = Vec3::from_column_slice(n.pixel(x, y));
                assert!((got - want).norm() < 1e-9, "{got:?}");
            }
        }
    }

    #[test]
    fn nan_propagates_to_neighbors() {
        let c = cam(5, 5, 0.1);
        let mut d = ScalarImage::filled(5, 5, 1.0);
        d.set(2, 2, f64::NAN);
        let n = normals_from_depth(&d, &c).unwrap();
        assert!(n.pixel(2, 2)[0].is_nan());
        assert!(n.pixel(1, 2)[0].is_nan());
        assert!(n.pixel(2, 3)[0].is_nan());
        assert!(!n.pixel(0, 0)[0].is_nan());
    }

    #[test]
    fn normals_are_unit_and_camera_facing() {
        let c = OrthoCamera::orbit(Vec3::zeros(), 30.0, 3.0, 0.05, 20, 20, 2.0).unwrap();
        let mut d = ScalarImage::filled(20, 20, 0.0);
        for y in 0..20 {
            for x in 0..20 {
                let (a, b) = (x as f64 / 20.0, y as f64 / 20.0);
                d.set(x, y, 3.0 + 0.2 * (3.0 * a).sin() * (2.0 * b).cos());
            }
        }
        let n = normals_from_depth(&d, &c).unwrap();
        for px in n.data.chunks(3) {
            let v = Vec3::from_column_slice(px);
            assert!((v.norm() - 1.0).abs() <= 1e-6);
            assert!(v.dot(&c.forward()) <= 0.0);
        }
    }

    #[test]
    fn camera_validation() {
        let bad = OrthoCamera::new(Vec3::zeros(), Vec3::x(), Vec3::x(), Vec3::z(), 1.0, 2, 2, 0.0, 1.0);
        assert!(bad.is_err());
        let bad = OrthoCamera::new(Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z(), 0.0, 2, 2, 0.0, 1.0);
        assert!(bad.is_err());
        let bad = OrthoCamera::new(Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z(), 1.0, 2, 2, 1.0, 1.0);
        assert!(bad.is_err());
    }
}
