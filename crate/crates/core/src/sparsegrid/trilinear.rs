use super::{SiteMap, SparseVoxelTensor};
use crate::error::{arg, Result};
use crate::Vec3;

/// Code volumes at several strides sharing one world placement: a site `s`
/// of a stride-`k` volume is centered at `origin + (s + 0.5) * k * spacing`.
#[derive(Clone, Debug)]
pub struct MultiScaleCodes {
    pub volumes: Vec<SparseVoxelTensor>,
    pub spacing: f64,
    pub origin: Vec3,
    maps: Vec<SiteMap>,
}

/// Trilinear taps of one query: per volume, eight `(row, weight)` corners;
/// absent corners carry `row = u32::MAX`.
#[derive(Clone, Debug)]
pub struct CodeTaps {
    pub corners: Vec<[(u32, f64); 8]>,
}

pub const ABSENT: u32 = u32::MAX;

impl MultiScaleCodes {
    pub fn new(volumes: Vec<SparseVoxelTensor>, spacing: f64, origin: Vec3) -> Result<Self> {
        if !(spacing > 0.0) {
            return arg("code volume spacing must be positive");
        }
        let maps = volumes.iter().map(|v| SiteMap::build(&v.sites)).collect();
        Ok(Self { volumes, spacing, origin, maps })
    }

    /// Concatenated channel count across scales.
    pub fn width(&self) -> usize {
        self.volumes.iter().map(|v| v.channels).sum()
    }

    fn corners(&self, k: usize, p: &Vec3) -> [(u32, f64); 8] {
        let (vol, map) = (&self.volumes[k], &self.maps[k]);
        let cell = self.spacing * vol.stride as f64;
        let g = (p - self.origin) / cell - Vec3::repeat(0.5);
        let base = [g.x.floor(), g.y.floor(), g.z.floor()];
        let f = [g.x - base[0], g.y - base[1], g.z - base[2]];
        let mut out = [(ABSENT, 0.0); 8];
        if vol.is_empty() || !base.iter().all(|b| b.abs() <= (i32::MAX / 2) as f64) {
            return out;
        }
        let b = base.map(|v| v as i32);
        for (c, slot) in out.iter_mut().enumerate() {
            let (dx, dy, dz) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
            let w = (if dx == 1 { f[0] } else { 1.0 - f[0] })
                * (if dy == 1 { f[1] } else { 1.0 - f[1] })
                * (if dz == 1 { f[2] } else { 1.0 - f[2] });
            let site = [b[0] + dx as i32, b[1] + dy as i32, b[2] + dz as i32];
            if let Some(row) = map.get(&site) {
                *slot = (row as u32, w);
            }
        }
        out
    }

    pub fn taps(&self, p: &Vec3) -> CodeTaps {
        CodeTaps { corners: (0..self.volumes.len()).map(|k| self.corners(k, p)).collect() }
    }

    /// Writes the concatenated code at `p` into `out` (length [`Self::width`]).
    pub fn query_into(&self, p: &Vec3, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut off = 0;
        for (k, vol) in self.volumes.iter().enumerate() {
            let c = vol.channels;
            let dst = &mut out[off..off + c];
            for (row, w) in self.corners(k, p) {
                if row == ABSENT || w == 0.0 {
                    continue;
                }
                for (d, s) in dst.iter_mut().zip(vol.feature(row as usize)) {
                    *d += w * s;
                }
            }
            off += c;
        }
    }

    pub(crate) fn gather(&self, taps: &CodeTaps, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut off = 0;
        for (vol, corners) in self.volumes.iter().zip(&taps.corners) {
            let c = vol.channels;
            let dst = &mut out[off..off + c];
            for &(row, w) in corners {
                if row == ABSENT || w == 0.0 {
                    continue;
                }
                for (d, s) in dst.iter_mut().zip(vol.feature(row as usize)) {
                    *d += w * s;
                }
            }
            off += c;
        }
    }

    /// Adjoint of the lookup: scatters `grad` into per-volume feature
    /// gradients (`grads[k]` shaped like `volumes[k].features`).
    pub(crate) fn scatter(&self, taps: &CodeTaps, grad: &[f64], grads: &mut [Vec<f64>]) {
        let mut off = 0;
        for ((vol, corners), g) in self.volumes.iter().zip(&taps.corners).zip(grads.iter_mut()) {
            let c = vol.channels;
            let src = &grad[off..off + c];
            for &(row, w) in corners {
                if row == ABSENT || w == 0.0 {
                    continue;
                }
                let r = row as usize;
                for (d, s) in g[r * c..(r + 1) * c].iter_mut().zip(src) {
                    *d += w * s;
                }
            }
            off += c;
        }
    }
}

/// Concatenated multi-scale code at `p`; absent sites count as zero.
pub fn trilinear_query(codes: &MultiScaleCodes, p: &Vec3) -> Vec<f64> {
    let mut out = vec![0.0; codes.width()];
    codes.query_into(p, &mut out);
    out
}
