use rand::Rng;

use crate::error::{arg, Result};
use crate::geometry::VectorImage;

/// 3x3 convolution, zero padding 1, stride 1 or 2. Weights are laid out
/// `[ky * 3 + kx][c_in][c_out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv2d {
    pub c_in: usize,
    pub c_out: usize,
    pub stride: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[inline]
pub(crate) fn out_len(n: usize, stride: usize) -> usize {
    n.div_ceil(stride)
}

impl Conv2d {
    pub fn zeros(c_in: usize, c_out: usize, stride: usize) -> Self {
        Self { c_in, c_out, stride, weight: vec![0.0; 9 * c_in * c_out], bias: vec![0.0; c_out] }
    }

    pub fn init(c_in: usize, c_out: usize, stride: usize, rng: &mut crate::Rng) -> Self {
        let mut c = Self::zeros(c_in, c_out, stride);
        let bound = (6.0 / (9 * c_in) as f64).sqrt();
        c.weight.iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
        c
    }

    pub fn check(&self) -> Result<()> {
        if !(self.stride == 1 || self.stride == 2) {
            return arg(format!("conv stride must be 1 or 2, got {}", self.stride));
        }
        if self.weight.len() != 9 * self.c_in * self.c_out || self.bias.len() != self.c_out {
            return arg(format!("conv {}->{} has malformed weights", self.c_in, self.c_out));
        }
        Ok(())
    }

    /// Calls `f(tap, input_pixel, output_pixel)` for every in-bounds tap.
    #[inline]
    fn for_each_tap(&self, w: usize, h: usize, mut f: impl FnMut(usize, usize, usize)) {
        let s = self.stride;
        let (ow, oh) = (out_len(w, s), out_len(h, s));
        for oy in 0..oh {
            for ky in 0..3 {
                let iy = (oy * s + ky) as isize - 1;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for ox in 0..ow {
                    for kx in 0..3 {
                        let ix = (ox * s + kx) as isize - 1;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        f(ky * 3 + kx, iy as usize * w + ix as usize, oy * ow + ox);
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &VectorImage) -> VectorImage {
        debug_assert_eq!(x.channels, self.c_in);
        let (ci, co) = (self.c_in, self.c_out);
        let (ow, oh) = (out_len(x.width, self.stride), out_len(x.height, self.stride));
        let mut y = VectorImage {
            width: ow,
            height: oh,
            channels: co,
            data: self.bias.iter().copied().cycle().take(ow * oh * co).collect(),
        };
        self.for_each_tap(x.width, x.height, |k, i, o| {
            let xi = &x.data[i * ci..(i + 1) * ci];
            let yo = &mut y.data[o * co..(o + 1) * co];
            let wk = &self.weight[k * ci * co..(k + 1) * ci * co];
            for (a, xv) in xi.iter().enumerate() {
                if *xv == 0.0 {
                    continue;
                }
                for (yv, wv) in yo.iter_mut().zip(&wk[a * co..(a + 1) * co]) {
                    *yv += xv * wv;
                }
            }
        });
        y
    }

    /// Accumulates parameter gradients into `grad`; returns the input gradient.
    pub fn backward(&self, x: &VectorImage, gy: &VectorImage, grad: &mut Conv2d) -> VectorImage {
        let (ci, co) = (self.c_in, self.c_out);
        let mut gx = VectorImage::zeros(x.width, x.height, ci);
        for row in gy.data.chunks(co) {
            for (b, g) in grad.bias.iter_mut().zip(row) {
                *b += g;
            }
        }
        self.for_each_tap(x.width, x.height, |k, i, o| {
            let go = &gy.data[o * co..(o + 1) * co];
            let xi = &x.data[i * ci..(i + 1) * ci];
            let gxi = &mut gx.data[i * ci..(i + 1) * ci];
            let wk = &self.weight[k * ci * co..(k + 1) * ci * co];
            let gk = &mut grad.weight[k * ci * co..(k + 1) * ci * co];
            for a in 0..ci {
                let wr = &wk[a * co..(a + 1) * co];
                let gr = &mut gk[a * co..(a + 1) * co];
                let xv = xi[a];
                let mut acc = 0.0;
                for ((g, wv), gw) in go.iter().zip(wr).zip(gr.iter_mut()) {
                    acc += g * wv;
                    *gw += xv * g;
                }
                gxi[a] += acc;
            }
        });
        gx
    }
}

pub(crate) fn relu_inplace(x: &mut VectorImage) {
    x.data.iter_mut().for_each(|v| *v = v.max(0.0));
}

/// Zeroes gradient entries where the post-ReLU activation is not positive.
pub(crate) fn relu_mask(g: &mut VectorImage, y: &VectorImage) {
    for (gv, yv) in g.data.iter_mut().zip(&y.data) {
        if *yv <= 0.0 {
            *gv = 0.0;
        }
    }
}

/// Nearest-neighbour upsampling of a half-resolution map to `w x h`.
pub(crate) fn upsample2(x: &VectorImage, w: usize, h: usize) -> VectorImage {
    let c = x.channels;
    let mut y = VectorImage::zeros(w, h, c);
    for py in 0..h {
        for px in 0..w {
            let src = ((py / 2) * x.width + px / 2) * c;
            y.data[(py * w + px) * c..(py * w + px + 1) * c].copy_from_slice(&x.data[src..src + c]);
        }
    }
    y
}

/// Adjoint of [`upsample2`]: sums each 2x2 block back to its source pixel.
pub(crate) fn upsample2_backward(g: &VectorImage, w: usize, h: usize) -> VectorImage {
    let c = g.channels;
    let mut out = VectorImage::zeros(w, h, c);
    for py in 0..g.height {
        for px in 0..g.width {
            let dst = ((py / 2) * w + px / 2) * c;
            let src = (py * g.width + px) * c;
            for k in 0..c {
                out.data[dst + k] += g.data[src + k];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image(rng: &mut crate::Rng, w: usize, h: usize, c: usize) -> VectorImage {
        VectorImage::new(w, h, c, (0..w * h * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    /// Direct zero-padded correlation.
    fn dense(conv: &Conv2d, x: &VectorImage) -> VectorImage {
        let s = conv.stride as isize;
        let (ow, oh) = (out_len(x.width, conv.stride), out_len(x.height, conv.stride));
        let mut y = VectorImage::zeros(ow, oh, conv.c_out);
        for oy in 0..oh as isize {
            for ox in 0..ow as isize {
                for co in 0..conv.c_out {
                    let mut acc = conv.bias[co];
                    for ky in 0..3isize {
                        for kx in 0..3isize {
                            let (iy, ix) = (oy * s + ky - 1, ox * s + kx - 1);
                            if iy < 0 || ix < 0 || iy >= x.height as isize || ix >= x.width as isize {
                                continue;
                            }
                            for ci in 0..conv.c_in {
                                let wv = conv.weight[((ky * 3 + kx) as usize * conv.c_in + ci) * conv.c_out + co];
                                acc += wv * x.pixel(ix as usize, iy as usize)[ci];
                            }
                        }
                    }
                    y.pixel_mut(ox as usize, oy as usize)[co] = acc;
                }
            }
        }
        y
    }

    #[test]
    fn matches_direct_convolution() {
        let mut rng = crate::rng_from_seed(1);
        for &(w, h, s) in &[(5, 4, 1), (5, 4, 2), (6, 6, 2), (1, 1, 1)] {
            let mut conv = Conv2d::init(3, 2, s, &mut rng);
            conv.bias = vec![0.3, -0.2];
            let x = random_image(&mut rng, w, h, 3);
            let (a, b) = (conv.forward(&x), dense(&conv, &x));
            assert_eq!((a.width, a.height), (b.width, b.height));
            for (p, q) in a.data.iter().zip(&b.data) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn stride_two_halves_dims() {
        let conv = Conv2d::zeros(1, 1, 2);
        let y = conv.forward(&VectorImage::zeros(8, 6, 1));
        assert_eq!((y.width, y.height), (4, 3));
        assert!(Conv2d::zeros(1, 1, 3).check().is_err());
    }

    #[test]
    fn backward_is_adjoint() {
        let mut rng = crate::rng_from_seed(2);
        for s in [1, 2] {
            let conv = Conv2d::init(3, 4, s, &mut rng);
            let x = random_image(&mut rng, 7, 5, 3);
            let dx = random_image(&mut rng, 7, 5, 3);
            let y0 = conv.forward(&VectorImage::zeros(7, 5, 3));
            let y1 = conv.forward(&dx);
            let jdx: Vec<f64> = y1.data.iter().zip(&y0.data).map(|(a, b)| a - b).collect();
            let dy = random_image(&mut rng, y1.width, y1.height, 4);
            let mut g = Conv2d::zeros(3, 4, s);
            let gx = conv.backward(&x, &dy, &mut g);
            let (l, r) = (dot(&jdx, &dy.data), dot(&dx.data, &gx.data));
            assert!((l - r).abs() <= 1e-6 * l.abs().max(1.0));
        }
    }

    #[test]
    fn weight_gradient_matches_finite_differences() {
        let mut rng = crate::rng_from_seed(3);
        let conv = Conv2d::init(2, 3, 2, &mut rng);
        let x = random_image(&mut rng, 6, 5, 2);
        let probe = random_image(&mut rng, 3, 3, 3);
        let loss = |c: &Conv2d| dot(&c.forward(&x).data, &probe.data);
        let mut g = Conv2d::zeros(2, 3, 2);
        conv.backward(&x, &probe, &mut g);
        for k in (0..conv.weight.len()).step_by(5) {
            let (mut p, mut m) = (conv.clone(), conv.clone());
            p.weight[k] += 1e-6;
            m.weight[k] -= 1e-6;
            let fd = (loss(&p) - loss(&m)) / 2e-6;
            assert!((fd - g.weight[k]).abs() <= 1e-4 * fd.abs().max(1e-3));
        }
        let fd_b = {
            let (mut p, mut m) = (conv.clone(), conv.clone());
            p.bias[1] += 1e-6;
            m.bias[1] -= 1e-6;
            (loss(&p) - loss(&m)) / 2e-6
        };
        assert!((fd_b - g.bias[1]).abs() < 1e-6);
    }

    #[test]
    fn upsample_adjoint() {
        let mut rng = crate::rng_from_seed(4);
        let x = random_image(&mut rng, 3, 2, 2);
        let up = upsample2(&x, 5, 4);
        assert_eq!(up.pixel(4, 3), x.pixel(2, 1));
        let dy = random_image(&mut rng, 5, 4, 2);
        let back = upsample2_backward(&dy, 3, 2);
        assert!((dot(&up.data, &dy.data) - dot(&x.data, &back.data)).abs() < 1e-12);
    }
}
