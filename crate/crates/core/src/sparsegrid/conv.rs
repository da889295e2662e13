use rand::Rng as _;

use super::{SiteMap, SparseVoxelTensor};
use crate::error::{arg, Error, Result};
use crate::geometry::Site;

/// Taps of a 3x3x3 kernel.
pub const KERNEL_TAPS: usize = 27;

/// Offset of kernel tap `k`; tap 13 is the center.
#[inline]
pub(crate) fn tap_offset(k: usize) -> [i32; 3] {
    [(k / 9) as i32 - 1, ((k / 3) % 3) as i32 - 1, (k % 3) as i32 - 1]
}

/// Gather/scatter plan of a sparse convolution: for every kernel tap, the
/// `(input row, output row)` pairs it connects.
#[derive(Clone, Debug, PartialEq)]
pub struct Rulebook {
    pub pairs: Vec<Vec<(u32, u32)>>,
    pub n_in: usize,
    pub n_out: usize,
}

impl Rulebook {
    /// Submanifold rulebook: the output site set is the input site set and
    /// taps only connect active neighbors.
    pub fn submanifold(sites: &[Site], map: &SiteMap) -> Self {
        let mut pairs = vec![Vec::new(); KERNEL_TAPS];
        for (o, s) in sites.iter().enumerate() {
            for (k, list) in pairs.iter_mut().enumerate() {
                let d = tap_offset(k);
                let n = [s[0] + d[0], s[1] + d[1], s[2] + d[2]];
                if let Some(i) = map.get(&n) {
                    list.push((i as u32, o as u32));
                }
            }
        }
        Self { pairs, n_in: sites.len(), n_out: sites.len() }
    }

    /// Stride-2 rulebook. Output sites are the sorted unique `floor(site / 2)`;
    /// tap `d` connects input `2 * o + d` to output `o`.
    pub fn strided(sites: &[Site]) -> (Vec<Site>, Self) {
        let mut out: Vec<Site> = sites.iter().map(|s| s.map(|c| c.div_euclid(2))).collect();
        out.sort_unstable();
        out.dedup();
        let out_map = SiteMap::build(&out);
        let mut pairs = vec![Vec::new(); KERNEL_TAPS];
        for (i, s) in sites.iter().enumerate() {
            for (k, list) in pairs.iter_mut().enumerate() {
                let d = tap_offset(k);
                let q = [s[0] - d[0], s[1] - d[1], s[2] - d[2]];
                if q.iter().any(|c| c.rem_euclid(2) != 0) {
                    continue;
                }
                if let Some(o) = out_map.get(&q.map(|c| c.div_euclid(2))) {
                    list.push((i as u32, o as u32));
                }
            }
        }
        for list in pairs.iter_mut() {
            list.sort_unstable_by_key(|&(i, o)| (o, i));
        }
        let n_out = out.len();
        (out, Self { pairs, n_in: sites.len(), n_out })
    }

    /// Rulebook of the transposed convolution.
    pub fn transposed(&self) -> Self {
        let pairs = self
            .pairs
            .iter()
            .map(|l| {
                let mut t: Vec<(u32, u32)> = l.iter().map(|&(i, o)| (o, i)).collect();
                t.sort_unstable_by_key(|&(i, o)| (o, i));
                t
            })
            .collect();
        Self { pairs, n_in: self.n_out, n_out: self.n_in }
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.iter().map(Vec::len).sum()
    }
}

/// Weights of one 3x3x3 sparse convolution, laid out `[tap][c_in][c_out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvWeights {
    pub c_in: usize,
    pub c_out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvWeights {
    pub fn zeros(c_in: usize, c_out: usize) -> Self {
        Self { c_in, c_out, weight: vec![0.0; KERNEL_TAPS * c_in * c_out], bias: vec![0.0; c_out] }
    }

    /// He-uniform initialization over the full kernel fan-in.
    pub fn init(c_in: usize, c_out: usize, rng: &mut crate::Rng) -> Self {
        let mut w = Self::zeros(c_in, c_out);
        let bound = (6.0 / (KERNEL_TAPS * c_in) as f64).sqrt();
        w.weight.iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
        w
    }

    /// Kernel that copies its input: identity on the center tap.
    pub fn identity(c: usize) -> Self {
        let mut w = Self::zeros(c, c);
        for i in 0..c {
            w.weight[(13 * c + i) * c + i] = 1.0;
        }
        w
    }

    fn check(&self) -> Result<()> {
        if self.weight.len() != KERNEL_TAPS * self.c_in * self.c_out || self.bias.len() != self.c_out {
            return arg(format!(
                "conv weights {}x{}x{} / bias {} do not match c_in={} c_out={}",
                KERNEL_TAPS,
                self.c_in,
                self.c_out,
                self.bias.len(),
                self.c_in,
                self.c_out
            ));
        }
        Ok(())
    }
}

/// `y[o] = b + sum over taps and pairs of W_tap^T x[i]`.
pub(crate) fn conv_forward(rb: &Rulebook, x: &[f64], w: &ConvWeights) -> Vec<f64> {
    let (ci, co) = (w.c_in, w.c_out);
    let mut y: Vec<f64> = w.bias.iter().copied().cycle().take(rb.n_out * co).collect();
    for (k, list) in rb.pairs.iter().enumerate() {
        let wk = &w.weight[k * ci * co..(k + 1) * ci * co];
        for &(i, o) in list {
            let xi = &x[i as usize * ci..(i as usize + 1) * ci];
            let yo = &mut y[o as usize * co..(o as usize + 1) * co];
            for (a, xv) in xi.iter().enumerate() {
                if *xv == 0.0 {
                    continue;
                }
                let row = &wk[a * co..(a + 1) * co];
                for (yv, wv) in yo.iter_mut().zip(row) {
                    *yv += xv * wv;
                }
            }
        }
    }
    y
}

/// Reverse pass of [`conv_forward`]: accumulates weight and bias gradients
/// into `grad` and returns the input gradient.
pub(crate) fn conv_backward(rb: &Rulebook, x: &[f64], w: &ConvWeights, gy: &[f64], grad: &mut ConvWeights) -> Vec<f64> {
    let (ci, co) = (w.c_in, w.c_out);
    let mut gx = vec![0.0; rb.n_in * ci];
    for row in gy.chunks(co) {
        for (b, g) in grad.bias.iter_mut().zip(row) {
            *b += g;
        }
    }
    for (k, list) in rb.pairs.iter().enumerate() {
        let wk = &w.weight[k * ci * co..(k + 1) * ci * co];
        let gk = &mut grad.weight[k * ci * co..(k + 1) * ci * co];
        for &(i, o) in list {
            let (i, o) = (i as usize, o as usize);
            let go = &gy[o * co..(o + 1) * co];
            if go.iter().all(|g| *g == 0.0) {
                continue;
            }
            let xi = &x[i * ci..(i + 1) * ci];
            let gxi = &mut gx[i * ci..(i + 1) * ci];
            for a in 0..ci {
                let wrow = &wk[a * co..(a + 1) * co];
                let mut acc = 0.0;
                for (wv, gv) in wrow.iter().zip(go) {
                    acc += wv * gv;
                }
                gxi[a] += acc;
                let xv = xi[a];
                if xv != 0.0 {
                    let grow = &mut gk[a * co..(a + 1) * co];
                    for (gw, gv) in grow.iter_mut().zip(go) {
                        *gw += xv * gv;
                    }
                }
            }
        }
    }
    gx
}

/// How a sparse convolution maps input sites to output sites.
#[derive(Clone, Copy, Debug)]
pub enum ConvMode<'a> {
    /// Output sites equal input sites.
    Submanifold,
    /// Output sites are `floor(site / 2)`; stride doubles.
    Strided2,
    /// Transpose of the stride-2 convolution that produced the input from
    /// `target`; output sites are `target`, stride halves.
    Inverse2 { target: Option<&'a [Site]> },
}

/// Output sites, rulebook and output stride of `mode` applied to `x`.
fn plan(x: &SparseVoxelTensor, w: &ConvWeights, mode: ConvMode<'_>) -> Result<(Vec<Site>, Rulebook, u32)> {
    w.check()?;
    if x.channels != w.c_in {
        return arg(format!("input has {} channels, weights expect {}", x.channels, w.c_in));
    }
    match mode {
        ConvMode::Submanifold => {
            let rb = Rulebook::submanifold(&x.sites, &SiteMap::build(&x.sites));
            Ok((x.sites.clone(), rb, x.stride))
        }
        ConvMode::Strided2 => {
            let (out, rb) = Rulebook::strided(&x.sites);
            Ok((out, rb, x.stride * 2))
        }
        ConvMode::Inverse2 { target } => {
            let target = target.ok_or_else(|| Error::State("inverse convolution needs the recorded finer site set".into()))?;
            if x.stride < 2 {
                return Err(Error::State("inverse convolution applied to a stride-1 tensor".into()));
            }
            Ok((target.to_vec(), inverse_rulebook(&x.sites, target)?, x.stride / 2))
        }
    }
}

/// One 3x3x3 sparse convolution (no activation).
pub fn sparse_conv(x: &SparseVoxelTensor, w: &ConvWeights, mode: ConvMode<'_>) -> Result<SparseVoxelTensor> {
    let (sites, rb, stride) = plan(x, w, mode)?;
    let y = conv_forward(&rb, &x.features, w);
    SparseVoxelTensor::new(sites, y, w.c_out, stride)
}

/// Gradients of `<gy, sparse_conv(x, w, mode)>`: weight/bias gradient and
/// input feature gradient.
pub fn sparse_conv_backward(
    x: &SparseVoxelTensor,
    w: &ConvWeights,
    mode: ConvMode<'_>,
    gy: &[f64],
) -> Result<(ConvWeights, Vec<f64>)> {
    let (_, rb, _) = plan(x, w, mode)?;
    if gy.len() != rb.n_out * w.c_out {
        return arg(format!("output gradient has {} values, expected {}", gy.len(), rb.n_out * w.c_out));
    }
    let mut grad = ConvWeights::zeros(w.c_in, w.c_out);
    let gx = conv_backward(&rb, &x.features, w, gy, &mut grad);
    Ok((grad, gx))
}

/// Rulebook from coarse `sites` back to `target`, checking that the coarse
/// sites are exactly the stride-2 image of `target`.
fn inverse_rulebook(sites: &[Site], target: &[Site]) -> Result<Rulebook> {
    let (coarse, rb) = Rulebook::strided(target);
    let map = SiteMap::build(sites);
    if coarse.len() != sites.len() {
        return arg("coarse sites do not match the downsampled target set");
    }
    let remap: Vec<u32> = coarse
        .iter()
        .map(|s| map.get(s).map(|i| i as u32))
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Argument("coarse sites do not match the downsampled target set".into()))?;
    let mut t = rb.transposed();
    for list in t.pairs.iter_mut() {
        list.iter_mut().for_each(|p| p.0 = remap[p.0 as usize]);
    }
    Ok(t)
}
