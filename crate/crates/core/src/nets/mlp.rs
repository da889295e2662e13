use rand::Rng;

use crate::error::{arg, Result};

pub const LEAKY_SLOPE: f64 = 0.01;

/// `y = b + x W` with `W` stored `[n_in][n_out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub n_in: usize,
    pub n_out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self { n_in, n_out, weight: vec![0.0; n_in * n_out], bias: vec![0.0; n_out] }
    }

    pub fn init(n_in: usize, n_out: usize, rng: &mut crate::Rng) -> Self {
        let mut l = Self::zeros(n_in, n_out);
        let bound = (6.0 / n_in as f64).sqrt();
        l.weight.iter_mut().for_each(|v| *v = rng.gen_range(-bound..bound));
        l
    }

    #[inline]
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.bias);
        for (a, xv) in x.iter().enumerate() {
            if *xv == 0.0 {
                continue;
            }
            for (yv, wv) in y.iter_mut().zip(&self.weight[a * self.n_out..(a + 1) * self.n_out]) {
                *yv += xv * wv;
            }
        }
    }
}

/// Affine layers with leaky-ReLU between them and a linear scalar output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Post-activation values of every layer for a batch, input included.
#[derive(Clone, Debug)]
pub struct MlpTape {
    acts: Vec<Vec<f64>>,
    n: usize,
}

fn widths(n_in: usize, hidden: &[usize]) -> Vec<usize> {
    let mut w = vec![n_in];
    w.extend_from_slice(hidden);
    w.push(1);
    w
}

#[inline]
fn leaky(v: &mut [f64]) {
    for x in v {
        if *x < 0.0 {
            *x *= LEAKY_SLOPE;
        }
    }
}

impl Mlp {
    pub fn zeros(n_in: usize, hidden: &[usize]) -> Self {
        let w = widths(n_in, hidden);
        Self { layers: w.windows(2).map(|p| Linear::zeros(p[0], p[1])).collect() }
    }

    pub fn init(n_in: usize, hidden: &[usize], rng: &mut crate::Rng) -> Self {
        let w = widths(n_in, hidden);
        Self { layers: w.windows(2).map(|p| Linear::init(p[0], p[1], rng)).collect() }
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.n_in)
    }

    pub fn check(&self) -> Result<()> {
        if self.layers.is_empty() {
            return arg("MLP has no layers");
        }
        for pair in self.layers.windows(2) {
            if pair[0].n_out != pair[1].n_in {
                return arg("MLP layer widths do not chain");
            }
        }
        for l in &self.layers {
            if l.weight.len() != l.n_in * l.n_out || l.bias.len() != l.n_out {
                return arg(format!("MLP layer {}x{} has malformed weights", l.n_in, l.n_out));
            }
        }
        if self.layers.last().unwrap().n_out != 1 {
            return arg("MLP must end in a single output");
        }
        Ok(())
    }

    /// Scratch buffers sized for [`Mlp::eval`].
    pub fn scratch(&self) -> [Vec<f64>; 2] {
        let m = self.layers.iter().map(|l| l.n_out).max().unwrap_or(1).max(self.input_width());
        [vec![0.0; m], vec![0.0; m]]
    }

    /// Single-input evaluation without recording activations.
    pub fn eval(&self, x: &[f64], scratch: &mut [Vec<f64>; 2]) -> f64 {
        let [a, b] = scratch;
        a[..x.len()].copy_from_slice(x);
        let mut n = x.len();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            l.apply(&a[..n], &mut b[..l.n_out]);
            n = l.n_out;
            if i < last {
                leaky(&mut b[..n]);
            }
            std::mem::swap(a, b);
        }
        a[0]
    }

    /// Batch forward over `n` row-major inputs, recording activations.
    pub fn forward_tape(&self, x: Vec<f64>, n: usize) -> (Vec<f64>, MlpTape) {
        let last = self.layers.len() - 1;
        let mut acts = vec![x];
        for (i, l) in self.layers.iter().enumerate() {
            let mut y = vec![0.0; n * l.n_out];
            let prev = acts.last().unwrap();
            for (xr, yr) in prev.chunks(l.n_in).zip(y.chunks_mut(l.n_out)) {
                l.apply(xr, yr);
            }
            if i < last {
                leaky(&mut y);
            }
            acts.push(y);
        }
        (acts.last().unwrap().clone(), MlpTape { acts, n })
    }

    /// Accumulates parameter gradients for output cotangents `gy` (one per
    /// row) and returns the input gradient rows.
    pub fn backward(&self, tape: &MlpTape, gy: &[f64], grad: &mut Mlp) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut g = gy.to_vec();
        for i in (0..self.layers.len()).rev() {
            let (l, gl) = (&self.layers[i], &mut grad.layers[i]);
            if i < last {
                for (gv, yv) in g.iter_mut().zip(&tape.acts[i + 1]) {
                    if *yv < 0.0 {
                        *gv *= LEAKY_SLOPE;
                    }
                }
            }
            let x = &tape.acts[i];
            let mut gx = vec![0.0; tape.n * l.n_in];
            for ((xr, gr), gxr) in x.chunks(l.n_in).zip(g.chunks(l.n_out)).zip(gx.chunks_mut(l.n_in)) {
                for (b, gv) in gl.bias.iter_mut().zip(gr) {
                    *b += gv;
                }
                for a in 0..l.n_in {
                    let wr = &l.weight[a * l.n_out..(a + 1) * l.n_out];
                    let gw = &mut gl.weight[a * l.n_out..(a + 1) * l.n_out];
                    let xv = xr[a];
                    let mut acc = 0.0;
                    for ((gv, wv), gwv) in gr.iter().zip(wr).zip(gw.iter_mut()) {
                        acc += gv * wv;
                        *gwv += xv * gv;
                    }
                    gxr[a] = acc;
                }
            }
            g = gx;
        }
        g
    }
}
