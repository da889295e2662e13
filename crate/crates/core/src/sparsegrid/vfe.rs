//! Volume feature extractor: a 28-layer sparse U-Net.
//!
//! | layers | op                     | level | width  |
//! |--------|------------------------|-------|--------|
//! | 1-3    | submanifold conv       | 1     | c      |
//! | 4      | stride-2 conv          | 1/2   | 2c     |
//! | 5-6    | submanifold conv       | 1/2   | 2c     |
//! | 7      | stride-2 conv          | 1/4   | 4c     |
//! | 8-10   | submanifold conv       | 1/4   | 4c     |
//! | 11     | stride-2 conv          | 1/8   | 8c     |
//! | 12-15  | submanifold conv       | 1/8   | 8c     |
//! | 16     | inverse conv, concat 10| 1/4   | 4c (+4c) |
//! | 17-20  | submanifold conv       | 1/4   | 4c     |
//! | 21     | inverse conv, concat 6 | 1/2   | 2c (+2c) |
//! | 22-24  | submanifold conv       | 1/2   | 2c     |
//! | 25     | inverse conv, concat 3 | 1     | c (+c) |
//! | 26-28  | submanifold conv       | 1     | c      |
//!
//! Every conv is followed by a ReLU. Layers 28, 24 and 20 are the code
//! volumes at strides 1, 2 and 4 (`c + 2c + 4c` channels in total).

use super::conv::{conv_backward, conv_forward, Rulebook};
use super::{ConvWeights, SiteMap, SparseVoxelTensor};
use crate::error::{arg, Result};
use crate::geometry::Site;

pub const VFE_LAYERS: usize = 28;
const LEVELS: usize = 4;
/// Layers whose outputs are the code volumes, finest first.
const CODE_LAYERS: [usize; 3] = [27, 23, 19];

#[derive(Clone, Copy, Debug, PartialEq)]
enum Kind {
    Sub,
    Down,
    Up,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Src {
    Input,
    Layer(usize),
    /// Channel concatenation `[first, second]`.
    Concat(usize, usize),
}

#[derive(Clone, Copy, Debug)]
struct Step {
    kind: Kind,
    level: usize,
    src: Src,
    c_in: usize,
    c_out: usize,
}

fn plan(input: usize, c: usize) -> Vec<Step> {
    use Kind::*;
    use Src::*;
    let mut p = Vec::with_capacity(VFE_LAYERS);
    let mut add = |kind, level, src, c_in, c_out| p.push(Step { kind, level, src, c_in, c_out });
    // encoder
    add(Sub, 0, Input, input, c);
    add(Sub, 0, Layer(0), c, c);
    add(Sub, 0, Layer(1), c, c);
    add(Down, 1, Layer(2), c, 2 * c);
    add(Sub, 1, Layer(3), 2 * c, 2 * c);
    add(Sub, 1, Layer(4), 2 * c, 2 * c);
    add(Down, 2, Layer(5), 2 * c, 4 * c);
    for l in 6..9 {
        add(Sub, 2, Layer(l), 4 * c, 4 * c);
    }
    add(Down, 3, Layer(9), 4 * c, 8 * c);
    for l in 10..14 {
        add(Sub, 3, Layer(l), 8 * c, 8 * c);
    }
    // decoder
    add(Up, 2, Layer(14), 8 * c, 4 * c);
    add(Sub, 2, Concat(15, 9), 8 * c, 4 * c);
    for l in 16..19 {
        add(Sub, 2, Layer(l), 4 * c, 4 * c);
    }
    add(Up, 1, Layer(19), 4 * c, 2 * c);
    add(Sub, 1, Concat(20, 5), 4 * c, 2 * c);
    for l in 21..23 {
        add(Sub, 1, Layer(l), 2 * c, 2 * c);
    }
    add(Up, 0, Layer(23), 2 * c, c);
    add(Sub, 0, Concat(24, 2), 2 * c, c);
    for l in 25..27 {
        add(Sub, 0, Layer(l), c, c);
    }
    debug_assert_eq!(p.len(), VFE_LAYERS);
    p
}

/// Parameters of all 28 convolutions. `input` is the voxel feature width,
/// `base` the finest decoder width (16 in the reference layout).
#[derive(Clone, Debug, PartialEq)]
pub struct VfeParams {
    pub input: usize,
    pub base: usize,
    pub layers: Vec<ConvWeights>,
}

/// Gradients share the parameter layout.
pub type VfeGrads = VfeParams;

impl VfeParams {
    pub fn zeros(input: usize, base: usize) -> Self {
        let layers = plan(input, base).iter().map(|s| ConvWeights::zeros(s.c_in, s.c_out)).collect();
        Self { input, base, layers }
    }

    pub fn init(input: usize, base: usize, rng: &mut crate::Rng) -> Self {
        let layers = plan(input, base).iter().map(|s| ConvWeights::init(s.c_in, s.c_out, rng)).collect();
        Self { input, base, layers }
    }

    /// Channel widths of the code volumes, finest first.
    pub fn code_widths(&self) -> [usize; 3] {
        [self.base, 2 * self.base, 4 * self.base]
    }

    pub fn code_width(&self) -> usize {
        7 * self.base
    }

    pub fn check(&self) -> Result<()> {
        let steps = plan(self.input, self.base);
        if self.layers.len() != steps.len() {
            return arg(format!("VFE needs {} layers, got {}", steps.len(), self.layers.len()));
        }
        for (i, (s, w)) in steps.iter().zip(&self.layers).enumerate() {
            if w.c_in != s.c_in
                || w.c_out != s.c_out
                || w.weight.len() != super::KERNEL_TAPS * s.c_in * s.c_out
                || w.bias.len() != s.c_out
            {
                return arg(format!(
                    "VFE layer {} expects {}->{} channels, got {}->{}",
                    i + 1,
                    s.c_in,
                    s.c_out,
                    w.c_in,
                    w.c_out
                ));
            }
        }
        Ok(())
    }
}

/// Everything the reverse pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct VfeTape {
    levels: Vec<Vec<Site>>,
    subm: Vec<Rulebook>,
    down: Vec<Rulebook>,
    up: Vec<Rulebook>,
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct VfeOutput {
    /// Code volumes at strides 1, 2 and 4.
    pub codes: Vec<SparseVoxelTensor>,
    pub tape: VfeTape,
}

fn concat_rows(a: &[f64], ca: usize, b: &[f64], cb: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    for (ra, rb) in a.chunks(ca.max(1)).zip(b.chunks(cb.max(1))) {
        out.extend_from_slice(ra);
        out.extend_from_slice(rb);
    }
    out
}

impl VfeTape {
    fn rulebook(&self, s: &Step) -> &Rulebook {
        match s.kind {
            Kind::Sub => &self.subm[s.level],
            Kind::Down => &self.down[s.level - 1],
            Kind::Up => &self.up[s.level],
        }
    }
}

/// Runs the U-Net on stride-1 voxel features.
pub fn vfe_forward(x: &SparseVoxelTensor, params: &VfeParams) -> Result<VfeOutput> {
    params.check()?;
    if x.channels != params.input {
        return arg(format!("VFE expects {} input channels, got {}", params.input, x.channels));
    }
    if x.stride != 1 {
        return arg("VFE input must be at stride 1");
    }
    let mut levels = vec![x.sites.clone()];
    let mut down = Vec::new();
    for _ in 1..LEVELS {
        let (coarse, rb) = Rulebook::strided(levels.last().unwrap());
        levels.push(coarse);
        down.push(rb);
    }
    let subm = levels.iter().map(|s| Rulebook::submanifold(s, &SiteMap::build(s))).collect();
    let up = down.iter().map(Rulebook::transposed).collect();
    let mut tape = VfeTape { levels, subm, down, up, inputs: Vec::new(), outputs: Vec::new() };

    let steps = plan(params.input, params.base);
    for (l, s) in steps.iter().enumerate() {
        let input = match s.src {
            Src::Input => x.features.clone(),
            Src::Layer(j) => tape.outputs[j].clone(),
            Src::Concat(a, b) => concat_rows(&tape.outputs[a], steps[a].c_out, &tape.outputs[b], steps[b].c_out),
        };
        let mut y = conv_forward(tape.rulebook(s), &input, &params.layers[l]);
        y.iter_mut().for_each(|v| *v = v.max(0.0));
        tape.inputs.push(input);
        tape.outputs.push(y);
    }
    let codes = CODE_LAYERS
        .iter()
        .enumerate()
        .map(|(lvl, &l)| SparseVoxelTensor {
            sites: tape.levels[lvl].clone(),
            features: tape.outputs[l].clone(),
            channels: steps[l].c_out,
            stride: 1 << lvl,
        })
        .collect();
    Ok(VfeOutput { codes, tape })
}

/// Reverse pass: given gradients for the three code volumes, returns the
/// parameter gradients and the gradient of the input voxel features.
pub fn vfe_backward(params: &VfeParams, tape: &VfeTape, code_grads: &[Vec<f64>]) -> (VfeGrads, Vec<f64>) {
    let steps = plan(params.input, params.base);
    let mut grads = VfeParams::zeros(params.input, params.base);
    let mut g_out: Vec<Vec<f64>> = tape.outputs.iter().map(|o| vec![0.0; o.len()]).collect();
    for (g, &l) in code_grads.iter().zip(&CODE_LAYERS) {
        g_out[l].iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }
    let mut g_input = vec![0.0; tape.levels[0].len() * params.input];
    for l in (0..steps.len()).rev() {
        let s = &steps[l];
        let mut g = std::mem::take(&mut g_out[l]);
        for (gv, ov) in g.iter_mut().zip(&tape.outputs[l]) {
            if *ov <= 0.0 {
                *gv = 0.0;
            }
        }
        if g.iter().all(|v| *v == 0.0) {
            continue;
        }
        let gx = conv_backward(tape.rulebook(s), &tape.inputs[l], &params.layers[l], &g, &mut grads.layers[l]);
        match s.src {
            Src::Input => g_input.iter_mut().zip(&gx).for_each(|(a, b)| *a += b),
            Src::Layer(j) => g_out[j].iter_mut().zip(&gx).for_each(|(a, b)| *a += b),
            Src::Concat(a, b) => {
                let (ca, cb) = (steps[a].c_out, steps[b].c_out);
                for (r, row) in gx.chunks(ca + cb).enumerate() {
                    g_out[a][r * ca..(r + 1) * ca].iter_mut().zip(&row[..ca]).for_each(|(p, q)| *p += q);
                    g_out[b][r * cb..(r + 1) * cb].iter_mut().zip(&row[ca..]).for_each(|(p, q)| *p += q);
                }
            }
        }
    }
    (grads, g_input)
}
