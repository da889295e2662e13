use super::conv2d::{relu_inplace, relu_mask, upsample2, upsample2_backward, Conv2d};
use crate::geometry::VectorImage;

/// One encoder-decoder stack:
/// `e = relu(enc x)`, `d = relu(down e)`, `m = relu(mid d)`,
/// `y = relu(out(e + up(m))) + x`.
#[derive(Clone, Debug, PartialEq)]
pub struct StackBlock {
    pub enc: Conv2d,
    pub down: Conv2d,
    pub mid: Conv2d,
    pub out: Conv2d,
}

/// Stem conv followed by `stacks.len()` residual encoder-decoder blocks.
/// The stem stride sets the output resolution (2 for LR, 1 for HR).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureExtractor {
    pub stem: Conv2d,
    pub stacks: Vec<StackBlock>,
}

#[derive(Clone, Debug)]
struct StackTape {
    x: VectorImage,
    e: VectorImage,
    d: VectorImage,
    m: VectorImage,
    s: VectorImage,
    o: VectorImage,
}

#[derive(Clone, Debug)]
pub struct FeTape {
    input: VectorImage,
    stem_out: VectorImage,
    stacks: Vec<StackTape>,
}

impl StackBlock {
    fn build(mut conv: impl FnMut(usize) -> Conv2d) -> Self {
        Self { enc: conv(1), down: conv(2), mid: conv(1), out: conv(1) }
    }

    fn convs_mut(&mut self) -> [(&'static str, &mut Conv2d); 4] {
        [("enc", &mut self.enc), ("down", &mut self.down), ("mid", &mut self.mid), ("out", &mut self.out)]
    }
}

fn add_into(a: &mut VectorImage, b: &VectorImage) {
    a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += y);
}

impl FeatureExtractor {
    pub fn zeros(c_in: usize, width: usize, stem_stride: usize, n_stacks: usize) -> Self {
        Self {
            stem: Conv2d::zeros(c_in, width, stem_stride),
            stacks: (0..n_stacks).map(|_| StackBlock::build(|s| Conv2d::zeros(width, width, s))).collect(),
        }
    }

    pub fn init(c_in: usize, width: usize, stem_stride: usize, n_stacks: usize, rng: &mut crate::Rng) -> Self {
        let stem = Conv2d::init(c_in, width, stem_stride, rng);
        let stacks = (0..n_stacks).map(|_| StackBlock::build(|s| Conv2d::init(width, width, s, rng))).collect();
        Self { stem, stacks }
    }

    pub fn width(&self) -> usize {
        self.stem.c_out
    }

    /// Every conv with a stable name, stem first.
    pub(crate) fn convs_mut(&mut self) -> Vec<(String, &mut Conv2d)> {
        let mut v = vec![("stem".to_string(), &mut self.stem)];
        for (i, s) in self.stacks.iter_mut().enumerate() {
            for (n, c) in s.convs_mut() {
                v.push((format!("stack{i}.{n}"), c));
            }
        }
        v
    }

    pub fn check(&self) -> crate::Result<()> {
        let w = self.width();
        self.stem.check()?;
        for s in &self.stacks {
            for (c, stride) in [(&s.enc, 1), (&s.down, 2), (&s.mid, 1), (&s.out, 1)] {
                c.check()?;
                if c.c_in != w || c.c_out != w || c.stride != stride {
                    return crate::error::arg("feature extractor stack has inconsistent widths");
                }
            }
        }
        Ok(())
    }

    pub fn forward(&self, x: &VectorImage) -> VectorImage {
        self.forward_tape(x).0
    }

    pub fn forward_tape(&self, x: &VectorImage) -> (VectorImage, FeTape) {
        let mut h = self.stem.forward(x);
        relu_inplace(&mut h);
        let stem_out = h.clone();
        let mut stacks = Vec::with_capacity(self.stacks.len());
        for b in &self.stacks {
            let mut e = b.enc.forward(&h);
            relu_inplace(&mut e);
            let mut d = b.down.forward(&e);
            relu_inplace(&mut d);
            let mut m = b.mid.forward(&d);
            relu_inplace(&mut m);
            let mut s = upsample2(&m, e.width, e.height);
            add_into(&mut s, &e);
            let mut o = b.out.forward(&s);
            relu_inplace(&mut o);
            let mut next = o.clone();
            add_into(&mut next, &h);
            stacks.push(StackTape { x: h, e, d, m, s, o });
            h = next;
        }
        (h, FeTape { input: x.clone(), stem_out, stacks })
    }

    /// Accumulates parameter gradients into `grad` for output cotangent `g`.
    pub fn backward(&self, tape: &FeTape, g: &VectorImage, grad: &mut FeatureExtractor) {
        let mut gh = g.clone();
        for ((b, t), gb) in self.stacks.iter().zip(&tape.stacks).zip(grad.stacks.iter_mut()).rev() {
            // residual path carries gh straight through
            let mut go = gh.clone();
            relu_mask(&mut go, &t.o);
            let gs = b.out.backward(&t.s, &go, &mut gb.out);
            let mut ge = gs.clone();
            let mut gm = upsample2_backward(&gs, t.m.width, t.m.height);
            relu_mask(&mut gm, &t.m);
            let mut gd = b.mid.backward(&t.d, &gm, &mut gb.mid);
            relu_mask(&mut gd, &t.d);
            add_into(&mut ge, &b.down.backward(&t.e, &gd, &mut gb.down));
            relu_mask(&mut ge, &t.e);
            add_into(&mut gh, &b.enc.backward(&t.x, &ge, &mut gb.enc));
        }
        relu_mask(&mut gh, &tape.stem_out);
        self.stem.backward(&tape.input, &gh, &mut grad.stem);
    }
}
