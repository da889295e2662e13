use crate::error::{arg, Result};

/// Dense single-channel image, row-major. NaN marks invalid pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl ScalarImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return arg(format!(
                "scalar image {}x{} needs {} values, got {}",
                width,
                height,
                width * height,
                data.len()
            ));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|d| !d.is_nan()).count()
    }
}

/// Dense multi-channel image, row-major with interleaved channels.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl VectorImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return arg("vector image needs at least one channel");
        }
        if data.len() != width * height * channels {
            return arg(format!(
                "vector image {}x{}x{} needs {} values, got {}",
                width,
                height,
                channels,
                width * height * channels,
                data.len()
            ));
        }
        Ok(Self { width, height, channels, data })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self { width, height, channels, data: vec![0.0; width * height * channels] }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let o = (y * self.width + x) * self.channels;
        &self.data[o..o + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let o = (y * self.width + x) * self.channels;
        &mut self.data[o..o + self.channels]
    }

    /// Copy with every NaN replaced by zero. Network inputs must be finite.
    pub fn nan_to_zero(&self) -> Self {
        let data = self.data.iter().map(|v| if v.is_nan() { 0.0 } else { *v }).collect();
        Self { data, ..*self }
    }

    /// Channel-wise concatenation of two images with equal spatial size.
    pub fn concat_channels(&self, other: &VectorImage) -> Result<Self> {
        if self.width != other.width || self.height != other.height {
            return arg(format!(
                "cannot concatenate {}x{} with {}x{}",
                self.width, self.height, other.width, other.height
            ));
        }
        let channels = self.channels + other.channels;
        let mut data = Vec::with_capacity(self.width * self.height * channels);
        for (a, b) in self.data.chunks(self.channels).zip(other.data.chunks(other.channels)) {
            data.extend_from_slice(a);
            data.extend_from_slice(b);
        }
        Ok(Self { width: self.width, height: self.height, channels, data })
    }
}

/// The four pixel taps of a bilinear lookup: pixel offsets into the
/// row-major pixel array and their weights. Weights sum to one.
#[derive(Clone, Copy, Debug)]
pub struct BilinearTaps {
    pub index: [usize; 4],
    pub weight: [f64; 4],
}

/// Bilinear taps for continuous pixel coordinates `(u, v)`, where pixel
/// `(i, j)` has its center at `(i + 0.5, j + 0.5)`. Coordinates are clamped
/// to the centers of the border pixels.
pub fn bilinear_taps(width: usize, height: usize, u: f64, v: f64) -> BilinearTaps {
    let clamp = |c: f64, n: usize| {
        let c = c - 0.5;
        if c.is_nan() {
            0.0
        } else {
            c.clamp(0.0, (n - 1) as f64)
        }
    };
    let x = clamp(u, width);
    let y = clamp(v, height);
    let x0 = (x.floor() as usize).min(width - 1);
    let y0 = (y.floor() as usize).min(height - 1);
    let x1 = (x0 + 1).min(width - 1);
    let y1 = (y0 + 1).min(height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    BilinearTaps {
        index: [y0 * width + x0, y0 * width + x1, y1 * width + x0, y1 * width + x1],
        weight: [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy],
    }
}

/// Bilinearly interpolated feature vector at continuous pixel coordinates.
pub fn bilinear_sample(img: &VectorImage, u: f64, v: f64) -> Vec<f64> {
    let mut out = vec![0.0; img.channels];
    bilinear_sample_into(img, u, v, &mut out);
    out
}

pub(crate) fn bilinear_sample_into(img: &VectorImage, u: f64, v: f64, out: &mut [f64]) {
    let taps = bilinear_taps(img.width, img.height, u, v);
    let c = img.channels;
    out.iter_mut().for_each(|o| *o = 0.0);
    for (&idx, &w) in taps.index.iter().zip(&taps.weight) {
        if w == 0.0 {
            continue;
        }
        let px = &img.data[idx * c..idx * c + c];
        for (o, p) in out.iter_mut().zip(px) {
            *o += w * p;
        }
    }
}

/// Adjoint of [`bilinear_sample`]: scatters `grad` into `img_grad` with the
/// same weights the forward lookup used.
pub(crate) fn bilinear_scatter(img_grad: &mut VectorImage, u: f64, v: f64, grad: &[f64]) {
    let taps = bilinear_taps(img_grad.width, img_grad.height, u, v);
    let c = img_grad.channels;
    for (&idx, &w) in taps.index.iter().zip(&taps.weight) {
        if w == 0.0 {
            continue;
        }
        let px = &mut img_grad.data[idx * c..idx * c + c];
        for (p, g) in px.iter_mut().zip(grad) {
            *p += w * g;
        }
    }
}
