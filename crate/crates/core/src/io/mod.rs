//! File formats: TNSR tensors and archives, OBJ meshes, PLY point clouds.

pub mod obj;
pub mod ply;
pub mod tnsr;

pub use obj::{read_obj, write_obj};
pub use ply::{read_ply, write_ply};
pub use tnsr::{Archive, DType, Tensor, TensorData};

use crate::error::Result;
use crate::geometry::{ScalarImage, VectorImage};

/// Scalar image as an `H x W` float32 tensor.
pub fn scalar_image_tensor(img: &ScalarImage) -> Result<Tensor> {
    Tensor::f32_from_f64(vec![img.height as u32, img.width as u32], &img.data)
}

/// Vector image as an `H x W x C` float32 tensor.
pub fn vector_image_tensor(img: &VectorImage) -> Result<Tensor> {
    Tensor::f32_from_f64(vec![img.height as u32, img.width as u32, img.channels as u32], &img.data)
}

pub fn scalar_image_from_tensor(t: &Tensor) -> Result<ScalarImage> {
    if t.dims.len() != 2 {
        return Err(crate::Error::Format(format!("expected an H x W tensor, found dims {:?}", t.dims)));
    }
    ScalarImage::new(t.dims[1] as usize, t.dims[0] as usize, t.to_f64()?)
}

pub fn vector_image_from_tensor(t: &Tensor) -> Result<VectorImage> {
    if t.dims.len() != 3 {
        return Err(crate::Error::Format(format!("expected an H x W x C tensor, found dims {:?}", t.dims)));
    }
    VectorImage::new(t.dims[1] as usize, t.dims[0] as usize, t.dims[2] as usize, t.to_f64()?)
}
