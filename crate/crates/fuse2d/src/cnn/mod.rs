//! From-scratch convolutional classifier.
//!
//! The network is an ordered list of layers (3x3 same-padding convolutions
//! with ReLU, 2x2 max-pooling, flatten, dense, softmax) trained with Adam on
//! a weighted cross-entropy loss. Everything is implemented directly on flat
//! `Vec` storage in HWC order; no tensor library is involved.
//!
//! All numerics are generic over [`Scalar`] so the same code runs in f32 for
//! production training and in f64 for finite-difference gradient checking.

mod adam;
mod gradcheck;
mod loss;
mod model;
mod serial;
mod train;

pub use adam::AdamConfig;
pub use gradcheck::{check_arch, run_gradient_check, GradCheckReport};
pub use loss::{softmax, weighted_cross_entropy};
pub use model::{
    init_model, BatchCache, Gradients, Layer, LayerGrads, LayerSpec, Model, Shape,
};
pub use serial::{load_model, model_from_bytes, model_to_bytes, save_model};
pub use train::{
    evaluate_accuracy, fit_two_stage, write_history_csv, Dataset, EpochStats, Profile,
    TrainConfig, TrainHistory,
};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the network computes in: f32 in production, f64 for
/// gradient checks.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
    /// Narrows an f64 constant into this scalar type.
    fn cast(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite f64 converts")
    }

    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// A batch of images in NHWC order, flattened into one contiguous buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBatch<F> {
    data: Vec<F>,
    n: usize,
    h: usize,
    w: usize,
    c: usize,
}

impl<F: Scalar> ImageBatch<F> {
    pub fn new(data: Vec<F>, n: usize, h: usize, w: usize, c: usize) -> crate::Result<Self> {
        if data.len() != n * h * w * c {
            return Err(crate::Error::InvalidModel(format!(
                "batch buffer holds {} values, expected {n}x{h}x{w}x{c}",
                data.len()
            )));
        }
        Ok(ImageBatch { data, n, h, w, c })
    }

    pub fn empty(h: usize, w: usize, c: usize) -> Self {
        ImageBatch {
            data: Vec::new(),
            n: 0,
            h,
            w,
            c,
        }
    }

    pub fn push(&mut self, example: &[F]) {
        assert_eq!(example.len(), self.h * self.w * self.c);
        self.data.extend_from_slice(example);
        self.n += 1;
    }

    pub fn example(&self, i: usize) -> &[F] {
        let len = self.h * self.w * self.c;
        &self.data[i * len..(i + 1) * len]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }
}
