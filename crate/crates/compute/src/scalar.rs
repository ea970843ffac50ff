use std::fmt::{Debug, Display};

use ndarray::LinalgScalar;
use num_traits::Float;

/// Element type of tensors: `f32` for training, `f64` for verification.
pub trait Scalar: Float + LinalgScalar + Debug + Display + Default + Send + Sync + 'static {
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}
