//! Scalar abstraction for the tensor engine.
//!
//! Training runs on `f32`; gradient checking instantiates the same graphs at
//! `f64` where central finite differences are meaningful at step 1e-5.

use num_traits::{Float, NumAssign};
use std::fmt::Debug;

pub trait Scalar: Float + NumAssign + Default + Debug + Send + Sync + 'static {
    fn from_f64(v: f64) -> Self;
    fn to_f64_(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64_(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64_(self) -> f64 {
        self
    }
}
