//! Scalar abstraction for the numeric kernel.
//!
//! The linear algebra and the simplex core are generic over an ordered
//! field so the same code runs in hardware floats (production) and in
//! exact rational arithmetic (reference checks). Tolerances collapse to
//! zero for exact types.

use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive, Zero};
use std::fmt;

pub trait Scalar: Clone + PartialOrd + Num + Signed + fmt::Debug + fmt::Display + Send + Sync {
    fn from_f64(v: f64) -> Self;
    fn to_f64(&self) -> f64;

    /// Magnitudes at or below this are treated as zero when selecting pivots.
    fn pivot_tol() -> Self;

    /// Internal feasibility tolerance (1e-9 for f64, exact zero for rationals).
    fn feas_tol() -> Self;

    fn is_exact() -> bool;
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn pivot_tol() -> Self {
        1e-10
    }
    fn feas_tol() -> Self {
        1e-9
    }
    fn is_exact() -> bool {
        false
    }
}

impl Scalar for BigRational {
    fn from_f64(v: f64) -> Self {
        <BigRational as FromPrimitive>::from_f64(v)
            .expect("finite value required for exact arithmetic")
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn pivot_tol() -> Self {
        BigRational::zero()
    }
    fn feas_tol() -> Self {
        BigRational::zero()
    }
    fn is_exact() -> bool {
        true
    }
}

/// Concrete scalar used by the solver stack.
pub type F = f64;
