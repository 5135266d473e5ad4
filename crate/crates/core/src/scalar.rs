//! Floating-point abstraction shared by every numerical module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Real scalar the simulation core is generic over (`f32` or `f64`).
pub trait Scalar: Float + FromPrimitive + NumAssign + Sum + Debug + Display + Default + Send + Sync + 'static {
    /// Converts an `f64` literal. Panics only for values the type cannot represent at all.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    /// Absolute tolerance `v`, floored at a small multiple of machine epsilon so that
    /// tolerances tuned for `f64` stay attainable in `f32`.
    #[inline]
    fn tolerance(v: f64) -> Self {
        Self::lit(v).max(Self::epsilon() * Self::lit(16.0))
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `+1` for non-negative input (including `+0` and `-0`), `-1` otherwise.
#[inline]
pub(crate) fn side_sign<S: Scalar>(s: S) -> S {
    if s >= S::zero() {
        S::one()
    } else {
        -S::one()
    }
}

/// Pairwise (cascade) summation; the result depends only on the order of `values`.
pub fn pairwise_sum<S: Scalar>(values: &[S]) -> S {
    const BLOCK: usize = 32;
    if values.len() <= BLOCK {
        let mut acc = S::zero();
        for &v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
