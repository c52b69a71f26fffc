//! Scalar abstraction for the numeric core.
//!
//! Model code (HMM, logistic regression, SVD) is generic over [`Real`] so it
//! runs on `f32` or `f64`; the crate root exports `f64` aliases which the
//! pipeline and CLI use.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; constants like tolerances enter generic
    /// code through this.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant must convert to the scalar type")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// log(sum(exp(xs))) without overflow; -inf on an empty or all -inf input.
pub fn logsumexp<F: Real>(xs: &[F]) -> F {
    let mut m = F::neg_infinity();
    for &x in xs {
        if x > m {
            m = x;
        }
    }
    if m == F::neg_infinity() {
        return m;
    }
    let mut acc = F::zero();
    for &x in xs {
        acc += (x - m).exp();
    }
    m + acc.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logsumexp_matches_direct_sum() {
        let xs = [-1.0f64, -2.0, -3.0];
        let direct: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((logsumexp(&xs) - direct).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_empty_is_neg_inf() {
        assert_eq!(logsumexp::<f64>(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn logsumexp_handles_large_magnitudes() {
        let xs = [-1000.0f64, -1000.0];
        let got = logsumexp(&xs);
        assert!((got - (-1000.0 + std::f64::consts::LN_2)).abs() < 1e-9);
    }
}
