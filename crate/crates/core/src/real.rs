//! Scalar abstraction shared by the numeric kernels.

use num_traits::{Float, FloatConst, FromPrimitive};
use std::fmt::{Debug, Display};

/// Floating point scalar usable by every generic kernel in this crate.
pub trait Real:
    Float + FloatConst + FromPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal. Panics only for values the type cannot hold at all.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable")
    }

    /// `ln(1 + w^2)` without overflow for large `w`.
    #[inline]
    fn ln1p_sq(self) -> Self {
        let w = self.abs();
        if w > Self::one() {
            Self::lit(2.0) * w.ln() + (w * w).recip().ln_1p()
        } else {
            (w * w).ln_1p()
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Halton low-discrepancy sequence, used wherever a deterministic "random" probe set is needed.
pub(crate) fn halton(index: usize, base: usize) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let mut i = index;
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

const PRIMES: [usize; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Point `index` of a Halton sequence in `[lo, hi]^dim`, spread log-uniformly.
pub(crate) fn halton_point(index: usize, dim: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..dim)
        .map(|d| {
            let u = halton(index + 1, PRIMES[d % PRIMES.len()]);
            lo * (hi / lo).powf(u)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln1p_sq_matches_naive_in_range() {
        for &w in &[1e-8_f64, 0.3, 1.0, 7.5, 1e5] {
            let naive = (w * w).ln_1p();
            assert!((w.ln1p_sq() - naive).abs() <= 1e-14 * naive.abs());
        }
        // far past overflow of w*w
        let w = 1e200_f64;
        assert!((w.ln1p_sq() - 2.0 * w.ln()).abs() < 1e-12);
    }

    #[test]
    fn halton_points_stay_in_box() {
        for i in 0..200 {
            for x in halton_point(i, 5, 0.1, 10.0) {
                assert!((0.1..=10.0).contains(&x));
            }
        }
    }
}
