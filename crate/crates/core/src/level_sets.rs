//! Level sets `w / (r (1 + w^2)^beta) = m` of the translator ratio.
//!
//! With `m = gamma` the curve is a subsolution of the translator equation, and with
//! `m = gamma_plus` (nondegenerate speeds) a supersolution; solutions are sandwiched
//! between them.

use crate::real::Real;
use crate::roots::brent;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierKind {
    Subsolution,
    Supersolution,
    Neutral,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LevelSetError {
    #[error("beta = {0} must be below 1/2, otherwise r is not a function of w")]
    BetaTooLarge(f64),
    #[error("level value must be positive and finite, got {0}")]
    BadLevel(f64),
}

/// The curve `r -> w_m(r)` for one level `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierCurve<T: Real = f64> {
    m: T,
    beta: T,
    kind: BarrierKind,
}

/// `w / (r (1 + w^2)^beta)`, evaluated in logarithms so it survives huge `w`.
pub fn level_ratio<T: Real>(r: T, w: T, beta: T) -> T {
    (w.ln() - r.ln() - beta * w.ln1p_sq()).exp()
}

impl<T: Real> BarrierCurve<T> {
    pub fn new(m: T, beta: T, kind: BarrierKind) -> Result<Self, LevelSetError> {
        if !(beta < T::lit(0.5)) {
            return Err(LevelSetError::BetaTooLarge(
                beta.to_f64().unwrap_or(f64::NAN),
            ));
        }
        if !(m > T::zero()) || !m.is_finite() {
            return Err(LevelSetError::BadLevel(m.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(Self { m, beta, kind })
    }

    pub fn m(&self) -> T {
        self.m
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn kind(&self) -> BarrierKind {
        self.kind
    }

    /// Homogeneity degree `alpha = 1 / (1 - 2 beta)` matching this curve's `beta`.
    pub fn alpha(&self) -> T {
        (T::one() - T::lit(2.0) * self.beta).recip()
    }

    /// Solves for `s = ln w` given `ln r`.
    ///
    /// `F(s) = s - beta ln(1 + e^{2s}) - ln(m r)` has slope between `1` and `1 - 2 beta`,
    /// both positive, so one evaluation at the asymptotic guess yields a guaranteed bracket.
    pub fn ln_w_of_ln_r(&self, ln_r: T) -> T {
        let two = T::lit(2.0);
        let beta = self.beta;
        let c = self.m.ln() + ln_r;
        let f = |s: T| s - beta * s.exp().ln1p_sq() - c;
        // w ~ m r for small w and w ~ (m r)^alpha for large w
        let s0 = if c > T::zero() { c * self.alpha() } else { c };
        let f0 = f(s0);
        if f0 == T::zero() {
            return s0;
        }
        let one = T::one();
        let lo_slope = one.min(one - two * beta);
        let hi_slope = one.max(one - two * beta);
        let (near, far) = (s0 - f0 / hi_slope, s0 - f0 / lo_slope);
        let (a, b) = if near < far { (near, far) } else { (far, near) };
        // widen by a few ulps so rounding in `f` cannot put the root outside
        let pad = T::lit(8.0) * T::epsilon() * (one + a.abs().max(b.abs()));
        let (a, b) = (a - pad, b + pad);
        let (fa, fb) = (f(a), f(b));
        if fa.signum() == fb.signum() {
            // the bracket already pins the root to rounding level
            return if fa.abs() < fb.abs() { a } else { b };
        }
        brent(f, a, b, fa, fb, T::epsilon()).unwrap_or((a + b) / two)
    }

    /// The unique `w > 0` on this level set above radius `r > 0`.
    pub fn w_of_r(&self, r: T) -> T {
        self.ln_w_of_ln_r(r.ln()).exp()
    }

    /// `dw/dr = m (1 + w^2)^(1+beta) / (1 + (1 - 2 beta) w^2)` along the curve.
    pub fn dw_dr(&self, w: T) -> T {
        let one = T::one();
        let k = one - T::lit(2.0) * self.beta;
        if w <= one {
            let w2 = w * w;
            self.m * (one + w2).powf(one + self.beta) / (one + k * w2)
        } else {
            // factor out w^2 so nothing overflows
            let inv2 = (w * w).recip();
            self.m * w.powf(T::lit(2.0) * self.beta) * (one + inv2).powf(one + self.beta)
                / (inv2 + k)
        }
    }

    /// Predicted large-`r` power laws `(w ~ r^alpha, dw/dr ~ r^(alpha - 1))`.
    pub fn asymptotic_exponents(&self, alpha: T) -> (T, T) {
        (alpha, alpha - T::one())
    }

    /// The defining ratio `w / (r (1 + w^2)^beta)`.
    pub fn ratio(&self, r: T, w: T) -> T {
        level_ratio(r, w, self.beta)
    }
}
