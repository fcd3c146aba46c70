//! Single-step kernels for scalar equations: Dormand-Prince 5(4) with dense output and PI
//! step control, and an L-stable SDIRK method for stiff stretches.
//!
//! The translator driver decides what to do with rejected steps, domain errors and events.

use crate::real::Real;
use serde::{Deserialize, Serialize};

const A21: f64 = 0.2;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const C2: f64 = 0.2;
const C3: f64 = 0.3;
const C4: f64 = 0.8;
const C5: f64 = 8.0 / 9.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Quartic interpolant over one accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DenseStep<T: Real = f64> {
    pub t0: T,
    pub h: T,
    pub c: [T; 5],
}

impl<T: Real> DenseStep<T> {
    pub fn t1(&self) -> T {
        self.t0 + self.h
    }

    /// Interpolated solution at `t` in `[t0, t0 + h]`.
    pub fn eval(&self, t: T) -> T {
        self.eval_theta((t - self.t0) / self.h)
    }

    pub fn eval_theta(&self, s: T) -> T {
        let s1 = T::one() - s;
        let c = &self.c;
        c[0] + (c[1] + (c[2] + (c[3] + c[4] * s1) * s) * s1) * s
    }

    /// Derivative of the interpolant with respect to `t`.
    pub fn derivative(&self, t: T) -> T {
        let s = (t - self.t0) / self.h;
        let c = &self.c;
        // expand the nested form in powers of s
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let four = T::lit(4.0);
        // p(s) = c0 + c1 s + c2 s(1-s) + c3 s^2 (1-s) + c4 s^2 (1-s)^2
        let dp = c[1]
            + c[2] * (T::one() - two * s)
            + c[3] * (two * s - three * s * s)
            + c[4] * (two * s - three * two * s * s + four * s * s * s);
        dp / self.h
    }

    /// Exact integral of the interpolant over the whole step.
    pub fn integral(&self) -> T {
        let c = &self.c;
        // integrals over [0, 1] of 1, s, s(1-s), s^2(1-s), s^2(1-s)^2
        let w = [1.0, 0.5, 1.0 / 6.0, 1.0 / 12.0, 1.0 / 30.0];
        let inner = c[0] * T::lit(w[0])
            + c[1] * T::lit(w[1])
            + c[2] * T::lit(w[2])
            + c[3] * T::lit(w[3])
            + c[4] * T::lit(w[4]);
        inner * self.h
    }
}

/// Result of one trial step.
#[derive(Debug, Clone, Copy)]
pub struct Trial<T: Real> {
    pub y: T,
    /// `f(t + h, y)`, reusable as the first stage of the next step.
    pub dydt: T,
    /// Embedded error estimate (not normalized).
    pub err: T,
    pub dense: DenseStep<T>,
}

/// One Dormand-Prince step of size `h` from `(t, y)` with `k1 = f(t, y)`.
pub fn dopri5_step<T, E, F>(f: &mut F, t: T, y: T, k1: T, h: T) -> Result<Trial<T>, E>
where
    T: Real,
    F: FnMut(T, T) -> Result<T, E>,
{
    let l = T::lit;
    let k2 = f(t + l(C2) * h, y + h * l(A21) * k1)?;
    let k3 = f(t + l(C3) * h, y + h * (l(A31) * k1 + l(A32) * k2))?;
    let k4 = f(
        t + l(C4) * h,
        y + h * (l(A41) * k1 + l(A42) * k2 + l(A43) * k3),
    )?;
    let k5 = f(
        t + l(C5) * h,
        y + h * (l(A51) * k1 + l(A52) * k2 + l(A53) * k3 + l(A54) * k4),
    )?;
    let k6 = f(
        t + h,
        y + h * (l(A61) * k1 + l(A62) * k2 + l(A63) * k3 + l(A64) * k4 + l(A65) * k5),
    )?;
    let y1 = y + h * (l(A71) * k1 + l(A73) * k3 + l(A74) * k4 + l(A75) * k5 + l(A76) * k6);
    let k7 = f(t + h, y1)?;
    let err = h * (l(E1) * k1 + l(E3) * k3 + l(E4) * k4 + l(E5) * k5 + l(E6) * k6 + l(E7) * k7);

    let ydiff = y1 - y;
    let bspl = h * k1 - ydiff;
    let c4 = h * (l(D1) * k1 + l(D3) * k3 + l(D4) * k4 + l(D5) * k5 + l(D6) * k6 + l(D7) * k7);
    Ok(Trial {
        y: y1,
        dydt: k7,
        err,
        dense: DenseStep {
            t0: t,
            h,
            c: [y, ydiff, bspl, ydiff - h * k7 - bspl, c4],
        },
    })
}

/// Scaled error `|err| / (atol + rtol max(|y0|, |y1|))`; a step is acceptable when `<= 1`.
pub fn error_norm<T: Real>(err: T, y0: T, y1: T, rtol: T, atol: T) -> T {
    err.abs() / (atol + rtol * y0.abs().max(y1.abs()))
}

/// Proportional-integral step size controller.
#[derive(Debug, Clone, Copy)]
pub struct PiController<T: Real> {
    facold: T,
    beta: T,
    safety: T,
    fac_min: T,
    fac_max: T,
    rejected: bool,
}

impl<T: Real> Default for PiController<T> {
    fn default() -> Self {
        Self {
            facold: T::lit(1e-4),
            beta: T::lit(0.04),
            safety: T::lit(0.9),
            fac_min: T::lit(0.2),
            fac_max: T::lit(10.0),
            rejected: false,
        }
    }
}

impl<T: Real> PiController<T> {
    /// Next step size after a step with normalized error `err`. Returns `(accepted, h_new)`.
    pub fn propose(&mut self, err: T, h: T) -> (bool, T) {
        let expo1 = T::lit(0.2) - self.beta * T::lit(0.75);
        if !err.is_finite() {
            self.rejected = true;
            return (false, h * self.fac_min);
        }
        let fac11 = err.max(T::lit(1e-300)).powf(expo1);
        if err <= T::one() {
            let fac = fac11 / self.facold.powf(self.beta);
            let fac = (fac / self.safety)
                .max(self.fac_max.recip())
                .min(self.fac_min.recip());
            self.facold = err.max(T::lit(1e-4));
            // no growth right after a rejection
            let h_new = if self.rejected {
                (h / fac).min(h)
            } else {
                h / fac
            };
            self.rejected = false;
            (true, h_new)
        } else {
            self.rejected = true;
            let fac = (fac11 / self.safety).min(self.fac_min.recip());
            (false, h / fac)
        }
    }

    /// Forget the error history, e.g. after a forced step-size cut.
    pub fn reset(&mut self) {
        self.facold = T::lit(1e-4);
        self.rejected = true;
    }
}

/// Outcome of an implicit step that did not produce a trial value.
#[derive(Debug, Clone, PartialEq)]
pub enum ImplicitFailure<E> {
    Rhs(E),
    /// A stage equation could not be solved.
    Stage,
}

/// Result of one implicit trial step.
#[derive(Debug, Clone, Copy)]
pub struct ImplicitTrial<T: Real> {
    pub y: T,
    /// `f(t + h, y)`.
    pub dydt: T,
    /// Normalized error estimate; the step is acceptable when `<= 1`.
    pub err: T,
    pub dense: DenseStep<T>,
}

const SD_GAMMA: f64 = 0.25;
const SD_C: [f64; 5] = [0.25, 0.75, 11.0 / 20.0, 0.5, 1.0];
const SD_A: [[f64; 4]; 5] = [
    [0.0; 4],
    [0.5, 0.0, 0.0, 0.0],
    [17.0 / 50.0, -1.0 / 25.0, 0.0, 0.0],
    [371.0 / 1360.0, -137.0 / 2720.0, 15.0 / 544.0, 0.0],
    [25.0 / 24.0, -49.0 / 48.0, 125.0 / 16.0, -85.0 / 12.0],
];
/// Weights of the solution minus those of the embedded third-order formula.
const SD_E: [f64; 5] = [-9.0 / 48.0, -81.0 / 96.0, 25.0 / 32.0, 0.0, 0.25];

const STAGE_MAX: usize = 60;

/// One step of the L-stable, stiffly accurate SDIRK method of order 4 (five stages,
/// diagonal 1/4, embedded order 3) from `(t, y)` with `f0 = f(t, y)` and `jac ~ df/dy`.
/// `tol` is `(rtol, atol)`.
///
/// Every stage is a scalar equation `Y - h f(t_i, Y) / 4 = S_i`, solved by secant steps
/// inside a sign bracket. Points where `f` fails are treated as overshoots and pulled back
/// towards the last good iterate, which keeps the iteration inside the domain of `f`.
pub fn sdirk4_step<T, E, F>(
    f: &mut F,
    t: T,
    y: T,
    f0: T,
    h: T,
    jac: T,
    (rtol, atol): (T, T),
) -> Result<ImplicitTrial<T>, ImplicitFailure<E>>
where
    T: Real,
    F: FnMut(T, T) -> Result<T, E>,
{
    let l = T::lit;
    let hg = h * l(SD_GAMMA);
    let scale = atol + rtol * y.abs();
    let mut k = [T::zero(); 5];
    let mut stage_y = y;
    for i in 0..5 {
        let ti = t + l(SD_C[i]) * h;
        let mut s = y;
        for (j, kj) in k.iter().enumerate().take(i) {
            s = s + h * l(SD_A[i][j]) * *kj;
        }
        // predictor: previous stage slope carried over
        let slope = if i == 0 { f0 } else { k[i - 1] };
        let guess = s + hg * slope;
        let (yi, ki) = solve_stage(f, ti, s, hg, guess, stage_y, jac, scale)?;
        k[i] = ki;
        stage_y = yi;
    }
    let y1 = stage_y;
    let f1 = k[4];
    let raw = h * (0..5).fold(T::zero(), |acc, j| acc + l(SD_E[j]) * k[j]);
    // filtered so the estimate does not grow with the stiffness (Shampine)
    let est = raw / (T::one() - hg * jac).max(T::one());
    let err = est.abs() / (atol + rtol * y.abs().max(y1.abs()));

    let ydiff = y1 - y;
    let bspl = h * f0 - ydiff;
    Ok(ImplicitTrial {
        y: y1,
        dydt: f1,
        err,
        dense: DenseStep {
            t0: t,
            h,
            c: [y, ydiff, bspl, ydiff - h * f1 - bspl, T::zero()],
        },
    })
}

/// Solves `Y - hg f(t, Y) = s`. Returns `(Y, f(t, Y))`.
#[allow(clippy::too_many_arguments)]
fn solve_stage<T, E, F>(
    f: &mut F,
    t: T,
    s: T,
    hg: T,
    guess: T,
    fallback: T,
    jac: T,
    scale: T,
) -> Result<(T, T), ImplicitFailure<E>>
where
    T: Real,
    F: FnMut(T, T) -> Result<T, E>,
{
    let half = T::lit(0.5);
    // the initial guess may sit outside the domain; fall back to the previous stage value
    let (mut yk, mut fk) = match f(t, guess) {
        Ok(v) if v.is_finite() => (guess, v),
        _ => match f(t, fallback) {
            Ok(v) if v.is_finite() => (fallback, v),
            Ok(_) => return Err(ImplicitFailure::Stage),
            Err(e) => return Err(ImplicitFailure::Rhs(e)),
        },
    };
    let mut psi = yk - hg * fk - s;
    let mut deriv = T::one() - hg * jac;
    if !(deriv > T::lit(1e-3)) {
        deriv = T::one();
    }
    let (mut lo, mut hi): (Option<T>, Option<T>) = (None, None);
    let tiny = T::lit(1e-3) * scale;
    for _ in 0..STAGE_MAX {
        if psi < T::zero() {
            lo = Some(lo.map_or(yk, |a| a.max(yk)));
        } else if psi > T::zero() {
            hi = Some(hi.map_or(yk, |b| b.min(yk)));
        } else {
            return Ok((yk, fk));
        }
        let mut next = yk - psi / deriv;
        if let (Some(a), Some(b)) = (lo, hi) {
            if !(next > a && next < b) {
                next = half * (a + b);
            }
            if b - a <= tiny {
                return Ok((yk, fk));
            }
        }
        // pull back towards the current iterate until f is defined
        let mut fnext = None;
        for _ in 0..60 {
            match f(t, next) {
                Ok(v) if v.is_finite() => {
                    fnext = Some(v);
                    break;
                }
                _ => next = half * (next + yk),
            }
        }
        let Some(fn_) = fnext else {
            return Err(ImplicitFailure::Stage);
        };
        let psi_next = next - hg * fn_ - s;
        let dy = next - yk;
        if dy != T::zero() {
            let d = (psi_next - psi) / dy;
            if d > T::lit(1e-3) && d.is_finite() {
                deriv = d;
            }
        }
        yk = next;
        fk = fn_;
        psi = psi_next;
        if dy.abs() <= tiny {
            return Ok((yk, fk));
        }
    }
    Err(ImplicitFailure::Stage)
}

/// Step-size factor for an implicit step with normalized error `err` (embedded order 3).
pub fn implicit_step_factor<T: Real>(err: T) -> T {
    if !err.is_finite() {
        return T::lit(0.2);
    }
    (T::lit(0.9) * err.max(T::lit(1e-10)).powf(T::lit(-0.25)))
        .max(T::lit(0.2))
        .min(T::lit(8.0))
}
