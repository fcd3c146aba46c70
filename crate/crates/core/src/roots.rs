//! Bracketed root finding for monotone scalar functions.
//!
//! Everything here is derivative free: an exponential bracket search followed by Brent's
//! hybrid of bisection, secant and inverse quadratic interpolation. The positive-domain
//! solver works in the logarithm of the unknown so that roots spanning hundreds of decades
//! are bracketed in a few dozen evaluations.

use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum RootError {
    #[error("no sign change found while expanding the bracket")]
    NoBracket,
    #[error("function value is NaN at x = {0}")]
    NotANumber(f64),
    #[error("bracket endpoints do not have opposite signs")]
    SameSign,
    #[error("no convergence after {0} iterations")]
    MaxIterations(usize),
}

const MAX_ITER: usize = 200;

/// Brent's method on `[a, b]`, given `f(a)` and `f(b)` of opposite sign.
///
/// Infinite endpoint values are accepted as signs; the iteration falls back to bisection
/// until both ends are finite. Terminates when the bracket is narrower than
/// `4 eps |x| + xtol`.
pub fn brent<T, F>(mut f: F, a: T, b: T, fa: T, fb: T, xtol: T) -> Result<T, RootError>
where
    T: Real,
    F: FnMut(T) -> T,
{
    if fa.is_nan() {
        return Err(RootError::NotANumber(a.to_f64().unwrap_or(f64::NAN)));
    }
    if fb.is_nan() {
        return Err(RootError::NotANumber(b.to_f64().unwrap_or(f64::NAN)));
    }
    if fa == T::zero() {
        return Ok(a);
    }
    if fb == T::zero() {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(RootError::SameSign);
    }

    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let three = T::lit(3.0);
    let eps = T::epsilon();

    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    let (mut c, mut fc) = (b, fb);
    let mut d = b - a;
    let mut e = d;

    for _ in 0..MAX_ITER {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = two * eps * b.abs() + half * xtol;
        let xm = half * (c - b);
        if xm.abs() <= tol1 || fb == T::zero() {
            return Ok(b);
        }
        let interpolate = e.abs() >= tol1
            && fa.abs() > fb.abs()
            && fa.is_finite()
            && fb.is_finite()
            && fc.is_finite();
        if interpolate {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = two * xm * s;
                q = T::one() - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (two * xm * qq * (qq - r) - (b - a) * (r - T::one()));
                q = (qq - T::one()) * (r - T::one()) * (s - T::one());
            }
            if p > T::zero() {
                q = -q;
            }
            p = p.abs();
            let min1 = three * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if two * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b = if d.abs() > tol1 {
            b + d
        } else {
            b + tol1.abs() * xm.signum()
        };
        fb = f(b);
        if fb.is_nan() {
            return Err(RootError::NotANumber(b.to_f64().unwrap_or(f64::NAN)));
        }
    }
    Err(RootError::MaxIterations(MAX_ITER))
}

/// Solves `f(x) = target` for `x > 0`, where `f` is increasing on the positive reals.
///
/// The search starts at `guess`, grows or shrinks `x` geometrically (with an accelerating
/// factor) until `f - target` changes sign, refines with Brent's method in `ln x`, and
/// finishes with a short Brent polish in `x` itself so the result is accurate to a few ulps
/// even when `|ln x|` is in the hundreds.
pub fn solve_increasing_positive<T, F>(mut f: F, target: T, guess: T) -> Result<T, RootError>
where
    T: Real,
    F: FnMut(T) -> T,
{
    let guess = if guess > T::zero() && guess.is_finite() {
        guess
    } else {
        T::one()
    };
    let u_max = T::max_value().ln() - T::one();
    let u_min = T::min_positive_value().ln() + T::one();
    let u0 = guess.ln();
    let mut h = |u: T| f(u.exp()) - target;

    let h0 = h(u0);
    if h0.is_nan() {
        return Err(RootError::NotANumber(guess.to_f64().unwrap_or(f64::NAN)));
    }
    if h0 == T::zero() {
        return Ok(guess);
    }
    let upward = h0 < T::zero();
    let (mut u_in, mut h_in) = (u0, h0);
    let mut step = T::LN_2();
    let u_root = loop {
        let u_out = if upward { u_in + step } else { u_in - step };
        let u_out = u_out.max(u_min).min(u_max);
        let h_out = h(u_out);
        if h_out.is_nan() {
            return Err(RootError::NoBracket);
        }
        if h_out == T::zero() {
            return Ok(u_out.exp());
        }
        if h_out.signum() != h0.signum() {
            let (a, b, fa, fb) = if upward {
                (u_in, u_out, h_in, h_out)
            } else {
                (u_out, u_in, h_out, h_in)
            };
            break brent(&mut h, a, b, fa, fb, T::lit(2.0) * T::epsilon())?;
        }
        if u_out == u_max || u_out == u_min {
            return Err(RootError::NoBracket);
        }
        u_in = u_out;
        h_in = h_out;
        step = step * T::lit(2.0);
    };
    Ok(polish(&mut f, target, u_root.exp()))
}

/// Refines a root `x` that is already correct to a relative error far below `1e-9`.
fn polish<T, F>(f: &mut F, target: T, x: T) -> T
where
    T: Real,
    F: FnMut(T) -> T,
{
    let w = T::lit(1e-9);
    let (a, b) = (x * (T::one() - w), x * (T::one() + w));
    let (fa, fb) = (f(a) - target, f(b) - target);
    if fa < T::zero() && fb > T::zero() {
        brent(|z| f(z) - target, a, b, fa, fb, T::zero()).unwrap_or(x)
    } else {
        x
    }
}

/// Solves `f(x) = target` on the whole real line for increasing `f`, searching outward
/// from `x0` with steps that start at `step` and double. Gives up beyond `|x| = limit`.
pub fn solve_increasing<T, F>(mut f: F, target: T, x0: T, step: T, limit: T) -> Result<T, RootError>
where
    T: Real,
    F: FnMut(T) -> T,
{
    let mut h = |x: T| f(x) - target;
    let h0 = h(x0);
    if h0.is_nan() {
        return Err(RootError::NotANumber(x0.to_f64().unwrap_or(f64::NAN)));
    }
    if h0 == T::zero() {
        return Ok(x0);
    }
    let upward = h0 < T::zero();
    let (mut x_in, mut h_in) = (x0, h0);
    let mut step = step.abs();
    loop {
        let x_out = if upward { x_in + step } else { x_in - step };
        let x_out = x_out.max(-limit).min(limit);
        let h_out = h(x_out);
        if h_out.is_nan() {
            return Err(RootError::NoBracket);
        }
        if h_out == T::zero() {
            return Ok(x_out);
        }
        if h_out.signum() != h0.signum() {
            let (a, b, fa, fb) = if upward {
                (x_in, x_out, h_in, h_out)
            } else {
                (x_out, x_in, h_out, h_in)
            };
            return brent(&mut h, a, b, fa, fb, T::lit(2.0) * T::epsilon());
        }
        if x_out.abs() >= limit {
            return Err(RootError::NoBracket);
        }
        x_in = x_out;
        h_in = h_out;
        step = step * T::lit(2.0);
    }
}
