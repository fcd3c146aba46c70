//! Inverting the constraint `f(x, y, .., y) = 1` in either slot.
//!
//! `g(y)` is the first curvature that puts `(x, y e)` on the unit level set of `f`, and
//! `g1(x)` is the inverse map. Ellipticity makes both monotone, so everything is solved by
//! bracketing. The large-`y` behaviour of `g` (its limit and decay exponent) drives the
//! entire/bounded classification.

use crate::limits::aitken_tail;
use crate::roots::{solve_increasing, solve_increasing_positive, RootError};
use crate::speed::{compute_invariants, SpeedError, SpeedFunction, SpeedInvariants};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConstraintError {
    #[error("argument {value} lies outside the domain ({lo}, {hi})")]
    OutOfDomain { value: f64, lo: f64, hi: f64 },
    #[error("root bracketing failed: {0}")]
    BracketFailure(String),
    #[error("not applicable: {0}")]
    NotApplicable(&'static str),
    #[error("tail of g did not converge: {0}")]
    NonConvergent(String),
    #[error(transparent)]
    Speed(#[from] SpeedError),
}

/// Tail-fit window and thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailConfig {
    /// `log10` of the smallest and largest `y` in the decay fit.
    pub fit_decades: (f64, f64),
    /// Points per decade in the decay fit.
    pub points_per_decade: usize,
    /// Relative change between the last two samples below which `g` counts as settled.
    pub settle_tol: f64,
    /// Log-log slope below which an unsettled tail counts as decaying to zero.
    pub decay_slope: f64,
}

impl Default for TailConfig {
    fn default() -> Self {
        Self {
            fit_decades: (3.0, 8.0),
            points_per_decade: 5,
            settle_tol: 1e-6,
            decay_slope: -0.05,
        }
    }
}

/// Least-squares power law `g(y) ~ c y^-k` over the tail window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub exponent: f64,
    pub log_constant: f64,
    /// Root mean square residual of the log-log fit.
    pub rms_residual: f64,
    /// Decay exponents fitted on each decade of the window separately.
    pub local_exponents: Vec<f64>,
    pub window: (f64, f64),
}

impl TailFit {
    /// Spread of the per-decade exponents; zero for an exact power law.
    pub fn exponent_spread(&self) -> f64 {
        let lo = self
            .local_exponents
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .local_exponents
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        hi - lo
    }
}

/// Linear continuation of `psi(tau) = ln f(e^tau, 1, .., 1)` past the range where `f` can be
/// evaluated directly.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Edge {
    tau: f64,
    psi: f64,
    slope: f64,
}

/// A speed together with the domain of `g` and the data needed to evaluate `g` in logs.
#[derive(Debug, Clone)]
pub struct ConstraintContext {
    speed: SpeedFunction,
    invariants: SpeedInvariants,
    y_min: f64,
    y_max: f64,
    lower: Edge,
    upper: Edge,
    tail: TailConfig,
}

const EDGE_CANDIDATES: [f64; 5] = [700.0, 300.0, 100.0, 30.0, 10.0];

impl ConstraintContext {
    pub fn new(speed: SpeedFunction) -> Result<Self, ConstraintError> {
        let invariants = compute_invariants(&speed)?;
        Self::with_invariants(speed, invariants)
    }

    pub fn with_invariants(
        speed: SpeedFunction,
        invariants: SpeedInvariants,
    ) -> Result<Self, ConstraintError> {
        let alpha = invariants.alpha;
        let y_max = invariants.gamma_plus.unwrap_or(f64::INFINITY);
        let y_min = match upper_limit(&speed)? {
            Some(sup) if sup > 0.0 => sup.powf(-1.0 / alpha),
            _ => 0.0,
        };
        let lower = find_edge(&speed, -1.0)?;
        let upper = find_edge(&speed, 1.0)?;
        Ok(Self {
            speed,
            invariants,
            y_min,
            y_max,
            lower,
            upper,
            tail: TailConfig::default(),
        })
    }

    pub fn with_tail_config(mut self, tail: TailConfig) -> Self {
        self.tail = tail;
        self
    }

    pub fn speed(&self) -> &SpeedFunction {
        &self.speed
    }

    pub fn invariants(&self) -> &SpeedInvariants {
        &self.invariants
    }

    /// Open interval on which `g` is defined.
    pub fn g_domain(&self) -> (f64, f64) {
        (self.y_min, self.y_max)
    }

    fn check_domain(&self, y: f64) -> Result<(), ConstraintError> {
        if !(y > self.y_min && y < self.y_max) || !y.is_finite() {
            return Err(ConstraintError::OutOfDomain {
                value: y,
                lo: self.y_min,
                hi: self.y_max,
            });
        }
        Ok(())
    }

    /// `x` with `f(x, y e) = 1`.
    pub fn solve_g(&self, y: f64) -> Result<f64, ConstraintError> {
        self.check_domain(y)?;
        let f = |x: f64| self.speed.eval_split(x, y).unwrap_or(f64::NAN);
        solve_increasing_positive(f, 1.0, y).map_err(|e| self.root_error(e, y))
    }

    /// `y` with `f(x, y e) = 1`.
    pub fn solve_g1(&self, x: f64) -> Result<f64, ConstraintError> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(ConstraintError::OutOfDomain {
                value: x,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        let f = |y: f64| self.speed.eval_split(x, y).unwrap_or(f64::NAN);
        solve_increasing_positive(f, 1.0, x).map_err(|e| match e {
            RootError::NoBracket => ConstraintError::OutOfDomain {
                value: x,
                lo: 0.0,
                hi: f64::INFINITY,
            },
            other => ConstraintError::BracketFailure(format!("g1({x}): {other}")),
        })
    }

    fn root_error(&self, e: RootError, y: f64) -> ConstraintError {
        match e {
            // a monotone function that never reaches 1 means y is past an end of the domain
            RootError::NoBracket => ConstraintError::OutOfDomain {
                value: y,
                lo: self.y_min,
                hi: self.y_max,
            },
            other => ConstraintError::BracketFailure(format!("g({y}): {other}")),
        }
    }

    /// `psi(tau) = ln f(e^tau, 1, .., 1)`, continued linearly beyond the evaluable range.
    fn psi(&self, tau: f64) -> f64 {
        if tau < self.lower.tau {
            return self.lower.psi + self.lower.slope * (tau - self.lower.tau);
        }
        if tau > self.upper.tau {
            return self.upper.psi + self.upper.slope * (tau - self.upper.tau);
        }
        self.speed
            .eval_split(tau.exp(), 1.0)
            .map(f64::ln)
            .unwrap_or(f64::NAN)
    }

    /// `ln f(x, y e)` from `ln x` and `ln y`, valid far outside the floating point range.
    ///
    /// Uses `f(x, y e) = y^alpha f(x / y, e)`.
    pub fn ln_f_split(&self, ln_x: f64, ln_y: f64) -> f64 {
        if ln_x.abs() < 700.0 && ln_y.abs() < 700.0 {
            if let Ok(v) = self.speed.eval_split(ln_x.exp(), ln_y.exp()) {
                if v.is_normal() {
                    return v.ln();
                }
            }
        }
        self.invariants.alpha * ln_y + self.psi(ln_x - ln_y)
    }

    /// `ln g(y)` from `ln y`. Agrees with `solve_g` where that is representable and
    /// continues the tail of `psi` as a power law beyond it.
    pub fn ln_g(&self, ln_y: f64) -> Result<f64, ConstraintError> {
        let y = ln_y.exp();
        if ln_y >= self.y_max.ln() || ln_y <= self.y_min.ln() || ln_y.is_nan() {
            return Err(ConstraintError::OutOfDomain {
                value: y,
                lo: self.y_min,
                hi: self.y_max,
            });
        }
        if ln_y.abs() < 700.0 {
            // fails when the root itself is not representable; the log path handles that
            if let Ok(x) = self.solve_g(y) {
                if x.is_normal() && x < f64::MAX {
                    return Ok(x.ln());
                }
            }
        }
        let target = -self.invariants.alpha * ln_y;
        let tau = solve_increasing(|t| self.psi(t), target, 0.0, 1.0, 1e300)
            .map_err(|e| self.root_error(e, y))?;
        Ok(ln_y + tau)
    }

    /// `L = lim g(y)` as `y -> infinity`, for degenerate speeds.
    pub fn tail_limit(&self) -> Result<f64, ConstraintError> {
        if !self.invariants.degenerate {
            return Err(ConstraintError::NotApplicable(
                "g has a bounded domain for nondegenerate speeds",
            ));
        }
        let base = self.y_min.max(1.0);
        let ys: Vec<f64> = (1..=8).map(|k| base * 10f64.powi(k)).collect();
        let gs = ys
            .iter()
            .map(|&y| self.solve_g(y))
            .collect::<Result<Vec<_>, _>>()?;
        for w in gs.windows(2) {
            if w[1] > w[0] {
                return Err(ConstraintError::NonConvergent(format!(
                    "g is not decreasing along the probes ({} -> {})",
                    w[0], w[1]
                )));
            }
        }
        let n = gs.len();
        let last = gs[n - 1];
        let change = (gs[n - 2] - last) / gs[n - 2];
        if change < self.tail.settle_tol {
            let (_, est) = aitken_tail(&gs).unwrap();
            return Ok(est.clamp(0.0, last));
        }
        let slope = (last.ln() - gs[n - 2].ln()) / (ys[n - 1] / ys[n - 2]).ln();
        if slope < self.tail.decay_slope {
            return Ok(0.0);
        }
        Err(ConstraintError::NonConvergent(format!(
            "last relative change {change:e}, log-log slope {slope}"
        )))
    }

    /// Power-law fit `g(y) ~ c y^-k` over the tail window, for degenerate speeds with `L = 0`.
    pub fn tail_decay_exponent(&self) -> Result<TailFit, ConstraintError> {
        if !self.invariants.degenerate {
            return Err(ConstraintError::NotApplicable("speed is nondegenerate"));
        }
        if self.tail_limit()? > 0.0 {
            return Err(ConstraintError::NotApplicable("g has a positive limit"));
        }
        let (d0, d1) = self.tail.fit_decades;
        let per = self.tail.points_per_decade.max(2);
        let count = ((d1 - d0) * per as f64).round() as usize + 1;
        let mut xs = Vec::with_capacity(count);
        let mut ls = Vec::with_capacity(count);
        for i in 0..count {
            let ln_y = (d0 + (d1 - d0) * i as f64 / (count - 1) as f64) * std::f64::consts::LN_10;
            xs.push(ln_y);
            ls.push(self.ln_g(ln_y)?);
        }
        let (slope, intercept) = linear_fit(&xs, &ls);
        let rms = (xs
            .iter()
            .zip(&ls)
            .map(|(x, l)| (l - intercept - slope * x).powi(2))
            .sum::<f64>()
            / count as f64)
            .sqrt();
        let local_exponents = xs
            .windows(per + 1)
            .zip(ls.windows(per + 1))
            .step_by(per)
            .map(|(x, l)| -linear_fit(x, l).0)
            .collect();
        Ok(TailFit {
            exponent: -slope,
            log_constant: intercept,
            rms_residual: rms,
            local_exponents,
            window: (10f64.powf(d0), 10f64.powf(d1)),
        })
    }
}

/// Ordinary least squares `y = a x + b`, returned as `(a, b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let a = sxy / sxx;
    (a, my - a * mx)
}

/// `lim f(t, e)` as `t -> infinity` when it is finite.
fn upper_limit(speed: &SpeedFunction) -> Result<Option<f64>, SpeedError> {
    let seq = (1..=12)
        .map(|k| speed.eval_split(10f64.powi(k), 1.0))
        .collect::<Result<Vec<f64>, _>>()?;
    if seq.iter().any(|v| !v.is_finite()) {
        return Ok(None);
    }
    let n = seq.len();
    let last = seq[n - 1];
    if (last - seq[n - 2]) > 1e-3 * last {
        return Ok(None);
    }
    let (prev, est) = aitken_tail(&seq).unwrap();
    if (est - prev).abs() > 1e-8 * last || est < last * (1.0 - 1e-9) {
        return Ok(None);
    }
    Ok(Some(est.max(last)))
}

/// Finds where `ln f(e^tau, e)` stops being evaluable on one side and records the slope there.
fn find_edge(speed: &SpeedFunction, side: f64) -> Result<Edge, SpeedError> {
    let psi = |tau: f64| -> Option<f64> {
        let v = speed.eval_split(tau.exp(), 1.0).ok()?;
        (v.is_normal() && v < f64::MAX).then(|| v.ln())
    };
    for mag in EDGE_CANDIDATES {
        let tau = side * mag;
        let inner = side * (mag - mag / 14.0);
        if let (Some(p), Some(q)) = (psi(tau), psi(inner)) {
            return Ok(Edge {
                tau,
                psi: p,
                slope: (p - q) / (tau - inner),
            });
        }
    }
    Err(SpeedError::Domain(format!(
        "f(t, 1, .., 1) cannot be evaluated for t = e^({}10)",
        if side < 0.0 { "-" } else { "" }
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(id: &str, n: usize) -> ConstraintContext {
        ConstraintContext::new(SpeedFunction::from_id(id, n).unwrap()).unwrap()
    }

    #[test]
    fn g_examples() {
        assert!((ctx("mean", 2).solve_g(0.5).unwrap() - 0.5).abs() < 1e-14);
        assert!((ctx("harmonic-mean", 2).solve_g(2.0).unwrap() - 2.0).abs() < 1e-13);
        assert!((ctx("gauss:2", 2).solve_g(4.0).unwrap() - 0.25).abs() < 1e-15);
        for n in 2..=5 {
            for alpha in [0.3, 1.0, 2.5] {
                let c = ctx(&format!("gauss:{alpha}"), n);
                for y in [0.01f64, 0.7, 3.0, 1e4] {
                    let want = y.powi(-(n as i32 - 1));
                    let got = c.solve_g(y).unwrap();
                    assert!((got - want).abs() < 1e-12 * want, "n={n} a={alpha} y={y}");
                }
            }
        }
    }

    #[test]
    fn g1_examples() {
        assert!((ctx("mean", 2).solve_g1(0.25).unwrap() - 0.75).abs() < 1e-14);
        assert!((ctx("harmonic-mean", 2).solve_g1(3.0).unwrap() - 1.5).abs() < 1e-13);
        assert!((ctx("gauss:2", 2).solve_g1(0.25).unwrap() - 4.0).abs() < 1e-13);
    }

    #[test]
    fn domains() {
        let m = ctx("mean", 2);
        assert_eq!(m.g_domain(), (0.0, 1.0));
        assert!(matches!(
            m.solve_g(1.0),
            Err(ConstraintError::OutOfDomain { .. })
        ));
        assert!(matches!(
            m.solve_g(1.5),
            Err(ConstraintError::OutOfDomain { .. })
        ));
        assert!(m.solve_g(1.0 - 1e-6).unwrap() < 2e-6);

        for n in 2..=4 {
            let h = ctx("harmonic-mean", n);
            let (lo, hi) = h.g_domain();
            assert!((lo - (n - 1) as f64).abs() < 1e-9, "n={n}: {lo}");
            assert_eq!(hi, f64::INFINITY);
            assert!(matches!(
                h.solve_g((n - 1) as f64 * 0.99),
                Err(ConstraintError::OutOfDomain { .. })
            ));
        }
        // gamma_plus = 1 / sqrt(2) for the scalar curvature in dimension 3
        let (lo, hi) = ctx("scalar", 3).g_domain();
        assert_eq!(lo, 0.0);
        assert!((hi - 0.5f64.sqrt()).abs() < 1e-10);
    }

    #[test]
    fn gamma_is_a_fixed_point() {
        for (id, n) in [
            ("mean", 2),
            ("mean", 4),
            ("harmonic-mean", 3),
            ("scalar", 3),
            ("gauss:1.5", 2),
        ] {
            let c = ctx(id, n);
            let gamma = c.invariants().gamma;
            assert!(
                (c.solve_g(gamma).unwrap() - gamma).abs() < 1e-9 * gamma,
                "{id}"
            );
        }
    }

    #[test]
    fn inverse_consistency_and_monotonicity() {
        for (id, n) in [
            ("mean", 3),
            ("harmonic-mean", 2),
            ("scalar", 4),
            ("gauss:0.5", 3),
            ("power-mean:-2:1.5", 3),
        ] {
            let c = ctx(id, n);
            let (lo, hi) = c.g_domain();
            // beyond y ~ 100 the tail of g is too flat for g1 to recover y to 1e-9
            let (a, b) = (lo.max(1e-3), hi.min(1e2));
            let mut prev = f64::INFINITY;
            for i in 0..50 {
                let t = (i as f64 + 0.5) / 50.0;
                let y = if lo > 0.0 || hi.is_finite() {
                    a + (b - a) * t
                } else {
                    a * (b / a).powf(t)
                };
                let x = c.solve_g(y).unwrap();
                let f = c.speed().eval_split(x, y).unwrap();
                assert!((f - 1.0).abs() < 1e-12, "{id}: f = {f}");
                let back = c.solve_g1(x).unwrap();
                assert!((back - y).abs() < 1e-9 * y, "{id}: {y} -> {x} -> {back}");
                assert!(x < prev, "{id}: not decreasing at y = {y}");
                prev = x;
            }
        }
    }

    #[test]
    fn log_form_agrees_and_extends() {
        let c = ctx("gauss:1", 3);
        for ln_y in [-3.0, 0.0, 5.0, 200.0, 500.0, 1000.0, 1e5] {
            let got = c.ln_g(ln_y).unwrap();
            assert!(
                (got + 2.0 * ln_y).abs() < 1e-9 * (1.0 + ln_y.abs()),
                "{ln_y}: {got}"
            );
        }
        let h = ctx("harmonic-mean", 2);
        assert!(h.ln_g(800.0).unwrap().abs() < 1e-12);
        let m = ctx("mean", 2);
        assert!(matches!(
            m.ln_g(0.0),
            Err(ConstraintError::OutOfDomain { .. })
        ));
        assert!((m.ln_g(0.5f64.ln()).unwrap() - 0.5f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn log_speed_matches_direct() {
        let c = ctx("scalar", 4);
        let direct = c.speed().eval_split(0.3, 2.0).unwrap().ln();
        assert!((c.ln_f_split(0.3f64.ln(), 2f64.ln()) - direct).abs() < 1e-14);
        // x = e^-900 is not representable; the power-law continuation takes over
        let k = ctx("gauss:2", 2);
        assert!((k.ln_f_split(-900.0, 3.0) - (-900.0 + 3.0)).abs() < 1e-9);
    }

    #[test]
    fn tail_limits() {
        assert!((ctx("harmonic-mean", 2).tail_limit().unwrap() - 1.0).abs() < 1e-9);
        assert!((ctx("harmonic-mean", 4).tail_limit().unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(ctx("gauss:2", 2).tail_limit().unwrap(), 0.0);
        assert!(matches!(
            ctx("mean", 2).tail_limit(),
            Err(ConstraintError::NotApplicable(_))
        ));
    }

    #[test]
    fn decay_exponents() {
        for alpha in [0.5, 1.0, 3.0] {
            let fit = ctx(&format!("gauss:{alpha}"), 3)
                .tail_decay_exponent()
                .unwrap();
            assert!((fit.exponent - 2.0).abs() < 1e-6);
            assert!(fit.exponent_spread() < 1e-6);
        }
        let c = ConstraintContext::new(SpeedFunction::from_id("expr:(S1*K)^(1/3)", 2).unwrap())
            .unwrap();
        let fit = c.tail_decay_exponent().unwrap();
        assert!((fit.exponent - 2.0).abs() < 1e-6, "{}", fit.exponent);
        assert!(matches!(
            ctx("harmonic-mean", 2).tail_decay_exponent(),
            Err(ConstraintError::NotApplicable(_))
        ));
        assert!(matches!(
            ctx("scalar", 3).tail_decay_exponent(),
            Err(ConstraintError::NotApplicable(_))
        ));
    }

    #[test]
    fn least_squares_line() {
        let (a, b) = linear_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]);
        assert!((a - 2.0).abs() < 1e-15 && (b - 1.0).abs() < 1e-15);
    }
}
