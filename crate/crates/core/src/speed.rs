//! Admissible speed functions: evaluation, built-ins, and their scalar invariants.
//!
//! A speed is a positive function `f(z_1, .., z_n)` of the principal curvatures that is
//! symmetric, strictly increasing in every slot and homogeneous of some degree `alpha > 0`.
//! Almost everything downstream only ever evaluates `f(x, y, .., y)`, so [`Speed`] has a
//! separate entry point for that shape, and every built-in implements it in closed form.

use crate::expr::{self, ExprError, SpeedExpr};
use crate::limits::aitken_tail;
use crate::real::{halton_point, Real};
use crate::symmetric::binomial;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpeedError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("speed has dimension {expected}, got a vector of length {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dimension must be at least 2, got {0}")]
    BadDimension(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown speed identifier '{0}'")]
    UnknownSpeed(String),
    #[error("malformed speed identifier: {0}")]
    Syntax(String),
    #[error("limit f(s, e) as s -> 0 did not stabilize: {0}")]
    NonConvergentLimit(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Evaluator behind a [`SpeedFunction`].
pub trait Speed<T: Real>: Send + Sync + fmt::Debug {
    fn eval(&self, z: &[T]) -> Result<T, SpeedError>;

    /// `f(x, y, .., y)` in dimension `dim`.
    fn eval_split(&self, x: T, y: T, dim: usize) -> Result<T, SpeedError> {
        let mut z = vec![y; dim];
        z[0] = x;
        self.eval(&z)
    }
}

/// Built-in speeds. Parameters are stored as `f64` and converted on evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Builtin {
    /// Mean curvature `S1`.
    Mean,
    /// Harmonic mean curvature `(sum 1/k_i)^-1`.
    HarmonicMean,
    /// Scalar curvature `sqrt(2 S2)`.
    Scalar,
    /// Power of the Gauss curvature `K^(alpha/n)`.
    Gauss { alpha: f64 },
    /// Power mean `(mean k_i^p)^(alpha/p)`, `p != 0`.
    PowerMean { p: f64, alpha: f64 },
}

impl Builtin {
    pub fn alpha(&self) -> f64 {
        match *self {
            Builtin::Mean | Builtin::HarmonicMean | Builtin::Scalar => 1.0,
            Builtin::Gauss { alpha } | Builtin::PowerMean { alpha, .. } => alpha,
        }
    }

    pub fn id(&self) -> String {
        match *self {
            Builtin::Mean => "mean".into(),
            Builtin::HarmonicMean => "harmonic-mean".into(),
            Builtin::Scalar => "scalar".into(),
            Builtin::Gauss { alpha } => format!("gauss:{alpha}"),
            Builtin::PowerMean { p, alpha } => format!("power-mean:{p}:{alpha}"),
        }
    }
}

impl<T: Real> Speed<T> for Builtin {
    fn eval(&self, z: &[T]) -> Result<T, SpeedError> {
        let n = T::from_usize(z.len()).unwrap();
        let v = match *self {
            Builtin::Mean => z.iter().fold(T::zero(), |a, &b| a + b),
            Builtin::HarmonicMean => z.iter().fold(T::zero(), |a, &b| a + b.recip()).recip(),
            Builtin::Scalar => {
                // 2 S2 = (sum z)^2 - sum z^2, but accumulate pairwise to stay cancellation free
                let mut s2 = T::zero();
                let mut prefix = T::zero();
                for &zi in z {
                    s2 = s2 + zi * prefix;
                    prefix = prefix + zi;
                }
                (T::lit(2.0) * s2).sqrt()
            }
            Builtin::Gauss { alpha } => {
                let log_k = z.iter().fold(T::zero(), |a, &b| a + b.ln());
                (T::lit(alpha) / n * log_k).exp()
            }
            Builtin::PowerMean { p, alpha } => {
                let p = T::lit(p);
                let m = z.iter().fold(T::zero(), |a, &b| a + b.powf(p)) / n;
                m.powf(T::lit(alpha) / p)
            }
        };
        Ok(v)
    }

    fn eval_split(&self, x: T, y: T, dim: usize) -> Result<T, SpeedError> {
        let m = T::from_usize(dim - 1).unwrap();
        let n = T::from_usize(dim).unwrap();
        let v = match *self {
            Builtin::Mean => x + m * y,
            Builtin::HarmonicMean => (x.recip() + m / y).recip(),
            Builtin::Scalar => {
                let pairs = binomial::<T>(dim - 1, 2);
                (T::lit(2.0) * (m * x * y + pairs * y * y)).sqrt()
            }
            Builtin::Gauss { alpha } => (T::lit(alpha) / n * (x.ln() + m * y.ln())).exp(),
            Builtin::PowerMean { p, alpha } => {
                let p = T::lit(p);
                ((x.powf(p) + m * y.powf(p)) / n).powf(T::lit(alpha) / p)
            }
        };
        Ok(v)
    }
}

impl<T: Real> Speed<T> for SpeedExpr {
    fn eval(&self, z: &[T]) -> Result<T, SpeedError> {
        Ok(SpeedExpr::eval(self, z)?)
    }

    fn eval_split(&self, x: T, y: T, _dim: usize) -> Result<T, SpeedError> {
        Ok(SpeedExpr::eval_split(self, x, y)?)
    }
}

/// Adapter for arbitrary closures, mostly useful in tests and experiments.
pub struct FnSpeed<F>(pub F);

impl<F> fmt::Debug for FnSpeed<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FnSpeed(..)")
    }
}

impl<T: Real, F> Speed<T> for FnSpeed<F>
where
    F: Fn(&[T]) -> T + Send + Sync,
{
    fn eval(&self, z: &[T]) -> Result<T, SpeedError> {
        Ok((self.0)(z))
    }
}

/// An evaluable speed together with its dimension and homogeneity degree.
///
/// Cheap to clone and safe to share between threads.
#[derive(Clone)]
pub struct SpeedFunction<T: Real = f64> {
    name: String,
    dim: usize,
    alpha: T,
    inner: Arc<dyn Speed<T>>,
}

impl<T: Real> fmt::Debug for SpeedFunction<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpeedFunction")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("alpha", &self.alpha)
            .finish()
    }
}

impl<T: Real> SpeedFunction<T> {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        alpha: T,
        inner: Arc<dyn Speed<T>>,
    ) -> Result<Self, SpeedError> {
        if dim < 2 {
            return Err(SpeedError::BadDimension(dim));
        }
        if !(alpha > T::zero()) || !alpha.is_finite() {
            return Err(SpeedError::InvalidParameter(format!(
                "homogeneity degree must be positive, got {alpha}"
            )));
        }
        Ok(Self {
            name: name.into(),
            dim,
            alpha,
            inner,
        })
    }

    pub fn builtin(builtin: Builtin, dim: usize) -> Result<Self, SpeedError> {
        match builtin {
            Builtin::Gauss { alpha } | Builtin::PowerMean { alpha, .. }
                if !(alpha > 0.0 && alpha.is_finite()) =>
            {
                return Err(SpeedError::InvalidParameter(format!(
                    "alpha must be positive, got {alpha}"
                )))
            }
            Builtin::PowerMean { p, .. } if p == 0.0 || !p.is_finite() => {
                return Err(SpeedError::InvalidParameter(format!(
                    "power-mean exponent must be finite and nonzero, got {p}"
                )))
            }
            _ => {}
        }
        Self::new(
            builtin.id(),
            dim,
            T::lit(builtin.alpha()),
            Arc::new(builtin),
        )
    }

    /// Wraps a closure. The caller asserts the homogeneity degree; see [`verify_admissibility`].
    pub fn from_fn<F>(
        name: impl Into<String>,
        dim: usize,
        alpha: T,
        f: F,
    ) -> Result<Self, SpeedError>
    where
        F: Fn(&[T]) -> T + Send + Sync + 'static,
    {
        Self::new(name, dim, alpha, Arc::new(FnSpeed(f)))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    /// `beta = 1/2 - 1/(2 alpha)`, the exponent appearing in the translator equation.
    pub fn beta(&self) -> T {
        let half = T::lit(0.5);
        half - half / self.alpha
    }

    /// `f(z)` for a vector of positive curvatures.
    pub fn evaluate(&self, z: &[T]) -> Result<T, SpeedError> {
        if z.len() != self.dim {
            return Err(SpeedError::DimensionMismatch {
                expected: self.dim,
                got: z.len(),
            });
        }
        if let Some(bad) = z.iter().find(|v| !(**v > T::zero()) || !v.is_finite()) {
            return Err(SpeedError::Domain(format!(
                "curvatures must be positive and finite, got {bad}"
            )));
        }
        check_value(self.inner.eval(z)?)
    }

    /// `f(x, y, .., y)`.
    pub fn eval_split(&self, x: T, y: T) -> Result<T, SpeedError> {
        if !(x > T::zero() && y > T::zero()) || !x.is_finite() || !y.is_finite() {
            return Err(SpeedError::Domain(format!(
                "curvatures must be positive and finite, got ({x}, {y})"
            )));
        }
        check_value(self.inner.eval_split(x, y, self.dim)?)
    }
}

fn check_value<T: Real>(v: T) -> Result<T, SpeedError> {
    if v.is_nan() || v < T::zero() {
        return Err(SpeedError::Domain(format!(
            "speed value {v} is not positive"
        )));
    }
    Ok(v)
}

impl SpeedFunction<f64> {
    /// Builds a speed from a parsed expression, measuring its homogeneity degree.
    pub fn from_expr(expr: SpeedExpr) -> Result<Self, SpeedError> {
        let alpha = expr::measure_homogeneity(&expr)?;
        let name = format!("expr:{}", expr.source());
        Self::new(name, expr.dim(), alpha, Arc::new(expr))
    }

    /// Resolves a speed identifier: `mean`, `harmonic-mean`, `scalar`, `gauss:<alpha>`,
    /// `power-mean:<p>:<alpha>` or `expr:<source>`.
    pub fn from_id(id: &str, dim: usize) -> Result<Self, SpeedError> {
        if dim < 2 {
            return Err(SpeedError::BadDimension(dim));
        }
        if let Some(src) = id.strip_prefix("expr:") {
            return Self::from_expr(expr::parse_speed(src, dim)?);
        }
        let num = |s: &str| -> Result<f64, SpeedError> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| SpeedError::Syntax(format!("'{s}' is not a number")))
        };
        let parts: Vec<&str> = id.split(':').collect();
        let builtin = match parts.as_slice() {
            ["mean"] => Builtin::Mean,
            ["harmonic-mean"] => Builtin::HarmonicMean,
            ["scalar"] => Builtin::Scalar,
            ["gauss", a] => Builtin::Gauss { alpha: num(a)? },
            ["power-mean", p, a] => Builtin::PowerMean {
                p: num(p)?,
                alpha: num(a)?,
            },
            _ => return Err(SpeedError::UnknownSpeed(id.to_string())),
        };
        Self::builtin(builtin, dim)
    }
}

/// Scalar invariants of an admissible speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedInvariants {
    pub alpha: f64,
    /// Tip slope `1 / f(1, .., 1)^(1/alpha)`.
    pub gamma: f64,
    /// `f(0, e) = lim_{s -> 0} f(s, 1, .., 1)`.
    pub boundary_value: f64,
    pub degenerate: bool,
    /// `1 / f(0, e)^(1/alpha)`, only for nondegenerate speeds.
    pub gamma_plus: Option<f64>,
    pub beta: f64,
}

/// Default threshold below which `f(0, e)` counts as zero.
pub const DEGENERACY_TOL: f64 = 1e-9;

pub fn compute_invariants(speed: &SpeedFunction) -> Result<SpeedInvariants, SpeedError> {
    compute_invariants_with(speed, DEGENERACY_TOL)
}

/// Computes the invariants, with `f(0, e)` extrapolated from `s = 10^-1 .. 10^-12`.
pub fn compute_invariants_with(
    speed: &SpeedFunction,
    degeneracy_tol: f64,
) -> Result<SpeedInvariants, SpeedError> {
    let alpha = speed.alpha();
    let ones = vec![1.0; speed.dim()];
    let gamma = speed.evaluate(&ones)?.powf(-1.0 / alpha);

    let sample = |ks: &mut dyn Iterator<Item = i32>| {
        ks.map(|k| speed.eval_split(10f64.powi(-k), 1.0))
            .collect::<Result<Vec<f64>, _>>()
    };
    // slowly decaying terms like s^0.1 only settle on a much wider grid
    let boundary_value = match decreasing_limit(&sample(&mut (1..=12))?) {
        Err(SpeedError::NonConvergentLimit(_)) => {
            decreasing_limit(&sample(&mut (1..=74).map(|k| 4 * k))?)?
        }
        other => other?,
    };
    let degenerate = boundary_value < degeneracy_tol;
    Ok(SpeedInvariants {
        alpha,
        gamma,
        boundary_value,
        degenerate,
        gamma_plus: (!degenerate).then(|| boundary_value.powf(-1.0 / alpha)),
        beta: speed.beta(),
    })
}

/// Limit of a nonincreasing nonnegative sequence sampled on a geometric grid.
fn decreasing_limit(seq: &[f64]) -> Result<f64, SpeedError> {
    if let Some(bad) = seq.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(SpeedError::NonConvergentLimit(format!(
            "sample value {bad}"
        )));
    }
    for w in seq.windows(2) {
        if w[1] > w[0] * (1.0 + 1e-12) {
            return Err(SpeedError::NonConvergentLimit(format!(
                "sequence increases ({} -> {}) as s decreases; evaluator is not monotone",
                w[0], w[1]
            )));
        }
    }
    let last = *seq.last().unwrap();
    let (prev, est) = aitken_tail(seq).unwrap();
    let scale = seq[0].max(f64::MIN_POSITIVE);
    // a sequence still shrinking towards zero (say like sqrt(s ln(1/s))) defeats Aitken,
    // but extrapolations that are tiny next to the last sample pin the limit near zero
    let near_zero = prev.abs().max(est.abs()) <= 0.1 * last;
    if (est - prev).abs() > 1e-8 * scale && !near_zero {
        return Err(SpeedError::NonConvergentLimit(format!(
            "extrapolated limits {prev} and {est} disagree"
        )));
    }
    Ok(est.clamp(0.0, last))
}

/// Outcome of sampling one admissibility axiom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomCheck {
    pub passed: bool,
    pub checked: usize,
    pub witness: Option<Vec<f64>>,
    pub detail: Option<String>,
}

impl AxiomCheck {
    fn pass(checked: usize) -> Self {
        Self {
            passed: true,
            checked,
            witness: None,
            detail: None,
        }
    }

    fn fail(checked: usize, witness: &[f64], detail: String) -> Self {
        Self {
            passed: false,
            checked,
            witness: Some(witness.to_vec()),
            detail: Some(detail),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub symmetry: AxiomCheck,
    pub ellipticity: AxiomCheck,
    pub homogeneity: AxiomCheck,
}

impl AdmissibilityReport {
    pub fn passed(&self) -> bool {
        self.symmetry.passed && self.ellipticity.passed && self.homogeneity.passed
    }
}

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const HOMOGENEITY_TOL: f64 = 1e-10;
const HOMOGENEITY_SCALES: [f64; 3] = [0.5, 2.0, 10.0];

/// Samples the three admissibility axioms at `samples` quasi-random points of `[0.1, 10]^n`.
///
/// This is evidence, not proof: a sampled pass cannot certify the axioms globally.
pub fn verify_admissibility(speed: &SpeedFunction, samples: usize) -> AdmissibilityReport {
    let n = speed.dim();
    let alpha = speed.alpha();
    let mut symmetry = None;
    let mut ellipticity = None;
    let mut homogeneity = None;

    for i in 0..samples {
        let z = halton_point(i, n, 0.1, 10.0);
        let fz = match speed.evaluate(&z) {
            Ok(v) => v,
            Err(e) => {
                let fail = AxiomCheck::fail(i + 1, &z, format!("evaluation failed: {e}"));
                symmetry.get_or_insert(fail.clone());
                ellipticity.get_or_insert(fail.clone());
                homogeneity.get_or_insert(fail);
                continue;
            }
        };

        if symmetry.is_none() {
            for perm in permutations_of(&z) {
                let fp = speed.evaluate(&perm).unwrap_or(f64::NAN);
                let rel = (fp - fz).abs() / fz.abs().max(f64::MIN_POSITIVE);
                if !(rel <= SYMMETRY_TOL) {
                    symmetry = Some(AxiomCheck::fail(
                        i + 1,
                        &z,
                        format!("f(z) = {fz} but f at permutation {perm:?} = {fp}"),
                    ));
                    break;
                }
            }
        }

        if ellipticity.is_none() {
            for k in 0..n {
                let h = 1e-6 * z[k];
                let mut up = z.clone();
                let mut down = z.clone();
                up[k] += h;
                down[k] -= h;
                let d = (speed.evaluate(&up).unwrap_or(f64::NAN)
                    - speed.evaluate(&down).unwrap_or(f64::NAN))
                    / (2.0 * h);
                if !(d > 0.0) {
                    ellipticity = Some(AxiomCheck::fail(
                        i + 1,
                        &z,
                        format!("df/dz{} = {d:e} is not positive", k + 1),
                    ));
                    break;
                }
            }
        }

        if homogeneity.is_none() {
            for lambda in HOMOGENEITY_SCALES {
                let zl: Vec<f64> = z.iter().map(|v| v * lambda).collect();
                let fl = speed.evaluate(&zl).unwrap_or(f64::NAN);
                let want = lambda.powf(alpha) * fz;
                let rel = (fl - want).abs() / fl.abs().max(f64::MIN_POSITIVE);
                if !(rel <= HOMOGENEITY_TOL) {
                    homogeneity = Some(AxiomCheck::fail(
                        i + 1,
                        &z,
                        format!("f({lambda} z) = {fl} but {lambda}^alpha f(z) = {want}"),
                    ));
                    break;
                }
            }
        }
    }

    AdmissibilityReport {
        symmetry: symmetry.unwrap_or_else(|| AxiomCheck::pass(samples)),
        ellipticity: ellipticity.unwrap_or_else(|| AxiomCheck::pass(samples)),
        homogeneity: homogeneity.unwrap_or_else(|| AxiomCheck::pass(samples)),
    }
}

/// A few permutations that together generate the symmetric group.
fn permutations_of(z: &[f64]) -> Vec<Vec<f64>> {
    let mut swap = z.to_vec();
    swap.swap(0, 1);
    let mut rot = z.to_vec();
    rot.rotate_left(1);
    let mut rev = z.to_vec();
    rev.reverse();
    vec![swap, rot, rev]
}
