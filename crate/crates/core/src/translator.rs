//! Integration of the translator equation
//! `v' = (1 + v^2)^(1+beta) g(v / (r (1 + v^2)^beta))` for the profile slope `v = u'`.
//!
//! The equation is singular at `r = 0`, so integration starts at a small radius on the
//! subsolution level set `v / (r (1 + v^2)^beta) = gamma`. While `v` is moderate the
//! independent variable is `r`. Once `v` is large and growing faster than linearly the
//! driver switches to `t = ln v` with `r` as the state, where approach to a finite blow-up
//! radius becomes an exponential decay of `dr/dt` that can be extrapolated sharply.
//!
//! For nondegenerate speeds the solution is pulled onto the supersolution, and the pull
//! gets stiff: the radial phase then switches from Dormand-Prince to a four-stage SDIRK
//! method. Once the gap `ln gamma_plus - ln ratio` falls far below the tolerance the right
//! hand side is mostly rounding noise, and the profile simply follows the supersolution.

use crate::constraint::{ConstraintContext, ConstraintError};
use crate::level_sets::{level_ratio, BarrierCurve, BarrierKind, LevelSetError};
use crate::ode::{
    dopri5_step, error_norm, implicit_step_factor, sdirk4_step, DenseStep, ImplicitFailure,
    PiController,
};
use crate::real::Real;
use crate::roots::brent;
use crate::speed::{SpeedFunction, SpeedInvariants};
use serde::{Deserialize, Serialize};
use std::cell::Cell;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TranslatorError {
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    LevelSet(#[from] LevelSetError),
    #[error("cannot start the integration: {0}")]
    StartupFailure(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("step limit of {steps} reached at r = {r}")]
    StepLimit { r: f64, steps: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationConfig {
    pub r_start: f64,
    pub r_max: f64,
    /// Blow-up is declared as soon as `v` exceeds this.
    pub v_cap: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Step size below which the integration gives up.
    pub min_step: f64,
    pub max_steps: usize,
    /// Slope above which a superlinearly growing solution is continued in `ln v`.
    pub switch_v: f64,
    /// Width below which the blow-up bracket is accepted.
    pub blowup_width: f64,
    /// Repeat the first few steps from `r_start / 2` and record the change.
    pub start_check: bool,
}

impl Default for IntegrationConfig {
    fn default() -> Self {
        Self {
            r_start: 1e-6,
            r_max: 100.0,
            v_cap: f64::INFINITY,
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            min_step: 1e-14,
            max_steps: 5_000_000,
            switch_v: 1e3,
            blowup_width: 1e-7,
            start_check: true,
        }
    }
}

impl IntegrationConfig {
    pub fn with_r_max(r_max: f64) -> Self {
        Self {
            r_max,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TranslatorError> {
        let positive = [
            ("r_start", self.r_start),
            ("r_max", self.r_max),
            ("v_cap", self.v_cap),
            ("rel_tol", self.rel_tol),
            ("abs_tol", self.abs_tol),
            ("min_step", self.min_step),
            ("switch_v", self.switch_v),
            ("blowup_width", self.blowup_width),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || v.is_nan() {
                return Err(TranslatorError::InvalidConfig(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !self.r_start.is_finite() || !self.r_max.is_finite() {
            return Err(TranslatorError::InvalidConfig(
                "radii must be finite".into(),
            ));
        }
        if self.r_start >= self.r_max {
            return Err(TranslatorError::InvalidConfig(format!(
                "r_start = {} must be below r_max = {}",
                self.r_start, self.r_max
            )));
        }
        Ok(())
    }
}

/// How an integration ended.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Status {
    ReachedHorizon,
    BlewUp { r_low: f64, r_high: f64 },
    LeftDomain { r: f64, reason: String },
}

impl Status {
    pub fn label(&self) -> &'static str {
        match self {
            Status::ReachedHorizon => "reached_horizon",
            Status::BlewUp { .. } => "blew_up",
            Status::LeftDomain { .. } => "left_domain",
        }
    }
}

/// One accepted point. `v` and `v_prime` overflow to infinity for very steep profiles; the
/// logarithms stay finite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub r: f64,
    pub v: f64,
    pub v_prime: f64,
    pub ln_v: f64,
    pub ln_v_prime: f64,
}

impl Sample {
    fn radial(r: f64, v: f64, v_prime: f64) -> Self {
        Self {
            r,
            v,
            v_prime,
            ln_v: v.ln(),
            ln_v_prime: v_prime.ln(),
        }
    }

    fn logarithmic(r: f64, ln_v: f64, ln_v_prime: f64) -> Self {
        Self {
            r,
            v: ln_v.exp(),
            v_prime: ln_v_prime.exp(),
            ln_v,
            ln_v_prime,
        }
    }
}

/// Dense output between consecutive samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Segment {
    /// `v` as a function of `r`.
    Radial(DenseStep),
    /// `r` as a function of `ln v`.
    Logarithmic(DenseStep),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSolution {
    pub speed_id: String,
    pub dim: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub gamma_plus: Option<f64>,
    pub config: IntegrationConfig,
    /// `samples[i + 1]` is the end of `segments[i]`.
    pub samples: Vec<Sample>,
    #[serde(skip)]
    pub segments: Vec<Segment>,
    pub status: Status,
    /// Relative change of `v(4 r_start)` when starting from `r_start / 2` instead.
    pub start_sensitivity: Option<f64>,
    /// Radius beyond which the profile follows the supersolution.
    #[serde(default)]
    pub tracked_from: Option<f64>,
    pub stats: StepStats,
}

impl ProfileSolution {
    pub fn last(&self) -> &Sample {
        self.samples
            .last()
            .expect("a profile always holds its start point")
    }

    /// Dense-output value of `v` at `r`, if `r` lies within the integrated range.
    pub fn v_at(&self, r: f64) -> Option<f64> {
        self.ln_v_at(r).map(f64::exp)
    }

    /// Dense-output value of `ln v` at `r`.
    pub fn ln_v_at(&self, r: f64) -> Option<f64> {
        let first = self.samples.first()?;
        if r < first.r || r > self.last().r || self.segments.is_empty() {
            return (r == first.r).then_some(first.ln_v);
        }
        let idx = self.samples.partition_point(|s| s.r <= r);
        let seg = idx.saturating_sub(1).min(self.segments.len() - 1);
        match self.segments[seg] {
            Segment::Radial(d) => Some(d.eval(r).ln()),
            Segment::Logarithmic(d) => {
                let f = |s: f64| d.eval_theta(s) - r;
                let (fa, fb) = (f(0.0), f(1.0));
                if fa >= 0.0 {
                    return Some(d.t0);
                }
                if fb <= 0.0 {
                    return Some(d.t1());
                }
                let s = brent(f, 0.0, 1.0, fa, fb, 1e-15).ok()?;
                Some(d.t0 + s * d.h)
            }
        }
    }
}

/// The translator equation for one speed, with its barriers.
#[derive(Debug, Clone)]
pub struct Translator {
    ctx: ConstraintContext,
    beta: f64,
    sub: BarrierCurve,
    sup: Option<BarrierCurve>,
}

enum Step {
    /// Continue in `t = ln v`.
    Switch,
    /// Continue along the supersolution.
    Track,
    Done(Status),
}

impl Translator {
    pub fn new(speed: SpeedFunction) -> Result<Self, TranslatorError> {
        Self::from_context(ConstraintContext::new(speed)?)
    }

    pub fn from_context(ctx: ConstraintContext) -> Result<Self, TranslatorError> {
        let inv = *ctx.invariants();
        let beta = inv.beta;
        let sub = BarrierCurve::new(inv.gamma, beta, BarrierKind::Subsolution)?;
        let sup = inv
            .gamma_plus
            .map(|gp| BarrierCurve::new(gp, beta, BarrierKind::Supersolution))
            .transpose()?;
        Ok(Self {
            ctx,
            beta,
            sub,
            sup,
        })
    }

    pub fn context(&self) -> &ConstraintContext {
        &self.ctx
    }

    pub fn invariants(&self) -> &SpeedInvariants {
        self.ctx.invariants()
    }

    pub fn speed(&self) -> &SpeedFunction {
        self.ctx.speed()
    }

    pub fn subsolution(&self) -> &BarrierCurve {
        &self.sub
    }

    pub fn supersolution(&self) -> Option<&BarrierCurve> {
        self.sup.as_ref()
    }

    /// Tip slope `gamma = v'(0)`.
    pub fn slope_at_origin(&self) -> f64 {
        self.invariants().gamma
    }

    /// Right-hand side `v'(r)`.
    pub fn rhs(&self, r: f64, v: f64) -> Result<f64, TranslatorError> {
        let y = level_ratio(r, v, self.beta);
        let x = self.ctx.solve_g(y)?;
        let growth = if v < 1e100 {
            (1.0 + v * v).powf(1.0 + self.beta)
        } else {
            ((1.0 + self.beta) * v.ln1p_sq()).exp()
        };
        Ok(growth * x)
    }

    /// `ln v'` in terms of `ln r` and `ln v`.
    pub fn ln_rhs(&self, ln_r: f64, ln_v: f64) -> Result<f64, TranslatorError> {
        let l1 = ln_v.exp().ln1p_sq();
        let l1 = if l1.is_finite() { l1 } else { 2.0 * ln_v };
        let ln_y = ln_v - ln_r - self.beta * l1;
        Ok((1.0 + self.beta) * l1 + self.ctx.ln_g(ln_y)?)
    }

    /// `dr/d(ln v) = v / v'`.
    fn dr_dt(&self, t: f64, r: f64) -> Result<f64, TranslatorError> {
        if !(r > 0.0) {
            return Err(TranslatorError::StartupFailure(format!(
                "radius {r} is not positive"
            )));
        }
        Ok((t - self.ln_rhs(r.ln(), t)?).exp())
    }

    pub fn integrate(
        &self,
        config: &IntegrationConfig,
    ) -> Result<ProfileSolution, TranslatorError> {
        let mut sol = self.run(config)?;
        if config.start_check {
            let probe = 4.0 * config.r_start;
            if sol.last().r >= probe {
                let short = IntegrationConfig {
                    r_start: 0.5 * config.r_start,
                    r_max: probe,
                    start_check: false,
                    ..*config
                };
                let other = self.run(&short)?;
                if let (Some(a), Some(b)) = (sol.v_at(probe), other.v_at(probe)) {
                    sol.start_sensitivity = Some((a - b).abs() / a);
                }
            }
        }
        Ok(sol)
    }

    fn run(&self, config: &IntegrationConfig) -> Result<ProfileSolution, TranslatorError> {
        config.validate()?;
        let inv = *self.invariants();
        let r0 = config.r_start;
        let v0 = self.sub.w_of_r(r0);
        let k0 = self
            .rhs(r0, v0)
            .map_err(|e| TranslatorError::StartupFailure(format!("rhs at r = {r0}: {e}")))?;
        if !k0.is_finite() || !(k0 > 0.0) {
            return Err(TranslatorError::StartupFailure(format!(
                "rhs at r = {r0} is {k0}"
            )));
        }
        let mut sol = ProfileSolution {
            speed_id: self.speed().name().to_string(),
            dim: self.speed().dim(),
            alpha: inv.alpha,
            beta: inv.beta,
            gamma: inv.gamma,
            gamma_plus: inv.gamma_plus,
            config: *config,
            samples: vec![Sample::radial(r0, v0, k0)],
            segments: Vec::new(),
            status: Status::ReachedHorizon,
            start_sensitivity: None,
            tracked_from: None,
            stats: StepStats::default(),
        };
        sol.status = match self.radial_phase(config, &mut sol)? {
            Step::Done(status) => status,
            Step::Switch => self.logarithmic_phase(config, &mut sol)?,
            Step::Track => self.tracking_phase(config, &mut sol)?,
        };
        Ok(sol)
    }

    /// Right-hand side continued by zero above the supersolution, where `g` vanishes.
    /// Implicit stage iterates may wander there even though the solution does not.
    fn rhs_extended(&self, r: f64, v: f64) -> Result<f64, TranslatorError> {
        match self.rhs(r, v) {
            Err(TranslatorError::Constraint(ConstraintError::OutOfDomain {
                value, hi, ..
            })) if self.sup.is_some() && value >= hi => Ok(0.0),
            other => other,
        }
    }

    /// Integrates in `r` until the horizon, blow-up, or a hand-over to another phase.
    ///
    /// Near the supersolution the equation is stiff (`dv'/dv ~ -v^2 / r` for mean curvature),
    /// so once the explicit step size is pinned by stability the driver moves to SDIRK
    /// steps, and back when the stiffness fades.
    fn radial_phase(
        &self,
        config: &IntegrationConfig,
        sol: &mut ProfileSolution,
    ) -> Result<Step, TranslatorError> {
        let Sample {
            mut r,
            mut v,
            v_prime,
            ..
        } = sol.samples[0];
        let mut k1 = v_prime;
        let mut h = 0.1 * r;
        let mut ctl = PiController::default();
        let evals = Cell::new(0usize);
        let mut last_error = String::new();
        let mut rhs = |r: f64, v: f64| {
            evals.set(evals.get() + 1);
            if !(v > 0.0) || !v.is_finite() {
                return Err(TranslatorError::StartupFailure(format!(
                    "v = {v} at r = {r}"
                )));
            }
            self.rhs(r, v)
        };
        let mut rhs_ext = |r: f64, v: f64| {
            evals.set(evals.get() + 1);
            if !(v > 0.0) || !v.is_finite() {
                return Err(TranslatorError::StartupFailure(format!(
                    "v = {v} at r = {r}"
                )));
            }
            self.rhs_extended(r, v)
        };
        let jacobian = |r: f64, v: f64, k1: f64| -> Option<f64> {
            evals.set(evals.get() + 1);
            // difference downwards, away from the supersolution the solution hugs, and on
            // a scale below the distance to it, where g may have a root-type singularity
            let rel = match &self.sup {
                Some(sup) => {
                    let delta = sup.m().ln() - level_ratio(r, v, self.beta).ln();
                    (0.01 * delta).clamp(1e-12, 1e-7)
                }
                None => 1e-7,
            };
            let dv = rel * v;
            let j = (k1 - self.rhs(r, v - dv).ok()?) / dv;
            j.is_finite().then_some(j)
        };
        let mut stiff = false;
        let mut since_check = 0usize;
        let mut rejected_last = false;

        let outcome = loop {
            if sol.stats.accepted + sol.stats.rejected >= config.max_steps {
                return Err(TranslatorError::StepLimit {
                    r,
                    steps: config.max_steps,
                });
            }
            let remaining = config.r_max - r;
            let last_step = h >= remaining;
            if last_step {
                h = remaining;
            }
            if h < config.min_step || h <= 4.0 * f64::EPSILON * r {
                break if k1 > v {
                    Step::Done(Status::BlewUp {
                        r_low: r,
                        r_high: r + v / k1,
                    })
                } else {
                    Step::Done(Status::LeftDomain {
                        r,
                        reason: format!("step size collapsed: {last_error}"),
                    })
                };
            }

            let clean = !rejected_last;
            let jac = if stiff { jacobian(r, v, k1) } else { None };
            if stiff && jac.is_none() {
                stiff = false;
                ctl.reset();
            }
            let (y1, dydt, dense, accepted, h_new) = if let Some(j) = jac {
                let tol = (config.rel_tol, config.abs_tol);
                match sdirk4_step(&mut rhs_ext, r, v, k1, h, j, tol) {
                    Ok(t) if t.y.is_finite() && t.y > 0.0 && t.dydt > 0.0 => {
                        let accepted = t.err <= 1.0;
                        let mut fac = implicit_step_factor(t.err);
                        if rejected_last && accepted {
                            fac = fac.min(1.0);
                        }
                        if accepted && clean && h * fac * j.abs() < 0.2 {
                            // stiffness has faded
                            stiff = false;
                            ctl.reset();
                        }
                        (t.y, t.dydt, t.dense, accepted, h * fac)
                    }
                    Ok(t) => {
                        last_error = format!("trial value v = {} at r = {}", t.y, r + h);
                        sol.stats.rejected += 1;
                        rejected_last = true;
                        h *= 0.25;
                        continue;
                    }
                    Err(ImplicitFailure::Rhs(e)) => {
                        last_error = e.to_string();
                        sol.stats.rejected += 1;
                        rejected_last = true;
                        h *= 0.25;
                        continue;
                    }
                    Err(ImplicitFailure::Stage) => {
                        last_error = format!("stage equation unsolved at r = {r}");
                        sol.stats.rejected += 1;
                        rejected_last = true;
                        h *= 0.5;
                        continue;
                    }
                }
            } else {
                match dopri5_step(&mut rhs, r, v, k1, h) {
                    Ok(t) if t.y.is_finite() && t.y > 0.0 && t.dydt > 0.0 => {
                        let err = error_norm(t.err, v, t.y, config.rel_tol, config.abs_tol);
                        let (accepted, h_new) = ctl.propose(err, h);
                        (t.y, t.dydt, t.dense, accepted, h_new)
                    }
                    Ok(t) => {
                        last_error = format!("trial value v = {} at r = {}", t.y, r + h);
                        sol.stats.rejected += 1;
                        h *= 0.25;
                        ctl.reset();
                        continue;
                    }
                    Err(e) => {
                        last_error = e.to_string();
                        sol.stats.rejected += 1;
                        h *= 0.25;
                        ctl.reset();
                        continue;
                    }
                }
            };
            if !accepted {
                sol.stats.rejected += 1;
                rejected_last = true;
                h = h_new;
                continue;
            }
            let r_new = if last_step { config.r_max } else { r + h };
            // the solution stays above the subsolution; a step that dips below is inaccurate
            if y1 < self.sub.w_of_r(r_new) * (1.0 - 1e-10) {
                last_error = format!("step to r = {r_new} crossed below the subsolution");
                sol.stats.rejected += 1;
                rejected_last = true;
                h *= 0.5;
                ctl.reset();
                continue;
            }
            sol.stats.accepted += 1;
            rejected_last = false;
            r = r_new;
            v = y1;
            k1 = dydt;
            sol.samples.push(Sample::radial(r, v, k1));
            sol.segments.push(Segment::Radial(dense));
            h = h_new;

            if last_step {
                break Step::Done(Status::ReachedHorizon);
            }
            if v > config.v_cap {
                // 1/v is close to linear near a simple pole
                break Step::Done(Status::BlewUp {
                    r_low: r,
                    r_high: r + v / k1,
                });
            }
            if v > config.switch_v && k1 > v {
                break Step::Switch;
            }
            if stiff {
                if let Some(sup) = &self.sup {
                    let delta = sup.m().ln() - level_ratio(r, v, self.beta).ln();
                    if delta < 1e-2 * config.rel_tol {
                        break Step::Track;
                    }
                }
            } else {
                since_check += 1;
                // an explicit step size pinned near the stability limit signals stiffness
                if since_check >= 10 {
                    since_check = 0;
                    if let Some(j) = jacobian(r, v, k1) {
                        if j < 0.0 && h * j.abs() > 1.0 {
                            stiff = true;
                        }
                    }
                }
            }
        };
        sol.stats.rhs_evals += evals.get();
        Ok(outcome)
    }

    /// Follows the supersolution once the profile is closer to it than the tolerance can
    /// resolve. There `g` is evaluated next to the end of its domain, where rounding in `v`
    /// swamps `v'`; the distance only shrinks further out, so the level set itself is the
    /// profile to working precision.
    fn tracking_phase(
        &self,
        config: &IntegrationConfig,
        sol: &mut ProfileSolution,
    ) -> Result<Status, TranslatorError> {
        let sup = self.sup.expect("tracking needs a supersolution");
        let Sample {
            mut r,
            mut v,
            mut v_prime,
            ..
        } = *sol.last();
        sol.tracked_from = Some(r);
        loop {
            if sol.stats.accepted + sol.stats.rejected >= config.max_steps {
                return Err(TranslatorError::StepLimit {
                    r,
                    steps: config.max_steps,
                });
            }
            let last_step = r * 1.01 >= config.r_max;
            let r1 = if last_step { config.r_max } else { r * 1.01 };
            let h = r1 - r;
            let w1 = sup.w_of_r(r1);
            if !w1.is_finite() {
                return Ok(Status::LeftDomain {
                    r,
                    reason: "supersolution overflows".into(),
                });
            }
            let d1 = sup.dw_dr(w1);
            let wm = sup.w_of_r(r + 0.5 * h);
            let ydiff = w1 - v;
            let bspl = h * v_prime - ydiff;
            let mut dense = DenseStep {
                t0: r,
                h,
                c: [v, ydiff, bspl, ydiff - h * d1 - bspl, 0.0],
            };
            dense.c[4] = (wm - dense.eval_theta(0.5)) / 0.0625;
            sol.stats.accepted += 1;
            sol.samples.push(Sample::radial(r1, w1, d1));
            sol.segments.push(Segment::Radial(dense));
            (r, v, v_prime) = (r1, w1, d1);
            if last_step {
                return Ok(Status::ReachedHorizon);
            }
            if v > config.v_cap {
                return Ok(Status::BlewUp {
                    r_low: r,
                    r_high: r + v / v_prime,
                });
            }
        }
    }

    /// Integrates `dr/dt = v / v'` with `t = ln v`.
    fn logarithmic_phase(
        &self,
        config: &IntegrationConfig,
        sol: &mut ProfileSolution,
    ) -> Result<Status, TranslatorError> {
        let start = *sol.last();
        let mut t = start.ln_v;
        let mut r = start.r;
        let mut evals = 0usize;
        let mut f = |t: f64, r: f64| {
            evals += 1;
            self.dr_dt(t, r)
        };
        let mut k1 = f(t, r)?;
        let mut h = 0.01;
        let mut ctl = PiController::default();
        let ln_cap = config.v_cap.ln();
        let mut last_error = String::new();
        let pad = 10.0 * config.rel_tol;

        let status = loop {
            if sol.stats.accepted + sol.stats.rejected >= config.max_steps {
                return Err(TranslatorError::StepLimit {
                    r,
                    steps: config.max_steps,
                });
            }
            if h < config.min_step * t.abs().max(1.0) {
                break Status::LeftDomain {
                    r,
                    reason: format!("step size in ln v collapsed: {last_error}"),
                };
            }
            let trial = match dopri5_step(&mut f, t, r, k1, h) {
                Ok(tr) if tr.y.is_finite() && tr.y > 0.0 && tr.dydt.is_finite() => tr,
                Ok(tr) => {
                    last_error = format!("trial radius {} at ln v = {}", tr.y, t + h);
                    sol.stats.rejected += 1;
                    h *= 0.25;
                    ctl.reset();
                    continue;
                }
                Err(e) => {
                    last_error = e.to_string();
                    sol.stats.rejected += 1;
                    h *= 0.25;
                    ctl.reset();
                    continue;
                }
            };
            let err = error_norm(trial.err, r, trial.y, config.rel_tol, config.abs_tol);
            let (accepted, h_new) = ctl.propose(err, h);
            if !accepted {
                sol.stats.rejected += 1;
                h = h_new;
                continue;
            }

            if trial.y >= config.r_max {
                // land exactly on the horizon: find ln v there and redo the step up to it
                let d = trial.dense;
                let g = |s: f64| d.eval_theta(s) - config.r_max;
                let s = brent(g, 0.0, 1.0, g(0.0), g(1.0), 1e-15).map_err(|e| {
                    TranslatorError::StartupFailure(format!("horizon crossing: {e}"))
                })?;
                let h_end = s * h;
                let (t_end, dense, slope) = if h_end > 0.0 {
                    match dopri5_step(&mut f, t, r, k1, h_end) {
                        Ok(tr) => (t + h_end, tr.dense, tr.dydt),
                        Err(_) => (t + h_end, d, d.derivative(t + h_end)),
                    }
                } else {
                    (t, d, k1)
                };
                sol.stats.accepted += 1;
                sol.samples
                    .push(Sample::logarithmic(config.r_max, t_end, t_end - slope.ln()));
                sol.segments
                    .push(Segment::Logarithmic(DenseStep { h: h_end, ..dense }));
                break Status::ReachedHorizon;
            }

            sol.stats.accepted += 1;
            let (t_old, k_old) = (t, k1);
            t += h;
            r = trial.y;
            k1 = trial.dydt;
            sol.samples.push(Sample::logarithmic(r, t, t - k1.ln()));
            sol.segments.push(Segment::Logarithmic(trial.dense));
            h = h_new;

            // dr/dt decaying like exp(-lambda t) leaves k1 / lambda of radius to go
            let lambda = (k_old.ln() - k1.ln()) / (t - t_old);
            let remaining = if k1 == 0.0 {
                Some(0.0)
            } else if lambda > 0.0 {
                Some(k1 / lambda)
            } else {
                None
            };
            if let Some(rem) = remaining {
                if 2.0 * rem < config.blowup_width - 2.0 * pad * r {
                    break Status::BlewUp {
                        r_low: r * (1.0 - pad),
                        r_high: (r + 2.0 * rem) * (1.0 + pad),
                    };
                }
            }
            if t > ln_cap {
                break Status::BlewUp {
                    r_low: r,
                    r_high: remaining.map_or(f64::INFINITY, |rem| r + 2.0 * rem),
                };
            }
        };
        sol.stats.rhs_evals += evals;
        Ok(status)
    }

    /// Ratios `v(r) / r` at `r_start * {1, 2, 4}`, which should all be close to `gamma`.
    pub fn tip_probe(&self, config: &IntegrationConfig) -> Result<TipProbe, TranslatorError> {
        let cfg = IntegrationConfig {
            r_max: 4.0 * config.r_start,
            start_check: false,
            ..*config
        };
        let sol = self.run(&cfg)?;
        let gamma = self.slope_at_origin();
        let ratios: Vec<(f64, f64)> = [1.0, 2.0, 4.0]
            .iter()
            .filter_map(|k| {
                let r = k * config.r_start;
                sol.v_at(r).map(|v| (r, v / r))
            })
            .collect();
        let max_rel_deviation = ratios
            .iter()
            .map(|(_, q)| (q - gamma).abs() / gamma)
            .fold(0.0, f64::max);
        Ok(TipProbe {
            gamma,
            ratios,
            max_rel_deviation,
        })
    }

    /// Integrates from each start radius and compares the runs on a common grid.
    pub fn start_convergence(
        &self,
        starts: &[f64],
        config: &ConvergenceConfig,
    ) -> Result<ConvergenceReport, TranslatorError> {
        if starts.len() < 2 {
            return Err(TranslatorError::InvalidConfig(
                "need at least two start radii".into(),
            ));
        }
        if starts.windows(2).any(|w| w[1] > w[0]) {
            return Err(TranslatorError::InvalidConfig(
                "start radii must not increase".into(),
            ));
        }
        if !(starts[0] < config.r_ref) || !(starts[starts.len() - 1] > 0.0) {
            return Err(TranslatorError::InvalidConfig(format!(
                "start radii must lie in (0, {})",
                config.r_ref
            )));
        }
        let runs = starts
            .iter()
            .map(|&r_start| {
                self.run(&IntegrationConfig {
                    r_start,
                    r_max: config.r_ref,
                    rel_tol: config.rel_tol,
                    abs_tol: config.abs_tol,
                    start_check: false,
                    ..IntegrationConfig::default()
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let lo = starts[0];
        let hi = runs.iter().map(|s| s.last().r).fold(config.r_ref, f64::min);
        let m = config.grid_points.max(2);
        let grid: Vec<f64> = (0..m)
            .map(|i| lo * (hi / lo).powf(i as f64 / (m - 1) as f64))
            .collect();
        let values: Vec<Vec<f64>> = runs
            .iter()
            .map(|s| {
                grid.iter()
                    .map(|&r| s.v_at(r).unwrap_or(f64::NAN))
                    .collect()
            })
            .collect();
        let sup_norms: Vec<f64> = values
            .windows(2)
            .map(|w| {
                w[0].iter()
                    .zip(&w[1])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        let shrink_factors: Vec<f64> = sup_norms.windows(2).map(|w| w[0] / w[1]).collect();
        let shrinks_linearly = shrink_factors
            .iter()
            .zip(starts.windows(2).skip(1))
            .all(|(f, s)| *f >= 0.5 * s[0] / s[1]);
        let rate = {
            let pts: Vec<(f64, f64)> = starts
                .iter()
                .zip(&sup_norms)
                .filter(|(_, d)| **d > 0.0)
                .map(|(s, d)| (s.ln(), d.ln()))
                .collect();
            (pts.len() >= 2).then(|| {
                let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
                crate::constraint::linear_fit(&x, &y).0
            })
        };
        Ok(ConvergenceReport {
            starts: starts.to_vec(),
            grid,
            sup_norms,
            shrink_factors,
            rate,
            shrinks_linearly,
        })
    }
}

/// Controls for [`Translator::start_convergence`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub r_ref: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub grid_points: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        // the differences being measured sit far below the default integration tolerance
        Self {
            r_ref: 1.0,
            rel_tol: 1e-13,
            abs_tol: 1e-16,
            grid_points: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub starts: Vec<f64>,
    pub grid: Vec<f64>,
    /// `sup |v_i - v_{i+1}|` over the grid for consecutive starts.
    pub sup_norms: Vec<f64>,
    /// Ratios of consecutive entries of `sup_norms`.
    pub shrink_factors: Vec<f64>,
    /// Log-log slope of the sup norms against the start radius.
    pub rate: Option<f64>,
    /// Every shrink factor is at least half the ratio of the corresponding start radii.
    pub shrinks_linearly: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TipProbe {
    pub gamma: f64,
    pub ratios: Vec<(f64, f64)>,
    pub max_rel_deviation: f64,
}

/// Convenience wrapper building the constraint context for a single evaluation.
pub fn rhs(speed: &SpeedFunction, r: f64, v: f64) -> Result<f64, TranslatorError> {
    Translator::new(speed.clone())?.rhs(r, v)
}
