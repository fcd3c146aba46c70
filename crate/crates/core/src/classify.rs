//! Entire-versus-bounded classification of the rotational translator of a speed, and a
//! cross-check of the verdict against a numerical profile.
//!
//! Decision order:
//! 1. nondegenerate speeds are entire, with `u ~ C r^(alpha+1)` and `C = 1/((alpha+1) f(0,e))`;
//! 2. otherwise `alpha <= 1/2` is entire;
//! 3. otherwise a positive tail limit `L = lim g(y)` forces a finite radius;
//! 4. otherwise the decay exponent `k` of `g(y) ~ y^-k` decides: `k >= 2 alpha - 1` is
//!    entire, `k < 2 alpha - 1` bounded. Near the threshold a poor power-law fit is reported
//!    as undetermined rather than forced either way.

use crate::constraint::{ConstraintContext, ConstraintError, TailFit};
use crate::level_sets::level_ratio;
use crate::speed::SpeedFunction;
use crate::translator::{IntegrationConfig, ProfileSolution, Status, Translator, TranslatorError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClassifyError {
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Translator(#[from] TranslatorError),
    #[error("the theory predicts a finite radius but the integration {0}")]
    NoBlowUp(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Nondegenerate,
    LowHomogeneity,
    DegeneratePositiveL,
    DegenerateFastDecay,
    DegenerateSlowDecay,
    BoundaryCase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Entire {
        #[serde(rename = "C", skip_serializing_if = "Option::is_none")]
        asymptotic_constant: Option<f64>,
    },
    Bounded {
        r_low: f64,
        r_high: f64,
    },
    Undetermined {
        evidence: String,
    },
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Entire { .. } => "entire",
            Verdict::Bounded { .. } => "bounded",
            Verdict::Undetermined { .. } => "undetermined",
        }
    }
}

/// Everything the decision was based on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub alpha: f64,
    pub degenerate: bool,
    pub boundary_value: f64,
    pub tail_limit: Option<f64>,
    pub tail_fit: Option<TailFit>,
    /// `2 alpha - 1`, the decay exponent separating entire from bounded.
    pub critical_exponent: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    #[serde(flatten)]
    pub verdict: Verdict,
    pub rule: Rule,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifyConfig {
    /// Tolerance on `k >= 2 alpha - 1`.
    pub margin: f64,
    /// Largest spread of per-decade exponents that still counts as a clean power law.
    pub fit_spread_tol: f64,
    /// Half-width around `2 alpha - 1` in which a poor fit is left undetermined.
    pub boundary_band: f64,
    /// `L` above this counts as positive.
    pub limit_tol: f64,
    /// Integration used to locate the radius of bounded solutions.
    pub integration: IntegrationConfig,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            margin: 1e-3,
            fit_spread_tol: 1e-2,
            boundary_band: 0.25,
            limit_tol: 1e-6,
            integration: IntegrationConfig {
                r_max: 1e3,
                start_check: false,
                ..IntegrationConfig::default()
            },
        }
    }
}

enum Theory {
    Entire(Option<f64>, Rule),
    Bounded(Rule),
    Undetermined(String, Rule),
}

/// The theoretical decision, from invariants and tail data alone.
fn decide(
    ctx: &ConstraintContext,
    cfg: &ClassifyConfig,
) -> Result<(Theory, Evidence), ClassifyError> {
    let inv = *ctx.invariants();
    let mut evidence = Evidence {
        alpha: inv.alpha,
        degenerate: inv.degenerate,
        boundary_value: inv.boundary_value,
        tail_limit: None,
        tail_fit: None,
        critical_exponent: None,
    };
    if !inv.degenerate {
        let c = 1.0 / ((inv.alpha + 1.0) * inv.boundary_value);
        return Ok((Theory::Entire(Some(c), Rule::Nondegenerate), evidence));
    }
    if inv.alpha <= 0.5 {
        return Ok((Theory::Entire(None, Rule::LowHomogeneity), evidence));
    }
    let limit = match ctx.tail_limit() {
        Ok(l) => l,
        Err(ConstraintError::NonConvergent(why)) => {
            return Ok((
                Theory::Undetermined(
                    format!("tail of g did not settle: {why}"),
                    Rule::BoundaryCase,
                ),
                evidence,
            ))
        }
        Err(e) => return Err(e.into()),
    };
    evidence.tail_limit = Some(limit);
    if limit > cfg.limit_tol {
        return Ok((Theory::Bounded(Rule::DegeneratePositiveL), evidence));
    }
    let fit = ctx.tail_decay_exponent()?;
    let critical = 2.0 * inv.alpha - 1.0;
    evidence.critical_exponent = Some(critical);
    let k = fit.exponent;
    let clean = fit.exponent_spread() <= cfg.fit_spread_tol;
    let theory = if clean {
        if k >= critical - cfg.margin {
            Theory::Entire(None, Rule::DegenerateFastDecay)
        } else {
            Theory::Bounded(Rule::DegenerateSlowDecay)
        }
    } else if (k - critical).abs() < cfg.boundary_band {
        Theory::Undetermined(
            format!(
                "decay exponent {k:.6} is within {} of the critical value {critical} but the \
                 per-decade exponents {:?} are not a clean power law",
                cfg.boundary_band, fit.local_exponents
            ),
            Rule::BoundaryCase,
        )
    } else if fit
        .local_exponents
        .iter()
        .all(|&e| e >= critical - cfg.margin)
    {
        Theory::Entire(None, Rule::DegenerateFastDecay)
    } else if fit
        .local_exponents
        .iter()
        .all(|&e| e < critical - cfg.margin)
    {
        Theory::Bounded(Rule::DegenerateSlowDecay)
    } else {
        Theory::Undetermined(
            format!(
                "per-decade decay exponents {:?} straddle {critical}",
                fit.local_exponents
            ),
            Rule::BoundaryCase,
        )
    };
    evidence.tail_fit = Some(fit);
    Ok((theory, evidence))
}

/// Classifies the translator of `speed`. Bounded verdicts carry a numerically bracketed radius.
pub fn classify(speed: &SpeedFunction) -> Result<Classification, ClassifyError> {
    classify_with(&Translator::new(speed.clone())?, &ClassifyConfig::default())
}

pub fn classify_with(
    tr: &Translator,
    cfg: &ClassifyConfig,
) -> Result<Classification, ClassifyError> {
    let (theory, evidence) = decide(tr.context(), cfg)?;
    let (verdict, rule) = match theory {
        Theory::Entire(c, rule) => (
            Verdict::Entire {
                asymptotic_constant: c,
            },
            rule,
        ),
        Theory::Undetermined(evidence, rule) => (Verdict::Undetermined { evidence }, rule),
        Theory::Bounded(rule) => {
            let sol = tr.integrate(&cfg.integration)?;
            match sol.status {
                Status::BlewUp { r_low, r_high } => (Verdict::Bounded { r_low, r_high }, rule),
                Status::ReachedHorizon => {
                    return Err(ClassifyError::NoBlowUp(format!(
                        "reached r = {} without blowing up",
                        sol.last().r
                    )))
                }
                Status::LeftDomain { r, reason } => {
                    return Err(ClassifyError::NoBlowUp(format!(
                        "left the domain at r = {r}: {reason}"
                    )))
                }
            }
        }
    };
    Ok(Classification {
        verdict,
        rule,
        evidence,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub consistent: bool,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn mismatches(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Smallest horizon at which a numerical profile can vouch for an entire verdict.
pub const ENTIRE_HORIZON: f64 = 1e3;

/// Compares a classification with a profile integrated for the same speed.
///
/// For entire verdicts the profile must reach a horizon of at least 1000 with the ratio
/// `v / (r (1 + v^2)^beta)` never below `gamma`; for nondegenerate speeds it must also stay
/// below `gamma_plus`. (For degenerate entire speeds the ratio is unbounded, so only
/// finiteness is required.) Bounded verdicts require a blow-up inside the horizon whose
/// bracket overlaps the classification's.
pub fn cross_validate(
    profile: &ProfileSolution,
    classification: &Classification,
) -> ValidationReport {
    let mut checks = Vec::new();
    let mut check = |name: &str, passed: bool, detail: String| {
        checks.push(Check {
            name: name.to_string(),
            passed,
            detail,
        })
    };
    let horizon = profile.config.r_max;
    match &classification.verdict {
        Verdict::Entire { .. } => {
            check(
                "reached_horizon",
                profile.status == Status::ReachedHorizon,
                format!("status {}", profile.status.label()),
            );
            check(
                "horizon_large_enough",
                horizon >= ENTIRE_HORIZON,
                format!("r_max = {horizon}, need at least {ENTIRE_HORIZON}"),
            );
            let (lo, hi) = ln_ratio_range(profile);
            let slack = 1e-9;
            check(
                "ratio_above_gamma",
                lo >= profile.gamma.ln() - slack,
                format!("min ratio {}, gamma {}", lo.exp(), profile.gamma),
            );
            match profile.gamma_plus {
                Some(gp) => check(
                    "ratio_below_gamma_plus",
                    hi <= gp.ln() + slack,
                    format!("max ratio {}, gamma_plus {gp}", hi.exp()),
                ),
                None => check("ratio_finite", hi.is_finite(), format!("max ln ratio {hi}")),
            }
        }
        Verdict::Bounded { r_low, r_high } => match &profile.status {
            Status::BlewUp {
                r_low: p_low,
                r_high: p_high,
            } => {
                check(
                    "blew_up_within_horizon",
                    *p_high <= horizon,
                    format!("profile bracket [{p_low}, {p_high}], horizon {horizon}"),
                );
                check(
                    "brackets_overlap",
                    p_low <= r_high && r_low <= p_high,
                    format!("profile [{p_low}, {p_high}] vs classification [{r_low}, {r_high}]"),
                );
            }
            other => check(
                "blew_up_within_horizon",
                false,
                format!("status {}", other.label()),
            ),
        },
        Verdict::Undetermined { evidence } => check(
            "undetermined",
            true,
            format!("no theoretical verdict to compare: {evidence}"),
        ),
    }
    let consistent = checks.iter().all(|c| c.passed);
    ValidationReport { consistent, checks }
}

/// Range of `ln(v / (r (1 + v^2)^beta))` over the samples. For fast-growing degenerate
/// profiles the ratio itself overflows long before the horizon while its logarithm does not.
pub fn ln_ratio_range(profile: &ProfileSolution) -> (f64, f64) {
    profile
        .samples
        .iter()
        .map(|s| {
            if s.v.is_finite() && s.v < 1e150 {
                level_ratio(s.r, s.v, profile.beta).ln()
            } else {
                s.ln_v - s.r.ln() - 2.0 * profile.beta * s.ln_v
            }
        })
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), q| {
            (lo.min(q), hi.max(q))
        })
}
