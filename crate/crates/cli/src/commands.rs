use crate::error::CliError;
use crate::manifest::{ConfigOverrides, RunManifest};
use crate::output::{emit, profile_csv, sidecar_path, to_json, write_atomic, SCHEMA};
use crate::{ClassifyArgs, Format, SolveArgs, SpeedArgs, VerifyArgs};
use bowlforge::classify::{
    ln_ratio_range, Check, ClassifyConfig, ValidationReport, ENTIRE_HORIZON,
};
use bowlforge::profile::{AsymptoticFit, BowlSample, ConvexityReport};
use bowlforge::speed::AdmissibilityReport;
use bowlforge::translator::{ConvergenceConfig, ConvergenceReport, StepStats, TranslatorError};
use bowlforge::{
    analyze, check_convexity, classify_with, cross_validate, verify_admissibility, BowlProfile,
    Classification, IntegrationConfig, ProfileSolution, SpeedFunction, SpeedInvariants, Status,
    Translator,
};
use serde::Serialize;
use std::path::Path;
use std::time::Instant;

/// Quasi-random points at which the admissibility axioms are sampled before any run.
pub const ADMISSIBILITY_SAMPLES: usize = 64;
pub const RESIDUAL_TOL: f64 = 1e-8;
pub const TIP_TOL: f64 = 1e-4;
pub const BARRIER_SLACK: f64 = 1e-9;
pub const CLOSED_FORM_TOL: f64 = 1e-8;

/// Builds the speed and samples the admissibility axioms.
pub fn load_speed(id: &str, dim: usize) -> Result<SpeedFunction, CliError> {
    let speed = SpeedFunction::from_id(id, dim).map_err(CliError::from_speed)?;
    let report = verify_admissibility(&speed, ADMISSIBILITY_SAMPLES);
    if !report.passed() {
        return Err(CliError::Admissibility(describe_admissibility(&report)));
    }
    Ok(speed)
}

fn describe_admissibility(report: &AdmissibilityReport) -> String {
    let axioms = [
        ("symmetry", &report.symmetry),
        ("ellipticity", &report.ellipticity),
        ("homogeneity", &report.homogeneity),
    ];
    axioms
        .iter()
        .filter(|(_, c)| !c.passed)
        .map(|(name, c)| {
            let mut s = format!("{name} fails");
            if let Some(w) = &c.witness {
                s.push_str(&format!(" at {w:?}"));
            }
            if let Some(d) = &c.detail {
                s.push_str(&format!(" ({d})"));
            }
            s
        })
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn integration_config(
    base: IntegrationConfig,
    overrides: &ConfigOverrides,
) -> Result<IntegrationConfig, CliError> {
    let cfg = overrides.apply(base);
    cfg.validate().map_err(|e| CliError::Parse(e.to_string()))?;
    Ok(cfg)
}

/// A profile together with its post-processing.
pub struct Solved {
    pub translator: Translator,
    pub solution: ProfileSolution,
    pub bowl: BowlProfile,
}

pub fn solve_profile(speed: SpeedFunction, cfg: &IntegrationConfig) -> Result<Solved, CliError> {
    let translator = Translator::new(speed).map_err(CliError::numerical)?;
    let solution = translator.integrate(cfg).map_err(CliError::numerical)?;
    let bowl = analyze(translator.context(), &solution);
    Ok(Solved {
        translator,
        solution,
        bowl,
    })
}

#[derive(Debug, Serialize)]
pub struct SolveReport<'a> {
    pub schema: &'static str,
    pub speed: &'a str,
    pub dim: usize,
    pub invariants: &'a SpeedInvariants,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blow_up_bracket: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub left_domain: Option<String>,
    pub r_end: f64,
    pub samples: usize,
    pub tracked_from: Option<f64>,
    pub start_sensitivity: Option<f64>,
    pub stats: StepStats,
    pub max_residual: f64,
    pub convexity: ConvexityReport,
    pub asymptotic_fit: Option<&'a AsymptoticFit>,
    pub classification: Option<&'a Classification>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification_error: Option<String>,
    pub manifest: &'a RunManifest,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<&'a [BowlSample]>,
}

impl<'a> SolveReport<'a> {
    pub fn new(
        solved: &'a Solved,
        classification: Result<&'a Classification, String>,
        manifest: &'a RunManifest,
    ) -> Self {
        let sol = &solved.solution;
        let (blow_up_bracket, left_domain) = match &sol.status {
            Status::BlewUp { r_low, r_high } => (Some([*r_low, *r_high]), None),
            Status::LeftDomain { r, reason } => (None, Some(format!("at r = {r}: {reason}"))),
            Status::ReachedHorizon => (None, None),
        };
        let (classification, classification_error) = match classification {
            Ok(c) => (Some(c), None),
            Err(e) => (None, Some(e)),
        };
        Self {
            schema: SCHEMA,
            speed: &manifest.speed,
            dim: manifest.dim,
            invariants: solved.translator.invariants(),
            status: sol.status.label(),
            blow_up_bracket,
            left_domain,
            r_end: sol.last().r,
            samples: sol.samples.len(),
            tracked_from: sol.tracked_from,
            start_sensitivity: sol.start_sensitivity,
            stats: sol.stats,
            max_residual: solved.bowl.max_residual(),
            convexity: check_convexity(&solved.bowl),
            asymptotic_fit: solved.bowl.asymptotic_fit.as_ref(),
            classification,
            classification_error,
            manifest,
            profile: None,
        }
    }
}

pub fn solve(args: &SolveArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let SpeedArgs { speed: id, dim } = &args.speed;
    let overrides = args.run.overrides()?;
    let cfg = integration_config(IntegrationConfig::default(), &overrides)?;
    let speed = load_speed(id, *dim)?;
    let solved = solve_profile(speed, &cfg)?;
    let classification =
        classify_with(&solved.translator, &ClassifyConfig::default()).map_err(|e| e.to_string());

    let mut manifest = RunManifest::new("solve", id, *dim, overrides);
    let sidecar = match (&args.out, args.format) {
        (Some(p), Format::Csv) => Some(sidecar_path(p)),
        _ => None,
    };
    manifest.outputs.extend(args.out.iter().cloned());
    manifest.outputs.extend(sidecar.iter().cloned());
    manifest.wall_time_s = started.elapsed().as_secs_f64();

    let mut report = SolveReport::new(
        &solved,
        classification.as_ref().map_err(Clone::clone),
        &manifest,
    );
    match args.format {
        Format::Csv => {
            emit(args.out.as_deref(), &profile_csv(&solved.bowl.samples))?;
            match &sidecar {
                Some(p) => write_atomic(p, to_json(&report)?.as_bytes())?,
                None => eprintln!("{}", summary(&report)),
            }
        }
        Format::Json => {
            report.profile = Some(&solved.bowl.samples);
            emit(args.out.as_deref(), &to_json(&report)?)?;
        }
    }
    match &solved.solution.status {
        Status::LeftDomain { r, reason } => Err(CliError::Numerical(format!(
            "the profile left the domain of the equation at r = {r}: {reason}"
        ))),
        _ => Ok(()),
    }
}

fn summary(report: &SolveReport) -> String {
    let mut s = format!(
        "{} n={}: {} at r = {}",
        report.speed, report.dim, report.status, report.r_end
    );
    if let Some([lo, hi]) = report.blow_up_bracket {
        s.push_str(&format!(", radius in [{lo}, {hi}]"));
    }
    if let Some(c) = report.classification {
        s.push_str(&format!(", verdict {}", c.verdict.label()));
    }
    s
}

#[derive(Debug, Serialize)]
struct ClassifyReport<'a> {
    schema: &'static str,
    speed: &'a str,
    dim: usize,
    #[serde(flatten)]
    classification: &'a Classification,
    #[serde(skip_serializing_if = "Option::is_none")]
    validation: Option<&'a ValidationReport>,
    manifest: &'a RunManifest,
}

pub fn classify(args: &ClassifyArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let SpeedArgs { speed: id, dim } = &args.speed;
    let overrides = args.run.overrides()?;
    let cfg = integration_config(IntegrationConfig::with_r_max(ENTIRE_HORIZON), &overrides)?;
    let speed = load_speed(id, *dim)?;
    let translator = Translator::new(speed).map_err(CliError::numerical)?;
    let classification =
        classify_with(&translator, &ClassifyConfig::default()).map_err(CliError::numerical)?;
    let validation = if args.verify {
        let profile = translator.integrate(&cfg).map_err(CliError::numerical)?;
        Some(cross_validate(&profile, &classification))
    } else {
        None
    };

    let mut manifest = RunManifest::new("classify", id, *dim, overrides);
    manifest.outputs.extend(args.out.iter().cloned());
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    let report = ClassifyReport {
        schema: SCHEMA,
        speed: id,
        dim: *dim,
        classification: &classification,
        validation: validation.as_ref(),
        manifest: &manifest,
    };
    emit(args.out.as_deref(), &to_json(&report)?)?;
    match validation {
        Some(v) if !v.consistent => Err(CliError::Verification(
            v.mismatches()
                .map(|c| format!("{}: {}", c.name, c.detail))
                .collect::<Vec<_>>()
                .join("; "),
        )),
        _ => Ok(()),
    }
}

/// The two barrier levels; with `beta = 0` they are the lines `v = gamma r` and
/// `v = gamma_plus r`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Barriers {
    pub beta: f64,
    pub gamma: f64,
    pub gamma_plus: Option<f64>,
    pub linear: bool,
}

#[derive(Debug, Serialize)]
struct VerifyReport<'a> {
    schema: &'static str,
    speed: &'a str,
    dim: usize,
    passed: bool,
    status: &'static str,
    barriers: Barriers,
    checks: &'a [Check],
    start_convergence: Option<&'a ConvergenceReport>,
    manifest: &'a RunManifest,
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.to_string(),
        passed,
        detail,
    }
}

pub fn barrier_check(sol: &ProfileSolution, barriers: &Barriers) -> Check {
    let (ln_lo, ln_hi) = ln_ratio_range(sol);
    let above = ln_lo >= barriers.gamma.ln() - BARRIER_SLACK;
    let below = barriers
        .gamma_plus
        .is_none_or(|gp| ln_hi <= gp.ln() + BARRIER_SLACK);
    let (lo, hi) = (ln_lo.exp(), ln_hi.exp());
    let upper = barriers
        .gamma_plus
        .map_or("unbounded".to_string(), |gp| gp.to_string());
    let detail = if barriers.linear {
        format!(
            "{} r <= v <= {upper} r required; v / r ranges over [{lo}, {hi}]",
            barriers.gamma
        )
    } else {
        format!(
            "{} <= v / (r (1 + v^2)^{}) <= {upper} required; observed [{lo}, {hi}]",
            barriers.gamma, barriers.beta
        )
    };
    check("barrier_sandwich", above && below, detail)
}

/// Slope of the Gauss-power translator in the plane, `f = K^(alpha/2)`, from its separable
/// form `ln(1 + v^2) = ln(1 + q r^2) / q` with `q = 1/alpha - 1`. `None` past the blow-up.
pub fn gauss_plane_slope(alpha: f64, r: f64) -> Option<f64> {
    let q = 1.0 / alpha - 1.0;
    let x = q * r * r;
    if x <= -1.0 {
        return None;
    }
    let ln_s = if q == 0.0 { r * r } else { x.ln_1p() / q };
    Some(ln_s.exp_m1().sqrt())
}

/// Blow-up radius `sqrt(alpha / (alpha - 1))` of the same family, for `alpha > 1`.
pub fn gauss_plane_radius(alpha: f64) -> Option<f64> {
    (alpha > 1.0).then(|| (alpha / (alpha - 1.0)).sqrt())
}

fn closed_form_check(alpha: f64, sol: &ProfileSolution) -> Vec<Check> {
    let radius = gauss_plane_radius(alpha);
    // v ~ 1/(R - r) near the blow-up, where a relative comparison only measures the bracket
    let r_cut = radius.map_or(f64::INFINITY, |r| 0.92 * r);
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for s in sol.samples.iter().filter(|s| s.r <= r_cut) {
        if let Some(exact) = gauss_plane_slope(alpha, s.r) {
            worst = worst.max((s.ln_v - exact.ln()).exp_m1().abs());
            compared += 1;
        }
    }
    let mut checks = vec![check(
        "closed_form",
        compared > 0 && worst < CLOSED_FORM_TOL,
        format!("max relative error {worst:e} over {compared} samples"),
    )];
    match (radius, &sol.status) {
        (Some(r), Status::BlewUp { r_low, r_high }) => checks.push(check(
            "closed_form_radius",
            *r_low <= r && r <= *r_high,
            format!("sqrt(alpha / (alpha - 1)) = {r}, bracket [{r_low}, {r_high}]"),
        )),
        (Some(r), other) if r <= sol.config.r_max => checks.push(check(
            "closed_form_radius",
            false,
            format!("expected blow-up at {r}, status {}", other.label()),
        )),
        _ => {}
    }
    checks
}

pub fn verify(args: &VerifyArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let SpeedArgs { speed: id, dim } = &args.speed;
    let overrides = args.run.overrides()?;
    let cfg = integration_config(IntegrationConfig::default(), &overrides)?;
    let speed = load_speed(id, *dim)?;
    let mut checks = vec![check(
        "admissibility",
        true,
        format!("axioms hold at {ADMISSIBILITY_SAMPLES} sampled points"),
    )];
    let solved = solve_profile(speed, &cfg)?;
    let sol = &solved.solution;
    let inv = solved.translator.invariants();
    let barriers = Barriers {
        beta: inv.beta,
        gamma: inv.gamma,
        gamma_plus: inv.gamma_plus,
        linear: inv.beta == 0.0,
    };

    checks.push(check(
        "integration",
        !matches!(sol.status, Status::LeftDomain { .. }),
        format!("status {} at r = {}", sol.status.label(), sol.last().r),
    ));
    checks.push(barrier_check(sol, &barriers));
    let convexity = check_convexity(&solved.bowl);
    checks.push(check(
        "convexity",
        convexity.passed,
        format!(
            "min v' = {}, min v / r = {}",
            convexity.min_v_prime, convexity.min_v_over_r
        ),
    ));
    let residual = solved.bowl.max_residual();
    checks.push(check(
        "residual",
        residual < RESIDUAL_TOL,
        format!("max |f(kappa) - 1/sqrt(1 + v^2)| = {residual:e}, tolerance {RESIDUAL_TOL:e}"),
    ));
    let r_tip = 2.0 * cfg.r_start;
    let tip = solved.bowl.tip_curvature_deviation(r_tip);
    checks.push(check(
        "tip_curvature",
        tip.is_some_and(|d| d < TIP_TOL),
        match tip {
            Some(d) => format!("relative deviation from gamma at r = {r_tip}: {d:e}"),
            None => format!("no sample at r >= {r_tip}"),
        },
    ));

    let convergence = match solved
        .translator
        .start_convergence(&args.starts, &ConvergenceConfig::default())
    {
        Ok(rep) => {
            checks.push(check(
                "start_convergence",
                rep.shrinks_linearly,
                format!(
                    "sup-norm differences {:?}, shrink factors {:?}",
                    rep.sup_norms, rep.shrink_factors
                ),
            ));
            Some(rep)
        }
        Err(e @ TranslatorError::InvalidConfig(_)) => {
            return Err(CliError::Parse(format!("--starts: {e}")))
        }
        Err(e) => {
            checks.push(check("start_convergence", false, e.to_string()));
            None
        }
    };

    if *dim == 2 {
        if let Some(alpha) = id
            .strip_prefix("gauss:")
            .and_then(|a| a.trim().parse::<f64>().ok())
        {
            checks.extend(closed_form_check(alpha, sol));
        }
    }

    let passed = checks.iter().all(|c| c.passed);
    let mut manifest = RunManifest::new("verify", id, *dim, overrides);
    manifest.outputs.extend(args.out.iter().cloned());
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    let report = VerifyReport {
        schema: SCHEMA,
        speed: id,
        dim: *dim,
        passed,
        status: sol.status.label(),
        barriers,
        checks: &checks,
        start_convergence: convergence.as_ref(),
        manifest: &manifest,
    };
    emit(args.out.as_deref(), &to_json(&report)?)?;
    if passed {
        Ok(())
    } else {
        Err(CliError::Verification(
            checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| c.name.as_str())
                .collect::<Vec<_>>()
                .join(", "),
        ))
    }
}

/// Creates the directory and its parents if missing.
pub(crate) fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}
