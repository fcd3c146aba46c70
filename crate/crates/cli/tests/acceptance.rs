//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Reference values are computed here from closed forms, explicit barrier curves and
//! hand-derived constants, never from the library under test.

use bowlforge::classify::{cross_validate, ClassifyConfig, ENTIRE_HORIZON};
use bowlforge::level_sets::level_ratio;
use bowlforge::translator::ConvergenceConfig;
use bowlforge::{
    analyze, check_convexity, classify_with, IntegrationConfig, ProfileSolution, SpeedFunction,
    Status, Translator, Verdict,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

/// A profile kept for the invariant sweep of criterion 6.
struct Run {
    label: String,
    translator: Translator,
    solution: ProfileSolution,
}

#[derive(Default)]
struct Runs(Vec<Run>);

impl Runs {
    fn integrate(&mut self, id: &str, n: usize, cfg: &IntegrationConfig) -> Result<&Run, String> {
        let t = translator(id, n)?;
        let solution = t.integrate(cfg).map_err(|e| format!("{id} n={n}: {e}"))?;
        self.0.push(Run {
            label: format!("{id} n={n} r_max={}", cfg.r_max),
            translator: t,
            solution,
        });
        Ok(self.0.last().unwrap())
    }
}

fn translator(id: &str, n: usize) -> Result<Translator, String> {
    let speed = SpeedFunction::from_id(id, n).map_err(|e| format!("{id} n={n}: {e}"))?;
    Translator::new(speed).map_err(|e| format!("{id} n={n}: {e}"))
}

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn bracket(status: &Status) -> Result<(f64, f64), String> {
    match status {
        Status::BlewUp { r_low, r_high } => Ok((*r_low, *r_high)),
        other => Err(format!("expected a blow-up, status {}", other.label())),
    }
}

fn harmonic_mean_plane(runs: &mut Runs) -> Outcome {
    let run = runs.integrate("harmonic-mean", 2, &IntegrationConfig::with_r_max(10.0))?;
    let sol = &run.solution;
    let (lo, hi) = bracket(&sol.status)?;
    ensure(lo >= FRAC_PI_4 - 1e-3 && hi <= FRAC_PI_2 + 1e-3, || {
        format!("bracket [{lo}, {hi}] not inside [pi/4, pi/2]")
    })?;
    let r0 = sol.samples[0].r;
    for i in 0..200 {
        let r = r0 + (lo - r0) * i as f64 / 200.0;
        let v = sol.v_at(r).ok_or_else(|| format!("no value at r = {r}"))?;
        let lower = r.tan();
        let upper = if 2.0 * r < FRAC_PI_2 {
            (2.0 * r).tan()
        } else {
            f64::INFINITY
        };
        ensure(
            v >= lower * (1.0 - 1e-9) && v <= upper * (1.0 + 1e-9),
            || format!("r = {r}: v = {v} outside [tan r, tan 2r] = [{lower}, {upper}]"),
        )?;
    }
    Ok(format!(
        "R in [{lo:.9}, {hi:.9}], tan r <= v <= tan 2r at 200 radii"
    ))
}

fn gauss_curvature_plane(runs: &mut Runs) -> Outcome {
    let run = runs.integrate("gauss:2", 2, &IntegrationConfig::with_r_max(10.0))?;
    let sol = &run.solution;
    let mut worst: f64 = 0.0;
    for i in 0..400 {
        let r = (2e-6 * (1.3f64 / 2e-6).powf(i as f64 / 399.0)).min(1.3);
        let v = sol.v_at(r).ok_or_else(|| format!("no value at r = {r}"))?;
        // sqrt((1 - r^2/2)^-2 - 1) without cancellation near the tip
        let exact = (-2.0 * (-r * r / 2.0).ln_1p()).exp_m1().sqrt();
        worst = worst.max((v - exact).abs() / exact);
    }
    ensure(worst < 1e-8, || format!("max relative error {worst:e}"))?;
    let (lo, hi) = bracket(&sol.status)?;
    let root2 = 2f64.sqrt();
    ensure(lo <= root2 && root2 <= hi && hi - lo < 1e-6, || {
        format!("bracket [{lo}, {hi}] vs sqrt 2")
    })?;
    Ok(format!(
        "max rel err {worst:.2e} on [2e-6, 1.3], bracket width {:.1e} around sqrt 2",
        hi - lo
    ))
}

fn mean_curvature(runs: &mut Runs) -> Outcome {
    let mut notes = Vec::new();
    for n in [2usize, 3] {
        let run = runs.integrate("mean", n, &IntegrationConfig::with_r_max(100.0))?;
        let sol = &run.solution;
        ensure(sol.status == Status::ReachedHorizon, || {
            format!("n={n}: status {}", sol.status.label())
        })?;
        let slope = 1.0 / (n - 1) as f64;
        let ratio = sol.last().v / 100.0;
        ensure((ratio - slope).abs() < 1e-3, || {
            format!("n={n}: v(100)/100 = {ratio}")
        })?;
        let bowl = analyze(run.translator.context(), sol);
        let fit = bowl
            .asymptotic_fit
            .ok_or_else(|| format!("n={n}: no asymptotic fit"))?;
        let c = 0.5 / (n - 1) as f64;
        ensure((fit.exponent - 2.0).abs() < 0.01, || {
            format!(
                "n={n}: fitted exponent {} (constant {})",
                fit.exponent, fit.constant
            )
        })?;
        let k = fit.constant_at_expected_exponent;
        ensure((k - c).abs() < 0.02 * c, || {
            format!("n={n}: fitted constant {k} vs {c}")
        })?;
        notes.push(format!(
            "n={n}: v/r={ratio:.5}, p={:.4}, C={k:.4} (free fit {:.4})",
            fit.exponent, fit.constant
        ));
    }
    Ok(notes.join("; "))
}

fn scalar_curvature(runs: &mut Runs) -> Outcome {
    let run = runs.integrate("scalar", 3, &IntegrationConfig::with_r_max(1e3))?;
    let sol = &run.solution;
    ensure(sol.status == Status::ReachedHorizon, || {
        format!("status {}", sol.status.label())
    })?;
    let (lo, hi) = (1.0 / 6f64.sqrt(), 1.0 / 2f64.sqrt());
    for s in &sol.samples {
        let q = s.v / s.r;
        ensure(q >= lo * (1.0 - 1e-9) && q <= hi * (1.0 + 1e-9), || {
            format!("r = {}: v/r = {q} outside [1/sqrt 6, 1/sqrt 2]", s.r)
        })?;
    }
    let c = 1.0 / (2.0 * 2f64.sqrt());
    let class =
        classify_with(&run.translator, &ClassifyConfig::default()).map_err(|e| e.to_string())?;
    match class.verdict {
        Verdict::Entire {
            asymptotic_constant: Some(k),
        } if (k - c).abs() < 1e-9 * c => {}
        other => return Err(format!("verdict {other:?}, expected entire with C = {c}")),
    }
    let fit = analyze(run.translator.context(), sol)
        .asymptotic_fit
        .ok_or("no asymptotic fit")?;
    let k = fit.constant_at_expected_exponent;
    ensure((k - c).abs() < 0.02 * c, || {
        format!("fitted constant {k} vs {c}")
    })?;
    Ok(format!(
        "{} samples between r/sqrt 6 and r/sqrt 2, fitted C = {k:.5} vs {c:.5} (free fit {:.5})",
        sol.samples.len(),
        fit.constant
    ))
}

fn classification_table(runs: &mut Runs) -> Outcome {
    let mut grid: Vec<(String, usize, &str)> = Vec::new();
    grid.extend((2..=5).map(|n| ("mean".to_string(), n, "entire")));
    grid.extend((3..=5).map(|n| ("scalar".to_string(), n, "entire")));
    grid.extend((2..=4).map(|n| ("harmonic-mean".to_string(), n, "bounded")));
    for alpha in [0.25, 0.5, 1.0, 1.5, 2.0, 3.0] {
        for n in [2usize, 3] {
            let expected = if alpha <= n as f64 / 2.0 {
                "entire"
            } else {
                "bounded"
            };
            grid.push((format!("gauss:{alpha}"), n, expected));
        }
    }
    let mut failures = Vec::new();
    for (id, n, expected) in &grid {
        let run = runs.integrate(id, *n, &IntegrationConfig::with_r_max(ENTIRE_HORIZON))?;
        let class = match classify_with(&run.translator, &ClassifyConfig::default()) {
            Ok(c) => c,
            Err(e) => {
                failures.push(format!("{id} n={n}: {e}"));
                continue;
            }
        };
        if class.verdict.label() != *expected {
            failures.push(format!(
                "{id} n={n}: {} instead of {expected}",
                class.verdict.label()
            ));
        }
        let report = cross_validate(&run.solution, &class);
        for m in report.mismatches() {
            failures.push(format!("{id} n={n}: {} ({})", m.name, m.detail));
        }
    }
    if failures.is_empty() {
        Ok(format!(
            "{} speeds agree with the predicted verdicts, no cross-check mismatch",
            grid.len()
        ))
    } else {
        Err(failures.join("; "))
    }
}

/// Properties every profile must have; returns the first violation.
fn invariants_of(run: &Run) -> Result<(), String> {
    let sol = &run.solution;
    let inv = run.translator.invariants();
    let bowl = analyze(run.translator.context(), sol);
    for s in &sol.samples {
        let ratio = if s.v.is_finite() {
            level_ratio(s.r, s.v, sol.beta)
        } else {
            (s.ln_v - s.r.ln() - 2.0 * sol.beta * s.ln_v).exp()
        };
        ensure(ratio >= inv.gamma * (1.0 - 1e-9), || {
            format!("below the subsolution at r = {}: ratio {ratio}", s.r)
        })?;
        if let Some(gp) = inv.gamma_plus {
            ensure(ratio <= gp * (1.0 + 1e-9), || {
                format!("above the supersolution at r = {}: ratio {ratio}", s.r)
            })?;
        }
    }
    let convex = check_convexity(&bowl);
    ensure(convex.passed && convex.min_v_prime > 0.0, || {
        format!("v' = {} at r = {:?}", convex.min_v_prime, convex.witness)
    })?;
    let res = bowl.max_residual();
    ensure(res < 1e-8, || format!("residual {res:e}"))?;
    let r_tip = 2.0 * sol.config.r_start;
    let tip = bowl
        .tip_curvature_deviation(r_tip)
        .ok_or("no sample near the tip")?;
    ensure(tip < 1e-4, || format!("tip curvature deviation {tip:e}"))
}

fn invariant_suite(runs: &mut Runs) -> Outcome {
    // randomized power means on top of every profile computed so far
    let mut rng = StdRng::seed_from_u64(0x5eed);
    for _ in 0..12 {
        let p: f64 = loop {
            let p = rng.gen_range(-3.0..3.0);
            if f64::abs(p) > 0.05 {
                break p;
            }
        };
        let alpha = rng.gen_range(0.3..3.0);
        let n = rng.gen_range(2..=5);
        runs.integrate(
            &format!("power-mean:{p}:{alpha}"),
            n,
            &IntegrationConfig::with_r_max(20.0),
        )?;
    }
    let failures: Vec<String> = runs
        .0
        .iter()
        .filter_map(|run| {
            invariants_of(run)
                .err()
                .map(|e| format!("{}: {e}", run.label))
        })
        .collect();
    if failures.is_empty() {
        Ok(format!(
            "{} profiles: sandwich, v' > 0, residual < 1e-8, tip within 1e-4",
            runs.0.len()
        ))
    } else {
        Err(failures.join("; "))
    }
}

fn start_regularization(_: &mut Runs) -> Outcome {
    let t = translator("mean", 2)?;
    let rep = t
        .start_convergence(&[1e-3, 1e-4, 1e-5], &ConvergenceConfig::default())
        .map_err(|e| e.to_string())?;
    let factor = rep.shrink_factors[0];
    ensure(factor >= 5.0, || {
        format!("sup norms {:?} shrink by {factor}", rep.sup_norms)
    })?;
    Ok(format!(
        "sup norms {:.2e} -> {:.2e}, factor {factor:.1}",
        rep.sup_norms[0], rep.sup_norms[1]
    ))
}

fn parser(_: &mut Runs) -> Outcome {
    let mut rng = StdRng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for n in 2..=5usize {
        let mut forms = vec![
            ("mean".to_string(), "S1".to_string()),
            ("mean".to_string(), "n*H".to_string()),
            ("harmonic-mean".to_string(), format!("S{n}/S{}", n - 1)),
            ("gauss:1.5".to_string(), format!("K^(1.5/{n})")),
            ("gauss:0.5".to_string(), "K^(1/(2*n))".to_string()),
        ];
        if n >= 3 {
            forms.push(("scalar".to_string(), "(2*S2)^(1/2)".to_string()));
        }
        for (builtin, src) in forms {
            let a = SpeedFunction::from_id(&builtin, n).map_err(|e| e.to_string())?;
            let b = SpeedFunction::from_id(&format!("expr:{src}"), n)
                .map_err(|e| format!("expr:{src}: {e}"))?;
            ensure((a.alpha() - b.alpha()).abs() < 1e-9, || {
                format!("{src}: degree {} vs {}", b.alpha(), a.alpha())
            })?;
            for _ in 0..100 {
                let z: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..10.0)).collect();
                let fa = a.evaluate(&z).map_err(|e| e.to_string())?;
                let fb = b.evaluate(&z).map_err(|e| e.to_string())?;
                worst = worst.max((fa - fb).abs() / fa.abs());
            }
            pairs += 1;
        }
    }
    ensure(worst < 1e-12, || {
        format!("max relative difference {worst:e}")
    })?;

    let malformed = [
        ("expr:S1+", 3),
        ("expr:(S1", 3),
        ("expr:S1**2", 3),
        ("expr:2*S9", 2),
        ("expr:S1 S2", 3),
    ];
    for (spec, offset) in malformed {
        let out = Command::new(env!("CARGO_BIN_EXE_bowlforge"))
            .args(["solve", "--speed", spec, "--dim", "3"])
            .output()
            .map_err(|e| e.to_string())?;
        let stderr = String::from_utf8_lossy(&out.stderr);
        ensure(out.status.code() == Some(2), || {
            format!("{spec}: exit {:?}", out.status.code())
        })?;
        ensure(stderr.contains(&format!("offset {offset}")), || {
            format!("{spec}: message without offset {offset}: {stderr}")
        })?;
    }
    Ok(format!(
        "{pairs} expression/built-in pairs agree to {worst:.1e} at 100 points each; {} malformed inputs exit 2 with offsets",
        malformed.len()
    ))
}

struct Criterion {
    number: u8,
    title: &'static str,
    budget: Option<Duration>,
    check: fn(&mut Runs) -> Outcome,
}

fn main() -> ExitCode {
    let secs = |s| Some(Duration::from_secs(s));
    let criteria = [
        Criterion {
            number: 1,
            title: "harmonic mean curvature in the plane",
            budget: secs(5),
            check: harmonic_mean_plane,
        },
        Criterion {
            number: 2,
            title: "Gauss curvature in the plane",
            budget: secs(5),
            check: gauss_curvature_plane,
        },
        Criterion {
            number: 3,
            title: "mean curvature, n = 2, 3",
            budget: secs(10),
            check: mean_curvature,
        },
        Criterion {
            number: 4,
            title: "scalar curvature, n = 3",
            budget: secs(10),
            check: scalar_curvature,
        },
        Criterion {
            number: 5,
            title: "classification table",
            budget: secs(120),
            check: classification_table,
        },
        Criterion {
            number: 6,
            title: "invariant suite",
            budget: None,
            check: invariant_suite,
        },
        Criterion {
            number: 7,
            title: "start regularization",
            budget: None,
            check: start_regularization,
        },
        Criterion {
            number: 8,
            title: "expression parser",
            budget: None,
            check: parser,
        },
    ];
    let mut runs = Runs::default();
    let mut failed = 0;
    for c in &criteria {
        let start = Instant::now();
        let mut outcome = (c.check)(&mut runs);
        let took = start.elapsed();
        if let (Ok(_), Some(b)) = (&outcome, c.budget) {
            if took > b {
                outcome = Err(format!(
                    "took {:.2} s, budget {} s",
                    took.as_secs_f64(),
                    b.as_secs()
                ));
            }
        }
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "{tag} [{}] {} ({:.2} s): {detail}",
            c.number,
            c.title,
            took.as_secs_f64()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
