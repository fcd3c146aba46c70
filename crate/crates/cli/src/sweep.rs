//! Parameter grids over the homogeneity degree and the dimension, run on a worker pool.

use crate::commands::{ensure_dir, integration_config, load_speed, solve_profile};
use crate::error::CliError;
use crate::manifest::{ConfigOverrides, RunManifest};
use crate::output::{profile_csv, to_json, write_atomic, SCHEMA};
use crate::SweepArgs;
use bowlforge::classify::ClassifyConfig;
use bowlforge::{classify_with, Classification, IntegrationConfig, SpeedFunction, Status};
use rayon::prelude::*;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const ALPHA_PLACEHOLDER: &str = "{alpha}";

#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub speed: String,
    pub dim: usize,
    pub alpha: Option<f64>,
}

/// Expands the template over the grid, alpha-major.
pub fn expand(template: &str, alphas: &[f64], dims: &[usize]) -> Result<Vec<Job>, CliError> {
    let templated = template.contains(ALPHA_PLACEHOLDER);
    if templated && alphas.is_empty() {
        return Err(CliError::Parse(format!("'{template}' needs --alphas")));
    }
    if !templated && !alphas.is_empty() {
        return Err(CliError::Parse(format!(
            "--alphas given but '{template}' has no {ALPHA_PLACEHOLDER} placeholder"
        )));
    }
    if dims.is_empty() {
        return Err(CliError::Parse("--dims is empty".into()));
    }
    let alphas: Vec<Option<f64>> = if templated {
        alphas.iter().copied().map(Some).collect()
    } else {
        vec![None]
    };
    Ok(alphas
        .iter()
        .flat_map(|&alpha| {
            dims.iter().map(move |&dim| Job {
                speed: match alpha {
                    Some(a) => template.replace(ALPHA_PLACEHOLDER, &a.to_string()),
                    None => template.to_string(),
                },
                dim,
                alpha,
            })
        })
        .collect())
}

/// File name for a run: the identifier with anything unsafe replaced by `_`.
pub fn file_stem(speed: &str, dim: usize) -> String {
    let id: String = speed
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{id}_n{dim}")
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub speed: String,
    pub dim: usize,
    pub alpha: Option<f64>,
    pub exit_code: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blow_up_bracket: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<Classification>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub manifest: RunManifest,
}

#[derive(Debug, Serialize)]
struct SweepReport<'a> {
    schema: &'static str,
    template: &'a str,
    threads: usize,
    wall_time_s: f64,
    rows: &'a [SweepRow],
}

fn run_job(
    job: &Job,
    cfg: &IntegrationConfig,
    overrides: ConfigOverrides,
    dir: &Path,
) -> (SweepRow, Option<CliError>) {
    let started = Instant::now();
    let mut row = SweepRow {
        speed: job.speed.clone(),
        dim: job.dim,
        alpha: job.alpha,
        exit_code: 0,
        status: None,
        blow_up_bracket: None,
        r_end: None,
        max_residual: None,
        classification: None,
        error: None,
        manifest: RunManifest::new("sweep", &job.speed, job.dim, overrides),
    };
    let outcome = (|| {
        let solved = solve_profile(load_speed(&job.speed, job.dim)?, cfg)?;
        let sol = &solved.solution;
        row.status = Some(sol.status.label());
        row.r_end = Some(sol.last().r);
        row.max_residual = Some(solved.bowl.max_residual());
        if let Status::BlewUp { r_low, r_high } = sol.status {
            row.blow_up_bracket = Some([r_low, r_high]);
        }
        row.classification = Some(
            classify_with(&solved.translator, &ClassifyConfig::default())
                .map_err(CliError::numerical)?,
        );
        let csv = dir.join(format!("{}.csv", file_stem(&job.speed, job.dim)));
        write_atomic(&csv, profile_csv(&solved.bowl.samples).as_bytes())?;
        row.manifest.outputs.push(csv);
        match &sol.status {
            Status::LeftDomain { r, reason } => Err(CliError::Numerical(format!(
                "left the domain at r = {r}: {reason}"
            ))),
            _ => Ok(()),
        }
    })();
    row.manifest.wall_time_s = started.elapsed().as_secs_f64();
    match outcome {
        Ok(()) => (row, None),
        Err(e) => {
            row.exit_code = e.exit_code();
            row.error = Some(e.to_string());
            (row, Some(e))
        }
    }
}

pub fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    let started = Instant::now();
    let jobs = expand(&args.speed, &args.alphas, &args.dims)?;
    // reject malformed identifiers before any work starts
    for job in &jobs {
        if let Err(e) = SpeedFunction::from_id(&job.speed, job.dim) {
            let e = CliError::from_speed(e);
            if e.exit_code() == 2 {
                return Err(e);
            }
        }
    }
    let overrides = args.run.overrides()?;
    let cfg = integration_config(IntegrationConfig::default(), &overrides)?;
    ensure_dir(&args.out)?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Parse("--threads must be positive".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Numerical(format!("cannot start the worker pool: {e}")))?;
    let threads = pool.current_num_threads();
    let results: Vec<(SweepRow, Option<CliError>)> = pool.install(|| {
        jobs.par_iter()
            .map(|job| run_job(job, &cfg, overrides, &args.out))
            .collect()
    });
    let (rows, errors): (Vec<SweepRow>, Vec<Option<CliError>>) = results.into_iter().unzip();

    let report = SweepReport {
        schema: SCHEMA,
        template: &args.speed,
        threads,
        wall_time_s: started.elapsed().as_secs_f64(),
        rows: &rows,
    };
    let summary: PathBuf = args.out.join("sweep.json");
    write_atomic(&summary, to_json(&report)?.as_bytes())?;
    match errors.into_iter().flatten().next() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}
