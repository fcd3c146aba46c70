use crate::error::CliError;
use bowlforge::profile::BowlSample;
use serde::Serialize;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const SCHEMA: &str = "bowlforge/1";
pub const CSV_HEADER: &str = "r,v,vprime,u,kappa1,kappa_rot,residual";

/// Profile samples as CSV, every value with 17 significant digits.
pub fn profile_csv(samples: &[BowlSample]) -> String {
    let mut out = String::with_capacity(32 + samples.len() * 7 * 24);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for s in samples {
        let row = [s.r, s.v, s.v_prime, s.u, s.kappa1, s.kappa_rot, s.residual];
        for (i, x) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{x:.16e}");
        }
        out.push('\n');
    }
    out
}

/// Writes through a temporary file in the target directory, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io_err = |source| CliError::Io {
        path: path.display().to_string(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes to `path`, or to standard output without one.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|source| CliError::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
    }
}

/// Where the JSON report of a CSV export goes.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    let p = csv.with_extension("json");
    if p == csv {
        csv.with_extension("report.json")
    } else {
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(r: f64) -> BowlSample {
        BowlSample {
            r,
            u: 0.5 * r * r,
            v: r,
            v_prime: 1.0,
            kappa1: 1.0 / 3.0,
            kappa_rot: 0.1,
            residual: f64::NAN,
        }
    }

    #[test]
    fn csv_values_parse_back_exactly() {
        let csv = profile_csv(&[sample(1e-6), sample(std::f64::consts::PI)]);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        let row: Vec<f64> = lines
            .nth(1)
            .unwrap()
            .split(',')
            .map(|x| x.parse().unwrap())
            .collect();
        assert_eq!(row[0].to_bits(), std::f64::consts::PI.to_bits());
        assert_eq!(row[4].to_bits(), (1.0f64 / 3.0).to_bits());
        assert!(row[6].is_nan());
    }

    #[test]
    fn atomic_write_replaces_and_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        write_atomic(&path, b"old").unwrap();
        write_atomic(&path, b"new").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"new");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn sidecar_never_overwrites_the_csv() {
        assert_eq!(sidecar_path(Path::new("a/p.csv")), Path::new("a/p.json"));
        assert_eq!(
            sidecar_path(Path::new("p.json")),
            Path::new("p.report.json")
        );
    }
}
