//! CSV exports of archive contents. Values use 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::Vector3;
use rayon::prelude::*;

use coulomb_braids::secondvar::orbit_jacobi;

use crate::archive::OrbitArchive;
use crate::{charge_problem, CliError, Selection};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportKind {
    RadiusVsQ,
    DetCurves,
    OrbitXyz,
}

impl FromStr for ExportKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "radius-vs-Q" | "radius-vs-q" => Ok(ExportKind::RadiusVsQ),
            "det-curves" => Ok(ExportKind::DetCurves),
            "orbit-xyz" => Ok(ExportKind::OrbitXyz),
            other => Err(CliError::Config(format!(
                "unknown export `{other}` (expected radius-vs-Q, det-curves or orbit-xyz)"
            ))),
        }
    }
}

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn numerical(message: String) -> CliError {
    CliError::Numerical {
        stage: "export".into(),
        message,
    }
}

/// `q,reduced_radius[,full_radius]` for every selected record that has been
/// audited for stability. The third column appears once any record carries
/// a full monodromy and holds `NaN` where it does not.
pub fn radius_vs_q(archive: &OrbitArchive, targets: &[usize]) -> Result<String, CliError> {
    let rows: Vec<_> = targets
        .iter()
        .map(|&i| &archive.records[i])
        .filter(|r| r.record.reduced_radius.is_some())
        .collect();
    if rows.is_empty() && !targets.is_empty() {
        return Err(CliError::Config(
            "no selected record has stability annotations; run `audit` first".into(),
        ));
    }
    let three = rows.iter().any(|r| r.record.full_radius.is_some());
    let mut out = String::from(if three {
        "q,reduced_radius,full_radius\n"
    } else {
        "q,reduced_radius\n"
    });
    for r in rows {
        let rec = &r.record;
        write!(out, "{},{}", num(rec.lambda), num(rec.reduced_radius.unwrap())).unwrap();
        if three {
            write!(out, ",{}", num(rec.full_radius.unwrap_or(f64::NAN))).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

/// `t,det` of the forward Jacobi solution for one record.
pub fn det_curve(archive: &OrbitArchive, pos: usize) -> Result<String, CliError> {
    let base = charge_problem(&archive.header)?;
    let r = &archive.records[pos];
    let p = base.at_lambda(r.record.lambda);
    let sol = orbit_jacobi(&p, &r.record.x, archive.header.config.audit.samples)
        .map_err(|e| numerical(format!("record {}: {e}", r.index)))?;
    let mut out = String::from("t,det\n");
    for (t, d) in sol.times.iter().zip(&sol.det_y0) {
        writeln!(out, "{},{}", num(*t), num(*d)).unwrap();
    }
    Ok(out)
}

/// `t,particle,x,y,z` for all `N` electrons over one period, rebuilt from
/// the generating particle with `u_R = R u_I` and the twist `x(t + T/M) = S x(t)`.
pub fn orbit_xyz(archive: &OrbitArchive, pos: usize) -> Result<String, CliError> {
    let base = charge_problem(&archive.header)?;
    let r = &archive.records[pos];
    let p = base.at_lambda(r.record.lambda);
    let mesh = archive.header.config.seeding.mesh;
    let samples = p
        .sample_orbit(&r.record.x, mesh)
        .map_err(|e| numerical(format!("record {}: {e}", r.index)))?;
    let m = p.params.twist.repetitions;
    let tm = p.params.fundamental_time();
    let rot = *p.params.twist.rotation();
    let mut out = String::from("t,particle,x,y,z\n");
    let mut power = nalgebra::Matrix3::identity();
    for k in 0..m {
        let last_block = k + 1 == m;
        for (j, (t, x)) in samples.iter().enumerate() {
            if j + 1 == samples.len() && !last_block {
                continue;
            }
            let u = power * Vector3::new(x[0], x[1], x[2]);
            let time = k as f64 * tm + t;
            for (pi, e) in p.params.group.elements.iter().enumerate() {
                let w = e.matrix * u;
                writeln!(out, "{},{},{},{},{}", num(time), pi, num(w[0]), num(w[1]), num(w[2])).unwrap();
            }
        }
        power = rot * power;
    }
    Ok(out)
}

/// Write the requested export into `dir` and return the files created.
pub fn cmd_export(
    archive: &OrbitArchive,
    what: ExportKind,
    which: &Selection,
    dir: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    let targets = which.resolve(archive)?;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    match what {
        ExportKind::RadiusVsQ => {
            let path = dir.join("radius-vs-q.csv");
            write_file(&path, &radius_vs_q(archive, &targets)?)?;
            Ok(vec![path])
        }
        ExportKind::DetCurves | ExportKind::OrbitXyz => targets
            .par_iter()
            .map(|&pos| {
                let index = archive.records[pos].index;
                let (name, text) = if what == ExportKind::DetCurves {
                    (format!("det_{index:04}.csv"), det_curve(archive, pos)?)
                } else {
                    (format!("orbit_{index:04}.csv"), orbit_xyz(archive, pos)?)
                };
                let path = dir.join(name);
                write_file(&path, &text)?;
                Ok(path)
            })
            .collect(),
    }
}
