//! Command implementations behind the `braids` binary.

pub mod archive;
pub mod config;
pub mod export;

use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use coulomb_braids::continuation::turning_points;
use coulomb_braids::secondvar::{classify_solutions, orbit_jacobi, OrbitCoefficients};
use coulomb_braids::stability::{assess_stability, FULL_TRIVIAL, REDUCED_TRIVIAL};
use coulomb_braids::symmetry::build_group;
use coulomb_braids::{
    run_pipeline, Error, GroupKind, ProblemParams, ShootingProblem, StabilityAssessment, MinimizerVerdict,
};
use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error as ThisError;

use archive::{config_hash, ArchiveHeader, ArchiveRecord, CurveKind, CurveSummary, OrbitArchive, TwistInfo};
use config::{AuditSection, RunConfig};

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure in stage `{stage}`: {message}")]
    Numerical { stage: String, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical { .. } => 3,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Config(format!("{}: {e}", path.display()))
    }

    /// Classify a core error raised inside `stage`.
    pub fn from_core(stage: &str, e: Error) -> Self {
        match e {
            Error::Pipeline { stage, source } => match *source {
                e @ (Error::InvalidTwist(_) | Error::Parse(_)) => CliError::Config(e.to_string()),
                e => CliError::Numerical {
                    stage: stage.to_string(),
                    message: e.to_string(),
                },
            },
            e @ (Error::InvalidTwist(_) | Error::Parse(_)) => CliError::Config(e.to_string()),
            e => CliError::Numerical {
                stage: stage.to_string(),
                message: e.to_string(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupReport {
    pub kind: GroupKind,
    pub elements: usize,
    pub axes: usize,
    /// First 16 hex digits of the SHA-256 of the multiplication table.
    pub checksum: String,
}

impl std::fmt::Display for GroupReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: {} elements, {} axes, table checksum {}",
            self.kind, self.elements, self.axes, self.checksum
        )
    }
}

pub fn cmd_group(kind: GroupKind) -> Result<GroupReport, CliError> {
    let g = build_group(kind);
    let mut hasher = Sha256::new();
    for (i, row) in g.multiplication_table().iter().enumerate() {
        for (j, entry) in row.iter().enumerate() {
            let k = entry.ok_or_else(|| CliError::Numerical {
                stage: "group".into(),
                message: format!("product of elements {i} and {j} left the group"),
            })?;
            hasher.update((k as u32).to_le_bytes());
        }
    }
    Ok(GroupReport {
        kind,
        elements: g.order(),
        axes: g.axes.len(),
        checksum: hex::encode(&hasher.finalize()[..8]),
    })
}

/// Which records of the charge curve a command acts on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selection {
    All,
    /// The record with the smallest `Q`.
    MinQ,
    TurningPoints,
    Indices(Vec<usize>),
}

impl FromStr for Selection {
    type Err = CliError;

    /// `all`, `min-q`, `turning`, or a comma list of indices and ranges such
    /// as `0,4-7`. An empty string selects nothing.
    fn from_str(s: &str) -> Result<Self, CliError> {
        match s.trim() {
            "all" => return Ok(Selection::All),
            "min-q" => return Ok(Selection::MinQ),
            "turning" => return Ok(Selection::TurningPoints),
            _ => {}
        }
        let bad = |p: &str| CliError::Config(format!("bad record selection `{p}`"));
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.split_once('-') {
                Some((a, b)) => {
                    let a: usize = a.trim().parse().map_err(|_| bad(part))?;
                    let b: usize = b.trim().parse().map_err(|_| bad(part))?;
                    if b < a {
                        return Err(bad(part));
                    }
                    out.extend(a..=b);
                }
                None => out.push(part.parse().map_err(|_| bad(part))?),
            }
        }
        out.sort_unstable();
        out.dedup();
        Ok(Selection::Indices(out))
    }
}

impl Selection {
    /// Positions in `archive.records` of the selected charge records.
    pub fn resolve(&self, archive: &OrbitArchive) -> Result<Vec<usize>, CliError> {
        let charge: Vec<usize> = (0..archive.records.len())
            .filter(|&i| archive.records[i].curve == CurveKind::Charge)
            .collect();
        Ok(match self {
            Selection::All => charge,
            Selection::MinQ => charge
                .iter()
                .copied()
                .min_by(|&a, &b| {
                    archive.records[a]
                        .record
                        .lambda
                        .total_cmp(&archive.records[b].record.lambda)
                })
                .into_iter()
                .collect(),
            Selection::TurningPoints => charge
                .into_iter()
                .filter(|&i| archive.records[i].turning_point)
                .collect(),
            Selection::Indices(idx) => {
                let mut out = Vec::with_capacity(idx.len());
                for &k in idx {
                    let pos = charge.iter().copied().find(|&i| archive.records[i].index == k);
                    out.push(pos.ok_or_else(|| CliError::Config(format!("no charge record with index {k}")))?);
                }
                out
            }
        })
    }
}

/// The unforced, charge-parameterized shooting problem an archive was computed with.
pub fn charge_problem(header: &ArchiveHeader) -> Result<ShootingProblem, CliError> {
    let group = Arc::new(build_group(header.group));
    let fraction = coulomb_braids::seeding::parse_fraction(&header.twist.fraction)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let w = coulomb_braids::Waypoints {
        group: header.group,
        twist_axis: header.twist.axis,
        twist_fraction: fraction,
        repetitions: header.twist.repetitions,
        points: header.waypoints.clone(),
    };
    let twist = w.twist(&group).map_err(|e| CliError::Config(e.to_string()))?;
    let mut params = ProblemParams::new(group, twist, header.q_start);
    params.period = header.config.period;
    params.interactions = header.config.interactions;
    ShootingProblem::new(params, header.config.shooting_config()).map_err(|e| CliError::Config(e.to_string()))
}

/// Steps 1–3 from a validated config.
pub fn cmd_pipeline(config: &RunConfig) -> Result<OrbitArchive, CliError> {
    config.validate()?;
    let waypoints = config.waypoints()?;
    let result = run_pipeline(&waypoints, &config.pipeline_config()).map_err(|e| CliError::from_core("pipeline", e))?;
    let summary = |kind, curve: &coulomb_braids::ContinuationCurve| CurveSummary {
        kind,
        status: curve.status,
        message: curve.message.clone(),
        records: curve.records.len(),
        turning_points: curve.turning_points.clone(),
    };
    let header = ArchiveHeader {
        format: archive::FORMAT.into(),
        version: archive::VERSION.into(),
        group: waypoints.group,
        electrons: result.group.order(),
        twist: TwistInfo {
            axis: waypoints.twist_axis,
            fraction: format!("{}/{}", waypoints.twist_fraction.0, waypoints.twist_fraction.1),
            repetitions: waypoints.repetitions,
        },
        waypoints: waypoints.points.clone(),
        q_start: result.unforced.lambda,
        config_sha256: config_hash(config),
        config: config.clone(),
        curves: vec![
            summary(CurveKind::Epsilon, &result.epsilon_curve),
            summary(CurveKind::Charge, &result.charge_curve),
        ],
    };
    let mut records = Vec::new();
    for (kind, curve) in [
        (CurveKind::Epsilon, &result.epsilon_curve),
        (CurveKind::Charge, &result.charge_curve),
    ] {
        let turns = turning_points(&curve.records);
        records.extend(curve.records.iter().enumerate().map(|(i, r)| ArchiveRecord {
            curve: kind,
            index: i,
            turning_point: turns.contains(&i),
            record: r.clone(),
            stability: None,
            minimizer: None,
        }));
    }
    Ok(OrbitArchive { header, records })
}

fn audit_one(
    base: &ShootingProblem,
    rec: &ArchiveRecord,
    opts: &AuditSection,
) -> Result<(Option<StabilityAssessment>, Option<MinimizerVerdict>), coulomb_braids::Error> {
    let p = base.at_lambda(rec.record.lambda);
    let stability = if opts.stability {
        Some(assess_stability(&p, &rec.record.x)?)
    } else {
        None
    };
    let minimizer = if opts.minimizer {
        let sol = orbit_jacobi(&p, &rec.record.x, opts.samples)?;
        let coeffs = OrbitCoefficients { field: &p.field };
        Some(classify_solutions(&sol, &coeffs, p.params.twist.rotation())?)
    } else {
        None
    };
    Ok((stability, minimizer))
}

/// Attach stability and minimizer verdicts to the selected charge records.
/// An empty selection returns the archive unchanged.
pub fn cmd_audit(mut archive: OrbitArchive, which: &Selection, opts: &AuditSection) -> Result<OrbitArchive, CliError> {
    let targets = which.resolve(&archive)?;
    if targets.is_empty() || !(opts.stability || opts.minimizer) {
        return Ok(archive);
    }
    let base = charge_problem(&archive.header)?;
    let results: Vec<_> = targets
        .par_iter()
        .map(|&i| {
            let r = &archive.records[i];
            audit_one(&base, r, opts).map_err(|e| CliError::Numerical {
                stage: "audit".into(),
                message: format!("charge record {} (Q = {}): {e}", r.index, r.record.lambda),
            })
        })
        .collect::<Result<_, _>>()?;
    for (&i, (stability, minimizer)) in targets.iter().zip(results) {
        let r = &mut archive.records[i];
        if let Some(s) = stability {
            r.record.reduced_radius = Some(s.reduced.nontrivial_radius(REDUCED_TRIVIAL));
            r.record.full_radius = s.full.as_ref().map(|f| f.nontrivial_radius(FULL_TRIVIAL));
            r.stability = Some(s);
        }
        if let Some(m) = minimizer {
            r.record.conjugate_point = Some(!m.conjugate_points.is_empty());
            r.record.classification = Some(m.classification.as_str().to_string());
            r.minimizer = Some(m);
        }
    }
    Ok(archive)
}
