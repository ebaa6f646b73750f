//! Line-delimited JSON orbit archive.
//!
//! The first line is the header, every following line one continuation
//! record. Floats are written in shortest round-trip form, so reading an
//! archive and writing it again reproduces the file byte for byte.

use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use coulomb_braids::continuation::TraceStatus;
use coulomb_braids::{ContinuationRecord, GroupKind, MinimizerVerdict, StabilityAssessment};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

pub const FORMAT: &str = "coulomb-braids-archive";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Epsilon,
    Charge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwistInfo {
    pub axis: usize,
    pub fraction: String,
    pub repetitions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSummary {
    pub kind: CurveKind,
    pub status: TraceStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub records: usize,
    pub turning_points: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchiveHeader {
    pub format: String,
    pub version: String,
    pub group: GroupKind,
    pub electrons: usize,
    pub twist: TwistInfo,
    pub waypoints: Vec<[f64; 3]>,
    pub q_start: f64,
    /// Hex SHA-256 of the JSON form of `config`.
    pub config_sha256: String,
    pub config: RunConfig,
    pub curves: Vec<CurveSummary>,
}

impl ArchiveHeader {
    pub fn curve(&self, kind: CurveKind) -> Option<&CurveSummary> {
        self.curves.iter().find(|c| c.kind == kind)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchiveRecord {
    pub curve: CurveKind,
    /// Position within its curve.
    pub index: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub turning_point: bool,
    pub record: ContinuationRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityAssessment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub minimizer: Option<MinimizerVerdict>,
}

#[derive(Debug, Clone)]
pub struct OrbitArchive {
    pub header: ArchiveHeader,
    pub records: Vec<ArchiveRecord>,
}

pub fn config_hash(config: &RunConfig) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

fn corrupt(line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("archive line {line}: {msg}"))
}

impl OrbitArchive {
    /// Records of one curve, in curve order.
    pub fn curve(&self, kind: CurveKind) -> impl Iterator<Item = &ArchiveRecord> {
        self.records.iter().filter(move |r| r.curve == kind)
    }

    pub fn charge_records(&self) -> Vec<&ArchiveRecord> {
        self.curve(CurveKind::Charge).collect()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, CliError> {
        let mut lines = r.lines().enumerate();
        let header_line = match lines.next() {
            Some((_, l)) => l.map_err(|e| corrupt(1, e))?,
            None => return Err(CliError::Config("archive is empty".into())),
        };
        let header: ArchiveHeader = serde_json::from_str(&header_line).map_err(|e| corrupt(1, e))?;
        if header.format != FORMAT {
            return Err(corrupt(1, format!("unknown format `{}`", header.format)));
        }
        if config_hash(&header.config) != header.config_sha256 {
            return Err(corrupt(1, "config hash does not match the config snapshot"));
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let line = line.map_err(|e| corrupt(i + 1, e))?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(serde_json::from_str(&line).map_err(|e| corrupt(i + 1, e))?);
        }
        Ok(OrbitArchive { header, records })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        Self::read_from(text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let f = fs::File::open(path).map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?;
        Self::read_from(std::io::BufReader::new(f))
    }

    /// Write through a temporary file so a crash never leaves half an archive.
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            }
        }
        let tmp = path.with_extension("jsonl.tmp");
        let f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
        self.write_to(std::io::BufWriter::new(f)).map_err(|e| CliError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
    }
}
