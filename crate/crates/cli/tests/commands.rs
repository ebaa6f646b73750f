use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use braids_cli::archive::{CurveKind, OrbitArchive};
use braids_cli::config::{AuditSection, RunConfig};
use braids_cli::export::{cmd_export, ExportKind};
use braids_cli::{cmd_audit, cmd_group, cmd_pipeline, CliError, Selection};
use coulomb_braids::GroupKind;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn seed(name: &str) -> PathBuf {
    repo().join("seeds").join(name)
}

fn braids() -> Command {
    Command::new(env!("CARGO_BIN_EXE_braids"))
}

fn kepler_config(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.seed = Some(seed("tetra-circle-third.txt"));
    cfg.q_start = Some(24.0);
    cfg.interactions = false;
    cfg.output = out.to_path_buf();
    cfg.continuation.max_records = 6;
    cfg
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn group_reports() {
    let t = cmd_group(GroupKind::Tetrahedral).unwrap();
    assert!(t.to_string().contains("12 elements, 7 axes"), "{t}");
    let o = cmd_group(GroupKind::Octahedral).unwrap();
    assert!(o.to_string().contains("24 elements, 13 axes"), "{o}");
    let i = cmd_group(GroupKind::Icosahedral).unwrap();
    assert_eq!((i.elements, i.axes), (60, 31));
    assert_eq!(t, cmd_group(GroupKind::Tetrahedral).unwrap());
    assert_ne!(t.checksum, o.checksum);
}

#[test]
fn group_binary_and_bad_kind() {
    let ok = braids().args(["group", "octahedral"]).output().unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("24 elements, 13 axes"));
    let bad = braids().args(["group", "heptahedral"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn config_defaults_and_rejections() {
    assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    let cfg = RunConfig::from_toml("symmetry = \"octahedral\"\n[ode]\nrtol = 1e-10\n").unwrap();
    assert_eq!(cfg.symmetry, Some(GroupKind::Octahedral));
    assert_eq!(cfg.ode.rtol, 1e-10);
    assert!(matches!(RunConfig::from_toml("[ode]\nrtoll = 1.0\n"), Err(CliError::Config(_))));

    let dir = tempfile::tempdir().unwrap();
    let mut cfg = kepler_config(dir.path());
    cfg.ode.atol = -1.0;
    assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    let mut cfg = kepler_config(dir.path());
    cfg.seed = Some(dir.path().join("missing.txt"));
    let err = cmd_pipeline(&cfg).unwrap_err();
    assert!(matches!(err, CliError::Config(_)), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn config_paths_resolve_against_file() {
    let cfg = RunConfig::load(&repo().join("configs/kepler-smoke.toml")).unwrap();
    cfg.validate().unwrap();
    assert!(!cfg.interactions);
}

#[test]
fn missing_seed_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = braids()
        .args(["pipeline", "--seed"])
        .arg(dir.path().join("nope.txt"))
        .arg("--output")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failure_names_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("fail.toml");
    fs::write(
        &cfg_path,
        format!(
            "seed = {:?}\noutput = \"out\"\n[shooting]\nmax_iters = 1\n",
            seed("tetra-circle-two-thirds.txt")
        ),
    )
    .unwrap();
    let out = braids().arg("pipeline").arg("--config").arg(&cfg_path).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage `epsilon-start`"));
}

#[test]
fn kepler_smoke_archive() {
    let dir = tempfile::tempdir().unwrap();
    let archive = cmd_pipeline(&kepler_config(dir.path())).unwrap();
    let charge = archive.charge_records();
    assert!(!charge.is_empty());
    for r in &charge {
        let q = r.record.lambda;
        let x = r.record.x.node(0);
        let radius = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        let exact = (q / (4.0 * std::f64::consts::PI.powi(2))).cbrt();
        assert!((radius - exact).abs() < 1e-9, "Q = {q}: {radius} vs {exact}");
    }
    assert_eq!(archive.header.config_sha256, braids_cli::archive::config_hash(&archive.header.config));
}

#[test]
fn archive_round_trip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let archive = cmd_pipeline(&kepler_config(dir.path())).unwrap();
    let opts = AuditSection {
        samples: 200,
        ..AuditSection::default()
    };
    let archive = cmd_audit(archive, &"0,2".parse().unwrap(), &opts).unwrap();
    let path = dir.path().join("a.jsonl");
    archive.save(&path).unwrap();
    let first = fs::read_to_string(&path).unwrap();
    let again = OrbitArchive::load(&path).unwrap();
    assert_eq!(again.to_text(), first);
    for (a, b) in archive.records.iter().zip(&again.records) {
        assert_eq!(a.record, b.record);
    }
}

#[test]
fn tampered_config_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let text = cmd_pipeline(&kepler_config(dir.path())).unwrap().to_text();
    let tampered = text.replacen("\"interactions\":false", "\"interactions\":true", 1);
    assert_ne!(text, tampered);
    assert!(matches!(OrbitArchive::parse(&tampered), Err(CliError::Config(_))));
}

#[test]
fn selections() {
    assert_eq!("".parse::<Selection>().unwrap(), Selection::Indices(vec![]));
    assert_eq!("3,0-2,2".parse::<Selection>().unwrap(), Selection::Indices(vec![0, 1, 2, 3]));
    assert_eq!("min-q".parse::<Selection>().unwrap(), Selection::MinQ);
    assert!("4-1".parse::<Selection>().is_err());
    assert!("x".parse::<Selection>().is_err());
}

#[test]
fn empty_audit_is_a_no_op() {
    let dir = tempfile::tempdir().unwrap();
    let archive = cmd_pipeline(&kepler_config(dir.path())).unwrap();
    let before = archive.to_text();
    let after = cmd_audit(archive, &"".parse().unwrap(), &AuditSection::default()).unwrap();
    assert_eq!(after.to_text(), before);
}

#[test]
fn neutral_record_escalates_to_full_monodromy() {
    // Kepler orbits have every reduced multiplier at 1.
    let dir = tempfile::tempdir().unwrap();
    let archive = cmd_pipeline(&kepler_config(dir.path())).unwrap();
    let opts = AuditSection {
        minimizer: false,
        ..AuditSection::default()
    };
    let archive = cmd_audit(archive, &"0".parse().unwrap(), &opts).unwrap();
    let r = archive.charge_records()[0];
    let s = r.stability.as_ref().unwrap();
    assert!(s.full.is_some());
    assert_eq!(s.full.as_ref().unwrap().dimension, 72);
    assert!(r.record.full_radius.is_some());
}

#[test]
fn tetrahedral_class_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = kepler_config(dir.path());
    cfg.seed = Some(seed("tetra-circle-two-thirds.txt"));
    cfg.interactions = true;
    cfg.continuation.max_records = 2000;
    let archive = cmd_pipeline(&cfg).unwrap();
    let charge = archive.charge_records();
    let min = charge
        .iter()
        .min_by(|a, b| a.record.lambda.total_cmp(&b.record.lambda))
        .unwrap();
    assert!(min.turning_point, "min-Q record {} is not flagged", min.index);
    assert_eq!(archive.header.curve(CurveKind::Charge).unwrap().turning_points, vec![min.index]);

    // Past the turn the reduced spectrum is already off the unit circle.
    let last = charge.last().unwrap().index;
    let opts = AuditSection {
        minimizer: false,
        ..AuditSection::default()
    };
    let audited = cmd_audit(archive, &Selection::Indices(vec![last]), &opts).unwrap();
    let r = audited.charge_records().into_iter().find(|r| r.index == last).unwrap();
    let s = r.stability.as_ref().unwrap();
    assert!(r.record.reduced_radius.unwrap() > 1.0 + 1e-6);
    assert!(s.full.is_none());
}

#[test]
fn exports_match_archive() {
    let dir = tempfile::tempdir().unwrap();
    let archive = cmd_pipeline(&kepler_config(dir.path())).unwrap();
    let opts = AuditSection {
        samples: 100,
        ..AuditSection::default()
    };
    let archive = cmd_audit(archive, &"1-3".parse().unwrap(), &opts).unwrap();

    let out = dir.path().join("csv");
    let files = cmd_export(&archive, ExportKind::RadiusVsQ, &Selection::All, &out).unwrap();
    let (header, rows) = read_csv(&files[0]);
    assert_eq!(header, ["q", "reduced_radius", "full_radius"]);
    assert_eq!(rows.len(), 3);
    for (row, r) in rows.iter().zip(archive.charge_records().into_iter().skip(1)) {
        assert_eq!(row[0], r.record.lambda);
        assert_eq!(row[1], r.record.reduced_radius.unwrap());
    }

    let files = cmd_export(&archive, ExportKind::DetCurves, &"0,4".parse().unwrap(), &out).unwrap();
    assert_eq!(files.len(), 2);
    let (header, rows) = read_csv(&files[0]);
    assert_eq!(header, ["t", "det"]);
    assert_eq!(rows.len(), archive.header.config.audit.samples + 1);
    assert_eq!(rows[0], [0.0, 0.0]);

    let files = cmd_export(&archive, ExportKind::OrbitXyz, &Selection::MinQ, &out).unwrap();
    let (header, rows) = read_csv(&files[0]);
    assert_eq!(header, ["t", "particle", "x", "y", "z"]);
    let m = archive.header.twist.repetitions;
    let mesh = archive.header.config.seeding.mesh;
    let n = archive.header.electrons;
    assert_eq!(rows.len(), (m * mesh + 1) * n);
    // Kepler circle: every electron stays at the same radius, and the orbit closes.
    let r0 = (rows[0][2].powi(2) + rows[0][3].powi(2) + rows[0][4].powi(2)).sqrt();
    for row in &rows {
        let r = (row[2].powi(2) + row[3].powi(2) + row[4].powi(2)).sqrt();
        assert!((r - r0).abs() < 1e-9);
    }
    let last = &rows[rows.len() - n];
    for k in 2..5 {
        assert!((last[k] - rows[0][k]).abs() < 1e-9);
    }
}

#[test]
fn unknown_export_is_a_usage_error() {
    assert!(matches!("plots".parse::<ExportKind>(), Err(CliError::Config(_))));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.jsonl");
    cmd_pipeline(&kepler_config(dir.path())).unwrap().save(&path).unwrap();
    let out = braids().arg("export").arg(&path).arg("plots").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let ok = braids().arg("export").arg(&path).arg("orbit-xyz").arg("--records").arg("0").output().unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));
}
