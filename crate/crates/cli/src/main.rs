use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use braids_cli::archive::{CurveKind, OrbitArchive};
use braids_cli::config::RunConfig;
use braids_cli::export::{cmd_export, ExportKind};
use braids_cli::{cmd_audit, cmd_group, cmd_pipeline, CliError, Selection};
use coulomb_braids::GroupKind;

#[derive(Parser)]
#[command(name = "braids", version, about = "Symmetric periodic orbits of the Coulomb (N+1)-body problem")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Element count, axis count and multiplication-table checksum of a group.
    Group {
        #[arg(value_parser = parse_group)]
        kind: GroupKind,
    },
    /// Seed, remove the forcing, and continue the orbit in Q.
    Pipeline {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Waypoint file.
        #[arg(long)]
        seed: Option<PathBuf>,
        #[arg(long)]
        q_start: Option<f64>,
        #[arg(long, value_parser = parse_group)]
        symmetry: Option<GroupKind>,
        /// Output directory; the archive is written to `<output>/archive.jsonl`.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        max_records: Option<usize>,
        /// Turn electron-electron repulsion off (Kepler limit).
        #[arg(long)]
        no_interactions: bool,
        /// Audit every charge record before writing the archive.
        #[arg(long)]
        audit: bool,
    },
    /// Attach stability and minimizer verdicts to archive records.
    Audit {
        archive: PathBuf,
        /// `all`, `min-q`, `turning`, or indices such as `0,3-5`.
        #[arg(long, default_value = "all")]
        records: String,
        #[arg(long)]
        no_stability: bool,
        #[arg(long)]
        no_minimizer: bool,
        #[arg(long)]
        samples: Option<usize>,
        /// Write here instead of rewriting the input archive.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write CSV files for plotting.
    Export {
        archive: PathBuf,
        /// radius-vs-Q, det-curves or orbit-xyz.
        #[arg(value_parser = parse_export)]
        what: ExportKind,
        #[arg(long, default_value = "all")]
        records: String,
        /// Output directory; defaults to the archive's directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn parse_group(s: &str) -> Result<GroupKind, String> {
    s.parse().map_err(|e: coulomb_braids::Error| e.to_string())
}

fn parse_export(s: &str) -> Result<ExportKind, String> {
    s.parse().map_err(|e: CliError| e.to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Group { kind } => {
            println!("{}", cmd_group(kind)?);
        }
        Command::Pipeline {
            config,
            seed,
            q_start,
            symmetry,
            output,
            max_records,
            no_interactions,
            audit,
        } => {
            let mut cfg = match config {
                Some(path) => RunConfig::load(&path)?,
                None => RunConfig::default(),
            };
            cfg.seed = seed.or(cfg.seed);
            cfg.q_start = q_start.or(cfg.q_start);
            cfg.symmetry = symmetry.or(cfg.symmetry);
            if let Some(o) = output {
                cfg.output = o;
            }
            if let Some(n) = max_records {
                cfg.continuation.max_records = n;
            }
            if no_interactions {
                cfg.interactions = false;
            }
            let mut archive = cmd_pipeline(&cfg)?;
            if audit {
                archive = cmd_audit(archive, &Selection::All, &cfg.audit)?;
            }
            let path = cfg.output.join("archive.jsonl");
            archive.save(&path)?;
            let charge: Vec<_> = archive.curve(CurveKind::Charge).collect();
            let min_q = charge.iter().map(|r| r.record.lambda).fold(f64::INFINITY, f64::min);
            let turns = charge.iter().filter(|r| r.turning_point).count();
            println!(
                "{}: {} charge records, min Q {min_q:.9}, {turns} turning point(s)",
                path.display(),
                charge.len()
            );
        }
        Command::Audit {
            archive,
            records,
            no_stability,
            no_minimizer,
            samples,
            output,
        } => {
            let loaded = OrbitArchive::load(&archive)?;
            let mut opts = loaded.header.config.audit.clone();
            opts.stability &= !no_stability;
            opts.minimizer &= !no_minimizer;
            if let Some(s) = samples {
                opts.samples = s;
            }
            let which: Selection = records.parse()?;
            let audited = cmd_audit(loaded, &which, &opts)?;
            audited.save(output.as_ref().unwrap_or(&archive))?;
        }
        Command::Export {
            archive,
            what,
            records,
            output,
        } => {
            let loaded = OrbitArchive::load(&archive)?;
            let which: Selection = records.parse()?;
            let dir = output.unwrap_or_else(|| archive.parent().map(PathBuf::from).unwrap_or_default());
            for p in cmd_export(&loaded, what, &which, &dir)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("braids: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
