//! Command-line runner: configuration, dispatch on a fixed-size worker
//! pool, and persisted outputs with a run manifest.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use clap::Parser;
use serde_json::json;

pub use commands::{Artifacts, IntegrityRecord};
pub use config::{parse_config, Command, ConfigError, RunConfig};
pub use error::CliError;
pub use output::{RunManifest, RunStatus};

use error::is_integrity_class;
use output::{file_digest, sha256_hex, write_json, write_table, OutputEntry};

pub const DEFAULT_OUT: &str = "reslab-out";

#[derive(Debug, Clone, Parser)]
#[command(name = "reslab", version, about = "Random Schrödinger operators on finite graphs")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory [default: reslab-out].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads [default: logical cores].
    #[arg(long)]
    pub workers: Option<usize>,
    /// Scales every resonance `g` before its floor check.
    #[arg(long, hide = true)]
    pub fault_g_scale: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub out_dir: PathBuf,
    pub manifest: RunManifest,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Load the configuration and fold in command-line overrides.
pub fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(&cli.config).map_err(|e| CliError::io(&cli.config, e))?;
    let mut cfg = parse_config(&text)?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Usage("--workers must be at least 1".into()));
        }
        cfg.workers = Some(w);
    }
    cfg.check_for(cli.command)?;
    if let Some(f) = cli.fault_g_scale {
        cfg.resonance.fault_g_scale = Some(f);
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<RunOutcome, CliError> {
    let cfg = load_config(cli)?;
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let workers = cfg
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start {workers} workers: {e}")))?;

    let started = now();
    let cmd = cli.command;
    let result = pool.install(|| commands::execute(cmd, &cfg));
    let artifacts = match result {
        Ok(a) => Ok(a),
        Err(CliError::Core(e)) if is_integrity_class(&e) => Err(e),
        Err(e) => return Err(e),
    };
    fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;

    let csv_name = format!("{cmd}.csv");
    let summary_name = format!("{cmd}.summary.json");
    let mut written = Vec::new();
    let (status, warnings) = match artifacts {
        Ok(a) => {
            let csv = out_dir.join(&csv_name);
            write_table(&csv, &a.table, None).map_err(|e| CliError::io(&csv, e))?;
            written.push(csv_name);
            let mut summary = a.summary;
            if let serde_json::Value::Object(m) = &mut summary {
                m.insert("warnings".into(), json!(a.warnings));
                m.insert("integrity_failures".into(), json!(a.failures));
            }
            let path = out_dir.join(&summary_name);
            write_json(&path, &summary).map_err(|e| CliError::io(&path, e))?;
            written.push(summary_name);
            let status = if !a.failures.is_empty() {
                RunStatus::IntegrityFailure
            } else if !a.warnings.is_empty() {
                RunStatus::Warnings
            } else {
                RunStatus::Ok
            };
            (status, a.warnings)
        }
        Err(e) => {
            let record = match &e {
                reslab::Error::Integrity { check, detail } => IntegrityRecord {
                    check: check.clone(),
                    detail: detail.clone(),
                },
                other => IntegrityRecord {
                    check: "solver".into(),
                    detail: other.to_string(),
                },
            };
            let summary = json!({
                "command": cmd,
                "status": RunStatus::IntegrityFailure,
                "integrity_failures": [record],
            });
            let path = out_dir.join(&summary_name);
            write_json(&path, &summary).map_err(|e| CliError::io(&path, e))?;
            written.push(summary_name);
            (RunStatus::IntegrityFailure, Vec::new())
        }
    };

    let outputs = written
        .iter()
        .map(|name| {
            let path = out_dir.join(name);
            let (sha256, bytes) = file_digest(&path).map_err(|e| CliError::io(&path, e))?;
            Ok(OutputEntry {
                file: name.clone(),
                sha256,
                bytes,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let manifest = RunManifest {
        command: cmd.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_digest: sha256_hex(&cfg.canonical_bytes()),
        seed: cfg.seed,
        workers,
        started,
        finished: now(),
        status,
        warnings,
        outputs,
    };
    let path = out_dir.join("manifest.json");
    write_json(&path, &manifest).map_err(|e| CliError::io(&path, e))?;
    let exit_code = if status == RunStatus::IntegrityFailure { 2 } else { 0 };
    Ok(RunOutcome {
        exit_code,
        out_dir,
        manifest,
    })
}

fn report(outcome: &RunOutcome) {
    for w in &outcome.manifest.warnings {
        eprintln!("warning: {w}");
    }
    for o in &outcome.manifest.outputs {
        println!("{}", Path::new(&outcome.out_dir).join(&o.file).display());
    }
    if outcome.exit_code == 2 {
        eprintln!("integrity failure; see {}.summary.json", outcome.manifest.command);
    }
}

/// Parse arguments, run, and map the result to an exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(outcome) => {
            report(&outcome);
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
