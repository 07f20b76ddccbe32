use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

mod config;
mod manifest;
mod pipeline;
mod report;

use config::{parse_assignment, ConfigError, ExperimentConfig, Overrides};
use manifest::{sha256_hex, FileEntry, Manifest, CONFIG, MANIFEST, RESULTS};

#[derive(Parser)]
#[command(name = "ffsim", version, about = "Tomography and calibration experiments on a simulated fixed-frequency device")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Shots per circuit; 0 for exact expectations.
        #[arg(long)]
        shots: Option<u64>,
        /// Result directory, replacing `output` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace a config value, e.g. `--set ham-tomog.omega=30`.
        #[arg(long = "set", value_parser = parse_assignment)]
        set: Vec<(String, String)>,
    },
    /// Summarize a result directory.
    Report { dir: PathBuf },
}

enum Failure {
    Config(ConfigError),
    Run(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Run(_) | Failure::Io(_) => 1,
        }
    }

    fn to_json(&self) -> serde_json::Value {
        match self {
            Failure::Config(e) => json!({ "error": { "kind": "config", "message": e.message, "line": e.line, "column": e.column } }),
            Failure::Run(m) => json!({ "error": { "kind": "run", "message": m } }),
            Failure::Io(m) => json!({ "error": { "kind": "io", "message": m } }),
        }
    }
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<FileEntry, Failure> {
    fs::write(dir.join(name), bytes).map_err(|e| Failure::Io(format!("cannot write {name}: {e}")))?;
    Ok(FileEntry { name: name.into(), sha256: sha256_hex(bytes) })
}

fn run(path: &Path, overrides: Overrides) -> Result<Vec<String>, Failure> {
    let cfg = ExperimentConfig::load(path, &overrides).map_err(Failure::Config)?;
    let out = cfg.output.clone().ok_or_else(|| Failure::Config(ConfigError::new("no output directory: set `output` or pass --out")))?;
    let outcome = pipeline::execute(&cfg).map_err(Failure::Run)?;
    fs::create_dir_all(&out).map_err(|e| Failure::Io(format!("cannot create {}: {e}", out.display())))?;

    let canonical = cfg.canonical();
    let mut files = vec![write(&out, CONFIG, canonical.as_bytes())?];
    let mut results = serde_json::to_string_pretty(&outcome.results).map_err(|e| Failure::Run(e.to_string()))?;
    results.push('\n');
    files.push(write(&out, RESULTS, results.as_bytes())?);
    for (name, body) in &outcome.tables {
        files.push(write(&out, name, body.as_bytes())?);
    }
    let manifest = Manifest {
        tool: "ffsim".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: cfg.experiment.to_string(),
        seed: cfg.seed,
        config_sha256: sha256_hex(canonical.as_bytes()),
        config: canonical,
        files,
        warnings: outcome.warnings.clone(),
    };
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    fs::write(out.join(MANIFEST), text).map_err(|e| Failure::Io(format!("cannot write {MANIFEST}: {e}")))?;
    Ok(outcome.warnings)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, shots, out, set } => run(&config, Overrides { seed, shots, output: out, set }).map(|warnings| {
            for w in warnings {
                eprintln!("warning: {w}");
            }
        }),
        Command::Report { dir } => report::render(&dir).map(|text| print!("{text}")).map_err(Failure::Run),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(f.code())
        }
    }
}
