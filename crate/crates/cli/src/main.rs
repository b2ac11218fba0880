// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use dgsm_core::InputDistribution;

mod config;
mod run;

use config::{Analysis, AnalysisConfig, ConfigError, OutputFormat};
use run::{RunError, CONVERGENCE_COLUMNS, COLUMNS};

/// Derivative-based global sensitivity analysis.
#[derive(Parser)]
#[command(name = "dgsm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the analyses listed in a config file.
    Analyze {
        config: PathBuf,
        /// Add quadrature oracle columns (d <= 4).
        #[arg(long)]
        oracle: bool,
    },
    /// DGSM upper bounds against total indices over a list of sample sizes.
    Convergence {
        config: PathBuf,
        /// Ascending sample sizes, comma separated.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        n: Vec<usize>,
    },
    /// Print the Poincaré constant of a distribution, e.g. `normal(0, 2)`.
    Poincare { spec: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dgsm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn configure_threads() -> Result<(), RunError> {
    let Ok(v) = std::env::var("SA_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| ConfigError::new("SA_THREADS", format!("'{v}' is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| RunError::Io(format!("thread pool: {e}")))
}

fn load(path: &Path) -> Result<AnalysisConfig, RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::new("config", format!("cannot read {}: {e}", path.display())))?;
    Ok(text.parse()?)
}

fn dispatch(cmd: Command) -> Result<(), RunError> {
    configure_threads()?;
    match cmd {
        Command::Analyze { config, oracle } => {
            let mut cfg = load(&config)?;
            if oracle {
                if cfg.dimension() > dgsm_core::oracle::MAX_ORACLE_DIM {
                    return Err(ConfigError::new(
                        "--oracle",
                        format!("oracle supports d <= {}", dgsm_core::oracle::MAX_ORACLE_DIM),
                    )
                    .into());
                }
                cfg.analyses.insert(Analysis::Oracle);
            }
            let start = Instant::now();
            let out = run::run(&cfg)?;
            let wall = start.elapsed().as_secs_f64();
            for w in &out.warnings {
                eprintln!("dgsm: warning: {w}");
            }
            let csv = csv_bytes(&COLUMNS, out.rows.iter().map(|r| r.fields()))?;
            let json = || {
                let mut s = serde_json::to_string_pretty(&run::to_json(&cfg, &out, wall))
                    .map_err(|e| RunError::Io(e.to_string()))?;
                s.push('\n');
                Ok::<_, RunError>(s.into_bytes())
            };
            match (cfg.output_format, &cfg.output_path) {
                (OutputFormat::Csv, p) => emit(p.as_deref(), &csv),
                (OutputFormat::Json, p) => emit(p.as_deref(), &json()?),
                (OutputFormat::Both, Some(p)) => {
                    emit(Some(&p.with_extension("csv")), &csv)?;
                    emit(Some(&p.with_extension("json")), &json()?)
                }
                (OutputFormat::Both, None) => unreachable!("rejected while parsing"),
            }
        }
        Command::Convergence { config, n } => {
            let cfg = load(&config)?;
            let rows = run::convergence(&cfg, &n)?;
            let csv = csv_bytes(&CONVERGENCE_COLUMNS, rows.iter().map(|r| r.fields()))?;
            emit(cfg.output_path.as_deref(), &csv)
        }
        Command::Poincare { spec } => {
            let dist: InputDistribution = spec.parse().map_err(|e| ConfigError::new("spec", e))?;
            let (c, rule) = dist
                .poincare_constant_with_rule()
                .map_err(|e| ConfigError::new("spec", e))?;
            println!("{}\t{:?}", run::fmt_num(c), rule);
            Ok(())
        }
    }
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>, RunError> {
    let io = |e: csv::Error| RunError::Io(e.to_string());
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.into_inner().map_err(|e| RunError::Io(e.to_string()))
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), RunError> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| RunError::Io(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| RunError::Io(e.to_string())),
    }
}
