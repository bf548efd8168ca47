//! `geolgp` — weighted least gradient solver driven by a JSON configuration.
//!
//! Subcommands: `run` solves an instance and writes artifacts plus `report.json`; `validate`
//! checks a configuration without solving; `report` pretty-prints a previously written report.
//!
//! Exit codes: 0 success (and, for `run`, every enabled check passed); 1 the run completed but
//! a check failed; 2 configuration or schema problem; 3 solver failure after the configuration
//! was accepted (a partial report is still written when planning had succeeded).

use clap::{Parser, Subcommand};
use geolgp::config::Config;
use geolgp::pipeline;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "geolgp", version, about = "Weighted least gradient solver via boundary optimal transport")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured instance, write artifacts, and run the enabled checks.
    Run {
        /// Path to the JSON configuration.
        config: PathBuf,
        /// Write artifacts here instead of the configured output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Check a configuration against the schema and semantic rules without solving.
    Validate {
        /// Path to the JSON configuration.
        config: PathBuf,
    },
    /// Pretty-print the report from a previous run's output directory.
    Report {
        /// Output directory containing report.json.
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = init_thread_pool() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, out_dir } => run(&config, out_dir.as_deref()),
        Command::Validate { config } => validate(&config),
        Command::Report { out_dir } => report(&out_dir),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

/// Honor `GEOLGP_THREADS` as a cap on the global worker pool.
fn init_thread_pool() -> Result<(), String> {
    let Ok(raw) = std::env::var("GEOLGP_THREADS") else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("GEOLGP_THREADS must be a positive integer, got {raw:?}"))?;
    if n == 0 {
        return Err("GEOLGP_THREADS must be a positive integer, got 0".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| format!("thread pool: {e}"))
}

fn base_dir(config_path: &Path) -> PathBuf {
    config_path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf()
}

fn run(config_path: &Path, out_dir: Option<&Path>) -> geolgp::Result<ExitCode> {
    let (config, raw) = Config::from_path(config_path)?;
    let base = base_dir(config_path);
    let report = pipeline::run(&config, &raw, &base, out_dir)?;
    let dest = out_dir.unwrap_or(&config.out_dir);
    for check in &report.checks {
        let verdict = if check.pass { "pass" } else { "FAIL" };
        let detail = check
            .metrics
            .iter()
            .map(|(k, v)| format!("{k}={v:.6e}"))
            .collect::<Vec<_>>()
            .join(" ");
        println!("check {:<13} {verdict}  {detail}", check.name);
    }
    println!(
        "run {}: {} ({} checks), artifacts in {}",
        if report.all_pass { "passed" } else { "FAILED" },
        report.instance.domain,
        report.checks.len(),
        dest.display(),
    );
    Ok(if report.all_pass { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn validate(config_path: &Path) -> geolgp::Result<ExitCode> {
    let (config, _) = Config::from_path(config_path)?;
    // Building the instance surfaces semantic errors the schema cannot: unreadable sample
    // files, weight support not covering the domain, degenerate grids.
    let inst = config.build(&base_dir(config_path))?;
    println!(
        "valid: grid {}x{} at h={:.6}, {} checks enabled",
        inst.spec.nx,
        inst.spec.ny,
        inst.spec.h,
        inst.checks.len(),
    );
    Ok(ExitCode::SUCCESS)
}

fn report(out_dir: &Path) -> geolgp::Result<ExitCode> {
    let path = out_dir.join("report.json");
    let bytes = std::fs::read(&path).map_err(|e| {
        geolgp::Error::Schema(format!("cannot read {}: {e}", path.display()))
    })?;
    let doc: serde_json::Value = serde_json::from_slice(&bytes)
        .map_err(|e| geolgp::Error::Schema(format!("{} is not valid JSON: {e}", path.display())))?;
    println!("{}", serde_json::to_string_pretty(&doc).expect("reserializing parsed JSON"));
    Ok(ExitCode::SUCCESS)
}
