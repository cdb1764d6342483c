#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod check;
mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ridgecert::certify::{compare_methods, method_estimate, Method};
use ridgecert::estimators::DiagnosticMatrixEstimate;
use ridgecert::linalg::{covariance_eigenvalues, eigenvalues_csv, generalized_eigendecomposition};
use ridgecert::parallel::with_workers;
use ridgecert::pipeline::{run_ideal, run_iterative};
use ridgecert::Error;
use serde_json::json;

use config::{ConfigError, RunConfig};

#[derive(Parser)]
#[command(
    name = "ridgecert",
    version,
    about = "Certified likelihood-informed dimension reduction",
    after_long_help = config::SCHEMA
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Configuration file (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory; overrides output.dir.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Root seed; overrides the config value.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Cap on worker threads. Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Overwrite existing output files.
    #[arg(long, global = true)]
    force: bool,
    /// Print machine-readable results on stdout.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Eigenvalues of each method's diagnostic matrix.
    Spectrum,
    /// Single-pass reduction from one reference measure.
    Reduce,
    /// Iterative importance-weighted reduction.
    Iterate,
    /// Method comparison table.
    Compare,
    /// Certificate-versus-exact checks on the analytic problem.
    CheckAnalytic,
}

enum Failure {
    Check,
    Usage(String),
    Numerical(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let numerical = e.is_numerical()
            || matches!(
                e,
                Error::NotPositiveDefinite | Error::IllConditioned { .. } | Error::NotPositiveSemidefinite { .. }
            );
        if numerical {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

type Outputs = Vec<(String, String)>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
            RunConfig::parse(&text, &path.display().to_string())?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    if cli.workers == Some(0) {
        return Err(Failure::Usage("--workers must be at least 1".into()));
    }
    let command = cli.command;
    let outputs = with_workers(cli.workers, || -> Result<Option<Outputs>, Failure> {
        match command {
            Command::Spectrum => spectrum(&cfg).map(Some),
            Command::Reduce => reduce(&cfg).map(Some),
            Command::Iterate => iterate(&cfg).map(Some),
            Command::Compare => compare(&cfg).map(Some),
            Command::CheckAnalytic => check::check_analytic(&cfg, cli.json).map(|_| None),
        }
    })?;
    let Some(mut outputs) = outputs else {
        return Ok(());
    };
    outputs.push(("config.toml".into(), cfg.to_toml()));
    let written = write_outputs(&cfg.output.dir, &outputs, cli.force)?;
    if cli.json {
        let files: Vec<String> = written.iter().map(|p| p.display().to_string()).collect();
        println!("{}", json!({ "files": files }));
    } else {
        for p in &written {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn write_outputs(dir: &Path, outputs: &Outputs, force: bool) -> Result<Vec<PathBuf>, Failure> {
    let io = |e: std::io::Error, p: &Path| Failure::Usage(format!("{}: {e}", p.display()));
    fs::create_dir_all(dir).map_err(|e| io(e, dir))?;
    let paths: Vec<PathBuf> = outputs.iter().map(|(name, _)| dir.join(name)).collect();
    if !force {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(Failure::Usage(format!(
                "{} exists; pass --force to overwrite",
                p.display()
            )));
        }
    }
    for (p, (_, body)) in paths.iter().zip(outputs) {
        fs::write(p, body).map_err(|e| io(e, p))?;
    }
    Ok(paths)
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Failure::Numerical(e.to_string()))
}

fn spectrum(cfg: &RunConfig) -> Result<Outputs, Failure> {
    let methods = cfg.methods();
    if methods.is_empty() {
        return Err(Failure::Usage("spectrum needs a non-empty method list".into()));
    }
    let problem = cfg.build_problem()?;
    let mcmc = cfg.mcmc();
    let mut outputs = Outputs::new();
    for method in methods {
        let estimate = match (&problem.oracle_h, method) {
            (Some(h), Method::CertifiedPosterior) if cfg.spectrum.oracle => {
                Some(DiagnosticMatrixEstimate::exact(h.clone()))
            }
            _ => method_estimate(&problem, method, cfg.algorithm.k, cfg.seed, &mcmc)?,
        };
        let name = method.label();
        let document = match &estimate {
            Some(est) => {
                let spec = generalized_eigendecomposition(&est.matrix, problem.gamma())?;
                outputs.push((format!("spectrum_{name}.csv"), spec.eigenvalues_csv()));
                json!({
                    "method": name,
                    "source": est.source,
                    "K": est.sample_count,
                    "ess": if est.ess.is_finite() { json!(est.ess) } else { json!(null) },
                    "spectrum": spec.to_document(),
                })
            }
            None => {
                let sigma = covariance_eigenvalues(problem.gamma())?;
                outputs.push((format!("spectrum_{name}.csv"), eigenvalues_csv(&sigma)));
                json!({ "method": name, "source": "prior_covariance", "eigenvalues": sigma })
            }
        };
        outputs.push((format!("spectrum_{name}.json"), to_json(&document)?));
    }
    Ok(outputs)
}

fn reduce(cfg: &RunConfig) -> Result<Outputs, Failure> {
    let problem = cfg.build_problem()?;
    let report = run_ideal(&problem, &cfg.ideal_settings())?;
    Ok(vec![
        ("report.json".into(), to_json(&report)?),
        ("eigenvalues.csv".into(), report.eigenvalue_trajectories_csv()),
    ])
}

fn iterate(cfg: &RunConfig) -> Result<Outputs, Failure> {
    let problem = cfg.build_problem()?;
    let report = run_iterative(&problem, &cfg.iterative_settings())?;
    Ok(vec![
        ("report.json".into(), to_json(&report)?),
        (
            "eigenvalue_trajectories.csv".into(),
            report.eigenvalue_trajectories_csv(),
        ),
    ])
}

fn compare(cfg: &RunConfig) -> Result<Outputs, Failure> {
    let methods = cfg.methods();
    let profiles = cfg.profiles();
    if methods.is_empty() || profiles.is_empty() || cfg.ranks.is_empty() {
        return Err(Failure::Usage(
            "compare needs non-empty methods, profiles and ranks".into(),
        ));
    }
    let problem = cfg.build_problem()?;
    let table = compare_methods(&problem, &methods, &profiles, &cfg.ranks, &cfg.compare_settings())?;
    for w in &table.warnings {
        eprintln!("warning: {w}");
    }
    Ok(vec![
        ("comparison.csv".into(), table.to_csv()),
        ("comparison.json".into(), to_json(&table)?),
    ])
}
