use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use splitfed_uplift::experiment::artifacts::{audit_records, csv_bytes, AUDIT_HEADER};
use splitfed_uplift::experiment::{
    reaudit, render_report, run_experiment, run_sweep, write_run, write_sweep, ExperimentConfig, SavedModel,
};
use splitfed_uplift::Error;

#[derive(Parser)]
#[command(name = "splitfed-uplift", version, about = "Collaborative uplift modeling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train, evaluate and audit every configured method and seed.
    Run {
        config: PathBuf,
        /// Overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config file without running anything.
    Validate { config: PathBuf },
    /// Privacy/utility grid over defense settings.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the membership audit on a saved model.
    Audit {
        config: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const EXIT_CONFIG: u8 = 1;
const EXIT_PARTIAL: u8 = 2;
const EXIT_FAILED: u8 = 3;

fn exit_for(err: &Error) -> u8 {
    match err {
        Error::Config { .. } | Error::Validation(_) | Error::Schema(_) => EXIT_CONFIG,
        _ => EXIT_FAILED,
    }
}

fn fail(err: Error) -> ExitCode {
    eprintln!("error: {err}");
    ExitCode::from(exit_for(&err))
}

fn load(path: &Path) -> Result<ExperimentConfig, ExitCode> {
    ExperimentConfig::load(path).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_CONFIG)
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => match load(&config) {
            Ok(_) => {
                println!("{}: ok", config.display());
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Run { config, out } => {
            let config = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let out = out.unwrap_or_else(|| config.output_dir.clone());
            let run = match run_experiment(&config) {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            if let Err(e) = write_run(&run, &out) {
                return fail(e);
            }
            print!("{}", render_report(&run));
            println!("\nartifacts written to {}", out.display());
            match run.failed() {
                0 => ExitCode::SUCCESS,
                n if n == run.cells.len() => ExitCode::from(EXIT_FAILED),
                _ => ExitCode::from(EXIT_PARTIAL),
            }
        }
        Command::Sweep { config, out } => {
            let config = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let out = out.unwrap_or_else(|| config.output_dir.clone());
            let points = match run_sweep(&config) {
                Ok(p) => p,
                Err(e) => return fail(e),
            };
            if let Err(e) = write_sweep(&config, &points, &out) {
                return fail(e);
            }
            for p in &points {
                println!(
                    "sigma {} clip {}: AUUC {:.4}, MIA AUC {:.4}",
                    p.defense.noise_sigma, p.defense.clip_norm, p.mean_auuc, p.mean_mia_auc
                );
            }
            println!("artifacts written to {}", out.display());
            ExitCode::SUCCESS
        }
        Command::Audit { config, model, out } => {
            let config = match load(&config) {
                Ok(c) => c,
                Err(code) => return code,
            };
            let saved = match SavedModel::load(&model) {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            let audits = match reaudit(&config, &saved) {
                Ok(a) => a,
                Err(e) => return fail(e),
            };
            let rows = audit_records(saved.method, saved.seed, saved.defense().as_ref(), &audits);
            let bytes = match csv_bytes(&AUDIT_HEADER, rows) {
                Ok(b) => b,
                Err(e) => return fail(e),
            };
            let out = out.unwrap_or_else(|| config.output_dir.clone());
            let path = out.join(format!("reaudit_{}_seed{}.csv", saved.method.key(), saved.seed));
            if let Err(e) = std::fs::create_dir_all(&out).and_then(|_| std::fs::write(&path, &bytes)) {
                return fail(Error::Io { path, source: e });
            }
            print!("{}", String::from_utf8_lossy(&bytes));
            let feasible = audits.iter().filter(|a| a.result.is_ok()).count();
            if feasible == 0 {
                eprintln!("error: no client could be audited");
                return ExitCode::from(EXIT_FAILED);
            }
            ExitCode::SUCCESS
        }
    }
}
