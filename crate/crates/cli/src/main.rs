//! `hcdd`: run preconditioner experiments from JSON configurations.

mod config;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "hcdd", version, about = "Domain-decomposition experiments for high-contrast Darcy flow")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory (overrides the configuration's `output`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve every sweep point and write results.csv / results.json.
    Run {
        #[command(flatten)]
        source: Source,
        /// Also write each coarse basis (binary) with its metadata.
        #[arg(long)]
        export_coarse: bool,
    },
    /// Dump the local eigenvalues of each spectral method.
    Eigs {
        #[command(flatten)]
        source: Source,
    },
    /// Write the coefficient field as CSV plus a JSON sidecar.
    GenCoeff {
        #[command(flatten)]
        source: Source,
    },
}

#[derive(Args)]
struct Source {
    /// Configuration file.
    config: Option<PathBuf>,
    /// Built-in configuration instead of a file.
    #[arg(long, conflicts_with = "config")]
    preset: Option<Preset>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Table1,
    Table2,
    Smoke,
}

impl Preset {
    fn text(self) -> &'static str {
        match self {
            Preset::Table1 => include_str!("../presets/table1.json"),
            Preset::Table2 => include_str!("../presets/table2.json"),
            Preset::Smoke => include_str!("../presets/smoke.json"),
        }
    }
}

impl Source {
    fn load(&self) -> Result<ExperimentConfig> {
        match (&self.config, self.preset) {
            (Some(path), _) => ExperimentConfig::from_file(path),
            (None, Some(p)) => ExperimentConfig::from_json(p.text()).context("built-in preset"),
            (None, None) => bail!("give a configuration file or --preset"),
        }
    }
}

fn out_dir(cli_out: &Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    cli_out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| Path::new("out").join(&cfg.name))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Returns whether every solve converged.
fn execute(cli: Cli) -> Result<bool> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            bail!("--jobs must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    match &cli.command {
        Command::Run {
            source,
            export_coarse,
        } => {
            let cfg = source.load()?;
            let out = out_dir(&cli.out, &cfg);
            let rows = run::run(&cfg, &out, *export_coarse)?;
            for r in &rows {
                println!(
                    "{:<10} {:<12} eta={:<8e} iterations={:<4} cond={}",
                    r.method,
                    r.variant,
                    r.eta,
                    r.iterations,
                    r.cond_estimate.map_or("-".into(), |c| format!("{c:.4e}"))
                );
            }
            println!("wrote {}", out.join("results.csv").display());
            Ok(rows.iter().all(|r| r.converged))
        }
        Command::Eigs { source } => {
            let cfg = source.load()?;
            let out = out_dir(&cli.out, &cfg);
            for path in run::dump_eigs(&cfg, &out)? {
                println!("wrote {}", path.display());
            }
            Ok(true)
        }
        Command::GenCoeff { source } => {
            let cfg = source.load()?;
            let out = out_dir(&cli.out, &cfg);
            let path = run::gen_coeff(&cfg, &out)?;
            println!("wrote {}", path.display());
            Ok(true)
        }
    }
}
