//! `bam`: run one experiment and write its records, summary and resolved
//! config to an output directory.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use bam_core::experiment::{run, write_outputs, ExperimentConfig, ExperimentKind, Profile};
use bam_core::Error;
use clap::Parser;

#[derive(Debug, Parser)]
#[command(name = "bam", version, about = "Bayesian adaptation via memory: experiment runner")]
struct Cli {
    /// infer | bandit | cartpole-episodic | cartpole-continual | mnist
    experiment: ExperimentKind,

    /// TOML file overriding the profile preset.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Master seed for all random streams.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output directory (default: results/<experiment>).
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Preset scale: desk or full. Overrides the file's `profile`.
    #[arg(long)]
    profile: Option<Profile>,

    /// Directory holding IDX files (mnist).
    #[arg(long, value_name = "DIR")]
    data_dir: Option<PathBuf>,

    /// Replicate indices, e.g. 0,1,2. Overrides the file's `seeds`.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    seeds: Option<Vec<u64>>,

    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path, cli.experiment, cli.profile).map_err(|e| match e {
            Error::Io(io) => Error::Config { key: path.display().to_string(), reason: io.to_string() },
            other => other,
        })?,
        None => ExperimentConfig::preset(cli.experiment, cli.profile.unwrap_or_default()),
    };
    if let Some(seeds) = &cli.seeds {
        cfg.seeds = seeds.clone();
    }
    if let Some(dir) = &cli.data_dir {
        cfg.data_dir = Some(dir.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("bam: invalid configuration: {e}");
            return ExitCode::from(2);
        }
    };
    if cli.print_config {
        return match cfg.to_toml_string() {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("bam: {e}");
                ExitCode::FAILURE
            }
        };
    }

    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("results").join(cfg.experiment.name()));
    eprintln!(
        "bam: {} ({:?} profile), {} seed(s), master seed {}",
        cfg.experiment,
        cfg.profile,
        cfg.seeds.len(),
        cli.seed
    );
    let start = Instant::now();
    let result = run(&cfg, cli.seed).and_then(|records| {
        eprintln!("bam: {} records in {:.1}s", records.len(), start.elapsed().as_secs_f64());
        write_outputs(&cfg, records, &out)
    });
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("bam: {} failed: {e}", cfg.experiment);
            ExitCode::FAILURE
        }
    }
}
