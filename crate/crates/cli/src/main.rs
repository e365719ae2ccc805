// Copyright 2026 polarlandscape Contributors
// SPDX-License-Identifier: Apache-2.0

//! `polarlandscape <experiment> [flags]`
//!
//! Exit codes: 0 success, 1 invalid configuration, 2 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use polarlandscape::experiment::{run_experiment, ExperimentConfig, ExperimentKind, Polarizability};
use polarlandscape::LandscapeError;

#[derive(Parser, Debug)]
#[command(name = "polarlandscape", version, about = "Run seeded control-landscape experiments")]
struct Cli {
    #[command(subcommand)]
    experiment: Command,
}

#[derive(Subcommand, Debug)]
#[command(rename_all = "snake_case")]
enum Command {
    /// Heisenberg two-qubit models, with or without polarizability
    TrapCensusHeisenberg(Common),
    /// Random su(n) tuples from uniform initial fields
    TrapCensusGeneric(Common),
    /// Random su(n) tuples started from E = 0
    ZeroFieldStart(Common),
    /// Field norm per accepted iteration for three polarizability ratios
    FluenceStudy(Common),
    /// Singular controls probed for opposite-sign variations
    SingularCensus(Common),
    /// Search for singular controls that are also critical
    SingularCriticalSearch(Common),
    /// Three-level system E near the zero field
    SystemEStudy(Common),
}

impl Command {
    fn split(&self) -> (ExperimentKind, &Common) {
        match self {
            Command::TrapCensusHeisenberg(c) => (ExperimentKind::TrapCensusHeisenberg, c),
            Command::TrapCensusGeneric(c) => (ExperimentKind::TrapCensusGeneric, c),
            Command::ZeroFieldStart(c) => (ExperimentKind::ZeroFieldStart, c),
            Command::FluenceStudy(c) => (ExperimentKind::FluenceStudy, c),
            Command::SingularCensus(c) => (ExperimentKind::SingularCensus, c),
            Command::SingularCriticalSearch(c) => (ExperimentKind::SingularCriticalSearch, c),
            Command::SystemEStudy(c) => (ExperimentKind::SystemEStudy, c),
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML config; top-level keys plus a table per experiment
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for rows.csv, summary.json and config.json
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    models: Option<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    dimension: Option<usize>,
    #[arg(long)]
    segments: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long, value_enum)]
    polarizability: Option<Switch>,
    /// ‖iH2‖ / ‖iH1‖
    #[arg(long)]
    norm_ratio: Option<f64>,
    #[arg(long)]
    max_evaluations: Option<usize>,
}

fn load(kind: ExperimentKind, flags: &Common) -> Result<ExperimentConfig, LandscapeError> {
    let mut config = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| LandscapeError::Io {
                path: path.clone(),
                source,
            })?;
            ExperimentConfig::from_toml_str(kind, &text)?
        }
        None => ExperimentConfig::defaults(kind),
    };
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => {
            $(if let Some(v) = flags.$flag { config.$field = v; })*
        };
    }
    set!(seed => seed, threads => threads, models => n_models, runs => n_runs_per_model,
        dimension => dimension, segments => segments, horizon => horizon,
        norm_ratio => norm_ratio, max_evaluations => max_evaluations);
    if let Some(out) = &flags.out {
        config.output_path = out.display().to_string();
    }
    if let Some(p) = flags.polarizability {
        config.polarizability = match p {
            Switch::On => Polarizability::On,
            Switch::Off => Polarizability::Off,
        };
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let (kind, flags) = cli.experiment.split();
    let config = match load(kind, flags) {
        Ok(c) => c,
        Err(e @ (LandscapeError::Config(_) | LandscapeError::InvalidArgument(_) | LandscapeError::Io { .. })) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let table = match run_experiment(&config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = table.write(&config, Path::new(&config.output_path)) {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match serde_json::to_string_pretty(&table.summary_json()) {
        Ok(s) => println!("{s}"),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    ExitCode::SUCCESS
}
