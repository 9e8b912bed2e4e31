use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use nvdesign_core::smc::{InverseWishart, CALIBRATED_MEAN};
use nvdesign_core::{ModelParameters, SpinParams};
use nvdesign_harness::comparison::write_tables;
use nvdesign_harness::config::{LabMode, RunConfig, DEFAULT_TRUTH_REFS};
use nvdesign_harness::heatmap::{risk_heatmap, write_heatmap_csv, HeatmapConfig};
use nvdesign_harness::{load_records, run_comparison};
use nvdesign_lab::{LabSettings, Server, TrueSystem};

#[derive(Parser)]
#[command(name = "nvdesign", about = "Online Bayesian experiment design on a simulated NV centre")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a heuristic comparison described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// `in-process` or `tcp://host:port`; overrides the config.
        #[arg(long)]
        lab: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve a simulated lab over TCP. Clients install their own truth.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7070")]
        bind: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Measure MIS risk accuracy and cost over a grid of sample sizes.
    Heatmap {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild learning-curve and histogram tables from saved records.
    Curves {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Run { config, lab, seed, out } => {
            let mut config = RunConfig::load(&config)?;
            if let Some(lab) = lab {
                config.lab = LabMode::parse(&lab)?;
            }
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(out) = out {
                config.out_dir = out;
            }
            let summary = run_comparison(&config)?;
            println!(
                "{} trials, {} resumed, {} failed; results in {}",
                summary.records.len(),
                summary.resumed,
                summary.failed,
                config.out_dir.display()
            );
            Ok(if summary.all_completed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Serve { bind, seed } => {
            // Placeholder truth until a client sends `reset`.
            let [rabi_max, zfs_offset, hyperfine, dephasing_rate] = CALIBRATED_MEAN;
            let truth = ModelParameters {
                spin: SpinParams { rabi_max, zeeman: 2.0, zfs_offset, hyperfine, dephasing_rate },
                refs: DEFAULT_TRUTH_REFS,
                drift: nvdesign_core::DriftHyper::from_covariance(InverseWishart::default().mean()),
            };
            let system = TrueSystem::new(truth, LabSettings::default(), seed)?;
            let server = Server::bind(bind.as_str(), system).with_context(|| format!("binding {bind}"))?;
            println!("lab listening on {}", server.local_addr()?);
            server.serve()?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Heatmap { config, out } => {
            let mut config = HeatmapConfig::load(&config)?;
            if let Some(out) = out {
                config.out_dir = out;
            }
            std::fs::create_dir_all(&config.out_dir)?;
            let cells = risk_heatmap(&config)?;
            let path = config.out_dir.join("heatmap.csv");
            write_heatmap_csv(&cells, &path)?;
            println!("{} cells written to {}", cells.len(), path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Curves { records, out, points } => {
            anyhow::ensure!(points >= 2, "need at least 2 grid points");
            let loaded = load_records(&records)?;
            anyhow::ensure!(!loaded.is_empty(), "no records in {}", records.display());
            let out = out.unwrap_or(records);
            std::fs::create_dir_all(&out)?;
            write_tables(&loaded, points, &out)?;
            println!("tables for {} records written to {}", loaded.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
