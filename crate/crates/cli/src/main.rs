use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use ogm_explore::harness::{self, ExperimentConfig};
use ogm_explore::information::oracle::equivalence_suite;
use ogm_explore::information::Metric;
use ogm_explore::prediction::{check_bridge, BridgeClient};
use ogm_explore::world::{generate_world, WorldError, WorldGenParams};

#[derive(Parser)]
#[command(name = "explore", version, about = "Occupancy-grid exploration simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment described by a key = value config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// World utilities.
    World {
        #[command(subcommand)]
        command: WorldCommand,
    },
    /// Reference checks.
    Oracle {
        #[command(subcommand)]
        command: OracleCommand,
    },
    /// External predictor utilities.
    Bridge {
        #[command(subcommand)]
        command: BridgeCommand,
    },
}

#[derive(Subcommand)]
enum WorldCommand {
    /// Generate a floorplan and save it as ASCII.
    Gen {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Square extent in cells.
        #[arg(long, default_value_t = 100)]
        size: usize,
        #[arg(long, default_value_t = 5)]
        rooms: usize,
    },
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Compare the fast FSMI path against the reference integrators.
    Fsmi {
        #[arg(long, default_value_t = 1000)]
        beams: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Subcommand)]
enum BridgeCommand {
    /// Send probe requests to a predictor command and validate the replies.
    Check {
        #[arg(long)]
        cmd: String,
        #[arg(long, default_value_t = 2)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(config: PathBuf, out: PathBuf) -> Result<()> {
    let cfg = ExperimentConfig::load(&config)?;
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let predictor = harness::build_predictor(&cfg)?;
    let n = cfg.worlds.len() * cfg.metrics.len() * cfg.trials_per_cell;
    log::info!("running {n} trials with the {} predictor", predictor.name());
    let started = std::time::Instant::now();
    let output = harness::run_experiment(&cfg, &out, predictor.as_ref())?;
    print!("{}", output.summary.to_text());
    for c in harness::ranking_checks(&output.summary, &[Metric::Iv, Metric::In]) {
        println!(
            "{}: mean(PIm) {:.2} {} mean({}) {:.2}",
            c.world,
            c.pim_mean,
            if c.holds { "<=" } else { ">" },
            c.other,
            c.other_mean
        );
    }
    let failed: usize = output.summary.cells.iter().map(|c| c.failed).sum();
    println!(
        "{n} trials in {:.1} s, {failed} failed; results in {}",
        started.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(())
}

fn world_gen(seed: u64, out: PathBuf, size: usize, rooms: usize) -> Result<(), WorldError> {
    let world = generate_world(seed, &WorldGenParams::sized(size, rooms))?;
    world.save(&out)?;
    println!(
        "{}×{} world, free fraction {:.3}, written to {}",
        world.width(),
        world.height(),
        world.free_fraction(),
        out.display()
    );
    Ok(())
}

fn oracle_fsmi(beams: usize, seed: u64) -> Result<()> {
    let started = std::time::Instant::now();
    let r = equivalence_suite(beams, seed)?;
    println!("beams                         {}", r.beams);
    println!("max relative error vs oracle  {:.3e}", r.max_rel_error);
    println!("min MI                        {:.3e}", r.min_mi);
    println!("max |sum P(e_k) - 1|          {:.3e}", r.max_hit_sum_error);
    println!("entropy oracle gap (unknown)  {:.3e}", r.max_entropy_gap_unknown);
    println!("entropy oracle gap residual   {:.3e}", r.max_gap_residual);
    println!("elapsed                       {:.2} s", started.elapsed().as_secs_f64());
    if r.max_rel_error > 1e-9 || r.min_mi < 0.0 || r.max_hit_sum_error > 1e-12 || r.max_entropy_gap_unknown > 1e-6 {
        bail!("oracle equivalence failed");
    }
    Ok(())
}

fn bridge_check(cmd: &str, samples: usize, seed: u64) -> Result<()> {
    let client = BridgeClient::spawn(cmd).with_context(|| format!("starting {cmd:?}"))?;
    let r = check_bridge(&client, samples, seed)?;
    println!(
        "{} samples of 80×80, values in [{}, {}], deterministic: {}",
        r.n_samples, r.min_value, r.max_value, r.deterministic
    );
    if !r.deterministic {
        bail!("same seed gave different samples");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, out } => run(config, out),
        Command::World {
            command: WorldCommand::Gen { seed, out, size, rooms },
        } => match world_gen(seed, out, size, rooms) {
            Ok(()) => Ok(()),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(e.code() as u8);
            }
        },
        Command::Oracle {
            command: OracleCommand::Fsmi { beams, seed },
        } => oracle_fsmi(beams, seed),
        Command::Bridge {
            command: BridgeCommand::Check { cmd, samples, seed },
        } => bridge_check(&cmd, samples, seed),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
