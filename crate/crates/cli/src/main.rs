use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use uavsim::config::load_config;
use uavsim::experiment::{
    cmd_run, selftest, sweep_distance, two_cell_scenario, write_sweep, Algorithm, Checkpoint,
    RunSpec, DEFAULT_TARGET_DISTANCE_M, DEFAULT_WINDOW,
};
use uavsim::oracle::delivery_prob_dp;
use uavsim::world::ScenarioConfig;

#[derive(Parser, Debug)]
#[command(
    name = "uavsim",
    version,
    about = "Cellular UAV sense-and-send simulator and learners"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one algorithm and write one CSV row per (cycle, UAV).
    Run(RunArgs),
    /// Train algorithms at several BS-target distances and write the
    /// final-window reward of every run.
    SweepDistance(SweepArgs),
    /// Check the exact oracles against Monte Carlo and the exploration law.
    Selftest,
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Scenario file (TOML). Defaults to the built-in two-cell scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training cycles per seed.
    #[arg(long, default_value_t = 1000)]
    cycles: u64,
    /// Comma-separated seeds. Defaults to the scenario's `run.seed`.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Moving-average window in cycles.
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    window: usize,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// single-q, opponent-q, enhanced-q, bandit-assoc, actor-critic-power,
    /// dqn-alloc or baseline.
    #[arg(long)]
    algorithm: Algorithm,
    /// Write a checkpoint here after the last cycle.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Continue every seed from this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Algorithms to train (comma-separated).
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "single-q,opponent-q,enhanced-q"
    )]
    algorithm: Vec<Algorithm>,
    /// Comma-separated ground distances between each target and its BS, in meters.
    #[arg(long, value_delimiter = ',', default_value = "100,200,300,400")]
    distances: Vec<f64>,
}

fn scenario(path: Option<&Path>) -> Result<ScenarioConfig> {
    match path {
        Some(p) => Ok(load_config(p)?),
        None => Ok(two_cell_scenario(DEFAULT_TARGET_DISTANCE_M)),
    }
}

impl CommonArgs {
    fn seeds(&self, config: &ScenarioConfig) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![config.rng_seed]
        } else {
            self.seeds.clone()
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn run(args: RunArgs) -> Result<()> {
    let c = args.common;
    let config = scenario(c.config.as_deref())?;
    let spec = RunSpec {
        seeds: c.seeds(&config),
        config,
        algorithm: args.algorithm,
        cycles: c.cycles,
        window: c.window,
    };
    spec.validate()?;
    let resume = match &args.resume {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Some(Checkpoint::from_json(&text)?)
        }
        None => None,
    };
    let mut out = create(&c.out)?;
    let checkpoint = cmd_run(&spec, resume.as_ref(), &mut out)?;
    out.flush()?;
    if let Some(p) = &args.checkpoint {
        fs::write(p, checkpoint.to_json()).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<()> {
    let c = args.common;
    if c.cycles < 1 || c.window < 1 {
        bail!("sweep needs cycles >= 1 and window >= 1");
    }
    let config = scenario(c.config.as_deref())?;
    let seeds = c.seeds(&config);
    let rows = sweep_distance(
        &config,
        &args.algorithm,
        &args.distances,
        &seeds,
        c.cycles,
        c.window,
    )?;
    let mut out = create(&c.out)?;
    write_sweep(&mut out, &rows)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::SweepDistance(a) => sweep(a),
        Command::Selftest => {
            let checks = selftest(delivery_prob_dp);
            for c in &checks {
                println!(
                    "[{}] {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            if checks.iter().all(|c| c.passed) {
                Ok(())
            } else {
                Err(anyhow::anyhow!("self-test failed"))
            }
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
