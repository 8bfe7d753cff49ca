use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use resplit_bench::config::{Density, RunConfig};
use resplit_bench::eval::{evaluate, label};
use resplit_bench::pool::{self, NamedInstance};
use resplit_bench::summary::{aggregate, write_csv};
use resplit_bench::train::train;
use resplit_bench::{BenchError, Method};
use resplit_core::problem::ScaleClass;
use resplit_policy::checkpoint::load_actor;
use resplit_policy::Mlp;

#[derive(Parser)]
#[command(name = "resplit", version, about = "Consensus-ADMM trajectory optimization with learned segment re-splitting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed (train) or first instance seed (others).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args, Clone)]
struct Selection {
    /// Instances per cell.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_enum)]
    density: Option<Density>,
    #[arg(long, value_parser = parse_scale)]
    scale: Option<ScaleClass>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate instance JSON files.
    Gen {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        select: Selection,
    },
    /// Train a policy.
    Train {
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate one method.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        select: Selection,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run every method and aggregate.
    Bench {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        select: Selection,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Compare the policy with and without duration inflation.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        select: Selection,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn parse_scale(s: &str) -> Result<ScaleClass, String> {
    s.parse().map_err(|e: resplit_core::problem::ProblemError| e.to_string())
}

fn setup(common: &Common) -> Result<RunConfig, BenchError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(t) = common.threads {
        cfg.threads = t;
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build_global()
        .map_err(|e| BenchError::Config(format!("thread pool: {e}")))?;
    Ok(cfg)
}

fn load_policy(checkpoint: Option<&Path>, hidden: usize) -> Result<Option<Mlp>, BenchError> {
    checkpoint.map(|p| load_actor(p, Some(hidden)).map_err(BenchError::from)).transpose()
}

/// Cells selected by the flags, falling back to the configured lists.
fn cells(cfg: &RunConfig, select: &Selection) -> Vec<(Density, ScaleClass)> {
    let densities = select.density.map_or(cfg.bench.densities.clone(), |d| vec![d]);
    let scales = select.scale.map_or(cfg.bench.scales.clone(), |s| vec![s]);
    densities.iter().flat_map(|&d| scales.iter().map(move |&s| (d, s))).collect()
}

fn cell_instances(cfg: &RunConfig, common: &Common, select: &Selection, d: Density, s: ScaleClass) -> Result<Vec<NamedInstance>, BenchError> {
    let first = common.seed.unwrap_or(cfg.bench.first_seed);
    let count = select.trials.unwrap_or(cfg.bench.trials);
    pool::generate(&format!("{}-{}-", d.name(), s), first, count, d.rho(), s, &cfg.generator, &cfg.env.solver)
}

fn run_methods(common: &Common, select: &Selection, methods: &[Method], checkpoint: Option<&Path>) -> Result<(), BenchError> {
    let cfg = setup(common)?;
    let actor = load_policy(checkpoint, cfg.td3.hidden)?;
    if methods.iter().any(|m| m.needs_policy()) && actor.is_none() {
        return Err(BenchError::Config("learned methods require --checkpoint".into()));
    }
    let mut trials = Vec::new();
    let mut labelled = Vec::new();
    for (d, s) in cells(&cfg, select) {
        let instances = cell_instances(&cfg, common, select, d, s)?;
        let t = evaluate(methods, &instances, &cfg.env, actor.as_ref(), cfg.bench.wall_clock)?;
        trials.extend(t.iter().cloned());
        labelled.extend(label(t, d.name(), s.name()));
    }
    let summary = aggregate(&labelled)?;
    write_csv(&common.out.join("trials.csv"), &trials)?;
    write_csv(&common.out.join("summary.csv"), &summary)?;
    for row in &summary {
        println!(
            "{:<18} {:<7} {:<6} median iter {:>7.1}  mean iter {:>7.1}  SR {:>5.1}%  median cost {:>9.3}  mean time {:>8.2} ms",
            row.method, row.density, row.scale, row.median_iterations, row.mean_iterations, row.success_rate, row.median_cost, row.mean_time_ms
        );
    }
    info!("wrote {}", common.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), BenchError> {
    match cli.command {
        Command::Gen { common, select } => {
            let cfg = setup(&common)?;
            for (d, s) in cells(&cfg, &select) {
                let instances = cell_instances(&cfg, &common, &select, d, s)?;
                pool::save_dir(&instances, &common.out)?;
                println!("{} {} {}: {} instances", d.name(), s, common.out.display(), instances.len());
            }
            Ok(())
        }
        Command::Train { common } => {
            let mut cfg = setup(&common)?;
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            let p = &cfg.train.pool;
            let instances = match &p.dir {
                Some(dir) => pool::load_dir(dir)?,
                None => pool::generate("train-", p.first_seed, p.size, p.density.rho(), p.scale, &cfg.generator, &cfg.env.solver)?,
            };
            std::fs::create_dir_all(&common.out)?;
            std::fs::write(common.out.join("config.toml"), cfg.to_toml())?;
            let outcome = train(&cfg, &instances, Some(&common.out))?;
            let tail = &outcome.logs[outcome.logs.len().saturating_sub(100)..];
            println!(
                "trained {} episodes, {} updates; last {} episodes converged {}",
                outcome.logs.len(),
                outcome.agent.updates,
                tail.len(),
                tail.iter().filter(|l| l.converged).count()
            );
            Ok(())
        }
        Command::Eval { common, select, method, checkpoint } => run_methods(&common, &select, &[method], checkpoint.as_deref()),
        Command::Bench { common, select, checkpoint } => run_methods(&common, &select, &Method::ALL, checkpoint.as_deref()),
        Command::Ablate { common, select, checkpoint } => {
            run_methods(&common, &select, &[Method::Fixed, Method::Atrs, Method::AtrsNoInflation], checkpoint.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
