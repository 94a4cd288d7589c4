//! `vgfl` — run VGFL poisoning experiments from JSON configs.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 runtime numeric error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use vgfl::attack::AttackKind;
use vgfl::experiment::{cmd_run, cmd_sweep, convert, gen_sbm, inspect, out_dir, ExperimentConfig};
use vgfl::graph::SbmConfig;
use vgfl::{Error, Result};

#[derive(Parser)]
#[command(name = "vgfl", version, about = "Vertical graph federated learning poisoning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Run only this seed instead of the config's seed list.
    #[arg(long)]
    seed: Option<u64>,
    /// Results root [default: results]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallel worker slots [default: available cores]
    #[arg(long)]
    jobs: Option<usize>,
    /// Override the attack kind: none, random, dice, vgfl-sa.
    #[arg(long)]
    attack: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Clean vs. poisoned training for every seed of one configuration.
    Run(ExperimentArgs),
    /// Cartesian sweep over the config's sweep axes; writes aggregate.csv.
    Sweep(ExperimentArgs),
    /// Convert a node-content file plus an edge list into a dataset directory.
    Convert {
        /// Edge list: one `<id> <id>` pair per line.
        #[arg(long)]
        edges: PathBuf,
        /// Node file: `<id> <features..> <label>` per line.
        #[arg(long)]
        nodes: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        train_frac: f64,
        #[arg(long, default_value_t = 0.1)]
        test_frac: f64,
        /// Seed of the random node split.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Generate a stochastic-block-model dataset directory.
    GenSbm {
        /// SBM parameters (JSON); defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a dataset directory or a plan file.
    Inspect { path: PathBuf },
}

fn load_experiment(args: &ExperimentArgs) -> Result<(ExperimentConfig, Vec<u64>)> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(kind) = &args.attack {
        cfg.attack.kind = kind.parse::<AttackKind>().map_err(|e| match e {
            Error::Config { msg, .. } => Error::Config {
                path: "--attack".into(),
                msg,
            },
            other => other,
        })?;
        cfg.validate()?;
    }
    let seeds = args.seed.map_or_else(|| cfg.seeds.clone(), |s| vec![s]);
    Ok((cfg, seeds))
}

fn jobs(args: &ExperimentArgs) -> usize {
    args.jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn load_sbm(path: &Path) -> Result<SbmConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Config {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let (cfg, seeds) = load_experiment(&args)?;
            let out = out_dir(args.out.clone());
            let pool = rayon_pool(jobs(&args))?;
            let records = pool.install(|| {
                use rayon::prelude::*;
                seeds.par_iter().map(|&s| cmd_run(&cfg, s, &out)).collect::<Result<Vec<_>>>()
            })?;
            println!("seed\tclean_acc\tpoisoned_acc\tclean_f1\tpoisoned_f1\tseconds");
            for r in &records {
                println!(
                    "{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.1}",
                    r.seed, r.clean.accuracy, r.poisoned.accuracy, r.clean.f1, r.poisoned.f1, r.wall_clock_seconds
                );
            }
            if let Some(r) = records.first() {
                println!("results: {}", out.join(&r.config_hash).display());
            }
        }
        Command::Sweep(args) => {
            let (cfg, seeds) = load_experiment(&args)?;
            let out = out_dir(args.out.clone());
            let cells = cmd_sweep(&cfg, &seeds, &out, jobs(&args))?;
            println!("alpha\tK\tK'\tratio\tclean_med\tpoisoned_med");
            for c in &cells {
                println!(
                    "{}\t{}\t{}\t{:.3}\t{:.4}\t{:.4}",
                    c.cell.alpha,
                    c.cell.k,
                    c.cell.k_prime,
                    c.cell.poisoned_ratio,
                    c.median_accuracy(false),
                    c.median_accuracy(true)
                );
            }
            println!("aggregate: {}", out.join("aggregate.csv").display());
        }
        Command::Convert {
            edges,
            nodes,
            out,
            train_frac,
            test_frac,
            seed,
        } => {
            let s = convert(&edges, &nodes, &out, train_frac, test_frac, seed)?;
            println!(
                "n = {}, m = {}, d = {}, labels = {} (dropped {} duplicate pairs, {} self-loops)",
                s.n, s.m, s.d, s.num_labels, s.duplicate_edges, s.self_loops
            );
        }
        Command::GenSbm { config, seed, out } => {
            let cfg = match config {
                Some(p) => load_sbm(&p)?,
                None => SbmConfig::default(),
            };
            let g = gen_sbm(&cfg, seed, &out)?;
            println!("n = {}, m = {}, d = {} -> {}", g.n(), g.edge_count(), g.feature_dim(), out.display());
        }
        Command::Inspect { path } => print!("{}", inspect(&path)?),
    }
    Ok(())
}

fn rayon_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
