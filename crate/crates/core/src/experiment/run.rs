//! One (configuration, seed) run: partition, poison, train clean and
//! poisoned federations from identical initializations, evaluate.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attack::{dice_attack, random_attack, run_attack, AttackKind, AttackOutcome, TraceRow};
use crate::error::{Error, Result};
use crate::experiment::config::{DatasetSpec, ExperimentConfig};
use crate::graph::{generate_sbm, load_graph, save_plan, Graph, Splits};
use crate::partition::{partition, shard_graph};
use crate::runtime::{evaluate, train_vgfl, ClientInput, MetricsReport, TrainReport, VgflModel};

/// Independent stream seeds derived from a run seed (SplitMix64 finalizer
/// over the mixed inputs).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_SPLITS: u64 = 1;
const STREAM_PARTITION: u64 = 2;
const STREAM_MODEL: u64 = 3;
const STREAM_ATTACK: u64 = 4;

/// The graph for a run seed: loaded from disk, or drawn from the SBM with
/// that seed. Node splits are redrawn when the config asks for fractions.
pub fn materialize(cfg: &ExperimentConfig, seed: u64) -> Result<Graph<f64>> {
    let graph = match &cfg.dataset {
        DatasetSpec::Path(_) => load_graph(cfg.dataset_path().expect("path dataset"))?,
        DatasetSpec::Sbm(sbm) => generate_sbm(sbm, seed)?,
    };
    resplit(cfg, graph, seed)
}

fn resplit(cfg: &ExperimentConfig, graph: Graph<f64>, seed: u64) -> Result<Graph<f64>> {
    match (cfg.train.train_frac, cfg.train.test_frac) {
        (Some(tr), Some(te)) => {
            let splits = Splits::random(graph.n(), tr, te, derive_seed(seed, STREAM_SPLITS))
                .map_err(|e| Error::config("train.train_frac", e.to_string()))?;
            Graph::new(
                graph.features().clone(),
                &graph.edge_list(),
                graph.labels().to_vec(),
                graph.num_labels(),
                splits,
            )
        }
        _ => Ok(graph),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub client: usize,
    pub budget: usize,
    pub flips: usize,
    pub adds: usize,
    pub deletes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_accuracy: Option<f64>,
    pub final_loss: f64,
}

impl From<&TrainReport> for TrainSummary {
    fn from(r: &TrainReport) -> Self {
        Self {
            epochs_run: r.loss_curve.len(),
            best_epoch: r.best_epoch,
            best_val_accuracy: r.best_val_accuracy,
            final_loss: r.loss_curve.last().copied().unwrap_or(f64::NAN),
        }
    }
}

/// Deterministic content of `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub config_hash: String,
    pub seed: u64,
    pub attack: AttackKind,
    pub alpha: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub poisoned: Vec<usize>,
    pub ratios: Vec<f64>,
    pub clean: MetricsReport,
    pub poisoned_metrics: MetricsReport,
    pub clean_training: TrainSummary,
    pub poisoned_training: TrainSummary,
    pub plans: Vec<PlanSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    pub clean: MetricsReport,
    pub poisoned: MetricsReport,
    pub plan_paths: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
    #[serde(skip)]
    pub metrics: Option<RunMetrics>,
}

/// Attack outcomes for every poisoned client, in client order.
pub fn poison(
    cfg: &ExperimentConfig,
    graph: &Graph<f64>,
    shards: &[Graph<f64>],
    seed: u64,
) -> Result<Vec<(usize, AttackOutcome<f64>)>> {
    let attack = &cfg.attack;
    if attack.kind == AttackKind::None {
        return Ok(Vec::new());
    }
    let mut clients = attack.poisoned.clone();
    clients.sort_unstable();
    clients
        .par_iter()
        .map(|&c| {
            let s = derive_seed(derive_seed(seed ^ attack.seed, STREAM_ATTACK), c as u64);
            let shard = &shards[c];
            let out = match attack.kind {
                AttackKind::VgflSa => run_attack(shard, c, &attack.vgfl_sa(s))?,
                AttackKind::Random => random_attack(shard, c, &attack.baseline(s))?,
                AttackKind::Dice => dice_attack(shard, graph.labels(), c, &attack.baseline(s))?,
                AttackKind::None => unreachable!(),
            };
            Ok((c, out))
        })
        .collect()
}

fn train_and_eval(
    cfg: &ExperimentConfig,
    graph: &Graph<f64>,
    shards: &[Graph<f64>],
    model_seed: u64,
) -> Result<(MetricsReport, TrainReport)> {
    let inputs: Vec<ClientInput<f64>> = shards.iter().map(ClientInput::from_graph).collect();
    let dims: Vec<usize> = shards.iter().map(Graph::feature_dim).collect();
    let mut model = VgflModel::new(cfg.model, &dims, graph.num_labels(), &cfg.train.server_hidden, model_seed)?;
    let report = train_vgfl(&mut model, &inputs, graph.labels(), graph.splits(), &cfg.train.train_config())?;
    let test: Vec<usize> = graph.splits().test.iter().copied().filter(|&v| graph.labels()[v].is_some()).collect();
    Ok((evaluate(&model, &inputs, graph.labels(), &test)?, report))
}

/// Everything a run produces, before anything is written to disk.
pub struct RunOutput {
    pub metrics: RunMetrics,
    pub outcomes: Vec<(usize, AttackOutcome<f64>)>,
}

pub fn execute(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    cfg.validate()?;
    let graph = materialize(cfg, seed)?;
    let ratios = cfg.partition.resolved_ratios()?;
    let k = cfg.partition.k;
    let part_seed = derive_seed(cfg.partition.seed ^ seed, STREAM_PARTITION);
    let manifest = partition(&graph, k, &ratios, part_seed).map_err(|e| match e {
        Error::InvalidArgument(msg) => Error::Data(format!("partition: {msg}")),
        other => other,
    })?;
    let clean_shards: Vec<Graph<f64>> = manifest.iter().map(|s| shard_graph(&graph, s)).collect::<Result<_>>()?;

    let outcomes = poison(cfg, &graph, &clean_shards, seed)?;
    let mut poisoned_shards = clean_shards.clone();
    for (c, out) in &outcomes {
        poisoned_shards[*c] = out.perturbed.clone();
    }

    let model_seed = derive_seed(seed, STREAM_MODEL);
    let ((clean, clean_report), (poisoned, poisoned_report)) = if outcomes.is_empty() {
        let r = train_and_eval(cfg, &graph, &clean_shards, model_seed)?;
        (r.clone(), r)
    } else {
        let (a, b) = rayon::join(
            || train_and_eval(cfg, &graph, &clean_shards, model_seed),
            || train_and_eval(cfg, &graph, &poisoned_shards, model_seed),
        );
        (a?, b?)
    };

    let plans = outcomes
        .iter()
        .map(|(c, o)| PlanSummary {
            client: *c,
            budget: o.plan.budget,
            flips: o.plan.len(),
            adds: o.plan.adds(),
            deletes: o.plan.deletes(),
        })
        .collect();
    let metrics = RunMetrics {
        config_hash: cfg.hash(),
        seed,
        attack: cfg.attack.kind,
        alpha: cfg.attack.alpha,
        k,
        poisoned: if cfg.attack.kind == AttackKind::None { Vec::new() } else { cfg.attack.poisoned.clone() },
        ratios,
        clean,
        poisoned_metrics: poisoned,
        clean_training: (&clean_report).into(),
        poisoned_training: (&poisoned_report).into(),
        plans,
    };
    Ok(RunOutput { metrics, outcomes })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn json_pretty<S: Serialize>(value: &S, path: &Path) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
}

/// Runs one seed and writes `<out>/<hash>/<seed>/{metrics.json, run.json,
/// trace.csv, plans/client_<i>.json}` plus `<out>/<hash>/config.json`.
pub fn cmd_run(cfg: &ExperimentConfig, seed: u64, out: impl AsRef<Path>) -> Result<RunRecord> {
    let started = Instant::now();
    let output = execute(cfg, seed)?;
    let hash_dir = out.as_ref().join(&output.metrics.config_hash);
    let run_dir = hash_dir.join(seed.to_string());
    let plan_dir = run_dir.join("plans");
    fs::create_dir_all(&plan_dir).map_err(|e| Error::io(&plan_dir, e))?;

    let config_path = hash_dir.join("config.json");
    let mut canon = cfg.clone();
    canon.seeds = vec![seed];
    canon.sweep = Default::default();
    write_text(&config_path, &json_pretty(&canon, &config_path)?)?;

    let mut plan_paths = Vec::with_capacity(output.outcomes.len());
    let mut trace = format!("client,{}\n", TraceRow::CSV_HEADER);
    for (c, o) in &output.outcomes {
        let p = plan_dir.join(format!("client_{c}.json"));
        save_plan(&o.plan, &p)?;
        plan_paths.push(p);
        for row in &o.trace {
            writeln!(trace, "{c},{}", row.csv_line()).expect("write to string");
        }
    }
    write_text(&run_dir.join("trace.csv"), &trace)?;

    let metrics_path = run_dir.join("metrics.json");
    write_text(&metrics_path, &json_pretty(&output.metrics, &metrics_path)?)?;

    let record = RunRecord {
        config_hash: output.metrics.config_hash.clone(),
        seed,
        clean: output.metrics.clean.clone(),
        poisoned: output.metrics.poisoned_metrics.clone(),
        plan_paths,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        metrics: Some(output.metrics),
    };
    let run_path = run_dir.join("run.json");
    write_text(&run_path, &json_pretty(&record, &run_path)?)?;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SbmConfig;

    fn small_cfg(kind: AttackKind) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::from_sbm(SbmConfig {
            blocks: vec![12, 12],
            p_in: 0.4,
            p_out: 0.05,
            feature_dim: 6,
            train_frac: 0.5,
            test_frac: 0.25,
            ..SbmConfig::default()
        });
        cfg.partition.k = 2;
        cfg.attack.kind = kind;
        cfg.attack.poisoned = vec![0];
        cfg.attack.alpha = 0.2;
        cfg.attack.inner_epochs = 2;
        cfg.train.epochs = 5;
        cfg
    }

    #[test]
    fn derived_seeds_differ_per_stream() {
        let s: Vec<u64> = (0..4).map(|k| derive_seed(7, k)).collect();
        for i in 0..4 {
            for j in i + 1..4 {
                assert_ne!(s[i], s[j]);
            }
        }
        assert_eq!(derive_seed(7, 2), s[2]);
    }

    #[test]
    fn no_attack_gives_identical_reports() {
        let out = execute(&small_cfg(AttackKind::None), 3).unwrap();
        assert_eq!(out.metrics.clean, out.metrics.poisoned_metrics);
        assert!(out.outcomes.is_empty());
    }

    #[test]
    fn run_writes_layout_and_is_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_cfg(AttackKind::Random);
        let a = cmd_run(&cfg, 1, dir.path()).unwrap();
        let run_dir = dir.path().join(&a.config_hash).join("1");
        let first = fs::read(run_dir.join("metrics.json")).unwrap();
        assert!(run_dir.join("plans/client_0.json").is_file());
        assert!(run_dir.join("trace.csv").is_file());
        assert!(dir.path().join(&a.config_hash).join("config.json").is_file());
        let b = cmd_run(&cfg, 1, dir.path()).unwrap();
        assert_eq!(a.clean, b.clean);
        assert_eq!(fs::read(run_dir.join("metrics.json")).unwrap(), first);
    }
}
