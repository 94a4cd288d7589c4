//! Cartesian parameter sweeps over (alpha, K, K', poisoned ratio) × seeds.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::config::ExperimentConfig;
use crate::experiment::run::{cmd_run, RunRecord};
use crate::runtime::MetricsReport;

/// Axis values of one sweep cell (swept or inherited from the base config).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub alpha: f64,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "K_prime")]
    pub k_prime: usize,
    pub poisoned_ratio: f64,
}

impl Cell {
    fn sort_key(&self) -> (u64, usize, usize, u64) {
        (self.alpha.to_bits(), self.k, self.k_prime, self.poisoned_ratio.to_bits())
    }
}

/// The concrete configuration of every cell of the sweep, in sorted order.
pub fn expand(cfg: &ExperimentConfig) -> Result<Vec<(Cell, ExperimentConfig)>> {
    let s = &cfg.sweep;
    if s.is_empty() {
        return Err(Error::config("sweep", "no sweep axis given"));
    }
    fn axis<V: Copy>(values: &[V], base: Option<V>) -> Vec<Option<V>> {
        if values.is_empty() {
            vec![base]
        } else {
            values.iter().map(|&v| Some(v)).collect()
        }
    }
    let mut cells = Vec::new();
    for alpha in axis(&s.alpha, None) {
        for k in axis(&s.k, None) {
            for k_prime in axis(&s.k_prime, None) {
                for ratio in axis(&s.poisoned_ratio, None) {
                    let mut c = cfg.clone();
                    c.sweep = Default::default();
                    if let Some(a) = alpha {
                        c.attack.alpha = a;
                    }
                    if let Some(k) = k {
                        c.partition.k = k;
                        c.partition.ratios = None;
                    }
                    if let Some(kp) = k_prime {
                        c.attack.poisoned = (0..kp).collect();
                    }
                    if let Some(r) = ratio {
                        c.partition.ratios = None;
                        c.partition.first_ratio = Some(r);
                        if !c.attack.poisoned.contains(&0) {
                            c.attack.poisoned.insert(0, 0);
                        }
                    }
                    c.validate()?;
                    let cell = Cell {
                        alpha: c.attack.alpha,
                        k: c.partition.k,
                        k_prime: c.attack.poisoned.len(),
                        poisoned_ratio: c.partition.resolved_ratios()?[0],
                    };
                    cells.push((cell, c));
                }
            }
        }
    }
    cells.sort_by(|a, b| a.0.sort_key().cmp(&b.0.sort_key()));
    Ok(cells)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: Cell,
    pub config_hash: String,
    pub seeds: usize,
    pub clean: Vec<MetricsReport>,
    pub poisoned: Vec<MetricsReport>,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

const METRICS: [(&str, fn(&MetricsReport) -> f64); 6] = [
    ("accuracy", |m| m.accuracy),
    ("precision", |m| m.precision),
    ("recall", |m| m.recall),
    ("f1", |m| m.f1),
    ("mae", |m| m.mae),
    ("log_loss", |m| m.log_loss),
];

impl CellSummary {
    pub fn median_accuracy(&self, poisoned: bool) -> f64 {
        let runs = if poisoned { &self.poisoned } else { &self.clean };
        median(&runs.iter().map(|m| m.accuracy).collect::<Vec<_>>())
    }
}

pub fn aggregate_csv(cells: &[CellSummary], attack: &str) -> String {
    let mut out = String::from("alpha,K,K_prime,poisoned_ratio,attack,config_hash,seeds");
    for side in ["clean", "poisoned"] {
        for (name, _) in METRICS {
            write!(out, ",{side}_{name}_mean,{side}_{name}_std").expect("write to string");
        }
    }
    out.push_str(",clean_accuracy_median,poisoned_accuracy_median\n");
    for c in cells {
        write!(
            out,
            "{},{},{},{},{attack},{},{}",
            c.cell.alpha, c.cell.k, c.cell.k_prime, c.cell.poisoned_ratio, c.config_hash, c.seeds
        )
        .expect("write to string");
        for runs in [&c.clean, &c.poisoned] {
            for (_, f) in METRICS {
                let (m, s) = mean_std(&runs.iter().map(f).collect::<Vec<_>>());
                write!(out, ",{m},{s}").expect("write to string");
            }
        }
        writeln!(out, ",{},{}", c.median_accuracy(false), c.median_accuracy(true)).expect("write to string");
    }
    out
}

/// Runs every (cell, seed) pair on a pool of `jobs` workers, then writes
/// `<out>/aggregate.csv`.
pub fn cmd_sweep(cfg: &ExperimentConfig, seeds: &[u64], out: impl AsRef<Path>, jobs: usize) -> Result<Vec<CellSummary>> {
    let out = out.as_ref();
    let cells = expand(cfg)?;
    if seeds.is_empty() {
        return Err(Error::config("seeds", "empty seed list"));
    }
    let jobs_list: Vec<(usize, u64)> = (0..cells.len()).flat_map(|i| seeds.iter().map(move |&s| (i, s))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let records: Vec<RunRecord> = pool.install(|| {
        jobs_list
            .par_iter()
            .map(|&(i, s)| cmd_run(&cells[i].1, s, out))
            .collect::<Result<_>>()
    })?;

    let summaries: Vec<CellSummary> = cells
        .iter()
        .enumerate()
        .map(|(i, (cell, c))| {
            let mine = &records[i * seeds.len()..(i + 1) * seeds.len()];
            CellSummary {
                cell: cell.clone(),
                config_hash: c.hash(),
                seeds: mine.len(),
                clean: mine.iter().map(|r| r.clean.clone()).collect(),
                poisoned: mine.iter().map(|r| r.poisoned.clone()).collect(),
            }
        })
        .collect();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join("aggregate.csv");
    fs::write(&path, aggregate_csv(&summaries, cfg.attack.kind.as_str())).map_err(|e| Error::io(&path, e))?;
    Ok(summaries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::SbmConfig;

    #[test]
    fn expansion_counts_and_overrides() {
        let mut cfg = ExperimentConfig::from_sbm(SbmConfig::default());
        cfg.sweep.alpha = vec![0.14, 0.06, 0.1];
        let cells = expand(&cfg).unwrap();
        assert_eq!(cells.len(), 3);
        assert_eq!(cells.iter().map(|c| c.0.alpha).collect::<Vec<_>>(), vec![0.06, 0.1, 0.14]);
        assert!(cells.iter().all(|c| c.1.attack.alpha == c.0.alpha && c.0.k == 5));

        let mut cfg = ExperimentConfig::from_sbm(SbmConfig::default());
        cfg.partition.k = 4;
        cfg.sweep.k_prime = vec![1, 2, 3];
        cfg.sweep.poisoned_ratio = vec![0.4];
        let cells = expand(&cfg).unwrap();
        assert_eq!(cells.len(), 3);
        assert_eq!(cells[2].1.attack.poisoned, vec![0, 1, 2]);
        assert_eq!(cells[2].1.partition.resolved_ratios().unwrap()[0], 0.4);

        assert!(expand(&ExperimentConfig::from_sbm(SbmConfig::default())).is_err());
        let mut bad = ExperimentConfig::from_sbm(SbmConfig::default());
        bad.sweep.k_prime = vec![6];
        assert_eq!(expand(&bad).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn statistics() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
        assert_eq!(mean_std(&[5.0]), (5.0, 0.0));
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
