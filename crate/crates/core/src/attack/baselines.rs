//! Reference attacks: uniform random flips and DICE (delete internally,
//! connect externally).

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attack::augment::sample_non_edges;
use crate::attack::{budget, AttackOutcome, TraceRow};
use crate::error::{Error, Result};
use crate::graph::{ordered, Flip, Graph, PerturbationPlan};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub alpha: f64,
    pub seed: u64,
    /// Probability that a DICE round tries the delete branch first.
    pub dice_delete_ratio: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            seed: 0,
            dice_delete_ratio: 0.5,
        }
    }
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.dice_delete_ratio) {
            return Err(Error::config(
                "attack.dice_delete_ratio",
                format!("{} not in [0, 1]", self.dice_delete_ratio),
            ));
        }
        budget(self.alpha, 1_000_000).map(|_| ())
    }
}

struct Run<T> {
    graph: Graph<T>,
    plan: PerturbationPlan,
    trace: Vec<TraceRow>,
    flipped: HashSet<(usize, usize)>,
}

impl<T: Scalar> Run<T> {
    fn new(shard: &Graph<T>, client: usize, delta: usize) -> Self {
        Self {
            graph: shard.clone(),
            plan: PerturbationPlan::new(delta, client),
            trace: Vec::with_capacity(delta),
            flipped: HashSet::new(),
        }
    }

    fn flip(&mut self, (x, y): (usize, usize)) -> Result<()> {
        let op = self.graph.apply_flip(x, y)?;
        self.flipped.insert((x, y));
        self.trace.push(TraceRow {
            round: self.plan.flips.len(),
            x,
            y,
            op,
            abs_grad: None,
            encoder_loss: None,
        });
        self.plan.flips.push(Flip { x, y, op });
        Ok(())
    }

    fn finish(self) -> AttackOutcome<T> {
        AttackOutcome {
            plan: self.plan,
            trace: self.trace,
            perturbed: self.graph,
            inner_losses: Vec::new(),
        }
    }

    /// Uniform existing edge, not flipped before, satisfying `keep`.
    fn pick_edge(&self, rng: &mut ChaCha8Rng, keep: impl Fn(usize, usize) -> bool) -> Option<(usize, usize)> {
        let pool: Vec<(usize, usize)> = self
            .graph
            .edges()
            .filter(|&(x, y)| !self.flipped.contains(&(x, y)) && keep(x, y))
            .collect();
        pool.choose(rng).copied()
    }

    /// Uniform non-edge, not flipped before, satisfying `keep`. Rejection
    /// sampling first, exhaustive enumeration if that keeps missing.
    fn pick_non_edge(&self, rng: &mut ChaCha8Rng, keep: impl Fn(usize, usize) -> bool) -> Option<(usize, usize)> {
        let n = self.graph.n();
        for _ in 0..64 {
            let Some((x, y)) = sample_non_edges(&self.graph, 1, &self.flipped, rng).pop() else {
                return None;
            };
            if keep(x, y) {
                return Some((x, y));
            }
        }
        let pool: Vec<(usize, usize)> = (0..n)
            .flat_map(|x| (x + 1..n).map(move |y| (x, y)))
            .filter(|&(x, y)| !self.graph.has_edge(x, y) && !self.flipped.contains(&(x, y)) && keep(x, y))
            .collect();
        pool.choose(rng).copied()
    }
}

/// `floor(alpha * m)` flips; each round deletes a uniform edge or adds a
/// uniform non-edge with equal probability, falling back to the other branch
/// when one is exhausted. No pair is flipped twice.
pub fn random_attack<T: Scalar>(shard: &Graph<T>, client: usize, cfg: &BaselineConfig) -> Result<AttackOutcome<T>> {
    cfg.validate()?;
    let delta = budget(cfg.alpha, shard.edge_count())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut run = Run::new(shard, client, delta);
    for _ in 0..delta {
        let delete_first = rng.random_bool(0.5);
        let pick = |run: &Run<T>, rng: &mut ChaCha8Rng, delete: bool| {
            if delete {
                run.pick_edge(rng, |_, _| true)
            } else {
                run.pick_non_edge(rng, |_, _| true)
            }
        };
        let choice = pick(&run, &mut rng, delete_first).or_else(|| pick(&run, &mut rng, !delete_first));
        match choice {
            Some(pair) => run.flip(ordered(pair.0, pair.1))?,
            None => break,
        }
    }
    Ok(run.finish())
}

/// DICE: with probability `dice_delete_ratio` delete a uniform edge whose
/// endpoints share a label, otherwise add a uniform non-edge whose endpoints
/// carry different labels. Unlabeled nodes are never touched.
pub fn dice_attack<T: Scalar>(
    shard: &Graph<T>,
    labels: &[Option<usize>],
    client: usize,
    cfg: &BaselineConfig,
) -> Result<AttackOutcome<T>> {
    cfg.validate()?;
    if labels.len() != shard.n() {
        return Err(Error::Data(format!("{} labels for {} nodes", labels.len(), shard.n())));
    }
    let delta = budget(cfg.alpha, shard.edge_count())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut run = Run::new(shard, client, delta);
    let same = |x: usize, y: usize| matches!((labels[x], labels[y]), (Some(a), Some(b)) if a == b);
    let differ = |x: usize, y: usize| matches!((labels[x], labels[y]), (Some(a), Some(b)) if a != b);
    for _ in 0..delta {
        let delete_first = rng.random_bool(cfg.dice_delete_ratio);
        let pick = |run: &Run<T>, rng: &mut ChaCha8Rng, delete: bool| {
            if delete {
                run.pick_edge(rng, same)
            } else {
                run.pick_non_edge(rng, differ)
            }
        };
        let choice = pick(&run, &mut rng, delete_first).or_else(|| pick(&run, &mut rng, !delete_first));
        match choice {
            Some(pair) => run.flip(pair)?,
            None => break,
        }
    }
    Ok(run.finish())
}
