//! Label-free structure poisoning of one client shard via graph contrastive
//! learning.
//!
//! Each round trains a shared two-layer GCN encoder on pairs of augmented
//! views, differentiates the contrastive loss with respect to both view
//! adjacencies (through the degree normalization), sums the two symmetric
//! gradients and flips the single most promising edge.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attack::augment::{feature_shuffle, sample_edge_augmentation, AugmentParams, EdgeStats};
use crate::attack::contrastive::contrastive_loss;
use crate::attack::{budget, AttackOutcome, TraceRow};
use crate::error::{Error, Result};
use crate::graph::{normalize_dense, ordered, Flip, FlipOp, Graph, PerturbationPlan};
use crate::runtime::{gcn_forward, normalize_on_tape, GcnModel, Module};
use crate::scalar::Scalar;
use crate::tensor::{Adam, AdamConfig, Mat, Tape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackConfig {
    /// Budget factor: the plan may flip at most `floor(alpha * m)` pairs.
    pub alpha: f64,
    /// Encoder training epochs per round.
    pub inner_epochs: usize,
    pub tau: f64,
    pub p_scale: f64,
    pub p_add_rate: f64,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub lr: f64,
    /// Re-initialize the encoder at the start of every round instead of
    /// warm-starting from the previous one.
    pub reinit_each_round: bool,
    pub seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            inner_epochs: 20,
            tau: 0.5,
            p_scale: 1.0,
            p_add_rate: 0.2,
            hidden_dim: 32,
            embed_dim: 32,
            lr: 0.01,
            reinit_each_round: false,
            seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::config(format!("attack.{field}"), msg));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad("alpha", format!("{} not in (0, 1)", self.alpha));
        }
        if self.inner_epochs == 0 {
            return bad("inner_epochs", "must be at least 1".into());
        }
        if !(self.tau > 0.0) {
            return bad("tau", format!("{} must be positive", self.tau));
        }
        if !(self.p_scale > 0.0 && self.p_scale <= 1.0) {
            return bad("p_scale", format!("{} not in (0, 1]", self.p_scale));
        }
        if !(self.p_add_rate > 0.0 && self.p_add_rate <= 1.0) {
            return bad("p_add_rate", format!("{} not in (0, 1]", self.p_add_rate));
        }
        if self.hidden_dim == 0 || self.embed_dim == 0 {
            return bad("hidden_dim", "encoder dimensions must be positive".into());
        }
        if !(self.lr > 0.0) {
            return bad("lr", format!("{} must be positive", self.lr));
        }
        Ok(())
    }

    fn augment(&self) -> AugmentParams {
        AugmentParams {
            p_scale: self.p_scale,
            p_add_rate: self.p_add_rate,
        }
    }
}

/// Two augmented views of a shard: adjacency plus shuffled features each.
#[derive(Clone, Debug)]
pub struct ViewPair<T> {
    pub adjacency: [Mat<T>; 2],
    pub features: [Mat<T>; 2],
    pub permutation: [Vec<usize>; 2],
}

pub fn sample_views<T: Scalar>(
    graph: &Graph<T>,
    stats: &EdgeStats,
    cfg: &AttackConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ViewPair<T>> {
    let a1 = sample_edge_augmentation(graph, stats, cfg.augment(), rng)?;
    let (x1, p1) = feature_shuffle(graph.features(), rng)?;
    let a2 = sample_edge_augmentation(graph, stats, cfg.augment(), rng)?;
    let (x2, p2) = feature_shuffle(graph.features(), rng)?;
    Ok(ViewPair {
        adjacency: [a1, a2],
        features: [x1, x2],
        permutation: [p1, p2],
    })
}

/// One Adam step of the encoder on a view pair; returns the loss before the step.
pub fn encoder_step<T: Scalar>(encoder: &mut GcnModel<T>, adam: &mut Adam<T>, views: &ViewPair<T>, tau: f64) -> Result<f64> {
    let tape = Tape::new();
    let vars = encoder.bind(&tape)?;
    let mut z = Vec::with_capacity(2);
    for j in 0..2 {
        let a_hat = tape.constant(normalize_dense(&views.adjacency[j]))?;
        let x = tape.constant(views.features[j].clone())?;
        z.push(gcn_forward(&tape, a_hat, x, vars[0], vars[1])?);
    }
    let loss = contrastive_loss(&tape, z[0], z[1], T::of(tau))?;
    let mut grads = tape.backward(loss)?;
    encoder.store_grads(&mut grads, &vars);
    adam.step(&mut encoder.params_mut())?;
    Ok(tape.scalar(loss).as_f64())
}

/// Symmetrized gradients `(G + Gᵀ) / 2` of the contrastive loss with respect
/// to each view's adjacency, differentiating through the normalization. The
/// encoder is held fixed. Also returns the loss value.
pub fn adjacency_gradient<T: Scalar>(encoder: &GcnModel<T>, views: &ViewPair<T>, tau: f64) -> Result<([Mat<T>; 2], f64)> {
    let tape = Tape::new();
    let vars = encoder.bind_frozen(&tape)?;
    let mut adj = Vec::with_capacity(2);
    let mut z = Vec::with_capacity(2);
    for j in 0..2 {
        let a = tape.leaf(views.adjacency[j].clone())?;
        let a_hat = normalize_on_tape(&tape, a)?;
        let x = tape.constant(views.features[j].clone())?;
        z.push(gcn_forward(&tape, a_hat, x, vars[0], vars[1])?);
        adj.push(a);
    }
    let loss = contrastive_loss(&tape, z[0], z[1], T::of(tau))?;
    let mut grads = tape.backward(loss)?;
    let mut sym = |v| -> Result<Mat<T>> {
        let g = grads.take(v).ok_or(Error::MissingGradient { index: 0 })?;
        let half = T::of(0.5);
        g.zip_map(&g.transpose(), "symmetrize", |a, b| (a + b) * half)
    };
    let g1 = sym(adj[0])?;
    let g2 = sym(adj[1])?;
    Ok(([g1, g2], tape.scalar(loss).as_f64()))
}

/// Elementwise sum of the two view gradients.
pub fn combine_gradients<T: Scalar>(g1: &Mat<T>, g2: &Mat<T>) -> Result<Mat<T>> {
    g1.add(g2)
}

/// The feasible flip with the largest `|∇|`: adding requires `∇ > 0` on a
/// non-edge, deleting requires `∇ < 0` on an edge. Pairs in `excluded` are
/// skipped; ties go to the lexicographically smallest `(x, y)`.
pub fn select_flip<T: Scalar>(
    grad: &Mat<T>,
    adjacency: &Mat<T>,
    excluded: &BTreeSet<(usize, usize)>,
) -> Option<(Flip, T)> {
    let n = grad.rows();
    let mut best: Option<(Flip, T)> = None;
    for x in 0..n {
        for y in x + 1..n {
            let g = grad.get(x, y);
            let edge = adjacency.get(x, y) != T::zero();
            let op = if g > T::zero() && !edge {
                FlipOp::Add
            } else if g < T::zero() && edge {
                FlipOp::Delete
            } else {
                continue;
            };
            if excluded.contains(&(x, y)) {
                continue;
            }
            let mag = g.abs();
            if best.as_ref().is_none_or(|(_, b)| mag > *b) {
                best = Some((Flip { x, y, op }, mag));
            }
        }
    }
    best
}

/// Runs the full attack on one shard graph (the client's local edges and
/// feature columns) and returns the flip plan, a per-round trace and the
/// poisoned shard.
pub fn run_attack<T: Scalar>(shard: &Graph<T>, client: usize, cfg: &AttackConfig) -> Result<AttackOutcome<T>> {
    cfg.validate()?;
    let delta = budget(cfg.alpha, shard.edge_count())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = shard.feature_dim();
    let mut encoder = GcnModel::new(d, cfg.hidden_dim, cfg.embed_dim, &mut rng);
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr));

    let mut current = shard.clone();
    let mut plan = PerturbationPlan::new(delta, client);
    let mut trace = Vec::with_capacity(delta);
    let mut inner_losses = Vec::with_capacity(delta);
    let mut flipped = BTreeSet::new();

    for round in 0..delta {
        if cfg.reinit_each_round && round > 0 {
            encoder = GcnModel::new(d, cfg.hidden_dim, cfg.embed_dim, &mut rng);
            adam = Adam::new(AdamConfig::with_lr(cfg.lr));
        }
        let stats = EdgeStats::compute(&current)?;
        let mut losses = Vec::with_capacity(cfg.inner_epochs);
        for _ in 0..cfg.inner_epochs {
            let views = sample_views(&current, &stats, cfg, &mut rng)?;
            losses.push(encoder_step(&mut encoder, &mut adam, &views, cfg.tau)?);
        }
        inner_losses.push(losses);

        let views = sample_views(&current, &stats, cfg, &mut rng)?;
        let ([g1, g2], loss) = adjacency_gradient(&encoder, &views, cfg.tau)?;
        let grad = combine_gradients(&g1, &g2)?;
        let Some((flip, mag)) = select_flip(&grad, &current.dense_adjacency(), &flipped) else {
            break;
        };
        let done = current.apply_flip(flip.x, flip.y)?;
        debug_assert_eq!(done, flip.op);
        flipped.insert(ordered(flip.x, flip.y));
        plan.flips.push(flip);
        trace.push(TraceRow {
            round,
            x: flip.x,
            y: flip.y,
            op: flip.op,
            abs_grad: Some(mag.as_f64()),
            encoder_loss: Some(loss),
        });
    }

    Ok(AttackOutcome {
        plan,
        trace,
        perturbed: current,
        inner_losses,
    })
}
