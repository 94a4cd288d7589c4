//! Degree-driven edge augmentation and feature shuffling for contrastive views.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{ordered, Graph};
use crate::scalar::Scalar;
use crate::tensor::Mat;

/// Relative gap below which `s_max - s_avg` (or `s_avg - s_min`) is treated
/// as zero, e.g. on a regular graph.
const DEGENERATE_GAP: f64 = 1e-12;

/// `ln(d_x + d_y)`.
pub fn edge_importance(d_x: usize, d_y: usize) -> Result<f64> {
    if d_x + d_y == 0 {
        return Err(Error::invalid("edge importance of two isolated endpoints"));
    }
    Ok(((d_x + d_y) as f64).ln())
}

fn degenerate(hi: f64, lo: f64) -> bool {
    hi - lo <= DEGENERATE_GAP * hi.abs().max(1.0)
}

/// Deletion probability `min(p_scale * (s_max - s_e) / (s_max - s_avg), 1)`,
/// `0.5 * p_scale` when every edge has the same importance.
pub fn removal_prob(s_e: f64, s_max: f64, s_avg: f64, p_scale: f64) -> f64 {
    if degenerate(s_max, s_avg) {
        return 0.5 * p_scale;
    }
    (p_scale * (s_max - s_e) / (s_max - s_avg)).clamp(0.0, 1.0)
}

/// Addition probability `min(p_scale * (s_e - s_min) / (s_avg - s_min), 1)`,
/// `0.5 * p_scale` when every edge has the same importance.
pub fn addition_prob(s_e: f64, s_min: f64, s_avg: f64, p_scale: f64) -> f64 {
    if degenerate(s_avg, s_min) {
        return 0.5 * p_scale;
    }
    (p_scale * (s_e - s_min) / (s_avg - s_min)).clamp(0.0, 1.0)
}

/// Importance of every stored edge plus the summary statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeStats {
    pub degrees: Vec<usize>,
    pub edges: Vec<((usize, usize), f64)>,
    pub s_max: f64,
    pub s_avg: f64,
    pub s_min: f64,
}

impl EdgeStats {
    pub fn compute<T: Scalar>(graph: &Graph<T>) -> Result<Self> {
        let degrees = graph.degrees();
        let edges: Vec<((usize, usize), f64)> = graph
            .edges()
            .map(|(x, y)| Ok(((x, y), edge_importance(degrees[x], degrees[y])?)))
            .collect::<Result<_>>()?;
        if edges.is_empty() {
            return Err(Error::Graph("edge statistics need at least one edge".into()));
        }
        let s_max = edges.iter().map(|e| e.1).fold(f64::NEG_INFINITY, f64::max);
        let s_min = edges.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
        let s_avg = (edges.iter().map(|e| e.1).sum::<f64>() / edges.len() as f64).clamp(s_min, s_max);
        Ok(Self {
            degrees,
            edges,
            s_max,
            s_avg,
            s_min,
        })
    }

    pub fn removal_prob(&self, s_e: f64, p_scale: f64) -> f64 {
        removal_prob(s_e, self.s_max, self.s_avg, p_scale)
    }

    /// Addition probability for the non-edge `{x, y}` from current degrees.
    pub fn addition_prob_for(&self, x: usize, y: usize, p_scale: f64) -> f64 {
        match edge_importance(self.degrees[x], self.degrees[y]) {
            Ok(s) => addition_prob(s, self.s_min, self.s_avg, p_scale),
            Err(_) => 0.0,
        }
    }
}

/// Up to `count` distinct non-edges `{x, y}` (x < y), uniformly without replacement.
pub fn sample_non_edges<T: Scalar, R: Rng + ?Sized>(
    graph: &Graph<T>,
    count: usize,
    exclude: &HashSet<(usize, usize)>,
    rng: &mut R,
) -> Vec<(usize, usize)> {
    let n = graph.n();
    let admissible = |x: usize, y: usize| x != y && !graph.has_edge(x, y) && !exclude.contains(&ordered(x, y));
    let total_pairs = n * n.saturating_sub(1) / 2;
    let free = total_pairs.saturating_sub(graph.edge_count() + exclude.len());
    if count == 0 || n < 2 {
        return Vec::new();
    }
    // Rejection sampling while the pool is comfortably larger than the request.
    if free >= 4 * count && free >= total_pairs / 4 {
        let mut chosen = Vec::with_capacity(count);
        let mut seen = HashSet::with_capacity(count);
        while chosen.len() < count {
            let x = rng.random_range(0..n);
            let y = rng.random_range(0..n);
            if !admissible(x, y) {
                continue;
            }
            let pair = ordered(x, y);
            if seen.insert(pair) {
                chosen.push(pair);
            }
        }
        return chosen;
    }
    let mut pool: Vec<(usize, usize)> = (0..n)
        .flat_map(|x| (x + 1..n).map(move |y| (x, y)))
        .filter(|&(x, y)| admissible(x, y))
        .collect();
    let (picked, _) = pool.partial_shuffle(rng, count);
    picked.to_vec()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    pub p_scale: f64,
    pub p_add_rate: f64,
}

/// One stochastic view of the shard structure: every stored edge is dropped
/// with its removal probability, then `ceil(p_add_rate * m)` uniformly drawn
/// non-edges are each added with their addition probability.
pub fn sample_edge_augmentation<T: Scalar, R: Rng + ?Sized>(
    graph: &Graph<T>,
    stats: &EdgeStats,
    params: AugmentParams,
    rng: &mut R,
) -> Result<Mat<T>> {
    if graph.edge_count() == 0 {
        return Err(Error::Graph("edge augmentation needs at least one edge".into()));
    }
    let mut adj = graph.dense_adjacency();
    for &((x, y), s_e) in &stats.edges {
        let p = stats.removal_prob(s_e, params.p_scale);
        if rng.random_bool(p) {
            adj.set(x, y, T::zero());
            adj.set(y, x, T::zero());
        }
    }
    let count = (params.p_add_rate * graph.edge_count() as f64).ceil() as usize;
    for (x, y) in sample_non_edges(graph, count, &HashSet::new(), rng) {
        let p = stats.addition_prob_for(x, y, params.p_scale);
        if rng.random_bool(p) {
            adj.set(x, y, T::one());
            adj.set(y, x, T::one());
        }
    }
    Ok(adj)
}

/// Rows of `x` reordered by a uniform random permutation: row `i` of the
/// result is row `perm[i]` of the input.
pub fn feature_shuffle<T: Scalar, R: Rng + ?Sized>(x: &Mat<T>, rng: &mut R) -> Result<(Mat<T>, Vec<usize>)> {
    let mut perm: Vec<usize> = (0..x.rows()).collect();
    perm.shuffle(rng);
    Ok((x.select_rows(&perm)?, perm))
}
