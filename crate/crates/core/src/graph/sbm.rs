use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Splits};
use crate::scalar::Scalar;
use crate::tensor::Mat;

/// Stochastic block model with Gaussian block-mean features. Labels are block
/// ids; splits are drawn with the same seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SbmConfig {
    pub blocks: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// Standard deviation of each block's mean vector entries.
    pub feature_signal: f64,
    /// Standard deviation of per-node noise around the block mean.
    pub feature_noise: f64,
    pub train_frac: f64,
    pub test_frac: f64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            blocks: vec![20, 20],
            p_in: 0.3,
            p_out: 0.02,
            feature_dim: 16,
            feature_signal: 1.0,
            feature_noise: 1.0,
            train_frac: 0.1,
            test_frac: 0.1,
        }
    }
}

pub fn generate_sbm<T: Scalar>(cfg: &SbmConfig, seed: u64) -> Result<Graph<T>> {
    if cfg.blocks.is_empty() || cfg.blocks.contains(&0) {
        return Err(Error::invalid("SBM needs at least one non-empty block"));
    }
    for (name, p) in [("p_in", cfg.p_in), ("p_out", cfg.p_out)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("{name} = {p} outside [0, 1]")));
        }
    }
    if cfg.feature_dim == 0 {
        return Err(Error::invalid("SBM feature_dim must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let block_of: Vec<usize> = cfg
        .blocks
        .iter()
        .enumerate()
        .flat_map(|(b, &size)| std::iter::repeat_n(b, size))
        .collect();
    let n = block_of.len();

    let mut edges = Vec::new();
    for x in 0..n {
        for y in x + 1..n {
            let p = if block_of[x] == block_of[y] { cfg.p_in } else { cfg.p_out };
            if p > 0.0 && rng.random_bool(p) {
                edges.push((x, y));
            }
        }
    }

    let signal = Normal::new(0.0, cfg.feature_signal.max(0.0))
        .map_err(|e| Error::invalid(format!("feature_signal: {e}")))?;
    let noise = Normal::new(0.0, cfg.feature_noise.max(0.0))
        .map_err(|e| Error::invalid(format!("feature_noise: {e}")))?;
    let means: Vec<Vec<f64>> = cfg
        .blocks
        .iter()
        .map(|_| (0..cfg.feature_dim).map(|_| signal.sample(&mut rng)).collect())
        .collect();
    let mut data = Vec::with_capacity(n * cfg.feature_dim);
    for &b in &block_of {
        data.extend(means[b].iter().map(|&m| T::of(m + noise.sample(&mut rng))));
    }
    let features = Mat::new(n, cfg.feature_dim, data)?;
    let labels = block_of.iter().map(|&b| Some(b)).collect();
    let split_seed = rng.random();
    let splits = Splits::random(n, cfg.train_frac, cfg.test_frac, split_seed)?;
    Graph::new(features, &edges, labels, cfg.blocks.len(), splits)
}
