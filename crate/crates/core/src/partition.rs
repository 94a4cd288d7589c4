//! Vertical split of one graph into client shards: every client sees the full
//! node set but a disjoint slice of the edges and of the feature columns.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::scalar::Scalar;
use crate::tensor::Mat;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientShard {
    pub client: usize,
    /// Edges `(x, y)` with `x < y`, sorted.
    pub edges: Vec<(usize, usize)>,
    /// Original feature column indices, ascending.
    pub feature_cols: Vec<usize>,
}

/// `[first, r, r, ..]` with the remaining mass shared equally by the other clients.
pub fn ratios_with_first(k: usize, first: f64) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::invalid("need at least one client"));
    }
    if k == 1 {
        return Ok(vec![1.0]);
    }
    if !(first > 0.0 && first < 1.0) {
        return Err(Error::invalid(format!("first client ratio {first} must lie in (0, 1)")));
    }
    let rest = (1.0 - first) / (k - 1) as f64;
    let mut r = vec![rest; k];
    r[0] = first;
    Ok(r)
}

fn shard_sizes(total: usize, ratios: &[f64], what: &str) -> Result<Vec<usize>> {
    let mut sizes: Vec<usize> = ratios.iter().map(|r| (r * total as f64).floor() as usize).collect();
    let assigned: usize = sizes[..sizes.len() - 1].iter().sum();
    if assigned > total {
        return Err(Error::invalid(format!("ratios over-assign {what}")));
    }
    *sizes.last_mut().expect("k >= 1") = total - assigned;
    if let Some(i) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::invalid(format!(
            "client {i} would receive no {what} ({total} {what} over {} clients)",
            ratios.len()
        )));
    }
    Ok(sizes)
}

/// Shuffles edges and feature columns independently (seeded) and deals them
/// out contiguously: client `i` gets `floor(ratios[i] * total)` of each, the
/// last client also takes the remainder.
pub fn partition<T: Scalar>(graph: &Graph<T>, k: usize, ratios: &[f64], seed: u64) -> Result<Vec<ClientShard>> {
    if k == 0 {
        return Err(Error::invalid("need at least one client"));
    }
    if ratios.len() != k {
        return Err(Error::invalid(format!("{} ratios for {k} clients", ratios.len())));
    }
    if ratios.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::invalid("every client ratio must be positive"));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("client ratios sum to {total}, not 1")));
    }
    let (m, d) = (graph.edge_count(), graph.feature_dim());
    if k > m || k > d {
        return Err(Error::invalid(format!("{k} clients but only {m} edges and {d} feature columns")));
    }
    let edge_sizes = shard_sizes(m, ratios, "edges")?;
    let col_sizes = shard_sizes(d, ratios, "feature columns")?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = graph.edge_list();
    edges.shuffle(&mut rng);
    let mut cols: Vec<usize> = (0..d).collect();
    cols.shuffle(&mut rng);

    let (mut e_off, mut c_off) = (0, 0);
    let mut shards = Vec::with_capacity(k);
    for (client, (&ne, &nc)) in edge_sizes.iter().zip(&col_sizes).enumerate() {
        let mut e = edges[e_off..e_off + ne].to_vec();
        let mut c = cols[c_off..c_off + nc].to_vec();
        e.sort_unstable();
        c.sort_unstable();
        shards.push(ClientShard {
            client,
            edges: e,
            feature_cols: c,
        });
        e_off += ne;
        c_off += nc;
    }
    Ok(shards)
}

/// The shard's feature columns, ascending by original index.
pub fn shard_feature_matrix<T: Scalar>(graph: &Graph<T>, shard: &ClientShard) -> Result<Mat<T>> {
    graph.features().select_cols(&shard.feature_cols)
}

/// The client's local view as a graph: shard edges, shard features, and the
/// full graph's labels and splits.
pub fn shard_graph<T: Scalar>(graph: &Graph<T>, shard: &ClientShard) -> Result<Graph<T>> {
    Graph::new(
        shard_feature_matrix(graph, shard)?,
        &shard.edges,
        graph.labels().to_vec(),
        graph.num_labels(),
        graph.splits().clone(),
    )
}
