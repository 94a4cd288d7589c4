//! Undirected graphs with node features, labels and train/test/validation
//! splits, plus the plain-text dataset format and synthetic generators.

mod io;
mod plan;
mod sbm;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Mat;

pub use io::{load_graph, load_plan, save_graph, save_plan, DatasetMeta};
pub use plan::{Flip, FlipOp, PerturbationPlan};
pub use sbm::{generate_sbm, SbmConfig};

/// Train/test/validation node lists; pairwise disjoint.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub val: Vec<usize>,
}

impl Splits {
    /// Random split by fractions (train, test, val); the validation set takes
    /// the remainder so that every node lands in exactly one set.
    pub fn random(n: usize, train_frac: f64, test_frac: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&train_frac) || !(0.0..=1.0).contains(&test_frac) || train_frac + test_frac > 1.0 {
            return Err(Error::invalid(format!(
                "split fractions train={train_frac} test={test_frac} must lie in [0,1] and sum to at most 1"
            )));
        }
        let mut ids: Vec<usize> = (0..n).collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = (train_frac * n as f64).round() as usize;
        let n_test = ((test_frac * n as f64).round() as usize).min(n - n_train);
        let mut train = ids[..n_train].to_vec();
        let mut test = ids[n_train..n_train + n_test].to_vec();
        let mut val = ids[n_train + n_test..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        val.sort_unstable();
        Ok(Self { train, test, val })
    }

    fn validate(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for (name, set) in [("train", &self.train), ("test", &self.test), ("val", &self.val)] {
            for &v in set {
                if v >= n {
                    return Err(Error::Graph(format!("{name} split node {v} out of range (n = {n})")));
                }
                if seen[v] {
                    return Err(Error::Graph(format!("node {v} appears in more than one split")));
                }
                seen[v] = true;
            }
        }
        Ok(())
    }
}

/// Undirected simple graph. Edges are stored once per unordered pair; the
/// dense adjacency is symmetric, binary and has a zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph<T> {
    neighbors: Vec<BTreeSet<usize>>,
    edge_count: usize,
    features: Mat<T>,
    labels: Vec<Option<usize>>,
    num_labels: usize,
    splits: Splits,
}

#[inline]
pub fn ordered(x: usize, y: usize) -> (usize, usize) {
    if x < y {
        (x, y)
    } else {
        (y, x)
    }
}

impl<T: Scalar> Graph<T> {
    /// Builds a graph; `edges` may be given in either orientation but each
    /// unordered pair at most once.
    pub fn new(
        features: Mat<T>,
        edges: &[(usize, usize)],
        labels: Vec<Option<usize>>,
        num_labels: usize,
        splits: Splits,
    ) -> Result<Self> {
        let n = features.rows();
        if labels.len() != n {
            return Err(Error::Graph(format!("{} labels for {n} nodes", labels.len())));
        }
        if let Some(bad) = labels.iter().flatten().find(|&&l| l >= num_labels) {
            return Err(Error::Graph(format!("label {bad} out of range (num_labels = {num_labels})")));
        }
        splits.validate(n)?;
        let mut g = Self {
            neighbors: vec![BTreeSet::new(); n],
            edge_count: 0,
            features,
            labels,
            num_labels,
            splits,
        };
        for &(x, y) in edges {
            g.check_pair(x, y)?;
            if g.has_edge(x, y) {
                let (a, b) = ordered(x, y);
                return Err(Error::Graph(format!("duplicate edge {a} {b}")));
            }
            g.insert(x, y);
        }
        Ok(g)
    }

    /// Same node set, features, labels and splits with a different edge set.
    pub fn with_edges(&self, edges: &[(usize, usize)]) -> Result<Self> {
        Self::new(
            self.features.clone(),
            edges,
            self.labels.clone(),
            self.num_labels,
            self.splits.clone(),
        )
    }

    /// Same structure with a different feature matrix (row count must match).
    pub fn with_features(&self, features: Mat<T>) -> Result<Self> {
        if features.rows() != self.n() {
            return Err(Error::Graph(format!(
                "feature rows {} do not match node count {}",
                features.rows(),
                self.n()
            )));
        }
        let mut g = self.clone();
        g.features = features;
        Ok(g)
    }

    fn check_pair(&self, x: usize, y: usize) -> Result<()> {
        let n = self.n();
        if x >= n || y >= n {
            return Err(Error::Graph(format!("edge ({x}, {y}) references a node >= n = {n}")));
        }
        if x == y {
            return Err(Error::Graph(format!("self-loop on node {x}")));
        }
        Ok(())
    }

    fn insert(&mut self, x: usize, y: usize) {
        self.neighbors[x].insert(y);
        self.neighbors[y].insert(x);
        self.edge_count += 1;
    }

    fn remove(&mut self, x: usize, y: usize) {
        self.neighbors[x].remove(&y);
        self.neighbors[y].remove(&x);
        self.edge_count -= 1;
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Mat<T> {
        &self.features
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn has_edge(&self, x: usize, y: usize) -> bool {
        self.neighbors.get(x).is_some_and(|s| s.contains(&y))
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighbors[v].iter().copied()
    }

    /// Number of stored edges incident to `v` (no self-loop).
    pub fn degree(&self, v: usize) -> Result<usize> {
        self.neighbors
            .get(v)
            .map(BTreeSet::len)
            .ok_or_else(|| Error::Graph(format!("node {v} out of range (n = {})", self.n())))
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(BTreeSet::len).collect()
    }

    /// Edges as `(x, y)` with `x < y`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(x, s)| s.range(x + 1..).map(move |&y| (x, y)))
    }

    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        self.edges().collect()
    }

    /// Toggles the unordered pair `{x, y}` and reports what happened.
    pub fn apply_flip(&mut self, x: usize, y: usize) -> Result<FlipOp> {
        self.check_pair(x, y)?;
        if self.has_edge(x, y) {
            self.remove(x, y);
            Ok(FlipOp::Delete)
        } else {
            self.insert(x, y);
            Ok(FlipOp::Add)
        }
    }

    /// Copying variant of [`Graph::apply_flip`].
    pub fn flipped(&self, x: usize, y: usize) -> Result<Self> {
        let mut g = self.clone();
        g.apply_flip(x, y)?;
        Ok(g)
    }

    /// Dense symmetric 0/1 adjacency without self-loops.
    pub fn dense_adjacency(&self) -> Mat<T> {
        let n = self.n();
        let mut a = Mat::zeros(n, n);
        for (x, y) in self.edges() {
            a.set(x, y, T::one());
            a.set(y, x, T::one());
        }
        a
    }

    /// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
    pub fn normalize_adjacency(&self) -> Mat<T> {
        let n = self.n();
        let inv_sqrt: Vec<T> = self
            .neighbors
            .iter()
            .map(|s| T::one() / T::of((s.len() + 1) as f64).sqrt())
            .collect();
        let mut a = Mat::zeros(n, n);
        for i in 0..n {
            a.set(i, i, inv_sqrt[i] * inv_sqrt[i]);
        }
        for (x, y) in self.edges() {
            let w = inv_sqrt[x] * inv_sqrt[y];
            a.set(x, y, w);
            a.set(y, x, w);
        }
        a
    }

    /// Symmetric difference between the edge sets of two graphs on the same nodes.
    pub fn edge_difference(&self, other: &Self) -> Vec<(usize, usize)> {
        let a: BTreeSet<_> = self.edges().collect();
        let b: BTreeSet<_> = other.edges().collect();
        a.symmetric_difference(&b).copied().collect()
    }
}

/// Symmetric normalization of an arbitrary dense symmetric 0/1 adjacency.
pub fn normalize_dense<T: Scalar>(adj: &Mat<T>) -> Mat<T> {
    let n = adj.rows();
    let deg: Vec<T> = adj.row_sums().into_iter().map(|d| (d + T::one()).sqrt().recip()).collect();
    let mut out = adj.clone();
    for i in 0..n {
        out.set(i, i, adj.get(i, i) + T::one());
        for j in 0..n {
            let v = out.get(i, j);
            if v != T::zero() {
                out.set(i, j, v * deg[i] * deg[j]);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plain(n: usize, edges: &[(usize, usize)]) -> Graph<f64> {
        Graph::new(Mat::zeros(n, 1), edges, vec![None; n], 0, Splits::default()).unwrap()
    }

    #[test]
    fn isolated_and_single_edge_normalization() {
        assert_eq!(plain(1, &[]).normalize_adjacency(), Mat::identity(1));
        let a = plain(2, &[(0, 1)]).normalize_adjacency();
        for &v in a.data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn path_normalization_matches_direct_formula() {
        let g = plain(4, &[(0, 1), (1, 2), (2, 3)]);
        let a_hat = g.normalize_adjacency();
        // Direct D^-1/2 (A+I) D^-1/2 via dense matrix products.
        let mut a = g.dense_adjacency();
        for i in 0..4 {
            a.set(i, i, 1.0);
        }
        let mut d = Mat::zeros(4, 4);
        for (i, s) in a.row_sums().into_iter().enumerate() {
            d.set(i, i, 1.0 / s.sqrt());
        }
        let direct = d.matmul(&a).unwrap().matmul(&d).unwrap();
        for (x, y) in a_hat.data().iter().zip(direct.data()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert_eq!(a_hat, a_hat.transpose());
        assert_eq!(normalize_dense(&g.dense_adjacency()), a_hat);
    }

    #[test]
    fn degrees() {
        let g = plain(5, &[(0, 1), (0, 2), (0, 3)]);
        assert_eq!(g.degree(4).unwrap(), 0);
        assert_eq!(g.degree(0).unwrap(), 3);
        assert!(g.degree(5).is_err());
        assert_eq!(g.degrees().iter().sum::<usize>(), 2 * g.edge_count());
    }

    #[test]
    fn flips() {
        let mut g = plain(3, &[(0, 1)]);
        let orig = g.clone();
        assert_eq!(g.apply_flip(1, 0).unwrap(), FlipOp::Delete);
        assert_eq!(g.edge_count(), 0);
        assert_eq!(g.apply_flip(0, 1).unwrap(), FlipOp::Add);
        assert_eq!(g, orig);
        assert_eq!(g.apply_flip(0, 2).unwrap(), FlipOp::Add);
        assert_eq!(g.edge_count(), 2);
        assert!(g.has_edge(2, 0));
        assert!(g.apply_flip(1, 1).is_err());
    }

    #[test]
    fn construction_errors() {
        let f = Mat::<f64>::zeros(3, 1);
        assert!(Graph::new(f.clone(), &[(0, 0)], vec![None; 3], 0, Splits::default()).is_err());
        assert!(Graph::new(f.clone(), &[(0, 1), (1, 0)], vec![None; 3], 0, Splits::default()).is_err());
        assert!(Graph::new(f.clone(), &[(0, 3)], vec![None; 3], 0, Splits::default()).is_err());
        assert!(Graph::new(f.clone(), &[], vec![Some(2), None, None], 2, Splits::default()).is_err());
        let overlap = Splits { train: vec![0], test: vec![0], val: vec![] };
        assert!(Graph::new(f, &[], vec![None; 3], 0, overlap).is_err());
    }

    #[test]
    fn random_splits_partition_nodes() {
        let s = Splits::random(100, 0.1, 0.1, 3).unwrap();
        assert_eq!((s.train.len(), s.test.len(), s.val.len()), (10, 10, 80));
        s.validate(100).unwrap();
        assert_eq!(s, Splits::random(100, 0.1, 0.1, 3).unwrap());
    }
}
