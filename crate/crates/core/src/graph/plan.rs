use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ordered, Graph};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlipOp {
    #[serde(rename = "add")]
    Add,
    #[serde(rename = "del")]
    Delete,
}

impl FlipOp {
    pub fn as_str(self) -> &'static str {
        match self {
            FlipOp::Add => "add",
            FlipOp::Delete => "del",
        }
    }
}

impl std::fmt::Display for FlipOp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Flip {
    pub x: usize,
    pub y: usize,
    pub op: FlipOp,
}

/// Ordered edge flips produced by one attack on one client shard.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerturbationPlan {
    pub budget: usize,
    pub client: usize,
    pub flips: Vec<Flip>,
}

impl PerturbationPlan {
    pub fn new(budget: usize, client: usize) -> Self {
        Self {
            budget,
            client,
            flips: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.flips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flips.is_empty()
    }

    pub fn adds(&self) -> usize {
        self.flips.iter().filter(|f| f.op == FlipOp::Add).count()
    }

    pub fn deletes(&self) -> usize {
        self.flips.len() - self.adds()
    }

    /// Applies the flips in order, checking every plan invariant: the budget,
    /// no self-loops, no repeated pair, and each op matching the edge state at
    /// its application time.
    pub fn apply<T: Scalar>(&self, graph: &Graph<T>) -> Result<Graph<T>> {
        if self.flips.len() > self.budget {
            return Err(Error::Graph(format!(
                "plan has {} flips but budget {}",
                self.flips.len(),
                self.budget
            )));
        }
        let mut g = graph.clone();
        let mut seen = BTreeSet::new();
        for (i, f) in self.flips.iter().enumerate() {
            if !seen.insert(ordered(f.x, f.y)) {
                return Err(Error::Graph(format!("flip {i}: pair ({}, {}) flipped twice", f.x, f.y)));
            }
            let done = g
                .apply_flip(f.x, f.y)
                .map_err(|e| Error::Graph(format!("flip {i}: {e}")))?;
            if done != f.op {
                return Err(Error::Graph(format!(
                    "flip {i}: {:?} requested on ({}, {}) but the pair's state implies {:?}",
                    f.op, f.x, f.y, done
                )));
            }
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Splits;
    use crate::tensor::Mat;

    fn triangle_minus_one() -> Graph<f64> {
        Graph::new(Mat::zeros(3, 1), &[(0, 1), (1, 2)], vec![None; 3], 0, Splits::default()).unwrap()
    }

    #[test]
    fn apply_checks_invariants() {
        let g = triangle_minus_one();
        let mut plan = PerturbationPlan::new(2, 0);
        plan.flips.push(Flip { x: 0, y: 2, op: FlipOp::Add });
        plan.flips.push(Flip { x: 1, y: 0, op: FlipOp::Delete });
        let out = plan.apply(&g).unwrap();
        assert_eq!(out.edge_list(), vec![(0, 2), (1, 2)]);
        assert_eq!(g.edge_difference(&out).len(), plan.len());

        let mut over = plan.clone();
        over.budget = 1;
        assert!(over.apply(&g).is_err());

        let mut wrong_op = PerturbationPlan::new(1, 0);
        wrong_op.flips.push(Flip { x: 0, y: 1, op: FlipOp::Add });
        assert!(wrong_op.apply(&g).is_err());

        let mut repeat = PerturbationPlan::new(3, 0);
        repeat.flips.push(Flip { x: 0, y: 2, op: FlipOp::Add });
        repeat.flips.push(Flip { x: 2, y: 0, op: FlipOp::Delete });
        assert!(repeat.apply(&g).is_err());
    }

    #[test]
    fn json_shape() {
        let mut plan = PerturbationPlan::new(5, 1);
        plan.flips.push(Flip { x: 3, y: 7, op: FlipOp::Delete });
        let s = serde_json::to_string(&plan).unwrap();
        assert_eq!(s, r#"{"budget":5,"client":1,"flips":[{"x":3,"y":7,"op":"del"}]}"#);
    }
}
