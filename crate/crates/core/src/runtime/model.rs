//! Client encoders (GCN, GAT) and the server classifier.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{normalize_dense, Graph};
use crate::scalar::Scalar;
use crate::tensor::{glorot_uniform, Gradients, Mat, Param, Tape, Value};

/// Output width of every client encoder layer.
pub const EMBED_DIM: usize = 32;
pub const GAT_HEADS: usize = 2;
pub const GAT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gcn,
    Gat,
}

/// Anything holding trainable parameters in a fixed order.
pub trait Module<T: Scalar> {
    fn params(&self) -> Vec<&Param<T>>;
    fn params_mut(&mut self) -> Vec<&mut Param<T>>;

    /// Registers every parameter as a leaf on `tape`, in `params()` order.
    fn bind(&self, tape: &Tape<T>) -> Result<Vec<Value>> {
        self.params().into_iter().map(|p| tape.leaf(p.value.clone())).collect()
    }

    /// Registers every parameter as a constant (inference only).
    fn bind_frozen(&self, tape: &Tape<T>) -> Result<Vec<Value>> {
        self.params().into_iter().map(|p| tape.constant(p.value.clone())).collect()
    }

    /// Moves the gradients for `vars` (as returned by `bind`) into the parameters.
    fn store_grads(&mut self, grads: &mut Gradients<T>, vars: &[Value]) {
        for (p, &v) in self.params_mut().into_iter().zip(vars) {
            p.grad = grads.take(v);
        }
    }
}

/// Per-client encoder input: the local feature columns and the symmetric-
/// normalized local adjacency (whose non-zero pattern is `A + I`).
#[derive(Clone, Debug)]
pub struct ClientInput<T> {
    pub features: Mat<T>,
    pub a_hat: Mat<T>,
}

impl<T: Scalar> ClientInput<T> {
    pub fn from_graph(graph: &Graph<T>) -> Self {
        Self {
            features: graph.features().clone(),
            a_hat: graph.normalize_adjacency(),
        }
    }

    pub fn from_dense(features: Mat<T>, adjacency: &Mat<T>) -> Result<Self> {
        if adjacency.rows() != features.rows() || adjacency.cols() != features.rows() {
            return Err(Error::Dimension {
                op: "client_input",
                lhs: features.shape(),
                rhs: adjacency.shape(),
            });
        }
        Ok(Self {
            features,
            a_hat: normalize_dense(adjacency),
        })
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }
}

/// Differentiable `D̃^{-1/2} (A + I) D̃^{-1/2}`; the degrees are functions of
/// `adjacency`, so gradients flow through them as well.
pub fn normalize_on_tape<T: Scalar>(tape: &Tape<T>, adjacency: Value) -> Result<Value> {
    let n = tape.with_value(adjacency, |a| a.rows());
    let eye = tape.constant(Mat::identity(n))?;
    let a_tilde = tape.add(adjacency, eye)?;
    let deg = tape.row_sum(a_tilde)?;
    let inv_sqrt = tape.powf(deg, T::of(-0.5))?;
    let left = tape.scale_rows(a_tilde, inv_sqrt)?;
    let inv_sqrt_row = tape.transpose(inv_sqrt)?;
    tape.scale_cols(left, inv_sqrt_row)
}

/// Two-layer GCN: `Â · relu(Â · X · W0) · W1`.
pub fn gcn_forward<T: Scalar>(tape: &Tape<T>, a_hat: Value, x: Value, w0: Value, w1: Value) -> Result<Value> {
    let xw = tape.matmul(x, w0)?;
    let h1 = tape.relu(tape.matmul(a_hat, xw)?)?;
    let hw = tape.matmul(h1, w1)?;
    tape.matmul(a_hat, hw)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GcnModel<T> {
    pub w0: Param<T>,
    pub w1: Param<T>,
}

impl<T: Scalar> GcnModel<T> {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, hidden: usize, out: usize, rng: &mut R) -> Self {
        Self {
            w0: Param::new(glorot_uniform(in_dim, hidden, rng)),
            w1: Param::new(glorot_uniform(hidden, out, rng)),
        }
    }

    pub fn forward(&self, tape: &Tape<T>, a_hat: Value, x: Value, vars: &[Value]) -> Result<Value> {
        gcn_forward(tape, a_hat, x, vars[0], vars[1])
    }
}

impl<T: Scalar> Module<T> for GcnModel<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.w0, &self.w1]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.w0, &mut self.w1]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GatHead<T> {
    pub w: Param<T>,
    /// Attention weights applied to the target node's projection (column).
    pub a_self: Param<T>,
    /// Attention weights applied to the neighbour's projection (column).
    pub a_neigh: Param<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GatModel<T> {
    pub layers: Vec<Vec<GatHead<T>>>,
}

/// Attention coefficients `softmax_j(leaky_relu(a_selfᵀ W h_i + a_neighᵀ W h_j))`
/// over each node's neighbourhood (non-zero entries of `mask`, self included).
pub fn gat_attention<T: Scalar>(tape: &Tape<T>, projected: Value, a_self: Value, a_neigh: Value, mask: &Mat<T>) -> Result<Value> {
    let s_self = tape.matmul(projected, a_self)?;
    let s_neigh = tape.matmul(projected, a_neigh)?;
    let s_neigh_row = tape.transpose(s_neigh)?;
    let logits = tape.outer_sum(s_self, s_neigh_row)?;
    let logits = tape.leaky_relu(logits, T::of(GAT_LEAKY_SLOPE))?;
    tape.masked_row_softmax(logits, mask)
}

impl<T: Scalar> GatModel<T> {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, hidden: usize, out: usize, heads: usize, rng: &mut R) -> Self {
        let layer = |fan_in: usize, fan_out: usize, rng: &mut R| -> Vec<GatHead<T>> {
            (0..heads)
                .map(|_| GatHead {
                    w: Param::new(glorot_uniform(fan_in, fan_out, rng)),
                    a_self: Param::new(glorot_uniform(fan_out, 1, rng)),
                    a_neigh: Param::new(glorot_uniform(fan_out, 1, rng)),
                })
                .collect()
        };
        let first = layer(in_dim, hidden, rng);
        let second = layer(hidden, out, rng);
        Self {
            layers: vec![first, second],
        }
    }

    /// Two attention layers; head outputs are averaged, ReLU between layers.
    pub fn forward(&self, tape: &Tape<T>, mask: &Mat<T>, x: Value, vars: &[Value]) -> Result<Value> {
        let mut h = x;
        let mut vi = 0;
        for (li, heads) in self.layers.iter().enumerate() {
            let mut acc: Option<Value> = None;
            for _ in heads {
                let (w, a_self, a_neigh) = (vars[vi], vars[vi + 1], vars[vi + 2]);
                vi += 3;
                let projected = tape.matmul(h, w)?;
                let att = gat_attention(tape, projected, a_self, a_neigh, mask)?;
                let out = tape.matmul(att, projected)?;
                acc = Some(match acc {
                    None => out,
                    Some(prev) => tape.add(prev, out)?,
                });
            }
            let sum = acc.ok_or_else(|| Error::invalid("GAT layer without heads"))?;
            h = tape.scale(sum, T::one() / T::of(heads.len() as f64))?;
            if li + 1 < self.layers.len() {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }
}

impl<T: Scalar> Module<T> for GatModel<T> {
    fn params(&self) -> Vec<&Param<T>> {
        self.layers
            .iter()
            .flatten()
            .flat_map(|h| [&h.w, &h.a_self, &h.a_neigh])
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers
            .iter_mut()
            .flatten()
            .flat_map(|h| [&mut h.w, &mut h.a_self, &mut h.a_neigh])
            .collect()
    }
}

/// One client's local encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", tag = "kind", rename_all = "lowercase")]
pub enum ClientModel<T> {
    Gcn(GcnModel<T>),
    Gat(GatModel<T>),
}

impl<T: Scalar> ClientModel<T> {
    pub fn new<R: Rng + ?Sized>(kind: ModelKind, in_dim: usize, rng: &mut R) -> Self {
        match kind {
            ModelKind::Gcn => ClientModel::Gcn(GcnModel::new(in_dim, EMBED_DIM, EMBED_DIM, rng)),
            ModelKind::Gat => ClientModel::Gat(GatModel::new(in_dim, EMBED_DIM, EMBED_DIM, GAT_HEADS, rng)),
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ClientModel::Gcn(_) => ModelKind::Gcn,
            ClientModel::Gat(_) => ModelKind::Gat,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.params()[0].value.rows()
    }

    /// n x 32 node embedding for this client's shard.
    pub fn forward(&self, tape: &Tape<T>, input: &ClientInput<T>, vars: &[Value]) -> Result<Value> {
        if input.features.cols() != self.input_dim() {
            return Err(Error::Dimension {
                op: "client_forward",
                lhs: input.features.shape(),
                rhs: (self.input_dim(), EMBED_DIM),
            });
        }
        let x = tape.constant(input.features.clone())?;
        match self {
            ClientModel::Gcn(m) => {
                let a_hat = tape.constant(input.a_hat.clone())?;
                m.forward(tape, a_hat, x, vars)
            }
            ClientModel::Gat(m) => {
                let mask = input.a_hat.map(|v| if v != T::zero() { T::one() } else { T::zero() });
                m.forward(tape, &mask, x, vars)
            }
        }
    }
}

impl<T: Scalar> Module<T> for ClientModel<T> {
    fn params(&self) -> Vec<&Param<T>> {
        match self {
            ClientModel::Gcn(m) => m.params(),
            ClientModel::Gat(m) => m.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            ClientModel::Gcn(m) => m.params_mut(),
            ClientModel::Gat(m) => m.params_mut(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Linear<T> {
    pub w: Param<T>,
    pub b: Param<T>,
}

/// Server classifier over the concatenated client embeddings: optional ReLU
/// hidden layers followed by a linear output layer producing logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ServerModel<T> {
    pub layers: Vec<Linear<T>>,
}

impl<T: Scalar> ServerModel<T> {
    pub fn new<R: Rng + ?Sized>(input_dim: usize, hidden: &[usize], num_labels: usize, rng: &mut R) -> Self {
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(num_labels);
        let layers = dims
            .windows(2)
            .map(|w| Linear {
                w: Param::new(glorot_uniform(w[0], w[1], rng)),
                b: Param::new(Mat::zeros(1, w[1])),
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.value.rows()
    }

    pub fn forward(&self, tape: &Tape<T>, h_global: Value, vars: &[Value]) -> Result<Value> {
        let mut h = h_global;
        for (i, pair) in vars.chunks(2).enumerate() {
            h = tape.add_row_vector(tape.matmul(h, pair[0])?, pair[1])?;
            if i + 1 < self.layers.len() {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }
}

impl<T: Scalar> Module<T> for ServerModel<T> {
    fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(|l| [&l.w, &l.b]).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(|l| [&mut l.w, &mut l.b]).collect()
    }
}
