//! Joint training of client encoders and the server classifier.
//!
//! Each epoch mirrors the federation protocol: every client runs its encoder
//! on its own tape and uploads the n x 32 embedding; the server concatenates
//! the embeddings in client order, computes the cross-entropy on the training
//! nodes and sends each client the gradient of its embedding block; clients
//! finish the backward pass locally. One Adam step then updates all parameters.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Splits;
use crate::runtime::metrics::{argmax, MetricsReport};
use crate::runtime::model::{ClientInput, ClientModel, ModelKind, Module, ServerModel, EMBED_DIM};
use crate::scalar::Scalar;
use crate::tensor::{softmax_rows, Adam, AdamConfig, Mat, Param, Tape, Value};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct VgflModel<T> {
    pub clients: Vec<ClientModel<T>>,
    pub server: ServerModel<T>,
}

impl<T: Scalar> VgflModel<T> {
    /// Fresh model for clients with the given local feature widths.
    pub fn new(kind: ModelKind, input_dims: &[usize], num_labels: usize, server_hidden: &[usize], seed: u64) -> Result<Self> {
        if input_dims.is_empty() {
            return Err(Error::invalid("VGFL model needs at least one client"));
        }
        if num_labels == 0 {
            return Err(Error::invalid("VGFL model needs at least one class"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clients = input_dims.iter().map(|&d| ClientModel::new(kind, d, &mut rng)).collect();
        let server = ServerModel::new(EMBED_DIM * input_dims.len(), server_hidden, num_labels, &mut rng);
        Ok(Self { clients, server })
    }

    pub fn num_labels(&self) -> usize {
        self.server.layers.last().expect("server has a layer").w.value.cols()
    }

    /// Every parameter: clients in order, then the server.
    pub fn all_params(&self) -> Vec<&Param<T>> {
        let mut out: Vec<&Param<T>> = self.clients.iter().flat_map(|c| c.params()).collect();
        out.extend(self.server.params());
        out
    }

    pub fn all_params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out: Vec<&mut Param<T>> = self.clients.iter_mut().flat_map(|c| c.params_mut()).collect();
        out.extend(self.server.params_mut());
        out
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string(self).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    fn check_inputs(&self, inputs: &[ClientInput<T>]) -> Result<usize> {
        if inputs.len() != self.clients.len() {
            return Err(Error::invalid(format!(
                "{} client inputs for {} client models",
                inputs.len(),
                self.clients.len()
            )));
        }
        let n = inputs[0].n();
        if inputs.iter().any(|i| i.n() != n) {
            return Err(Error::invalid("client inputs disagree on the node count"));
        }
        Ok(n)
    }

    /// Server-side softmax probabilities (n x |L|) with frozen parameters.
    pub fn predict_proba(&self, inputs: &[ClientInput<T>]) -> Result<Mat<T>> {
        self.check_inputs(inputs)?;
        let embeddings: Vec<Mat<T>> = self
            .clients
            .par_iter()
            .zip(inputs.par_iter())
            .map(|(model, input)| {
                let tape = Tape::new();
                let vars = model.bind_frozen(&tape)?;
                let z = model.forward(&tape, input, &vars)?;
                Ok(tape.value(z))
            })
            .collect::<Result<_>>()?;
        let tape = Tape::new();
        let parts = embeddings
            .into_iter()
            .map(|e| tape.constant(e))
            .collect::<Result<Vec<_>>>()?;
        let h = concat_embeddings(&tape, &parts)?;
        let vars = self.server.bind_frozen(&tape)?;
        let logits = self.server.forward(&tape, h, &vars)?;
        Ok(tape.with_value(logits, |l| softmax_rows(l, None)))
    }
}

/// Column-wise concatenation of client embeddings in client order.
pub fn concat_embeddings<T: Scalar>(tape: &Tape<T>, embeddings: &[Value]) -> Result<Value> {
    tape.concat_cols(embeddings)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Stop after this many epochs without a validation-accuracy improvement
    /// and restore the best parameters; `None` trains for all epochs.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 0.001,
            patience: Some(30),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Training loss before each epoch's update.
    pub loss_curve: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_accuracy: Option<f64>,
}

fn labeled(nodes: &[usize], labels: &[Option<usize>]) -> Vec<usize> {
    nodes.iter().copied().filter(|&v| labels.get(v).copied().flatten().is_some()).collect()
}

struct EpochOutput<T> {
    loss: f64,
    logits: Mat<T>,
}

/// One round of the federated protocol without the optimizer step: clients
/// upload embeddings, the server computes the loss and returns each client
/// the gradient of its embedding block; every parameter's `grad` is filled.
fn exchange<T: Scalar>(
    model: &mut VgflModel<T>,
    inputs: &[ClientInput<T>],
    dense_labels: &[usize],
    train: &[usize],
) -> Result<EpochOutput<T>> {
    // Clients: local forward, upload embeddings.
    let client_runs: Vec<(Tape<T>, Vec<Value>, Value, Mat<T>)> = model
        .clients
        .par_iter()
        .zip(inputs.par_iter())
        .map(|(m, input)| {
            let tape = Tape::new();
            let vars = m.bind(&tape)?;
            let z = m.forward(&tape, input, &vars)?;
            let payload = tape.value(z);
            Ok((tape, vars, z, payload))
        })
        .collect::<Result<_>>()?;

    // Server: concatenate, classify, loss, backward.
    let server_tape = Tape::new();
    let uploaded = client_runs
        .iter()
        .map(|(_, _, _, payload)| server_tape.leaf(payload.clone()))
        .collect::<Result<Vec<_>>>()?;
    let h = concat_embeddings(&server_tape, &uploaded)?;
    let server_vars = model.server.bind(&server_tape)?;
    let logits = model.server.forward(&server_tape, h, &server_vars)?;
    let loss = server_tape.cross_entropy(logits, dense_labels, train)?;
    let mut server_grads = server_tape.backward(loss)?;
    model.server.store_grads(&mut server_grads, &server_vars);
    let returned: Vec<Mat<T>> = uploaded
        .iter()
        .map(|&u| server_grads.take(u).ok_or(Error::MissingGradient { index: u.id() }))
        .collect::<Result<_>>()?;

    // Clients: finish backward with the returned embedding gradients.
    model
        .clients
        .par_iter_mut()
        .zip(client_runs.into_par_iter())
        .zip(returned.into_par_iter())
        .try_for_each(|((m, (tape, vars, z, _)), g)| -> Result<()> {
            let mut grads = tape.backward_from(z, g)?;
            m.store_grads(&mut grads, &vars);
            Ok(())
        })?;

    Ok(EpochOutput {
        loss: server_tape.scalar(loss).as_f64(),
        logits: server_tape.value(logits),
    })
}

fn train_step<T: Scalar>(
    model: &mut VgflModel<T>,
    inputs: &[ClientInput<T>],
    dense_labels: &[usize],
    train: &[usize],
    adam: &mut Adam<T>,
) -> Result<EpochOutput<T>> {
    let out = exchange(model, inputs, dense_labels, train)?;
    adam.step(&mut model.all_params_mut())?;
    Ok(out)
}

/// Training loss on `train` and its gradient for every parameter (in
/// [`VgflModel::all_params`] order), computed through the client/server
/// exchange. Parameters are left unchanged.
pub fn federated_gradients<T: Scalar>(
    model: &mut VgflModel<T>,
    inputs: &[ClientInput<T>],
    labels: &[usize],
    train: &[usize],
) -> Result<(f64, Vec<Mat<T>>)> {
    model.check_inputs(inputs)?;
    let out = exchange(model, inputs, labels, train)?;
    let grads = model
        .all_params_mut()
        .into_iter()
        .enumerate()
        .map(|(i, p)| p.grad.take().ok_or(Error::MissingGradient { index: i }))
        .collect::<Result<_>>()?;
    Ok((out.loss, grads))
}

/// Mean cross-entropy on `train` with frozen parameters.
pub fn training_loss<T: Scalar>(
    model: &VgflModel<T>,
    inputs: &[ClientInput<T>],
    labels: &[usize],
    train: &[usize],
) -> Result<f64> {
    let probs = model.predict_proba(inputs)?;
    if train.is_empty() {
        return Err(Error::invalid("empty train mask"));
    }
    let mut total = 0.0;
    for &v in train {
        let y = *labels.get(v).ok_or_else(|| Error::invalid(format!("node {v} has no label")))?;
        total -= probs.get(v, y).as_f64().ln();
    }
    Ok(total / train.len() as f64)
}

fn accuracy_from_logits<T: Scalar>(logits: &Mat<T>, labels: &[Option<usize>], nodes: &[usize]) -> f64 {
    let correct = nodes
        .iter()
        .filter(|&&v| {
            let row: Vec<f64> = logits.row(v).iter().map(|x| x.as_f64()).collect();
            Some(argmax(&row)) == labels[v]
        })
        .count();
    correct as f64 / nodes.len() as f64
}

/// Full-batch joint training minimizing the mean cross-entropy on the
/// labelled training nodes.
pub fn train_vgfl<T: Scalar>(
    model: &mut VgflModel<T>,
    inputs: &[ClientInput<T>],
    labels: &[Option<usize>],
    splits: &Splits,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let n = model.check_inputs(inputs)?;
    if labels.len() != n {
        return Err(Error::invalid(format!("{} labels for {n} nodes", labels.len())));
    }
    let train = labeled(&splits.train, labels);
    if train.is_empty() {
        return Err(Error::invalid("empty train mask"));
    }
    let val = labeled(&splits.val, labels);
    let dense_labels: Vec<usize> = labels.iter().map(|l| l.unwrap_or(0)).collect();
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr));

    let mut report = TrainReport {
        loss_curve: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
        best_val_accuracy: None,
    };
    let mut best: Option<VgflModel<T>> = None;
    for epoch in 0..cfg.epochs {
        let snapshot = cfg.patience.is_some().then(|| model.clone());
        let out = train_step(model, inputs, &dense_labels, &train, &mut adam)?;
        report.loss_curve.push(out.loss);
        if let (Some(patience), Some(snapshot)) = (cfg.patience, snapshot) {
            if val.is_empty() {
                continue;
            }
            let acc = accuracy_from_logits(&out.logits, labels, &val);
            if report.best_val_accuracy.is_none_or(|b| acc > b) {
                report.best_val_accuracy = Some(acc);
                report.best_epoch = epoch;
                best = Some(snapshot);
            } else if epoch - report.best_epoch >= patience {
                break;
            }
        }
    }
    if let Some(best) = best {
        *model = best;
    } else {
        report.best_epoch = report.loss_curve.len().saturating_sub(1);
    }
    Ok(report)
}

/// Metrics of the server predictions on `mask` (unlabelled nodes are an error).
pub fn evaluate<T: Scalar>(
    model: &VgflModel<T>,
    inputs: &[ClientInput<T>],
    labels: &[Option<usize>],
    mask: &[usize],
) -> Result<MetricsReport> {
    if mask.is_empty() {
        return Err(Error::invalid("evaluation mask is empty"));
    }
    let probs = model.predict_proba(inputs)?;
    let mut truth = Vec::with_capacity(mask.len());
    for &v in mask {
        match labels.get(v).copied().flatten() {
            Some(y) => truth.push(y),
            None => return Err(Error::invalid(format!("node {v} in evaluation mask has no label"))),
        }
    }
    MetricsReport::compute(&truth, &probs.select_rows(mask)?)
}
