//! Experiment configuration file (JSON; unknown keys are rejected).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attack::{AttackConfig, AttackKind, BaselineConfig};
use crate::error::{Error, Result};
use crate::graph::SbmConfig;
use crate::partition::ratios_with_first;
use crate::runtime::{ModelKind, TrainConfig, EMBED_DIM};

/// Where the graph comes from: a dataset directory (relative paths resolve
/// against the config file) or a stochastic block model drawn per run seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    Path(PathBuf),
    Sbm(SbmConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionSpec {
    #[serde(rename = "K")]
    pub k: usize,
    /// Explicit per-client ratios; overrides `first_ratio`.
    pub ratios: Option<Vec<f64>>,
    /// Data ratio of client 0, the rest shared equally. `None` means equal shares.
    pub first_ratio: Option<f64>,
    pub seed: u64,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self {
            k: 5,
            ratios: None,
            first_ratio: None,
            seed: 0,
        }
    }
}

impl PartitionSpec {
    pub fn resolved_ratios(&self) -> Result<Vec<f64>> {
        if let Some(r) = &self.ratios {
            return Ok(r.clone());
        }
        let first = self.first_ratio.unwrap_or(1.0 / self.k.max(1) as f64);
        ratios_with_first(self.k, first).map_err(|e| Error::config("partition.first_ratio", e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSpec {
    pub epochs: usize,
    pub lr: f64,
    pub patience: Option<usize>,
    /// Re-split nodes per run seed with these fractions (validation takes the
    /// rest). Both absent: use the dataset's own splits.
    pub train_frac: Option<f64>,
    pub test_frac: Option<f64>,
    /// Widths of ReLU hidden layers in the server classifier.
    pub server_hidden: Vec<usize>,
}

impl Default for TrainSpec {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            lr: t.lr,
            patience: t.patience,
            train_frac: None,
            test_frac: None,
            server_hidden: Vec::new(),
        }
    }
}

impl TrainSpec {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            patience: self.patience,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackSpec {
    pub kind: AttackKind,
    pub alpha: f64,
    /// Poisoned client ids.
    pub poisoned: Vec<usize>,
    pub seed: u64,
    pub inner_epochs: usize,
    pub tau: f64,
    pub p_scale: f64,
    pub p_add_rate: f64,
    pub encoder_lr: f64,
    pub reinit_each_round: bool,
    pub dice_delete_ratio: f64,
}

impl Default for AttackSpec {
    fn default() -> Self {
        let a = AttackConfig::default();
        Self {
            kind: AttackKind::VgflSa,
            alpha: a.alpha,
            poisoned: vec![0, 1],
            seed: 0,
            inner_epochs: a.inner_epochs,
            tau: a.tau,
            p_scale: a.p_scale,
            p_add_rate: a.p_add_rate,
            encoder_lr: a.lr,
            reinit_each_round: a.reinit_each_round,
            dice_delete_ratio: BaselineConfig::default().dice_delete_ratio,
        }
    }
}

impl AttackSpec {
    pub fn vgfl_sa(&self, seed: u64) -> AttackConfig {
        AttackConfig {
            alpha: self.alpha,
            inner_epochs: self.inner_epochs,
            tau: self.tau,
            p_scale: self.p_scale,
            p_add_rate: self.p_add_rate,
            hidden_dim: EMBED_DIM,
            embed_dim: EMBED_DIM,
            lr: self.encoder_lr,
            reinit_each_round: self.reinit_each_round,
            seed,
        }
    }

    pub fn baseline(&self, seed: u64) -> BaselineConfig {
        BaselineConfig {
            alpha: self.alpha,
            seed,
            dice_delete_ratio: self.dice_delete_ratio,
        }
    }
}

/// Axes of a parameter sweep; empty axes are not swept.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepAxes {
    pub alpha: Vec<f64>,
    #[serde(rename = "K")]
    pub k: Vec<usize>,
    /// Number of poisoned clients; a value `k'` poisons clients `0..k'`.
    #[serde(rename = "K_prime")]
    pub k_prime: Vec<usize>,
    /// Data ratio of client 0 (which is always poisoned in such cells).
    pub poisoned_ratio: Vec<f64>,
}

impl SweepAxes {
    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty() && self.k.is_empty() && self.k_prime.is_empty() && self.poisoned_ratio.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub partition: PartitionSpec,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    #[serde(default)]
    pub train: TrainSpec,
    #[serde(default)]
    pub attack: AttackSpec,
    #[serde(default)]
    pub sweep: SweepAxes,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Directory that relative dataset paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_model() -> ModelKind {
    ModelKind::Gcn
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

impl ExperimentConfig {
    pub fn from_sbm(sbm: SbmConfig) -> Self {
        Self {
            dataset: DatasetSpec::Sbm(sbm),
            partition: PartitionSpec::default(),
            model: default_model(),
            train: TrainSpec::default(),
            attack: AttackSpec::default(),
            sweep: SweepAxes::default(),
            seeds: default_seeds(),
            base_dir: PathBuf::new(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self =
            serde_json::from_str(&text).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()
            .map_err(|e| match e {
                Error::Config { path: field, msg } => Error::config(format!("{}: {field}", path.display()), msg),
                other => other,
            })?;
        Ok(cfg)
    }

    pub fn dataset_path(&self) -> Option<PathBuf> {
        match &self.dataset {
            DatasetSpec::Path(p) if p.is_relative() => Some(self.base_dir.join(p)),
            DatasetSpec::Path(p) => Some(p.clone()),
            DatasetSpec::Sbm(_) => None,
        }
    }

    /// Checks everything that can be checked without the data.
    pub fn validate(&self) -> Result<()> {
        let k = self.partition.k;
        if k == 0 {
            return Err(Error::config("partition.K", "must be at least 1"));
        }
        if let Some(r) = &self.partition.ratios {
            if r.len() != k {
                return Err(Error::config("partition.ratios", format!("{} ratios for K = {k}", r.len())));
            }
            if r.iter().any(|&x| !(x > 0.0)) || (r.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::config("partition.ratios", "ratios must be positive and sum to 1"));
            }
        }
        self.partition.resolved_ratios()?;
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "at least one seed is required"));
        }
        if self.train.epochs == 0 {
            return Err(Error::config("train.epochs", "must be at least 1"));
        }
        if !(self.train.lr > 0.0) {
            return Err(Error::config("train.lr", "must be positive"));
        }
        if self.train.train_frac.is_some() != self.train.test_frac.is_some() {
            return Err(Error::config("train", "train_frac and test_frac must be given together"));
        }
        if let DatasetSpec::Sbm(sbm) = &self.dataset {
            if sbm.blocks.is_empty() || sbm.blocks.contains(&0) {
                return Err(Error::config("dataset.sbm.blocks", "need at least one non-empty block"));
            }
        }
        let a = &self.attack;
        if a.kind != AttackKind::None {
            if a.poisoned.is_empty() {
                return Err(Error::config("attack.poisoned", "no poisoned clients"));
            }
            if let Some(&bad) = a.poisoned.iter().find(|&&c| c >= k) {
                return Err(Error::config("attack.poisoned", format!("client {bad} not in [0, {k})")));
            }
            let mut sorted = a.poisoned.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != a.poisoned.len() {
                return Err(Error::config("attack.poisoned", "duplicate client id"));
            }
            match a.kind {
                AttackKind::VgflSa => a.vgfl_sa(0).validate()?,
                _ => a.baseline(0).validate()?,
            }
        }
        let s = &self.sweep;
        if s.alpha.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
            return Err(Error::config("sweep.alpha", "values must lie in (0, 1)"));
        }
        if s.k.contains(&0) {
            return Err(Error::config("sweep.K", "values must be at least 1"));
        }
        if s.k_prime.contains(&0) {
            return Err(Error::config("sweep.K_prime", "values must be at least 1"));
        }
        if s.poisoned_ratio.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
            return Err(Error::config("sweep.poisoned_ratio", "values must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Short hex digest of the canonical JSON form (sorted keys) of the
    /// configuration, excluding the seed list and sweep axes.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.seeds.clear();
        canon.sweep = SweepAxes::default();
        let value = serde_json::to_value(&canon).expect("config serializes");
        let digest = Sha256::digest(value.to_string().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}
