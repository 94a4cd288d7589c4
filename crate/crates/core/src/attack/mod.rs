//! Structure poisoning attacks on a single client shard: the contrastive
//! label-free attack and the Random / DICE baselines. Every attack emits a
//! [`PerturbationPlan`] bounded by the same budget `floor(alpha * m)`.

mod augment;
mod baselines;
mod contrastive;
mod vgflsa;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use augment::{
    addition_prob, edge_importance, feature_shuffle, removal_prob, sample_edge_augmentation, sample_non_edges,
    AugmentParams, EdgeStats,
};
pub use baselines::{dice_attack, random_attack, BaselineConfig};
pub use contrastive::contrastive_loss;
pub use vgflsa::{
    adjacency_gradient, combine_gradients, encoder_step, run_attack, sample_views, select_flip, AttackConfig, ViewPair,
};

use crate::error::{Error, Result};
use crate::graph::{FlipOp, Graph, PerturbationPlan};

/// `floor(alpha * m)`; a zero budget is a configuration error.
pub fn budget(alpha: f64, m: usize) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config("attack.alpha", format!("{alpha} not in (0, 1)")));
    }
    let delta = (alpha * m as f64).floor() as usize;
    if delta == 0 {
        return Err(Error::config(
            "attack.alpha",
            format!("budget floor({alpha} * {m}) is zero; the shard is too small for this alpha"),
        ));
    }
    Ok(delta)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    None,
    Random,
    Dice,
    #[serde(rename = "vgfl-sa")]
    VgflSa,
}

impl AttackKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::None => "none",
            AttackKind::Random => "random",
            AttackKind::Dice => "dice",
            AttackKind::VgflSa => "vgfl-sa",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AttackKind::None),
            "random" => Ok(AttackKind::Random),
            "dice" => Ok(AttackKind::Dice),
            "vgfl-sa" | "vgflsa" => Ok(AttackKind::VgflSa),
            other => Err(Error::config("attack.kind", format!("unknown attack '{other}'"))),
        }
    }
}

/// One flip as recorded in the per-round trace. Baselines have no gradient
/// or encoder loss.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub round: usize,
    pub x: usize,
    pub y: usize,
    pub op: FlipOp,
    pub abs_grad: Option<f64>,
    pub encoder_loss: Option<f64>,
}

impl TraceRow {
    pub const CSV_HEADER: &'static str = "round,x,y,op,abs_grad,encoder_loss";

    pub fn csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| format!("{v}")).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.round,
            self.x,
            self.y,
            self.op,
            opt(self.abs_grad),
            opt(self.encoder_loss)
        )
    }
}

#[derive(Clone, Debug)]
pub struct AttackOutcome<T> {
    pub plan: PerturbationPlan,
    pub trace: Vec<TraceRow>,
    pub perturbed: Graph<T>,
    /// Encoder loss per inner epoch, one vector per round (empty for baselines).
    pub inner_losses: Vec<Vec<f64>>,
}
