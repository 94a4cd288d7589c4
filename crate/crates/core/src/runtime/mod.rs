//! The federation simulation: client encoders, server classifier, joint
//! training and evaluation.

mod metrics;
mod model;
mod train;

pub use metrics::{argmax, MetricsReport, LOG_LOSS_CLAMP};
pub use model::{
    gat_attention, gcn_forward, normalize_on_tape, ClientInput, ClientModel, GatHead, GatModel, GcnModel, Linear,
    ModelKind, Module, ServerModel, EMBED_DIM, GAT_HEADS, GAT_LEAKY_SLOPE,
};
pub use train::{
    concat_embeddings, evaluate, federated_gradients, train_vgfl, training_loss, TrainConfig, TrainReport, VgflModel,
};
