//! Dense matrix algebra, reverse-mode differentiation and the Adam optimizer.

mod adam;
mod init;
mod matrix;
mod tape;

pub use adam::{Adam, AdamConfig, Param};
pub use init::glorot_uniform;
pub use matrix::Mat;
pub use tape::{Gradients, Tape, Value};

pub(crate) use tape::softmax_rows;



#[cfg(test)]
mod gradcheck;
