use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Mat, Tape, Value};

/// Normalized-temperature cross-entropy between two node-aligned views.
///
/// Rows are L2-normalized and stacked into 2n embeddings. For each anchor the
/// positive is the same node in the other view and the remaining 2n - 2
/// embeddings are negatives; the loss is
/// `-ln(exp(sim⁺/τ) / Σ_{k≠anchor} exp(sim_k/τ))`, averaged over all 2n anchors.
pub fn contrastive_loss<T: Scalar>(tape: &Tape<T>, z1: Value, z2: Value, tau: T) -> Result<Value> {
    let (s1, s2) = (tape.with_value(z1, Mat::shape), tape.with_value(z2, Mat::shape));
    if s1 != s2 {
        return Err(Error::Dimension {
            op: "contrastive_loss",
            lhs: s1,
            rhs: s2,
        });
    }
    let n = s1.0;
    if n < 2 {
        return Err(Error::invalid("contrastive loss needs at least two nodes"));
    }
    if tau <= T::zero() {
        return Err(Error::invalid("contrastive temperature must be positive"));
    }
    let u1 = tape.row_normalize_l2(z1)?;
    let u2 = tape.row_normalize_l2(z2)?;
    let stacked = tape.concat_rows(&[u1, u2])?;
    let stacked_t = tape.transpose(stacked)?;
    let sim = tape.scale(tape.matmul(stacked, stacked_t)?, T::one() / tau)?;
    let mut not_self = Mat::filled(2 * n, 2 * n, T::one());
    for i in 0..2 * n {
        not_self.set(i, i, T::zero());
    }
    let probs = tape.masked_row_softmax(sim, &not_self)?;
    let positives: Vec<usize> = (0..2 * n).map(|i| if i < n { i + n } else { i - n }).collect();
    let pos = tape.gather(probs, &positives)?;
    let nll = tape.scale(tape.log(pos)?, -T::one())?;
    tape.mean(nll)
}
