use rand::seq::SliceRandom;

use cdds_compute::rng;

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Reshuffled every epoch from `(seed, epoch)`.
    Train,
    /// Fixed input order.
    Eval,
}

/// Splits `indices` into batches of `batch_size`; the last may be shorter.
pub fn batches(indices: &[usize], batch_size: usize, seed: u64, epoch: u64, role: Role) -> Result<Vec<Vec<usize>>> {
    if indices.is_empty() {
        return Err(CoreError::EmptySelection);
    }
    if batch_size == 0 {
        return Err(CoreError::Invalid("batch size must be positive".into()));
    }
    let mut order = indices.to_vec();
    if role == Role::Train {
        order.shuffle(&mut rng::indexed_stream(seed, rng::SHUFFLE, epoch));
    }
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}
