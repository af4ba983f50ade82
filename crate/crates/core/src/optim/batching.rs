use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// A training example: one record paired with one of its captions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchItem {
    pub record: usize,
    pub caption: usize,
}

/// Shuffles the records, samples one caption each, and cuts full batches;
/// the short tail is dropped.
pub fn make_batches(caption_counts: &[usize], batch_size: usize, rng: &mut Rng) -> Result<Vec<Vec<BatchItem>>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    if caption_counts.len() < batch_size {
        return Err(Error::invalid(format!(
            "{} training records cannot fill a batch of {batch_size}",
            caption_counts.len()
        )));
    }
    if let Some(r) = caption_counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!("record {r} has no captions")));
    }
    let mut order: Vec<usize> = (0..caption_counts.len()).collect();
    rng.shuffle(&mut order);
    let items: Vec<BatchItem> = order
        .into_iter()
        .map(|record| BatchItem {
            record,
            caption: rng.below(caption_counts[record]),
        })
        .collect();
    Ok(items.chunks_exact(batch_size).map(<[BatchItem]>::to_vec).collect())
}
