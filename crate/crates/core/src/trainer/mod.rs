//! Desk-scale metric learning for the embedding head.

mod checkpoint;
mod data;
mod loss;
mod matrix;
mod model;
mod optim;
mod train;

use std::path::Path;

pub use checkpoint::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use data::Dataset;
pub use loss::{
    batch_loss, loss_and_embedding_grad, loss_gradient, mine_semi_hard, pairwise_sq_dists,
    triplet_semi_hard_loss, MinedTriplet, TripletBatchState,
};
pub use matrix::Matrix;
pub use model::{Dense, EmbeddingModel, Gradients, LayerGrads};
pub use optim::{sgd_momentum_step, stepped_lr, SgdMomentum};
pub use train::{
    lr_at, split_indices, train, write_log_csv, StopReason, TrainLogRow, TrainOutcome, TrainerConfig,
    LOG_HEADER,
};

use crate::emb1::{self, EmbeddingRecord};
use crate::error::Result;

/// Embeds the selected samples (all when `indices` is `None`). Record ids are the
/// samples' ordinals in `dataset`.
pub fn export_embeddings(
    model: &EmbeddingModel,
    dataset: &Dataset,
    indices: Option<&[usize]>,
    timestamp: u64,
) -> Result<Vec<EmbeddingRecord>> {
    let all: Vec<usize>;
    let indices = match indices {
        Some(i) => i,
        None => {
            all = (0..dataset.len()).collect();
            &all
        }
    };
    if indices.is_empty() {
        return Ok(Vec::new());
    }
    let embedded = model.forward(&dataset.features.select_rows(indices))?;
    Ok(indices
        .iter()
        .zip(embedded.iter_rows())
        .map(|(&i, row)| EmbeddingRecord {
            id: i as u64,
            label: Some(dataset.labels[i]),
            ts: Some(timestamp),
            vec: row.iter().map(|&v| v as f32).collect(),
        })
        .collect())
}

/// Writes [`export_embeddings`] output as an EMB1 file.
pub fn write_embeddings(
    path: impl AsRef<Path>,
    model: &EmbeddingModel,
    dataset: &Dataset,
    indices: Option<&[usize]>,
    timestamp: u64,
) -> Result<usize> {
    let records = export_embeddings(model, dataset, indices, timestamp)?;
    emb1::write_file(path, model.out_dim(), &records, timestamp)?;
    Ok(records.len())
}
