//! Embedding similarity search.
//!
//! - [`vector`], [`binary`], [`pca`]: vector primitives, 64-bit subcode binarization, PCA.
//! - [`index`]: exact / Hamming / two-stage search over a rolling, snapshot-able index.
//! - [`trainer`]: a small embedding head trained with triplet semi-hard loss.
//! - [`eval`]: recall/precision@k, latency benchmarks, 2-D scatter export.
//! - [`emb1`]: the EMB1 embedding record format shared by all of the above.

pub mod binary;
pub mod emb1;
pub mod error;
pub mod eval;
pub mod index;
pub mod pca;
pub mod synthetic;
pub mod trainer;
pub mod vector;

pub use binary::{binarize, hamming, BinaryCode};
pub use error::{Error, Result};
pub use index::{Index, IndexEntry, IndexStats, NewEntry, QueryResult, SearchMode, SharedIndex};
pub use pca::{pca_fit, pca_project, PcaBasis};
pub use vector::{distance, normalize, Metric, Vector};

/// Seconds since the Unix epoch.
pub fn now_secs() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
