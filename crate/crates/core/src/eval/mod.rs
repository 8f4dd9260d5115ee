//! Retrieval quality, query latency, and 2-D projections of an embedding space.

mod latency;
mod retrieval;
mod scatter;

pub use latency::{bench_query_ids, latency_bench, BenchConfig, LatencyReport};
pub use retrieval::{recall_precision_at_k, recall_precision_at_k_with, RetrievalReport};
pub use scatter::{scatter_export, scatter_points, write_scatter_csv, ScatterPoint};
