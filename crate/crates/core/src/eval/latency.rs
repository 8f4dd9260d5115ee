use std::fmt;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{Index, SearchMode};
use crate::vector::{Metric, Vector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub n_queries: usize,
    pub k: usize,
    pub mode: SearchMode,
    pub metric: Metric,
    pub seed: u64,
    /// Untimed queries run before measuring.
    pub warmup: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_queries: 100,
            k: 10,
            mode: SearchMode::Exact,
            metric: Metric::Cosine,
            seed: 0,
            warmup: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub n_items: usize,
    pub dim: usize,
    pub n_queries: usize,
    pub latencies_s: Vec<f64>,
    pub median_s: f64,
    pub p99_s: f64,
    pub mean_s: f64,
}

impl fmt::Display for LatencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "items: {} (dim {}), queries: {}", self.n_items, self.dim, self.n_queries)?;
        writeln!(
            f,
            "median {:.3e} s, p99 {:.3e} s, mean {:.3e} s",
            self.median_s, self.p99_s, self.mean_s
        )
    }
}

impl LatencyReport {
    pub fn from_latencies(n_items: usize, dim: usize, latencies_s: Vec<f64>) -> Result<Self> {
        if latencies_s.is_empty() {
            return Err(Error::InsufficientData("no latency samples".into()));
        }
        let mut sorted = latencies_s.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median_s = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        let rank = ((0.99 * n as f64).ceil() as usize).clamp(1, n);
        Ok(Self {
            n_items,
            dim,
            n_queries: n,
            median_s,
            p99_s: sorted[rank - 1],
            mean_s: latencies_s.iter().sum::<f64>() / n as f64,
            latencies_s,
        })
    }
}

/// Ids of the stored items used as benchmark queries: a seeded draw with
/// replacement over the ids in ascending order.
pub fn bench_query_ids(index: &Index, n: usize, seed: u64) -> Vec<u64> {
    let ids: Vec<u64> = index.entries().iter().map(|e| e.id).collect();
    if ids.is_empty() {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| ids[rng.random_range(0..ids.len())]).collect()
}

/// Times single-threaded queries drawn from the stored vectors by a seeded RNG.
pub fn latency_bench(index: &Index, config: &BenchConfig) -> Result<LatencyReport> {
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if config.n_queries == 0 {
        return Err(Error::InvalidConfig("n_queries must be positive".into()));
    }
    if config.k == 0 {
        return Err(Error::InvalidK);
    }
    let queries: Vec<Vector> = bench_query_ids(index, config.warmup + config.n_queries, config.seed)
        .iter()
        .map(|&id| index.vector_of(id).ok_or(Error::EmptyIndex))
        .collect::<Result<_>>()?;

    for q in &queries[..config.warmup] {
        std::hint::black_box(index.search(q, config.k, config.mode, config.metric, None)?);
    }
    let mut latencies = Vec::with_capacity(config.n_queries);
    for q in &queries[config.warmup..] {
        let start = Instant::now();
        std::hint::black_box(index.search(q, config.k, config.mode, config.metric, None)?);
        // Floor at the clock's resolution so a reading is never zero.
        latencies.push(start.elapsed().as_secs_f64().max(1e-9));
    }
    LatencyReport::from_latencies(index.len(), index.dim().unwrap_or(0), latencies)
}
