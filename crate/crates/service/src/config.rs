use std::path::PathBuf;

/// Ninety days.
pub const DEFAULT_RETENTION_S: u64 = 90 * 24 * 60 * 60;
pub const DEFAULT_QUERY_CACHE: usize = 1000;
pub const DEFAULT_BODY_LIMIT: usize = 64 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Base directory for snapshot paths. When set, requested paths must be
    /// relative and stay inside it.
    pub snapshot_dir: Option<PathBuf>,
    pub retention_s: u64,
    /// Period of the background eviction timer; `None` disables it.
    pub evict_interval_s: Option<u64>,
    /// JSON-lines feedback log. Without one, feedback is only deduplicated in memory.
    pub feedback_log: Option<PathBuf>,
    /// How many recent result sets stay addressable by `query_ref`.
    pub query_cache: usize,
    pub body_limit: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            snapshot_dir: None,
            retention_s: DEFAULT_RETENTION_S,
            evict_interval_s: None,
            feedback_log: None,
            query_cache: DEFAULT_QUERY_CACHE,
            body_limit: DEFAULT_BODY_LIMIT,
        }
    }
}
