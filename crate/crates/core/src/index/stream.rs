//! Background ingestion by tailing an append-only record file.
//!
//! The file is either EMB1 (detected by its magic; the header count is ignored
//! while tailing) or JSON lines. Complete records are upserted; records that fail
//! to parse or validate are counted as skipped.

use std::fs::File;
use std::io::{Read, Seek, SeekFrom};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use super::{NewEntry, SharedIndex};
use crate::emb1::{self, EmbeddingRecord};
use crate::error::Result;
use crate::vector::Vector;

#[derive(Debug, Clone)]
pub struct StreamOptions {
    pub poll_interval: Duration,
}

impl Default for StreamOptions {
    fn default() -> Self {
        Self {
            poll_interval: Duration::from_millis(200),
        }
    }
}

#[derive(Debug, Default)]
struct Counters {
    ingested: AtomicU64,
    skipped: AtomicU64,
}

/// Handle to a running tailer. Dropping it stops the background thread.
#[derive(Debug)]
pub struct IngestHandle {
    counters: Arc<Counters>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl IngestHandle {
    pub fn ingested(&self) -> u64 {
        self.counters.ingested.load(Ordering::Acquire)
    }

    pub fn skipped(&self) -> u64 {
        self.counters.skipped.load(Ordering::Acquire)
    }

    /// Blocks until `ingested + skipped >= processed` or the timeout passes.
    pub fn wait_for(&self, processed: u64, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        loop {
            if self.ingested() + self.skipped() >= processed {
                return true;
            }
            if Instant::now() >= deadline {
                return false;
            }
            thread::sleep(Duration::from_millis(5));
        }
    }

    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::Release);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for IngestHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

pub fn ingest_stream(index: SharedIndex, path: impl Into<PathBuf>, options: StreamOptions) -> IngestHandle {
    let counters = Arc::new(Counters::default());
    let stop = Arc::new(AtomicBool::new(false));
    let mut tailer = Tailer {
        path: path.into(),
        offset: 0,
        buf: Vec::new(),
        format: None,
    };
    let thread = {
        let counters = Arc::clone(&counters);
        let stop = Arc::clone(&stop);
        thread::Builder::new()
            .name("simsearch-ingest".into())
            .spawn(move || {
                while !stop.load(Ordering::Acquire) {
                    // unreadable or not-yet-created files are retried on the next poll
                    if let Ok(batch) = tailer.poll() {
                        apply(&index, &counters, batch);
                    }
                    sleep_unless_stopped(&stop, options.poll_interval);
                }
            })
            .expect("spawn ingestion thread")
    };
    IngestHandle {
        counters,
        stop,
        thread: Some(thread),
    }
}

fn sleep_unless_stopped(stop: &AtomicBool, total: Duration) {
    let deadline = Instant::now() + total;
    while !stop.load(Ordering::Acquire) {
        let now = Instant::now();
        if now >= deadline {
            break;
        }
        thread::sleep((deadline - now).min(Duration::from_millis(10)));
    }
}

fn apply(index: &SharedIndex, counters: &Counters, batch: Vec<Option<EmbeddingRecord>>) {
    if batch.is_empty() {
        return;
    }
    let now = crate::now_secs();
    let mut guard = index.write();
    for record in batch {
        let outcome = record.ok_or(()).and_then(|r| {
            let vector = Vector::from_f32(&r.vec).map_err(|_| ())?;
            guard
                .upsert(NewEntry {
                    id: r.id,
                    vector,
                    label: r.label,
                    timestamp: r.ts.unwrap_or(now),
                })
                .map_err(|_| ())
        });
        let counter = match outcome {
            Ok(_) => &counters.ingested,
            Err(()) => &counters.skipped,
        };
        counter.fetch_add(1, Ordering::AcqRel);
    }
}

#[derive(Debug, Clone, Copy)]
enum Format {
    Emb1 { dim: usize },
    JsonLines,
}

struct Tailer {
    path: PathBuf,
    offset: u64,
    buf: Vec<u8>,
    format: Option<Format>,
}

impl Tailer {
    /// Reads newly appended bytes and returns complete records (`None` = malformed).
    fn poll(&mut self) -> Result<Vec<Option<EmbeddingRecord>>> {
        let mut file = File::open(&self.path)?;
        let len = file.metadata()?.len();
        if len < self.offset {
            // truncated or replaced: start over
            self.offset = 0;
            self.buf.clear();
            self.format = None;
        }
        file.seek(SeekFrom::Start(self.offset))?;
        let read = file.read_to_end(&mut self.buf)?;
        self.offset += read as u64;
        Ok(self.drain())
    }

    fn drain(&mut self) -> Vec<Option<EmbeddingRecord>> {
        let format = match self.format {
            Some(f) => f,
            None => {
                if self.buf.len() < emb1::MAGIC.len() {
                    return Vec::new();
                }
                if !self.buf.starts_with(emb1::MAGIC) {
                    self.format = Some(Format::JsonLines);
                    Format::JsonLines
                } else if self.buf.len() < emb1::HEADER_LEN {
                    return Vec::new();
                } else {
                    let dim = match emb1::decode_header(&self.buf) {
                        Ok(h) => h.dim,
                        // an unreadable header makes every following record malformed
                        Err(_) => 0,
                    };
                    self.buf.drain(..emb1::HEADER_LEN);
                    self.format = Some(Format::Emb1 { dim });
                    Format::Emb1 { dim }
                }
            }
        };
        match format {
            Format::JsonLines => {
                let Some(end) = self.buf.iter().rposition(|&b| b == b'\n') else {
                    return Vec::new();
                };
                let complete: Vec<u8> = self.buf.drain(..=end).collect();
                complete
                    .split(|&b| b == b'\n')
                    .filter_map(|line| {
                        let line = std::str::from_utf8(line).ok().map(str::trim);
                        match line {
                            Some("") => None,
                            Some(l) => Some(emb1::parse_json_record(l).ok()),
                            None => Some(None),
                        }
                    })
                    .collect()
            }
            Format::Emb1 { dim } => {
                let len = emb1::record_len(dim);
                let n = self.buf.len() / len;
                let complete: Vec<u8> = self.buf.drain(..n * len).collect();
                complete
                    .chunks_exact(len)
                    .map(|c| (dim > 0).then(|| emb1::decode_record(c, dim)))
                    .collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::Index;
    use crate::vector::Metric;
    use std::io::Write;

    fn fast() -> StreamOptions {
        StreamOptions {
            poll_interval: Duration::from_millis(10),
        }
    }

    fn append(path: &std::path::Path, bytes: &[u8]) {
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path).unwrap();
        f.write_all(bytes).unwrap();
        f.flush().unwrap();
    }

    fn record(id: u64, vec: Vec<f32>) -> EmbeddingRecord {
        EmbeddingRecord {
            id,
            label: Some(1),
            ts: Some(100),
            vec,
        }
    }

    #[test]
    fn tails_emb1_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stream.emb1");
        append(&path, &emb1::encode_header(3, 0));
        let index = Index::new().shared();
        let handle = ingest_stream(index.clone(), &path, fast());
        let mut bytes = Vec::new();
        for id in 0..10u64 {
            emb1::encode_record(&record(id, vec![1.0, id as f32, 0.5]), 0, &mut bytes);
        }
        // split mid-record to exercise partial reads
        append(&path, &bytes[..30]);
        std::thread::sleep(Duration::from_millis(30));
        append(&path, &bytes[30..]);
        assert!(handle.wait_for(10, Duration::from_secs(5)));
        assert_eq!(handle.ingested(), 10);
        assert_eq!(index.read().len(), 10);
    }

    #[test]
    fn malformed_records_are_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stream.jsonl");
        let index = Index::new().shared();
        let handle = ingest_stream(index.clone(), &path, fast());
        append(&path, b"{\"id\": 1, \"vec\": [oops]}\n{\"id\": 2, \"vec\": [0.0, 1.0]}\n");
        assert!(handle.wait_for(2, Duration::from_secs(5)));
        assert_eq!((handle.ingested(), handle.skipped()), (1, 1));
        // zero vector and wrong dim are skipped too
        append(&path, b"{\"id\": 3, \"vec\": [0.0, 0.0]}\n{\"id\": 4, \"vec\": [1.0]}\n");
        assert!(handle.wait_for(4, Duration::from_secs(5)));
        assert_eq!((handle.ingested(), handle.skipped()), (1, 3));
    }

    #[test]
    fn reappended_id_is_upserted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stream.jsonl");
        let index = Index::new().shared();
        let handle = ingest_stream(index.clone(), &path, fast());
        append(&path, b"{\"id\": 7, \"vec\": [1.0, 0.0]}\n");
        assert!(handle.wait_for(1, Duration::from_secs(5)));
        append(&path, b"{\"id\": 7, \"vec\": [0.0, 1.0]}\n");
        assert!(handle.wait_for(2, Duration::from_secs(5)));
        let guard = index.read();
        assert_eq!(guard.len(), 1);
        let q = Vector::new(vec![0.0, 1.0]).unwrap();
        let hit = &guard.query_exact(&q, 1, Metric::Cosine).unwrap()[0];
        assert_eq!((hit.id, hit.distance), (7, 0.0));
    }
}
