mod common;

use std::io::Write;
use std::time::Duration;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use simsearch_core::emb1::{self, EmbeddingRecord};
use simsearch_core::index::{ingest_stream, StreamOptions};
use simsearch_core::{Error, Index, Metric, NewEntry, SearchMode, Vector};

fn random_index(seed: u64, n: usize, dim: usize) -> Index {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Index::build((0..n).map(|i| NewEntry {
        id: rng.random_range(0..u64::MAX / 2) | 1 << i.min(40),
        vector: Vector::new((0..dim).map(|_| common::gaussian(&mut rng) * 4.0).collect()).unwrap(),
        label: (i % 4 != 0).then_some(rng.random_range(-3..50)),
        timestamp: rng.random_range(1_600_000_000..1_700_000_000),
    }))
    .unwrap()
}

#[test]
fn restored_index_answers_50_queries_identically() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rt.simidx");
    let mut index = random_index(1, 700, 70);
    let written = index.snapshot(&path).unwrap();
    assert_eq!(written, std::fs::metadata(&path).unwrap().len());
    let restored = Index::restore(&path).unwrap();
    assert_eq!(restored.entries(), index.entries());
    assert_eq!(restored.thresholds(), index.thresholds());
    assert_eq!(restored.stats(), index.stats());

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let modes = [SearchMode::Exact, SearchMode::Hamming, SearchMode::TwoStage { shortlist: None }];
    for i in 0..50 {
        let q = Vector::new((0..70).map(|_| common::gaussian(&mut rng)).collect()).unwrap();
        let k = rng.random_range(1..40);
        let mode = modes[i % 3];
        let metric = [Metric::Cosine, Metric::Euclidean][i % 2];
        assert_eq!(
            restored.search(&q, k, mode, metric, None).unwrap(),
            index.search(&q, k, mode, metric, None).unwrap()
        );
    }

    let again = dir.path().join("again.simidx");
    let mut restored = restored;
    restored.snapshot(&again).unwrap();
    assert_eq!(std::fs::read(&again).unwrap(), std::fs::read(&path).unwrap());
}

#[test]
fn single_byte_flips_are_always_detected() {
    let bytes = random_index(3, 40, 20).to_snapshot_bytes();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut positions: Vec<usize> = vec![0, 4, 5, 9, bytes.len() - 1];
    positions.extend((0..95).map(|_| rng.random_range(0..bytes.len())));
    for pos in positions {
        let mut damaged = bytes.clone();
        damaged[pos] ^= rng.random_range(1..=255u8);
        match Index::from_snapshot_bytes(&damaged) {
            Err(Error::CorruptSnapshot(_)) => {}
            other => panic!("flip at {pos}: {:?}", other.map(|i| i.len())),
        }
    }
    for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(Index::from_snapshot_bytes(&bytes[..cut]), Err(Error::CorruptSnapshot(_))));
    }
}

fn record(id: u64, vec: Vec<f32>) -> EmbeddingRecord {
    EmbeddingRecord { id, label: Some((id % 3) as i32), ts: Some(1000 + id), vec }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn streamed_embeddings_are_unit_norm(
        rows in prop::collection::vec(prop::collection::vec(-1e4f32..1e4, 6), 1..30),
        json in any::<bool>(),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("feed");
        let records: Vec<EmbeddingRecord> =
            rows.into_iter().enumerate().map(|(i, v)| record(i as u64, v)).collect();
        if json {
            let mut f = std::fs::File::create(&path).unwrap();
            for r in &records {
                writeln!(f, "{}", serde_json::to_string(r).unwrap()).unwrap();
            }
        } else {
            emb1::write_file(&path, 6, &records, 0).unwrap();
        }
        let index = Index::new().shared();
        let handle = ingest_stream(
            index.clone(),
            &path,
            StreamOptions { poll_interval: Duration::from_millis(5) },
        );
        prop_assert!(handle.wait_for(records.len() as u64, Duration::from_secs(10)));
        let zero_rows = records.iter().filter(|r| r.vec.iter().all(|&x| x == 0.0)).count() as u64;
        prop_assert_eq!(handle.skipped(), zero_rows);
        handle.stop();
        for e in index.read().entries() {
            let norm = e.embedding.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-6, "norm {}", norm);
        }
    }
}

#[test]
fn stream_appends_are_picked_up_and_upserted() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("feed.emb1");
    let first: Vec<_> = (0..10).map(|i| record(i, vec![1.0 + i as f32, 2.0, 0.5])).collect();
    emb1::write_file(&path, 3, &first, 0).unwrap();
    let index = Index::new().shared();
    let handle = ingest_stream(index.clone(), &path, StreamOptions { poll_interval: Duration::from_millis(5) });
    assert!(handle.wait_for(10, Duration::from_secs(10)));
    assert_eq!(handle.ingested(), 10);

    let mut bytes = Vec::new();
    emb1::encode_record(&record(4, vec![0.0, 0.0, -7.0]), 0, &mut bytes);
    emb1::encode_record(&record(99, vec![0.0, 0.0, 0.0]), 0, &mut bytes);
    std::fs::OpenOptions::new().append(true).open(&path).unwrap().write_all(&bytes).unwrap();
    assert!(handle.wait_for(12, Duration::from_secs(10)));
    assert_eq!((handle.ingested(), handle.skipped()), (11, 1));
    let guard = index.read();
    assert_eq!(guard.len(), 10);
    let hits = guard
        .query_exact(&Vector::new(vec![0.0, 0.0, -1.0]).unwrap(), 1, Metric::Cosine)
        .unwrap();
    assert_eq!((hits[0].id, hits[0].distance), (4, 0.0));
}
