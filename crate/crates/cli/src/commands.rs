use std::fs;
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::json;
use simsearch_core::emb1::{self, EmbeddingRecord};
use simsearch_core::eval::{latency_bench, recall_precision_at_k_with, scatter_export, BenchConfig};
use simsearch_core::index::{ingest_stream, StreamOptions};
use simsearch_core::trainer::{
    export_embeddings, load_model, save_model, split_indices, train, write_log_csv, Dataset, TrainerConfig,
};
use simsearch_core::{now_secs, Index, NewEntry, QueryResult, Vector};
use simsearch_service::{AppState, ServiceConfig};

use crate::args::*;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Train(a) => train_cmd(a),
        Command::Export(a) => export_cmd(a),
        Command::Build(a) => build_cmd(a),
        Command::Query(a) => query_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Serve(a) => serve_cmd(a),
        Command::Scatter(a) => scatter_cmd(a),
    }
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load_data(source: &DataSource) -> Result<Dataset> {
    match source {
        DataSource::Csv(path) => Dataset::from_csv(path).with_context(|| format!("reading {}", path.display())),
        DataSource::Synthetic(spec) => Ok(spec.generate()),
    }
}

fn load_index(path: &Path) -> Result<Index> {
    Index::restore(path).with_context(|| format!("loading index {}", path.display()))
}

fn load_records(path: &Path) -> Result<emb1::LoadedRecords> {
    emb1::read_file(path).with_context(|| format!("reading {}", path.display()))
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let config = TrainerConfig {
        margin: a.margin,
        base_lr: a.base_lr,
        lr_boundaries: a.lr_boundaries,
        lr_factor: a.lr_factor,
        momentum: a.momentum,
        batch_size: a.batch_size,
        samples_per_class: a.samples_per_class,
        max_epochs: a.max_epochs,
        patience: a.patience,
        seed: a.seed,
        split_fraction: a.split_fraction,
        hidden_dims: a.hidden,
        embed_dim: a.embed_dim,
        record_wall_time: !a.no_wall_clock,
    };
    config.validate()?;
    let dataset = load_data(&a.data)?;
    tracing::info!(samples = dataset.len(), dim = dataset.dim(), data = %a.data, "training");
    let outcome = train(&dataset, &config)?;
    save_model(&outcome.model, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let file = fs::File::create(&a.log).with_context(|| format!("writing {}", a.log.display()))?;
    let mut log = BufWriter::new(file);
    write_log_csv(&outcome.log, &mut log)?;
    log.flush()?;
    let first = outcome.log.first().expect("at least one epoch");
    let last = outcome.log.last().expect("at least one epoch");
    print_json(&json!({
        "model": a.out,
        "log": a.log,
        "epochs": outcome.log.len(),
        "best_epoch": outcome.best_epoch,
        "stop_reason": outcome.stop_reason,
        "initial_train_loss": first.train_loss,
        "final_train_loss": last.train_loss,
        "best_val_loss": outcome.log[outcome.best_epoch].val_loss,
        "train_samples": outcome.train_indices.len(),
        "val_samples": outcome.val_indices.len(),
    }))
}

fn export_cmd(a: ExportArgs) -> Result<()> {
    if !(a.split_fraction > 0.0 && a.split_fraction < 1.0) {
        bail!("--split-fraction must be in (0, 1)");
    }
    let model = load_model(&a.model).with_context(|| format!("loading model {}", a.model.display()))?;
    let dataset = load_data(&a.data)?;
    let (train_idx, val_idx) = split_indices(dataset.len(), a.split_fraction, a.seed);
    let indices = match a.subset {
        Subset::All => None,
        Subset::Train => Some(train_idx.as_slice()),
        Subset::Val => Some(val_idx.as_slice()),
    };
    let ts = a.timestamp.unwrap_or_else(now_secs);
    let records = export_embeddings(&model, &dataset, indices, ts)?;
    emb1::write_file(&a.out, model.out_dim(), &records, ts).with_context(|| format!("writing {}", a.out.display()))?;
    print_json(&json!({ "path": a.out, "count": records.len(), "dim": model.out_dim() }))
}

fn build_cmd(a: BuildArgs) -> Result<()> {
    let loaded = load_records(&a.emb)?;
    if loaded.skipped > 0 && !a.skip_invalid {
        bail!("{} unparseable records in {} (use --skip-invalid to ignore)", loaded.skipped, a.emb.display());
    }
    let ts = a.timestamp.unwrap_or_else(now_secs);
    let mut index = Index::new();
    let mut skipped = loaded.skipped;
    for record in loaded.records {
        let id = record.id;
        let outcome = Vector::from_f32(&record.vec).and_then(|vector| {
            index.upsert(NewEntry {
                id,
                vector,
                label: record.label,
                timestamp: record.ts.unwrap_or(ts),
            })
        });
        if let Err(e) = outcome {
            if !a.skip_invalid {
                bail!("record {id}: {e}");
            }
            tracing::warn!(id, "skipping record: {e}");
            skipped += 1;
        }
    }
    if index.is_empty() {
        bail!("no valid records in {}", a.emb.display());
    }
    index.refresh_thresholds();
    let bytes = index.snapshot(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
    print_json(&json!({
        "path": a.out,
        "count": index.len(),
        "dim": index.dim(),
        "skipped": skipped,
        "bytes": bytes,
    }))
}

fn query_cmd(a: QueryArgs) -> Result<()> {
    let index = load_index(&a.index)?;
    let (q, exclude) = match (a.vec, a.id) {
        (Some(v), _) => (Vector::new(v).context("bad --vec")?, None),
        (None, Some(id)) => (index.vector_of(id).with_context(|| format!("no item with id {id}"))?, Some(id)),
        (None, None) => unreachable!("clap requires one of --vec / --id"),
    };
    let hits = index.search(&q, a.k as usize, a.search.mode(), a.search.metric.into(), exclude)?;
    if a.json {
        return print_json(&json!({ "hits": hits }));
    }
    let mut out = io::stdout().lock();
    write_table(&mut out, &hits)?;
    Ok(())
}

fn write_table(out: &mut impl Write, hits: &[QueryResult]) -> io::Result<()> {
    writeln!(out, "{:>4}  {:>20}  {:>6}  {:>12}  {:>10}", "rank", "id", "label", "distance", "similarity")?;
    for (rank, h) in hits.iter().enumerate() {
        let label = h.label.map_or_else(|| "-".to_owned(), |l| l.to_string());
        writeln!(
            out,
            "{:>4}  {:>20}  {:>6}  {:>12.6}  {:>10.6}",
            rank + 1,
            h.id,
            label,
            h.distance,
            h.similarity
        )?;
    }
    Ok(())
}

fn bench_cmd(a: BenchArgs) -> Result<()> {
    let index = load_index(&a.index)?;
    let config = BenchConfig {
        n_queries: a.queries as usize,
        k: a.k as usize,
        mode: a.search.mode(),
        metric: a.search.metric.into(),
        seed: a.seed,
        warmup: a.warmup,
    };
    let report = latency_bench(&index, &config)?;
    tracing::info!("{}", report.to_string().trim_end());
    print_json(&report)
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let index = load_index(&a.index)?;
    let loaded = load_records(&a.emb)?;
    if loaded.skipped > 0 {
        tracing::warn!(skipped = loaded.skipped, "unparseable query records ignored");
    }
    let k_values: Vec<usize> = a.k.iter().map(|&k| k as usize).collect();
    let report = recall_precision_at_k_with(&index, &loaded.records, &k_values, a.search.mode(), a.search.metric.into())?;
    print_json(&report)
}

fn serve_cmd(a: ServeArgs) -> Result<()> {
    let index = match &a.index {
        Some(path) => load_index(path)?,
        None => Index::new(),
    }
    .shared();
    let feedback_log = a.feedback_log.clone().unwrap_or_else(|| match &a.snapshot_dir {
        Some(dir) => dir.join("feedback.jsonl"),
        None => PathBuf::from("feedback.jsonl"),
    });
    let config = ServiceConfig {
        snapshot_dir: a.snapshot_dir.clone(),
        retention_s: a.retention_s,
        evict_interval_s: a.evict_interval_s,
        feedback_log: Some(feedback_log),
        ..ServiceConfig::default()
    };
    let _stream = a.stream.as_ref().map(|path| {
        tracing::info!(path = %path.display(), "tailing stream");
        ingest_stream(index.clone(), path, StreamOptions::default())
    });
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .with_context(|| format!("bad listen address {}:{}", a.host, a.port))?;
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        let local = listener.local_addr()?;
        let stats = index.read().stats();
        tracing::info!(%local, count = stats.count, dim = stats.dim, "listening");
        // one compact line so supervisors can read the bound address
        println!("{}", json!({ "listening": local.to_string(), "count": stats.count }));
        simsearch_service::serve(listener, AppState::new(index, config), simsearch_service::shutdown_signal()).await?;
        tracing::info!("shut down");
        Ok(())
    })
}

fn scatter_cmd(a: ScatterArgs) -> Result<()> {
    let records: Vec<EmbeddingRecord> = load_records(&a.emb)?.records;
    let count = scatter_export(&records, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    print_json(&json!({ "path": a.out, "count": count }))
}
