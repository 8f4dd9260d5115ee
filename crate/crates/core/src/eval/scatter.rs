use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::emb1::EmbeddingRecord;
use crate::error::Result;
use crate::pca::{pca_fit, pca_project};
use crate::vector::Vector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub id: u64,
    pub label: Option<i32>,
    pub x: f64,
    pub y: f64,
}

/// Projects the records onto their first two principal components. One-dimensional
/// inputs get `y = 0`.
pub fn scatter_points(records: &[EmbeddingRecord]) -> Result<Vec<ScatterPoint>> {
    let vectors: Vec<Vector> = records
        .iter()
        .map(|r| Vector::from_f32(&r.vec))
        .collect::<Result<_>>()?;
    let k = vectors.first().map_or(2, |v| v.dim().min(2));
    let basis = pca_fit(&vectors, k)?;
    records
        .iter()
        .zip(&vectors)
        .map(|(r, v)| {
            let coords = pca_project(&basis, v)?;
            Ok(ScatterPoint {
                id: r.id,
                label: r.label,
                x: coords[0],
                y: coords.get(1).copied().unwrap_or(0.0),
            })
        })
        .collect()
}

/// `id,label,x,y`; a missing label is an empty field.
pub fn write_scatter_csv<W: Write>(points: &[ScatterPoint], mut out: W) -> std::io::Result<()> {
    writeln!(out, "id,label,x,y")?;
    for p in points {
        let label = p.label.map(|l| l.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{}", p.id, label, p.x, p.y)?;
    }
    out.flush()
}

pub fn scatter_export(records: &[EmbeddingRecord], path: impl AsRef<Path>) -> Result<usize> {
    let points = scatter_points(records)?;
    write_scatter_csv(&points, BufWriter::new(File::create(path)?))?;
    Ok(points.len())
}
