use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use super::matrix::Matrix;
use crate::error::{Error, Result};

/// Labeled feature vectors, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<i32>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<i32>) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if !features.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(Self { features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn classes(&self) -> BTreeSet<i32> {
        self.labels.iter().copied().collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Parses `label,x1,...,xd` rows. A first line whose label field is not an
    /// integer is treated as a header.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split(',').map(str::trim);
            let first = fields.next().unwrap_or_default();
            let label = match first.parse::<i32>() {
                Ok(l) => l,
                Err(_) if n == 0 => continue,
                Err(_) => return Err(Error::Parse(format!("line {}: bad label {first:?}", n + 1))),
            };
            let values = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parse(format!("line {}: {e}", n + 1)))?;
            labels.push(label);
            rows.push(values);
        }
        if rows.is_empty() {
            return Err(Error::InsufficientData("CSV has no samples".into()));
        }
        Self::new(Matrix::from_rows(&rows)?, labels)
    }

    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_str(&fs::read_to_string(path)?)
    }
}
