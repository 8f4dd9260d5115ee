//! Dense vectors, normalization and distance metrics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms below this are treated as zero.
pub const ZERO_NORM_EPS: f64 = 1e-12;

/// A non-empty, finite, dense vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyVector);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn to_f32(&self) -> Vec<f32> {
        self.0.iter().map(|&v| v as f32).collect()
    }
}

impl AsRef<[f64]> for Vector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    SquaredEuclidean,
    Euclidean,
    #[default]
    Cosine,
}

impl Metric {
    /// Maps a distance onto a similarity in `[0, 1]`, larger meaning closer.
    pub fn similarity(self, distance: f64) -> f64 {
        match self {
            Metric::Cosine => (1.0 - distance / 2.0).clamp(0.0, 1.0),
            Metric::SquaredEuclidean | Metric::Euclidean => (-distance).exp(),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::SquaredEuclidean => "squared_euclidean",
            Metric::Euclidean => "euclidean",
            Metric::Cosine => "cosine",
        })
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared_euclidean" | "sqeuclidean" | "l2sq" => Ok(Metric::SquaredEuclidean),
            "euclidean" | "l2" => Ok(Metric::Euclidean),
            "cosine" | "cos" => Ok(Metric::Cosine),
            other => Err(Error::Parse(format!("unknown metric {other:?}"))),
        }
    }
}

pub(crate) fn norm<T: Copy + Into<f64>>(values: &[T]) -> f64 {
    values
        .iter()
        .map(|&v| {
            let v: f64 = v.into();
            v * v
        })
        .sum::<f64>()
        .sqrt()
}

/// Scales `v` to unit L2 norm.
pub fn normalize(v: &Vector) -> Result<Vector> {
    let n = v.norm();
    if n < ZERO_NORM_EPS {
        return Err(Error::ZeroVector);
    }
    Ok(Vector(v.0.iter().map(|x| x / n).collect()))
}

pub fn distance(a: &Vector, b: &Vector, metric: Metric) -> Result<f64> {
    distance_slices(a.as_slice(), b.as_slice(), metric)
}

/// Distance between two raw slices; values are widened to `f64` before accumulation.
///
/// Cosine distance is evaluated as `0.5 * |a/|a| - b/|b||^2`, which equals
/// `1 - cos(a, b)` and is exactly zero for identical inputs.
pub fn distance_slices<T: Copy + Into<f64>>(a: &[T], b: &[T], metric: Metric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    match metric {
        Metric::SquaredEuclidean => Ok(squared_euclidean(a, b)),
        Metric::Euclidean => Ok(squared_euclidean(a, b).sqrt()),
        Metric::Cosine => {
            let (na, nb) = (norm(a), norm(b));
            if na < ZERO_NORM_EPS || nb < ZERO_NORM_EPS {
                return Err(Error::ZeroVector);
            }
            Ok(cosine_scaled(a, b, 1.0 / na, 1.0 / nb))
        }
    }
}

pub(crate) fn squared_euclidean<T: Copy + Into<f64>>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.into() - y.into();
            d * d
        })
        .sum()
}

/// Cosine distance given precomputed inverse norms.
pub(crate) fn cosine_scaled<T: Copy + Into<f64>>(a: &[T], b: &[T], inv_a: f64, inv_b: f64) -> f64 {
    0.5 * a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x.into() * inv_a - y.into() * inv_b;
            d * d
        })
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(values: &[f64]) -> Vector {
        Vector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&v(&[3.0, 4.0])).unwrap().as_slice(), &[0.6, 0.8]);
        assert_eq!(normalize(&v(&[1.0, 0.0, 0.0])).unwrap().as_slice(), &[1.0, 0.0, 0.0]);
        assert!(matches!(normalize(&v(&[0.0, 0.0])), Err(Error::ZeroVector)));
    }

    #[test]
    fn construction_rejects_bad_values() {
        assert!(matches!(Vector::new(vec![1.0, f64::NAN]), Err(Error::NonFinite)));
        assert!(matches!(Vector::new(vec![f64::INFINITY]), Err(Error::NonFinite)));
        assert!(matches!(Vector::new(vec![]), Err(Error::EmptyVector)));
    }

    #[test]
    fn distance_examples() {
        let a = v(&[1.0, 0.0]);
        let b = v(&[0.0, 1.0]);
        assert_eq!(distance(&a, &b, Metric::SquaredEuclidean).unwrap(), 2.0);
        assert!((distance(&a, &b, Metric::Cosine).unwrap() - 1.0).abs() < 1e-12);
        let x = v(&[0.3, -1.7, 2.2]);
        assert_eq!(distance(&x, &x, Metric::Euclidean).unwrap(), 0.0);
        assert_eq!(distance(&x, &x, Metric::Cosine).unwrap(), 0.0);
    }

    #[test]
    fn distance_errors() {
        let a = v(&[1.0, 0.0]);
        let b = v(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            distance(&a, &b, Metric::Euclidean),
            Err(Error::DimMismatch { expected: 2, got: 3 })
        ));
        let z = v(&[0.0, 0.0]);
        assert!(matches!(distance(&a, &z, Metric::Cosine), Err(Error::ZeroVector)));
        assert_eq!(distance(&a, &z, Metric::SquaredEuclidean).unwrap(), 1.0);
    }

    #[test]
    fn cosine_matches_textbook_formula() {
        let a = v(&[0.2, -1.0, 3.5, 0.0]);
        let b = v(&[1.1, 0.4, -0.3, 2.0]);
        let dot: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum();
        let expected = 1.0 - dot / (a.norm() * b.norm());
        assert!((distance(&a, &b, Metric::Cosine).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn metric_parse_roundtrip() {
        for m in [Metric::SquaredEuclidean, Metric::Euclidean, Metric::Cosine] {
            assert_eq!(m.to_string().parse::<Metric>().unwrap(), m);
        }
        assert!("manhattan".parse::<Metric>().is_err());
    }

    fn nonzero_vec() -> impl Strategy<Value = Vec<f64>> {
        (1usize..24)
            .prop_flat_map(|d| prop::collection::vec(-100.0f64..100.0, d))
            .prop_filter("nonzero", |v| norm(v) > 1e-3)
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent_and_unit(values in nonzero_vec()) {
            let once = normalize(&Vector::new(values).unwrap()).unwrap();
            prop_assert!((once.norm() - 1.0).abs() < 1e-6);
            let twice = normalize(&once).unwrap();
            for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn squared_euclidean_is_twice_cosine_on_unit_vectors(
            (a, b) in (1usize..24).prop_flat_map(|d| (
                prop::collection::vec(-10.0f64..10.0, d),
                prop::collection::vec(-10.0f64..10.0, d),
            )).prop_filter("nonzero", |(a, b)| norm(a) > 1e-3 && norm(b) > 1e-3)
        ) {
            let a = normalize(&Vector::new(a).unwrap()).unwrap();
            let b = normalize(&Vector::new(b).unwrap()).unwrap();
            let sq = distance(&a, &b, Metric::SquaredEuclidean).unwrap();
            let cos = distance(&a, &b, Metric::Cosine).unwrap();
            prop_assert!((sq - 2.0 * cos).abs() < 1e-9);
            prop_assert_eq!(sq, distance(&b, &a, Metric::SquaredEuclidean).unwrap());
            prop_assert_eq!(cos, distance(&b, &a, Metric::Cosine).unwrap());
        }
    }
}
