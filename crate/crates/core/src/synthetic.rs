//! Seeded synthetic data: Gaussian class clusters for training and clustered unit
//! vectors for index experiments.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::trainer::{Dataset, Matrix};

/// `classes=5,n=500,dim=32,sep=5,seed=7`. Each class center lies `sep` standard
/// deviations from the origin along its own direction (orthogonal when
/// `classes <= dim`); every sample adds isotropic unit-variance noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub n: usize,
    pub dim: usize,
    pub sep: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 5,
            n: 500,
            dim: 32,
            sep: 5.0,
            seed: 0,
        }
    }
}

impl FromStr for SyntheticSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut spec = Self::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = part
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got {part:?}")))?;
            let parse_err = |e: &dyn std::fmt::Display| Error::Parse(format!("{key}: {e}"));
            match key.trim() {
                "classes" => spec.classes = value.parse().map_err(|e| parse_err(&e))?,
                "n" => spec.n = value.parse().map_err(|e| parse_err(&e))?,
                "dim" => spec.dim = value.parse().map_err(|e| parse_err(&e))?,
                "sep" => spec.sep = value.parse().map_err(|e| parse_err(&e))?,
                "seed" => spec.seed = value.parse().map_err(|e| parse_err(&e))?,
                other => return Err(Error::Parse(format!("unknown synthetic key {other:?}"))),
            }
        }
        if spec.classes == 0 || spec.dim == 0 || !spec.sep.is_finite() || spec.sep < 0.0 {
            return Err(Error::Parse(format!("invalid synthetic spec {s:?}")));
        }
        Ok(spec)
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Random orthonormal rows (Gram-Schmidt), or independent random unit rows when
/// there are more rows than dimensions.
fn directions(rng: &mut ChaCha8Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    while out.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
        if count <= dim {
            for u in &out {
                let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            out.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    out
}

impl SyntheticSpec {
    pub fn generate(&self) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let centers: Vec<Vec<f64>> = directions(&mut rng, self.classes, self.dim)
            .into_iter()
            .map(|d| d.into_iter().map(|x| x * self.sep).collect())
            .collect();
        let mut data = Vec::with_capacity(self.n * self.dim);
        let mut labels = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let class = i % self.classes;
            data.extend(centers[class].iter().map(|c| c + gaussian(&mut rng)));
            labels.push(class as i32);
        }
        Dataset::new(Matrix::from_vec(self.n, self.dim, data).expect("shape"), labels)
            .expect("finite synthetic data")
    }
}

/// `n` unit vectors around `clusters` random unit centers; `spread` is the per-dimension
/// noise standard deviation. Returns the vectors and their cluster labels.
pub fn clustered_unit_vectors(
    n: usize,
    dim: usize,
    clusters: usize,
    spread: f64,
    seed: u64,
) -> (Vec<Vec<f64>>, Vec<i32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = directions(&mut rng, clusters, dim);
    let mut vectors = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let c = rng.random_range(0..clusters);
        let mut v: Vec<f64> = centers[c].iter().map(|x| x + spread * gaussian(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        vectors.push(v);
        labels.push(c as i32);
    }
    (vectors, labels)
}

/// `n` independent uniformly random unit vectors.
pub fn random_unit_vectors(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    directions_independent(&mut rng, n, dim)
}

fn directions_independent(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| gaussian(rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_spec() {
        let spec: SyntheticSpec = "classes=3,n=60,dim=8,sep=4.5,seed=9".parse().unwrap();
        assert_eq!(spec, SyntheticSpec { classes: 3, n: 60, dim: 8, sep: 4.5, seed: 9 });
        assert!("classes=3,bogus=1".parse::<SyntheticSpec>().is_err());
        assert!("classes".parse::<SyntheticSpec>().is_err());
        assert!("classes=0".parse::<SyntheticSpec>().is_err());
    }

    #[test]
    fn centers_are_sep_from_origin() {
        let spec = SyntheticSpec { classes: 4, n: 4000, dim: 10, sep: 5.0, seed: 1 };
        let data = spec.generate();
        assert_eq!(data.len(), 4000);
        let mut means = vec![vec![0.0; 10]; 4];
        for (row, &l) in data.features.iter_rows().zip(&data.labels) {
            for (m, x) in means[l as usize].iter_mut().zip(row) {
                *m += x / 1000.0;
            }
        }
        for m in &means {
            let r: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((r - 5.0).abs() < 0.3, "center radius {r}");
        }
        let d: f64 = means[0].iter().zip(&means[1]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!((d - 5.0 * std::f64::consts::SQRT_2).abs() < 0.3, "center distance {d}");
        assert_eq!(spec.generate(), data);
    }

    #[test]
    fn unit_vectors_are_unit() {
        let (vs, labels) = clustered_unit_vectors(50, 16, 5, 0.3, 2);
        assert_eq!(labels.len(), 50);
        for v in vs.iter().chain(&random_unit_vectors(10, 7, 3)) {
            let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }
}
