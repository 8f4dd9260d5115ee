//! Principal component analysis via Jacobi eigendecomposition of the covariance matrix.

use crate::error::{Error, Result};
use crate::vector::Vector;

/// Eigenvalues at or below this fraction of the largest one count as zero.
const RANK_TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    pub mean: Vector,
    /// Orthonormal principal axes, ordered by decreasing explained variance.
    pub components: Vec<Vector>,
    pub explained_variance: Vec<f64>,
    /// Set when the data had fewer than `k` nonzero eigenvalues; only the
    /// available components are returned.
    pub rank_deficient: bool,
}

impl PcaBasis {
    pub fn dim(&self) -> usize {
        self.mean.dim()
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    /// Maps projection coordinates back into the input space.
    pub fn reconstruct(&self, coords: &[f64]) -> Result<Vec<f64>> {
        if coords.len() != self.k() {
            return Err(Error::DimMismatch {
                expected: self.k(),
                got: coords.len(),
            });
        }
        let mut out = self.mean.as_slice().to_vec();
        for (c, comp) in coords.iter().zip(&self.components) {
            for (o, x) in out.iter_mut().zip(comp.as_slice()) {
                *o += c * x;
            }
        }
        Ok(out)
    }
}

/// Fits the top-`k` principal axes. Covariance uses the `1/n` (population) divisor.
pub fn pca_fit(data: &[Vector], k: usize) -> Result<PcaBasis> {
    if data.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "PCA needs at least 2 vectors, got {}",
            data.len()
        )));
    }
    let dim = data[0].dim();
    if let Some(bad) = data.iter().find(|v| v.dim() != dim) {
        return Err(Error::DimMismatch {
            expected: dim,
            got: bad.dim(),
        });
    }
    if k == 0 || k > dim {
        return Err(Error::InvalidConfig(format!(
            "PCA k must be in 1..={dim}, got {k}"
        )));
    }

    let n = data.len() as f64;
    let mut mean = vec![0.0; dim];
    for v in data {
        for (m, x) in mean.iter_mut().zip(v.as_slice()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);

    let mut cov = vec![vec![0.0; dim]; dim];
    let mut centered = vec![0.0; dim];
    for v in data {
        for ((c, x), m) in centered.iter_mut().zip(v.as_slice()).zip(&mean) {
            *c = x - m;
        }
        for i in 0..dim {
            for j in i..dim {
                cov[i][j] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..dim {
        for j in i..dim {
            cov[i][j] /= n;
            cov[j][i] = cov[i][j];
        }
    }

    let (values, vectors) = symmetric_eigen(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));

    let largest = values[order[0]].max(0.0);
    let nonzero = order
        .iter()
        .take_while(|&&i| largest > 0.0 && values[i] > RANK_TOL * largest)
        .count();
    let take = k.min(nonzero);

    let mut components = Vec::with_capacity(take);
    let mut explained_variance = Vec::with_capacity(take);
    for &col in order.iter().take(take) {
        let mut axis: Vec<f64> = vectors.iter().map(|row| row[col]).collect();
        let pivot = axis
            .iter()
            .enumerate()
            .fold(0, |best, (i, x)| if x.abs() > axis[best].abs() { i } else { best });
        if axis[pivot] < 0.0 {
            axis.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(Vector::new(axis)?);
        explained_variance.push(values[col].max(0.0));
    }

    Ok(PcaBasis {
        mean: Vector::new(mean)?,
        components,
        explained_variance,
        rank_deficient: take < k,
    })
}

/// `output[j] = components[j] . (v - mean)`.
pub fn pca_project(basis: &PcaBasis, v: &Vector) -> Result<Vec<f64>> {
    if v.dim() != basis.dim() {
        return Err(Error::DimMismatch {
            expected: basis.dim(),
            got: v.dim(),
        });
    }
    Ok(basis
        .components
        .iter()
        .map(|comp| {
            comp.as_slice()
                .iter()
                .zip(v.as_slice())
                .zip(basis.mean.as_slice())
                .map(|((c, x), m)| c * (x - m))
                .sum()
        })
        .collect())
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
/// Returns eigenvalues and a matrix whose columns are the matching eigenvectors.
fn symmetric_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let scale: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();

    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum::<f64>()
            .sqrt();
        if off <= f64::EPSILON * scale * 1e-3 || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p][q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (akp, akq) = (row[p], row[q]);
                    row[p] = c * akp - s * akq;
                    row[q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vkp, vkq) = (row[p], row[q]);
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..n).map(|i| a[i][i]).collect(), v)
}
