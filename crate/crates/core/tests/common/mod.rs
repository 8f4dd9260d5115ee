//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use simsearch_core::trainer::{
    loss_gradient, mine_semi_hard, pairwise_sq_dists, triplet_semi_hard_loss, EmbeddingModel,
    Matrix, TripletBatchState,
};
use simsearch_core::{IndexEntry, Metric};

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn unit_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect()
}

/// Labels in `0..classes` with at least one repeated label and two distinct labels.
pub fn valid_labels(rng: &mut ChaCha8Rng, n: usize, classes: usize) -> Vec<i32> {
    loop {
        let labels: Vec<i32> = (0..n).map(|_| rng.random_range(0..classes) as i32).collect();
        let distinct = labels.iter().collect::<std::collections::BTreeSet<_>>().len();
        let repeated = (0..n).any(|i| (0..i).any(|j| labels[j] == labels[i]));
        if distinct >= 2 && repeated {
            return labels;
        }
    }
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Enumerates every (anchor, positive, negative) triple and picks, per ordered pair,
/// the semi-hard negative with the smallest distance (else the farthest negative),
/// lowest index first on ties. Returns `(anchor, positive, negative, semi_hard)`.
pub fn brute_force_mining(rows: &[Vec<f64>], labels: &[i32]) -> Vec<(usize, usize, usize, bool)> {
    let n = rows.len();
    let mut out = Vec::new();
    for a in 0..n {
        for p in 0..n {
            if a == p || labels[a] != labels[p] {
                continue;
            }
            let dap = sq(&rows[a], &rows[p]);
            let mut semi: Vec<(f64, usize)> = Vec::new();
            let mut all: Vec<(f64, usize)> = Vec::new();
            for (neg, row) in rows.iter().enumerate() {
                if labels[neg] == labels[a] {
                    continue;
                }
                let dan = sq(&rows[a], row);
                all.push((dan, neg));
                if dan > dap {
                    semi.push((dan, neg));
                }
            }
            if semi.is_empty() {
                all.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
                out.push((a, p, all[0].1, false));
            } else {
                semi.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                out.push((a, p, semi[0].1, true));
            }
        }
    }
    out
}

pub fn brute_force_loss(rows: &[Vec<f64>], labels: &[i32], margin: f64) -> f64 {
    let mined = brute_force_mining(rows, labels);
    let total: f64 = mined
        .iter()
        .map(|&(a, p, neg, _)| (sq(&rows[a], &rows[p]) - sq(&rows[a], &rows[neg]) + margin).max(0.0))
        .sum();
    total / mined.len() as f64
}

/// Random batch for the loss oracle: n <= 32, d <= 16, 2-5 classes.
pub fn random_batch(seed: u64) -> (Vec<Vec<f64>>, Vec<i32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=32);
    let d = rng.random_range(1..=16);
    let classes = rng.random_range(2..=5).min(n - 1);
    let labels = valid_labels(&mut rng, n, classes);
    (unit_rows(&mut rng, n, d), labels)
}

/// Exact nearest neighbors by sorting every stored entry on `(distance, id)`. The
/// query is normalized and rounded to f32, the precision the index stores.
pub fn full_sort_knn(entries: &[IndexEntry], q: &[f64], k: usize, metric: Metric) -> Vec<(u64, f64)> {
    let raw = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    let q: Vec<f64> = q.iter().map(|x| f64::from((x / raw) as f32)).collect();
    let q = &q[..];
    let qn = q.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut scored: Vec<(u64, f64)> = entries
        .iter()
        .map(|e| {
            let v: Vec<f64> = e.embedding.iter().map(|&x| f64::from(x)).collect();
            let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            let d = match metric {
                Metric::SquaredEuclidean => sq(q, &v),
                Metric::Euclidean => sq(q, &v).sqrt(),
                Metric::Cosine => {
                    let qs: Vec<f64> = q.iter().map(|x| x / qn).collect();
                    let vs: Vec<f64> = v.iter().map(|x| x / vn).collect();
                    sq(&qs, &vs) / 2.0
                }
            };
            (e.id, d)
        })
        .collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

pub struct GradientCheck {
    pub max_rel_error: f64,
    pub params: usize,
}

/// Hidden pre-activations of every non-final layer.
fn hidden_pre_activations(model: &EmbeddingModel, x: &Matrix) -> Vec<f64> {
    let mut out = Vec::new();
    let mut h: Vec<Vec<f64>> = x.iter_rows().map(<[f64]>::to_vec).collect();
    for layer in &model.layers[..model.layers.len() - 1] {
        h = h
            .iter()
            .map(|row| {
                (0..layer.out_dim())
                    .map(|o| {
                        let z = layer.bias[o]
                            + layer.weights.row(o).iter().zip(row).map(|(w, v)| w * v).sum::<f64>();
                        out.push(z);
                        z.max(0.0)
                    })
                    .collect()
            })
            .collect();
    }
    out
}

fn fixed_mining_loss(model: &EmbeddingModel, x: &Matrix, mined: &TripletBatchState, margin: f64) -> f64 {
    let e = model.forward(x).expect("forward");
    let state = TripletBatchState {
        pdist2: pairwise_sq_dists(&e),
        embeddings: e,
        labels: mined.labels.clone(),
        triplets: mined.triplets.clone(),
    };
    triplet_semi_hard_loss(&state, margin)
}

/// Analytic gradient vs central differences (h = 1e-5) on a random small model and
/// batch. Returns `None` when the draw sits within 1e-4 of a hinge or ReLU kink, or
/// has zero loss, since finite differences are then not a valid reference.
pub fn gradient_check(seed: u64) -> Option<GradientCheck> {
    const H: f64 = 1e-5;
    const KINK: f64 = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let in_dim = rng.random_range(1..=8);
    let hidden: Vec<usize> = (0..rng.random_range(0..=2)).map(|_| rng.random_range(2..=8)).collect();
    let out_dim = rng.random_range(2..=6);
    let dims: Vec<usize> = std::iter::once(in_dim).chain(hidden).chain(std::iter::once(out_dim)).collect();
    let n = rng.random_range(3..=8);
    let classes = rng.random_range(2..=3);
    let margin = rng.random_range(0.2..1.5);

    let mut model = EmbeddingModel::new_random(&dims, seed).expect("model");
    for layer in &mut model.layers {
        layer.bias.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
    }
    let x = Matrix::from_vec(n, in_dim, (0..n * in_dim).map(|_| gaussian(&mut rng)).collect()).unwrap();
    let labels = valid_labels(&mut rng, n, classes);

    if hidden_pre_activations(&model, &x).iter().any(|z| z.abs() < KINK) {
        return None;
    }
    let e = model.forward(&x).ok()?;
    let mined = mine_semi_hard(&e, &labels).ok()?;
    let hinges: Vec<f64> = mined
        .triplets
        .iter()
        .map(|t| mined.pdist2.get(t.anchor, t.positive) - mined.pdist2.get(t.anchor, t.negative) + margin)
        .collect();
    if hinges.iter().any(|h| h.abs() < KINK) || hinges.iter().all(|&h| h <= 0.0) {
        return None;
    }

    let (_, grads) = loss_gradient(&model, &x, &labels, margin).expect("gradient");
    let analytic = grads.flatten();
    let mut numeric = Vec::with_capacity(analytic.len());
    for l in 0..model.layers.len() {
        let n_weights = model.layers[l].weights.as_slice().len();
        for i in 0..n_weights + model.layers[l].bias.len() {
            let probe = |delta: f64| {
                let mut m = model.clone();
                if i < n_weights {
                    m.layers[l].weights.as_mut_slice()[i] += delta;
                } else {
                    m.layers[l].bias[i - n_weights] += delta;
                }
                fixed_mining_loss(&m, &x, &mined, margin)
            };
            numeric.push((probe(H) - probe(-H)) / (2.0 * H));
        }
    }
    let max_rel_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &f)| relative_error(a, f))
        .fold(0.0, f64::max);
    Some(GradientCheck { max_rel_error, params: analytic.len() })
}

/// `|a - f| / max(|a|, |f|)`, with a floor of 1e-7 on the denominator: central
/// differences of an O(1) loss carry roughly 1e-11 of rounding noise, so entries
/// smaller than the floor are compared on an absolute scale.
pub fn relative_error(a: f64, f: f64) -> f64 {
    (a - f).abs() / a.abs().max(f.abs()).max(1e-7)
}
