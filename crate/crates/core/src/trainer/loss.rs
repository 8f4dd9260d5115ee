//! Triplet loss with online semi-hard negative mining.
//!
//! For every ordered anchor-positive pair `(a, p)` with equal labels, the mined
//! negative is the closest different-label sample that is still farther from the
//! anchor than the positive. When no such sample exists the farthest negative is
//! used instead. The loss is the mean over pairs of
//! `max(0, d2(a, p) - d2(a, n) + margin)` with squared Euclidean `d2`.

use super::matrix::Matrix;
use super::model::{EmbeddingModel, Gradients};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MinedTriplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
    /// False when the fallback (farthest negative) was taken.
    pub semi_hard: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletBatchState {
    pub embeddings: Matrix,
    pub labels: Vec<i32>,
    pub pdist2: Matrix,
    /// One entry per ordered anchor-positive pair, sorted by `(anchor, positive)`.
    pub triplets: Vec<MinedTriplet>,
}

/// Symmetric matrix of squared Euclidean distances between rows, exact zero diagonal.
pub fn pairwise_sq_dists(e: &Matrix) -> Matrix {
    let n = e.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = e
                .row(i)
                .iter()
                .zip(e.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d.set(i, j, v);
            d.set(j, i, v);
        }
    }
    d
}

pub fn mine_semi_hard(embeddings: &Matrix, labels: &[i32]) -> Result<TripletBatchState> {
    let n = embeddings.rows();
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{} labels for {n} embeddings",
            labels.len()
        )));
    }
    if n < 2 {
        return Err(Error::NoValidPairs);
    }
    if labels.iter().all(|&l| l == labels[0]) {
        return Err(Error::NoNegatives);
    }
    let pdist2 = pairwise_sq_dists(embeddings);
    let mut triplets = Vec::new();
    for a in 0..n {
        for p in (0..n).filter(|&p| p != a && labels[p] == labels[a]) {
            let dp = pdist2.get(a, p);
            let mut closest_beyond: Option<(f64, usize)> = None;
            let mut farthest: Option<(f64, usize)> = None;
            for neg in (0..n).filter(|&j| labels[j] != labels[a]) {
                let dn = pdist2.get(a, neg);
                if dn > dp && closest_beyond.is_none_or(|(best, _)| dn < best) {
                    closest_beyond = Some((dn, neg));
                }
                if farthest.is_none_or(|(best, _)| dn > best) {
                    farthest = Some((dn, neg));
                }
            }
            let (negative, semi_hard) = match closest_beyond {
                Some((_, neg)) => (neg, true),
                None => (farthest.expect("at least one negative").1, false),
            };
            triplets.push(MinedTriplet {
                anchor: a,
                positive: p,
                negative,
                semi_hard,
            });
        }
    }
    if triplets.is_empty() {
        return Err(Error::NoValidPairs);
    }
    Ok(TripletBatchState {
        embeddings: embeddings.clone(),
        labels: labels.to_vec(),
        pdist2,
        triplets,
    })
}

fn hinge(state: &TripletBatchState, t: &MinedTriplet, margin: f64) -> f64 {
    state.pdist2.get(t.anchor, t.positive) - state.pdist2.get(t.anchor, t.negative) + margin
}

pub fn triplet_semi_hard_loss(state: &TripletBatchState, margin: f64) -> f64 {
    let total: f64 = state
        .triplets
        .iter()
        .map(|t| hinge(state, t, margin).max(0.0))
        .sum();
    total / state.triplets.len() as f64
}

/// Loss and its gradient with respect to the embeddings, mining held fixed.
pub fn loss_and_embedding_grad(state: &TripletBatchState, margin: f64) -> (f64, Matrix) {
    let e = &state.embeddings;
    let scale = 1.0 / state.triplets.len() as f64;
    let mut grad = Matrix::zeros(e.rows(), e.cols());
    let mut total = 0.0;
    for t in &state.triplets {
        let h = hinge(state, t, margin);
        if h <= 0.0 {
            continue;
        }
        total += h;
        for c in 0..e.cols() {
            let (a, p, n) = (e.get(t.anchor, c), e.get(t.positive, c), e.get(t.negative, c));
            let ga = grad.get(t.anchor, c) + scale * 2.0 * (n - p);
            grad.set(t.anchor, c, ga);
            let gp = grad.get(t.positive, c) - scale * 2.0 * (a - p);
            grad.set(t.positive, c, gp);
            let gn = grad.get(t.negative, c) + scale * 2.0 * (a - n);
            grad.set(t.negative, c, gn);
        }
    }
    (total * scale, grad)
}

/// Forward pass, mining, loss, and exact backpropagation to every model parameter.
pub fn loss_gradient(
    model: &EmbeddingModel,
    features: &Matrix,
    labels: &[i32],
    margin: f64,
) -> Result<(f64, Gradients)> {
    let cache = model.forward_cached(features)?;
    let state = mine_semi_hard(&cache.embeddings, labels)?;
    let (loss, grad_e) = loss_and_embedding_grad(&state, margin);
    if !loss.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok((loss, model.backward(&cache, &grad_e)))
}

/// Loss of a model on a batch.
pub fn batch_loss(model: &EmbeddingModel, features: &Matrix, labels: &[i32], margin: f64) -> Result<f64> {
    let e = model.forward(features)?;
    Ok(triplet_semi_hard_loss(&mine_semi_hard(&e, labels)?, margin))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(values: &[f64]) -> Matrix {
        Matrix::from_vec(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn identical_embeddings_take_fallback() {
        let e = Matrix::from_rows(&vec![vec![0.6, 0.8]; 4]).unwrap();
        let state = mine_semi_hard(&e, &[0, 0, 1, 1]).unwrap();
        assert_eq!(state.triplets.len(), 4);
        for t in &state.triplets {
            assert!(!t.semi_hard);
            assert_eq!(state.pdist2.get(t.anchor, t.negative), 0.0);
        }
        assert_eq!(triplet_semi_hard_loss(&state, 1.0), 1.0);
    }

    #[test]
    fn one_dimensional_semi_hard_choice() {
        // a=0, p=0.1 (class A); negatives at 0.05 and 0.5 (class B)
        let e = col(&[0.0, 0.1, 0.05, 0.5]);
        let state = mine_semi_hard(&e, &[0, 0, 1, 1]).unwrap();
        let t = state.triplets[0];
        assert_eq!((t.anchor, t.positive), (0, 1));
        assert!((state.pdist2.get(0, 1) - 0.01).abs() < 1e-15);
        assert_eq!(t.negative, 3);
        assert!(t.semi_hard);
    }

    #[test]
    fn all_negatives_closer_uses_farthest() {
        let e = col(&[0.0, 1.0, 0.2, -0.3, 0.1]);
        let state = mine_semi_hard(&e, &[0, 0, 1, 1, 1]).unwrap();
        let t = state.triplets.iter().find(|t| t.anchor == 0).unwrap();
        assert!(!t.semi_hard);
        assert_eq!(t.negative, 3);
    }

    #[test]
    fn well_separated_batch_has_zero_loss_and_gradient() {
        let e = col(&[0.0, 0.1, 10.0, 10.1]);
        let state = mine_semi_hard(&e, &[0, 0, 1, 1]).unwrap();
        let (loss, grad) = loss_and_embedding_grad(&state, 1.0);
        assert_eq!(loss, 0.0);
        assert_eq!(triplet_semi_hard_loss(&state, 1.0), 0.0);
        assert!(grad.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn ties_pick_lowest_index() {
        let e = col(&[0.0, 0.1, 0.5, -0.5]);
        let state = mine_semi_hard(&e, &[0, 0, 1, 1]).unwrap();
        assert_eq!(state.triplets[0].negative, 2);
    }

    #[test]
    fn mining_errors() {
        let e = col(&[0.0, 1.0, 2.0]);
        assert!(matches!(mine_semi_hard(&e, &[0, 1, 2]), Err(Error::NoValidPairs)));
        assert!(matches!(mine_semi_hard(&e, &[4, 4, 4]), Err(Error::NoNegatives)));
        assert!(matches!(mine_semi_hard(&col(&[0.0]), &[0]), Err(Error::NoValidPairs)));
        assert!(matches!(mine_semi_hard(&e, &[0, 0]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn pdist_is_symmetric_with_zero_diagonal() {
        let e = Matrix::from_rows(&[vec![0.1, 0.2], vec![-0.4, 0.9], vec![0.3, 0.3]]).unwrap();
        let d = pairwise_sq_dists(&e);
        for i in 0..3 {
            assert_eq!(d.get(i, i), 0.0);
            for j in 0..3 {
                assert_eq!(d.get(i, j), d.get(j, i));
                assert!(d.get(i, j) >= 0.0);
            }
        }
    }
}
