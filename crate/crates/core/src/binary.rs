//! Binarized embeddings packed into 64-bit subcodes.

use crate::error::{Error, Result};
use crate::vector::Vector;

/// Bits per subcode word.
pub const SUBCODE_BITS: usize = 64;

/// Number of 64-bit subcodes needed for `width` bits.
pub const fn words_for(width: usize) -> usize {
    width.div_ceil(SUBCODE_BITS)
}

/// Fixed-width bit string; bit `i` lives in word `i / 64` at position `i % 64`.
/// Padding bits past `width` are always zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryCode {
    words: Vec<u64>,
    width: usize,
}

impl BinaryCode {
    pub fn zeros(width: usize) -> Self {
        Self {
            words: vec![0; words_for(width)],
            width,
        }
    }

    /// Builds a code from raw subcodes, rejecting set padding bits.
    pub fn from_words(words: Vec<u64>, width: usize) -> Result<Self> {
        if words.len() != words_for(width) {
            return Err(Error::ShapeMismatch(format!(
                "{} subcodes for width {width}",
                words.len()
            )));
        }
        let code = Self { words, width };
        if let Some(&last) = code.words.last() {
            if last & !code.last_word_mask() != 0 {
                return Err(Error::ShapeMismatch("padding bits set".into()));
            }
        }
        Ok(code)
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut code = Self::zeros(bits.len());
        for (i, _) in bits.iter().enumerate().filter(|(_, b)| **b) {
            code.words[i / SUBCODE_BITS] |= 1 << (i % SUBCODE_BITS);
        }
        code
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn subcode_width(&self) -> usize {
        SUBCODE_BITS
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit(&self, i: usize) -> bool {
        assert!(i < self.width, "bit {i} out of range for width {}", self.width);
        self.words[i / SUBCODE_BITS] >> (i % SUBCODE_BITS) & 1 == 1
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    /// Bitwise complement within `width`; padding stays zero.
    pub fn complement(&self) -> Self {
        let mut words: Vec<u64> = self.words.iter().map(|w| !w).collect();
        if let Some(last) = words.last_mut() {
            *last &= self.last_word_mask();
        }
        Self {
            words,
            width: self.width,
        }
    }

    fn last_word_mask(&self) -> u64 {
        match self.width % SUBCODE_BITS {
            0 => u64::MAX,
            r => (1u64 << r) - 1,
        }
    }
}

/// Writes the thresholded bits of `values` into `out` (which must hold `words_for(len)` words).
pub(crate) fn binarize_into<T: Copy + PartialOrd>(values: &[T], thresholds: &[T], out: &mut [u64]) {
    debug_assert_eq!(values.len(), thresholds.len());
    debug_assert_eq!(out.len(), words_for(values.len()));
    for (word, (vs, ts)) in out
        .iter_mut()
        .zip(values.chunks(SUBCODE_BITS).zip(thresholds.chunks(SUBCODE_BITS)))
    {
        *word = vs
            .iter()
            .zip(ts)
            .enumerate()
            .filter(|(_, (v, t))| v > t)
            .fold(0u64, |acc, (i, _)| acc | (1 << i));
    }
}

pub fn binarize_slice<T: Copy + PartialOrd>(values: &[T], thresholds: &[T]) -> Result<BinaryCode> {
    if values.len() != thresholds.len() {
        return Err(Error::DimMismatch {
            expected: thresholds.len(),
            got: values.len(),
        });
    }
    let mut code = BinaryCode::zeros(values.len());
    binarize_into(values, thresholds, &mut code.words);
    Ok(code)
}

/// Bit `i` is set iff `v[i] > thresholds[i]`.
pub fn binarize(v: &Vector, thresholds: &Vector) -> Result<BinaryCode> {
    binarize_slice(v.as_slice(), thresholds.as_slice())
}

pub(crate) fn hamming_words(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

/// Number of differing bits, via per-subcode XOR and popcount.
pub fn hamming(a: &BinaryCode, b: &BinaryCode) -> Result<u32> {
    if a.width != b.width {
        return Err(Error::WidthMismatch {
            left: a.width,
            right: b.width,
        });
    }
    Ok(hamming_words(&a.words, &b.words))
}

/// Per-dimension medians of a set of equal-length rows. Even counts take the
/// midpoint of the two central values.
pub fn median_thresholds<'a, I>(rows: I, dim: usize) -> Vec<f32>
where
    I: IntoIterator<Item = &'a [f32]>,
{
    let mut columns: Vec<Vec<f32>> = vec![Vec::new(); dim];
    for row in rows {
        for (col, &v) in columns.iter_mut().zip(row) {
            col.push(v);
        }
    }
    columns
        .into_iter()
        .map(|mut col| {
            if col.is_empty() {
                return 0.0;
            }
            col.sort_unstable_by(f32::total_cmp);
            let n = col.len();
            if n % 2 == 1 {
                col[n / 2]
            } else {
                ((f64::from(col[n / 2 - 1]) + f64::from(col[n / 2])) / 2.0) as f32
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn bits(s: &str) -> BinaryCode {
        BinaryCode::from_bits(&s.chars().map(|c| c == '1').collect::<Vec<_>>())
    }

    #[test]
    fn binarize_examples() {
        let v = Vector::new(vec![0.5, -0.2, 0.1, -0.9]).unwrap();
        let zero = Vector::zeros(4).unwrap();
        assert_eq!(binarize(&v, &zero).unwrap(), bits("1010"));
        assert_eq!(binarize(&v, &v).unwrap().count_ones(), 0);
        let short = Vector::zeros(3).unwrap();
        assert!(matches!(binarize(&v, &short), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn padding_stays_zero() {
        let values = vec![1.0f32; 70];
        let code = binarize_slice(&values, &[0.0f32; 70]).unwrap();
        assert_eq!(code.words().len(), 2);
        assert_eq!(code.words()[1], (1 << 6) - 1);
        assert_eq!(code.complement().count_ones(), 0);
        assert!(BinaryCode::from_words(vec![0, 1 << 6], 70).is_err());
        assert!(BinaryCode::from_words(vec![0], 70).is_err());
    }

    #[test]
    fn hamming_examples() {
        assert_eq!(hamming(&bits("1010"), &bits("0110")).unwrap(), 2);
        let x = BinaryCode::from_words(vec![0xdead_beef_0123_4567], 64).unwrap();
        assert_eq!(hamming(&x, &x).unwrap(), 0);
        assert_eq!(hamming(&x, &x.complement()).unwrap(), 64);
        assert!(matches!(
            hamming(&bits("101"), &bits("1010")),
            Err(Error::WidthMismatch { left: 3, right: 4 })
        ));
    }

    #[test]
    fn median_thresholds_balance_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dim = 16;
        let rows: Vec<Vec<f32>> = (0..1000)
            .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let thresholds = median_thresholds(rows.iter().map(Vec::as_slice), dim);
        let mut ones = vec![0usize; dim];
        for row in &rows {
            let code = binarize_slice(row, &thresholds).unwrap();
            for (i, count) in ones.iter_mut().enumerate() {
                *count += usize::from(code.bit(i));
            }
        }
        for count in ones {
            assert!((450..=550).contains(&count), "unbalanced bit: {count}/1000");
        }
    }

    #[test]
    fn median_of_odd_and_even() {
        let rows = [vec![1.0f32, 5.0], vec![3.0, 1.0], vec![2.0, 4.0]];
        assert_eq!(median_thresholds(rows.iter().map(Vec::as_slice), 2), vec![2.0, 4.0]);
        let rows = [vec![1.0f32], vec![2.0]];
        assert_eq!(median_thresholds(rows.iter().map(Vec::as_slice), 1), vec![1.5]);
    }

    fn code_pair(width: usize) -> impl Strategy<Value = (Vec<bool>, Vec<bool>, Vec<bool>)> {
        (
            prop::collection::vec(any::<bool>(), width),
            prop::collection::vec(any::<bool>(), width),
            prop::collection::vec(any::<bool>(), width),
        )
    }

    proptest! {
        #[test]
        fn hamming_is_a_metric((a, b, c) in (1usize..200).prop_flat_map(code_pair)) {
            let (a, b, c) = (BinaryCode::from_bits(&a), BinaryCode::from_bits(&b), BinaryCode::from_bits(&c));
            let ab = hamming(&a, &b).unwrap();
            prop_assert_eq!(ab, hamming(&b, &a).unwrap());
            prop_assert_eq!(ab == 0, a == b);
            prop_assert!(hamming(&a, &c).unwrap() <= ab + hamming(&b, &c).unwrap());
            prop_assert!(ab as usize <= a.width());
        }

        #[test]
        fn hamming_counts_threshold_disagreements(
            (u, v, t) in (1usize..150).prop_flat_map(|d| (
                prop::collection::vec(-1.0f64..1.0, d),
                prop::collection::vec(-1.0f64..1.0, d),
                prop::collection::vec(-0.5f64..0.5, d),
            ))
        ) {
            let naive = u.iter().zip(&v).zip(&t)
                .filter(|((x, y), th)| (*x > *th) != (*y > *th))
                .count();
            let cu = binarize_slice(&u, &t).unwrap();
            let cv = binarize_slice(&v, &t).unwrap();
            prop_assert_eq!(hamming(&cu, &cv).unwrap() as usize, naive);
        }
    }
}
