//! Hashed character n-gram embeddings.
//!
//! Every 1-, 2- and 3-gram of code points is hashed with FNV-1a-64 over its
//! UTF-8 bytes and counted in bucket `hash % 256`. The count vector is then
//! L2-normalized. The result is identical on every platform.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EMBEDDING_DIM: usize = 256;
const NGRAM_SIZES: [usize; 3] = [1, 2, 3];

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("dimension mismatch: {left} vs {right}")]
pub struct DimensionMismatch {
    pub left: usize,
    pub right: usize,
}

pub fn bucket_of(ngram: &str) -> usize {
    (fnv1a64(ngram.as_bytes()) % EMBEDDING_DIM as u64) as usize
}

pub fn embed_text(text: &str) -> EmbeddingVector {
    let bounds: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect();
    let chars = bounds.len() - 1;
    let mut counts = vec![0.0f64; EMBEDDING_DIM];
    for n in NGRAM_SIZES {
        for start in 0..chars.saturating_sub(n - 1) {
            counts[bucket_of(&text[bounds[start]..bounds[start + n]])] += 1.0;
        }
    }
    let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm > 0.0 {
        counts.iter_mut().for_each(|c| *c /= norm);
    }
    EmbeddingVector(counts)
}

/// Cosine similarity, defined as 0 when either side is the zero vector.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, DimensionMismatch> {
    if a.dim() != b.dim() {
        return Err(DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    // Independent byte-at-a-time FNV-1a with the published 64-bit parameters.
    fn reference_fnv(s: &str) -> u64 {
        let mut h: u64 = 14695981039346656037;
        for b in s.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(1099511628211);
        }
        h
    }

    fn ngram_buckets(s: &str) -> BTreeSet<usize> {
        let chars: Vec<char> = s.chars().collect();
        let mut out = BTreeSet::new();
        for n in 1..=3 {
            for w in chars.windows(n) {
                let g: String = w.iter().collect();
                out.insert((reference_fnv(&g) % 256) as usize);
            }
        }
        out
    }

    #[test]
    fn fnv_known_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64("ラーメン".as_bytes()), reference_fnv("ラーメン"));
    }

    #[test]
    fn empty_is_zero() {
        let v = embed_text("");
        assert_eq!(v.dim(), EMBEDDING_DIM);
        assert!(v.is_zero());
    }

    #[test]
    fn aa_counts() {
        let (ha, haa) = ((reference_fnv("a") % 256) as usize, (reference_fnv("aa") % 256) as usize);
        assert_eq!((ha, haa), (140, 183));
        let v = embed_text("aa");
        let expected_a = 2.0 / 5f64.sqrt();
        let expected_aa = 1.0 / 5f64.sqrt();
        assert!((v.values()[ha] - expected_a).abs() < 1e-12);
        assert!((v.values()[haa] - expected_aa).abs() < 1e-12);
        assert_eq!(v.values().iter().filter(|&&x| x != 0.0).count(), 2);
    }

    #[test]
    fn cosine_basics() {
        let v = embed_text("京都の紅葉");
        assert!((cosine_similarity(&v, &v).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(cosine_similarity(&EmbeddingVector::zeros(EMBEDDING_DIM), &v).unwrap(), 0.0);
        assert!(cosine_similarity(&EmbeddingVector::zeros(3), &v).is_err());
    }

    #[test]
    fn disjoint_buckets_are_orthogonal() {
        let (a, b) = (ngram_buckets("abc"), ngram_buckets("xyz"));
        assert!(a.is_disjoint(&b), "{a:?} / {b:?}");
        let sim = cosine_similarity(&embed_text("abc"), &embed_text("xyz")).unwrap();
        assert_eq!(sim, 0.0);
    }

    proptest! {
        #[test]
        fn unit_norm_or_zero(s in "\\PC{0,24}") {
            let v = embed_text(&s);
            if s.is_empty() {
                prop_assert!(v.is_zero());
            } else {
                prop_assert!((v.norm() - 1.0).abs() <= 1e-9);
            }
        }

        #[test]
        fn cosine_symmetric_and_bounded(a in "\\PC{0,12}", b in "\\PC{0,12}") {
            let (va, vb) = (embed_text(&a), embed_text(&b));
            let ab = cosine_similarity(&va, &vb).unwrap();
            let ba = cosine_similarity(&vb, &va).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
        }
    }
}
