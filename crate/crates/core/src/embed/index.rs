use std::cmp::Ordering;
use std::collections::HashSet;

use serde::Serialize;

use super::EmbeddingVector;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Neighbor {
    pub entry_id: u32,
    pub score: f64,
}

/// Immutable brute-force cosine index.
#[derive(Debug, Clone)]
pub struct VectorIndex {
    entries: Vec<(u32, EmbeddingVector)>,
    dim: usize,
}

impl VectorIndex {
    pub fn build(entries: Vec<(u32, EmbeddingVector)>) -> Result<Self> {
        let dim = entries.first().map_or(0, |(_, v)| v.dim());
        let mut ids = HashSet::new();
        for (id, v) in &entries {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: v.dim(),
                });
            }
            if !ids.insert(*id) {
                return Err(Error::InvalidInput(format!("duplicate index entry id {id}")));
            }
        }
        Ok(VectorIndex { entries, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The `min(k, len)` entries most cosine-similar to `query`, by
    /// descending score with ties broken by ascending entry id.
    pub fn knn(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<Neighbor>> {
        if self.entries.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if query.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: query.dim(),
            });
        }
        let mut scored: Vec<Neighbor> = self
            .entries
            .iter()
            .map(|(id, v)| Neighbor {
                entry_id: *id,
                score: query.cosine(v),
            })
            .collect();
        scored.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(Ordering::Equal)
                .then(a.entry_id.cmp(&b.entry_id))
        });
        scored.truncate(k);
        Ok(scored)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(x: &[f64]) -> EmbeddingVector {
        EmbeddingVector::normalized(x.to_vec()).unwrap()
    }

    #[test]
    fn two_d_example() {
        let idx = VectorIndex::build(vec![(0, v(&[1.0, 0.0])), (1, v(&[0.0, 1.0]))]).unwrap();
        let got = idx.knn(&v(&[1.0, 0.0]), 2).unwrap();
        assert_eq!(
            got,
            vec![
                Neighbor { entry_id: 0, score: 1.0 },
                Neighbor { entry_id: 1, score: 0.0 }
            ]
        );
    }

    #[test]
    fn exact_match_ranks_first() {
        let idx = VectorIndex::build(vec![
            (5, v(&[1.0, 2.0, 3.0])),
            (6, v(&[3.0, 2.0, 1.0])),
            (7, v(&[0.0, 1.0, 0.0])),
        ])
        .unwrap();
        let got = idx.knn(&v(&[3.0, 2.0, 1.0]), 1).unwrap();
        assert_eq!(got[0].entry_id, 6);
        assert!((got[0].score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_clamped_to_index_size() {
        let idx = VectorIndex::build(vec![(0, v(&[1.0, 0.0])), (1, v(&[0.0, 1.0]))]).unwrap();
        assert_eq!(idx.knn(&v(&[1.0, 1.0]), 10).unwrap().len(), 2);
    }

    #[test]
    fn ties_break_by_entry_id() {
        let idx = VectorIndex::build(vec![(9, v(&[1.0, 0.0])), (3, v(&[1.0, 0.0]))]).unwrap();
        let got = idx.knn(&v(&[1.0, 0.0]), 2).unwrap();
        assert_eq!(got.iter().map(|n| n.entry_id).collect::<Vec<_>>(), vec![3, 9]);
    }

    #[test]
    fn errors() {
        let empty = VectorIndex::build(vec![]).unwrap();
        assert!(matches!(empty.knn(&v(&[1.0]), 1), Err(Error::EmptyIndex)));
        let idx = VectorIndex::build(vec![(0, v(&[1.0, 0.0]))]).unwrap();
        assert!(matches!(
            idx.knn(&v(&[1.0, 0.0, 0.0]), 1),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(VectorIndex::build(vec![(0, v(&[1.0])), (1, v(&[1.0, 0.0]))]).is_err());
        assert!(VectorIndex::build(vec![(0, v(&[1.0])), (0, v(&[2.0]))]).is_err());
    }

    fn vectors() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-3i8..=3, 3), 1..12).prop_map(|vs| {
            vs.into_iter()
                .map(|x| {
                    let mut x: Vec<f64> = x.into_iter().map(f64::from).collect();
                    if x.iter().all(|c| *c == 0.0) {
                        x[0] = 1.0;
                    }
                    x
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn insertion_order_invariant(vs in vectors(), q in prop::collection::vec(-3i8..=3, 3), k in 1usize..6, rot in 0usize..12) {
            let mut q: Vec<f64> = q.into_iter().map(f64::from).collect();
            if q.iter().all(|c| *c == 0.0) { q[2] = 1.0; }
            let q = v(&q);
            let entries: Vec<(u32, EmbeddingVector)> =
                vs.iter().enumerate().map(|(i, x)| (i as u32, v(x))).collect();
            let mut rotated = entries.clone();
            rotated.rotate_left(rot % entries.len());
            rotated.reverse();
            let a = VectorIndex::build(entries).unwrap().knn(&q, k).unwrap();
            let b = VectorIndex::build(rotated).unwrap().knn(&q, k).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.len(), k.min(vs.len()));
            for n in &a {
                prop_assert!(a[0].score >= n.score);
                prop_assert!((-1.0..=1.0).contains(&n.score));
            }
        }
    }
}
