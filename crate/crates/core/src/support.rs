//! Index sets and sparse integer vectors shared by the convolution engine
//! and the solvers.

use crate::error::{Error, Result};
use std::collections::BTreeMap;

/// A sorted, deduplicated set of integer indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct SupportSet {
    indices: Vec<i64>,
}

impl SupportSet {
    pub fn new(mut indices: Vec<i64>) -> SupportSet {
        indices.sort_unstable();
        indices.dedup();
        SupportSet { indices }
    }

    /// Validates every index lies in `[0, universe)`.
    pub fn in_universe(indices: Vec<i64>, universe: i64) -> Result<SupportSet> {
        let s = Self::new(indices);
        if let (Some(&lo), Some(&hi)) = (s.indices.first(), s.indices.last()) {
            if lo < 0 || hi >= universe {
                return Err(Error::Precondition(format!(
                    "index out of universe [0, {universe}): {}",
                    if lo < 0 { lo } else { hi }
                )));
            }
        }
        Ok(s)
    }

    pub fn indices(&self) -> &[i64] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: i64) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn min(&self) -> Option<i64> {
        self.indices.first().copied()
    }

    pub fn max(&self) -> Option<i64> {
        self.indices.last().copied()
    }

    pub fn shift(&self, offset: i64) -> SupportSet {
        SupportSet { indices: self.indices.iter().map(|&i| i + offset).collect() }
    }

    pub fn negate(&self) -> SupportSet {
        SupportSet { indices: self.indices.iter().rev().map(|&i| -i).collect() }
    }

    pub fn union(&self, other: &SupportSet) -> SupportSet {
        let mut v = Vec::with_capacity(self.len() + other.len());
        v.extend_from_slice(&self.indices);
        v.extend_from_slice(&other.indices);
        SupportSet::new(v)
    }

    pub fn intersect(&self, other: &SupportSet) -> SupportSet {
        let (small, big) = if self.len() <= other.len() { (self, other) } else { (other, self) };
        SupportSet {
            indices: small.indices.iter().copied().filter(|&i| big.contains(i)).collect(),
        }
    }

    /// Reduce every index modulo `m` (nonnegative residues), dedup.
    pub fn mod_reduce(&self, m: i64) -> SupportSet {
        SupportSet::new(self.indices.iter().map(|&i| i.rem_euclid(m)).collect())
    }

    /// The set `self + {0, step, 2*step, ..., (copies-1)*step}`.
    pub fn replicate(&self, step: i64, copies: u32) -> SupportSet {
        let mut v = Vec::with_capacity(self.len() * copies as usize);
        for k in 0..copies {
            v.extend(self.indices.iter().map(|&i| i + step * k as i64));
        }
        SupportSet::new(v)
    }
}

impl FromIterator<i64> for SupportSet {
    fn from_iter<T: IntoIterator<Item = i64>>(iter: T) -> Self {
        SupportSet::new(iter.into_iter().collect())
    }
}

/// A sparse signed integer vector with a recorded magnitude bound.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct SparseVector {
    entries: BTreeMap<i64, i64>,
    delta: u64,
}

impl SparseVector {
    /// Zero values are dropped; `delta` records the largest magnitude.
    pub fn new(entries: impl IntoIterator<Item = (i64, i64)>) -> SparseVector {
        let mut map = BTreeMap::new();
        let mut delta = 0u64;
        for (i, v) in entries {
            if v != 0 {
                delta = delta.max(v.unsigned_abs());
                map.insert(i, v);
            }
        }
        SparseVector { entries: map, delta }
    }

    /// Validates every stored index lies in `[0, universe)`.
    pub fn in_universe(
        entries: impl IntoIterator<Item = (i64, i64)>,
        universe: i64,
    ) -> Result<SparseVector> {
        let v = Self::new(entries);
        if let (Some((&lo, _)), Some((&hi, _))) =
            (v.entries.iter().next(), v.entries.iter().next_back())
        {
            if lo < 0 || hi >= universe {
                return Err(Error::Precondition(format!(
                    "vector index out of universe [0, {universe})"
                )));
            }
        }
        Ok(v)
    }

    pub fn indicator(support: &SupportSet) -> SparseVector {
        SparseVector::new(support.indices().iter().map(|&i| (i, 1)))
    }

    pub fn get(&self, i: i64) -> i64 {
        self.entries.get(&i).copied().unwrap_or(0)
    }

    pub fn delta(&self) -> u64 {
        self.delta
    }

    pub fn support(&self) -> SupportSet {
        SupportSet { indices: self.entries.keys().copied().collect() }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, i64)> + '_ {
        self.entries.iter().map(|(&i, &v)| (i, v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// True iff the support is contained in `set`.
    pub fn supported_on(&self, set: &SupportSet) -> bool {
        self.entries.keys().all(|&i| set.contains(i))
    }

    pub fn shift(&self, offset: i64) -> SparseVector {
        SparseVector {
            entries: self.entries.iter().map(|(&i, &v)| (i + offset, v)).collect(),
            delta: self.delta,
        }
    }

    /// Mirror indices: `out[-i] = self[i]`.
    pub fn negate_indices(&self) -> SparseVector {
        SparseVector {
            entries: self.entries.iter().map(|(&i, &v)| (-i, v)).collect(),
            delta: self.delta,
        }
    }
}

/// Exact integer values of a partial convolution, keyed by the requested
/// index set.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct PartialConvResult {
    pub values: BTreeMap<i64, i64>,
}

impl PartialConvResult {
    pub fn get(&self, c: i64) -> i64 {
        self.values.get(&c).copied().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_set_basics() {
        let s = SupportSet::new(vec![5, 1, 3, 1]);
        assert_eq!(s.indices(), &[1, 3, 5]);
        assert!(s.contains(3));
        assert!(!s.contains(2));
        assert_eq!(s.negate().indices(), &[-5, -3, -1]);
        assert_eq!(s.shift(10).indices(), &[11, 13, 15]);
        assert_eq!(s.replicate(10, 2).indices(), &[1, 3, 5, 11, 13, 15]);
    }

    #[test]
    fn universe_validation() {
        assert!(SupportSet::in_universe(vec![0, 3], 4).is_ok());
        assert!(SupportSet::in_universe(vec![4], 4).is_err());
        assert!(SupportSet::in_universe(vec![-1], 4).is_err());
    }

    #[test]
    fn sparse_vector_drops_zeros_and_tracks_delta() {
        let v = SparseVector::new(vec![(0, 2), (3, 0), (7, -9)]);
        assert_eq!(v.len(), 2);
        assert_eq!(v.delta(), 9);
        assert_eq!(v.get(3), 0);
        assert_eq!(v.support().indices(), &[0, 7]);
    }
}
