//! Sparse vectors and coordinate selection masks.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Index/value pairs over a declared dimension.
///
/// Entries are kept sorted by strictly increasing index; stored values may be
/// zero (e.g. after arithmetic), so the ℓ0 "support" counts nonzero values
/// rather than stored entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseVector<F> {
    dim: usize,
    entries: Vec<(usize, F)>,
}

impl<F: Real> SparseVector<F> {
    /// Builds from entries that must already be sorted by strictly increasing
    /// index, all below `dim`.
    pub fn new(dim: usize, entries: Vec<(usize, F)>) -> Result<Self> {
        let mut last: Option<usize> = None;
        for &(i, _) in &entries {
            if i >= dim {
                return Err(Error::invalid(format!("index {i} out of range for dimension {dim}")));
            }
            if let Some(prev) = last {
                if i <= prev {
                    return Err(Error::invalid(format!(
                        "indices must be strictly increasing ({prev} then {i})"
                    )));
                }
            }
            last = Some(i);
        }
        Ok(Self { dim, entries })
    }

    pub fn zeros(dim: usize) -> Self {
        Self { dim, entries: Vec::new() }
    }

    /// Builds from arbitrary (index, value) pairs, sorting and summing
    /// duplicates. Handy for gradient accumulation.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (usize, F)>) -> Result<Self> {
        let mut pairs: Vec<(usize, F)> = pairs.into_iter().collect();
        pairs.sort_unstable_by_key(|&(i, _)| i);
        let mut entries: Vec<(usize, F)> = Vec::with_capacity(pairs.len());
        for (i, v) in pairs {
            if i >= dim {
                return Err(Error::invalid(format!("index {i} out of range for dimension {dim}")));
            }
            match entries.last_mut() {
                Some((j, acc)) if *j == i => *acc += v,
                _ => entries.push((i, v)),
            }
        }
        Ok(Self { dim, entries })
    }

    pub fn from_dense(values: &[F]) -> Self {
        let entries = values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != F::zero())
            .map(|(i, v)| (i, *v))
            .collect();
        Self { dim: values.len(), entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored entries with nonzero value (ℓ0 norm).
    pub fn support(&self) -> usize {
        self.entries.iter().filter(|(_, v)| *v != F::zero()).count()
    }

    pub fn entries(&self) -> &[(usize, F)] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, F)> + '_ {
        self.entries.iter().copied()
    }

    pub fn get(&self, index: usize) -> F {
        match self.entries.binary_search_by_key(&index, |&(i, _)| i) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => F::zero(),
        }
    }

    pub fn l2_norm(&self) -> F {
        self.entries.iter().map(|&(_, v)| v * v).sum::<F>().sqrt()
    }

    pub fn linf_norm(&self) -> F {
        self.entries.iter().fold(F::zero(), |m, &(_, v)| m.max(v.abs()))
    }

    pub fn scale(&mut self, factor: F) {
        for (_, v) in &mut self.entries {
            *v *= factor;
        }
    }

    pub fn dot_dense(&self, dense: &[F]) -> Result<F> {
        if dense.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: dense.len() });
        }
        Ok(self.entries.iter().map(|&(i, v)| v * dense[i]).sum())
    }

    /// `dense[i] += factor * self[i]` over the stored entries.
    pub fn add_scaled_into(&self, dense: &mut [F], factor: F) -> Result<()> {
        if dense.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: dense.len() });
        }
        for &(i, v) in &self.entries {
            dense[i] += factor * v;
        }
        Ok(())
    }

    pub fn to_dense(&self) -> Vec<F> {
        let mut out = vec![F::zero(); self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    /// Drops stored entries whose value is exactly zero.
    pub fn prune_zeros(&mut self) {
        self.entries.retain(|&(_, v)| v != F::zero());
    }
}

/// Set of selected coordinate indices with a cardinality bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionMask {
    dim: usize,
    selected: Vec<usize>,
    cap: usize,
}

impl SelectionMask {
    /// Builds from sorted, distinct indices below `dim`, at most `cap` of them.
    pub fn new(dim: usize, selected: Vec<usize>, cap: usize) -> Result<Self> {
        if selected.len() > cap {
            return Err(Error::Invariant(format!(
                "selection of size {} exceeds cap {cap}",
                selected.len()
            )));
        }
        let mut last: Option<usize> = None;
        for &i in &selected {
            if i >= dim {
                return Err(Error::invalid(format!("index {i} out of range for dimension {dim}")));
            }
            if let Some(prev) = last {
                if i <= prev {
                    return Err(Error::invalid("selection indices must be sorted and distinct".to_string()));
                }
            }
            last = Some(i);
        }
        Ok(Self { dim, selected, cap })
    }

    pub fn full(dim: usize) -> Self {
        Self { dim, selected: (0..dim).collect(), cap: dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.selected
    }

    pub fn contains(&self, index: usize) -> bool {
        self.selected.binary_search(&index).is_ok()
    }

    /// Hadamard product with a sparse vector: keeps only masked coordinates.
    pub fn apply<F: Real>(&self, v: &SparseVector<F>) -> Result<SparseVector<F>> {
        if v.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: v.dim() });
        }
        let entries = v.iter().filter(|&(i, _)| self.contains(i)).collect();
        SparseVector::new(self.dim, entries)
    }

    /// Hadamard product with a dense vector, returned sparse.
    pub fn apply_dense<F: Real>(&self, dense: &[F]) -> Result<SparseVector<F>> {
        if dense.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: dense.len() });
        }
        let entries = self.selected.iter().map(|&i| (i, dense[i])).collect();
        SparseVector::new(self.dim, entries)
    }
}
