use crate::error::{Error, Result};
use crate::rng;

/// A feature subset in canonical (ascending) order, so equal index sets compare
/// equal however they were built. Indices are 0-based.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubsetView {
    indices: Vec<usize>,
}

impl SubsetView {
    pub fn new(mut indices: Vec<usize>, n_features: usize) -> Result<Self> {
        indices.sort_unstable();
        if let Some(&bad) = indices.iter().find(|&&i| i >= n_features) {
            return Err(Error::InvalidArgument(format!(
                "feature index {bad} out of range for {n_features} features"
            )));
        }
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!(
                "duplicate feature index in {indices:?}"
            )));
        }
        Ok(SubsetView { indices })
    }

    pub fn full(n_features: usize) -> Self {
        SubsetView {
            indices: (0..n_features).collect(),
        }
    }

    pub fn empty() -> Self {
        SubsetView {
            indices: Vec::new(),
        }
    }

    pub fn from_mask(mask: u64, n_features: usize) -> Self {
        SubsetView {
            indices: (0..n_features).filter(|i| mask >> i & 1 == 1).collect(),
        }
    }

    pub fn mask(&self) -> u64 {
        self.indices.iter().fold(0, |m, &i| m | 1 << i)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn without(&self, i: usize) -> Self {
        SubsetView {
            indices: self.indices.iter().copied().filter(|&j| j != i).collect(),
        }
    }
}

/// Uniformly random `k`-subset of `n_features`, a pure function of
/// `(sample_id, k, seed)`.
pub fn mask_to_size(sample_id: u64, n_features: usize, k: usize, seed: u64) -> Result<SubsetView> {
    if k > n_features {
        return Err(Error::InvalidArgument(format!(
            "subset size {k} exceeds {n_features} features"
        )));
    }
    let mut r = rng::stream(seed, &[0x3a5c, sample_id, k as u64]);
    let picked = rand::seq::index::sample(&mut r, n_features, k).into_vec();
    SubsetView::new(picked, n_features)
}
