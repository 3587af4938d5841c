use crate::rng;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Where a permutation's randomness came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lineage {
    pub seed: u64,
    pub stream: Vec<u64>,
}

/// A join order over feature ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    pub order: Vec<usize>,
    pub lineage: Option<Lineage>,
}

/// Uniform random order of `0..n` (Fisher–Yates).
pub fn sample_permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Permutation {
    Permutation {
        order: shuffled(n, rng),
        lineage: None,
    }
}

/// Uniform random order of `0..n` drawn from the named stream of `seed`.
pub fn seeded_permutation(n: usize, seed: u64, stream: &[u64]) -> Permutation {
    let mut r = rng::stream(seed, stream);
    Permutation {
        order: shuffled(n, &mut r),
        lineage: Some(Lineage {
            seed,
            stream: stream.to_vec(),
        }),
    }
}

pub(crate) fn shuffled<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn single_feature() {
        assert_eq!(sample_permutation(1, &mut rng::seeded(3)).order, vec![0]);
    }

    #[test]
    fn uniform_over_orders() {
        let mut r = rng::seeded(11);
        let draws = 60_000;
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for _ in 0..draws {
            *counts
                .entry(sample_permutation(3, &mut r).order)
                .or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        let expect = draws as f64 / 6.0;
        let sigma = (draws as f64 * (1.0 / 6.0) * (5.0 / 6.0)).sqrt();
        for (order, c) in counts {
            assert!((c as f64 - expect).abs() < 3.0 * sigma, "{order:?}: {c}");
        }
    }

    #[test]
    fn reproducible_under_seed() {
        let a = seeded_permutation(9, 5, &[1, 2]);
        let b = seeded_permutation(9, 5, &[1, 2]);
        assert_eq!(a, b);
        assert_eq!(a.lineage.as_ref().unwrap().stream, vec![1, 2]);
        assert_ne!(a.order, seeded_permutation(9, 5, &[1, 3]).order);
        let mut sorted = a.order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..9).collect::<Vec<_>>());
    }
}
