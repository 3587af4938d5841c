use super::value::{TabularGame, ValueFunction};
use crate::error::{Error, Result};
use crate::rng;
use crate::training::seeded_permutation;
use serde::{Deserialize, Serialize};

/// Largest player count for exhaustive enumeration of join orders.
pub const MAX_EXHAUSTIVE_FEATURES: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub phi: Vec<f64>,
    /// Standard error of each entry; zero when every order was enumerated.
    pub std_error: Vec<f64>,
    pub n_permutations: usize,
    pub exhaustive: bool,
}

pub(crate) fn factorial(n: usize) -> Option<usize> {
    (1..=n).try_fold(1usize, |acc, k| acc.checked_mul(k))
}

/// Calls `f` on every order of `0..n`, in lexicographic order.
pub(crate) fn for_each_permutation(
    n: usize,
    mut f: impl FnMut(&[usize]) -> Result<()>,
) -> Result<()> {
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        f(&p)?;
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| p[i - 1] < p[i]) else {
            return Ok(());
        };
        let j = (i..n)
            .rev()
            .find(|&j| p[j] > p[i - 1])
            .expect("a larger element exists");
        p.swap(i - 1, j);
        p[i..].reverse();
    }
}

fn accumulate(phi: &mut [f64], order: &[usize], prefix: &[f64]) {
    for (k, &i) in order.iter().enumerate() {
        phi[i] += prefix[k + 1] - prefix[k];
    }
}

/// Exact Shapley values: marginal contributions averaged over all `N!`
/// join orders, one prefix sweep per order.
pub fn shapley_exhaustive(v: &dyn ValueFunction) -> Result<OracleResult> {
    let n = v.n_features();
    if n > MAX_EXHAUSTIVE_FEATURES {
        return Err(Error::TooManyFeatures {
            n,
            max: MAX_EXHAUSTIVE_FEATURES,
        });
    }
    let mut phi = vec![0.0; n];
    let mut count = 0usize;
    for_each_permutation(n, |order| {
        accumulate(&mut phi, order, &v.prefix_values(order)?);
        count += 1;
        Ok(())
    })?;
    let m = count as f64;
    Ok(OracleResult {
        phi: phi.into_iter().map(|p| p / m).collect(),
        std_error: vec![0.0; n],
        n_permutations: count,
        exhaustive: true,
    })
}

/// Monte-Carlo Shapley values over `n_perms` uniform join orders drawn from
/// `seed`. Asking for exactly `N!` orders enumerates each once instead and
/// returns the exact values.
pub fn shapley_montecarlo(
    v: &dyn ValueFunction,
    n_perms: usize,
    seed: u64,
) -> Result<OracleResult> {
    let n = v.n_features();
    if n_perms == 0 {
        return Err(Error::InvalidArgument("n_perms must be >= 1".into()));
    }
    if n <= MAX_EXHAUSTIVE_FEATURES && factorial(n) == Some(n_perms) {
        return shapley_exhaustive(v);
    }
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    for p in 0..n_perms {
        let order = seeded_permutation(n, seed, &[p as u64]).order;
        let prefix = v.prefix_values(&order)?;
        for (k, &i) in order.iter().enumerate() {
            let d = prefix[k + 1] - prefix[k];
            sum[i] += d;
            sum_sq[i] += d * d;
        }
    }
    let m = n_perms as f64;
    let phi: Vec<f64> = sum.iter().map(|s| s / m).collect();
    let std_error = sum_sq
        .iter()
        .zip(&phi)
        .map(|(sq, mean)| {
            if n_perms < 2 {
                f64::NAN
            } else {
                ((sq - m * mean * mean).max(0.0) / (m - 1.0) / m).sqrt()
            }
        })
        .collect();
    Ok(OracleResult {
        phi,
        std_error,
        n_permutations: n_perms,
        exhaustive: false,
    })
}

/// Exhaustive or Monte-Carlo estimate on a value function first tabulated
/// over all subsets, so each subset is evaluated once however many orders
/// visit it.
pub fn shapley_tabulated(v: &dyn ValueFunction, n_perms: usize, seed: u64) -> Result<OracleResult> {
    let table = TabularGame::tabulate(v)?;
    shapley_montecarlo(&table, n_perms, seed)
}

/// Outcome of one axiom check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomCheck {
    pub axiom: String,
    pub residual: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub checks: Vec<AxiomCheck>,
}

impl AxiomReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn max_residual(&self) -> f64 {
        self.checks.iter().map(|c| c.residual).fold(0.0, f64::max)
    }
}

/// Maximum player count [`verify_axioms`] accepts.
pub const MAX_AXIOM_FEATURES: usize = 8;

/// Checks efficiency, linearity, nullity and symmetry of exhaustive Shapley
/// values on `game` and on games derived from it: a random partner game for
/// linearity (`2v − v'`), `v` with player `0` made null, and `v` symmetrized
/// in players `0` and `1`.
pub fn verify_axioms(game: &TabularGame, tol: f64, seed: u64) -> Result<AxiomReport> {
    let n = game.n_features();
    if n == 0 || n > MAX_AXIOM_FEATURES {
        return Err(Error::InvalidArgument(format!(
            "axiom checks need 1..={MAX_AXIOM_FEATURES} players, got {n}"
        )));
    }
    let full = (1u64 << n) - 1;
    let mut checks = Vec::new();
    let mut push = |axiom: &str, residual: f64| {
        checks.push(AxiomCheck {
            axiom: axiom.into(),
            residual,
            passed: residual < tol,
        })
    };

    let phi = shapley_exhaustive(game)?.phi;
    let total: f64 = phi.iter().sum();
    push("efficiency", (total - (game.get(full) - game.get(0))).abs());

    let other = TabularGame::random(n, &mut rng::stream(seed, &[0xa1]))?;
    let phi_other = shapley_exhaustive(&other)?.phi;
    let (alpha, beta) = (2.0, -1.0);
    let phi_mix = shapley_exhaustive(&game.combine(alpha, &other, beta)?)?.phi;
    let lin = (0..n)
        .map(|i| (phi_mix[i] - (alpha * phi[i] + beta * phi_other[i])).abs())
        .fold(0.0, f64::max);
    push("linearity", lin);

    let null = TabularGame::from_fn(n, |m| game.get(m & !1))?;
    push("nullity", shapley_exhaustive(&null)?.phi[0].abs());

    if n >= 2 {
        let swap = |m: u64| (m & !3) | ((m & 1) << 1) | ((m >> 1) & 1);
        let sym = TabularGame::from_fn(n, |m| 0.5 * (game.get(m) + game.get(swap(m))))?;
        let p = shapley_exhaustive(&sym)?.phi;
        push("symmetry", (p[0] - p[1]).abs());
    }
    Ok(AxiomReport { checks })
}
