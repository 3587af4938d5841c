use super::value::ValueFunction;
use crate::data::SubsetView;
use crate::error::{Error, Result};
use crate::rng;
use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

const RIDGE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelShapResult {
    pub phi: Vec<f64>,
    /// Coalitions entering the regression (excluding `∅` and the full set).
    pub n_coalitions: usize,
    /// Every proper nonempty coalition was used with its exact kernel weight.
    pub enumerated: bool,
    /// The normal equations were singular and were solved with a ridge term.
    pub ridge_fallback: bool,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Shapley kernel weight of a coalition of size `s` among `n` players.
pub fn kernel_weight(n: usize, s: usize) -> f64 {
    (n - 1) as f64 / (binomial(n, s) * s as f64 * (n - s) as f64)
}

/// KernelSHAP: weighted least squares of coalition values on membership
/// indicators under the Shapley kernel, with `Σφ = v(N) − v(∅)` imposed by
/// eliminating the last player.
///
/// With `n_coalitions ≥ 2^N − 2` every proper nonempty coalition is used with
/// its kernel weight. Otherwise coalitions are sampled in complementary pairs:
/// a size `s` is drawn with probability proportional to the kernel's total
/// mass on that size, then a uniform subset of that size, and each sample
/// carries unit weight.
pub fn kernel_shap(
    v: &dyn ValueFunction,
    n_coalitions: usize,
    seed: u64,
) -> Result<KernelShapResult> {
    let n = v.n_features();
    if n_coalitions < n + 2 {
        return Err(Error::InvalidArgument(format!(
            "n_coalitions must be at least N + 2 = {}",
            n + 2
        )));
    }
    let ends = v.values(&[SubsetView::empty(), SubsetView::full(n)])?;
    let (v0, v1) = (ends[0], ends[1]);
    if n == 1 {
        return Ok(KernelShapResult {
            phi: vec![v1 - v0],
            n_coalitions: 0,
            enumerated: true,
            ridge_fallback: false,
        });
    }

    let proper = if n < 63 { (1u64 << n) - 2 } else { u64::MAX };
    let enumerated = n < 63 && n_coalitions as u64 >= proper;
    let (coalitions, weights): (Vec<SubsetView>, Vec<f64>) = if enumerated {
        (1..=proper)
            .map(|m| {
                let s = SubsetView::from_mask(m, n);
                let w = kernel_weight(n, s.len());
                (s, w)
            })
            .unzip()
    } else {
        let coalitions = sample_paired(n, n_coalitions, seed);
        let w = vec![1.0; coalitions.len()];
        (coalitions, w)
    };
    let values = v.values(&coalitions)?;

    // unknowns φ_0..φ_{n-2}; φ_{n-1} = (v1 − v0) − Σ others
    let p = n - 1;
    let last = n - 1;
    let total = v1 - v0;
    let mut xtwx = DMatrix::<f64>::zeros(p, p);
    let mut xtwy = DVector::<f64>::zeros(p);
    let mut row = vec![0.0; p];
    for ((s, &w), &val) in coalitions.iter().zip(&weights).zip(&values) {
        let z_last = if s.contains(last) { 1.0 } else { 0.0 };
        row.fill(-z_last);
        for &i in s.indices() {
            if i != last {
                row[i] += 1.0;
            }
        }
        let y = val - v0 - z_last * total;
        for a in 0..p {
            if row[a] == 0.0 {
                continue;
            }
            xtwy[a] += w * row[a] * y;
            for b in 0..p {
                xtwx[(a, b)] += w * row[a] * row[b];
            }
        }
    }

    let factor = xtwx.clone().cholesky().filter(|c| {
        let d = c.l_dirty().diagonal();
        let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
        lo > hi * 1e-7
    });
    let (sol, ridge_fallback) = match factor {
        Some(c) => (c.solve(&xtwy), false),
        None => {
            log::warn!("KernelSHAP normal equations are singular; using a ridge term of {RIDGE}");
            let reg = xtwx + DMatrix::identity(p, p) * RIDGE;
            let sol = reg.lu().solve(&xtwy).ok_or_else(|| {
                Error::InvalidArgument("KernelSHAP system unsolvable even with ridge".into())
            })?;
            (sol, true)
        }
    };
    let mut phi: Vec<f64> = sol.iter().copied().collect();
    let rest: f64 = phi.iter().sum();
    phi.push(total - rest);
    Ok(KernelShapResult {
        phi,
        n_coalitions: coalitions.len(),
        enumerated,
        ridge_fallback,
    })
}

fn sample_paired(n: usize, budget: usize, seed: u64) -> Vec<SubsetView> {
    let mut r = rng::stream(seed, &[0x5ca1]);
    let sizes: Vec<usize> = (1..n).collect();
    let mass: Vec<f64> = sizes
        .iter()
        .map(|&s| kernel_weight(n, s) * binomial(n, s))
        .collect();
    let total: f64 = mass.iter().sum();
    let mut out = Vec::with_capacity(budget);
    while out.len() + 1 < budget {
        let mut u = r.gen::<f64>() * total;
        let mut s = sizes[sizes.len() - 1];
        for (&size, &m) in sizes.iter().zip(&mass) {
            if u < m {
                s = size;
                break;
            }
            u -= m;
        }
        let pick = index::sample(&mut r, n, s).into_vec();
        let set = SubsetView::new(pick, n).expect("sampled indices are valid");
        let complement = SubsetView::new((0..n).filter(|&i| !set.contains(i)).collect(), n)
            .expect("valid complement");
        out.push(set);
        out.push(complement);
    }
    out
}
