//! Closed-form minimizers of the two distillation objectives for a fixed
//! marginal module and a fixed set of sampled orders.

use crate::error::{Error, Result};
use crate::model::SasanetModel;

/// Marginal contributions realized along one order.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderDeltas {
    pub order: Vec<usize>,
    pub delta: Vec<f64>,
}

/// Evaluates the marginal module of `model` along every order.
pub fn collect_deltas(
    model: &SasanetModel,
    x: &[f64],
    orders: &[Vec<usize>],
) -> Result<Vec<OrderDeltas>> {
    let deltas = model.marginal_many(x, orders)?;
    Ok(orders
        .iter()
        .cloned()
        .zip(deltas)
        .map(|(order, delta)| OrderDeltas { order, delta })
        .collect())
}

fn check(samples: &[OrderDeltas], n_features: usize) -> Result<usize> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("at least one order is required".into()))?;
    let n = first.order.len();
    if samples.iter().any(|s| {
        s.order.len() != n || s.delta.len() != n || s.order.iter().any(|&f| f >= n_features)
    }) {
        return Err(Error::InvalidArgument(
            "orders must share one length and stay in range".into(),
        ));
    }
    Ok(n)
}

/// Minimizer of the direct objective: per feature, the mean of its
/// contributions over all orders. Indexed by feature id; features outside
/// the orders are 0.
pub fn direct_estimate(samples: &[OrderDeltas], n_features: usize) -> Result<Vec<f64>> {
    check(samples, n_features)?;
    let mut sum = vec![0.0; n_features];
    for s in samples {
        for (&f, &d) in s.order.iter().zip(&s.delta) {
            sum[f] += d;
        }
    }
    let m = samples.len() as f64;
    Ok(sum.into_iter().map(|v| v / m).collect())
}

/// Minimizer of the positional objective: `cells[f][k]` is the mean
/// contribution of feature `f` over orders placing it at position `k`, or
/// `None` when no order does.
pub fn positional_cells(
    samples: &[OrderDeltas],
    n_features: usize,
) -> Result<Vec<Vec<Option<f64>>>> {
    let n = check(samples, n_features)?;
    let mut sum = vec![vec![0.0; n]; n_features];
    let mut count = vec![vec![0usize; n]; n_features];
    for s in samples {
        for (k, (&f, &d)) in s.order.iter().zip(&s.delta).enumerate() {
            sum[f][k] += d;
            count[f][k] += 1;
        }
    }
    Ok(sum
        .into_iter()
        .zip(count)
        .map(|(s, c)| {
            s.into_iter()
                .zip(c)
                .map(|(v, c)| (c > 0).then(|| v / c as f64))
                .collect()
        })
        .collect())
}

/// Aggregated positional estimate: the mean of the occupied position cells.
pub fn positional_estimate(samples: &[OrderDeltas], n_features: usize) -> Result<Vec<f64>> {
    Ok(positional_cells(samples, n_features)?
        .into_iter()
        .map(|cells| {
            let filled: Vec<f64> = cells.into_iter().flatten().collect();
            if filled.is_empty() {
                0.0
            } else {
                filled.iter().sum::<f64>() / filled.len() as f64
            }
        })
        .collect())
}

/// Direct objective `mean_O Σ_i (φ_i − Δ_i^O)²` at attribution vector `phi`.
pub fn direct_objective(phi: &[f64], samples: &[OrderDeltas]) -> f64 {
    samples
        .iter()
        .map(|s| {
            s.order
                .iter()
                .zip(&s.delta)
                .map(|(&f, &d)| (phi[f] - d).powi(2))
                .sum::<f64>()
        })
        .sum::<f64>()
        / samples.len() as f64
}

/// Positional objective `mean_O Σ_k (φ_{O_k,k} − Δ_k)²` at matrix `phi[f][k]`.
pub fn positional_objective(phi: &[Vec<f64>], samples: &[OrderDeltas]) -> f64 {
    samples
        .iter()
        .map(|s| {
            s.order
                .iter()
                .zip(&s.delta)
                .enumerate()
                .map(|(k, (&f, &d))| (phi[f][k] - d).powi(2))
                .sum::<f64>()
        })
        .sum::<f64>()
        / samples.len() as f64
}
