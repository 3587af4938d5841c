//! Synthetic tasks with independent standard-normal features.
//!
//! For the linear task, `E[y | x_S] = Σ_{i∈S} w_i x_i`, an additive game whose
//! Shapley values are `w_i x_i`. For the logistic task, the subset expectation
//! has no closed form and is estimated by sampling the hidden features.

use super::dataset::{Dataset, Sample};
use super::schema::{FeatureSchema, FeatureSpec, Task};
use super::subset::SubsetView;
use crate::error::{Error, Result};
use crate::math::sigmoid;
use crate::rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};

fn schema(n: usize, task: Task) -> Result<FeatureSchema> {
    let features = (1..=n)
        .map(|i| FeatureSpec::continuous(format!("x{i}"), 0.0, 1.0))
        .collect();
    FeatureSchema::new(features, "y", task)
}

fn check_weights(n_features: usize, weights: &[f64], min_features: usize) -> Result<()> {
    if n_features < min_features {
        return Err(Error::InvalidArgument(format!(
            "need at least {min_features} features, got {n_features}"
        )));
    }
    if weights.len() != n_features {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {n_features} features",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidArgument("weights must be finite".into()));
    }
    Ok(())
}

fn normal_row(r: &mut rng::Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(r)).collect()
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearTask {
    pub weights: Vec<f64>,
    pub noise_std: f64,
}

impl LinearTask {
    pub fn conditional_expectation(&self, x: &[f64], subset: &SubsetView) -> f64 {
        subset
            .indices()
            .iter()
            .map(|&i| self.weights[i] * x[i])
            .sum()
    }

    pub fn shapley(&self, x: &[f64]) -> Vec<f64> {
        self.weights.iter().zip(x).map(|(w, v)| w * v).collect()
    }

    /// Standard deviation of `w_i x_i` under the generator.
    pub fn attribution_std(&self, i: usize) -> f64 {
        self.weights[i].abs()
    }
}

/// `y = w·x + ε`, `x ~ N(0, I)`, `ε ~ N(0, noise_std²)`.
pub fn synth_linear_regression(
    n_features: usize,
    weights: &[f64],
    noise_std: f64,
    n_samples: usize,
    seed: u64,
) -> Result<(Dataset, LinearTask)> {
    check_weights(n_features, weights, 2)?;
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise_std must be >= 0, got {noise_std}"
        )));
    }
    let mut r = rng::stream(seed, &[0x11ea]);
    let samples = (0..n_samples)
        .map(|_| {
            let values = normal_row(&mut r, n_features);
            let eps: f64 = StandardNormal.sample(&mut r);
            let label = dot(weights, &values) + noise_std * eps;
            Sample { values, label }
        })
        .collect();
    let ds = Dataset::new(schema(n_features, Task::Regression)?, samples, true)?;
    Ok((
        ds,
        LinearTask {
            weights: weights.to_vec(),
            noise_std,
        },
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinaryTask {
    pub weights: Vec<f64>,
}

impl BinaryTask {
    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(dot(&self.weights, x))
    }

    /// Monte-Carlo estimate of `E[y | x_S]` from `draws` samples of the hidden
    /// features. Exact when no feature is hidden.
    pub fn subset_expectation(
        &self,
        x: &[f64],
        subset: &SubsetView,
        draws: usize,
        seed: u64,
    ) -> f64 {
        let observed: f64 = subset
            .indices()
            .iter()
            .map(|&i| self.weights[i] * x[i])
            .sum();
        let hidden: Vec<f64> = (0..self.weights.len())
            .filter(|&i| !subset.contains(i))
            .map(|i| self.weights[i])
            .collect();
        if hidden.is_empty() {
            return sigmoid(observed);
        }
        let mut r = rng::stream(seed, &[0xb1, subset.mask()]);
        let mut acc = 0.0;
        for _ in 0..draws {
            let z: f64 = hidden
                .iter()
                .map(|w| {
                    let e: f64 = StandardNormal.sample(&mut r);
                    w * e
                })
                .sum();
            acc += sigmoid(observed + z);
        }
        acc / draws.max(1) as f64
    }
}

/// `y ~ Bernoulli(σ(w·x))`, `x ~ N(0, I)`.
pub fn synth_binary_classification(
    n_features: usize,
    weights: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<(Dataset, BinaryTask)> {
    check_weights(n_features, weights, 1)?;
    let task = BinaryTask {
        weights: weights.to_vec(),
    };
    let mut r = rng::stream(seed, &[0xb10]);
    let samples = (0..n_samples)
        .map(|_| {
            let values = normal_row(&mut r, n_features);
            let p = task.probability(&values);
            let label = if Bernoulli::new(p).expect("p in [0,1]").sample(&mut r) {
                1.0
            } else {
                0.0
            };
            Sample { values, label }
        })
        .collect();
    let ds = Dataset::new(schema(n_features, Task::Classification)?, samples, true)?;
    Ok((ds, task))
}
