use super::shapley::{shapley_montecarlo, shapley_tabulated, OracleResult};
use super::value::{NativeValue, MAX_TABLE_FEATURES};
use crate::error::Result;
use crate::model::SasanetModel;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Self-attribution against its Monte-Carlo ground truth, per sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleComparison {
    pub self_attribution: Vec<f64>,
    pub oracle: OracleResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    pub rmse: f64,
    pub samples: Vec<SampleComparison>,
}

/// Root mean square difference between the model's full-set attributions and
/// Monte-Carlo Shapley values of its own output, over all samples and
/// features. Sample `j` draws its orders from stream `j` of `seed`.
pub fn attribution_rmse(
    model: &SasanetModel,
    samples: &[Vec<f64>],
    n_perms: usize,
    seed: u64,
) -> Result<RmseReport> {
    let n = model.n_features();
    let all: Vec<usize> = (0..n).collect();
    let samples: Vec<SampleComparison> = samples
        .par_iter()
        .enumerate()
        .map(|(j, x)| {
            let v = NativeValue::new(model, x)?;
            let sample_seed = crate::rng::derive(seed, &[j as u64]);
            // tabulating costs 2^N evaluations and pays off once orders outnumber subsets
            let oracle = if n <= MAX_TABLE_FEATURES && (1usize << n) <= n_perms.saturating_mul(n) {
                shapley_tabulated(&v, n_perms, sample_seed)?
            } else {
                shapley_montecarlo(&v, n_perms, sample_seed)?
            };
            let self_attribution = model.attribution(x, &all)?.phi;
            Ok(SampleComparison {
                self_attribution,
                oracle,
            })
        })
        .collect::<Result<_>>()?;
    let (sq, count) = samples.iter().fold((0.0, 0usize), |(sq, c), s| {
        let d: f64 = s
            .self_attribution
            .iter()
            .zip(&s.oracle.phi)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        (sq + d, c + s.self_attribution.len())
    });
    let rmse = if count == 0 {
        0.0
    } else {
        (sq / count as f64).sqrt()
    };
    Ok(RmseReport { rmse, samples })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureSchema, FeatureSpec, Task};
    use crate::model::ArchConfig;

    #[test]
    fn report_shape_and_definition() {
        let f = (0..3)
            .map(|i| FeatureSpec::continuous(format!("x{i}"), 0.0, 1.0))
            .collect();
        let schema = FeatureSchema::new(f, "y", Task::Regression).unwrap();
        let m = SasanetModel::new(schema, ArchConfig::desk(), 0.0, 5).unwrap();
        let xs = vec![vec![0.1, 0.2, 0.3], vec![-1.0, 0.0, 2.0]];
        let r = attribution_rmse(&m, &xs, 6, 0).unwrap();
        assert_eq!(r.samples.len(), 2);
        assert!(r.samples.iter().all(|s| s.oracle.exhaustive));
        let mut sq = 0.0;
        for s in &r.samples {
            for (a, b) in s.self_attribution.iter().zip(&s.oracle.phi) {
                sq += (a - b).powi(2);
            }
        }
        assert!((r.rmse - (sq / 6.0).sqrt()).abs() < 1e-15);
        assert_eq!(attribution_rmse(&m, &[], 6, 0).unwrap().rmse, 0.0);
    }
}
