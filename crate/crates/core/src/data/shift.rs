use super::dataset::{Dataset, Sample};
use super::schema::FeatureKind;
use crate::error::{Error, Result};
use crate::rng;
use rand::Rng;

/// Adds one random offset per continuous feature to every sample. Offsets are
/// drawn uniformly from {-1, +1}, i.e. one normalized standard deviation.
/// Returns the shifted dataset and the bias vector (zero for categorical
/// features).
pub fn shift_distribution(ds: &Dataset, seed: u64) -> Result<(Dataset, Vec<f64>)> {
    let mut r = rng::stream(seed, &[0x5417]);
    let bias: Vec<f64> = ds
        .schema()
        .features
        .iter()
        .map(|f| match f.kind {
            FeatureKind::Continuous { .. } => {
                if r.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            FeatureKind::Categorical { .. } => 0.0,
        })
        .collect();
    Ok((shift_with_bias(ds, &bias)?, bias))
}

pub fn shift_with_bias(ds: &Dataset, bias: &[f64]) -> Result<Dataset> {
    if !ds.is_normalized() {
        return Err(Error::InvalidArgument(
            "distribution shift expects normalized features".into(),
        ));
    }
    if bias.len() != ds.n_features() {
        return Err(Error::InvalidArgument(format!(
            "{} offsets for {} features",
            bias.len(),
            ds.n_features()
        )));
    }
    let categorical: Vec<bool> = ds
        .schema()
        .features
        .iter()
        .map(|f| f.is_categorical())
        .collect();
    if bias.iter().zip(&categorical).any(|(b, &c)| c && *b != 0.0) {
        return Err(Error::InvalidArgument(
            "categorical features cannot be shifted".into(),
        ));
    }
    Ok(ds.map_samples(|s| Sample {
        values: s.values.iter().zip(bias).map(|(v, b)| v + b).collect(),
        label: s.label,
    }))
}
