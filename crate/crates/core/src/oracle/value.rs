use crate::data::SubsetView;
use crate::error::{Error, Result};
use crate::model::SasanetModel;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Where subset values come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// The model's own output on the subset.
    SasanetNative,
    /// An explicit table of `2^N` values.
    TabularGame,
    /// Model output with absent features replaced from a background set.
    BackgroundReplacement,
}

/// A cooperative game over `n_features()` players.
pub trait ValueFunction: Sync {
    fn n_features(&self) -> usize;

    fn provenance(&self) -> Provenance;

    fn value(&self, subset: &SubsetView) -> Result<f64>;

    fn values(&self, subsets: &[SubsetView]) -> Result<Vec<f64>> {
        subsets.iter().map(|s| self.value(s)).collect()
    }

    /// `v` of every prefix of `order`, starting with `v(∅)`.
    fn prefix_values(&self, order: &[usize]) -> Result<Vec<f64>> {
        let n = self.n_features();
        let subsets: Vec<SubsetView> = (0..=order.len())
            .map(|k| SubsetView::new(order[..k].to_vec(), n))
            .collect::<Result<_>>()?;
        self.values(&subsets)
    }
}

/// Largest player count a table is built for.
pub const MAX_TABLE_FEATURES: usize = 20;

/// A game stored as `values[mask]`, bit `i` of `mask` marking player `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularGame {
    n: usize,
    values: Vec<f64>,
}

impl TabularGame {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n > MAX_TABLE_FEATURES {
            return Err(Error::TooManyFeatures {
                n,
                max: MAX_TABLE_FEATURES,
            });
        }
        if values.len() != 1 << n {
            return Err(Error::InvalidArgument(format!(
                "{} values for {n} players, need {}",
                values.len(),
                1usize << n
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("game values must be finite".into()));
        }
        Ok(TabularGame { n, values })
    }

    pub fn from_fn(n: usize, f: impl Fn(u64) -> f64) -> Result<Self> {
        if n > MAX_TABLE_FEATURES {
            return Err(Error::TooManyFeatures {
                n,
                max: MAX_TABLE_FEATURES,
            });
        }
        Self::new(n, (0..1u64 << n).map(f).collect())
    }

    /// Independent standard-normal value for every coalition.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        let values = (0..1usize << n)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        Self::new(n, values)
    }

    /// Every subset value of another game, evaluated once.
    pub fn tabulate(v: &dyn ValueFunction) -> Result<Self> {
        let n = v.n_features();
        if n > MAX_TABLE_FEATURES {
            return Err(Error::TooManyFeatures {
                n,
                max: MAX_TABLE_FEATURES,
            });
        }
        let subsets: Vec<SubsetView> = (0..1u64 << n)
            .map(|m| SubsetView::from_mask(m, n))
            .collect();
        Self::new(n, v.values(&subsets)?)
    }

    /// `α·self + β·other`.
    pub fn combine(&self, alpha: f64, other: &TabularGame, beta: f64) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::InvalidArgument(
                "games differ in player count".into(),
            ));
        }
        Self::new(
            self.n,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| alpha * a + beta * b)
                .collect(),
        )
    }

    pub fn get(&self, mask: u64) -> f64 {
        self.values[mask as usize]
    }

    pub fn table(&self) -> &[f64] {
        &self.values
    }
}

impl ValueFunction for TabularGame {
    fn n_features(&self) -> usize {
        self.n
    }

    fn provenance(&self) -> Provenance {
        Provenance::TabularGame
    }

    fn value(&self, subset: &SubsetView) -> Result<f64> {
        if subset.indices().last().is_some_and(|&i| i >= self.n) {
            return Err(Error::InvalidArgument(format!(
                "subset {:?} exceeds {} players",
                subset.indices(),
                self.n
            )));
        }
        Ok(self.get(subset.mask()))
    }

    fn prefix_values(&self, order: &[usize]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(order.len() + 1);
        let mut mask = 0u64;
        out.push(self.get(0));
        for &i in order {
            if i >= self.n {
                return Err(Error::InvalidArgument(format!("player {i} out of range")));
            }
            mask |= 1 << i;
            out.push(self.get(mask));
        }
        Ok(out)
    }
}

/// The model's pre-link output `f(x_S)` for one sample; `v(∅) = φ₀`.
pub struct NativeValue<'a> {
    model: &'a SasanetModel,
    x: &'a [f64],
}

impl<'a> NativeValue<'a> {
    pub fn new(model: &'a SasanetModel, x: &'a [f64]) -> Result<Self> {
        if x.len() != model.n_features() {
            return Err(Error::InvalidArgument(
                "sample length differs from the model's feature count".into(),
            ));
        }
        Ok(NativeValue { model, x })
    }
}

impl ValueFunction for NativeValue<'_> {
    fn n_features(&self) -> usize {
        self.model.n_features()
    }

    fn provenance(&self) -> Provenance {
        Provenance::SasanetNative
    }

    fn value(&self, subset: &SubsetView) -> Result<f64> {
        self.model.logit(self.x, subset.indices())
    }

    fn values(&self, subsets: &[SubsetView]) -> Result<Vec<f64>> {
        self.model.logits_for_subsets(self.x, subsets)
    }

    fn prefix_values(&self, order: &[usize]) -> Result<Vec<f64>> {
        self.model.prefix_values(self.x, order)
    }
}

/// Pre-link output on full inputs whose absent features are copied from each
/// background row, averaged over the background.
pub struct BackgroundValue<'a> {
    model: &'a SasanetModel,
    x: &'a [f64],
    background: &'a [Vec<f64>],
}

impl<'a> BackgroundValue<'a> {
    pub fn new(model: &'a SasanetModel, x: &'a [f64], background: &'a [Vec<f64>]) -> Result<Self> {
        if background.is_empty() {
            return Err(Error::InvalidArgument("background set is empty".into()));
        }
        let n = model.n_features();
        if x.len() != n || background.iter().any(|b| b.len() != n) {
            return Err(Error::InvalidArgument(
                "sample and background rows need the model's feature count".into(),
            ));
        }
        Ok(BackgroundValue {
            model,
            x,
            background,
        })
    }
}

impl ValueFunction for BackgroundValue<'_> {
    fn n_features(&self) -> usize {
        self.model.n_features()
    }

    fn provenance(&self) -> Provenance {
        Provenance::BackgroundReplacement
    }

    fn value(&self, subset: &SubsetView) -> Result<f64> {
        Ok(self.values(std::slice::from_ref(subset))?[0])
    }

    fn values(&self, subsets: &[SubsetView]) -> Result<Vec<f64>> {
        let n = self.n_features();
        let full: Vec<usize> = (0..n).collect();
        let mut hybrids = Vec::with_capacity(subsets.len() * self.background.len());
        for s in subsets {
            for b in self.background {
                let mut z = b.clone();
                for &i in s.indices() {
                    z[i] = self.x[i];
                }
                hybrids.push(z);
            }
        }
        let items: Vec<(&[f64], &[usize])> = hybrids
            .iter()
            .map(|z| (z.as_slice(), full.as_slice()))
            .collect();
        let f = self.model.attribution_many(&items)?;
        let nb = self.background.len() as f64;
        Ok(f.chunks(self.background.len())
            .map(|c| c.iter().map(|a| a.f).sum::<f64>() / nb)
            .collect())
    }
}
