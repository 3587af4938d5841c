use super::{ParamStore, Tensor};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Result<Self> {
        if !(config.lr > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be > 0, got {}",
                config.lr
            )));
        }
        let zeros: Vec<Tensor> = store
            .iter()
            .map(|(_, _, t)| Tensor::zeros(t.shape().to_vec()))
            .collect();
        Ok(AdamState {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        })
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. A non-finite gradient aborts the step before any
    /// parameter or moment is touched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != store.len() || grads.len() != self.m.len() {
            return Err(Error::InvalidArgument(format!(
                "{} gradients for {} parameters",
                grads.len(),
                store.len()
            )));
        }
        for (id, name, p) in store.iter() {
            let g = &grads[id.index()];
            if g.shape() != p.shape() {
                return Err(Error::shape(
                    "adam_step",
                    format!("`{name}`: grad {:?} vs param {:?}", g.shape(), p.shape()),
                ));
            }
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient(name.to_string()));
            }
        }
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let i = id.index();
            let g = grads[i].data();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = store.get_mut(id).data_mut();
            for j in 0..p.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                p[j] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Graph;

    fn single(w: f64) -> (ParamStore, crate::tensor::ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::vector(vec![w]));
        (s, id)
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let (mut s, id) = single(1.5);
        let mut adam = AdamState::new(&s, AdamConfig::default()).unwrap();
        adam.step(&mut s, &[Tensor::vector(vec![0.0])]).unwrap();
        assert_eq!(s.get(id).data(), &[1.5]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let (mut s, id) = single(0.0);
        let cfg = AdamConfig {
            lr: 0.1,
            ..Default::default()
        };
        let mut adam = AdamState::new(&s, cfg).unwrap();
        adam.step(&mut s, &[Tensor::vector(vec![1.0])]).unwrap();
        // m̂ = 1, v̂ = 1 ⇒ Δ = -lr / (1 + eps)
        let want = -0.1 / (1.0 + 1e-8);
        assert!((s.get(id).data()[0] - want).abs() < 1e-15);
        assert_eq!(adam.steps(), 1);
    }

    #[test]
    fn converges_on_shifted_quadratic() {
        let (mut s, id) = single(0.0);
        let cfg = AdamConfig {
            lr: 0.1,
            ..Default::default()
        };
        let mut adam = AdamState::new(&s, cfg).unwrap();
        for _ in 0..100 {
            let grads = {
                let mut g = Graph::new(&s);
                let w = g.param(id);
                let d = g.add_scalar(w, -3.0);
                let sq = g.square(d);
                let loss = g.sum(sq);
                g.backward(loss).unwrap().into_param_grads(&s)
            };
            adam.step(&mut s, &grads).unwrap();
        }
        assert!(
            (s.get(id).data()[0] - 3.0).abs() < 0.1,
            "{:?}",
            s.get(id).data()
        );
    }

    #[test]
    fn nan_gradient_aborts_without_update() {
        let (mut s, id) = single(2.0);
        let mut adam = AdamState::new(&s, AdamConfig::default()).unwrap();
        let err = adam
            .step(&mut s, &[Tensor::vector(vec![f64::NAN])])
            .unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient(ref n) if n == "w"));
        assert_eq!(s.get(id).data(), &[2.0]);
        assert_eq!(adam.steps(), 0);
    }

    #[test]
    fn rejects_non_positive_lr() {
        let (s, _) = single(0.0);
        assert!(AdamState::new(
            &s,
            AdamConfig {
                lr: 0.0,
                ..Default::default()
            }
        )
        .is_err());
    }
}
