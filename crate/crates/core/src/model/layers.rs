use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::{Graph, Init, ParamId, ParamStore, Var};
use std::rc::Rc;

pub(crate) struct Linear {
    w: ParamId,
    b: ParamId,
}

impl Linear {
    fn new(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut Rng,
    ) -> Self {
        Linear {
            w: store.add(
                format!("{name}.w"),
                Init::XavierNormal.sample(&[fan_in, fan_out], rng),
            ),
            b: store.add(format!("{name}.b"), Init::Zeros.sample(&[fan_out], rng)),
        }
    }

    fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let y = g.matmul(x, w)?;
        g.add(y, b)
    }
}

/// Feed-forward stack with LeakyReLU between layers and a linear output.
pub(crate) struct Mlp {
    layers: Vec<Linear>,
    slope: f64,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        sizes: &[usize],
        slope: f64,
        rng: &mut Rng,
    ) -> Self {
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect();
        Mlp { layers, slope }
    }

    pub fn forward(&self, g: &mut Graph, mut x: Var) -> Result<Var> {
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(g, x)?;
            if i < last {
                x = g.leaky_relu(x, self.slope);
            }
        }
        Ok(x)
    }
}

/// Multi-head scaled dot-product attention without projection biases.
pub(crate) struct MultiHeadAttention {
    heads: Vec<[ParamId; 3]>,
    out: ParamId,
    head_dim: usize,
}

impl MultiHeadAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        model_dim: usize,
        head_dim: usize,
        n_heads: usize,
        rng: &mut Rng,
    ) -> Self {
        let heads = (0..n_heads)
            .map(|h| {
                ["q", "k", "v"].map(|p| {
                    store.add(
                        format!("{name}.h{h}.{p}"),
                        Init::XavierNormal.sample(&[model_dim, head_dim], rng),
                    )
                })
            })
            .collect();
        let out = store.add(
            format!("{name}.o"),
            Init::XavierNormal.sample(&[n_heads * head_dim, model_dim], rng),
        );
        MultiHeadAttention {
            heads,
            out,
            head_dim,
        }
    }

    /// `queries [B, nq, d]` attend over `keys [B, nk, d]`. `mask` marks hidden
    /// (query, key) pairs and covers either `[nq, nk]` or `[B, nq, nk]`.
    pub fn forward(
        &self,
        g: &mut Graph,
        queries: Var,
        keys: Var,
        mask: Option<&Rc<[bool]>>,
    ) -> Result<Var> {
        let scale = 1.0 / (self.head_dim as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads.len());
        for [wq, wk, wv] in &self.heads {
            let (wq, wk, wv) = (g.param(*wq), g.param(*wk), g.param(*wv));
            let q = g.matmul(queries, wq)?;
            let k = g.matmul(keys, wk)?;
            let v = g.matmul(keys, wv)?;
            let kt = g.transpose_last(k)?;
            let scores = g.bmm(q, kt)?;
            let mut scores = g.scale(scores, scale);
            if let Some(m) = mask {
                scores = g.masked_fill(scores, m.clone())?;
            }
            let att = g.softmax(scores)?;
            outs.push(g.bmm(att, v)?);
        }
        let cat = if outs.len() == 1 {
            outs[0]
        } else {
            g.concat(&outs, 2)?
        };
        let wo = g.param(self.out);
        g.matmul(cat, wo)
    }
}
