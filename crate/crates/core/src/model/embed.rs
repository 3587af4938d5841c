use crate::data::{FeatureKind, FeatureSchema};
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Graph, Init, ParamId, ParamStore, Tensor, Var};
use std::rc::Rc;

enum Slot {
    /// Row offset of this feature's vocabulary in the shared table.
    Categorical { offset: usize, rows: usize },
    /// Index of this feature's MLP within the stacked continuous weights.
    Continuous(usize),
}

/// Maps `(feature id, value)` pairs to `d`-dimensional vectors: one value
/// table per categorical feature and one single-input MLP per continuous
/// feature. The continuous MLPs are stored stacked, `[F_cont, in, out]` per
/// layer, and applied row-wise.
pub(crate) struct FeatureEmbedder {
    slots: Vec<Slot>,
    table: Option<ParamId>,
    cont_layers: Vec<(ParamId, ParamId)>,
    slope: f64,
    dim: usize,
}

impl FeatureEmbedder {
    pub fn new(
        store: &mut ParamStore,
        schema: &FeatureSchema,
        dim: usize,
        hidden: &[usize],
        slope: f64,
        init_std: f64,
        rng: &mut Rng,
    ) -> Self {
        let mut slots = Vec::with_capacity(schema.n_features());
        let (mut rows, mut n_cont) = (0, 0);
        for f in &schema.features {
            match &f.kind {
                FeatureKind::Categorical { vocabulary } => {
                    slots.push(Slot::Categorical {
                        offset: rows,
                        rows: vocabulary.len() + 1,
                    });
                    rows += vocabulary.len() + 1;
                }
                FeatureKind::Continuous { .. } => {
                    slots.push(Slot::Continuous(n_cont));
                    n_cont += 1;
                }
            }
        }
        let table = (rows > 0).then(|| {
            store.add(
                "embed.table",
                Init::Normal(init_std).sample(&[rows, dim], rng),
            )
        });
        let mut cont_layers = Vec::new();
        if n_cont > 0 {
            let mut sizes = vec![1];
            sizes.extend_from_slice(hidden);
            sizes.push(dim);
            for (i, w) in sizes.windows(2).enumerate() {
                let wt = Init::XavierNormal.sample(&[n_cont, w[0], w[1]], rng);
                let bt = Init::Zeros.sample(&[n_cont, w[1]], rng);
                cont_layers.push((
                    store.add(format!("embed.cont.{i}.w"), wt),
                    store.add(format!("embed.cont.{i}.b"), bt),
                ));
            }
        }
        FeatureEmbedder {
            slots,
            table,
            cont_layers,
            slope,
            dim,
        }
    }

    /// Embeds `features[r]` with value `values[r]` for every row `r`; returns `[R, d]`.
    pub fn forward(&self, g: &mut Graph, features: &[usize], values: &[f64]) -> Result<Var> {
        let mut cont_rows = Vec::new();
        let mut cont_ids = Vec::new();
        let mut cont_vals = Vec::new();
        let mut cat_rows = Vec::new();
        let mut cat_ids = Vec::new();
        for (r, (&f, &v)) in features.iter().zip(values).enumerate() {
            match self.slots.get(f) {
                Some(Slot::Continuous(c)) => {
                    cont_rows.push(r);
                    cont_ids.push(*c);
                    cont_vals.push(v);
                }
                Some(Slot::Categorical { offset, rows }) => {
                    let idx = v as usize;
                    if v < 0.0 || v.fract() != 0.0 || idx >= *rows {
                        return Err(Error::InvalidArgument(format!(
                            "feature {f}: category index {v} out of range"
                        )));
                    }
                    cat_rows.push(r);
                    cat_ids.push(offset + idx);
                }
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "feature id {f} out of range"
                    )))
                }
            }
        }
        let mut parts = Vec::new();
        if !cont_rows.is_empty() {
            let ids: Rc<[usize]> = cont_ids.into();
            let mut h = g.constant(Tensor::new(vec![cont_vals.len(), 1], cont_vals)?);
            let last = self.cont_layers.len() - 1;
            for (i, (w, b)) in self.cont_layers.iter().enumerate() {
                let (w, b) = (g.param(*w), g.param(*b));
                let y = g.indexed_matmul(h, w, ids.clone())?;
                let bias = g.embedding_lookup(b, ids.clone())?;
                h = g.add(y, bias)?;
                if i < last {
                    h = g.leaky_relu(h, self.slope);
                }
            }
            parts.push(h);
        }
        if !cat_rows.is_empty() {
            let table = g.param(self.table.expect("categorical slots imply a table"));
            parts.push(g.embedding_lookup(table, cat_ids.into())?);
        }
        match parts.len() {
            0 => Ok(g.constant(Tensor::zeros(vec![0, self.dim]))),
            1 => Ok(parts[0]),
            _ => {
                let stacked = g.concat(&parts, 0)?;
                let mut inverse = vec![0; features.len()];
                for (pos, &r) in cont_rows.iter().chain(&cat_rows).enumerate() {
                    inverse[r] = pos;
                }
                g.embedding_lookup(stacked, inverse.into())
            }
        }
    }
}
