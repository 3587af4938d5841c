use super::config::{ArchConfig, Link, NullContext};
use super::embed::FeatureEmbedder;
use super::layers::{Mlp, MultiHeadAttention};
use crate::data::{FeatureSchema, SubsetView};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::{self, Graph, Init, ParamId, ParamStore, Tensor, Var};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::rc::Rc;

/// Largest number of sequences evaluated in one inference graph.
const INFERENCE_CHUNK: usize = 256;

/// Feature sequences of equal length `n`, row-major `[b, n]`.
#[derive(Clone, Debug)]
pub struct SeqBatch {
    pub b: usize,
    pub n: usize,
    pub features: Vec<usize>,
    pub values: Vec<f64>,
}

impl SeqBatch {
    /// Builds a batch from `(sample values, feature listing)` pairs. Every
    /// listing must have the same length and contain distinct in-range ids.
    pub fn new(n_features: usize, rows: &[(&[f64], &[usize])]) -> Result<Self> {
        let n = rows.first().map_or(0, |r| r.1.len());
        let mut features = Vec::with_capacity(rows.len() * n);
        let mut values = Vec::with_capacity(rows.len() * n);
        let mut seen = vec![false; n_features];
        for (x, listing) in rows {
            if x.len() != n_features {
                return Err(Error::InvalidArgument(format!(
                    "sample has {} values, model expects {n_features}",
                    x.len()
                )));
            }
            if listing.len() != n {
                return Err(Error::InvalidArgument(
                    "all listings in a batch must have equal length".into(),
                ));
            }
            seen.fill(false);
            for &f in listing.iter() {
                if f >= n_features || std::mem::replace(&mut seen[f], true) {
                    return Err(Error::InvalidArgument(format!(
                        "invalid feature listing {listing:?}"
                    )));
                }
                features.push(f);
                values.push(x[f]);
            }
        }
        Ok(SeqBatch {
            b: rows.len(),
            n,
            features,
            values,
        })
    }
}

/// Per-sequence outputs needed by the training losses.
pub struct TrainForward {
    /// Marginal contributions `Δ`, `[b, n]`, in sequence order.
    pub delta: Var,
    /// Positional attributions `[b, n, N]`; row `k` belongs to the feature at
    /// sequence position `k`, column `j` to join position `j`.
    pub positional: Var,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionResult {
    /// Features in the listing order used for the call.
    pub features: Vec<usize>,
    /// `positional[r][k]`: feature `features[r]` joining at position `k`.
    pub positional: Vec<Vec<f64>>,
    /// Row means of `positional`, aligned with `features`.
    pub phi: Vec<f64>,
    pub phi0: f64,
    /// `phi0 + Σ phi`, summed left to right from `phi0`.
    pub f: f64,
}

impl AttributionResult {
    pub fn phi_of(&self, feature: usize) -> Option<f64> {
        self.features
            .iter()
            .position(|&f| f == feature)
            .map(|r| self.phi[r])
    }

    /// Attributions indexed by feature id, zero for features outside the subset.
    pub fn dense(&self, n_features: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_features];
        for (&f, &p) in self.features.iter().zip(&self.phi) {
            out[f] = p;
        }
        out
    }
}

pub(crate) fn reconstruct(phi0: f64, phi: &[f64]) -> f64 {
    phi.iter().fold(phi0, |acc, p| acc + p)
}

struct MarginalModule {
    positions: ParamId,
    null: Option<ParamId>,
    attention: MultiHeadAttention,
    head: Mlp,
}

struct ShapleyModule {
    attention: MultiHeadAttention,
    head: Mlp,
}

/// The full network: shared embedder, marginal module, Shapley module and
/// the frozen bias `φ₀`.
pub struct SasanetModel {
    schema: FeatureSchema,
    arch: ArchConfig,
    link: Link,
    phi0: f64,
    params: ParamStore,
    embed: FeatureEmbedder,
    marginal: MarginalModule,
    shapley: ShapleyModule,
}

#[derive(Serialize, Deserialize)]
struct CheckpointMeta {
    kind: String,
    schema: FeatureSchema,
    arch: ArchConfig,
    link: Link,
    phi0: f64,
}

impl SasanetModel {
    pub fn new(schema: FeatureSchema, arch: ArchConfig, phi0: f64, seed: u64) -> Result<Self> {
        schema.validate()?;
        arch.validate()?;
        if !phi0.is_finite() {
            return Err(Error::InvalidArgument("phi0 must be finite".into()));
        }
        let n = schema.n_features();
        let d = arch.embedding_dimension;
        let slope = arch.leaky_slope;
        let mut r = rng::stream(seed, &[0x1417]);
        let mut store = ParamStore::new();
        let embed = FeatureEmbedder::new(
            &mut store,
            &schema,
            d,
            &arch.continuous_embedding,
            slope,
            arch.init_std,
            &mut r,
        );

        let positions = store.add(
            "marginal.positions",
            Init::Normal(arch.init_std).sample(&[n, d], &mut r),
        );
        let null = match arch.null_context {
            NullContext::Learned => Some(store.add(
                "marginal.null",
                Init::Normal(arch.init_std).sample(&[1, d], &mut r),
            )),
            NullContext::Zero => None,
        };
        let m = &arch.marginal;
        let attention = MultiHeadAttention::new(
            &mut store,
            "marginal.attn",
            d,
            m.attention_dimension,
            m.attention_head,
            &mut r,
        );
        let head = Mlp::new(
            &mut store,
            "marginal.mlp",
            &layer_sizes(2 * d, &m.mlp, 1),
            slope,
            &mut r,
        );
        let marginal = MarginalModule {
            positions,
            null,
            attention,
            head,
        };

        let s = &arch.shapley;
        let attention = MultiHeadAttention::new(
            &mut store,
            "shapley.attn",
            d,
            s.attention_dimension,
            s.attention_head,
            &mut r,
        );
        let head = Mlp::new(
            &mut store,
            "shapley.mlp",
            &layer_sizes(2 * d, &s.mlp, n),
            slope,
            &mut r,
        );
        let shapley = ShapleyModule { attention, head };

        Ok(SasanetModel {
            link: Link::for_task(schema.task),
            schema,
            arch,
            phi0,
            params: store,
            embed,
            marginal,
            shapley,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn phi0(&self) -> f64 {
        self.phi0
    }

    pub fn n_features(&self) -> usize {
        self.schema.n_features()
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Ids of the parameters owned by the marginal-contribution module.
    pub fn marginal_param_ids(&self) -> Vec<ParamId> {
        self.params
            .iter()
            .filter(|(_, name, _)| name.starts_with("marginal."))
            .map(|(id, _, _)| id)
            .collect()
    }

    /// Ids of the parameters owned by the Shapley module.
    pub fn shapley_param_ids(&self) -> Vec<ParamId> {
        self.params
            .iter()
            .filter(|(_, name, _)| name.starts_with("shapley."))
            .map(|(id, _, _)| id)
            .collect()
    }

    fn embed(&self, g: &mut Graph, batch: &SeqBatch) -> Result<Var> {
        let e = self.embed.forward(g, &batch.features, &batch.values)?;
        g.reshape(e, vec![batch.b, batch.n, self.arch.embedding_dimension])
    }

    /// `Δ` for every sequence position, `[b, n]`. Position `k` sees its own
    /// feature, its join position and the set of features before it.
    fn marginal_forward(&self, g: &mut Graph, e: Var, b: usize, n: usize) -> Result<Var> {
        let d = self.arch.embedding_dimension;
        let pos_table = g.param(self.marginal.positions);
        let pos = g.embedding_lookup(pos_table, (0..n).collect::<Vec<_>>().into())?;
        let query = g.add(e, pos)?;
        let null = match self.marginal.null {
            Some(id) => g.param(id),
            None => g.constant(Tensor::zeros(vec![1, d])),
        };
        let null = g.repeat_leading(null, b);
        let keys = g.concat(&[null, e], 1)?;
        // key 0 is the null context; key j >= 1 is sequence position j - 1
        let mask: Rc<[bool]> = (0..n)
            .flat_map(|k| (0..=n).map(move |j| j > k))
            .collect();
        let ctx = self
            .marginal
            .attention
            .forward(g, query, keys, Some(&mask))?;
        let h = g.concat(&[query, ctx], 2)?;
        let out = self.marginal.head.forward(g, h)?;
        g.reshape(out, vec![b, n])
    }

    /// Positional attributions `[b, n, N]`. With `lens`, sequence `i` only
    /// exposes its first `lens[i]` features as keys, which evaluates the
    /// prefix subset for the rows inside it.
    fn shapley_forward(
        &self,
        g: &mut Graph,
        e: Var,
        b: usize,
        n: usize,
        lens: Option<&[usize]>,
    ) -> Result<Var> {
        let mask: Option<Rc<[bool]>> = lens.filter(|l| l.iter().any(|&len| len < n)).map(|l| {
            l.iter()
                .flat_map(|&len| (0..n).flat_map(move |_| (0..n).map(move |j| j >= len)))
                .collect()
        });
        let ctx = self.shapley.attention.forward(g, e, e, mask.as_ref())?;
        let h = g.concat(&[e, ctx], 2)?;
        let out = self.shapley.head.forward(g, h)?;
        debug_assert_eq!(g.shape(out), &[b, n, self.n_features()]);
        Ok(out)
    }

    /// Both module outputs for a batch of join orders, sharing one embedding
    /// pass. The Shapley module sees only the first `prefix_lens[i]` features
    /// of sequence `i`.
    pub fn forward_train(
        &self,
        g: &mut Graph,
        batch: &SeqBatch,
        prefix_lens: &[usize],
    ) -> Result<TrainForward> {
        if prefix_lens.len() != batch.b || prefix_lens.iter().any(|&l| l == 0 || l > batch.n) {
            return Err(Error::InvalidArgument(
                "prefix lengths must lie in 1..=n, one per sequence".into(),
            ));
        }
        let e = self.embed(g, batch)?;
        let delta = self.marginal_forward(g, e, batch.b, batch.n)?;
        let positional = self.shapley_forward(g, e, batch.b, batch.n, Some(prefix_lens))?;
        Ok(TrainForward { delta, positional })
    }

    /// Marginal contributions `[b, n]` for every sequence in the batch.
    pub fn forward_marginal(&self, g: &mut Graph, batch: &SeqBatch) -> Result<Var> {
        let e = self.embed(g, batch)?;
        self.marginal_forward(g, e, batch.b, batch.n)
    }

    /// Positional attributions `[b, n, N]`, optionally restricted to prefixes.
    pub fn forward_shapley(
        &self,
        g: &mut Graph,
        batch: &SeqBatch,
        prefix_lens: Option<&[usize]>,
    ) -> Result<Var> {
        let e = self.embed(g, batch)?;
        self.shapley_forward(g, e, batch.b, batch.n, prefix_lens)
    }

    /// Marginal contributions along many orders of one sample, one batched pass
    /// per chunk. All orders must have equal length.
    pub fn marginal_many(&self, x: &[f64], orders: &[Vec<usize>]) -> Result<Vec<Vec<f64>>> {
        self.check_sample(x)?;
        let mut out = Vec::with_capacity(orders.len());
        for chunk in orders.chunks(INFERENCE_CHUNK) {
            let rows: Vec<(&[f64], &[usize])> = chunk.iter().map(|o| (x, o.as_slice())).collect();
            let batch = SeqBatch::new(self.n_features(), &rows)?;
            if batch.n == 0 {
                out.extend(chunk.iter().map(|_| Vec::new()));
                continue;
            }
            let mut g = Graph::new(&self.params);
            let d = self.forward_marginal(&mut g, &batch)?;
            out.extend(g.value(d).data().chunks(batch.n).map(|c| c.to_vec()));
        }
        Ok(out)
    }

    fn check_sample(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::InvalidArgument(format!(
                "sample has {} values, model expects {}",
                x.len(),
                self.n_features()
            )));
        }
        Ok(())
    }

    /// Marginal contributions along `order`, computed in one causally masked pass.
    pub fn marginal_contribution(&self, x: &[f64], order: &[usize]) -> Result<Vec<f64>> {
        self.check_sample(x)?;
        if order.is_empty() {
            return Ok(Vec::new());
        }
        let batch = SeqBatch::new(self.n_features(), &[(x, order)])?;
        let mut g = Graph::new(&self.params);
        let d = self.forward_marginal(&mut g, &batch)?;
        Ok(g.value(d).data().to_vec())
    }

    /// Order-dependent output `φ₀ + Σ_k Δ_k` along `order`.
    pub fn sequential_output(&self, x: &[f64], order: &[usize]) -> Result<f64> {
        Ok(reconstruct(
            self.phi0,
            &self.marginal_contribution(x, order)?,
        ))
    }

    /// `|S| × |S|` positional attribution matrix, rows in listing order.
    pub fn positional_attribution(&self, x: &[f64], listing: &[usize]) -> Result<Vec<Vec<f64>>> {
        Ok(self.attribution(x, listing)?.positional)
    }

    pub fn attribution(&self, x: &[f64], listing: &[usize]) -> Result<AttributionResult> {
        Ok(self
            .attribution_many(&[(x, listing)])?
            .pop()
            .expect("one input, one result"))
    }

    /// Attributions for many `(sample, listing)` pairs, batched by subset size.
    pub fn attribution_many(&self, items: &[(&[f64], &[usize])]) -> Result<Vec<AttributionResult>> {
        let mut out: Vec<Option<AttributionResult>> = vec![None; items.len()];
        let mut by_len: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (i, (x, listing)) in items.iter().enumerate() {
            self.check_sample(x)?;
            by_len.entry(listing.len()).or_default().push(i);
        }
        for (n, idxs) in by_len {
            if n == 0 {
                for i in idxs {
                    out[i] = Some(AttributionResult {
                        features: Vec::new(),
                        positional: Vec::new(),
                        phi: Vec::new(),
                        phi0: self.phi0,
                        f: self.phi0,
                    });
                }
                continue;
            }
            for chunk in idxs.chunks(INFERENCE_CHUNK) {
                let rows: Vec<_> = chunk.iter().map(|&i| items[i]).collect();
                let batch = SeqBatch::new(self.n_features(), &rows)?;
                let mut g = Graph::new(&self.params);
                let e = self.embed(&mut g, &batch)?;
                let phi = self.shapley_forward(&mut g, e, batch.b, n, None)?;
                let data = g.value(phi).data();
                let big_n = self.n_features();
                for (bi, &i) in chunk.iter().enumerate() {
                    let positional: Vec<Vec<f64>> = (0..n)
                        .map(|r| {
                            let off = (bi * n + r) * big_n;
                            data[off..off + n].to_vec()
                        })
                        .collect();
                    out[i] = Some(self.finish(items[i].1.to_vec(), positional));
                }
            }
        }
        Ok(out
            .into_iter()
            .map(|r| r.expect("every item assigned"))
            .collect())
    }

    fn finish(&self, features: Vec<usize>, positional: Vec<Vec<f64>>) -> AttributionResult {
        let n = features.len() as f64;
        let phi: Vec<f64> = positional
            .iter()
            .map(|row| row.iter().sum::<f64>() / n)
            .collect();
        let f = reconstruct(self.phi0, &phi);
        AttributionResult {
            features,
            positional,
            phi,
            phi0: self.phi0,
            f,
        }
    }

    /// Model output `f(x_S)` before the link.
    pub fn logit(&self, x: &[f64], subset: &[usize]) -> Result<f64> {
        Ok(self.attribution(x, subset)?.f)
    }

    /// `link(f(x_S))`: a probability for classification, the value for regression.
    pub fn predict(&self, x: &[f64], subset: &[usize]) -> Result<f64> {
        Ok(self.link.apply(self.logit(x, subset)?))
    }

    /// `f` on each subset of one sample.
    pub fn logits_for_subsets(&self, x: &[f64], subsets: &[SubsetView]) -> Result<Vec<f64>> {
        let items: Vec<(&[f64], &[usize])> = subsets.iter().map(|s| (x, s.indices())).collect();
        Ok(self
            .attribution_many(&items)?
            .into_iter()
            .map(|r| r.f)
            .collect())
    }

    /// `f` on every prefix of `order`: entry `k` is `f(x_{order[..k]})`, entry 0
    /// is `φ₀`. All prefixes are evaluated in one pass over `len` copies of
    /// the sequence, copy `k` exposing only its first `k` keys.
    pub fn prefix_values(&self, x: &[f64], order: &[usize]) -> Result<Vec<f64>> {
        self.check_sample(x)?;
        let n = order.len();
        let mut out = Vec::with_capacity(n + 1);
        out.push(self.phi0);
        if n == 0 {
            return Ok(out);
        }
        let rows = vec![(x, order); n];
        let batch = SeqBatch::new(self.n_features(), &rows)?;
        let lens: Vec<usize> = (1..=n).collect();
        let mut g = Graph::new(&self.params);
        let e = self.embed(&mut g, &batch)?;
        let phi = self.shapley_forward(&mut g, e, n, n, Some(&lens))?;
        let data = g.value(phi).data();
        let big_n = self.n_features();
        for (copy, &k) in lens.iter().enumerate() {
            let positional: Vec<Vec<f64>> = (0..k)
                .map(|r| {
                    let off = (copy * n + r) * big_n;
                    data[off..off + k].to_vec()
                })
                .collect();
            out.push(self.finish(order[..k].to_vec(), positional).f);
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        tensor::save_checkpoint(path, &self.params, &self.checkpoint_meta()?)
    }

    fn checkpoint_meta(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(CheckpointMeta {
            kind: "sasanet".into(),
            schema: self.schema.clone(),
            arch: self.arch.clone(),
            link: self.link,
            phi0: self.phi0,
        })?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (store, meta) = tensor::load_checkpoint(path)?;
        Self::from_parts(store, meta)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        tensor::write_checkpoint(&mut buf, &self.params, &self.checkpoint_meta()?)?;
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (store, meta) = tensor::read_checkpoint(bytes)?;
        Self::from_parts(store, meta)
    }

    fn from_parts(store: ParamStore, meta: serde_json::Value) -> Result<Self> {
        let meta: CheckpointMeta = serde_json::from_value(meta)
            .map_err(|e| Error::Checkpoint(format!("bad model metadata: {e}")))?;
        if meta.kind != "sasanet" {
            return Err(Error::Checkpoint(format!(
                "not a model checkpoint (kind `{}`)",
                meta.kind
            )));
        }
        let mut model = SasanetModel::new(meta.schema, meta.arch, meta.phi0, 0)?;
        if store.len() != model.params.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} parameters, architecture needs {}",
                store.len(),
                model.params.len()
            )));
        }
        for ((id, name, t), (_, want_name, want)) in store.iter().zip(model.params.clone().iter()) {
            if name != want_name || t.shape() != want.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter mismatch: checkpoint `{name}` {:?} vs expected `{want_name}` {:?}",
                    t.shape(),
                    want.shape()
                )));
            }
            *model.params.get_mut(id) = t.clone();
        }
        model.link = meta.link;
        Ok(model)
    }

    /// Checks that `schema` describes the same features the model was built for.
    pub fn ensure_compatible(&self, schema: &FeatureSchema) -> Result<()> {
        if schema.features != self.schema.features {
            let detail = if schema.n_features() != self.n_features() {
                format!(
                    "{} features in data vs {} in checkpoint",
                    schema.n_features(),
                    self.n_features()
                )
            } else {
                let (i, (a, b)) = schema
                    .features
                    .iter()
                    .zip(&self.schema.features)
                    .enumerate()
                    .find(|(_, (a, b))| a != b)
                    .expect("some feature differs");
                format!("feature {i}: data has {a:?}, checkpoint has {b:?}")
            };
            return Err(Error::SchemaMismatch(detail));
        }
        if schema.task != self.schema.task {
            return Err(Error::SchemaMismatch(format!(
                "task {:?} in data vs {:?} in checkpoint",
                schema.task, self.schema.task
            )));
        }
        Ok(())
    }
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut s = Vec::with_capacity(hidden.len() + 2);
    s.push(input);
    s.extend_from_slice(hidden);
    s.push(output);
    s
}
