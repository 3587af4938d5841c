//! Training objectives as graph expressions.
//!
//! Distillation terms compare the attribution head against marginal
//! contributions used as a teacher. The teacher never receives gradient from
//! these terms: by default it is detached from the live marginal outputs, and
//! [`Teacher::Frozen`] supplies fixed values instead (handy for finite
//! difference checks, where a detached operand would otherwise move with the
//! perturbed parameters).

use super::config::LossVariant;
use crate::data::Task;
use crate::error::{Error, Result};
use crate::model::{SasanetModel, SeqBatch};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Clone, Copy, Debug)]
pub enum Teacher<'a> {
    Detached,
    /// Precomputed teacher values laid out like the live marginal outputs.
    Frozen(&'a [f64]),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda_v: f64,
    pub lambda_s: f64,
    pub variant: LossVariant,
}

/// Batch loss and the unweighted per-sample means of its two parts.
pub struct LossTerms {
    pub total: Var,
    pub distill: f64,
    pub value: f64,
}

fn teacher_var(g: &mut Graph, live: Var, teacher: Teacher) -> Result<Var> {
    match teacher {
        Teacher::Detached => Ok(g.detach(live)),
        Teacher::Frozen(v) => {
            let shape = g.shape(live).to_vec();
            Ok(g.constant(Tensor::new(shape, v.to_vec())?))
        }
    }
}

/// `Σ (pred − y)²` or `Σ BCE(σ(pred), y)` over every entry.
fn value_sum(g: &mut Graph, pred: Var, y: Var, bce: bool) -> Result<Var> {
    if bce {
        let sp = g.softplus(pred);
        let yz = g.mul(y, pred)?;
        let l = g.sub(sp, yz)?;
        Ok(g.sum(l))
    } else {
        let r = g.sub(pred, y)?;
        let sq = g.square(r);
        Ok(g.sum(sq))
    }
}

fn check_label(y: f64, task: Task) -> Result<()> {
    let ok = match task {
        Task::Classification => (0.0..=1.0).contains(&y),
        Task::Regression => y.is_finite(),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "invalid label {y} for {task:?}"
        )))
    }
}

/// Upper-triangular ones: `delta · U` gives running sums along each row.
fn cumsum_matrix(n: usize) -> Tensor {
    let data = (0..n)
        .flat_map(|i| (0..n).map(move |k| if i <= k { 1.0 } else { 0.0 }))
        .collect();
    Tensor::new(vec![n, n], data).expect("square matrix")
}

/// The per-sample single-order objective, averaged over the batch:
///
/// `Σ_{k ≤ j} λ_s (φ_{O_k,k} − Δ_k)² + Σ_{k ≤ n} λ_v ℓ(φ₀ + Σ_{i≤k} Δ_i, y)`
///
/// where the attribution head sees the first `j = prefix_lens[b]` features
/// of sequence `b` and `ℓ` is squared error or cross-entropy.
pub fn combined_loss(
    g: &mut Graph,
    model: &SasanetModel,
    batch: &SeqBatch,
    labels: &[f64],
    prefix_lens: &[usize],
    weights: &LossWeights,
    teacher: Teacher,
) -> Result<LossTerms> {
    let task = model.schema().task;
    if labels.len() != batch.b {
        return Err(Error::InvalidArgument(
            "one label per sequence required".into(),
        ));
    }
    for &y in labels {
        check_label(y, task)?;
    }
    let (b, n, big_n) = (batch.b, batch.n, model.n_features());
    let fwd = model.forward_train(g, batch, prefix_lens)?;
    let t = teacher_var(g, fwd.delta, teacher)?;

    let mut phi_idx = Vec::new();
    let mut t_idx = Vec::new();
    for (bi, &len) in prefix_lens.iter().enumerate() {
        for k in 0..len {
            phi_idx.push((bi * n + k) * big_n + k);
            t_idx.push(bi * n + k);
        }
    }
    let student = g.gather(fwd.positional, phi_idx.into())?;
    let target = g.gather(t, t_idx.into())?;
    let diff = g.sub(student, target)?;
    let sq = g.square(diff);
    let distill = g.sum(sq);

    let u = g.constant(cumsum_matrix(n));
    let cum = g.matmul(fwd.delta, u)?;
    let pred = g.add_scalar(cum, model.phi0());
    let y = g.constant(Tensor::new(
        vec![b, n],
        labels
            .iter()
            .flat_map(|&y| std::iter::repeat_n(y, n))
            .collect(),
    )?);
    let bce = weights.variant == LossVariant::BceMarginal && task == Task::Classification;
    let value = value_sum(g, pred, y, bce)?;

    let ws = g.scale(distill, weights.lambda_s / b as f64);
    let wv = g.scale(value, weights.lambda_v / b as f64);
    let total = g.add(ws, wv)?;
    Ok(LossTerms {
        total,
        distill: g.value(distill).item() / b as f64,
        value: g.value(value).item() / b as f64,
    })
}

fn single(model: &SasanetModel, x: &[f64], order: &[usize]) -> Result<SeqBatch> {
    if order.is_empty() {
        return Err(Error::InvalidArgument(
            "order must contain at least one feature".into(),
        ));
    }
    SeqBatch::new(model.n_features(), &[(x, order)])
}

/// Negative log-likelihood of `y` under `σ(f_c(x, O))`.
pub fn marginal_loss(
    g: &mut Graph,
    model: &SasanetModel,
    x: &[f64],
    y: f64,
    order: &[usize],
) -> Result<Var> {
    if model.schema().task != Task::Classification {
        return Err(Error::InvalidArgument(
            "the marginal likelihood loss needs a classification task".into(),
        ));
    }
    check_label(y, Task::Classification)?;
    let batch = single(model, x, order)?;
    let delta = model.forward_marginal(g, &batch)?;
    let s = g.sum(delta);
    let z = g.add_scalar(s, model.phi0());
    let y = g.constant(Tensor::scalar(y));
    value_sum(g, z, y, true)
}

/// Loss of the order-dependent prediction on a subset: cross-entropy for
/// classification, squared error for regression.
pub fn value_loss(
    g: &mut Graph,
    model: &SasanetModel,
    x: &[f64],
    order: &[usize],
    y: f64,
) -> Result<Var> {
    let task = model.schema().task;
    check_label(y, task)?;
    let batch = single(model, x, order)?;
    let delta = model.forward_marginal(g, &batch)?;
    let s = g.sum(delta);
    let z = g.add_scalar(s, model.phi0());
    let y = g.constant(Tensor::scalar(y));
    value_sum(g, z, y, task == Task::Classification)
}

struct DistillSetup {
    positional: Var,
    teacher: Var,
    rows: Vec<usize>,
    n: usize,
}

fn distill_setup(
    g: &mut Graph,
    model: &SasanetModel,
    x: &[f64],
    listing: &[usize],
    perms: &[Vec<usize>],
    teacher: Teacher,
) -> Result<DistillSetup> {
    if perms.is_empty() {
        return Err(Error::InvalidArgument(
            "at least one permutation is required".into(),
        ));
    }
    let n = listing.len();
    let mut sorted = listing.to_vec();
    sorted.sort_unstable();
    let mut rows = Vec::with_capacity(perms.len() * n);
    for p in perms {
        let mut s = p.clone();
        s.sort_unstable();
        if s != sorted {
            return Err(Error::InvalidArgument(format!(
                "{p:?} is not an order of {listing:?}"
            )));
        }
        rows.extend(
            p.iter()
                .map(|f| listing.iter().position(|l| l == f).expect("checked above")),
        );
    }
    let lb = single(model, x, listing)?;
    let positional = model.forward_shapley(g, &lb, None)?;
    let pb: Vec<(&[f64], &[usize])> = perms.iter().map(|p| (x, p.as_slice())).collect();
    let pb = SeqBatch::new(model.n_features(), &pb)?;
    let delta = model.forward_marginal(g, &pb)?;
    let teacher = teacher_var(g, delta, teacher)?;
    Ok(DistillSetup {
        positional,
        teacher,
        rows,
        n,
    })
}

/// Mean over `perms` of `Σ_i (φ_i − Δ_i^O)²`, with `φ_i` the aggregated
/// attribution of the listed subset and `Δ_i^O` feature `i`'s contribution
/// along order `O`.
pub fn distill_direct_loss(
    g: &mut Graph,
    model: &SasanetModel,
    x: &[f64],
    listing: &[usize],
    perms: &[Vec<usize>],
    teacher: Teacher,
) -> Result<Var> {
    let s = distill_setup(g, model, x, listing, perms, teacher)?;
    let big_n = model.n_features();
    let idx: Vec<usize> = (0..s.n)
        .flat_map(|r| (0..s.n).map(move |k| r * big_n + k))
        .collect();
    let block = g.gather(s.positional, idx.into())?;
    let block = g.reshape(block, vec![s.n, s.n])?;
    let sums = g.sum_last(block)?;
    let phi = g.scale(sums, 1.0 / s.n as f64);
    let student = g.gather(phi, s.rows.into())?;
    let target = g.reshape(s.teacher, vec![perms.len() * s.n])?;
    let diff = g.sub(student, target)?;
    let sq = g.square(diff);
    let total = g.sum(sq);
    Ok(g.scale(total, 1.0 / perms.len() as f64))
}

/// Mean over `perms` of `Σ_k (φ_{O_k,k} − Δ_k)²` on the positional matrix.
pub fn distill_positional_loss(
    g: &mut Graph,
    model: &SasanetModel,
    x: &[f64],
    listing: &[usize],
    perms: &[Vec<usize>],
    teacher: Teacher,
) -> Result<Var> {
    let s = distill_setup(g, model, x, listing, perms, teacher)?;
    let big_n = model.n_features();
    let idx: Vec<usize> = s
        .rows
        .iter()
        .enumerate()
        .map(|(j, &r)| r * big_n + j % s.n)
        .collect();
    let student = g.gather(s.positional, idx.into())?;
    let target = g.reshape(s.teacher, vec![perms.len() * s.n])?;
    let diff = g.sub(student, target)?;
    let sq = g.square(diff);
    let total = g.sum(sq);
    Ok(g.scale(total, 1.0 / perms.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureSchema, FeatureSpec};
    use crate::model::ArchConfig;

    fn model(task: Task, phi0: f64) -> SasanetModel {
        let f = (0..4)
            .map(|i| FeatureSpec::continuous(format!("x{i}"), 0.0, 1.0))
            .collect();
        let schema = FeatureSchema::new(f, "y", task).unwrap();
        SasanetModel::new(schema, ArchConfig::desk(), phi0, 3).unwrap()
    }

    const X: [f64; 4] = [0.5, -1.0, 2.0, 0.1];

    fn eval(model: &SasanetModel, f: impl FnOnce(&mut Graph) -> Result<Var>) -> f64 {
        let mut g = Graph::new(model.params());
        let v = f(&mut g).unwrap();
        g.value(v).item()
    }

    #[test]
    fn marginal_loss_matches_reference_bce() {
        let m = model(Task::Classification, 0.2);
        let order = [2, 0, 3, 1];
        let z = m.sequential_output(&X, &order).unwrap();
        for y in [0.0, 1.0] {
            let l = eval(&m, |g| marginal_loss(g, &m, &X, y, &order));
            let p = crate::math::sigmoid(z);
            let reference = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
            assert!((l - reference).abs() < 1e-12, "{l} vs {reference}");
        }
        assert!(eval(&m, |g| value_loss(g, &m, &X, &order, 1.0)) > 0.0);
        let mut g = Graph::new(m.params());
        assert!(marginal_loss(&mut g, &m, &X, 2.0, &order).is_err());
        let r = model(Task::Regression, 0.0);
        assert!(marginal_loss(&mut g, &r, &X, 1.0, &order).is_err());
    }

    #[test]
    fn bce_reference_points() {
        let mut store = crate::tensor::ParamStore::new();
        store.add("unused", Tensor::scalar(0.0));
        let mut g = Graph::new(&store);
        let z = g.constant(Tensor::scalar(0.0));
        let y = g.constant(Tensor::scalar(1.0));
        let l = value_sum(&mut g, z, y, true).unwrap();
        assert!((g.value(l).item() - 2f64.ln()).abs() < 1e-15);
        let z = g.constant(Tensor::scalar(60.0));
        let l = value_sum(&mut g, z, y, true).unwrap();
        assert!(g.value(l).item() < 1e-20);
    }

    #[test]
    fn single_feature_combined_is_squared_residual() {
        let m = model(Task::Regression, 0.4);
        let batch = SeqBatch::new(4, &[(&X, &[1])]).unwrap();
        let w = LossWeights {
            lambda_v: 1.0,
            lambda_s: 0.0,
            variant: LossVariant::CombinedSq,
        };
        let mut g = Graph::new(m.params());
        let terms = combined_loss(&mut g, &m, &batch, &[1.3], &[1], &w, Teacher::Detached).unwrap();
        let d = m.marginal_contribution(&X, &[1]).unwrap()[0];
        let expect = (d + 0.4 - 1.3f64).powi(2);
        assert!((g.value(terms.total).item() - expect).abs() < 1e-12);
    }

    #[test]
    fn distillation_vanishes_when_head_matches_teacher() {
        let m = model(Task::Regression, 0.0);
        let order = vec![3, 1, 0, 2];
        let a = m.attribution(&X, &order).unwrap();
        // teacher equal to the student's own positional values along `order`
        let frozen: Vec<f64> = (0..4).map(|k| a.positional[k][k]).collect();
        let batch = SeqBatch::new(4, &[(&X, &order)]).unwrap();
        let w = LossWeights {
            lambda_v: 0.0,
            lambda_s: 1.0,
            variant: LossVariant::CombinedSq,
        };
        let mut g = Graph::new(m.params());
        let t = combined_loss(
            &mut g,
            &m,
            &batch,
            &[0.0],
            &[4],
            &w,
            Teacher::Frozen(&frozen),
        )
        .unwrap();
        assert!(t.distill.abs() < 1e-24);
        let l = eval(&m, |g| {
            distill_positional_loss(
                g,
                &m,
                &X,
                &order,
                &[order.clone()],
                Teacher::Frozen(&frozen),
            )
        });
        assert!(l.abs() < 1e-24);
        let direct: Vec<f64> = order.iter().map(|&f| a.phi_of(f).unwrap()).collect();
        let l = eval(&m, |g| {
            distill_direct_loss(
                g,
                &m,
                &X,
                &order,
                &[order.clone()],
                Teacher::Frozen(&direct),
            )
        });
        assert!(l.abs() < 1e-24);
    }

    #[test]
    fn detached_teacher_blocks_gradient_into_marginal_module() {
        let m = model(Task::Regression, 0.0);
        let batch = SeqBatch::new(4, &[(&X, &[0, 1, 2, 3]), (&X, &[3, 2, 1, 0])]).unwrap();
        let w = LossWeights {
            lambda_v: 0.0,
            lambda_s: 1.0,
            variant: LossVariant::CombinedSq,
        };
        let mut g = Graph::new(m.params());
        let t = combined_loss(
            &mut g,
            &m,
            &batch,
            &[0.0, 0.0],
            &[4, 2],
            &w,
            Teacher::Detached,
        )
        .unwrap();
        let grads = g.backward(t.total).unwrap().into_param_grads(m.params());
        for id in m.marginal_param_ids() {
            assert!(
                grads[id.index()].data().iter().all(|&v| v == 0.0),
                "{}",
                m.params().name(id)
            );
        }
        assert!(m
            .shapley_param_ids()
            .iter()
            .any(|id| grads[id.index()].data().iter().any(|&v| v != 0.0)));
    }

    #[test]
    fn rejects_empty_permutation_set_and_foreign_orders() {
        let m = model(Task::Regression, 0.0);
        let mut g = Graph::new(m.params());
        assert!(distill_direct_loss(&mut g, &m, &X, &[0, 1], &[], Teacher::Detached).is_err());
        assert!(
            distill_positional_loss(&mut g, &m, &X, &[0, 1], &[vec![0, 2]], Teacher::Detached)
                .is_err()
        );
    }
}
