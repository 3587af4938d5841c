use super::config::TrainConfig;
use super::loss::{combined_loss, LossWeights, Teacher};
use super::permutation::shuffled;
use crate::data::{Dataset, Task};
use crate::error::{Error, Result};
use crate::eval::metrics;
use crate::model::{Link, SasanetModel, SeqBatch};
use crate::rng;
use crate::tensor::{AdamConfig, AdamState, Graph};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Per-epoch averages of the batch losses plus one task metric on training data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub distill_loss: f64,
    pub value_loss: f64,
    /// `rmse` for regression, `auc` for classification.
    pub metric_name: String,
    pub metric: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "epoch",
            "loss",
            "distill_loss",
            "value_loss",
            "metric_name",
            "metric",
        ])?;
        for r in &self.records {
            out.write_record([
                r.epoch.to_string(),
                r.loss.to_string(),
                r.distill_loss.to_string(),
                r.value_loss.to_string(),
                r.metric_name.clone(),
                r.metric.map(|m| m.to_string()).unwrap_or_default(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::path(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Where a diagnostic checkpoint goes if training diverges.
    pub diagnostic_dir: Option<PathBuf>,
}

pub struct TrainOutcome {
    pub model: SasanetModel,
    pub history: History,
}

/// `φ₀` for a training set: the inverse link of the mean label.
pub fn initial_bias(data: &Dataset) -> f64 {
    Link::for_task(data.schema().task).inverse(data.mean_label())
}

pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(data, cfg, &TrainOptions::default())
}

/// Adam on the combined loss. Every sample of a batch gets a fresh uniform
/// join order; the attribution head is distilled on a random prefix of it
/// when `distill_prefix_subsets` is set. All randomness derives from
/// `cfg.seed`.
pub fn train_with(data: &Dataset, cfg: &TrainConfig, opts: &TrainOptions) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let model = SasanetModel::new(
        data.schema().clone(),
        cfg.arch.clone(),
        initial_bias(data),
        rng::derive(cfg.seed, &[1]),
    )?;
    continue_training(model, data, cfg, opts)
}

/// Runs `cfg.epochs` epochs of training starting from `model`.
pub fn continue_training(
    mut model: SasanetModel,
    data: &Dataset,
    cfg: &TrainConfig,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.ensure_compatible(data.schema())?;
    let n = data.n_features();
    let weights = LossWeights {
        lambda_v: cfg.lambda_v,
        lambda_s: cfg.lambda_s,
        variant: cfg.loss_variant,
    };
    let mut adam = AdamState::new(
        model.params(),
        AdamConfig {
            lr: cfg.learning_rate,
            ..AdamConfig::default()
        },
    )?;
    let samples = data.samples();
    let mut history = History::default();

    for epoch in 0..cfg.epochs {
        let mut r = rng::stream(cfg.seed, &[2, epoch as u64]);
        let mut idx: Vec<usize> = (0..samples.len()).collect();
        idx.shuffle(&mut r);
        let (mut tot, mut dis, mut val, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for (bi, chunk) in idx.chunks(cfg.batch_size).enumerate() {
            let orders: Vec<Vec<usize>> = chunk.iter().map(|_| shuffled(n, &mut r)).collect();
            let lens: Vec<usize> = chunk
                .iter()
                .map(|_| {
                    if cfg.distill_prefix_subsets {
                        r.gen_range(1..=n)
                    } else {
                        n
                    }
                })
                .collect();
            let rows: Vec<(&[f64], &[usize])> = chunk
                .iter()
                .zip(&orders)
                .map(|(&i, o)| (samples[i].values.as_slice(), o.as_slice()))
                .collect();
            let labels: Vec<f64> = chunk.iter().map(|&i| samples[i].label).collect();
            let batch = SeqBatch::new(n, &rows)?;

            let step = {
                let mut g = Graph::new(model.params());
                let terms = combined_loss(
                    &mut g,
                    &model,
                    &batch,
                    &labels,
                    &lens,
                    &weights,
                    Teacher::Detached,
                )?;
                let loss = g.value(terms.total).item();
                if !loss.is_finite() {
                    Err(format!("loss is {loss}"))
                } else {
                    let grads = g.backward(terms.total)?.into_param_grads(model.params());
                    Ok((grads, loss, terms.distill, terms.value))
                }
            };
            let outcome =
                step.and_then(
                    |(grads, loss, d, v)| match adam.step(model.params_mut(), &grads) {
                        Ok(()) => Ok((loss, d, v)),
                        Err(Error::NonFiniteGradient(p)) => {
                            Err(format!("non-finite gradient in {p}"))
                        }
                        Err(e) => Err(e.to_string()),
                    },
                );
            match outcome {
                Ok((loss, d, v)) => {
                    tot += loss;
                    dis += d;
                    val += v;
                    batches += 1;
                }
                Err(detail) => return Err(diverged(&model, epoch, bi, detail, opts)),
            }
        }
        let (metric_name, metric) = history_metric(&model, data, cfg.history_eval_samples)?;
        let b = batches.max(1) as f64;
        let rec = EpochRecord {
            epoch,
            loss: tot / b,
            distill_loss: dis / b,
            value_loss: val / b,
            metric_name,
            metric,
        };
        log::info!(
            "epoch {epoch}: loss {:.5} (distill {:.5}, value {:.5}) {} {}",
            rec.loss,
            rec.distill_loss,
            rec.value_loss,
            rec.metric_name,
            rec.metric
                .map_or("undefined".to_string(), |m| format!("{m:.4}"))
        );
        history.records.push(rec);
    }
    Ok(TrainOutcome { model, history })
}

fn diverged(
    model: &SasanetModel,
    epoch: usize,
    batch: usize,
    detail: String,
    opts: &TrainOptions,
) -> Error {
    let checkpoint = opts.diagnostic_dir.as_ref().and_then(|dir| {
        let path = dir.join("diverged.ckpt");
        match std::fs::create_dir_all(dir)
            .map_err(|e| Error::path(dir, e))
            .and_then(|_| model.save(&path))
        {
            Ok(()) => Some(path),
            Err(e) => {
                log::error!("could not write diagnostic checkpoint: {e}");
                None
            }
        }
    });
    Error::Diverged {
        epoch,
        batch,
        detail,
        checkpoint,
    }
}

fn history_metric(
    model: &SasanetModel,
    data: &Dataset,
    limit: usize,
) -> Result<(String, Option<f64>)> {
    let task = data.schema().task;
    let name = match task {
        Task::Classification => "auc",
        Task::Regression => "rmse",
    };
    let take = limit.min(data.len());
    if take == 0 {
        return Ok((name.into(), None));
    }
    let all: Vec<usize> = (0..data.n_features()).collect();
    let items: Vec<(&[f64], &[usize])> = data.samples()[..take]
        .iter()
        .map(|s| (s.values.as_slice(), all.as_slice()))
        .collect();
    let scores: Vec<f64> = model
        .attribution_many(&items)?
        .iter()
        .map(|a| model.link().apply(a.f))
        .collect();
    let labels: Vec<f64> = data.samples()[..take].iter().map(|s| s.label).collect();
    let value = match task {
        Task::Classification => metrics::auc(&scores, &labels).ok(),
        Task::Regression => Some(metrics::rmse(&scores, &labels)?),
    };
    Ok((name.into(), value))
}
