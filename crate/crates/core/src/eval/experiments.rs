use super::metrics::{self, MetricSuite};
use crate::data::{mask_to_size, Dataset, Task};
use crate::error::{Error, Result};
use crate::model::SasanetModel;
use crate::oracle::{kernel_shap, NativeValue};
use crate::rng;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

const CHUNK: usize = 256;

/// How attributions order features.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankKey {
    /// Largest `|φ_i|` first.
    #[default]
    Magnitude,
    /// Largest signed `φ_i` first.
    Signed,
}

impl RankKey {
    fn key(self, v: f64) -> f64 {
        match self {
            RankKey::Magnitude => v.abs(),
            RankKey::Signed => v,
        }
    }
}

/// A source of per-sample feature rankings.
#[derive(Clone, Debug)]
pub enum Ranker<'a> {
    /// The model's own attributions. With `recompute`, masking re-attributes
    /// the remaining subset after every removal; otherwise the full-set
    /// attribution ranks all steps.
    SelfAttribution { recompute: bool },
    /// Attributions computed elsewhere, one dense length-`N` row per sample.
    Precomputed(&'a [Vec<f64>]),
    /// Uniform random scores drawn per sample from `seed`.
    Random { seed: u64 },
}

impl Ranker<'_> {
    fn recomputes(&self) -> bool {
        matches!(self, Ranker::SelfAttribution { recompute: true })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurveOptions {
    pub k_max: usize,
    pub key: RankKey,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub method: String,
    pub k: usize,
    /// `recomputed` or `fixed`.
    pub ranking: String,
    pub metrics: MetricSuite,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub rows: Vec<CurveRow>,
}

impl CurveReport {
    pub fn get(&self, method: &str, k: usize) -> Option<&MetricSuite> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.k == k)
            .map(|r| &r.metrics)
    }
}

fn pick(scores: &[f64], candidates: &[usize], key: RankKey) -> usize {
    // ties go to the lower feature id
    *candidates
        .iter()
        .max_by(|&&a, &&b| {
            key.key(scores[a])
                .total_cmp(&key.key(scores[b]))
                .then(b.cmp(&a))
        })
        .expect("candidates nonempty")
}

fn random_scores(seed: u64, sample: usize, n: usize) -> Vec<f64> {
    let mut r = rng::stream(seed, &[sample as u64]);
    (0..n).map(|_| r.gen::<f64>()).collect()
}

/// Dense full-set scores for each sample of `rows` (global indices).
fn fixed_scores(
    model: &SasanetModel,
    data: &Dataset,
    rows: &[usize],
    ranker: &Ranker,
) -> Result<Vec<Vec<f64>>> {
    let n = model.n_features();
    match ranker {
        Ranker::SelfAttribution { .. } => {
            let all: Vec<usize> = (0..n).collect();
            let items: Vec<(&[f64], &[usize])> = rows
                .iter()
                .map(|&i| (data.samples()[i].values.as_slice(), all.as_slice()))
                .collect();
            Ok(model
                .attribution_many(&items)?
                .into_iter()
                .map(|a| a.dense(n))
                .collect())
        }
        Ranker::Precomputed(table) => rows
            .iter()
            .map(|&i| {
                table
                    .get(i)
                    .filter(|r| r.len() == n)
                    .cloned()
                    .ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "no length-{n} attribution row for sample {i}"
                        ))
                    })
            })
            .collect(),
        Ranker::Random { seed } => Ok(rows.iter().map(|&i| random_scores(*seed, i, n)).collect()),
    }
}

/// Subsets visited by greedy removal (`masking`) or greedy addition, per
/// sample and step `1..=k_max`.
fn greedy_subsets(
    model: &SasanetModel,
    data: &Dataset,
    ranker: &Ranker,
    opts: CurveOptions,
    masking: bool,
) -> Result<Vec<Vec<Vec<usize>>>> {
    let n = model.n_features();
    let rows: Vec<usize> = (0..data.len()).collect();
    let chunks: Vec<Vec<Vec<Vec<usize>>>> = rows
        .par_chunks(CHUNK)
        .map(|chunk| -> Result<Vec<Vec<Vec<usize>>>> {
            let mut scores = fixed_scores(model, data, chunk, ranker)?;
            let mut current: Vec<Vec<usize>> = chunk
                .iter()
                .map(|_| {
                    if masking {
                        (0..n).collect()
                    } else {
                        Vec::new()
                    }
                })
                .collect();
            let mut out: Vec<Vec<Vec<usize>>> = chunk
                .iter()
                .map(|_| Vec::with_capacity(opts.k_max))
                .collect();
            for step in 0..opts.k_max {
                if masking && ranker.recomputes() && step > 0 {
                    let items: Vec<(&[f64], &[usize])> = chunk
                        .iter()
                        .zip(&current)
                        .map(|(&i, s)| (data.samples()[i].values.as_slice(), s.as_slice()))
                        .collect();
                    for (sc, a) in scores.iter_mut().zip(model.attribution_many(&items)?) {
                        *sc = a.dense(n);
                    }
                }
                for (j, cur) in current.iter_mut().enumerate() {
                    if masking {
                        let f = pick(&scores[j], cur, opts.key);
                        cur.retain(|&c| c != f);
                    } else {
                        let candidates: Vec<usize> = (0..n).filter(|c| !cur.contains(c)).collect();
                        let f = pick(&scores[j], &candidates, opts.key);
                        cur.push(f);
                        cur.sort_unstable();
                    }
                    out[j].push(cur.clone());
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Link-space predictions for each sample on the given subsets.
pub fn predict_subsets(
    model: &SasanetModel,
    data: &Dataset,
    subsets: &[Vec<usize>],
) -> Result<Vec<f64>> {
    let items: Vec<(&[f64], &[usize])> = data
        .samples()
        .iter()
        .zip(subsets)
        .map(|(s, sub)| (s.values.as_slice(), sub.as_slice()))
        .collect();
    let out: Vec<Vec<f64>> = items
        .par_chunks(CHUNK)
        .map(|c| {
            Ok(model
                .attribution_many(c)?
                .into_iter()
                .map(|a| model.link().apply(a.f))
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok(out.into_iter().flatten().collect())
}

fn score(model: &SasanetModel, data: &Dataset, subsets: &[Vec<usize>]) -> Result<MetricSuite> {
    let pred = predict_subsets(model, data, subsets)?;
    metrics::metrics(&pred, &data.labels(), data.schema().task)
}

fn curve(
    model: &SasanetModel,
    rankers: &[(String, Ranker)],
    data: &Dataset,
    opts: CurveOptions,
    masking: bool,
) -> Result<CurveReport> {
    let n = model.n_features();
    let baseline: Vec<Vec<usize>> = vec![
        if masking {
            (0..n).collect()
        } else {
            Vec::new()
        };
        data.len()
    ];
    let base = if masking || data.schema().task == Task::Regression {
        Some(score(model, data, &baseline)?)
    } else {
        // the empty set scores every sample alike; AUC and AP are undefined
        None
    };
    let mut rows = Vec::new();
    for (name, ranker) in rankers {
        let ranking = if masking && ranker.recomputes() {
            "recomputed"
        } else {
            "fixed"
        };
        if let Some(b) = base {
            rows.push(CurveRow {
                method: name.clone(),
                k: 0,
                ranking: ranking.into(),
                metrics: b,
            });
        }
        let steps = greedy_subsets(model, data, ranker, opts, masking)?;
        for k in 1..=opts.k_max {
            let subsets: Vec<Vec<usize>> = steps.iter().map(|s| s[k - 1].clone()).collect();
            rows.push(CurveRow {
                method: name.clone(),
                k,
                ranking: ranking.into(),
                metrics: score(model, data, &subsets)?,
            });
        }
    }
    Ok(CurveReport { rows })
}

/// Removes each sample's top-`k` features (`k = 1..=k_max`) and scores the
/// model on what remains, natively on the subset. Row `k = 0` is the full set.
pub fn masking_experiment(
    model: &SasanetModel,
    rankers: &[(String, Ranker)],
    data: &Dataset,
    opts: CurveOptions,
) -> Result<CurveReport> {
    if opts.k_max >= model.n_features() {
        return Err(Error::InvalidArgument(format!(
            "k_max {} must be below the feature count {}",
            opts.k_max,
            model.n_features()
        )));
    }
    curve(model, rankers, data, opts, true)
}

/// Starts from the empty set and adds each sample's top-`k` features by its
/// full-set ranking.
pub fn adding_experiment(
    model: &SasanetModel,
    rankers: &[(String, Ranker)],
    data: &Dataset,
    opts: CurveOptions,
) -> Result<CurveReport> {
    if opts.k_max > model.n_features() {
        return Err(Error::InvalidArgument(format!(
            "k_max {} exceeds the feature count {}",
            opts.k_max,
            model.n_features()
        )));
    }
    curve(model, rankers, data, opts, false)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeRow {
    pub k: usize,
    /// `auc` or `rmse`.
    pub metric: String,
    /// `None` where the metric is undefined.
    pub value: Option<f64>,
}

/// Scores the model with every test sample randomly masked to `k` features,
/// for `k = 0..=N`.
pub fn subset_size_eval(model: &SasanetModel, data: &Dataset, seed: u64) -> Result<Vec<SizeRow>> {
    let n = model.n_features();
    let task = data.schema().task;
    let labels = data.labels();
    let mut rows = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let subsets: Vec<Vec<usize>> = (0..data.len())
            .map(|i| Ok(mask_to_size(i as u64, n, k, seed)?.indices().to_vec()))
            .collect::<Result<_>>()?;
        let pred = predict_subsets(model, data, &subsets)?;
        let (metric, value) = match task {
            Task::Classification if k == 0 => ("auc", None),
            Task::Classification => ("auc", metrics::auc(&pred, &labels).ok()),
            Task::Regression => ("rmse", metrics::rmse(&pred, &labels).ok()),
        };
        rows.push(SizeRow {
            k,
            metric: metric.into(),
            value,
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: String,
    pub n_samples: usize,
    pub total_seconds: f64,
    pub seconds_per_sample: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
    pub hardware: String,
}

impl TimingReport {
    pub fn per_sample(&self, method: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method)
            .map(|r| r.seconds_per_sample)
    }
}

fn hardware_note() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    format!(
        "{cpu} ({}), one thread, sequential per-sample calls",
        std::env::consts::ARCH
    )
}

/// Wall-clock time of full-set self-attribution versus native-subset
/// KernelSHAP with `kernel_coalitions` coalitions, one sample at a time on
/// the calling thread.
pub fn timing(
    model: &SasanetModel,
    samples: &[Vec<f64>],
    kernel_coalitions: usize,
    seed: u64,
) -> Result<TimingReport> {
    let n = model.n_features();
    let all: Vec<usize> = (0..n).collect();
    if let Some(x) = samples.first() {
        model.attribution(x, &all)?;
        kernel_shap(&NativeValue::new(model, x)?, kernel_coalitions, seed)?;
    }
    let row = |method: &str, secs: f64| TimingRow {
        method: method.into(),
        n_samples: samples.len(),
        total_seconds: secs,
        seconds_per_sample: if samples.is_empty() {
            0.0
        } else {
            secs / samples.len() as f64
        },
    };
    let t = Instant::now();
    for x in samples {
        std::hint::black_box(model.attribution(x, &all)?);
    }
    let self_secs = if samples.is_empty() {
        0.0
    } else {
        t.elapsed().as_secs_f64()
    };
    let t = Instant::now();
    for (j, x) in samples.iter().enumerate() {
        let v = NativeValue::new(model, x)?;
        std::hint::black_box(kernel_shap(
            &v,
            kernel_coalitions,
            rng::derive(seed, &[j as u64]),
        )?);
    }
    let kernel_secs = if samples.is_empty() {
        0.0
    } else {
        t.elapsed().as_secs_f64()
    };
    Ok(TimingReport {
        rows: vec![
            row("self-attribution", self_secs),
            row("kernel-shap", kernel_secs),
        ],
        hardware: hardware_note(),
    })
}
