//! The `sasanet` command line.

use crate::data::{
    load_csv, load_csv_with_schema, shift_distribution, synth_binary_classification,
    synth_linear_regression, Dataset, FeatureSchema, Split, Task,
};
use crate::error::{Error, Result};
use crate::eval::{
    adding_experiment, emit_report, masking_experiment, metrics, predict_subsets, subset_size_eval,
    timing, AttributionTable, CurveOptions, ExperimentReport, MetricEntry, RankKey, Ranker,
};
use crate::model::SasanetModel;
use crate::oracle::{
    attribution_rmse, kernel_shap, shapley_montecarlo, shapley_tabulated, BackgroundValue,
    NativeValue,
};
use crate::rng;
use crate::training::{train_with, TrainConfig, TrainOptions};
use clap::{Parser, Subcommand, ValueEnum};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Parser, Debug)]
#[command(
    name = "sasanet",
    version,
    about = "Self-attributing set network: train, attribute, verify and evaluate"
)]
pub struct Cli {
    /// Worker threads for inference-heavy steps; training always runs on one.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model; writes model.ckpt, history.csv, config.json and manifest.json.
    Train {
        /// CSV with one column per schema feature plus the label.
        #[arg(long)]
        data: PathBuf,
        /// Feature schema JSON.
        #[arg(long)]
        schema: PathBuf,
        /// Training config JSON; omitted fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Train only on the `train` rows of this split file.
        #[arg(long)]
        split: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Self-attribute every row; writes attributions.csv.
    Attribute {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Schema to check against the checkpoint; the checkpoint's own schema is used to read the data.
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte-Carlo Shapley values of the model's own output; writes oracle.csv.
    Oracle {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Permutations per sample; N! enumerates every order exactly.
        #[arg(long = "perms", default_value_t = 10_000)]
        perms: usize,
        /// Only the first rows of the data.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run evaluation experiments; writes one CSV per experiment and plots.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "metrics,mask,add,subset,plots"
        )]
        experiments: Vec<Experiment>,
        /// Add one random ±1 offset per continuous feature before evaluating.
        #[arg(long)]
        shift: bool,
        #[arg(long, default_value_t = 5)]
        k_max: usize,
        #[arg(long, value_enum, default_value_t = RankKey::Magnitude)]
        rank_key: RankKey,
        /// Rank masking steps by the full-set self-attribution instead of re-attributing after each removal.
        #[arg(long)]
        fixed_ranking: bool,
        /// KernelSHAP coalitions per sample (default 2N + 64).
        #[arg(long)]
        kernel_coalitions: Option<usize>,
        #[arg(long, value_enum, default_value_t = KernelMode::Background)]
        kernel_mode: KernelMode,
        /// Background rows for KernelSHAP replacement.
        #[arg(long, default_value_t = 20)]
        background: usize,
        /// Permutations per sample for oracle-rmse.
        #[arg(long = "perms", default_value_t = 10_000)]
        perms: usize,
        /// Samples scored by oracle-rmse.
        #[arg(long, default_value_t = 100)]
        oracle_samples: usize,
        /// Samples timed by the timing experiment.
        #[arg(long, default_value_t = 1000)]
        timing_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic task with known Shapley values.
    Synth {
        #[arg(long, value_enum)]
        task: SynthTask,
        /// Number of rows.
        #[arg(long)]
        n: usize,
        #[arg(long)]
        features: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Label noise std for the linear task.
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        /// Comma-separated weights; drawn from the seed when omitted.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        weights: Option<Vec<f64>>,
        /// Fraction of rows assigned to the test split.
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Metrics,
    Mask,
    Add,
    Subset,
    Timing,
    OracleRmse,
    Plots,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelMode {
    Native,
    Background,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthTask {
    Linear,
    Binary,
}

impl ValueEnum for RankKey {
    fn value_variants<'a>() -> &'a [Self] {
        &[RankKey::Magnitude, RankKey::Signed]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            RankKey::Magnitude => "magnitude",
            RankKey::Signed => "signed",
        }))
    }
}

/// Process exit status for an error: 2 for invalid input, 3 for failures
/// while running.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Validation(_)
        | Error::InvalidArgument(_)
        | Error::Schema(_)
        | Error::SchemaMismatch(_)
        | Error::MissingValue { .. }
        | Error::TooManyFeatures { .. }
        | Error::Json(_) => 2,
        _ => 3,
    }
}

/// Parses `args` and runs the command, returning the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::Validation(problems) = &e {
                for p in problems {
                    eprintln!("  - {p}");
                }
            }
            exit_code(&e)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(cli))
}

#[derive(Serialize)]
struct Manifest {
    command: String,
    config_hash: String,
    seed: u64,
    dataset_fingerprint: String,
    version: String,
    started_unix: f64,
    finished_unix: f64,
    inputs: serde_json::Value,
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn fingerprint(path: &Path) -> Result<String> {
    Ok(sha256_hex(
        &std::fs::read(path).map_err(|e| Error::path(path, e))?,
    ))
}

struct Run {
    command: &'static str,
    started: f64,
    out: PathBuf,
}

impl Run {
    fn start(command: &'static str, out: &Path) -> Result<Self> {
        std::fs::create_dir_all(out).map_err(|e| Error::path(out, e))?;
        Ok(Run {
            command,
            started: now(),
            out: out.to_path_buf(),
        })
    }

    fn finish(self, config: &impl Serialize, seed: u64, data: &Path) -> Result<()> {
        let config = serde_json::to_value(config)?;
        let manifest = Manifest {
            command: self.command.into(),
            config_hash: sha256_hex(serde_json::to_string(&config)?.as_bytes()),
            seed,
            dataset_fingerprint: fingerprint(data)?,
            version: format!("sasanet {}", env!("CARGO_PKG_VERSION")),
            started_unix: self.started,
            finished_unix: now(),
            inputs: config,
        };
        let path = self.out.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
            .map_err(|e| Error::path(&path, e))
    }
}

/// Rejects an input path that is not a readable file, naming its flag.
fn require_file(flag: &str, path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{flag} {}: no such file",
            path.display()
        )))
    }
}

fn load_model_and_data(
    model: &Path,
    data: &Path,
    schema: Option<&Path>,
) -> Result<(SasanetModel, Dataset)> {
    require_file("--model", model)?;
    require_file("--data", data)?;
    if let Some(s) = schema {
        require_file("--schema", s)?;
    }
    let m = SasanetModel::load(model)?;
    if let Some(s) = schema {
        m.ensure_compatible(&FeatureSchema::load(s)?)?;
    }
    let d = load_csv_with_schema(data, m.schema().clone())?;
    Ok((m, d))
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            data,
            schema,
            config,
            split,
            seed,
            out,
        } => {
            require_file("--data", &data)?;
            require_file("--schema", &schema)?;
            for (flag, p) in [("--config", &config), ("--split", &split)] {
                if let Some(p) = p {
                    require_file(flag, p)?;
                }
            }
            let run = Run::start("train", &out)?;
            let mut cfg = match &config {
                Some(p) => TrainConfig::load(p)?,
                None => TrainConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let mut ds = load_csv(&data, &schema)?;
            if let Some(p) = &split {
                ds = ds.select(&Split::load(p)?.train)?;
            }
            let opts = TrainOptions {
                diagnostic_dir: Some(out.clone()),
            };
            let outcome = train_with(&ds, &cfg, &opts)?;
            outcome.model.save(&out.join("model.ckpt"))?;
            outcome.history.save(&out.join("history.csv"))?;
            cfg.save(&out.join("config.json"))?;
            run.finish(&cfg, cfg.seed, &data)
        }
        Command::Attribute {
            model,
            data,
            schema,
            out,
        } => {
            let run = Run::start("attribute", &out)?;
            let (m, ds) = load_model_and_data(&model, &data, schema.as_deref())?;
            write_attributions(&m, &ds, &out.join("attributions.csv"))?;
            run.finish(
                &serde_json::json!({ "model": fingerprint(&model)? }),
                0,
                &data,
            )
        }
        Command::Oracle {
            model,
            data,
            schema,
            perms,
            limit,
            seed,
            out,
        } => {
            let run = Run::start("oracle", &out)?;
            let (m, ds) = load_model_and_data(&model, &data, schema.as_deref())?;
            let take = limit.unwrap_or(ds.len()).min(ds.len());
            write_oracle(
                &m,
                &ds.samples()[..take],
                perms,
                seed,
                &out.join("oracle.csv"),
            )?;
            let cfg =
                serde_json::json!({ "model": fingerprint(&model)?, "perms": perms, "limit": take });
            run.finish(&cfg, seed, &data)
        }
        Command::Evaluate {
            model,
            data,
            schema,
            experiments,
            shift,
            k_max,
            rank_key,
            fixed_ranking,
            kernel_coalitions,
            kernel_mode,
            background,
            perms,
            oracle_samples,
            timing_samples,
            seed,
            out,
        } => {
            let run = Run::start("evaluate", &out)?;
            let (m, ds) = load_model_and_data(&model, &data, schema.as_deref())?;
            let settings = EvalSettings {
                experiments,
                shift,
                k_max,
                rank_key,
                fixed_ranking,
                kernel_coalitions: kernel_coalitions.unwrap_or(2 * m.n_features() + 64),
                kernel_mode,
                background,
                perms,
                oracle_samples,
                timing_samples,
                seed,
            };
            evaluate(&m, ds, &settings, &out)?;
            let cfg = serde_json::json!({ "model": fingerprint(&model)?, "settings": settings });
            run.finish(&cfg, seed, &data)
        }
        Command::Synth {
            task,
            n,
            features,
            seed,
            noise,
            weights,
            test_fraction,
            out,
        } => {
            let run = Run::start("synth", &out)?;
            let w = match weights {
                Some(w) => w,
                None => {
                    let mut r = rng::stream(seed, &[0x3e1]);
                    (0..features)
                        .map(|_| {
                            let mag = r.gen_range(0.5..1.5);
                            if r.gen_bool(0.5) {
                                mag
                            } else {
                                -mag
                            }
                        })
                        .collect()
                }
            };
            let ds = match task {
                SynthTask::Linear => synth_linear_regression(features, &w, noise, n, seed)?.0,
                SynthTask::Binary => synth_binary_classification(features, &w, n, seed)?.0,
            };
            let data_path = out.join("data.csv");
            ds.write_csv(&data_path)?;
            ds.schema().save(&out.join("schema.json"))?;
            Split::random(n, test_fraction, seed).save(&out.join("split.json"))?;
            let truth = serde_json::json!({
                "task": task,
                "weights": w,
                "noise_std": if task == SynthTask::Linear { Some(noise) } else { None },
            });
            let truth_path = out.join("truth.json");
            std::fs::write(&truth_path, serde_json::to_string_pretty(&truth)? + "\n")
                .map_err(|e| Error::path(&truth_path, e))?;
            let cfg = serde_json::json!({ "task": task, "n": n, "features": features, "truth": truth, "test_fraction": test_fraction });
            run.finish(&cfg, seed, &data_path)
        }
    }
}

fn write_attributions(m: &SasanetModel, ds: &Dataset, path: &Path) -> Result<()> {
    let n = m.n_features();
    let all: Vec<usize> = (0..n).collect();
    let items: Vec<(&[f64], &[usize])> = ds
        .samples()
        .iter()
        .map(|s| (s.values.as_slice(), all.as_slice()))
        .collect();
    let results: Vec<_> = items
        .par_chunks(256)
        .map(|c| m.attribution_many(c))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
    let mut header = vec![
        "sample".to_string(),
        "f".into(),
        "phi0".into(),
        "prediction".into(),
    ];
    header.extend(
        m.schema()
            .features
            .iter()
            .map(|f| format!("phi_{}", f.name)),
    );
    w.write_record(&header)?;
    for (i, a) in results.iter().enumerate() {
        let mut rec = vec![
            i.to_string(),
            a.f.to_string(),
            a.phi0.to_string(),
            m.link().apply(a.f).to_string(),
        ];
        rec.extend(a.dense(n).iter().map(|p| p.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_oracle(
    m: &SasanetModel,
    samples: &[crate::data::Sample],
    perms: usize,
    seed: u64,
    path: &Path,
) -> Result<()> {
    let results: Vec<_> = samples
        .par_iter()
        .enumerate()
        .map(|(j, s)| {
            let v = NativeValue::new(m, &s.values)?;
            let sample_seed = rng::derive(seed, &[j as u64]);
            if m.n_features() <= crate::oracle::MAX_TABLE_FEATURES
                && (1usize << m.n_features()) <= perms.saturating_mul(m.n_features())
            {
                shapley_tabulated(&v, perms, sample_seed)
            } else {
                shapley_montecarlo(&v, perms, sample_seed)
            }
        })
        .collect::<Result<_>>()?;
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
    w.write_record([
        "sample",
        "feature",
        "phi",
        "std_error",
        "n_permutations",
        "mode",
    ])?;
    for (j, r) in results.iter().enumerate() {
        for (i, f) in m.schema().features.iter().enumerate() {
            w.write_record([
                j.to_string(),
                f.name.clone(),
                r.phi[i].to_string(),
                r.std_error[i].to_string(),
                r.n_permutations.to_string(),
                if r.exhaustive {
                    "exhaustive"
                } else {
                    "monte-carlo"
                }
                .to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
struct EvalSettings {
    experiments: Vec<Experiment>,
    shift: bool,
    k_max: usize,
    rank_key: RankKey,
    fixed_ranking: bool,
    kernel_coalitions: usize,
    kernel_mode: KernelMode,
    background: usize,
    perms: usize,
    oracle_samples: usize,
    timing_samples: usize,
    seed: u64,
}

/// KernelSHAP attributions of every sample, dense rows.
fn kernel_table(m: &SasanetModel, ds: &Dataset, s: &EvalSettings) -> Result<Vec<Vec<f64>>> {
    let bg: Vec<Vec<f64>> = {
        let mut idx: Vec<usize> = (0..ds.len()).collect();
        rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng::stream(s.seed, &[0xb6]));
        idx.into_iter()
            .take(s.background.max(1))
            .map(|i| ds.samples()[i].values.clone())
            .collect()
    };
    ds.samples()
        .par_iter()
        .enumerate()
        .map(|(j, smp)| {
            let seed = rng::derive(s.seed, &[0x4b, j as u64]);
            let r = match s.kernel_mode {
                KernelMode::Native => kernel_shap(
                    &NativeValue::new(m, &smp.values)?,
                    s.kernel_coalitions,
                    seed,
                )?,
                KernelMode::Background => kernel_shap(
                    &BackgroundValue::new(m, &smp.values, &bg)?,
                    s.kernel_coalitions,
                    seed,
                )?,
            };
            Ok(r.phi)
        })
        .collect()
}

fn evaluate(m: &SasanetModel, ds: Dataset, s: &EvalSettings, out: &Path) -> Result<()> {
    let has = |e: Experiment| s.experiments.contains(&e);
    let (ds, scope) = if s.shift {
        let (shifted, bias) = shift_distribution(&ds, s.seed)?;
        let path = out.join("shift_bias.csv");
        let mut w = csv::Writer::from_path(&path)
            .map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        w.write_record(["feature", "bias"])?;
        for (f, b) in m.schema().features.iter().zip(&bias) {
            w.write_record([f.name.clone(), b.to_string()])?;
        }
        w.flush()?;
        (shifted, "shifted")
    } else {
        (ds, "test")
    };
    let n = m.n_features();
    let mut report = ExperimentReport::default();

    if has(Experiment::Metrics) {
        let full: Vec<Vec<usize>> = vec![(0..n).collect(); ds.len()];
        let pred = predict_subsets(m, &ds, &full)?;
        let suite = metrics(&pred, &ds.labels(), ds.schema().task)?;
        let entries = [
            ("auc", suite.auc),
            ("ap", suite.ap),
            ("rmse", suite.rmse),
            ("mae", suite.mae),
        ];
        report.metrics = Some(
            entries
                .into_iter()
                .filter(|(_, v)| v.is_some())
                .map(|(name, value)| MetricEntry {
                    scope: scope.into(),
                    metric: name.into(),
                    value,
                })
                .collect(),
        );
    }
    if has(Experiment::Mask) || has(Experiment::Add) {
        let kernel = kernel_table(m, &ds, s)?;
        let opts = CurveOptions {
            k_max: s.k_max,
            key: s.rank_key,
        };
        let rankers = vec![
            (
                "self-attribution".to_string(),
                Ranker::SelfAttribution {
                    recompute: !s.fixed_ranking,
                },
            ),
            ("kernel-shap".to_string(), Ranker::Precomputed(&kernel)),
            ("random".to_string(), Ranker::Random { seed: s.seed }),
        ];
        if has(Experiment::Mask) {
            report.masking = Some(masking_experiment(m, &rankers, &ds, opts)?);
        }
        if has(Experiment::Add) {
            report.adding = Some(adding_experiment(m, &rankers, &ds, opts)?);
        }
    }
    if has(Experiment::Subset) {
        report.subset_size = Some(subset_size_eval(m, &ds, s.seed)?);
    }
    if has(Experiment::OracleRmse) {
        let take = s.oracle_samples.min(ds.len());
        let xs: Vec<Vec<f64>> = ds.samples()[..take]
            .iter()
            .map(|x| x.values.clone())
            .collect();
        let r = attribution_rmse(m, &xs, s.perms, s.seed)?;
        if let Some(entries) = report.metrics.as_mut() {
            entries.push(MetricEntry {
                scope: scope.into(),
                metric: "oracle_rmse".into(),
                value: Some(r.rmse),
            });
        }
        report.oracle = Some(r);
    }
    if has(Experiment::Timing) {
        let take = s.timing_samples.min(ds.len());
        let xs: Vec<Vec<f64>> = ds.samples()[..take]
            .iter()
            .map(|x| x.values.clone())
            .collect();
        // timed on the calling thread alone for comparability
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        report.timing = Some(single.install(|| timing(m, &xs, s.kernel_coalitions, s.seed))?);
    }
    if has(Experiment::Plots) {
        let take = ds.len().min(500);
        let all: Vec<usize> = (0..n).collect();
        let items: Vec<(&[f64], &[usize])> = ds.samples()[..take]
            .iter()
            .map(|x| (x.values.as_slice(), all.as_slice()))
            .collect();
        let phi = m
            .attribution_many(&items)?
            .into_iter()
            .map(|a| a.dense(n))
            .collect();
        report.attributions = Some(AttributionTable {
            feature_names: m.schema().features.iter().map(|f| f.name.clone()).collect(),
            values: ds.samples()[..take]
                .iter()
                .map(|x| x.values.clone())
                .collect(),
            phi,
        });
    }
    if ds.schema().task == Task::Classification && (has(Experiment::Mask) || has(Experiment::Add)) {
        log::info!("curves use AUC/AP on {} samples", ds.len());
    }
    emit_report(&report, out)?;
    Ok(())
}
