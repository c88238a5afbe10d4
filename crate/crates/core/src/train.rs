//! Featurization, the training loop, evaluation and parameter sweeps.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::data::{split_posts, Corpus};
use crate::env::{micro_size, EnvIndex};
use crate::error::{Error, Result};
use crate::metrics::{mix_seed, skew_resample, MetricsReport, ScoredExample, SkewSummary};
use crate::model::{IneligiblePolicy, NepModel, Tape};
use crate::nn::AdamW;
use crate::perceive::EnvFeatures;
use crate::vector::{Label, LabeledBatch, Post, Split};

/// One labeled post with its frozen environment features.
#[derive(Debug, Clone)]
pub struct Example {
    pub id: String,
    pub text: Option<String>,
    pub label: Label,
    pub eligible: bool,
    pub features: EnvFeatures,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub split: Split,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn eligible(&self) -> impl Iterator<Item = &Example> {
        self.examples.iter().filter(|e| e.eligible)
    }

    pub fn ineligible_count(&self) -> usize {
        self.examples.iter().filter(|e| !e.eligible).count()
    }
}

/// Builds environments and perception inputs for one post.
pub fn featurize_post(index: &EnvIndex, post: &Post, config: &RunConfig) -> Result<(EnvFeatures, bool)> {
    let macro_env = index.macro_env(post, config.window_days);
    let p = post.embedding.as_slice();
    if !macro_env.eligible(config.macro_floor) {
        let f = EnvFeatures::detector_only(p, config.kernels.len(), macro_env.len());
        return Ok((f, false));
    }
    let micro_env = index.micro_env(post, &macro_env, config.proportion)?;
    let mac: Vec<&[f64]> = index.embeddings(&macro_env.members).collect();
    let mic: Vec<&[f64]> = index.embeddings(&micro_env.members).collect();
    Ok((EnvFeatures::compute(p, &mac, &mic, &config.kernels)?, true))
}

/// Parallel over posts; output order follows the batch.
pub fn featurize(index: &EnvIndex, batch: &LabeledBatch, config: &RunConfig) -> Result<Dataset> {
    let examples = batch
        .posts()
        .par_iter()
        .map(|post| {
            let (features, eligible) = featurize_post(index, post, config)?;
            Ok(Example {
                id: post.id.clone(),
                text: post.text.clone(),
                label: post.label.expect("labeled batch"),
                eligible,
                features,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        split: batch.split(),
        examples,
    })
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl Prepared {
    pub fn ineligible(&self) -> SplitCounts {
        SplitCounts {
            train: self.train.ineligible_count(),
            val: self.val.ineligible_count(),
            test: self.test.ineligible_count(),
        }
    }

    pub fn sizes(&self) -> SplitCounts {
        SplitCounts {
            train: self.train.examples.len(),
            val: self.val.examples.len(),
            test: self.test.examples.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

pub fn prepare(corpus: &Corpus, config: &RunConfig) -> Result<Prepared> {
    if let Some(dim) = corpus.dim() {
        if dim != config.embed_dim {
            return Err(Error::config(
                "embed_dim",
                format!("config says {} but the corpus has dimension {dim}", config.embed_dim),
            ));
        }
    }
    let [train, val, test] = split_posts(&corpus.posts, config)?;
    Ok(Prepared {
        train: featurize(&corpus.index, &train, config)?,
        val: featurize(&corpus.index, &val, config)?,
        test: featurize(&corpus.index, &test, config)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
    pub val_macro_f1: Option<f64>,
    pub val_spauc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: NepModel,
    pub log: Vec<EpochLog>,
    /// 0 means the initialization was kept.
    pub best_epoch: usize,
    /// What the best epoch was selected on.
    pub selection: &'static str,
}

pub fn init_model(config: &RunConfig) -> NepModel {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    NepModel::new(config.dims(), config.mode, &mut rng)
}

/// Mini-batch AdamW on mean cross-entropy over eligible training posts,
/// keeping the epoch with the best validation macro F1.
pub fn train(config: &RunConfig, train: &Dataset, val: &Dataset) -> Result<TrainOutcome> {
    let examples: Vec<&Example> = train.eligible().collect();
    if examples.is_empty() {
        return Err(Error::NoEligiblePosts("training split"));
    }
    let mut model = init_model(config);
    let mut opt = AdamW::new(config.optimizer);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed ^ 0x0073_6875_6666_6c65));
    let has_val = val.eligible().next().is_some();

    let mut best = (model.clone(), 0usize, f64::NEG_INFINITY);
    let mut log = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let mut tape = Tape::new();
            for &i in chunk {
                total += tape.record(&model, &examples[i].features, examples[i].label)?;
            }
            let grads = tape.backward(&model)?;
            opt.step(model.tensors_mut(), grads.tensors())?;
        }
        let mut entry = EpochLog {
            epoch,
            train_loss: total / examples.len() as f64,
            val_accuracy: None,
            val_macro_f1: None,
            val_spauc: None,
        };
        let score = if has_val {
            let report = evaluate(&model, val, config)?.report;
            entry.val_accuracy = Some(report.accuracy);
            entry.val_macro_f1 = Some(report.macro_f1);
            entry.val_spauc = report.spauc;
            report.macro_f1
        } else {
            epoch as f64
        };
        if score > best.2 {
            best = (model.clone(), epoch, score);
        }
        log.push(entry);
    }
    Ok(TrainOutcome {
        model: best.0,
        log,
        best_epoch: best.1,
        selection: if has_val { "val_macro_f1" } else { "last_epoch" },
    })
}

/// Per-post record for gate analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub post_id: String,
    pub gate_mean: Option<f64>,
    pub score: f64,
    pub prediction: Label,
    pub label: Label,
    pub eligible: bool,
    pub macro_size: usize,
    pub micro_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub diagnostics: Vec<Diagnostic>,
    pub scored: Vec<ScoredExample>,
    pub skipped: usize,
}

pub fn evaluate(model: &NepModel, data: &Dataset, config: &RunConfig) -> Result<Evaluation> {
    let outputs = data
        .examples
        .par_iter()
        .map(|ex| {
            let out = match (ex.eligible, config.ineligible) {
                (true, _) => model.forward(&ex.features)?,
                (false, IneligiblePolicy::DetectorOnly) => model.forward_fallback(&ex.features)?,
                (false, IneligiblePolicy::Skip) => return Ok(None),
            };
            Ok(Some(Diagnostic {
                post_id: ex.id.clone(),
                gate_mean: out.gate_mean,
                score: out.fake_score(),
                prediction: out.predicted(),
                label: ex.label,
                eligible: ex.eligible,
                macro_size: ex.features.macro_size,
                micro_size: ex.features.micro_size,
                text: ex.text.clone(),
            }))
        })
        .collect::<Result<Vec<Option<Diagnostic>>>>()?;
    let skipped = outputs.iter().filter(|o| o.is_none()).count();
    let diagnostics: Vec<Diagnostic> = outputs.into_iter().flatten().collect();
    if diagnostics.is_empty() {
        return Err(Error::NoEligiblePosts("evaluation split"));
    }
    let scored: Vec<ScoredExample> = diagnostics
        .iter()
        .map(|d| ScoredExample {
            score: d.score,
            label: d.label,
        })
        .collect();
    let report = MetricsReport::from_scores(&scored, config.spauc_fpr)?;
    Ok(Evaluation {
        report,
        diagnostics,
        scored,
        skipped,
    })
}

/// Skewed resampling over every configured ratio.
pub fn skew_evaluate(scored: &[ScoredExample], config: &RunConfig) -> Result<Vec<SkewSummary>> {
    config
        .skew_ratios
        .iter()
        .map(|&ratio| skew_resample(scored, ratio, config.resamples, config.seed, config.spauc_fpr))
        .collect()
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub training: TrainOutcome,
    pub test: Evaluation,
    pub ineligible: SplitCounts,
    pub sizes: SplitCounts,
}

/// Split, featurize, train, and evaluate on the test split.
pub fn run(corpus: &Corpus, config: &RunConfig) -> Result<RunOutcome> {
    let prepared = prepare(corpus, config)?;
    let training = train(config, &prepared.train, &prepared.val)?;
    let test = evaluate(&training.model, &prepared.test, config)?;
    Ok(RunOutcome {
        training,
        test,
        ineligible: prepared.ineligible(),
        sizes: prepared.sizes(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Proportion,
    Window,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "r" | "proportion" => Ok(SweepParam::Proportion),
            "T" | "t" | "window" | "window_days" => Ok(SweepParam::Window),
            other => Err(Error::config("sweep", format!("unknown parameter `{other}`"))),
        }
    }
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Proportion => "r",
            SweepParam::Window => "T",
        }
    }

    pub fn apply(self, config: &mut RunConfig, value: f64) -> Result<()> {
        match self {
            SweepParam::Proportion => {
                if !(value > 0.0 && value < 1.0) {
                    return Err(Error::config("proportion", format!("{value} not in (0, 1)")));
                }
                config.proportion = value;
            }
            SweepParam::Window => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(Error::config("window_days", format!("{value} is not a positive integer")));
                }
                config.window_days = value as u32;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub spauc: Option<f64>,
    /// Averaged over every labeled post, eligible or not.
    pub mean_macro_size: f64,
    pub mean_micro_size: f64,
    pub eligible_posts: usize,
}

/// Mean macro and micro sizes over all labeled posts.
pub fn mean_env_sizes(corpus: &Corpus, config: &RunConfig) -> (f64, f64, usize) {
    let sizes: Vec<(usize, usize)> = corpus
        .posts
        .par_iter()
        .filter(|p| p.label.is_some())
        .map(|p| {
            let n = corpus.index.macro_env(p, config.window_days).len();
            let k = if n == 0 { 0 } else { micro_size(n, config.proportion) };
            (n, k)
        })
        .collect();
    let count = sizes.len().max(1) as f64;
    let mac = sizes.iter().map(|s| s.0).sum::<usize>() as f64 / count;
    let mic = sizes.iter().map(|s| s.1).sum::<usize>() as f64 / count;
    let eligible = sizes.iter().filter(|s| s.0 >= config.macro_floor).count();
    (mac, mic, eligible)
}

/// Retrains from scratch for every value with the same seed.
pub fn sweep(param: SweepParam, values: &[f64], config: &RunConfig, corpus: &Corpus) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut cfg = config.clone();
        param.apply(&mut cfg, value)?;
        let outcome = run(corpus, &cfg)?;
        let (mean_macro_size, mean_micro_size, eligible_posts) = mean_env_sizes(corpus, &cfg);
        rows.push(SweepRow {
            parameter: param.name().to_string(),
            value,
            accuracy: outcome.test.report.accuracy,
            macro_f1: outcome.test.report.macro_f1,
            spauc: outcome.test.report.spauc,
            mean_macro_size,
            mean_micro_size,
            eligible_posts,
        });
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "parameter,value,accuracy,macro_f1,spauc,mean_macro_size,mean_micro_size,eligible_posts\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.parameter,
            r.value,
            r.accuracy,
            r.macro_f1,
            r.spauc.map(|v| v.to_string()).unwrap_or_default(),
            r.mean_macro_size,
            r.mean_micro_size,
            r.eligible_posts
        ));
    }
    out
}
