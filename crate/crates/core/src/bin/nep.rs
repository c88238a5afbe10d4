use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use nep::checkpoint;
use nep::config::RunConfig;
use nep::data::{self, Corpus};
use nep::metrics::{roc_csv, roc_points};
use nep::report::{gate_report_fraction, RunReport};
use nep::synth::SyntheticSpec;
use nep::train::{self, Diagnostic, Evaluation, SweepParam};

#[derive(Parser)]
#[command(name = "nep", version, about = "News environment perception for fake news detection")]
struct Cli {
    /// Flat `key = value` run config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Extra `key=value` config overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CorpusArgs {
    /// News JSONL.
    #[arg(long)]
    news: PathBuf,
    /// Labeled posts JSONL.
    #[arg(long)]
    posts: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus and report dropped records and floor failures.
    Ingest(CorpusArgs),
    /// Generate a synthetic news/posts corpus.
    Synth {
        /// `key = value` synthetic spec; unspecified keys keep defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Train, keep the best validation epoch, and evaluate on the test split.
    Train(CorpusArgs),
    /// Evaluate a checkpoint on the test split.
    Evaluate {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Retrain for each value of `r` or `T` and tabulate accuracy and env sizes.
    Sweep {
        #[command(flatten)]
        corpus: CorpusArgs,
        /// `r` (proportion) or `T` (window days).
        #[arg(long)]
        param: SweepParam,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Rank posts by mean gate value from a diagnostics file.
    GateReport {
        #[arg(long)]
        diagnostics: PathBuf,
        /// Fraction kept at each end.
        #[arg(long, default_value_t = 0.01)]
        fraction: f64,
    },
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    apply_overrides(&mut config, cli)?;
    Ok(config)
}

fn apply_overrides(config: &mut RunConfig, cli: &Cli) -> Result<()> {
    for item in &cli.overrides {
        let Some((k, v)) = item.split_once('=') else {
            bail!("override `{item}` is not KEY=VALUE");
        };
        config.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_corpus(args: &CorpusArgs) -> Result<Corpus> {
    let (corpus, report) = data::ingest(&args.news, &args.posts)?;
    if !report.dropped.is_empty() {
        eprintln!("dropped {} records: {:?}", report.dropped.len(), report.dropped_by_reason);
    }
    Ok(corpus)
}

/// Writes metrics.json, roc.csv and diagnostics.jsonl for a test evaluation.
fn write_evaluation(out: &Path, report: &RunReport, eval: &Evaluation) -> Result<()> {
    write_json(&out.join("metrics.json"), report)?;
    match roc_points(&eval.scored) {
        Ok(points) => write_text(&out.join("roc.csv"), &roc_csv(&points))?,
        Err(e) => eprintln!("roc.csv not written: {e}"),
    }
    data::write_jsonl(&out.join("diagnostics.jsonl"), &eval.diagnostics)?;
    Ok(())
}

fn print_metrics(report: &RunReport) {
    let t = &report.test;
    println!(
        "test: n={} acc={:.4} macro_f1={:.4} f1_fake={:.4} f1_real={:.4} spauc={}",
        t.count,
        t.accuracy,
        t.macro_f1,
        t.f1_fake,
        t.f1_real,
        t.spauc.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into())
    );
    for s in &report.skew {
        println!(
            "skew {}:1 macro_f1={:.4}±{:.4} spauc={:.4}±{:.4}",
            s.ratio, s.macro_f1_mean, s.macro_f1_std, s.spauc_mean, s.spauc_std
        );
    }
}

#[derive(Serialize)]
struct IngestSummary {
    #[serde(flatten)]
    report: data::IngestReport,
    window_days: u32,
    macro_floor: usize,
    below_macro_floor: train::SplitCounts,
    below_macro_floor_ids: Vec<String>,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    match &cli.command {
        Command::Ingest(args) => {
            let config = resolve_config(&cli)?;
            let (corpus, report) = data::ingest(&args.news, &args.posts)?;
            let prepared = train::prepare(&corpus, &config)?;
            let below_ids = [&prepared.train, &prepared.val, &prepared.test]
                .iter()
                .flat_map(|d| d.examples.iter().filter(|e| !e.eligible).map(|e| e.id.clone()))
                .collect();
            println!(
                "news {}/{} kept, posts {}/{} kept, dim {}",
                report.news_kept, report.news_records, report.posts_kept, report.post_records, report.dim
            );
            for (reason, n) in &report.dropped_by_reason {
                println!("dropped {n}: {reason}");
            }
            let below = prepared.ineligible();
            println!(
                "below macro floor: train {} val {} test {}",
                below.train, below.val, below.test
            );
            write_json(
                &cli.out.join("ingest_report.json"),
                &IngestSummary {
                    report,
                    window_days: config.window_days,
                    macro_floor: config.macro_floor,
                    below_macro_floor: below,
                    below_macro_floor_ids: below_ids,
                },
            )?;
        }
        Command::Synth { spec } => {
            let mut s = match spec {
                Some(path) => {
                    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    SyntheticSpec::from_text(&text)?
                }
                None => SyntheticSpec::default(),
            };
            if let Some(seed) = cli.seed {
                s.seed = seed;
            }
            let corpus = s.generate()?;
            data::write_jsonl(&cli.out.join("news.jsonl"), &corpus.news)?;
            data::write_jsonl(&cli.out.join("posts.jsonl"), &corpus.posts)?;
            let fakes = corpus.posts.iter().filter(|p| p.label.is_some_and(|l| l.is_fake())).count();
            println!(
                "wrote {} news items and {} posts ({} fake) to {}",
                corpus.news.len(),
                corpus.posts.len(),
                fakes,
                cli.out.display()
            );
        }
        Command::Train(args) => {
            let config = resolve_config(&cli)?;
            let corpus = load_corpus(args)?;
            let outcome = train::run(&corpus, &config)?;
            let t = &outcome.training;
            data::write_jsonl(&cli.out.join("training_log.jsonl"), &t.log)?;
            checkpoint::save(&cli.out.join("checkpoint.nep"), &t.model, &config, t.best_epoch)?;
            let mut report = RunReport::new(&config, t.selection, t.best_epoch, outcome.test.report.clone());
            report.skew = train::skew_evaluate(&outcome.test.scored, &config)?;
            report.split_sizes = Some(outcome.sizes);
            report.ineligible = Some(outcome.ineligible);
            report.skipped = outcome.test.skipped;
            write_evaluation(&cli.out, &report, &outcome.test)?;
            println!("best epoch {} ({})", t.best_epoch, t.selection);
            print_metrics(&report);
        }
        Command::Evaluate { corpus, checkpoint } => {
            let ck = checkpoint::load(checkpoint)?;
            let mut config = match &cli.config {
                Some(path) => RunConfig::load(path)?,
                None => ck.config.clone(),
            };
            apply_overrides(&mut config, &cli)?;
            let corpus = load_corpus(corpus)?;
            ck.check_compatible(&config, corpus.dim())?;
            let mut model = ck.model;
            model.mode = config.mode;
            let prepared = train::prepare(&corpus, &config)?;
            let eval = train::evaluate(&model, &prepared.test, &config)?;
            let mut report = RunReport::new(&config, "checkpoint", ck.header.best_epoch, eval.report.clone());
            report.skew = train::skew_evaluate(&eval.scored, &config)?;
            report.split_sizes = Some(prepared.sizes());
            report.ineligible = Some(prepared.ineligible());
            report.skipped = eval.skipped;
            write_evaluation(&cli.out, &report, &eval)?;
            print_metrics(&report);
        }
        Command::Sweep { corpus, param, values } => {
            let config = resolve_config(&cli)?;
            let corpus = load_corpus(corpus)?;
            let rows = train::sweep(*param, values, &config, &corpus)?;
            let csv = train::sweep_csv(&rows);
            write_text(&cli.out.join("sweep.csv"), &csv)?;
            print!("{csv}");
        }
        Command::GateReport { diagnostics, fraction } => {
            let text = fs::read_to_string(diagnostics)
                .with_context(|| format!("reading {}", diagnostics.display()))?;
            let diags = text
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(serde_json::from_str::<Diagnostic>)
                .collect::<Result<Vec<_>, _>>()
                .context("parsing diagnostics")?;
            let report = gate_report_fraction(&diags, *fraction)?;
            write_json(&cli.out.join("gate_report.json"), &report)?;
            println!("top {} per side", report.slice_size);
            for (side, list) in [("macro", &report.macro_preferred), ("micro", &report.micro_preferred)] {
                for e in list {
                    println!(
                        "{side}\t{:.6}\t{}\t{}\t{}",
                        e.gate_mean,
                        e.post_id,
                        e.label,
                        e.text.as_deref().unwrap_or("")
                    );
                }
            }
        }
    }
    Ok(())
}
