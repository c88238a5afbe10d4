//! JSONL ingestion and emission.
//!
//! News records: `{"id", "date": "YYYY-MM-DD", "embedding": [..], "text"?}`.
//! Post records add `"label": "fake" | "real"`. Bad records are dropped and
//! reported with a reason; only an empty result is a hard error.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, SplitStrategy};
use crate::env::EnvIndex;
use crate::error::{Error, Result};
use crate::vector::{Embedding, Label, LabeledBatch, NewsItem, Post, Split};

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: Option<String>,
    date: Option<String>,
    embedding: Option<Vec<f64>>,
    text: Option<String>,
    label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedRecord {
    pub file: String,
    pub line: usize,
    pub id: Option<String>,
    pub reason: String,
}

struct Validated {
    id: String,
    date: NaiveDate,
    embedding: Embedding,
    text: Option<String>,
    label: Option<Label>,
}

fn validate(raw: RawRecord, want_label: bool) -> std::result::Result<Validated, String> {
    let id = raw.id.filter(|s| !s.is_empty()).ok_or("missing id")?;
    let date = raw.date.ok_or("missing date")?;
    let date = NaiveDate::parse_from_str(&date, "%Y-%m-%d").map_err(|_| format!("bad date `{date}`"))?;
    let values = raw.embedding.ok_or("missing embedding")?;
    let embedding = Embedding::new(values).map_err(|e| match e {
        Error::ZeroNorm => "zero-norm embedding".to_string(),
        Error::NonFinite => "non-finite embedding".to_string(),
        Error::Empty(_) => "empty embedding".to_string(),
        other => other.to_string(),
    })?;
    let label = match (want_label, raw.label) {
        (true, Some(l)) => Some(l.parse::<Label>()?),
        (true, None) => return Err("missing label".into()),
        (false, _) => None,
    };
    Ok(Validated {
        id,
        date,
        embedding,
        text: raw.text,
        label,
    })
}

/// Reads a JSONL file, collecting per-line failures instead of aborting.
fn read_records(
    path: &Path,
    want_label: bool,
    dim: &mut Option<usize>,
    dropped: &mut Vec<DroppedRecord>,
) -> Result<(Vec<Validated>, usize)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut total = 0;
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        let mut drop = |id: Option<String>, reason: String| {
            dropped.push(DroppedRecord {
                file: name.clone(),
                line: n + 1,
                id,
                reason,
            })
        };
        let raw: RawRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                drop(None, format!("malformed json: {e}"));
                continue;
            }
        };
        let id = raw.id.clone();
        let rec = match validate(raw, want_label) {
            Ok(r) => r,
            Err(reason) => {
                drop(id, reason);
                continue;
            }
        };
        let d = *dim.get_or_insert(rec.embedding.dim());
        if rec.embedding.dim() != d {
            drop(
                Some(rec.id),
                format!("embedding dimension {} != {d}", rec.embedding.dim()),
            );
            continue;
        }
        if !seen.insert(rec.id.clone()) {
            drop(Some(rec.id), "duplicate id".into());
            continue;
        }
        out.push(rec);
    }
    Ok((out, total))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub news_records: usize,
    pub news_kept: usize,
    pub post_records: usize,
    pub posts_kept: usize,
    pub dim: usize,
    pub dropped: Vec<DroppedRecord>,
    pub dropped_by_reason: BTreeMap<String, usize>,
}

/// News index plus labeled posts.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub index: EnvIndex,
    pub posts: Vec<Post>,
}

impl Corpus {
    /// Builds a corpus from in-memory records.
    pub fn new(news: Vec<NewsItem>, posts: Vec<Post>) -> Result<Self> {
        let index = EnvIndex::build(news)?;
        if let Some(dim) = index.dim() {
            if let Some(p) = posts.iter().find(|p| p.embedding.dim() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.embedding.dim(),
                });
            }
        }
        Ok(Corpus { index, posts })
    }

    pub fn dim(&self) -> Option<usize> {
        self.index
            .dim()
            .or_else(|| self.posts.first().map(|p| p.embedding.dim()))
    }
}

fn reason_key(reason: &str) -> String {
    // group by the stable prefix, e.g. "malformed json", "bad date"
    let head = reason.split([':', '`']).next().unwrap_or(reason).trim();
    head.to_string()
}

pub fn ingest(news_path: &Path, posts_path: &Path) -> Result<(Corpus, IngestReport)> {
    let mut dim = None;
    let mut dropped = Vec::new();
    let (news, news_records) = read_records(news_path, false, &mut dim, &mut dropped)?;
    let (posts, post_records) = read_records(posts_path, true, &mut dim, &mut dropped)?;
    if news.is_empty() || posts.is_empty() {
        return Err(Error::Empty(if news.is_empty() {
            "valid news corpus"
        } else {
            "valid post set"
        }));
    }
    let items: Vec<NewsItem> = news
        .into_iter()
        .map(|r| NewsItem {
            id: r.id,
            date: r.date,
            embedding: r.embedding,
            text: r.text,
        })
        .collect();
    let posts: Vec<Post> = posts
        .into_iter()
        .map(|r| Post {
            id: r.id,
            date: r.date,
            embedding: r.embedding,
            label: r.label,
            text: r.text,
        })
        .collect();
    let mut by_reason = BTreeMap::new();
    for d in &dropped {
        *by_reason.entry(reason_key(&d.reason)).or_insert(0) += 1;
    }
    let report = IngestReport {
        news_records,
        news_kept: items.len(),
        post_records,
        posts_kept: posts.len(),
        dim: dim.unwrap_or(0),
        dropped,
        dropped_by_reason: by_reason,
    };
    let index = EnvIndex::build(items)?;
    Ok((Corpus { index, posts }, report))
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Splits labeled posts into train / val / test.
///
/// Chronological splits order by `(date, id)`; random splits shuffle with the
/// config seed.
pub fn split_posts(posts: &[Post], config: &RunConfig) -> Result<[LabeledBatch; 3]> {
    let mut ordered: Vec<Post> = posts.iter().filter(|p| p.label.is_some()).cloned().collect();
    match config.split {
        SplitStrategy::Chronological => {
            ordered.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.id.cmp(&b.id)))
        }
        SplitStrategy::Random => {
            ordered.sort_by(|a, b| a.id.cmp(&b.id));
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            ordered.shuffle(&mut rng);
        }
    }
    let n = ordered.len();
    let n_train = (n as f64 * config.train_frac).round() as usize;
    let n_val = ((n as f64 * config.val_frac).round() as usize).min(n - n_train.min(n));
    let test = ordered.split_off((n_train + n_val).min(n));
    let val = ordered.split_off(n_train.min(n));
    Ok([
        LabeledBatch::new(Split::Train, ordered)?,
        LabeledBatch::new(Split::Val, val)?,
        LabeledBatch::new(Split::Test, test)?,
    ])
}
