//! Date-ordered news corpus and per-post environment construction.
//!
//! The macro environment of a post is every news item published in the `T`
//! whole calendar days before it (same-day items excluded). The micro
//! environment is the `⌈r·|macro|⌉` macro items most cosine-similar to the post.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::ops::Range;

use chrono::{Days, NaiveDate};

use crate::error::{Error, Result};
use crate::vector::{cosine_many, NewsItem, Post};

/// Minimum macro environment size for a post to be processed.
pub const DEFAULT_MACRO_FLOOR: usize = 10;

#[derive(Debug, Clone, Default)]
pub struct EnvIndex {
    items: Vec<NewsItem>,
    offsets: BTreeMap<NaiveDate, Range<usize>>,
}

impl EnvIndex {
    /// Sorts by `(date, id)` and builds the per-date offset table.
    pub fn build(mut items: Vec<NewsItem>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(items.len());
        for item in &items {
            if !seen.insert(item.id.as_str()) {
                return Err(Error::DuplicateId(item.id.clone()));
            }
        }
        if let Some(first) = items.first() {
            let dim = first.embedding.dim();
            if let Some(bad) = items.iter().find(|i| i.embedding.dim() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: bad.embedding.dim(),
                });
            }
        }
        items.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.id.cmp(&b.id)));

        let mut offsets = BTreeMap::new();
        let mut start = 0;
        for i in 1..=items.len() {
            if i == items.len() || items[i].date != items[start].date {
                offsets.insert(items[start].date, start..i);
                start = i;
            }
        }
        Ok(EnvIndex { items, offsets })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[NewsItem] {
        &self.items
    }

    pub fn item(&self, idx: usize) -> &NewsItem {
        &self.items[idx]
    }

    pub fn offsets(&self) -> &BTreeMap<NaiveDate, Range<usize>> {
        &self.offsets
    }

    /// Embedding dimension shared by all items, if any.
    pub fn dim(&self) -> Option<usize> {
        self.items.first().map(|i| i.embedding.dim())
    }

    /// Contiguous index range of items dated in `[from, to]`.
    fn date_range(&self, from: NaiveDate, to: NaiveDate) -> Range<usize> {
        if from > to {
            return 0..0;
        }
        let mut span = self.offsets.range(from..=to);
        match (span.next(), span.next_back()) {
            (Some((_, first)), Some((_, last))) => first.start..last.end,
            (Some((_, only)), None) => only.clone(),
            _ => 0..0,
        }
    }

    /// Items published `1..=window_days` days before the post.
    pub fn macro_env(&self, post: &Post, window_days: u32) -> MacroEnv {
        let members = if window_days == 0 {
            Vec::new()
        } else {
            let to = post.date.checked_sub_days(Days::new(1));
            let from = post.date.checked_sub_days(Days::new(u64::from(window_days)));
            match (from, to) {
                (Some(from), Some(to)) => self.date_range(from, to).collect(),
                (None, Some(to)) => self.date_range(NaiveDate::MIN, to).collect(),
                _ => Vec::new(),
            }
        };
        MacroEnv {
            post_id: post.id.clone(),
            members,
            window_days,
        }
    }

    /// Top-`⌈r·|macro|⌉` macro members by cosine similarity to the post.
    ///
    /// Ties go to the more recent item, then to the lexicographically smaller id.
    pub fn micro_env(&self, post: &Post, macro_env: &MacroEnv, proportion: f64) -> Result<MicroEnv> {
        if macro_env.is_empty() {
            return Err(Error::Empty("macro environment"));
        }
        if !(proportion > 0.0 && proportion < 1.0) {
            return Err(Error::config("proportion", format!("{proportion} not in (0, 1)")));
        }
        let k = micro_size(macro_env.len(), proportion);
        let sims = cosine_many(
            post.embedding.as_slice(),
            macro_env.members.iter().map(|&i| self.items[i].embedding.as_slice()),
        );
        let mut scored: Vec<(usize, f64)> = macro_env.members.iter().copied().zip(sims).collect();
        let cmp = |a: &(usize, f64), b: &(usize, f64)| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then_with(|| self.items[b.0].date.cmp(&self.items[a.0].date))
                .then_with(|| self.items[a.0].id.cmp(&self.items[b.0].id))
        };
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);
        let (members, similarities) = scored.into_iter().unzip();
        Ok(MicroEnv {
            post_id: post.id.clone(),
            members,
            similarities,
            proportion,
        })
    }

    pub fn embeddings<'a>(&'a self, members: &'a [usize]) -> impl Iterator<Item = &'a [f64]> + 'a {
        members.iter().map(move |&i| self.items[i].embedding.as_slice())
    }
}

/// `⌈r·n⌉`, clamped to `[1, n]`.
///
/// Products within a relative 1e-12 above an integer round down to it:
/// `0.1 · 30` gives 3.
pub fn micro_size(macro_size: usize, proportion: f64) -> usize {
    let x = proportion * macro_size as f64;
    let k = (x - x.abs() * 1e-12).ceil() as usize;
    k.clamp(1, macro_size.max(1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroEnv {
    pub post_id: String,
    /// Indices into the owning [`EnvIndex`], ascending by `(date, id)`.
    pub members: Vec<usize>,
    pub window_days: u32,
}

impl MacroEnv {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Whether the environment meets the minimum size floor.
    pub fn eligible(&self, floor: usize) -> bool {
        self.members.len() >= floor
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroEnv {
    pub post_id: String,
    /// Indices into the owning [`EnvIndex`], most similar first.
    pub members: Vec<usize>,
    pub similarities: Vec<f64>,
    pub proportion: f64,
}

impl MicroEnv {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}
