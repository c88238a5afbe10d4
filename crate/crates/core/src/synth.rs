//! Synthetic news/post corpus with controllable popularity and novelty.
//!
//! Events are clusters of unit vectors around a random center. Each event
//! publishes items for `event_days` days at a popular or unpopular daily
//! rate. Items of one event lie near a cone around the center whose angle
//! varies from event to event. Posts are placed near an event center, either
//! close to it or displaced by a novelty offset.
//!
//! Label rule: a post is fake iff its event's item count in the post's
//! `window_days` window reaches the popularity percentile AND the post's
//! cosine distance to the centroid of those window items reaches
//! `offset_threshold`; labels are then flipped with probability `noise_rate`.
//!
//! Event centers are isotropic and offsets are mirrored about the center with
//! probability 1/2, so post embeddings alone have the same distribution for
//! both classes.

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::env::{EnvIndex, DEFAULT_MACRO_FLOOR};
use crate::error::{Error, Result};
use crate::metrics::mix_seed;
use crate::vector::{cosine_similarity, mean_vector, Embedding, Label, NewsItem, Post};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub dim: usize,
    pub start_date: NaiveDate,
    pub events: usize,
    /// Days between consecutive event starts.
    pub event_gap_days: u32,
    /// Days each event keeps publishing items.
    pub event_days: u32,
    /// Items per day for popular events (every even-numbered event).
    pub popular_rate: usize,
    pub unpopular_rate: usize,
    /// Unrelated items per day over the whole span.
    pub background_rate: usize,
    pub posts_per_popular_event: usize,
    pub posts_per_unpopular_event: usize,
    /// Probability that a post on a popular event is generated novel.
    pub novel_prob_popular: f64,
    pub novel_prob_unpopular: f64,
    /// Per-event angle of items to the event center, radians, drawn uniformly.
    pub spread_min: f64,
    pub spread_max: f64,
    /// Standard deviation of item angles around their event's angle.
    pub spread_jitter: f64,
    /// Post angle to the event center, radians.
    pub near_min: f64,
    pub near_max: f64,
    pub novel_min: f64,
    pub novel_max: f64,
    /// Window for the popularity part of the label rule.
    pub window_days: u32,
    /// Percentile (in [0, 1]) of event window counts marking "popular".
    pub popularity_percentile: f64,
    /// Cosine distance to the window centroid marking "novel".
    pub offset_threshold: f64,
    pub noise_rate: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 7,
            dim: 32,
            start_date: NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date"),
            events: 300,
            event_gap_days: 2,
            event_days: 6,
            popular_rate: 60,
            unpopular_rate: 20,
            background_rate: 10,
            posts_per_popular_event: 12,
            posts_per_unpopular_event: 4,
            novel_prob_popular: 2.0 / 3.0,
            novel_prob_unpopular: 0.5,
            spread_min: 0.1,
            spread_max: 1.0,
            spread_jitter: 0.05,
            near_min: 0.0,
            near_max: 0.2,
            novel_min: 0.75,
            novel_max: 1.0,
            window_days: 3,
            popularity_percentile: 0.5,
            offset_threshold: 0.12,
            noise_rate: 0.0,
        }
    }
}

/// Ground truth behind each generated post.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostTruth {
    pub id: String,
    pub event: usize,
    pub popularity: usize,
    pub distance: f64,
    pub popular: bool,
    pub novel: bool,
    pub flipped: bool,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub news: Vec<NewsItem>,
    pub posts: Vec<Post>,
    pub truth: Vec<PostTruth>,
    pub popularity_threshold: f64,
}

/// Linear-interpolation percentile of unsorted samples.
pub fn percentile(samples: &[f64], q: f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
}

fn event_id(event: usize, n: usize) -> String {
    format!("e{event:04}-{n:05}")
}

/// Event number encoded in a generated news or post id, if any.
pub fn event_of(id: &str) -> Option<usize> {
    let rest = id.strip_prefix("p-").unwrap_or(id);
    let digits = rest.strip_prefix('e')?.split('-').next()?;
    digits.parse().ok()
}

struct Sampler {
    rng: ChaCha8Rng,
    dim: usize,
}

impl Sampler {
    fn gaussian(&mut self) -> Vec<f64> {
        (0..self.dim).map(|_| StandardNormal.sample(&mut self.rng)).collect()
    }

    fn unit(&mut self) -> Vec<f64> {
        loop {
            let v = self.gaussian();
            let n = crate::vector::norm(&v);
            if n > 1e-9 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }

    /// Random unit vector orthogonal to the unit vector `c`.
    fn orthogonal(&mut self, c: &[f64]) -> Vec<f64> {
        loop {
            let g = self.gaussian();
            let proj: f64 = g.iter().zip(c).map(|(a, b)| a * b).sum();
            let v: Vec<f64> = g.iter().zip(c).map(|(a, b)| a - proj * b).collect();
            let n = crate::vector::norm(&v);
            if n > 1e-9 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }

    /// Unit vector at `angle` radians from `c`, in a random direction.
    fn at_angle(&mut self, c: &[f64], angle: f64) -> Vec<f64> {
        let u = self.orthogonal(c);
        let (s, co) = angle.sin_cos();
        c.iter().zip(&u).map(|(a, b)| co * a + s * b).collect()
    }
}

fn day(start: NaiveDate, offset: u32) -> NaiveDate {
    start
        .checked_add_days(Days::new(u64::from(offset)))
        .expect("synthetic dates stay in range")
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |reason: &str| Err(Error::DegenerateSynthetic(reason.to_string()));
        if self.dim < 2 {
            return bad("dim must be at least 2");
        }
        if self.events == 0 {
            return bad("needs at least one event");
        }
        if self.event_days < self.window_days || self.window_days == 0 {
            return bad("event_days must cover the label window");
        }
        if !(0.0..=0.5).contains(&self.noise_rate) {
            return bad("noise_rate must lie in [0, 0.5]");
        }
        if self.spread_min < 0.0 || self.spread_max < self.spread_min || self.spread_jitter < 0.0 {
            return bad("invalid spread range");
        }
        if self.near_max < self.near_min || self.novel_max < self.novel_min {
            return bad("invalid offset ranges");
        }
        Ok(())
    }

    fn total_days(&self) -> u32 {
        (self.events as u32 - 1) * self.event_gap_days + self.event_days + 1
    }

    pub fn generate(&self) -> Result<SyntheticCorpus> {
        self.validate()?;
        let mut s = Sampler {
            rng: ChaCha8Rng::seed_from_u64(self.seed),
            dim: self.dim,
        };

        // events and their items
        let mut news = Vec::new();
        let mut centers = Vec::with_capacity(self.events);
        let mut starts = Vec::with_capacity(self.events);
        // per event, per publishing day: item embeddings
        let mut event_items: Vec<Vec<Vec<Vec<f64>>>> = Vec::with_capacity(self.events);
        for e in 0..self.events {
            let center = s.unit();
            let spread = s.rng.random_range(self.spread_min..=self.spread_max);
            let rate = if e % 2 == 0 { self.popular_rate } else { self.unpopular_rate };
            let start = e as u32 * self.event_gap_days;
            let mut by_day = Vec::with_capacity(self.event_days as usize);
            let mut n = 0;
            for d in 0..self.event_days {
                let count = ((rate as f64) * s.rng.random_range(0.8..=1.2)).round().max(1.0) as usize;
                let mut today = Vec::with_capacity(count);
                for _ in 0..count {
                    let z: f64 = StandardNormal.sample(&mut s.rng);
                    let angle = (spread + self.spread_jitter * z).clamp(0.0, std::f64::consts::FRAC_PI_2);
                    let v = s.at_angle(&center, angle);
                    news.push(NewsItem {
                        id: event_id(e, n),
                        date: day(self.start_date, start + d),
                        embedding: Embedding::new(v.clone())?,
                        text: Some(format!("event {e} item {n}")),
                    });
                    today.push(v);
                    n += 1;
                }
                by_day.push(today);
            }
            centers.push(center);
            starts.push(start);
            event_items.push(by_day);
        }
        for d in 0..self.total_days() {
            for n in 0..self.background_rate {
                news.push(NewsItem {
                    id: format!("bg-{d:04}-{n:04}"),
                    date: day(self.start_date, d),
                    embedding: Embedding::new(s.unit())?,
                    text: None,
                });
            }
        }

        // window item sets for a post of event e on day offset `post_day`
        let window = |e: usize, post_day: u32| -> Vec<&Vec<f64>> {
            let start = starts[e];
            (1..=self.window_days)
                .filter_map(|back| post_day.checked_sub(back))
                .filter(|d| *d >= start && *d < start + self.event_days)
                .flat_map(|d| event_items[e][(d - start) as usize].iter())
                .collect()
        };

        // popularity threshold over every (event, eligible post day) pair
        let post_days = |e: usize| starts[e] + self.window_days..=starts[e] + self.event_days;
        let samples: Vec<f64> = (0..self.events)
            .flat_map(|e| post_days(e).map(move |d| (e, d)))
            .map(|(e, d)| window(e, d).len() as f64)
            .collect();
        let threshold = percentile(&samples, self.popularity_percentile);

        let mut posts = Vec::new();
        let mut truth = Vec::new();
        let mut noise_rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed ^ 0x006e_6f69_7365));
        for (e, center) in centers.iter().enumerate() {
            let popular_event = e % 2 == 0;
            let (count, p_novel) = if popular_event {
                (self.posts_per_popular_event, self.novel_prob_popular)
            } else {
                (self.posts_per_unpopular_event, self.novel_prob_unpopular)
            };
            for n in 0..count {
                let post_day = s.rng.random_range(post_days(e));
                let novel_intent = s.rng.random_bool(p_novel.clamp(0.0, 1.0));
                let angle = if novel_intent {
                    s.rng.random_range(self.novel_min..=self.novel_max)
                } else {
                    s.rng.random_range(self.near_min..=self.near_max)
                };
                let mut v = s.at_angle(center, angle);
                if s.rng.random_bool(0.5) {
                    // mirror the offset about the center
                    let proj: f64 = v.iter().zip(center).map(|(a, b)| a * b).sum();
                    v = v
                        .iter()
                        .zip(center)
                        .map(|(a, c)| 2.0 * proj * c - a)
                        .collect();
                }
                let win = window(e, post_day);
                let popularity = win.len();
                let centroid = mean_vector(&win)?;
                let distance = 1.0 - cosine_similarity(&v, &centroid)?;
                let popular = popularity as f64 >= threshold;
                let novel = distance >= self.offset_threshold;
                let clean = if popular && novel { Label::Fake } else { Label::Real };
                let flipped = noise_rng.random_bool(self.noise_rate);
                let label = match (clean, flipped) {
                    (l, false) => l,
                    (Label::Fake, true) => Label::Real,
                    (Label::Real, true) => Label::Fake,
                };
                let id = format!("p-e{e:04}-{n:03}");
                posts.push(Post {
                    id: id.clone(),
                    date: day(self.start_date, post_day),
                    embedding: Embedding::new(v)?,
                    label: Some(label),
                    text: Some(format!("post {n} on event {e}")),
                });
                truth.push(PostTruth {
                    id,
                    event: e,
                    popularity,
                    distance,
                    popular,
                    novel,
                    flipped,
                });
            }
        }

        let index = EnvIndex::build(news.clone())?;
        let mut eligible = [0usize; 2];
        for p in &posts {
            if index.macro_env(p, self.window_days).eligible(DEFAULT_MACRO_FLOOR) {
                eligible[p.label.expect("generated posts are labeled").index()] += 1;
            }
        }
        if eligible.contains(&0) {
            return Err(Error::DegenerateSynthetic(format!(
                "eligible posts per class (real, fake): {eligible:?}"
            )));
        }
        Ok(SyntheticCorpus {
            news,
            posts,
            truth,
            popularity_threshold: threshold,
        })
    }
}

impl SyntheticSpec {
    /// Applies a `key = value` override; keys match the field names.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn p<T: std::str::FromStr>(key: &str, v: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            v.parse()
                .map_err(|e: T::Err| Error::config(key, format!("`{v}`: {e}")))
        }
        match key {
            "seed" => self.seed = p(key, value)?,
            "dim" => self.dim = p(key, value)?,
            "start_date" => self.start_date = p(key, value)?,
            "events" => self.events = p(key, value)?,
            "event_gap_days" => self.event_gap_days = p(key, value)?,
            "event_days" => self.event_days = p(key, value)?,
            "popular_rate" => self.popular_rate = p(key, value)?,
            "unpopular_rate" => self.unpopular_rate = p(key, value)?,
            "background_rate" => self.background_rate = p(key, value)?,
            "posts_per_popular_event" => self.posts_per_popular_event = p(key, value)?,
            "posts_per_unpopular_event" => self.posts_per_unpopular_event = p(key, value)?,
            "novel_prob_popular" => self.novel_prob_popular = p(key, value)?,
            "novel_prob_unpopular" => self.novel_prob_unpopular = p(key, value)?,
            "spread_min" => self.spread_min = p(key, value)?,
            "spread_max" => self.spread_max = p(key, value)?,
            "spread_jitter" => self.spread_jitter = p(key, value)?,
            "near_min" => self.near_min = p(key, value)?,
            "near_max" => self.near_max = p(key, value)?,
            "novel_min" => self.novel_min = p(key, value)?,
            "novel_max" => self.novel_max = p(key, value)?,
            "window_days" => self.window_days = p(key, value)?,
            "popularity_percentile" => self.popularity_percentile = p(key, value)?,
            "offset_threshold" => self.offset_threshold = p(key, value)?,
            "noise_rate" => self.noise_rate = p(key, value)?,
            other => return Err(Error::config(other, "unknown synthetic key")),
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut spec = SyntheticSpec::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", n + 1), "expected key = value"))?;
            spec.set(k.trim(), v.trim())?;
        }
        spec.validate()?;
        Ok(spec)
    }
}
