//! Checks shared by the focused test targets and the acceptance runner.
//! Each panics with a description on the first violation.

use std::collections::BTreeSet;

use nep::env::DEFAULT_MACRO_FLOOR;
use nep::kernel::Kernel;
use nep::metrics::{classification_metrics, resample_seed, spauc, ScoredExample};
use nep::model::{ModelDims, Tape};
use nep::perceive::EnvFeatures;
use nep::{kernel_feature, AblationMode, EnvIndex, KernelBank, Label, NepModel, NewsItem};
use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{cos, gaussian, news, post};

/// Proportions as exact fractions so the expected size is integer arithmetic.
const FRACTIONS: [(usize, usize); 7] = [(1, 20), (1, 10), (3, 20), (1, 4), (1, 3), (1, 2), (9, 10)];

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// Macro/micro construction against brute force over randomized corpora.
pub fn env_properties(corpora: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..corpora {
        let dim = rng.random_range(2..6);
        let span = rng.random_range(3..20u64);
        let n_items = rng.random_range(1..120);
        let items: Vec<NewsItem> = (0..n_items)
            .map(|i| {
                let offset = rng.random_range(0..span);
                news(&mut rng, format!("n{i}"), offset, dim)
            })
            .collect();
        let index = EnvIndex::build(items.clone()).unwrap();
        let mut shuffled = items.clone();
        shuffled.shuffle(&mut rng);
        let shuffled_index = EnvIndex::build(shuffled).unwrap();

        for j in 0..5 {
            let offset = rng.random_range(0..span + 2);
            let p = post(&mut rng, format!("p{j}"), offset, dim, Label::Real);
            let window = rng.random_range(1..8u32);
            let mac = index.macro_env(&p, window);
            let ids: BTreeSet<&str> = mac.members.iter().map(|&m| index.item(m).id.as_str()).collect();
            let expected: BTreeSet<&str> = items
                .iter()
                .filter(|n| {
                    let lag = (p.date - n.date).num_days();
                    lag > 0 && lag <= i64::from(window)
                })
                .map(|n| n.id.as_str())
                .collect();
            assert_eq!(ids, expected, "case {case}: macro membership");
            for &m in &mac.members {
                let d = index.item(m).date;
                assert!(d < p.date, "case {case}: leakage or same-day item");
            }
            assert_eq!(mac.eligible(DEFAULT_MACRO_FLOOR), expected.len() >= 10);

            let shuffled_mac = shuffled_index.macro_env(&p, window);
            let shuffled_ids: BTreeSet<&str> = shuffled_mac
                .members
                .iter()
                .map(|&m| shuffled_index.item(m).id.as_str())
                .collect();
            assert_eq!(ids, shuffled_ids, "case {case}: order dependence");

            if mac.is_empty() {
                assert!(index.micro_env(&p, &mac, 0.1).is_err());
                continue;
            }
            let (a, b) = FRACTIONS[rng.random_range(0..FRACTIONS.len())];
            let r = a as f64 / b as f64;
            let mic = index.micro_env(&p, &mac, r).unwrap();
            assert_eq!(mic.len(), ceil_div(a * mac.len(), b).max(1), "case {case}: micro size");
            let mic_set: BTreeSet<usize> = mic.members.iter().copied().collect();
            assert!(mic_set.is_subset(&mac.members.iter().copied().collect()));
            assert_eq!(mic_set.len(), mic.len(), "duplicates in micro");

            let sim = |m: usize| cos(p.embedding.as_slice(), index.item(m).embedding.as_slice());
            let worst_in = mic.members.iter().map(|&m| sim(m)).fold(f64::INFINITY, f64::min);
            let best_out = mac
                .members
                .iter()
                .filter(|m| !mic_set.contains(m))
                .map(|&m| sim(m))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(worst_in >= best_out - 1e-12, "case {case}: micro is not top-k");
            for (s, &m) in mic.similarities.iter().zip(&mic.members) {
                assert!((s - sim(m)).abs() < 1e-12);
            }
            assert!(mic.similarities.windows(2).all(|w| w[0] >= w[1]));

            let shuffled_mic = shuffled_index.micro_env(&p, &shuffled_mac, r).unwrap();
            let a_ids: Vec<&str> = mic.members.iter().map(|&m| index.item(m).id.as_str()).collect();
            let b_ids: Vec<&str> = shuffled_mic
                .members
                .iter()
                .map(|&m| shuffled_index.item(m).id.as_str())
                .collect();
            assert_eq!(a_ids, b_ids, "case {case}: micro order dependence");
        }
    }
}

fn naive_pool(query: &[f64], env: &[Vec<f64>], bank: &[(f64, f64)]) -> Vec<f64> {
    let sims: Vec<f64> = env.iter().map(|v| cos(query, v)).collect();
    let raw: Vec<f64> = bank
        .iter()
        .map(|&(mu, sigma)| {
            sims.iter()
                .map(|s| (-(s - mu) * (s - mu) / (2.0 * sigma * sigma)).exp())
                .sum()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|r| r / total).collect()
}

/// Kernel pooling against a naive re-implementation.
pub fn kernel_pooling(instances: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let default = KernelBank::default_bank();
    for case in 0..instances {
        let dim = rng.random_range(2..24);
        let n = rng.random_range(1..200);
        let query = gaussian(&mut rng, dim);
        let env: Vec<Vec<f64>> = (0..n).map(|_| gaussian(&mut rng, dim)).collect();
        let bank: Vec<(f64, f64)> = if case % 2 == 0 {
            default.kernels().iter().map(|k| (k.mu, k.sigma)).collect()
        } else {
            (0..rng.random_range(1..30))
                .map(|_| (rng.random_range(-1.0..=1.0), rng.random_range(0.05..1.0)))
                .collect()
        };
        let kb = KernelBank::new(bank.iter().map(|&(mu, sigma)| Kernel { mu, sigma }).collect()).unwrap();
        let got = kernel_feature(&query, &env, &kb).unwrap();
        let want = naive_pool(&query, &env, &bank);
        assert_eq!(got.as_slice().len(), bank.len());
        for (g, w) in got.as_slice().iter().zip(&want) {
            assert!((g - w).abs() < 1e-10, "case {case}: {g} vs {w}");
        }
        assert!(got.as_slice().iter().all(|&v| v > 0.0), "case {case}: non-positive");
        let sum: f64 = got.as_slice().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "case {case}: sum {sum}");
    }
}

const H: f64 = 1e-5;
const PROBES: usize = 20;

fn batch(rng: &mut ChaCha8Rng, bank: &KernelBank, d: usize) -> Vec<(EnvFeatures, Label)> {
    (0..4)
        .map(|i| {
            let post = gaussian(rng, d);
            let n = rng.random_range(10..30);
            let env: Vec<Vec<f64>> = (0..n).map(|_| gaussian(rng, d)).collect();
            let k = rng.random_range(1..=n / 2);
            let f = EnvFeatures::compute(&post, &env, &env[..k], bank).unwrap();
            (f, if i % 2 == 0 { Label::Fake } else { Label::Real })
        })
        .collect()
}

fn loss(model: &NepModel, data: &[(EnvFeatures, Label)]) -> f64 {
    let refs: Vec<(&EnvFeatures, Label)> = data.iter().map(|(f, l)| (f, *l)).collect();
    model.loss(&refs).unwrap()
}

/// Analytic gradients against central finite differences, every tensor.
pub fn gradient_check(mode: AblationMode, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bank = KernelBank::new(
        (0..5)
            .map(|c| Kernel {
                mu: -0.6 + 0.4 * c as f64,
                sigma: 0.3,
            })
            .collect(),
    )
    .unwrap();
    let dims = ModelDims {
        embed: 8,
        kernels: 5,
        env: 8,
        detector: 8,
    };
    let mut model = NepModel::new(dims, mode, &mut rng);
    // nonzero biases so every path is exercised
    for t in model.tensors_mut() {
        for v in t.iter_mut() {
            if *v == 0.0 {
                *v = rng.random_range(-0.1..0.1);
            }
        }
    }
    let data = batch(&mut rng, &bank, 8);
    let mut tape = Tape::new();
    for (f, l) in &data {
        tape.record(&model, f, *l).unwrap();
    }
    let grads = tape.backward(&model).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();
    let names = model.tensor_names();

    for (t, name) in names.iter().enumerate() {
        let len = analytic[t].len();
        let probes: Vec<usize> = if len <= PROBES {
            (0..len).collect()
        } else {
            sample(&mut rng, len, PROBES).into_vec()
        };
        for i in probes {
            let original = model.tensors()[t][i];
            model.tensors_mut()[t][i] = original + H;
            let plus = loss(&model, &data);
            model.tensors_mut()[t][i] = original - H;
            let minus = loss(&model, &data);
            model.tensors_mut()[t][i] = original;
            let numeric = (plus - minus) / (2.0 * H);
            let a = analytic[t][i];
            if !model.tensor_active(name) {
                assert_eq!(a, 0.0, "{mode:?} {name}[{i}] should be disconnected");
                assert_eq!(numeric, 0.0, "{mode:?} {name}[{i}] should be disconnected");
                continue;
            }
            // gradients near zero are compared on an absolute scale
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            assert!(rel < 1e-4, "{mode:?} {name}[{i}]: analytic {a} numeric {numeric} rel {rel}");
        }
    }
}

pub fn label(fake: bool) -> Label {
    if fake {
        Label::Fake
    } else {
        Label::Real
    }
}

/// Classification metrics against brute-force counting.
pub fn classification_oracle(labelings: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..labelings {
        let n = rng.random_range(1..60);
        let pairs: Vec<(Label, Label)> = (0..n)
            .map(|_| (label(rng.random_bool(0.5)), label(rng.random_bool(0.3))))
            .collect();
        let m = classification_metrics(&pairs).unwrap();
        let count = |p: Label, a: Label| pairs.iter().filter(|x| **x == (p, a)).count();
        let tp = count(Label::Fake, Label::Fake);
        let fp = count(Label::Fake, Label::Real);
        let fn_ = count(Label::Real, Label::Fake);
        let tn = count(Label::Real, Label::Real);
        let f1 = |tp: usize, fp: usize, fn_: usize| {
            if 2 * tp + fp + fn_ == 0 {
                0.0
            } else {
                (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
            }
        };
        assert_eq!(m.accuracy, (tp + tn) as f64 / n as f64);
        assert_eq!(m.f1_fake, f1(tp, fp, fn_));
        assert_eq!(m.f1_real, f1(tn, fn_, fp));
        assert_eq!(m.macro_f1, (m.f1_fake + m.f1_real) / 2.0);
        assert_eq!((m.confusion.tp, m.confusion.fp, m.confusion.fn_, m.confusion.tn), (tp, fp, fn_, tn));
    }
}

/// ROC by evaluating every candidate threshold.
pub fn roc_oracle(ex: &[ScoredExample]) -> Vec<(f64, f64)> {
    let pos = ex.iter().filter(|e| e.label.is_fake()).count() as f64;
    let neg = ex.len() as f64 - pos;
    let mut thresholds: Vec<f64> = ex.iter().map(|e| e.score).collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let mut pts = vec![(0.0, 0.0)];
    for t in thresholds {
        let tp = ex.iter().filter(|e| e.score >= t && e.label.is_fake()).count() as f64;
        let fp = ex.iter().filter(|e| e.score >= t && !e.label.is_fake()).count() as f64;
        pts.push((fp / neg, tp / pos));
    }
    pts
}

pub fn pauc_oracle(pts: &[(f64, f64)], x: f64) -> f64 {
    let mut area = 0.0;
    for w in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        let lo = x0.min(x);
        let hi = x1.min(x);
        if hi <= lo {
            continue;
        }
        let at = |t: f64| y0 + (y1 - y0) * (t - x0) / (x1 - x0);
        area += (hi - lo) * (at(lo) + at(hi)) / 2.0;
    }
    area
}

pub fn spauc_oracle(ex: &[ScoredExample], x: f64) -> f64 {
    let pauc = pauc_oracle(&roc_oracle(ex), x);
    let min = x * x / 2.0;
    0.5 * (1.0 + (pauc - min) / (x - min))
}

pub fn random_examples(rng: &mut ChaCha8Rng, n: usize, levels: u32) -> Vec<ScoredExample> {
    let mut ex: Vec<ScoredExample> = (0..n)
        .map(|_| ScoredExample {
            score: f64::from(rng.random_range(0..levels)) / f64::from(levels),
            label: label(rng.random_bool(0.4)),
        })
        .collect();
    ex[0].label = Label::Fake;
    ex[1].label = Label::Real;
    ex
}

/// Perfect, chance and reversed rankings at x = 0.1.
pub fn spauc_anchors() {
    let perfect: Vec<ScoredExample> = (0..20)
        .map(|i| ScoredExample {
            score: i as f64 / 20.0,
            label: label(i >= 10),
        })
        .collect();
    assert_eq!(spauc(&perfect, 0.1).unwrap(), 1.0);
    let chance: Vec<ScoredExample> = (0..20)
        .map(|i| ScoredExample {
            score: 0.5,
            label: label(i % 2 == 0),
        })
        .collect();
    assert_eq!(spauc(&chance, 0.1).unwrap(), 0.5);
    let reversed: Vec<ScoredExample> = perfect
        .iter()
        .map(|e| ScoredExample {
            score: 1.0 - e.score,
            label: e.label,
        })
        .collect();
    assert!((spauc(&reversed, 0.1).unwrap() - 0.473_684_210_526_315_8).abs() < 1e-9);
}

/// spAUC under 10 strictly increasing score transformations.
pub fn spauc_rank_invariance(seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ex: Vec<ScoredExample> = (0..200)
        .map(|i| ScoredExample {
            score: (i as f64 + 0.5) / 200.0,
            label: label(rng.random_bool(0.3 + 0.4 * i as f64 / 200.0)),
        })
        .collect();
    let transforms: [fn(f64) -> f64; 10] = [
        |s| 3.0 * s + 1.0,
        |s| s * s,
        |s| s.powi(3),
        |s| s.sqrt(),
        |s| s.exp(),
        |s| s.ln(),
        |s| (5.0 * s).tanh(),
        |s| 1.0 / (1.0 + (-10.0 * (s - 0.5)).exp()),
        |s| s / (1.0 - s),
        |s| s.powf(0.2) - 7.0,
    ];
    let base = spauc(&ex, 0.1).unwrap();
    for f in transforms {
        let t: Vec<ScoredExample> = ex
            .iter()
            .map(|e| ScoredExample {
                score: f(e.score),
                label: e.label,
            })
            .collect();
        assert!((spauc(&t, 0.1).unwrap() - base).abs() < 1e-12);
    }
}

/// Reference resampling loop, metrics recomputed from scratch.
pub fn skew_oracle(ex: &[ScoredExample], ratio: f64, resamples: usize, seed: u64, x: f64) -> [f64; 6] {
    let fakes: Vec<&ScoredExample> = ex.iter().filter(|e| e.label.is_fake()).collect();
    let reals: Vec<&ScoredExample> = ex.iter().filter(|e| !e.label.is_fake()).collect();
    let n_fake = fakes.len().min((reals.len() as f64 / ratio) as usize);
    let n_real = ((n_fake as f64 * ratio).round() as usize).min(reals.len());
    let mut acc = Vec::new();
    let mut f1 = Vec::new();
    let mut sp = Vec::new();
    for r in 0..resamples {
        let mut rng = ChaCha8Rng::seed_from_u64(resample_seed(seed, ratio, r));
        let mut draw: Vec<ScoredExample> = sample(&mut rng, fakes.len(), n_fake).iter().map(|i| *fakes[i]).collect();
        draw.extend(sample(&mut rng, reals.len(), n_real).iter().map(|i| *reals[i]));
        let (mut tp, mut fp, mut fn_, mut tn) = (0.0, 0.0, 0.0, 0.0);
        for e in &draw {
            match (e.score > 0.5, e.label.is_fake()) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fn_ += 1.0,
                (false, false) => tn += 1.0,
            }
        }
        let f = |a: f64, b: f64, c: f64| if a + b + c == 0.0 { 0.0 } else { 2.0 * a / (2.0 * a + b + c) };
        acc.push((tp + tn) / draw.len() as f64);
        f1.push((f(tp, fp, fn_) + f(tn, fn_, fp)) / 2.0);
        sp.push(spauc_oracle(&draw, x));
    }
    let stats = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (m, (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt())
    };
    let (a, b) = stats(&acc);
    let (c, d) = stats(&f1);
    let (e, g) = stats(&sp);
    [a, b, c, d, e, g]
}

