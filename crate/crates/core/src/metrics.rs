//! Classification metrics, ROC, and standardized partial AUC.
//!
//! Fake is the positive class throughout. A post is predicted fake when its
//! fake probability exceeds 0.5, which matches an argmax over the two classes.

use std::cmp::Ordering;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vector::Label;

pub const DEFAULT_FPR_CEILING: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredExample {
    /// Probability of fake.
    pub score: f64,
    pub label: Label,
}

impl ScoredExample {
    pub fn predicted(&self) -> Label {
        if self.score > 0.5 {
            Label::Fake
        } else {
            Label::Real
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub f1_fake: f64,
    pub f1_real: f64,
    pub macro_f1: f64,
    pub confusion: Confusion,
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// Accuracy and per-class F1 from `(predicted, actual)` pairs.
pub fn classification_metrics(preds: &[(Label, Label)]) -> Result<ClassificationMetrics> {
    if preds.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    let mut c = Confusion::default();
    for &(pred, actual) in preds {
        match (pred, actual) {
            (Label::Fake, Label::Fake) => c.tp += 1,
            (Label::Fake, Label::Real) => c.fp += 1,
            (Label::Real, Label::Fake) => c.fn_ += 1,
            (Label::Real, Label::Real) => c.tn += 1,
        }
    }
    let f1_fake = f1(c.tp, c.fp, c.fn_);
    let f1_real = f1(c.tn, c.fn_, c.fp);
    Ok(ClassificationMetrics {
        accuracy: (c.tp + c.tn) as f64 / c.total() as f64,
        f1_fake,
        f1_real,
        macro_f1: (f1_fake + f1_real) / 2.0,
        confusion: c,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
}

fn class_counts(examples: &[ScoredExample]) -> (usize, usize) {
    let pos = examples.iter().filter(|e| e.label.is_fake()).count();
    (pos, examples.len() - pos)
}

/// ROC from a descending threshold sweep; tied scores move together.
pub fn roc_points(examples: &[ScoredExample]) -> Result<Vec<RocPoint>> {
    let (pos, neg) = class_counts(examples);
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut sorted: Vec<&ScoredExample> = examples.iter().collect();
    sorted.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal));

    let mut points = vec![RocPoint { fpr: 0.0, tpr: 0.0 }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].score;
        while i < sorted.len() && sorted[i].score == score {
            if sorted[i].label.is_fake() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    Ok(points)
}

/// Area under the piecewise-linear ROC over `fpr ∈ [0, x]`.
pub fn partial_auc(points: &[RocPoint], x: f64) -> f64 {
    let mut area = 0.0;
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if a.fpr >= x {
            break;
        }
        if b.fpr <= x {
            area += 0.5 * (a.tpr + b.tpr) * (b.fpr - a.fpr);
        } else {
            let tpr_x = a.tpr + (b.tpr - a.tpr) * (x - a.fpr) / (b.fpr - a.fpr);
            area += 0.5 * (a.tpr + tpr_x) * (x - a.fpr);
            break;
        }
    }
    area
}

/// Standardized partial AUC for `FPR ≤ x`; chance maps to 0.5, perfect to 1.
pub fn spauc(examples: &[ScoredExample], x: f64) -> Result<f64> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(Error::config("spauc_fpr", format!("{x} not in (0, 1]")));
    }
    let points = roc_points(examples)?;
    let pauc = partial_auc(&points, x);
    let chance = 0.5 * x * x;
    Ok(0.5 * (1.0 + (pauc - chance) / (x - chance)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub f1_fake: f64,
    pub f1_real: f64,
    pub macro_f1: f64,
    /// `None` when the evaluated set holds a single class.
    pub spauc: Option<f64>,
    pub fpr_ceiling: f64,
    pub confusion: Confusion,
    pub count: usize,
}

impl MetricsReport {
    pub fn from_scores(examples: &[ScoredExample], x: f64) -> Result<Self> {
        let pairs: Vec<(Label, Label)> = examples.iter().map(|e| (e.predicted(), e.label)).collect();
        let m = classification_metrics(&pairs)?;
        let spauc = match spauc(examples, x) {
            Ok(v) => Some(v),
            Err(Error::SingleClass) => None,
            Err(e) => return Err(e),
        };
        Ok(MetricsReport {
            accuracy: m.accuracy,
            f1_fake: m.f1_fake,
            f1_real: m.f1_real,
            macro_f1: m.macro_f1,
            spauc,
            fpr_ceiling: x,
            confusion: m.confusion,
            count: examples.len(),
        })
    }
}

/// `fpr,tpr` rows with a header.
pub fn roc_csv(points: &[RocPoint]) -> String {
    let mut out = String::from("fpr,tpr\n");
    for p in points {
        out.push_str(&format!("{},{}\n", p.fpr, p.tpr));
    }
    out
}

/// Mean and standard deviation of metrics over repeated class-skewed resamples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewSummary {
    /// Real posts per fake post.
    pub ratio: f64,
    pub fake_per_sample: usize,
    pub real_per_sample: usize,
    pub resamples: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub macro_f1_mean: f64,
    pub macro_f1_std: f64,
    pub spauc_mean: f64,
    pub spauc_std: f64,
}

/// SplitMix64 finalizer, used to derive independent per-resample seeds.
pub fn mix_seed(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn resample_seed(seed: u64, ratio: f64, resample: usize) -> u64 {
    mix_seed(seed ^ mix_seed(ratio.to_bits()) ^ mix_seed(resample as u64 + 1))
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Draws `resamples` subsets at `ratio` real:fake without replacement.
///
/// All fakes are kept when enough reals exist; otherwise fakes are subsampled
/// to `⌊reals / ratio⌋`. The input is never modified.
pub fn skew_resample(
    examples: &[ScoredExample],
    ratio: f64,
    resamples: usize,
    seed: u64,
    x: f64,
) -> Result<SkewSummary> {
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(Error::config("skew_ratios", format!("{ratio} must be positive")));
    }
    if resamples == 0 {
        return Err(Error::config("resamples", "must be at least 1"));
    }
    let fakes: Vec<ScoredExample> = examples.iter().copied().filter(|e| e.label.is_fake()).collect();
    let reals: Vec<ScoredExample> = examples.iter().copied().filter(|e| !e.label.is_fake()).collect();
    let n_fake = fakes.len().min((reals.len() as f64 / ratio).floor() as usize);
    let n_real = ((n_fake as f64 * ratio).round() as usize).min(reals.len());
    if n_fake == 0 || n_real == 0 {
        return Err(Error::SingleClass);
    }

    let (mut acc, mut f1s, mut sp) = (Vec::new(), Vec::new(), Vec::new());
    for r in 0..resamples {
        let mut rng = ChaCha8Rng::seed_from_u64(resample_seed(seed, ratio, r));
        let mut draw: Vec<ScoredExample> = sample(&mut rng, fakes.len(), n_fake)
            .into_iter()
            .map(|i| fakes[i])
            .collect();
        draw.extend(sample(&mut rng, reals.len(), n_real).into_iter().map(|i| reals[i]));
        let report = MetricsReport::from_scores(&draw, x)?;
        acc.push(report.accuracy);
        f1s.push(report.macro_f1);
        sp.push(report.spauc.ok_or(Error::SingleClass)?);
    }
    let (accuracy_mean, accuracy_std) = mean_std(&acc);
    let (macro_f1_mean, macro_f1_std) = mean_std(&f1s);
    let (spauc_mean, spauc_std) = mean_std(&sp);
    Ok(SkewSummary {
        ratio,
        fake_per_sample: n_fake,
        real_per_sample: n_real,
        resamples,
        accuracy_mean,
        accuracy_std,
        macro_f1_mean,
        macro_f1_std,
        spauc_mean,
        spauc_std,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Fake, Real};

    fn ex(score: f64, label: Label) -> ScoredExample {
        ScoredExample { score, label }
    }

    fn confusion_preds(tp: usize, fp: usize, fn_: usize, tn: usize) -> Vec<(Label, Label)> {
        let mut v = vec![(Fake, Fake); tp];
        v.extend(vec![(Fake, Real); fp]);
        v.extend(vec![(Real, Fake); fn_]);
        v.extend(vec![(Real, Real); tn]);
        v
    }

    #[test]
    fn all_correct() {
        let m = classification_metrics(&confusion_preds(5, 0, 0, 7)).unwrap();
        assert_eq!((m.accuracy, m.f1_fake, m.f1_real, m.macro_f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn confusion_arithmetic() {
        let m = classification_metrics(&confusion_preds(40, 10, 20, 30)).unwrap();
        assert_eq!(m.f1_fake, 80.0 / 110.0);
        assert_eq!(m.f1_real, 60.0 / 90.0);
        assert!((m.macro_f1 - 0.696_969_696_969_697).abs() < 1e-12);
        assert_eq!(m.accuracy, 0.7);
    }

    #[test]
    fn predict_all_real_on_skewed_set() {
        let m = classification_metrics(&confusion_preds(0, 0, 1, 100)).unwrap();
        assert!((m.accuracy - 0.990_099).abs() < 1e-6);
        assert_eq!(m.f1_fake, 0.0);
        assert!((m.macro_f1 - 0.497_512_437_810_945_3).abs() < 1e-12);
    }

    #[test]
    fn empty_predictions() {
        assert!(classification_metrics(&[]).is_err());
    }

    #[test]
    fn roc_shapes() {
        let sep = [ex(0.9, Fake), ex(0.8, Fake), ex(0.3, Real), ex(0.1, Real)];
        let pts = roc_points(&sep).unwrap();
        assert!(pts.contains(&RocPoint { fpr: 0.0, tpr: 1.0 }));
        assert_eq!(*pts.last().unwrap(), RocPoint { fpr: 1.0, tpr: 1.0 });

        let flat = [ex(0.5, Fake), ex(0.5, Real), ex(0.5, Real)];
        assert_eq!(
            roc_points(&flat).unwrap(),
            vec![RocPoint { fpr: 0.0, tpr: 0.0 }, RocPoint { fpr: 1.0, tpr: 1.0 }]
        );
        assert!(matches!(roc_points(&[ex(0.5, Fake)]), Err(Error::SingleClass)));
    }

    #[test]
    fn spauc_anchors() {
        let perfect = [ex(0.9, Fake), ex(0.8, Fake), ex(0.3, Real), ex(0.1, Real)];
        assert_eq!(spauc(&perfect, 0.1).unwrap(), 1.0);
        let chance = [ex(0.5, Fake), ex(0.5, Real), ex(0.5, Real), ex(0.5, Fake)];
        assert_eq!(spauc(&chance, 0.1).unwrap(), 0.5);
        let reversed = [ex(0.1, Fake), ex(0.2, Fake), ex(0.7, Real), ex(0.9, Real)];
        let expected = 0.5 * (1.0 - 0.005 / 0.095);
        assert!((spauc(&reversed, 0.1).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.473_684_210_526_315_8).abs() < 1e-12);
    }

    #[test]
    fn spauc_rejects_bad_ceiling() {
        let s = [ex(0.9, Fake), ex(0.1, Real)];
        assert!(spauc(&s, 0.0).is_err());
        assert!(spauc(&s, 1.5).is_err());
        assert!(spauc(&s, 1.0).is_ok());
    }

    #[test]
    fn partial_auc_interpolates_at_ceiling() {
        let pts = [
            RocPoint { fpr: 0.0, tpr: 0.0 },
            RocPoint { fpr: 0.2, tpr: 1.0 },
            RocPoint { fpr: 1.0, tpr: 1.0 },
        ];
        // triangle up to fpr 0.1 where tpr = 0.5
        assert!((partial_auc(&pts, 0.1) - 0.025).abs() < 1e-15);
        assert!((partial_auc(&pts, 1.0) - 0.9).abs() < 1e-15);
    }

    #[test]
    fn skew_resample_rejects_bad_args() {
        let s = [ex(0.9, Fake), ex(0.1, Real), ex(0.2, Real)];
        assert!(skew_resample(&s, 0.0, 10, 1, 0.1).is_err());
        assert!(skew_resample(&s, 2.0, 0, 1, 0.1).is_err());
        assert!(skew_resample(&s, 10.0, 5, 1, 0.1).is_err());
        let ok = skew_resample(&s, 2.0, 5, 1, 0.1).unwrap();
        assert_eq!((ok.fake_per_sample, ok.real_per_sample), (1, 2));
    }
}
