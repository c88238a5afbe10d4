//! Gate preference ranking and the serialized run report.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::metrics::{MetricsReport, SkewSummary};
use crate::train::{Diagnostic, SplitCounts};
use crate::vector::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateEntry {
    pub post_id: String,
    pub gate_mean: f64,
    pub label: Label,
    pub prediction: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub slice_size: usize,
    /// Highest gate means first: the gate leans on the macro environment.
    pub macro_preferred: Vec<GateEntry>,
    /// Lowest gate means first: the gate leans on the micro environment.
    pub micro_preferred: Vec<GateEntry>,
}

/// Top 1% (rounded up) of posts at each end of the gate-mean ranking.
/// Equal gate means are ordered by id.
pub fn gate_report(diagnostics: &[Diagnostic]) -> Result<GateReport> {
    gate_report_fraction(diagnostics, 0.01)
}

pub fn gate_report_fraction(diagnostics: &[Diagnostic], fraction: f64) -> Result<GateReport> {
    let gated: Vec<GateEntry> = diagnostics
        .iter()
        .filter_map(|d| {
            d.gate_mean.map(|g| GateEntry {
                post_id: d.post_id.clone(),
                gate_mean: g,
                label: d.label,
                prediction: d.prediction,
                text: d.text.clone(),
            })
        })
        .collect();
    if gated.is_empty() {
        return Err(Error::Empty("gated diagnostics"));
    }
    let slice_size = ((gated.len() as f64 * fraction).ceil() as usize).clamp(1, gated.len());
    let by_id = |a: &GateEntry, b: &GateEntry| a.post_id.cmp(&b.post_id);

    let mut desc = gated.clone();
    desc.sort_by(|a, b| {
        b.gate_mean
            .partial_cmp(&a.gate_mean)
            .unwrap_or(Ordering::Equal)
            .then_with(|| by_id(a, b))
    });
    desc.truncate(slice_size);

    let mut asc = gated;
    asc.sort_by(|a, b| {
        a.gate_mean
            .partial_cmp(&b.gate_mean)
            .unwrap_or(Ordering::Equal)
            .then_with(|| by_id(a, b))
    });
    asc.truncate(slice_size);

    Ok(GateReport {
        slice_size,
        macro_preferred: desc,
        micro_preferred: asc,
    })
}

/// Contents of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub config: String,
    /// Validation metric used to choose the checkpoint.
    pub selection: String,
    pub best_epoch: usize,
    pub test: MetricsReport,
    pub skew: Vec<SkewSummary>,
    pub split_sizes: Option<SplitCounts>,
    /// Posts below the macro floor, per split.
    pub ineligible: Option<SplitCounts>,
    /// Posts left out of the test metrics (ineligible and skipped).
    pub skipped: usize,
}

impl RunReport {
    pub fn new(config: &RunConfig, selection: &str, best_epoch: usize, test: MetricsReport) -> Self {
        RunReport {
            config_hash: config.hash(),
            config: config.to_text(),
            selection: selection.to_string(),
            best_epoch,
            test,
            skew: Vec::new(),
            split_sizes: None,
            ineligible: None,
            skipped: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(id: &str, gate: Option<f64>) -> Diagnostic {
        Diagnostic {
            post_id: id.into(),
            gate_mean: gate,
            score: 0.5,
            prediction: Label::Real,
            label: Label::Fake,
            eligible: true,
            macro_size: 20,
            micro_size: 2,
            text: None,
        }
    }

    #[test]
    fn uniform_gates_break_ties_by_id() {
        let d: Vec<Diagnostic> = ["c", "a", "b"].iter().map(|id| diag(id, Some(0.5))).collect();
        let r = gate_report(&d).unwrap();
        assert_eq!(r.slice_size, 1);
        assert_eq!(r.macro_preferred[0].post_id, "a");
        assert_eq!(r.micro_preferred[0].post_id, "a");
    }

    #[test]
    fn slice_is_ceiling_of_one_percent() {
        let d: Vec<Diagnostic> = (0..200)
            .map(|i| diag(&format!("p{i:03}"), Some(0.3 + i as f64 * 1e-3)))
            .collect();
        let r = gate_report(&d).unwrap();
        assert_eq!(r.slice_size, 2);
        assert_eq!(r.macro_preferred.len(), 2);
        assert_eq!(r.micro_preferred.len(), 2);
        let d: Vec<Diagnostic> = (0..201).map(|i| diag(&format!("p{i:03}"), Some(0.5))).collect();
        assert_eq!(gate_report(&d).unwrap().slice_size, 3);
    }

    #[test]
    fn extremes_head_the_lists() {
        let mut d: Vec<Diagnostic> = (0..150).map(|i| diag(&format!("p{i:03}"), Some(0.5))).collect();
        d.push(diag("hot", Some(0.999)));
        d.push(diag("warm", Some(0.9)));
        d.push(diag("cold", Some(0.001)));
        d.push(diag("cool", Some(0.1)));
        d.push(diag("ungated", None));
        let r = gate_report(&d).unwrap();
        assert_eq!(r.slice_size, 2);
        let ids = |v: &[GateEntry]| v.iter().map(|e| e.post_id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&r.macro_preferred), ["hot", "warm"]);
        assert_eq!(ids(&r.micro_preferred), ["cold", "cool"]);
    }

    #[test]
    fn empty_is_error() {
        assert!(gate_report(&[]).is_err());
        assert!(gate_report(&[diag("a", None)]).is_err());
    }
}
