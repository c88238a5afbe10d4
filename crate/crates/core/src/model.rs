//! Detector feature, gate fusion of the perceived vectors, and the final
//! classifier, with exact gradients for the whole graph.
//!
//! ```text
//! o     = detector(p)
//! v_mac = macro_head(p ⊕ m_mac ⊕ K(p, mac))
//! v_mic = combiner(semantic(p ⊕ m_mic) ⊕ similarity(g(K(p, mic), K(m_mic, mic))))
//! g     = sigmoid(W (o ⊕ v_mac) + b)
//! v_p   = g ⊙ v_mac + (1 − g) ⊙ v_mic
//! ŷ     = softmax(classifier(o ⊕ v_p))
//! ```

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvIndex, MacroEnv, MicroEnv};
use crate::error::{Error, Result};
use crate::kernel::KernelBank;
use crate::nn::{
    cross_entropy, softmax, softmax_cross_entropy_grad, Activation, DenseLayer, Mlp, MlpTrace,
};
use crate::perceive::{concat, EnvFeatures, PerceptionHeads};
use crate::vector::{Label, Post};

/// Anything that maps a post embedding to a fixed-width feature vector `o`.
pub trait Detector {
    fn output_dim(&self) -> usize;
    fn detect(&self, post: &[f64]) -> Result<Vec<f64>>;
}

/// Post-only embedding MLP, `d → d_o`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BaselineDetector(pub Mlp);

impl BaselineDetector {
    pub fn new<R: Rng + ?Sized>(embed_dim: usize, detector_dim: usize, rng: &mut R) -> Self {
        BaselineDetector(Mlp::with_hidden(embed_dim, detector_dim, detector_dim, rng))
    }
}

impl Detector for BaselineDetector {
    fn output_dim(&self) -> usize {
        self.0.out_dim()
    }

    fn detect(&self, post: &[f64]) -> Result<Vec<f64>> {
        self.0.forward(post)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    /// Gate fusion of both environments plus the detector.
    #[default]
    Full,
    /// `v_p = v_mac`; the gate and the micro branch are bypassed.
    MacroOnly,
    /// `v_p = v_mic`; the gate and the macro branch are bypassed.
    MicroOnly,
    /// Both environments, with the detector feature replaced by zeros.
    EnvOnly,
    /// Detector feature only, `v_p = 0`. Serves as the post-only baseline.
    DetectorOnly,
}

impl AblationMode {
    pub const ALL: [AblationMode; 5] = [
        AblationMode::Full,
        AblationMode::MacroOnly,
        AblationMode::MicroOnly,
        AblationMode::EnvOnly,
        AblationMode::DetectorOnly,
    ];

    fn uses_detector(self) -> bool {
        self != AblationMode::EnvOnly
    }

    fn uses_macro(self) -> bool {
        matches!(
            self,
            AblationMode::Full | AblationMode::MacroOnly | AblationMode::EnvOnly
        )
    }

    fn uses_micro(self) -> bool {
        matches!(
            self,
            AblationMode::Full | AblationMode::MicroOnly | AblationMode::EnvOnly
        )
    }

    fn uses_gate(self) -> bool {
        matches!(self, AblationMode::Full | AblationMode::EnvOnly)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AblationMode::Full => "full",
            AblationMode::MacroOnly => "macro_only",
            AblationMode::MicroOnly => "micro_only",
            AblationMode::EnvOnly => "env_only",
            AblationMode::DetectorOnly => "detector_only",
        }
    }
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AblationMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::UnknownMode(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub embed: usize,
    pub kernels: usize,
    pub env: usize,
    pub detector: usize,
}

/// Output of the gate.
#[derive(Debug, Clone, PartialEq)]
pub struct Fused {
    pub gate: Vec<f64>,
    pub fused: Vec<f64>,
}

impl Fused {
    pub fn gate_mean(&self) -> f64 {
        self.gate.iter().sum::<f64>() / self.gate.len() as f64
    }
}

/// `g = sigmoid(Linear(o ⊕ v_mac))`, `v_p = g ⊙ v_mac + (1 − g) ⊙ v_mic`.
pub fn gate_fuse(o: &[f64], v_mac: &[f64], v_mic: &[f64], gate: &DenseLayer) -> Result<Fused> {
    if v_mac.len() != v_mic.len() {
        return Err(Error::DimensionMismatch {
            expected: v_mac.len(),
            got: v_mic.len(),
        });
    }
    if gate.out_dim() != v_mac.len() {
        return Err(Error::DimensionMismatch {
            expected: gate.out_dim(),
            got: v_mac.len(),
        });
    }
    let (_, g) = gate.forward(&concat(&[o, v_mac]))?;
    let fused = mix(&g, v_mac, v_mic);
    Ok(Fused { gate: g, fused })
}

fn mix(g: &[f64], a: &[f64], b: &[f64]) -> Vec<f64> {
    g.iter()
        .zip(a.iter().zip(b))
        .map(|(g, (a, b))| g * a + (1.0 - g) * b)
        .collect()
}

/// `softmax(classifier(o ⊕ v_p ⊕ extra...))` as `[p_real, p_fake]`.
pub fn classify(o: &[f64], v_p: &[f64], extra: &[&[f64]], classifier: &Mlp) -> Result<[f64; 2]> {
    if classifier.out_dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: classifier.out_dim(),
        });
    }
    let mut parts = vec![o, v_p];
    parts.extend_from_slice(extra);
    let probs = softmax(&classifier.forward(&concat(&parts))?);
    Ok([probs[0], probs[1]])
}

/// All trainable parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NepModel {
    pub dims: ModelDims,
    pub mode: AblationMode,
    pub detector: BaselineDetector,
    pub heads: PerceptionHeads,
    pub gate: DenseLayer,
    pub classifier: Mlp,
}

/// Prediction plus the diagnostic record.
#[derive(Debug, Clone, PartialEq)]
pub struct NepOutput {
    pub probs: [f64; 2],
    /// Mean gate activation; `None` when the gate is not on the path.
    pub gate_mean: Option<f64>,
    pub macro_size: usize,
    pub micro_size: usize,
}

impl NepOutput {
    pub fn fake_score(&self) -> f64 {
        self.probs[1]
    }

    pub fn predicted(&self) -> Label {
        if self.probs[1] > self.probs[0] {
            Label::Fake
        } else {
            Label::Real
        }
    }
}

/// Cached forward pass for one post.
#[derive(Debug, Clone)]
pub struct NepTrace {
    mode: AblationMode,
    detector: Option<MlpTrace>,
    macro_head: Option<MlpTrace>,
    semantic: Option<MlpTrace>,
    similarity: Option<MlpTrace>,
    combiner: Option<MlpTrace>,
    /// `(input, pre, gate)`
    gate: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    v_mac: Vec<f64>,
    v_mic: Vec<f64>,
    classifier: MlpTrace,
    probs: Vec<f64>,
}

impl NepTrace {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

impl NepModel {
    pub fn new<R: Rng + ?Sized>(dims: ModelDims, mode: AblationMode, rng: &mut R) -> Self {
        let detector = BaselineDetector::new(dims.embed, dims.detector, rng);
        let heads = PerceptionHeads::new(dims.embed, dims.kernels, dims.env, rng);
        let gate = DenseLayer::glorot(dims.detector + dims.env, dims.env, Activation::Sigmoid, rng);
        let classifier = Mlp::with_hidden(dims.detector + dims.env, dims.env, 2, rng);
        NepModel {
            dims,
            mode,
            detector,
            heads,
            gate,
            classifier,
        }
    }

    /// Same parameters, different ablation routing.
    pub fn with_mode(mut self, mode: AblationMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn zeros_like(&self) -> Self {
        NepModel {
            dims: self.dims,
            mode: self.mode,
            detector: BaselineDetector(self.detector.0.zeros_like()),
            heads: self.heads.zeros_like(),
            gate: self.gate.zeros_like(),
            classifier: self.classifier.zeros_like(),
        }
    }

    /// Parameter tensors in declaration order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.detector.0.tensors().collect();
        for mlp in self.heads.mlps() {
            out.extend(mlp.tensors());
        }
        out.push(&self.gate.weight);
        out.push(&self.gate.bias);
        out.extend(self.classifier.tensors());
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.detector.0.tensors_mut().collect();
        for mlp in self.heads.mlps_mut() {
            out.extend(mlp.tensors_mut());
        }
        out.push(&mut self.gate.weight);
        out.push(&mut self.gate.bias);
        out.extend(self.classifier.tensors_mut());
        out
    }

    /// Names matching [`NepModel::tensors`], e.g. `macro_head.0.weight`.
    pub fn tensor_names(&self) -> Vec<String> {
        fn push_mlp(names: &mut Vec<String>, prefix: &str, mlp: &Mlp) {
            for i in 0..mlp.layers().len() {
                names.push(format!("{prefix}.{i}.weight"));
                names.push(format!("{prefix}.{i}.bias"));
            }
        }
        let mut names = Vec::new();
        push_mlp(&mut names, "detector", &self.detector.0);
        push_mlp(&mut names, "macro_head", &self.heads.macro_head);
        push_mlp(&mut names, "semantic", &self.heads.semantic);
        push_mlp(&mut names, "similarity", &self.heads.similarity);
        push_mlp(&mut names, "combiner", &self.heads.combiner);
        names.push("gate.weight".into());
        names.push("gate.bias".into());
        push_mlp(&mut names, "classifier", &self.classifier);
        names
    }

    /// Whether a tensor can receive gradient under the current mode.
    pub fn tensor_active(&self, name: &str) -> bool {
        let head = name.split('.').next().unwrap_or_default();
        match head {
            "detector" => self.mode.uses_detector(),
            "macro_head" => self.mode.uses_macro(),
            "semantic" | "similarity" | "combiner" => self.mode.uses_micro(),
            "gate" => self.mode.uses_gate(),
            _ => true,
        }
    }

    pub fn forward_traced(&self, features: &EnvFeatures) -> Result<NepTrace> {
        self.trace(features, self.mode)
    }

    /// Detector-only pass used for posts below the macro floor.
    pub fn fallback_traced(&self, features: &EnvFeatures) -> Result<NepTrace> {
        self.trace(features, AblationMode::DetectorOnly)
    }

    fn trace(&self, f: &EnvFeatures, mode: AblationMode) -> Result<NepTrace> {
        let env_dim = self.dims.env;
        let (detector, o) = if mode.uses_detector() {
            let t = self.detector.0.forward_traced(&f.post)?;
            let o = t.output().to_vec();
            (Some(t), o)
        } else {
            (None, vec![0.0; self.dims.detector])
        };

        let (macro_head, v_mac) = if mode.uses_macro() {
            let t = self.heads.macro_head.forward_traced(&f.macro_input())?;
            let v = t.output().to_vec();
            (Some(t), v)
        } else {
            (None, vec![0.0; env_dim])
        };

        let (semantic, similarity, combiner, v_mic) = if mode.uses_micro() {
            let sem = self.heads.semantic.forward_traced(&f.semantic_input())?;
            let sim = self.heads.similarity.forward_traced(&f.similarity_input())?;
            let comb = self
                .heads
                .combiner
                .forward_traced(&concat(&[sem.output(), sim.output()]))?;
            let v = comb.output().to_vec();
            (Some(sem), Some(sim), Some(comb), v)
        } else {
            (None, None, None, vec![0.0; env_dim])
        };

        let (gate, v_p) = match mode {
            AblationMode::Full | AblationMode::EnvOnly => {
                let input = concat(&[&o, &v_mac]);
                let (pre, g) = self.gate.forward(&input)?;
                let v_p = mix(&g, &v_mac, &v_mic);
                (Some((input, pre, g)), v_p)
            }
            AblationMode::MacroOnly => (None, v_mac.clone()),
            AblationMode::MicroOnly => (None, v_mic.clone()),
            AblationMode::DetectorOnly => (None, vec![0.0; env_dim]),
        };

        let classifier = self.classifier.forward_traced(&concat(&[&o, &v_p]))?;
        let probs = softmax(classifier.output());
        Ok(NepTrace {
            mode,
            detector,
            macro_head,
            semantic,
            similarity,
            combiner,
            gate,
            v_mac,
            v_mic,
            classifier,
            probs,
        })
    }

    pub fn forward(&self, features: &EnvFeatures) -> Result<NepOutput> {
        let trace = self.forward_traced(features)?;
        Ok(self.output_of(&trace, features))
    }

    pub fn forward_fallback(&self, features: &EnvFeatures) -> Result<NepOutput> {
        let trace = self.fallback_traced(features)?;
        Ok(self.output_of(&trace, features))
    }

    fn output_of(&self, trace: &NepTrace, f: &EnvFeatures) -> NepOutput {
        NepOutput {
            probs: [trace.probs[0], trace.probs[1]],
            gate_mean: trace
                .gate
                .as_ref()
                .map(|(_, _, g)| g.iter().sum::<f64>() / g.len() as f64),
            macro_size: f.macro_size,
            micro_size: f.micro_size,
        }
    }

    /// Accumulates `scale · d(cross-entropy)/d(θ)` into `grads`.
    pub fn backward(&self, trace: &NepTrace, label: Label, scale: f64, grads: &mut NepModel) {
        let d_logits: Vec<f64> = softmax_cross_entropy_grad(&trace.probs, label.index())
            .into_iter()
            .map(|v| v * scale)
            .collect();
        let d_cls_in = self
            .classifier
            .backward(&trace.classifier, &d_logits, &mut grads.classifier);
        let (d_o_cls, d_vp) = d_cls_in.split_at(self.dims.detector);
        let mut d_o = d_o_cls.to_vec();

        let mut d_mac = vec![0.0; self.dims.env];
        let mut d_mic = vec![0.0; self.dims.env];
        match &trace.gate {
            Some((input, pre, g)) => {
                let mut d_g = vec![0.0; g.len()];
                for j in 0..g.len() {
                    d_mac[j] = d_vp[j] * g[j];
                    d_mic[j] = d_vp[j] * (1.0 - g[j]);
                    d_g[j] = d_vp[j] * (trace.v_mac[j] - trace.v_mic[j]);
                }
                let d_gate_in = self.gate.backward(input, pre, g, &d_g, &mut grads.gate);
                let (d_o_gate, d_mac_gate) = d_gate_in.split_at(self.dims.detector);
                for (a, b) in d_o.iter_mut().zip(d_o_gate) {
                    *a += b;
                }
                for (a, b) in d_mac.iter_mut().zip(d_mac_gate) {
                    *a += b;
                }
            }
            None => match trace.mode {
                AblationMode::MacroOnly => d_mac.copy_from_slice(d_vp),
                AblationMode::MicroOnly => d_mic.copy_from_slice(d_vp),
                _ => {}
            },
        }

        if let Some(t) = &trace.macro_head {
            self.heads
                .macro_head
                .backward(t, &d_mac, &mut grads.heads.macro_head);
        }
        if let (Some(sem), Some(sim), Some(comb)) = (&trace.semantic, &trace.similarity, &trace.combiner)
        {
            let d_comb_in = self
                .heads
                .combiner
                .backward(comb, &d_mic, &mut grads.heads.combiner);
            let (d_sem, d_sim) = d_comb_in.split_at(self.dims.env);
            self.heads.semantic.backward(sem, d_sem, &mut grads.heads.semantic);
            self.heads
                .similarity
                .backward(sim, d_sim, &mut grads.heads.similarity);
        }
        if let Some(t) = &trace.detector {
            self.detector.0.backward(t, &d_o, &mut grads.detector.0);
        }
    }

    /// Mean cross-entropy of a batch, with no gradient bookkeeping.
    pub fn loss(&self, batch: &[(&EnvFeatures, Label)]) -> Result<f64> {
        let mut total = 0.0;
        for (f, label) in batch {
            let trace = self.forward_traced(f)?;
            total += cross_entropy(&trace.probs, label.index())?;
        }
        Ok(total / batch.len() as f64)
    }
}

/// Records forward passes of a mini-batch for a later backward sweep.
#[derive(Debug, Default)]
pub struct Tape {
    entries: Vec<(NepTrace, Label)>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Forward pass; returns the example's cross-entropy.
    pub fn record(&mut self, model: &NepModel, features: &EnvFeatures, label: Label) -> Result<f64> {
        let trace = model.forward_traced(features)?;
        let loss = cross_entropy(&trace.probs, label.index())?;
        self.entries.push((trace, label));
        Ok(loss)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Gradients of the mean recorded loss, written into a fresh zeroed twin.
    pub fn backward(&self, model: &NepModel) -> Result<NepModel> {
        if self.entries.is_empty() {
            return Err(Error::BackwardBeforeForward);
        }
        let mut grads = model.zeros_like();
        let scale = 1.0 / self.entries.len() as f64;
        for (trace, label) in &self.entries {
            model.backward(trace, *label, scale, &mut grads);
        }
        Ok(grads)
    }
}

/// How posts below the macro floor are handled at inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IneligiblePolicy {
    #[default]
    Skip,
    DetectorOnly,
}

impl FromStr for IneligiblePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skip" => Ok(IneligiblePolicy::Skip),
            "detector_only" => Ok(IneligiblePolicy::DetectorOnly),
            other => Err(Error::config("ineligible", format!("unknown policy `{other}`"))),
        }
    }
}

impl fmt::Display for IneligiblePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IneligiblePolicy::Skip => "skip",
            IneligiblePolicy::DetectorOnly => "detector_only",
        })
    }
}

/// End-to-end prediction for one post from its environments.
///
/// Returns `Ok(None)` when the macro environment is below `floor` and the
/// policy is to skip.
#[allow(clippy::too_many_arguments)]
pub fn nep_forward(
    model: &NepModel,
    index: &EnvIndex,
    post: &Post,
    macro_env: &MacroEnv,
    micro_env: &MicroEnv,
    bank: &KernelBank,
    floor: usize,
    policy: IneligiblePolicy,
) -> Result<Option<NepOutput>> {
    let p = post.embedding.as_slice();
    if !macro_env.eligible(floor) {
        return match policy {
            IneligiblePolicy::Skip => Ok(None),
            IneligiblePolicy::DetectorOnly => {
                let f = EnvFeatures::detector_only(p, bank.len(), macro_env.len());
                model.forward_fallback(&f).map(Some)
            }
        };
    }
    let mac: Vec<&[f64]> = index.embeddings(&macro_env.members).collect();
    let mic: Vec<&[f64]> = index.embeddings(&micro_env.members).collect();
    let f = EnvFeatures::compute(p, &mac, &mic, bank)?;
    model.forward(&f).map(Some)
}

impl EnvFeatures {
    /// Placeholder environment for the detector-only fallback path; only
    /// `post` is read by that path.
    pub fn detector_only(post: &[f64], kernels: usize, macro_size: usize) -> Self {
        let d = post.len();
        EnvFeatures {
            post: post.to_vec(),
            macro_center: vec![0.0; d],
            macro_kernel: vec![0.0; kernels],
            micro_center: vec![0.0; d],
            micro_kernel_post: vec![0.0; kernels],
            micro_kernel_center: vec![0.0; kernels],
            macro_size,
            micro_size: 0,
        }
    }
}
