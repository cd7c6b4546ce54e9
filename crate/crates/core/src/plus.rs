//! Classification pathway on the top representation layer (PredNet+).
//!
//! An encoder of two recurrent stages reads `R_{L-1}` every step and emits
//! per-step class logits; a decoder of two stride-2 transposed convolutions
//! turns the encoder features back into maps that enter `R_{L-2}` on the next
//! step. Per-step logits are combined with exponential time weights and one
//! softmax.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{softmax_values, Bound, Graph, ParamStore, Real, Tensor, Var};
use crate::error::{bail, Result};
use crate::nn::{self, init, ConvLstmSpec, ConvLstmState, ConvSpec};
use crate::prednet::{Feedback, LayerVars, PredNet, PredNetConfig, RolloutMode, RolloutTrace, StepInput};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderInit {
    Random,
    /// Random decoder, zero feedback injection: training starts from the
    /// plain hierarchy's dynamics and the injection weight is learned.
    ZeroFeedback,
    /// All decoder and feedback-injection weights start (and stay) at zero.
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    #[serde(default = "default_classes")]
    pub num_classes: usize,
    /// Exponential time-weighting rate.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Frame-loss weight.
    #[serde(default = "one")]
    pub beta: f64,
    /// Class-loss weight.
    #[serde(default = "one")]
    pub gamma: f64,
    /// Class → group; a top-1 prediction in the wrong group scales the
    /// cross-entropy by `group_penalty`.
    #[serde(default)]
    pub group_map: Option<Vec<usize>>,
    #[serde(default = "default_penalty")]
    pub group_penalty: f64,
    /// ConvLSTM encoder stages; `false` swaps them for plain convolutions.
    #[serde(default = "yes")]
    pub recurrent: bool,
    #[serde(default = "default_enc")]
    pub encoder_channels: [usize; 2],
    #[serde(default = "default_dec")]
    pub decoder_channels: usize,
    #[serde(default = "default_dec")]
    pub feedback_channels: usize,
    #[serde(default = "default_decoder_init")]
    pub decoder_init: DecoderInit,
}

fn default_classes() -> usize {
    8
}
fn default_alpha() -> f64 {
    2.0
}
fn one() -> f64 {
    1.0
}
fn default_penalty() -> f64 {
    2.0
}
fn yes() -> bool {
    true
}
fn default_enc() -> [usize; 2] {
    [16, 16]
}
fn default_dec() -> usize {
    8
}
fn default_decoder_init() -> DecoderInit {
    DecoderInit::Random
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            num_classes: default_classes(),
            alpha: default_alpha(),
            beta: 1.0,
            gamma: 1.0,
            group_map: None,
            group_penalty: default_penalty(),
            recurrent: true,
            encoder_channels: default_enc(),
            decoder_channels: default_dec(),
            feedback_channels: default_dec(),
            decoder_init: DecoderInit::Random,
        }
    }
}

impl ClassifierConfig {
    /// Opposite compass directions share a group: {E,W}, {NE,SW}, {N,S}, {NW,SE}.
    pub fn axis_groups() -> Vec<usize> {
        (0..8).map(|d| d % 4).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            bail!(Config, "num_classes must be positive");
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.gamma >= 0.0) {
            bail!(Config, "alpha, beta and gamma must be nonnegative");
        }
        if !(self.beta + self.gamma > 0.0) {
            bail!(Config, "beta + gamma must be positive");
        }
        if let Some(map) = &self.group_map {
            if map.len() != self.num_classes {
                bail!(Config, "group_map has {} entries for {} classes", map.len(), self.num_classes);
            }
        }
        if self.encoder_channels.contains(&0) || self.decoder_channels == 0 || self.feedback_channels == 0 {
            bail!(Config, "classifier channel counts must be positive");
        }
        Ok(())
    }

    /// Multiplier on the cross-entropy given the top-1 prediction.
    pub fn penalty(&self, label: usize, top1: usize) -> f64 {
        match &self.group_map {
            Some(map) if map[label] != map[top1] => self.group_penalty,
            _ => 1.0,
        }
    }
}

pub const FEEDBACK_WEIGHT_SUFFIX: &str = ".R.W_fb";

pub fn feedback_weight(layer: usize) -> String {
    format!("l{layer}{FEEDBACK_WEIGHT_SUFFIX}")
}

/// Recurrent state of the two encoder stages.
#[derive(Clone, Copy, Debug)]
pub struct EncoderState {
    pub stage1: ConvLstmState,
    pub stage2: ConvLstmState,
}

/// Output of one [`ClassifierHead::classify_step`].
#[derive(Clone, Copy, Debug)]
pub struct ClassifyOut {
    pub logits: Var,
    /// Second-stage activations, consumed by the decoder.
    pub features: Var,
    pub state: EncoderState,
}

/// Architecture of the classification head for a given hierarchy.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierHead {
    config: ClassifierConfig,
    top_channels: usize,
    top_size: (usize, usize),
    feedback_layer: usize,
    feedback_r_channels: usize,
    kernel: usize,
}

impl ClassifierHead {
    pub fn new(net: &PredNetConfig, config: ClassifierConfig) -> Result<Self> {
        config.validate()?;
        net.validate()?;
        let n = net.num_layers();
        if n < 2 {
            bail!(Config, "the classification head needs at least two layers");
        }
        let top_size = net.layer_size(n - 1);
        if top_size.0 % 2 != 0 || top_size.1 % 2 != 0 {
            bail!(
                Config,
                "top-layer extent {}x{} must be even for the encoder pooling (input divisible by 2^{n})",
                top_size.0,
                top_size.1
            );
        }
        Ok(Self {
            top_channels: net.r_channels[n - 1],
            top_size,
            feedback_layer: n - 2,
            feedback_r_channels: net.r_channels[n - 2],
            kernel: net.kernel,
            config,
        })
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn feedback_layer(&self) -> usize {
        self.feedback_layer
    }

    fn stage_specs(&self) -> [ConvLstmSpec; 2] {
        let [c1, c2] = self.config.encoder_channels;
        [
            ConvLstmSpec {
                input_channels: self.top_channels,
                hidden_channels: c1,
                kernel: self.kernel,
            },
            ConvLstmSpec {
                input_channels: c1,
                hidden_channels: c2,
                kernel: self.kernel,
            },
        ]
    }

    fn plain_specs(&self) -> [ConvSpec; 2] {
        let [c1, c2] = self.config.encoder_channels;
        [
            ConvSpec::new(self.top_channels, c1).with_kernel(self.kernel),
            ConvSpec::new(c1, c2).with_kernel(self.kernel),
        ]
    }

    fn decoder_specs(&self) -> [ConvSpec; 2] {
        let c2 = self.config.encoder_channels[1];
        [
            ConvSpec::new(c2, self.config.decoder_channels).with_kernel(self.kernel).with_stride(2),
            ConvSpec::new(self.config.decoder_channels, self.config.feedback_channels)
                .with_kernel(self.kernel)
                .with_stride(2),
        ]
    }

    fn injection_spec(&self) -> ConvSpec {
        ConvSpec::new(self.config.feedback_channels, 4 * self.feedback_r_channels).with_kernel(self.kernel)
    }

    /// Adds head parameters to `p`, drawn from a ChaCha stream separate from
    /// the hierarchy's so the hierarchy's initial weights do not depend on
    /// whether a head is attached.
    pub fn init_params<T: Real>(&self, seed: u64, p: &mut ParamStore<T>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        let zero_dec = self.config.decoder_init == DecoderInit::Zero;
        let zero_fb = self.config.decoder_init != DecoderInit::Random;
        if self.config.recurrent {
            for (i, s) in self.stage_specs().iter().enumerate() {
                p.insert(format!("cls.enc{}.W", i + 1), init::conv_kernel(&mut rng, s.gate_conv().weight_shape()));
                p.insert(format!("cls.enc{}.b", i + 1), init::lstm_bias(s.hidden_channels));
            }
        } else {
            for (i, s) in self.plain_specs().iter().enumerate() {
                p.insert(format!("cls.enc{}.W", i + 1), init::conv_kernel(&mut rng, s.weight_shape()));
                p.insert(format!("cls.enc{}.b", i + 1), Tensor::zeros(&[s.out_channels]));
            }
        }
        let (nc, c2) = (self.config.num_classes, self.config.encoder_channels[1]);
        p.insert("cls.out.W", init::glorot_uniform(&mut rng, &[nc, c2], c2, nc));
        p.insert("cls.out.b", Tensor::zeros(&[nc]));
        for (i, s) in self.decoder_specs().iter().enumerate() {
            let w = init::conv_kernel(&mut rng, s.transpose_weight_shape());
            p.insert(format!("dec.up{}.W", i + 1), if zero_dec { Tensor::zeros(w.shape()) } else { w });
            p.insert(format!("dec.up{}.b", i + 1), Tensor::zeros(&[s.out_channels]));
        }
        let w = init::conv_kernel(&mut rng, self.injection_spec().weight_shape());
        p.insert(
            feedback_weight(self.feedback_layer),
            if zero_fb { Tensor::zeros(w.shape()) } else { w },
        );
    }

    pub fn initial_state<T: Real>(&self, g: &mut Graph<T>) -> EncoderState {
        let [c1, c2] = self.config.encoder_channels;
        let (h, w) = self.top_size;
        EncoderState {
            stage1: ConvLstmState::zeros(g, c1, h, w),
            stage2: ConvLstmState::zeros(g, c2, h / 2, w / 2),
        }
    }

    /// Encoder stage 1 at top resolution, 2x2 max pooling, encoder stage 2,
    /// global average pooling and an affine map to class logits.
    pub fn classify_step<T: Real>(&self, g: &mut Graph<T>, p: &Bound, r_top: Var, state: EncoderState) -> Result<ClassifyOut> {
        let (h, w) = self.top_size;
        if g.shape(r_top) != [self.top_channels, h, w] {
            bail!(
                Dimension,
                "classifier expects R_top of shape [{}, {h}, {w}], got {:?}",
                self.top_channels,
                g.shape(r_top)
            );
        }
        let (features, state) = if self.config.recurrent {
            let [s1, s2] = self.stage_specs();
            let st1 = nn::convlstm_step(g, &s1, r_top, state.stage1, p.get("cls.enc1.W")?, p.get("cls.enc1.b")?, None)?;
            let pooled = nn::maxpool2(g, st1.hidden)?;
            let st2 = nn::convlstm_step(g, &s2, pooled, state.stage2, p.get("cls.enc2.W")?, p.get("cls.enc2.b")?, None)?;
            (st2.hidden, EncoderState { stage1: st1, stage2: st2 })
        } else {
            let [s1, s2] = self.plain_specs();
            let c1 = nn::conv2d(g, r_top, &s1, p.get("cls.enc1.W")?, Some(p.get("cls.enc1.b")?))?;
            let c1 = g.tanh(c1)?;
            let pooled = nn::maxpool2(g, c1)?;
            let c2 = nn::conv2d(g, pooled, &s2, p.get("cls.enc2.W")?, Some(p.get("cls.enc2.b")?))?;
            (g.tanh(c2)?, state)
        };
        let pooled = g.global_avg_pool(features)?;
        let logits = g.affine(p.get("cls.out.W")?, pooled, p.get("cls.out.b")?)?;
        Ok(ClassifyOut { logits, features, state })
    }

    /// Two stride-2 transposed convolutions (ReLU between) taking encoder
    /// features to the extents of `R_{L-2}`.
    pub fn decode_feedback<T: Real>(&self, g: &mut Graph<T>, p: &Bound, features: Var) -> Result<Feedback> {
        let [d1, d2] = self.decoder_specs();
        let (h, w) = self.top_size;
        if g.shape(features) != [self.config.encoder_channels[1], h / 2, w / 2] {
            bail!(Dimension, "decoder got features of shape {:?}", g.shape(features));
        }
        let up = nn::conv2d_transpose(g, features, &d1, p.get("dec.up1.W")?, Some(p.get("dec.up1.b")?))?;
        let up = g.relu(up)?;
        let maps = nn::conv2d_transpose(g, up, &d2, p.get("dec.up2.W")?, Some(p.get("dec.up2.b")?))?;
        Ok(Feedback {
            maps,
            weight: p.get(&feedback_weight(self.feedback_layer))?,
        })
    }
}

/// Normalized weights `exp(alpha (t - T) / T)`, `t = 1..=T`.
pub fn time_weights(alpha: f64, t_len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (1..=t_len)
        .map(|t| (alpha * (t as f64 - t_len as f64) / t_len as f64).exp())
        .collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / z).collect()
}

/// Time-weighted sum of per-step logits (before the softmax).
pub fn aggregate_logits_graph<T: Real>(g: &mut Graph<T>, per_t: &[Var], alpha: f64) -> Result<Var> {
    if per_t.is_empty() {
        bail!(Contract, "aggregation needs at least one step");
    }
    let w = time_weights(alpha, per_t.len());
    let terms = per_t
        .iter()
        .zip(&w)
        .map(|(&l, &wt)| g.scale(l, T::from_f64_lossy(wt)))
        .collect::<Result<Vec<_>>>()?;
    g.add_all(&terms)
}

/// `softmax(Σ_t w_t · logits_t)` by value.
pub fn aggregate_logits(per_t_logits: &[Vec<f64>], alpha: f64) -> Result<Vec<f64>> {
    let Some(first) = per_t_logits.first() else {
        bail!(Contract, "aggregation needs at least one step");
    };
    let w = time_weights(alpha, per_t_logits.len());
    let mut z = vec![0.0; first.len()];
    for (row, wt) in per_t_logits.iter().zip(&w) {
        if row.len() != z.len() {
            bail!(Dimension, "logit rows differ in length");
        }
        for (acc, v) in z.iter_mut().zip(row) {
            *acc += wt * v;
        }
    }
    Ok(softmax_values(&z))
}

pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn check_label(label: usize, config: &ClassifierConfig) -> Result<()> {
    if label >= config.num_classes {
        bail!(Contract, "label {label} outside [0, {})", config.num_classes);
    }
    Ok(())
}

/// `beta · frame_loss + gamma · penalty · (−log p[label])`, by value.
pub fn multitask_loss(frame_loss: f64, class_probs: &[f64], label: usize, config: &ClassifierConfig) -> Result<f64> {
    check_label(label, config)?;
    if class_probs.len() != config.num_classes {
        bail!(Dimension, "{} probabilities for {} classes", class_probs.len(), config.num_classes);
    }
    if config.gamma == 0.0 {
        // Exact reduction even when p[label] underflows to zero.
        return Ok(config.beta * frame_loss);
    }
    let penalty = config.penalty(label, argmax(class_probs));
    let class_loss = -class_probs[label].ln() * penalty;
    Ok(config.beta * frame_loss + config.gamma * class_loss)
}

/// Graph version of [`multitask_loss`] on aggregated logits.
pub fn multitask_loss_graph<T: Real>(
    g: &mut Graph<T>,
    frame_loss: Var,
    aggregate: Var,
    label: usize,
    config: &ClassifierConfig,
) -> Result<Var> {
    check_label(label, config)?;
    let logp = g.log_softmax(aggregate)?;
    let probs: Vec<f64> = g.value(logp).data().iter().map(|v| v.as_f64().exp()).collect();
    let penalty = config.penalty(label, argmax(&probs));
    let picked = g.pick(logp, label)?;
    let class_loss = g.scale(picked, T::from_f64_lossy(-penalty))?;
    let a = g.scale(frame_loss, T::from_f64_lossy(config.beta))?;
    let b = g.scale(class_loss, T::from_f64_lossy(config.gamma))?;
    g.add(a, b)
}

/// Hierarchy plus classification head.
#[derive(Clone, Debug, PartialEq)]
pub struct PlusNet {
    pub net: PredNet,
    pub head: ClassifierHead,
}

/// Per-step graph handles of a PredNet+ rollout.
pub struct PlusSteps {
    pub layers: Vec<Vec<LayerVars>>,
    pub logits: Vec<Var>,
    pub feedback: Vec<Var>,
}

impl PlusNet {
    pub fn new(net: PredNetConfig, head: ClassifierConfig) -> Result<Self> {
        let head = ClassifierHead::new(&net, head)?;
        Ok(Self {
            net: PredNet::new(net)?,
            head,
        })
    }

    pub fn init_params<T: Real>(&self, seed: u64) -> ParamStore<T> {
        let mut p = self.net.init_params(seed);
        self.head.init_params(seed, &mut p);
        p
    }

    /// Unrolls the hierarchy with the head in the loop: encoder features
    /// from step `t` are decoded and fed into `R_{L-2}` at step `t + 1`.
    pub fn rollout_graph<T: Real>(&self, g: &mut Graph<T>, p: &Bound, frames: &[Var], mode: RolloutMode) -> Result<PlusSteps> {
        mode.validate(frames.len())?;
        let mut state = self.net.initial_state(g);
        let mut enc = self.head.initial_state(g);
        let mut feedback: Option<Feedback> = None;
        let mut out = PlusSteps {
            layers: Vec::with_capacity(frames.len()),
            logits: Vec::with_capacity(frames.len()),
            feedback: Vec::with_capacity(frames.len()),
        };
        for (t, &frame) in frames.iter().enumerate() {
            let input = match mode {
                RolloutMode::ClosedLoop { t_start } if t >= t_start => StepInput::OwnPrediction,
                _ => StepInput::Frame(frame),
            };
            state = self.net.step(g, p, input, &state, feedback)?;
            let top = state[self.net.num_layers() - 1].r.hidden;
            let cls = self.head.classify_step(g, p, top, enc)?;
            enc = cls.state;
            let fb = self.head.decode_feedback(g, p, cls.features)?;
            out.feedback.push(fb.maps);
            feedback = Some(fb);
            out.logits.push(cls.logits);
            out.layers.push(state.clone());
        }
        Ok(out)
    }

    /// Frame loss, aggregated logits and total multitask loss.
    pub fn loss_graph<T: Real>(&self, g: &mut Graph<T>, steps: &PlusSteps, label: usize) -> Result<(Var, Var, Var)> {
        let frame = self.net.loss_graph(g, &steps.layers)?;
        let agg = aggregate_logits_graph(g, &steps.logits, self.head.config().alpha)?;
        let total = multitask_loss_graph(g, frame, agg, label, self.head.config())?;
        Ok((frame, agg, total))
    }
}

/// Per-sequence classification output.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassTrace<T: Real = f32> {
    /// `[T][num_classes]`.
    pub per_t_logits: Vec<Vec<f64>>,
    pub aggregate_probs: Vec<f64>,
    pub feedback_maps: Vec<Tensor<T>>,
}

impl<T: Real> ClassTrace<T> {
    pub fn top_k(&self, k: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.aggregate_probs.len()).collect();
        idx.sort_by(|&a, &b| {
            self.aggregate_probs[b]
                .partial_cmp(&self.aggregate_probs[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        idx.truncate(k);
        idx
    }
}

/// A PredNet+ network with weights.
#[derive(Clone, Debug, PartialEq)]
pub struct PlusModel<T: Real = f32> {
    pub arch: PlusNet,
    pub params: ParamStore<T>,
}

impl<T: Real> PlusModel<T> {
    pub fn init(net: PredNetConfig, head: ClassifierConfig, seed: u64) -> Result<Self> {
        let arch = PlusNet::new(net, head)?;
        let params = arch.init_params(seed);
        Ok(Self { arch, params })
    }

    pub fn rollout(&self, sequence: &Tensor<T>, mode: RolloutMode) -> Result<(RolloutTrace<T>, ClassTrace<T>)> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g)?;
        let frames = self.arch.net.frames(&mut g, sequence)?;
        let steps = self.arch.rollout_graph(&mut g, &p, &frames, mode)?;
        let trace = RolloutTrace::collect(&g, &steps.layers)?;
        let per_t_logits: Vec<Vec<f64>> = steps
            .logits
            .iter()
            .map(|&v| g.value(v).data().iter().map(|x| x.as_f64()).collect())
            .collect();
        let aggregate_probs = aggregate_logits(&per_t_logits, self.arch.head.config().alpha)?;
        let feedback_maps = steps.feedback.iter().map(|&v| g.value(v).clone()).collect();
        Ok((
            trace,
            ClassTrace {
                per_t_logits,
                aggregate_probs,
                feedback_maps,
            },
        ))
    }
}
