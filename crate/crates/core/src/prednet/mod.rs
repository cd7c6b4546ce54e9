//! The predictive-coding hierarchy.
//!
//! Every layer `l` holds a target unit `A_l`, a prediction unit `Â_l`, an
//! error unit `E_l` and a recurrent representation unit `R_l`. One time step
//! runs two passes: a top-down sweep updating every `R_l` from the previous
//! errors and the freshly updated layer above, then a bottom-up sweep that
//! forms predictions, targets and rectified errors.

mod config;

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{LossMode, PredNetConfig, LALL_UPPER_WEIGHT};

use crate::autograd::{Bound, Graph, ParamStore, Real, Tensor, Var};
use crate::error::{bail, Result};
use crate::nn::{self, init, ConvLstmSpec, ConvLstmState, ConvSpec};

/// Graph handles for one layer at one time step.
#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub a: Var,
    pub ahat: Var,
    pub e: Var,
    pub r: ConvLstmState,
}

/// Materialized values of one layer at one time step.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerState<T: Real = f32> {
    pub a: Tensor<T>,
    pub ahat: Tensor<T>,
    pub e: Tensor<T>,
    pub r: Tensor<T>,
}

/// What the lowest layer sees as its target at a step.
#[derive(Clone, Copy, Debug)]
pub enum StepInput {
    Frame(Var),
    /// Closed loop: the step's own prediction stands in for the frame.
    OwnPrediction,
}

/// Class-derived maps injected into the gates of `R_{L-2}`.
#[derive(Clone, Copy, Debug)]
pub struct Feedback {
    pub maps: Var,
    pub weight: Var,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RolloutMode {
    OpenLoop,
    /// Ground truth up to `t_start - 1`, own predictions from `t_start` on.
    ClosedLoop { t_start: usize },
}

impl RolloutMode {
    pub fn validate(&self, t_len: usize) -> Result<()> {
        if let RolloutMode::ClosedLoop { t_start } = *self {
            if t_start < 2 || t_start > t_len {
                bail!(
                    Contract,
                    "closed-loop start {t_start} outside [2, {t_len}]"
                );
            }
        }
        Ok(())
    }

    fn feeds_truth(&self, t: usize) -> bool {
        match *self {
            RolloutMode::OpenLoop => true,
            RolloutMode::ClosedLoop { t_start } => t < t_start,
        }
    }
}

pub fn r_weight(l: usize) -> String {
    format!("l{l}.R.W")
}
pub fn r_bias(l: usize) -> String {
    format!("l{l}.R.b")
}
pub fn ahat_weight(l: usize) -> String {
    format!("l{l}.Ahat.W")
}
pub fn ahat_bias(l: usize) -> String {
    format!("l{l}.Ahat.b")
}
pub fn a_weight(l: usize) -> String {
    format!("l{l}.A.W")
}
pub fn a_bias(l: usize) -> String {
    format!("l{l}.A.b")
}

/// Architecture of a hierarchy (weights live in a [`ParamStore`]).
#[derive(Clone, Debug, PartialEq)]
pub struct PredNet {
    config: PredNetConfig,
}

impl PredNet {
    pub fn new(config: PredNetConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &PredNetConfig {
        &self.config
    }

    pub fn num_layers(&self) -> usize {
        self.config.num_layers()
    }

    /// Channel count of the non-recurrent input group of `R_l`.
    pub fn r_input_channels(&self, l: usize) -> usize {
        let c = &self.config;
        2 * c.a_channels[l] + if l + 1 < c.num_layers() { c.r_channels[l + 1] } else { 0 }
    }

    pub fn lstm_spec(&self, l: usize) -> ConvLstmSpec {
        ConvLstmSpec {
            input_channels: self.r_input_channels(l),
            hidden_channels: self.config.r_channels[l],
            kernel: self.config.kernel,
        }
    }

    fn ahat_spec(&self, l: usize) -> ConvSpec {
        ConvSpec::new(self.config.r_channels[l], self.config.a_channels[l]).with_kernel(self.config.kernel)
    }

    fn a_spec(&self, l: usize) -> ConvSpec {
        ConvSpec::new(2 * self.config.a_channels[l - 1], self.config.a_channels[l]).with_kernel(self.config.kernel)
    }

    /// Glorot-uniform kernels, zero biases (forget gates at 1), drawn in
    /// layer order from a ChaCha stream seeded by `seed`.
    pub fn init_params<T: Real>(&self, seed: u64) -> ParamStore<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        for l in 0..self.num_layers() {
            let lstm = self.lstm_spec(l);
            p.insert(r_weight(l), init::conv_kernel(&mut rng, lstm.gate_conv().weight_shape()));
            p.insert(r_bias(l), init::lstm_bias(lstm.hidden_channels));
            let ahat = self.ahat_spec(l);
            p.insert(ahat_weight(l), init::conv_kernel(&mut rng, ahat.weight_shape()));
            p.insert(ahat_bias(l), Tensor::zeros(&[ahat.out_channels]));
            if l > 0 {
                let a = self.a_spec(l);
                p.insert(a_weight(l), init::conv_kernel(&mut rng, a.weight_shape()));
                p.insert(a_bias(l), Tensor::zeros(&[a.out_channels]));
            }
        }
        p
    }

    /// Zero errors and zero recurrent state for every layer.
    pub fn initial_state<T: Real>(&self, g: &mut Graph<T>) -> Vec<LayerVars> {
        (0..self.num_layers())
            .map(|l| {
                let (h, w) = self.config.layer_size(l);
                let ac = self.config.a_channels[l];
                let a = g.zeros(&[ac, h, w]);
                let ahat = g.zeros(&[ac, h, w]);
                let e = g.zeros(&[2 * ac, h, w]);
                let r = ConvLstmState::zeros(g, self.config.r_channels[l], h, w);
                LayerVars { a, ahat, e, r }
            })
            .collect()
    }

    /// One two-pass update. Returns the new per-layer state; the prediction
    /// for this step's frame is `result[0].ahat`.
    pub fn step<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        input: StepInput,
        prev: &[LayerVars],
        feedback: Option<Feedback>,
    ) -> Result<Vec<LayerVars>> {
        let n = self.num_layers();
        if prev.len() != n {
            bail!(Dimension, "expected state for {n} layers, got {}", prev.len());
        }
        if let StepInput::Frame(frame) = input {
            let (h, w) = self.config.layer_size(0);
            if g.shape(frame) != [self.config.a_channels[0], h, w] {
                bail!(
                    Dimension,
                    "frame shape {:?}, model expects [{}, {h}, {w}]",
                    g.shape(frame),
                    self.config.a_channels[0]
                );
            }
        }

        // Top-down: R_l from E_l^{t-1} and upsampled R_{l+1}^t.
        let mut r_new: Vec<Option<ConvLstmState>> = vec![None; n];
        for l in (0..n).rev() {
            let x = match r_new.get(l + 1).copied().flatten() {
                Some(above) => {
                    let up = nn::upsample_nearest2(g, above.hidden)?;
                    g.concat(&[prev[l].e, up])?
                }
                None => prev[l].e,
            };
            let extra = match feedback {
                Some(fb) if n >= 2 && l == n - 2 => {
                    let fb_channels = g.shape(fb.maps)[0];
                    let spec = ConvSpec::new(fb_channels, 4 * self.config.r_channels[l]).with_kernel(self.config.kernel);
                    Some(nn::conv2d(g, fb.maps, &spec, fb.weight, None)?)
                }
                _ => None,
            };
            let state = nn::convlstm_step(
                g,
                &self.lstm_spec(l),
                x,
                prev[l].r,
                p.get(&r_weight(l))?,
                p.get(&r_bias(l))?,
                extra,
            )?;
            r_new[l] = Some(state);
        }

        // Bottom-up: predictions, targets, errors.
        let mut out: Vec<LayerVars> = Vec::with_capacity(n);
        for (l, r) in r_new.into_iter().enumerate() {
            let r = r.expect("filled by the top-down pass");
            let pre = nn::conv2d(
                g,
                r.hidden,
                &self.ahat_spec(l),
                p.get(&ahat_weight(l))?,
                Some(p.get(&ahat_bias(l))?),
            )?;
            let mut ahat = g.relu(pre)?;
            let a = if l == 0 {
                ahat = g.clamp_max(ahat, T::from_f64_lossy(self.config.pixel_max))?;
                match input {
                    StepInput::Frame(f) => f,
                    StepInput::OwnPrediction => ahat,
                }
            } else {
                let below = out[l - 1].e;
                let conv = nn::conv2d(g, below, &self.a_spec(l), p.get(&a_weight(l))?, Some(p.get(&a_bias(l))?))?;
                let act = g.relu(conv)?;
                nn::maxpool2(g, act)?
            };
            let over = g.sub(ahat, a)?;
            let under = g.sub(a, ahat)?;
            let pos = g.relu(over)?;
            let neg = g.relu(under)?;
            let e = g.concat(&[pos, neg])?;
            out.push(LayerVars { a, ahat, e, r });
        }
        Ok(out)
    }

    /// Unrolls the hierarchy over `frames`, returning the state after each step.
    pub fn rollout_graph<T: Real>(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        frames: &[Var],
        mode: RolloutMode,
    ) -> Result<Vec<Vec<LayerVars>>> {
        mode.validate(frames.len())?;
        let mut state = self.initial_state(g);
        let mut steps = Vec::with_capacity(frames.len());
        for (t, &frame) in frames.iter().enumerate() {
            let input = if mode.feeds_truth(t) {
                StepInput::Frame(frame)
            } else {
                StepInput::OwnPrediction
            };
            state = self.step(g, p, input, &state, None)?;
            steps.push(state.clone());
        }
        Ok(steps)
    }

    /// `Σ_t μ_t Σ_l λ_l mean(E_l^t)` over a rollout; zero-weight terms are
    /// left off the tape.
    pub fn loss_graph<T: Real>(&self, g: &mut Graph<T>, steps: &[Vec<LayerVars>]) -> Result<Var> {
        if steps.len() < 2 {
            bail!(Contract, "loss needs at least two time steps, got {}", steps.len());
        }
        let lambda = self.config.layer_weights();
        let mu = self.config.time_weights(steps.len());
        let mut total: Option<Var> = None;
        for (t, layers) in steps.iter().enumerate() {
            if mu[t] == 0.0 {
                continue;
            }
            let mut inner: Option<Var> = None;
            for (l, lv) in layers.iter().enumerate() {
                if lambda[l] == 0.0 {
                    continue;
                }
                let m = g.mean(lv.e)?;
                let term = g.scale(m, T::from_f64_lossy(lambda[l]))?;
                inner = Some(match inner {
                    Some(acc) => g.add(acc, term)?,
                    None => term,
                });
            }
            let Some(inner) = inner else { continue };
            let term = g.scale(inner, T::from_f64_lossy(mu[t]))?;
            total = Some(match total {
                Some(acc) => g.add(acc, term)?,
                None => term,
            });
        }
        match total {
            Some(v) => Ok(v),
            None => g.constant(Tensor::scalar(T::zero())),
        }
    }

    /// Splits a `[T, C, H, W]` sequence into constant frame nodes.
    pub fn frames<T: Real>(&self, g: &mut Graph<T>, sequence: &Tensor<T>) -> Result<Vec<Var>> {
        if sequence.rank() != 4 {
            bail!(Dimension, "sequence must be [T, C, H, W], got {:?}", sequence.shape());
        }
        (0..sequence.shape()[0])
            .map(|t| g.constant(sequence.index0(t)?))
            .collect()
    }
}

/// A hierarchy together with its weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<T: Real = f32> {
    pub net: PredNet,
    pub params: ParamStore<T>,
}

/// Builds a model with deterministic initial weights.
pub fn init_model<T: Real>(config: PredNetConfig, seed: u64) -> Result<Model<T>> {
    let net = PredNet::new(config)?;
    let params = net.init_params(seed);
    Ok(Model { net, params })
}

impl<T: Real> Model<T> {
    pub fn rollout(&self, sequence: &Tensor<T>, mode: RolloutMode) -> Result<RolloutTrace<T>> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g)?;
        let frames = self.net.frames(&mut g, sequence)?;
        let steps = self.net.rollout_graph(&mut g, &p, &frames, mode)?;
        RolloutTrace::collect(&g, &steps)
    }

    /// Training objective of an open-loop rollout, by value.
    pub fn loss(&self, sequence: &Tensor<T>) -> Result<f64> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g)?;
        let frames = self.net.frames(&mut g, sequence)?;
        let steps = self.net.rollout_graph(&mut g, &p, &frames, RolloutMode::OpenLoop)?;
        let l = self.net.loss_graph(&mut g, &steps)?;
        Ok(g.scalar(l).as_f64())
    }
}

/// Values recorded during a rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutTrace<T: Real = f32> {
    /// `[T, C, H, W]`; entry `t` is `Â_0` at step `t`.
    pub predictions: Tensor<T>,
    /// `states[t][l]`.
    pub states: Vec<Vec<LayerState<T>>>,
    pub mean_abs_e: Vec<Vec<f64>>,
    pub mean_abs_r: Vec<Vec<f64>>,
}

impl<T: Real> RolloutTrace<T> {
    pub fn collect(g: &Graph<T>, steps: &[Vec<LayerVars>]) -> Result<Self> {
        let states: Vec<Vec<LayerState<T>>> = steps
            .iter()
            .map(|layers| {
                layers
                    .iter()
                    .map(|lv| LayerState {
                        a: g.value(lv.a).clone(),
                        ahat: g.value(lv.ahat).clone(),
                        e: g.value(lv.e).clone(),
                        r: g.value(lv.r.hidden).clone(),
                    })
                    .collect()
            })
            .collect();
        let preds: Vec<Tensor<T>> = states.iter().map(|s| s[0].ahat.clone()).collect();
        let mean_abs_e = states.iter().map(|s| s.iter().map(|ls| ls.e.mean_abs_f64()).collect()).collect();
        let mean_abs_r = states.iter().map(|s| s.iter().map(|ls| ls.r.mean_abs_f64()).collect()).collect();
        Ok(Self {
            predictions: Tensor::stack(&preds)?,
            states,
            mean_abs_e,
            mean_abs_r,
        })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn num_layers(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    /// `t,layer,mean_abs_E,mean_abs_R` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,layer,mean_abs_E,mean_abs_R\n");
        for (t, (es, rs)) in self.mean_abs_e.iter().zip(&self.mean_abs_r).enumerate() {
            for (l, (e, r)) in es.iter().zip(rs).enumerate() {
                let _ = writeln!(s, "{t},{l},{e:.9e},{r:.9e}");
            }
        }
        s
    }

    /// Time-averaged mean |E_l| per layer.
    pub fn layer_error_means(&self) -> Vec<f64> {
        let n = self.num_layers();
        (0..n)
            .map(|l| self.mean_abs_e.iter().map(|row| row[l]).sum::<f64>() / self.len() as f64)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(layers: usize) -> PredNetConfig {
        PredNetConfig::doubling(layers, 1, 2, [8, 8])
    }

    fn seq(t: usize, seed: u64) -> Tensor<f64> {
        let mut s = seed.wrapping_mul(0x2545F4914F6CDD1D) | 1;
        Tensor::from_fn(&[t, 1, 8, 8], |_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s % 1000) as f64 / 1000.0
        })
    }

    #[test]
    fn init_is_deterministic() {
        let a: Model<f32> = init_model(small(3), 7).unwrap();
        let b: Model<f32> = init_model(small(3), 7).unwrap();
        assert_eq!(a.params, b.params);
        let c: Model<f32> = init_model(small(3), 8).unwrap();
        assert_ne!(a.params, c.params);
    }

    #[test]
    fn glorot_bounds_hold() {
        let m: Model<f64> = init_model(small(2), 1).unwrap();
        for (name, t) in m.params.iter() {
            if name.ends_with(".W") {
                let s = t.shape();
                let kk = s[2] * s[3];
                let lim = (6.0 / ((s[0] + s[1]) * kk) as f64).sqrt();
                assert!(t.data().iter().all(|v| v.abs() <= lim), "{name}");
            }
        }
        assert_eq!(m.params.get("l0.R.b").unwrap().data(), &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn layer_extents_halve() {
        let c = PredNetConfig::doubling(4, 3, 4, [48, 56]);
        let m: Model<f32> = init_model(c, 0).unwrap();
        assert_eq!(m.net.config().layer_size(3), (6, 7));
        let mut g = Graph::<f32>::new();
        let st = m.net.initial_state(&mut g);
        assert_eq!(g.shape(st[3].r.hidden), &[32, 6, 7]);
    }

    #[test]
    fn indivisible_input_is_config_error() {
        let c = PredNetConfig::doubling(4, 1, 4, [36, 32]);
        assert!(matches!(init_model::<f32>(c, 0), Err(crate::Error::Config(_))));
    }

    #[test]
    fn single_layer_model_runs() {
        let m: Model<f64> = init_model(small(1), 3).unwrap();
        let tr = m.rollout(&seq(4, 1), RolloutMode::OpenLoop).unwrap();
        assert_eq!(tr.predictions.shape(), &[4, 1, 8, 8]);
        assert!(m.loss(&seq(4, 1)).unwrap() > 0.0);
    }

    #[test]
    fn zero_frames_give_zero_errors() {
        let m: Model<f64> = init_model(small(3), 3).unwrap();
        let zeros = Tensor::zeros(&[3, 1, 8, 8]);
        let tr = m.rollout(&zeros, RolloutMode::OpenLoop).unwrap();
        for s in &tr.states {
            for ls in s {
                assert!(ls.e.data().iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn errors_nonnegative_and_predictions_in_range() {
        let mut m: Model<f64> = init_model(small(3), 4).unwrap();
        // Large biases push Â_0 past the clamp.
        m.params.get_mut("l0.Ahat.b").unwrap().data_mut()[0] = 5.0;
        let tr = m.rollout(&seq(5, 2), RolloutMode::OpenLoop).unwrap();
        assert!(tr.predictions.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        for s in &tr.states {
            for ls in s {
                assert!(ls.e.data().iter().all(|&v| v >= 0.0));
            }
            assert_eq!(s[0].ahat, s[0].ahat.map(|v| v.clamp(0.0, 1.0)));
        }
        for t in 0..5 {
            assert_eq!(tr.predictions.index0(t).unwrap(), tr.states[t][0].ahat);
            assert_eq!(tr.states[t][0].a, seq(5, 2).index0(t).unwrap());
        }
    }

    #[test]
    fn perfect_prediction_means_zero_error() {
        let m: Model<f64> = init_model(small(2), 5).unwrap();
        let mut g = Graph::new();
        let p = m.params.bind(&mut g).unwrap();
        let st = m.net.initial_state(&mut g);
        let next = m.net.step(&mut g, &p, StepInput::OwnPrediction, &st, None).unwrap();
        assert!(g.value(next[0].e).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn closed_loop_at_end_equals_open_loop() {
        let m: Model<f64> = init_model(small(2), 6).unwrap();
        let s = seq(5, 3);
        let open = m.rollout(&s, RolloutMode::OpenLoop).unwrap();
        let closed = m.rollout(&s, RolloutMode::ClosedLoop { t_start: 5 }).unwrap();
        assert_eq!(open, closed);
        assert!(matches!(
            m.rollout(&s, RolloutMode::ClosedLoop { t_start: 1 }),
            Err(crate::Error::Contract(_))
        ));
        assert!(m.rollout(&s, RolloutMode::ClosedLoop { t_start: 6 }).is_err());
    }

    #[test]
    fn closed_loop_prediction_is_fed_back() {
        let m: Model<f64> = init_model(small(2), 6).unwrap();
        let s = seq(5, 3);
        let tr = m.rollout(&s, RolloutMode::ClosedLoop { t_start: 2 }).unwrap();
        for t in 2..5 {
            assert_eq!(tr.states[t][0].a, tr.states[t][0].ahat);
        }
        let open = m.rollout(&s, RolloutMode::OpenLoop).unwrap();
        assert_eq!(open.predictions.index0(2).unwrap(), tr.predictions.index0(2).unwrap());
    }

    #[test]
    fn loss_examples() {
        let m: Model<f64> = init_model(small(2), 9).unwrap();
        let s = seq(4, 5);
        let tr = m.rollout(&s, RolloutMode::OpenLoop).unwrap();
        let l0: f64 = (1..4).map(|t| tr.states[t][0].e.mean_f64()).sum::<f64>() / 3.0;
        assert!((m.loss(&s).unwrap() - l0).abs() < 1e-12);

        let lall = Model {
            net: PredNet::new(small(2).with_loss_mode(LossMode::Lall)).unwrap(),
            params: m.params.clone(),
        };
        let want: f64 = (1..4)
            .map(|t| tr.states[t][0].e.mean_f64() + 0.1 * tr.states[t][1].e.mean_f64())
            .sum::<f64>()
            / 3.0;
        assert!((lall.loss(&s).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn lall_constant_errors_arithmetic() {
        let net = PredNet::new(small(2).with_loss_mode(LossMode::Lall)).unwrap();
        let mut g = Graph::<f64>::new();
        let mut steps = Vec::new();
        for _ in 0..3 {
            let mut st = net.initial_state(&mut g);
            st[0].e = g.constant(Tensor::full(&[2, 8, 8], 0.3)).unwrap();
            st[1].e = g.constant(Tensor::full(&[4, 4, 4], 0.7)).unwrap();
            steps.push(st);
        }
        let l = net.loss_graph(&mut g, &steps).unwrap();
        assert!((g.scalar(l) - (0.3 + 0.1 * 0.7)).abs() < 1e-12);

        let zeros: Vec<_> = (0..3).map(|_| net.initial_state(&mut g)).collect();
        let l = net.loss_graph(&mut g, &zeros).unwrap();
        assert_eq!(g.scalar(l), 0.0);
        assert!(net.loss_graph(&mut g, &zeros[..1]).is_err());
    }

    #[test]
    fn trace_csv_has_row_per_step_and_layer() {
        let m: Model<f64> = init_model(small(3), 2).unwrap();
        let tr = m.rollout(&seq(4, 8), RolloutMode::OpenLoop).unwrap();
        let csv = tr.to_csv();
        assert_eq!(csv.lines().count(), 1 + 4 * 3);
        assert!(csv.starts_with("t,layer,mean_abs_E,mean_abs_R\n"));
    }

    #[test]
    fn frame_shape_mismatch() {
        let m: Model<f64> = init_model(small(2), 2).unwrap();
        let bad = Tensor::zeros(&[3, 1, 4, 4]);
        assert!(matches!(m.rollout(&bad, RolloutMode::OpenLoop), Err(crate::Error::Dimension(_))));
    }
}
