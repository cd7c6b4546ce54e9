use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, OptimizerConfig, Split};
use super::load_split;
use crate::autograd::{checkpoint, Graph, ParamStore, Real, Tensor};
use crate::datagen::{derive_seed, LabeledSequence};
use crate::error::{bail, Error, Result};
use crate::metrics;
use crate::plus::{ClassTrace, PlusModel, PlusNet};
use crate::prednet::{Model, PredNet, RolloutMode, RolloutTrace};

/// The network being trained: plain hierarchy or hierarchy plus head.
#[derive(Clone, Debug, PartialEq)]
pub enum Arch {
    Vanilla(PredNet),
    Plus(PlusNet),
}

/// Result of one sequence through the network.
pub struct SequencePass {
    /// Training objective (multitask total for PredNet+).
    pub loss: f64,
    /// `[T, C, H, W]` open-loop predictions.
    pub predictions: Tensor<f32>,
    pub grads: Option<ParamStore<f32>>,
}

impl Arch {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(match &cfg.classifier {
            Some(c) => Arch::Plus(PlusNet::new(cfg.model.clone(), c.clone())?),
            None => Arch::Vanilla(PredNet::new(cfg.model.clone())?),
        })
    }

    pub fn net(&self) -> &PredNet {
        match self {
            Arch::Vanilla(n) => n,
            Arch::Plus(p) => &p.net,
        }
    }

    pub fn init_params(&self, seed: u64) -> ParamStore<f32> {
        match self {
            Arch::Vanilla(n) => n.init_params(seed),
            Arch::Plus(p) => p.init_params(seed),
        }
    }

    /// Open-loop pass; gradients are computed when `grads` is set.
    pub fn pass(&self, params: &ParamStore<f32>, seq: &LabeledSequence, grads: bool) -> Result<SequencePass> {
        let mut g = Graph::<f32>::new();
        let p = params.bind(&mut g)?;
        let frames = self.net().frames(&mut g, &seq.frames)?;
        let (loss, layers) = match self {
            Arch::Vanilla(net) => {
                let steps = net.rollout_graph(&mut g, &p, &frames, RolloutMode::OpenLoop)?;
                (net.loss_graph(&mut g, &steps)?, steps)
            }
            Arch::Plus(pn) => {
                let steps = pn.rollout_graph(&mut g, &p, &frames, RolloutMode::OpenLoop)?;
                let (_, _, total) = pn.loss_graph(&mut g, &steps, seq.final_label())?;
                (total, steps.layers)
            }
        };
        let value = g.scalar(loss).as_f64();
        if !value.is_finite() {
            bail!(Numeric, "loss is {value}");
        }
        let preds: Vec<Tensor<f32>> = layers.iter().map(|l| g.value(l[0].ahat).clone()).collect();
        let grads = if grads {
            let mut gr = g.backward(loss)?;
            Some(p.gradients(&mut gr))
        } else {
            None
        };
        Ok(SequencePass {
            loss: value,
            predictions: Tensor::stack(&preds)?,
            grads,
        })
    }

    /// Rollout with recorded states, plus class outputs for PredNet+.
    pub fn rollout(
        &self,
        params: &ParamStore<f32>,
        frames: &Tensor<f32>,
        mode: RolloutMode,
    ) -> Result<(RolloutTrace<f32>, Option<ClassTrace<f32>>)> {
        match self {
            Arch::Vanilla(net) => {
                let m = Model {
                    net: net.clone(),
                    params: params.clone(),
                };
                Ok((m.rollout(frames, mode)?, None))
            }
            Arch::Plus(pn) => {
                let m = PlusModel {
                    arch: pn.clone(),
                    params: params.clone(),
                };
                let (trace, cls) = m.rollout(frames, mode)?;
                Ok((trace, Some(cls)))
            }
        }
    }

    /// Loads a checkpoint and checks it against this architecture.
    pub fn load_checkpoint(&self, path: &std::path::Path) -> Result<ParamStore<f32>> {
        let params = checkpoint::load(path)?;
        let expected = self.init_params(0);
        if !params.same_layout(&expected) {
            bail!(
                Format,
                "checkpoint {} does not match the configured model ({} tensors expected, {} found)",
                path.display(),
                expected.len(),
                params.len()
            );
        }
        Ok(params)
    }
}

/// Adam with double-precision moments.
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(cfg: &OptimizerConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.epsilon,
            t: 0,
            moments: BTreeMap::new(),
        }
    }

    /// Applies one update from averaged gradients keyed by parameter name.
    pub fn step(&mut self, params: &mut ParamStore<f32>, grads: &BTreeMap<String, Vec<f64>>) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let update = self.lr * (*mi / c1) / ((*vi / c2).sqrt() + self.eps);
                *w = (*w as f64 - update) as f32;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_mae: f64,
    pub learning_rate: f64,
}

pub fn log_csv(rows: &[EpochLog]) -> String {
    let mut s = String::from("epoch,train_loss,val_loss,val_mae,learning_rate\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:.9e},{:.9e},{:.9e},{:.9e}",
            r.epoch, r.train_loss, r.val_loss, r.val_mae, r.learning_rate
        );
    }
    s
}

pub struct TrainOutcome {
    pub params: ParamStore<f32>,
    pub log: Vec<EpochLog>,
}

/// Mean loss and mean per-frame MAE (frames `t >= 1`) over `seqs`.
pub fn validate(arch: &Arch, params: &ParamStore<f32>, seqs: &[LabeledSequence]) -> Result<(f64, f64)> {
    if seqs.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let (mut loss, mut mae) = (0.0, 0.0);
    for s in seqs {
        let pass = arch.pass(params, s, false)?;
        loss += pass.loss;
        let t_len = s.len();
        for t in 1..t_len {
            mae += metrics::mae(&s.frames.index0(t)?, &pass.predictions.index0(t)?)? / (t_len - 1) as f64;
        }
    }
    Ok((loss / seqs.len() as f64, mae / seqs.len() as f64))
}

fn mean_loss(arch: &Arch, params: &ParamStore<f32>, seqs: &[LabeledSequence]) -> Result<f64> {
    let mut total = 0.0;
    for s in seqs {
        total += arch.pass(params, s, false)?.loss;
    }
    Ok(total / seqs.len().max(1) as f64)
}

/// Writes the parameters and a note next to the run output, then passes the
/// error through.
fn dump_on_numeric(cfg: &ExperimentConfig, params: &ParamStore<f32>, err: Error, at: &str) -> Error {
    if matches!(err, Error::Numeric(_)) {
        let _ = fs::create_dir_all(&cfg.out);
        let _ = checkpoint::save(params, cfg.out.join("nan_dump.pnck"));
        let _ = fs::write(
            cfg.out.join("nan_dump.txt"),
            format!("{at}\n{err}\nparameter l2 norm {:.9e}\n", params.l2_norm()),
        );
        log::error!("numeric failure at {at}; state written to {}", cfg.out.display());
        return Error::Numeric(format!("{at}: {err}"));
    }
    err
}

/// Trains on in-memory splits; deterministic given the config.
pub fn train_on(cfg: &ExperimentConfig, train: &[LabeledSequence], val: &[LabeledSequence]) -> Result<TrainOutcome> {
    if train.is_empty() {
        bail!(Contract, "training set is empty");
    }
    let arch = Arch::from_config(cfg)?;
    let mut params = arch.init_params(cfg.seed);
    let mut adam = Adam::new(&cfg.optimizer);
    let opt = &cfg.optimizer;

    let init_train = mean_loss(&arch, &params, train).map_err(|e| dump_on_numeric(cfg, &params, e, "initial loss"))?;
    let (val_loss, val_mae) = validate(&arch, &params, val)?;
    let mut log = vec![EpochLog {
        epoch: 0,
        train_loss: init_train,
        val_loss,
        val_mae,
        learning_rate: adam.lr,
    }];
    log::info!("epoch 0: train {init_train:.6e} val {val_loss:.6e} val_mae {val_mae:.6e}");

    let mut best = val_loss;
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=opt.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, epoch as u64));
        order.shuffle(&mut rng);
        let lr_used = adam.lr;
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(opt.batch_size).enumerate() {
            let mut acc: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for &i in batch {
                let pass = arch
                    .pass(&params, &train[i], true)
                    .map_err(|e| dump_on_numeric(cfg, &params, e, &format!("epoch {epoch}, batch {b}, sequence {i}")))?;
                epoch_loss += pass.loss;
                for (name, g) in pass.grads.expect("requested").iter() {
                    let slot = acc.entry(name.to_string()).or_insert_with(|| vec![0.0; g.len()]);
                    for (s, v) in slot.iter_mut().zip(g.data()) {
                        *s += v.as_f64();
                    }
                }
            }
            let inv = 1.0 / batch.len() as f64;
            acc.values_mut().for_each(|g| g.iter_mut().for_each(|v| *v *= inv));
            adam.step(&mut params, &acc);
        }
        if let Some((name, _)) = params.iter().find(|(_, t)| !t.is_finite()) {
            let err = Error::Numeric(format!("parameter {name} became non-finite"));
            return Err(dump_on_numeric(cfg, &params, err, &format!("epoch {epoch}")));
        }
        let (val_loss, val_mae) = validate(&arch, &params, val)?;
        let row = EpochLog {
            epoch,
            train_loss: epoch_loss / train.len() as f64,
            val_loss,
            val_mae,
            learning_rate: lr_used,
        };
        log::info!(
            "epoch {epoch}: train {:.6e} val {:.6e} val_mae {:.6e} lr {:.3e}",
            row.train_loss,
            row.val_loss,
            row.val_mae,
            row.learning_rate
        );
        log.push(row);
        if val_loss < best {
            best = val_loss;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= opt.plateau_patience {
                adam.lr *= opt.decay_factor;
                since_best = 0;
            }
        }
    }
    Ok(TrainOutcome { params, log })
}

/// Loads the splits, trains, and writes `checkpoint.pnck` and `train_log.csv`.
pub fn train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    let train = load_split(cfg, Split::Train)?;
    let val = load_split(cfg, Split::Val)?;
    let out = train_on(cfg, &train, &val)?;
    fs::create_dir_all(&cfg.out)?;
    checkpoint::save(&out.params, cfg.checkpoint_path())?;
    fs::write(cfg.out.join("train_log.csv"), log_csv(&out.log))?;
    Ok(out)
}
