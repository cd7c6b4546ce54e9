use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datagen::SceneSpec;
use crate::error::{bail, Result};
use crate::metrics::DEFAULT_TAU;
use crate::plus::ClassifierConfig;
use crate::prednet::PredNetConfig;

/// Everything one experiment needs, read from a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    /// Keep every `fps_factor`-th frame of each stored sequence.
    #[serde(default = "one")]
    pub fps_factor: usize,
    /// Root for every artifact the pipeline writes.
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub model: PredNetConfig,
    /// Present for PredNet+ runs.
    #[serde(default)]
    pub classifier: Option<ClassifierConfig>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

fn one() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("runs/default")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without a new best validation loss before the rate is decayed.
    pub plateau_patience: usize,
    pub decay_factor: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 8,
            plateau_patience: 3,
            decay_factor: 0.5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Where the `VSEQ` splits live; `<out>/data` when unset.
    pub dir: Option<PathBuf>,
    /// IDX digit file; the built-in glyphs are used when missing.
    pub glyphs: Option<PathBuf>,
    pub num_train: usize,
    pub num_val: usize,
    pub num_test: usize,
    pub scene: SceneSpec,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            dir: None,
            glyphs: None,
            num_train: 2000,
            num_val: 200,
            num_test: 400,
            scene: SceneSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub tau: f64,
    /// Closed-loop start frames; empty means `T/4, T/2, 3T/4`.
    pub t_start: Vec<usize>,
    /// Extrapolation steps; unset runs to the end of each sequence.
    pub steps: Option<usize>,
    /// Sequences whose frames are dumped as images.
    pub dump: usize,
    /// Sequences probed.
    pub probe_sequences: usize,
    /// Cap on evaluated test sequences.
    pub max_sequences: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            tau: DEFAULT_TAU,
            t_start: Vec::new(),
            steps: None,
            dump: 4,
            probe_sequences: 4,
            max_sequences: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| crate::Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| crate::Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if let Some(c) = &self.classifier {
            c.validate()?;
        }
        self.data.scene.validate()?;
        if self.fps_factor == 0 {
            bail!(Config, "fps_factor must be at least 1");
        }
        if self.data.scene.seq_len.div_ceil(self.fps_factor) < 2 {
            bail!(Config, "fps_factor {} leaves fewer than 2 frames", self.fps_factor);
        }
        if self.data.scene.canvas != self.model.input_size {
            bail!(
                Config,
                "scene canvas {:?} differs from model input size {:?}",
                self.data.scene.canvas,
                self.model.input_size
            );
        }
        if self.model.a_channels[0] != 1 {
            bail!(Config, "generated frames have 1 channel, model expects {}", self.model.a_channels[0]);
        }
        let o = &self.optimizer;
        if !(o.learning_rate > 0.0) || o.batch_size == 0 || !(o.decay_factor > 0.0 && o.decay_factor <= 1.0) {
            bail!(Config, "optimizer needs learning_rate > 0, batch_size >= 1, decay_factor in (0, 1]");
        }
        if !(self.eval.tau > 0.0) {
            bail!(Config, "eval.tau must be positive");
        }
        Ok(())
    }

    pub fn data_dir(&self) -> PathBuf {
        self.data.dir.clone().unwrap_or_else(|| self.out.join("data"))
    }

    pub fn split_path(&self, split: Split) -> PathBuf {
        self.data_dir().join(format!("{}.vseq", split.name()))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.out.join("checkpoint.pnck")
    }

    /// Sequence length seen by the model.
    pub fn seq_len(&self) -> usize {
        self.data.scene.seq_len.div_ceil(self.fps_factor)
    }

    /// Extrapolation start frames after defaults are applied.
    pub fn t_starts(&self) -> Vec<usize> {
        if !self.eval.t_start.is_empty() {
            return self.eval.t_start.clone();
        }
        let t = self.seq_len();
        let mut v: Vec<usize> = [t / 4, t / 2, 3 * t / 4].iter().map(|&s| s.max(2)).filter(|&s| s < t).collect();
        v.dedup();
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [model]
        a_channels = [1, 4]
        r_channels = [4, 8]
        input_size = [32, 32]
    "#;

    #[test]
    fn defaults_fill_in() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.optimizer.learning_rate, 1e-3);
        assert_eq!(c.optimizer.batch_size, 8);
        assert_eq!(c.fps_factor, 1);
        assert_eq!(c.seq_len(), 20);
        assert_eq!(c.t_starts(), vec![5, 10, 15]);
        assert!(c.classifier.is_none());
        let again = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let bad = format!("{MINIMAL}\n[optimizer]\nlerning_rate = 1.0\n");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(crate::Error::Config(_))));
        let bad = format!("fps_factor = 0\n{MINIMAL}");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(crate::Error::Config(_))));
    }
}
