//! Experiment pipelines: data generation, training, evaluation,
//! extrapolation and probing, all driven by an [`ExperimentConfig`].

mod config;
pub mod eval;
pub mod image;
pub mod train;

use std::fs;

pub use config::{DataConfig, EvalConfig, ExperimentConfig, OptimizerConfig, Split};
pub use eval::{evaluate, extrapolate, probe};
pub use train::{train, Arch};

use crate::autograd::Tensor;
use crate::datagen::{self, derive_seed, LabeledSequence};
use crate::error::{bail, Result};

/// Keeps frames `0, factor, 2*factor, ...` and their labels.
pub fn subsample_fps(seq: &LabeledSequence, factor: usize) -> Result<LabeledSequence> {
    let t_len = seq.len();
    if factor == 0 || factor > t_len {
        bail!(Contract, "fps factor {factor} outside [1, {t_len}]");
    }
    if factor == 1 {
        return Ok(seq.clone());
    }
    let keep: Vec<usize> = (0..t_len).step_by(factor).collect();
    let frames = keep.iter().map(|&t| seq.frames.index0(t)).collect::<Result<Vec<_>>>()?;
    Ok(LabeledSequence {
        frames: Tensor::stack(&frames)?,
        labels: keep.iter().map(|&t| seq.labels[t]).collect(),
        meta: seq.meta,
    })
}

/// Seed of a split's dataset.
pub fn split_seed(seed: u64, split: Split) -> u64 {
    let k = match split {
        Split::Train => 0,
        Split::Val => 1,
        Split::Test => 2,
    };
    derive_seed(seed, (1 << 40) + k)
}

pub fn split_size(cfg: &ExperimentConfig, split: Split) -> usize {
    match split {
        Split::Train => cfg.data.num_train,
        Split::Val => cfg.data.num_val,
        Split::Test => cfg.data.num_test,
    }
}

/// Generates every split in memory (before frame-rate subsampling).
pub fn generate_split(cfg: &ExperimentConfig, split: Split) -> Result<Vec<LabeledSequence>> {
    let glyphs = match &cfg.data.glyphs {
        Some(p) => datagen::load_digits_idx(p, cfg.data.scene.glyph_size)?,
        None => datagen::GlyphSet::builtin(cfg.data.scene.glyph_size),
    };
    datagen::gen_dataset(split_seed(cfg.seed, split), &cfg.data.scene, &glyphs, split_size(cfg, split))
}

/// Writes the three `VSEQ` splits and `class_balance.csv` to the data dir.
pub fn generate_data(cfg: &ExperimentConfig) -> Result<()> {
    let dir = cfg.data_dir();
    fs::create_dir_all(&dir)?;
    let mut all = Vec::new();
    for split in Split::ALL {
        let seqs = generate_split(cfg, split)?;
        datagen::write_vseq(&seqs, cfg.split_path(split))?;
        log::info!("wrote {} {} sequences", seqs.len(), split.name());
        all.extend(seqs);
    }
    fs::write(dir.join("class_balance.csv"), datagen::class_balance_csv(&all))?;
    Ok(())
}

/// Reads a split, applies the frame-rate factor and checks the frame shape.
pub fn load_split(cfg: &ExperimentConfig, split: Split) -> Result<Vec<LabeledSequence>> {
    let path = cfg.split_path(split);
    if !path.exists() {
        bail!(Config, "dataset {} does not exist (run datagen first)", path.display());
    }
    let seqs = datagen::read_vseq(&path)?;
    let [h, w] = cfg.model.input_size;
    let want = [cfg.model.a_channels[0], h, w];
    seqs.iter()
        .map(|s| {
            if s.frames.shape()[1..] != want {
                bail!(Format, "{} holds frames {:?}, model expects {want:?}", path.display(), &s.frames.shape()[1..]);
            }
            subsample_fps(s, cfg.fps_factor)
        })
        .collect()
}
