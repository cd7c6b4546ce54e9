use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

/// Which layers' errors enter the training objective.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossMode {
    /// Lowest layer only.
    L0,
    /// All layers, upper ones down-weighted to 0.1.
    Lall,
}

/// Weight of every layer above the first in [`LossMode::Lall`].
pub const LALL_UPPER_WEIGHT: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredNetConfig {
    /// Channels of the A / Â units per layer; entry 0 is the frame's channel count.
    pub a_channels: Vec<usize>,
    /// Channels of the R units per layer.
    pub r_channels: Vec<usize>,
    #[serde(default = "default_loss_mode")]
    pub loss_mode: LossMode,
    /// Frame height and width.
    pub input_size: [usize; 2],
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    #[serde(default = "default_pixel_max")]
    pub pixel_max: f64,
}

fn default_loss_mode() -> LossMode {
    LossMode::L0
}

fn default_kernel() -> usize {
    3
}

fn default_pixel_max() -> f64 {
    1.0
}

impl PredNetConfig {
    /// Channel widths doubling per layer from `base` (R units) with A units
    /// at half the R width above the input layer.
    pub fn doubling(num_layers: usize, input_channels: usize, base: usize, input_size: [usize; 2]) -> Self {
        let r_channels: Vec<usize> = (0..num_layers).map(|l| base << l).collect();
        let a_channels = (0..num_layers)
            .map(|l| if l == 0 { input_channels } else { r_channels[l] / 2 })
            .collect();
        Self {
            a_channels,
            r_channels,
            loss_mode: LossMode::L0,
            input_size,
            kernel: 3,
            pixel_max: 1.0,
        }
    }

    pub fn num_layers(&self) -> usize {
        self.a_channels.len()
    }

    pub fn with_loss_mode(mut self, mode: LossMode) -> Self {
        self.loss_mode = mode;
        self
    }

    /// λ per layer.
    pub fn layer_weights(&self) -> Vec<f64> {
        (0..self.num_layers())
            .map(|l| match (self.loss_mode, l) {
                (_, 0) => 1.0,
                (LossMode::L0, _) => 0.0,
                (LossMode::Lall, _) => LALL_UPPER_WEIGHT,
            })
            .collect()
    }

    /// μ per time step: zero at t = 0, `1/(T-1)` afterwards.
    pub fn time_weights(&self, t_len: usize) -> Vec<f64> {
        (0..t_len)
            .map(|t| if t == 0 { 0.0 } else { 1.0 / (t_len - 1) as f64 })
            .collect()
    }

    /// Extents of layer `l`.
    pub fn layer_size(&self, l: usize) -> (usize, usize) {
        (self.input_size[0] >> l, self.input_size[1] >> l)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_layers();
        if n == 0 {
            bail!(Config, "at least one layer is required");
        }
        if self.r_channels.len() != n {
            bail!(
                Config,
                "a_channels has {n} entries but r_channels has {}",
                self.r_channels.len()
            );
        }
        if self.a_channels.iter().chain(&self.r_channels).any(|&c| c == 0) {
            bail!(Config, "channel counts must be positive");
        }
        if self.kernel % 2 == 0 {
            bail!(Config, "kernel size must be odd, got {}", self.kernel);
        }
        if !(self.pixel_max > 0.0) {
            bail!(Config, "pixel_max must be positive");
        }
        let div = 1usize << (n - 1);
        let [h, w] = self.input_size;
        if h == 0 || w == 0 || h % div != 0 || w % div != 0 {
            bail!(
                Config,
                "input size {h}x{w} is not divisible by 2^{} = {div}",
                n - 1
            );
        }
        Ok(())
    }
}
