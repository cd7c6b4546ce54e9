//! Differentiable structured kernels: convolution, transposed convolution,
//! pooling, upsampling, the ConvLSTM cell and softmax.

pub mod init;
pub mod kernels;

use crate::autograd::{Graph, Real, Var};
use crate::error::{bail, Result};
use kernels::Geometry;

/// Square-kernel convolution hyperparameters with "same" padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvSpec {
    pub fn new(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel: 3,
            stride: 1,
        }
    }

    pub fn with_kernel(mut self, kernel: usize) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    /// Halo size that preserves extents at stride 1.
    pub fn padding(&self) -> usize {
        self.kernel / 2
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        [self.out_channels, self.in_channels, self.kernel, self.kernel]
    }

    /// Weight layout for the transposed direction: `[in, out, k, k]`.
    pub fn transpose_weight_shape(&self) -> [usize; 4] {
        [self.in_channels, self.out_channels, self.kernel, self.kernel]
    }

    fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            bail!(Dimension, "channel counts must be positive: {self:?}");
        }
        if self.kernel % 2 == 0 {
            bail!(Dimension, "kernel must be odd for same padding, got {}", self.kernel);
        }
        if !(1..=2).contains(&self.stride) {
            bail!(Dimension, "stride must be 1 or 2, got {}", self.stride);
        }
        Ok(())
    }
}

fn check_weights<T: Real>(g: &Graph<T>, w: Var, b: Option<Var>, shape: [usize; 4], bias_len: usize) -> Result<()> {
    if g.shape(w) != shape {
        bail!(Dimension, "weight shape {:?}, expected {shape:?}", g.shape(w));
    }
    if let Some(b) = b {
        if g.shape(b) != [bias_len] {
            bail!(Dimension, "bias shape {:?}, expected [{bias_len}]", g.shape(b));
        }
    }
    Ok(())
}

/// Cross-correlation with "same" padding: `[C, H, W] -> [C', H/s, W/s]`.
pub fn conv2d<T: Real>(g: &mut Graph<T>, input: Var, spec: &ConvSpec, weight: Var, bias: Option<Var>) -> Result<Var> {
    spec.validate()?;
    let (c, h, w) = g.value(input).dims3()?;
    if c != spec.in_channels {
        bail!(Dimension, "conv2d expects {} input channels, got {c}", spec.in_channels);
    }
    if spec.stride == 2 && (h % 2 != 0 || w % 2 != 0) {
        bail!(Dimension, "stride-2 conv2d needs even extents, got {h}x{w}");
    }
    check_weights(g, weight, bias, spec.weight_shape(), spec.out_channels)?;
    let geom = Geometry {
        a: spec.out_channels,
        b: spec.in_channels,
        k: spec.kernel,
        stride: spec.stride,
        pad: spec.padding(),
        h,
        w,
    };
    g.conv_raw(input, weight, bias, geom, false)
}

/// Adjoint of the strided [`conv2d`]: zero insertion followed by "same"
/// correlation, `[C, H, W] -> [C', s*H, s*W]`. Weights are `[C, C', k, k]`.
pub fn conv2d_transpose<T: Real>(
    g: &mut Graph<T>,
    input: Var,
    spec: &ConvSpec,
    weight: Var,
    bias: Option<Var>,
) -> Result<Var> {
    spec.validate()?;
    let (c, h, w) = g.value(input).dims3()?;
    if c != spec.in_channels {
        bail!(Dimension, "conv2d_transpose expects {} input channels, got {c}", spec.in_channels);
    }
    check_weights(g, weight, bias, spec.transpose_weight_shape(), spec.out_channels)?;
    let geom = Geometry {
        a: spec.in_channels,
        b: spec.out_channels,
        k: spec.kernel,
        stride: spec.stride,
        pad: spec.padding(),
        h: h * spec.stride,
        w: w * spec.stride,
    };
    debug_assert_eq!((geom.out_h(), geom.out_w()), (h, w));
    g.conv_raw(input, weight, bias, geom, true)
}

/// 2x2 max pooling; ties route the gradient to the first element in
/// row-major order.
pub fn maxpool2<T: Real>(g: &mut Graph<T>, input: Var) -> Result<Var> {
    g.maxpool_raw(input)
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample_nearest2<T: Real>(g: &mut Graph<T>, input: Var) -> Result<Var> {
    g.upsample_raw(input)
}

/// Stable softmax over a vector.
pub fn softmax<T: Real>(g: &mut Graph<T>, logits: Var) -> Result<Var> {
    g.softmax(logits)
}

/// Recurrent state of a ConvLSTM cell.
#[derive(Clone, Copy, Debug)]
pub struct ConvLstmState {
    pub hidden: Var,
    pub cell: Var,
}

impl ConvLstmState {
    pub fn zeros<T: Real>(g: &mut Graph<T>, channels: usize, h: usize, w: usize) -> Self {
        let hidden = g.zeros(&[channels, h, w]);
        let cell = g.zeros(&[channels, h, w]);
        Self { hidden, cell }
    }
}

/// Shape of a ConvLSTM cell whose gates are one convolution over
/// `concat[x, hidden]` producing `[i, f, o, g]` blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvLstmSpec {
    pub input_channels: usize,
    pub hidden_channels: usize,
    pub kernel: usize,
}

impl ConvLstmSpec {
    pub fn gate_conv(&self) -> ConvSpec {
        ConvSpec::new(self.input_channels + self.hidden_channels, 4 * self.hidden_channels)
            .with_kernel(self.kernel)
    }
}

/// One gated update. `extra_gates`, when given, is added to the gate
/// pre-activations (an additional input group with its own weights).
pub fn convlstm_step<T: Real>(
    g: &mut Graph<T>,
    spec: &ConvLstmSpec,
    x: Var,
    state: ConvLstmState,
    weight: Var,
    bias: Var,
    extra_gates: Option<Var>,
) -> Result<ConvLstmState> {
    let (_, xh, xw) = g.value(x).dims3()?;
    let (hc, sh, sw) = g.value(state.hidden).dims3()?;
    if (xh, xw) != (sh, sw) || hc != spec.hidden_channels || g.shape(state.cell) != g.shape(state.hidden) {
        bail!(
            Dimension,
            "convlstm: input {:?}, hidden {:?}, cell {:?}",
            g.shape(x),
            g.shape(state.hidden),
            g.shape(state.cell)
        );
    }
    let joined = g.concat(&[x, state.hidden])?;
    let mut gates = conv2d(g, joined, &spec.gate_conv(), weight, Some(bias))?;
    if let Some(extra) = extra_gates {
        gates = g.add(gates, extra)?;
    }
    let n = spec.hidden_channels;
    let i = g.slice(gates, 0, n)?;
    let f = g.slice(gates, n, n)?;
    let o = g.slice(gates, 2 * n, n)?;
    let c = g.slice(gates, 3 * n, n)?;
    let i = g.sigmoid(i)?;
    let f = g.sigmoid(f)?;
    let o = g.sigmoid(o)?;
    let c = g.tanh(c)?;
    let keep = g.mul(f, state.cell)?;
    let write = g.mul(i, c)?;
    let cell = g.add(keep, write)?;
    let squashed = g.tanh(cell)?;
    let hidden = g.mul(o, squashed)?;
    Ok(ConvLstmState { hidden, cell })
}
