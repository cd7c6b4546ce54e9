mod common;

use common::{conv2d_loops, rng, uniform_tensor};
use prednet_lab::autograd::gradcheck::{grad_check, grad_check_f32, ScalarFn};
use prednet_lab::autograd::{softmax_values, Graph, Real, Tensor, Var};
use prednet_lab::error::Result;
use prednet_lab::nn::{self, ConvLstmSpec, ConvLstmState, ConvSpec};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn conv_f64(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>, spec: &ConvSpec) -> Vec<f64> {
    let mut g = Graph::<f64>::new();
    let (xv, wv, bv) = (g.constant(x.clone()).unwrap(), g.constant(w.clone()).unwrap(), g.constant(b.clone()).unwrap());
    let y = nn::conv2d(&mut g, xv, spec, wv, Some(bv)).unwrap();
    g.value(y).data().to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv2d_matches_nested_loops(
        c in 1usize..=4, co in 1usize..=4, h in 1usize..=8, w in 1usize..=8,
        k in prop::sample::select(vec![1usize, 3, 5]), seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let spec = ConvSpec::new(c, co).with_kernel(k);
        let x = uniform_tensor(&mut r, &[c, h, w], -1.0, 1.0);
        let wt = uniform_tensor(&mut r, &spec.weight_shape(), -1.0, 1.0);
        let b = uniform_tensor(&mut r, &[co], -1.0, 1.0);
        let got = conv_f64(&x, &wt, &b, &spec);
        let want = conv2d_loops(x.data(), c, h, w, wt.data(), co, k, Some(b.data()), 1);
        for (a, e) in got.iter().zip(&want) {
            prop_assert!((a - e).abs() < 1e-5, "{a} vs {e}");
        }

        // Single precision against the same oracle, at a looser bound.
        let mut g = Graph::<f32>::new();
        let xv = g.constant(x.cast()).unwrap();
        let wv = g.constant(wt.cast()).unwrap();
        let bv = g.constant(b.cast()).unwrap();
        let y = nn::conv2d(&mut g, xv, &spec, wv, Some(bv)).unwrap();
        for (a, e) in g.value(y).data().iter().zip(&want) {
            prop_assert!((*a as f64 - e).abs() < 1e-4);
        }
    }

    #[test]
    fn strided_conv2d_matches_nested_loops(
        c in 1usize..=4, co in 1usize..=4, h2 in 1usize..=4, w2 in 1usize..=4,
        k in prop::sample::select(vec![1usize, 3]), seed in any::<u64>(),
    ) {
        let (h, w) = (2 * h2, 2 * w2);
        let mut r = rng(seed);
        let spec = ConvSpec::new(c, co).with_kernel(k).with_stride(2);
        let x = uniform_tensor(&mut r, &[c, h, w], -1.0, 1.0);
        let wt = uniform_tensor(&mut r, &spec.weight_shape(), -1.0, 1.0);
        let b = uniform_tensor(&mut r, &[co], -1.0, 1.0);
        let got = conv_f64(&x, &wt, &b, &spec);
        let want = conv2d_loops(x.data(), c, h, w, wt.data(), co, k, Some(b.data()), 2);
        prop_assert_eq!(got.len(), want.len());
        for (a, e) in got.iter().zip(&want) {
            prop_assert!((a - e).abs() < 1e-5);
        }
    }

    #[test]
    fn conv2d_transpose_is_adjoint(
        c in 1usize..=4, co in 1usize..=4, h in 1usize..=4, w in 1usize..=4,
        k in prop::sample::select(vec![1usize, 3, 5]), seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        // Forward: [co, 2h, 2w] -> [c, h, w]; transpose maps back.
        let fwd = ConvSpec::new(co, c).with_kernel(k).with_stride(2);
        let tr = ConvSpec::new(c, co).with_kernel(k).with_stride(2);
        prop_assert_eq!(fwd.weight_shape(), tr.transpose_weight_shape());
        let wt = uniform_tensor(&mut r, &fwd.weight_shape(), -1.0, 1.0);
        let x = uniform_tensor(&mut r, &[co, 2 * h, 2 * w], -1.0, 1.0);
        let y = uniform_tensor(&mut r, &[c, h, w], -1.0, 1.0);
        let mut g = Graph::<f64>::new();
        let (xv, yv, wv) = (g.constant(x.clone()).unwrap(), g.constant(y.clone()).unwrap(), g.constant(wt).unwrap());
        let cx = nn::conv2d(&mut g, xv, &fwd, wv, None).unwrap();
        let ty = nn::conv2d_transpose(&mut g, yv, &tr, wv, None).unwrap();
        prop_assert_eq!(g.shape(ty), x.shape());
        let lhs = g.value(cx).dot_f64(&y).unwrap();
        let rhs = x.dot_f64(g.value(ty)).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-5 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn convlstm_hidden_is_bounded(
        ci in 1usize..=3, hc in 1usize..=3, h in 1usize..=6, w in 1usize..=6,
        scale in 0.1f64..20.0, seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let spec = ConvLstmSpec { input_channels: ci, hidden_channels: hc, kernel: 3 };
        let mut g = Graph::<f64>::new();
        let wt = g.constant(uniform_tensor(&mut r, &spec.gate_conv().weight_shape(), -scale, scale)).unwrap();
        let b = g.constant(uniform_tensor(&mut r, &[4 * hc], -scale, scale)).unwrap();
        let mut state = ConvLstmState::zeros(&mut g, hc, h, w);
        for _ in 0..3 {
            let x = g.constant(uniform_tensor(&mut r, &[ci, h, w], -scale, scale)).unwrap();
            state = nn::convlstm_step(&mut g, &spec, x, state, wt, b, None).unwrap();
            prop_assert!(g.value(state.hidden).data().iter().all(|v| v.abs() < 1.0));
            prop_assert_eq!(g.shape(state.hidden), g.shape(state.cell));
        }
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-15.0f64..15.0, 1..16)) {
        let p = softmax_values(&logits);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        prop_assert!(p.iter().all(|&v| v > 0.0 && v < 1.0 || logits.len() == 1));
    }

    /// Dyadic logits and integer shifts keep every subtraction exact, so
    /// max-subtraction must make the result bit-identical.
    #[test]
    fn softmax_shift_invariance_is_exact(
        ticks in prop::collection::vec(-400i32..400, 1..16), shift in -1000i32..1000,
    ) {
        let x: Vec<f32> = ticks.iter().map(|&t| t as f32 / 8.0).collect();
        let xs: Vec<f32> = x.iter().map(|&v| v + shift as f32).collect();
        let (a, b) = (softmax_values(&x), softmax_values(&xs));
        prop_assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn maxpool_undoes_upsample(c in 1usize..=3, h in 1usize..=5, w in 1usize..=5, seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = uniform_tensor(&mut r, &[c, h, w], 0.0, 1.0);
        let mut g = Graph::<f64>::new();
        let xv = g.constant(x.clone()).unwrap();
        let up = nn::upsample_nearest2(&mut g, xv).unwrap();
        let down = nn::maxpool2(&mut g, up).unwrap();
        prop_assert_eq!(g.value(down), &x);
    }
}

/// Which differentiable kernel a gradient check exercises. The scalar is
/// `Σ out ⊙ r` with a fixed pseudo-random `r`, so every output coordinate
/// contributes with a distinct weight.
#[derive(Clone, Copy, Debug)]
enum Kernel {
    Add,
    Sub,
    Mul,
    Relu,
    Sigmoid,
    Tanh,
    Scale,
    ClampMax,
    MaxPool,
    Upsample,
    Softmax,
    LogSoftmax,
    Concat,
    Slice,
    Mean,
    GlobalAvgPool,
    Affine,
    Conv,
    ConvTranspose,
}

const ALL: [Kernel; 19] = [
    Kernel::Add,
    Kernel::Sub,
    Kernel::Mul,
    Kernel::Relu,
    Kernel::Sigmoid,
    Kernel::Tanh,
    Kernel::Scale,
    Kernel::ClampMax,
    Kernel::MaxPool,
    Kernel::Upsample,
    Kernel::Softmax,
    Kernel::LogSoftmax,
    Kernel::Concat,
    Kernel::Slice,
    Kernel::Mean,
    Kernel::GlobalAvgPool,
    Kernel::Affine,
    Kernel::Conv,
    Kernel::ConvTranspose,
];

fn weighted_sum<T: Real>(g: &mut Graph<T>, y: Var) -> Result<Var> {
    let r = Tensor::from_fn(g.shape(y), |i| T::from_f64_lossy(((i * 37 + 11) % 17) as f64 / 17.0 - 0.4));
    let r = g.constant(r)?;
    let prod = g.mul(y, r)?;
    g.sum(prod)
}

impl ScalarFn for Kernel {
    fn eval<T: Real>(&self, g: &mut Graph<T>, v: &[Var]) -> Result<Var> {
        let y = match self {
            Kernel::Add => g.add(v[0], v[1])?,
            Kernel::Sub => g.sub(v[0], v[1])?,
            Kernel::Mul => g.mul(v[0], v[1])?,
            Kernel::Relu => g.relu(v[0])?,
            Kernel::Sigmoid => g.sigmoid(v[0])?,
            Kernel::Tanh => g.tanh(v[0])?,
            Kernel::Scale => g.scale(v[0], T::from_f64_lossy(-1.75))?,
            Kernel::ClampMax => g.clamp_max(v[0], T::from_f64_lossy(0.3))?,
            Kernel::MaxPool => nn::maxpool2(g, v[0])?,
            Kernel::Upsample => nn::upsample_nearest2(g, v[0])?,
            Kernel::Softmax => nn::softmax(g, v[0])?,
            Kernel::LogSoftmax => g.log_softmax(v[0])?,
            Kernel::Concat => g.concat(&[v[0], v[1]])?,
            Kernel::Slice => g.slice(v[0], 1, 2)?,
            Kernel::Mean => g.mean(v[0])?,
            Kernel::GlobalAvgPool => g.global_avg_pool(v[0])?,
            Kernel::Affine => g.affine(v[0], v[1], v[2])?,
            Kernel::Conv => {
                let spec = ConvSpec::new(2, 3);
                nn::conv2d(g, v[0], &spec, v[1], Some(v[2]))?
            }
            Kernel::ConvTranspose => {
                let spec = ConvSpec::new(2, 3).with_stride(2);
                nn::conv2d_transpose(g, v[0], &spec, v[1], Some(v[2]))?
            }
        };
        weighted_sum(g, y)
    }
}

/// Inputs of at most 64 entries, kept away from kinks: magnitudes ≥ 0.05,
/// pooling windows without near-ties, nothing within 0.05 of the clamp.
fn inputs(kernel: Kernel, seed: u64) -> Vec<Tensor<f64>> {
    let mut r = rng(seed);
    let mut away = |shape: &[usize]| {
        Tensor::from_fn(shape, |_| {
            let m = r.gen_range(0.05..1.5);
            if r.gen_bool(0.5) { m } else { -m }
        })
    };
    match kernel {
        Kernel::Add | Kernel::Sub | Kernel::Mul => vec![away(&[2, 3, 4]), away(&[2, 3, 4])],
        Kernel::Concat => vec![away(&[2, 3, 3]), away(&[1, 3, 3])],
        Kernel::Slice => vec![away(&[4, 2, 3])],
        Kernel::Upsample | Kernel::GlobalAvgPool | Kernel::Mean => vec![away(&[2, 3, 3])],
        Kernel::Softmax | Kernel::LogSoftmax => vec![away(&[8])],
        Kernel::ClampMax => {
            let t = away(&[40]);
            vec![t.map(|x| if (x - 0.3).abs() < 0.05 { x + 0.1 } else { x })]
        }
        Kernel::MaxPool => {
            let mut ranks: Vec<usize> = (0..32).collect();
            ranks.shuffle(&mut r);
            vec![Tensor::from_fn(&[2, 4, 4], |i| ranks[i] as f64 * 0.05 - 0.8)]
        }
        Kernel::Affine => vec![away(&[3, 5]), away(&[5]), away(&[3])],
        Kernel::Conv => vec![away(&[2, 4, 4]), away(&[3, 2, 3, 3]), away(&[3])],
        Kernel::ConvTranspose => vec![away(&[2, 2, 2]), away(&[2, 3, 3, 3]), away(&[3])],
        _ => vec![away(&[48])],
    }
}

#[test]
fn every_kernel_passes_single_precision_gradient_check() {
    for kernel in ALL {
        for seed in 0..5 {
            let x: Vec<Tensor<f32>> = inputs(kernel, seed).iter().map(Tensor::cast).collect();
            assert!(x.iter().map(Tensor::len).sum::<usize>() <= 64 || matches!(kernel, Kernel::Conv | Kernel::ConvTranspose | Kernel::Affine));
            let err = grad_check_f32(&kernel, &x, 1e-4).unwrap();
            assert!(err < 1e-3, "{kernel:?} seed {seed}: relative error {err:.3e}");
        }
    }
}

#[test]
fn every_kernel_passes_double_precision_gradient_check() {
    for kernel in ALL {
        for seed in 0..5 {
            let err = grad_check(&kernel, &inputs(kernel, seed), 1e-4).unwrap();
            assert!(err < 1e-5, "{kernel:?} seed {seed}: relative error {err:.3e}");
        }
    }
}

#[test]
fn gradient_check_examples() {
    struct Square;
    impl ScalarFn for Square {
        fn eval<T: Real>(&self, g: &mut Graph<T>, v: &[Var]) -> Result<Var> {
            let sq = g.mul(v[0], v[0])?;
            g.sum(sq)
        }
    }
    struct SigmoidSum;
    impl ScalarFn for SigmoidSum {
        fn eval<T: Real>(&self, g: &mut Graph<T>, v: &[Var]) -> Result<Var> {
            let s = g.sigmoid(v[0])?;
            g.sum(s)
        }
    }
    struct Constant;
    impl ScalarFn for Constant {
        fn eval<T: Real>(&self, g: &mut Graph<T>, v: &[Var]) -> Result<Var> {
            let z = g.scale(v[0], T::zero())?;
            g.sum(z)
        }
    }
    let mut r = rng(7);
    let x = uniform_tensor(&mut r, &[16], -2.0, 2.0);
    assert!(grad_check(&Square, &[x.clone()], 1e-4).unwrap() < 1e-6);
    assert!(grad_check(&SigmoidSum, &[x.clone()], 1e-4).unwrap() < 1e-5);
    assert_eq!(grad_check(&Constant, &[x], 1e-4).unwrap(), 0.0);
}
