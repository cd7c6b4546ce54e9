mod common;

use common::{box_blur, rng, ssim_dense, uniform_tensor};
use prednet_lab::autograd::Tensor;
use prednet_lab::datagen::{gen_sequence, GlyphSet, SceneSpec};
use prednet_lab::metrics::{
    self, baseline_copy, conditioned_ssim, mae, movement_mask, psnr, sharpness, ssim, MetricsReport, SequenceReport, Summary,
    PSNR_CAP_DB,
};
use prednet_lab::Error;
use proptest::prelude::*;

fn image(seed: u64, h: usize, w: usize) -> Tensor<f64> {
    uniform_tensor(&mut rng(seed), &[1, h, w], 0.0, 1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn ssim_matches_dense_window_oracle(h in 11usize..20, w in 11usize..20, seed in any::<u64>(), mix in 0.0f64..1.0) {
        let a = image(seed, h, w);
        let noise = image(seed ^ 1, h, w);
        // Partially correlated pairs cover the whole score range.
        let b = Tensor::new(a.shape(), a.data().iter().zip(noise.data()).map(|(x, n)| (1.0 - mix) * x + mix * n).collect()).unwrap();
        let got = ssim(&a, &b).unwrap();
        let want = ssim_dense(a.data(), b.data(), h, w);
        prop_assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }

    #[test]
    fn identity_and_symmetry(h in 11usize..16, w in 11usize..16, seed in any::<u64>()) {
        let (a, b) = (image(seed, h, w), image(seed.wrapping_add(1), h, w));
        let s = ssim(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert_eq!(s, ssim(&b, &a).unwrap());
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
        prop_assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
        prop_assert_eq!(mae(&a, &a).unwrap(), 0.0);
        prop_assert_eq!(mae(&a, &b).unwrap(), mae(&b, &a).unwrap());
        prop_assert!(mae(&a, &b).unwrap() >= 0.0);
    }

    #[test]
    fn copying_a_still_frame_earns_nothing(h in 11usize..16, w in 11usize..16, seed in any::<u64>()) {
        let a = image(seed, h, w);
        prop_assert!(conditioned_ssim(&a, &a, &a).unwrap().abs() < 1e-9);
    }

    #[test]
    fn conditioned_ssim_is_the_product(h in 11usize..14, seed in any::<u64>()) {
        let (p, a, q) = (image(seed, h, h), image(seed ^ 3, h, h), image(seed ^ 5, h, h));
        let want = (1.0 - ssim(&p, &q).unwrap()) * ssim(&a, &q).unwrap();
        prop_assert!((conditioned_ssim(&p, &a, &q).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn blurring_noise_lowers_sharpness(h in 4usize..16, w in 4usize..16, seed in any::<u64>()) {
        let a = image(seed, h, w);
        let blurred = Tensor::new(a.shape(), box_blur(a.data(), h, w)).unwrap();
        prop_assert!(sharpness(&blurred).unwrap() < sharpness(&a).unwrap());
    }
}

#[test]
fn psnr_goldens() {
    let a = Tensor::<f64>::full(&[1, 8, 8], 0.2);
    let b = Tensor::<f64>::full(&[1, 8, 8], 0.3);
    assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    let zero = Tensor::<f64>::zeros(&[1, 8, 8]);
    let one = Tensor::<f64>::full(&[1, 8, 8], 1.0);
    assert_eq!(psnr(&zero, &one).unwrap(), 0.0);
    assert!((mae(&a, &b).unwrap() - 0.1).abs() < 1e-12);
    assert!(matches!(mae(&a, &Tensor::zeros(&[1, 4, 4])), Err(Error::Dimension(_))));
}

#[test]
fn ssim_rejects_images_smaller_than_the_window() {
    let a = Tensor::<f64>::zeros(&[1, 10, 12]);
    assert!(matches!(ssim(&a, &a), Err(Error::Dimension(_))));
}

#[test]
fn sharpness_examples() {
    assert_eq!(sharpness(&Tensor::<f64>::full(&[1, 6, 6], 0.4)).unwrap(), 0.0);
    let mut impulse = Tensor::<f64>::zeros(&[1, 6, 6]);
    impulse.data_mut()[2 * 6 + 3] = 1.0;
    assert!(sharpness(&impulse).unwrap() > 0.0);
}

#[test]
fn movement_mask_examples() {
    let still = Tensor::<f64>::full(&[5, 1, 4, 4], 0.3);
    assert!(movement_mask(&still, 0.01).unwrap().is_empty());
    let ramp = Tensor::<f64>::from_fn(&[5, 1, 4, 4], |i| (i / 16) as f64 * 0.1);
    assert_eq!(movement_mask(&ramp, 0.01).unwrap(), vec![1, 2, 3, 4]);

    let spec = SceneSpec {
        seq_len: 8,
        ..SceneSpec::default()
    };
    let s = gen_sequence(2, &spec, &GlyphSet::builtin(spec.glyph_size)).unwrap();
    assert!(!movement_mask(&s.frames, metrics::DEFAULT_TAU).unwrap().is_empty());
}

#[test]
fn copy_baseline_on_still_sequences() {
    let spec = SceneSpec {
        speed: 0,
        seq_len: 6,
        ..SceneSpec::default()
    };
    let s = gen_sequence(4, &spec, &GlyphSet::builtin(spec.glyph_size)).unwrap();
    let copy = baseline_copy(&s.frames).unwrap();
    let rep = SequenceReport::new(0, &s.frames, &copy, metrics::DEFAULT_TAU).unwrap();
    let model = Summary::of(&rep.model);
    assert_eq!(model.mae, 0.0);
    assert!(model.ssim_cond.abs() < 1e-9);
    // No movement frames: movement aggregates are absent, not zero.
    assert_eq!(model.psnr_movement, None);
    assert_eq!(model.ssim_movement, None);
    // The copy baseline compared with itself.
    assert!(rep.deltas().iter().flatten().all(|&d| d == 0.0));
}

#[test]
fn aggregates_are_frame_means_and_deltas_are_per_sequence() {
    let spec = SceneSpec {
        seq_len: 6,
        ..SceneSpec::default()
    };
    let glyphs = GlyphSet::builtin(spec.glyph_size);
    let mut report = MetricsReport::default();
    let mut frame_maes = Vec::new();
    let mut seq_deltas = Vec::new();
    for i in 0..4 {
        let s = gen_sequence(100 + i, &spec, &glyphs).unwrap();
        // A deliberately poor model: the previous frame dimmed by 10%.
        let pred = baseline_copy(&s.frames).unwrap().map(|v| v * 0.9);
        for t in 1..s.len() {
            frame_maes.push(mae(&s.frames.index0(t).unwrap(), &pred.index0(t).unwrap()).unwrap());
        }
        let rep = SequenceReport::new(i as usize, &s.frames, &pred, metrics::DEFAULT_TAU).unwrap();
        seq_deltas.push(Summary::of(&rep.model).mae - Summary::of(&rep.copy).mae);
        report.push(rep);
    }
    let want = frame_maes.iter().sum::<f64>() / frame_maes.len() as f64;
    assert!((report.aggregate().mae - want).abs() < 1e-12);
    let delta = report.mean_deltas()[0].unwrap();
    assert!((delta - seq_deltas.iter().sum::<f64>() / 4.0).abs() < 1e-12);
    assert!(delta > 0.0);
    let csv = report.to_csv();
    assert_eq!(csv.lines().count(), 1 + 4 + 1);
}
