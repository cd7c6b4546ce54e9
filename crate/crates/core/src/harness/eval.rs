use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::config::{ExperimentConfig, Split};
use super::image::{self, Grid};
use super::load_split;
use super::train::Arch;
use crate::autograd::{ParamStore, Tensor};
use crate::datagen::LabeledSequence;
use crate::error::{bail, Result};
use crate::metrics::{self, MetricsReport, SequenceReport, SUMMARY_FIELDS};
use crate::prednet::{RolloutMode, RolloutTrace};

/// Aggregated classification results (PredNet+ only).
#[derive(Clone, Debug, PartialEq)]
pub struct ClassReport {
    /// `(sequence, label, top-1 guess, label within top 5)`.
    pub rows: Vec<(usize, usize, usize, bool)>,
}

impl ClassReport {
    pub fn top1(&self) -> f64 {
        self.rows.iter().filter(|r| r.1 == r.2).count() as f64 / self.rows.len().max(1) as f64
    }

    pub fn top5(&self) -> f64 {
        self.rows.iter().filter(|r| r.3).count() as f64 / self.rows.len().max(1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("sequence,label,top1,in_top5\n");
        for &(i, l, p, hit) in &self.rows {
            let _ = writeln!(s, "{i},{l},{p},{}", hit as u8);
        }
        let _ = writeln!(s, "# top1_accuracy={:.6} top5_accuracy={:.6}", self.top1(), self.top5());
        s
    }
}

pub struct EvalOutcome {
    pub report: MetricsReport,
    pub classes: Option<ClassReport>,
}

/// Open-loop evaluation of every sequence, in order.
pub fn evaluate_sequences(arch: &Arch, params: &ParamStore<f32>, seqs: &[LabeledSequence], tau: f64) -> Result<EvalOutcome> {
    let mut report = MetricsReport::default();
    let mut rows = Vec::new();
    for (i, s) in seqs.iter().enumerate() {
        let (trace, cls) = arch.rollout(params, &s.frames, RolloutMode::OpenLoop)?;
        report.push(SequenceReport::new(i, &s.frames, &trace.predictions, tau)?);
        if let Some(cls) = cls {
            let label = s.final_label();
            rows.push((i, label, cls.top_k(1)[0], cls.top_k(5).contains(&label)));
        }
    }
    let classes = matches!(arch, Arch::Plus(_)).then_some(ClassReport { rows });
    Ok(EvalOutcome { report, classes })
}

/// `metric,model,copy,mean_delta` rows of a report.
pub fn summary_csv(report: &MetricsReport) -> String {
    let cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.9e}"));
    let (m, c, d) = (report.aggregate().values(), report.aggregate_copy().values(), report.mean_deltas());
    let mut s = String::from("metric,model,copy,mean_delta\n");
    for (i, f) in SUMMARY_FIELDS.iter().enumerate() {
        let _ = writeln!(s, "{f},{},{},{}", cell(m[i]), cell(c[i]), cell(d[i]));
    }
    s
}

fn test_set(cfg: &ExperimentConfig) -> Result<Vec<LabeledSequence>> {
    let mut seqs = load_split(cfg, Split::Test)?;
    if let Some(n) = cfg.eval.max_sequences {
        seqs.truncate(n);
    }
    Ok(seqs)
}

fn load_model(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<(Arch, ParamStore<f32>)> {
    let arch = Arch::from_config(cfg)?;
    let path = checkpoint.map_or_else(|| cfg.checkpoint_path(), Path::to_path_buf);
    let params = arch.load_checkpoint(&path)?;
    Ok((arch, params))
}

/// Writes `metrics.csv`, `eval_summary.csv` and, for PredNet+,
/// `classification.csv`.
pub fn evaluate(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<EvalOutcome> {
    let (arch, params) = load_model(cfg, checkpoint)?;
    let seqs = test_set(cfg)?;
    let out = evaluate_sequences(&arch, &params, &seqs, cfg.eval.tau)?;
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("metrics.csv"), out.report.to_csv())?;
    fs::write(cfg.out.join("eval_summary.csv"), summary_csv(&out.report))?;
    if let Some(c) = &out.classes {
        fs::write(cfg.out.join("classification.csv"), c.to_csv())?;
    }
    Ok(out)
}

/// Mean scores of closed-loop step `step` (frame `t_start + step`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtrapolationRow {
    pub t_start: usize,
    pub step: usize,
    pub mae: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub sharpness: f64,
    /// MAE of holding the last observed frame.
    pub hold_mae: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExtrapolationReport {
    pub rows: Vec<ExtrapolationRow>,
}

impl ExtrapolationReport {
    pub fn for_start(&self, t_start: usize) -> Vec<ExtrapolationRow> {
        self.rows.iter().filter(|r| r.t_start == t_start).copied().collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t_start,step,t,mae,psnr,ssim,sharpness,hold_mae\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}",
                r.t_start,
                r.step,
                r.t_start + r.step,
                r.mae,
                r.psnr,
                r.ssim,
                r.sharpness,
                r.hold_mae
            );
        }
        s
    }
}

/// Closed-loop rollouts from each start; frames of the first `dump`
/// sequences go to `dump_dir` when given.
pub fn extrapolate_sequences(
    arch: &Arch,
    params: &ParamStore<f32>,
    seqs: &[LabeledSequence],
    t_starts: &[usize],
    steps: Option<usize>,
    dump: usize,
    dump_dir: Option<&Path>,
) -> Result<ExtrapolationReport> {
    let Some(first) = seqs.first() else {
        return Ok(ExtrapolationReport::default());
    };
    let t_len = first.len();
    let mut report = ExtrapolationReport::default();
    for &t_start in t_starts {
        if t_start < 2 || t_start >= t_len {
            bail!(Contract, "extrapolation start {t_start} outside [2, {t_len})");
        }
        let n = steps.unwrap_or(t_len - t_start);
        if n == 0 || t_start + n > t_len {
            bail!(Contract, "{n} steps from frame {t_start} overrun a {t_len}-frame sequence");
        }
        let mut sums = vec![[0.0f64; 5]; n];
        for (i, s) in seqs.iter().enumerate() {
            let (trace, _) = arch.rollout(params, &s.frames, RolloutMode::ClosedLoop { t_start })?;
            let held = s.frames.index0(t_start - 1)?;
            for (k, acc) in sums.iter_mut().enumerate() {
                let t = t_start + k;
                let (truth, pred) = (s.frames.index0(t)?, trace.predictions.index0(t)?);
                acc[0] += metrics::mae(&truth, &pred)?;
                acc[1] += metrics::psnr(&truth, &pred)?;
                acc[2] += metrics::ssim(&truth, &pred)?;
                acc[3] += metrics::sharpness(&pred)?;
                acc[4] += metrics::mae(&truth, &held)?;
                if let Some(dir) = dump_dir.filter(|_| i < dump) {
                    write_frame(&dir.join(format!("extrap_seq{i:03}_tstart{t_start:02}_t{t:02}_pred.pgm")), &pred)?;
                    write_frame(&dir.join(format!("extrap_seq{i:03}_tstart{t_start:02}_t{t:02}_true.pgm")), &truth)?;
                }
            }
        }
        let m = seqs.len() as f64;
        for (step, acc) in sums.iter().enumerate() {
            report.rows.push(ExtrapolationRow {
                t_start,
                step,
                mae: acc[0] / m,
                psnr: acc[1] / m,
                ssim: acc[2] / m,
                sharpness: acc[3] / m,
                hold_mae: acc[4] / m,
            });
        }
    }
    Ok(report)
}

fn write_frame(path: &Path, frame: &Tensor<f32>) -> Result<()> {
    let (_, h, w) = frame.dims3()?;
    image::write_pgm(path, w, h, &channel_mean(frame)?)
}

/// Channel average of a `[C, H, W]` map.
pub fn channel_mean(t: &Tensor<f32>) -> Result<Vec<f64>> {
    let (c, h, w) = t.dims3()?;
    let mut out = vec![0.0; h * w];
    for ch in 0..c {
        for (o, v) in out.iter_mut().zip(&t.data()[ch * h * w..(ch + 1) * h * w]) {
            *o += *v as f64 / c as f64;
        }
    }
    Ok(out)
}

/// Writes `extrapolation.csv` and the PGM dumps under `<out>/frames`.
pub fn extrapolate(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<ExtrapolationReport> {
    let (arch, params) = load_model(cfg, checkpoint)?;
    let seqs = test_set(cfg)?;
    let dir = cfg.out.join("frames");
    fs::create_dir_all(&dir)?;
    let report = extrapolate_sequences(&arch, &params, &seqs, &cfg.t_starts(), cfg.eval.steps, cfg.eval.dump, Some(&dir))?;
    fs::write(cfg.out.join("extrapolation.csv"), report.to_csv())?;
    Ok(report)
}

/// Per-sequence diagnostics of a probe.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeSummary {
    pub sequence: usize,
    /// Time-averaged mean |E_l| per layer.
    pub layer_errors: Vec<f64>,
    /// Whether `layer_errors` is non-decreasing in `l`.
    pub error_nondecreasing: bool,
    /// Correlation over time of mean |R_0| with the mean |R| of the layers above.
    pub r0_vs_upper: Option<f64>,
    /// Mean pairwise correlation of the layers above the first.
    pub upper_pairwise: Option<f64>,
}

pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    let d = (va * vb).sqrt();
    (d > 0.0).then(|| cov / d)
}

pub fn summarize_trace(sequence: usize, trace: &RolloutTrace<f32>) -> ProbeSummary {
    let layer_errors = trace.layer_error_means();
    let error_nondecreasing = layer_errors.windows(2).all(|w| w[1] >= w[0]);
    let n = trace.num_layers();
    let series = |l: usize| -> Vec<f64> { trace.mean_abs_r.iter().map(|row| row[l]).collect() };
    let (r0_vs_upper, upper_pairwise) = if n >= 2 {
        let upper: Vec<f64> = trace.mean_abs_r.iter().map(|row| row[1..].iter().sum::<f64>() / (n - 1) as f64).collect();
        let mut pairs = Vec::new();
        for i in 1..n {
            for j in i + 1..n {
                if let Some(c) = pearson(&series(i), &series(j)) {
                    pairs.push(c);
                }
            }
        }
        let pairwise = (!pairs.is_empty()).then(|| pairs.iter().sum::<f64>() / pairs.len() as f64);
        (pearson(&series(0), &upper), pairwise)
    } else {
        (None, None)
    };
    ProbeSummary {
        sequence,
        layer_errors,
        error_nondecreasing,
        r0_vs_upper,
        upper_pairwise,
    }
}

pub fn probe_summary_csv(rows: &[ProbeSummary]) -> String {
    let cell = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    let mut s = String::from("sequence,error_nondecreasing,r0_vs_upper_corr,upper_pairwise_corr,layer_mean_abs_E\n");
    for r in rows {
        let errs: Vec<String> = r.layer_errors.iter().map(|e| format!("{e:.6e}")).collect();
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.sequence,
            r.error_nondecreasing as u8,
            cell(r.r0_vs_upper),
            cell(r.upper_pairwise),
            errs.join(" ")
        );
    }
    s
}

/// Activation grids for one layer: rows A, Â, E, R (channel averages,
/// each row scaled to its own range), one column per step.
fn write_layer_grid(path: &Path, trace: &RolloutTrace<f32>, layer: usize) -> Result<()> {
    let first = &trace.states[0][layer];
    let (_, h, w) = first.a.dims3()?;
    let mut grid = Grid::new(w, h, trace.len(), 4);
    for row in 0..4 {
        let mut tiles = Vec::with_capacity(trace.len());
        for step in &trace.states {
            let ls = &step[layer];
            let t = [&ls.a, &ls.ahat, &ls.e, &ls.r][row];
            tiles.push(channel_mean(t)?);
        }
        let flat: Vec<f64> = tiles.concat();
        let scaled = image::normalize(&flat);
        for (col, tile) in scaled.chunks(h * w).enumerate() {
            grid.put(col, row, tile);
        }
    }
    grid.write(path)
}

/// Signed error map: over-prediction in red, under-prediction in green.
fn write_error_map(path: &Path, trace: &RolloutTrace<f32>, layer: usize) -> Result<()> {
    let (c, h, w) = trace.states[0][layer].e.dims3()?;
    let half = c / 2;
    let t_len = trace.len();
    let width = t_len * (w + 1) - 1;
    let mut px = vec![[1.0; 3]; width * h];
    let peak = trace
        .states
        .iter()
        .flat_map(|s| s[layer].e.data().iter().map(|v| *v as f64))
        .fold(0.0, f64::max);
    let scale = if peak > 0.0 { 1.0 / peak } else { 0.0 };
    for (t, step) in trace.states.iter().enumerate() {
        let e = step[layer].e.data();
        for y in 0..h {
            for x in 0..w {
                let (mut pos, mut neg) = (0.0, 0.0);
                for ch in 0..half {
                    pos += e[(ch * h + y) * w + x] as f64 / half as f64;
                    neg += e[((ch + half) * h + y) * w + x] as f64 / half as f64;
                }
                px[y * width + t * (w + 1) + x] = [pos * scale, neg * scale, 0.0];
            }
        }
    }
    image::write_ppm(path, width, h, &px)
}

pub struct ProbeOutcome {
    pub traces: Vec<RolloutTrace<f32>>,
    pub summaries: Vec<ProbeSummary>,
}

/// Traces, activation images and summaries of the given sequences.
pub fn probe_sequences(
    arch: &Arch,
    params: &ParamStore<f32>,
    seqs: &[LabeledSequence],
    out_dir: Option<&Path>,
) -> Result<ProbeOutcome> {
    let mut traces = Vec::with_capacity(seqs.len());
    let mut summaries = Vec::with_capacity(seqs.len());
    for (i, s) in seqs.iter().enumerate() {
        let (trace, _) = arch.rollout(params, &s.frames, RolloutMode::OpenLoop)?;
        if let Some(dir) = out_dir {
            fs::write(dir.join(format!("probe_seq{i:03}.csv")), trace.to_csv())?;
            for l in 0..trace.num_layers() {
                write_layer_grid(&dir.join(format!("probe_seq{i:03}_layer{l}.pgm")), &trace, l)?;
                write_error_map(&dir.join(format!("probe_seq{i:03}_layer{l}_error.ppm")), &trace, l)?;
            }
        }
        summaries.push(summarize_trace(i, &trace));
        traces.push(trace);
    }
    Ok(ProbeOutcome { traces, summaries })
}

/// Writes probe artifacts for the first `eval.probe_sequences` test
/// sequences under `<out>/probe`.
pub fn probe(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<ProbeOutcome> {
    let (arch, params) = load_model(cfg, checkpoint)?;
    let mut seqs = test_set(cfg)?;
    seqs.truncate(cfg.eval.probe_sequences);
    let dir = cfg.out.join("probe");
    fs::create_dir_all(&dir)?;
    let out = probe_sequences(&arch, &params, &seqs, Some(&dir))?;
    fs::write(dir.join("probe_summary.csv"), probe_summary_csv(&out.summaries))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1.0, 1.0], &[0.0, 1.0]), None);
    }

    #[test]
    fn top5_contains_top1() {
        let r = ClassReport {
            rows: vec![(0, 1, 1, true), (1, 2, 3, true), (2, 4, 0, false)],
        };
        assert!(r.top5() >= r.top1());
        assert!((r.top1() - 1.0 / 3.0).abs() < 1e-12);
    }
}
