use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use prednet_lab::harness::{self, ExperimentConfig};

#[derive(Parser)]
#[command(name = "prednet", version, about = "Predictive-coding video prediction lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the train/val/test VSEQ splits and class-balance statistics.
    Datagen(Common),
    /// Train and write a PNCK checkpoint plus the training log.
    Train(Common),
    /// Open-loop evaluation against the last-frame-copy baseline.
    Eval(Common),
    /// Closed-loop extrapolation with per-step metrics and frame dumps.
    Extrapolate(Common),
    /// Per-layer activation traces and images.
    Probe(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Checkpoint to read instead of `<out>/checkpoint.pnck`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        Ok(cfg)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |x| format!("{x:.6}"))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Datagen(c) => {
            let cfg = c.load()?;
            harness::generate_data(&cfg).context("datagen failed")?;
            println!("datasets written to {}", cfg.data_dir().display());
        }
        Command::Train(c) => {
            let cfg = c.load()?;
            let out = harness::train(&cfg).context("training failed")?;
            let last = out.log.last().expect("log has the initial row");
            println!(
                "trained {} epochs: train loss {:.6e}, val loss {:.6e}, val MAE {:.6e}",
                last.epoch, last.train_loss, last.val_loss, last.val_mae
            );
        }
        Command::Eval(c) => {
            let cfg = c.load()?;
            let out = harness::evaluate(&cfg, c.checkpoint.as_deref()).context("evaluation failed")?;
            let (m, cp) = (out.report.aggregate(), out.report.aggregate_copy());
            println!("MAE model {:.6e} copy {:.6e}", m.mae, cp.mae);
            println!(
                "SSIM movement model {} copy {}",
                fmt_opt(m.ssim_movement),
                fmt_opt(cp.ssim_movement)
            );
            if let Some(cls) = out.classes {
                println!("top-1 {:.4} top-5 {:.4}", cls.top1(), cls.top5());
            }
        }
        Command::Extrapolate(c) => {
            let cfg = c.load()?;
            let rep = harness::extrapolate(&cfg, c.checkpoint.as_deref()).context("extrapolation failed")?;
            for r in &rep.rows {
                println!("t_start {} step {}: MAE {:.6e} sharpness {:.6e}", r.t_start, r.step, r.mae, r.sharpness);
            }
        }
        Command::Probe(c) => {
            let cfg = c.load()?;
            let out = harness::probe(&cfg, c.checkpoint.as_deref()).context("probe failed")?;
            for s in &out.summaries {
                println!(
                    "sequence {}: error non-decreasing in layer: {}, R0 vs upper correlation {}",
                    s.sequence,
                    s.error_nondecreasing,
                    fmt_opt(s.r0_vs_upper)
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::new().filter_level(log::LevelFilter::Info).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
