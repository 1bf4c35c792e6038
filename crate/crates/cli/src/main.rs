use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use hyperrnn::channel::FrameDataset;
use hyperrnn::config::{RunSettings, Scale, Variant};
use hyperrnn::experiments::{evaluate_checkpoint, run_fig4_sweep, run_fig5_sweep, SweepOptions, SweepResult};
use hyperrnn::networks::Checkpoint;
use hyperrnn::numerics::Rng;
use hyperrnn::training::{evaluate, nmse_db, streams, train};

/// Train and evaluate uplink-aided downlink channel estimators.
#[derive(Parser)]
#[command(name = "hyperrnn", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed; replaces the one in the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "desk", value_parser = parse_scale)]
    scale: Scale,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// TOML run file with optional [system], [train] and [network] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Training iterations; replaces the preset and the config file.
    #[arg(long, global = true)]
    iterations: Option<usize>,
    /// Frames used for each evaluation.
    #[arg(long, global = true)]
    eval_frames: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and save its checkpoint and training log.
    Train {
        #[arg(long, default_value = "hyperrnn", value_parser = parse_variant)]
        variant: Variant,
    },
    /// Evaluate a checkpoint slot by slot.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// NMSE against feedback bits for several uplink pilot lengths.
    SweepFig4 {
        /// Feedback bits (comma separated).
        #[arg(long, value_delimiter = ',')]
        bits: Option<Vec<usize>>,
        /// Uplink pilot lengths (comma separated).
        #[arg(long, value_delimiter = ',')]
        ul_pilots: Option<Vec<usize>>,
    },
    /// NMSE against the number of paths under temporal correlation.
    SweepFig5 {
        /// Path counts (comma separated).
        #[arg(long, value_delimiter = ',')]
        paths: Option<Vec<usize>>,
        #[arg(long, default_value_t = 20)]
        bits: usize,
        /// Uplink and downlink pilot length.
        #[arg(long, default_value_t = 2)]
        pilots: usize,
    },
    /// Write channel frames to JSON.
    ExportFrames {
        #[arg(long, default_value_t = 100)]
        count: usize,
    },
}

fn parse_scale(s: &str) -> std::result::Result<Scale, String> {
    s.parse().map_err(|e: hyperrnn::Error| e.to_string())
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: hyperrnn::Error| e.to_string())
}

impl Common {
    fn settings(&self) -> Result<RunSettings> {
        let mut s = RunSettings::load(self.scale, self.config.as_deref())
            .with_context(|| format!("loading settings for scale {:?}", self.scale))?;
        if let Some(seed) = self.seed {
            s.system.seed = seed;
        }
        if let Some(it) = self.iterations {
            s.train.iterations = it;
        }
        if let Some(n) = self.eval_frames {
            s.train.eval_frames = n;
        }
        s.train.validate()?;
        Ok(s)
    }

    fn sweep_options(&self, s: &RunSettings) -> SweepOptions {
        SweepOptions {
            train: s.train.clone(),
            dims: s.network.clone(),
            eval_frames: s.train.eval_frames,
            out_dir: Some(self.out.clone()),
        }
    }
}

fn report(result: &SweepResult, csv: &Path) -> bool {
    for p in &result.points {
        println!(
            "{:<9} B={:<3} L_ul={:<2} P={:<3} nmse={:>7.2} dB  ({:.0?})",
            p.variant.to_string(),
            p.config.feedback_bits,
            p.config.ul_pilots,
            p.config.paths,
            p.nmse_db,
            p.runtime
        );
    }
    let checks = result.trend_checks();
    for c in &checks {
        println!("{c}");
    }
    println!("results: {}", csv.display());
    checks.iter().all(|c| c.passed)
}

fn run(cli: Cli) -> Result<bool> {
    let common = &cli.common;
    std::fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    match cli.command {
        Command::Train { variant } => {
            let s = common.settings()?;
            let trained = train(&s.train, &s.system, &s.network, variant)?;
            let ckpt = common.out.join(format!("{variant}.ckpt"));
            trained.model.to_checkpoint(&s.system, &s.network).save(&ckpt)?;
            trained.history.write_csv(&common.out.join(format!("{variant}.history.csv")))?;
            let per_slot = evaluate(
                &trained.model,
                &s.system,
                s.train.eval_frames,
                &mut Rng::with_stream(s.system.seed, streams::EVAL),
            )?;
            for (t, x) in per_slot.iter().enumerate() {
                println!("t={} nmse={:.3} dB", t + 1, nmse_db(*x));
            }
            let decreasing = trained.history.loss_trend_decreasing();
            println!("checkpoint: {}", ckpt.display());
            println!("[{}] training loss decreases", if decreasing { "PASS" } else { "FAIL" });
            Ok(decreasing)
        }
        Command::Eval { checkpoint } => {
            let ck = Checkpoint::load(&checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
            let mut cfg = if common.config.is_some() {
                common.settings()?.system
            } else {
                ck.config.clone()
            };
            if let Some(seed) = common.seed {
                cfg.seed = seed;
            }
            let frames = common.eval_frames.unwrap_or(common.scale.train_config().eval_frames);
            let per_slot = evaluate_checkpoint(&ck, &cfg, frames)?;
            let path = common.out.join("eval.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["t", "nmse_db"])?;
            for (t, x) in per_slot.iter().enumerate() {
                let db = nmse_db(*x);
                println!("t={} nmse={db:.3} dB", t + 1);
                w.write_record([(t + 1).to_string(), db.to_string()])?;
            }
            w.flush()?;
            Ok(per_slot.iter().all(|x| x.is_finite()))
        }
        Command::SweepFig4 { bits, ul_pilots } => {
            let s = common.settings()?;
            let bits = bits.unwrap_or_else(|| vec![5, 10, 20]);
            let ul = ul_pilots.unwrap_or_else(|| match common.scale {
                Scale::Desk => vec![1, 4],
                Scale::Paper => vec![1, 2, 4],
            });
            let result = run_fig4_sweep(&s.system, &bits, &ul, &common.sweep_options(&s))?;
            Ok(report(&result, &common.out.join("fig4.csv")))
        }
        Command::SweepFig5 { paths, bits, pilots } => {
            let mut s = common.settings()?;
            s.system.feedback_bits = bits;
            s.system.ul_pilots = pilots;
            s.system.dl_pilots = pilots;
            let paths = paths.unwrap_or_else(|| match common.scale {
                Scale::Desk => vec![2, 8],
                Scale::Paper => vec![2, 4, 8, 16],
            });
            let result = run_fig5_sweep(&s.system, &paths, &common.sweep_options(&s))?;
            Ok(report(&result, &common.out.join("fig5.csv")))
        }
        Command::ExportFrames { count } => {
            if count == 0 {
                bail!("--count must be at least 1");
            }
            let s = common.settings()?;
            let ds = FrameDataset::generate(&s.system, count, &mut Rng::with_stream(s.system.seed, streams::POOL))?;
            let path = common.out.join("frames.json");
            ds.save(&path)?;
            info!("wrote {count} frames");
            println!("frames: {}", path.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
