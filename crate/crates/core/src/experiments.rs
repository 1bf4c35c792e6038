//! The two NMSE sweeps, checkpoint evaluation and their CSV output.

use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use log::{info, warn};
use serde::Serialize;

use crate::config::{ExperimentConfig, NetworkDims, Scale, TrainConfig, Variant};
use crate::error::Result;
use crate::networks::Checkpoint;
use crate::numerics::Rng;
use crate::training::{evaluate, nmse_db, streams, train, Model};

/// Training and evaluation settings shared by every point of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepOptions {
    pub train: TrainConfig,
    pub dims: NetworkDims,
    pub eval_frames: usize,
    /// Where checkpoints, training logs and the result CSV go. Nothing is
    /// written when unset.
    pub out_dir: Option<PathBuf>,
}

impl SweepOptions {
    pub fn for_scale(scale: Scale) -> Self {
        let train = scale.train_config();
        Self {
            eval_frames: train.eval_frames,
            train,
            dims: scale.dims(),
            out_dir: None,
        }
    }
}

/// One trained and evaluated grid point.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub config: ExperimentConfig,
    pub variant: Variant,
    /// NMSE at the last slot in dB, NaN when the point failed.
    pub nmse_db: f64,
    pub per_slot_db: Vec<f64>,
    pub runtime: Duration,
    pub checkpoint: Option<PathBuf>,
    pub loss_decreased: bool,
    pub error: Option<String>,
}

impl SweepPoint {
    pub fn completed(&self) -> bool {
        self.error.is_none() && self.nmse_db.is_finite()
    }

    fn label(&self) -> String {
        let c = &self.config;
        match self.variant {
            Variant::HyperRnn => format!("hyperrnn_B{}_Lul{}_P{}", c.feedback_bits, c.ul_pilots, c.paths),
            Variant::Baseline => format!("baseline_B{}_P{}", c.feedback_bits, c.paths),
        }
    }
}

#[derive(Serialize)]
struct CsvRow {
    variant: String,
    #[serde(rename = "B")]
    b: usize,
    #[serde(rename = "L_ul")]
    l_ul: usize,
    #[serde(rename = "L_dl")]
    l_dl: usize,
    #[serde(rename = "P")]
    p: usize,
    #[serde(rename = "M")]
    m: usize,
    snr_db: f64,
    rho_ul: f64,
    rho_dl: f64,
    t: usize,
    nmse_db: f64,
    seed: u64,
}

/// A named pass/fail check on the results of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct TrendCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for TrendCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Study {
    Bits,
    Paths,
}

/// Rows in grid order plus the trend checks that apply to them.
#[derive(Clone, Debug)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    study: Study,
}

impl SweepResult {
    pub fn all_completed(&self) -> bool {
        self.points.iter().all(SweepPoint::completed)
    }

    /// Points matching `variant` and the predicate.
    pub fn find(&self, variant: Variant, pred: impl Fn(&ExperimentConfig) -> bool) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.variant == variant && pred(&p.config))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for p in &self.points {
            let c = &p.config;
            w.serialize(CsvRow {
                variant: p.variant.to_string(),
                b: c.feedback_bits,
                l_ul: match p.variant {
                    Variant::HyperRnn => c.ul_pilots,
                    Variant::Baseline => 0,
                },
                l_dl: c.dl_pilots,
                p: c.paths,
                m: c.antennas,
                snr_db: c.snr_db,
                rho_ul: c.rho_ul()?,
                rho_dl: c.rho_dl()?,
                t: c.slots,
                nmse_db: p.nmse_db,
                seed: c.seed,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Every check the sweep asserts about its own results. Checks whose
    /// inputs failed to train are reported as failed.
    pub fn trend_checks(&self) -> Vec<TrendCheck> {
        let mut out = Vec::new();
        if self.points.is_empty() {
            return out;
        }
        let failed: Vec<String> = self.points.iter().filter(|p| !p.completed()).map(SweepPoint::label).collect();
        out.push(TrendCheck {
            name: "all grid points completed".into(),
            passed: failed.is_empty(),
            detail: if failed.is_empty() {
                format!("{} points", self.points.len())
            } else {
                format!("failed: {}", failed.join(", "))
            },
        });
        let flat: Vec<String> = self
            .points
            .iter()
            .filter(|p| p.completed() && !p.loss_decreased)
            .map(SweepPoint::label)
            .collect();
        out.push(TrendCheck {
            name: "training loss decreases".into(),
            passed: flat.is_empty(),
            detail: if flat.is_empty() { "every run".into() } else { format!("flat: {}", flat.join(", ")) },
        });
        match self.study {
            Study::Bits => self.bits_checks(&mut out),
            Study::Paths => self.paths_checks(&mut out),
        }
        out
    }

    pub fn trends_pass(&self) -> bool {
        self.trend_checks().iter().all(|c| c.passed)
    }

    fn values<T: Ord + Copy>(&self, key: impl Fn(&ExperimentConfig) -> T, variant: Variant) -> Vec<T> {
        let mut v: Vec<T> = self.points.iter().filter(|p| p.variant == variant).map(|p| key(&p.config)).collect();
        v.sort();
        v.dedup();
        v
    }

    fn bits_checks(&self, out: &mut Vec<TrendCheck>) {
        let bits = self.values(|c| c.feedback_bits, Variant::HyperRnn);
        let pilots = self.values(|c| c.ul_pilots, Variant::HyperRnn);
        let (Some(&l_min), Some(&l_max)) = (pilots.first(), pilots.last()) else {
            return;
        };
        if l_min < l_max {
            for &b in &bits {
                let short = self.find(Variant::HyperRnn, |c| c.feedback_bits == b && c.ul_pilots == l_min);
                let long = self.find(Variant::HyperRnn, |c| c.feedback_bits == b && c.ul_pilots == l_max);
                let (s, l) = (nmse_of(short), nmse_of(long));
                out.push(TrendCheck {
                    name: format!("longer uplink pilots help at B={b}"),
                    passed: l <= s + 0.5,
                    detail: format!("L_ul={l_max}: {l:.2} dB, L_ul={l_min}: {s:.2} dB (slack 0.5 dB)"),
                });
            }
        }
        if let Some(&b) = bits.last() {
            let hyper = nmse_of(self.find(Variant::HyperRnn, |c| c.feedback_bits == b && c.ul_pilots == l_max));
            let base = nmse_of(self.find(Variant::Baseline, |c| c.feedback_bits == b));
            out.push(TrendCheck {
                name: format!("hyperrnn beats baseline at B={b}"),
                passed: hyper < base,
                detail: format!("hyperrnn {hyper:.2} dB, baseline {base:.2} dB"),
            });
        }
    }

    fn paths_checks(&self, out: &mut Vec<TrendCheck>) {
        let paths = self.values(|c| c.paths, Variant::HyperRnn);
        let (Some(&p_min), Some(&p_max)) = (paths.first(), paths.last()) else {
            return;
        };
        if p_min == p_max {
            return;
        }
        let at = |v, p| nmse_of(self.find(v, |c| c.paths == p));
        let gap_min = at(Variant::Baseline, p_min) - at(Variant::HyperRnn, p_min);
        let gap_max = at(Variant::Baseline, p_max) - at(Variant::HyperRnn, p_max);
        out.push(TrendCheck {
            name: format!("gain shrinks from P={p_min} to P={p_max}"),
            passed: gap_min > gap_max,
            detail: format!("gap {gap_min:.2} dB at P={p_min}, {gap_max:.2} dB at P={p_max}"),
        });
        for v in [Variant::HyperRnn, Variant::Baseline] {
            let (lo, hi) = (at(v, p_min), at(v, p_max));
            out.push(TrendCheck {
                name: format!("{v} finds fewer paths easier"),
                passed: lo < hi,
                detail: format!("P={p_min}: {lo:.2} dB, P={p_max}: {hi:.2} dB"),
            });
        }
    }
}

fn nmse_of(p: Option<&SweepPoint>) -> f64 {
    p.map_or(f64::NAN, |p| p.nmse_db)
}

/// Trains one point and evaluates it on the evaluation stream. Failures end
/// up in the returned row.
pub fn run_point(cfg: &ExperimentConfig, variant: Variant, opts: &SweepOptions) -> SweepPoint {
    let start = Instant::now();
    let mut point = SweepPoint {
        config: cfg.clone(),
        variant,
        nmse_db: f64::NAN,
        per_slot_db: Vec::new(),
        runtime: Duration::ZERO,
        checkpoint: None,
        loss_decreased: false,
        error: None,
    };
    info!("training {}", point.label());
    if let Err(e) = train_and_eval(&mut point, opts) {
        warn!("{} failed: {e}", point.label());
        point.error = Some(e.to_string());
        point.nmse_db = f64::NAN;
    }
    point.runtime = start.elapsed();
    info!("{}: {:.2} dB in {:.0?}", point.label(), point.nmse_db, point.runtime);
    point
}

fn train_and_eval(point: &mut SweepPoint, opts: &SweepOptions) -> Result<()> {
    let cfg = point.config.clone();
    let trained = train(&opts.train, &cfg, &opts.dims, point.variant)?;
    point.loss_decreased = trained.history.loss_trend_decreasing();
    let per_slot = evaluate(&trained.model, &cfg, opts.eval_frames, &mut Rng::with_stream(cfg.seed, streams::EVAL))?;
    point.per_slot_db = per_slot.iter().map(|&x| nmse_db(x)).collect();
    point.nmse_db = *point.per_slot_db.last().unwrap_or(&f64::NAN);
    if let Some(dir) = &opts.out_dir {
        let label = point.label();
        let ckpt_dir = dir.join("checkpoints");
        std::fs::create_dir_all(&ckpt_dir)?;
        let path = ckpt_dir.join(format!("{label}.ckpt"));
        trained.model.to_checkpoint(&cfg, &opts.dims).save(&path)?;
        trained.history.write_csv(&ckpt_dir.join(format!("{label}.history.csv")))?;
        point.checkpoint = Some(path);
    }
    Ok(())
}

fn finish(points: Vec<SweepPoint>, study: Study, opts: &SweepOptions, file: &str) -> Result<SweepResult> {
    let result = SweepResult { points, study };
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir)?;
        result.write_csv(&dir.join(file))?;
    }
    Ok(result)
}

/// NMSE against feedback bits. HyperRNN runs once per `(B, L_ul)`, the
/// baseline once per `B`, all without temporal correlation.
pub fn run_fig4_sweep(base: &ExperimentConfig, b_values: &[usize], lul_values: &[usize], opts: &SweepOptions) -> Result<SweepResult> {
    base.validate()?;
    let mut points = Vec::new();
    for &b in b_values {
        for &l in lul_values {
            let cfg = ExperimentConfig {
                feedback_bits: b,
                ul_pilots: l,
                rho_override: Some(0.0),
                ..base.clone()
            };
            cfg.validate()?;
            points.push(run_point(&cfg, Variant::HyperRnn, opts));
        }
        let cfg = ExperimentConfig {
            feedback_bits: b,
            rho_override: Some(0.0),
            ..base.clone()
        };
        cfg.validate()?;
        points.push(run_point(&cfg, Variant::Baseline, opts));
    }
    finish(points, Study::Bits, opts, "fig4.csv")
}

/// NMSE against the number of paths with Doppler-derived correlation. Both
/// variants run for every `P`.
pub fn run_fig5_sweep(base: &ExperimentConfig, p_values: &[usize], opts: &SweepOptions) -> Result<SweepResult> {
    base.validate()?;
    let mut points = Vec::new();
    for &p in p_values {
        let cfg = ExperimentConfig {
            paths: p,
            rho_override: None,
            ..base.clone()
        };
        cfg.validate()?;
        for v in [Variant::HyperRnn, Variant::Baseline] {
            points.push(run_point(&cfg, v, opts));
        }
    }
    finish(points, Study::Paths, opts, "fig5.csv")
}

/// Per-slot NMSE (linear) of a stored model on `n_frames` fresh frames drawn
/// from the evaluation stream of `cfg.seed`.
pub fn evaluate_checkpoint(ckpt: &Checkpoint, cfg: &ExperimentConfig, n_frames: usize) -> Result<Vec<f64>> {
    cfg.validate()?;
    ckpt.check_compatible(cfg)?;
    let model = Model::from_checkpoint(ckpt);
    evaluate(&model, cfg, n_frames, &mut Rng::with_stream(cfg.seed, streams::EVAL))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> (ExperimentConfig, SweepOptions) {
        let cfg = ExperimentConfig {
            antennas: 4,
            paths: 2,
            feedback_bits: 4,
            slots: 2,
            seed: 3,
            ..Default::default()
        };
        let opts = SweepOptions {
            train: TrainConfig {
                batch_size: 8,
                iterations: 20,
                ..Default::default()
            },
            dims: NetworkDims {
                quantizer_hidden: vec![8],
                estimator_state: 6,
                hyper_state: 6,
                baseline_hidden: vec![8],
            },
            eval_frames: 50,
            out_dir: None,
        };
        (cfg, opts)
    }

    fn point(variant: Variant, b: usize, l: usize, p: usize, nmse: f64) -> SweepPoint {
        SweepPoint {
            config: ExperimentConfig {
                feedback_bits: b,
                ul_pilots: l,
                paths: p,
                ..Default::default()
            },
            variant,
            nmse_db: nmse,
            per_slot_db: vec![nmse],
            runtime: Duration::ZERO,
            checkpoint: None,
            loss_decreased: true,
            error: None,
        }
    }

    #[test]
    fn empty_grid_is_empty_result() {
        let (cfg, opts) = tiny();
        let r = run_fig4_sweep(&cfg, &[], &[1, 4], &opts).unwrap();
        assert!(r.points.is_empty());
        assert!(r.all_completed());
        assert!(r.trends_pass());
    }

    #[test]
    fn fig4_grid_order_and_csv() {
        let (cfg, mut opts) = tiny();
        let dir = tempfile::tempdir().unwrap();
        opts.out_dir = Some(dir.path().to_path_buf());
        let r = run_fig4_sweep(&cfg, &[3, 4], &[1, 2], &opts).unwrap();
        let order: Vec<(Variant, usize, usize)> = r.points.iter().map(|p| (p.variant, p.config.feedback_bits, p.config.ul_pilots)).collect();
        assert_eq!(order[0], (Variant::HyperRnn, 3, 1));
        assert_eq!(order[1], (Variant::HyperRnn, 3, 2));
        assert_eq!(order[2].0, Variant::Baseline);
        assert_eq!(order.len(), 6);
        assert!(r.points.iter().all(|p| p.config.rho_override == Some(0.0)));
        assert!(r.all_completed());

        let text = std::fs::read_to_string(dir.path().join("fig4.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "variant,B,L_ul,L_dl,P,M,snr_db,rho_ul,rho_dl,t,nmse_db,seed");
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 6);
        assert!(rows[2].starts_with("baseline,3,0,2,2,4,"));
        for p in &r.points {
            assert!(p.checkpoint.as_ref().unwrap().exists());
        }
    }

    #[test]
    fn checkpoint_rows_are_reproducible() {
        let (cfg, mut opts) = tiny();
        let dir = tempfile::tempdir().unwrap();
        opts.out_dir = Some(dir.path().to_path_buf());
        let r = run_fig5_sweep(&cfg, &[2], &opts).unwrap();
        assert_eq!(r.points.len(), 2);
        for p in &r.points {
            let ck = Checkpoint::load(p.checkpoint.as_ref().unwrap()).unwrap();
            let again = evaluate_checkpoint(&ck, &p.config, opts.eval_frames).unwrap();
            let db: Vec<f64> = again.iter().map(|&x| nmse_db(x)).collect();
            assert_eq!(db, p.per_slot_db);
        }
    }

    #[test]
    fn evaluate_checkpoint_is_deterministic_and_checks_shape() {
        let (cfg, opts) = tiny();
        let model = Model::new(Variant::HyperRnn, &cfg, &opts.dims).unwrap();
        let ck = model.to_checkpoint(&cfg, &opts.dims);
        let a = evaluate_checkpoint(&ck, &cfg, 40).unwrap();
        assert_eq!(a, evaluate_checkpoint(&ck, &cfg, 40).unwrap());
        assert_eq!(a.len(), cfg.slots);
        let wrong = ExperimentConfig { antennas: 5, ..cfg };
        assert!(matches!(evaluate_checkpoint(&ck, &wrong, 40), Err(crate::Error::Incompatible(_))));
    }

    #[test]
    fn failed_point_is_flagged_and_sweep_continues() {
        let (cfg, mut opts) = tiny();
        opts.train.lr_initial = f64::INFINITY;
        opts.train.lr_final = f64::INFINITY;
        let r = run_fig5_sweep(&cfg, &[2], &opts).unwrap();
        assert_eq!(r.points.len(), 2);
        for p in &r.points {
            assert!(!p.completed());
            assert!(p.nmse_db.is_nan());
            assert!(p.error.is_some());
        }
        assert!(!r.trend_checks()[0].passed);
    }

    #[test]
    fn bits_trend_checks() {
        let pts = vec![
            point(Variant::HyperRnn, 5, 1, 4, -1.0),
            point(Variant::HyperRnn, 5, 4, 4, -0.7),
            point(Variant::Baseline, 5, 2, 4, -0.5),
            point(Variant::HyperRnn, 20, 1, 4, -2.0),
            point(Variant::HyperRnn, 20, 4, 4, -3.0),
            point(Variant::Baseline, 20, 2, 4, -1.0),
        ];
        let r = SweepResult { points: pts, study: Study::Bits };
        assert!(r.trends_pass(), "{:?}", r.trend_checks());

        let mut worse = r.clone();
        worse.points[1].nmse_db = -0.4;
        assert!(!worse.trends_pass());
        let mut beaten = r.clone();
        beaten.points[4].nmse_db = -0.9;
        assert!(!beaten.trends_pass());
        let mut failed = r;
        failed.points[0].nmse_db = f64::NAN;
        assert!(!failed.trends_pass());
    }

    #[test]
    fn paths_trend_checks() {
        let pts = vec![
            point(Variant::HyperRnn, 20, 2, 2, -6.0),
            point(Variant::Baseline, 20, 2, 2, -3.0),
            point(Variant::HyperRnn, 20, 2, 8, -2.0),
            point(Variant::Baseline, 20, 2, 8, -1.5),
        ];
        let r = SweepResult { points: pts, study: Study::Paths };
        assert!(r.trends_pass(), "{:?}", r.trend_checks());
        let mut narrow = r.clone();
        narrow.points[1].nmse_db = -5.9;
        assert!(!narrow.trends_pass());
        let single = SweepResult {
            points: r.points[..2].to_vec(),
            study: Study::Paths,
        };
        assert_eq!(single.points.len(), 2);
        assert!(single.trends_pass());
    }
}
