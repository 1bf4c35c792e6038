//! End-to-end optimization of pilots and network weights.
//!
//! One iteration unrolls every slot of a batch of frames through uplink
//! sounding, the hypernetwork, downlink sounding, the feedback quantizer and
//! the estimator, sums the squared estimation error over slots, averages over
//! the batch, takes an Adam step and projects the pilots back onto their
//! power budgets.

use std::path::Path;

use log::{info, warn};
use serde::Serialize;

use crate::airlink::{project_power, PilotSet};
use crate::channel::{sample_frame, Link, MultipathFrame};
use crate::config::{ExperimentConfig, NetworkDims, TrainConfig, Variant};
use crate::error::{dim_err, Error, Result};
use crate::networks::{bind_tensor, BoundHead, Checkpoint, EstimatorHead, EstimatorParams, FeedbackMode, Parameters};
use crate::numerics::{ComplexMatrix, Graph, RealTensor, Rng, Var};

/// Random streams derived from the experiment seed.
pub mod streams {
    pub const INIT: u64 = 0;
    pub const PILOTS: u64 = 1;
    pub const TRAIN: u64 = 2;
    pub const EVAL: u64 = 3;
    pub const POOL: u64 = 4;
}

/// Trainable state: network weights and pilots.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub params: EstimatorParams,
    pub pilots: PilotSet,
}

impl Model {
    /// Fresh initialization, deterministic in `cfg.seed`.
    pub fn new(variant: Variant, cfg: &ExperimentConfig, dims: &NetworkDims) -> Result<Self> {
        cfg.validate()?;
        let params = EstimatorParams::new(variant, cfg, dims, &mut Rng::with_stream(cfg.seed, streams::INIT));
        let pilots = PilotSet::random(
            cfg.antennas,
            cfg.ul_pilots,
            cfg.dl_pilots,
            &mut Rng::with_stream(cfg.seed, streams::PILOTS),
        )?;
        Ok(Self { params, pilots })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Self {
        Self {
            params: ck.params.clone(),
            pilots: ck.pilots.clone(),
        }
    }

    pub fn to_checkpoint(&self, cfg: &ExperimentConfig, dims: &NetworkDims) -> Checkpoint {
        Checkpoint {
            config: cfg.clone(),
            dims: dims.clone(),
            params: self.params.clone(),
            pilots: self.pilots.clone(),
        }
    }

    pub fn variant(&self) -> Variant {
        self.params.variant()
    }

    fn uses_uplink(&self) -> bool {
        self.variant() == Variant::HyperRnn
    }

    /// Names and values of everything the optimizer updates, in update order.
    /// The baseline never transmits uplink pilots, so they are not listed.
    pub fn trainables(&self) -> Vec<(String, RealTensor)> {
        let mut out: Vec<(String, RealTensor)> = self.params.named_params().into_iter().map(|(n, t)| (n, t.clone())).collect();
        if self.uses_uplink() {
            out.push(("pilots.x_ul".into(), self.pilots.ul_stacked()));
        }
        out.push(("pilots.x_dl".into(), self.pilots.dl_stacked()));
        out
    }

    /// Applies `f` to every trainable tensor in [`Model::trainables`] order.
    /// Pilots are written back without projection.
    pub fn update_each(&mut self, mut f: impl FnMut(usize, &mut RealTensor)) -> Result<()> {
        let mut i = 0;
        for t in self.params.params_mut() {
            f(i, t);
            i += 1;
        }
        if self.uses_uplink() {
            let mut u = self.pilots.ul_stacked();
            f(i, &mut u);
            i += 1;
            self.pilots.set_ul_stacked(&u)?;
        }
        let mut d = self.pilots.dl_stacked();
        f(i, &mut d);
        self.pilots.set_dl_stacked(&d)
    }

    pub fn project(&mut self) -> Result<()> {
        self.pilots = project_power(&self.pilots)?;
        Ok(())
    }
}

/// Real-stacked channels and noise of one slot for a whole batch.
#[derive(Clone, Debug)]
pub struct SlotBatch {
    /// `[n, 2M]`.
    pub h_ul: RealTensor,
    /// `[n, 2M]`.
    pub h_dl: RealTensor,
    /// `[n, 2 M L_ul]`.
    pub noise_ul: RealTensor,
    /// `[n, 2 L_dl]`.
    pub noise_dl: RealTensor,
}

#[derive(Clone, Debug)]
pub struct Batch {
    pub size: usize,
    pub slots: Vec<SlotBatch>,
}

impl Batch {
    /// Channels from `frames`, fresh noise of variance `cfg.noise_variance()`.
    pub fn from_frames(frames: &[&MultipathFrame], cfg: &ExperimentConfig, rng: &mut Rng) -> Result<Self> {
        let n = frames.len();
        if n == 0 {
            return Err(Error::Contract("a batch needs at least one frame".into()));
        }
        let m = cfg.antennas;
        let (geom_ul, geom_dl) = (cfg.geometry_ul(), cfg.geometry_dl());
        let mut ul = vec![vec![0.0; n * 2 * m]; cfg.slots];
        let mut dl = vec![vec![0.0; n * 2 * m]; cfg.slots];
        for (i, frame) in frames.iter().enumerate() {
            if frame.slots != cfg.slots {
                return Err(dim_err("frame slots", cfg.slots, frame.slots));
            }
            for (link, geom, out) in [(Link::Uplink, &geom_ul, &mut ul), (Link::Downlink, &geom_dl, &mut dl)] {
                for (t, h) in frame.channel_sequence(link, geom)?.into_iter().enumerate() {
                    if h.len() != m {
                        return Err(dim_err("frame antennas", m, h.len()));
                    }
                    let row = &mut out[t][i * 2 * m..(i + 1) * 2 * m];
                    for (k, z) in h.iter().enumerate() {
                        row[k] = z.re;
                        row[m + k] = z.im;
                    }
                }
            }
        }
        let std = (cfg.noise_variance() / 2.0).sqrt();
        let mut noise = |width: usize| {
            let mut data = vec![0.0; n * width];
            rng.fill_normal(&mut data, std);
            RealTensor::from_parts(vec![n, width], data)
        };
        let mut slots = Vec::with_capacity(cfg.slots);
        for (u, d) in ul.into_iter().zip(dl) {
            slots.push(SlotBatch {
                h_ul: RealTensor::from_parts(vec![n, 2 * m], u),
                h_dl: RealTensor::from_parts(vec![n, 2 * m], d),
                noise_ul: noise(2 * m * cfg.ul_pilots),
                noise_dl: noise(2 * cfg.dl_pilots),
            });
        }
        Ok(Self { size: n, slots })
    }

    /// `n` fresh frames and noise.
    pub fn sample(cfg: &ExperimentConfig, n: usize, rng: &mut Rng) -> Result<Self> {
        let frames = (0..n).map(|_| sample_frame(cfg, rng)).collect::<Result<Vec<_>>>()?;
        let refs: Vec<&MultipathFrame> = frames.iter().collect();
        Self::from_frames(&refs, cfg, rng)
    }
}

/// Graph handles produced by [`rollout`].
pub struct Rollout {
    /// Batch-mean of `Σ_t ‖ĥ_t − h_t‖²`, shape `[1, 1]`.
    pub loss: Var,
    /// Per-slot `c2r(ĥ_t)`, `[n, 2M]`.
    pub estimates: Vec<Var>,
    /// Per-slot feedback, `[n, B]`.
    pub feedback: Vec<Var>,
    /// Per-slot true channel constants `(h_ul, h_dl)`.
    pub channels: Vec<(Var, Var)>,
    /// Leaves matching [`Model::trainables`].
    pub trainables: Vec<Var>,
}

/// Builds the unrolled computation for every slot of `batch`. Recurrent
/// states start at zero.
pub fn rollout(g: &mut Graph, model: &Model, batch: &Batch, mode: FeedbackMode, trainable: bool) -> Result<Rollout> {
    let m = model.pilots.antennas();
    let (l_ul, l_dl) = (model.pilots.ul_len(), model.pilots.dl_len());
    let bound = model.params.bind(g, trainable);
    let mut trainables = bound.leaves.clone();
    let x_ul = if model.uses_uplink() {
        let v = bind_tensor(g, &model.pilots.ul_stacked(), trainable);
        trainables.push(v);
        Some(v)
    } else {
        None
    };
    let x_dl = bind_tensor(g, &model.pilots.dl_stacked(), trainable);
    trainables.push(x_dl);

    let (bits, state) = match &model.params.head {
        EstimatorHead::HyperRnn { rnn, .. } => (rnn.bits(), rnn.state_width()),
        EstimatorHead::Baseline(_) => (0, 0),
    };

    let mut s_h: Option<Var> = None;
    let mut s_e: Option<Var> = None;
    let mut total: Option<Var> = None;
    let mut estimates = Vec::with_capacity(batch.slots.len());
    let mut feedback = Vec::with_capacity(batch.slots.len());
    let mut channels = Vec::with_capacity(batch.slots.len());
    for slot in &batch.slots {
        let h_ul = g.constant(slot.h_ul.clone());
        let h_dl = g.constant(slot.h_dl.clone());
        channels.push((h_ul, h_dl));

        let omega = match (&bound.head, x_ul) {
            (BoundHead::HyperRnn { hyper, .. }, Some(x_ul)) => {
                let clean = g.complex_outer(h_ul, x_ul, m, l_ul)?;
                let n_ul = g.constant(slot.noise_ul.clone());
                let y_ul = g.add(clean, n_ul)?;
                let (omega, s) = hyper.step(g, y_ul, s_h)?;
                s_h = Some(s);
                Some(omega)
            }
            _ => None,
        };

        let clean = g.complex_herm_product(h_dl, x_dl, m, l_dl)?;
        let n_dl = g.constant(slot.noise_dl.clone());
        let y_dl = g.add(clean, n_dl)?;
        let q = bound.quantizer.forward(g, y_dl, mode)?;
        feedback.push(q);

        let h_hat = match (&bound.head, omega) {
            (BoundHead::HyperRnn { rnn, .. }, Some(omega)) => {
                let (h_hat, s) = rnn.step(g, q, s_e, omega, bits, state)?;
                s_e = Some(s);
                h_hat
            }
            (BoundHead::Baseline(b), _) => b.forward(g, q)?,
            _ => unreachable!("hypernetwork output exists exactly for the recurrent head"),
        };
        estimates.push(h_hat);

        let err = g.sub(h_hat, h_dl)?;
        let sq = g.sum_squares(err);
        total = Some(match total {
            Some(acc) => g.add(acc, sq)?,
            None => sq,
        });
    }
    let total = total.ok_or_else(|| Error::Contract("a frame needs at least one slot".into()))?;
    let loss = g.scale(total, 1.0 / batch.size as f64);
    Ok(Rollout {
        loss,
        estimates,
        feedback,
        channels,
        trainables,
    })
}

/// Mean loss over `batch` without gradients.
pub fn batch_loss(model: &Model, batch: &Batch, mode: FeedbackMode) -> Result<f64> {
    let mut g = Graph::new();
    let r = rollout(&mut g, model, batch, mode, false)?;
    Ok(g.value(r.loss).data()[0])
}

/// Mean loss and its gradient for every tensor in [`Model::trainables`].
pub fn loss_and_gradients(model: &Model, batch: &Batch, mode: FeedbackMode) -> Result<(f64, Vec<RealTensor>)> {
    let mut g = Graph::new();
    let r = rollout(&mut g, model, batch, mode, true)?;
    let loss = g.value(r.loss).data()[0];
    let mut grads = g.backward(r.loss)?;
    let out = r
        .trainables
        .iter()
        .map(|&v| grads.take(v).ok_or_else(|| Error::Contract("missing gradient for a trainable".into())))
        .collect::<Result<Vec<_>>>()?;
    Ok((loss, out))
}

/// `Σ_t ‖ĥ_t − h_t‖²` for one frame with noise drawn from `rng`.
pub fn frame_loss(frame: &MultipathFrame, model: &Model, cfg: &ExperimentConfig, rng: &mut Rng) -> Result<f64> {
    let batch = Batch::from_frames(&[frame], cfg, rng)?;
    batch_loss(model, &batch, FeedbackMode::Train)
}

/// `Σ_t ‖ĥ_t − h_t‖²` for explicit estimate and channel sequences.
pub fn sequence_squared_error(estimates: &[ComplexMatrix], truth: &[ComplexMatrix]) -> Result<f64> {
    if estimates.len() != truth.len() {
        return Err(dim_err("sequence length", truth.len(), estimates.len()));
    }
    estimates.iter().zip(truth).map(|(e, h)| Ok(e.sub(h)?.frobenius_sq())).sum()
}

/// `‖ĥ − h‖² / ‖h‖²` for a single estimate.
pub fn nmse(estimate: &ComplexMatrix, truth: &ComplexMatrix) -> Result<f64> {
    let power = truth.frobenius_sq();
    if power == 0.0 {
        return Err(Error::Domain("NMSE is undefined for a zero channel".into()));
    }
    Ok(estimate.sub(truth)?.frobenius_sq() / power)
}

/// `10 log10(x)`; an exact estimate maps to `-inf`.
pub fn nmse_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Learning rate at `iteration` (0-based): exponential decay from
/// `lr_initial` at the first iteration to `lr_final` at the last.
pub fn learning_rate(cfg: &TrainConfig, iteration: usize) -> f64 {
    if cfg.iterations <= 1 {
        return cfg.lr_initial;
    }
    let frac = iteration.min(cfg.iterations - 1) as f64 / (cfg.iterations - 1) as f64;
    cfg.lr_initial * (cfg.lr_final / cfg.lr_initial).powf(frac)
}

/// Per-slot NMSE (linear) over `n_frames` fresh frames from `rng`.
pub fn evaluate(model: &Model, cfg: &ExperimentConfig, n_frames: usize, rng: &mut Rng) -> Result<Vec<f64>> {
    const CHUNK: usize = 500;
    let mut sums = vec![0.0; cfg.slots];
    let mut counted = vec![0usize; cfg.slots];
    let mut done = 0;
    while done < n_frames {
        let n = CHUNK.min(n_frames - done);
        let batch = Batch::sample(cfg, n, rng)?;
        let mut g = Graph::new();
        let r = rollout(&mut g, model, &batch, FeedbackMode::Eval, false)?;
        for (t, (&est, slot)) in r.estimates.iter().zip(&batch.slots).enumerate() {
            let est = g.value(est);
            for i in 0..n {
                let h = slot.h_dl.row_slice(i);
                let power: f64 = h.iter().map(|v| v * v).sum();
                if power == 0.0 {
                    warn!("skipping zero channel in NMSE evaluation (slot {})", t + 1);
                    continue;
                }
                let err: f64 = est.row_slice(i).iter().zip(h).map(|(a, b)| (a - b) * (a - b)).sum();
                sums[t] += err / power;
                counted[t] += 1;
            }
        }
        done += n;
    }
    Ok(sums
        .into_iter()
        .zip(counted)
        .map(|(s, c)| if c == 0 { f64::NAN } else { s / c as f64 })
        .collect())
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub loss: f64,
    pub lr: f64,
    /// NMSE at the last slot, in dB, when an evaluation ran at this iteration.
    pub nmse_db: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub rows: Vec<HistoryRow>,
    /// `(iteration, per-slot NMSE in dB)` for every evaluation.
    pub evaluations: Vec<(usize, Vec<f64>)>,
}

impl TrainHistory {
    pub fn losses(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.loss).collect()
    }

    /// Median loss over the last tenth of iterations is below the median over
    /// the first tenth.
    pub fn loss_trend_decreasing(&self) -> bool {
        let losses = self.losses();
        let k = (losses.len() / 10).max(1);
        if losses.len() < 2 * k {
            return false;
        }
        median(&losses[losses.len() - k..]) < median(&losses[..k])
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    step: i32,
}

impl Adam {
    fn new(shapes: &[usize], cfg: &TrainConfig) -> Self {
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            step: 0,
        }
    }

    fn apply(&mut self, model: &mut Model, grads: &[RealTensor], lr: f64) -> Result<()> {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
        let (ms, vs) = (&mut self.m, &mut self.v);
        model.update_each(|i, t| {
            for (((p, g), m), v) in t.data_mut().iter_mut().zip(grads[i].data()).zip(ms[i].iter_mut()).zip(vs[i].iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            }
        })
    }
}

/// Result of [`train`].
#[derive(Clone, Debug)]
pub struct Trained {
    pub model: Model,
    pub history: TrainHistory,
}

/// Trains `variant` from a fresh initialization.
pub fn train(cfg: &TrainConfig, sys: &ExperimentConfig, dims: &NetworkDims, variant: Variant) -> Result<Trained> {
    let model = Model::new(variant, sys, dims)?;
    train_model(cfg, sys, model)
}

/// Trains an existing model in place of a fresh one.
pub fn train_model(cfg: &TrainConfig, sys: &ExperimentConfig, mut model: Model) -> Result<Trained> {
    cfg.validate()?;
    sys.validate()?;
    let shapes: Vec<usize> = model.trainables().iter().map(|(_, t)| t.len()).collect();
    let mut adam = Adam::new(&shapes, cfg);
    let mut rng = Rng::with_stream(sys.seed, streams::TRAIN);
    let pool = match cfg.fixed_dataset {
        Some(k) => {
            let mut pool_rng = Rng::with_stream(sys.seed, streams::POOL);
            Some((0..k).map(|_| sample_frame(sys, &mut pool_rng)).collect::<Result<Vec<_>>>()?)
        }
        None => None,
    };
    let mut history = TrainHistory::default();
    let report_every = (cfg.iterations / 10).max(1);

    for it in 0..cfg.iterations {
        let batch = match &pool {
            Some(pool) => {
                let picks: Vec<&MultipathFrame> = (0..cfg.batch_size)
                    .map(|_| &pool[(rng.next_u64() % pool.len() as u64) as usize])
                    .collect();
                Batch::from_frames(&picks, sys, &mut rng)?
            }
            None => Batch::sample(sys, cfg.batch_size, &mut rng)?,
        };
        let (loss, grads) = loss_and_gradients(&model, &batch, FeedbackMode::Train)?;
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { iteration: it, loss });
        }
        let lr = learning_rate(cfg, it);
        adam.apply(&mut model, &grads, lr)?;
        model.project()?;

        let last = it + 1 == cfg.iterations;
        let nmse_db_last = if cfg.eval_every > 0 && ((it + 1) % cfg.eval_every == 0 || last) {
            let per_slot = evaluate(&model, sys, cfg.eval_frames, &mut Rng::with_stream(sys.seed, streams::EVAL))?;
            let db: Vec<f64> = per_slot.iter().map(|&x| nmse_db(x)).collect();
            let at_t = *db.last().expect("slots >= 1");
            history.evaluations.push((it, db));
            Some(at_t)
        } else {
            None
        };
        if it % report_every == 0 || last {
            info!("{} iteration {}/{}: loss {:.4}, lr {:.2e}", model.variant(), it + 1, cfg.iterations, loss, lr);
        }
        history.rows.push(HistoryRow {
            iteration: it,
            loss,
            lr,
            nmse_db: nmse_db_last,
        });
    }
    Ok(Trained { model, history })
}
