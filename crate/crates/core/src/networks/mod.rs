//! Learnable blocks: feedback quantizer, hypernetwork, weight-modulated
//! estimation RNN and the feedforward baseline estimator.
//!
//! Every parameter struct exposes its tensors in a fixed order through
//! [`Parameters`]; binding a struct into a [`Graph`] produces a matching
//! `*Vars` struct whose leaves come out in that same order, which is what
//! the optimizer and the checkpoint format rely on.

mod baseline;
pub mod checkpoint;
mod estimator;
mod hypernet;
mod quantizer;

pub use baseline::{baseline_estimate, BaselineEstimatorParams, BaselineVars};
pub use checkpoint::Checkpoint;
pub use estimator::{estimate_step, EstimatorRnnParams, EstimatorVars};
pub use hypernet::{hypernetwork_step, HypernetParams, HypernetVars, OmegaParts};
pub use quantizer::{quantize_feedback, FeedbackMode, QuantizerParams, QuantizerVars};

use crate::config::{ExperimentConfig, NetworkDims, Variant};
use crate::error::{dim_err, Result};
use crate::numerics::{Graph, RealTensor, Rng, Var};

/// Ordered access to the trainable tensors of a block.
pub trait Parameters {
    fn named_params(&self) -> Vec<(String, &RealTensor)>;
    fn params_mut(&mut self) -> Vec<&mut RealTensor>;

    fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }
}

/// Weight initialization families.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Init {
    /// Uniform with variance `2 / fan_in`, for layers feeding a ReLU.
    Relu,
    /// Uniform with variance `1 / fan_in`.
    Linear,
    /// `Linear`, then scaled by 0.9.
    Recurrent,
}

pub(crate) fn init_weight(out: usize, fan_in: usize, init: Init, rng: &mut Rng) -> RealTensor {
    let (var, scale) = match init {
        Init::Relu => (2.0 / fan_in as f64, 1.0),
        Init::Linear => (1.0 / fan_in as f64, 1.0),
        Init::Recurrent => (1.0 / fan_in as f64, 0.9),
    };
    let a = (3.0 * var).sqrt();
    let data = (0..out * fan_in).map(|_| scale * rng.uniform(-a, a)).collect();
    RealTensor::from_parts(vec![out, fan_in], data)
}

pub(crate) fn bind_tensor(g: &mut Graph, t: &RealTensor, trainable: bool) -> Var {
    if trainable {
        g.leaf(t.clone())
    } else {
        g.constant(t.clone())
    }
}

/// Fully connected layer, weight stored `out × in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: RealTensor,
    pub bias: RealTensor,
}

#[derive(Clone, Copy, Debug)]
pub struct DenseVars {
    pub weight: Var,
    pub bias: Var,
}

impl Dense {
    pub(crate) fn new(fan_in: usize, out: usize, init: Init, rng: &mut Rng) -> Self {
        Self {
            weight: init_weight(out, fan_in, init, rng),
            bias: RealTensor::zeros(&[1, out]),
        }
    }

    pub fn in_width(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_width(&self) -> usize {
        self.weight.rows()
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> DenseVars {
        DenseVars {
            weight: bind_tensor(g, &self.weight, trainable),
            bias: bind_tensor(g, &self.bias, trainable),
        }
    }
}

impl Dense {
    /// `W x + b` for a single input vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (out, fan_in) = (self.out_width(), self.in_width());
        if x.len() != fan_in {
            return Err(dim_err("dense layer input", fan_in, x.len()));
        }
        Ok((0..out)
            .map(|r| {
                let w = self.weight.row_slice(r);
                self.bias.data()[r] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect())
    }
}

impl DenseVars {
    pub fn apply(&self, g: &mut Graph, x: Var) -> Result<Var> {
        g.linear(x, self.weight, Some(self.bias))
    }
}

/// Multiplies column `j` of `base` by `omega[j]`.
pub fn modulate(base: &RealTensor, omega: &[f64]) -> Result<RealTensor> {
    let (rows, cols) = (base.rows(), base.cols());
    if omega.len() != cols {
        return Err(dim_err("modulate", cols, omega.len()));
    }
    let mut out = base.data().to_vec();
    for r in 0..rows {
        for (v, w) in out[r * cols..(r + 1) * cols].iter_mut().zip(omega) {
            *v *= w;
        }
    }
    RealTensor::matrix(rows, cols, out)
}

/// Estimation head of a model.
#[derive(Clone, Debug, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum EstimatorHead {
    HyperRnn {
        rnn: EstimatorRnnParams,
        hyper: HypernetParams,
    },
    Baseline(BaselineEstimatorParams),
}

/// All trainable network weights of one variant (pilots live in
/// [`crate::airlink::PilotSet`]).
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorParams {
    pub quantizer: QuantizerParams,
    pub head: EstimatorHead,
}

pub enum BoundHead {
    HyperRnn { rnn: EstimatorVars, hyper: HypernetVars },
    Baseline(BaselineVars),
}

/// An [`EstimatorParams`] bound into a graph.
pub struct BoundEstimator {
    pub quantizer: QuantizerVars,
    pub head: BoundHead,
    /// Leaves in [`Parameters::named_params`] order.
    pub leaves: Vec<Var>,
}

impl EstimatorParams {
    pub fn new(variant: Variant, cfg: &ExperimentConfig, dims: &NetworkDims, rng: &mut Rng) -> Self {
        let quantizer = QuantizerParams::new(cfg.dl_pilots, &dims.quantizer_hidden, cfg.feedback_bits, rng);
        let head = match variant {
            Variant::HyperRnn => EstimatorHead::HyperRnn {
                rnn: EstimatorRnnParams::new(cfg.feedback_bits, dims.estimator_state, cfg.antennas, rng),
                hyper: HypernetParams::new(
                    cfg.antennas,
                    cfg.ul_pilots,
                    cfg.feedback_bits,
                    dims.estimator_state,
                    dims.hyper_state,
                    rng,
                ),
            },
            Variant::Baseline => EstimatorHead::Baseline(BaselineEstimatorParams::new(
                cfg.feedback_bits,
                &dims.baseline_hidden,
                cfg.antennas,
                rng,
            )),
        };
        Self { quantizer, head }
    }

    pub fn variant(&self) -> Variant {
        match self.head {
            EstimatorHead::HyperRnn { .. } => Variant::HyperRnn,
            EstimatorHead::Baseline(_) => Variant::Baseline,
        }
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundEstimator {
        let quantizer = self.quantizer.bind(g, trainable);
        let mut leaves = quantizer.leaves();
        let head = match &self.head {
            EstimatorHead::HyperRnn { rnn, hyper } => {
                let rnn = rnn.bind(g, trainable);
                let hyper = hyper.bind(g, trainable);
                leaves.extend(rnn.leaves());
                leaves.extend(hyper.leaves());
                BoundHead::HyperRnn { rnn, hyper }
            }
            EstimatorHead::Baseline(b) => {
                let b = b.bind(g, trainable);
                leaves.extend(b.leaves());
                BoundHead::Baseline(b)
            }
        };
        BoundEstimator { quantizer, head, leaves }
    }
}

impl Parameters for EstimatorParams {
    fn named_params(&self) -> Vec<(String, &RealTensor)> {
        let mut out = self.quantizer.named_params();
        match &self.head {
            EstimatorHead::HyperRnn { rnn, hyper } => {
                out.extend(rnn.named_params());
                out.extend(hyper.named_params());
            }
            EstimatorHead::Baseline(b) => out.extend(b.named_params()),
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut RealTensor> {
        let mut out = self.quantizer.params_mut();
        match &mut self.head {
            EstimatorHead::HyperRnn { rnn, hyper } => {
                out.extend(rnn.params_mut());
                out.extend(hyper.params_mut());
            }
            EstimatorHead::Baseline(b) => out.extend(b.params_mut()),
        }
        out
    }
}
