use super::{Dense, DenseVars, Init, Parameters};
use crate::error::{dim_err, Error, Result};
use crate::numerics::{c2r, ComplexMatrix, Graph, RealTensor, Rng, Var};

/// How the final sign layer behaves.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeedbackMode {
    /// Forward `sign`, backward `1{|u| <= 1}`.
    Train,
    /// Forward `sign`; gradients are not meant to be used.
    Eval,
    /// Forward and backward of hard-tanh. Same backward as `Train` but a
    /// continuous forward, so finite differences can see through it.
    Relaxed,
}

/// ReLU MLP from `c2r(y_dl)` to `B` pre-sign activations.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizerParams {
    pub layers: Vec<Dense>,
}

pub struct QuantizerVars {
    pub layers: Vec<DenseVars>,
}

fn sign(u: f64) -> f64 {
    if u >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

impl QuantizerParams {
    pub fn new(dl_pilots: usize, hidden: &[usize], bits: usize, rng: &mut Rng) -> Self {
        let mut widths = vec![2 * dl_pilots];
        widths.extend_from_slice(hidden);
        widths.push(bits);
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(w[0], w[1], if i < last { Init::Relu } else { Init::Linear }, rng))
            .collect();
        Self { layers }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].in_width()
    }

    pub fn bits(&self) -> usize {
        self.layers[self.layers.len() - 1].out_width()
    }

    /// Activations right before the sign layer.
    pub fn pre_sign(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h)?;
            if i + 1 < self.layers.len() {
                h.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        Ok(h)
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> QuantizerVars {
        QuantizerVars {
            layers: self.layers.iter().map(|l| l.bind(g, trainable)).collect(),
        }
    }

    pub(crate) fn check_chain(&self) -> Result<()> {
        for pair in self.layers.windows(2) {
            if pair[0].out_width() != pair[1].in_width() {
                return Err(dim_err("quantizer layer chain", pair[0].out_width(), pair[1].in_width()));
            }
        }
        if self.layers.is_empty() {
            return Err(Error::Contract("quantizer needs at least one layer".into()));
        }
        Ok(())
    }
}

impl QuantizerVars {
    pub fn leaves(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|l| [l.weight, l.bias]).collect()
    }

    /// Maps stacked observations `[n, 2 L_dl]` to feedback `[n, B]`.
    pub fn forward(&self, g: &mut Graph, y: Var, mode: FeedbackMode) -> Result<Var> {
        let mut h = y;
        let n = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.apply(g, h)?;
            if i + 1 < n {
                h = g.relu(h);
            }
        }
        Ok(match mode {
            FeedbackMode::Train | FeedbackMode::Eval => g.sign_ste(h),
            FeedbackMode::Relaxed => g.hard_tanh(h),
        })
    }
}

impl Parameters for QuantizerParams {
    fn named_params(&self) -> Vec<(String, &RealTensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| [(format!("quantizer.{i}.weight"), &l.weight), (format!("quantizer.{i}.bias"), &l.bias)])
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut RealTensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }
}

/// Feedback bits for one received downlink pilot row `y_dl` (`1 × L_dl`).
pub fn quantize_feedback(y_dl: &ComplexMatrix, params: &QuantizerParams, mode: FeedbackMode) -> Result<Vec<f64>> {
    params.check_chain()?;
    let x = c2r(y_dl);
    if x.len() != params.input_width() {
        return Err(dim_err("quantize_feedback input", params.input_width(), x.len()));
    }
    let u = params.pre_sign(x.data())?;
    Ok(match mode {
        FeedbackMode::Train | FeedbackMode::Eval => u.into_iter().map(sign).collect(),
        FeedbackMode::Relaxed => u.into_iter().map(|v| v.clamp(-1.0, 1.0)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn small(rng: &mut Rng) -> QuantizerParams {
        QuantizerParams::new(2, &[16, 8], 6, rng)
    }

    #[test]
    fn eval_output_is_bits() {
        let mut rng = Rng::new(3);
        let q = small(&mut rng);
        for _ in 0..20 {
            let y = ComplexMatrix::from_fn(1, 2, |_, _| rng.complex_normal(1.0));
            let bits = quantize_feedback(&y, &q, FeedbackMode::Eval).unwrap();
            assert_eq!(bits.len(), 6);
            assert!(bits.iter().all(|&b| b == 1.0 || b == -1.0));
        }
    }

    #[test]
    fn zero_weights_give_sign_of_bias() {
        let mut rng = Rng::new(4);
        let mut q = small(&mut rng);
        for l in &mut q.layers {
            l.weight = RealTensor::zeros(l.weight.shape());
        }
        let last = q.layers.len() - 1;
        q.layers[last].bias = RealTensor::row(vec![0.3, -0.1, 0.0, -2.0, 5.0, -0.0001]);
        let y = ComplexMatrix::row(&[Complex64::new(1.0, -1.0), Complex64::new(0.2, 0.7)]);
        let bits = quantize_feedback(&y, &q, FeedbackMode::Eval).unwrap();
        assert_eq!(bits, vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0]);
    }

    #[test]
    fn invariant_to_sign_preserving_perturbation() {
        let mut rng = Rng::new(5);
        let q = small(&mut rng);
        let y = ComplexMatrix::from_fn(1, 2, |_, _| rng.complex_normal(1.0));
        let base = quantize_feedback(&y, &q, FeedbackMode::Eval).unwrap();
        let u = q.pre_sign(c2r(&y).data()).unwrap();
        let margin = u.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        let mut q2 = q.clone();
        let last = q2.layers.len() - 1;
        for b in q2.layers[last].bias.data_mut() {
            *b += 0.5 * margin;
        }
        assert_eq!(quantize_feedback(&y, &q2, FeedbackMode::Eval).unwrap(), base);
    }

    #[test]
    fn width_mismatch_is_error() {
        let mut rng = Rng::new(6);
        let q = small(&mut rng);
        let y = ComplexMatrix::zeros(1, 3);
        assert!(matches!(quantize_feedback(&y, &q, FeedbackMode::Eval), Err(Error::Dimension { .. })));
        let mut broken = q.clone();
        broken.layers.remove(1);
        assert!(quantize_feedback(&ComplexMatrix::zeros(1, 2), &broken, FeedbackMode::Eval).is_err());
    }

    #[test]
    fn graph_matches_plain_forward() {
        let mut rng = Rng::new(7);
        let q = small(&mut rng);
        let ys: Vec<ComplexMatrix> = (0..3).map(|_| ComplexMatrix::from_fn(1, 2, |_, _| rng.complex_normal(1.0))).collect();
        let stacked: Vec<f64> = ys.iter().flat_map(|y| c2r(y).into_data()).collect();
        for mode in [FeedbackMode::Train, FeedbackMode::Relaxed] {
            let mut g = Graph::new();
            let vars = q.bind(&mut g, true);
            let x = g.constant(RealTensor::matrix(3, 4, stacked.clone()).unwrap());
            let out = vars.forward(&mut g, x, mode).unwrap();
            for (i, y) in ys.iter().enumerate() {
                let plain = quantize_feedback(y, &q, mode).unwrap();
                for (a, b) in g.value(out).row_slice(i).iter().zip(&plain) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }
}
