use super::{Dense, DenseVars, Init, Parameters};
use crate::error::{dim_err, Result};
use crate::numerics::{r2c, ComplexMatrix, Graph, RealTensor, Rng, Var};

/// Stateless feedforward estimator from the feedback bits to `c2r(ĥ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineEstimatorParams {
    pub layers: Vec<Dense>,
}

pub struct BaselineVars {
    pub layers: Vec<DenseVars>,
}

impl BaselineEstimatorParams {
    pub fn new(bits: usize, hidden: &[usize], antennas: usize, rng: &mut Rng) -> Self {
        let mut widths = vec![bits];
        widths.extend_from_slice(hidden);
        widths.push(2 * antennas);
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::new(w[0], w[1], if i < last { Init::Relu } else { Init::Linear }, rng))
            .collect();
        Self { layers }
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BaselineVars {
        BaselineVars {
            layers: self.layers.iter().map(|l| l.bind(g, trainable)).collect(),
        }
    }
}

impl BaselineVars {
    pub fn leaves(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|l| [l.weight, l.bias]).collect()
    }

    pub fn forward(&self, g: &mut Graph, q: Var) -> Result<Var> {
        let mut h = q;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.apply(g, h)?;
            if i + 1 < self.layers.len() {
                h = g.relu(h);
            }
        }
        Ok(h)
    }
}

impl Parameters for BaselineEstimatorParams {
    fn named_params(&self) -> Vec<(String, &RealTensor)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| [(format!("baseline.{i}.weight"), &l.weight), (format!("baseline.{i}.bias"), &l.bias)])
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut RealTensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias]).collect()
    }
}

pub fn baseline_estimate(q: &[f64], params: &BaselineEstimatorParams) -> Result<ComplexMatrix> {
    let mut h = q.to_vec();
    for (i, layer) in params.layers.iter().enumerate() {
        h = layer.forward(&h)?;
        if i + 1 < params.layers.len() {
            h.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
    if !h.len().is_multiple_of(2) {
        return Err(dim_err("baseline output", "even width", h.len()));
    }
    let m = h.len() / 2;
    r2c(&RealTensor::row(h), m, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::{estimate_step, EstimatorRnnParams, OmegaParts};
    use crate::numerics::c2r;

    #[test]
    fn single_layer_is_affine() {
        let mut rng = Rng::new(20);
        let mut p = BaselineEstimatorParams::new(3, &[], 2, &mut rng);
        p.layers[0].bias = RealTensor::row(vec![0.5, -0.5, 1.0, 2.0]);
        let q = [1.0, -1.0, 1.0];
        let h = baseline_estimate(&q, &p).unwrap();
        let w = &p.layers[0].weight;
        let expect: Vec<f64> = (0..4).map(|r| p.layers[0].bias.data()[r] + (0..3).map(|k| w.get2(r, k) * q[k]).sum::<f64>()).collect();
        assert_eq!(c2r(&h).data(), expect.as_slice());
    }

    #[test]
    fn output_width_and_statelessness() {
        let mut rng = Rng::new(21);
        let p = BaselineEstimatorParams::new(20, &[32, 16], 64, &mut rng);
        let q = vec![1.0; 20];
        let a = baseline_estimate(&q, &p).unwrap();
        let b = baseline_estimate(&q, &p).unwrap();
        assert_eq!(a.rows(), 64);
        assert_eq!(c2r(&a).len(), 128);
        assert_eq!(a, b);
        assert!(matches!(baseline_estimate(&[1.0; 19], &p), Err(crate::Error::Dimension { .. })));
    }

    #[test]
    fn rnn_without_memory_or_modulation_is_one_hidden_layer_net() {
        let mut rng = Rng::new(22);
        let (bits, state, m) = (6, 9, 4);
        let mut rnn = EstimatorRnnParams::new(bits, state, m, &mut rng);
        rnn.w_c = RealTensor::zeros(&[state, state]);
        rnn.b_a = RealTensor::row((0..state).map(|_| 0.1 * rng.normal()).collect());
        rnn.b_b = RealTensor::row((0..2 * m).map(|_| 0.1 * rng.normal()).collect());
        let ff = BaselineEstimatorParams {
            layers: vec![
                Dense {
                    weight: rnn.w_a.clone(),
                    bias: rnn.b_a.clone(),
                },
                Dense {
                    weight: rnn.w_b.clone(),
                    bias: rnn.b_b.clone(),
                },
            ],
        };
        let ones = OmegaParts::ones(bits, state).concat();
        let mut s = vec![0.0; state];
        for _ in 0..4 {
            let q: Vec<f64> = (0..bits).map(|_| if rng.normal() > 0.0 { 1.0 } else { -1.0 }).collect();
            let (h, s_next) = estimate_step(&q, &s, &rnn, &ones).unwrap();
            let ff_h = baseline_estimate(&q, &ff).unwrap();
            assert!(h.sub(&ff_h).unwrap().frobenius_sq() < 1e-24);
            s = s_next;
        }
    }
}
