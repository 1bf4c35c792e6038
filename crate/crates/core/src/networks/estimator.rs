use super::{bind_tensor, init_weight, modulate, Init, OmegaParts, Parameters};
use crate::error::{dim_err, Result};
use crate::numerics::{r2c, ComplexMatrix, Graph, RealTensor, Rng, Var};

/// Base matrices of the estimation RNN. The hypernetwork rescales their
/// columns every slot.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorRnnParams {
    /// `ℓ^E × B`.
    pub w_a: RealTensor,
    pub b_a: RealTensor,
    /// `2M × ℓ^E`.
    pub w_b: RealTensor,
    pub b_b: RealTensor,
    /// `ℓ^E × ℓ^E`.
    pub w_c: RealTensor,
}

#[derive(Clone, Copy, Debug)]
pub struct EstimatorVars {
    pub w_a: Var,
    pub b_a: Var,
    pub w_b: Var,
    pub b_b: Var,
    pub w_c: Var,
}

impl EstimatorRnnParams {
    pub fn new(bits: usize, state: usize, antennas: usize, rng: &mut Rng) -> Self {
        Self {
            w_a: init_weight(state, bits, Init::Relu, rng),
            b_a: RealTensor::zeros(&[1, state]),
            w_b: init_weight(2 * antennas, state, Init::Linear, rng),
            b_b: RealTensor::zeros(&[1, 2 * antennas]),
            w_c: init_weight(state, state, Init::Recurrent, rng),
        }
    }

    pub fn bits(&self) -> usize {
        self.w_a.cols()
    }

    pub fn state_width(&self) -> usize {
        self.w_a.rows()
    }

    pub fn antennas(&self) -> usize {
        self.w_b.rows() / 2
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> EstimatorVars {
        EstimatorVars {
            w_a: bind_tensor(g, &self.w_a, trainable),
            b_a: bind_tensor(g, &self.b_a, trainable),
            w_b: bind_tensor(g, &self.w_b, trainable),
            b_b: bind_tensor(g, &self.b_b, trainable),
            w_c: bind_tensor(g, &self.w_c, trainable),
        }
    }
}

impl EstimatorVars {
    pub fn leaves(&self) -> Vec<Var> {
        vec![self.w_a, self.b_a, self.w_b, self.b_b, self.w_c]
    }

    /// One step on a batch: `q` is `[n, B]`, `omega` is `[n, B + 2ℓ^E]`.
    /// Column scaling of a weight is applied as elementwise scaling of the
    /// vector it multiplies. Returns `(c2r(ĥ) as [n, 2M], s_E)`.
    pub fn step(&self, g: &mut Graph, q: Var, s_prev: Option<Var>, omega: Var, bits: usize, state: usize) -> Result<(Var, Var)> {
        let omega_a = g.slice_cols(omega, 0, bits)?;
        let omega_b = g.slice_cols(omega, bits, state)?;
        let scaled_q = g.mul(omega_a, q)?;
        let mut pre = g.linear(scaled_q, self.w_a, Some(self.b_a))?;
        if let Some(s) = s_prev {
            let omega_c = g.slice_cols(omega, bits + state, state)?;
            let scaled_s = g.mul(omega_c, s)?;
            let rec = g.linear(scaled_s, self.w_c, None)?;
            pre = g.add(pre, rec)?;
        }
        let s = g.relu(pre);
        let scaled = g.mul(omega_b, s)?;
        let h = g.linear(scaled, self.w_b, Some(self.b_b))?;
        Ok((h, s))
    }
}

impl Parameters for EstimatorRnnParams {
    fn named_params(&self) -> Vec<(String, &RealTensor)> {
        vec![
            ("estimator.w_a".into(), &self.w_a),
            ("estimator.b_a".into(), &self.b_a),
            ("estimator.w_b".into(), &self.w_b),
            ("estimator.b_b".into(), &self.b_b),
            ("estimator.w_c".into(), &self.w_c),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut RealTensor> {
        vec![&mut self.w_a, &mut self.b_a, &mut self.w_b, &mut self.b_b, &mut self.w_c]
    }
}

fn matvec(w: &RealTensor, x: &[f64]) -> Result<Vec<f64>> {
    let col = RealTensor::matrix(x.len(), 1, x.to_vec())?;
    Ok(w.matmul(&col)?.into_data())
}

/// `s_E = ReLU(W_A q + W_C s_prev + b_A)`, `c2r(ĥ) = W_B s_E + b_B` with the
/// base matrices column-scaled by the matching parts of `omega`.
pub fn estimate_step(q: &[f64], s_prev: &[f64], params: &EstimatorRnnParams, omega: &[f64]) -> Result<(ComplexMatrix, Vec<f64>)> {
    let state = params.state_width();
    let parts = OmegaParts::split(omega, params.bits(), state)?;
    if s_prev.len() != state {
        return Err(dim_err("estimator state", state, s_prev.len()));
    }
    if params.w_c.shape() != [state, state] || params.w_b.cols() != state {
        return Err(dim_err("estimator base matrices", state, params.w_b.cols()));
    }
    let w_a = modulate(&params.w_a, &parts.a)?;
    let w_b = modulate(&params.w_b, &parts.b)?;
    let w_c = modulate(&params.w_c, &parts.c)?;
    let a = matvec(&w_a, q)?;
    let c = matvec(&w_c, s_prev)?;
    let s: Vec<f64> = a
        .iter()
        .zip(&c)
        .zip(params.b_a.data())
        .map(|((x, y), b)| (x + y + b).max(0.0))
        .collect();
    let out: Vec<f64> = matvec(&w_b, &s)?.iter().zip(params.b_b.data()).map(|(x, b)| x + b).collect();
    let h = r2c(&RealTensor::row(out), params.antennas(), 1)?;
    Ok((h, s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::c2r;

    #[test]
    fn unit_omega_is_plain_rnn() {
        let mut rng = Rng::new(10);
        let p = EstimatorRnnParams::new(5, 7, 3, &mut rng);
        let q: Vec<f64> = (0..5).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let s_prev: Vec<f64> = (0..7).map(|_| rng.uniform(0.0, 1.0)).collect();
        let (h, s) = estimate_step(&q, &s_prev, &p, &OmegaParts::ones(5, 7).concat()).unwrap();

        let mut plain_s = vec![0.0; 7];
        for (r, v) in plain_s.iter_mut().enumerate() {
            let mut acc = p.b_a.data()[r];
            for (k, qk) in q.iter().enumerate() {
                acc += p.w_a.get2(r, k) * qk;
            }
            for (k, sk) in s_prev.iter().enumerate() {
                acc += p.w_c.get2(r, k) * sk;
            }
            *v = acc.max(0.0);
        }
        let mut plain_h = vec![0.0; 6];
        for (r, v) in plain_h.iter_mut().enumerate() {
            *v = p.b_b.data()[r] + (0..7).map(|k| p.w_b.get2(r, k) * plain_s[k]).sum::<f64>();
        }
        for (a, b) in s.iter().zip(&plain_s).chain(c2r(&h).data().iter().zip(&plain_h)) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_base_outputs_bias() {
        let mut rng = Rng::new(11);
        let mut p = EstimatorRnnParams::new(4, 6, 3, &mut rng);
        p.w_a = RealTensor::zeros(&[6, 4]);
        p.w_b = RealTensor::zeros(&[6, 6]);
        p.w_c = RealTensor::zeros(&[6, 6]);
        p.b_b = RealTensor::row(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let omega: Vec<f64> = (0..16).map(|_| rng.normal()).collect();
        let (h, _) = estimate_step(&[1.0, -1.0, 1.0, 1.0], &[0.3; 6], &p, &omega).unwrap();
        assert_eq!(h, r2c(&p.b_b, 3, 1).unwrap());
    }

    #[test]
    fn output_width_is_two_m() {
        let mut rng = Rng::new(12);
        let p = EstimatorRnnParams::new(20, 16, 64, &mut rng);
        let (h, s) = estimate_step(&[1.0; 20], &[0.0; 16], &p, &OmegaParts::ones(20, 16).concat()).unwrap();
        assert_eq!(h.rows(), 64);
        assert_eq!(c2r(&h).len(), 128);
        assert_eq!(s.len(), 16);
    }

    #[test]
    fn dimension_errors() {
        let mut rng = Rng::new(13);
        let p = EstimatorRnnParams::new(4, 6, 3, &mut rng);
        let ones = OmegaParts::ones(4, 6).concat();
        assert!(estimate_step(&[1.0; 4], &[0.0; 6], &p, &ones[1..]).is_err());
        assert!(estimate_step(&[1.0; 4], &[0.0; 5], &p, &ones).is_err());
        assert!(estimate_step(&[1.0; 3], &[0.0; 6], &p, &ones).is_err());
    }

    #[test]
    fn graph_unroll_matches_sequential_calls() {
        let mut rng = Rng::new(14);
        let (bits, state, m, n, t_max) = (4, 6, 3, 2, 4);
        let p = EstimatorRnnParams::new(bits, state, m, &mut rng);
        let width = bits + 2 * state;
        let qs: Vec<Vec<f64>> = (0..t_max * n).map(|_| (0..bits).map(|_| if rng.normal() > 0.0 { 1.0 } else { -1.0 }).collect()).collect();
        let omegas: Vec<Vec<f64>> = (0..t_max * n).map(|_| (0..width).map(|_| 1.0 + 0.3 * rng.normal()).collect()).collect();

        let mut g = Graph::new();
        let v = p.bind(&mut g, true);
        let mut s_prev = None;
        let mut plain = vec![vec![0.0; state]; n];
        for t in 0..t_max {
            let rows = t * n..(t + 1) * n;
            let q = g.constant(RealTensor::matrix(n, bits, qs[rows.clone()].concat()).unwrap());
            let w = g.constant(RealTensor::matrix(n, width, omegas[rows.clone()].concat()).unwrap());
            let (h, s) = v.step(&mut g, q, s_prev, w, bits, state).unwrap();
            for i in 0..n {
                let (h_i, s_i) = estimate_step(&qs[t * n + i], &plain[i], &p, &omegas[t * n + i]).unwrap();
                for (a, b) in g.value(h).row_slice(i).iter().zip(c2r(&h_i).data()) {
                    assert!((a - b).abs() < 1e-12, "slot {t}: {a} vs {b}");
                }
                plain[i] = s_i;
            }
            s_prev = Some(s);
        }
    }
}
