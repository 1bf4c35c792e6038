use super::{bind_tensor, Dense, Init, Parameters};
use crate::error::{dim_err, Result};
use crate::numerics::{c2r, ComplexMatrix, Graph, RealTensor, Rng, Var};

/// Recurrent hypernetwork reading the uplink observation and emitting the
/// column scalings of the estimation RNN.
#[derive(Clone, Debug, PartialEq)]
pub struct HypernetParams {
    /// `W_A^H`, `b_A^H`.
    pub input: Dense,
    /// `W_C^H`.
    pub recurrent: RealTensor,
    /// `W_B^H`, `b_B^H`.
    pub output: Dense,
    /// Feedback width `B`, needed to split the output.
    pub bits: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct HypernetVars {
    pub w_a: Var,
    pub b_a: Var,
    pub w_c: Var,
    pub w_b: Var,
    pub b_b: Var,
}

/// `ω = [ω_A (B), ω_B (ℓ^E), ω_C (ℓ^E)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct OmegaParts {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
}

impl OmegaParts {
    pub fn split(omega: &[f64], bits: usize, state: usize) -> Result<Self> {
        if omega.len() != bits + 2 * state {
            return Err(dim_err("omega partition", bits + 2 * state, omega.len()));
        }
        Ok(Self {
            a: omega[..bits].to_vec(),
            b: omega[bits..bits + state].to_vec(),
            c: omega[bits + state..].to_vec(),
        })
    }

    pub fn ones(bits: usize, state: usize) -> Self {
        Self {
            a: vec![1.0; bits],
            b: vec![1.0; state],
            c: vec![1.0; state],
        }
    }

    pub fn concat(&self) -> Vec<f64> {
        [self.a.as_slice(), &self.b, &self.c].concat()
    }
}

impl HypernetParams {
    pub fn new(antennas: usize, ul_pilots: usize, bits: usize, estimator_state: usize, state: usize, rng: &mut Rng) -> Self {
        let input = Dense::new(2 * antennas * ul_pilots, state, Init::Relu, rng);
        // Identity recurrence: the hypernet state integrates uplink evidence
        // across slots instead of forgetting it at init.
        let mut recurrent = RealTensor::zeros(&[state, state]);
        for i in 0..state {
            recurrent.data_mut()[i * state + i] = 1.0;
        }
        // Zero weights and unit bias: ω ≡ 1 until training moves it, so the
        // model starts as the plain estimation RNN.
        let width = bits + 2 * estimator_state;
        let output = Dense {
            weight: RealTensor::zeros(&[width, state]),
            bias: RealTensor::filled(&[1, width], 1.0),
        };
        Self {
            input,
            recurrent,
            output,
            bits,
        }
    }

    pub fn state_width(&self) -> usize {
        self.recurrent.rows()
    }

    pub fn omega_width(&self) -> usize {
        self.output.out_width()
    }

    /// `ℓ^E` implied by the output width.
    pub fn estimator_state(&self) -> usize {
        (self.omega_width() - self.bits) / 2
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> HypernetVars {
        HypernetVars {
            w_a: bind_tensor(g, &self.input.weight, trainable),
            b_a: bind_tensor(g, &self.input.bias, trainable),
            w_c: bind_tensor(g, &self.recurrent, trainable),
            w_b: bind_tensor(g, &self.output.weight, trainable),
            b_b: bind_tensor(g, &self.output.bias, trainable),
        }
    }
}

impl HypernetVars {
    pub fn leaves(&self) -> Vec<Var> {
        vec![self.w_a, self.b_a, self.w_c, self.w_b, self.b_b]
    }

    /// One step on stacked uplink observations `[n, 2 M L_ul]`. A missing
    /// previous state stands for the zero state.
    pub fn step(&self, g: &mut Graph, y_ul: Var, s_prev: Option<Var>) -> Result<(Var, Var)> {
        let mut pre = g.linear(y_ul, self.w_a, Some(self.b_a))?;
        if let Some(s) = s_prev {
            let rec = g.linear(s, self.w_c, None)?;
            pre = g.add(pre, rec)?;
        }
        let s = g.relu(pre);
        let omega = g.linear(s, self.w_b, Some(self.b_b))?;
        Ok((omega, s))
    }
}

impl Parameters for HypernetParams {
    fn named_params(&self) -> Vec<(String, &RealTensor)> {
        vec![
            ("hyper.w_a".into(), &self.input.weight),
            ("hyper.b_a".into(), &self.input.bias),
            ("hyper.w_c".into(), &self.recurrent),
            ("hyper.w_b".into(), &self.output.weight),
            ("hyper.b_b".into(), &self.output.bias),
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut RealTensor> {
        vec![
            &mut self.input.weight,
            &mut self.input.bias,
            &mut self.recurrent,
            &mut self.output.weight,
            &mut self.output.bias,
        ]
    }
}

/// `s_H = ReLU(W_A c2r(vec Y) + W_C s_prev + b_A)`, `ω = W_B s_H + b_B`.
pub fn hypernetwork_step(y_ul: &ComplexMatrix, s_prev: &[f64], params: &HypernetParams) -> Result<(Vec<f64>, Vec<f64>)> {
    let state = params.state_width();
    if s_prev.len() != state {
        return Err(dim_err("hypernetwork state", state, s_prev.len()));
    }
    if params.output.in_width() != state || params.input.out_width() != state {
        return Err(dim_err("hypernetwork widths", state, params.output.in_width()));
    }
    let x = c2r(y_ul);
    let mut s = params.input.forward(x.data())?;
    for (r, v) in s.iter_mut().enumerate() {
        let w = params.recurrent.row_slice(r);
        *v += w.iter().zip(s_prev).map(|(a, b)| a * b).sum::<f64>();
        *v = v.max(0.0);
    }
    let omega = params.output.forward(&s)?;
    Ok((omega, s))
}
