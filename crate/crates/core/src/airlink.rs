//! Pilot observation models and pilot power constraints.
//!
//! Uplink: the BS receives `Y = h x + N` (`M × L_ul`).
//! Downlink: the user receives `y = hᴴ X + n` (`1 × L_dl`).
//! Noise entries are circularly-symmetric complex Gaussian with variance
//! `sigma²`. SNR is defined as `P / sigma²` with unit power budgets.

use num_complex::Complex64;

use crate::error::{dim_err, Error, Result};
use crate::numerics::{c2r, r2c, ComplexMatrix, RealTensor, Rng};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    pub variance: f64,
}

impl NoiseModel {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance >= 0.0 && variance.is_finite()) {
            return Err(Error::Domain(format!("noise variance must be >= 0, got {variance}")));
        }
        Ok(Self { variance })
    }

    fn sample(&self, rows: usize, cols: usize, rng: &mut Rng) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| rng.complex_normal(self.variance))
    }
}

/// Trainable pilots and their per-symbol / per-column power budgets.
#[derive(Clone, Debug, PartialEq)]
pub struct PilotSet {
    /// `1 × L_ul` uplink pilot row.
    pub x_ul: ComplexMatrix,
    /// `M × L_dl` downlink pilot matrix.
    pub x_dl: ComplexMatrix,
    pub power_ul: f64,
    pub power_dl: f64,
}

impl PilotSet {
    /// Random Gaussian pilots projected onto the power budgets.
    pub fn random(antennas: usize, ul_pilots: usize, dl_pilots: usize, rng: &mut Rng) -> Result<Self> {
        let x_ul = ComplexMatrix::from_fn(1, ul_pilots, |_, _| rng.complex_normal(1.0));
        let x_dl = ComplexMatrix::from_fn(antennas, dl_pilots, |_, _| rng.complex_normal(1.0));
        project_power(&PilotSet {
            x_ul,
            x_dl,
            power_ul: 1.0,
            power_dl: 1.0,
        })
    }

    pub fn antennas(&self) -> usize {
        self.x_dl.rows()
    }

    pub fn ul_len(&self) -> usize {
        self.x_ul.cols()
    }

    pub fn dl_len(&self) -> usize {
        self.x_dl.cols()
    }

    /// Real-stacked uplink pilots, `1 × 2 L_ul`.
    pub fn ul_stacked(&self) -> RealTensor {
        as_row(c2r(&self.x_ul))
    }

    /// Real-stacked downlink pilots, `1 × 2 M L_dl`.
    pub fn dl_stacked(&self) -> RealTensor {
        as_row(c2r(&self.x_dl))
    }

    pub fn set_ul_stacked(&mut self, v: &RealTensor) -> Result<()> {
        self.x_ul = r2c(v, 1, self.ul_len())?;
        Ok(())
    }

    pub fn set_dl_stacked(&mut self, v: &RealTensor) -> Result<()> {
        self.x_dl = r2c(v, self.antennas(), self.dl_len())?;
        Ok(())
    }
}

fn as_row(t: RealTensor) -> RealTensor {
    RealTensor::row(t.into_data())
}

/// `Y = h x + N`.
pub fn uplink_receive(h_ul: &ComplexMatrix, x_ul: &ComplexMatrix, noise: NoiseModel, rng: &mut Rng) -> Result<ComplexMatrix> {
    if h_ul.cols() != 1 || x_ul.rows() != 1 {
        return Err(dim_err(
            "uplink_receive",
            "M×1 channel and 1×L pilots",
            format!("{}×{} and {}×{}", h_ul.rows(), h_ul.cols(), x_ul.rows(), x_ul.cols()),
        ));
    }
    let clean = h_ul.matmul(x_ul)?;
    clean.add(&noise.sample(clean.rows(), clean.cols(), rng))
}

/// `y = hᴴ X + n`.
pub fn downlink_receive(h_dl: &ComplexMatrix, x_dl: &ComplexMatrix, noise: NoiseModel, rng: &mut Rng) -> Result<ComplexMatrix> {
    if h_dl.cols() != 1 || x_dl.rows() != h_dl.rows() {
        return Err(dim_err(
            "downlink_receive",
            format!("M×1 channel and M×L pilots with M = {}", h_dl.rows()),
            format!("{}×{} and {}×{}", h_dl.rows(), h_dl.cols(), x_dl.rows(), x_dl.cols()),
        ));
    }
    let clean = h_dl.conj_transpose().matmul(x_dl)?;
    clean.add(&noise.sample(clean.rows(), clean.cols(), rng))
}

/// Rescales every uplink symbol to `|x_l|² = P_ul` and every downlink column
/// to `‖X_l‖² = P_dl`, keeping directions.
pub fn project_power(p: &PilotSet) -> Result<PilotSet> {
    let mut x_ul = p.x_ul.clone();
    for l in 0..x_ul.cols() {
        let z = x_ul.get(0, l);
        let mag = z.norm();
        if mag == 0.0 || !mag.is_finite() {
            return Err(Error::DegeneratePilot(format!("uplink pilot {l} has magnitude {mag}")));
        }
        x_ul.set(0, l, z * (p.power_ul.sqrt() / mag));
    }
    let mut x_dl = p.x_dl.clone();
    for l in 0..x_dl.cols() {
        let col = x_dl.column_values(l);
        let norm = col.iter().map(Complex64::norm_sqr).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::DegeneratePilot(format!("downlink pilot column {l} has norm {norm}")));
        }
        let s = p.power_dl.sqrt() / norm;
        for (m, z) in col.into_iter().enumerate() {
            x_dl.set(m, l, z * s);
        }
    }
    Ok(PilotSet {
        x_ul,
        x_dl,
        power_ul: p.power_ul,
        power_dl: p.power_dl,
    })
}

/// Noise variance giving `snr_db` for transmit power `p_tx`.
pub fn snr_to_sigma(snr_db: f64, p_tx: f64) -> f64 {
    p_tx / 10f64.powf(snr_db / 10.0)
}
