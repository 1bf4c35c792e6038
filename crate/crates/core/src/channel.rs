//! Multipath FDD channel generation.
//!
//! Each frame draws `P` paths whose angle of departure and gain are shared by
//! uplink and downlink. Each link gets its own AR(1) fading track per path:
//!
//! ```text
//! beta_1 ~ CN(0, 1)
//! beta_t = rho * beta_{t-1} + sqrt(1 - rho^2) * eps_t,   eps_t ~ CN(0, 1)
//! h_t    = sum_p alpha_p * a(theta_p) * beta_{p,t}
//! ```
//!
//! The array is a uniform linear array with half-wavelength spacing at the
//! uplink carrier; the downlink steering vectors use the same physical
//! spacing at the higher carrier. Gains are equal power, `alpha_p = 1/sqrt(P)`.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::numerics::{bessel_j0, ComplexMatrix, Rng};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Largest AoD magnitude drawn by [`sample_frame`].
pub const MAX_AOD: f64 = PI / 6.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    /// Angle of departure, radians.
    pub aod: f64,
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FadingTrack {
    pub rho: f64,
    pub values: Vec<Complex64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Uplink,
    Downlink,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CarrierGeometry {
    pub antennas: usize,
    pub spacing_m: f64,
    pub carrier_hz: f64,
}

impl CarrierGeometry {
    pub fn new(antennas: usize, spacing_m: f64, carrier_hz: f64) -> Self {
        Self {
            antennas,
            spacing_m,
            carrier_hz,
        }
    }

    fn check(&self) -> Result<()> {
        if self.antennas == 0 || !positive(self.spacing_m) || !positive(self.carrier_hz) {
            return Err(Error::Domain(format!("invalid array geometry {self:?}")));
        }
        Ok(())
    }
}

/// False for NaN as well as for non-positive values.
fn positive(x: f64) -> bool {
    x > 0.0
}

/// One coherence frame: shared long-term path features plus per-link fading.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultipathFrame {
    pub paths: Vec<PathParams>,
    pub ul_fading: Vec<FadingTrack>,
    pub dl_fading: Vec<FadingTrack>,
    pub slots: usize,
    pub carrier_ul_hz: f64,
    pub carrier_dl_hz: f64,
}

/// Fading correlation between consecutive slots, `J0(2 pi f_d tau)` with
/// maximum Doppler `f_d = v f_C / c`.
pub fn doppler_rho(velocity_mps: f64, carrier_hz: f64, slot_s: f64) -> Result<f64> {
    if !positive(carrier_hz) || !positive(slot_s) || velocity_mps.is_nan() || velocity_mps < 0.0 {
        return Err(Error::Domain(format!(
            "doppler_rho needs v >= 0, f_C > 0, tau > 0 (got {velocity_mps}, {carrier_hz}, {slot_s})"
        )));
    }
    let doppler = velocity_mps * carrier_hz / SPEED_OF_LIGHT;
    bessel_j0(2.0 * PI * doppler * slot_s)
}

/// ULA response `exp(-j 2 pi m d sin(theta) f_C / c)`, `m = 0..M-1`.
pub fn steering_vector(geom: &CarrierGeometry, aod: f64) -> ComplexMatrix {
    ComplexMatrix::column(&steering_entries(geom, aod))
}

fn steering_entries(geom: &CarrierGeometry, aod: f64) -> Vec<Complex64> {
    let step = -2.0 * PI * geom.spacing_m * aod.sin() * geom.carrier_hz / SPEED_OF_LIGHT;
    (0..geom.antennas)
        .map(|m| Complex64::from_polar(1.0, step * m as f64))
        .collect()
}

pub fn sample_fading_track(rho: f64, slots: usize, rng: &mut Rng) -> Result<FadingTrack> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::Domain(format!("fading correlation {rho} outside [-1, 1]")));
    }
    if slots == 0 {
        return Err(Error::Domain("fading track needs at least one slot".into()));
    }
    let innovation = (1.0 - rho * rho).sqrt();
    let mut values = Vec::with_capacity(slots);
    let mut beta = rng.complex_normal(1.0);
    values.push(beta);
    for _ in 1..slots {
        beta = rho * beta + innovation * rng.complex_normal(1.0);
        values.push(beta);
    }
    Ok(FadingTrack { rho, values })
}

pub fn sample_frame(cfg: &ExperimentConfig, rng: &mut Rng) -> Result<MultipathFrame> {
    let (rho_ul, rho_dl) = (cfg.rho_ul()?, cfg.rho_dl()?);
    let gain = 1.0 / (cfg.paths as f64).sqrt();
    let paths: Vec<PathParams> = (0..cfg.paths)
        .map(|_| PathParams {
            aod: rng.uniform(-MAX_AOD, MAX_AOD),
            gain,
        })
        .collect();
    let ul_fading = (0..cfg.paths)
        .map(|_| sample_fading_track(rho_ul, cfg.slots, rng))
        .collect::<Result<Vec<_>>>()?;
    let dl_fading = (0..cfg.paths)
        .map(|_| sample_fading_track(rho_dl, cfg.slots, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(MultipathFrame {
        paths,
        ul_fading,
        dl_fading,
        slots: cfg.slots,
        carrier_ul_hz: cfg.carrier_ul_hz,
        carrier_dl_hz: cfg.carrier_dl_hz(),
    })
}

impl MultipathFrame {
    pub fn fading(&self, link: Link) -> &[FadingTrack] {
        match link {
            Link::Uplink => &self.ul_fading,
            Link::Downlink => &self.dl_fading,
        }
    }

    /// Channel vectors for every slot of one link, steering vectors computed
    /// once per path.
    pub fn channel_sequence(&self, link: Link, geom: &CarrierGeometry) -> Result<Vec<Vec<Complex64>>> {
        geom.check()?;
        let tracks = self.fading(link);
        let mut out = vec![vec![Complex64::new(0.0, 0.0); geom.antennas]; self.slots];
        for (path, track) in self.paths.iter().zip(tracks) {
            let a = steering_entries(geom, path.aod);
            for (h, beta) in out.iter_mut().zip(&track.values) {
                let coeff = path.gain * beta;
                for (hm, am) in h.iter_mut().zip(&a) {
                    *hm += coeff * am;
                }
            }
        }
        Ok(out)
    }
}

/// `h_t = sum_p alpha_p a(theta_p) beta_{p,t}` for slot `t` (1-based).
pub fn channel_at(frame: &MultipathFrame, t: usize, link: Link, geom: &CarrierGeometry) -> Result<ComplexMatrix> {
    if t == 0 || t > frame.slots {
        return Err(Error::Index {
            index: t,
            len: frame.slots,
        });
    }
    geom.check()?;
    let mut h = vec![Complex64::new(0.0, 0.0); geom.antennas];
    for (path, track) in frame.paths.iter().zip(frame.fading(link)) {
        let coeff = path.gain * track.values[t - 1];
        for (hm, am) in h.iter_mut().zip(steering_entries(geom, path.aod)) {
            *hm += coeff * am;
        }
    }
    Ok(ComplexMatrix::column(&h))
}

/// JSON container for a set of frames and the configuration that drew them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameDataset {
    pub format_version: u32,
    pub config: ExperimentConfig,
    pub frames: Vec<MultipathFrame>,
}

impl FrameDataset {
    pub const FORMAT_VERSION: u32 = 1;

    pub fn generate(cfg: &ExperimentConfig, count: usize, rng: &mut Rng) -> Result<Self> {
        let frames = (0..count).map(|_| sample_frame(cfg, rng)).collect::<Result<_>>()?;
        Ok(Self {
            format_version: Self::FORMAT_VERSION,
            config: cfg.clone(),
            frames,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(file, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let ds: Self = serde_json::from_reader(file)?;
        if ds.format_version != Self::FORMAT_VERSION {
            return Err(Error::Format(format!(
                "frame dataset version {} (expected {})",
                ds.format_version,
                Self::FORMAT_VERSION
            )));
        }
        Ok(ds)
    }
}
