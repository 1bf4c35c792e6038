//! System, network and training configuration.
//!
//! Config files are TOML. Every field is optional on input and falls back to
//! the defaults below, so a file only needs the values it changes:
//!
//! ```toml
//! antennas = 16
//! paths = 4
//! feedback_bits = 10
//! rho_override = 0.0
//! seed = 7
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::airlink::snr_to_sigma;
use crate::channel::{doppler_rho, CarrierGeometry, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

/// Physical system and link parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Uplink carrier frequency in Hz.
    pub carrier_ul_hz: f64,
    /// Downlink carrier minus uplink carrier, in Hz.
    pub carrier_gap_hz: f64,
    /// Mobile speed in m/s.
    pub velocity_mps: f64,
    /// Slot duration in seconds.
    pub slot_duration_s: f64,
    pub paths: usize,
    pub antennas: usize,
    pub feedback_bits: usize,
    pub dl_pilots: usize,
    pub ul_pilots: usize,
    pub snr_db: f64,
    /// Slots per coherence frame.
    pub slots: usize,
    /// Forces both fading correlation coefficients instead of deriving them
    /// from the Doppler spread.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho_override: Option<f64>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            carrier_ul_hz: 3e9,
            carrier_gap_hz: 1e8,
            velocity_mps: 30.0 / 3.6,
            slot_duration_s: 1e-4,
            paths: 8,
            antennas: 64,
            feedback_bits: 20,
            dl_pilots: 2,
            ul_pilots: 2,
            snr_db: 10.0,
            slots: 8,
            rho_override: None,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_ul_hz", self.carrier_ul_hz),
            ("slot_duration_s", self.slot_duration_s),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.carrier_gap_hz.is_finite() && self.carrier_gap_hz >= 0.0) {
            return Err(Error::Config(format!("carrier_gap_hz must be >= 0, got {}", self.carrier_gap_hz)));
        }
        if !(self.velocity_mps.is_finite() && self.velocity_mps >= 0.0) {
            return Err(Error::Config(format!("velocity_mps must be >= 0, got {}", self.velocity_mps)));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::Config("snr_db must be finite".into()));
        }
        let counts = [
            ("paths", self.paths),
            ("antennas", self.antennas),
            ("feedback_bits", self.feedback_bits),
            ("dl_pilots", self.dl_pilots),
            ("ul_pilots", self.ul_pilots),
            ("slots", self.slots),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if let Some(rho) = self.rho_override {
            if !(-1.0..=1.0).contains(&rho) {
                return Err(Error::Config(format!("rho_override must lie in [-1, 1], got {rho}")));
            }
        }
        Ok(())
    }

    pub fn carrier_dl_hz(&self) -> f64 {
        self.carrier_ul_hz + self.carrier_gap_hz
    }

    /// Half-wavelength spacing at the uplink carrier, shared by both links.
    pub fn element_spacing_m(&self) -> f64 {
        0.5 * SPEED_OF_LIGHT / self.carrier_ul_hz
    }

    pub fn geometry_ul(&self) -> CarrierGeometry {
        CarrierGeometry::new(self.antennas, self.element_spacing_m(), self.carrier_ul_hz)
    }

    pub fn geometry_dl(&self) -> CarrierGeometry {
        CarrierGeometry::new(self.antennas, self.element_spacing_m(), self.carrier_dl_hz())
    }

    pub fn rho_ul(&self) -> Result<f64> {
        match self.rho_override {
            Some(r) => Ok(r),
            None => doppler_rho(self.velocity_mps, self.carrier_ul_hz, self.slot_duration_s),
        }
    }

    pub fn rho_dl(&self) -> Result<f64> {
        match self.rho_override {
            Some(r) => Ok(r),
            None => doppler_rho(self.velocity_mps, self.carrier_dl_hz(), self.slot_duration_s),
        }
    }

    /// Noise variance under unit pilot power budgets.
    pub fn noise_variance(&self) -> f64 {
        snr_to_sigma(self.snr_db, 1.0)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Which estimator architecture is trained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Uplink-driven hypernetwork modulating a recurrent estimator.
    HyperRnn,
    /// Feedforward DL-DNN: downlink pilots, feedback and a stateless estimator.
    Baseline,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::HyperRnn => "hyperrnn",
            Variant::Baseline => "baseline",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hyperrnn" => Ok(Variant::HyperRnn),
            "baseline" | "dl-dnn" => Ok(Variant::Baseline),
            other => Err(Error::Config(format!("unknown variant `{other}`"))),
        }
    }
}

/// Layer widths of every learnable block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDims {
    /// Hidden widths of the feedback quantizer (ReLU layers before the sign).
    pub quantizer_hidden: Vec<usize>,
    /// State width of the estimation RNN.
    pub estimator_state: usize,
    /// State width of the hypernetwork.
    pub hyper_state: usize,
    /// Hidden widths of the feedforward baseline estimator.
    pub baseline_hidden: Vec<usize>,
}

impl NetworkDims {
    pub fn paper() -> Self {
        Self {
            quantizer_hidden: vec![1024, 512, 256],
            estimator_state: 256,
            hyper_state: 1024,
            baseline_hidden: vec![1024, 512, 256],
        }
    }

    /// One eighth of the paper widths (one quarter for the RNN state), sized
    /// for a single CPU core.
    pub fn desk() -> Self {
        Self {
            quantizer_hidden: vec![128, 64, 32],
            estimator_state: 256,
            hyper_state: 128,
            baseline_hidden: vec![128, 64, 32],
        }
    }
}

/// Optimizer and schedule settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub iterations: usize,
    pub lr_initial: f64,
    pub lr_final: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Evaluate held-out NMSE every this many iterations (0 disables).
    pub eval_every: usize,
    pub eval_frames: usize,
    /// Reuse a fixed pool of this many frames instead of fresh draws.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_dataset: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Scale::Desk.train_config()
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.iterations == 0 {
            return Err(Error::Config("batch_size and iterations must be at least 1".into()));
        }
        if !(self.lr_initial > 0.0 && self.lr_final > 0.0 && self.lr_final <= self.lr_initial) {
            return Err(Error::Config(format!(
                "learning rate must decrease from lr_initial to lr_final (got {} -> {})",
                self.lr_initial, self.lr_final
            )));
        }
        if self.fixed_dataset == Some(0) {
            return Err(Error::Config("fixed_dataset must hold at least one frame".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Paper,
}

impl Scale {
    pub fn dims(self) -> NetworkDims {
        match self {
            Scale::Desk => NetworkDims::desk(),
            Scale::Paper => NetworkDims::paper(),
        }
    }

    /// System defaults: the full table at paper scale, a 16-antenna
    /// four-path array at desk scale.
    pub fn system(self) -> ExperimentConfig {
        match self {
            Scale::Desk => ExperimentConfig {
                antennas: 16,
                paths: 4,
                ..Default::default()
            },
            Scale::Paper => ExperimentConfig::default(),
        }
    }

    pub fn antennas(self) -> usize {
        match self {
            Scale::Desk => 16,
            Scale::Paper => 64,
        }
    }

    pub fn train_config(self) -> TrainConfig {
        let (batch_size, iterations) = match self {
            Scale::Desk => (256, 3000),
            Scale::Paper => (1024, 50_000),
        };
        TrainConfig {
            batch_size,
            iterations,
            lr_initial: 1e-3,
            lr_final: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            eval_every: 0,
            eval_frames: 10_000,
            fixed_dataset: None,
        }
    }
}

impl FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "paper" => Ok(Scale::Paper),
            other => Err(Error::Config(format!("unknown scale `{other}`"))),
        }
    }
}

/// Settings for one run: a scale preset with a run file laid over it.
///
/// A run file has up to three optional tables, and each key present in a
/// table replaces the preset value:
///
/// ```toml
/// [system]
/// paths = 2
/// seed = 9
///
/// [train]
/// iterations = 500
///
/// [network]
/// estimator_state = 32
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    pub system: ExperimentConfig,
    pub train: TrainConfig,
    pub network: NetworkDims,
}

impl RunSettings {
    pub fn preset(scale: Scale) -> Self {
        Self {
            system: scale.system(),
            train: scale.train_config(),
            network: scale.dims(),
        }
    }

    /// The preset for `scale` overridden by the tables of `text`.
    pub fn resolve(scale: Scale, text: Option<&str>) -> Result<Self> {
        let preset = Self::preset(scale);
        let Some(text) = text else {
            return Ok(preset);
        };
        let file: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut merged = toml::Table::try_from(&preset).map_err(|e| Error::Config(e.to_string()))?;
        for (section, value) in file {
            let Some(toml::Value::Table(target)) = merged.get_mut(&section) else {
                return Err(Error::Config(format!("unknown section `{section}`")));
            };
            let toml::Value::Table(entries) = value else {
                return Err(Error::Config(format!("`{section}` must be a table")));
            };
            target.extend(entries);
        }
        let out: Self = merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        out.system.validate()?;
        out.train.validate()?;
        Ok(out)
    }

    pub fn load(scale: Scale, path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::resolve(scale, Some(&std::fs::read_to_string(p)?)),
            None => Self::resolve(scale, None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_follow_system_table() {
        let c = ExperimentConfig::default();
        assert_eq!(c.carrier_ul_hz, 3e9);
        assert_eq!(c.carrier_dl_hz(), 3.1e9);
        assert_eq!(c.antennas, 64);
        assert_eq!(c.dl_pilots, 2);
        assert_eq!(c.snr_db, 10.0);
        assert_eq!(c.slots, 8);
        assert!((c.noise_variance() - 0.1).abs() < 1e-15);
        c.validate().unwrap();
    }

    #[test]
    fn partial_file_uses_defaults() {
        let c = ExperimentConfig::from_toml("antennas = 16\nrho_override = 0.0\n").unwrap();
        assert_eq!(c.antennas, 16);
        assert_eq!(c.rho_ul().unwrap(), 0.0);
        assert_eq!(c.paths, 8);
        assert!(ExperimentConfig::from_toml("antenas = 16").is_err());
        assert!(ExperimentConfig::from_toml("paths = 0").is_err());
        assert!(ExperimentConfig::from_toml("rho_override = 1.5").is_err());
    }

    #[test]
    fn train_config_checks() {
        let mut t = TrainConfig::default();
        t.validate().unwrap();
        t.lr_final = 1e-2;
        assert!(t.validate().is_err());
    }

    #[test]
    fn run_file_overlays_preset() {
        let text = "[system]\npaths = 2\nseed = 9\n\n[train]\niterations = 500\n\n[network]\nestimator_state = 32\n";
        let r = RunSettings::resolve(Scale::Desk, Some(text)).unwrap();
        assert_eq!(r.system.paths, 2);
        assert_eq!(r.system.seed, 9);
        assert_eq!(r.system.antennas, 16);
        assert_eq!(r.train.iterations, 500);
        assert_eq!(r.train.batch_size, 256);
        assert_eq!(r.network.estimator_state, 32);
        assert_eq!(r.network.hyper_state, NetworkDims::desk().hyper_state);
        assert_eq!(RunSettings::resolve(Scale::Paper, None).unwrap(), RunSettings::preset(Scale::Paper));
        assert!(RunSettings::resolve(Scale::Desk, Some("[sytem]\npaths = 2\n")).is_err());
        assert!(RunSettings::resolve(Scale::Desk, Some("[system]\npath = 2\n")).is_err());
        assert!(RunSettings::resolve(Scale::Desk, Some("[train]\nbatch_size = 0\n")).is_err());
    }

    proptest! {
        #[test]
        fn toml_roundtrip(
            paths in 1usize..32, antennas in 1usize..128, bits in 1usize..40,
            lul in 1usize..5, snr in -10.0f64..30.0, seed in 0u64..=i64::MAX as u64,
            rho in proptest::option::of(-1.0f64..=1.0), v in 0.0f64..100.0,
        ) {
            let cfg = ExperimentConfig {
                paths, antennas, feedback_bits: bits, ul_pilots: lul, snr_db: snr,
                seed, rho_override: rho, velocity_mps: v, ..Default::default()
            };
            let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}
