//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"HRNNCKPT"  u32 version
//! u32 meta_len, meta_len bytes of JSON (variant, system config, widths, pilot powers)
//! u32 tensor_count
//! per tensor: u32 name_len, name, u32 ndim, ndim x u64 dims, f64 data
//! ```
//!
//! Pilots are stored real-stacked as `pilots.x_ul` and `pilots.x_dl`.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EstimatorParams, Parameters};
use crate::airlink::PilotSet;
use crate::config::{ExperimentConfig, NetworkDims, Variant};
use crate::error::{Error, Result};
use crate::numerics::{r2c, ComplexMatrix, RealTensor, Rng};

const MAGIC: &[u8; 8] = b"HRNNCKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Everything needed to rerun a trained model.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ExperimentConfig,
    pub dims: NetworkDims,
    pub params: EstimatorParams,
    pub pilots: PilotSet,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    variant: Variant,
    config: ExperimentConfig,
    dims: NetworkDims,
    power_ul: f64,
    power_dl: f64,
}

impl Checkpoint {
    pub fn variant(&self) -> Variant {
        self.params.variant()
    }

    /// Fails with [`Error::Incompatible`] when the stored model cannot run on
    /// a system described by `cfg`.
    pub fn check_compatible(&self, cfg: &ExperimentConfig) -> Result<()> {
        let pairs = [
            ("antennas", self.config.antennas, cfg.antennas),
            ("feedback_bits", self.config.feedback_bits, cfg.feedback_bits),
            ("dl_pilots", self.config.dl_pilots, cfg.dl_pilots),
            ("ul_pilots", self.config.ul_pilots, cfg.ul_pilots),
        ];
        for (name, stored, asked) in pairs {
            let relevant = name != "ul_pilots" || self.variant() == Variant::HyperRnn;
            if relevant && stored != asked {
                return Err(Error::Incompatible(format!("{name}: checkpoint has {stored}, configuration has {asked}")));
            }
        }
        Ok(())
    }

    fn tensors(&self) -> Vec<(String, RealTensor)> {
        let mut out: Vec<(String, RealTensor)> = self.params.named_params().into_iter().map(|(n, t)| (n, t.clone())).collect();
        out.push(("pilots.x_ul".into(), self.pilots.ul_stacked()));
        out.push(("pilots.x_dl".into(), self.pilots.dl_stacked()));
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        let meta = Meta {
            format_version: FORMAT_VERSION,
            variant: self.variant(),
            config: self.config.clone(),
            dims: self.dims.clone(),
            power_ul: self.pilots.power_ul,
            power_dl: self.pilots.power_dl,
        };
        let meta = serde_json::to_vec(&meta)?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        write_u32(w, meta.len())?;
        w.write_all(&meta)?;
        let tensors = self.tensors();
        write_u32(w, tensors.len())?;
        for (name, t) in &tensors {
            write_u32(w, name.len())?;
            w.write_all(name.as_bytes())?;
            write_u32(w, t.shape().len())?;
            for &d in t.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for &v in t.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a checkpoint file".into()));
        }
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let meta_len = read_u32(r)? as usize;
        let meta: Meta = serde_json::from_slice(&read_bytes(r, meta_len)?)?;
        meta.config.validate()?;

        // A template fixes the expected names and shapes.
        let mut params = EstimatorParams::new(meta.variant, &meta.config, &meta.dims, &mut Rng::new(0));
        let expected: Vec<(String, Vec<usize>)> = params
            .named_params()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        let m = meta.config.antennas;
        let (l_ul, l_dl) = (meta.config.ul_pilots, meta.config.dl_pilots);

        let count = read_u32(r)? as usize;
        if count != expected.len() + 2 {
            return Err(Error::Format(format!("expected {} tensors, found {count}", expected.len() + 2)));
        }
        let mut loaded = Vec::with_capacity(count);
        for _ in 0..count {
            loaded.push(read_tensor(r)?);
        }
        let x_dl = loaded.pop().expect("count checked");
        let x_ul = loaded.pop().expect("count checked");
        for ((name, shape), (got_name, t)) in expected.iter().zip(&loaded) {
            if name != got_name || shape.as_slice() != t.shape() {
                return Err(Error::Format(format!("tensor `{got_name}` {:?} where `{name}` {shape:?} was expected", t.shape())));
            }
        }
        for (slot, (_, t)) in params.params_mut().into_iter().zip(loaded) {
            *slot = t;
        }
        let x_ul = expect_pilot(x_ul, "pilots.x_ul", 1, l_ul)?;
        let x_dl = expect_pilot(x_dl, "pilots.x_dl", m, l_dl)?;
        Ok(Self {
            config: meta.config,
            dims: meta.dims,
            params,
            pilots: PilotSet {
                x_ul,
                x_dl,
                power_ul: meta.power_ul,
                power_dl: meta.power_dl,
            },
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn expect_pilot((name, t): (String, RealTensor), want: &str, rows: usize, cols: usize) -> Result<ComplexMatrix> {
    if name != want || t.len() != 2 * rows * cols {
        return Err(Error::Format(format!("tensor `{name}` of {} values where `{want}` was expected", t.len())));
    }
    r2c(&t, rows, cols)
}

fn write_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("length {v} exceeds u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_bytes(r: &mut impl Read, n: usize) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.take(n as u64).read_to_end(&mut buf)?;
    if buf.len() != n {
        return Err(Error::Format("unexpected end of file".into()));
    }
    Ok(buf)
}

fn read_tensor(r: &mut impl Read) -> Result<(String, RealTensor)> {
    let name_len = read_u32(r)? as usize;
    let name = String::from_utf8(read_bytes(r, name_len)?).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
    let ndim = read_u32(r)? as usize;
    if ndim > 4 {
        return Err(Error::Format(format!("tensor `{name}` has rank {ndim}")));
    }
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        shape.push(usize::try_from(u64::from_le_bytes(b)).map_err(|_| Error::Format("dimension overflow".into()))?);
    }
    let len: usize = shape.iter().product();
    let raw = read_bytes(r, len * 8)?;
    let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let t = RealTensor::new(shape, data).map_err(|e| Error::Format(format!("tensor `{name}`: {e}")))?;
    Ok((name, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(variant: Variant) -> Checkpoint {
        let config = ExperimentConfig {
            antennas: 4,
            feedback_bits: 5,
            paths: 2,
            ..Default::default()
        };
        let dims = NetworkDims {
            quantizer_hidden: vec![6, 5],
            estimator_state: 7,
            hyper_state: 8,
            baseline_hidden: vec![6],
        };
        let mut rng = Rng::new(30);
        let params = EstimatorParams::new(variant, &config, &dims, &mut rng);
        let pilots = PilotSet::random(4, 2, 2, &mut rng).unwrap();
        Checkpoint {
            config,
            dims,
            params,
            pilots,
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        for variant in [Variant::HyperRnn, Variant::Baseline] {
            let ck = sample(variant);
            let mut buf = Vec::new();
            ck.write_to(&mut buf).unwrap();
            let back = Checkpoint::read_from(&mut buf.as_slice()).unwrap();
            assert_eq!(back, ck);
        }
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ck = sample(Variant::HyperRnn);
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ck);
    }

    #[test]
    fn corrupt_input_rejected() {
        let ck = sample(Variant::HyperRnn);
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::read_from(&mut bad.as_slice()), Err(Error::Format(_))));
        let truncated = &buf[..buf.len() - 3];
        assert!(Checkpoint::read_from(&mut &truncated[..]).is_err());
    }

    #[test]
    fn incompatible_config_detected() {
        let ck = sample(Variant::HyperRnn);
        assert!(ck.check_compatible(&ck.config).is_ok());
        let other = ExperimentConfig {
            antennas: 8,
            ..ck.config.clone()
        };
        assert!(matches!(ck.check_compatible(&other), Err(Error::Incompatible(_))));
        let other = ExperimentConfig {
            paths: 16,
            snr_db: 0.0,
            ..ck.config.clone()
        };
        assert!(ck.check_compatible(&other).is_ok());

        let base = sample(Variant::Baseline);
        let other = ExperimentConfig {
            ul_pilots: 4,
            ..base.config.clone()
        };
        assert!(base.check_compatible(&other).is_ok());
    }
}
