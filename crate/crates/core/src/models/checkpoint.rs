//! Self-describing model checkpoints.
//!
//! Layout (little endian): `PFCK`, `u32` format version, `u32` header
//! length, JSON header, `u32` record count, then records of
//! `u32` name length, name, `u32` rank, `u32` dims, `f32` values.
//!
//! Besides the parameters, every file stores a fixed probe input and the
//! output the model produced for it when saved. Loading rebuilds the model,
//! reruns the probe and rejects the file unless the output is bit-identical.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::classifier::{build_classifier, Classifier, ClassifierSpec};
use super::params::ParamStore;
use super::train::{EpochRecord, TrainConfig};
use super::unet::{build_unet, UNet, UNetSpec};
use crate::data::msf::Reader;
use crate::data::{ScalerParams, PATCH_H, PATCH_W};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PFCK";
pub const CHECKPOINT_VERSION: u32 = 1;

const PROBE_INPUT: &str = "__probe.input";
const PROBE_OUTPUT: &str = "__probe.output";
const PROBE_SEED: u64 = 0x0050_524f_4245;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Classifier(ClassifierSpec),
    Unet(UNetSpec),
}

impl ModelSpec {
    pub fn in_channels(&self) -> usize {
        match self {
            Self::Classifier(s) => s.in_channels,
            Self::Unet(s) => s.in_channels,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Model {
    Classifier(Classifier),
    Unet(UNet),
}

impl Model {
    pub fn build(spec: ModelSpec, seed: u64) -> Result<Self> {
        Ok(match spec {
            ModelSpec::Classifier(s) => Self::Classifier(build_classifier(s, seed)?),
            ModelSpec::Unet(s) => Self::Unet(build_unet(s, seed)?),
        })
    }

    pub fn spec(&self) -> ModelSpec {
        match self {
            Self::Classifier(m) => ModelSpec::Classifier(*m.spec()),
            Self::Unet(m) => ModelSpec::Unet(*m.spec()),
        }
    }

    pub fn store(&self) -> &ParamStore {
        match self {
            Self::Classifier(m) => m.store(),
            Self::Unet(m) => m.store(),
        }
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        match self {
            Self::Classifier(m) => m.store_mut(),
            Self::Unet(m) => m.store_mut(),
        }
    }

    /// Eval-mode output: classifier logits or U-Net main output.
    pub fn infer(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        match self {
            Self::Classifier(m) => m.logits(x),
            Self::Unet(m) => m.infer(x),
        }
    }
}

/// A model plus everything needed to reproduce its inputs.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model,
    pub history: Vec<EpochRecord>,
    pub scaler: Option<ScalerParams>,
    /// Band centers of the training data, µm.
    pub wavelengths: Option<Vec<f32>>,
    pub train_config: Option<TrainConfig>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    spec: ModelSpec,
    history: Vec<EpochRecord>,
    scaler: Option<ScalerParams>,
    scaler_fingerprint: Option<String>,
    #[serde(default)]
    wavelengths: Option<Vec<f32>>,
    train_config: Option<TrainConfig>,
}

fn probe_input(channels: usize) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    Tensor::from_fn(vec![2, channels, PATCH_H, PATCH_W], |_| rng.random::<f32>())
}

fn put_record(out: &mut Vec<u8>, name: &str, t: &Tensor<f32>) {
    out.extend((name.len() as u32).to_le_bytes());
    out.extend(name.as_bytes());
    out.extend((t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend((d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend(v.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn new(model: Model) -> Self {
        Self {
            model,
            history: Vec::new(),
            scaler: None,
            wavelengths: None,
            train_config: None,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let header = Header {
            format_version: CHECKPOINT_VERSION,
            spec: self.model.spec(),
            history: self.history.clone(),
            scaler: self.scaler.clone(),
            scaler_fingerprint: self.scaler.as_ref().map(ScalerParams::fingerprint),
            wavelengths: self.wavelengths.clone(),
            train_config: self.train_config.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.extend(CHECKPOINT_MAGIC);
        out.extend(CHECKPOINT_VERSION.to_le_bytes());
        out.extend((json.len() as u32).to_le_bytes());
        out.extend(&json);
        let store = self.model.store();
        out.extend((store.len() as u32 + 2).to_le_bytes());
        for (name, t) in store.iter() {
            put_record(&mut out, name, t);
        }
        let probe = probe_input(header.spec.in_channels());
        let response = self.model.infer(&probe)?;
        put_record(&mut out, PROBE_INPUT, &probe);
        put_record(&mut out, PROBE_OUTPUT, &response);
        Ok(out)
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4, "magic")? != CHECKPOINT_MAGIC {
            return Err(Error::format(0, "not a checkpoint (bad magic)"));
        }
        let version = r.u32("format version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Incompatible(format!(
                "checkpoint format {version}, this build reads {CHECKPOINT_VERSION}"
            )));
        }
        let len = r.u32("header length")? as usize;
        let at = r.pos;
        let header: Header = serde_json::from_slice(r.take(len, "header")?)
            .map_err(|e| Error::format(at as u64, format!("bad header: {e}")))?;
        if let (Some(s), Some(fp)) = (&header.scaler, &header.scaler_fingerprint) {
            if &s.fingerprint() != fp {
                return Err(Error::Incompatible("scaler fingerprint mismatch".into()));
            }
        }
        let mut model = Model::build(header.spec, 0)?;
        let count = r.u32("record count")? as usize;
        let (mut probe_in, mut probe_out) = (None, None);
        let mut assigned = vec![false; model.store().len()];
        for _ in 0..count {
            let n = r.u32("name length")? as usize;
            let at = r.pos;
            let name = std::str::from_utf8(r.take(n, "name")?)
                .map_err(|_| Error::format(at as u64, "record name is not UTF-8"))?
                .to_string();
            let rank = r.u32("rank")? as usize;
            if rank > 8 {
                return Err(Error::format((r.pos - 4) as u64, format!("implausible rank {rank}")));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32("dimension")? as usize);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| Error::format(r.pos as u64, "tensor size overflows"))?;
            let t = Tensor::new(shape, r.f32s(numel, &name)?)?;
            match name.as_str() {
                PROBE_INPUT => probe_in = Some(t),
                PROBE_OUTPUT => probe_out = Some(t),
                _ => {
                    model.store_mut().assign(&name, t)?;
                    assigned[model.store().id(&name).expect("just assigned")] = true;
                }
            }
        }
        if r.pos != buf.len() {
            return Err(Error::format(r.pos as u64, "trailing bytes after records"));
        }
        if let Some(i) = assigned.iter().position(|a| !a) {
            return Err(Error::Incompatible(format!(
                "checkpoint lacks parameter {}",
                model.store().name(i)
            )));
        }
        let (Some(pi), Some(po)) = (probe_in, probe_out) else {
            return Err(Error::Incompatible("checkpoint lacks the verification probe".into()));
        };
        let got = model.infer(&pi)?;
        let same = got.shape() == po.shape()
            && got.data().iter().zip(po.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        if !same {
            return Err(Error::Incompatible(
                "probe output differs from the saved output; checkpoint does not reproduce".into(),
            ));
        }
        Ok(Self {
            model,
            history: header.history,
            scaler: header.scaler,
            wavelengths: header.wavelengths,
            train_config: header.train_config,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ClassifierArch, UNetHead};

    fn small_unet() -> Model {
        let mut spec = UNetSpec::new(3, UNetHead::Frp);
        spec.base_width = 4;
        spec.depth = 2;
        Model::build(ModelSpec::Unet(spec), 5).unwrap()
    }

    #[test]
    fn round_trip_reproduces_outputs() {
        let m = small_unet();
        let bytes = Checkpoint::new(m.clone()).encode().unwrap();
        let back = Checkpoint::decode(&bytes).unwrap();
        let x = probe_input(3);
        assert_eq!(m.infer(&x).unwrap().data(), back.model.infer(&x).unwrap().data());
    }

    #[test]
    fn tampered_weights_fail_the_probe() {
        let m = Model::build(ModelSpec::Classifier(ClassifierSpec::new(ClassifierArch::SimpleCnn, 3)), 1).unwrap();
        let mut bytes = Checkpoint::new(m).encode().unwrap();
        // First record is a conv weight right after the header; flip a bit in it.
        let hlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let first = 12 + hlen + 4;
        let nlen = u32::from_le_bytes(bytes[first..first + 4].try_into().unwrap()) as usize;
        let value = first + 4 + nlen + 4 + 4 * 4;
        bytes[value + 3] ^= 0x01;
        assert!(matches!(Checkpoint::decode(&bytes), Err(Error::Incompatible(_))));
    }

    #[test]
    fn bad_magic_and_truncation() {
        let bytes = Checkpoint::new(small_unet()).encode().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::decode(&bad), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(
            Checkpoint::decode(&bytes[..bytes.len() - 3]),
            Err(Error::Format { .. })
        ));
    }
}
