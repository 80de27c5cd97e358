//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "DINKCKPT"
//! version      u32      currently 1
//! stage        u8       0 = pretrained, 1 = finetuned
//! config_len   u32      followed by the training config as UTF-8 JSON
//! n_tensors    u32      followed by n_tensors tensor records
//! n_states     u32      followed by n_states optimizer records
//!
//! tensor record:    name_len u16, name (UTF-8), rows u64, cols u64, rows*cols f64
//! optimizer record: name_len u16, name, step_count u64, beta1 f64, beta2 f64,
//!                   epsilon f64, rows u64, cols u64, first moment (rows*cols f64),
//!                   second moment (rows*cols f64)
//! ```
//!
//! Tensor names are `encoder.{l}.weight`, `encoder.{l}.slope`, `projector.weight`,
//! `projector.slope` and, for fine-tuned models, `centers`. Nothing may follow the
//! last record.

use std::path::Path;

use super::{Stage, TrainConfig, TrainedModel};
use crate::clustering::ClusterCenters;
use crate::error::{Error, Result};
use crate::model::{DinkModel, EncoderParams, GcnLayer, ProjectorParams};
use crate::numerics::{AdamConfig, AdamState, DenseMatrix, ParamTensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DINKCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_name(out: &mut Vec<u8>, name: &str) {
    let len = u16::try_from(name.len()).expect("parameter names are short");
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(name.as_bytes());
}

fn put_matrix(out: &mut Vec<u8>, m: &DenseMatrix) {
    out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    put_floats(out, m.as_slice());
}

fn put_floats(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_checkpoint(trained: &TrainedModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.push(match trained.stage {
        Stage::Pretrained => 0,
        Stage::Finetuned => 1,
    });
    let config = serde_json::to_vec(&trained.config).expect("config serializes");
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);

    let mut tensors: Vec<&ParamTensor> = trained.model.params();
    if let Some(c) = &trained.centers {
        tensors.push(&c.centers);
    }
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for t in tensors {
        put_name(&mut out, &t.name);
        put_matrix(&mut out, &t.value);
    }

    out.extend_from_slice(&(trained.optimizer.len() as u32).to_le_bytes());
    for (name, s) in &trained.optimizer {
        put_name(&mut out, name);
        out.extend_from_slice(&s.step_count.to_le_bytes());
        put_floats(
            &mut out,
            &[s.config.beta1, s.config.beta2, s.config.epsilon],
        );
        put_matrix(&mut out, &s.first_moment);
        put_floats(&mut out, s.second_moment.as_slice());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                "checkpoint",
                format!("truncated while reading {what} at byte {}", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn name(&mut self) -> Result<String> {
        let len = self.u16("name length")? as usize;
        let raw = self.take(len, "name")?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| Error::format("checkpoint", "parameter name is not UTF-8"))
    }

    fn floats(&mut self, count: u64, what: &str) -> Result<Vec<f64>> {
        let bytes = count
            .checked_mul(8)
            .and_then(|b| usize::try_from(b).ok())
            .ok_or_else(|| Error::format("checkpoint", format!("{what} too large")))?;
        let raw = self.take(bytes, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn matrix(&mut self, what: &str) -> Result<DenseMatrix> {
        let rows = self.u64(what)?;
        let cols = self.u64(what)?;
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::format("checkpoint", format!("{what} shape overflows")))?;
        let data = self.floats(count, what)?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(
                "checkpoint",
                format!("non-finite value in {what}"),
            ));
        }
        DenseMatrix::from_vec(rows as usize, cols as usize, data)
            .map_err(|e| Error::format("checkpoint", format!("{what}: {e}")))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<TrainedModel> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::format(
            "checkpoint",
            "bad magic (not a checkpoint file)",
        ));
    }
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            "checkpoint",
            format!("unsupported version {version} (expected {CHECKPOINT_VERSION})"),
        ));
    }
    let stage = match r.u8("stage")? {
        0 => Stage::Pretrained,
        1 => Stage::Finetuned,
        other => {
            return Err(Error::format(
                "checkpoint",
                format!("unknown stage tag {other}"),
            ))
        }
    };
    let config_len = r.u32("config length")? as usize;
    let config: TrainConfig = serde_json::from_slice(r.take(config_len, "config")?)
        .map_err(|e| Error::format("checkpoint", format!("config: {e}")))?;

    let n_tensors = r.u32("tensor count")?;
    let mut tensors = Vec::new();
    for _ in 0..n_tensors {
        let name = r.name()?;
        let value = r.matrix(&name)?;
        tensors.push(ParamTensor::new(name, value));
    }

    let n_states = r.u32("optimizer count")?;
    let mut optimizer = Vec::new();
    for _ in 0..n_states {
        let name = r.name()?;
        let step_count = r.u64("step count")?;
        let adam = AdamConfig {
            beta1: r.f64("beta1")?,
            beta2: r.f64("beta2")?,
            epsilon: r.f64("epsilon")?,
        };
        let first_moment = r.matrix("first moment")?;
        let count = (first_moment.rows() * first_moment.cols()) as u64;
        let second = r.floats(count, "second moment")?;
        if second.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::format(
                "checkpoint",
                format!("invalid second moment for '{name}'"),
            ));
        }
        let second_moment = DenseMatrix::from_vec(first_moment.rows(), first_moment.cols(), second)
            .map_err(|e| Error::format("checkpoint", format!("second moment: {e}")))?;
        optimizer.push((
            name,
            AdamState {
                first_moment,
                second_moment,
                step_count,
                config: adam,
            },
        ));
    }
    if r.pos != bytes.len() {
        return Err(Error::format(
            "checkpoint",
            format!("{} trailing bytes", bytes.len() - r.pos),
        ));
    }
    assemble(stage, config, tensors, optimizer)
}

fn assemble(
    stage: Stage,
    config: TrainConfig,
    tensors: Vec<ParamTensor>,
    optimizer: Vec<(String, AdamState)>,
) -> Result<TrainedModel> {
    let bad = |msg: String| Error::format("checkpoint", msg);
    let mut slots: std::collections::BTreeMap<String, ParamTensor> =
        std::collections::BTreeMap::new();
    for t in tensors {
        if let Some(dup) = slots.insert(t.name.clone(), t) {
            return Err(bad(format!("duplicate tensor '{}'", dup.name)));
        }
    }
    let mut take = |name: &str, shape: Option<(usize, usize)>| -> Result<ParamTensor> {
        let t = slots
            .remove(name)
            .ok_or_else(|| bad(format!("missing tensor '{name}'")))?;
        if let Some(s) = shape {
            if t.value.shape() != s {
                return Err(bad(format!(
                    "tensor '{name}' has shape {:?}, expected {s:?}",
                    t.value.shape()
                )));
            }
        }
        Ok(t)
    };

    let mut layers: Vec<GcnLayer> = Vec::new();
    let mut l = 0;
    loop {
        let key = format!("encoder.{l}.weight");
        let weight = match take(&key, None) {
            Ok(w) => w,
            Err(_) if l > 0 => break,
            Err(e) => return Err(e),
        };
        if weight.value.rows() == 0 || weight.value.cols() == 0 {
            return Err(bad(format!("tensor '{key}' is empty")));
        }
        if let Some(prev) = layers.last() {
            let d = prev.weight.value.cols();
            if weight.value.shape() != (d, d) {
                return Err(bad(format!(
                    "tensor '{key}' does not chain with layer {}",
                    l - 1
                )));
            }
        }
        let slope = take(&format!("encoder.{l}.slope"), Some((1, 1)))?;
        layers.push(GcnLayer {
            weight,
            activation_slope: slope,
        });
        l += 1;
    }
    let d = layers.last().unwrap().weight.value.cols();
    config
        .validate()
        .map_err(|e| bad(format!("embedded config: {e}")))?;
    if config.latent_dim != d || config.encoder_depth != layers.len() {
        return Err(bad(format!(
            "embedded config (depth {}, d={}) disagrees with tensors (depth {}, d={d})",
            config.encoder_depth,
            config.latent_dim,
            layers.len()
        )));
    }
    let projector = ProjectorParams {
        weight: take("projector.weight", Some((d, d)))?,
        activation_slope: take("projector.slope", Some((1, 1)))?,
    };
    let centers = match stage {
        Stage::Pretrained => None,
        Stage::Finetuned => {
            let c = take("centers", None)?;
            if c.value.cols() != d || c.value.rows() == 0 {
                return Err(bad(format!(
                    "centers shape {:?} incompatible with d={d}",
                    c.value.shape()
                )));
            }
            Some(ClusterCenters::new(c.value)?)
        }
    };
    if let Some(extra) = slots.keys().next() {
        return Err(bad(format!("unexpected tensor '{extra}'")));
    }

    let model = DinkModel {
        encoder: EncoderParams { layers },
        projector,
    };
    let shapes: std::collections::BTreeMap<String, (usize, usize)> = model
        .params()
        .into_iter()
        .chain(centers.as_ref().map(|c| &c.centers))
        .map(|p| (p.name.clone(), p.value.shape()))
        .collect();
    for (name, s) in &optimizer {
        match shapes.get(name) {
            Some(&shape) if shape == s.first_moment.shape() => {}
            _ => return Err(bad(format!("optimizer state '{name}' matches no tensor"))),
        }
    }
    Ok(TrainedModel {
        model,
        centers,
        stage,
        config,
        optimizer,
    })
}

pub fn save_checkpoint(trained: &TrainedModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode_checkpoint(trained)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
