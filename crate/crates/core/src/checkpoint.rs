//! Binary checkpoints for trained encoders and SSED networks.
//!
//! Layout, little-endian: magic `PBCK`, `u32` format version, `u8` model kind,
//! `u64` length plus UTF-8 JSON architecture record, `u32` array count, then
//! each array as `u64` length plus `f64` values. Arrays are the model's
//! parameters followed by its buffers, in [`Module`] order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::{EncoderConfig, EncoderModel};
use crate::error::{Error, Result};
use crate::nn::Module;
use crate::ssed::{SsedConfig, SsedNet};

const MAGIC: &[u8; 4] = b"PBCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum ModelKind {
    Encoder = 1,
    Ssed = 2,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EncoderRecord {
    config: EncoderConfig,
    n_classes: usize,
    train_accuracy: f64,
}

fn encode<M: Module>(kind: ModelKind, arch: &str, model: &M) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(kind as u8);
    out.extend_from_slice(&(arch.len() as u64).to_le_bytes());
    out.extend_from_slice(arch.as_bytes());
    let arrays: Vec<&[f64]> = model.params().into_iter().chain(model.buffers()).collect();
    out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for a in arrays {
        out.extend_from_slice(&(a.len() as u64).to_le_bytes());
        for v in a {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Splits a checkpoint into its architecture JSON and arrays.
fn decode(bytes: &[u8], kind: ModelKind) -> Result<(String, Vec<Vec<f64>>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let k = r.take(1)?[0];
    if k != kind as u8 {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds model kind {k}, expected {}",
            kind as u8
        )));
    }
    let n = r.u64()? as usize;
    let arch = std::str::from_utf8(r.take(n)?)
        .map_err(|_| Error::Checkpoint("architecture record is not UTF-8".into()))?
        .to_string();
    let count = r.u32()? as usize;
    let mut arrays = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = r.u64()? as usize;
        let raw = r.take(len.checked_mul(8).ok_or_else(|| Error::Checkpoint("array too large".into()))?)?;
        arrays.push(
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect(),
        );
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after last array".into()));
    }
    Ok((arch, arrays))
}

fn fill<M: Module>(model: &mut M, arrays: Vec<Vec<f64>>) -> Result<()> {
    let mut slots: Vec<&mut [f64]> = Vec::new();
    let (p, b) = (model.params().len(), model.buffers().len());
    if arrays.len() != p + b {
        return Err(Error::Checkpoint(format!(
            "expected {} arrays, found {}",
            p + b,
            arrays.len()
        )));
    }
    slots.extend(model.params_mut());
    // Two mutable borrows of the model cannot coexist, so buffers go second.
    let mut it = arrays.into_iter();
    for (i, slot) in slots.into_iter().enumerate() {
        copy_into(slot, &it.next().expect("counted"), i)?;
    }
    for (i, slot) in model.buffers_mut().into_iter().enumerate() {
        copy_into(slot, &it.next().expect("counted"), p + i)?;
    }
    Ok(())
}

fn copy_into(slot: &mut [f64], src: &[f64], index: usize) -> Result<()> {
    if slot.len() != src.len() {
        return Err(Error::Checkpoint(format!(
            "array {index} has {} values, architecture needs {}",
            src.len(),
            slot.len()
        )));
    }
    if src.iter().any(|v| !v.is_finite()) {
        return Err(Error::Checkpoint(format!("array {index} contains non-finite values")));
    }
    slot.copy_from_slice(src);
    Ok(())
}

pub fn encoder_to_bytes(model: &EncoderModel) -> Result<Vec<u8>> {
    let arch = serde_json::to_string(&EncoderRecord {
        config: model.config.clone(),
        n_classes: model.n_classes,
        train_accuracy: model.train_accuracy,
    })?;
    Ok(encode(ModelKind::Encoder, &arch, model))
}

pub fn encoder_from_bytes(bytes: &[u8]) -> Result<EncoderModel> {
    let (arch, arrays) = decode(bytes, ModelKind::Encoder)?;
    let rec: EncoderRecord = serde_json::from_str(&arch)?;
    let mut model = EncoderModel::init(rec.config, rec.n_classes)?;
    model.train_accuracy = rec.train_accuracy;
    fill(&mut model, arrays)?;
    Ok(model)
}

pub fn ssed_to_bytes(net: &SsedNet) -> Result<Vec<u8>> {
    let arch = serde_json::to_string(&net.config)?;
    Ok(encode(ModelKind::Ssed, &arch, net))
}

pub fn ssed_from_bytes(bytes: &[u8]) -> Result<SsedNet> {
    let (arch, arrays) = decode(bytes, ModelKind::Ssed)?;
    let config: SsedConfig = serde_json::from_str(&arch)?;
    let mut net = SsedNet::zeroed(config)?;
    fill(&mut net, arrays)?;
    Ok(net)
}

pub fn save_encoder(model: &EncoderModel, path: &Path) -> Result<()> {
    fs::write(path, encoder_to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_encoder(path: &Path) -> Result<EncoderModel> {
    encoder_from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn save_ssed(net: &SsedNet, path: &Path) -> Result<()> {
    fs::write(path, ssed_to_bytes(net)?).map_err(|e| Error::io(path, e))
}

pub fn load_ssed(path: &Path) -> Result<SsedNet> {
    ssed_from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
