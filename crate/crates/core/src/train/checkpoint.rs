//! Versioned checkpoint container.
//!
//! Layout: 8-byte magic, u32 LE version, u64 LE manifest length, a JSON
//! manifest (names, shapes, dtype, byte offsets, net config, epoch, seed,
//! optimizer step), then the raw little-endian arrays. Parameter round-trips
//! are bit-exact.

use crate::error::{Error, Result};
use crate::nets::{Model, NetConfig, ParamKey};
use crate::real::Real;
use crate::train::adam::AdamState;
use serde::{Deserialize, Serialize};
use std::path::Path;

const MAGIC: &[u8; 8] = b"RVDOCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct ArrayDesc {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    elems: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    dtype: String,
    net: NetConfig,
    epoch: usize,
    seed: u64,
    adam_step: u64,
    params: Vec<ArrayDesc>,
    adam_m: Vec<ArrayDesc>,
    adam_v: Vec<ArrayDesc>,
    stats: Vec<ArrayDesc>,
}

/// Everything needed to resume training.
pub struct Checkpoint<T: Real> {
    pub model: Model<T>,
    pub adam: AdamState<T>,
    pub epoch: usize,
    pub seed: u64,
}

fn push_array<T: Real>(
    blob: &mut Vec<u8>,
    descs: &mut Vec<ArrayDesc>,
    name: &str,
    shape: Vec<usize>,
    values: &[T],
) {
    let offset = blob.len() as u64;
    for v in values {
        v.write_le(blob);
    }
    descs.push(ArrayDesc { name: name.to_string(), shape, offset, elems: values.len() as u64 });
}

fn read_array<T: Real>(blob: &[u8], desc: &ArrayDesc) -> Result<Vec<T>> {
    let start = desc.offset as usize;
    let end = start + desc.elems as usize * T::BYTES;
    if end > blob.len() {
        return Err(Error::Checkpoint(format!(
            "array {} extends past end of file (truncated?)",
            desc.name
        )));
    }
    Ok(blob[start..end]
        .chunks_exact(T::BYTES)
        .map(|c| T::read_le(c))
        .collect())
}

pub fn save<T: Real>(
    path: &Path,
    model: &Model<T>,
    adam: &AdamState<T>,
    epoch: usize,
    seed: u64,
) -> Result<()> {
    let mut blob = Vec::new();
    let mut params = Vec::new();
    for e in model.params.entries() {
        push_array(&mut blob, &mut params, &e.name, e.tensor.shape().to_vec(), e.tensor.values());
    }
    let mut adam_m = Vec::new();
    let mut adam_v = Vec::new();
    for (k, e) in model.params.entries().iter().enumerate() {
        push_array(&mut blob, &mut adam_m, &e.name, vec![adam.m[k].len()], &adam.m[k]);
        push_array(&mut blob, &mut adam_v, &e.name, vec![adam.v[k].len()], &adam.v[k]);
    }
    let mut stats = Vec::new();
    for e in model.stats.entries() {
        push_array(&mut blob, &mut stats, &e.name, vec![e.values.len()], &e.values);
    }
    let manifest = Manifest {
        dtype: T::DTYPE.to_string(),
        net: model.cfg.clone(),
        epoch,
        seed,
        adam_step: adam.step,
        params,
        adam_m,
        adam_v,
        stats,
    };
    let manifest_json = serde_json::to_vec(&manifest)
        .map_err(|e| Error::Checkpoint(format!("manifest encode: {e}")))?;

    let mut out = Vec::with_capacity(20 + manifest_json.len() + blob.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(manifest_json.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest_json);
    out.extend_from_slice(&blob);
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load<T: Real>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint(format!("{}: not a checkpoint file", path.display())));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "{}: version {version} unsupported (expected {VERSION})",
            path.display()
        )));
    }
    let mlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    if 20 + mlen > bytes.len() {
        return Err(Error::Checkpoint(format!("{}: truncated manifest", path.display())));
    }
    let manifest: Manifest = serde_json::from_slice(&bytes[20..20 + mlen])
        .map_err(|e| Error::Checkpoint(format!("{}: bad manifest: {e}", path.display())))?;
    if manifest.dtype != T::DTYPE {
        return Err(Error::Checkpoint(format!(
            "{}: dtype {} does not match requested {}",
            path.display(),
            manifest.dtype,
            T::DTYPE
        )));
    }
    let blob = &bytes[20 + mlen..];

    let mut model = Model::<T>::new(manifest.net.clone(), manifest.seed)?;
    if model.params.len() != manifest.params.len() {
        return Err(Error::Checkpoint("parameter count mismatch with architecture".into()));
    }
    for (k, desc) in manifest.params.iter().enumerate() {
        if model.params.entries()[k].name != desc.name {
            return Err(Error::Checkpoint(format!(
                "parameter order mismatch: {} vs {}",
                model.params.entries()[k].name,
                desc.name
            )));
        }
        model.params.set_values(ParamKey(k), read_array(blob, desc)?)?;
    }
    let mut adam = AdamState::new(&model.params);
    adam.step = manifest.adam_step;
    for (k, desc) in manifest.adam_m.iter().enumerate() {
        adam.m[k] = read_array(blob, desc)?;
    }
    for (k, desc) in manifest.adam_v.iter().enumerate() {
        adam.v[k] = read_array(blob, desc)?;
    }
    if manifest.stats.len() != model.stats.entries().len() {
        return Err(Error::Checkpoint("state count mismatch with architecture".into()));
    }
    for (k, desc) in manifest.stats.iter().enumerate() {
        let vals = read_array(blob, desc)?;
        *model.stats.get_mut(crate::nets::StateKey(k)) = vals;
    }
    Ok(Checkpoint { model, adam, epoch: manifest.epoch, seed: manifest.seed })
}
