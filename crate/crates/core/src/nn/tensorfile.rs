//! `weights.bin`: little-endian `u64` header length, a JSON header mapping
//! tensor names to `{dtype, shape, offsets}`, then raw little-endian `f32`
//! data. Offsets are byte ranges relative to the end of the header.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Module;
use crate::error::{Error, IoContext, Result};

#[derive(Debug, Serialize, Deserialize)]
struct TensorInfo {
    dtype: String,
    shape: [usize; 2],
    data_offsets: [usize; 2],
}

pub fn write_tensors(path: &Path, tensors: &[(String, &Array2<f64>)]) -> Result<()> {
    let mut header = BTreeMap::new();
    let mut data = Vec::new();
    for (name, t) in tensors {
        let start = data.len();
        for &v in t.iter() {
            data.extend_from_slice(&(v as f32).to_le_bytes());
        }
        let info = TensorInfo {
            dtype: "F32".into(),
            shape: [t.nrows(), t.ncols()],
            data_offsets: [start, data.len()],
        };
        if header.insert(name.clone(), info).is_some() {
            return Err(Error::validation(format!("duplicate tensor name `{name}`")));
        }
    }
    let header = serde_json::to_vec(&header)?;
    let mut bytes = Vec::with_capacity(8 + header.len() + data.len());
    bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&header);
    bytes.extend_from_slice(&data);
    std::fs::write(path, bytes).at(path)
}

pub fn read_tensors(path: &Path) -> Result<BTreeMap<String, Array2<f64>>> {
    let bytes = std::fs::read(path).at(path)?;
    let corrupt = |m: &str| Error::Unrecoverable(format!("{}: {m}", path.display()));
    if bytes.len() < 8 {
        return Err(corrupt("truncated header"));
    }
    let header_len = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let body_start = 8usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| corrupt("header length out of range"))?;
    let header: BTreeMap<String, TensorInfo> =
        serde_json::from_slice(&bytes[8..body_start]).map_err(|_| corrupt("malformed header"))?;
    let body = &bytes[body_start..];
    let mut out = BTreeMap::new();
    for (name, info) in header {
        let [start, end] = info.data_offsets;
        let [rows, cols] = info.shape;
        if info.dtype != "F32" || end > body.len() || start > end || end - start != rows * cols * 4 {
            return Err(corrupt(&format!("bad tensor entry `{name}`")));
        }
        let values: Vec<f64> = body[start..end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        out.insert(name, Array2::from_shape_vec((rows, cols), values).expect("shape checked"));
    }
    Ok(out)
}

pub fn save_module(module: &impl Module, path: &Path) -> Result<()> {
    let mut tensors = Vec::new();
    module.visit("", &mut |name, p| tensors.push((name, &p.value)));
    write_tensors(path, &tensors)
}

/// Loads values into an already-shaped module; names and shapes must match.
pub fn load_module(module: &mut impl Module, path: &Path) -> Result<()> {
    let mut tensors = read_tensors(path)?;
    let mut problem = None;
    module.visit_mut("", &mut |name, p| {
        if problem.is_some() {
            return;
        }
        match tensors.remove(&name) {
            Some(t) if t.raw_dim() == p.value.raw_dim() => {
                p.value = t;
                p.grad.fill(0.0);
            }
            Some(_) => problem = Some(format!("shape mismatch for `{name}`")),
            None => problem = Some(format!("missing tensor `{name}`")),
        }
    });
    if let Some(name) = tensors.keys().next() {
        problem.get_or_insert(format!("unexpected tensor `{name}`"));
    }
    match problem {
        Some(p) => Err(Error::validation(format!("{}: {p}", path.display()))),
        None => Ok(()),
    }
}
