//! Flat binary checkpoint container.
//!
//! ```text
//! magic      8 bytes  "ENTROREG"
//! version    u32 LE
//! repeated until EOF:
//!   name_len u32 LE, name (UTF-8)
//!   rank     u32 LE
//!   dims     rank x u64 LE
//!   payload  prod(dims) x f64 LE
//! ```
//!
//! Network tensors are named `w1, b1, w2, b2, ...`; weights are rank 2
//! (`out x in`), biases rank 1.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mlp::{Layer, MlpParams};
use crate::tensor::Matrix;

pub const MAGIC: &[u8; 8] = b"ENTROREG";
pub const VERSION: u32 = 1;

/// A named tensor read from a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<u64>,
    pub data: Vec<f64>,
}

pub fn encode_tensors(tensors: &[Tensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
        for d in &t.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated while reading {what}")))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_tensors(bytes: &[u8]) -> Result<Vec<Tensor>> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = c.u32("version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let mut out = Vec::new();
    while c.pos < bytes.len() {
        let name_len = c.u32("name length")? as usize;
        let name = std::str::from_utf8(c.take(name_len, "name")?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_owned();
        let rank = c.u32("rank")? as usize;
        let dims = (0..rank).map(|_| c.u64("dims")).collect::<Result<Vec<_>>>()?;
        let count = dims
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .and_then(|n| usize::try_from(n).ok())
            .ok_or_else(|| Error::Checkpoint(format!("{name}: dimensions overflow")))?;
        let raw = c.take(
            count
                .checked_mul(8)
                .ok_or_else(|| Error::Checkpoint(format!("{name}: payload overflow")))?,
            "payload",
        )?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        out.push(Tensor { name, dims, data });
    }
    Ok(out)
}

pub fn params_to_tensors(params: &MlpParams) -> Vec<Tensor> {
    let mut out = Vec::with_capacity(2 * params.layers.len());
    for (k, l) in params.layers.iter().enumerate() {
        out.push(Tensor {
            name: format!("w{}", k + 1),
            dims: vec![l.weight.rows() as u64, l.weight.cols() as u64],
            data: l.weight.as_slice().to_vec(),
        });
        out.push(Tensor {
            name: format!("b{}", k + 1),
            dims: vec![l.bias.len() as u64],
            data: l.bias.clone(),
        });
    }
    out
}

pub fn tensors_to_params(tensors: Vec<Tensor>) -> Result<MlpParams> {
    if tensors.is_empty() || !tensors.len().is_multiple_of(2) {
        return Err(Error::Checkpoint(format!(
            "expected weight/bias pairs, found {} tensors",
            tensors.len()
        )));
    }
    let mut layers = Vec::with_capacity(tensors.len() / 2);
    let mut it = tensors.into_iter();
    let mut k = 1;
    while let (Some(w), Some(b)) = (it.next(), it.next()) {
        if w.name != format!("w{k}") || b.name != format!("b{k}") {
            return Err(Error::Checkpoint(format!(
                "expected w{k}/b{k}, found {}/{}",
                w.name, b.name
            )));
        }
        if w.dims.len() != 2 || b.dims.len() != 1 || b.dims[0] != w.dims[0] {
            return Err(Error::Checkpoint(format!("layer {k}: inconsistent shapes")));
        }
        let weight = Matrix::from_vec(w.dims[0] as usize, w.dims[1] as usize, w.data)?;
        if let Some(prev) = layers.last().map(|l: &Layer| l.outputs()) {
            if prev != weight.cols() {
                return Err(Error::Checkpoint(format!(
                    "layer {k} expects {} inputs but layer {} has {prev} outputs",
                    weight.cols(),
                    k - 1
                )));
            }
        }
        layers.push(Layer {
            weight,
            bias: b.data,
        });
        k += 1;
    }
    Ok(MlpParams { layers })
}

pub fn encode_params(params: &MlpParams) -> Vec<u8> {
    encode_tensors(&params_to_tensors(params))
}

pub fn decode_params(bytes: &[u8]) -> Result<MlpParams> {
    tensors_to_params(decode_tensors(bytes)?)
}

pub fn save(path: impl AsRef<Path>, params: &MlpParams) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_params(params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<MlpParams> {
    let path = path.as_ref();
    decode_params(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
