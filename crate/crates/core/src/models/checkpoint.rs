//! Binary model checkpoints: magic, u16 version, JSON model spec, then every
//! named parameter tensor as raw little-endian `f64` bits.

use std::path::Path;

use mtsg_tensor::Tensor;

use super::{Model, ModelSpec};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MTSM";
pub const CHECKPOINT_VERSION: u16 = 1;

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u64).to_le_bytes());
    out.extend_from_slice(b);
}

pub fn encode(model: &Model) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    put_bytes(&mut out, &serde_json::to_vec(&model.spec)?);
    out.extend_from_slice(&(model.params.len() as u64).to_le_bytes());
    for id in model.params.ids() {
        put_bytes(&mut out, model.params.name(id).as_bytes());
        let t = model.params.get(id);
        out.extend_from_slice(&(t.ndim() as u64).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.0.len() < n {
            return Err(Error::BadFormat("truncated checkpoint".into()));
        }
        let (h, t) = self.0.split_at(n);
        self.0 = t;
        Ok(h)
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes"));
        usize::try_from(v).map_err(|_| Error::BadFormat("count overflow".into()))
    }

    fn bytes(&mut self) -> Result<&[u8]> {
        let n = self.u64()?;
        self.take(n)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Model> {
    let mut c = Cursor(bytes);
    if c.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::BadFormat("not a model checkpoint".into()));
    }
    let version = u16::from_le_bytes(c.take(2)?.try_into().expect("2 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::BadFormat(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let spec: ModelSpec = serde_json::from_slice(c.bytes()?)?;
    let mut model = Model::new(spec, 0)?;
    let count = c.u64()?;
    if count != model.params.len() {
        return Err(Error::BadFormat(format!(
            "checkpoint has {count} tensors, model needs {}",
            model.params.len()
        )));
    }
    for _ in 0..count {
        let name = String::from_utf8(c.bytes()?.to_vec())
            .map_err(|_| Error::BadFormat("parameter name is not UTF-8".into()))?;
        let ndim = c.u64()?;
        let shape = (0..ndim).map(|_| c.u64()).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = c.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::BadFormat("size overflow".into()))?,
        )?;
        let data = raw
            .chunks_exact(8)
            .map(|b| f64::from_bits(u64::from_le_bytes(b.try_into().expect("8 bytes"))))
            .collect();
        let id = model
            .params
            .find(&name)
            .ok_or_else(|| Error::BadFormat(format!("unexpected parameter {name:?}")))?;
        if model.params.get(id).shape() != shape.as_slice() {
            return Err(Error::BadFormat(format!(
                "parameter {name:?} has shape {shape:?}"
            )));
        }
        *model.params.get_mut(id) = Tensor::new(shape, data)?;
    }
    if !c.0.is_empty() {
        return Err(Error::BadFormat("trailing bytes in checkpoint".into()));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    std::fs::write(path, encode(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
