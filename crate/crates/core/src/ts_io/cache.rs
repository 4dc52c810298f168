//! Little-endian binary snapshot of a parsed dataset.
//!
//! Layout: magic, u16 version, then length-prefixed UTF-8 strings and raw
//! `f64` bit patterns so a reload is bit-identical.

use std::io::{Read, Write};
use std::path::Path;

use super::{Dataset, DatasetMeta, MultivariateSeries};
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 4] = b"MTSG";
pub const CACHE_VERSION: u16 = 1;

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u64(out, s.len() as u64);
    out.extend_from_slice(s.as_bytes());
}

fn put_split(out: &mut Vec<u8>, split: &[MultivariateSeries]) {
    put_u64(out, split.len() as u64);
    for s in split {
        put_u64(out, s.label as u64);
        for c in &s.channels {
            for v in c {
                put_u64(out, v.to_bits());
            }
        }
    }
}

pub fn encode(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CACHE_MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    let m = &ds.meta;
    put_str(&mut out, &m.name);
    put_u64(&mut out, m.dimensions as u64);
    put_u64(&mut out, m.length as u64);
    put_u64(
        &mut out,
        m.sampling_frequency.map_or(u64::MAX, f64::to_bits),
    );
    put_u64(&mut out, m.labels.len() as u64);
    for l in &m.labels {
        put_str(&mut out, l);
    }
    put_split(&mut out, &ds.train);
    put_split(&mut out, &ds.test);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.buf.len() < n {
            return Err(Error::BadFormat("truncated cache file".into()));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::BadFormat("count overflow".into()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.usize()?;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::BadFormat("invalid UTF-8".into()))
    }

    fn split(
        &mut self,
        dims: usize,
        len: usize,
        classes: usize,
    ) -> Result<Vec<MultivariateSeries>> {
        let count = self.usize()?;
        let mut out = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            let label = self.usize()?;
            if label >= classes {
                return Err(Error::BadFormat(format!(
                    "label index {label} out of range"
                )));
            }
            let mut channels = Vec::with_capacity(dims);
            for _ in 0..dims {
                let c = (0..len)
                    .map(|_| self.u64().map(f64::from_bits))
                    .collect::<Result<Vec<_>>>()?;
                channels.push(c);
            }
            out.push(MultivariateSeries::new(channels, label));
        }
        Ok(out)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Dataset> {
    let mut r = Reader { buf: bytes };
    if r.take(4)? != CACHE_MAGIC {
        return Err(Error::BadFormat("bad magic".into()));
    }
    let version = u16::from_le_bytes(r.take(2)?.try_into().expect("2 bytes"));
    if version != CACHE_VERSION {
        return Err(Error::BadFormat(format!(
            "unsupported cache version {version}"
        )));
    }
    let name = r.string()?;
    let dimensions = r.usize()?;
    let length = r.usize()?;
    let fs_bits = r.u64()?;
    let sampling_frequency = (fs_bits != u64::MAX).then(|| f64::from_bits(fs_bits));
    let n_labels = r.usize()?;
    let labels = (0..n_labels)
        .map(|_| r.string())
        .collect::<Result<Vec<_>>>()?;
    let train = r.split(dimensions, length, n_labels)?;
    let test = r.split(dimensions, length, n_labels)?;
    if !r.buf.is_empty() {
        return Err(Error::BadFormat("trailing bytes".into()));
    }
    Ok(Dataset {
        meta: DatasetMeta {
            name,
            dimensions,
            length,
            num_classes: n_labels,
            sampling_frequency,
            labels,
        },
        train,
        test,
    })
}

pub fn write_cache(ds: &Dataset, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode(ds)).map_err(|e| Error::io(path, e))
}

pub fn read_cache(path: &Path) -> Result<Dataset> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
