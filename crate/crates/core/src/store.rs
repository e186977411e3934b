//! Bit-exact persistence for parameter trees and sample sets.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "PXS1" | version u32 | tensor count u32 |
//!   per tensor: name-length u32, UTF-8 name, rank u32, dims u64 each,
//!               payload f64 (raw bits) |
//! trailing CRC32 of all preceding bytes
//! ```
//!
//! Sample sets flatten each sample's tensors under a `s{index:05}/` prefix
//! plus a `s{index:05}/meta` tensor `[cycle, step, phase]`. Non-finite
//! payloads are rejected at save time; files are platform independent.

use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::ParamTree;
use crate::samplers::{Sample, SampleSet};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"PXS1";
const VERSION: u32 = 1;

/// Standard reflected CRC-32 (IEEE 802.3 polynomial, as in zlib).
pub fn crc32(bytes: &[u8]) -> u32 {
    const POLY: u32 = 0xEDB8_8320;
    let mut crc = 0xFFFF_FFFFu32;
    for &b in bytes {
        crc ^= b as u32;
        for _ in 0..8 {
            let mask = (crc & 1).wrapping_neg();
            crc = (crc >> 1) ^ (POLY & mask);
        }
    }
    !crc
}

fn encode(entries: &[(String, &Tensor)]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, tensor) in entries {
        if !tensor.all_finite() {
            return Err(Error::Input(format!("tensor {name} holds non-finite values")));
        }
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(tensor.rank() as u32).to_le_bytes());
        for &d in tensor.dims() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in tensor.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format {
                offset: self.pos as u64,
                what: format!("need {n} bytes, {} remain", self.bytes.len() - self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn decode(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    if bytes.len() < 4 + 4 + 4 + 4 {
        return Err(Error::Format { offset: 0, what: "file too short".into() });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let actual = crc32(body);
    if stored != actual {
        return Err(Error::Corrupt(format!("crc {actual:#010x} != stored {stored:#010x}")));
    }

    let mut r = Reader { bytes: body, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::Format { offset: 0, what: format!("bad magic {magic:02x?}") });
    }
    let version = r.u32()?;
    if version > VERSION {
        return Err(Error::Version(version));
    }
    let count = r.u32()? as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Format { offset: r.pos as u64, what: "name is not UTF-8".into() })?
            .to_string();
        let rank = r.u32()? as usize;
        if rank > crate::tensor::MAX_RANK {
            return Err(Error::Format { offset: r.pos as u64, what: format!("rank {rank}") });
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u64()? as usize);
        }
        let n: usize = dims.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
        }
        entries.push((name, Tensor::from_vec(&dims, data)?));
    }
    if r.pos != body.len() {
        return Err(Error::Format {
            offset: r.pos as u64,
            what: format!("{} trailing bytes", body.len() - r.pos),
        });
    }
    Ok(entries)
}

/// Saves a parameter tree.
pub fn save_tree(tree: &ParamTree, path: &Path) -> Result<()> {
    let entries: Vec<(String, &Tensor)> =
        tree.iter().map(|(n, t)| (n.to_string(), t)).collect();
    std::fs::write(path, encode(&entries)?)?;
    Ok(())
}

/// Loads a parameter tree saved by [`save_tree`].
pub fn load_tree(path: &Path) -> Result<ParamTree> {
    let bytes = std::fs::read(path)?;
    Ok(decode(&bytes)?.into_iter().collect())
}

/// Saves a sample set with per-sample metadata.
pub fn save_sample_set(set: &SampleSet, path: &Path) -> Result<()> {
    let mut owned: Vec<(String, Tensor)> = Vec::new();
    for (i, sample) in set.samples.iter().enumerate() {
        let meta = Tensor::from_slice(&[sample.cycle as f64, sample.step as f64, sample.phase]);
        owned.push((format!("s{i:05}/meta"), meta));
        for (name, t) in sample.params.iter() {
            owned.push((format!("s{i:05}/{name}"), t.clone()));
        }
    }
    let entries: Vec<(String, &Tensor)> = owned.iter().map(|(n, t)| (n.clone(), t)).collect();
    std::fs::write(path, encode(&entries)?)?;
    Ok(())
}

/// Loads a sample set saved by [`save_sample_set`].
pub fn load_sample_set(path: &Path) -> Result<SampleSet> {
    let bytes = std::fs::read(path)?;
    let entries = decode(&bytes)?;
    let mut samples: Vec<Sample> = Vec::new();
    for (name, tensor) in entries {
        let (prefix, rest) = name.split_once('/').ok_or_else(|| Error::Format {
            offset: 0,
            what: format!("entry {name} lacks a sample prefix"),
        })?;
        let index: usize = prefix
            .strip_prefix('s')
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format { offset: 0, what: format!("bad prefix {prefix}") })?;
        if index == samples.len() {
            samples.push(Sample { params: ParamTree::new(), cycle: 0, step: 0, phase: 0.0 });
        } else if index != samples.len() - 1 {
            return Err(Error::Format { offset: 0, what: "out-of-order sample entries".into() });
        }
        let sample = samples.last_mut().unwrap();
        if rest == "meta" {
            if tensor.len() != 3 {
                return Err(Error::Format { offset: 0, what: "meta must hold 3 values".into() });
            }
            sample.cycle = tensor.data()[0] as u32;
            sample.step = tensor.data()[1] as u64;
            sample.phase = tensor.data()[2];
        } else {
            sample.params.push(rest.to_string(), tensor);
        }
    }
    Ok(SampleSet { samples })
}
