//! `VTCCCKPT` checkpoint envelope.
//!
//! Layout (little-endian):
//!
//! ```text
//! "VTCCCKPT" | u32 version | u32 config_len | config text
//! u32 record_count
//! record*: u16 name_len | name | u8 rank | u32 dims[rank] | f32 payload | u32 crc32
//!          (rank 0xFF marks a raw byte section: u32 byte_len | bytes | u32 crc32)
//! ```
//!
//! Each checksum covers the whole record from the name length onwards, so a
//! flipped bit in a name, a shape or a payload is detected.

use std::fs;
use std::path::Path;

use crate::error::{Result, VtccError};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"VTCCCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const RAW_MARKER: u8 = 0xFF;
const CONFIG_CRC_SECTION: &str = "config.crc32";

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Tensor(NamedTensor),
    Raw { name: String, bytes: Vec<u8> },
}

impl Record {
    pub fn name(&self) -> &str {
        match self {
            Record::Tensor(t) => &t.name,
            Record::Raw { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub config: String,
    pub records: Vec<Record>,
}

impl Checkpoint {
    pub fn new(config: String) -> Self {
        Checkpoint {
            config,
            records: Vec::new(),
        }
    }

    pub fn push_tensor(&mut self, name: impl Into<String>, shape: &[usize], data: Vec<f32>) {
        self.records.push(Record::Tensor(NamedTensor {
            name: name.into(),
            shape: shape.to_vec(),
            data,
        }));
    }

    pub fn push_raw(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.records.push(Record::Raw {
            name: name.into(),
            bytes,
        });
    }

    pub fn tensor(&self, name: &str) -> Result<&NamedTensor> {
        self.records
            .iter()
            .find_map(|r| match r {
                Record::Tensor(t) if t.name == name => Some(t),
                _ => None,
            })
            .ok_or_else(|| VtccError::Checkpoint(format!("missing tensor `{name}`")))
    }

    pub fn raw(&self, name: &str) -> Result<&[u8]> {
        self.records
            .iter()
            .find_map(|r| match r {
                Record::Raw { name: n, bytes } if n == name => Some(bytes.as_slice()),
                _ => None,
            })
            .ok_or_else(|| VtccError::Checkpoint(format!("missing section `{name}`")))
    }

    pub fn tensors(&self) -> impl Iterator<Item = &NamedTensor> {
        self.records.iter().filter_map(|r| match r {
            Record::Tensor(t) => Some(t),
            Record::Raw { .. } => None,
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&len32(self.config.len())?.to_le_bytes());
        out.extend_from_slice(self.config.as_bytes());
        let config_crc = Record::Raw {
            name: CONFIG_CRC_SECTION.into(),
            bytes: crc32fast::hash(self.config.as_bytes()).to_le_bytes().to_vec(),
        };
        out.extend_from_slice(&len32(self.records.len() + 1)?.to_le_bytes());
        for record in self.records.iter().chain(std::iter::once(&config_crc)) {
            let start = out.len();
            let name = record.name().as_bytes();
            let name_len = u16::try_from(name.len())
                .map_err(|_| VtccError::Checkpoint(format!("record name too long: {}", record.name())))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name);
            match record {
                Record::Tensor(t) => {
                    let rank = u8::try_from(t.shape.len())
                        .ok()
                        .filter(|r| *r != RAW_MARKER)
                        .ok_or_else(|| VtccError::Checkpoint(format!("rank too large for `{}`", t.name)))?;
                    if t.shape.iter().product::<usize>() != t.data.len() {
                        return Err(VtccError::Checkpoint(format!("shape/data mismatch for `{}`", t.name)));
                    }
                    out.push(rank);
                    for &d in &t.shape {
                        out.extend_from_slice(&len32(d)?.to_le_bytes());
                    }
                    for v in &t.data {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
                Record::Raw { bytes, .. } => {
                    out.push(RAW_MARKER);
                    out.extend_from_slice(&len32(bytes.len())?.to_le_bytes());
                    out.extend_from_slice(bytes);
                }
            }
            let crc = crc32fast::hash(&out[start..]);
            out.extend_from_slice(&crc.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(VtccError::Checkpoint("missing VTCCCKPT magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(VtccError::CheckpointVersion {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let config_len = r.u32()? as usize;
        let config = String::from_utf8(r.take(config_len)?.to_vec())
            .map_err(|_| VtccError::Checkpoint("config text is not UTF-8".into()))?;
        let count = r.u32()? as usize;
        let mut records = Vec::with_capacity(count.min(1 << 16));
        for index in 0..count {
            let start = r.at;
            let name_len = r.u16()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| VtccError::Checkpoint(format!("record {index}: name is not UTF-8")))?;
            let rank = r.u8()?;
            let record = if rank == RAW_MARKER {
                let len = r.u32()? as usize;
                Record::Raw {
                    bytes: r.take(len)?.to_vec(),
                    name,
                }
            } else {
                let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
                let numel = shape
                    .iter()
                    .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                    .ok_or_else(|| VtccError::Checkpoint(format!("record `{name}`: shape overflows")))?;
                let payload = r.take(numel.saturating_mul(4)).map_err(|_| {
                    VtccError::Checkpoint(format!("record `{name}`: payload truncated ({numel} values expected)"))
                })?;
                let data = payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
                Record::Tensor(NamedTensor { name, shape, data })
            };
            let crc = crc32fast::hash(&bytes[start..r.at]);
            let stored = r.u32()?;
            if crc != stored {
                return Err(VtccError::Checkpoint(format!(
                    "checksum mismatch in record {index} (`{}`)",
                    record.name()
                )));
            }
            records.push(record);
        }
        if r.at != bytes.len() {
            return Err(VtccError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.at)));
        }
        let config_crc = match records.pop() {
            Some(Record::Raw { name, bytes }) if name == CONFIG_CRC_SECTION && bytes.len() == 4 => {
                u32::from_le_bytes(bytes.try_into().unwrap())
            }
            _ => return Err(VtccError::Checkpoint("missing config checksum".into())),
        };
        if crc32fast::hash(config.as_bytes()) != config_crc {
            return Err(VtccError::Checkpoint("checksum mismatch in config text".into()));
        }
        Ok(Checkpoint { config, records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| VtccError::io(parent, e))?;
        }
        // write-then-rename so a crash never leaves a half-written checkpoint
        let tmp = path.with_extension("ckpt.tmp");
        fs::write(&tmp, self.to_bytes()?).map_err(|e| VtccError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| VtccError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| VtccError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            VtccError::Checkpoint(msg) => VtccError::Checkpoint(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

fn len32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| VtccError::Checkpoint(format!("length {n} exceeds u32")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            VtccError::Checkpoint(format!("file truncated at byte {} (needed {n} more)", self.at))
        })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut c = Checkpoint::new("model.embed_dim = 8\n".into());
        c.push_tensor("w", &[2, 3], vec![1.0, -2.0, 3.5, f32::MIN_POSITIVE, 0.0, 7.0]);
        c.push_tensor("s", &[], vec![0.25]);
        c.push_raw("meta", b"{\"epoch\":3}".to_vec());
        c
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let bytes = c.to_bytes().unwrap();
        assert_eq!(&bytes[..8], CHECKPOINT_MAGIC);
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), c);
        assert_eq!(c.tensor("w").unwrap().shape, vec![2, 3]);
        assert_eq!(c.raw("meta").unwrap(), b"{\"epoch\":3}");
        assert!(c.tensor("nope").is_err());
    }

    #[test]
    fn every_flipped_byte_is_detected() {
        let bytes = sample().to_bytes().unwrap();
        for i in 0..bytes.len() {
            let mut bad = bytes.clone();
            bad[i] ^= 0x10;
            assert!(Checkpoint::from_bytes(&bad).is_err(), "byte {i} flip went unnoticed");
        }
    }

    #[test]
    fn truncation_and_version() {
        let bytes = sample().to_bytes().unwrap();
        for cut in [10, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(VtccError::Checkpoint(_))));
        }
        let mut v2 = bytes.clone();
        v2[8..12].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            Checkpoint::from_bytes(&v2),
            Err(VtccError::CheckpointVersion { found: 2, expected: 1 })
        ));
    }
}
