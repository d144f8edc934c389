//! Binary checkpoint format.
//!
//! ```text
//! "FDCV" | version u16 | manifest_len u32 | manifest (UTF-8)
//! record*: name_len u32 | name | rank u8 | extents u64×rank | payload f64×Π extents
//! crc64 u64   (CRC-64/XZ of every preceding byte)
//! ```
//!
//! All integers and floats are little-endian. The manifest is the config
//! text followed by `#!` metadata lines (model kind, step count, metric log),
//! which the config parser treats as comments.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crc::{Crc, CRC_64_XZ};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use super::config::TrainConfig;
use super::model::{ModelKind, ToyNet};
use super::train::EpochMetrics;

pub const MAGIC: [u8; 4] = *b"FDCV";
pub const FORMAT_VERSION: u16 = 1;

const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);
const HEADER: usize = 4 + 2 + 4;
const TRAILER: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub kind: ModelKind,
    /// Optimizer steps taken.
    pub step: usize,
    pub log: Vec<EpochMetrics>,
    pub net: ToyNet,
}

impl Checkpoint {
    pub fn manifest(&self) -> String {
        let mut s = self.config.to_text();
        let _ = writeln!(s, "#! format = {FORMAT_VERSION}");
        let _ = writeln!(s, "#! model = {}", self.kind.as_str());
        let _ = writeln!(s, "#! step = {}", self.step);
        for m in &self.log {
            let _ = writeln!(s, "#! metric {m}");
        }
        s
    }

    pub fn encode(&self) -> Vec<u8> {
        let manifest = self.manifest();
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u32).to_le_bytes());
        out.extend_from_slice(manifest.as_bytes());
        for (name, t) in self.net.named_tensors() {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.rank() as u8);
            for &e in t.shape() {
                out.extend_from_slice(&(e as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = CRC64.checksum(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Parses bytes, checking in order: length, magic, version, record
    /// structure, checksum, then the manifest and tensor layout.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER + TRAILER {
            return Err(Error::Truncated(format!(
                "{} bytes is shorter than the {}-byte header and trailer",
                bytes.len(),
                HEADER + TRAILER
            )));
        }
        let magic: [u8; 4] = bytes[..4].try_into().expect("length checked");
        if magic != MAGIC {
            return Err(Error::BadMagic(magic));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let body_len = bytes.len() - TRAILER;
        let mut r = Reader {
            bytes: &bytes[..body_len],
            pos: 6,
        };
        let manifest_len = r.u32("manifest length")? as usize;
        let manifest = r.take(manifest_len, "manifest")?;
        let mut records = Vec::new();
        while r.pos < body_len {
            let name_len = r.u32("record name length")? as usize;
            let name = r.take(name_len, "record name")?;
            let rank = r.take(1, "record rank")?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64("record extent")? as usize);
            }
            let count = shape
                .iter()
                .try_fold(1usize, |acc, &e| acc.checked_mul(e))
                .filter(|c| c.checked_mul(8).is_some())
                .ok_or_else(|| Error::Truncated(format!("record extents {shape:?} overflow")))?;
            let payload = r.take(count * 8, "record payload")?;
            records.push((name, shape, payload));
        }
        let stored = u64::from_le_bytes(bytes[body_len..].try_into().expect("trailer length"));
        let computed = CRC64.checksum(&bytes[..body_len]);
        if stored != computed {
            return Err(Error::Checksum { stored, computed });
        }

        let manifest =
            std::str::from_utf8(manifest).map_err(|e| Error::Consistency(format!("manifest is not UTF-8: {e}")))?;
        let config = TrainConfig::parse(manifest)?;
        let (mut kind, mut step, mut log) = (None, None, Vec::new());
        for line in manifest.lines().filter_map(|l| l.strip_prefix("#! ")) {
            if let Some(m) = line.strip_prefix("metric ") {
                log.push(EpochMetrics::parse(m)?);
            } else if let Some(v) = line.strip_prefix("model = ") {
                kind = ModelKind::parse(v);
            } else if let Some(v) = line.strip_prefix("step = ") {
                step = v.parse().ok();
            }
        }
        let kind = kind.ok_or_else(|| Error::Consistency("manifest lacks a valid model line".into()))?;
        let step = step.ok_or_else(|| Error::Consistency("manifest lacks a valid step line".into()))?;

        let mut tensors = Vec::with_capacity(records.len());
        for (name, shape, payload) in records {
            let name = String::from_utf8(name.to_vec())
                .map_err(|e| Error::Consistency(format!("record name is not UTF-8: {e}")))?;
            let data = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            tensors.push((name, Tensor::new(&shape, data)?));
        }
        let mut net = ToyNet::init(kind, &config.layer, config.layer.bands())?;
        net.load_tensors(&tensors)?;
        Ok(Self {
            config,
            kind,
            step,
            log,
            net,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                Error::Truncated(format!(
                    "{what} needs {n} bytes at offset {}, {} remain",
                    self.pos,
                    self.bytes.len() - self.pos
                ))
            })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, checkpoint.encode()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::train::EpochMetrics;
    use crate::layer::param_count;

    fn sample() -> Checkpoint {
        let mut config = TrainConfig::default();
        config.layer.c_out = 4;
        config.layer.n = 4;
        let mut net = ToyNet::init(ModelKind::FdConv, &config.layer, 4).unwrap();
        net.head_weight = Tensor::from_fn(&[4, 4], |i| (i as f64).sin() * 1e-3);
        Checkpoint {
            config,
            kind: ModelKind::FdConv,
            step: 7,
            log: vec![EpochMetrics {
                epoch: 1,
                step: 7,
                train_loss: 1.2345678901234567,
                held_out_accuracy: 0.5,
                max_similarity: Some(1e-17),
            }],
            net,
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let c = sample();
        let bytes = c.encode();
        let back = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.fdcv");
        save_checkpoint(&sample(), &path).unwrap();
        let first = fs::read(&path).unwrap();
        save_checkpoint(&load_checkpoint(&path).unwrap(), &path).unwrap();
        assert_eq!(fs::read(&path).unwrap(), first);
        assert!(matches!(
            load_checkpoint(&dir.path().join("missing")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn each_corruption_has_its_own_error() {
        let bytes = sample().encode();

        let mut flipped = bytes.clone();
        let n = flipped.len();
        flipped[n - 20] ^= 0x01;
        assert!(matches!(Checkpoint::decode(&flipped), Err(Error::Checksum { .. })));

        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(Checkpoint::decode(&magic), Err(Error::BadMagic(_))));

        let mut version = bytes.clone();
        version[4] = 2;
        assert!(matches!(
            Checkpoint::decode(&version),
            Err(Error::Version { found: 2, expected: 1 })
        ));

        assert!(matches!(
            Checkpoint::decode(&bytes[..bytes.len() - 3]),
            Err(Error::Truncated(_))
        ));
        assert!(matches!(Checkpoint::decode(&bytes[..9]), Err(Error::Truncated(_))));
    }

    #[test]
    fn records_match_parameter_tally() {
        let c = Checkpoint::decode(&sample().encode()).unwrap();
        let layer: usize = c
            .net
            .named_tensors()
            .iter()
            .filter(|(n, _)| !n.starts_with("head."))
            .map(|(_, t)| t.len())
            .sum();
        assert_eq!(layer, param_count(&c.config.layer).unwrap().total);
    }
}
