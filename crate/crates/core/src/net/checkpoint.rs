//! Checkpoint files.
//!
//! Layout (little endian): magic `DPCONVCK`, `u32` format version, `u64`
//! config length, config JSON, 32-byte SHA-256 of the config JSON, `u32`
//! blob count, then per blob a `u32` name length, the UTF-8 name, a `u64`
//! value count and the `f64` values. A trailing SHA-256 covers every byte
//! before it.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::net::discriminator::{Discriminator, DiscriminatorConfig};
use crate::net::generator::{Generator, GeneratorConfig};
use crate::net::Parameterized;

pub const MAGIC: &[u8; 8] = b"DPCONVCK";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
}

impl NetworkConfig {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec(self)?)
    }

    pub fn digest(&self) -> Result<[u8; 32]> {
        Ok(Sha256::digest(self.to_json()?).into())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub blobs: Vec<(String, Vec<f64>)>,
}

impl Checkpoint {
    pub fn capture(generator: &Generator, discriminator: &Discriminator) -> Self {
        let blobs = generator
            .named_params()
            .into_iter()
            .chain(discriminator.named_params())
            .map(|(n, p)| (n, p.to_vec()))
            .collect();
        Self {
            config: NetworkConfig {
                generator: generator.config().clone(),
                discriminator: discriminator.config().clone(),
            },
            blobs,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let json = self.config.to_json()?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&Sha256::digest(&json));
        out.extend_from_slice(&(self.blobs.len() as u32).to_le_bytes());
        for (name, values) in &self.blobs {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(values.len() as u64).to_le_bytes());
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let trailer = Sha256::digest(&out);
        out.extend_from_slice(&trailer);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < MAGIC.len() + 32 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != trailer {
            return Err(bad("checkpoint digest mismatch (file is corrupt)"));
        }
        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
        }
        let json_len = r.u64()? as usize;
        let json = r.take(json_len)?;
        let digest = r.take(32)?;
        if Sha256::digest(json).as_slice() != digest {
            return Err(bad("config digest mismatch"));
        }
        let config: NetworkConfig = serde_json::from_slice(json)?;
        let count = r.u32()? as usize;
        let mut blobs = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec()).map_err(|_| bad("blob name is not UTF-8"))?;
            let n = r.u64()? as usize;
            let raw = r.take(n.checked_mul(8).ok_or_else(|| bad("blob too large"))?)?;
            let values = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            blobs.push((name, values));
        }
        if r.pos != body.len() {
            return Err(bad("trailing bytes after the last blob"));
        }
        Ok(Self { config, blobs })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Fails unless the stored config has the digest of `expected`.
    pub fn expect_config(&self, expected: &NetworkConfig) -> Result<()> {
        if self.config.digest()? != expected.digest()? {
            return Err(Error::Checkpoint("checkpoint was written for a different network config".into()));
        }
        Ok(())
    }

    /// Rebuilds both networks with the stored weights.
    pub fn restore(&self) -> Result<(Generator, Discriminator)> {
        let mut g = Generator::new(self.config.generator.clone())?;
        let mut d = Discriminator::new(self.config.discriminator.clone())?;
        let split = g.named_params().len();
        if self.blobs.len() < split {
            return Err(Error::Checkpoint("checkpoint is missing generator weights".into()));
        }
        g.load_params(&self.blobs[..split])?;
        d.load_params(&self.blobs[split..])?;
        Ok((g, d))
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint("checkpoint is truncated".into()))?;
        let s = &self.buf[self.pos..end];
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

#[cfg(test)]
mod tests {
    use super::*;

    fn nets() -> (Generator, Discriminator) {
        (
            Generator::new(GeneratorConfig::tiny().with_seed(2)).unwrap(),
            Discriminator::new(DiscriminatorConfig::compact()).unwrap(),
        )
    }

    #[test]
    fn round_trip() {
        let (g, d) = nets();
        let ck = Checkpoint::capture(&g, &d);
        let back = Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ck);
        let (g2, d2) = back.restore().unwrap();
        assert_eq!(g2, g);
        assert_eq!(d2, d);
        back.expect_config(&ck.config).unwrap();
    }

    #[test]
    fn corruption_detected() {
        let (g, d) = nets();
        let mut bytes = Checkpoint::capture(&g, &d).to_bytes().unwrap();
        let last_value = bytes.len() - 40;
        bytes[last_value] ^= 1;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Checkpoint(_))));
        assert!(Checkpoint::from_bytes(b"DPCONVCK").is_err());
        assert!(Checkpoint::from_bytes(b"not a checkpoint at all, nope, not at all......").is_err());
    }

    #[test]
    fn config_mismatch_rejected() {
        let (g, d) = nets();
        let ck = Checkpoint::capture(&g, &d);
        let mut other = ck.config.clone();
        other.generator.seed += 1;
        assert!(ck.expect_config(&other).is_err());
    }
}
