//! Binary checkpoint container.
//!
//! Layout (little-endian): magic `CRMNCKPT`, u32 version, u32-prefixed model
//! `ModelSpec` text, u64 lexicon fingerprint, u8 RNG flag followed by the ChaCha
//! seed/stream/word position when set, u32 tensor count, then per tensor a
//! u32-prefixed name, u32-prefixed dtype (`f64`), u8 trainable flag, u32 rank,
//! u64 extents and row-major values.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use super::network::{NamedParam, Network};
use super::spec::ModelSpec;
use crate::error::{Error, Result};
use crate::nn::{Param, Tensor};

const MAGIC: &[u8; 8] = b"CRMNCKPT";
const VERSION: u32 = 1;

/// Position of a ChaCha stream, enough to resume it exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> RngState {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub spec: ModelSpec,
    pub fingerprint: u64,
    pub rng: Option<RngState>,
    pub params: Vec<NamedParam>,
}

impl Checkpoint {
    pub fn from_network(net: &Network, rng: Option<&ChaCha8Rng>) -> Checkpoint {
        Checkpoint {
            spec: net.spec().clone(),
            fingerprint: net.fingerprint(),
            rng: rng.map(RngState::capture),
            params: net.params().to_vec(),
        }
    }

    pub fn network(&self) -> Result<Network> {
        Network::from_parts(self.spec.clone(), self.fingerprint, self.params.clone())
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        let put_str = |w: &mut W, s: &str| -> Result<()> {
            w.write_all(&(s.len() as u32).to_le_bytes())?;
            w.write_all(s.as_bytes())?;
            Ok(())
        };
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        put_str(&mut w, &self.spec.to_text())?;
        w.write_all(&self.fingerprint.to_le_bytes())?;
        match &self.rng {
            None => w.write_all(&[0])?,
            Some(s) => {
                w.write_all(&[1])?;
                w.write_all(&s.seed)?;
                w.write_all(&s.stream.to_le_bytes())?;
                w.write_all(&s.word_pos.to_le_bytes())?;
            }
        }
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for p in &self.params {
            put_str(&mut w, &p.name)?;
            put_str(&mut w, "f64")?;
            w.write_all(&[p.param.trainable as u8])?;
            let shape = p.param.value.shape();
            w.write_all(&(shape.len() as u32).to_le_bytes())?;
            for &d in shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in p.param.value.data() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Checkpoint> {
        let mut magic = [0u8; 8];
        take(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let version = u32::from_le_bytes(arr(&mut r)?);
        if version != VERSION {
            return Err(Error::format("checkpoint", format!("unsupported version {version}")));
        }
        let spec: ModelSpec = get_str(&mut r)?.parse()?;
        let fingerprint = u64::from_le_bytes(arr(&mut r)?);
        let rng = match arr::<1, _>(&mut r)?[0] {
            0 => None,
            1 => Some(RngState {
                seed: arr(&mut r)?,
                stream: u64::from_le_bytes(arr(&mut r)?),
                word_pos: u128::from_le_bytes(arr(&mut r)?),
            }),
            other => return Err(Error::format("checkpoint", format!("bad rng flag {other}"))),
        };
        let count = u32::from_le_bytes(arr(&mut r)?) as usize;
        let mut params = Vec::with_capacity(count);
        for _ in 0..count {
            let name = get_str(&mut r)?;
            let dtype = get_str(&mut r)?;
            if dtype != "f64" {
                return Err(Error::format("checkpoint", format!("unsupported dtype {dtype}")));
            }
            let trainable = arr::<1, _>(&mut r)?[0] != 0;
            let rank = u32::from_le_bytes(arr(&mut r)?) as usize;
            let shape = (0..rank)
                .map(|_| Ok(u64::from_le_bytes(arr(&mut r)?) as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = (0..n)
                .map(|_| Ok(f64::from_le_bytes(arr(&mut r)?)))
                .collect::<Result<Vec<_>>>()?;
            let value = Tensor::new(shape, data)?;
            params.push(NamedParam {
                name,
                param: Param { value, trainable },
            });
        }
        let ckpt = Checkpoint {
            spec,
            fingerprint,
            rng,
            params,
        };
        ckpt.network()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        fs::write(path, buf).map_err(|e| Error::write(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path).map_err(|e| Error::read(path, e))?;
        Checkpoint::read(bytes.as_slice())
    }
}

fn take<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::format("checkpoint", format!("truncated: {e}")))
}

fn arr<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    take(r, &mut b)?;
    Ok(b)
}

fn get_str<R: Read>(r: &mut R) -> Result<String> {
    let len = u32::from_le_bytes(arr(r)?) as usize;
    let mut buf = vec![0u8; len];
    take(r, &mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::format("checkpoint", "invalid utf-8"))
}

/// Copy the embedding table of `source` into `target`, optionally freezing it.
pub fn transplant_embeddings(target: &mut Network, source: &Checkpoint, freeze: bool) -> Result<()> {
    target.check_lexicon(source.fingerprint)?;
    let table = source
        .params
        .iter()
        .find(|p| p.name == "embedding/embeddings")
        .ok_or(Error::NoEmbedding)?;
    let dst = target.param_mut("embedding/embeddings").ok_or(Error::NoEmbedding)?;
    if dst.value.shape() != table.param.value.shape() {
        return Err(Error::Shape(format!(
            "embedding table {:?} into {:?}",
            table.param.value.shape(),
            dst.value.shape()
        )));
    }
    dst.value = table.param.value.clone();
    dst.trainable = !freeze;
    Ok(())
}
