//! Binary model checkpoints.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! "NADVCKPT" version E H F V vocab_sha256[32] n_blocks
//! n_blocks x { name_len name ndim dims.. f64 data.. }
//! ```
//!
//! The vocabulary hash ties a checkpoint to the vocabulary it was trained
//! with; loading against a different vocabulary is refused.

use std::path::Path;

use natadv_core::model::{ModelBundle, ModelDims, PARAM_NAMES};
use natadv_core::text::Vocabulary;
use natadv_core::Tensor;
use sha2::{Digest, Sha256};

use crate::formats::{render_vocab, write_atomic};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"NADVCKPT";
const VERSION: u32 = 1;

pub type Hash = [u8; 32];

pub fn sha256(bytes: &[u8]) -> Hash {
    Sha256::digest(bytes).into()
}

pub fn hex(h: &[u8]) -> String {
    h.iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the vocabulary's on-disk form.
pub fn vocab_hash(vocab: &Vocabulary) -> Hash {
    sha256(render_vocab(vocab).as_bytes())
}

/// Hex digest of a file's bytes, for manifests.
pub fn file_hash(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&sha256(&bytes)))
}

pub fn encode_checkpoint(model: &ModelBundle, vocab: &Hash) -> Vec<u8> {
    let mut out = Vec::new();
    let u32le = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    out.extend_from_slice(MAGIC);
    u32le(&mut out, VERSION as usize);
    let d = model.dims;
    for v in [d.embed, d.hidden, d.ffn, d.vocab] {
        u32le(&mut out, v);
    }
    out.extend_from_slice(vocab);
    let params = model.params();
    u32le(&mut out, params.len());
    for (name, t) in PARAM_NAMES.iter().zip(params) {
        u32le(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        u32le(&mut out, t.shape().len());
        for &s in t.shape() {
            u32le(&mut out, s);
        }
        for &x in t.data() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(path: impl AsRef<Path>, model: &ModelBundle, vocab: &Vocabulary) -> Result<()> {
    write_atomic(path, &encode_checkpoint(model, &vocab_hash(vocab)))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }
}

/// Decoded checkpoint contents.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelBundle,
    pub vocab_hash: Hash,
}

pub fn decode_checkpoint(bytes: &[u8]) -> std::result::Result<Checkpoint, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("not a checkpoint (bad magic)".into());
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(format!("unsupported version {version}"));
    }
    let (embed, hidden, ffn, vocab) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    let dims = ModelDims { vocab, embed, hidden, ffn };
    let vocab_hash: Hash = r.take(32)?.try_into().expect("32 bytes");
    let n = r.u32()?;
    let mut blocks = Vec::with_capacity(n);
    for _ in 0..n {
        let len = r.u32()?;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| "block name is not UTF-8".to_string())?;
        let ndim = r.u32()?;
        let shape = (0..ndim).map(|_| r.u32()).collect::<std::result::Result<Vec<_>, _>>()?;
        let count = shape.iter().try_fold(1usize, |a, &s| a.checked_mul(s)).ok_or("shape overflows")?;
        let raw = r.take(count.checked_mul(8).ok_or("shape overflows")?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| e.to_string())?;
        blocks.push((name.to_string(), t));
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    let model = ModelBundle::from_params(dims, blocks).map_err(|e| e.to_string())?;
    Ok(Checkpoint { model, vocab_hash })
}

/// Loads a checkpoint and checks it against `vocab`: the embedding rows
/// must match the vocabulary size and the stored hash must match.
pub fn load_checkpoint(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<ModelBundle> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let ck = decode_checkpoint(&bytes).map_err(|m| Error::checkpoint(path, m))?;
    if ck.model.dims.vocab != vocab.len() {
        return Err(Error::checkpoint(
            path,
            format!("trained for {} subwords, vocabulary has {}", ck.model.dims.vocab, vocab.len()),
        ));
    }
    if ck.vocab_hash != vocab_hash(vocab) {
        return Err(Error::checkpoint(path, "vocabulary hash mismatch"));
    }
    Ok(ck.model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(n: usize) -> Vocabulary {
        Vocabulary::from_subwords((0..n).map(|i| format!("w{i}</w>"))).unwrap()
    }

    fn small(v: usize) -> ModelBundle {
        ModelBundle::init(ModelDims { vocab: v, embed: 3, hidden: 4, ffn: 2 }, 5)
    }

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let v = vocab(6);
        let m = small(v.len());
        save_checkpoint(&p, &m, &v).unwrap();
        let back = load_checkpoint(&p, &v).unwrap();
        assert_eq!(back, m);
        assert_eq!(encode_checkpoint(&back, &vocab_hash(&v)), std::fs::read(&p).unwrap());
    }

    #[test]
    fn vocabulary_mismatch_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        let v = vocab(6);
        save_checkpoint(&p, &small(v.len()), &v).unwrap();
        assert!(matches!(load_checkpoint(&p, &vocab(7)), Err(Error::Checkpoint { .. })));
        let renamed = Vocabulary::from_subwords((0..6).map(|i| format!("x{i}</w>"))).unwrap();
        let err = load_checkpoint(&p, &renamed).unwrap_err();
        assert!(err.to_string().contains("hash"), "{err}");
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let v = vocab(6);
        let bytes = encode_checkpoint(&small(v.len()), &vocab_hash(&v));
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
        assert!(decode_checkpoint(b"garbage!").is_err());
    }
}
