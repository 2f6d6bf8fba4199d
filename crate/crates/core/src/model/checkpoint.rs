//! `SANC` checkpoints.
//!
//! Layout (little-endian): magic `b"SANC"`, `u32` version, `u32` length of a
//! UTF-8 `key=value` config block followed by the block itself, `u32` record
//! count, then per parameter: `u32` name length, name bytes, `u32` rank,
//! `rank × u32` extents, and the `f64` payload.

use std::fs;
use std::path::Path;

use super::{ModelConfig, SanModel};
use crate::autodiff::Tensor;
use crate::data::AnswerVocab;
use crate::error::{Result, SanError};
use crate::question::Vocab;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SANC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: SanModel,
    pub vocab: Vocab,
    pub answers: AnswerVocab,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut block = String::new();
        for (k, v) in self.model.config.to_pairs() {
            block.push_str(&format!("{k}={v}\n"));
        }
        block.push_str(&format!("vocab={}\n", self.vocab.tokens().join(" ")));
        block.push_str(&format!("answers={}\n", self.answers.words().join(" ")));

        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        put_u32(&mut out, block.len() as u32);
        out.extend_from_slice(block.as_bytes());
        put_u32(&mut out, self.model.store.len() as u32);
        for (name, t) in self.model.store.iter() {
            put_u32(&mut out, name.len() as u32);
            out.extend_from_slice(name.as_bytes());
            put_u32(&mut out, t.shape().len() as u32);
            for &e in t.shape() {
                put_u32(&mut out, e as u32);
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(SanError::Format("bad checkpoint magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(SanError::Format(format!("unsupported checkpoint version {version}")));
        }
        let block_len = r.u32()? as usize;
        let block = std::str::from_utf8(r.take(block_len)?)
            .map_err(|_| SanError::Format("checkpoint config block is not UTF-8".into()))?;

        let mut config = ModelConfig::default();
        let mut vocab = None;
        let mut answers = None;
        for line in block.lines().filter(|l| !l.is_empty()) {
            let (k, v) =
                line.split_once('=').ok_or_else(|| SanError::Format(format!("config line without '=': {line:?}")))?;
            match k {
                "vocab" => vocab = Some(Vocab::parse(&v.split(' ').collect::<Vec<_>>().join("\n"))?),
                "answers" => answers = Some(AnswerVocab::new(v.split(' ').map(str::to_string).collect())?),
                _ => config.set(k, v)?,
            }
        }
        let vocab = vocab.ok_or_else(|| SanError::Format("checkpoint has no vocab".into()))?;
        let answers = answers.ok_or_else(|| SanError::Format("checkpoint has no answers".into()))?;

        let mut model = SanModel::new(config)?;
        let count = r.u32()? as usize;
        if count != model.store.len() {
            return Err(SanError::Format(format!(
                "checkpoint holds {count} parameters, {} expects {}",
                model.tag(),
                model.store.len()
            )));
        }
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| SanError::Format("parameter name is not UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|e| e as usize)).collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let data = r
                .take(numel * 8)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let id =
                model.store.find(&name).ok_or_else(|| SanError::Format(format!("unexpected parameter {name:?}")))?;
            if model.store.get(id).shape() != shape.as_slice() {
                return Err(SanError::Format(format!(
                    "parameter {name} has shape {shape:?}, expected {:?}",
                    model.store.get(id).shape()
                )));
            }
            *model.store.get_mut(id) = Tensor::new(shape, data)?;
        }
        if r.pos != bytes.len() {
            return Err(SanError::Format(format!("{} trailing bytes in checkpoint", bytes.len() - r.pos)));
        }
        if vocab.len() != model.config.vocab_size || answers.len() != model.config.answer_count {
            return Err(SanError::Format("checkpoint vocab sizes disagree with its model config".into()));
        }
        Ok(Checkpoint { model, vocab, answers })
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    fs::write(path, checkpoint.to_bytes()).map_err(|e| SanError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| SanError::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| SanError::Format(format!("checkpoint truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::question::EncoderKind;

    fn sample(encoder: EncoderKind) -> Checkpoint {
        let vocab = Vocab::from_tokens(["what", "color", "is", "the"]);
        let answers = AnswerVocab::new(vec!["red".into(), "blue".into(), "two".into()]).unwrap();
        let config = ModelConfig {
            encoder,
            layers: 2,
            vocab_size: vocab.len(),
            answer_count: answers.len(),
            embed_dim: 3,
            hidden: 4,
            cnn_filters: [2, 1, 2],
            raw_dim: 5,
            init_seed: 9,
            ..Default::default()
        };
        Checkpoint { model: SanModel::new(config).unwrap(), vocab, answers }
    }

    #[test]
    fn round_trip_is_bitwise() {
        for enc in [EncoderKind::Lstm, EncoderKind::Cnn] {
            let ck = sample(enc);
            let bytes = ck.to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.to_bytes(), bytes);
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = sample(EncoderKind::Lstm).to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
