//! Binary checkpoint format.
//!
//! Layout:
//! - magic bytes `BSST`
//! - u32 little-endian format version (currently 1)
//! - UTF-8 header of `key=value` lines terminated by one blank line; caries
//!   the model dimensions, training hyperparameters, the vocabulary
//!   (tokens space-separated), and the anchor lengths (comma-separated)
//! - u32 tensor count, then per tensor: u16 name length, UTF-8 name,
//!   u8 rank, u64 dims, row-major f64 little-endian values
//!
//! All integers and floats are little-endian. A save/load round trip
//! reproduces every tensor bitwise. Errors name the offending byte offset.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use bisst_core::decoder::Vocabulary;
use bisst_core::model::param_shapes;
use bisst_core::{AnchorSet, Model, ModelConfig, ParamStore, Tensor};
use thiserror::Error;

use crate::train::TrainConfig;

const MAGIC: &[u8; 4] = b"BSST";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("invalid magic at offset 0 (expected \"BSST\")")]
    BadMagic,
    #[error("unsupported checkpoint version {0} at offset 4")]
    UnsupportedVersion(u32),
    #[error("truncated checkpoint at offset {offset}: expected {what}")]
    Truncated { offset: usize, what: String },
    #[error("malformed checkpoint at offset {offset}: {what}")]
    Malformed { offset: usize, what: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, CheckpointError>;

/// A trained model plus the hyperparameters it was trained with.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub train: TrainConfig,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());

        let c = &self.model.config;
        let t = &self.train;
        let mut header = String::new();
        let mut kv = |k: &str, v: String| {
            header.push_str(k);
            header.push('=');
            header.push_str(&v);
            header.push('\n');
        };
        kv("direction", c.direction.to_string());
        kv("fusion", c.fusion.to_string());
        kv("feature_dim", c.feature_dim.to_string());
        kv("encoder_hidden", c.encoder_hidden.to_string());
        kv("decoder_hidden", c.decoder_hidden.to_string());
        kv("embed_dim", c.embed_dim.to_string());
        kv("attn_dim", c.attn_dim.to_string());
        kv("gate_dim", c.gate_dim.to_string());
        kv("max_caption_len", c.max_caption_len.to_string());
        kv("lambda", t.lambda.to_string());
        kv("tau", t.tau.to_string());
        kv("gamma", t.gamma.to_string());
        kv("theta_label", t.theta_label.to_string());
        kv("theta_caption", t.theta_caption.to_string());
        kv("learning_rate", t.learning_rate.to_string());
        kv("pretrain_epochs", t.pretrain_epochs.to_string());
        kv("epochs", t.epochs.to_string());
        kv("anchor_count", t.anchor_count.to_string());
        kv("clip_norm", t.clip_norm.to_string());
        kv("seed", t.seed.to_string());
        kv("vocab", self.model.vocab.tokens().join(" "));
        kv(
            "anchors",
            self.model
                .anchors
                .lengths()
                .iter()
                .map(|l| l.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        header.push('\n');
        out.extend_from_slice(header.as_bytes());

        let tensors: Vec<(&String, &Tensor)> = self.model.params.iter().collect();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, tensor) in tensors {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(tensor.rank() as u8);
            for &dim in tensor.shape() {
                out.extend_from_slice(&(dim as u64).to_le_bytes());
            }
            for &value in tensor.data() {
                out.extend_from_slice(&value.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let mut r = Reader { bytes, offset: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }

        let header_start = r.offset;
        let mut fields: BTreeMap<String, String> = BTreeMap::new();
        loop {
            let line_start = r.offset;
            let line = r.line()?;
            if line.is_empty() {
                break;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CheckpointError::Malformed {
                    offset: line_start,
                    what: format!("header line without '=': {line:?}"),
                });
            };
            fields.insert(key.to_string(), value.to_string());
        }
        let field = |key: &str| -> Result<&String> {
            fields.get(key).ok_or_else(|| CheckpointError::Malformed {
                offset: header_start,
                what: format!("missing header key {key:?}"),
            })
        };
        fn parse<T: FromStr>(offset: usize, key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| CheckpointError::Malformed {
                offset,
                what: format!("bad value for {key:?}: {value:?}"),
            })
        }

        let config = ModelConfig {
            feature_dim: parse(header_start, "feature_dim", field("feature_dim")?)?,
            encoder_hidden: parse(header_start, "encoder_hidden", field("encoder_hidden")?)?,
            decoder_hidden: parse(header_start, "decoder_hidden", field("decoder_hidden")?)?,
            embed_dim: parse(header_start, "embed_dim", field("embed_dim")?)?,
            attn_dim: parse(header_start, "attn_dim", field("attn_dim")?)?,
            gate_dim: parse(header_start, "gate_dim", field("gate_dim")?)?,
            direction: parse(header_start, "direction", field("direction")?)?,
            fusion: parse(header_start, "fusion", field("fusion")?)?,
            max_caption_len: parse(header_start, "max_caption_len", field("max_caption_len")?)?,
        };
        let train = TrainConfig {
            lambda: parse(header_start, "lambda", field("lambda")?)?,
            tau: parse(header_start, "tau", field("tau")?)?,
            gamma: parse(header_start, "gamma", field("gamma")?)?,
            theta_label: parse(header_start, "theta_label", field("theta_label")?)?,
            theta_caption: parse(header_start, "theta_caption", field("theta_caption")?)?,
            learning_rate: parse(header_start, "learning_rate", field("learning_rate")?)?,
            pretrain_epochs: parse(header_start, "pretrain_epochs", field("pretrain_epochs")?)?,
            epochs: parse(header_start, "epochs", field("epochs")?)?,
            anchor_count: parse(header_start, "anchor_count", field("anchor_count")?)?,
            clip_norm: parse(header_start, "clip_norm", field("clip_norm")?)?,
            seed: parse(header_start, "seed", field("seed")?)?,
        };
        let vocab = Vocabulary::from_tokens(
            field("vocab")?.split(' ').map(str::to_string).collect(),
        )
        .map_err(|e| CheckpointError::Malformed {
            offset: header_start,
            what: e.to_string(),
        })?;
        let anchor_lengths: Vec<usize> = field("anchors")?
            .split(',')
            .map(|s| parse(header_start, "anchors", s))
            .collect::<Result<_>>()?;
        let anchors = AnchorSet::new(anchor_lengths).map_err(|e| CheckpointError::Malformed {
            offset: header_start,
            what: e.to_string(),
        })?;

        let count = r.u32("tensor count")? as usize;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let name_len = r.u16("tensor name length")? as usize;
            let name_off = r.offset;
            let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
                .map_err(|_| CheckpointError::Malformed {
                    offset: name_off,
                    what: "tensor name is not UTF-8".into(),
                })?
                .to_string();
            let rank = r.u8("tensor rank")? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64("tensor dim")? as usize);
            }
            let numel: usize = shape.iter().product();
            let data_off = r.offset;
            let raw = r.take(numel * 8, "tensor values")?;
            let data: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            let tensor = Tensor::from_vec(&shape, data).map_err(|e| CheckpointError::Malformed {
                offset: data_off,
                what: e.to_string(),
            })?;
            params.insert(name, tensor);
        }
        if r.offset != bytes.len() {
            return Err(CheckpointError::Malformed {
                offset: r.offset,
                what: format!("{} trailing bytes", bytes.len() - r.offset),
            });
        }

        // The parameter set must exactly cover the configuration.
        for (name, shape) in param_shapes(&config, anchors.len(), vocab.len()) {
            match params.get(&name) {
                None => {
                    return Err(CheckpointError::Malformed {
                        offset: r.offset,
                        what: format!("missing parameter {name:?}"),
                    })
                }
                Some(t) if t.shape() != shape.as_slice() => {
                    return Err(CheckpointError::Malformed {
                        offset: r.offset,
                        what: format!(
                            "parameter {name:?} has shape {:?}, expected {shape:?}",
                            t.shape()
                        ),
                    })
                }
                Some(_) => {}
            }
        }
        if params.len() != param_shapes(&config, anchors.len(), vocab.len()).len() {
            return Err(CheckpointError::Malformed {
                offset: r.offset,
                what: "checkpoint carries parameters the configuration does not use".into(),
            });
        }

        Ok(Checkpoint {
            model: Model { config, anchors, vocab, params },
            train,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.offset + n > self.bytes.len() {
            return Err(CheckpointError::Truncated {
                offset: self.offset,
                what: format!("{n} bytes of {what}"),
            });
        }
        let slice = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(slice)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn line(&mut self) -> Result<String> {
        let start = self.offset;
        while self.offset < self.bytes.len() && self.bytes[self.offset] != b'\n' {
            self.offset += 1;
        }
        if self.offset == self.bytes.len() {
            return Err(CheckpointError::Truncated {
                offset: start,
                what: "newline-terminated header line".into(),
            });
        }
        let line = std::str::from_utf8(&self.bytes[start..self.offset])
            .map_err(|_| CheckpointError::Malformed {
                offset: start,
                what: "header is not UTF-8".into(),
            })?
            .to_string();
        self.offset += 1; // consume the newline
        Ok(line)
    }
}
