//! Optional TOML configuration file. Precedence is CLI flag over config
//! entry over built-in default; every key here is optional.

use std::path::Path;

use anyhow::{Context, Result};
use bisst_core::ModelConfig;
use serde::Deserialize;

use crate::train::TrainConfig;

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub lambda: Option<f64>,
    pub tau: Option<f64>,
    pub gamma: Option<f64>,
    pub theta_label: Option<f64>,
    pub theta_caption: Option<f64>,
    pub learning_rate: Option<f64>,
    pub pretrain_epochs: Option<usize>,
    pub epochs: Option<usize>,
    pub k: Option<usize>,
    pub clip_norm: Option<f64>,
    pub seed: Option<u64>,
    pub encoder_hidden: Option<usize>,
    pub decoder_hidden: Option<usize>,
    pub embed_dim: Option<usize>,
    pub attn_dim: Option<usize>,
    pub gate_dim: Option<usize>,
    pub max_caption_len: Option<usize>,
    pub variant: Option<String>,
    pub direction: Option<String>,
    pub topk: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        toml::from_str(&text)
            .with_context(|| format!("malformed config file {}", path.display()))
    }

    pub fn apply_train(&self, cfg: &mut TrainConfig) {
        macro_rules! set {
            ($field:ident, $target:expr) => {
                if let Some(v) = self.$field {
                    $target = v;
                }
            };
        }
        set!(lambda, cfg.lambda);
        set!(tau, cfg.tau);
        set!(gamma, cfg.gamma);
        set!(theta_label, cfg.theta_label);
        set!(theta_caption, cfg.theta_caption);
        set!(learning_rate, cfg.learning_rate);
        set!(pretrain_epochs, cfg.pretrain_epochs);
        set!(epochs, cfg.epochs);
        set!(k, cfg.anchor_count);
        set!(clip_norm, cfg.clip_norm);
        set!(seed, cfg.seed);
    }

    pub fn apply_model(&self, cfg: &mut ModelConfig) -> Result<()> {
        macro_rules! set {
            ($field:ident, $target:expr) => {
                if let Some(v) = self.$field {
                    $target = v;
                }
            };
        }
        set!(encoder_hidden, cfg.encoder_hidden);
        set!(decoder_hidden, cfg.decoder_hidden);
        set!(embed_dim, cfg.embed_dim);
        set!(attn_dim, cfg.attn_dim);
        set!(gate_dim, cfg.gate_dim);
        set!(max_caption_len, cfg.max_caption_len);
        if let Some(v) = &self.variant {
            cfg.fusion = v.parse()?;
        }
        if let Some(d) = &self.direction {
            cfg.direction = d.parse()?;
        }
        Ok(())
    }
}
