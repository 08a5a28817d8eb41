//! Flat `key = value` training configuration.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use natadv_core::model::ModelDims;
use natadv_core::train::TrainConfig;

use crate::formats::read_to_string;
use crate::{Error, Result};

/// Everything `train` needs besides data: optimizer settings and layer sizes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub embed: usize,
    pub hidden: usize,
    pub ffn: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let d = ModelDims::desk(0);
        RunConfig {
            train: TrainConfig::default(),
            embed: d.embed,
            hidden: d.hidden,
            ffn: d.ffn,
        }
    }
}

impl RunConfig {
    pub fn dims(&self, vocab: usize) -> ModelDims {
        ModelDims {
            vocab,
            embed: self.embed,
            hidden: self.hidden,
            ffn: self.ffn,
        }
    }

    /// Applies one setting. Unknown keys and unparsable values are errors.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn p<T: FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse `{v}`"))
        }
        let t = &mut self.train;
        match key {
            "epochs" => t.epochs = p(value)?,
            "batch_size" => t.batch_size = p(value)?,
            "learning_rate" => t.learning_rate = p(value)?,
            "beta1" => t.beta1 = p(value)?,
            "beta2" => t.beta2 = p(value)?,
            "eps_opt" => t.eps_opt = p(value)?,
            "noise_sigma" => t.noise_sigma_start = p(value)?,
            "noise_anneal" => t.noise_anneal = p(value)?,
            "loss_mix" => t.loss_mix = p(value)?,
            "grad_clip" => t.grad_clip = p(value)?,
            "seed" => t.seed = p(value)?,
            "max_len" => t.max_len = p(value)?,
            "embed" => self.embed = p(value)?,
            "hidden" => self.hidden = p(value)?,
            "ffn" => self.ffn = p(value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    pub fn entries(&self) -> BTreeMap<String, String> {
        let t = &self.train;
        [
            ("epochs", t.epochs.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("beta1", t.beta1.to_string()),
            ("beta2", t.beta2.to_string()),
            ("eps_opt", t.eps_opt.to_string()),
            ("noise_sigma", t.noise_sigma_start.to_string()),
            ("noise_anneal", t.noise_anneal.to_string()),
            ("loss_mix", t.loss_mix.to_string()),
            ("grad_clip", t.grad_clip.to_string()),
            ("seed", t.seed.to_string()),
            ("max_len", t.max_len.to_string()),
            ("embed", self.embed.to_string()),
            ("hidden", self.hidden.to_string()),
            ("ffn", self.ffn.to_string()),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
    }

    /// Renders in the same `key = value` form [`parse_config`] reads.
    pub fn render(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed == 0 || self.hidden == 0 || self.ffn == 0 {
            return Err(Error::Usage("layer sizes must be positive".into()));
        }
        self.train.validate().map_err(|e| Error::Usage(e.to_string()))
    }
}

/// Parses `key = value` lines over the defaults. `#` starts a comment.
pub fn parse_config(text: &str, path: &Path) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::format(path, n + 1, "expected `key = value`"))?;
        cfg.set(k.trim(), v.trim()).map_err(|m| Error::format(path, n + 1, m))?;
    }
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    parse_config(&read_to_string(path)?, path)
}
