use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AdamConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr_pretrain: f64,
    pub lr_finetune: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Target words per pretraining minibatch.
    pub batch_words: usize,
    /// Sentences per accumulation group when fine-tuning.
    pub group_size: usize,
    pub max_epochs: usize,
    pub finetune_epochs: usize,
    /// Pretraining stops after this many epochs without a new best dev
    /// perplexity.
    pub patience: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_pretrain: 1e-3,
            lr_finetune: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            batch_words: 1000,
            group_size: 20,
            max_epochs: 30,
            finetune_epochs: 2,
            patience: 3,
            clip_norm: 5.0,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lr_pretrain > 0.0 && self.lr_finetune > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.group_size == 0 || self.batch_words == 0 {
            return bad("group_size and batch_words must be at least 1");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if self.clip_norm <= 0.0 {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn p<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
        }
        match key {
            "lr_pretrain" => self.lr_pretrain = p(key, value)?,
            "lr_finetune" => self.lr_finetune = p(key, value)?,
            "beta1" => self.beta1 = p(key, value)?,
            "beta2" => self.beta2 = p(key, value)?,
            "eps" => self.eps = p(key, value)?,
            "batch_words" => self.batch_words = p(key, value)?,
            "group_size" => self.group_size = p(key, value)?,
            "max_epochs" => self.max_epochs = p(key, value)?,
            "finetune_epochs" => self.finetune_epochs = p(key, value)?,
            "patience" => self.patience = p(key, value)?,
            "clip_norm" => self.clip_norm = p(key, value)?,
            "seed" => self.seed = p(key, value)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for TrainConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "lr_pretrain = {}", self.lr_pretrain)?;
        writeln!(f, "lr_finetune = {}", self.lr_finetune)?;
        writeln!(f, "beta1 = {}", self.beta1)?;
        writeln!(f, "beta2 = {}", self.beta2)?;
        writeln!(f, "eps = {}", self.eps)?;
        writeln!(f, "batch_words = {}", self.batch_words)?;
        writeln!(f, "group_size = {}", self.group_size)?;
        writeln!(f, "max_epochs = {}", self.max_epochs)?;
        writeln!(f, "finetune_epochs = {}", self.finetune_epochs)?;
        writeln!(f, "patience = {}", self.patience)?;
        writeln!(f, "clip_norm = {}", self.clip_norm)?;
        writeln!(f, "seed = {}", self.seed)
    }
}
