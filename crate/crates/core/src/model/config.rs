use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// How a score mechanism treats its peakiness coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Peakiness {
    /// `S = 0`: scores are ignored.
    Fixed0,
    /// `S = 1`: scores are used as-is.
    Fixed1,
    /// Trained jointly, initialized at 1.
    Learned,
}

impl Peakiness {
    pub const ALL: [Peakiness; 3] = [Peakiness::Fixed0, Peakiness::Fixed1, Peakiness::Learned];

    pub fn fixed_value(self) -> Option<f64> {
        match self {
            Peakiness::Fixed0 => Some(0.0),
            Peakiness::Fixed1 => Some(1.0),
            Peakiness::Learned => None,
        }
    }
}

impl fmt::Display for Peakiness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Peakiness::Fixed0 => "0",
            Peakiness::Fixed1 => "1",
            Peakiness::Learned => "learn",
        })
    }
}

impl FromStr for Peakiness {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "0" | "fixed0" => Ok(Peakiness::Fixed0),
            "1" | "fixed1" => Ok(Peakiness::Fixed1),
            "learn" | "learned" => Ok(Peakiness::Learned),
            _ => Err(Error::Config(format!("peakiness must be 0, 1 or learn, got {s:?}"))),
        }
    }
}

/// Which lattice-score mechanisms are active and how sharp they are.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScoreConfig {
    /// Weighted child-sum; off means the plain TreeLSTM sum.
    pub wcs: bool,
    /// Biased forget gates.
    pub bfg: bool,
    /// Biased attention.
    pub batt: bool,
    pub peak_h: Peakiness,
    pub peak_f: Peakiness,
    pub peak_a: Peakiness,
}

impl ScoreConfig {
    /// All mechanisms on, scores ignored.
    pub fn unscored() -> Self {
        Self::uniform(Peakiness::Fixed0)
    }

    /// All mechanisms on, one peakiness mode everywhere.
    pub fn uniform(p: Peakiness) -> Self {
        ScoreConfig {
            wcs: true,
            bfg: true,
            batt: true,
            peak_h: p,
            peak_f: p,
            peak_a: p,
        }
    }

    /// Plain TreeLSTM encoder with unbiased attention.
    pub fn off() -> Self {
        ScoreConfig {
            wcs: false,
            bfg: false,
            batt: false,
            ..Self::uniform(Peakiness::Fixed1)
        }
    }

    /// Every combination of mechanism switches with each shared peakiness mode.
    pub fn grid() -> Vec<ScoreConfig> {
        let mut out = Vec::new();
        for p in Peakiness::ALL {
            for bits in 0..8u8 {
                out.push(ScoreConfig {
                    wcs: bits & 1 != 0,
                    bfg: bits & 2 != 0,
                    batt: bits & 4 != 0,
                    ..Self::uniform(p)
                });
            }
        }
        out
    }
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self::uniform(Peakiness::Learned)
    }
}

impl fmt::Display for ScoreConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let on = |b: bool| if b { "on" } else { "off" };
        write!(
            f,
            "wcs={}({}) bfg={}({}) batt={}({})",
            on(self.wcs),
            self.peak_h,
            on(self.bfg),
            self.peak_f,
            on(self.batt),
            self.peak_a
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub src_vocab: usize,
    pub trg_vocab: usize,
    pub embed_dim: usize,
    /// Per encoder direction; the decoder runs at twice this width.
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub attention_dim: usize,
    pub scoring: ScoreConfig,
}

impl ModelConfig {
    pub fn new(src_vocab: usize, trg_vocab: usize) -> Self {
        ModelConfig {
            src_vocab,
            trg_vocab,
            embed_dim: 512,
            hidden_dim: 256,
            num_layers: 2,
            attention_dim: 512,
            scoring: ScoreConfig::default(),
        }
    }

    pub fn decoder_dim(&self) -> usize {
        2 * self.hidden_dim
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("src_vocab", self.src_vocab),
            ("trg_vocab", self.trg_vocab),
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("num_layers", self.num_layers),
            ("attention_dim", self.attention_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Digest of everything that fixes parameter shapes. Score switches are
    /// excluded so a checkpoint can be fine-tuned under any of them.
    pub fn architecture_digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for v in [
            self.src_vocab,
            self.trg_vocab,
            self.embed_dim,
            self.hidden_dim,
            self.num_layers,
            self.attention_dim,
        ] {
            h.update((v as u64).to_le_bytes());
        }
        h.finalize().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_has_24_distinct_entries() {
        let g = ScoreConfig::grid();
        assert_eq!(g.len(), 24);
        let set: std::collections::HashSet<_> = g.iter().collect();
        assert_eq!(set.len(), 24);
    }

    #[test]
    fn digest_ignores_scoring() {
        let a = ModelConfig::new(10, 12);
        let mut b = a.clone();
        b.scoring = ScoreConfig::off();
        assert_eq!(a.architecture_digest(), b.architecture_digest());
        b.hidden_dim = 8;
        assert_ne!(a.architecture_digest(), b.architecture_digest());
    }

    #[test]
    fn peakiness_parses() {
        for p in Peakiness::ALL {
            assert_eq!(p.to_string().parse::<Peakiness>().unwrap(), p);
        }
        assert!("2".parse::<Peakiness>().is_err());
    }
}
