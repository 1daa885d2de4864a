//! Finite-difference checks of whole models on random examples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{with_eos, Model, ModelConfig, ScoreConfig, Source};
use crate::autodiff::{gradient_check, GradCheckOptions, GradCheckReport};
use crate::error::Result;
use crate::lattice::random::{random_lattice, RandomLatticeConfig};
use crate::vocab::WordId;

/// Dimensions small enough to check every parameter entry.
pub fn gradcheck_config(scoring: ScoreConfig) -> ModelConfig {
    ModelConfig {
        src_vocab: 8,
        trg_vocab: 7,
        embed_dim: 3,
        hidden_dim: 3,
        num_layers: 2,
        attention_dim: 4,
        scoring,
    }
}

/// Checks a fresh model per example. With `scoring == None` the source is a
/// token sequence; otherwise a random lattice encoded under `scoring`.
/// Learned peakiness coefficients are drawn from `[0.6, 1.6)` so their
/// gradients are generic.
pub fn check_model_gradients(
    scoring: Option<ScoreConfig>,
    examples: usize,
    seed: u64,
    opts: &GradCheckOptions,
) -> Result<Vec<GradCheckReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reports = Vec::with_capacity(examples);
    for _ in 0..examples {
        let cfg = gradcheck_config(scoring.unwrap_or_else(ScoreConfig::off));
        let mut model = Model::new(cfg, rng.random())?;
        let peak: Vec<_> = model
            .store
            .iter()
            .filter(|(_, n, _)| n.starts_with("peak."))
            .map(|(id, _, _)| id)
            .collect();
        for id in peak {
            for x in model.store.value_mut(id).data_mut() {
                *x = rng.random_range(0.6..1.6);
            }
        }
        let src = match scoring {
            None => {
                let n = rng.random_range(1..4);
                Source::Sequence((0..n).map(|_| WordId(rng.random_range(3..8))).collect())
            }
            Some(_) => {
                let lc = RandomLatticeConfig {
                    states: rng.random_range(3..5),
                    max_out: 2,
                    first_word: 3,
                    num_words: 5,
                };
                Source::lattice(random_lattice(&mut rng, &lc))?
            }
        };
        let n = rng.random_range(1..3);
        let trg = with_eos(&(0..n).map(|_| WordId(rng.random_range(3..7))).collect::<Vec<_>>());
        let frozen = model.clone();
        reports.push(gradient_check(
            &mut model.store,
            |g| frozen.loss(g, &src, &trg),
            opts,
        )?);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_and_one_lattice_config_pass() {
        let opts = GradCheckOptions::default();
        for r in check_model_gradients(None, 1, 3, &opts).unwrap() {
            assert!(r.passed(), "{r:#?}");
        }
        for r in check_model_gradients(Some(ScoreConfig::default()), 1, 3, &opts).unwrap() {
            assert!(r.passed(), "{r:#?}");
        }
    }
}
