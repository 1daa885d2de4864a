//! Decoding and evaluation metrics.

mod metrics;
mod oracle;
mod search;

use std::hash::Hash;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use metrics::{bleu, bleu_stats, corpus_wer, edit_distance, wer, BleuStats, BLEU_ORDER};
pub use oracle::{lattice_oracle, OracleResult};
pub use search::{beam_search, beam_search_encoded, default_max_len, greedy, score_output, Hypothesis, Translation};

use crate::autodiff::Graph;
use crate::corpus::Example;
use crate::error::{Error, Result};
use crate::model::{with_eos, Model};

/// Total negative log-likelihood and target word count (with `</s>`).
pub fn total_nll(model: &Model, examples: &[Example]) -> Result<(f64, usize)> {
    let mut nll = 0.0;
    let mut words = 0;
    for ex in examples {
        let mut g = Graph::new(&model.store);
        let l = model.loss(&mut g, &ex.src, &with_eos(&ex.trg))?;
        nll += g.scalar(l);
        words += ex.target_words();
    }
    Ok((nll, words))
}

/// `exp(total NLL / total target words)`.
pub fn perplexity(model: &Model, examples: &[Example]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Empty("evaluation corpus"));
    }
    let (nll, words) = total_nll(model, examples)?;
    Ok((nll / words as f64).exp())
}

/// Entropy of a softmax over `logits`, in nats, as `ln Z - E[x]` with
/// logits shifted by their maximum. Equal logits give exactly `ln n`.
pub fn softmax_entropy(logits: &[f64]) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lz = crate::math::log_sum_exp(logits) - m;
    let mean: f64 = logits
        .iter()
        .map(|&x| {
            let p = (x - m - lz).exp();
            if p > 0.0 {
                p * (x - m)
            } else {
                0.0
            }
        })
        .sum();
    lz - mean
}

/// Mean teacher-forced entropy of the decoder softmax over the first
/// `n_sentences` examples.
pub fn decoder_entropy(model: &Model, examples: &[Example], n_sentences: usize) -> Result<f64> {
    let mut total = 0.0;
    let mut steps = 0usize;
    for ex in examples.iter().take(n_sentences) {
        let mut g = Graph::new(&model.store);
        let enc = model.encode(&mut g, &ex.src)?;
        model.teacher_forced(&mut g, &enc, &with_eos(&ex.trg), |g, out| {
            total += softmax_entropy(g.value(out.logits).data());
            steps += 1;
        })?;
    }
    if steps == 0 {
        return Err(Error::Empty("evaluation corpus"));
    }
    Ok(total / steps as f64)
}

/// Decodes every source with beam search (greedy when `beam` is 1).
pub fn translate_all(model: &Model, examples: &[Example], beam: usize) -> Result<Vec<Translation>> {
    examples
        .iter()
        .map(|ex| {
            if beam <= 1 {
                greedy(model, &ex.src, None)
            } else {
                beam_search(model, &ex.src, beam, None)
            }
        })
        .collect()
}

/// One row of a WER-binned BLEU table.
#[derive(Debug, Clone, PartialEq)]
pub struct WerBin {
    pub lo: f64,
    pub hi: f64,
    /// Sentences whose 1-best WER falls in the bin.
    pub total: usize,
    /// Indices of the sentences scored, ascending.
    pub sampled: Vec<usize>,
    /// BLEU per system; `None` for an empty bin.
    pub bleu: Vec<Option<f64>>,
}

/// Bin index of `w` for ascending `edges`: bins are `[e_i, e_{i+1})`, the
/// last one closed on the right.
pub fn bin_of(w: f64, edges: &[f64]) -> Option<usize> {
    let k = edges.len().checked_sub(1)?;
    (0..k).find(|&b| w >= edges[b] && (w < edges[b + 1] || (b + 1 == k && w <= edges[k])))
}

/// BLEU of each system within bins of per-sentence 1-best WER. Every
/// nonempty bin scores a seeded sample of at most `sample_size` sentences.
pub fn wer_binned_bleu<T: Eq + Hash>(
    one_best_wer: &[f64],
    references: &[Vec<Vec<T>>],
    systems: &[&[Vec<T>]],
    edges: &[f64],
    sample_size: usize,
    seed: u64,
) -> Result<Vec<WerBin>> {
    if edges.len() < 2 || edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("bin edges must be at least two ascending values".into()));
    }
    let n = one_best_wer.len();
    if references.len() != n || systems.iter().any(|s| s.len() != n) {
        return Err(Error::Format("per-sentence inputs differ in length".into()));
    }
    let mut members = vec![Vec::new(); edges.len() - 1];
    for (i, &w) in one_best_wer.iter().enumerate() {
        if let Some(b) = bin_of(w, edges) {
            members[b].push(i);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(members.len());
    for (b, idx) in members.into_iter().enumerate() {
        let total = idx.len();
        let mut sampled = if total > sample_size {
            rand::seq::index::sample(&mut rng, total, sample_size)
                .into_iter()
                .map(|k| idx[k])
                .collect()
        } else {
            idx
        };
        sampled.sort_unstable();
        let bleu = systems
            .iter()
            .map(|sys| {
                if sampled.is_empty() {
                    return Ok(None);
                }
                let mut s = BleuStats::default();
                for &i in &sampled {
                    s.add(&BleuStats::segment(&sys[i], &references[i])?);
                }
                Ok(Some(s.score()))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(WerBin {
            lo: edges[b],
            hi: edges[b + 1],
            total,
            sampled,
            bleu,
        });
    }
    Ok(rows)
}
