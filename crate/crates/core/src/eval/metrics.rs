use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

/// Unit-cost Levenshtein distance between token sequences.
pub fn edit_distance<T: PartialEq>(hyp: &[T], reference: &[T]) -> usize {
    let mut row: Vec<usize> = (0..=reference.len()).collect();
    for (i, h) in hyp.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, r) in reference.iter().enumerate() {
            let sub = diag + usize::from(h != r);
            diag = row[j + 1];
            row[j + 1] = sub.min(row[j] + 1).min(diag + 1);
        }
    }
    row[reference.len()]
}

/// Word error rate in percent.
pub fn wer<T: PartialEq>(hyp: &[T], reference: &[T]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Empty("reference"));
    }
    Ok(100.0 * edit_distance(hyp, reference) as f64 / reference.len() as f64)
}

/// Corpus-level WER: total edits over total reference words.
pub fn corpus_wer<T: PartialEq>(hyps: &[Vec<T>], refs: &[Vec<T>]) -> Result<f64> {
    if hyps.len() != refs.len() {
        return Err(Error::Format("hypothesis and reference counts differ".into()));
    }
    let words: usize = refs.iter().map(Vec::len).sum();
    if words == 0 {
        return Err(Error::Empty("reference"));
    }
    let edits: usize = hyps.iter().zip(refs).map(|(h, r)| edit_distance(h, r)).sum();
    Ok(100.0 * edits as f64 / words as f64)
}

pub const BLEU_ORDER: usize = 4;

/// Sufficient statistics of corpus BLEU.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BleuStats {
    pub matches: [usize; BLEU_ORDER],
    pub totals: [usize; BLEU_ORDER],
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

impl BleuStats {
    /// Statistics of one segment against its references. Clipping uses the
    /// maximum count over references; the effective reference length is the
    /// closest one, shorter on ties.
    pub fn segment<T: Eq + Hash>(hyp: &[T], refs: &[Vec<T>]) -> Result<Self> {
        if refs.is_empty() {
            return Err(Error::Empty("reference set"));
        }
        let mut s = BleuStats {
            hyp_len: hyp.len(),
            ..Default::default()
        };
        s.ref_len = refs
            .iter()
            .map(Vec::len)
            .min_by_key(|&r| (r.abs_diff(hyp.len()), r))
            .expect("nonempty");
        for n in 1..=BLEU_ORDER {
            let h = ngram_counts(hyp, n);
            let mut max_ref: HashMap<&[T], usize> = HashMap::new();
            for r in refs {
                for (g, c) in ngram_counts(r, n) {
                    let e = max_ref.entry(g).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            s.matches[n - 1] = h
                .iter()
                .map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0)))
                .sum();
            s.totals[n - 1] = hyp.len().saturating_sub(n - 1);
        }
        Ok(s)
    }

    pub fn add(&mut self, other: &BleuStats) {
        for n in 0..BLEU_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    /// BLEU in percent, unsmoothed: zero when any order has no match.
    pub fn score(&self) -> f64 {
        if self.hyp_len == 0 || self.matches.contains(&0) {
            return 0.0;
        }
        let log_p: f64 = (0..BLEU_ORDER)
            .map(|n| (self.matches[n] as f64 / self.totals[n] as f64).ln())
            .sum::<f64>()
            / BLEU_ORDER as f64;
        let bp = if self.hyp_len > self.ref_len {
            0.0
        } else {
            1.0 - self.ref_len as f64 / self.hyp_len as f64
        };
        100.0 * (bp + log_p).exp()
    }
}

/// Corpus BLEU of `hyps`, each with one or more references.
pub fn bleu<T: Eq + Hash>(hyps: &[Vec<T>], refs: &[Vec<Vec<T>>]) -> Result<f64> {
    Ok(bleu_stats(hyps, refs)?.score())
}

pub fn bleu_stats<T: Eq + Hash>(hyps: &[Vec<T>], refs: &[Vec<Vec<T>>]) -> Result<BleuStats> {
    if hyps.is_empty() {
        return Err(Error::Empty("hypothesis set"));
    }
    if hyps.len() != refs.len() {
        return Err(Error::Format("hypothesis and reference counts differ".into()));
    }
    let mut total = BleuStats::default();
    for (h, r) in hyps.iter().zip(refs) {
        total.add(&BleuStats::segment(h, r)?);
    }
    Ok(total)
}
