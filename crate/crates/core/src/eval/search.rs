use crate::autodiff::Graph;
use crate::error::Result;
use crate::model::{DecoderState, Encoded, Model, Source};
use crate::vocab::{WordId, BOS, EOS};

/// A decoded output. `tokens` excludes `</s>`; `logprob` includes it when
/// the hypothesis finished.
#[derive(Debug, Clone, PartialEq)]
pub struct Translation {
    pub tokens: Vec<WordId>,
    pub logprob: f64,
    pub finished: bool,
}

/// A partial beam-search output.
#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub tokens: Vec<WordId>,
    pub logprob: f64,
    pub state: DecoderState,
    pub finished: bool,
}

impl Hypothesis {
    fn last(&self) -> WordId {
        self.tokens.last().copied().unwrap_or(BOS)
    }

    fn into_translation(mut self) -> Translation {
        if self.finished {
            self.tokens.pop();
        }
        Translation {
            tokens: self.tokens,
            logprob: self.logprob,
            finished: self.finished,
        }
    }
}

/// Default output length cap: three times the number of source nodes.
pub fn default_max_len(src: &Source) -> usize {
    3 * src.num_nodes()
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = crate::math::log_sum_exp(logits);
    logits.iter().map(|x| x - lse).collect()
}

/// Index of the largest entry; the lowest index wins ties.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Argmax decoding until `</s>` or `max_len` tokens.
pub fn greedy(model: &Model, src: &Source, max_len: Option<usize>) -> Result<Translation> {
    let max_len = max_len.unwrap_or_else(|| default_max_len(src));
    let mut g = Graph::new(&model.store);
    let enc = model.encode(&mut g, src)?;
    let mut state = model.initial_state(&enc);
    let mut prev = BOS;
    let mut out = Translation {
        tokens: Vec::new(),
        logprob: 0.0,
        finished: false,
    };
    for _ in 0..max_len {
        let step = model.decode_step(&mut g, &enc, &state, prev)?;
        let lp = log_softmax(g.value(step.logits).data());
        let y = argmax(&lp);
        out.logprob += lp[y];
        if WordId(y as u32) == EOS {
            out.finished = true;
            break;
        }
        out.tokens.push(WordId(y as u32));
        state = step.state;
        prev = WordId(y as u32);
    }
    Ok(out)
}

/// Beam search without length normalization.
///
/// Each step expands every live hypothesis and keeps the `beam` best
/// candidates by total log-probability; candidates ending in `</s>` retire
/// to the finished pool. Search stops once no live hypothesis can beat the
/// best finished one. Returns the best finished hypothesis, or the best
/// live one if nothing finished within `max_len` steps.
pub fn beam_search(model: &Model, src: &Source, beam: usize, max_len: Option<usize>) -> Result<Translation> {
    let beam = beam.max(1);
    let max_len = max_len.unwrap_or_else(|| default_max_len(src));
    let mut g = Graph::new(&model.store);
    let enc = model.encode(&mut g, src)?;
    beam_search_encoded(model, &mut g, &enc, beam, max_len)
}

pub fn beam_search_encoded(
    model: &Model,
    g: &mut Graph<'_>,
    enc: &Encoded,
    beam: usize,
    max_len: usize,
) -> Result<Translation> {
    let mut alive = vec![Hypothesis {
        tokens: Vec::new(),
        logprob: 0.0,
        state: model.initial_state(enc),
        finished: false,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for _ in 0..max_len {
        // (hypothesis, token, total logprob), in hypothesis then token order
        let mut cands: Vec<(usize, usize, f64)> = Vec::new();
        let mut states = Vec::with_capacity(alive.len());
        for (h, hyp) in alive.iter().enumerate() {
            let step = model.decode_step(g, enc, &hyp.state, hyp.last())?;
            let lp = log_softmax(g.value(step.logits).data());
            cands.extend(lp.iter().enumerate().map(|(y, &l)| (h, y, hyp.logprob + l)));
            states.push(step.state);
        }
        // stable: ties keep the earlier hypothesis and the lower token id
        cands.sort_by(|a, b| b.2.total_cmp(&a.2));
        cands.truncate(beam);
        let mut next = Vec::with_capacity(beam);
        for (h, y, lp) in cands {
            let mut tokens = alive[h].tokens.clone();
            tokens.push(WordId(y as u32));
            let hyp = Hypothesis {
                tokens,
                logprob: lp,
                state: states[h].clone(),
                finished: WordId(y as u32) == EOS,
            };
            if hyp.finished {
                finished.push(hyp);
            } else {
                next.push(hyp);
            }
        }
        alive = next;
        let best_done = finished.iter().map(|h| h.logprob).fold(f64::NEG_INFINITY, f64::max);
        let best_alive = alive.iter().map(|h| h.logprob).fold(f64::NEG_INFINITY, f64::max);
        if alive.is_empty() || best_done >= best_alive {
            break;
        }
    }
    let pool = if finished.is_empty() { alive } else { finished };
    let best = pool
        .into_iter()
        .reduce(|a, b| if b.logprob > a.logprob { b } else { a })
        .expect("beam keeps at least one hypothesis");
    Ok(best.into_translation())
}

/// Model log-probability of `tokens` followed by `</s>`.
pub fn score_output(model: &Model, src: &Source, tokens: &[WordId]) -> Result<f64> {
    let mut g = Graph::new(&model.store);
    let l = model.loss(&mut g, src, &crate::model::with_eos(tokens))?;
    Ok(-g.scalar(l))
}
