use super::encoder::{resolve_peak, Encoded, Source};
use super::lstm::{self, Peak, State};
use super::Model;
use crate::autodiff::{Graph, NodeId};
use crate::error::{Error, Result};
use crate::vocab::{WordId, BOS, EOS};

/// Decoder LSTM state, one entry per layer.
#[derive(Debug, Clone)]
pub struct DecoderState {
    pub layers: Vec<State>,
}

impl DecoderState {
    pub fn top(&self) -> State {
        *self.layers.last().expect("decoder has layers")
    }
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub state: DecoderState,
    /// Unnormalized scores over the target vocabulary.
    pub logits: NodeId,
    /// Attention weights over source nodes, `1 x N`.
    pub attention: NodeId,
}

impl Model {
    pub fn initial_state(&self, enc: &Encoded) -> DecoderState {
        DecoderState {
            layers: enc.init.clone(),
        }
    }

    /// Context vector and attention weights for query `s_prev`.
    pub fn attend(&self, g: &mut Graph<'_>, enc: &Encoded, s_prev: NodeId) -> Result<(NodeId, NodeId)> {
        let p = &self.params;
        let (ws, b, v) = (g.param(p.att_ws), g.param(p.att_b), g.param(p.att_v));
        let q = g.affine(&[(ws, s_prev)], Some(b))?;
        let t = g.add_column(enc.keys, q)?;
        let t = g.tanh(t);
        let mut logits = g.matmul(v, t)?;
        let sc = self.config.scoring;
        if let (true, Some(lw)) = (sc.batt, enc.log_marginals) {
            match resolve_peak(g, sc.peak_a, p.s_a) {
                Peak::Fixed(0.0) => {}
                // ln w * 1.0 is exact, matching a learned coefficient at 1.
                Peak::Fixed(1.0) => logits = g.add(logits, lw)?,
                Peak::Fixed(s) => {
                    let bias = g.scale_const(s, lw);
                    logits = g.add(logits, bias)?;
                }
                Peak::Learned(s) => {
                    let bias = g.scale(s, lw)?;
                    logits = g.add(logits, bias)?;
                }
            }
        }
        let alpha = g.softmax(logits);
        let n = enc.states.len();
        let col = g.reshape(alpha, n, 1)?;
        let ctx = g.matmul(enc.memory, col)?;
        Ok((ctx, alpha))
    }

    /// Attend with the previous state, advance the decoder on `y_prev`, and
    /// score the next token.
    pub fn decode_step(
        &self,
        g: &mut Graph<'_>,
        enc: &Encoded,
        state: &DecoderState,
        y_prev: WordId,
    ) -> Result<StepOutput> {
        let p = &self.params;
        let (ctx, attention) = self.attend(g, enc, state.top().h)?;
        let mut input = g.column(p.emb_trg, y_prev.index())?;
        let mut layers = Vec::with_capacity(state.layers.len());
        for (cell, &prev) in p.dec.iter().zip(&state.layers) {
            let s = lstm::lstm_step(g, cell, input, prev)?;
            input = s.h;
            layers.push(s);
        }
        let cat = g.concat(&[input, ctx])?;
        let (w_hs, b_hs) = (g.param(p.w_hs), g.param(p.b_hs));
        let st = g.affine(&[(w_hs, cat)], Some(b_hs))?;
        let st = g.tanh(st);
        let (w_so, b_so) = (g.param(p.w_so), g.param(p.b_so));
        let logits = g.affine(&[(w_so, st)], Some(b_so))?;
        Ok(StepOutput {
            state: DecoderState { layers },
            logits,
            attention,
        })
    }

    /// Teacher-forced negative log-likelihood of `target`, which must end
    /// with `</s>`.
    pub fn sequence_loss(&self, g: &mut Graph<'_>, enc: &Encoded, target: &[WordId]) -> Result<NodeId> {
        self.teacher_forced(g, enc, target, |_, _| {})
    }

    /// Like [`Model::sequence_loss`], also reporting each step's output
    /// to `visit` together with the gold token.
    pub fn teacher_forced(
        &self,
        g: &mut Graph<'_>,
        enc: &Encoded,
        target: &[WordId],
        mut visit: impl FnMut(&Graph<'_>, &StepOutput),
    ) -> Result<NodeId> {
        if target.last() != Some(&EOS) {
            return Err(Error::Empty("target must be nonempty and end with </s>"));
        }
        let mut state = self.initial_state(enc);
        let mut prev = BOS;
        let mut terms = Vec::with_capacity(target.len());
        for &y in target {
            let out = self.decode_step(g, enc, &state, prev)?;
            visit(g, &out);
            terms.push(g.pick_neg_log_softmax(out.logits, y.index())?);
            state = out.state;
            prev = y;
        }
        g.sum(&terms)
    }

    /// Encodes `src` and returns the loss node for `target`.
    pub fn loss(&self, g: &mut Graph<'_>, src: &Source, target: &[WordId]) -> Result<NodeId> {
        let enc = self.encode(g, src)?;
        self.sequence_loss(g, &enc, target)
    }
}

/// `tokens` followed by `</s>`.
pub fn with_eos(tokens: &[WordId]) -> Vec<WordId> {
    let mut v = tokens.to_vec();
    v.push(EOS);
    v
}
