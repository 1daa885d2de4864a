use super::lstm::{self, CellScoring, Peak, State};
use super::{Model, Peakiness};
use crate::autodiff::{Graph, NodeId, ParamId, Tensor};
use crate::error::Result;
use crate::lattice::Lattice;
use crate::math::floored_ln;
use crate::scores::NodeScores;
use crate::vocab::{WordId, BOS, EOS};

/// Source side of one example.
#[derive(Debug, Clone)]
pub enum Source {
    /// Plain tokens, without sentence markers.
    Sequence(Vec<WordId>),
    Lattice { lattice: Lattice, scores: NodeScores },
}

impl Source {
    pub fn lattice(lattice: Lattice) -> Result<Self> {
        let scores = NodeScores::compute(&lattice)?;
        Ok(Source::Lattice { lattice, scores })
    }

    /// Number of encoder states: tokens plus both sentence markers, or
    /// lattice nodes.
    pub fn num_nodes(&self) -> usize {
        match self {
            Source::Sequence(t) => t.len() + 2,
            Source::Lattice { lattice, .. } => lattice.len(),
        }
    }
}

/// Encoder output for one source.
#[derive(Debug, Clone)]
pub struct Encoded {
    /// Top-layer `fwd | bwd` state of every node, in node order.
    pub states: Vec<NodeId>,
    /// `states` as columns of one matrix.
    pub memory: NodeId,
    /// Attention key projection of `memory`.
    pub keys: NodeId,
    /// Per-node `ln w_m` as a `1 x N` row, for lattice sources.
    pub log_marginals: Option<NodeId>,
    /// Initial decoder state per layer.
    pub init: Vec<State>,
}

pub(crate) fn resolve_peak(g: &mut Graph<'_>, mode: Peakiness, param: Option<ParamId>) -> Peak {
    match (mode.fixed_value(), param) {
        (Some(s), _) => Peak::Fixed(s),
        (None, Some(p)) => Peak::Learned(g.param(p)),
        (None, None) => panic!("learned peakiness without a parameter"),
    }
}

impl Model {
    fn cell_scoring(&self, g: &mut Graph<'_>, layer: usize) -> CellScoring {
        let sc = self.config.scoring;
        CellScoring {
            wcs: sc
                .wcs
                .then(|| resolve_peak(g, sc.peak_h, self.params.s_h[layer])),
            bfg: sc
                .bfg
                .then(|| resolve_peak(g, sc.peak_f, self.params.s_f[layer])),
        }
    }

    pub fn encode(&self, g: &mut Graph<'_>, src: &Source) -> Result<Encoded> {
        match src {
            Source::Sequence(tokens) => self.encode_sequence(g, tokens),
            Source::Lattice { lattice, scores } => self.encode_lattice(g, lattice, scores),
        }
    }

    /// Bidirectional stacked LSTM over `<s> tokens </s>`.
    pub fn encode_sequence(&self, g: &mut Graph<'_>, tokens: &[WordId]) -> Result<Encoded> {
        let mut words = Vec::with_capacity(tokens.len() + 2);
        words.push(BOS);
        words.extend_from_slice(tokens);
        words.push(EOS);
        let n = words.len();
        let hd = self.config.hidden_dim;
        let p = &self.params;
        let mut fwd_in: Vec<NodeId> = words
            .iter()
            .map(|w| g.column(p.emb_fwd, w.index()))
            .collect::<Result<_>>()?;
        let mut bwd_in: Vec<NodeId> = words
            .iter()
            .map(|w| g.column(p.emb_bwd, w.index()))
            .collect::<Result<_>>()?;
        let mut init = Vec::with_capacity(self.config.num_layers);
        for l in 0..self.config.num_layers {
            let mut fwd = Vec::with_capacity(n);
            let mut prev = lstm::zero_state(g, hd);
            for &x in &fwd_in {
                prev = lstm::lstm_step(g, &p.enc_fwd[l], x, prev)?;
                fwd.push(prev);
            }
            let mut bwd = vec![prev; n];
            let mut prev = lstm::zero_state(g, hd);
            for i in (0..n).rev() {
                prev = lstm::lstm_step(g, &p.enc_bwd[l], bwd_in[i], prev)?;
                bwd[i] = prev;
            }
            init.push(terminal_state(g, &fwd, &bwd)?);
            fwd_in = fwd.iter().map(|s| s.h).collect();
            bwd_in = bwd.iter().map(|s| s.h).collect();
        }
        self.finish(g, &fwd_in, &bwd_in, None, init)
    }

    /// Bidirectional stacked LatticeLSTM. The forward pass weights
    /// predecessors by backward-normalized scores, the backward pass weights
    /// successors by forward-normalized scores.
    pub fn encode_lattice(&self, g: &mut Graph<'_>, lat: &Lattice, scores: &NodeScores) -> Result<Encoded> {
        let n = lat.len();
        let hd = self.config.hidden_dim;
        let p = &self.params;
        let mut fwd_in: Vec<NodeId> = lat
            .nodes()
            .iter()
            .map(|nd| g.column(p.emb_fwd, nd.word.index()))
            .collect::<Result<_>>()?;
        let mut bwd_in: Vec<NodeId> = lat
            .nodes()
            .iter()
            .map(|nd| g.column(p.emb_bwd, nd.word.index()))
            .collect::<Result<_>>()?;
        let mut init = Vec::with_capacity(self.config.num_layers);
        let mut buf = Vec::new();
        for l in 0..self.config.num_layers {
            let scoring = self.cell_scoring(g, l);
            let mut fwd: Vec<State> = Vec::with_capacity(n);
            for i in 0..n {
                let st = if lat.preds(i).is_empty() {
                    let z = lstm::zero_state(g, hd);
                    lstm::lstm_step(g, &p.enc_fwd[l], fwd_in[i], z)?
                } else {
                    buf.clear();
                    buf.extend(lat.preds(i).iter().map(|&k| fwd[k]));
                    lstm::lattice_lstm_step(g, &p.enc_fwd[l], fwd_in[i], &buf, &scores.pred_weights[i], scoring)?
                };
                fwd.push(st);
            }
            let mut bwd: Vec<Option<State>> = vec![None; n];
            for i in (0..n).rev() {
                let st = if lat.succs(i).is_empty() {
                    let z = lstm::zero_state(g, hd);
                    lstm::lstm_step(g, &p.enc_bwd[l], bwd_in[i], z)?
                } else {
                    buf.clear();
                    buf.extend(lat.succs(i).iter().map(|&j| bwd[j].expect("successor encoded")));
                    lstm::lattice_lstm_step(g, &p.enc_bwd[l], bwd_in[i], &buf, &scores.succ_weights[i], scoring)?
                };
                bwd[i] = Some(st);
            }
            let bwd: Vec<State> = bwd.into_iter().map(|s| s.expect("all nodes encoded")).collect();
            init.push(terminal_state(g, &fwd, &bwd)?);
            fwd_in = fwd.iter().map(|s| s.h).collect();
            bwd_in = bwd.iter().map(|s| s.h).collect();
        }
        let lw: Vec<f64> = scores.wm.iter().map(|&w| floored_ln(w)).collect();
        let log_marginals = g.input(Tensor::new(1, n, lw)?);
        self.finish(g, &fwd_in, &bwd_in, Some(log_marginals), init)
    }

    fn finish(
        &self,
        g: &mut Graph<'_>,
        fwd: &[NodeId],
        bwd: &[NodeId],
        log_marginals: Option<NodeId>,
        init: Vec<State>,
    ) -> Result<Encoded> {
        let states: Vec<NodeId> = fwd
            .iter()
            .zip(bwd)
            .map(|(&f, &b)| g.concat(&[f, b]))
            .collect::<Result<_>>()?;
        let memory = g.stack_cols(&states)?;
        let wh = g.param(self.params.att_wh);
        let keys = g.matmul(wh, memory)?;
        Ok(Encoded {
            states,
            memory,
            keys,
            log_marginals,
            init,
        })
    }
}

/// Forward state at the end node joined with backward state at the start
/// node.
fn terminal_state(g: &mut Graph<'_>, fwd: &[State], bwd: &[State]) -> Result<State> {
    let (last, first) = (fwd[fwd.len() - 1], bwd[0]);
    Ok(State {
        h: g.concat(&[last.h, first.h])?,
        c: g.concat(&[last.c, first.c])?,
    })
}
