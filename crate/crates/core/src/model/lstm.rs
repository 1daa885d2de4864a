//! LSTM cells: sequential, child-sum TreeLSTM and the score-aware
//! LatticeLSTM.

use rand::Rng;

use crate::autodiff::{Graph, NodeId, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::math::{floored_ln, log_sum_exp};

/// Gate parameters of one LSTM layer in one direction.
#[derive(Debug, Clone)]
pub struct LstmParams {
    pub w_f: ParamId,
    pub w_in: ParamId,
    pub w_o: ParamId,
    pub w_u: ParamId,
    pub u_f: ParamId,
    pub u_in: ParamId,
    pub u_o: ParamId,
    pub u_u: ParamId,
    pub b_f: ParamId,
    pub b_in: ParamId,
    pub b_o: ParamId,
    pub b_u: ParamId,
}

impl LstmParams {
    /// Glorot matrices, zero biases except the forget bias (1).
    pub fn init<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut w = |g: &str| store_w(store, prefix, g, hidden, input, rng);
        let (w_f, w_in, w_o, w_u) = (w("W_f")?, w("W_in")?, w("W_o")?, w("W_u")?);
        let mut u = |g: &str| store_w(store, prefix, g, hidden, hidden, rng);
        let (u_f, u_in, u_o, u_u) = (u("U_f")?, u("U_in")?, u("U_o")?, u("U_u")?);
        let mut b = |g: &str, v: f64| store.add(format!("{prefix}.{g}"), Tensor::filled(hidden, 1, v));
        Ok(LstmParams {
            w_f,
            w_in,
            w_o,
            w_u,
            u_f,
            u_in,
            u_o,
            u_u,
            b_f: b("b_f", 1.0)?,
            b_in: b("b_in", 0.0)?,
            b_o: b("b_o", 0.0)?,
            b_u: b("b_u", 0.0)?,
        })
    }
}

fn store_w<R: Rng>(
    store: &mut ParamStore,
    prefix: &str,
    gate: &str,
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Result<ParamId> {
    store.add_glorot(&format!("{prefix}.{gate}"), rows, cols, rng)
}

/// Hidden and cell state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct State {
    pub h: NodeId,
    pub c: NodeId,
}

/// Peakiness of one mechanism as seen by the graph.
#[derive(Debug, Clone, Copy)]
pub enum Peak {
    Fixed(f64),
    /// A parameter node; a vector for per-unit coefficients.
    Learned(NodeId),
}

/// Score handling inside [`lattice_lstm_step`].
#[derive(Debug, Clone, Copy)]
pub struct CellScoring {
    /// `None` gives the unweighted TreeLSTM child-sum.
    pub wcs: Option<Peak>,
    pub bfg: Option<Peak>,
}

impl CellScoring {
    pub const TREE: CellScoring = CellScoring { wcs: None, bfg: None };
}

fn gate(g: &mut Graph<'_>, w: ParamId, u: ParamId, b: ParamId, x: NodeId, h: NodeId) -> Result<NodeId> {
    let (w, u, b) = (g.param(w), g.param(u), g.param(b));
    g.affine(&[(w, x), (u, h)], Some(b))
}

/// Zero hidden and cell state for the first node of a sequence.
pub fn zero_state(g: &mut Graph<'_>, hidden: usize) -> State {
    let h = g.input(Tensor::zeros(hidden, 1));
    State { h, c: h }
}

/// One step of the sequential LSTM.
pub fn lstm_step(g: &mut Graph<'_>, p: &LstmParams, x: NodeId, prev: State) -> Result<State> {
    let i = gate(g, p.w_in, p.u_in, p.b_in, x, prev.h)?;
    let i = g.sigmoid(i);
    let f = gate(g, p.w_f, p.u_f, p.b_f, x, prev.h)?;
    let f = g.sigmoid(f);
    let o = gate(g, p.w_o, p.u_o, p.b_o, x, prev.h)?;
    let o = g.sigmoid(o);
    let u = gate(g, p.w_u, p.u_u, p.b_u, x, prev.h)?;
    let u = g.tanh(u);
    let iu = g.mul(i, u)?;
    let fc = g.mul(f, prev.c)?;
    let c = g.add(iu, fc)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok(State { h, c })
}

/// Normalized log weights `S ln w_k - Z` for every predecessor, as graph
/// nodes of shape `hidden x 1`.
///
/// The fixed and learned branches perform the same floating-point
/// operations in the same order, so a learned coefficient sitting at 1
/// reproduces `Fixed(1.0)` bit for bit.
fn log_weights(g: &mut Graph<'_>, peak: Peak, weights: &[f64], hidden: usize) -> Result<Vec<NodeId>> {
    let lw: Vec<f64> = weights.iter().map(|&w| floored_ln(w)).collect();
    match peak {
        Peak::Fixed(s) => {
            let a: Vec<f64> = if s == 0.0 {
                vec![0.0; lw.len()]
            } else {
                lw.iter().map(|&l| l * s).collect()
            };
            let z = log_sum_exp(&a);
            Ok(a.iter()
                .map(|&ak| g.input(Tensor::filled(hidden, 1, ak - z)))
                .collect())
        }
        Peak::Learned(s) => {
            let a: Vec<NodeId> = lw.iter().map(|&l| g.scale_const(l, s)).collect();
            let z = g.log_sum_exp(&a)?;
            a.iter().map(|&ak| g.sub(ak, z)).collect()
        }
    }
}

/// Recurrent input `h~` of a lattice node: the plain sum of predecessor
/// states, or with `wcs` the per-unit weighted sum `Σ_k (w_k^S / Z) ⊙ h_k`.
pub fn child_sum(g: &mut Graph<'_>, wcs: Option<Peak>, hs: &[NodeId], weights: &[f64]) -> Result<NodeId> {
    let Some(peak) = wcs else {
        return g.sum(hs);
    };
    let hidden = g.shape(hs[0]).0;
    let lw = log_weights(g, peak, weights, hidden)?;
    let mut terms = Vec::with_capacity(hs.len());
    for (&h, &l) in hs.iter().zip(&lw) {
        let u = g.exp(l);
        terms.push(g.mul(u, h)?);
    }
    g.sum(&terms)
}

/// One LatticeLSTM node update from its predecessors' states.
///
/// `weights` are the normalized scores of `preds` as seen from this node.
pub fn lattice_lstm_step(
    g: &mut Graph<'_>,
    p: &LstmParams,
    x: NodeId,
    preds: &[State],
    weights: &[f64],
    scoring: CellScoring,
) -> Result<State> {
    if preds.is_empty() {
        return Err(Error::invalid("lattice node without predecessors"));
    }
    if weights.len() != preds.len() {
        return Err(Error::invalid(format!(
            "{} weights for {} predecessors",
            weights.len(),
            preds.len()
        )));
    }
    let hidden = g.shape(preds[0].h).0;
    let hs: Vec<NodeId> = preds.iter().map(|s| s.h).collect();
    let h_tilde = child_sum(g, scoring.wcs, &hs, weights)?;
    let forget_bias = match scoring.bfg {
        None => None,
        Some(peak) => Some(log_weights(g, peak, weights, hidden)?),
    };

    let i = gate(g, p.w_in, p.u_in, p.b_in, x, h_tilde)?;
    let i = g.sigmoid(i);
    let o = gate(g, p.w_o, p.u_o, p.b_o, x, h_tilde)?;
    let o = g.sigmoid(o);
    let u = gate(g, p.w_u, p.u_u, p.b_u, x, h_tilde)?;
    let u = g.tanh(u);
    let mut fcs = Vec::with_capacity(preds.len());
    for (k, st) in preds.iter().enumerate() {
        let mut f = gate(g, p.w_f, p.u_f, p.b_f, x, st.h)?;
        if let Some(bias) = &forget_bias {
            f = g.add(f, bias[k])?;
        }
        let f = g.sigmoid(f);
        fcs.push(g.mul(f, st.c)?);
    }
    let iu = g.mul(i, u)?;
    let fc = g.sum(&fcs)?;
    let c = g.add(iu, fc)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok(State { h, c })
}
