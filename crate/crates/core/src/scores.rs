//! Lattice score normalization.
//!
//! Upstream scores arrive forward-normalized (`wf`, out-going scores of a
//! node sum to one). From them we derive marginals (`wm`, total probability
//! of all complete paths through a node, via the forward algorithm) and
//! backward-normalized predecessor weights (`wb`, incoming weights of each
//! node sum to one). All algebra runs in log space; values are returned in
//! linear space.

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::math::{floored_ln, log_sum_exp};

/// Per-node scores of one lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeScores {
    pub wf: Vec<f64>,
    pub wm: Vec<f64>,
    /// Per-node backward score; see [`node_backward_scores`].
    pub wb: Vec<f64>,
    /// For every node, weights over `lat.preds(i)` summing to one.
    pub pred_weights: Vec<Vec<f64>>,
    /// For every node, renormalized `wf` over `lat.succs(i)`.
    pub succ_weights: Vec<Vec<f64>>,
}

impl NodeScores {
    pub fn compute(lat: &Lattice) -> Result<Self> {
        let wm = compute_marginals(lat);
        let pred_weights = backward_normalize(lat, &wm)?;
        let succ_weights = forward_successor_weights(lat);
        let wb = backward_from_marginals(lat, &wm);
        Ok(NodeScores {
            wf: lat.nodes().iter().map(|n| n.wf).collect(),
            wm,
            wb,
            pred_weights,
            succ_weights,
        })
    }
}

fn log_marginals(lat: &Lattice) -> Vec<f64> {
    let mut lm = vec![0.0; lat.len()];
    let mut buf = Vec::new();
    lm[0] = lat.wf(0).ln();
    for i in 1..lat.len() {
        buf.clear();
        buf.extend(lat.preds(i).iter().map(|&k| lm[k]));
        lm[i] = lat.wf(i).ln() + log_sum_exp(&buf);
    }
    lm
}

/// Forward algorithm: `wm(i) = wf(i) * Σ_{k ∈ C(i)} wm(k)`, `wm(<s>) = wf(<s>)`.
pub fn compute_marginals(lat: &Lattice) -> Vec<f64> {
    log_marginals(lat).into_iter().map(f64::exp).collect()
}

/// Weights of each node's predecessors: `wm(k) / Σ_{k' ∈ C(i)} wm(k')`.
///
/// Fails if every predecessor of some node has zero marginal.
pub fn backward_normalize(lat: &Lattice, wm: &[f64]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(lat.len());
    let mut buf = Vec::new();
    for i in 0..lat.len() {
        let preds = lat.preds(i);
        buf.clear();
        buf.extend(preds.iter().map(|&k| wm[k].ln()));
        let z = log_sum_exp(&buf);
        if !preds.is_empty() && z == f64::NEG_INFINITY {
            return Err(Error::invalid(format!("predecessors of node {i} have zero marginal")));
        }
        out.push(buf.iter().map(|&l| (l - z).exp()).collect());
    }
    Ok(out)
}

/// Weights of each node's successors: `wf(j)` renormalized over `succs(i)`.
///
/// The backward-running encoder consumes these.
pub fn forward_successor_weights(lat: &Lattice) -> Vec<Vec<f64>> {
    let mut buf = Vec::new();
    (0..lat.len())
        .map(|i| {
            buf.clear();
            buf.extend(lat.succs(i).iter().map(|&j| floored_ln(lat.wf(j))));
            let z = log_sum_exp(&buf);
            buf.iter().map(|&l| (l - z).exp()).collect()
        })
        .collect()
}

fn backward_from_marginals(lat: &Lattice, wm: &[f64]) -> Vec<f64> {
    let mut wb = vec![1.0; lat.len()];
    let mut buf = Vec::new();
    for (k, w) in wb.iter_mut().enumerate() {
        if let Some(&j) = lat.succs(k).first() {
            buf.clear();
            buf.extend(lat.preds(j).iter().map(|&p| wm[p].ln()));
            *w = (wm[k].ln() - log_sum_exp(&buf)).exp();
        }
    }
    wb
}

/// Backward-normalized score of every node: the node's share among the
/// predecessors of its (lowest-id) successor; 1 for the end node.
///
/// When all successors of a node share one predecessor set, as in any
/// lattice produced by line-graph conversion, the choice of successor does
/// not matter and this is the exact mirror image of `wf`.
pub fn node_backward_scores(lat: &Lattice) -> Vec<f64> {
    backward_from_marginals(lat, &compute_marginals(lat))
}

/// `w^S / Σ w'^S`, evaluated in log space with probabilities floored at
/// [`PROB_FLOOR`](crate::math::PROB_FLOOR). `S = 0` flattens to uniform, `S = 1` is the identity.
pub fn apply_peakiness(weights: &[f64], s: f64) -> Vec<f64> {
    let a: Vec<f64> = weights.iter().map(|&w| s * floored_ln(w)).collect();
    let z = log_sum_exp(&a);
    a.iter().map(|&x| (x - z).exp()).collect()
}

/// Per-unit peakiness: result `[u][k]` is weight `k` sharpened with `s[u]`.
pub fn apply_peakiness_per_unit(weights: &[f64], s: &[f64]) -> Vec<Vec<f64>> {
    s.iter().map(|&su| apply_peakiness(weights, su)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::tests::diamond;
    use crate::vocab::Vocabulary;

    #[test]
    fn chain_scores_are_one() {
        let v = Vocabulary::from_tokens(["a", "b"]);
        let lat = Lattice::from_token_sequence(&v.encode(&["a", "b", "a"])).unwrap();
        let sc = NodeScores::compute(&lat).unwrap();
        assert!(sc.wm.iter().all(|&x| x == 1.0));
        assert!(sc.wb.iter().all(|&x| x == 1.0));
        for w in &sc.pred_weights[1..] {
            assert_eq!(w, &vec![1.0]);
        }
    }

    #[test]
    fn diamond_marginals_and_backward_weights() {
        let (lat, _) = diamond();
        let sc = NodeScores::compute(&lat).unwrap();
        let expect = [1.0, 0.3, 0.7, 1.0, 1.0];
        for (a, b) in sc.wm.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        assert!((sc.pred_weights[3][0] - 0.3).abs() < 1e-15);
        assert!((sc.pred_weights[3][1] - 0.7).abs() < 1e-15);
        assert!((sc.wb[1] - 0.3).abs() < 1e-15);
        assert!((sc.wb[2] - 0.7).abs() < 1e-15);
        assert!((sc.succ_weights[0][0] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn peakiness_special_values() {
        let w = [0.3, 0.7];
        assert_eq!(apply_peakiness(&w, 0.0), vec![0.5, 0.5]);
        let id = apply_peakiness(&w, 1.0);
        assert!((id[0] - 0.3).abs() < 1e-15 && (id[1] - 0.7).abs() < 1e-15);
        // scalar brute force: 0.3^2 / (0.3^2 + 0.7^2)
        let sq = apply_peakiness(&w, 2.0);
        let denom = 0.3f64 * 0.3 + 0.7 * 0.7;
        assert!((sq[0] - 0.09 / denom).abs() < 1e-15);
        assert!((sq[1] - 0.49 / denom).abs() < 1e-15);
        assert!((sq[0] - 0.1552).abs() < 1e-4);
    }

    #[test]
    fn peakiness_sharpens_and_saturates() {
        let w = [0.2, 0.3, 0.5];
        let mut prev = 0.5;
        for s in [1.5, 2.0, 4.0, 10.0] {
            let out = apply_peakiness(&w, s);
            assert!(out[2] > prev);
            prev = out[2];
        }
        assert!(apply_peakiness(&[0.45, 0.55], 50.0)[1] > 0.999);
    }

    #[test]
    fn zero_weight_is_floored() {
        let out = apply_peakiness(&[0.0, 1.0], 1.0);
        assert!(out[0] > 0.0 && out[0] < 1e-9);
        let s = out[0] + out[1];
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn scale_invariance() {
        let w = [0.1, 0.25, 0.65];
        let scaled: Vec<f64> = w.iter().map(|x| x * 0.37).collect();
        for s in [0.0, 0.5, 1.0, 3.0] {
            let a = apply_peakiness(&w, s);
            let b = apply_peakiness(&scaled, s);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
