//! Word lattices.
//!
//! The encoder consumes node-labeled lattices: every node carries one word
//! and a forward-normalized score `wf` (probability of the node given its
//! predecessor). Input formats such as PLF label edges instead; they are
//! parsed into [`EdgeLabeledLattice`] and converted with the line-graph
//! construction in [`EdgeLabeledLattice::to_node_labeled`].

mod edge;
pub mod json;
pub mod plf;
pub mod random;

use std::collections::{BTreeSet, BinaryHeap};
use std::cmp::Reverse;

pub use edge::{Arc, EdgeLabeledLattice};

use crate::error::{Error, Result};
use crate::vocab::{WordId, BOS, EOS};

/// Allowed drift of out-going score sums from one.
pub const SCORE_SUM_TOLERANCE: f64 = 1e-6;

/// How score normalization problems are treated on construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreCheck {
    /// Reject lattices whose out-going scores do not sum to one.
    #[default]
    Strict,
    /// Accept them; edge-labeled input is renormalized, a warning is logged.
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeNode {
    pub word: WordId,
    /// Forward-normalized score.
    pub wf: f64,
}

/// A node-labeled word lattice with dense, topologically ordered ids.
///
/// Node 0 is the start node (`<s>`) and node `len-1` the end node (`</s>`).
/// Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    nodes: Vec<LatticeNode>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
}

/// One complete path through a lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticePath {
    /// Node ids from start to end node, inclusive.
    pub nodes: Vec<usize>,
    /// Words on the path, excluding the sentence boundary nodes.
    pub tokens: Vec<WordId>,
    pub prob: f64,
}

impl Lattice {
    /// Builds and validates a lattice.
    ///
    /// Every edge `(k, i)` must satisfy `k < i`; node 0 must be the only
    /// node without predecessors and the last node the only one without
    /// successors.
    pub fn new(
        nodes: Vec<LatticeNode>,
        edges: &[(usize, usize)],
        check: ScoreCheck,
    ) -> Result<Self> {
        let n = nodes.len();
        if n < 2 {
            return Err(Error::invalid("a lattice needs at least a start and an end node"));
        }
        let mut preds = vec![Vec::new(); n];
        let mut succs = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for &(k, i) in edges {
            if k >= n || i >= n {
                return Err(Error::invalid(format!("edge {k}->{i} references a missing node")));
            }
            if k >= i {
                return Err(Error::invalid(format!(
                    "edge {k}->{i} violates the topological id order"
                )));
            }
            if !seen.insert((k, i)) {
                return Err(Error::invalid(format!("duplicate edge {k}->{i}")));
            }
            preds[i].push(k);
            succs[k].push(i);
        }
        for p in preds.iter_mut().chain(succs.iter_mut()) {
            p.sort_unstable();
        }
        let lat = Lattice { nodes, preds, succs };
        lat.check_structure()?;
        lat.check_scores(check)?;
        Ok(lat)
    }

    fn check_structure(&self) -> Result<()> {
        let n = self.len();
        for i in 1..n {
            if self.preds[i].is_empty() {
                return Err(Error::invalid(format!("node {i} has no predecessors")));
            }
        }
        for i in 0..n - 1 {
            if self.succs[i].is_empty() {
                return Err(Error::invalid(format!("node {i} has no successors")));
            }
        }
        if self.nodes[0].word != BOS {
            return Err(Error::invalid("start node must carry the <s> word"));
        }
        if self.nodes[n - 1].word != EOS {
            return Err(Error::invalid("end node must carry the </s> word"));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if (i != 0 && node.word == BOS) || (i != n - 1 && node.word == EOS) {
                return Err(Error::invalid(format!("sentence boundary word on inner node {i}")));
            }
            if !(node.wf.is_finite() && node.wf >= 0.0 && node.wf <= 1.0 + SCORE_SUM_TOLERANCE) {
                return Err(Error::invalid(format!("score of node {i} is outside [0, 1]: {}", node.wf)));
            }
        }
        Ok(())
    }

    fn check_scores(&self, check: ScoreCheck) -> Result<()> {
        let bos_wf = self.nodes[0].wf;
        if (bos_wf - 1.0).abs() > SCORE_SUM_TOLERANCE {
            match check {
                ScoreCheck::Strict => {
                    return Err(Error::invalid(format!("start node score must be 1, got {bos_wf}")))
                }
                ScoreCheck::Lenient => log::warn!("start node score {bos_wf} is not 1"),
            }
        }
        for k in 0..self.len() {
            if self.succs[k].is_empty() {
                continue;
            }
            let sum: f64 = self.succs[k].iter().map(|&i| self.nodes[i].wf).sum();
            if (sum - 1.0).abs() > SCORE_SUM_TOLERANCE {
                match check {
                    ScoreCheck::Strict => {
                        return Err(Error::invalid(format!(
                            "scores of successors of node {k} sum to {sum}, expected 1"
                        )))
                    }
                    ScoreCheck::Lenient => {
                        log::warn!("scores of successors of node {k} sum to {sum}")
                    }
                }
            }
        }
        Ok(())
    }

    /// Chain lattice `<s> t1 .. tn </s>` with every score set to one.
    pub fn from_token_sequence(tokens: &[WordId]) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::Empty("token sequence"));
        }
        let mut nodes = Vec::with_capacity(tokens.len() + 2);
        nodes.push(LatticeNode { word: BOS, wf: 1.0 });
        nodes.extend(tokens.iter().map(|&word| LatticeNode { word, wf: 1.0 }));
        nodes.push(LatticeNode { word: EOS, wf: 1.0 });
        let edges: Vec<_> = (1..nodes.len()).map(|i| (i - 1, i)).collect();
        Lattice::new(nodes, &edges, ScoreCheck::Strict)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn bos(&self) -> usize {
        0
    }

    pub fn eos(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[LatticeNode] {
        &self.nodes
    }

    pub fn node(&self, i: usize) -> &LatticeNode {
        &self.nodes[i]
    }

    pub fn word(&self, i: usize) -> WordId {
        self.nodes[i].word
    }

    pub fn wf(&self, i: usize) -> f64 {
        self.nodes[i].wf
    }

    /// Predecessors `C(i)`, ascending.
    pub fn preds(&self, i: usize) -> &[usize] {
        &self.preds[i]
    }

    /// Successors, ascending.
    pub fn succs(&self, i: usize) -> &[usize] {
        &self.succs[i]
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.succs
            .iter()
            .enumerate()
            .flat_map(|(k, s)| s.iter().map(move |&i| (k, i)))
    }

    pub fn num_edges(&self) -> usize {
        self.succs.iter().map(Vec::len).sum()
    }

    /// Number of word-bearing nodes (everything except `<s>` and `</s>`).
    pub fn num_words(&self) -> usize {
        self.len() - 2
    }

    pub fn is_chain(&self) -> bool {
        self.succs[..self.len() - 1].iter().all(|s| s.len() == 1)
    }

    /// Same topology with new forward scores.
    pub fn with_scores(&self, wf: &[f64], check: ScoreCheck) -> Result<Self> {
        if wf.len() != self.len() {
            return Err(Error::invalid("score vector length differs from node count"));
        }
        let nodes = self
            .nodes
            .iter()
            .zip(wf)
            .map(|(n, &wf)| LatticeNode { word: n.word, wf })
            .collect();
        let edges: Vec<_> = self.edges().collect();
        Lattice::new(nodes, &edges, check)
    }

    /// Deterministic topological order (ties broken by ascending id).
    ///
    /// For a valid lattice this is the identity permutation.
    pub fn topological_order(&self) -> Vec<usize> {
        let edges: Vec<_> = self.edges().collect();
        topological_order(self.len(), &edges).expect("lattice ids are topological by construction")
    }

    /// Reverses all edges and swaps the start and end nodes.
    ///
    /// Node ids are renumbered into a topological order of the reversed
    /// graph; the returned vector maps each old id to its new id. Words are
    /// kept, and the new forward scores are the backward-normalized scores
    /// of the original lattice, so that reversing twice restores the
    /// original scores on lattices whose nodes have consistent predecessor
    /// sets (e.g. any line-graph lattice).
    pub fn reverse(&self) -> (Lattice, Vec<usize>) {
        let n = self.len();
        let rev_edges: Vec<(usize, usize)> = self.edges().map(|(k, i)| (i, k)).collect();
        let order = topological_order(n, &rev_edges).expect("reversed DAG is acyclic");
        let mut map = vec![0; n];
        for (new, &old) in order.iter().enumerate() {
            map[old] = new;
        }
        let wb = crate::scores::node_backward_scores(self);
        let mut nodes = vec![LatticeNode { word: BOS, wf: 1.0 }; n];
        for old in 0..n {
            let word = match self.nodes[old].word {
                w if old == 0 => {
                    debug_assert_eq!(w, BOS);
                    EOS
                }
                _ if old == n - 1 => BOS,
                w => w,
            };
            nodes[map[old]] = LatticeNode { word, wf: wb[old] };
        }
        let edges: Vec<_> = rev_edges.iter().map(|&(a, b)| (map[a], map[b])).collect();
        let lat = Lattice::new(nodes, &edges, ScoreCheck::Lenient)
            .expect("reversal preserves lattice structure");
        (lat, map)
    }

    /// All complete paths with their joint probabilities (product of `wf`).
    ///
    /// Fails once more than `max_paths` paths exist.
    pub fn enumerate_paths(&self, max_paths: usize) -> Result<Vec<LatticePath>> {
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        self.paths_from(0, self.nodes[0].wf, &mut stack, &mut out, max_paths)?;
        Ok(out)
    }

    fn paths_from(
        &self,
        at: usize,
        prob: f64,
        stack: &mut Vec<usize>,
        out: &mut Vec<LatticePath>,
        max_paths: usize,
    ) -> Result<()> {
        if at == self.eos() {
            if out.len() >= max_paths {
                return Err(Error::PathExplosion { limit: max_paths });
            }
            let tokens = stack[1..stack.len() - 1]
                .iter()
                .map(|&i| self.nodes[i].word)
                .collect();
            out.push(LatticePath {
                nodes: stack.clone(),
                tokens,
                prob,
            });
            return Ok(());
        }
        for &next in &self.succs[at] {
            stack.push(next);
            let r = self.paths_from(next, prob * self.nodes[next].wf, stack, out, max_paths);
            stack.pop();
            r?;
        }
        Ok(())
    }

    /// The path following the highest-scoring successor at every node.
    ///
    /// Ties go to the lower node id.
    pub fn greedy_best_path(&self) -> LatticePath {
        let mut nodes = vec![0];
        let mut prob = self.nodes[0].wf;
        let mut at = 0;
        while at != self.eos() {
            let mut best = self.succs[at][0];
            for &s in &self.succs[at][1..] {
                if self.nodes[s].wf > self.nodes[best].wf {
                    best = s;
                }
            }
            prob *= self.nodes[best].wf;
            nodes.push(best);
            at = best;
        }
        let tokens = nodes[1..nodes.len() - 1].iter().map(|&i| self.nodes[i].word).collect();
        LatticePath { nodes, tokens, prob }
    }
}

impl Lattice {
    /// Most probable complete path (max product of `wf`); ties go to the
    /// smaller predecessor id.
    pub fn best_path(&self) -> LatticePath {
        let n = self.len();
        let mut score = vec![f64::NEG_INFINITY; n];
        let mut back = vec![usize::MAX; n];
        score[0] = crate::math::floored_ln(self.nodes[0].wf);
        for i in 1..n {
            let lw = crate::math::floored_ln(self.nodes[i].wf);
            for &k in &self.preds[i] {
                if score[k] + lw > score[i] {
                    score[i] = score[k] + lw;
                    back[i] = k;
                }
            }
        }
        let mut nodes = vec![self.eos()];
        while let Some(&at) = nodes.last() {
            if at == 0 {
                break;
            }
            nodes.push(back[at]);
        }
        nodes.reverse();
        let prob = nodes.iter().map(|&i| self.nodes[i].wf).product();
        let tokens = nodes[1..nodes.len() - 1].iter().map(|&i| self.nodes[i].word).collect();
        LatticePath { nodes, tokens, prob }
    }
}

/// Kahn's algorithm with a min-heap, so ties resolve to the smallest id.
///
/// On a cycle, the error names an edge that lies on one.
pub fn topological_order(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Vec<usize>> {
    let mut indeg = vec![0usize; num_nodes];
    let mut succs = vec![Vec::new(); num_nodes];
    let mut preds = vec![Vec::new(); num_nodes];
    for &(a, b) in edges {
        if a >= num_nodes || b >= num_nodes {
            return Err(Error::invalid(format!("edge {a}->{b} references a missing node")));
        }
        indeg[b] += 1;
        succs[a].push(b);
        preds[b].push(a);
    }
    let mut heap: BinaryHeap<Reverse<usize>> =
        (0..num_nodes).filter(|&i| indeg[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(num_nodes);
    while let Some(Reverse(u)) = heap.pop() {
        order.push(u);
        for &v in &succs[u] {
            indeg[v] -= 1;
            if indeg[v] == 0 {
                heap.push(Reverse(v));
            }
        }
    }
    if order.len() == num_nodes {
        return Ok(order);
    }
    // Every unplaced node still has an unplaced predecessor; walking
    // predecessors must revisit a node, closing a cycle.
    let placed: Vec<bool> = {
        let mut p = vec![false; num_nodes];
        for &u in &order {
            p[u] = true;
        }
        p
    };
    let start = (0..num_nodes).find(|&i| !placed[i]).expect("an unplaced node exists");
    let mut visited = vec![usize::MAX; num_nodes];
    let mut cur = start;
    let mut step = 0;
    loop {
        if visited[cur] != usize::MAX {
            break;
        }
        visited[cur] = step;
        step += 1;
        cur = *preds[cur]
            .iter()
            .find(|&&p| !placed[p])
            .expect("unplaced node keeps an unplaced predecessor");
    }
    // cur is on the cycle; report the edge into it from its cycle predecessor
    let from = *preds[cur].iter().find(|&&p| !placed[p]).unwrap();
    Err(Error::Cycle { from, to: cur })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::vocab::Vocabulary;

    pub(crate) fn diamond() -> (Lattice, Vocabulary) {
        let vocab = Vocabulary::from_tokens(["a", "b", "c"]);
        let w = |t| vocab.id(t);
        let nodes = vec![
            LatticeNode { word: BOS, wf: 1.0 },
            LatticeNode { word: w("a"), wf: 0.3 },
            LatticeNode { word: w("b"), wf: 0.7 },
            LatticeNode { word: w("c"), wf: 1.0 },
            LatticeNode { word: EOS, wf: 1.0 },
        ];
        let lat = Lattice::new(nodes, &[(0, 1), (0, 2), (1, 3), (2, 3), (3, 4)], ScoreCheck::Strict)
            .unwrap();
        (lat, vocab)
    }

    #[test]
    fn chain_from_tokens() {
        let v = Vocabulary::from_tokens(["a", "b", "c"]);
        let lat = Lattice::from_token_sequence(&v.encode(&["a", "b", "c"])).unwrap();
        assert_eq!(lat.len(), 5);
        assert!(lat.is_chain());
        assert_eq!(lat.edges().collect::<Vec<_>>(), vec![(0, 1), (1, 2), (2, 3), (3, 4)]);
        let one = Lattice::from_token_sequence(&[v.id("a")]).unwrap();
        assert_eq!(one.len(), 3);
        assert!(Lattice::from_token_sequence(&[]).is_err());
    }

    #[test]
    fn chain_has_single_path_with_original_tokens() {
        let v = Vocabulary::from_tokens(["a", "b", "c"]);
        let toks = v.encode(&["c", "a", "b", "a"]);
        let lat = Lattice::from_token_sequence(&toks).unwrap();
        let paths = lat.enumerate_paths(10).unwrap();
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].tokens, toks);
        assert_eq!(paths[0].prob, 1.0);
    }

    #[test]
    fn diamond_paths() {
        let (lat, v) = diamond();
        let paths = lat.enumerate_paths(10).unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[0].tokens, v.encode(&["a", "c"]));
        assert!((paths[0].prob - 0.3).abs() < 1e-15);
        assert_eq!(paths[1].tokens, v.encode(&["b", "c"]));
        assert!((paths[1].prob - 0.7).abs() < 1e-15);
        assert!(matches!(lat.enumerate_paths(1), Err(Error::PathExplosion { limit: 1 })));
    }

    #[test]
    fn rejects_bad_structure() {
        let n = |word, wf| LatticeNode { word, wf };
        // two sinks
        let r = Lattice::new(
            vec![n(BOS, 1.0), n(WordId(3), 1.0), n(EOS, 1.0)],
            &[(0, 1), (0, 2)],
            ScoreCheck::Lenient,
        );
        assert!(r.is_err());
        // backwards edge
        let r = Lattice::new(
            vec![n(BOS, 1.0), n(WordId(3), 1.0), n(EOS, 1.0)],
            &[(0, 2), (2, 1)],
            ScoreCheck::Lenient,
        );
        assert!(r.is_err());
        // duplicate edge
        let r = Lattice::new(
            vec![n(BOS, 1.0), n(WordId(3), 1.0), n(EOS, 1.0)],
            &[(0, 1), (0, 1), (1, 2)],
            ScoreCheck::Lenient,
        );
        assert!(r.is_err());
        // bad score sum only fails in strict mode
        let nodes = vec![n(BOS, 1.0), n(WordId(3), 0.4), n(EOS, 1.0)];
        assert!(Lattice::new(nodes.clone(), &[(0, 1), (1, 2)], ScoreCheck::Strict).is_err());
        assert!(Lattice::new(nodes, &[(0, 1), (1, 2)], ScoreCheck::Lenient).is_ok());
    }

    #[test]
    fn topological_order_ties_and_cycles() {
        let (lat, _) = diamond();
        assert_eq!(lat.topological_order(), vec![0, 1, 2, 3, 4]);
        // order on a shuffled graph respects every edge
        let edges = [(3, 1), (3, 0), (0, 2), (1, 2), (2, 4)];
        let order = topological_order(5, &edges).unwrap();
        assert_eq!(order, vec![3, 0, 1, 2, 4]);
        let pos: Vec<usize> = {
            let mut p = vec![0; 5];
            for (i, &u) in order.iter().enumerate() {
                p[u] = i;
            }
            p
        };
        assert!(edges.iter().all(|&(a, b)| pos[a] < pos[b]));
        let err = topological_order(4, &[(0, 1), (1, 2), (2, 1), (2, 3)]).unwrap_err();
        match err {
            Error::Cycle { from, to } => {
                assert!([(1, 2), (2, 1)].contains(&(from, to)), "{from}->{to}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn reverse_chain() {
        let v = Vocabulary::from_tokens(["a", "b", "c"]);
        let lat = Lattice::from_token_sequence(&v.encode(&["a", "b", "c"])).unwrap();
        let (rev, map) = lat.reverse();
        assert_eq!(map, vec![4, 3, 2, 1, 0]);
        let paths = rev.enumerate_paths(2).unwrap();
        assert_eq!(paths[0].tokens, v.encode(&["c", "b", "a"]));
        assert_eq!(rev.word(0), BOS);
        assert_eq!(rev.word(4), EOS);
    }

    #[test]
    fn reverse_diamond_swaps_degrees() {
        let (lat, _) = diamond();
        let (rev, map) = lat.reverse();
        for old in 0..lat.len() {
            let new = map[old];
            assert_eq!(lat.preds(old).len(), rev.succs(new).len());
            assert_eq!(lat.succs(old).len(), rev.preds(new).len());
            if old != 0 && old != lat.eos() {
                assert_eq!(lat.word(old), rev.word(new));
            }
        }
        let (back, map2) = rev.reverse();
        for old in 0..lat.len() {
            let i = map2[map[old]];
            assert_eq!(i, old);
            assert_eq!(back.word(i), lat.word(old));
            assert!((back.wf(i) - lat.wf(old)).abs() < 1e-12);
        }
        assert_eq!(back.edges().collect::<Vec<_>>(), lat.edges().collect::<Vec<_>>());
    }

    #[test]
    fn greedy_path_follows_best_scores() {
        let (lat, v) = diamond();
        let best = lat.greedy_best_path();
        assert_eq!(best.tokens, v.encode(&["b", "c"]));
        assert!((best.prob - 0.7).abs() < 1e-15);
    }
}
