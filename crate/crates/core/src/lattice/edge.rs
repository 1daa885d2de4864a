use std::collections::BTreeSet;

use super::{topological_order, Lattice, LatticeNode, LatticePath, ScoreCheck, SCORE_SUM_TOLERANCE};
use crate::error::{Error, Result};
use crate::vocab::{WordId, BOS, EOS};

/// A word-labeled arc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub word: WordId,
    pub score: f64,
}

/// A lattice whose words sit on the edges, as produced by ASR dumps and PLF
/// files. Scores on the out-going arcs of every node sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeLabeledLattice {
    num_nodes: usize,
    arcs: Vec<Arc>,
    source: usize,
    sink: usize,
    order: Vec<usize>,
}

impl EdgeLabeledLattice {
    pub fn new(num_nodes: usize, mut arcs: Vec<Arc>, check: ScoreCheck) -> Result<Self> {
        if arcs.is_empty() {
            return Err(Error::invalid("edge-labeled lattice has no arcs"));
        }
        let mut seen = BTreeSet::new();
        for a in &arcs {
            if a.from >= num_nodes || a.to >= num_nodes {
                return Err(Error::invalid(format!(
                    "arc {}->{} references a missing node",
                    a.from, a.to
                )));
            }
            if !(a.score.is_finite() && a.score > 0.0) {
                return Err(Error::invalid(format!(
                    "arc {}->{} has non-positive score {}",
                    a.from, a.to, a.score
                )));
            }
            if !seen.insert((a.from, a.to, a.word)) {
                return Err(Error::invalid(format!(
                    "duplicate arc {}->{} with word {}",
                    a.from, a.to, a.word
                )));
            }
        }
        let edges: Vec<_> = arcs.iter().map(|a| (a.from, a.to)).collect();
        let order = topological_order(num_nodes, &edges)?;

        let mut indeg = vec![0usize; num_nodes];
        let mut outdeg = vec![0usize; num_nodes];
        for a in &arcs {
            outdeg[a.from] += 1;
            indeg[a.to] += 1;
        }
        let sources: Vec<_> = (0..num_nodes).filter(|&i| indeg[i] == 0).collect();
        let sinks: Vec<_> = (0..num_nodes).filter(|&i| outdeg[i] == 0).collect();
        if sources.len() != 1 || sinks.len() != 1 {
            return Err(Error::invalid(format!(
                "expected one source and one sink, found {} and {}",
                sources.len(),
                sinks.len()
            )));
        }

        let mut sums = vec![0.0; num_nodes];
        for a in &arcs {
            sums[a.from] += a.score;
        }
        for (node, &sum) in sums.iter().enumerate() {
            if outdeg[node] == 0 || (sum - 1.0).abs() <= SCORE_SUM_TOLERANCE {
                continue;
            }
            match check {
                ScoreCheck::Strict => {
                    return Err(Error::invalid(format!(
                        "out-going scores of node {node} sum to {sum}, expected 1"
                    )))
                }
                ScoreCheck::Lenient => {
                    log::warn!("renormalizing out-going scores of node {node} (sum {sum})");
                }
            }
        }
        if check == ScoreCheck::Lenient {
            for a in &mut arcs {
                let sum = sums[a.from];
                if (sum - 1.0).abs() > SCORE_SUM_TOLERANCE {
                    a.score /= sum;
                }
            }
        }

        Ok(EdgeLabeledLattice {
            num_nodes,
            arcs,
            source: sources[0],
            sink: sinks[0],
            order,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn sink(&self) -> usize {
        self.sink
    }

    /// Line-graph conversion.
    ///
    /// Each arc becomes a node carrying the arc's word and score; two such
    /// nodes are connected iff the arcs are consecutive. Fresh `<s>` and
    /// `</s>` nodes attach to the arcs leaving the source and entering the
    /// sink. Path label sequences and probabilities are preserved.
    pub fn to_node_labeled(&self) -> Result<Lattice> {
        let mut rank = vec![0usize; self.num_nodes];
        for (r, &u) in self.order.iter().enumerate() {
            rank[u] = r;
        }
        // sort arcs so that consecutive arcs get increasing ids
        let mut arc_order: Vec<usize> = (0..self.arcs.len()).collect();
        arc_order.sort_by_key(|&i| (rank[self.arcs[i].from], rank[self.arcs[i].to], i));
        let mut node_of_arc = vec![0usize; self.arcs.len()];
        for (pos, &i) in arc_order.iter().enumerate() {
            node_of_arc[i] = pos + 1;
        }
        let eos = self.arcs.len() + 1;

        let mut nodes = Vec::with_capacity(self.arcs.len() + 2);
        nodes.push(LatticeNode { word: BOS, wf: 1.0 });
        for &i in &arc_order {
            nodes.push(LatticeNode {
                word: self.arcs[i].word,
                wf: self.arcs[i].score,
            });
        }
        nodes.push(LatticeNode { word: EOS, wf: 1.0 });

        let mut arcs_into = vec![Vec::new(); self.num_nodes];
        for (i, a) in self.arcs.iter().enumerate() {
            arcs_into[a.to].push(i);
        }
        let mut edges = Vec::new();
        for (j, a) in self.arcs.iter().enumerate() {
            let nj = node_of_arc[j];
            if a.from == self.source {
                edges.push((0, nj));
            } else {
                for &i in &arcs_into[a.from] {
                    edges.push((node_of_arc[i], nj));
                }
            }
            if a.to == self.sink {
                edges.push((nj, eos));
            }
        }
        Lattice::new(nodes, &edges, ScoreCheck::Lenient)
    }

    /// Every source-to-sink path. Node ids in the result are arc indices.
    pub fn enumerate_paths(&self, max_paths: usize) -> Result<Vec<LatticePath>> {
        let mut out_arcs = vec![Vec::new(); self.num_nodes];
        for (i, a) in self.arcs.iter().enumerate() {
            out_arcs[a.from].push(i);
        }
        let mut out = Vec::new();
        let mut stack = Vec::new();
        self.walk(self.source, 1.0, &out_arcs, &mut stack, &mut out, max_paths)?;
        Ok(out)
    }

    fn walk(
        &self,
        at: usize,
        prob: f64,
        out_arcs: &[Vec<usize>],
        stack: &mut Vec<usize>,
        out: &mut Vec<LatticePath>,
        max_paths: usize,
    ) -> Result<()> {
        if at == self.sink {
            if out.len() >= max_paths {
                return Err(Error::PathExplosion { limit: max_paths });
            }
            out.push(LatticePath {
                nodes: stack.clone(),
                tokens: stack.iter().map(|&i| self.arcs[i].word).collect(),
                prob,
            });
            return Ok(());
        }
        for &i in &out_arcs[at] {
            stack.push(i);
            let r = self.walk(self.arcs[i].to, prob * self.arcs[i].score, out_arcs, stack, out, max_paths);
            stack.pop();
            r?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::Vocabulary;

    fn arc(from: usize, to: usize, word: WordId, score: f64) -> Arc {
        Arc { from, to, word, score }
    }

    #[test]
    fn chain_converts_to_chain() {
        let v = Vocabulary::from_tokens(["a", "b", "c"]);
        let ell = EdgeLabeledLattice::new(
            4,
            vec![
                arc(0, 1, v.id("a"), 1.0),
                arc(1, 2, v.id("b"), 1.0),
                arc(2, 3, v.id("c"), 1.0),
            ],
            ScoreCheck::Strict,
        )
        .unwrap();
        let lat = ell.to_node_labeled().unwrap();
        assert!(lat.is_chain());
        assert_eq!(lat.len(), 5);
        assert!(lat.nodes().iter().all(|n| n.wf == 1.0));
    }

    #[test]
    fn parallel_arcs_become_diamond() {
        let v = Vocabulary::from_tokens(["a", "b", "c"]);
        let ell = EdgeLabeledLattice::new(
            3,
            vec![
                arc(0, 1, v.id("a"), 0.3),
                arc(0, 1, v.id("b"), 0.7),
                arc(1, 2, v.id("c"), 1.0),
            ],
            ScoreCheck::Strict,
        )
        .unwrap();
        let lat = ell.to_node_labeled().unwrap();
        assert_eq!(lat.len(), 5);
        assert_eq!(lat.word(1), v.id("a"));
        assert_eq!(lat.wf(1), 0.3);
        assert_eq!(lat.word(2), v.id("b"));
        assert_eq!(lat.wf(2), 0.7);
        assert_eq!(
            lat.edges().collect::<Vec<_>>(),
            vec![(0, 1), (0, 2), (1, 3), (2, 3), (3, 4)]
        );
        let a = ell.enumerate_paths(10).unwrap();
        let b = lat.enumerate_paths(10).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.tokens, y.tokens);
            assert!((x.prob - y.prob).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_invalid_input() {
        let w = WordId(3);
        assert!(EdgeLabeledLattice::new(2, vec![], ScoreCheck::Strict).is_err());
        assert!(EdgeLabeledLattice::new(2, vec![arc(0, 1, w, 0.3)], ScoreCheck::Strict).is_err());
        assert!(EdgeLabeledLattice::new(2, vec![arc(0, 1, w, 0.0)], ScoreCheck::Lenient).is_err());
        assert!(EdgeLabeledLattice::new(
            2,
            vec![arc(0, 1, w, 0.5), arc(0, 1, w, 0.5)],
            ScoreCheck::Strict
        )
        .is_err());
        let cyc = EdgeLabeledLattice::new(
            3,
            vec![arc(0, 1, w, 1.0), arc(1, 2, w, 0.5), arc(2, 1, w, 1.0), arc(1, 0, w, 0.5)],
            ScoreCheck::Lenient,
        );
        assert!(matches!(cyc, Err(Error::Cycle { .. })));
    }

    #[test]
    fn lenient_mode_renormalizes() {
        let w = WordId(3);
        let ell = EdgeLabeledLattice::new(
            2,
            vec![arc(0, 1, w, 0.2), arc(0, 1, WordId(4), 0.2)],
            ScoreCheck::Lenient,
        )
        .unwrap();
        assert!(ell.arcs().iter().all(|a| (a.score - 0.5).abs() < 1e-15));
    }
}
