//! Random lattices for property tests and benchmarks.

use rand::Rng;

use super::{Arc, EdgeLabeledLattice, Lattice, ScoreCheck};
use crate::vocab::WordId;

/// Shape of [`random_lattice`] output.
#[derive(Debug, Clone, Copy)]
pub struct RandomLatticeConfig {
    /// States of the underlying edge-labeled lattice, at least 2.
    pub states: usize,
    /// Upper bound on arcs leaving a state.
    pub max_out: usize,
    /// Words are drawn from ids `first_word .. first_word + num_words`.
    pub first_word: u32,
    pub num_words: u32,
}

impl Default for RandomLatticeConfig {
    fn default() -> Self {
        RandomLatticeConfig {
            states: 4,
            max_out: 2,
            first_word: 3,
            num_words: 5,
        }
    }
}

/// A random edge-labeled DAG with normalized arc scores, converted to node
/// labels. Every state `u` has an arc to `u + 1`, so the graph is connected
/// and the last state is the only sink.
pub fn random_lattice<R: Rng>(rng: &mut R, cfg: &RandomLatticeConfig) -> Lattice {
    assert!(cfg.states >= 2 && cfg.max_out >= 1 && cfg.num_words >= 1);
    let mut arcs = Vec::new();
    for u in 0..cfg.states - 1 {
        let out = rng.random_range(1..=cfg.max_out);
        let mut mine: Vec<Arc> = Vec::with_capacity(out);
        for n in 0..out {
            let to = if n == 0 { u + 1 } else { rng.random_range(u + 1..cfg.states) };
            let word = WordId(cfg.first_word + rng.random_range(0..cfg.num_words));
            if mine.iter().any(|a| a.to == to && a.word == word) {
                continue;
            }
            mine.push(Arc {
                from: u,
                to,
                word,
                score: rng.random_range(0.05..1.0),
            });
        }
        let sum: f64 = mine.iter().map(|a| a.score).sum();
        for a in &mut mine {
            a.score /= sum;
        }
        arcs.extend(mine);
    }
    EdgeLabeledLattice::new(cfg.states, arcs, ScoreCheck::Strict)
        .and_then(|e| e.to_node_labeled())
        .expect("generator produces valid lattices")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_lattices_validate_strictly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let cfg = RandomLatticeConfig {
                states: rng.random_range(2..6),
                max_out: 3,
                ..Default::default()
            };
            let lat = random_lattice(&mut rng, &cfg);
            let nodes = lat.nodes().to_vec();
            let edges: Vec<_> = lat.edges().collect();
            Lattice::new(nodes, &edges, ScoreCheck::Strict).unwrap();
        }
    }
}
