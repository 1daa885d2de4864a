use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::math::floored_ln;
use crate::vocab::WordId;

/// The lattice path closest to a reference.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    /// Node ids from start to end node.
    pub nodes: Vec<usize>,
    pub tokens: Vec<WordId>,
    pub errors: usize,
    /// `errors` over the reference length, in percent.
    pub wer: f64,
}

#[derive(Debug, Clone)]
struct Cell {
    cost: usize,
    logprob: f64,
    path: Vec<usize>,
}

impl Cell {
    /// Fewer errors, then higher path probability, then the
    /// lexicographically smaller node sequence.
    fn better_than(&self, other: &Cell) -> bool {
        match self.cost.cmp(&other.cost) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => match self.logprob.partial_cmp(&other.logprob) {
                Some(Ordering::Greater) => true,
                Some(Ordering::Less) => false,
                _ => self.path < other.path,
            },
        }
    }
}

fn offer(slot: &mut Option<Cell>, cand: Cell) {
    if slot.as_ref().is_none_or(|c| cand.better_than(c)) {
        *slot = Some(cand);
    }
}

/// Minimum edit distance between any complete path and `reference`.
///
/// Dynamic program over (node, reference position). The sentence boundary
/// nodes consume nothing. Inner nodes either match/substitute the next
/// reference word or are inserted; deletions consume a reference word
/// without moving in the lattice.
pub fn lattice_oracle(lat: &Lattice, reference: &[WordId]) -> Result<OracleResult> {
    if reference.is_empty() {
        return Err(Error::Empty("reference"));
    }
    let n = lat.len();
    let r = reference.len();
    let mut table: Vec<Vec<Option<Cell>>> = vec![vec![None; r + 1]; n];
    table[0][0] = Some(Cell {
        cost: 0,
        logprob: floored_ln(lat.wf(0)),
        path: vec![0],
    });
    for i in 0..n {
        if i > 0 {
            let inner = i != lat.eos();
            let word = lat.word(i);
            let lw = floored_ln(lat.wf(i));
            let (done, rest) = table.split_at_mut(i);
            let here = &mut rest[0];
            for &k in lat.preds(i) {
                for j in 0..=r {
                    let Some(prev) = &done[k][j] else { continue };
                    let extend = |cost: usize| {
                        let mut path = prev.path.clone();
                        path.push(i);
                        Cell {
                            cost,
                            logprob: prev.logprob + lw,
                            path,
                        }
                    };
                    if inner {
                        offer(&mut here[j], extend(prev.cost + 1));
                        if j < r {
                            let c = usize::from(word != reference[j]);
                            offer(&mut here[j + 1], extend(prev.cost + c));
                        }
                    } else {
                        offer(&mut here[j], extend(prev.cost));
                    }
                }
            }
        }
        for j in 0..r {
            if let Some(cell) = table[i][j].clone() {
                let del = Cell {
                    cost: cell.cost + 1,
                    ..cell
                };
                offer(&mut table[i][j + 1], del);
            }
        }
    }
    let best = table[lat.eos()][r].take().expect("every lattice has a complete path");
    let tokens = best.path[1..best.path.len() - 1].iter().map(|&i| lat.word(i)).collect();
    Ok(OracleResult {
        wer: 100.0 * best.cost as f64 / r as f64,
        errors: best.cost,
        tokens,
        nodes: best.path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::metrics::{edit_distance, wer};
    use crate::lattice::tests::diamond;
    use crate::lattice::random::{random_lattice, RandomLatticeConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn chain_oracle_is_the_chain() {
        let toks = [WordId(5), WordId(6), WordId(7)];
        let lat = Lattice::from_token_sequence(&toks).unwrap();
        let reference = [WordId(5), WordId(7)];
        let o = lattice_oracle(&lat, &reference).unwrap();
        assert_eq!(o.tokens, toks);
        assert_eq!(o.wer, wer(&toks, &reference).unwrap());
    }

    #[test]
    fn reference_path_gives_zero() {
        let (lat, _) = diamond();
        for p in lat.enumerate_paths(100).unwrap() {
            let o = lattice_oracle(&lat, &p.tokens).unwrap();
            assert_eq!(o.errors, 0);
            assert_eq!(o.tokens, p.tokens);
        }
    }

    #[test]
    fn ties_prefer_probable_paths() {
        let (lat, _) = diamond();
        // a reference sharing nothing with any path: every path of the same
        // length ties on cost, so the most probable one wins
        let o = lattice_oracle(&lat, &[WordId(99); 2]).unwrap();
        let paths = lat.enumerate_paths(100).unwrap();
        let best_cost = paths.iter().map(|p| edit_distance(&p.tokens, &[WordId(99); 2])).min().unwrap();
        let best = paths
            .iter()
            .filter(|p| edit_distance(&p.tokens, &[WordId(99); 2]) == best_cost)
            .max_by(|a, b| a.prob.partial_cmp(&b.prob).unwrap())
            .unwrap();
        assert_eq!(o.nodes, best.nodes);
    }

    #[test]
    fn matches_brute_force_on_random_lattices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 100 {
            let cfg = RandomLatticeConfig {
                states: rng.random_range(2..6),
                max_out: 3,
                first_word: 3,
                num_words: 3,
            };
            let lat = random_lattice(&mut rng, &cfg);
            let Ok(paths) = lat.enumerate_paths(64) else { continue };
            let len = rng.random_range(1..6);
            let reference: Vec<WordId> = (0..len).map(|_| WordId(3 + rng.random_range(0..3))).collect();
            let o = lattice_oracle(&lat, &reference).unwrap();
            let brute = paths.iter().map(|p| edit_distance(&p.tokens, &reference)).min().unwrap();
            assert_eq!(o.errors, brute);
            assert_eq!(edit_distance(&o.tokens, &reference), o.errors);
            checked += 1;
        }
    }
}
