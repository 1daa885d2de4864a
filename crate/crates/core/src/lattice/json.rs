//! Node-labeled lattice JSON.
//!
//! ```text
//! {"nodes":[{"id":0,"word":"<s>","wf":1.0000000000000000e0},...],"edges":[[0,1],...]}
//! ```
//!
//! Scores are written with 17 significant digits, which round-trips every
//! `f64` exactly. Optional per-node `wm` / `wb` fields carry marginal and
//! backward-normalized scores; readers ignore them.

use std::fmt::Write as _;

use serde::Deserialize;

use super::{Lattice, LatticeNode, ScoreCheck};
use crate::error::{Error, Result};
use crate::scores::NodeScores;
use crate::vocab::Vocabulary;

#[derive(Deserialize)]
struct JsonNode {
    id: usize,
    word: String,
    wf: f64,
}

#[derive(Deserialize)]
struct JsonLattice {
    nodes: Vec<JsonNode>,
    edges: Vec<[usize; 2]>,
}

/// `x` as a decimal with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn push_json_str(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

/// Serializes `lat` on a single line.
pub fn to_json(lat: &Lattice, vocab: &Vocabulary, scores: Option<&NodeScores>) -> String {
    let mut s = String::from("{\"nodes\":[");
    for (i, node) in lat.nodes().iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        let _ = write!(s, "{{\"id\":{i},\"word\":");
        push_json_str(&mut s, vocab.token(node.word));
        let _ = write!(s, ",\"wf\":{}", fmt_f64(node.wf));
        if let Some(sc) = scores {
            let _ = write!(s, ",\"wm\":{},\"wb\":{}", fmt_f64(sc.wm[i]), fmt_f64(sc.wb[i]));
        }
        s.push('}');
    }
    s.push_str("],\"edges\":[");
    for (j, (k, i)) in lat.edges().enumerate() {
        if j > 0 {
            s.push(',');
        }
        let _ = write!(s, "[{k},{i}]");
    }
    s.push_str("]}");
    s
}

pub fn from_json(text: &str, vocab: &Vocabulary, check: ScoreCheck) -> Result<Lattice> {
    let raw: JsonLattice = serde_json::from_str(text)?;
    let n = raw.nodes.len();
    let mut nodes: Vec<Option<LatticeNode>> = vec![None; n];
    for jn in raw.nodes {
        if jn.id >= n || nodes[jn.id].is_some() {
            return Err(Error::Format(format!("node ids must be dense and unique (id {})", jn.id)));
        }
        nodes[jn.id] = Some(LatticeNode {
            word: vocab.id(&jn.word),
            wf: jn.wf,
        });
    }
    let nodes = nodes.into_iter().map(|n| n.expect("dense ids checked")).collect();
    let edges: Vec<(usize, usize)> = raw.edges.iter().map(|e| (e[0], e[1])).collect();
    Lattice::new(nodes, &edges, check)
}
