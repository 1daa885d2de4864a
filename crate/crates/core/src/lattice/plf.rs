//! Python Lattice Format.
//!
//! A lattice is a tuple of positions, each position a tuple of arcs
//! `('word', score, span)`; an arc at position `i` leads to node `i + span`.
//! Node `n` (one past the last position) is the sink.
//!
//! ```text
//! ((('a',0.3,1),('b',0.7,1),),(('c',1.0,1),),)
//! ```

use std::fmt::Write as _;

use super::{Arc, EdgeLabeledLattice, ScoreCheck};
use crate::error::{Error, Result};
use crate::vocab::Vocabulary;

struct Cursor<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        Err(Error::PlfSyntax {
            pos: self.pos,
            msg: msg.into(),
        })
    }

    fn skip_ws(&mut self) {
        let rest = &self.text[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.text[self.pos..].chars().next()
    }

    fn expect(&mut self, c: char) -> Result<()> {
        match self.peek() {
            Some(x) if x == c => {
                self.pos += c.len_utf8();
                Ok(())
            }
            Some(x) => self.err(format!("expected '{c}', found '{x}'")),
            None => self.err(format!("expected '{c}', found end of input")),
        }
    }

    /// Consumes `c` if it is next.
    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn string(&mut self) -> Result<String> {
        let quote = match self.peek() {
            Some(q @ ('\'' | '"')) => q,
            _ => return self.err("expected a quoted word"),
        };
        self.pos += 1;
        let mut out = String::new();
        let mut chars = self.text[self.pos..].char_indices();
        while let Some((off, c)) = chars.next() {
            match c {
                '\\' => match chars.next() {
                    Some((_, e)) => out.push(e),
                    None => break,
                },
                c if c == quote => {
                    self.pos += off + 1;
                    return Ok(out);
                }
                c => out.push(c),
            }
        }
        self.pos = self.text.len();
        self.err("unterminated string")
    }

    fn token(&mut self) -> &'a str {
        self.skip_ws();
        let rest = &self.text[self.pos..];
        let end = rest
            .find(|c: char| c == ',' || c == ')' || c.is_whitespace())
            .unwrap_or(rest.len());
        self.pos += end;
        &rest[..end]
    }

    fn number(&mut self) -> Result<f64> {
        let start = self.pos;
        let tok = self.token();
        tok.parse::<f64>().or_else(|_| {
            self.pos = start;
            self.err(format!("invalid score {tok:?}"))
        })
    }

    fn span(&mut self) -> Result<usize> {
        let start = self.pos;
        let tok = self.token();
        match tok.parse::<usize>() {
            Ok(s) if s >= 1 => Ok(s),
            _ => {
                self.pos = start;
                self.err(format!("invalid span {tok:?}"))
            }
        }
    }
}

/// Parses one PLF lattice. Words missing from `vocab` become `<unk>`.
pub fn parse_plf(text: &str, vocab: &Vocabulary, check: ScoreCheck) -> Result<EdgeLabeledLattice> {
    let mut cur = Cursor { text, pos: 0 };
    let mut positions: Vec<Vec<(String, f64, usize, usize)>> = Vec::new();
    cur.expect('(')?;
    loop {
        if cur.eat(')') {
            break;
        }
        cur.expect('(')?;
        let mut arcs = Vec::new();
        loop {
            if cur.eat(')') {
                break;
            }
            let at = cur.pos;
            cur.expect('(')?;
            let word = cur.string()?;
            cur.expect(',')?;
            let score = cur.number()?;
            cur.expect(',')?;
            let span = cur.span()?;
            cur.expect(')')?;
            arcs.push((word, score, span, at));
            if !cur.eat(',') {
                cur.expect(')')?;
                break;
            }
        }
        positions.push(arcs);
        if !cur.eat(',') {
            cur.expect(')')?;
            break;
        }
    }
    if cur.peek().is_some() {
        return cur.err("trailing characters after lattice");
    }
    if positions.is_empty() {
        return Err(Error::invalid("PLF lattice has no positions"));
    }

    let n = positions.len();
    let mut arcs = Vec::new();
    for (i, pos_arcs) in positions.into_iter().enumerate() {
        for (word, score, span, at) in pos_arcs {
            if i + span > n {
                return Err(Error::PlfSyntax {
                    pos: at,
                    msg: format!("arc at position {i} with span {span} leaves the lattice"),
                });
            }
            if !(score.is_finite() && score > 0.0) {
                return Err(Error::PlfSyntax {
                    pos: at,
                    msg: format!("non-positive score {score}"),
                });
            }
            arcs.push(Arc {
                from: i,
                to: i + span,
                word: vocab.id(&word),
                score,
            });
        }
    }
    EdgeLabeledLattice::new(n + 1, arcs, check)
}

/// Canonical PLF text. Requires arcs to point forward in node id order
/// with node 0 as source and the last node as sink.
pub fn to_plf(lat: &EdgeLabeledLattice, vocab: &Vocabulary) -> Result<String> {
    let n = lat.num_nodes();
    if lat.source() != 0 || lat.sink() != n - 1 {
        return Err(Error::Format("PLF needs source 0 and sink n-1".into()));
    }
    let mut by_pos: Vec<Vec<&Arc>> = vec![Vec::new(); n - 1];
    for a in lat.arcs() {
        if a.to <= a.from {
            return Err(Error::Format(format!("arc {}->{} is not forward", a.from, a.to)));
        }
        by_pos[a.from].push(a);
    }
    let mut s = String::from("(");
    for arcs in by_pos {
        s.push('(');
        for a in arcs {
            s.push_str("('");
            for c in vocab.token(a.word).chars() {
                if c == '\'' || c == '\\' {
                    s.push('\\');
                }
                s.push(c);
            }
            let _ = write!(s, "',{:?},{}),", a.score, a.to - a.from);
        }
        s.push_str("),");
    }
    s.push(')');
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab() -> Vocabulary {
        Vocabulary::from_tokens(["a", "b", "c", "it's"])
    }

    #[test]
    fn single_arc() {
        let v = vocab();
        let ell = parse_plf("((('a',1.0,1),),)", &v, ScoreCheck::Strict).unwrap();
        assert_eq!(ell.num_nodes(), 2);
        assert_eq!(ell.arcs().len(), 1);
        assert_eq!(ell.arcs()[0].word, v.id("a"));
        assert_eq!(ell.arcs()[0].score, 1.0);
    }

    #[test]
    fn diamond_round_trip() {
        let v = vocab();
        let text = "((('a',0.3,1),('b',0.7,1),),(('c',1.0,1),),)";
        let ell = parse_plf(text, &v, ScoreCheck::Strict).unwrap();
        assert_eq!(ell.num_nodes(), 3);
        assert_eq!(ell.arcs().len(), 3);
        let out = to_plf(&ell, &v).unwrap();
        assert_eq!(out, text);
        assert_eq!(parse_plf(&out, &v, ScoreCheck::Strict).unwrap(), ell);
    }

    #[test]
    fn whitespace_escapes_and_unknown_words() {
        let v = vocab();
        let ell = parse_plf(" ( ( ( 'it\\'s' , 0.5 , 2 ) , ('zzz', 0.5, 1) ) , (('b',1,1)) ) ", &v, ScoreCheck::Strict)
            .unwrap();
        assert_eq!(ell.arcs()[0].word, v.id("it's"));
        assert_eq!(ell.arcs()[1].word, crate::vocab::UNK);
        assert_eq!(ell.arcs()[0].to, 2);
    }

    #[test]
    fn errors() {
        let v = vocab();
        assert!(matches!(
            parse_plf("((('a',0.3,1),),)", &v, ScoreCheck::Strict),
            Err(Error::InvalidLattice(_))
        ));
        assert!(parse_plf("((('a',0.3,1),),)", &v, ScoreCheck::Lenient).is_ok());
        match parse_plf("((('a',1.0,2),),)", &v, ScoreCheck::Strict) {
            Err(Error::PlfSyntax { pos, .. }) => assert_eq!(pos, 2),
            r => panic!("{r:?}"),
        }
        assert!(parse_plf("((('a',-1.0,1),),)", &v, ScoreCheck::Lenient).is_err());
        assert!(parse_plf("((('a',1.0,1),)", &v, ScoreCheck::Strict).is_err());
        assert!(parse_plf("((('a' 1.0,1),),)", &v, ScoreCheck::Strict).is_err());
        assert!(parse_plf("((('a',1.0,0),),)", &v, ScoreCheck::Strict).is_err());
        assert!(parse_plf("()", &v, ScoreCheck::Strict).is_err());
        assert!(parse_plf("((('a',1.0,1),),) x", &v, ScoreCheck::Strict).is_err());
    }

    proptest! {
        #[test]
        fn canonical_text_round_trips(
            layers in prop::collection::vec(prop::collection::vec(1u32..1000, 1..4), 1..6)
        ) {
            let v = Vocabulary::from_tokens(["a", "b", "c", "d"]);
            let mut arcs = Vec::new();
            for (i, raw) in layers.iter().enumerate() {
                let total: u32 = raw.iter().sum();
                for (j, &r) in raw.iter().enumerate() {
                    arcs.push(Arc {
                        from: i,
                        to: i + 1,
                        word: crate::vocab::WordId(3 + j as u32),
                        score: r as f64 / total as f64,
                    });
                }
            }
            let ell = EdgeLabeledLattice::new(layers.len() + 1, arcs, ScoreCheck::Lenient).unwrap();
            let text = to_plf(&ell, &v).unwrap();
            let back = parse_plf(&text, &v, ScoreCheck::Lenient).unwrap();
            prop_assert_eq!(to_plf(&back, &v).unwrap(), text);
            prop_assert_eq!(back, ell);
        }
    }
}
