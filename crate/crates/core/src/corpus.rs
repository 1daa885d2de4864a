//! Parallel examples and their on-disk forms.
//!
//! Token files hold one whitespace-tokenized sentence per line. Lattice files
//! hold one node-labeled lattice JSON object per line.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::lattice::{json, Lattice, ScoreCheck};
use crate::model::Source;
use crate::vocab::{Vocabulary, WordId};

/// One source/target pair. `trg` excludes `</s>`.
#[derive(Debug, Clone)]
pub struct Example {
    pub src: Source,
    pub trg: Vec<WordId>,
}

impl Example {
    pub fn new(src: Source, trg: Vec<WordId>) -> Self {
        Example { src, trg }
    }

    /// Target length including `</s>`.
    pub fn target_words(&self) -> usize {
        self.trg.len() + 1
    }
}

/// Lowercased whitespace tokens of every line.
pub fn tokenize_lines(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split_whitespace().map(str::to_lowercase).collect())
        .collect()
}

pub fn read_token_file(path: impl AsRef<Path>) -> Result<Vec<Vec<String>>> {
    Ok(tokenize_lines(&fs::read_to_string(path)?))
}

pub fn read_lattice_file(path: impl AsRef<Path>, vocab: &Vocabulary, check: ScoreCheck) -> Result<Vec<Lattice>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            json::from_json(l, vocab, check)
                .map_err(|e| Error::Format(format!("lattice on line {}: {e}", n + 1)))
        })
        .collect()
}

pub fn write_lattice_file(path: impl AsRef<Path>, lattices: &[Lattice], vocab: &Vocabulary) -> Result<()> {
    let mut out = String::new();
    for lat in lattices {
        out.push_str(&json::to_json(lat, vocab, None));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_token_file<S: AsRef<str>>(path: impl AsRef<Path>, lines: &[Vec<S>]) -> Result<()> {
    let mut out = String::new();
    for line in lines {
        let words: Vec<&str> = line.iter().map(AsRef::as_ref).collect();
        out.push_str(&words.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Pairs sources with encoded targets; the two sides must have equal length.
pub fn zip_examples(sources: Vec<Source>, targets: &[Vec<String>], trg_vocab: &Vocabulary) -> Result<Vec<Example>> {
    if sources.len() != targets.len() {
        return Err(Error::Format(format!(
            "{} sources but {} targets",
            sources.len(),
            targets.len()
        )));
    }
    Ok(sources
        .into_iter()
        .zip(targets)
        .map(|(src, t)| Example::new(src, trg_vocab.encode(t)))
        .collect())
}

/// Sequence sources from token lines.
pub fn sequence_sources(lines: &[Vec<String>], vocab: &Vocabulary) -> Result<Vec<Source>> {
    lines
        .iter()
        .enumerate()
        .map(|(n, l)| {
            if l.is_empty() {
                Err(Error::Format(format!("empty source sentence on line {}", n + 1)))
            } else {
                Ok(Source::Sequence(vocab.encode(l)))
            }
        })
        .collect()
}

pub fn lattice_sources(lattices: Vec<Lattice>) -> Result<Vec<Source>> {
    lattices.into_iter().map(Source::lattice).collect()
}
