//! Token vocabularies with reserved unknown / sentence-boundary symbols.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Index into a [`Vocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WordId(pub u32);

impl WordId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for WordId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub const UNK: WordId = WordId(0);
pub const BOS: WordId = WordId(1);
pub const EOS: WordId = WordId(2);

pub const UNK_TOKEN: &str = "<unk>";
pub const BOS_TOKEN: &str = "<s>";
pub const EOS_TOKEN: &str = "</s>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, WordId>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    /// A vocabulary holding only the reserved symbols.
    pub fn new() -> Self {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in [UNK_TOKEN, BOS_TOKEN, EOS_TOKEN] {
            v.insert(t);
        }
        v
    }

    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Self::new();
        for t in tokens {
            v.insert(t.as_ref());
        }
        v
    }

    /// Build from a tokenized corpus, keeping tokens seen at least twice.
    /// Singletons fall back to `<unk>`. Ids follow first occurrence order.
    pub fn build<'a, I>(lines: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let mut order: Vec<&str> = Vec::new();
        let mut seen_any = false;
        for line in lines {
            for tok in line {
                seen_any = true;
                let c = counts.entry(tok.as_str()).or_insert(0);
                if *c == 0 {
                    order.push(tok.as_str());
                }
                *c += 1;
            }
        }
        if !seen_any {
            return Err(Error::Empty("corpus"));
        }
        let mut v = Self::new();
        for tok in order {
            if counts[tok] >= 2 {
                v.insert(tok);
            }
        }
        Ok(v)
    }

    /// Returns the id of `token`, adding it if absent.
    pub fn insert(&mut self, token: &str) -> WordId {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = WordId(self.tokens.len() as u32);
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), id);
        id
    }

    pub fn get(&self, token: &str) -> Option<WordId> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or `<unk>` when absent.
    pub fn id(&self, token: &str) -> WordId {
        self.get(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: WordId) -> &str {
        self.tokens
            .get(id.index())
            .map(String::as_str)
            .unwrap_or(UNK_TOKEN)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<WordId> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[WordId]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line, in id order.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        for t in &self.tokens {
            writeln!(w, "{t}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self> {
        let mut tokens = Vec::new();
        for line in r.lines() {
            let line = line?;
            let t = line.trim_end_matches(['\r', '\n']);
            if !t.is_empty() {
                tokens.push(t.to_string());
            }
        }
        if tokens.len() < 3
            || tokens[0] != UNK_TOKEN
            || tokens[1] != BOS_TOKEN
            || tokens[2] != EOS_TOKEN
        {
            return Err(Error::Format(
                "vocabulary file must start with <unk>, <s>, </s>".into(),
            ));
        }
        let mut v = Self::new();
        for t in &tokens[3..] {
            if v.get(t).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary entry {t:?}")));
            }
            v.insert(t);
        }
        Ok(v)
    }
}
