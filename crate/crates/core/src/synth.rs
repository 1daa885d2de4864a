//! Synthetic simulated-ASR corpora.
//!
//! Source sentences come from a random first-order Markov grammar over
//! `s0 .. s{V-1}`; each source word `w` may only be followed by one of
//! `branching` fixed successors, which gives sentences enough context to
//! recover a misrecognized word. The target is the token-wise image of the
//! source under a random bijection onto `t0 .. t{V-1}`.
//!
//! Every source position becomes one column of a sausage lattice: the true
//! word with score `p_correct` and `distractors` confusable words sharing
//! the rest. Distractors are drawn uniformly per position; a fixed per-word
//! confusion table would let a model identify the true word from the set of
//! candidates alone, without scores or context. With
//! `score_noise > 0` Gaussian noise is added to the log scores before
//! renormalizing, so the best-scoring path is sometimes wrong.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::Example;
use crate::error::{Error, Result};
use crate::eval::{corpus_wer, lattice_oracle};
use crate::lattice::{Lattice, LatticeNode, ScoreCheck};
use crate::model::Source;
use crate::vocab::{Vocabulary, WordId, BOS, EOS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub src_vocab: usize,
    pub trg_vocab: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub p_correct: f64,
    pub distractors: usize,
    /// Successors allowed after each source word.
    pub branching: usize,
    /// Standard deviation of the noise on log scores; 0 disables it.
    pub score_noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            src_vocab: 50,
            trg_vocab: 50,
            min_len: 5,
            max_len: 10,
            train: 2000,
            dev: 200,
            test: 200,
            p_correct: 0.7,
            distractors: 2,
            branching: 2,
            score_noise: 0.0,
            seed: 1,
        }
    }
}

/// Noise level of the noisy-score variant; gives a 1-best WER of about 25%
/// with the other defaults.
pub const DEFAULT_SCORE_NOISE: f64 = 1.0;

impl SynthConfig {
    /// The default configuration with noisy scores.
    pub fn noisy() -> Self {
        SynthConfig {
            score_noise: DEFAULT_SCORE_NOISE,
            ..Default::default()
        }
    }

    /// Score of each distractor before noise.
    pub fn distractor_mass(&self) -> f64 {
        if self.distractors == 0 {
            0.0
        } else {
            (1.0 - self.p_correct) / self.distractors as f64
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.src_vocab == 0 || self.trg_vocab == 0 || self.train == 0 || self.dev == 0 || self.test == 0 {
            return bad("vocabulary and corpus sizes must be positive");
        }
        if self.src_vocab != self.trg_vocab {
            return bad("a bijective lexicon needs equal source and target vocabulary sizes");
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return bad("sentence lengths need 1 <= min_len <= max_len");
        }
        if !(self.p_correct > 0.0 && self.p_correct <= 1.0) {
            return bad("p_correct must lie in (0, 1]");
        }
        if self.distractors >= self.src_vocab {
            return bad("more distractors than other source words");
        }
        if (self.distractors == 0) != (self.p_correct == 1.0) {
            return bad("p_correct must be 1 exactly when there are no distractors");
        }
        if self.branching == 0 || self.branching > self.src_vocab {
            return bad("branching must lie in 1..=src_vocab");
        }
        if !(self.score_noise >= 0.0 && self.score_noise.is_finite()) {
            return bad("score_noise must be finite and non-negative");
        }
        Ok(())
    }
}

/// One split of a synthetic corpus; all vectors are parallel.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSplit {
    /// True source sentences (the reference transcripts).
    pub src: Vec<Vec<WordId>>,
    pub trg: Vec<Vec<WordId>>,
    pub lattices: Vec<Lattice>,
    /// Best-scoring lattice paths.
    pub one_best: Vec<Vec<WordId>>,
}

/// Which source side of a split to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthInput {
    Reference,
    OneBest,
    Lattice,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SynthStats {
    /// Corpus WER of the 1-best paths against the true sources.
    pub one_best_wer: f64,
    pub oracle_wer: f64,
    /// Lattice words per reference word.
    pub word_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub config: SynthConfig,
    pub src_vocab: Vocabulary,
    pub trg_vocab: Vocabulary,
    pub train: SynthSplit,
    pub dev: SynthSplit,
    pub test: SynthSplit,
}

struct Generator {
    successors: Vec<Vec<usize>>,
    lexicon: Vec<usize>,
}

fn src_id(k: usize) -> WordId {
    WordId(3 + k as u32)
}

impl Generator {
    fn new(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Self {
        let v = cfg.src_vocab;
        let successors = (0..v)
            .map(|_| rand::seq::index::sample(rng, v, cfg.branching).into_vec())
            .collect();
        let mut lexicon: Vec<usize> = (0..v).collect();
        lexicon.shuffle(rng);
        Generator {
            successors,
            lexicon,
        }
    }

    fn sentence(&self, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let len = rng.random_range(cfg.min_len..=cfg.max_len);
        let mut s = vec![rng.random_range(0..cfg.src_vocab)];
        while s.len() < len {
            let succ = &self.successors[*s.last().expect("nonempty")];
            s.push(succ[rng.random_range(0..succ.len())]);
        }
        s
    }

    fn lattice(&self, cfg: &SynthConfig, sent: &[usize], rng: &mut ChaCha8Rng) -> Result<Lattice> {
        let mut nodes = vec![LatticeNode { word: BOS, wf: 1.0 }];
        let mut edges = Vec::new();
        let mut prev_col = vec![0usize];
        for &w in sent {
            let mut col: Vec<(usize, f64)> = vec![(w, cfg.p_correct)];
            while col.len() <= cfg.distractors {
                let d = rng.random_range(0..cfg.src_vocab);
                if col.iter().all(|c| c.0 != d) {
                    col.push((d, cfg.distractor_mass()));
                }
            }
            if cfg.score_noise > 0.0 {
                let noisy: Vec<f64> = col
                    .iter()
                    .map(|&(_, p)| p.ln() + cfg.score_noise * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let probs = crate::math::softmax(&noisy);
                for (c, p) in col.iter_mut().zip(probs) {
                    c.1 = p;
                }
            }
            col.shuffle(rng);
            let first = nodes.len();
            for &(word, wf) in &col {
                nodes.push(LatticeNode {
                    word: src_id(word),
                    wf,
                });
            }
            let ids: Vec<usize> = (first..nodes.len()).collect();
            for &k in &prev_col {
                for &i in &ids {
                    edges.push((k, i));
                }
            }
            prev_col = ids;
        }
        let eos = nodes.len();
        nodes.push(LatticeNode { word: EOS, wf: 1.0 });
        edges.extend(prev_col.iter().map(|&k| (k, eos)));
        Lattice::new(nodes, &edges, ScoreCheck::Strict)
    }

    fn split(&self, cfg: &SynthConfig, n: usize, rng: &mut ChaCha8Rng) -> Result<SynthSplit> {
        let mut out = SynthSplit {
            src: Vec::with_capacity(n),
            trg: Vec::with_capacity(n),
            lattices: Vec::with_capacity(n),
            one_best: Vec::with_capacity(n),
        };
        for _ in 0..n {
            let sent = self.sentence(cfg, rng);
            let lat = self.lattice(cfg, &sent, rng)?;
            out.one_best.push(lat.best_path().tokens);
            out.lattices.push(lat);
            out.src.push(sent.iter().map(|&w| src_id(w)).collect());
            out.trg.push(sent.iter().map(|&w| src_id(self.lexicon[w])).collect());
        }
        Ok(out)
    }
}

/// Generates train, dev and test splits. Deterministic in `cfg.seed`.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gen = Generator::new(cfg, &mut rng);
    let split = |n: usize, stream: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
        r.set_stream(stream);
        gen.split(cfg, n, &mut r)
    };
    let (train, dev, test) = (split(cfg.train, 1)?, split(cfg.dev, 2)?, split(cfg.test, 3)?);
    Ok(SynthCorpus {
        src_vocab: Vocabulary::from_tokens((0..cfg.src_vocab).map(|k| format!("s{k}"))),
        trg_vocab: Vocabulary::from_tokens((0..cfg.trg_vocab).map(|k| format!("t{k}"))),
        config: cfg.clone(),
        train,
        dev,
        test,
    })
}

impl SynthSplit {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    /// Training or evaluation examples with the chosen source side.
    pub fn examples(&self, input: SynthInput) -> Result<Vec<Example>> {
        let sources: Vec<Source> = match input {
            SynthInput::Reference => self.src.iter().cloned().map(Source::Sequence).collect(),
            SynthInput::OneBest => self.one_best.iter().cloned().map(Source::Sequence).collect(),
            SynthInput::Lattice => self
                .lattices
                .iter()
                .cloned()
                .map(Source::lattice)
                .collect::<Result<_>>()?,
        };
        Ok(sources
            .into_iter()
            .zip(&self.trg)
            .map(|(src, t)| Example::new(src, t.clone()))
            .collect())
    }

    pub fn stats(&self) -> Result<SynthStats> {
        let one_best_wer = corpus_wer(&self.one_best, &self.src)?;
        let mut oracle_errors = 0;
        for (lat, s) in self.lattices.iter().zip(&self.src) {
            oracle_errors += lattice_oracle(lat, s)?.errors;
        }
        let words: usize = self.src.iter().map(Vec::len).sum();
        let lattice_words: usize = self.lattices.iter().map(|l| l.len() - 2).sum();
        Ok(SynthStats {
            one_best_wer,
            oracle_wer: 100.0 * oracle_errors as f64 / words as f64,
            word_ratio: lattice_words as f64 / words as f64,
        })
    }
}

/// Monte Carlo estimate, in percent, of how often a distractor outscores
/// the true word in one lattice column. Independent of the generator: it
/// samples the noisy log scores of a single column directly.
pub fn expected_flip_rate(cfg: &SynthConfig, trials: usize, seed: u64) -> f64 {
    if cfg.distractors == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = cfg.p_correct.ln();
    let other = cfg.distractor_mass().ln();
    let mut flips = 0usize;
    for _ in 0..trials {
        let t = truth + cfg.score_noise * rng.sample::<f64, _>(StandardNormal);
        let best_other = (0..cfg.distractors)
            .map(|_| other + cfg.score_noise * rng.sample::<f64, _>(StandardNormal))
            .fold(f64::NEG_INFINITY, f64::max);
        if best_other > t {
            flips += 1;
        }
    }
    100.0 * flips as f64 / trials as f64
}
