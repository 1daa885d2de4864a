//! The synthetic end-to-end experiment: pretrain on reference transcripts,
//! then fine-tune three ways and compare test BLEU and decoder entropy.

use std::time::Instant;

use serde::Serialize;

use crate::corpus::Example;
use crate::error::Result;
use crate::eval::{bleu, decoder_entropy, translate_all};
use crate::model::{Model, ModelConfig, Peakiness, ScoreConfig};
use crate::synth::{synth_corpus, SynthConfig, SynthInput, SynthStats};
use crate::training::{finetune, Pretrainer, TrainConfig};
use crate::vocab::WordId;

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// The corpus seed is replaced by the run seed.
    pub synth: SynthConfig,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub num_layers: usize,
    /// The model and batching seed is replaced by the run seed.
    pub train: TrainConfig,
    pub beam: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            synth: SynthConfig::noisy(),
            embed_dim: 64,
            hidden_dim: 64,
            attention_dim: 64,
            num_layers: 1,
            train: TrainConfig {
                lr_finetune: 1e-3,
                ..TrainConfig::default()
            },
            beam: 5,
        }
    }
}

/// One trained system evaluated on the test split.
#[derive(Debug, Clone, Serialize)]
pub struct SystemResult {
    pub name: &'static str,
    /// Input the system translates at test time.
    pub input: &'static str,
    pub bleu: f64,
    /// Mean teacher-forced decoder entropy on the test split, in nats.
    pub entropy: f64,
    /// Dev perplexity before fine-tuning and after each epoch; a single
    /// value for the pretrained model.
    pub dev_perplexity: Vec<f64>,
    pub s_a: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedResult {
    pub seed: u64,
    pub test_stats: SynthStats,
    pub pretrain_epochs: usize,
    pub pretrain_seconds: f64,
    /// `R`, `R+1`, `R+L`, `R+L+S`, in that order.
    pub systems: Vec<SystemResult>,
}

impl SeedResult {
    pub fn system(&self, name: &str) -> Option<&SystemResult> {
        self.systems.iter().find(|s| s.name == name)
    }
}

fn input_name(input: SynthInput) -> &'static str {
    match input {
        SynthInput::Reference => "reference",
        SynthInput::OneBest => "1best",
        SynthInput::Lattice => "lattice",
    }
}

fn evaluate(
    name: &'static str,
    model: &Model,
    input: SynthInput,
    test: &[Example],
    refs: &[Vec<Vec<WordId>>],
    beam: usize,
) -> Result<SystemResult> {
    let hyps: Vec<Vec<WordId>> = translate_all(model, test, beam)?
        .into_iter()
        .map(|t| t.tokens)
        .collect();
    Ok(SystemResult {
        name,
        input: input_name(input),
        bleu: bleu(&hyps, refs)?,
        entropy: decoder_entropy(model, test, test.len())?,
        dev_perplexity: Vec::new(),
        s_a: model.s_a(),
        seconds: 0.0,
    })
}

/// Runs corpus generation, pretraining and the three fine-tuning regimes for
/// one seed.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedResult> {
    let synth = SynthConfig {
        seed,
        ..cfg.synth.clone()
    };
    let corpus = synth_corpus(&synth)?;
    let tc = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let mut mc = ModelConfig::new(corpus.src_vocab.len(), corpus.trg_vocab.len());
    mc.embed_dim = cfg.embed_dim;
    mc.hidden_dim = cfg.hidden_dim;
    mc.attention_dim = cfg.attention_dim;
    mc.num_layers = cfg.num_layers;
    mc.scoring = ScoreConfig::off();

    let refs: Vec<Vec<Vec<WordId>>> = corpus.test.trg.iter().map(|t| vec![t.clone()]).collect();
    let started = Instant::now();
    let mut pre = Pretrainer::new(Model::new(mc, seed)?, tc.clone())?;
    let rows = pre.run(
        &corpus.train.examples(SynthInput::Reference)?,
        &corpus.dev.examples(SynthInput::Reference)?,
        None,
    )?;
    let pretrain_seconds = started.elapsed().as_secs_f64();
    let base = pre.model;
    log::info!("seed {seed}: pretrained {} epochs in {pretrain_seconds:.1}s", pre.state.epoch);

    let test_1best = corpus.test.examples(SynthInput::OneBest)?;
    let mut r = evaluate("R", &base, SynthInput::OneBest, &test_1best, &refs, cfg.beam)?;
    r.dev_perplexity = pre.state.best_dev.into_iter().collect();
    let mut systems = vec![r];

    let regimes = [
        ("R+1", SynthInput::OneBest, ScoreConfig::off()),
        ("R+L", SynthInput::Lattice, ScoreConfig::uniform(Peakiness::Fixed0)),
        ("R+L+S", SynthInput::Lattice, ScoreConfig::uniform(Peakiness::Learned)),
    ];
    for (name, input, scoring) in regimes {
        let t = Instant::now();
        let mut model = base.clone();
        model.set_scoring(scoring)?;
        let report = finetune(
            &mut model,
            &corpus.train.examples(input)?,
            &corpus.dev.examples(input)?,
            &tc,
            None,
        )?;
        let mut res = evaluate(name, &model, input, &corpus.test.examples(input)?, &refs, cfg.beam)?;
        res.dev_perplexity = report.dev_perplexity;
        res.seconds = t.elapsed().as_secs_f64();
        log::info!("seed {seed}: {name} BLEU {:.2} in {:.1}s", res.bleu, res.seconds);
        systems.push(res);
    }
    Ok(SeedResult {
        seed,
        test_stats: corpus.test.stats()?,
        pretrain_epochs: rows.len() / 2,
        pretrain_seconds,
        systems,
    })
}

/// Mean of one system's field across seeds.
pub fn mean_over(results: &[SeedResult], name: &str, field: impl Fn(&SystemResult) -> f64) -> Option<f64> {
    let vals: Vec<f64> = results.iter().filter_map(|r| r.system(name)).map(field).collect();
    (!vals.is_empty() && vals.len() == results.len()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
}
