use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use latseq::autodiff::GradCheckOptions;
use latseq::checkpoint::Checkpoint;
use latseq::corpus::{self, Example};
use latseq::eval;
use latseq::experiment::{self, ExperimentConfig};
use latseq::lattice::{json, plf, Lattice, ScoreCheck};
use latseq::model::check::check_model_gradients;
use latseq::model::{Model, ModelConfig, Peakiness, ScoreConfig, Source};
use latseq::synth::{synth_corpus, SynthConfig, SynthSplit};
use latseq::training::{finetune, Pretrainer, TrainConfig, LOG_HEADER};
use latseq::{NodeScores, Vocabulary};

#[derive(Parser)]
#[command(name = "latseq", version, about = "Lattice-to-sequence translation experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic corpus with simulated recognition lattices.
    Synth(SynthArgs),
    /// Build a vocabulary from a token file; singletons map to <unk>.
    Vocab {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Train a fresh model on sequences.
    Pretrain(PretrainArgs),
    /// Continue training a checkpoint on sequences or lattices.
    Finetune(FinetuneArgs),
    /// Decode sources with beam search.
    Translate(TranslateArgs),
    /// Normalize lattice scores and add marginal and backward scores.
    #[command(name = "score-latt", alias = "scores")]
    ScoreLatt(ScoreArgs),
    /// Lattice oracle WER and 1-best WER against reference transcripts.
    Oracle(OracleArgs),
    /// BLEU and WER of hypotheses; perplexity and entropy given a model.
    Eval(EvalArgs),
    /// BLEU of several systems within bins of 1-best WER.
    Bins(BinsArgs),
    /// Compare analytic and finite-difference gradients.
    Gradcheck(GradcheckArgs),
    /// Run the synthetic pretrain and fine-tune comparison for several seeds.
    Experiment(ExperimentArgs),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum InputKind {
    Sequences,
    Lattices,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Standard deviation of the noise on log lattice scores.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long)]
    vocab_size: Option<usize>,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    dev: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
    #[arg(long)]
    p_correct: Option<f64>,
    #[arg(long)]
    distractors: Option<usize>,
    #[arg(long)]
    branching: Option<usize>,
}

/// Training hyperparameters; flags override the config file.
#[derive(Args)]
struct TrainFlags {
    /// `key = value` file with training settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    lr_pretrain: Option<f64>,
    #[arg(long)]
    lr_finetune: Option<f64>,
    #[arg(long)]
    batch_words: Option<usize>,
    #[arg(long)]
    group_size: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    finetune_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    clip_norm: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Tab-separated training log.
    #[arg(long)]
    log: Option<PathBuf>,
}

impl TrainFlags {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => TrainConfig::parse(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
            None => TrainConfig::default(),
        };
        let pairs: [(&str, Option<String>); 9] = [
            ("lr_pretrain", self.lr_pretrain.map(|v| v.to_string())),
            ("lr_finetune", self.lr_finetune.map(|v| v.to_string())),
            ("batch_words", self.batch_words.map(|v| v.to_string())),
            ("group_size", self.group_size.map(|v| v.to_string())),
            ("max_epochs", self.max_epochs.map(|v| v.to_string())),
            ("finetune_epochs", self.finetune_epochs.map(|v| v.to_string())),
            ("patience", self.patience.map(|v| v.to_string())),
            ("clip_norm", self.clip_norm.map(|v| v.to_string())),
            ("seed", self.seed.map(|v| v.to_string())),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                cfg.set(k, &v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn log_writer(&self) -> Result<Option<BufWriter<File>>> {
        self.log
            .as_ref()
            .map(|p| -> Result<_> {
                let mut w = BufWriter::new(File::create(p)?);
                writeln!(w, "{LOG_HEADER}")?;
                Ok(w)
            })
            .transpose()
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

/// Score integration: weighted child-sum, biased forget gate, biased
/// attention, and their peakiness.
#[derive(Args)]
struct ScoreFlags {
    #[arg(long, value_enum)]
    wcs: Option<Switch>,
    #[arg(long, value_enum)]
    bfg: Option<Switch>,
    #[arg(long, value_enum)]
    batt: Option<Switch>,
    /// One value for all mechanisms, or three for child-sum, forget gate
    /// and attention. Each is 0, 1 or learn.
    #[arg(long, num_args = 1..=3)]
    peakiness: Vec<Peakiness>,
}

impl ScoreFlags {
    fn apply(&self, mut sc: ScoreConfig) -> Result<ScoreConfig> {
        let on = |s: Switch| s == Switch::On;
        if let Some(s) = self.wcs {
            sc.wcs = on(s);
        }
        if let Some(s) = self.bfg {
            sc.bfg = on(s);
        }
        if let Some(s) = self.batt {
            sc.batt = on(s);
        }
        match self.peakiness[..] {
            [] => {}
            [p] => (sc.peak_h, sc.peak_f, sc.peak_a) = (p, p, p),
            [h, f, a] => (sc.peak_h, sc.peak_f, sc.peak_a) = (h, f, a),
            _ => bail!("--peakiness takes one or three values"),
        }
        Ok(sc)
    }
}

#[derive(Args)]
struct DataFlags {
    #[arg(long)]
    src_vocab: PathBuf,
    #[arg(long)]
    trg_vocab: PathBuf,
    /// Accept lattices whose scores are not normalized.
    #[arg(long)]
    lenient: bool,
}

impl DataFlags {
    fn vocabs(&self) -> Result<(Vocabulary, Vocabulary)> {
        Ok((read_vocab(&self.src_vocab)?, read_vocab(&self.trg_vocab)?))
    }

    fn check(&self) -> ScoreCheck {
        if self.lenient {
            ScoreCheck::Lenient
        } else {
            ScoreCheck::Strict
        }
    }
}

#[derive(Args)]
struct PretrainArgs {
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    trg: PathBuf,
    #[arg(long)]
    dev_src: PathBuf,
    #[arg(long)]
    dev_trg: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Continue an interrupted run from its checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long, default_value_t = 512)]
    embed_dim: usize,
    #[arg(long, default_value_t = 256)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 512)]
    attention_dim: usize,
    #[command(flatten)]
    data: DataFlags,
    #[command(flatten)]
    train: TrainFlags,
    #[command(flatten)]
    scoring: ScoreFlags,
}

#[derive(Args)]
struct FinetuneArgs {
    #[arg(long)]
    init: PathBuf,
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    trg: PathBuf,
    #[arg(long)]
    dev_src: PathBuf,
    #[arg(long)]
    dev_trg: PathBuf,
    #[arg(long, value_enum, default_value = "lattices")]
    input: InputKind,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    data: DataFlags,
    #[command(flatten)]
    train: TrainFlags,
    #[command(flatten)]
    scoring: ScoreFlags,
}

#[derive(Args)]
struct TranslateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    src: PathBuf,
    #[arg(long, value_enum, default_value = "sequences")]
    input: InputKind,
    #[arg(long, default_value_t = 5)]
    beam: usize,
    #[arg(long)]
    max_len: Option<usize>,
    /// Defaults to standard output.
    #[arg(long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    data: DataFlags,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum LatticeFormat {
    Json,
    Plf,
}

#[derive(Args)]
struct ScoreArgs {
    /// One lattice per line.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: LatticeFormat,
    #[arg(long)]
    src_vocab: PathBuf,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    lattices: PathBuf,
    /// Reference transcripts, one per line.
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    src_vocab: PathBuf,
    /// Also write the oracle paths, one per line.
    #[arg(long)]
    paths: Option<PathBuf>,
    #[arg(long)]
    lenient: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    hyp: PathBuf,
    /// Reference translations; repeat for multiple references.
    #[arg(long = "ref", required = true)]
    refs: Vec<PathBuf>,
    #[arg(long, default_value = "test")]
    split: String,
    /// Checkpoint for perplexity and decoder entropy.
    #[arg(long, requires_all = ["src", "src_vocab", "trg_vocab"])]
    model: Option<PathBuf>,
    #[arg(long)]
    src: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "sequences")]
    input: InputKind,
    #[arg(long)]
    src_vocab: Option<PathBuf>,
    #[arg(long)]
    trg_vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    entropy_sentences: usize,
}

#[derive(Args)]
struct BinsArgs {
    /// Lattices whose best path defines each sentence's 1-best WER.
    #[arg(long)]
    lattices: PathBuf,
    /// Reference transcripts.
    #[arg(long)]
    transcripts: PathBuf,
    #[arg(long)]
    src_vocab: PathBuf,
    /// Reference translations; repeat for multiple references.
    #[arg(long = "ref", required = true)]
    refs: Vec<PathBuf>,
    /// Systems as NAME=FILE.
    #[arg(long = "hyp", required = true)]
    hyps: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "0,10,20,30,40,50,1000")]
    edges: Vec<f64>,
    #[arg(long, default_value_t = 50)]
    sample: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum CheckMode {
    Sequence,
    Lattice,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, value_enum, default_value = "sequence")]
    mode: CheckMode,
    /// Check every combination of mechanisms and peakiness modes.
    #[arg(long)]
    all_flags: bool,
    #[arg(long, default_value_t = 5)]
    examples: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[command(flatten)]
    scoring: ScoreFlags,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    seeds: Vec<u64>,
    /// Embedding, hidden and attention size.
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 30)]
    max_epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr_finetune: f64,
    #[arg(long, default_value_t = latseq::synth::DEFAULT_SCORE_NOISE)]
    noise: f64,
    #[arg(long, default_value_t = 2000)]
    train: usize,
    /// Target words per pretraining batch.
    #[arg(long)]
    batch_words: Option<usize>,
    /// Successors per source word in the synthetic grammar.
    #[arg(long)]
    branching: Option<usize>,
    /// Write per-seed results as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Synth(a) => cmd_synth(a),
        Cmd::Vocab { input, output } => {
            let lines = corpus::read_token_file(&input)?;
            let v = Vocabulary::build(lines.iter().map(Vec::as_slice))?;
            v.write(BufWriter::new(File::create(&output)?))?;
            eprintln!("{} types", v.len());
            Ok(())
        }
        Cmd::Pretrain(a) => cmd_pretrain(a),
        Cmd::Finetune(a) => cmd_finetune(a),
        Cmd::Translate(a) => cmd_translate(a),
        Cmd::ScoreLatt(a) => cmd_scores(a),
        Cmd::Oracle(a) => cmd_oracle(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Bins(a) => cmd_bins(a),
        Cmd::Gradcheck(a) => cmd_gradcheck(a),
        Cmd::Experiment(a) => cmd_experiment(a),
    }
}

fn read_vocab(p: &Path) -> Result<Vocabulary> {
    let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
    Ok(Vocabulary::read(BufReader::new(f))?)
}

fn output(p: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match p {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn load_sources(path: &Path, kind: InputKind, vocab: &Vocabulary, check: ScoreCheck) -> Result<Vec<Source>> {
    let sources = match kind {
        InputKind::Sequences => corpus::sequence_sources(&corpus::read_token_file(path)?, vocab)?,
        InputKind::Lattices => corpus::lattice_sources(corpus::read_lattice_file(path, vocab, check)?)?,
    };
    Ok(sources)
}

fn load_examples(
    src: &Path,
    trg: &Path,
    kind: InputKind,
    vocabs: &(Vocabulary, Vocabulary),
    check: ScoreCheck,
) -> Result<Vec<Example>> {
    let sources = load_sources(src, kind, &vocabs.0, check).with_context(|| format!("reading {}", src.display()))?;
    let targets = corpus::read_token_file(trg).with_context(|| format!("reading {}", trg.display()))?;
    Ok(corpus::zip_examples(sources, &targets, &vocabs.1)?)
}

fn check_vocab_sizes(cfg: &ModelConfig, vocabs: &(Vocabulary, Vocabulary)) -> Result<()> {
    if cfg.src_vocab != vocabs.0.len() || cfg.trg_vocab != vocabs.1.len() {
        bail!(
            "model expects vocabularies of {} / {} types, files have {} / {}",
            cfg.src_vocab,
            cfg.trg_vocab,
            vocabs.0.len(),
            vocabs.1.len()
        );
    }
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let mut cfg = SynthConfig {
        seed: a.seed,
        score_noise: a.noise,
        ..SynthConfig::default()
    };
    if let Some(v) = a.vocab_size {
        (cfg.src_vocab, cfg.trg_vocab) = (v, v);
    }
    cfg.train = a.train.unwrap_or(cfg.train);
    cfg.dev = a.dev.unwrap_or(cfg.dev);
    cfg.test = a.test.unwrap_or(cfg.test);
    cfg.p_correct = a.p_correct.unwrap_or(cfg.p_correct);
    cfg.distractors = a.distractors.unwrap_or(cfg.distractors);
    cfg.branching = a.branching.unwrap_or(cfg.branching);
    let c = synth_corpus(&cfg)?;
    fs::create_dir_all(&a.out)?;
    let dir = &a.out;
    c.src_vocab.write(File::create(dir.join("src.vocab"))?)?;
    c.trg_vocab.write(File::create(dir.join("trg.vocab"))?)?;
    let mut stats = BufWriter::new(File::create(dir.join("stats.tsv"))?);
    writeln!(stats, "split\tone_best_wer\toracle_wer\tword_ratio")?;
    for (name, split) in [("train", &c.train), ("dev", &c.dev), ("test", &c.test)] {
        write_split(dir, name, split, &c.src_vocab, &c.trg_vocab)?;
        let s = split.stats()?;
        writeln!(stats, "{name}\t{:.4}\t{:.4}\t{:.4}", s.one_best_wer, s.oracle_wer, s.word_ratio)?;
        eprintln!("{name}: {} sentences, 1-best WER {:.2}", split.len(), s.one_best_wer);
    }
    fs::write(dir.join("synth.json"), serde_json::to_string_pretty(&cfg)?)?;
    Ok(())
}

fn write_split(dir: &Path, name: &str, s: &SynthSplit, sv: &Vocabulary, tv: &Vocabulary) -> Result<()> {
    let dec = |v: &Vocabulary, xs: &[Vec<latseq::WordId>]| xs.iter().map(|x| v.decode(x)).collect::<Vec<_>>();
    corpus::write_token_file(dir.join(format!("{name}.src")), &dec(sv, &s.src))?;
    corpus::write_token_file(dir.join(format!("{name}.1best")), &dec(sv, &s.one_best))?;
    corpus::write_token_file(dir.join(format!("{name}.trg")), &dec(tv, &s.trg))?;
    corpus::write_lattice_file(dir.join(format!("{name}.lat")), &s.lattices, sv)?;
    Ok(())
}

fn cmd_pretrain(a: PretrainArgs) -> Result<()> {
    let vocabs = a.data.vocabs()?;
    let tc = a.train.resolve()?;
    let train = load_examples(&a.src, &a.trg, InputKind::Sequences, &vocabs, ScoreCheck::Strict)?;
    let dev = load_examples(&a.dev_src, &a.dev_trg, InputKind::Sequences, &vocabs, ScoreCheck::Strict)?;
    let mut trainer = match &a.resume {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            check_vocab_sizes(&ck.config, &vocabs)?;
            Pretrainer::from_checkpoint(ck, tc)?
        }
        None => {
            let mut mc = ModelConfig::new(vocabs.0.len(), vocabs.1.len());
            mc.embed_dim = a.embed_dim;
            mc.hidden_dim = a.hidden_dim;
            mc.num_layers = a.layers;
            mc.attention_dim = a.attention_dim;
            mc.scoring = a.scoring.apply(mc.scoring)?;
            Pretrainer::new(Model::new(mc, tc.seed)?, tc)?
        }
    };
    let mut log = a.train.log_writer()?;
    while !trainer.finished() {
        for row in trainer.run_epoch(&train, &dev)? {
            if let Some(w) = log.as_mut() {
                row.write_to(w)?;
                w.flush()?;
            }
        }
        // keep a resumable checkpoint after every epoch
        trainer.checkpoint().save(&a.out)?;
    }
    trainer.restore_best();
    Checkpoint::from_model(&trainer.model).save(&a.out)?;
    eprintln!(
        "best dev perplexity {:.4} after {} epochs",
        trainer.state.best_dev.unwrap_or(f64::NAN),
        trainer.state.epoch
    );
    Ok(())
}

fn cmd_finetune(a: FinetuneArgs) -> Result<()> {
    let vocabs = a.data.vocabs()?;
    let tc = a.train.resolve()?;
    let mut model = Checkpoint::load(&a.init)?.into_model()?;
    check_vocab_sizes(&model.config, &vocabs)?;
    let sc = a.scoring.apply(model.config.scoring)?;
    model.set_scoring(sc)?;
    let train = load_examples(&a.src, &a.trg, a.input, &vocabs, a.data.check())?;
    let dev = load_examples(&a.dev_src, &a.dev_trg, a.input, &vocabs, a.data.check())?;
    let mut log = a.train.log_writer()?;
    let rep = finetune(&mut model, &train, &dev, &tc, log.as_mut().map(|w| w as &mut dyn Write))?;
    Checkpoint::from_model(&model).save(&a.out)?;
    eprintln!("dev perplexity {:?}", rep.dev_perplexity);
    if let Some(s) = model.s_a() {
        eprintln!("attention peakiness {s:.4}");
    }
    Ok(())
}

fn cmd_translate(a: TranslateArgs) -> Result<()> {
    let vocabs = a.data.vocabs()?;
    let model = Checkpoint::load(&a.model)?.into_model()?;
    check_vocab_sizes(&model.config, &vocabs)?;
    let sources = load_sources(&a.src, a.input, &vocabs.0, a.data.check())?;
    let mut out = output(&a.output)?;
    for src in &sources {
        let t = if a.beam <= 1 {
            eval::greedy(&model, src, a.max_len)?
        } else {
            eval::beam_search(&model, src, a.beam, a.max_len)?
        };
        writeln!(out, "{}", vocabs.1.decode(&t.tokens).join(" "))?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_scores(a: ScoreArgs) -> Result<()> {
    let vocab = read_vocab(&a.src_vocab)?;
    let text = fs::read_to_string(&a.input)?;
    let mut out = output(&a.output)?;
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let lat: Lattice = match a.format {
            LatticeFormat::Json => json::from_json(line, &vocab, ScoreCheck::Lenient),
            LatticeFormat::Plf => plf::parse_plf(line, &vocab, ScoreCheck::Lenient).and_then(|e| e.to_node_labeled()),
        }
        .map_err(|e| anyhow!("line {}: {e}", n + 1))?;
        let lat = renormalize(&lat)?;
        let scores = NodeScores::compute(&lat)?;
        writeln!(out, "{}", json::to_json(&lat, &vocab, Some(&scores)))?;
    }
    out.flush()?;
    Ok(())
}

/// Rescales node scores so the successors of every node sum to one. Nodes
/// whose successor sets overlap with different sums cannot be fixed this
/// way; those are rejected by the strict rebuild.
fn renormalize(lat: &Lattice) -> Result<Lattice> {
    let mut nodes = lat.nodes().to_vec();
    nodes[0].wf = 1.0;
    for k in 0..lat.len() {
        let succ = lat.succs(k);
        let sum: f64 = succ.iter().map(|&i| lat.wf(i)).sum();
        if sum > 0.0 {
            for &i in succ {
                nodes[i].wf = lat.wf(i) / sum;
            }
        }
    }
    let edges: Vec<_> = lat.edges().collect();
    Ok(Lattice::new(nodes, &edges, ScoreCheck::Strict)?)
}

fn cmd_oracle(a: OracleArgs) -> Result<()> {
    let vocab = read_vocab(&a.src_vocab)?;
    let check = if a.lenient { ScoreCheck::Lenient } else { ScoreCheck::Strict };
    let lats = corpus::read_lattice_file(&a.lattices, &vocab, check)?;
    let refs = corpus::read_token_file(&a.reference)?;
    if refs.len() != lats.len() {
        bail!("{} lattices but {} references", lats.len(), refs.len());
    }
    let mut paths = match &a.paths {
        Some(p) => Some(BufWriter::new(File::create(p)?)),
        None => None,
    };
    let (mut oracle_err, mut best_err, mut words) = (0usize, 0usize, 0usize);
    let mut out = BufWriter::new(io::stdout());
    writeln!(out, "sentence\toracle_wer\tone_best_wer")?;
    for (i, (lat, r)) in lats.iter().zip(&refs).enumerate() {
        let r = vocab.encode(r);
        let o = eval::lattice_oracle(lat, &r)?;
        let b = eval::edit_distance(&lat.best_path().tokens, &r);
        writeln!(out, "{}\t{:.4}\t{:.4}", i + 1, o.wer, 100.0 * b as f64 / r.len() as f64)?;
        if let Some(w) = paths.as_mut() {
            writeln!(w, "{}", vocab.decode(&o.tokens).join(" "))?;
        }
        oracle_err += o.errors;
        best_err += b;
        words += r.len();
    }
    writeln!(
        out,
        "corpus\t{:.4}\t{:.4}",
        100.0 * oracle_err as f64 / words as f64,
        100.0 * best_err as f64 / words as f64
    )?;
    Ok(())
}

fn read_refs(paths: &[PathBuf]) -> Result<Vec<Vec<Vec<String>>>> {
    let sets: Vec<Vec<Vec<String>>> = paths.iter().map(corpus::read_token_file).collect::<Result<_, _>>()?;
    let n = sets[0].len();
    if sets.iter().any(|s| s.len() != n) {
        bail!("reference files differ in length");
    }
    Ok((0..n).map(|i| sets.iter().map(|s| s[i].clone()).collect()).collect())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let hyps = corpus::read_token_file(&a.hyp)?;
    let refs = read_refs(&a.refs)?;
    if hyps.len() != refs.len() {
        bail!("{} hypotheses but {} references", hyps.len(), refs.len());
    }
    let mut out = BufWriter::new(io::stdout());
    writeln!(out, "metric\tsplit\tvalue")?;
    writeln!(out, "bleu\t{}\t{:.4}", a.split, eval::bleu(&hyps, &refs)?)?;
    let first: Vec<Vec<String>> = refs.iter().map(|r| r[0].clone()).collect();
    writeln!(out, "wer\t{}\t{:.4}", a.split, eval::corpus_wer(&hyps, &first)?)?;
    if let (Some(m), Some(src), Some(sv), Some(tv)) = (&a.model, &a.src, &a.src_vocab, &a.trg_vocab) {
        let vocabs = (read_vocab(sv)?, read_vocab(tv)?);
        let model = Checkpoint::load(m)?.into_model()?;
        check_vocab_sizes(&model.config, &vocabs)?;
        let sources = load_sources(src, a.input, &vocabs.0, ScoreCheck::Strict)?;
        let ex = corpus::zip_examples(sources, &first, &vocabs.1)?;
        writeln!(out, "perplexity\t{}\t{:.6}", a.split, eval::perplexity(&model, &ex)?)?;
        writeln!(out, "entropy\t{}\t{:.6}", a.split, eval::decoder_entropy(&model, &ex, a.entropy_sentences)?)?;
    }
    Ok(())
}

fn cmd_bins(a: BinsArgs) -> Result<()> {
    let vocab = read_vocab(&a.src_vocab)?;
    let lats = corpus::read_lattice_file(&a.lattices, &vocab, ScoreCheck::Strict)?;
    let transcripts = corpus::read_token_file(&a.transcripts)?;
    let refs = read_refs(&a.refs)?;
    if lats.len() != transcripts.len() || lats.len() != refs.len() {
        bail!("lattices, transcripts and references differ in length");
    }
    let wers: Vec<f64> = lats
        .iter()
        .zip(&transcripts)
        .map(|(l, t)| eval::wer(&l.best_path().tokens, &vocab.encode(t)))
        .collect::<Result<_, _>>()?;
    let mut names = Vec::new();
    let mut systems = Vec::new();
    for spec in &a.hyps {
        let (name, file) = spec.split_once('=').ok_or_else(|| anyhow!("--hyp expects NAME=FILE, got {spec}"))?;
        let h = corpus::read_token_file(file)?;
        if h.len() != refs.len() {
            bail!("{name}: {} hypotheses for {} references", h.len(), refs.len());
        }
        names.push(name.to_string());
        systems.push(h);
    }
    let views: Vec<&[Vec<String>]> = systems.iter().map(Vec::as_slice).collect();
    let rows = eval::wer_binned_bleu(&wers, &refs, &views, &a.edges, a.sample, a.seed)?;
    let mut out = BufWriter::new(io::stdout());
    writeln!(out, "lo\thi\tsentences\tsampled\t{}", names.join("\t"))?;
    for r in rows {
        let cells: Vec<String> = r
            .bleu
            .iter()
            .map(|b| b.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}")))
            .collect();
        writeln!(out, "{}\t{}\t{}\t{}\t{}", r.lo, r.hi, r.total, r.sampled.len(), cells.join("\t"))?;
    }
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> Result<()> {
    let opts = GradCheckOptions {
        tolerance: a.tolerance,
        seed: a.seed,
        ..GradCheckOptions::default()
    };
    let configs: Vec<Option<ScoreConfig>> = match (a.mode, a.all_flags) {
        (CheckMode::Sequence, _) => vec![None],
        (CheckMode::Lattice, true) => ScoreConfig::grid().into_iter().map(Some).collect(),
        (CheckMode::Lattice, false) => vec![Some(a.scoring.apply(ScoreConfig::default())?)],
    };
    let mut failed = 0;
    for (n, sc) in configs.iter().enumerate() {
        let reports = check_model_gradients(*sc, a.examples, a.seed + n as u64, &opts)?;
        let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
        let ok = reports.iter().all(|r| r.passed());
        failed += usize::from(!ok);
        let label = sc.map_or_else(|| "sequence".to_string(), |s| s.to_string());
        println!("{}\t{label}\tmax_rel_error={worst:.3e}", if ok { "ok" } else { "FAIL" });
    }
    if failed > 0 {
        bail!("{failed} of {} configurations failed", configs.len());
    }
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::default();
    cfg.synth.score_noise = a.noise;
    cfg.synth.train = a.train;
    (cfg.embed_dim, cfg.hidden_dim, cfg.attention_dim) = (a.dim, a.dim, a.dim);
    cfg.train.max_epochs = a.max_epochs;
    cfg.train.lr_finetune = a.lr_finetune;
    if let Some(b) = a.batch_words {
        cfg.train.batch_words = b;
    }
    if let Some(b) = a.branching {
        cfg.synth.branching = b;
    }
    println!("seed\tsystem\tinput\tbleu\tentropy\tseconds");
    let mut results = Vec::new();
    for &seed in &a.seeds {
        let r = experiment::run_seed(&cfg, seed)?;
        for s in &r.systems {
            println!("{seed}\t{}\t{}\t{:.2}\t{:.4}\t{:.1}", s.name, s.input, s.bleu, s.entropy, s.seconds);
        }
        eprintln!(
            "seed {seed}: 1-best WER {:.1}, {} pretraining epochs in {:.1}s",
            r.test_stats.one_best_wer, r.pretrain_epochs, r.pretrain_seconds
        );
        results.push(r);
    }
    for name in ["R", "R+1", "R+L", "R+L+S"] {
        let b = experiment::mean_over(&results, name, |s| s.bleu).unwrap_or(f64::NAN);
        let e = experiment::mean_over(&results, name, |s| s.entropy).unwrap_or(f64::NAN);
        println!("mean\t{name}\t-\t{b:.2}\t{e:.4}\t-");
    }
    if let Some(path) = a.json {
        serde_json::to_writer_pretty(BufWriter::new(File::create(&path)?), &results)?;
    }
    Ok(())
}
