//! Optimization: sequence pretraining and lattice fine-tuning.

mod adam;
mod config;

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{clip_global_norm, lr_schedule, next_lr, Adam, AdamConfig};
pub use config::TrainConfig;

use crate::autodiff::{Gradients, Graph, ParamStore};
use crate::checkpoint::Checkpoint;
use crate::corpus::Example;
use crate::error::Result;
use crate::eval::perplexity;
use crate::model::{with_eos, Model};

/// Progress of a pretraining run, saved with checkpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    /// Completed epochs.
    pub epoch: usize,
    pub lr: f64,
    pub dev_history: Vec<f64>,
    pub best_dev: Option<f64>,
    /// Epochs since the last improvement of `best_dev`.
    pub stale: usize,
}

/// Adds the gradients of every example's loss to `grads`; returns the
/// summed loss and target word count.
pub fn accumulate(model: &Model, batch: &[&Example], grads: &mut Gradients) -> Result<(f64, usize)> {
    let mut loss = 0.0;
    let mut words = 0;
    for ex in batch {
        let mut g = Graph::new(&model.store);
        let l = model.loss(&mut g, &ex.src, &with_eos(&ex.trg))?;
        loss += g.scalar(l);
        words += ex.target_words();
        g.backward(l, grads)?;
    }
    Ok((loss, words))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// Summed loss of the batch before the update.
    pub loss: f64,
    pub words: usize,
    /// Gradient norm before clipping.
    pub grad_norm: f64,
}

/// One Adam update on the per-word mean loss of `batch`, with global-norm
/// clipping.
pub fn train_step(
    model: &mut Model,
    opt: &mut Adam,
    batch: &[&Example],
    lr: f64,
    clip_norm: f64,
) -> Result<StepStats> {
    let mut grads = Gradients::new(&model.store);
    let (loss, words) = accumulate(model, batch, &mut grads)?;
    grads.scale(1.0 / words as f64);
    let grad_norm = clip_global_norm(&mut grads, clip_norm);
    opt.update(&mut model.store, &grads, lr);
    Ok(StepStats { loss, words, grad_norm })
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}

/// Length-bucketed minibatches of roughly `batch_words` target words.
///
/// Examples are shuffled, stably sorted by target then source length, cut
/// into consecutive batches, and the batch order is shuffled again.
pub fn make_batches(examples: &[Example], batch_words: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut rng = epoch_rng(seed, epoch);
    let mut idx: Vec<usize> = (0..examples.len()).collect();
    idx.shuffle(&mut rng);
    idx.sort_by_key(|&i| (examples[i].trg.len(), examples[i].src.num_nodes()));
    let mut batches = Vec::new();
    let mut cur = Vec::new();
    let mut words = 0;
    for i in idx {
        cur.push(i);
        words += examples[i].target_words();
        if words >= batch_words {
            batches.push(std::mem::take(&mut cur));
            words = 0;
        }
    }
    if !cur.is_empty() {
        batches.push(cur);
    }
    batches.shuffle(&mut rng);
    batches
}

/// One row of the tab-separated training log.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub split: &'static str,
    pub perplexity: f64,
    pub lr: f64,
    pub seconds: f64,
}

impl LogRow {
    pub fn write_to(&self, w: &mut dyn Write) -> std::io::Result<()> {
        writeln!(
            w,
            "{}\t{}\t{:.6}\t{}\t{:.3}",
            self.epoch, self.split, self.perplexity, self.lr, self.seconds
        )
    }
}

pub const LOG_HEADER: &str = "epoch\tsplit\tperplexity\tlr\tseconds";

/// Minibatched sequence training with LR halving and early stopping on dev
/// perplexity. The best parameters are restored when the run ends.
#[derive(Debug, Clone)]
pub struct Pretrainer {
    pub model: Model,
    pub opt: Adam,
    pub state: TrainerState,
    pub best: ParamStore,
    pub config: TrainConfig,
}

impl Pretrainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Pretrainer {
            opt: Adam::new(config.adam()),
            state: TrainerState {
                epoch: 0,
                lr: config.lr_pretrain,
                dev_history: Vec::new(),
                best_dev: None,
                stale: 0,
            },
            best: model.store.clone(),
            model,
            config,
        })
    }

    /// Resumes from a checkpoint written by [`Pretrainer::checkpoint`].
    pub fn from_checkpoint(ck: Checkpoint, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let opt = ck.optimizer.clone().unwrap_or_else(|| Adam::new(config.adam()));
        let state = ck.trainer.clone().unwrap_or(TrainerState {
            epoch: 0,
            lr: config.lr_pretrain,
            dev_history: Vec::new(),
            best_dev: None,
            stale: 0,
        });
        let best = ck.best.clone().unwrap_or_else(|| ck.params.clone());
        let model = ck.into_model()?;
        Ok(Pretrainer {
            model,
            opt,
            state,
            best,
            config,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::from_model(&self.model);
        ck.optimizer = Some(self.opt.clone());
        ck.trainer = Some(self.state.clone());
        ck.best = Some(self.best.clone());
        ck
    }

    pub fn finished(&self) -> bool {
        self.state.epoch >= self.config.max_epochs || self.state.stale >= self.config.patience
    }

    /// Trains one epoch and evaluates on `dev`. Returns the train and dev
    /// log rows.
    pub fn run_epoch(&mut self, train: &[Example], dev: &[Example]) -> Result<[LogRow; 2]> {
        let start = Instant::now();
        let lr = self.state.lr;
        let mut loss = 0.0;
        let mut words = 0;
        for batch in make_batches(train, self.config.batch_words, self.config.seed, self.state.epoch) {
            let refs: Vec<&Example> = batch.iter().map(|&i| &train[i]).collect();
            let s = train_step(&mut self.model, &mut self.opt, &refs, lr, self.config.clip_norm)?;
            loss += s.loss;
            words += s.words;
        }
        let dev_ppl = perplexity(&self.model, dev)?;
        let st = &mut self.state;
        st.epoch += 1;
        st.dev_history.push(dev_ppl);
        st.lr = next_lr(st.lr, &st.dev_history);
        if st.best_dev.is_none_or(|b| dev_ppl < b) {
            st.best_dev = Some(dev_ppl);
            st.stale = 0;
            self.best = self.model.store.clone();
        } else {
            st.stale += 1;
        }
        let seconds = start.elapsed().as_secs_f64();
        log::info!("epoch {}: train ppl {:.3}, dev ppl {dev_ppl:.3}", st.epoch, (loss / words as f64).exp());
        Ok([
            LogRow {
                epoch: st.epoch,
                split: "train",
                perplexity: (loss / words as f64).exp(),
                lr,
                seconds,
            },
            LogRow {
                epoch: st.epoch,
                split: "dev",
                perplexity: dev_ppl,
                lr,
                seconds,
            },
        ])
    }

    /// Runs epochs until the stopping rule fires, then restores the best
    /// parameters.
    pub fn run(&mut self, train: &[Example], dev: &[Example], mut log: Option<&mut dyn Write>) -> Result<Vec<LogRow>> {
        let mut rows = Vec::new();
        while !self.finished() {
            for row in self.run_epoch(train, dev)? {
                if let Some(w) = log.as_deref_mut() {
                    row.write_to(w)?;
                }
                rows.push(row);
            }
        }
        self.restore_best();
        Ok(rows)
    }

    pub fn restore_best(&mut self) {
        self.model.store = self.best.clone();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneReport {
    /// Summed batch loss of every update, in order.
    pub step_losses: Vec<f64>,
    /// Dev perplexity before training and after each epoch.
    pub dev_perplexity: Vec<f64>,
    pub log: Vec<LogRow>,
}

/// Per-example graphs with one update per group of `group_size` examples,
/// for a fixed number of epochs at a constant learning rate.
pub fn finetune(
    model: &mut Model,
    train: &[Example],
    dev: &[Example],
    config: &TrainConfig,
    mut log: Option<&mut dyn Write>,
) -> Result<FinetuneReport> {
    config.validate()?;
    let mut opt = Adam::new(config.adam());
    let mut report = FinetuneReport {
        step_losses: Vec::new(),
        dev_perplexity: vec![perplexity(model, dev)?],
        log: Vec::new(),
    };
    for epoch in 0..config.finetune_epochs {
        let start = Instant::now();
        let mut rng = epoch_rng(config.seed, epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let mut loss = 0.0;
        let mut words = 0;
        for group in order.chunks(config.group_size) {
            let refs: Vec<&Example> = group.iter().map(|&i| &train[i]).collect();
            let s = train_step(model, &mut opt, &refs, config.lr_finetune, config.clip_norm)?;
            report.step_losses.push(s.loss);
            loss += s.loss;
            words += s.words;
        }
        let dev_ppl = perplexity(model, dev)?;
        report.dev_perplexity.push(dev_ppl);
        let seconds = start.elapsed().as_secs_f64();
        for (split, ppl) in [("train", (loss / words as f64).exp()), ("dev", dev_ppl)] {
            let row = LogRow {
                epoch: epoch + 1,
                split,
                perplexity: ppl,
                lr: config.lr_finetune,
                seconds,
            };
            if let Some(w) = log.as_deref_mut() {
                row.write_to(w)?;
            }
            report.log.push(row);
        }
        log::info!("finetune epoch {}: dev ppl {dev_ppl:.3}", epoch + 1);
    }
    Ok(report)
}
