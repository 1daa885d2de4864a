//! Attentional encoder-decoder with a LatticeLSTM encoder.

pub mod check;
mod config;
mod decoder;
mod encoder;
pub mod lstm;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{ModelConfig, Peakiness, ScoreConfig};
pub use decoder::{with_eos, DecoderState, StepOutput};
pub use encoder::{Encoded, Source};
pub use lstm::{LstmParams, State};

use crate::autodiff::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Parameter handles, resolved once at construction.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub emb_fwd: ParamId,
    pub emb_bwd: ParamId,
    pub emb_trg: ParamId,
    pub enc_fwd: Vec<LstmParams>,
    pub enc_bwd: Vec<LstmParams>,
    pub dec: Vec<LstmParams>,
    pub att_ws: ParamId,
    pub att_wh: ParamId,
    pub att_b: ParamId,
    pub att_v: ParamId,
    pub w_hs: ParamId,
    pub b_hs: ParamId,
    pub w_so: ParamId,
    pub b_so: ParamId,
    /// Present only when the corresponding peakiness is learned.
    pub s_a: Option<ParamId>,
    pub s_h: Vec<Option<ParamId>>,
    pub s_f: Vec<Option<ParamId>>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub params: ModelParams,
}

impl Model {
    /// Freshly initialized model; identical seeds give identical parameters.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let c = &config;
        let (e, h, d) = (c.embed_dim, c.hidden_dim, c.decoder_dim());
        let emb_fwd = store.add_glorot("emb.fwd", e, c.src_vocab, &mut rng)?;
        let emb_bwd = store.add_glorot("emb.bwd", e, c.src_vocab, &mut rng)?;
        let emb_trg = store.add_glorot("emb.trg", e, c.trg_vocab, &mut rng)?;
        let mut enc_fwd = Vec::new();
        let mut enc_bwd = Vec::new();
        let mut dec = Vec::new();
        for l in 0..c.num_layers {
            let input = if l == 0 { e } else { h };
            enc_fwd.push(LstmParams::init(&mut store, &format!("enc.fwd.l{l}"), input, h, &mut rng)?);
            enc_bwd.push(LstmParams::init(&mut store, &format!("enc.bwd.l{l}"), input, h, &mut rng)?);
        }
        for l in 0..c.num_layers {
            let input = if l == 0 { e } else { d };
            dec.push(LstmParams::init(&mut store, &format!("dec.l{l}"), input, d, &mut rng)?);
        }
        let a = c.attention_dim;
        let att_ws = store.add_glorot("att.W_s", a, d, &mut rng)?;
        let att_wh = store.add_glorot("att.W_h", a, d, &mut rng)?;
        let att_b = store.add("att.b", Tensor::zeros(a, 1))?;
        let att_v = store.add_glorot("att.v", 1, a, &mut rng)?;
        let w_hs = store.add_glorot("out.W_hs", d, 2 * d, &mut rng)?;
        let b_hs = store.add("out.b_hs", Tensor::zeros(d, 1))?;
        let w_so = store.add_glorot("out.W_so", c.trg_vocab, d, &mut rng)?;
        let b_so = store.add("out.b_so", Tensor::zeros(c.trg_vocab, 1))?;

        let mut params = ModelParams {
            emb_fwd,
            emb_bwd,
            emb_trg,
            enc_fwd,
            enc_bwd,
            dec,
            att_ws,
            att_wh,
            att_b,
            att_v,
            w_hs,
            b_hs,
            w_so,
            b_so,
            s_a: None,
            s_h: vec![None; c.num_layers],
            s_f: vec![None; c.num_layers],
        };
        add_peakiness(&mut store, &mut params, c)?;
        Ok(Model { config, store, params })
    }

    /// Switches score handling, creating learned coefficients (at 1) that
    /// do not exist yet. Existing coefficients keep their values.
    pub fn set_scoring(&mut self, scoring: ScoreConfig) -> Result<()> {
        self.config.scoring = scoring;
        add_peakiness(&mut self.store, &mut self.params, &self.config)
    }

    /// Current value of the attention peakiness, if learned.
    pub fn s_a(&self) -> Option<f64> {
        self.params.s_a.map(|p| self.store.value(p).data()[0])
    }

    /// Copies every parameter of `other` present here by name and shape.
    pub fn load_values(&mut self, other: &ParamStore) -> Result<()> {
        for (_, name, value) in other.iter() {
            let id = self
                .store
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("unknown parameter {name:?}")))?;
            let dst = self.store.value_mut(id);
            if dst.shape() != value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {name:?} has shape {:?}, expected {:?}",
                    value.shape(),
                    dst.shape()
                )));
            }
            *dst = value.clone();
        }
        for id in self.store.ids().collect::<Vec<_>>() {
            let name = self.store.name(id);
            if other.get(name).is_none() && !name.starts_with("peak.") {
                return Err(Error::Checkpoint(format!("missing parameter {name:?}")));
            }
        }
        Ok(())
    }
}

fn add_peakiness(store: &mut ParamStore, params: &mut ModelParams, c: &ModelConfig) -> Result<()> {
    let sc = c.scoring;
    let mut get_or_add = |name: String, rows: usize| -> Result<ParamId> {
        match store.get(&name) {
            Some(id) => Ok(id),
            None => store.add(name, Tensor::filled(rows, 1, 1.0)),
        }
    };
    if sc.batt && sc.peak_a == Peakiness::Learned {
        params.s_a = Some(get_or_add("peak.S_a".into(), 1)?);
    }
    for l in 0..c.num_layers {
        if sc.wcs && sc.peak_h == Peakiness::Learned {
            params.s_h[l] = Some(get_or_add(format!("peak.l{l}.S_h"), c.hidden_dim)?);
        }
        if sc.bfg && sc.peak_f == Peakiness::Learned {
            params.s_f[l] = Some(get_or_add(format!("peak.l{l}.S_f"), c.hidden_dim)?);
        }
    }
    Ok(())
}
