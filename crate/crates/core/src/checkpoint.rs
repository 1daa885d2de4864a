//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "LSQCKPT\0" | version u32 | architecture digest [32]
//! config: u64 length + JSON
//! params: u64 count, then per parameter
//!         u32 name length + UTF-8 name | rows u64 | cols u64 | rows*cols f64
//! sections u8 (bit 0 optimizer, bit 1 trainer state, bit 2 best params)
//! optimizer: step u64 | beta1 beta2 eps f64 | u64 count, then per parameter
//!            u8 present, followed by m and v data when present
//! trainer: u64 length + JSON
//! best params: same encoding as params
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::autodiff::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::training::{Adam, AdamConfig, TrainerState};

const MAGIC: &[u8; 8] = b"LSQCKPT\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub optimizer: Option<Adam>,
    pub trainer: Option<TrainerState>,
    /// Best parameters seen so far, kept for resuming early stopping.
    pub best: Option<ParamStore>,
}

impl Checkpoint {
    pub fn from_model(model: &Model) -> Self {
        Checkpoint {
            config: model.config.clone(),
            params: model.store.clone(),
            optimizer: None,
            trainer: None,
            best: None,
        }
    }

    pub fn into_model(self) -> Result<Model> {
        let mut m = Model::new(self.config, 0)?;
        m.load_values(&self.params)?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&self.config.architecture_digest())?;
        write_blob(w, serde_json::to_string(&self.config)?.as_bytes())?;
        write_params(w, &self.params)?;
        let flags = u8::from(self.optimizer.is_some())
            | u8::from(self.trainer.is_some()) << 1
            | u8::from(self.best.is_some()) << 2;
        w.write_all(&[flags])?;
        if let Some(opt) = &self.optimizer {
            w.write_all(&opt.step.to_le_bytes())?;
            for x in [opt.config.beta1, opt.config.beta2, opt.config.eps] {
                w.write_all(&x.to_le_bytes())?;
            }
            w.write_all(&(self.params.len() as u64).to_le_bytes())?;
            for id in self.params.ids() {
                match opt.moments(id.index()) {
                    Some((m, v)) => {
                        w.write_all(&[1])?;
                        write_f64s(w, m.data())?;
                        write_f64s(w, v.data())?;
                    }
                    None => w.write_all(&[0])?,
                }
            }
        }
        if let Some(t) = &self.trainer {
            write_blob(w, serde_json::to_string(t)?.as_bytes())?;
        }
        if let Some(b) = &self.best {
            write_params(w, b)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file".into()));
        }
        let version = read_u32(r)?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let mut digest = [0u8; 32];
        r.read_exact(&mut digest)?;
        let config: ModelConfig = serde_json::from_slice(&read_blob(r)?)?;
        if config.architecture_digest() != digest {
            return Err(Error::Checkpoint("configuration digest mismatch".into()));
        }
        let params = read_params(r)?;
        let mut flags = [0u8];
        r.read_exact(&mut flags)?;
        let optimizer = if flags[0] & 1 != 0 {
            let step = read_u64(r)?;
            let config = AdamConfig {
                beta1: read_f64(r)?,
                beta2: read_f64(r)?,
                eps: read_f64(r)?,
            };
            let n = read_u64(r)? as usize;
            if n != params.len() {
                return Err(Error::Checkpoint("optimizer state does not match parameters".into()));
            }
            let mut opt = Adam::new(config);
            opt.step = step;
            opt.m = vec![None; n];
            opt.v = vec![None; n];
            for (id, _, value) in params.iter() {
                let mut present = [0u8];
                r.read_exact(&mut present)?;
                if present[0] == 1 {
                    let (rows, cols) = value.shape();
                    let m = Tensor::new(rows, cols, read_f64s(r, rows * cols)?)?;
                    let v = Tensor::new(rows, cols, read_f64s(r, rows * cols)?)?;
                    opt.set_moments(id.index(), m, v);
                }
            }
            Some(opt)
        } else {
            None
        };
        let trainer = if flags[0] & 2 != 0 {
            Some(serde_json::from_slice(&read_blob(r)?)?)
        } else {
            None
        };
        let best = if flags[0] & 4 != 0 { Some(read_params(r)?) } else { None };
        Ok(Checkpoint {
            config,
            params,
            optimizer,
            trainer,
            best,
        })
    }
}

fn write_blob<W: Write>(w: &mut W, bytes: &[u8]) -> Result<()> {
    w.write_all(&(bytes.len() as u64).to_le_bytes())?;
    w.write_all(bytes)?;
    Ok(())
}

fn write_f64s<W: Write>(w: &mut W, xs: &[f64]) -> Result<()> {
    let mut buf = Vec::with_capacity(xs.len() * 8);
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn write_params<W: Write>(w: &mut W, store: &ParamStore) -> Result<()> {
    w.write_all(&(store.len() as u64).to_le_bytes())?;
    for (_, name, value) in store.iter() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(value.rows() as u64).to_le_bytes())?;
        w.write_all(&(value.cols() as u64).to_le_bytes())?;
        write_f64s(w, value.data())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    Ok(f64::from_bits(read_u64(r)?))
}

fn read_f64s<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

/// Upper bound on a single length field, to fail fast on corrupt input.
const MAX_LEN: u64 = 1 << 32;

fn read_blob<R: Read>(r: &mut R) -> Result<Vec<u8>> {
    let n = read_u64(r)?;
    if n > MAX_LEN {
        return Err(Error::Checkpoint(format!("implausible section length {n}")));
    }
    let mut buf = vec![0u8; n as usize];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_params<R: Read>(r: &mut R) -> Result<ParamStore> {
    let n = read_u64(r)?;
    let mut store = ParamStore::new();
    for _ in 0..n {
        let len = read_u32(r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?;
        let rows = read_u64(r)?;
        let cols = read_u64(r)?;
        if rows.saturating_mul(cols) > MAX_LEN {
            return Err(Error::Checkpoint(format!("implausible shape {rows}x{cols}")));
        }
        let (rows, cols) = (rows as usize, cols as usize);
        let t = Tensor::new(rows, cols, read_f64s(r, rows * cols)?)?;
        store.add(name, t)?;
    }
    Ok(store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{Gradients, Graph};
    use crate::model::tests::tiny_config;
    use crate::model::{with_eos, ScoreConfig, Source};
    use crate::vocab::WordId;

    #[test]
    fn round_trip_is_value_exact() {
        let model = Model::new(tiny_config(ScoreConfig::default()), 3).unwrap();
        let mut grads = Gradients::new(&model.store);
        {
            let mut g = Graph::new(&model.store);
            let l = model
                .loss(&mut g, &Source::Sequence(vec![WordId(3)]), &with_eos(&[WordId(4)]))
                .unwrap();
            g.backward(l, &mut grads).unwrap();
        }
        let mut opt = Adam::new(AdamConfig::default());
        let mut trained = model.clone();
        opt.update(&mut trained.store, &grads, 1e-3);
        let mut ck = Checkpoint::from_model(&trained);
        ck.optimizer = Some(opt.clone());
        ck.best = Some(model.store.clone());
        ck.trainer = Some(TrainerState {
            epoch: 4,
            lr: 5e-4,
            dev_history: vec![12.5, 1.0 / 3.0],
            best_dev: Some(1.0 / 3.0),
            stale: 1,
        });
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        let back = Checkpoint::read_from(&mut bytes.as_slice()).unwrap();
        assert_eq!(back.params, trained.store);
        assert_eq!(back.optimizer.as_ref(), Some(&opt));
        assert_eq!(back.trainer, ck.trainer);
        assert_eq!(back.best.as_ref(), Some(&model.store));
        let m2 = back.into_model().unwrap();
        assert_eq!(m2.store, trained.store);
    }

    #[test]
    fn rejects_corruption() {
        let model = Model::new(tiny_config(ScoreConfig::off()), 3).unwrap();
        let mut bytes = Vec::new();
        Checkpoint::from_model(&model).write_to(&mut bytes).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::read_from(&mut bad.as_slice()).is_err());
        let mut bad = bytes.clone();
        bad[12] ^= 1; // digest
        assert!(Checkpoint::read_from(&mut bad.as_slice()).is_err());
        let truncated = &bytes[..bytes.len() - 3];
        assert!(Checkpoint::read_from(&mut &truncated[..]).is_err());
    }
}
