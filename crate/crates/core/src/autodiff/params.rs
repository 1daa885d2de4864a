use std::collections::HashMap;

use rand::Rng;

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Param {
    name: String,
    value: Tensor,
}

/// Named trainable parameters.
///
/// Values only; gradients live in [`Gradients`] so that many graphs can
/// read one store concurrently while each fills its own buffer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name:?}")));
        }
        let id = ParamId(self.params.len());
        self.by_name.insert(name.clone(), id);
        self.params.push(Param { name, value });
        Ok(id)
    }

    /// Glorot-uniform matrix.
    pub fn add_glorot<R: Rng>(&mut self, name: &str, rows: usize, cols: usize, rng: &mut R) -> Result<ParamId> {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
        self.add(name, Tensor::new(rows, cols, data)?)
    }

    pub fn get(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Tensor)> {
        self.params
            .iter()
            .enumerate()
            .map(|(i, p)| (ParamId(i), p.name.as_str(), &p.value))
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }
}

/// Gradient accumulation buffer aligned with a [`ParamStore`].
///
/// Buffers are allocated on first touch; a parameter that no graph reached
/// stays `None`. Nothing is cleared implicitly: call [`Gradients::zero`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    bufs: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn new(store: &ParamStore) -> Self {
        Gradients {
            bufs: vec![None; store.len()],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.bufs.get(id.0).and_then(Option::as_ref)
    }

    pub(crate) fn buffer(&mut self, id: ParamId, shape: (usize, usize)) -> &mut [f64] {
        if self.bufs.len() <= id.0 {
            self.bufs.resize(id.0 + 1, None);
        }
        self.bufs[id.0]
            .get_or_insert_with(|| Tensor::zeros(shape.0, shape.1))
            .data_mut()
    }

    /// Zero every buffer, keeping allocations.
    pub fn zero(&mut self) {
        for t in self.bufs.iter_mut().flatten() {
            t.fill(0.0);
        }
    }

    /// Drop all buffers.
    pub fn clear(&mut self) {
        self.bufs.iter_mut().for_each(|b| *b = None);
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.bufs.iter_mut().flatten() {
            t.data_mut().iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.bufs.iter().flatten().map(Tensor::sum_sq).sum::<f64>().sqrt()
    }

    /// `self += other`, in parameter order.
    pub fn add_from(&mut self, other: &Gradients) {
        for (i, b) in other.bufs.iter().enumerate() {
            if let Some(t) = b {
                let dst = self.buffer(ParamId(i), t.shape());
                for (d, s) in dst.iter_mut().zip(t.data()) {
                    *d += s;
                }
            }
        }
    }

    pub fn touched(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.bufs
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.as_ref().map(|t| (ParamId(i), t)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let mut s = ParamStore::new();
        s.add("w", Tensor::zeros(2, 2)).unwrap();
        assert!(s.add("w", Tensor::zeros(1, 1)).is_err());
        assert_eq!(s.get("w"), Some(ParamId(0)));
    }

    #[test]
    fn accumulation_is_additive_until_zeroed() {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::zeros(1, 2)).unwrap();
        let mut g = Gradients::new(&s);
        assert!(g.get(id).is_none());
        g.buffer(id, (1, 2))[0] += 1.5;
        let mut h = Gradients::new(&s);
        h.buffer(id, (1, 2))[0] += 0.5;
        g.add_from(&h);
        assert_eq!(g.get(id).unwrap().data(), &[2.0, 0.0]);
        g.zero();
        assert_eq!(g.get(id).unwrap().data(), &[0.0, 0.0]);
    }
}
