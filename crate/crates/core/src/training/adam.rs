use crate::autodiff::{Gradients, ParamStore, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers are allocated the first time a
/// parameter receives a gradient; afterwards a missing gradient counts as
/// zero.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    /// Number of updates applied so far.
    pub step: u64,
    pub(crate) m: Vec<Option<Tensor>>,
    pub(crate) v: Vec<Option<Tensor>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// First and second moments of parameter `index`, if allocated.
    pub fn moments(&self, index: usize) -> Option<(&Tensor, &Tensor)> {
        match (self.m.get(index), self.v.get(index)) {
            (Some(Some(m)), Some(Some(v))) => Some((m, v)),
            _ => None,
        }
    }

    pub(crate) fn set_moments(&mut self, index: usize, m: Tensor, v: Tensor) {
        if self.m.len() <= index {
            self.m.resize(index + 1, None);
            self.v.resize(index + 1, None);
        }
        self.m[index] = Some(m);
        self.v[index] = Some(v);
    }

    pub fn update(&mut self, store: &mut ParamStore, grads: &Gradients, lr: f64) {
        let AdamConfig { beta1, beta2, eps } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        if self.m.len() < store.len() {
            self.m.resize(store.len(), None);
            self.v.resize(store.len(), None);
        }
        for id in store.ids().collect::<Vec<_>>() {
            let i = id.index();
            let g = grads.get(id);
            if g.is_none() && self.m[i].is_none() {
                continue;
            }
            let shape = store.value(id).shape();
            let m = self.m[i].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1));
            let v = self.v[i].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1));
            let theta = store.value_mut(id).data_mut();
            let (m, v) = (m.data_mut(), v.data_mut());
            for j in 0..theta.len() {
                let gj = g.map_or(0.0, |t| t.data()[j]);
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                theta[j] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

/// Rescales `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut Gradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        grads.scale(max_norm / norm);
    }
    norm
}

/// Learning rate after the latest dev perplexity: halved whenever it got
/// worse than the previous epoch's.
pub fn next_lr(lr: f64, history: &[f64]) -> f64 {
    match history {
        [.., prev, cur] if cur > prev => lr / 2.0,
        _ => lr,
    }
}

/// Applies [`next_lr`] after every epoch of `history`.
pub fn lr_schedule(initial: f64, history: &[f64]) -> f64 {
    (1..=history.len()).fold(initial, |lr, n| next_lr(lr, &history[..n]))
}
