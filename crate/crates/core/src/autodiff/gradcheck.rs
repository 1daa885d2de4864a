use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Gradients, Graph, NodeId, ParamStore};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    pub tolerance: f64,
    /// Lower bound on the denominator of the relative error. Below it the
    /// check is effectively absolute; central differences on a loss of
    /// magnitude `L` carry roundoff near `1e-16 * L / step`.
    pub denom_floor: f64,
    /// Check at most this many randomly chosen entries per parameter.
    pub max_per_param: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tolerance: 1e-4,
            denom_floor: 1e-4,
            max_per_param: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    /// `(flat index, analytic, numeric)` of the worst entry.
    pub worst: (usize, f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn eval<F>(store: &ParamStore, f: &F) -> Result<f64>
where
    F: Fn(&mut Graph<'_>) -> Result<NodeId>,
{
    let mut g = Graph::new(store);
    let loss = f(&mut g)?;
    Ok(g.scalar(loss))
}

/// Compares reverse-mode gradients of the scalar built by `f` against
/// central differences. Every perturbed value is restored afterwards.
pub fn gradient_check<F>(store: &mut ParamStore, f: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>) -> Result<NodeId>,
{
    let mut grads = Gradients::new(store);
    {
        let mut g = Graph::new(store);
        let loss = f(&mut g)?;
        g.backward(loss, &mut grads)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let ids: Vec<_> = store.ids().collect();
    let mut params = Vec::with_capacity(ids.len());
    let mut overall: f64 = 0.0;
    for id in ids {
        let n = store.value(id).len();
        let entries: Vec<usize> = match opts.max_per_param {
            Some(m) if m < n => {
                let mut v = sample(&mut rng, n, m).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..n).collect(),
        };
        let mut check = ParamCheck {
            name: store.name(id).to_string(),
            checked: entries.len(),
            max_rel_error: 0.0,
            worst: (0, 0.0, 0.0),
        };
        for e in entries {
            let analytic = grads.get(id).map_or(0.0, |t| t.data()[e]);
            let orig = store.value(id).data()[e];
            store.value_mut(id).data_mut()[e] = orig + opts.step;
            let plus = eval(store, &f);
            store.value_mut(id).data_mut()[e] = orig - opts.step;
            let minus = eval(store, &f);
            store.value_mut(id).data_mut()[e] = orig;
            let numeric = (plus? - minus?) / (2.0 * opts.step);
            let err = relative_error(analytic, numeric, opts.denom_floor);
            if err > check.max_rel_error || check.max_rel_error.is_nan() {
                check.max_rel_error = err;
                check.worst = (e, analytic, numeric);
            }
        }
        overall = overall.max(check.max_rel_error);
        params.push(check);
    }
    Ok(GradCheckReport {
        params,
        max_rel_error: overall,
        tolerance: opts.tolerance,
    })
}
