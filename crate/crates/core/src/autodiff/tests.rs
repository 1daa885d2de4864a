use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Result;

fn rand_tensor(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::new(r, c, (0..r * c).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn tight() -> GradCheckOptions {
    GradCheckOptions {
        tolerance: 1e-6,
        denom_floor: 1e-6,
        ..Default::default()
    }
}

/// Reduces any node to a scalar with fixed, non-uniform weights so that
/// every output entry gets a distinct upstream gradient.
fn reduce(g: &mut Graph<'_>, x: NodeId) -> Result<NodeId> {
    let n = g.value(x).len();
    let (r, c) = g.shape(x);
    let w = Tensor::new(r, c, (0..n).map(|i| 0.3 + 0.17 * i as f64).collect())?;
    let w = g.input(w);
    g.dot(x, w)
}

fn check<F>(store: &mut ParamStore, f: F)
where
    F: Fn(&mut Graph<'_>) -> Result<NodeId>,
{
    let rep = gradient_check(store, f, &tight()).unwrap();
    assert!(rep.passed(), "{rep:#?}");
}

#[test]
fn matmul_and_affine_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut s = ParamStore::new();
    let a = s.add("a", rand_tensor(&mut rng, 3, 4, -1.0, 1.0)).unwrap();
    let b = s.add("b", rand_tensor(&mut rng, 4, 2, -1.0, 1.0)).unwrap();
    let x = s.add("x", rand_tensor(&mut rng, 4, 1, -1.0, 1.0)).unwrap();
    let u = s.add("u", rand_tensor(&mut rng, 3, 2, -1.0, 1.0)).unwrap();
    let y = s.add("y", rand_tensor(&mut rng, 2, 1, -1.0, 1.0)).unwrap();
    let bias = s.add("bias", rand_tensor(&mut rng, 3, 1, -1.0, 1.0)).unwrap();
    check(&mut s, |g| {
        let (an, bn) = (g.param(a), g.param(b));
        let m = g.matmul(an, bn)?;
        let (xn, un, yn, bb) = (g.param(x), g.param(u), g.param(y), g.param(bias));
        let v = g.affine(&[(an, xn), (un, yn)], Some(bb))?;
        let l1 = reduce(g, m)?;
        let l2 = reduce(g, v)?;
        g.add(l1, l2)
    });
}

#[test]
fn elementwise_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut s = ParamStore::new();
    let a = s.add("a", rand_tensor(&mut rng, 4, 1, -2.0, 2.0)).unwrap();
    let b = s.add("b", rand_tensor(&mut rng, 4, 1, 0.1, 2.0)).unwrap();
    let k = s.add("k", Tensor::scalar(0.7)).unwrap();
    check(&mut s, |g| {
        let (an, bn, kn) = (g.param(a), g.param(b), g.param(k));
        let parts = [
            g.sigmoid(an),
            g.tanh(an),
            g.exp(an),
            g.ln(bn)?,
            g.mul(an, bn)?,
            g.sub(an, bn)?,
            g.scale_const(-1.5, an),
            g.scale(kn, bn)?,
            g.softmax(an),
            g.log_sum_exp(&[an, bn])?,
        ];
        let total = g.sum(&parts)?;
        let picked = g.pick(an, 2)?;
        let nll = g.pick_neg_log_softmax(bn, 1)?;
        let r = reduce(g, total)?;
        g.sum(&[r, picked, nll])
    });
}

#[test]
fn structural_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut s = ParamStore::new();
    let emb = s.add("emb", rand_tensor(&mut rng, 3, 5, -1.0, 1.0)).unwrap();
    let v = s.add("v", rand_tensor(&mut rng, 3, 1, -1.0, 1.0)).unwrap();
    check(&mut s, |g| {
        let c0 = g.column(emb, 4)?;
        let c1 = g.column(emb, 1)?;
        let c2 = g.column(emb, 4)?;
        let vn = g.param(v);
        let m = g.stack_cols(&[c0, c1, vn, c2])?;
        let m = g.add_column(m, vn)?;
        let m = g.tanh(m);
        let cat = g.concat(&[c0, vn, c1])?;
        let flat = g.reshape(m, 1, 12)?;
        let l1 = reduce(g, flat)?;
        let l2 = reduce(g, cat)?;
        g.add(l1, l2)
    });
}

#[test]
fn forward_values_match_scalar_oracle() {
    let mut s = ParamStore::new();
    let w = s.add("w", Tensor::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
    let mut g = Graph::new(&s);
    let wn = g.param(w);
    let x = g.input(Tensor::vector(vec![0.5, -1.0]));
    let b = g.input(Tensor::vector(vec![0.25, 0.0]));
    let y = g.affine(&[(wn, x)], Some(b)).unwrap();
    assert_eq!(g.value(y).data(), &[0.5 - 2.0 + 0.25, 1.5 - 4.0]);
    let m = g.matmul(wn, wn).unwrap();
    assert_eq!(g.value(m).data(), &[7.0, 10.0, 15.0, 22.0]);
    let l = g.pick_neg_log_softmax(x, 0).unwrap();
    let naive = -(0.5f64.exp() / (0.5f64.exp() + (-1.0f64).exp())).ln();
    assert!((g.scalar(l) - naive).abs() < 1e-15);
    let stack = g.stack_cols(&[x, b]).unwrap();
    assert_eq!(g.value(stack).data(), &[0.5, 0.25, -1.0, 0.0]);
}

#[test]
fn param_nodes_are_shared_and_gradients_accumulate() {
    let mut s = ParamStore::new();
    let w = s.add("w", Tensor::scalar(3.0)).unwrap();
    let unused = s.add("unused", Tensor::scalar(1.0)).unwrap();
    let mut grads = Gradients::new(&s);
    for _ in 0..2 {
        let mut g = Graph::new(&s);
        let a = g.param(w);
        let b = g.param(w);
        assert_eq!(a, b);
        let sq = g.mul(a, b).unwrap();
        g.backward(sq, &mut grads).unwrap();
    }
    assert_eq!(grads.get(w).unwrap().data(), &[12.0]);
    assert!(grads.get(unused).is_none());
}

#[test]
fn shape_errors_name_the_op() {
    let s = ParamStore::new();
    let mut g = Graph::new(&s);
    let a = g.input(Tensor::zeros(2, 3));
    let b = g.input(Tensor::zeros(2, 3));
    let err = g.matmul(a, b).unwrap_err().to_string();
    assert!(err.contains("matmul") && err.contains("2x3"), "{err}");
    let c = g.input(Tensor::zeros(3, 1));
    assert!(g.add(a, c).is_err());
    assert!(g.backward(a, &mut Gradients::default()).is_err());
    let neg = g.input(Tensor::scalar(-1.0));
    assert!(g.ln(neg).is_err());
}

#[test]
fn gradcheck_detects_a_wrong_gradient() {
    // Treating a constant as if it were the parameter breaks the chain:
    // the analytic gradient is zero while the numeric one is not.
    let mut s = ParamStore::new();
    let w = s.add("w", Tensor::scalar(0.8)).unwrap();
    let rep = gradient_check(
        &mut s,
        |g| {
            let v = g.store().value(w).clone();
            let c = g.input(v);
            Ok(g.exp(c))
        },
        &tight(),
    )
    .unwrap();
    assert!(!rep.passed());
    assert_eq!(s.value(w).data(), &[0.8]);
}

#[test]
fn relative_error_floor() {
    assert_eq!(relative_error(1.0, 1.0, 1e-4), 0.0);
    assert!((relative_error(2.0, 1.0, 1e-4) - 0.5).abs() < 1e-15);
    assert!((relative_error(1e-9, 0.0, 1e-4) - 1e-5).abs() < 1e-18);
}
