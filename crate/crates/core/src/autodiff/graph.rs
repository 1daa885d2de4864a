use super::{Gradients, ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    /// Column `index` of a parameter matrix (embedding lookup).
    Column(ParamId, usize),
    MatMul(NodeId, NodeId),
    /// `Σ W_t x_t + b` over column vectors `x_t`.
    Affine(Vec<(NodeId, NodeId)>, Option<NodeId>),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    ScaleConst(f64, NodeId),
    /// 1x1 node times any node.
    Scale(NodeId, NodeId),
    /// Matrix plus a column vector added to every column.
    AddColumn(NodeId, NodeId),
    /// Vertical concatenation.
    Concat(Vec<NodeId>),
    /// Column vectors side by side.
    StackCols(Vec<NodeId>),
    Sum(Vec<NodeId>),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Ln(NodeId),
    Softmax(NodeId),
    PickNegLogSoftmax(NodeId, usize),
    /// Elementwise `ln Σ_t exp(x_t)` across same-shaped nodes.
    LogSumExp(Vec<NodeId>),
    Pick(NodeId, usize),
    Reshape(NodeId),
    /// Elementwise product of a sum (dot product when both are vectors).
    Dot(NodeId, NodeId),
}

#[derive(Debug)]
struct Node {
    op: Op,
    /// Empty for `Op::Param`, whose value is read from the store.
    value: Tensor,
    shape: (usize, usize),
    needs_grad: bool,
}

/// A computation tape for one forward pass.
///
/// Builders evaluate eagerly, so values are available as soon as a node is
/// created. Parameters are read from the borrowed store without copying.
pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<NodeId>>,
}

fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
            param_nodes: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        let node = &self.nodes[id.0];
        match node.op {
            Op::Param(p) => self.store.value(p),
            _ => &node.value,
        }
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.value(id).data()[0]
    }

    pub fn shape(&self, id: NodeId) -> (usize, usize) {
        self.nodes[id.0].shape
    }

    fn push(&mut self, op: Op, value: Tensor, needs_grad: bool) -> NodeId {
        debug_assert!(value.all_finite(), "non-finite value from {op:?}");
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            op,
            shape: value.shape(),
            value,
            needs_grad,
        });
        id
    }

    fn ng(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Input, value, false)
    }

    pub fn constant(&mut self, x: f64) -> NodeId {
        self.input(Tensor::scalar(x))
    }

    /// The node holding parameter `p`; repeated calls share one node.
    pub fn param(&mut self, p: ParamId) -> NodeId {
        if let Some(id) = self.param_nodes[p.0] {
            return id;
        }
        let shape = self.store.value(p).shape();
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            op: Op::Param(p),
            value: Tensor::default(),
            shape,
            needs_grad: true,
        });
        self.param_nodes[p.0] = Some(id);
        id
    }

    pub fn column(&mut self, table: ParamId, index: usize) -> Result<NodeId> {
        let t = self.store.value(table);
        if index >= t.cols() {
            return Err(shape_err(
                "column",
                format!("index {index} out of {} columns", t.cols()),
            ));
        }
        let v = Tensor::vector(t.column(index));
        Ok(self.push(Op::Column(table, index), v, true))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(shape_err("matmul", format!("{m}x{k} * {k2}x{n}")));
        }
        let av = self.value(a).data();
        let bv = self.value(b).data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &av[i * k..(i + 1) * k];
            let o = &mut out[i * n..(i + 1) * n];
            for (p, &aip) in row.iter().enumerate() {
                let brow = &bv[p * n..(p + 1) * n];
                for (oj, &bpj) in o.iter_mut().zip(brow) {
                    *oj += aip * bpj;
                }
            }
        }
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Op::MatMul(a, b), Tensor::new(m, n, out)?, ng))
    }

    /// `Σ W_t x_t + bias` for column vectors `x_t`.
    pub fn affine(&mut self, terms: &[(NodeId, NodeId)], bias: Option<NodeId>) -> Result<NodeId> {
        let rows = match (terms.first(), bias) {
            (Some(&(w, _)), _) => self.shape(w).0,
            (None, Some(b)) => self.shape(b).0,
            (None, None) => return Err(shape_err("affine", "no terms".into())),
        };
        let mut out = match bias {
            Some(b) => {
                if self.shape(b) != (rows, 1) {
                    return Err(shape_err("affine", format!("bias {:?}, want {rows}x1", self.shape(b))));
                }
                self.value(b).data().to_vec()
            }
            None => vec![0.0; rows],
        };
        let mut ng = bias.is_some_and(|b| self.ng(b));
        for &(w, x) in terms {
            let (r, c) = self.shape(w);
            if r != rows || self.shape(x) != (c, 1) {
                return Err(shape_err(
                    "affine",
                    format!("{r}x{c} * {:?} into {rows}x1", self.shape(x)),
                ));
            }
            let wv = self.value(w).data();
            let xv = self.value(x).data();
            for (i, o) in out.iter_mut().enumerate() {
                let row = &wv[i * c..(i + 1) * c];
                *o += math::dot(row, xv);
            }
            ng |= self.ng(w) || self.ng(x);
        }
        Ok(self.push(Op::Affine(terms.to_vec(), bias), Tensor::vector(out), ng))
    }

    fn same_shape(&self, op: &'static str, a: NodeId, b: NodeId) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(op, format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        Ok(())
    }

    fn zip_with(&mut self, op: Op, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> NodeId {
        let (r, c) = self.shape(a);
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let ng = self.ng(a) || self.ng(b);
        self.push(op, Tensor::new(r, c, data).expect("same shape"), ng)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_with(Op::Add(a, b), a, b, |x, y| x + y))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_with(Op::Sub(a, b), a, b, |x, y| x - y))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_with(Op::Mul(a, b), a, b, |x, y| x * y))
    }

    /// `Σ a ⊙ b` as a 1x1 node.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape("dot", a, b)?;
        let s = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x * y)
            .sum();
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(Op::Dot(a, b), Tensor::scalar(s), ng))
    }

    fn map(&mut self, op: Op, a: NodeId, f: impl Fn(f64) -> f64) -> NodeId {
        let v = self.value(a);
        let (r, c) = v.shape();
        let data = v.data().iter().map(|&x| f(x)).collect();
        let ng = self.ng(a);
        self.push(op, Tensor::new(r, c, data).expect("same shape"), ng)
    }

    pub fn scale_const(&mut self, c: f64, a: NodeId) -> NodeId {
        self.map(Op::ScaleConst(c, a), a, |x| c * x)
    }

    /// `s * a` where `s` is 1x1.
    pub fn scale(&mut self, s: NodeId, a: NodeId) -> Result<NodeId> {
        if self.shape(s) != (1, 1) {
            return Err(shape_err("scale", format!("scalar operand {:?}", self.shape(s))));
        }
        let k = self.scalar(s);
        let n = self.map(Op::Scale(s, a), a, |x| k * x);
        self.nodes[n.0].needs_grad |= self.ng(s);
        Ok(n)
    }

    pub fn add_column(&mut self, m: NodeId, v: NodeId) -> Result<NodeId> {
        let (r, c) = self.shape(m);
        if self.shape(v) != (r, 1) {
            return Err(shape_err("add_column", format!("{r}x{c} + {:?}", self.shape(v))));
        }
        let vv = self.value(v).data();
        let data = self
            .value(m)
            .data()
            .iter()
            .enumerate()
            .map(|(idx, &x)| x + vv[idx / c])
            .collect();
        let ng = self.ng(m) || self.ng(v);
        Ok(self.push(Op::AddColumn(m, v), Tensor::new(r, c, data)?, ng))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(shape_err("concat", "no inputs".into()));
        };
        let cols = self.shape(first).1;
        let mut data = Vec::new();
        let mut ng = false;
        for &p in parts {
            if self.shape(p).1 != cols {
                return Err(shape_err("concat", format!("{:?} with {cols} columns", self.shape(p))));
            }
            data.extend_from_slice(self.value(p).data());
            ng |= self.ng(p);
        }
        let rows = data.len() / cols.max(1);
        Ok(self.push(Op::Concat(parts.to_vec()), Tensor::new(rows, cols, data)?, ng))
    }

    pub fn stack_cols(&mut self, cols: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = cols.first() else {
            return Err(shape_err("stack_cols", "no inputs".into()));
        };
        let rows = self.shape(first).0;
        let n = cols.len();
        let mut out = Tensor::zeros(rows, n);
        let mut ng = false;
        for (j, &c) in cols.iter().enumerate() {
            if self.shape(c) != (rows, 1) {
                return Err(shape_err("stack_cols", format!("{:?}, want {rows}x1", self.shape(c))));
            }
            for (r, &x) in self.value(c).data().iter().enumerate() {
                out.set(r, j, x);
            }
            ng |= self.ng(c);
        }
        Ok(self.push(Op::StackCols(cols.to_vec()), out, ng))
    }

    pub fn sum(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(shape_err("sum", "no inputs".into()));
        };
        let mut acc = self.value(first).clone();
        let mut ng = self.ng(first);
        for &p in &parts[1..] {
            self.same_shape("sum", first, p)?;
            for (a, b) in acc.data_mut().iter_mut().zip(self.value(p).data()) {
                *a += b;
            }
            ng |= self.ng(p);
        }
        Ok(self.push(Op::Sum(parts.to_vec()), acc, ng))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.map(Op::Sigmoid(a), a, math::sigmoid)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.map(Op::Tanh(a), a, f64::tanh)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.map(Op::Exp(a), a, f64::exp)
    }

    /// Natural log; inputs must be strictly positive (floor them first).
    pub fn ln(&mut self, a: NodeId) -> Result<NodeId> {
        if let Some(x) = self.value(a).data().iter().find(|&&x| x <= 0.0 || x.is_nan()) {
            return Err(Error::invalid(format!("ln of non-positive value {x}")));
        }
        Ok(self.map(Op::Ln(a), a, f64::ln))
    }

    /// Softmax over all entries.
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let (r, c) = v.shape();
        let t = Tensor::new(r, c, math::softmax(v.data())).expect("same shape");
        let ng = self.ng(a);
        self.push(Op::Softmax(a), t, ng)
    }

    /// `-ln softmax(a)[index]` as a 1x1 node.
    pub fn pick_neg_log_softmax(&mut self, a: NodeId, index: usize) -> Result<NodeId> {
        let v = self.value(a).data();
        if index >= v.len() {
            return Err(shape_err("pick_neg_log_softmax", format!("index {index} of {}", v.len())));
        }
        let nll = math::log_sum_exp(v) - v[index];
        let ng = self.ng(a);
        Ok(self.push(Op::PickNegLogSoftmax(a, index), Tensor::scalar(nll), ng))
    }

    /// Elementwise `ln Σ_t exp(x_t)` across same-shaped nodes.
    pub fn log_sum_exp(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(shape_err("log_sum_exp", "no inputs".into()));
        };
        let (r, c) = self.shape(first);
        for &p in parts {
            self.same_shape("log_sum_exp", first, p)?;
        }
        let mut buf = Vec::with_capacity(parts.len());
        let data = (0..r * c)
            .map(|e| {
                buf.clear();
                buf.extend(parts.iter().map(|&p| self.value(p).data()[e]));
                math::log_sum_exp(&buf)
            })
            .collect();
        let ng = parts.iter().any(|&p| self.ng(p));
        Ok(self.push(Op::LogSumExp(parts.to_vec()), Tensor::new(r, c, data)?, ng))
    }

    pub fn pick(&mut self, a: NodeId, index: usize) -> Result<NodeId> {
        let v = self.value(a).data();
        if index >= v.len() {
            return Err(shape_err("pick", format!("index {index} of {}", v.len())));
        }
        let x = v[index];
        let ng = self.ng(a);
        Ok(self.push(Op::Pick(a, index), Tensor::scalar(x), ng))
    }

    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> Result<NodeId> {
        let t = Tensor::new(rows, cols, self.value(a).data().to_vec())
            .map_err(|_| shape_err("reshape", format!("{:?} to {rows}x{cols}", self.shape(a))))?;
        let ng = self.ng(a);
        Ok(self.push(Op::Reshape(a), t, ng))
    }

    /// Reverse-mode sweep from the 1x1 node `loss`, adding `∂loss/∂θ` into
    /// `grads`. Existing contents of `grads` are kept.
    pub fn backward(&self, loss: NodeId, grads: &mut Gradients) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            return Err(shape_err("backward", format!("loss has shape {:?}", self.shape(loss))));
        }
        let mut local: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        local[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = local[i].take() else { continue };
            let mut acc = Acc {
                graph: self,
                local: &mut local,
                grads: &mut *grads,
            };
            acc.propagate(i, &g);
        }
        Ok(())
    }
}

/// Routes gradient contributions either into per-node buffers or, for
/// parameter nodes, straight into the caller's [`Gradients`].
struct Acc<'a, 'p> {
    graph: &'a Graph<'p>,
    local: &'a mut Vec<Option<Vec<f64>>>,
    grads: &'a mut Gradients,
}

impl Acc<'_, '_> {
    fn buf(&mut self, n: NodeId) -> Option<&mut [f64]> {
        let node = &self.graph.nodes[n.0];
        if !node.needs_grad {
            return None;
        }
        let (r, c) = node.shape;
        Some(match node.op {
            Op::Param(p) => self.grads.buffer(p, (r, c)),
            _ => self.local[n.0].get_or_insert_with(|| vec![0.0; r * c]),
        })
    }

    fn add_scaled(&mut self, n: NodeId, g: &[f64], k: f64) {
        if let Some(b) = self.buf(n) {
            for (d, s) in b.iter_mut().zip(g) {
                *d += k * s;
            }
        }
    }

    fn propagate(&mut self, i: usize, g: &[f64]) {
        let graph = self.graph;
        let node = &graph.nodes[i];
        let out = &node.value;
        match node.op {
            Op::Input | Op::Param(_) => {}
            Op::Column(table, index) => {
                let t = graph.store.value(table);
                let cols = t.cols();
                let b = self.grads.buffer(table, t.shape());
                for (r, &x) in g.iter().enumerate() {
                    b[r * cols + index] += x;
                }
            }
            Op::MatMul(a, bn) => {
                let (m, k) = graph.shape(a);
                let n = graph.shape(bn).1;
                let av = graph.value(a).data();
                let bv = graph.value(bn).data();
                if let Some(da) = self.buf(a) {
                    for ii in 0..m {
                        let gi = &g[ii * n..(ii + 1) * n];
                        for p in 0..k {
                            let bp = &bv[p * n..(p + 1) * n];
                            da[ii * k + p] += math::dot(gi, bp);
                        }
                    }
                }
                if let Some(db) = self.buf(bn) {
                    for ii in 0..m {
                        let gi = &g[ii * n..(ii + 1) * n];
                        for p in 0..k {
                            let aip = av[ii * k + p];
                            let dbp = &mut db[p * n..(p + 1) * n];
                            for (d, x) in dbp.iter_mut().zip(gi) {
                                *d += aip * x;
                            }
                        }
                    }
                }
            }
            Op::Affine(ref terms, bias) => {
                if let Some(b) = bias {
                    self.add_scaled(b, g, 1.0);
                }
                for &(w, x) in terms {
                    let c = graph.shape(w).1;
                    let wv = graph.value(w).data();
                    let xv = graph.value(x).data();
                    if let Some(dw) = self.buf(w) {
                        for (r, &gr) in g.iter().enumerate() {
                            if gr == 0.0 {
                                continue;
                            }
                            for (d, &xc) in dw[r * c..(r + 1) * c].iter_mut().zip(xv) {
                                *d += gr * xc;
                            }
                        }
                    }
                    if let Some(dx) = self.buf(x) {
                        for (r, &gr) in g.iter().enumerate() {
                            for (d, &wrc) in dx.iter_mut().zip(&wv[r * c..(r + 1) * c]) {
                                *d += gr * wrc;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                self.add_scaled(a, g, 1.0);
                self.add_scaled(b, g, 1.0);
            }
            Op::Sub(a, b) => {
                self.add_scaled(a, g, 1.0);
                self.add_scaled(b, g, -1.0);
            }
            Op::Mul(a, b) => {
                let av = graph.value(a).data();
                let bv = graph.value(b).data();
                if let Some(da) = self.buf(a) {
                    for ((d, &x), &y) in da.iter_mut().zip(g).zip(bv) {
                        *d += x * y;
                    }
                }
                if let Some(db) = self.buf(b) {
                    for ((d, &x), &y) in db.iter_mut().zip(g).zip(av) {
                        *d += x * y;
                    }
                }
            }
            Op::Dot(a, b) => {
                let gs = g[0];
                let av = graph.value(a).data();
                let bv = graph.value(b).data();
                if let Some(da) = self.buf(a) {
                    for (d, &y) in da.iter_mut().zip(bv) {
                        *d += gs * y;
                    }
                }
                if let Some(db) = self.buf(b) {
                    for (d, &y) in db.iter_mut().zip(av) {
                        *d += gs * y;
                    }
                }
            }
            Op::ScaleConst(c, a) => self.add_scaled(a, g, c),
            Op::Scale(s, a) => {
                let av = graph.value(a).data();
                let k = graph.scalar(s);
                if let Some(ds) = self.buf(s) {
                    ds[0] += math::dot(g, av);
                }
                self.add_scaled(a, g, k);
            }
            Op::AddColumn(m, v) => {
                let c = graph.shape(m).1;
                self.add_scaled(m, g, 1.0);
                if let Some(dv) = self.buf(v) {
                    for (r, d) in dv.iter_mut().enumerate() {
                        *d += g[r * c..(r + 1) * c].iter().sum::<f64>();
                    }
                }
            }
            Op::Concat(ref parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = graph.value(p).len();
                    self.add_scaled(p, &g[off..off + n], 1.0);
                    off += n;
                }
            }
            Op::StackCols(ref cols) => {
                let n = cols.len();
                for (j, &c) in cols.iter().enumerate() {
                    if let Some(dc) = self.buf(c) {
                        for (r, d) in dc.iter_mut().enumerate() {
                            *d += g[r * n + j];
                        }
                    }
                }
            }
            Op::Sum(ref parts) => {
                for &p in parts {
                    self.add_scaled(p, g, 1.0);
                }
            }
            Op::Sigmoid(a) => {
                if let Some(da) = self.buf(a) {
                    for ((d, &x), &y) in da.iter_mut().zip(g).zip(out.data()) {
                        *d += x * y * (1.0 - y);
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(da) = self.buf(a) {
                    for ((d, &x), &y) in da.iter_mut().zip(g).zip(out.data()) {
                        *d += x * (1.0 - y * y);
                    }
                }
            }
            Op::Exp(a) => {
                if let Some(da) = self.buf(a) {
                    for ((d, &x), &y) in da.iter_mut().zip(g).zip(out.data()) {
                        *d += x * y;
                    }
                }
            }
            Op::Ln(a) => {
                let av = graph.value(a).data();
                if let Some(da) = self.buf(a) {
                    for ((d, &x), &y) in da.iter_mut().zip(g).zip(av) {
                        *d += x / y;
                    }
                }
            }
            Op::Softmax(a) => {
                let y = out.data();
                let gy: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                if let Some(da) = self.buf(a) {
                    for ((d, &x), &yi) in da.iter_mut().zip(g).zip(y) {
                        *d += yi * (x - gy);
                    }
                }
            }
            Op::PickNegLogSoftmax(a, index) => {
                let gs = g[0];
                let p = math::softmax(graph.value(a).data());
                if let Some(da) = self.buf(a) {
                    for (j, (d, pj)) in da.iter_mut().zip(p).enumerate() {
                        let t = if j == index { 1.0 } else { 0.0 };
                        *d += gs * (pj - t);
                    }
                }
            }
            Op::LogSumExp(ref parts) => {
                let y = out.data();
                for &p in parts {
                    let pv = graph.value(p).data();
                    if let Some(dp) = self.buf(p) {
                        for (e, d) in dp.iter_mut().enumerate() {
                            *d += g[e] * (pv[e] - y[e]).exp();
                        }
                    }
                }
            }
            Op::Pick(a, index) => {
                if let Some(da) = self.buf(a) {
                    da[index] += g[0];
                }
            }
            Op::Reshape(a) => self.add_scaled(a, g, 1.0),
        }
    }
}
