use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::tensor::{matmul_into, row_nll, softmax_row};
use super::{NumericsError, ParamId, ParamSet, Result, Tensor};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Affine(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    Gather(Var, Vec<usize>),
    ScaleRows(Var, Var),
    Column(Var, usize),
    Softmax(Var),
    CrossEntropy { logits: Var, targets: Vec<usize>, active: Vec<bool>, count: usize },
    Sum(Var),
    Reshape(Var),
}

#[derive(Debug)]
struct Node {
    value: Arc<Tensor>,
    op: Op,
}

/// Records operations in execution order so that [`Tape::backward`] can
/// traverse them in reverse. An inference tape computes the same values but
/// keeps no graph.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    recording: bool,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            recording: true,
            nodes: Vec::new(),
            param_vars: Vec::new(),
        }
    }

    /// A tape that computes values without recording a graph.
    pub fn inference() -> Self {
        Self {
            recording: false,
            ..Self::new()
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn node(&self, v: Var) -> Result<&Node> {
        if v.tape != self.id {
            return Err(NumericsError::NotRecorded);
        }
        self.nodes.get(v.index).ok_or(NumericsError::NotRecorded)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.node(v).expect("var belongs to this tape").value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        debug_assert!(value.is_finite(), "non-finite value from {op:?}");
        let op = if self.recording { op } else { Op::Leaf };
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
        });
        Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        }
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Registers a parameter once per tape; repeated calls return the same var.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        if self.param_vars.len() <= id.0 {
            self.param_vars.resize(id.0 + 1, None);
        }
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        let value = params.get(id).shared_value();
        let op = if self.recording { Op::Param(id) } else { Op::Leaf };
        self.nodes.push(Node { value, op });
        let v = Var {
            tape: self.id,
            index: self.nodes.len() - 1,
        };
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).add(self.value(b))?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).sub(self.value(b))?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).mul(self.value(b))?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// `x[r×n] + bias[n]` added to every row.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let xv = self.value(x);
        let bv = self.value(bias);
        let (_, n) = xv.rows_cols()?;
        if bv.shape() != [n] {
            return Err(NumericsError::Shape(format!(
                "add_bias: rows of width {n} vs bias {:?}",
                bv.shape()
            )));
        }
        let mut out = xv.clone();
        for row in out.data_mut().chunks_mut(n) {
            for (o, b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddBias(x, bias)))
    }

    /// `scale * x + shift`
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let out = self.value(x).map(|v| scale * v + shift);
        self.push(out, Op::Affine(x, scale))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).sigmoid();
        self.push(out, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).tanh();
        self.push(out, Op::Tanh(x))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let values: Vec<&Tensor> = parts.iter().map(|&v| self.value(v)).collect();
        let out = Tensor::concat(&values)?;
        Ok(self.push(out, Op::Concat(parts.to_vec())))
    }

    /// Row lookup: `table[V×D]` indexed by `ids` gives `[ids.len()×D]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (v, d) = t.rows_cols()?;
        if ids.is_empty() {
            return Err(NumericsError::Shape("gather with no ids".into()));
        }
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(NumericsError::IdRange { id, size: v });
            }
            data.extend_from_slice(&t.data()[id * d..(id + 1) * d]);
        }
        let out = Tensor::matrix(ids.len(), d, data)?;
        Ok(self.push(out, Op::Gather(table, ids.to_vec())))
    }

    /// Multiplies row `r` of `x[R×N]` by `w[R×1]`.
    pub fn scale_rows(&mut self, x: Var, w: Var) -> Result<Var> {
        let xv = self.value(x);
        let wv = self.value(w);
        let (r, n) = xv.rows_cols()?;
        if wv.shape() != [r, 1] {
            return Err(NumericsError::Shape(format!(
                "scale_rows: {:?} by {:?}",
                xv.shape(),
                wv.shape()
            )));
        }
        let mut out = xv.clone();
        for (row, &s) in out.data_mut().chunks_mut(n).zip(wv.data()) {
            row.iter_mut().for_each(|v| *v *= s);
        }
        Ok(self.push(out, Op::ScaleRows(x, w)))
    }

    /// Column `j` of a matrix as `[R×1]`.
    pub fn column(&mut self, x: Var, j: usize) -> Result<Var> {
        let xv = self.value(x);
        let (r, c) = xv.rows_cols()?;
        if j >= c {
            return Err(NumericsError::IdRange { id: j, size: c });
        }
        let data = (0..r).map(|i| xv.data()[i * c + j]).collect();
        let out = Tensor::matrix(r, 1, data)?;
        Ok(self.push(out, Op::Column(x, j)))
    }

    /// Row-wise softmax over the last axis of a matrix. Where `mask` is
    /// given (row-major, same size as `x`), `false` entries get weight 0.
    pub fn softmax_rows(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let xv = self.value(x);
        let (_, c) = xv.rows_cols()?;
        if let Some(m) = mask {
            if m.len() != xv.numel() {
                return Err(NumericsError::Shape(format!(
                    "softmax mask of {} for {:?}",
                    m.len(),
                    xv.shape()
                )));
            }
        }
        let mut out = vec![0.0; xv.numel()];
        for (r, (row, o)) in xv.data().chunks(c).zip(out.chunks_mut(c)).enumerate() {
            softmax_row(row, mask.map(|m| &m[r * c..(r + 1) * c]), o)?;
        }
        let out = Tensor::new(xv.shape().to_vec(), out)?;
        Ok(self.push(out, Op::Softmax(x)))
    }

    /// Mean negative log-likelihood of `targets` under row-softmax of
    /// `logits[T×V]`, over rows whose `active` flag is set.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], active: &[bool]) -> Result<Var> {
        let lv = self.value(logits);
        let loss = super::cross_entropy(lv, targets, active)?;
        let count = active.iter().filter(|&&a| a).count();
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                active: active.to_vec(),
                count,
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(x))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshape(shape)?;
        Ok(self.push(out, Op::Reshape(x)))
    }

    /// Accumulates d`loss`/dθ into every parameter's `grad` (adding to what
    /// is already there). The tape is consumed.
    pub fn backward(self, loss: Var, params: &mut ParamSet) -> Result<()> {
        let node = self.node(loss)?;
        if !self.recording {
            return Err(NumericsError::NotRecorded);
        }
        if node.value.numel() != 1 {
            return Err(NumericsError::Shape(format!(
                "backward needs a scalar loss, got {:?}",
                node.value.shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.index + 1];
        grads[loss.index] = Some(vec![1.0]);
        for i in (0..=loss.index).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let mut sink = Sink {
                nodes: &self.nodes,
                grads: &mut grads,
                params: &mut *params,
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    let dst = params_grad(sink.params, *id)?;
                    add_into(dst, &g);
                }
                Op::MatMul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    let (m, k) = av.rows_cols()?;
                    let (_, n) = bv.rows_cols()?;
                    // dA = G·Bᵀ, dB = Aᵀ·G
                    let bt = bv.transpose()?;
                    matmul_into(&g, bt.data(), sink.slot(*a), m, n, k);
                    let at = av.transpose()?;
                    matmul_into(at.data(), &g, sink.slot(*b), k, m, n);
                }
                Op::Add(a, b) => {
                    add_into(sink.slot(*a), &g);
                    add_into(sink.slot(*b), &g);
                }
                Op::Sub(a, b) => {
                    add_into(sink.slot(*a), &g);
                    sink.slot(*b).iter_mut().zip(&g).for_each(|(d, g)| *d -= g);
                }
                Op::Mul(a, b) => {
                    let av = Arc::clone(&self.nodes[a.index].value);
                    let bv = Arc::clone(&self.nodes[b.index].value);
                    for ((d, g), b) in sink.slot(*a).iter_mut().zip(&g).zip(bv.data()) {
                        *d += g * b;
                    }
                    for ((d, g), a) in sink.slot(*b).iter_mut().zip(&g).zip(av.data()) {
                        *d += g * a;
                    }
                }
                Op::AddBias(x, bias) => {
                    add_into(sink.slot(*x), &g);
                    let n = self.value(*bias).numel();
                    let db = sink.slot(*bias);
                    for row in g.chunks(n) {
                        add_into(db, row);
                    }
                }
                Op::Affine(x, scale) => {
                    for (d, g) in sink.slot(*x).iter_mut().zip(&g) {
                        *d += scale * g;
                    }
                }
                Op::Sigmoid(x) => {
                    for ((d, g), y) in sink.slot(*x).iter_mut().zip(&g).zip(node.value.data()) {
                        *d += g * y * (1.0 - y);
                    }
                }
                Op::Tanh(x) => {
                    for ((d, g), y) in sink.slot(*x).iter_mut().zip(&g).zip(node.value.data()) {
                        *d += g * (1.0 - y * y);
                    }
                }
                Op::Concat(parts) => {
                    let total = node.value.last_dim();
                    let outer = node.value.numel() / total;
                    let mut offset = 0;
                    for p in parts {
                        let w = self.value(*p).last_dim();
                        let dst = sink.slot(*p);
                        for o in 0..outer {
                            add_into(
                                &mut dst[o * w..(o + 1) * w],
                                &g[o * total + offset..o * total + offset + w],
                            );
                        }
                        offset += w;
                    }
                }
                Op::Gather(table, ids) => {
                    let d = node.value.last_dim();
                    let dst = sink.slot(*table);
                    for (r, &id) in ids.iter().enumerate() {
                        add_into(&mut dst[id * d..(id + 1) * d], &g[r * d..(r + 1) * d]);
                    }
                }
                Op::ScaleRows(x, w) => {
                    let xv = Arc::clone(&self.nodes[x.index].value);
                    let wv = Arc::clone(&self.nodes[w.index].value);
                    let n = xv.last_dim();
                    let dx = sink.slot(*x);
                    for (r, &s) in wv.data().iter().enumerate() {
                        for c in 0..n {
                            dx[r * n + c] += g[r * n + c] * s;
                        }
                    }
                    let dw = sink.slot(*w);
                    for (r, d) in dw.iter_mut().enumerate() {
                        *d += (0..n).map(|c| g[r * n + c] * xv.data()[r * n + c]).sum::<f64>();
                    }
                }
                Op::Column(x, j) => {
                    let c = self.value(*x).last_dim();
                    let dx = sink.slot(*x);
                    for (r, gv) in g.iter().enumerate() {
                        dx[r * c + j] += gv;
                    }
                }
                Op::Softmax(x) => {
                    let c = node.value.last_dim();
                    let y = node.value.data();
                    let dx = sink.slot(*x);
                    for ((yr, gr), dr) in y.chunks(c).zip(g.chunks(c)).zip(dx.chunks_mut(c)) {
                        let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                        for ((d, y), g) in dr.iter_mut().zip(yr).zip(gr) {
                            *d += y * (g - dot);
                        }
                    }
                }
                Op::CrossEntropy { logits, targets, active, count } => {
                    let lv = Arc::clone(&self.nodes[logits.index].value);
                    let v = lv.last_dim();
                    let scale = g[0] / *count as f64;
                    let dl = sink.slot(*logits);
                    let mut probs = vec![0.0; v];
                    for (t, (&target, &on)) in targets.iter().zip(active).enumerate() {
                        if !on {
                            continue;
                        }
                        let row = &lv.data()[t * v..(t + 1) * v];
                        if row_nll(row, target).1 {
                            continue; // floor active: constant in the logits
                        }
                        softmax_row(row, None, &mut probs)?;
                        for (k, p) in probs.iter().enumerate() {
                            let onehot = if k == target { 1.0 } else { 0.0 };
                            dl[t * v + k] += scale * (p - onehot);
                        }
                    }
                }
                Op::Sum(x) => {
                    sink.slot(*x).iter_mut().for_each(|d| *d += g[0]);
                }
                Op::Reshape(x) => add_into(sink.slot(*x), &g),
            }
        }
        Ok(())
    }
}

struct Sink<'a> {
    nodes: &'a [Node],
    grads: &'a mut [Option<Vec<f64>>],
    params: &'a mut ParamSet,
}

impl Sink<'_> {
    /// Destination buffer for the gradient flowing into `v`: parameters
    /// accumulate straight into the [`ParamSet`].
    fn slot(&mut self, v: Var) -> &mut [f64] {
        let node = &self.nodes[v.index];
        if let Op::Param(id) = node.op {
            return params_grad(self.params, id).expect("parameter set matches tape");
        }
        self.grads[v.index].get_or_insert_with(|| vec![0.0; node.value.numel()])
    }
}

fn params_grad(params: &mut ParamSet, id: ParamId) -> Result<&mut [f64]> {
    if id.0 >= params.len() {
        return Err(NumericsError::NotRecorded);
    }
    Ok(params.get_mut(id).grad.data_mut())
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
