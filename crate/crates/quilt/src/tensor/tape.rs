//! Operation recording and reverse-mode gradient propagation.

use super::Tensor;
use crate::error::{Error, Result};
use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

const LOG_CLAMP_LO: f64 = 1e-12;
const LOG_CLAMP_HI: f64 = 1.0 - 1e-12;

enum Op {
    MatMul,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Relu,
    Sigmoid,
    SquaredL2,
    Mean,
    LogClamped,
    MaskedSelect(Rc<Vec<usize>>),
    GatherRows(Rc<Vec<usize>>),
}

struct Node {
    op: Op,
    inputs: Vec<Tensor>,
    output: Tensor,
}

/// Records forward kernels so gradients can be replayed in reverse.
///
/// One tape per training step: run the forward pass, call
/// [`Tape::backward`] on the scalar loss, then drop or [`Tape::clear`] the
/// tape. Parameters outlive tapes; their gradients accumulate across
/// `backward` calls until explicitly zeroed.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    recording: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

fn stable_sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape {
            nodes: RefCell::new(Vec::new()),
            recording: true,
        }
    }

    /// A tape that never records; useful for inference-only forward passes.
    pub fn no_grad() -> Tape {
        Tape {
            nodes: RefCell::new(Vec::new()),
            recording: false,
        }
    }

    /// Drops every recorded node. Parameters are unaffected.
    pub fn clear(&self) {
        self.nodes.borrow_mut().clear();
    }

    pub fn node_count(&self) -> usize {
        self.nodes.borrow().len()
    }

    fn record(&self, op: Op, inputs: Vec<Tensor>, shape: Vec<usize>, values: Vec<f64>) -> Tensor {
        let track = self.recording && inputs.iter().any(Tensor::requires_grad);
        let out = Tensor::output(shape, values, track);
        if track {
            self.nodes.borrow_mut().push(Node {
                op,
                inputs,
                output: out.clone(),
            });
        }
        out
    }

    fn rank2(&self, t: &Tensor, kernel: &'static str) -> Result<(usize, usize)> {
        let shape = t.shape();
        if shape.len() != 2 {
            return Err(Error::ShapeMismatch {
                kernel,
                lhs: shape,
                rhs: vec![],
            });
        }
        Ok((shape[0], shape[1]))
    }

    /// `a @ b` for a `r x k` and b `k x c`.
    pub fn matmul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (r, k) = self.rank2(a, "matmul")?;
        let (k2, c) = self.rank2(b, "matmul")?;
        if k != k2 {
            return Err(Error::ShapeMismatch {
                kernel: "matmul",
                lhs: a.shape(),
                rhs: b.shape(),
            });
        }
        let out = matmul_values(&a.values(), &b.values(), r, k, c);
        Ok(self.record(Op::MatMul, vec![a.clone(), b.clone()], vec![r, c], out))
    }

    fn elementwise(
        &self,
        kernel: &'static str,
        op: Op,
        a: &Tensor,
        b: &Tensor,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        if a.shape() != b.shape() {
            return Err(Error::ShapeMismatch {
                kernel,
                lhs: a.shape(),
                rhs: b.shape(),
            });
        }
        let out = a
            .values()
            .iter()
            .zip(b.values().iter())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(self.record(op, vec![a.clone(), b.clone()], a.shape(), out))
    }

    pub fn add(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.elementwise("add", Op::Add, a, b, |x, y| x + y)
    }

    pub fn sub(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.elementwise("sub", Op::Sub, a, b, |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&self, a: &Tensor, b: &Tensor) -> Result<Tensor> {
        self.elementwise("mul", Op::Mul, a, b, |x, y| x * y)
    }

    /// Multiplication by a constant scalar.
    pub fn scale(&self, a: &Tensor, c: f64) -> Result<Tensor> {
        let out = a.values().iter().map(|&v| c * v).collect();
        Ok(self.record(Op::Scale(c), vec![a.clone()], a.shape(), out))
    }

    pub fn relu(&self, a: &Tensor) -> Result<Tensor> {
        let out = a.values().iter().map(|&v| v.max(0.0)).collect();
        Ok(self.record(Op::Relu, vec![a.clone()], a.shape(), out))
    }

    pub fn sigmoid(&self, a: &Tensor) -> Result<Tensor> {
        let out = a.values().iter().map(|&v| stable_sigmoid(v)).collect();
        Ok(self.record(Op::Sigmoid, vec![a.clone()], a.shape(), out))
    }

    /// Sum of squared entries, reduced to a scalar.
    pub fn squared_l2(&self, a: &Tensor) -> Result<Tensor> {
        let s: f64 = a.values().iter().map(|&v| v * v).sum();
        Ok(self.record(Op::SquaredL2, vec![a.clone()], vec![1], vec![s]))
    }

    /// Mean over all entries, reduced to a scalar.
    pub fn mean(&self, a: &Tensor) -> Result<Tensor> {
        let n = a.len() as f64;
        let s: f64 = a.values().iter().sum();
        Ok(self.record(Op::Mean, vec![a.clone()], vec![1], vec![s / n]))
    }

    /// Natural log of the values clamped into `[1e-12, 1 - 1e-12]`.
    ///
    /// The clamp keeps the binary cross entropy finite when a sigmoid
    /// saturates; outside the clamp window the derivative is zero, matching
    /// the clamped forward function.
    pub fn log_clamped(&self, a: &Tensor) -> Result<Tensor> {
        let out = a
            .values()
            .iter()
            .map(|&v| v.clamp(LOG_CLAMP_LO, LOG_CLAMP_HI).ln())
            .collect();
        Ok(self.record(Op::LogClamped, vec![a.clone()], a.shape(), out))
    }

    /// Selects the entries where `mask` is true, in row-major order,
    /// producing a rank-1 tensor.
    pub fn masked_select(&self, a: &Tensor, mask: &[bool]) -> Result<Tensor> {
        if mask.len() != a.len() {
            return Err(Error::contract(format!(
                "masked_select: mask has {} entries, tensor has {}",
                mask.len(),
                a.len()
            )));
        }
        let indices: Vec<usize> = mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect();
        if indices.is_empty() {
            return Err(Error::contract(
                "masked_select: mask selects no entries".to_string(),
            ));
        }
        let vals = {
            let v = a.values();
            indices.iter().map(|&i| v[i]).collect::<Vec<_>>()
        };
        let n = indices.len();
        Ok(self.record(
            Op::MaskedSelect(Rc::new(indices)),
            vec![a.clone()],
            vec![n],
            vals,
        ))
    }

    /// Stop-gradient: copies the values into a fresh constant tensor.
    /// Nothing is recorded, so no gradient flows back through the result.
    pub fn detach(&self, a: &Tensor) -> Tensor {
        Tensor::output(a.shape(), a.to_vec(), false)
    }

    /// Gathers rows of a rank-2 tensor by index; repeated indices are
    /// allowed and their gradients accumulate.
    pub fn gather_rows(&self, a: &Tensor, rows: &[usize]) -> Result<Tensor> {
        let (r, c) = self.rank2(a, "gather_rows")?;
        if rows.is_empty() {
            return Err(Error::contract("gather_rows: empty index list".to_string()));
        }
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(Error::contract(format!(
                "gather_rows: row {bad} out of range for {r} rows"
            )));
        }
        let mut out = Vec::with_capacity(rows.len() * c);
        {
            let v = a.values();
            for &i in rows {
                out.extend_from_slice(&v[i * c..(i + 1) * c]);
            }
        }
        Ok(self.record(
            Op::GatherRows(Rc::new(rows.to_vec())),
            vec![a.clone()],
            vec![rows.len(), c],
            out,
        ))
    }

    /// Propagates `d loss / d tensor` to every tensor reachable from `loss`.
    ///
    /// Flow gradients are recomputed from scratch on every call, then added
    /// into each tensor's persistent `grad` buffer, so two calls without an
    /// intervening [`Tensor::zero_grad`] accumulate exactly twice the
    /// single-call gradient.
    pub fn backward(&self, loss: &Tensor) -> Result<()> {
        if !loss.is_scalar() {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss.shape()
            )));
        }
        let nodes = self.nodes.borrow();
        let mut flow: HashMap<usize, Vec<f64>> = HashMap::new();
        flow.insert(loss.id, vec![1.0]);

        for node in nodes.iter().rev() {
            let Some(out_grad) = flow.get(&node.output.id).cloned() else {
                continue;
            };
            self.apply_backward(node, &out_grad, &mut flow);
        }

        // Deposit flow gradients into persistent buffers. Order across
        // tensors is irrelevant: each deposit touches one tensor only.
        let mut seen: HashMap<usize, Tensor> = HashMap::new();
        seen.insert(loss.id, loss.clone());
        for node in nodes.iter() {
            for t in node.inputs.iter().chain(std::iter::once(&node.output)) {
                seen.entry(t.id).or_insert_with(|| t.clone());
            }
        }
        for (id, t) in seen {
            if t.requires_grad() {
                if let Some(g) = flow.get(&id) {
                    t.add_to_grad(g);
                }
            }
        }
        Ok(())
    }

    fn apply_backward(&self, node: &Node, og: &[f64], flow: &mut HashMap<usize, Vec<f64>>) {
        let mut push = |t: &Tensor, delta: Vec<f64>| {
            if !t.requires_grad() {
                return;
            }
            let slot = flow.entry(t.id).or_insert_with(|| vec![0.0; t.len()]);
            for (s, d) in slot.iter_mut().zip(&delta) {
                *s += d;
            }
        };

        match &node.op {
            Op::MatMul => {
                let a = &node.inputs[0];
                let b = &node.inputs[1];
                let (r, k) = (a.shape()[0], a.shape()[1]);
                let c = b.shape()[1];
                if a.requires_grad() {
                    push(a, matmul_nt_values(og, &b.values(), r, c, k));
                }
                if b.requires_grad() {
                    push(b, matmul_tn_values(&a.values(), og, r, k, c));
                }
            }
            Op::Add => {
                push(&node.inputs[0], og.to_vec());
                push(&node.inputs[1], og.to_vec());
            }
            Op::Sub => {
                push(&node.inputs[0], og.to_vec());
                push(&node.inputs[1], og.iter().map(|g| -g).collect());
            }
            Op::Mul => {
                let a = &node.inputs[0];
                let b = &node.inputs[1];
                if a.requires_grad() {
                    let bv = b.values();
                    push(a, og.iter().zip(bv.iter()).map(|(g, y)| g * y).collect());
                }
                if b.requires_grad() {
                    let av = a.values();
                    push(b, og.iter().zip(av.iter()).map(|(g, x)| g * x).collect());
                }
            }
            Op::Scale(c) => {
                push(&node.inputs[0], og.iter().map(|g| g * c).collect());
            }
            Op::Relu => {
                let a = &node.inputs[0];
                let av = a.values();
                let delta = og
                    .iter()
                    .zip(av.iter())
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect();
                drop(av);
                push(a, delta);
            }
            Op::Sigmoid => {
                let ov = node.output.values();
                let delta = og
                    .iter()
                    .zip(ov.iter())
                    .map(|(g, &s)| g * s * (1.0 - s))
                    .collect();
                drop(ov);
                push(&node.inputs[0], delta);
            }
            Op::SquaredL2 => {
                let a = &node.inputs[0];
                let g = og[0];
                let delta = a.values().iter().map(|&x| 2.0 * x * g).collect();
                push(a, delta);
            }
            Op::Mean => {
                let a = &node.inputs[0];
                let g = og[0] / a.len() as f64;
                push(a, vec![g; a.len()]);
            }
            Op::LogClamped => {
                let a = &node.inputs[0];
                let delta = og
                    .iter()
                    .zip(a.values().iter())
                    .map(|(g, &x)| {
                        if x > LOG_CLAMP_LO && x < LOG_CLAMP_HI {
                            g / x
                        } else {
                            0.0
                        }
                    })
                    .collect();
                push(a, delta);
            }
            Op::MaskedSelect(indices) => {
                let a = &node.inputs[0];
                let mut delta = vec![0.0; a.len()];
                for (pos, &i) in indices.iter().enumerate() {
                    delta[i] += og[pos];
                }
                push(a, delta);
            }
            Op::GatherRows(rows) => {
                let a = &node.inputs[0];
                let c = a.shape()[1];
                let mut delta = vec![0.0; a.len()];
                for (pos, &i) in rows.iter().enumerate() {
                    for j in 0..c {
                        delta[i * c + j] += og[pos * c + j];
                    }
                }
                push(a, delta);
            }
        }
    }
}

/// `a (r x k) @ b (k x c)`, accumulating over k in ascending order.
pub(crate) fn matmul_values(a: &[f64], b: &[f64], r: usize, k: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * c..(i + 1) * c];
        for (kk, &aik) in arow.iter().enumerate() {
            let brow = &b[kk * c..(kk + 1) * c];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aik * bv;
            }
        }
    }
    out
}

/// `g (r x c) @ b^T (c x k)` where b is `k x c`: the matmul gradient w.r.t.
/// the left operand.
fn matmul_nt_values(g: &[f64], b: &[f64], r: usize, c: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * k];
    for i in 0..r {
        let grow = &g[i * c..(i + 1) * c];
        let orow = &mut out[i * k..(i + 1) * k];
        for (kk, o) in orow.iter_mut().enumerate() {
            let brow = &b[kk * c..(kk + 1) * c];
            let mut acc = 0.0;
            for (gv, bv) in grow.iter().zip(brow) {
                acc += gv * bv;
            }
            *o += acc;
        }
    }
    out
}

/// `a^T (k x r) @ g (r x c)` where a is `r x k`: the matmul gradient w.r.t.
/// the right operand.
fn matmul_tn_values(a: &[f64], g: &[f64], r: usize, k: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * c];
    for i in 0..r {
        let arow = &a[i * k..(i + 1) * k];
        let grow = &g[i * c..(i + 1) * c];
        for (kk, &av) in arow.iter().enumerate() {
            let orow = &mut out[kk * c..(kk + 1) * c];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    out
}
