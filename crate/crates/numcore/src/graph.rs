//! Reverse-mode automatic differentiation over a Wengert list.
//!
//! A [`Graph`] records every operation of one forward pass. Leaves are either
//! constants or parameters; only trainable parameters (and values depending
//! on them) receive gradients, so frozen weights cost no backward matmuls.

use rand::Rng;

use crate::error::{NumError, Result};
use crate::kernels::{self, AttnLayout};
use crate::loss::label_smoothed_nll;
use crate::scalar::{gemm, Scalar};
use crate::tensor::Tensor;

/// Handle to a value recorded in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op<T> {
    Leaf,
    MatMul { a: Var, b: Var, trans_b: bool },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    AddRow { a: Var, bias: Var },
    Scale { a: Var, factor: T },
    Sum { a: Var },
    Gelu { a: Var },
    Relu { a: Var },
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<T>, rstd: Vec<T> },
    Gather { table: Var, ids: Vec<usize> },
    Attention { q: Var, k: Var, v: Var, layout: Box<AttnLayout>, probs: Vec<T>, mask: Option<Vec<T>> },
    Dropout { a: Var, mask: Vec<T> },
    SmoothedNll { logits: Var, grad: Vec<T> },
}

struct Node<T> {
    value: Vec<T>,
    shape: Vec<usize>,
    op: Op<T>,
    needs_grad: bool,
}

/// Gradients produced by [`Graph::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

pub struct Graph<T: Scalar = f32> {
    nodes: Vec<Node<T>>,
    /// When false, nothing requires a gradient (evaluation mode).
    grad_enabled: bool,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new(), grad_enabled: true }
    }

    /// A graph that never tracks gradients.
    pub fn no_grad() -> Self {
        Self { nodes: Vec::new(), grad_enabled: false }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Vec<T>, shape: Vec<usize>, op: Op<T>, needs_grad: bool) -> Var {
        debug_assert_eq!(value.len(), shape.iter().product::<usize>());
        self.nodes.push(Node { value, shape, op, needs_grad: needs_grad && self.grad_enabled });
        Var(self.nodes.len() - 1)
    }

    fn ng(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &[T] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.ng(v)
    }

    fn cols(&self, v: Var) -> usize {
        *self.nodes[v.0].shape.last().unwrap_or(&1)
    }

    fn rows(&self, v: Var) -> usize {
        self.nodes[v.0].value.len() / self.cols(v).max(1)
    }

    pub fn to_tensor(&self, v: Var) -> Tensor<T> {
        Tensor::from_vec(self.shape(v).to_vec(), self.value(v).to_vec()).expect("node shape is consistent")
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        let shape = t.shape().to_vec();
        self.push(t.into_data(), shape, Op::Leaf, false)
    }

    /// Records a parameter leaf. Frozen parameters behave like constants.
    pub fn param(&mut self, t: &Tensor<T>, trainable: bool) -> Var {
        self.push(t.data().to_vec(), t.shape().to_vec(), Op::Leaf, trainable)
    }

    /// `a · b` (or `a · bᵀ` with `trans_b`) for 2-D operands; `a` may carry
    /// leading batch dims that are flattened into rows.
    pub fn matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (m, k) = (self.rows(a), self.cols(a));
        let bs = self.shape(b);
        if bs.len() != 2 {
            return Err(NumError::Shape(format!("matmul rhs must be 2-D, got {bs:?}")));
        }
        let (bk, n) = if trans_b { (bs[1], bs[0]) } else { (bs[0], bs[1]) };
        if bk != k {
            return Err(NumError::Shape(format!("matmul inner dims {k} vs {bk}")));
        }
        let mut out = vec![T::zero(); m * n];
        gemm(m, k, n, self.value(a), false, self.value(b), trans_b, &mut out, false);
        let mut shape = self.shape(a).to_vec();
        *shape.last_mut().unwrap() = n;
        let ng = self.ng(a) || self.ng(b);
        Ok(self.push(out, shape, Op::MatMul { a, b, trans_b }, ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(NumError::Shape(format!("add {:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| *x + *y).collect();
        let ng = self.ng(a) || self.ng(b);
        let shape = self.shape(a).to_vec();
        Ok(self.push(out, shape, Op::Add { a, b }, ng))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(NumError::Shape(format!("mul {:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| *x * *y).collect();
        let ng = self.ng(a) || self.ng(b);
        let shape = self.shape(a).to_vec();
        Ok(self.push(out, shape, Op::Mul { a, b }, ng))
    }

    /// Adds a bias vector to every row.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let c = self.cols(a);
        if self.value(bias).len() != c {
            return Err(NumError::Shape(format!("bias of {} for {c} columns", self.value(bias).len())));
        }
        let bv = self.value(bias);
        let out = self.value(a).iter().enumerate().map(|(i, x)| *x + bv[i % c]).collect();
        let ng = self.ng(a) || self.ng(bias);
        let shape = self.shape(a).to_vec();
        Ok(self.push(out, shape, Op::AddRow { a, bias }, ng))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let f = T::of(factor);
        let out = self.value(a).iter().map(|x| *x * f).collect();
        let ng = self.ng(a);
        let shape = self.shape(a).to_vec();
        self.push(out, shape, Op::Scale { a, factor: f }, ng)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().copied().sum();
        let ng = self.ng(a);
        self.push(vec![s], vec![1], Op::Sum { a }, ng)
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| kernels::gelu(x)).collect();
        let ng = self.ng(a);
        let shape = self.shape(a).to_vec();
        self.push(out, shape, Op::Gelu { a }, ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| if x > T::zero() { x } else { T::zero() }).collect();
        let ng = self.ng(a);
        let shape = self.shape(a).to_vec();
        self.push(out, shape, Op::Relu { a }, ng)
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let c = self.cols(x);
        if self.value(gain).len() != c || self.value(bias).len() != c {
            return Err(NumError::Shape(format!("layer norm params do not match width {c}")));
        }
        let mut y = vec![T::zero(); self.value(x).len()];
        let (xhat, rstd) =
            kernels::layer_norm_forward(self.value(x), c, self.value(gain), self.value(bias), eps, &mut y);
        let ng = self.ng(x) || self.ng(gain) || self.ng(bias);
        let shape = self.shape(x).to_vec();
        Ok(self.push(y, shape, Op::LayerNorm { x, gain, bias, xhat, rstd }, ng))
    }

    /// Row lookup: output row `i` is `table[ids[i]]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (rows, c) = (self.rows(table), self.cols(table));
        let mut out = Vec::with_capacity(ids.len() * c);
        for &id in ids {
            if id >= rows {
                return Err(NumError::TokenOutOfRange { id, vocab: rows });
            }
            out.extend_from_slice(&self.value(table)[id * c..(id + 1) * c]);
        }
        let ng = self.ng(table);
        Ok(self.push(out, vec![ids.len(), c], Op::Gather { table, ids: ids.to_vec() }, ng))
    }

    /// Multi-head scaled dot-product attention with optional dropout on the
    /// attention probabilities.
    pub fn attention<R: Rng + ?Sized>(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        layout: AttnLayout,
        dropout: f64,
        rng: Option<&mut R>,
    ) -> Result<Var> {
        let w = layout.width();
        if self.cols(q) != w || self.cols(k) != w || self.cols(v) != w {
            return Err(NumError::Shape("attention operands must have heads*head_dim columns".into()));
        }
        if self.rows(q) != layout.batch * layout.tq
            || self.rows(k) != layout.batch * layout.tk
            || self.rows(v) != layout.batch * layout.tk
            || layout.key_pad.len() != layout.batch * layout.tk
        {
            return Err(NumError::Shape("attention operand rows disagree with layout".into()));
        }
        let mask = match rng {
            Some(rng) if dropout > 0.0 => {
                let n = layout.batch * layout.heads * layout.tq * layout.tk;
                Some(dropout_mask(n, dropout, rng))
            }
            _ => None,
        };
        let mut out = vec![T::zero(); self.value(q).len()];
        let probs =
            kernels::attention_forward(self.value(q), self.value(k), self.value(v), &layout, mask.as_deref(), &mut out);
        let ng = self.ng(q) || self.ng(k) || self.ng(v);
        let shape = self.shape(q).to_vec();
        Ok(self.push(out, shape, Op::Attention { q, k, v, layout: Box::new(layout), probs, mask }, ng))
    }

    /// Inverted dropout; identity when `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, rng: &mut R) -> Var {
        if p <= 0.0 {
            return a;
        }
        let mask = dropout_mask(self.value(a).len(), p, rng);
        let out = self.value(a).iter().zip(&mask).map(|(x, m)| *x * *m).collect();
        let ng = self.ng(a);
        let shape = self.shape(a).to_vec();
        self.push(out, shape, Op::Dropout { a, mask }, ng)
    }

    /// Label-smoothed NLL of `logits` (rows × vocab) against `targets`,
    /// averaged over non-pad targets. Produces a scalar node.
    pub fn smoothed_nll(&mut self, logits: Var, targets: &[usize], smoothing: f64, pad_id: usize) -> Result<Var> {
        let vocab = self.cols(logits);
        let ng = self.ng(logits);
        let out = label_smoothed_nll(self.value(logits), vocab, targets, smoothing, pad_id, ng)?;
        Ok(self.push(vec![out.loss], vec![1], Op::SmoothedNll { logits, grad: out.grad.unwrap_or_default() }, ng))
    }

    /// Back-propagates from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(NumError::Shape("backward needs a scalar loss".into()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.ng(loss) {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![T::one()]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<T>>], v: Var) -> Option<&'g mut [T]> {
        if !self.ng(v) {
            return None;
        }
        let len = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); len]).as_mut_slice())
    }

    fn propagate(&self, node: &Node<T>, g: &[T], grads: &mut [Option<Vec<T>>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, trans_b } => {
                let (m, k) = (self.rows(*a), self.cols(*a));
                let n = *node.shape.last().unwrap();
                if let Some(da) = self.acc(grads, *a) {
                    // dA = dC · op(B)^T
                    gemm(m, n, k, g, false, self.value(*b), !*trans_b, da, true);
                }
                if let Some(db) = self.acc(grads, *b) {
                    if *trans_b {
                        // B is n×k: dB = dC^T · A
                        gemm(n, m, k, g, true, self.value(*a), false, db, true);
                    } else {
                        // B is k×n: dB = A^T · dC
                        gemm(k, m, n, self.value(*a), true, g, false, db, true);
                    }
                }
            }
            Op::Add { a, b } => {
                for v in [*a, *b] {
                    if let Some(d) = self.acc(grads, v) {
                        d.iter_mut().zip(g).for_each(|(x, y)| *x += *y);
                    }
                }
            }
            Op::Mul { a, b } => {
                if let Some(d) = self.acc(grads, *a) {
                    let bv = self.value(*b);
                    for i in 0..d.len() {
                        d[i] += g[i] * bv[i];
                    }
                }
                if let Some(d) = self.acc(grads, *b) {
                    let av = self.value(*a);
                    for i in 0..d.len() {
                        d[i] += g[i] * av[i];
                    }
                }
            }
            Op::AddRow { a, bias } => {
                if let Some(d) = self.acc(grads, *a) {
                    d.iter_mut().zip(g).for_each(|(x, y)| *x += *y);
                }
                let c = self.cols(*a);
                if let Some(d) = self.acc(grads, *bias) {
                    for (i, y) in g.iter().enumerate() {
                        d[i % c] += *y;
                    }
                }
            }
            Op::Scale { a, factor } => {
                if let Some(d) = self.acc(grads, *a) {
                    d.iter_mut().zip(g).for_each(|(x, y)| *x += *y * *factor);
                }
            }
            Op::Sum { a } => {
                if let Some(d) = self.acc(grads, *a) {
                    d.iter_mut().for_each(|x| *x += g[0]);
                }
            }
            Op::Gelu { a } => {
                let av = self.value(*a);
                if let Some(d) = self.acc(grads, *a) {
                    for i in 0..d.len() {
                        d[i] += g[i] * kernels::gelu_grad(av[i]);
                    }
                }
            }
            Op::Relu { a } => {
                let av = self.value(*a);
                if let Some(d) = self.acc(grads, *a) {
                    for i in 0..d.len() {
                        if av[i] > T::zero() {
                            d[i] += g[i];
                        }
                    }
                }
            }
            Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                let c = self.cols(*x);
                let gv = self.value(*gain).to_vec();
                // Each accumulator is fetched separately to satisfy the borrow checker.
                if self.ng(*gain) {
                    let dg = self.acc(grads, *gain).unwrap();
                    kernels::layer_norm_backward(g, c, xhat, rstd, &gv, None, Some(dg), None);
                }
                if self.ng(*bias) {
                    let db = self.acc(grads, *bias).unwrap();
                    kernels::layer_norm_backward(g, c, xhat, rstd, &gv, None, None, Some(db));
                }
                if self.ng(*x) {
                    let dx = self.acc(grads, *x).unwrap();
                    kernels::layer_norm_backward(g, c, xhat, rstd, &gv, Some(dx), None, None);
                }
            }
            Op::Gather { table, ids } => {
                let c = self.cols(*table);
                if let Some(d) = self.acc(grads, *table) {
                    for (r, &id) in ids.iter().enumerate() {
                        for j in 0..c {
                            d[id * c + j] += g[r * c + j];
                        }
                    }
                }
            }
            Op::Attention { q, k, v, layout, probs, mask } => {
                let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                // q, k and v are distinct nodes, so separate passes keep borrows simple.
                if self.ng(*q) {
                    let dq = self.acc(grads, *q).unwrap();
                    kernels::attention_backward(g, qv, kv, vv, probs, mask.as_deref(), layout, Some(dq), None, None);
                }
                if self.ng(*k) {
                    let dk = self.acc(grads, *k).unwrap();
                    kernels::attention_backward(g, qv, kv, vv, probs, mask.as_deref(), layout, None, Some(dk), None);
                }
                if self.ng(*v) {
                    let dv = self.acc(grads, *v).unwrap();
                    kernels::attention_backward(g, qv, kv, vv, probs, mask.as_deref(), layout, None, None, Some(dv));
                }
            }
            Op::Dropout { a, mask } => {
                if let Some(d) = self.acc(grads, *a) {
                    for i in 0..d.len() {
                        d[i] += g[i] * mask[i];
                    }
                }
            }
            Op::SmoothedNll { logits, grad } => {
                if let Some(d) = self.acc(grads, *logits) {
                    for i in 0..d.len() {
                        d[i] += grad[i] * g[0];
                    }
                }
            }
        }
    }
}

fn dropout_mask<T: Scalar, R: Rng + ?Sized>(n: usize, p: f64, rng: &mut R) -> Vec<T> {
    let keep = T::of(1.0 / (1.0 - p));
    (0..n).map(|_| if rng.random::<f64>() < p { T::zero() } else { keep }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central-difference check of a scalar function of one leaf.
    fn check<F>(input: Tensor<f64>, f: F)
    where
        F: Fn(&mut Graph<f64>, Var) -> Var,
    {
        let mut g = Graph::new();
        let x = g.param(&input, true);
        let out = f(&mut g, x);
        let analytic = g.backward(out).unwrap().get(x).unwrap().to_vec();
        for i in 0..input.len() {
            let eval = |delta: f64| {
                let mut t = input.clone();
                t.data_mut()[i] += delta;
                let mut g = Graph::new();
                let x = g.param(&t, true);
                let o = f(&mut g, x);
                g.value(o)[0]
            };
            let num = (eval(1e-6) - eval(-1e-6)) / 2e-6;
            assert!(
                (num - analytic[i]).abs() <= 1e-6 * (1.0 + num.abs()),
                "entry {i}: numeric {num} analytic {}",
                analytic[i]
            );
        }
    }

    fn sample(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::randn(shape.to_vec(), 1.0, &mut rng)
    }

    #[test]
    fn matmul_grads() {
        let w = sample(&[4, 3], 1);
        let w2 = sample(&[5, 3], 2);
        check(sample(&[2, 4], 3), |g, x| {
            let wv = g.constant(w.clone());
            let y = g.matmul(x, wv, false).unwrap();
            let w2v = g.constant(w2.clone());
            let z = g.matmul(y, w2v, true).unwrap();
            let z2 = g.mul(z, z).unwrap();
            g.sum(z2)
        });
        let x = sample(&[2, 4], 4);
        check(w.clone(), |g, wv| {
            let xv = g.constant(x.clone());
            let y = g.matmul(xv, wv, false).unwrap();
            let y2 = g.mul(y, y).unwrap();
            g.sum(y2)
        });
        check(sample(&[3, 4], 5), |g, wv| {
            let xv = g.constant(x.clone());
            let y = g.matmul(xv, wv, true).unwrap();
            let y2 = g.gelu(y);
            g.sum(y2)
        });
    }

    #[test]
    fn layer_norm_grads() {
        let gain = sample(&[5], 6);
        let bias = sample(&[5], 7);
        let coef = sample(&[3, 5], 8);
        check(sample(&[3, 5], 9), |g, x| {
            let gv = g.constant(gain.clone());
            let bv = g.constant(bias.clone());
            let y = g.layer_norm(x, gv, bv, 1e-5).unwrap();
            let c = g.constant(coef.clone());
            let z = g.mul(y, c).unwrap();
            g.sum(z)
        });
        let x = sample(&[3, 5], 10);
        check(gain.clone(), |g, gv| {
            let xv = g.constant(x.clone());
            let bv = g.constant(bias.clone());
            let y = g.layer_norm(xv, gv, bv, 1e-5).unwrap();
            let c = g.constant(coef.clone());
            let z = g.mul(y, c).unwrap();
            g.sum(z)
        });
    }

    #[test]
    fn attention_grads() {
        let layout = AttnLayout {
            batch: 2,
            heads: 2,
            tq: 3,
            tk: 4,
            head_dim: 2,
            causal: false,
            key_pad: vec![false, false, false, true, false, false, true, true],
            query_offset: 0,
        };
        let k = sample(&[8, 4], 11);
        let v = sample(&[8, 4], 12);
        let q = sample(&[6, 4], 13);
        let coef = sample(&[6, 4], 14);
        let run = |g: &mut Graph<f64>, qv: Var, kv: Var, vv: Var| {
            let o = g.attention::<ChaCha8Rng>(qv, kv, vv, layout.clone(), 0.0, None).unwrap();
            let c = g.constant(coef.clone());
            let z = g.mul(o, c).unwrap();
            g.sum(z)
        };
        check(q.clone(), |g, x| {
            let kv = g.constant(k.clone());
            let vv = g.constant(v.clone());
            run(g, x, kv, vv)
        });
        check(k.clone(), |g, x| {
            let qv = g.constant(q.clone());
            let vv = g.constant(v.clone());
            run(g, qv, x, vv)
        });
        check(v.clone(), |g, x| {
            let qv = g.constant(q.clone());
            let kv = g.constant(k.clone());
            run(g, qv, kv, x)
        });
    }

    #[test]
    fn causal_self_attention_grads() {
        let layout = AttnLayout {
            batch: 1,
            heads: 2,
            tq: 4,
            tk: 4,
            head_dim: 3,
            causal: true,
            key_pad: vec![false, false, false, true],
            query_offset: 0,
        };
        let coef = sample(&[4, 6], 15);
        check(sample(&[4, 6], 16), |g, x| {
            let o = g.attention::<ChaCha8Rng>(x, x, x, layout.clone(), 0.0, None).unwrap();
            let c = g.constant(coef.clone());
            let z = g.mul(o, c).unwrap();
            g.sum(z)
        });
    }

    #[test]
    fn gather_and_nll_grads() {
        let ids = [2usize, 0, 2, 1];
        check(sample(&[3, 4], 17), |g, table| {
            let rows = g.gather(table, &ids).unwrap();
            g.smoothed_nll(rows, &[1, 3, 0, 2], 0.2, 99).unwrap()
        });
    }

    #[test]
    fn frozen_leaves_get_no_gradient() {
        let mut g = Graph::<f64>::new();
        let a = g.param(&sample(&[2, 2], 18), false);
        let b = g.param(&sample(&[2, 2], 19), true);
        let c = g.matmul(a, b, false).unwrap();
        let s = g.sum(c);
        let grads = g.backward(s).unwrap();
        assert!(grads.get(a).is_none());
        assert!(grads.get(b).is_some());
    }

    #[test]
    fn dropout_is_deterministic_under_seed() {
        let t = sample(&[10, 10], 20);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let mut g = Graph::<f64>::new();
            let x = g.constant(t.clone());
            let y = g.dropout(x, 0.3, &mut rng);
            g.value(y).to_vec()
        };
        assert_eq!(run(), run());
    }
}
