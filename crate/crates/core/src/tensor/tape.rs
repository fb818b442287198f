//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Nodes are appended in evaluation order, so every node's inputs have
//! smaller indices. [`Tape::backward`] walks the nodes in exact reverse order
//! and accumulates gradients; the walk order is fixed, which makes the result
//! bitwise reproducible.

use super::kernels::{self, AttnShape};
use super::{check_layer_norm, Tensor};
use crate::error::{Error, Result};
use std::borrow::Cow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Relu(Var),
    Scale(Var, f64),
    Gather { table: Var, ids: Vec<usize> },
    LayerNorm { x: Var, gain: Var, bias: Var, means: Vec<f64>, rstds: Vec<f64> },
    SoftmaxRows(Var),
    Attention { q: Var, k: Var, v: Var, shape: AttnShape, probs: Vec<f64> },
    MeanRows { x: Var, rows: Vec<usize> },
    CrossEntropy { logits: Var, targets: Vec<usize>, ignore: usize, probs: Vec<f64> },
    Mse(Var, Var),
    Dropout { x: Var, mask: Vec<f64> },
    Reshape(Var),
}

struct Node<'p> {
    value: Cow<'p, Tensor>,
    op: Op,
}

/// Operation record for one forward pass. Parameters are borrowed, never
/// copied, so a tape can be built per example while the parameter set is
/// shared read-only across threads.
#[derive(Default)]
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
}

/// Gradients of a scalar with respect to every node of a tape.
pub struct Grads {
    node: Vec<Option<Vec<f64>>>,
}

impl Grads {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.node[v.0].as_deref()
    }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value: Cow::Owned(value), op });
        Var(self.nodes.len() - 1)
    }

    /// Constant or differentiable input owned by the tape.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Borrowed model parameter; `index` identifies it in the gradient output.
    pub fn param(&mut self, index: usize, value: &'p Tensor) -> Var {
        self.nodes.push(Node { value: Cow::Borrowed(value), op: Op::Param(index) });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::Dimension(format!("add: {:?} vs {:?}", x.shape(), y.shape())));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p + q).collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    /// Adds a bias vector to every row.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (x, b) = (self.value(a), self.value(bias));
        if b.numel() != x.cols() {
            return Err(Error::Dimension(format!("add_row: {:?} + {:?}", x.shape(), b.shape())));
        }
        let mut out = x.clone();
        for row in out.data_mut().chunks_mut(b.numel()) {
            for (o, &bv) in row.iter_mut().zip(b.data()) {
                *o += bv;
            }
        }
        Ok(self.push(out, Op::AddRow(a, bias)))
    }

    /// `x·w + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_row(y, b)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for v in out.data_mut() {
            *v = v.max(0.0);
        }
        self.push(out, Op::Relu(a))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let mut out = self.value(a).clone();
        for v in out.data_mut() {
            *v *= factor;
        }
        self.push(out, Op::Scale(a, factor))
    }

    /// Row lookup: output row `i` is `table[ids[i]]`.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let (rows, d) = (t.rows(), t.cols());
        if ids.is_empty() {
            return Err(Error::Dimension("gather with no ids".into()));
        }
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= rows {
                return Err(Error::Dimension(format!("gather index {id} outside table of {rows} rows")));
            }
            data.extend_from_slice(t.row(id));
        }
        let out = Tensor::new(vec![ids.len(), d], data)?;
        Ok(self.push(out, Op::Gather { table, ids: ids.to_vec() }))
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (xt, g, b) = (self.value(x), self.value(gain), self.value(bias));
        check_layer_norm(xt, g, b, eps)?;
        let (out, means, rstds) = kernels::layer_norm_rows(xt.data(), g.data(), b.data(), xt.cols(), eps);
        let out = Tensor::new(xt.shape().to_vec(), out)?;
        Ok(self.push(out, Op::LayerNorm { x, gain, bias, means, rstds }))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).softmax_rows()?;
        Ok(self.push(out, Op::SoftmaxRows(x)))
    }

    /// Multi-head attention of queries `q[tq×d]` over keys/values `[tk×d]`.
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        causal: bool,
        key_mask: Option<&[bool]>,
    ) -> Result<Var> {
        let (qt, kt, vt) = (self.value(q), self.value(k), self.value(v));
        let d = qt.cols();
        if kt.cols() != d || vt.shape() != kt.shape() || heads == 0 || d % heads != 0 {
            return Err(Error::Dimension(format!(
                "attention: q {:?}, k {:?}, v {:?}, heads {heads}",
                qt.shape(),
                kt.shape(),
                vt.shape()
            )));
        }
        let shape = AttnShape { tq: qt.rows(), tk: kt.rows(), d, heads, causal };
        if causal && shape.tk < shape.tq {
            return Err(Error::Dimension("causal attention needs tk >= tq".into()));
        }
        if let Some(m) = key_mask {
            if m.len() != shape.tk {
                return Err(Error::Dimension("key mask length differs from key count".into()));
            }
        }
        let (out, probs) = kernels::attention(qt.data(), kt.data(), vt.data(), &shape, key_mask);
        let out = Tensor::new(vec![shape.tq, d], out)?;
        Ok(self.push(out, Op::Attention { q, k, v, shape, probs }))
    }

    /// Mean over the selected rows, giving `[1×d]`.
    pub fn mean_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let t = self.value(x);
        if rows.is_empty() || rows.iter().any(|&r| r >= t.rows()) {
            return Err(Error::Dimension("mean_rows: empty or out-of-range selection".into()));
        }
        let d = t.cols();
        let mut acc = vec![0.0; d];
        for &r in rows {
            for (a, &v) in acc.iter_mut().zip(t.row(r)) {
                *a += v;
            }
        }
        let inv = 1.0 / rows.len() as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        let out = Tensor::new(vec![1, d], acc)?;
        Ok(self.push(out, Op::MeanRows { x, rows: rows.to_vec() }))
    }

    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], ignore: usize) -> Result<Var> {
        let l = self.value(logits);
        let (loss, probs) = kernels::cross_entropy(l.data(), l.cols(), targets, ignore)?;
        Ok(self.push(Tensor::scalar(loss), Op::CrossEntropy { logits, targets: targets.to_vec(), ignore, probs }))
    }

    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let loss = super::mse(self.value(pred), self.value(target))?;
        Ok(self.push(Tensor::scalar(loss), Op::Mse(pred, target)))
    }

    /// Inverted dropout with a precomputed keep mask (values 0 or 1/(1-p)).
    pub fn dropout(&mut self, x: Var, mask: Vec<f64>) -> Result<Var> {
        let t = self.value(x);
        if mask.len() != t.numel() {
            return Err(Error::Dimension("dropout mask size".into()));
        }
        let data = t.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor::new(t.shape().to_vec(), data)?;
        Ok(self.push(out, Op::Dropout { x, mask }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = Tensor::new(shape.to_vec(), self.value(x).data().to_vec())?;
        Ok(self.push(out, Op::Reshape(x)))
    }

    /// Gradients of the single-element node `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        if self.value(loss).numel() != 1 {
            return Err(Error::Dimension("backward needs a scalar loss".into()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.backprop_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Grads { node: grads })
    }

    /// Accumulated gradient for each parameter index, `None` when the
    /// parameter did not influence the loss.
    pub fn param_grads(&self, grads: &Grads, n_params: usize) -> Vec<Option<Vec<f64>>> {
        let mut out: Vec<Option<Vec<f64>>> = vec![None; n_params];
        for (node, g) in self.nodes.iter().zip(&grads.node) {
            if let (Op::Param(ix), Some(g)) = (&node.op, g) {
                match &mut out[*ix] {
                    Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g.clone()),
                }
            }
        }
        out
    }

    fn backprop_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (at, bt) = (self.value(*a), self.value(*b));
                let (m, k, n) = (at.rows(), at.cols(), bt.cols());
                kernels::matmul_a_bt_acc(g, bt.data(), m, n, k, slot(grads, *a, m * k));
                kernels::matmul_at_b_acc(at.data(), g, m, k, n, slot(grads, *b, k * n));
            }
            Op::Add(a, b) => {
                add_into(slot(grads, *a, g.len()), g);
                add_into(slot(grads, *b, g.len()), g);
            }
            Op::AddRow(a, b) => {
                add_into(slot(grads, *a, g.len()), g);
                let n = self.value(*b).numel();
                let gb = slot(grads, *b, n);
                for row in g.chunks(n) {
                    add_into(gb, row);
                }
            }
            Op::Relu(a) => {
                let x = self.value(*a).data();
                let ga = slot(grads, *a, g.len());
                for ((o, &gv), &xv) in ga.iter_mut().zip(g).zip(x) {
                    if xv > 0.0 {
                        *o += gv;
                    }
                }
            }
            Op::Scale(a, f) => {
                let ga = slot(grads, *a, g.len());
                for (o, &gv) in ga.iter_mut().zip(g) {
                    *o += f * gv;
                }
            }
            Op::Gather { table, ids } => {
                let t = self.value(*table);
                let d = t.cols();
                let gt = slot(grads, *table, t.numel());
                for (r, &id) in ids.iter().enumerate() {
                    add_into(&mut gt[id * d..(id + 1) * d], &g[r * d..(r + 1) * d]);
                }
            }
            Op::LayerNorm { x, gain, bias, means, rstds } => {
                let xt = self.value(*x);
                let gain_v = self.value(*gain).data();
                let d = xt.cols();
                let mut dgain = vec![0.0; d];
                let mut dbias = vec![0.0; d];
                let mut dx = vec![0.0; xt.numel()];
                let mut xhat = vec![0.0; d];
                let mut dxhat = vec![0.0; d];
                for r in 0..xt.rows() {
                    let xr = xt.row(r);
                    let gr = &g[r * d..(r + 1) * d];
                    let (mean, rstd) = (means[r], rstds[r]);
                    for j in 0..d {
                        xhat[j] = (xr[j] - mean) * rstd;
                        dxhat[j] = gr[j] * gain_v[j];
                        dgain[j] += gr[j] * xhat[j];
                        dbias[j] += gr[j];
                    }
                    let mean_dxhat = dxhat.iter().sum::<f64>() / d as f64;
                    let mean_dxhat_xhat = dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                    let out = &mut dx[r * d..(r + 1) * d];
                    for j in 0..d {
                        out[j] = rstd * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                    }
                }
                add_into(slot(grads, *x, dx.len()), &dx);
                add_into(slot(grads, *gain, d), &dgain);
                add_into(slot(grads, *bias, d), &dbias);
            }
            Op::SoftmaxRows(x) => {
                let y = node.value.data();
                let d = node.value.cols();
                let gx = slot(grads, *x, y.len());
                for ((yr, gr), out) in y.chunks(d).zip(g.chunks(d)).zip(gx.chunks_mut(d)) {
                    let inner = kernels::dot(yr, gr);
                    for j in 0..d {
                        out[j] += yr[j] * (gr[j] - inner);
                    }
                }
            }
            Op::Attention { q, k, v, shape, probs } => {
                let (qt, kt, vt) = (self.value(*q), self.value(*k), self.value(*v));
                let mut dq = vec![0.0; qt.numel()];
                let mut dk = vec![0.0; kt.numel()];
                let mut dv = vec![0.0; vt.numel()];
                kernels::attention_backward(
                    qt.data(),
                    kt.data(),
                    vt.data(),
                    probs,
                    g,
                    shape,
                    &mut dq,
                    &mut dk,
                    &mut dv,
                );
                add_into(slot(grads, *q, dq.len()), &dq);
                add_into(slot(grads, *k, dk.len()), &dk);
                add_into(slot(grads, *v, dv.len()), &dv);
            }
            Op::MeanRows { x, rows } => {
                let t = self.value(*x);
                let d = t.cols();
                let inv = 1.0 / rows.len() as f64;
                let gx = slot(grads, *x, t.numel());
                for &r in rows {
                    for (o, &gv) in gx[r * d..(r + 1) * d].iter_mut().zip(g) {
                        *o += gv * inv;
                    }
                }
            }
            Op::CrossEntropy { logits, targets, ignore, probs } => {
                let l = self.value(*logits);
                let v = l.cols();
                let count = targets.iter().filter(|&&t| t != *ignore).count() as f64;
                let scale = g[0] / count;
                let gl = slot(grads, *logits, l.numel());
                for (r, &t) in targets.iter().enumerate() {
                    if t == *ignore {
                        continue;
                    }
                    let pr = &probs[r * v..(r + 1) * v];
                    let out = &mut gl[r * v..(r + 1) * v];
                    for j in 0..v {
                        out[j] += scale * pr[j];
                    }
                    out[t] -= scale;
                }
            }
            Op::Mse(p, t) => {
                let (pt, tt) = (self.value(*p), self.value(*t));
                let n = pt.numel() as f64;
                let diff: Vec<f64> = pt.data().iter().zip(tt.data()).map(|(a, b)| 2.0 * (a - b) / n * g[0]).collect();
                add_into(slot(grads, *p, diff.len()), &diff);
                let neg: Vec<f64> = diff.iter().map(|x| -x).collect();
                add_into(slot(grads, *t, neg.len()), &neg);
            }
            Op::Dropout { x, mask } => {
                let gx = slot(grads, *x, g.len());
                for ((o, &gv), &m) in gx.iter_mut().zip(g).zip(mask) {
                    *o += gv * m;
                }
            }
            Op::Reshape(x) => add_into(slot(grads, *x, g.len()), g),
        }
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut [f64] {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central finite differences of `f` at `x`.
    fn numeric_grad(x: &Tensor, f: &dyn Fn(&Tensor) -> f64) -> Vec<f64> {
        let h = 1e-5;
        (0..x.numel())
            .map(|i| {
                let mut plus = x.clone();
                plus.data_mut()[i] += h;
                let mut minus = x.clone();
                minus.data_mut()[i] -= h;
                (f(&plus) - f(&minus)) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    /// Projects the output of `build` on a fixed random weighting to get a
    /// scalar, then compares tape gradients of every input with finite
    /// differences.
    fn check(inputs: Vec<Tensor>, build: &dyn Fn(&mut Tape, &[Var]) -> Var, tol: f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let probe = {
            let mut t = Tape::new();
            let vars: Vec<Var> = inputs.iter().map(|x| t.leaf(x.clone())).collect();
            let out = build(&mut t, &vars);
            Tensor::randn(t.value(out).shape(), 1.0, &mut rng)
        };
        let scalar = |xs: &[Tensor]| -> f64 {
            let mut t = Tape::new();
            let vars: Vec<Var> = xs.iter().map(|x| t.leaf(x.clone())).collect();
            let out = build(&mut t, &vars);
            kernels::dot(t.value(out).data(), probe.data())
        };
        let mut t = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|x| t.leaf(x.clone())).collect();
        let out = build(&mut t, &vars);
        let n = t.value(out).numel();
        let row = t.reshape(out, &[1, n]).unwrap();
        let col = t.leaf(Tensor::new(vec![n, 1], probe.data().to_vec()).unwrap());
        let s = t.matmul(row, col).unwrap();
        let grads = t.backward(s).unwrap();
        for (idx, v) in vars.iter().enumerate() {
            let analytic = grads.get(*v).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; inputs[idx].numel()]);
            let numeric = numeric_grad(&inputs[idx], &|x| {
                let mut xs = inputs.clone();
                xs[idx] = x.clone();
                scalar(&xs)
            });
            let e = rel_err(&analytic, &numeric);
            assert!(e < tol, "input {idx}: relative error {e:e}");
        }
    }

    fn rand(shape: &[usize], seed: u64) -> Tensor {
        Tensor::randn(shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn matmul_gradient() {
        check(vec![rand(&[3, 4], 1), rand(&[4, 2], 2)], &|t, v| t.matmul(v[0], v[1]).unwrap(), 1e-6);
    }

    #[test]
    fn affine_relu_scale_gradient() {
        check(
            vec![rand(&[3, 4], 3), rand(&[4, 5], 4), rand(&[5], 5)],
            &|t, v| {
                let y = t.affine(v[0], v[1], v[2]).unwrap();
                let r = t.relu(y);
                t.scale(r, 0.7)
            },
            1e-4,
        );
    }

    #[test]
    fn layer_norm_gradient() {
        check(
            vec![rand(&[3, 6], 6), rand(&[6], 7), rand(&[6], 8)],
            &|t, v| t.layer_norm(v[0], v[1], v[2], 1e-5).unwrap(),
            1e-5,
        );
    }

    #[test]
    fn softmax_gradient() {
        check(vec![rand(&[3, 5], 9)], &|t, v| t.softmax_rows(v[0]).unwrap(), 1e-4);
    }

    #[test]
    fn attention_gradient() {
        for causal in [false, true] {
            check(
                vec![rand(&[4, 6], 10), rand(&[4, 6], 11), rand(&[4, 6], 12)],
                &|t, v| t.attention(v[0], v[1], v[2], 2, causal, None).unwrap(),
                1e-4,
            );
        }
        let mask = [true, false, true, true, false];
        check(
            vec![rand(&[2, 4], 13), rand(&[5, 4], 14), rand(&[5, 4], 15)],
            &|t, v| t.attention(v[0], v[1], v[2], 2, false, Some(&mask)).unwrap(),
            1e-4,
        );
    }

    #[test]
    fn gather_and_mean_rows_gradient() {
        check(
            vec![rand(&[5, 3], 16)],
            &|t, v| {
                let g = t.gather(v[0], &[4, 1, 1, 0]).unwrap();
                t.mean_rows(g, &[0, 1, 3]).unwrap()
            },
            1e-4,
        );
    }

    #[test]
    fn losses_gradient() {
        check(vec![rand(&[4, 7], 17)], &|t, v| t.cross_entropy(v[0], &[3, 0, 6, 2], 0).unwrap(), 1e-4);
        check(vec![rand(&[1, 3], 18), rand(&[1, 3], 19)], &|t, v| t.mse(v[0], v[1]).unwrap(), 1e-4);
    }

    #[test]
    fn mse_gradient_is_two_diff_over_n() {
        let mut t = Tape::new();
        let p = t.leaf(Tensor::new(vec![2], vec![3.0, -1.0]).unwrap());
        let q = t.leaf(Tensor::new(vec![2], vec![1.0, 1.0]).unwrap());
        let l = t.mse(p, q).unwrap();
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(p).unwrap(), &[2.0, -2.0]);
    }

    #[test]
    fn cross_entropy_matches_log_softmax_recomputation() {
        let logits = rand(&[6, 9], 20);
        let targets = [1usize, 8, 0, 4, 4, 2];
        let mut t = Tape::new();
        let v = t.leaf(logits.clone());
        let l = t.cross_entropy(v, &targets, 0).unwrap();
        let mut total = 0.0;
        let mut n = 0.0;
        for (r, &y) in targets.iter().enumerate() {
            if y == 0 {
                continue;
            }
            let row = logits.row(r);
            let lse = row.iter().map(|x| x.exp()).sum::<f64>().ln();
            total += lse - row[y];
            n += 1.0;
        }
        assert!((t.value(l).item() - total / n).abs() < 1e-10);
    }

    #[test]
    fn param_grads_accumulate_repeated_use() {
        let w = Tensor::new(vec![1, 1], vec![2.0]).unwrap();
        let mut t = Tape::new();
        let a = t.param(0, &w);
        let b = t.param(0, &w);
        let y = t.matmul(a, b).unwrap();
        let g = t.backward(y).unwrap();
        let pg = t.param_grads(&g, 2);
        assert_eq!(pg[0].as_deref(), Some(&[4.0][..]));
        assert!(pg[1].is_none());
    }
}
