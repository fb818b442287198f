//! Slice-level numerical kernels shared by the tape and the incremental
//! inference path. Each output row depends only on its own input row (plus
//! the shared right-hand operands), so computing one row at a time produces
//! exactly the same bits as computing the whole matrix.

use crate::error::{Error, Result};

/// `a[m×k] · b[k×n]`.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    matmul_acc(a, b, m, k, n, &mut out);
    out
}

/// `out += a[m×k] · b[k×n]`.
pub fn matmul_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out += aᵀ · b` for `a[m×k]`, `b[m×n]`, giving `[k×n]`.
pub fn matmul_at_b_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), k * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out += a · bᵀ` for `a[m×n]`, `b[k×n]`, giving `[m×k]`.
pub fn matmul_a_bt_acc(a: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), m * k);
    let mut bt = vec![0.0; n * k];
    for j in 0..k {
        for p in 0..n {
            bt[p * k + j] = b[j * n + p];
        }
    }
    matmul_acc(a, &bt, m, n, k, out);
}

/// Dot product with four interleaved partial sums.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (ca, cb) = (a[..n].chunks_exact(4), b[..n].chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    let mut acc = [0.0; 4];
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// Numerically stable softmax of one row, in place.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = 1.0 / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

/// Row-wise layer normalisation. Returns `(output, mean, inverse std)`.
pub fn layer_norm_rows(x: &[f64], gain: &[f64], bias: &[f64], d: usize, eps: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let rows = x.len() / d;
    let mut out = vec![0.0; x.len()];
    let mut means = Vec::with_capacity(rows);
    let mut rstds = Vec::with_capacity(rows);
    for (xr, or) in x.chunks(d).zip(out.chunks_mut(d)) {
        let mean = xr.iter().sum::<f64>() / d as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rstd = 1.0 / (var + eps).sqrt();
        for j in 0..d {
            or[j] = (xr[j] - mean) * rstd * gain[j] + bias[j];
        }
        means.push(mean);
        rstds.push(rstd);
    }
    (out, means, rstds)
}

/// Attention geometry shared by forward and backward.
#[derive(Debug, Clone)]
pub struct AttnShape {
    pub tq: usize,
    pub tk: usize,
    pub d: usize,
    pub heads: usize,
    /// When set, query `i` sees keys `0..=i + offset` where
    /// `offset = tk - tq`.
    pub causal: bool,
}

impl AttnShape {
    fn head_dim(&self) -> usize {
        self.d / self.heads
    }

    /// Number of keys visible to query `i`.
    #[inline]
    fn visible(&self, i: usize) -> usize {
        if self.causal {
            i + (self.tk - self.tq) + 1
        } else {
            self.tk
        }
    }
}

/// Multi-head scaled dot-product attention over packed `[t×d]` inputs.
///
/// Masked keys (causal or `key_mask[j] == false`) are skipped entirely, not
/// added as `-inf`. Returns the output `[tq×d]` and the attention
/// probabilities `[heads×tq×tk]` (zero where masked).
pub fn attention(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    shape: &AttnShape,
    key_mask: Option<&[bool]>,
) -> (Vec<f64>, Vec<f64>) {
    let AttnShape { tq, tk, d, heads, .. } = *shape;
    let dh = shape.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = vec![0.0; tq * d];
    let mut probs = vec![0.0; heads * tq * tk];
    let mut scores = vec![0.0; tk];
    let mut keep = Vec::with_capacity(tk);
    for h in 0..heads {
        let off = h * dh;
        for i in 0..tq {
            let qi = &q[i * d + off..i * d + off + dh];
            keep.clear();
            for j in 0..shape.visible(i) {
                if key_mask.is_none_or(|m| m[j]) {
                    keep.push(j);
                }
            }
            if keep.is_empty() {
                continue;
            }
            let sc = &mut scores[..keep.len()];
            for (s, &j) in sc.iter_mut().zip(&keep) {
                *s = dot(qi, &k[j * d + off..j * d + off + dh]) * scale;
            }
            softmax_in_place(sc);
            let prow = &mut probs[(h * tq + i) * tk..(h * tq + i + 1) * tk];
            let orow = &mut out[i * d + off..i * d + off + dh];
            for (&p, &j) in sc.iter().zip(&keep) {
                prow[j] = p;
                let vj = &v[j * d + off..j * d + off + dh];
                for (o, &vv) in orow.iter_mut().zip(vj) {
                    *o += p * vv;
                }
            }
        }
    }
    (out, probs)
}

/// Gradients of [`attention`] with respect to `q`, `k`, `v`, accumulated into
/// the provided buffers.
#[allow(clippy::too_many_arguments)]
pub fn attention_backward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    probs: &[f64],
    dout: &[f64],
    shape: &AttnShape,
    dq: &mut [f64],
    dk: &mut [f64],
    dv: &mut [f64],
) {
    let AttnShape { tq, tk, d, heads, .. } = *shape;
    let dh = shape.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dp = vec![0.0; tk];
    for h in 0..heads {
        let off = h * dh;
        for i in 0..tq {
            let prow = &probs[(h * tq + i) * tk..(h * tq + i + 1) * tk];
            let dorow = &dout[i * d + off..i * d + off + dh];
            let vis = shape.visible(i);
            let mut weighted = 0.0;
            for j in 0..vis {
                if prow[j] == 0.0 {
                    dp[j] = 0.0;
                    continue;
                }
                let vj = &v[j * d + off..j * d + off + dh];
                dp[j] = dot(dorow, vj);
                weighted += prow[j] * dp[j];
                let dvj = &mut dv[j * d + off..j * d + off + dh];
                for (g, &x) in dvj.iter_mut().zip(dorow) {
                    *g += prow[j] * x;
                }
            }
            let qi = &q[i * d + off..i * d + off + dh];
            for j in 0..vis {
                if prow[j] == 0.0 {
                    continue;
                }
                let ds = prow[j] * (dp[j] - weighted) * scale;
                let kj = &k[j * d + off..j * d + off + dh];
                let dqi = &mut dq[i * d + off..i * d + off + dh];
                for (g, &x) in dqi.iter_mut().zip(kj) {
                    *g += ds * x;
                }
                let dkj = &mut dk[j * d + off..j * d + off + dh];
                for (g, &x) in dkj.iter_mut().zip(qi) {
                    *g += ds * x;
                }
            }
        }
    }
}

/// Mean NLL over non-ignored rows plus the softmax probabilities for backward.
pub fn cross_entropy(logits: &[f64], vocab: usize, targets: &[usize], ignore_id: usize) -> Result<(f64, Vec<f64>)> {
    let rows = logits.len() / vocab;
    if targets.len() != rows {
        return Err(Error::Dimension(format!("cross_entropy: {} targets for {rows} logit rows", targets.len())));
    }
    let mut probs = logits.to_vec();
    let mut total = 0.0;
    let mut count = 0usize;
    for (row, &t) in probs.chunks_mut(vocab).zip(targets) {
        if t == ignore_id {
            continue;
        }
        if t >= vocab {
            return Err(Error::Parameter(format!("target id {t} outside vocabulary of {vocab}")));
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        total += lse - row[t];
        count += 1;
        for v in row.iter_mut() {
            *v = (*v - lse).exp();
        }
    }
    if count == 0 {
        return Err(Error::Parameter("cross_entropy: every position is ignored".into()));
    }
    Ok((total / count as f64, probs))
}

pub fn mse(pred: &[f64], target: &[f64]) -> f64 {
    let n = pred.len() as f64;
    pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n
}

/// Natural log of the softmax of one row.
pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    row.iter().map(|v| v - lse).collect()
}
