//! Forward/backward kernels shared by the autodiff graph and the
//! tape-free inference path.

use crate::scalar::Scalar;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// Per-row layer normalization. Writes `y` and returns `(xhat, rstd)` caches.
pub fn layer_norm_forward<T: Scalar>(
    x: &[T],
    cols: usize,
    gain: &[T],
    bias: &[T],
    eps: f64,
    y: &mut [T],
) -> (Vec<T>, Vec<T>) {
    let rows = x.len() / cols;
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); rows];
    let n = T::of(cols as f64);
    let eps = T::of(eps);
    for r in 0..rows {
        let xs = &x[r * cols..(r + 1) * cols];
        let mean = xs.iter().copied().sum::<T>() / n;
        let var = xs.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
        let rs = T::one() / (var + eps).sqrt();
        rstd[r] = rs;
        for c in 0..cols {
            let h = (xs[c] - mean) * rs;
            xhat[r * cols + c] = h;
            y[r * cols + c] = h * gain[c] + bias[c];
        }
    }
    (xhat, rstd)
}

/// Layer-norm backward. Accumulates into the provided gradient buffers
/// (any of which may be `None` when not needed).
#[allow(clippy::too_many_arguments)]
pub fn layer_norm_backward<T: Scalar>(
    dy: &[T],
    cols: usize,
    xhat: &[T],
    rstd: &[T],
    gain: &[T],
    dx: Option<&mut [T]>,
    dgain: Option<&mut [T]>,
    dbias: Option<&mut [T]>,
) {
    let rows = dy.len() / cols;
    if let Some(dg) = dgain {
        for r in 0..rows {
            for c in 0..cols {
                dg[c] += dy[r * cols + c] * xhat[r * cols + c];
            }
        }
    }
    if let Some(db) = dbias {
        for r in 0..rows {
            for c in 0..cols {
                db[c] += dy[r * cols + c];
            }
        }
    }
    if let Some(dx) = dx {
        let n = T::of(cols as f64);
        let mut dxhat = vec![T::zero(); cols];
        for r in 0..rows {
            let mut mean_d = T::zero();
            let mut mean_dx = T::zero();
            for c in 0..cols {
                let d = dy[r * cols + c] * gain[c];
                dxhat[c] = d;
                mean_d += d;
                mean_dx += d * xhat[r * cols + c];
            }
            mean_d /= n;
            mean_dx /= n;
            for c in 0..cols {
                dx[r * cols + c] +=
                    rstd[r] * (dxhat[c] - mean_d - xhat[r * cols + c] * mean_dx);
            }
        }
    }
}

/// Tanh-approximated GELU.
pub fn gelu<T: Scalar>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let half = T::of(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let half = T::of(0.5);
    let three = T::of(3.0);
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + three * a * x * x)
}

/// Geometry of a multi-head attention call. Queries are `batch*tq` rows,
/// keys/values are `batch*tk` rows, all with `heads*head_dim` columns.
#[derive(Clone, Debug)]
pub struct AttnLayout {
    pub batch: usize,
    pub heads: usize,
    pub tq: usize,
    pub tk: usize,
    pub head_dim: usize,
    pub causal: bool,
    /// `batch*tk` flags; `true` marks a padded (masked) key.
    pub key_pad: Vec<bool>,
    /// Absolute position of query 0 (for causal masking with a key cache).
    pub query_offset: usize,
}

impl AttnLayout {
    pub fn width(&self) -> usize {
        self.heads * self.head_dim
    }

    fn allowed(&self, b: usize, i: usize, j: usize) -> bool {
        !self.key_pad[b * self.tk + j] && (!self.causal || j <= i + self.query_offset)
    }
}

/// Scaled dot-product attention. Returns attention probabilities laid out
/// as `[batch, heads, tq, tk]`. If `drop_mask` is given it multiplies the
/// probabilities before they weight the values.
pub fn attention_forward<T: Scalar>(
    q: &[T],
    k: &[T],
    v: &[T],
    layout: &AttnLayout,
    drop_mask: Option<&[T]>,
    out: &mut [T],
) -> Vec<T> {
    let AttnLayout { batch, heads, tq, tk, head_dim, .. } = *layout;
    let w = layout.width();
    let scale = T::of(1.0 / (head_dim as f64).sqrt());
    let mut probs = vec![T::zero(); batch * heads * tq * tk];
    let mut scores = vec![T::zero(); tk];
    for b in 0..batch {
        for h in 0..heads {
            let col = h * head_dim;
            for i in 0..tq {
                let qrow = &q[(b * tq + i) * w + col..(b * tq + i) * w + col + head_dim];
                let mut max = T::neg_infinity();
                for j in 0..tk {
                    if layout.allowed(b, i, j) {
                        let krow = &k[(b * tk + j) * w + col..(b * tk + j) * w + col + head_dim];
                        let s = dot(qrow, krow) * scale;
                        scores[j] = s;
                        if s > max {
                            max = s;
                        }
                    } else {
                        scores[j] = T::neg_infinity();
                    }
                }
                let base = ((b * heads + h) * tq + i) * tk;
                let mut z = T::zero();
                for j in 0..tk {
                    let e = if scores[j] == T::neg_infinity() { T::zero() } else { (scores[j] - max).exp() };
                    probs[base + j] = e;
                    z += e;
                }
                let orow = &mut out[(b * tq + i) * w + col..(b * tq + i) * w + col + head_dim];
                orow.iter_mut().for_each(|x| *x = T::zero());
                if z > T::zero() {
                    for j in 0..tk {
                        probs[base + j] /= z;
                    }
                }
                for j in 0..tk {
                    let mut p = probs[base + j];
                    if let Some(m) = drop_mask {
                        p *= m[base + j];
                    }
                    if p != T::zero() {
                        let vrow = &v[(b * tk + j) * w + col..(b * tk + j) * w + col + head_dim];
                        for d in 0..head_dim {
                            orow[d] += p * vrow[d];
                        }
                    }
                }
            }
        }
    }
    probs
}

/// Attention backward. Accumulates into `dq`, `dk`, `dv` when given.
#[allow(clippy::too_many_arguments)]
pub fn attention_backward<T: Scalar>(
    dout: &[T],
    q: &[T],
    k: &[T],
    v: &[T],
    probs: &[T],
    drop_mask: Option<&[T]>,
    layout: &AttnLayout,
    mut dq: Option<&mut [T]>,
    mut dk: Option<&mut [T]>,
    mut dv: Option<&mut [T]>,
) {
    let AttnLayout { batch, heads, tq, tk, head_dim, .. } = *layout;
    let w = layout.width();
    let scale = T::of(1.0 / (head_dim as f64).sqrt());
    let mut dp = vec![T::zero(); tk];
    for b in 0..batch {
        for h in 0..heads {
            let col = h * head_dim;
            for i in 0..tq {
                let base = ((b * heads + h) * tq + i) * tk;
                let drow = &dout[(b * tq + i) * w + col..(b * tq + i) * w + col + head_dim];
                // dP (post-dropout) = dO · V^T, dV += P_drop^T · dO
                for j in 0..tk {
                    let p = probs[base + j];
                    if p == T::zero() {
                        dp[j] = T::zero();
                        continue;
                    }
                    let m = drop_mask.map_or(T::one(), |m| m[base + j]);
                    let vrow = &v[(b * tk + j) * w + col..(b * tk + j) * w + col + head_dim];
                    dp[j] = dot(drow, vrow) * m;
                    if let Some(dv) = dv.as_deref_mut() {
                        let pd = p * m;
                        let dvrow = &mut dv[(b * tk + j) * w + col..(b * tk + j) * w + col + head_dim];
                        for d in 0..head_dim {
                            dvrow[d] += pd * drow[d];
                        }
                    }
                }
                let mut row_dot = T::zero();
                for j in 0..tk {
                    row_dot += dp[j] * probs[base + j];
                }
                for j in 0..tk {
                    let p = probs[base + j];
                    if p == T::zero() {
                        continue;
                    }
                    let ds = p * (dp[j] - row_dot) * scale;
                    if let Some(dq) = dq.as_deref_mut() {
                        let krow = &k[(b * tk + j) * w + col..(b * tk + j) * w + col + head_dim];
                        let dqrow = &mut dq[(b * tq + i) * w + col..(b * tq + i) * w + col + head_dim];
                        for d in 0..head_dim {
                            dqrow[d] += ds * krow[d];
                        }
                    }
                    if let Some(dk) = dk.as_deref_mut() {
                        let qrow = &q[(b * tq + i) * w + col..(b * tq + i) * w + col + head_dim];
                        let dkrow = &mut dk[(b * tk + j) * w + col..(b * tk + j) * w + col + head_dim];
                        for d in 0..head_dim {
                            dkrow[d] += ds * qrow[d];
                        }
                    }
                }
            }
        }
    }
}

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b) {
        s += *x * *y;
    }
    s
}

/// Numerically stable log-sum-exp of a row.
pub fn log_sum_exp<T: Scalar>(row: &[T]) -> T {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return max;
    }
    let s: T = row.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

/// In-place log-softmax of a row.
pub fn log_softmax_inplace<T: Scalar>(row: &mut [T]) {
    let lse = log_sum_exp(row);
    row.iter_mut().for_each(|x| *x -= lse);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_norm_of_pair_is_unit() {
        let x = [1.0f64, -1.0];
        let mut y = [0.0; 2];
        layer_norm_forward(&x, 2, &[1.0, 1.0], &[0.0, 0.0], 0.0, &mut y);
        assert_eq!(y, [1.0, -1.0]);
    }

    #[test]
    fn gelu_grad_matches_finite_difference() {
        for &x in &[-3.0f64, -0.5, 0.0, 0.7, 2.5] {
            let h = 1e-6;
            let num = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((num - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn causal_attention_ignores_future() {
        let layout = AttnLayout {
            batch: 1,
            heads: 1,
            tq: 3,
            tk: 3,
            head_dim: 2,
            causal: true,
            key_pad: vec![false; 3],
            query_offset: 0,
        };
        let q = [0.1f64, 0.2, 0.3, -0.1, 0.5, 0.5];
        let k = [0.3f64, 0.1, -0.2, 0.4, 0.0, 0.9];
        let mut v = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut o1 = [0.0; 6];
        attention_forward(&q, &k, &v, &layout, None, &mut o1);
        v[4] = 100.0;
        let mut o2 = [0.0; 6];
        attention_forward(&q, &k, &v, &layout, None, &mut o2);
        assert_eq!(o1[..4], o2[..4]);
        assert_eq!(o1[0..2], [1.0, 2.0]);
    }
}
