//! Forward and backward passes of the building blocks. Activations are
//! row-major `[positions, features]` matrices.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};

use crate::Scalar;

pub(crate) const NORM_EPS: f64 = 1e-5;

pub(crate) fn linear<T: Scalar>(x: &Array2<T>, w: ArrayView2<T>, b: ArrayView1<T>) -> Array2<T> {
    let mut y = x.dot(&w);
    y += &b;
    y
}

/// Accumulates weight and bias gradients and returns the input gradient.
pub(crate) fn linear_backward<T: Scalar>(
    x: &Array2<T>,
    w: ArrayView2<T>,
    dy: &Array2<T>,
    mut gw: ArrayViewMut2<T>,
    mut gb: ArrayViewMut1<T>,
) -> Array2<T> {
    general_mat_mul(T::one(), &x.t(), dy, T::one(), &mut gw);
    gb += &dy.sum_axis(Axis(0));
    dy.dot(&w.t())
}

pub(crate) struct NormCache<T> {
    xhat: Array2<T>,
    inv_std: Array1<T>,
}

pub(crate) fn layer_norm<T: Scalar>(
    x: &Array2<T>,
    gain: ArrayView1<T>,
    bias: ArrayView1<T>,
) -> (Array2<T>, NormCache<T>) {
    let n = T::lit(x.ncols() as f64);
    let eps = T::lit(NORM_EPS);
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, inv) in xhat.rows_mut().into_iter().zip(inv_std.iter_mut()) {
        let mean = row.sum() / n;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|&v| v * v).sum::<T>() / n;
        *inv = T::one() / (var + eps).sqrt();
        let s = *inv;
        row.mapv_inplace(|v| v * s);
    }
    let mut y = &xhat * &gain;
    y += &bias;
    (y, NormCache { xhat, inv_std })
}

pub(crate) fn layer_norm_backward<T: Scalar>(
    cache: &NormCache<T>,
    gain: ArrayView1<T>,
    dy: &Array2<T>,
    mut ggain: ArrayViewMut1<T>,
    mut gbias: ArrayViewMut1<T>,
) -> Array2<T> {
    ggain += &(dy * &cache.xhat).sum_axis(Axis(0));
    gbias += &dy.sum_axis(Axis(0));
    let n = T::lit(dy.ncols() as f64);
    let mut dx = dy * &gain;
    for ((mut row, xhat), &inv) in dx.rows_mut().into_iter().zip(cache.xhat.rows()).zip(&cache.inv_std) {
        let mean_d = row.sum() / n;
        let mean_dx = row.iter().zip(xhat).map(|(&a, &b)| a * b).sum::<T>() / n;
        for (v, &h) in row.iter_mut().zip(xhat) {
            *v = inv * (*v - mean_d - h * mean_dx);
        }
    }
    dx
}

const GELU_C: f64 = 0.044_715;

fn gelu_k<T: Scalar>() -> T {
    T::lit((2.0 / std::f64::consts::PI).sqrt())
}

/// Tanh approximation of GELU.
pub(crate) fn gelu<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    half * x * (T::one() + (gelu_k::<T>() * (x + T::lit(GELU_C) * x * x * x)).tanh())
}

pub(crate) fn gelu_grad<T: Scalar>(x: T) -> T {
    let half = T::lit(0.5);
    let k = gelu_k::<T>();
    let t = (k * (x + T::lit(GELU_C) * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * k * (T::one() + T::lit(3.0 * GELU_C) * x * x)
}

/// Row-wise softmax. With `causal`, row `i` only covers columns `0..=i` and
/// the rest are exactly 0.
pub(crate) fn softmax_rows<T: Scalar>(scores: &mut Array2<T>, causal: bool) {
    for (i, mut row) in scores.rows_mut().into_iter().enumerate() {
        let live = if causal { i + 1 } else { row.len() };
        let mut head = row.slice_mut(s![..live]);
        let max = head.iter().copied().fold(T::neg_infinity(), T::max);
        head.mapv_inplace(|v| (v - max).exp());
        let total = head.sum();
        head.mapv_inplace(|v| v / total);
        row.slice_mut(s![live..]).fill(T::zero());
    }
}

/// Log-softmax of each row.
pub(crate) fn log_softmax_rows<T: Scalar>(logits: &Array2<T>) -> Array2<T> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
        row.mapv_inplace(|v| v - lse);
    }
    out
}

pub(crate) struct AttnCache<T> {
    xq: Array2<T>,
    xkv: Option<Array2<T>>,
    q: Array2<T>,
    k: Array2<T>,
    v: Array2<T>,
    probs: Vec<Array2<T>>,
    ctx: Array2<T>,
}

pub(crate) struct AttnWeights<'a, T> {
    pub wq: ArrayView2<'a, T>,
    pub bq: ArrayView1<'a, T>,
    pub wk: ArrayView2<'a, T>,
    pub bk: ArrayView1<'a, T>,
    pub wv: ArrayView2<'a, T>,
    pub bv: ArrayView1<'a, T>,
    pub wo: ArrayView2<'a, T>,
    pub bo: ArrayView1<'a, T>,
}

/// Multi-head scaled dot-product attention. `xkv = None` means self-attention.
pub(crate) fn attention<T: Scalar>(
    w: &AttnWeights<T>,
    heads: usize,
    xq: &Array2<T>,
    xkv: Option<&Array2<T>>,
    causal: bool,
) -> (Array2<T>, AttnCache<T>) {
    let src = xkv.unwrap_or(xq);
    let q = linear(xq, w.wq, w.bq);
    let k = linear(src, w.wk, w.bk);
    let v = linear(src, w.wv, w.bv);
    let dh = q.ncols() / heads;
    let scale = T::one() / T::lit(dh as f64).sqrt();
    let mut ctx = Array2::zeros((q.nrows(), q.ncols()));
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t());
        scores.mapv_inplace(|x| x * scale);
        softmax_rows(&mut scores, causal);
        ctx.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
        probs.push(scores);
    }
    let out = linear(&ctx, w.wo, w.bo);
    (out, AttnCache { xq: xq.clone(), xkv: xkv.cloned(), q, k, v, probs, ctx })
}

pub(crate) struct AttnGrads<'a, T> {
    pub wq: ArrayViewMut2<'a, T>,
    pub bq: ArrayViewMut1<'a, T>,
    pub wk: ArrayViewMut2<'a, T>,
    pub bk: ArrayViewMut1<'a, T>,
    pub wv: ArrayViewMut2<'a, T>,
    pub bv: ArrayViewMut1<'a, T>,
    pub wo: ArrayViewMut2<'a, T>,
    pub bo: ArrayViewMut1<'a, T>,
}

/// Returns `(d xq, d xkv)`; for self-attention the two must be summed by
/// the caller.
pub(crate) fn attention_backward<T: Scalar>(
    w: &AttnWeights<T>,
    g: AttnGrads<T>,
    cache: &AttnCache<T>,
    dout: &Array2<T>,
) -> (Array2<T>, Array2<T>) {
    let heads = cache.probs.len();
    let dh = cache.q.ncols() / heads;
    let scale = T::one() / T::lit(dh as f64).sqrt();
    let dctx = linear_backward(&cache.ctx, w.wo, dout, g.wo, g.bo);
    let mut dq = Array2::zeros(cache.q.raw_dim());
    let mut dk = Array2::zeros(cache.k.raw_dim());
    let mut dv = Array2::zeros(cache.v.raw_dim());
    for (h, p) in cache.probs.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let dctx_h = dctx.slice(cols);
        dv.slice_mut(cols).assign(&p.t().dot(&dctx_h));
        let dp = dctx_h.dot(&cache.v.slice(cols).t());
        // softmax backward: ds = p * (dp - rowsum(dp * p))
        let mut ds = &dp * p;
        for (mut row, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
            let total = row.sum();
            for (d, &pv) in row.iter_mut().zip(prow) {
                *d -= pv * total;
            }
        }
        ds.mapv_inplace(|x| x * scale);
        dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
        dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
    }
    let src = cache.xkv.as_ref().unwrap_or(&cache.xq);
    let dxq = linear_backward(&cache.xq, w.wq, &dq, g.wq, g.bq);
    let mut dxkv = linear_backward(src, w.wk, &dk, g.wk, g.bk);
    dxkv += &linear_backward(src, w.wv, &dv, g.wv, g.bv);
    (dxq, dxkv)
}

pub(crate) struct FfCache<T> {
    x: Array2<T>,
    pre: Array2<T>,
    act: Array2<T>,
}

pub(crate) fn feedforward<T: Scalar>(
    x: &Array2<T>,
    w1: ArrayView2<T>,
    b1: ArrayView1<T>,
    w2: ArrayView2<T>,
    b2: ArrayView1<T>,
) -> (Array2<T>, FfCache<T>) {
    let pre = linear(x, w1, b1);
    let act = pre.mapv(gelu);
    let out = linear(&act, w2, b2);
    (out, FfCache { x: x.clone(), pre, act })
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn feedforward_backward<T: Scalar>(
    cache: &FfCache<T>,
    w1: ArrayView2<T>,
    w2: ArrayView2<T>,
    dout: &Array2<T>,
    gw1: ArrayViewMut2<T>,
    gb1: ArrayViewMut1<T>,
    gw2: ArrayViewMut2<T>,
    gb2: ArrayViewMut1<T>,
) -> Array2<T> {
    let mut dact = linear_backward(&cache.act, w2, dout, gw2, gb2);
    dact.zip_mut_with(&cache.pre, |d, &p| *d *= gelu_grad(p));
    linear_backward(&cache.x, w1, &dact, gw1, gb1)
}
