//! Pre-norm transformer encoder-decoder with hand-written backward pass.

use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{
    attention, attention_backward, feedforward, feedforward_backward, layer_norm, layer_norm_backward, linear,
    linear_backward, log_softmax_rows, AttnCache, AttnGrads, AttnWeights, FfCache, NormCache,
};
use super::params::{AttnIds, FfIds, Layout, NormIds};
use super::{ForwardMode, ModelError, TransducerModel};
use crate::tokenizer::{BOS_ID, EOS_ID};
use crate::Scalar;

type Mask<T> = Option<Array2<T>>;

struct EmbedCache<T> {
    ids: Vec<u32>,
    pos_in: Option<Array2<T>>,
    drop: Mask<T>,
}

struct EncoderLayerCache<T> {
    norm_attn: NormCache<T>,
    attn: AttnCache<T>,
    drop_attn: Mask<T>,
    norm_ff: NormCache<T>,
    ff: FfCache<T>,
    drop_ff: Mask<T>,
}

struct DecoderLayerCache<T> {
    norm_self: NormCache<T>,
    self_attn: AttnCache<T>,
    drop_self: Mask<T>,
    norm_cross: NormCache<T>,
    cross_attn: AttnCache<T>,
    drop_cross: Mask<T>,
    norm_ff: NormCache<T>,
    ff: FfCache<T>,
    drop_ff: Mask<T>,
}

pub(crate) struct Encoded<T> {
    pub out: Array2<T>,
    embed: EmbedCache<T>,
    layers: Vec<EncoderLayerCache<T>>,
    norm: NormCache<T>,
}

pub(crate) struct Decoded<T> {
    pub logits: Array2<T>,
    embed: EmbedCache<T>,
    layers: Vec<DecoderLayerCache<T>>,
    norm: NormCache<T>,
    normed: Array2<T>,
}

/// One forward evaluation: parameters plus the dropout stream.
pub(crate) struct Pass<'a, T> {
    model: &'a TransducerModel<T>,
    rng: Option<ChaCha8Rng>,
    dropout: f64,
}

fn attn_weights<'a, T>(layout: &Layout, p: &'a [T], ids: AttnIds) -> AttnWeights<'a, T> {
    AttnWeights {
        wq: layout.mat(p, ids.q.w),
        bq: layout.vec(p, ids.q.b),
        wk: layout.mat(p, ids.k.w),
        bk: layout.vec(p, ids.k.b),
        wv: layout.mat(p, ids.v.w),
        bv: layout.vec(p, ids.v.b),
        wo: layout.mat(p, ids.o.w),
        bo: layout.vec(p, ids.o.b),
    }
}

/// Splits the gradient buffer into the eight disjoint views of one attention block.
fn attn_grads<'a, T>(layout: &Layout, g: &'a mut [T], ids: AttnIds) -> AttnGrads<'a, T> {
    let mut pieces =
        split_disjoint(layout, g, &[ids.q.w, ids.q.b, ids.k.w, ids.k.b, ids.v.w, ids.v.b, ids.o.w, ids.o.b])
            .into_iter();
    let mut next = || pieces.next().expect("eight views");
    let mat = |s: &'a mut [T], rows: usize| {
        let cols = s.len() / rows;
        ndarray::ArrayViewMut2::from_shape((rows, cols), s).expect("2-d")
    };
    let d = layout.spec(ids.q.w).shape[0];
    AttnGrads {
        wq: mat(next(), d),
        bq: next().into(),
        wk: mat(next(), d),
        bk: next().into(),
        wv: mat(next(), d),
        bv: next().into(),
        wo: mat(next(), d),
        bo: next().into(),
    }
}

/// Mutable slices for parameters `ids`, which must be listed in layout order.
fn split_disjoint<'a, T>(layout: &Layout, mut g: &'a mut [T], ids: &[usize]) -> Vec<&'a mut [T]> {
    let mut consumed = 0;
    let mut out = Vec::with_capacity(ids.len());
    for &id in ids {
        let r = layout.spec(id).range();
        let rest = std::mem::take(&mut g);
        let (_, tail) = rest.split_at_mut(r.start - consumed);
        let (piece, tail) = tail.split_at_mut(r.len());
        out.push(piece);
        g = tail;
        consumed = r.end;
    }
    out
}

impl<'a, T: Scalar> Pass<'a, T> {
    pub fn new(model: &'a TransducerModel<T>, mode: ForwardMode) -> Self {
        let dropout = model.config.dropout;
        let rng = match mode {
            ForwardMode::Train { seed } if dropout > 0.0 => Some(ChaCha8Rng::seed_from_u64(seed)),
            _ => None,
        };
        Pass { model, rng, dropout }
    }

    fn layout(&self) -> &'a Layout {
        &self.model.layout
    }

    fn params(&self) -> &'a [T] {
        &self.model.params
    }

    fn drop(&mut self, x: &mut Array2<T>) -> Mask<T> {
        let rng = self.rng.as_mut()?;
        let keep = T::lit(1.0 / (1.0 - self.dropout));
        let p = self.dropout;
        let mask = Array2::from_shape_simple_fn(x.raw_dim(), || if rng.random::<f64>() < p { T::zero() } else { keep });
        *x *= &mask;
        Some(mask)
    }

    fn norm(&self, x: &Array2<T>, ids: NormIds) -> (Array2<T>, NormCache<T>) {
        let (l, p) = (self.layout(), self.params());
        layer_norm(x, l.vec(p, ids.gain), l.vec(p, ids.bias))
    }

    fn ff(&self, x: &Array2<T>, ids: FfIds) -> (Array2<T>, FfCache<T>) {
        let (l, p) = (self.layout(), self.params());
        feedforward(x, l.mat(p, ids.up.w), l.vec(p, ids.up.b), l.mat(p, ids.down.w), l.vec(p, ids.down.b))
    }

    fn attn(&self, x: &Array2<T>, kv: Option<&Array2<T>>, ids: AttnIds, causal: bool) -> (Array2<T>, AttnCache<T>) {
        let w = attn_weights(self.layout(), self.params(), ids);
        attention(&w, self.model.config.attention_heads, x, kv, causal)
    }

    fn embed(&mut self, ids: &[u32]) -> (Array2<T>, EmbedCache<T>) {
        let (l, p) = (self.layout(), self.params());
        let d = self.model.config.hidden_size;
        let scale = T::lit((d as f64).sqrt());
        let table = l.mat(p, l.tokens);
        let positions = l.mat(p, l.positions);
        let n = ids.len();
        let mut x = Array2::zeros((n, d));
        for (mut row, &id) in x.rows_mut().into_iter().zip(ids) {
            row.assign(&table.row(id as usize));
            row.mapv_inplace(|v| v * scale);
        }
        let pos_in = match l.pos_proj {
            Some(proj) => {
                let rows = positions.slice(ndarray::s![..n, ..]).to_owned();
                x += &linear(&rows, l.mat(p, proj.w), l.vec(p, proj.b));
                Some(rows)
            }
            None => {
                x += &positions.slice(ndarray::s![..n, ..]);
                None
            }
        };
        let drop = self.drop(&mut x);
        (x, EmbedCache { ids: ids.to_vec(), pos_in, drop })
    }

    pub fn encode(&mut self, src: &[u32]) -> Encoded<T> {
        let mut ids = src.to_vec();
        ids.push(EOS_ID);
        let (mut h, embed) = self.embed(&ids);
        let mut layers = Vec::with_capacity(self.layout().encoder.len());
        for ids in &self.layout().encoder {
            let (a, norm_attn) = self.norm(&h, ids.norm_attn);
            let (mut a, attn) = self.attn(&a, None, ids.attn, false);
            let drop_attn = self.drop(&mut a);
            h += &a;
            let (f, norm_ff) = self.norm(&h, ids.norm_ff);
            let (mut f, ff) = self.ff(&f, ids.ff);
            let drop_ff = self.drop(&mut f);
            h += &f;
            layers.push(EncoderLayerCache { norm_attn, attn, drop_attn, norm_ff, ff, drop_ff });
        }
        let (out, norm) = self.norm(&h, self.layout().encoder_norm);
        Encoded { out, embed, layers, norm }
    }

    /// Runs the decoder over `input` (which starts with BOS) against `enc`.
    pub fn decode(&mut self, enc: &Array2<T>, input: &[u32]) -> Decoded<T> {
        let (mut h, embed) = self.embed(input);
        let mut layers = Vec::with_capacity(self.layout().decoder.len());
        for ids in &self.layout().decoder {
            let (a, norm_self) = self.norm(&h, ids.norm_self);
            let (mut a, self_attn) = self.attn(&a, None, ids.self_attn, true);
            let drop_self = self.drop(&mut a);
            h += &a;
            let (c, norm_cross) = self.norm(&h, ids.norm_cross);
            let (mut c, cross_attn) = self.attn(&c, Some(enc), ids.cross_attn, false);
            let drop_cross = self.drop(&mut c);
            h += &c;
            let (f, norm_ff) = self.norm(&h, ids.norm_ff);
            let (mut f, ff) = self.ff(&f, ids.ff);
            let drop_ff = self.drop(&mut f);
            h += &f;
            layers.push(DecoderLayerCache {
                norm_self,
                self_attn,
                drop_self,
                norm_cross,
                cross_attn,
                drop_cross,
                norm_ff,
                ff,
                drop_ff,
            });
        }
        let (l, p) = (self.layout(), self.params());
        let (normed, norm) = self.norm(&h, l.decoder_norm);
        let logits = linear(&normed, l.mat(p, l.output.w), l.vec(p, l.output.b));
        Decoded { logits, embed, layers, norm, normed }
    }
}

fn apply_mask<T: Scalar>(d: &Array2<T>, mask: &Mask<T>) -> Array2<T> {
    match mask {
        Some(m) => d * m,
        None => d.clone(),
    }
}

/// Backward pass writing into a flat gradient buffer laid out like the parameters.
pub(crate) struct Backward<'a, T> {
    model: &'a TransducerModel<T>,
    grads: &'a mut [T],
}

impl<'a, T: Scalar> Backward<'a, T> {
    pub fn new(model: &'a TransducerModel<T>, grads: &'a mut [T]) -> Self {
        Self { model, grads }
    }

    fn norm(&mut self, cache: &NormCache<T>, ids: NormIds, dy: &Array2<T>) -> Array2<T> {
        let l = &self.model.layout;
        let gain = l.vec(&self.model.params, ids.gain);
        let mut parts = split_disjoint(l, self.grads, &[ids.gain, ids.bias]).into_iter();
        let gg = parts.next().expect("gain");
        let gb = parts.next().expect("bias");
        layer_norm_backward(cache, gain, dy, gg.into(), gb.into())
    }

    fn ff(&mut self, cache: &FfCache<T>, ids: FfIds, dy: &Array2<T>) -> Array2<T> {
        let l = &self.model.layout;
        let p = &self.model.params;
        let (w1, w2) = (l.mat(p, ids.up.w), l.mat(p, ids.down.w));
        let (d, f) = (w1.nrows(), w1.ncols());
        let mut parts = split_disjoint(l, self.grads, &[ids.up.w, ids.up.b, ids.down.w, ids.down.b]).into_iter();
        let gw1 = ndarray::ArrayViewMut2::from_shape((d, f), parts.next().expect("up.w")).expect("2-d");
        let gb1 = parts.next().expect("up.b").into();
        let gw2 = ndarray::ArrayViewMut2::from_shape((f, d), parts.next().expect("down.w")).expect("2-d");
        let gb2 = parts.next().expect("down.b").into();
        feedforward_backward(cache, w1, w2, dy, gw1, gb1, gw2, gb2)
    }

    fn attn(&mut self, cache: &AttnCache<T>, ids: AttnIds, dy: &Array2<T>) -> (Array2<T>, Array2<T>) {
        let w = attn_weights(&self.model.layout, &self.model.params, ids);
        let g = attn_grads(&self.model.layout, self.grads, ids);
        attention_backward(&w, g, cache, dy)
    }

    fn embed(&mut self, cache: &EmbedCache<T>, dx: &Array2<T>) {
        let l = &self.model.layout;
        let dx = apply_mask(dx, &cache.drop);
        let d = self.model.config.hidden_size;
        let scale = T::lit((d as f64).sqrt());
        {
            let mut table = l.mat_mut(self.grads, l.tokens);
            for (row, &id) in dx.rows().into_iter().zip(&cache.ids) {
                table.row_mut(id as usize).zip_mut_with(&row, |g, &v| *g += v * scale);
            }
        }
        let n = cache.ids.len();
        match (l.pos_proj, &cache.pos_in) {
            (Some(proj), Some(rows)) => {
                let w = l.mat(&self.model.params, proj.w);
                let (pd, hd) = (w.nrows(), w.ncols());
                let mut parts = split_disjoint(l, self.grads, &[l.positions, proj.w, proj.b]).into_iter();
                let gpos = parts.next().expect("positions");
                let gw = ndarray::ArrayViewMut2::from_shape((pd, hd), parts.next().expect("proj.w")).expect("2-d");
                let gb = parts.next().expect("proj.b").into();
                let drows = linear_backward(rows, w, &dx, gw, gb);
                let mut gpos = ndarray::ArrayViewMut2::from_shape((gpos.len() / pd, pd), gpos).expect("2-d");
                gpos.slice_mut(ndarray::s![..n, ..]).zip_mut_with(&drows, |g, &v| *g += v);
            }
            _ => {
                let mut gpos = l.mat_mut(self.grads, l.positions);
                gpos.slice_mut(ndarray::s![..n, ..]).zip_mut_with(&dx, |g, &v| *g += v);
            }
        }
    }

    /// Backpropagates `dlogits` through decoder and encoder.
    pub fn run(&mut self, enc: &Encoded<T>, dec: &Decoded<T>, dlogits: &Array2<T>) {
        let layout = &self.model.layout;
        let out = layout.output;
        let w_out = layout.mat(&self.model.params, out.w);
        let (d, v) = (w_out.nrows(), w_out.ncols());
        let dnormed = {
            let mut parts = split_disjoint(layout, self.grads, &[out.w, out.b]).into_iter();
            let gw = ndarray::ArrayViewMut2::from_shape((d, v), parts.next().expect("out.w")).expect("2-d");
            let gb = parts.next().expect("out.b").into();
            linear_backward(&dec.normed, w_out, dlogits, gw, gb)
        };
        let mut dh = self.norm(&dec.norm, layout.decoder_norm, &dnormed);
        let mut denc = Array2::zeros(enc.out.raw_dim());
        for (ids, c) in layout.decoder.iter().zip(&dec.layers).rev() {
            let df = self.ff(&c.ff, ids.ff, &apply_mask(&dh, &c.drop_ff));
            dh += &self.norm(&c.norm_ff, ids.norm_ff, &df);

            let (dq, dkv) = self.attn(&c.cross_attn, ids.cross_attn, &apply_mask(&dh, &c.drop_cross));
            denc += &dkv;
            dh += &self.norm(&c.norm_cross, ids.norm_cross, &dq);

            let (dq, dkv) = self.attn(&c.self_attn, ids.self_attn, &apply_mask(&dh, &c.drop_self));
            dh += &self.norm(&c.norm_self, ids.norm_self, &(dq + dkv));
        }
        self.embed(&dec.embed, &dh);

        let mut dh = self.norm(&enc.norm, layout.encoder_norm, &denc);
        for (ids, c) in layout.encoder.iter().zip(&enc.layers).rev() {
            let df = self.ff(&c.ff, ids.ff, &apply_mask(&dh, &c.drop_ff));
            dh += &self.norm(&c.norm_ff, ids.norm_ff, &df);
            let (dq, dkv) = self.attn(&c.attn, ids.attn, &apply_mask(&dh, &c.drop_attn));
            dh += &self.norm(&c.norm_attn, ids.norm_attn, &(dq + dkv));
        }
        self.embed(&enc.embed, &dh);
    }
}

/// Summed token cross-entropy of one pair under teacher forcing, with
/// optional label smoothing, and `d loss / d logits`.
pub(crate) fn cross_entropy<T: Scalar>(logits: &Array2<T>, labels: &[u32], smoothing: f64) -> (T, Array2<T>) {
    let logp = log_softmax_rows(logits);
    let v = logits.ncols();
    let off = T::lit(smoothing / v as f64);
    let on = T::lit(1.0 - smoothing) + off;
    let mut loss = T::zero();
    let mut grad = logp.mapv(|x| x.exp());
    for ((mut g, lp), &label) in grad.rows_mut().into_iter().zip(logp.rows()).zip(labels) {
        if smoothing > 0.0 {
            loss -= off * lp.sum();
            g.mapv_inplace(|x| x - off);
        }
        loss -= (on - off) * lp[label as usize];
        g[label as usize] -= on - off;
    }
    (loss, grad)
}

/// Decoder input (BOS + target) and labels (target + EOS).
pub(crate) fn teacher_forcing(tgt: &[u32]) -> (Vec<u32>, Vec<u32>) {
    let mut input = Vec::with_capacity(tgt.len() + 1);
    input.push(BOS_ID);
    input.extend_from_slice(tgt);
    let mut labels = tgt.to_vec();
    labels.push(EOS_ID);
    (input, labels)
}

impl<T: Scalar> TransducerModel<T> {
    pub(crate) fn check_ids(&self, ids: &[u32], extra: usize) -> Result<(), ModelError> {
        let max = self.config.max_sequence_length;
        if ids.len() + extra > max {
            return Err(ModelError::SequenceTooLong { len: ids.len() + extra, max });
        }
        if let Some(&id) = ids.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(ModelError::TokenOutOfRange { id, vocab_size: self.config.vocab_size });
        }
        Ok(())
    }

    /// Summed loss, token count, and (when `grads` is given) accumulated
    /// gradients of the summed loss for one pair.
    pub(crate) fn pair_loss(
        &self,
        src: &[u32],
        tgt: &[u32],
        mode: ForwardMode,
        smoothing: f64,
        grads: Option<&mut [T]>,
    ) -> Result<(T, usize), ModelError> {
        self.check_ids(src, 1)?;
        self.check_ids(tgt, 1)?;
        let (input, labels) = teacher_forcing(tgt);
        let mut pass = Pass::new(self, mode);
        let enc = pass.encode(src);
        let dec = pass.decode(&enc.out, &input);
        let (loss, dlogits) = cross_entropy(&dec.logits, &labels, smoothing);
        if let Some(g) = grads {
            Backward::new(self, g).run(&enc, &dec, &dlogits);
        }
        Ok((loss, labels.len()))
    }

    /// Log-probabilities for every position of `prefix` given `src`.
    pub fn log_probs(&self, src: &[u32], prefix: &[u32], mode: ForwardMode) -> Result<Array2<T>, ModelError> {
        self.check_ids(src, 1)?;
        self.check_ids(prefix, 0)?;
        if prefix.is_empty() {
            return Ok(Array2::zeros((0, self.config.vocab_size)));
        }
        let mut pass = Pass::new(self, mode);
        let enc = pass.encode(src);
        Ok(log_softmax_rows(&pass.decode(&enc.out, prefix).logits))
    }

    /// Next-token distributions at every position of the decoder input
    /// `prefix` (conventionally starting with BOS).
    pub fn forward(&self, src: &[u32], prefix: &[u32], mode: ForwardMode) -> Result<Array2<T>, ModelError> {
        Ok(self.log_probs(src, prefix, mode)?.mapv(|x| x.exp()))
    }

    /// Encoder states for `src`, reusable across decoding steps.
    pub(crate) fn encode_eval(&self, src: &[u32]) -> Result<Array2<T>, ModelError> {
        self.check_ids(src, 1)?;
        Ok(Pass::new(self, ForwardMode::Eval).encode(src).out)
    }

    /// Log-probabilities of the token following `prefix`.
    pub(crate) fn next_log_probs(&self, enc: &Array2<T>, prefix: &[u32]) -> Vec<T> {
        let dec = Pass::new(self, ForwardMode::Eval).decode(enc, prefix);
        let last = dec.logits.index_axis(Axis(0), prefix.len() - 1).to_owned().insert_axis(Axis(0));
        log_softmax_rows(&last).into_raw_vec_and_offset().0
    }
}
