//! Flat parameter layout: every tensor is a named slice of one buffer, so the
//! optimizer, gradient check and checkpoint all work on plain vectors.

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut2};

use super::config::{ModelConfig, PositionMode};

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Init {
    /// normal(0, 0.02)
    Embedding,
    /// uniform(-b, b) with b = sqrt(6 / (fan_in + fan_out))
    Xavier {
        fan_in: usize,
        fan_out: usize,
    },
    Zeros,
    Ones,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub(crate) init: Init,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.numel()
    }
}

pub(crate) type Pid = usize;

#[derive(Debug, Clone, Copy)]
pub(crate) struct LinearIds {
    pub w: Pid,
    pub b: Pid,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NormIds {
    pub gain: Pid,
    pub bias: Pid,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct AttnIds {
    pub q: LinearIds,
    pub k: LinearIds,
    pub v: LinearIds,
    pub o: LinearIds,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct FfIds {
    pub up: LinearIds,
    pub down: LinearIds,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct EncoderLayerIds {
    pub norm_attn: NormIds,
    pub attn: AttnIds,
    pub norm_ff: NormIds,
    pub ff: FfIds,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DecoderLayerIds {
    pub norm_self: NormIds,
    pub self_attn: AttnIds,
    pub norm_cross: NormIds,
    pub cross_attn: AttnIds,
    pub norm_ff: NormIds,
    pub ff: FfIds,
}

#[derive(Debug, Clone)]
pub struct Layout {
    specs: Vec<ParamSpec>,
    total: usize,
    pub(crate) tokens: Pid,
    pub(crate) positions: Pid,
    pub(crate) pos_proj: Option<LinearIds>,
    pub(crate) encoder: Vec<EncoderLayerIds>,
    pub(crate) encoder_norm: NormIds,
    pub(crate) decoder: Vec<DecoderLayerIds>,
    pub(crate) decoder_norm: NormIds,
    pub(crate) output: LinearIds,
}

struct Builder {
    specs: Vec<ParamSpec>,
    offset: usize,
}

impl Builder {
    fn add(&mut self, name: String, shape: Vec<usize>, init: Init) -> Pid {
        let spec = ParamSpec { name, shape, offset: self.offset, init };
        self.offset += spec.numel();
        self.specs.push(spec);
        self.specs.len() - 1
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> LinearIds {
        LinearIds {
            w: self.add(format!("{name}.weight"), vec![fan_in, fan_out], Init::Xavier { fan_in, fan_out }),
            b: self.add(format!("{name}.bias"), vec![fan_out], Init::Zeros),
        }
    }

    fn norm(&mut self, name: &str, d: usize) -> NormIds {
        NormIds {
            gain: self.add(format!("{name}.gain"), vec![d], Init::Ones),
            bias: self.add(format!("{name}.bias"), vec![d], Init::Zeros),
        }
    }

    fn attn(&mut self, name: &str, d: usize) -> AttnIds {
        AttnIds {
            q: self.linear(&format!("{name}.q"), d, d),
            k: self.linear(&format!("{name}.k"), d, d),
            v: self.linear(&format!("{name}.v"), d, d),
            o: self.linear(&format!("{name}.o"), d, d),
        }
    }

    fn ff(&mut self, name: &str, d: usize, f: usize) -> FfIds {
        FfIds { up: self.linear(&format!("{name}.up"), d, f), down: self.linear(&format!("{name}.down"), f, d) }
    }
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let (d, f) = (cfg.hidden_size, cfg.feedforward_dim);
        let mut b = Builder { specs: Vec::new(), offset: 0 };
        let tokens = b.add("embed.tokens".into(), vec![cfg.vocab_size, d], Init::Embedding);
        let (positions, pos_proj) = match cfg.position_mode {
            PositionMode::Projected => (
                b.add("embed.positions".into(), vec![cfg.max_sequence_length, cfg.pos_embedding_dim], Init::Embedding),
                Some(b.linear("embed.pos_proj", cfg.pos_embedding_dim, d)),
            ),
            PositionMode::Table => {
                (b.add("embed.positions".into(), vec![cfg.pos_embedding_dim, d], Init::Embedding), None)
            }
        };
        let encoder = (0..cfg.encoder_layers)
            .map(|i| EncoderLayerIds {
                norm_attn: b.norm(&format!("encoder.{i}.norm_attn"), d),
                attn: b.attn(&format!("encoder.{i}.attn"), d),
                norm_ff: b.norm(&format!("encoder.{i}.norm_ff"), d),
                ff: b.ff(&format!("encoder.{i}.ff"), d, f),
            })
            .collect();
        let encoder_norm = b.norm("encoder.norm", d);
        let decoder = (0..cfg.decoder_layers)
            .map(|i| DecoderLayerIds {
                norm_self: b.norm(&format!("decoder.{i}.norm_self"), d),
                self_attn: b.attn(&format!("decoder.{i}.self_attn"), d),
                norm_cross: b.norm(&format!("decoder.{i}.norm_cross"), d),
                cross_attn: b.attn(&format!("decoder.{i}.cross_attn"), d),
                norm_ff: b.norm(&format!("decoder.{i}.norm_ff"), d),
                ff: b.ff(&format!("decoder.{i}.ff"), d, f),
            })
            .collect();
        let decoder_norm = b.norm("decoder.norm", d);
        let output = b.linear("output", d, cfg.vocab_size);
        Layout {
            total: b.offset,
            specs: b.specs,
            tokens,
            positions,
            pos_proj,
            encoder,
            encoder_norm,
            decoder,
            decoder_norm,
            output,
        }
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn spec(&self, id: Pid) -> &ParamSpec {
        &self.specs[id]
    }

    /// Tensor containing the flat coordinate `index`.
    pub fn owner(&self, index: usize) -> &ParamSpec {
        let pos = self.specs.partition_point(|s| s.offset + s.numel() <= index);
        &self.specs[pos]
    }

    pub(crate) fn mat<'a, T>(&self, data: &'a [T], id: Pid) -> ArrayView2<'a, T> {
        let s = &self.specs[id];
        ArrayView2::from_shape((s.shape[0], s.shape[1]), &data[s.range()]).expect("2-d parameter")
    }

    pub(crate) fn vec<'a, T>(&self, data: &'a [T], id: Pid) -> ArrayView1<'a, T> {
        let s = &self.specs[id];
        ArrayView1::from(&data[s.range()])
    }

    pub(crate) fn mat_mut<'a, T>(&self, data: &'a mut [T], id: Pid) -> ArrayViewMut2<'a, T> {
        let s = &self.specs[id];
        ArrayViewMut2::from_shape((s.shape[0], s.shape[1]), &mut data[s.range()]).expect("2-d parameter")
    }
}
