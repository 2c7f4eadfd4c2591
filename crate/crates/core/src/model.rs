//! Pre-LN transformer encoder-decoder with an adapter socket after the
//! feed-forward block of every layer.

use dadapt_numcore::{AttnLayout, Graph, Scalar, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adapters::adapter_graph;
use crate::batch::{PaddedBatch, PAD};
use crate::error::{Error, Result};
use crate::params::{Bound, ParamGroup, ParamStore};

/// Epsilon of every layer norm in the model and the adapters.
pub const LN_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    pub dropout: f64,
    pub attn_dropout: f64,
    pub share_embeddings: bool,
}

impl ModelConfig {
    /// Desk-scale default shape for a given vocabulary.
    pub fn desk(vocab_size: usize) -> Self {
        Self {
            enc_layers: 4,
            dec_layers: 4,
            hidden: 256,
            heads: 4,
            ffn_dim: 1024,
            vocab_size,
            max_positions: 128,
            dropout: 0.3,
            attn_dropout: 0.0,
            share_embeddings: true,
        }
    }

    /// The 12+12 layer, 1024-wide shape of the full-size parent.
    pub fn large(vocab_size: usize) -> Self {
        Self {
            enc_layers: 12,
            dec_layers: 12,
            hidden: 1024,
            heads: 16,
            ffn_dim: 4096,
            vocab_size,
            max_positions: 1024,
            dropout: 0.3,
            attn_dropout: 0.0,
            share_embeddings: true,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.enc_layers == 0 || self.dec_layers == 0 {
            return bad("layer counts must be positive".into());
        }
        if self.hidden == 0 || self.heads == 0 || self.hidden % self.heads != 0 {
            return bad(format!("hidden {} is not divisible by heads {}", self.hidden, self.heads));
        }
        if self.ffn_dim == 0 || self.vocab_size < 4 || self.max_positions < 2 {
            return bad("ffn_dim, vocab_size and max_positions are too small".into());
        }
        for (n, p) in [("dropout", self.dropout), ("attn_dropout", self.attn_dropout)] {
            if !(0.0..1.0).contains(&p) {
                return bad(format!("{n} must lie in [0, 1), got {p}"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<T: Scalar = f32> {
    pub cfg: ModelConfig,
    pub params: ParamStore<T>,
}

fn linear<T: Scalar>(
    s: &mut ParamStore<T>,
    rng: &mut ChaCha8Rng,
    name: &str,
    group: ParamGroup,
    fan_in: usize,
    fan_out: usize,
    gain: f64,
) {
    let std = gain / (fan_in as f64).sqrt();
    s.insert(format!("{name}.w"), group, Tensor::randn([fan_in, fan_out], std, rng));
    s.insert(format!("{name}.b"), group, Tensor::zeros([fan_out]));
}

fn layer_norm<T: Scalar>(s: &mut ParamStore<T>, name: &str) {
    let h = s.get("tok_emb").map(|t| t.cols()).expect("embeddings are created first");
    s.insert(format!("{name}.g"), ParamGroup::LayerNorms, Tensor::full([h], T::one()));
    s.insert(format!("{name}.b"), ParamGroup::LayerNorms, Tensor::zeros([h]));
}

/// Builds a model with freshly initialized parameters.
pub fn build_model(cfg: &ModelConfig, seed: u64) -> Result<Model<f32>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = cfg.hidden;
    let mut s = ParamStore::new();
    let emb_std = 0.5 / (h as f64).sqrt();
    s.insert("tok_emb", ParamGroup::Embeddings, Tensor::randn([cfg.vocab_size, h], emb_std, &mut rng));
    s.insert("enc_pos", ParamGroup::Embeddings, Tensor::randn([cfg.max_positions, h], 0.5, &mut rng));
    s.insert("dec_pos", ParamGroup::Embeddings, Tensor::randn([cfg.max_positions, h], 0.5, &mut rng));
    if !cfg.share_embeddings {
        s.insert("out_proj", ParamGroup::OutputProjection, Tensor::randn([cfg.vocab_size, h], emb_std, &mut rng));
    }
    s.insert("out_bias", ParamGroup::OutputProjection, Tensor::zeros([cfg.vocab_size]));
    layer_norm(&mut s, "enc.ln_emb");
    layer_norm(&mut s, "dec.ln_emb");
    let res_gain = 1.0 / ((cfg.enc_layers + cfg.dec_layers) as f64).sqrt();
    for i in 0..cfg.enc_layers {
        layer_norm(&mut s, &format!("enc.{i}.ln_attn"));
        for p in ["q", "k", "v"] {
            linear(&mut s, &mut rng, &format!("enc.{i}.self_attn.{p}"), ParamGroup::EncSelfAttn, h, h, 1.0);
        }
        linear(&mut s, &mut rng, &format!("enc.{i}.self_attn.o"), ParamGroup::EncSelfAttn, h, h, res_gain);
        layer_norm(&mut s, &format!("enc.{i}.ln_ffn"));
        linear(&mut s, &mut rng, &format!("enc.{i}.ffn.up"), ParamGroup::EncFfn, h, cfg.ffn_dim, 1.0);
        linear(&mut s, &mut rng, &format!("enc.{i}.ffn.down"), ParamGroup::EncFfn, cfg.ffn_dim, h, res_gain);
    }
    for i in 0..cfg.dec_layers {
        layer_norm(&mut s, &format!("dec.{i}.ln_attn"));
        for p in ["q", "k", "v"] {
            linear(&mut s, &mut rng, &format!("dec.{i}.self_attn.{p}"), ParamGroup::DecSelfAttn, h, h, 1.0);
        }
        linear(&mut s, &mut rng, &format!("dec.{i}.self_attn.o"), ParamGroup::DecSelfAttn, h, h, res_gain);
        layer_norm(&mut s, &format!("dec.{i}.ln_cross"));
        for p in ["q", "k", "v"] {
            linear(&mut s, &mut rng, &format!("dec.{i}.cross_attn.{p}"), ParamGroup::CrossAttn, h, h, 1.0);
        }
        linear(&mut s, &mut rng, &format!("dec.{i}.cross_attn.o"), ParamGroup::CrossAttn, h, h, res_gain);
        layer_norm(&mut s, &format!("dec.{i}.ln_ffn"));
        linear(&mut s, &mut rng, &format!("dec.{i}.ffn.up"), ParamGroup::DecFfn, h, cfg.ffn_dim, 1.0);
        linear(&mut s, &mut rng, &format!("dec.{i}.ffn.down"), ParamGroup::DecFfn, cfg.ffn_dim, h, res_gain);
    }
    layer_norm(&mut s, "enc.ln_final");
    layer_norm(&mut s, "dec.ln_final");
    Ok(Model { cfg: cfg.clone(), params: s })
}

impl<T: Scalar> Model<T> {
    /// Identity of the parent that adapters are trained against: the
    /// configuration plus every parameter outside `cross_attn`. Stage-2
    /// cross-attention fine-tuning therefore keeps adapters bindable,
    /// while full fine-tuning produces a different parent.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.cfg).expect("config serializes"));
        h.update(self.params.checksum(|e| e.group != ParamGroup::CrossAttn).as_bytes());
        hex::encode(h.finalize())
    }

    /// Checksum of every parameter.
    pub fn checksum(&self) -> String {
        self.params.checksum(|_| true)
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model { cfg: self.cfg.clone(), params: self.params.cast() }
    }

    /// Parameter counts per group, in [`ParamGroup::ALL`] order.
    pub fn group_sizes(&self) -> Vec<(ParamGroup, usize)> {
        ParamGroup::ALL
            .into_iter()
            .map(|g| (g, self.params.entries().iter().filter(|e| e.group == g).map(|e| e.tensor.len()).sum()))
            .collect()
    }
}

/// Training-time stochasticity. Absent means deterministic evaluation.
pub struct Regularizer<'r> {
    pub dropout: f64,
    pub attn_dropout: f64,
    pub rng: &'r mut ChaCha8Rng,
}

/// Adapters (and optional projection deltas) bound on each side.
#[derive(Clone, Copy, Default)]
pub struct BoundSelection<'a> {
    pub encoder: Option<&'a Bound>,
    pub decoder: Option<&'a Bound>,
}

pub const DELTA_WEIGHT: &str = "delta.weight";
pub const DELTA_BIAS: &str = "delta.bias";

fn lin<T: Scalar>(g: &mut Graph<T>, mv: &Bound, x: Var, name: &str) -> Result<Var> {
    let w = mv.var(&format!("{name}.w"))?;
    let b = mv.var(&format!("{name}.b"))?;
    let y = g.matmul(x, w, false)?;
    Ok(g.add_row(y, b)?)
}

fn ln<T: Scalar>(g: &mut Graph<T>, mv: &Bound, x: Var, name: &str) -> Result<Var> {
    let gain = mv.var(&format!("{name}.g"))?;
    let bias = mv.var(&format!("{name}.b"))?;
    Ok(g.layer_norm(x, gain, bias, LN_EPS)?)
}

fn drop<T: Scalar>(g: &mut Graph<T>, x: Var, reg: &mut Option<&mut Regularizer<'_>>) -> Var {
    match reg {
        Some(r) if r.dropout > 0.0 => g.dropout(x, r.dropout, r.rng),
        _ => x,
    }
}

#[allow(clippy::too_many_arguments)]
fn attention<T: Scalar>(
    g: &mut Graph<T>,
    cfg: &ModelConfig,
    mv: &Bound,
    name: &str,
    xq: Var,
    xkv: Var,
    layout: AttnLayout,
    reg: &mut Option<&mut Regularizer<'_>>,
) -> Result<Var> {
    let q = lin(g, mv, xq, &format!("{name}.q"))?;
    let k = lin(g, mv, xkv, &format!("{name}.k"))?;
    let v = lin(g, mv, xkv, &format!("{name}.v"))?;
    debug_assert_eq!(layout.heads, cfg.heads);
    let a = match reg {
        Some(r) if r.attn_dropout > 0.0 => g.attention(q, k, v, layout, r.attn_dropout, Some(&mut *r.rng))?,
        _ => g.attention::<ChaCha8Rng>(q, k, v, layout, 0.0, None)?,
    };
    lin(g, mv, a, &format!("{name}.o"))
}

fn embed<T: Scalar>(
    g: &mut Graph<T>,
    cfg: &ModelConfig,
    table: Var,
    pos_table: Var,
    ids: &[usize],
    rows: usize,
    len: usize,
) -> Result<Var> {
    if len > cfg.max_positions {
        return Err(Error::Data(format!("sequence of {len} exceeds max_positions {}", cfg.max_positions)));
    }
    let tok = g.gather(table, ids)?;
    let tok = g.scale(tok, (cfg.hidden as f64).sqrt());
    let positions: Vec<usize> = (0..rows).flat_map(|_| 0..len).collect();
    let pos = g.gather(pos_table, &positions)?;
    Ok(g.add(tok, pos)?)
}

/// Embedding table for one side, with a bound projection delta added.
fn side_table<T: Scalar>(g: &mut Graph<T>, base: Var, side: Option<&Bound>) -> Result<Var> {
    match side.and_then(|b| b.try_var(DELTA_WEIGHT)) {
        Some(d) => Ok(g.add(base, d)?),
        None => Ok(base),
    }
}

/// Encoder states for a padded source block.
#[allow(clippy::too_many_arguments)]
pub fn encode_graph<T: Scalar>(
    g: &mut Graph<T>,
    cfg: &ModelConfig,
    mv: &Bound,
    adapters: Option<&Bound>,
    src: &[usize],
    src_pad: &[bool],
    rows: usize,
    len: usize,
    mut reg: Option<&mut Regularizer<'_>>,
) -> Result<Var> {
    if rows == 0 || len == 0 {
        return Err(Error::Data("empty source".into()));
    }
    let base = mv.var("tok_emb")?;
    let table = if cfg.share_embeddings { side_table(g, base, adapters)? } else { base };
    let x = embed(g, cfg, table, mv.var("enc_pos")?, src, rows, len)?;
    let x = ln(g, mv, x, "enc.ln_emb")?;
    let mut x = drop(g, x, &mut reg);
    for i in 0..cfg.enc_layers {
        let hsa = ln(g, mv, x, &format!("enc.{i}.ln_attn"))?;
        let layout = AttnLayout {
            batch: rows,
            heads: cfg.heads,
            tq: len,
            tk: len,
            head_dim: cfg.head_dim(),
            causal: false,
            key_pad: src_pad.to_vec(),
            query_offset: 0,
        };
        let a = attention(g, cfg, mv, &format!("enc.{i}.self_attn"), hsa, hsa, layout, &mut reg)?;
        let a = drop(g, a, &mut reg);
        x = g.add(x, a)?;
        let hf = ln(g, mv, x, &format!("enc.{i}.ln_ffn"))?;
        let f = lin(g, mv, hf, &format!("enc.{i}.ffn.up"))?;
        let f = g.gelu(f);
        let f = lin(g, mv, f, &format!("enc.{i}.ffn.down"))?;
        let f = drop(g, f, &mut reg);
        x = g.add(x, f)?;
        if let Some(ad) = adapters {
            x = adapter_graph(g, ad, &format!("enc.{i}"), x)?;
        }
    }
    ln(g, mv, x, "enc.ln_final")
}

/// Teacher-forced next-token logits, `rows·tgt_len × vocab`.
#[allow(clippy::too_many_arguments)]
pub fn decode_graph<T: Scalar>(
    g: &mut Graph<T>,
    cfg: &ModelConfig,
    mv: &Bound,
    adapters: Option<&Bound>,
    enc: Var,
    src_pad: &[bool],
    src_len: usize,
    dec_in: &[usize],
    dec_pad: &[bool],
    rows: usize,
    len: usize,
    mut reg: Option<&mut Regularizer<'_>>,
) -> Result<Var> {
    if src_len == 0 || src_pad.iter().all(|p| *p) {
        return Err(Error::Data("decoding needs non-empty encoder states".into()));
    }
    let base = if cfg.share_embeddings { mv.var("tok_emb")? } else { mv.var("out_proj")? };
    let out_table = side_table(g, base, adapters)?;
    let in_table = if cfg.share_embeddings { out_table } else { mv.var("tok_emb")? };
    let y = embed(g, cfg, in_table, mv.var("dec_pos")?, dec_in, rows, len)?;
    let y = ln(g, mv, y, "dec.ln_emb")?;
    let mut y = drop(g, y, &mut reg);
    for i in 0..cfg.dec_layers {
        let hs = ln(g, mv, y, &format!("dec.{i}.ln_attn"))?;
        let self_layout = AttnLayout {
            batch: rows,
            heads: cfg.heads,
            tq: len,
            tk: len,
            head_dim: cfg.head_dim(),
            causal: true,
            key_pad: dec_pad.to_vec(),
            query_offset: 0,
        };
        let a = attention(g, cfg, mv, &format!("dec.{i}.self_attn"), hs, hs, self_layout, &mut reg)?;
        let a = drop(g, a, &mut reg);
        y = g.add(y, a)?;
        let hc = ln(g, mv, y, &format!("dec.{i}.ln_cross"))?;
        let cross_layout = AttnLayout {
            batch: rows,
            heads: cfg.heads,
            tq: len,
            tk: src_len,
            head_dim: cfg.head_dim(),
            causal: false,
            key_pad: src_pad.to_vec(),
            query_offset: 0,
        };
        let c = attention(g, cfg, mv, &format!("dec.{i}.cross_attn"), hc, enc, cross_layout, &mut reg)?;
        let c = drop(g, c, &mut reg);
        y = g.add(y, c)?;
        let hf = ln(g, mv, y, &format!("dec.{i}.ln_ffn"))?;
        let f = lin(g, mv, hf, &format!("dec.{i}.ffn.up"))?;
        let f = g.gelu(f);
        let f = lin(g, mv, f, &format!("dec.{i}.ffn.down"))?;
        let f = drop(g, f, &mut reg);
        y = g.add(y, f)?;
        if let Some(ad) = adapters {
            y = adapter_graph(g, ad, &format!("dec.{i}"), y)?;
        }
    }
    let y = ln(g, mv, y, "dec.ln_final")?;
    let logits = g.matmul(y, out_table, true)?;
    let mut bias = mv.var("out_bias")?;
    if let Some(db) = adapters.and_then(|b| b.try_var(DELTA_BIAS)) {
        bias = g.add(bias, db)?;
    }
    Ok(g.add_row(logits, bias)?)
}

/// Full forward pass returning logits for `batch`.
pub fn forward_logits<T: Scalar>(
    g: &mut Graph<T>,
    cfg: &ModelConfig,
    mv: &Bound,
    sel: BoundSelection<'_>,
    batch: &PaddedBatch,
    mut reg: Option<&mut Regularizer<'_>>,
) -> Result<Var> {
    let enc = encode_graph(
        g,
        cfg,
        mv,
        sel.encoder,
        &batch.src,
        &batch.src_pad,
        batch.rows,
        batch.src_len,
        reg.as_deref_mut(),
    )?;
    decode_graph(
        g,
        cfg,
        mv,
        sel.decoder,
        enc,
        &batch.src_pad,
        batch.src_len,
        &batch.dec_in,
        &batch.dec_pad,
        batch.rows,
        batch.tgt_len,
        reg,
    )
}

/// Teacher-forced label-smoothed loss; the same path serves denoising
/// (`g(T) → T`) and translation batches.
pub fn forward_loss<T: Scalar>(
    g: &mut Graph<T>,
    cfg: &ModelConfig,
    mv: &Bound,
    sel: BoundSelection<'_>,
    batch: &PaddedBatch,
    smoothing: f64,
    reg: Option<&mut Regularizer<'_>>,
) -> Result<Var> {
    let logits = forward_logits(g, cfg, mv, sel, batch, reg)?;
    Ok(g.smoothed_nll(logits, &batch.target, smoothing, PAD as usize)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            enc_layers: 2,
            dec_layers: 2,
            hidden: 16,
            heads: 4,
            ffn_dim: 32,
            vocab_size: 20,
            max_positions: 16,
            dropout: 0.0,
            attn_dropout: 0.0,
            share_embeddings: true,
        }
    }

    #[test]
    fn head_dim_and_divisibility() {
        let mut c = ModelConfig::desk(100);
        c.hidden = 128;
        assert_eq!(c.head_dim(), 32);
        c.hidden = 130;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn same_seed_same_parameters() {
        let a = build_model(&tiny(), 3).unwrap();
        let b = build_model(&tiny(), 3).unwrap();
        assert_eq!(a.checksum(), b.checksum());
        assert_ne!(a.checksum(), build_model(&tiny(), 4).unwrap().checksum());
    }

    #[test]
    fn groups_partition_parameters() {
        let m = build_model(&tiny(), 0).unwrap();
        let total: usize = m.group_sizes().iter().map(|(_, n)| n).sum();
        assert_eq!(total, m.params.numel());
        assert!(m.group_sizes().iter().filter(|(g, _)| *g != ParamGroup::Adapters).all(|(_, n)| *n > 0));
    }

    #[test]
    fn fingerprint_ignores_cross_attention_only() {
        let mut m = build_model(&tiny(), 0).unwrap();
        let fp = m.fingerprint();
        m.params.get_mut("dec.0.cross_attn.q.w").unwrap().data_mut()[0] += 1.0;
        assert_eq!(fp, m.fingerprint());
        m.params.get_mut("dec.0.ffn.up.w").unwrap().data_mut()[0] += 1.0;
        assert_ne!(fp, m.fingerprint());
    }
}
