//! Tape-free translation: the encoder runs once per batch, the decoder
//! advances one token at a time with per-layer key/value caches, and beam
//! hypotheses of every sentence in a batch share each step.

use std::cmp::Ordering;

use dadapt_numcore::kernels::{gelu, layer_norm_forward, log_softmax_inplace};
use dadapt_numcore::{gemm, Graph};
use serde::{Deserialize, Serialize};

use crate::adapters::{AdapterLayer, AdapterSet, Side};
use crate::batch::{Example, PaddedBatch, TokenId, EOS};
use crate::corpus::Vocab;
use crate::error::{Error, Result};
use crate::model::{encode_graph, Model, DELTA_BIAS, DELTA_WEIGHT, LN_EPS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub beam: usize,
    /// Output length cap `a·src_len + b`, further bounded by the model.
    pub max_len_a: f64,
    pub max_len_b: usize,
    /// Final hypotheses are ranked by `score / len^length_penalty`.
    pub length_penalty: f64,
    pub batch_sentences: usize,
    pub threads: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self { beam: 5, max_len_a: 1.5, max_len_b: 5, length_penalty: 1.0, batch_sentences: 32, threads: 1 }
    }
}

impl DecodeConfig {
    pub fn greedy() -> Self {
        Self { beam: 1, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam == 0 || self.batch_sentences == 0 || self.threads == 0 {
            return Err(Error::Config("beam, batch_sentences and threads must be positive".into()));
        }
        if !(self.max_len_a >= 0.0 && self.length_penalty.is_finite()) {
            return Err(Error::Config("invalid length settings".into()));
        }
        Ok(())
    }
}

struct LayerWeights<'a> {
    ln_attn: (&'a [f32], &'a [f32]),
    self_qkv: [(&'a [f32], &'a [f32]); 3],
    self_o: (&'a [f32], &'a [f32]),
    ln_cross: (&'a [f32], &'a [f32]),
    cross_q: (&'a [f32], &'a [f32]),
    cross_o: (&'a [f32], &'a [f32]),
    ln_ffn: (&'a [f32], &'a [f32]),
    up: (&'a [f32], &'a [f32]),
    down: (&'a [f32], &'a [f32]),
    adapter: Option<AdapterLayer<'a, f32>>,
}

/// A model with its adapters bound for one translation direction.
pub struct Translator<'a> {
    model: &'a Model,
    encoder: Option<&'a AdapterSet>,
    decoder: Option<&'a AdapterSet>,
    src_tag: TokenId,
    tgt_tag: TokenId,
    n_specials: usize,
    in_table: Vec<f32>,
    out_table: Vec<f32>,
    out_bias: Vec<f32>,
}

struct Hyp {
    src_row: usize,
    tokens: Vec<TokenId>,
    score: f64,
    keys: Vec<Vec<f32>>,
    values: Vec<Vec<f32>>,
}

struct CrossCache {
    src_len: usize,
    pad: Vec<bool>,
    /// Per layer, `rows·src_len × hidden`.
    keys: Vec<Vec<f32>>,
    values: Vec<Vec<f32>>,
}

fn param<'a>(m: &'a Model, name: &str) -> Result<&'a [f32]> {
    m.params.get(name).map(|t| t.data()).ok_or_else(|| Error::Incompatible(format!("model lacks `{name}`")))
}

fn linear(x: &[f32], rows: usize, w: (&[f32], &[f32])) -> Vec<f32> {
    let (din, dout) = (w.0.len() / w.1.len(), w.1.len());
    let mut y = vec![0.0; rows * dout];
    gemm(rows, din, dout, x, false, w.0, false, &mut y, false);
    for r in 0..rows {
        for (o, b) in y[r * dout..(r + 1) * dout].iter_mut().zip(w.1) {
            *o += b;
        }
    }
    y
}

fn norm(x: &[f32], h: usize, p: (&[f32], &[f32])) -> Vec<f32> {
    let mut y = vec![0.0; x.len()];
    layer_norm_forward(x, h, p.0, p.1, LN_EPS, &mut y);
    y
}

/// Single-query multi-head attention of `q` (one row) over `tk` keys.
fn attend(q: &[f32], keys: &[f32], values: &[f32], pad: Option<&[bool]>, heads: usize, out: &mut [f32]) {
    let h = q.len();
    let d = h / heads;
    let tk = keys.len() / h;
    let scale = 1.0 / (d as f32).sqrt();
    let mut s = vec![0.0f32; tk];
    for hd in 0..heads {
        let qh = &q[hd * d..(hd + 1) * d];
        let mut max = f32::NEG_INFINITY;
        for (j, sj) in s.iter_mut().enumerate() {
            if pad.is_some_and(|p| p[j]) {
                *sj = f32::NEG_INFINITY;
                continue;
            }
            let kh = &keys[j * h + hd * d..j * h + (hd + 1) * d];
            *sj = qh.iter().zip(kh).map(|(a, b)| a * b).sum::<f32>() * scale;
            max = max.max(*sj);
        }
        let mut z = 0.0;
        for sj in s.iter_mut() {
            *sj = if sj.is_finite() { (*sj - max).exp() } else { 0.0 };
            z += *sj;
        }
        let o = &mut out[hd * d..(hd + 1) * d];
        o.iter_mut().for_each(|v| *v = 0.0);
        for (j, &p) in s.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let w = p / z;
            for (ov, vv) in o.iter_mut().zip(&values[j * h + hd * d..j * h + (hd + 1) * d]) {
                *ov += w * vv;
            }
        }
    }
}

impl<'a> Translator<'a> {
    /// Binds `encoder`/`decoder` adapter sets (either may be absent) for
    /// translating `src_lang` into `tgt_lang`.
    pub fn new(
        model: &'a Model,
        vocab: &Vocab,
        src_lang: &str,
        tgt_lang: &str,
        encoder: Option<&'a AdapterSet>,
        decoder: Option<&'a AdapterSet>,
    ) -> Result<Self> {
        for s in encoder.iter().chain(decoder.iter()) {
            s.check_shape(model)?;
        }
        if vocab.len() != model.cfg.vocab_size {
            return Err(Error::Incompatible(format!(
                "vocabulary has {} entries but the model expects {}",
                vocab.len(),
                model.cfg.vocab_size
            )));
        }
        let shared = model.cfg.share_embeddings;
        let mut out_table = param(model, if shared { "tok_emb" } else { "out_proj" })?.to_vec();
        let mut out_bias = param(model, "out_bias")?.to_vec();
        if let Some(d) = decoder {
            if let Some(w) = d.params.get(DELTA_WEIGHT) {
                out_table.iter_mut().zip(w.data()).for_each(|(a, b)| *a += b);
            }
            if let Some(b) = d.params.get(DELTA_BIAS) {
                out_bias.iter_mut().zip(b.data()).for_each(|(a, b)| *a += b);
            }
        }
        let in_table = if shared { out_table.clone() } else { param(model, "tok_emb")?.to_vec() };
        Ok(Self {
            model,
            encoder,
            decoder,
            src_tag: vocab.tag(src_lang)?,
            tgt_tag: vocab.tag(tgt_lang)?,
            n_specials: vocab.n_specials(),
            in_table,
            out_table,
            out_bias,
        })
    }

    fn layer(&self, i: usize) -> Result<LayerWeights<'_>> {
        let m = self.model;
        let p = |n: &str| param(m, &format!("dec.{i}.{n}"));
        let pair = |n: &str| -> Result<(&[f32], &[f32])> { Ok((p(&format!("{n}.w"))?, p(&format!("{n}.b"))?)) };
        let lnp = |n: &str| -> Result<(&[f32], &[f32])> { Ok((p(&format!("{n}.g"))?, p(&format!("{n}.b"))?)) };
        Ok(LayerWeights {
            ln_attn: lnp("ln_attn")?,
            self_qkv: [pair("self_attn.q")?, pair("self_attn.k")?, pair("self_attn.v")?],
            self_o: pair("self_attn.o")?,
            ln_cross: lnp("ln_cross")?,
            cross_q: pair("cross_attn.q")?,
            cross_o: pair("cross_attn.o")?,
            ln_ffn: lnp("ln_ffn")?,
            up: pair("ffn.up")?,
            down: pair("ffn.down")?,
            adapter: match self.decoder {
                Some(d) => Some(d.layer(Side::Decoder, i)?),
                None => None,
            },
        })
    }

    /// Encoder states plus per-layer cross-attention keys and values.
    fn encode(&self, sources: &[&[TokenId]]) -> Result<CrossCache> {
        let ex: Vec<Example> = sources.iter().map(|s| Example { src: s.to_vec(), tgt: Vec::new() }).collect();
        let refs: Vec<&Example> = ex.iter().collect();
        let batch = PaddedBatch::build(&refs, self.src_tag, self.tgt_tag)?;
        let cfg = &self.model.cfg;
        let mut g = Graph::<f32>::no_grad();
        let mv = self.model.params.bind(&mut g, |_| false);
        let ad = self.encoder.map(|s| s.params.bind(&mut g, |_| false));
        let enc = encode_graph(&mut g, cfg, &mv, ad.as_ref(), &batch.src, &batch.src_pad, batch.rows, batch.src_len, None)?;
        let states = g.value(enc);
        let n = batch.rows * batch.src_len;
        let mut keys = Vec::with_capacity(cfg.dec_layers);
        let mut values = Vec::with_capacity(cfg.dec_layers);
        for i in 0..cfg.dec_layers {
            let w = |n: &str| param(self.model, &format!("dec.{i}.cross_attn.{n}"));
            keys.push(linear(states, n, (w("k.w")?, w("k.b")?)));
            values.push(linear(states, n, (w("v.w")?, w("v.b")?)));
        }
        Ok(CrossCache { src_len: batch.src_len, pad: batch.src_pad, keys, values })
    }

    /// Advances every hypothesis by its last token and returns
    /// log-probabilities, `hyps.len() × vocab`.
    fn step(&self, hyps: &mut [Hyp], inputs: &[TokenId], pos: usize, cross: &CrossCache, layers: &[LayerWeights<'_>]) -> Result<Vec<f32>> {
        let cfg = &self.model.cfg;
        let (h, v, rows) = (cfg.hidden, cfg.vocab_size, hyps.len());
        if pos >= cfg.max_positions {
            return Err(Error::Data(format!("decoding position {pos} exceeds max_positions {}", cfg.max_positions)));
        }
        let dec_pos = param(self.model, "dec_pos")?;
        let sqrt_h = (h as f32).sqrt();
        let mut x = vec![0.0f32; rows * h];
        for (r, &t) in inputs.iter().enumerate() {
            let e = &self.in_table[t as usize * h..(t as usize + 1) * h];
            let p = &dec_pos[pos * h..(pos + 1) * h];
            for c in 0..h {
                x[r * h + c] = e[c] * sqrt_h + p[c];
            }
        }
        let mut x = norm(&x, h, (param(self.model, "dec.ln_emb.g")?, param(self.model, "dec.ln_emb.b")?));
        let mut a = vec![0.0f32; rows * h];
        for (i, lw) in layers.iter().enumerate() {
            let hs = norm(&x, h, lw.ln_attn);
            let q = linear(&hs, rows, lw.self_qkv[0]);
            let k = linear(&hs, rows, lw.self_qkv[1]);
            let vv = linear(&hs, rows, lw.self_qkv[2]);
            for (r, hyp) in hyps.iter_mut().enumerate() {
                hyp.keys[i].extend_from_slice(&k[r * h..(r + 1) * h]);
                hyp.values[i].extend_from_slice(&vv[r * h..(r + 1) * h]);
                attend(&q[r * h..(r + 1) * h], &hyp.keys[i], &hyp.values[i], None, cfg.heads, &mut a[r * h..(r + 1) * h]);
            }
            let o = linear(&a, rows, lw.self_o);
            x.iter_mut().zip(&o).for_each(|(x, o)| *x += o);

            let hc = norm(&x, h, lw.ln_cross);
            let q = linear(&hc, rows, lw.cross_q);
            let s = cross.src_len;
            for (r, hyp) in hyps.iter().enumerate() {
                let span = hyp.src_row * s * h..(hyp.src_row + 1) * s * h;
                let pad = &cross.pad[hyp.src_row * s..(hyp.src_row + 1) * s];
                attend(
                    &q[r * h..(r + 1) * h],
                    &cross.keys[i][span.clone()],
                    &cross.values[i][span],
                    Some(pad),
                    cfg.heads,
                    &mut a[r * h..(r + 1) * h],
                );
            }
            let o = linear(&a, rows, lw.cross_o);
            x.iter_mut().zip(&o).for_each(|(x, o)| *x += o);

            let hf = norm(&x, h, lw.ln_ffn);
            let mut f = linear(&hf, rows, lw.up);
            f.iter_mut().for_each(|z| *z = gelu(*z));
            let f = linear(&f, rows, lw.down);
            x.iter_mut().zip(&f).for_each(|(x, f)| *x += f);
            if let Some(ad) = &lw.adapter {
                ad.apply_rows(&mut x)?;
            }
        }
        let y = norm(&x, h, (param(self.model, "dec.ln_final.g")?, param(self.model, "dec.ln_final.b")?));
        let mut logits = vec![0.0f32; rows * v];
        gemm(rows, h, v, &y, false, &self.out_table, true, &mut logits, false);
        for row in logits.chunks_mut(v) {
            row.iter_mut().zip(&self.out_bias).for_each(|(l, b)| *l += b);
            log_softmax_inplace(row);
        }
        Ok(logits)
    }

    fn max_len(&self, src_len: usize, cfg: &DecodeConfig) -> usize {
        let cap = (cfg.max_len_a * src_len as f64).floor() as usize + cfg.max_len_b;
        // Position p holds the prefix of length p; the EOS step needs one more.
        cap.min(self.model.cfg.max_positions.saturating_sub(1)).max(1)
    }

    /// Log-probabilities of each teacher-forced step (length `tgt.len()+1`)
    /// computed incrementally.
    pub fn incremental_logprobs(&self, src: &[TokenId], tgt: &[TokenId]) -> Result<Vec<Vec<f32>>> {
        let cross = self.encode(&[src])?;
        let layers = (0..self.model.cfg.dec_layers).map(|i| self.layer(i)).collect::<Result<Vec<_>>>()?;
        let n = self.model.cfg.dec_layers;
        let mut hyp = [Hyp { src_row: 0, tokens: vec![], score: 0.0, keys: vec![Vec::new(); n], values: vec![Vec::new(); n] }];
        let mut out = Vec::new();
        for (pos, &t) in std::iter::once(&self.tgt_tag).chain(tgt).enumerate() {
            out.push(self.step(&mut hyp, &[t], pos, &cross, &layers)?);
        }
        Ok(out)
    }

    /// Translates one batch of sources with beam search.
    pub fn translate_batch(&self, sources: &[&[TokenId]], cfg: &DecodeConfig) -> Result<Vec<Vec<TokenId>>> {
        cfg.validate()?;
        if sources.is_empty() {
            return Ok(Vec::new());
        }
        let cross = self.encode(sources)?;
        let layers = (0..self.model.cfg.dec_layers).map(|i| self.layer(i)).collect::<Result<Vec<_>>>()?;
        let n_layers = layers.len();
        let v = self.model.cfg.vocab_size;
        let max_lens: Vec<usize> = sources.iter().map(|s| self.max_len(s.len(), cfg)).collect();
        let mut active: Vec<Hyp> = (0..sources.len())
            .map(|r| Hyp { src_row: r, tokens: vec![], score: 0.0, keys: vec![Vec::new(); n_layers], values: vec![Vec::new(); n_layers] })
            .collect();
        let mut finished: Vec<Vec<(f64, Vec<TokenId>)>> = vec![Vec::new(); sources.len()];
        let mut done = vec![false; sources.len()];
        let mut pos = 0;
        while !active.is_empty() {
            let inputs: Vec<TokenId> = active.iter().map(|h| *h.tokens.last().unwrap_or(&self.tgt_tag)).collect();
            let lp = self.step(&mut active, &inputs, pos, &cross, &layers)?;
            pos += 1;
            let mut next: Vec<Hyp> = Vec::new();
            let mut by_src: Vec<Vec<usize>> = vec![Vec::new(); sources.len()];
            for (i, h) in active.iter().enumerate() {
                by_src[h.src_row].push(i);
            }
            for (s, members) in by_src.iter().enumerate() {
                if members.is_empty() || done[s] {
                    continue;
                }
                let force_eos = active[members[0]].tokens.len() >= max_lens[s];
                // (score, token, hypothesis) candidates, best first.
                let mut cands: Vec<(f64, TokenId, usize)> = Vec::new();
                for &i in members {
                    let row = &lp[i * v..(i + 1) * v];
                    for (t, &l) in row.iter().enumerate() {
                        let t = t as TokenId;
                        let allowed = if force_eos { t == EOS } else { t == EOS || t as usize >= self.n_specials };
                        if allowed && l.is_finite() {
                            cands.push((active[i].score + l as f64, t, i));
                        }
                    }
                }
                cands.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
                let mut kept = 0;
                for (rank, (score, t, i)) in cands.into_iter().take(2 * cfg.beam).enumerate() {
                    if t == EOS {
                        // Only EOS among the top `beam` candidates ends a hypothesis.
                        if rank >= cfg.beam {
                            continue;
                        }
                        let len = (active[i].tokens.len() + 1) as f64;
                        finished[s].push((score / len.powf(cfg.length_penalty), active[i].tokens.clone()));
                        if finished[s].len() >= cfg.beam {
                            break;
                        }
                    } else if kept < cfg.beam {
                        let parent = &active[i];
                        let mut tokens = parent.tokens.clone();
                        tokens.push(t);
                        next.push(Hyp { src_row: s, tokens, score, keys: parent.keys.clone(), values: parent.values.clone() });
                        kept += 1;
                    }
                    if kept >= cfg.beam && finished[s].len() >= cfg.beam {
                        break;
                    }
                }
                if finished[s].len() >= cfg.beam {
                    done[s] = true;
                    next.retain(|h| h.src_row != s);
                }
            }
            active = next;
        }
        Ok(finished
            .into_iter()
            .map(|mut f| {
                f.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)));
                f.into_iter().next().map(|(_, t)| t).unwrap_or_default()
            })
            .collect())
    }

    /// Translates a corpus in fixed length-sorted chunks, spread over
    /// `cfg.threads` workers; output order follows the input.
    pub fn translate_corpus(&self, sources: &[Vec<TokenId>], cfg: &DecodeConfig) -> Result<Vec<Vec<TokenId>>> {
        cfg.validate()?;
        let mut order: Vec<usize> = (0..sources.len()).collect();
        order.sort_by_key(|&i| (sources[i].len(), i));
        let chunks: Vec<&[usize]> = order.chunks(cfg.batch_sentences).collect();
        let run = |c: &[usize]| -> Result<Vec<Vec<TokenId>>> {
            let srcs: Vec<&[TokenId]> = c.iter().map(|&i| sources[i].as_slice()).collect();
            self.translate_batch(&srcs, cfg)
        };
        let results: Vec<Result<Vec<Vec<TokenId>>>> = if cfg.threads <= 1 || chunks.len() <= 1 {
            chunks.iter().map(|c| run(c)).collect()
        } else {
            let per = chunks.len().div_ceil(cfg.threads);
            std::thread::scope(|sc| {
                let handles: Vec<_> = chunks
                    .chunks(per)
                    .map(|group| sc.spawn(move || group.iter().map(|c| run(c)).collect::<Vec<_>>()))
                    .collect();
                handles.into_iter().flat_map(|h| h.join().expect("translation worker panicked")).collect()
            })
        };
        let mut out = vec![Vec::new(); sources.len()];
        for (c, r) in chunks.iter().zip(results) {
            for (&i, t) in c.iter().zip(r?) {
                out[i] = t;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapters::new_adapter_set;
    use crate::model::{forward_logits, BoundSelection, ModelConfig};

    fn setup() -> (Model, Vocab) {
        let vocab = Vocab::new(&["aa", "bb"], (0..40).map(|i| format!("w{i}"))).unwrap();
        let cfg = ModelConfig {
            enc_layers: 2,
            dec_layers: 2,
            hidden: 16,
            heads: 2,
            ffn_dim: 32,
            vocab_size: vocab.len(),
            max_positions: 32,
            dropout: 0.0,
            attn_dropout: 0.0,
            share_embeddings: true,
        };
        (crate::model::build_model(&cfg, 3).unwrap(), vocab)
    }

    #[test]
    fn incremental_matches_teacher_forcing() {
        let (model, vocab) = setup();
        let mut ad = new_adapter_set(&model, "bb", 4, 9).unwrap();
        ad.add_output_projection_delta(vocab.len());
        // Non-trivial adapter and delta values.
        for e in ad.params.entries_mut() {
            for (j, v) in e.tensor.data_mut().iter_mut().enumerate() {
                *v += 0.01 * ((j % 7) as f32 - 3.0);
            }
        }
        let enc = new_adapter_set(&model, "aa", 4, 10).unwrap();
        let src: Vec<TokenId> = vec![10, 11, 12, 13];
        let tgt: Vec<TokenId> = vec![20, 21, 22];
        let tr = Translator::new(&model, &vocab, "aa", "bb", Some(&enc), Some(&ad)).unwrap();
        let inc = tr.incremental_logprobs(&src, &tgt).unwrap();

        let ex = Example { src: src.clone(), tgt: tgt.clone() };
        let batch = PaddedBatch::build(&[&ex], vocab.tag("aa").unwrap(), vocab.tag("bb").unwrap()).unwrap();
        let mut g = Graph::<f32>::no_grad();
        let mv = model.params.bind(&mut g, |_| false);
        let eb = enc.params.bind(&mut g, |_| false);
        let db = ad.params.bind(&mut g, |_| false);
        let sel = BoundSelection { encoder: Some(&eb), decoder: Some(&db) };
        let logits = forward_logits(&mut g, &model.cfg, &mv, sel, &batch, None).unwrap();
        let v = vocab.len();
        let full = g.value(logits);
        for (p, row) in inc.iter().enumerate() {
            let mut reference = full[p * v..(p + 1) * v].to_vec();
            log_softmax_inplace(&mut reference);
            for (a, b) in row.iter().zip(&reference) {
                assert!((a - b).abs() < 1e-4, "position {p}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn beam_one_equals_greedy_argmax() {
        let (model, vocab) = setup();
        let tr = Translator::new(&model, &vocab, "aa", "bb", None, None).unwrap();
        let src: Vec<TokenId> = vec![10, 12, 14];
        let cfg = DecodeConfig { max_len_b: 6, ..DecodeConfig::greedy() };
        let out = tr.translate_batch(&[&src], &cfg).unwrap().remove(0);
        // Reference greedy: argmax over allowed tokens of the teacher-forced
        // distribution along the produced prefix.
        let lps = tr.incremental_logprobs(&src, &out).unwrap();
        let n_spec = vocab.n_specials();
        for (p, row) in lps.iter().enumerate() {
            let last_allowed_eos_only = p >= tr.max_len(src.len(), &cfg);
            let mut best = (f32::NEG_INFINITY, 0u32);
            for (t, &l) in row.iter().enumerate() {
                let t = t as TokenId;
                let allowed = if last_allowed_eos_only { t == EOS } else { t == EOS || t as usize >= n_spec };
                if allowed && l > best.0 {
                    best = (l, t);
                }
            }
            let expected = out.get(p).copied().unwrap_or(EOS);
            assert_eq!(best.1, expected, "step {p}");
        }
    }

    #[test]
    fn corpus_translation_is_thread_invariant() {
        let (model, vocab) = setup();
        let tr = Translator::new(&model, &vocab, "aa", "bb", None, None).unwrap();
        let sources: Vec<Vec<TokenId>> = (0..9).map(|i| (0..(2 + i % 4)).map(|j| 10 + ((i * 7 + j * 3) % 30) as TokenId).collect()).collect();
        let one = tr.translate_corpus(&sources, &DecodeConfig { beam: 3, batch_sentences: 2, ..Default::default() }).unwrap();
        let many = tr.translate_corpus(&sources, &DecodeConfig { beam: 3, batch_sentences: 2, threads: 3, ..Default::default() }).unwrap();
        assert_eq!(one, many);
        assert!(one.iter().all(|t| t.iter().all(|&x| x as usize >= vocab.n_specials())));
    }
}
