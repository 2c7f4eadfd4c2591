//! Denoising adapters: per-language bottleneck layers inserted after every
//! feed-forward block, a language-keyed registry, and composition.
//!
//! Each layer computes `D(z) = ReLU(LN(z)·W_down + b_down)·W_up + b_up + z`.

use std::collections::BTreeMap;

use dadapt_numcore::kernels::layer_norm_forward;
use dadapt_numcore::{gemm, Graph, Scalar, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{Model, DELTA_BIAS, DELTA_WEIGHT, LN_EPS};
use crate::params::{Bound, ParamGroup, ParamStore};

/// Language code of the single language-agnostic adapter set.
pub const TASK_ADAPTER: &str = "*";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Encoder,
    Decoder,
}

impl Side {
    pub fn prefix(self) -> &'static str {
        match self {
            Side::Encoder => "enc",
            Side::Decoder => "dec",
        }
    }
}

/// Borrowed view of one adapter layer.
#[derive(Clone, Copy, Debug)]
pub struct AdapterLayer<'a, T> {
    pub ln_gain: &'a Tensor<T>,
    pub ln_bias: &'a Tensor<T>,
    pub w_down: &'a Tensor<T>,
    pub b_down: &'a Tensor<T>,
    pub w_up: &'a Tensor<T>,
    pub b_up: &'a Tensor<T>,
}

impl<T: Scalar> AdapterLayer<'_, T> {
    pub fn hidden(&self) -> usize {
        self.w_down.rows()
    }

    pub fn bottleneck(&self) -> usize {
        self.w_down.cols()
    }

    /// Applies the layer to every `hidden`-wide row of `x` in place.
    pub fn apply_rows(&self, x: &mut [T]) -> Result<()> {
        let (h, b) = (self.hidden(), self.bottleneck());
        if x.len() % h != 0 {
            return Err(Error::Incompatible(format!("adapter of width {h} applied to {} values", x.len())));
        }
        let rows = x.len() / h;
        let mut normed = vec![T::zero(); x.len()];
        layer_norm_forward(x, h, self.ln_gain.data(), self.ln_bias.data(), LN_EPS, &mut normed);
        let mut mid = vec![T::zero(); rows * b];
        gemm(rows, h, b, &normed, false, self.w_down.data(), false, &mut mid, false);
        for (i, v) in mid.iter_mut().enumerate() {
            let s = *v + self.b_down.data()[i % b];
            *v = if s > T::zero() { s } else { T::zero() };
        }
        let mut up = vec![T::zero(); rows * h];
        gemm(rows, b, h, &mid, false, self.w_up.data(), false, &mut up, false);
        for (i, v) in x.iter_mut().enumerate() {
            *v = up[i] + self.b_up.data()[i % h] + *v;
        }
        Ok(())
    }
}

/// `D(z)` for a single vector.
pub fn adapter_forward<T: Scalar>(z: &[T], layer: &AdapterLayer<'_, T>) -> Result<Vec<T>> {
    if z.len() != layer.hidden() {
        return Err(Error::Incompatible(format!(
            "input of dimension {} for adapter of width {}",
            z.len(),
            layer.hidden()
        )));
    }
    let mut out = z.to_vec();
    layer.apply_rows(&mut out)?;
    Ok(out)
}

/// Graph version of the adapter applied to `x` (rows × hidden).
pub fn adapter_graph<T: Scalar>(g: &mut Graph<T>, ad: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let n = g.layer_norm(x, ad.var(&format!("{prefix}.ln.g"))?, ad.var(&format!("{prefix}.ln.b"))?, LN_EPS)?;
    let d = g.matmul(n, ad.var(&format!("{prefix}.down.w"))?, false)?;
    let d = g.add_row(d, ad.var(&format!("{prefix}.down.b"))?)?;
    let d = g.relu(d);
    let u = g.matmul(d, ad.var(&format!("{prefix}.up.w"))?, false)?;
    let u = g.add_row(u, ad.var(&format!("{prefix}.up.b"))?)?;
    Ok(g.add(u, x)?)
}

/// Encoder and decoder adapter stacks for one language.
#[derive(Clone, Debug, PartialEq)]
pub struct AdapterSet<T: Scalar = f32> {
    pub language: String,
    pub hidden: usize,
    pub bottleneck: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub parent_fingerprint: String,
    pub params: ParamStore<T>,
}

/// Fresh adapters for `language`: `W_down ~ N(0, 0.01²)`, everything on the
/// up-projection zero, LN gain 1 and bias 0. The set is an exact identity.
pub fn new_adapter_set(model: &Model, language: &str, bottleneck: usize, seed: u64) -> Result<AdapterSet> {
    if bottleneck == 0 {
        return Err(Error::Config("adapter bottleneck must be at least 1".into()));
    }
    let cfg = &model.cfg;
    let h = cfg.hidden;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new();
    for (side, n) in [(Side::Encoder, cfg.enc_layers), (Side::Decoder, cfg.dec_layers)] {
        for i in 0..n {
            let p = format!("{}.{i}", side.prefix());
            s.insert(format!("{p}.ln.g"), ParamGroup::Adapters, Tensor::full([h], 1.0));
            s.insert(format!("{p}.ln.b"), ParamGroup::Adapters, Tensor::zeros([h]));
            s.insert(format!("{p}.down.w"), ParamGroup::Adapters, Tensor::randn([h, bottleneck], 0.01, &mut rng));
            s.insert(format!("{p}.down.b"), ParamGroup::Adapters, Tensor::zeros([bottleneck]));
            s.insert(format!("{p}.up.w"), ParamGroup::Adapters, Tensor::zeros([bottleneck, h]));
            s.insert(format!("{p}.up.b"), ParamGroup::Adapters, Tensor::zeros([h]));
        }
    }
    Ok(AdapterSet {
        language: language.to_string(),
        hidden: h,
        bottleneck,
        enc_layers: cfg.enc_layers,
        dec_layers: cfg.dec_layers,
        parent_fingerprint: model.fingerprint(),
        params: s,
    })
}

impl<T: Scalar> AdapterSet<T> {
    pub fn layer(&self, side: Side, i: usize) -> Result<AdapterLayer<'_, T>> {
        let p = format!("{}.{i}", side.prefix());
        let get = |n: &str| {
            self.params
                .get(&format!("{p}.{n}"))
                .ok_or_else(|| Error::Incompatible(format!("adapter set `{}` has no layer {p}", self.language)))
        };
        Ok(AdapterLayer {
            ln_gain: get("ln.g")?,
            ln_bias: get("ln.b")?,
            w_down: get("down.w")?,
            b_down: get("down.b")?,
            w_up: get("up.w")?,
            b_up: get("up.b")?,
        })
    }

    pub fn has_delta(&self) -> bool {
        self.params.contains(DELTA_WEIGHT)
    }

    /// Adds a zero output-projection delta (new-language mode).
    pub fn add_output_projection_delta(&mut self, vocab: usize) {
        if !self.has_delta() {
            self.params.insert(DELTA_WEIGHT, ParamGroup::OutputProjection, Tensor::zeros([vocab, self.hidden]));
            self.params.insert(DELTA_BIAS, ParamGroup::OutputProjection, Tensor::zeros([vocab]));
        }
    }

    /// Number of adapter parameters in one layer: `2hb + b + h + 2h`.
    pub fn params_per_layer(&self) -> usize {
        2 * self.hidden * self.bottleneck + self.bottleneck + 3 * self.hidden
    }

    pub fn checksum(&self) -> String {
        self.params.checksum(|_| true)
    }

    pub fn cast<U: Scalar>(&self) -> AdapterSet<U> {
        AdapterSet {
            language: self.language.clone(),
            hidden: self.hidden,
            bottleneck: self.bottleneck,
            enc_layers: self.enc_layers,
            dec_layers: self.dec_layers,
            parent_fingerprint: self.parent_fingerprint.clone(),
            params: self.params.cast(),
        }
    }

    /// Shape check against a model, independent of the fingerprint.
    pub fn check_shape(&self, model: &Model<T>) -> Result<()> {
        let c = &model.cfg;
        if self.hidden != c.hidden || self.enc_layers != c.enc_layers || self.dec_layers != c.dec_layers {
            return Err(Error::Incompatible(format!(
                "adapter set `{}` is {}x({}+{}) but the model is {}x({}+{})",
                self.language, self.hidden, self.enc_layers, self.dec_layers, c.hidden, c.enc_layers, c.dec_layers
            )));
        }
        if let Some(d) = self.params.get(DELTA_WEIGHT) {
            if d.rows() != c.vocab_size {
                return Err(Error::Incompatible(format!("projection delta of `{}` has wrong vocabulary", self.language)));
            }
        }
        Ok(())
    }
}

/// Source-side encoder adapters and target-side decoder adapters.
#[derive(Clone, Copy, Debug)]
pub struct ActiveSelection<'a, T: Scalar = f32> {
    pub source_language: &'a str,
    pub target_language: &'a str,
    pub encoder: Option<&'a AdapterSet<T>>,
    pub decoder: Option<&'a AdapterSet<T>>,
}

impl<'a, T: Scalar> ActiveSelection<'a, T> {
    /// No adapters on either side.
    pub fn none(source_language: &'a str, target_language: &'a str) -> Self {
        Self { source_language, target_language, encoder: None, decoder: None }
    }

    /// Whether the target side carries an output-projection override.
    pub fn has_output_override(&self) -> bool {
        self.decoder.is_some_and(|d| d.has_delta())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdapterRegistry<T: Scalar = f32> {
    sets: BTreeMap<String, AdapterSet<T>>,
}

impl<T: Scalar> AdapterRegistry<T> {
    pub fn new() -> Self {
        Self { sets: BTreeMap::new() }
    }

    pub fn insert(&mut self, set: AdapterSet<T>) {
        self.sets.insert(set.language.clone(), set);
    }

    pub fn get(&self, lang: &str) -> Result<&AdapterSet<T>> {
        self.sets.get(lang).ok_or_else(|| Error::MissingAdapter(lang.to_string()))
    }

    pub fn get_mut(&mut self, lang: &str) -> Result<&mut AdapterSet<T>> {
        self.sets.get_mut(lang).ok_or_else(|| Error::MissingAdapter(lang.to_string()))
    }

    pub fn contains(&self, lang: &str) -> bool {
        self.sets.contains_key(lang)
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.sets.keys().map(String::as_str)
    }

    pub fn sets(&self) -> impl Iterator<Item = &AdapterSet<T>> {
        self.sets.values()
    }

    pub fn sets_mut(&mut self) -> impl Iterator<Item = &mut AdapterSet<T>> {
        self.sets.values_mut()
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn cast<U: Scalar>(&self) -> AdapterRegistry<U> {
        AdapterRegistry { sets: self.sets.iter().map(|(k, v)| (k.clone(), v.cast())).collect() }
    }

    /// Binds `D^E` of the source and `D^D` of the target, checking both
    /// against the model.
    pub fn compose<'a>(&'a self, model: &Model<T>, source: &'a str, target: &'a str) -> Result<ActiveSelection<'a, T>> {
        self.compose_with(&model.fingerprint(), model, source, target)
    }

    /// As [`compose`](Self::compose) with a precomputed model fingerprint.
    pub fn compose_with<'a>(
        &'a self,
        fingerprint: &str,
        model: &Model<T>,
        source: &'a str,
        target: &'a str,
    ) -> Result<ActiveSelection<'a, T>> {
        let enc = self.get(source)?;
        let dec = self.get(target)?;
        for s in [enc, dec] {
            s.check_shape(model)?;
            if s.parent_fingerprint != fingerprint {
                return Err(Error::Incompatible(format!(
                    "adapter set `{}` was trained for a different parent model",
                    s.language
                )));
            }
        }
        Ok(ActiveSelection { source_language: source, target_language: target, encoder: Some(enc), decoder: Some(dec) })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_layer() {
        let g = Tensor::<f64>::full([2], 1.0);
        let b = Tensor::<f64>::zeros([2]);
        let wd = Tensor::from_vec([2, 1], vec![1.0, 0.0]).unwrap();
        let bd = Tensor::zeros([1]);
        let wu = Tensor::from_vec([1, 2], vec![0.5, 0.5]).unwrap();
        let bu = Tensor::zeros([2]);
        let layer = AdapterLayer { ln_gain: &g, ln_bias: &b, w_down: &wd, b_down: &bd, w_up: &wu, b_up: &bu };
        let out = adapter_forward(&[1.0, -1.0], &layer).unwrap();
        // LN(1,-1) = (1,-1) up to the 1e-5 epsilon.
        assert!((out[0] - 1.5).abs() < 1e-5 && (out[1] + 0.5).abs() < 1e-5);
        assert!(matches!(adapter_forward(&[1.0], &layer), Err(Error::Incompatible(_))));
    }
}
