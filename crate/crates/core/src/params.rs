use std::collections::HashMap;
use std::fmt;

use dadapt_numcore::{Graph, Scalar, Tensor, Var};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Named parameter subsets that freeze policies select on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Embeddings,
    OutputProjection,
    EncSelfAttn,
    DecSelfAttn,
    CrossAttn,
    EncFfn,
    DecFfn,
    LayerNorms,
    Adapters,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 9] = [
        ParamGroup::Embeddings,
        ParamGroup::OutputProjection,
        ParamGroup::EncSelfAttn,
        ParamGroup::DecSelfAttn,
        ParamGroup::CrossAttn,
        ParamGroup::EncFfn,
        ParamGroup::DecFfn,
        ParamGroup::LayerNorms,
        ParamGroup::Adapters,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Embeddings => "embeddings",
            ParamGroup::OutputProjection => "output_projection",
            ParamGroup::EncSelfAttn => "enc_self_attn",
            ParamGroup::DecSelfAttn => "dec_self_attn",
            ParamGroup::CrossAttn => "cross_attn",
            ParamGroup::EncFfn => "enc_ffn",
            ParamGroup::DecFfn => "dec_ffn",
            ParamGroup::LayerNorms => "layer_norms",
            ParamGroup::Adapters => "adapters",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|g| g.name() == s)
    }
}

impl fmt::Display for ParamGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamEntry<T> {
    pub name: String,
    pub group: ParamGroup,
    pub tensor: Tensor<T>,
}

/// Ordered, name-indexed collection of parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T = f32> {
    entries: Vec<ParamEntry<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { entries: Vec::new(), index: HashMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, group: ParamGroup, tensor: Tensor<T>) {
        let name = name.into();
        if let Some(&i) = self.index.get(&name) {
            self.entries[i] = ParamEntry { name, group, tensor };
        } else {
            self.index.insert(name.clone(), self.entries.len());
            self.entries.push(ParamEntry { name, group, tensor });
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.entries[i].tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.index.get(name).map(|&i| &mut self.entries[i].tensor)
    }

    pub fn entry(&self, name: &str) -> Option<&ParamEntry<T>> {
        self.index.get(name).map(|&i| &self.entries[i])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn entries(&self) -> &[ParamEntry<T>] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> impl Iterator<Item = &mut ParamEntry<T>> {
        self.entries.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|e| ParamEntry { name: e.name.clone(), group: e.group, tensor: e.tensor.cast() })
                .collect(),
            index: self.index.clone(),
        }
    }

    /// SHA-256 over names, shapes and exact value bits of the selected entries.
    pub fn checksum(&self, mut keep: impl FnMut(&ParamEntry<T>) -> bool) -> String {
        let mut h = Sha256::new();
        for e in self.entries.iter().filter(|e| keep(e)) {
            h.update(e.name.as_bytes());
            h.update([0u8]);
            for d in e.tensor.shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for x in e.tensor.data() {
                h.update(x.as_f64().to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    /// Records every entry as a graph leaf.
    pub fn bind(&self, g: &mut Graph<T>, mut trainable: impl FnMut(&ParamEntry<T>) -> bool) -> Bound {
        let vars = self.entries.iter().map(|e| g.param(&e.tensor, trainable(e))).collect();
        Bound { vars, index: self.index.clone() }
    }
}

/// Graph handles for one [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| Error::Incompatible(format!("parameter `{name}` is missing")))
    }

    pub fn try_var(&self, name: &str) -> Option<Var> {
        self.index.get(name).map(|&i| self.vars[i])
    }

    /// Vars in store order.
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_names_round_trip() {
        for g in ParamGroup::ALL {
            assert_eq!(ParamGroup::from_name(g.name()), Some(g));
        }
    }

    #[test]
    fn checksum_tracks_bits() {
        let mut s = ParamStore::<f32>::new();
        s.insert("a", ParamGroup::Embeddings, Tensor::full([2], 1.0));
        let c0 = s.checksum(|_| true);
        s.get_mut("a").unwrap().data_mut()[1] = -0.0;
        assert_ne!(c0, s.checksum(|_| true));
        s.get_mut("a").unwrap().data_mut()[1] = 1.0;
        assert_eq!(c0, s.checksum(|_| true));
    }
}
