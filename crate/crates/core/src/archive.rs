//! Binary tensor container shared by adapter files (`DADP`) and model
//! checkpoints (`DMDL`).
//!
//! Layout: 4-byte magic, u32 version, u64 metadata length, UTF-8 JSON
//! metadata (including a tensor manifest of names, shapes and offsets), then
//! the raw little-endian f32 payloads in manifest order. All integers are
//! little-endian.

use std::fs;
use std::io::Write;
use std::path::Path;

use dadapt_numcore::Tensor;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::adapters::AdapterSet;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig, LN_EPS};
use crate::params::{ParamGroup, ParamStore};

pub const ADAPTER_MAGIC: [u8; 4] = *b"DADP";
pub const MODEL_MAGIC: [u8; 4] = *b"DMDL";
pub const VERSION: u32 = 1;

const HEADER: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<ParamGroup>,
    pub shape: Vec<usize>,
    /// Byte offset into the payload section.
    pub offset: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub group: Option<ParamGroup>,
    pub tensor: Tensor<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub magic: [u8; 4],
    /// Free-form metadata; the `tensors` key is reserved for the manifest.
    pub meta: serde_json::Map<String, Value>,
    pub records: Vec<Record>,
}

impl Container {
    pub fn new(magic: [u8; 4]) -> Self {
        Self { magic, meta: serde_json::Map::new(), records: Vec::new() }
    }

    pub fn push_store(&mut self, prefix: &str, store: &ParamStore<f32>) {
        for e in store.entries() {
            self.records.push(Record {
                name: format!("{prefix}{}", e.name),
                group: Some(e.group),
                tensor: e.tensor.clone(),
            });
        }
    }

    /// Entries whose name starts with `prefix`, with the prefix removed.
    pub fn take_store(&self, prefix: &str) -> Result<ParamStore<f32>> {
        let mut s = ParamStore::new();
        for r in self.records.iter().filter(|r| r.name.starts_with(prefix)) {
            let group = r.group.ok_or_else(|| Error::Format(format!("tensor `{}` has no group", r.name)))?;
            s.insert(&r.name[prefix.len()..], group, r.tensor.clone());
        }
        Ok(s)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.records.iter().find(|r| r.name == name).map(|r| &r.tensor)
    }

    pub fn meta_str(&self, key: &str) -> Result<&str> {
        self.meta.get(key).and_then(Value::as_str).ok_or_else(|| Error::Format(format!("metadata `{key}` missing")))
    }

    pub fn meta_u64(&self, key: &str) -> Result<u64> {
        self.meta.get(key).and_then(Value::as_u64).ok_or_else(|| Error::Format(format!("metadata `{key}` missing")))
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut manifest = Vec::with_capacity(self.records.len());
        let mut offset = 0u64;
        for r in &self.records {
            manifest.push(TensorInfo {
                name: r.name.clone(),
                group: r.group,
                shape: r.tensor.shape().to_vec(),
                offset,
            });
            offset += 4 * r.tensor.len() as u64;
        }
        let mut meta = self.meta.clone();
        meta.insert("tensors".into(), serde_json::to_value(manifest)?);
        let meta_bytes = serde_json::to_vec(&Value::Object(meta))?;
        let mut out = Vec::with_capacity(HEADER + meta_bytes.len() + offset as usize);
        out.extend_from_slice(&self.magic);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(meta_bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta_bytes);
        for r in &self.records {
            out.extend_from_slice(&r.tensor.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8], expected_magic: [u8; 4]) -> Result<Self> {
        if bytes.len() < HEADER {
            return Err(Error::Format("file is shorter than the header".into()));
        }
        if bytes[..4] != expected_magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&bytes[..4]),
                String::from_utf8_lossy(&expected_magic)
            )));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let meta_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        let meta_end = (HEADER as u64)
            .checked_add(meta_len)
            .filter(|&e| e <= bytes.len() as u64)
            .ok_or_else(|| Error::Format("truncated metadata".into()))? as usize;
        let meta: Value = serde_json::from_slice(&bytes[HEADER..meta_end])
            .map_err(|e| Error::Format(format!("metadata is not valid JSON: {e}")))?;
        let Value::Object(mut meta) = meta else {
            return Err(Error::Format("metadata is not a JSON object".into()));
        };
        let manifest: Vec<TensorInfo> = serde_json::from_value(meta.remove("tensors").unwrap_or(Value::Null))
            .map_err(|e| Error::Format(format!("bad tensor manifest: {e}")))?;
        let payload = &bytes[meta_end..];
        let mut expected = 0u64;
        let mut records = Vec::with_capacity(manifest.len());
        for info in manifest {
            if info.offset != expected {
                return Err(Error::Format(format!("tensor `{}` is not contiguous", info.name)));
            }
            let numel = info
                .shape
                .iter()
                .try_fold(1u64, |a, &d| a.checked_mul(d as u64))
                .ok_or_else(|| Error::Format("tensor shape overflows".into()))?;
            let end = expected
                .checked_add(numel * 4)
                .filter(|&e| e <= payload.len() as u64)
                .ok_or_else(|| Error::Format(format!("payload truncated in tensor `{}`", info.name)))?;
            let tensor = Tensor::from_le_bytes(info.shape.clone(), &payload[expected as usize..end as usize])
                .map_err(|e| Error::Format(e.to_string()))?;
            records.push(Record { name: info.name, group: info.group, tensor });
            expected = end;
        }
        if expected != payload.len() as u64 {
            return Err(Error::Format("trailing bytes after the last tensor".into()));
        }
        Ok(Self { magic: expected_magic, meta, records })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode()?)
    }

    pub fn read(path: &Path, expected_magic: [u8; 4]) -> Result<Self> {
        Self::decode(&fs::read(path)?, expected_magic)
    }
}

/// Writes to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Hex sha256 over length-prefixed parts.
pub fn digest(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(h.finalize())
}

pub fn adapter_container(set: &AdapterSet) -> Container {
    let mut c = Container::new(ADAPTER_MAGIC);
    c.meta.insert("language".into(), set.language.clone().into());
    c.meta.insert("hidden".into(), set.hidden.into());
    c.meta.insert("bottleneck".into(), set.bottleneck.into());
    c.meta.insert("enc_layers".into(), set.enc_layers.into());
    c.meta.insert("dec_layers".into(), set.dec_layers.into());
    c.meta.insert("fingerprint".into(), set.parent_fingerprint.clone().into());
    c.meta.insert("ln_eps".into(), LN_EPS.into());
    c.meta.insert("ln_variance".into(), "population".into());
    c.push_store("", &set.params);
    c
}

pub fn adapter_from_container(c: &Container) -> Result<AdapterSet> {
    let set = AdapterSet {
        language: c.meta_str("language")?.to_string(),
        hidden: c.meta_u64("hidden")? as usize,
        bottleneck: c.meta_u64("bottleneck")? as usize,
        enc_layers: c.meta_u64("enc_layers")? as usize,
        dec_layers: c.meta_u64("dec_layers")? as usize,
        parent_fingerprint: c.meta_str("fingerprint")?.to_string(),
        params: c.take_store("")?,
    };
    for side in [crate::adapters::Side::Encoder, crate::adapters::Side::Decoder] {
        let n = if side == crate::adapters::Side::Encoder { set.enc_layers } else { set.dec_layers };
        for i in 0..n {
            let l = set.layer(side, i).map_err(|e| Error::Format(e.to_string()))?;
            if l.hidden() != set.hidden || l.bottleneck() != set.bottleneck || l.w_up.shape() != [set.bottleneck, set.hidden] {
                return Err(Error::Format(format!("adapter layer {}.{i} has inconsistent shapes", side.prefix())));
            }
        }
    }
    Ok(set)
}

pub fn save_adapter_set(set: &AdapterSet, path: &Path) -> Result<()> {
    adapter_container(set).write(path)
}

pub fn load_adapter_set(path: &Path) -> Result<AdapterSet> {
    adapter_from_container(&Container::read(path, ADAPTER_MAGIC)?)
}

pub fn model_container(model: &Model) -> Result<Container> {
    let mut c = Container::new(MODEL_MAGIC);
    c.meta.insert("kind".into(), "model".into());
    c.meta.insert("config".into(), serde_json::to_value(&model.cfg)?);
    c.meta.insert("fingerprint".into(), model.fingerprint().into());
    c.push_store("", &model.params);
    Ok(c)
}

pub fn model_from_container(c: &Container, prefix: &str) -> Result<Model> {
    let cfg: ModelConfig = serde_json::from_value(c.meta.get("config").cloned().unwrap_or(Value::Null))
        .map_err(|e| Error::Format(format!("bad model config: {e}")))?;
    cfg.validate()?;
    let params = c.take_store(prefix)?;
    let reference = crate::model::build_model(&cfg, 0)?;
    for e in reference.params.entries() {
        match params.get(&e.name) {
            Some(t) if t.shape() == e.tensor.shape() => {}
            _ => return Err(Error::Format(format!("model tensor `{}` is missing or misshapen", e.name))),
        }
    }
    if params.len() != reference.params.len() {
        return Err(Error::Format("model file has unexpected tensors".into()));
    }
    Ok(Model { cfg, params })
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    model_container(model)?.write(path)
}

pub fn load_model(path: &Path) -> Result<Model> {
    model_from_container(&Container::read(path, MODEL_MAGIC)?, "")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_round_trip() {
        let mut c = Container::new(MODEL_MAGIC);
        c.meta.insert("x".into(), 3.into());
        c.records.push(Record { name: "a".into(), group: None, tensor: Tensor::full([2, 2], 1.5) });
        c.records.push(Record {
            name: "b".into(),
            group: Some(ParamGroup::Adapters),
            tensor: Tensor::from_vec([3], vec![-0.0, f32::MAX, 1e-40]).unwrap(),
        });
        let bytes = c.encode().unwrap();
        let d = Container::decode(&bytes, MODEL_MAGIC).unwrap();
        assert_eq!(d.records.len(), 2);
        assert!(d.records[1].tensor.bit_eq(&c.records[1].tensor));
        assert_eq!(d.meta_u64("x").unwrap(), 3);
    }

    #[test]
    fn truncation_and_magic_are_rejected() {
        let mut c = Container::new(ADAPTER_MAGIC);
        c.records.push(Record { name: "a".into(), group: None, tensor: Tensor::full([4], 1.0) });
        let bytes = c.encode().unwrap();
        for cut in [0, 3, 15, bytes.len() - 1] {
            assert!(matches!(Container::decode(&bytes[..cut], ADAPTER_MAGIC), Err(Error::Format(_))));
        }
        assert!(matches!(Container::decode(&bytes, MODEL_MAGIC), Err(Error::Format(_))));
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(matches!(Container::decode(&longer, ADAPTER_MAGIC), Err(Error::Format(_))));
    }
}
