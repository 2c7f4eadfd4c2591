//! Staged training: base denoising pretraining, per-language denoising
//! adapters, cross-attention transfer, new-language extension and offline
//! back-translation fine-tuning, all under explicit freeze policies.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use dadapt_numcore::{adam_step, lr_at, AdamConfig, AdamState, Graph, LrSchedule, Moments, ParamUpdate, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adapters::{new_adapter_set, AdapterRegistry, AdapterSet, TASK_ADAPTER};
use crate::archive::{Container, Record, MODEL_MAGIC};
use crate::batch::{Example, PaddedBatch, TokenId};
use crate::corpus::{derive_seed, Mixture, Task, TaskKind, Vocab};
use crate::error::{Error, Result};
use crate::model::{forward_loss, BoundSelection, Model, Regularizer};
use crate::noising::{span_mask, NoiseSpec};
use crate::params::{Bound, ParamGroup};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezePolicy {
    PretrainAll,
    AdaptersOnly,
    AdaptersPlusOutputProj,
    CrossAttnOnly,
    /// Adapters and cross-attention together (task adapters, and the
    /// adapter variants of back-translation fine-tuning).
    CrossAttnPlusAdapters,
    FullFinetune,
}

/// Resolved trainable groups of a policy, split by owner: the shared model
/// or the adapter sets (which also hold projection deltas).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FreezeMask {
    pub policy: FreezePolicy,
    pub model_groups: BTreeSet<ParamGroup>,
    pub adapter_groups: BTreeSet<ParamGroup>,
}

impl FreezeMask {
    pub fn new(policy: FreezePolicy) -> Self {
        use ParamGroup::*;
        let all_model: BTreeSet<ParamGroup> = ParamGroup::ALL.into_iter().filter(|g| *g != Adapters).collect();
        let (model_groups, adapter_groups) = match policy {
            FreezePolicy::PretrainAll | FreezePolicy::FullFinetune => (all_model, BTreeSet::new()),
            FreezePolicy::AdaptersOnly => (BTreeSet::new(), [Adapters].into()),
            FreezePolicy::AdaptersPlusOutputProj => (BTreeSet::new(), [Adapters, OutputProjection].into()),
            FreezePolicy::CrossAttnOnly => ([CrossAttn].into(), BTreeSet::new()),
            FreezePolicy::CrossAttnPlusAdapters => ([CrossAttn].into(), [Adapters].into()),
        };
        Self { policy, model_groups, adapter_groups }
    }

    /// Union of trainable groups.
    pub fn groups(&self) -> BTreeSet<ParamGroup> {
        self.model_groups.union(&self.adapter_groups).copied().collect()
    }

    pub fn model_trains(&self, g: ParamGroup) -> bool {
        self.model_groups.contains(&g)
    }

    pub fn adapter_trains(&self, g: ParamGroup) -> bool {
        self.adapter_groups.contains(&g)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointSelection {
    BestBleu,
    Last,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_tokens: usize,
    pub update_frequency: usize,
    pub total_updates: u64,
    pub max_lr: f64,
    pub warmup_updates: u64,
    #[serde(default = "one")]
    pub decay_power: f64,
    pub betas: (f64, f64),
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub label_smoothing: f64,
    pub dropout: f64,
    pub attn_dropout: f64,
    pub temperature: f64,
    pub seed: u64,
    /// Updates between checkpoints; 0 disables them.
    pub checkpoint_interval: u64,
    /// Updates between validations; 0 validates only at the end.
    pub validation_interval: u64,
    pub checkpoint_selection: CheckpointSelection,
}

fn one() -> f64 {
    1.0
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_tokens: 4096,
            update_frequency: 5,
            total_updates: 120_000,
            max_lr: 1e-4,
            warmup_updates: 4000,
            decay_power: 1.0,
            betas: (0.9, 0.98),
            adam_eps: 1e-8,
            weight_decay: 0.01,
            label_smoothing: 0.2,
            dropout: 0.3,
            attn_dropout: 0.0,
            temperature: 5.0,
            seed: 1,
            checkpoint_interval: 0,
            validation_interval: 0,
            checkpoint_selection: CheckpointSelection::Last,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> Result<LrSchedule> {
        let s = LrSchedule {
            max_lr: self.max_lr,
            warmup_steps: self.warmup_updates,
            total_steps: self.total_updates,
            decay_power: self.decay_power,
        };
        s.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(s)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { beta1: self.betas.0, beta2: self.betas.1, eps: self.adam_eps, weight_decay: self.weight_decay }
    }

    pub fn validate(&self) -> Result<()> {
        if self.update_frequency == 0 {
            return Err(Error::Config("update_frequency must be at least 1".into()));
        }
        if self.total_updates > 0 {
            self.schedule()?;
        }
        if !(0.0..1.0).contains(&self.dropout) || !(0.0..1.0).contains(&self.attn_dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(Error::Config("label_smoothing must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// How adapters are bound for each batch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AdapterBinding {
    None,
    /// `compose(src, tgt)` from the registry.
    PerLanguage,
    /// One set on both sides for every language.
    Shared(String),
}

/// Optimizer progress; together with model and adapters it makes a run
/// resumable bit-exactly.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct TrainState {
    pub step: u64,
    pub adam: AdamState<f32>,
    pub best_score: Option<f64>,
    pub best_step: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    /// Mean loss of each update.
    pub losses: Vec<f64>,
    /// Batches drawn per task (index-aligned with the mixture).
    pub task_counts: Vec<usize>,
    pub validations: Vec<(u64, f64)>,
    pub best_step: Option<u64>,
}

/// Everything one training run needs.
pub struct TrainJob<'a> {
    pub model: &'a mut Model,
    pub registry: &'a mut AdapterRegistry,
    pub mixture: &'a Mixture,
    pub binding: AdapterBinding,
    pub mask: FreezeMask,
    pub cfg: &'a TrainConfig,
    pub noise: Option<&'a NoiseSpec>,
    pub vocab: &'a Vocab,
    /// Where periodic checkpoints go, if enabled.
    pub checkpoint_path: Option<PathBuf>,
}

/// Validation score (higher is better) of the current parameters.
pub type Validator<'v> = dyn FnMut(&Model, &AdapterRegistry) -> Result<f64> + 'v;

fn update_rng(seed: u64, step: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &["update", &step.to_string()]))
}

fn adapter_key(lang: &str, name: &str) -> String {
    format!("adapters.{lang}.{name}")
}

fn model_key(name: &str) -> String {
    format!("model.{name}")
}

/// Builds the batch for one draw, corrupting sources of denoising tasks.
fn materialize(task: &Task, idx: &[usize], noise: Option<&NoiseSpec>, vocab: &Vocab, rng: &mut ChaCha8Rng) -> Result<PaddedBatch> {
    let examples: Vec<Example> = match task.kind {
        TaskKind::Denoise => {
            let spec = noise.ok_or_else(|| Error::Config("denoising task without a noise spec".into()))?;
            idx.iter()
                .map(|&i| {
                    let t = &task.examples[i].tgt;
                    Example { src: span_mask(t, spec, rng).tokens, tgt: t.clone() }
                })
                .collect()
        }
        TaskKind::Translate => idx.iter().map(|&i| task.examples[i].clone()).collect(),
    };
    let refs: Vec<&Example> = examples.iter().collect();
    PaddedBatch::build(&refs, vocab.tag(&task.src_lang)?, vocab.tag(&task.tgt_lang)?)
}

/// Runs `job` from `state.step` up to `cfg.total_updates`.
pub fn train(job: &mut TrainJob<'_>, state: &mut TrainState, mut validator: Option<&mut Validator<'_>>) -> Result<TrainLog> {
    let cfg = job.cfg;
    cfg.validate()?;
    let mut log = TrainLog { task_counts: vec![0; job.mixture.tasks.len()], ..TrainLog::default() };
    if cfg.total_updates == 0 || state.step >= cfg.total_updates {
        return Ok(log);
    }
    let sched = cfg.schedule()?;
    let adam = cfg.adam();
    if job.binding == AdapterBinding::PerLanguage {
        let fp = job.model.fingerprint();
        for l in job.mixture.languages() {
            job.registry.compose_with(&fp, job.model, l, l)?;
        }
    }
    if let AdapterBinding::Shared(name) = &job.binding {
        job.registry.get(name)?.check_shape(job.model)?;
    }
    let mut best: Option<(Model, AdapterRegistry)> = None;
    while state.step < cfg.total_updates {
        let mut rng = update_rng(cfg.seed, state.step);
        let mut grads: HashMap<String, Vec<f32>> = HashMap::new();
        let mut loss_sum = 0.0;
        let scale = 1.0 / cfg.update_frequency as f32;
        for _ in 0..cfg.update_frequency {
            let (t, idx) = job.mixture.sample(&mut rng);
            log.task_counts[t] += 1;
            let task = &job.mixture.tasks[t];
            let batch = materialize(task, idx, job.noise, job.vocab, &mut rng)?;
            let loss = micro_step(job, task, &batch, &mut rng, &mut grads, scale)?;
            loss_sum += loss;
        }
        apply_update(job, state, grads, lr_at(state.step + 1, &sched)?, &adam)?;
        state.step += 1;
        log.losses.push(loss_sum / cfg.update_frequency as f64);
        let every = (cfg.total_updates / 10).max(1);
        if state.step % every == 0 {
            let tail = &log.losses[log.losses.len().saturating_sub(every as usize)..];
            log::info!("update {}/{}: loss {:.4}", state.step, cfg.total_updates, tail.iter().sum::<f64>() / tail.len() as f64);
        }

        let validate_now = cfg.validation_interval > 0 && state.step % cfg.validation_interval == 0
            || state.step == cfg.total_updates;
        if validate_now && cfg.checkpoint_selection == CheckpointSelection::BestBleu {
            if let Some(v) = validator.as_deref_mut() {
                let score = v(job.model, job.registry)?;
                log.validations.push((state.step, score));
                if state.best_score.is_none_or(|b| score > b) {
                    state.best_score = Some(score);
                    state.best_step = state.step;
                    best = Some((job.model.clone(), job.registry.clone()));
                }
            }
        }
        if cfg.checkpoint_interval > 0 && state.step % cfg.checkpoint_interval == 0 {
            if let Some(path) = &job.checkpoint_path {
                save_checkpoint(path, job.model, job.registry, state, cfg)?;
            }
        }
    }
    if let Some((m, r)) = best {
        if state.best_step != state.step {
            *job.model = m;
            *job.registry = r;
        }
        log.best_step = Some(state.best_step);
    }
    Ok(log)
}

fn micro_step(
    job: &TrainJob<'_>,
    task: &Task,
    batch: &PaddedBatch,
    rng: &mut ChaCha8Rng,
    grads: &mut HashMap<String, Vec<f32>>,
    scale: f32,
) -> Result<f64> {
    let mut g = Graph::<f32>::new();
    let mask = &job.mask;
    let mv = job.model.params.bind(&mut g, |e| mask.model_trains(e.group));
    let mut bound: BTreeMap<String, Bound> = BTreeMap::new();
    let (enc_lang, dec_lang) = match &job.binding {
        AdapterBinding::None => (None, None),
        AdapterBinding::PerLanguage => (Some(task.src_lang.clone()), Some(task.tgt_lang.clone())),
        AdapterBinding::Shared(n) => (Some(n.clone()), Some(n.clone())),
    };
    for l in enc_lang.iter().chain(dec_lang.iter()) {
        if !bound.contains_key(l) {
            let set = job.registry.get(l)?;
            bound.insert(l.clone(), set.params.bind(&mut g, |e| mask.adapter_trains(e.group)));
        }
    }
    let sel = BoundSelection {
        encoder: enc_lang.as_ref().map(|l| &bound[l]),
        decoder: dec_lang.as_ref().map(|l| &bound[l]),
    };
    let mut reg = Regularizer { dropout: job.cfg.dropout, attn_dropout: job.cfg.attn_dropout, rng };
    let loss = forward_loss(&mut g, &job.model.cfg, &mv, sel, batch, job.cfg.label_smoothing, Some(&mut reg))?;
    let value = g.value(loss)[0] as f64;
    if !value.is_finite() {
        return Err(Error::Numeric(dadapt_numcore::NumError::NonFiniteLoss));
    }
    let mut gr = g.backward(loss)?;
    let mut add = |key: String, v: Vec<f32>| {
        let acc = grads.entry(key).or_insert_with(|| vec![0.0; v.len()]);
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x * scale;
        }
    };
    for (e, var) in job.model.params.entries().iter().zip(mv.vars()) {
        if let Some(v) = gr.take(*var) {
            add(model_key(&e.name), v);
        }
    }
    for (lang, b) in &bound {
        let set = job.registry.get(lang)?;
        for (e, var) in set.params.entries().iter().zip(b.vars()) {
            if let Some(v) = gr.take(*var) {
                add(adapter_key(lang, &e.name), v);
            }
        }
    }
    Ok(value)
}

/// One Adam step over every trainable tensor that took part in the update.
/// Tensors outside the batch's selection keep their values and moments.
fn apply_update(
    job: &mut TrainJob<'_>,
    state: &mut TrainState,
    grads: HashMap<String, Vec<f32>>,
    lr: f64,
    adam: &AdamConfig,
) -> Result<()> {
    let mask = job.mask.clone();
    let mut names: Vec<String> = Vec::new();
    let mut slots: Vec<&mut [f32]> = Vec::new();
    for e in job.model.params.entries_mut() {
        let key = model_key(&e.name);
        if mask.model_trains(e.group) && grads.contains_key(&key) {
            names.push(key);
            slots.push(e.tensor.data_mut());
        }
    }
    for set in job.registry.sets_mut() {
        for e in set.params.entries_mut() {
            let key = adapter_key(&set.language, &e.name);
            if mask.adapter_trains(e.group) && grads.contains_key(&key) {
                names.push(key);
                slots.push(e.tensor.data_mut());
            }
        }
    }
    let mut ups: Vec<ParamUpdate<'_, f32>> = names
        .iter()
        .zip(slots)
        .map(|(n, v)| ParamUpdate { name: n.as_str(), value: v, grad: Some(grads[n].as_slice()) })
        .collect();
    adam_step(&mut ups, &mut state.adam, lr, adam)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Checkpoints

pub fn save_checkpoint(path: &Path, model: &Model, registry: &AdapterRegistry, state: &TrainState, cfg: &TrainConfig) -> Result<()> {
    let mut c = Container::new(MODEL_MAGIC);
    c.meta.insert("kind".into(), "checkpoint".into());
    c.meta.insert("config".into(), serde_json::to_value(&model.cfg)?);
    c.meta.insert("train_config".into(), serde_json::to_value(cfg)?);
    c.meta.insert("step".into(), state.step.into());
    c.meta.insert("adam_t".into(), state.adam.t.into());
    c.meta.insert("best_score".into(), serde_json::to_value(state.best_score)?);
    c.meta.insert("best_step".into(), state.best_step.into());
    c.meta.insert("fingerprint".into(), model.fingerprint().into());
    let mut adapters = serde_json::Map::new();
    for set in registry.sets() {
        adapters.insert(
            set.language.clone(),
            serde_json::json!({
                "hidden": set.hidden, "bottleneck": set.bottleneck,
                "enc_layers": set.enc_layers, "dec_layers": set.dec_layers,
                "fingerprint": set.parent_fingerprint,
            }),
        );
    }
    c.meta.insert("adapters".into(), adapters.into());
    c.push_store("model.", &model.params);
    for set in registry.sets() {
        c.push_store(&format!("adapters.{}.", set.language), &set.params);
    }
    for (k, m) in &state.adam.moments {
        let n = m.m.len();
        c.records.push(Record { name: format!("adam.m.{k}"), group: None, tensor: Tensor::from_vec([n], m.m.clone())? });
        c.records.push(Record { name: format!("adam.v.{k}"), group: None, tensor: Tensor::from_vec([n], m.v.clone())? });
    }
    c.write(path)
}

pub fn load_checkpoint(path: &Path) -> Result<(Model, AdapterRegistry, TrainState)> {
    let c = Container::read(path, MODEL_MAGIC)?;
    if c.meta_str("kind")? != "checkpoint" {
        return Err(Error::Format("file is not a training checkpoint".into()));
    }
    let model = crate::archive::model_from_container(&c, "model.")?;
    let mut registry = AdapterRegistry::new();
    if let Some(serde_json::Value::Object(sets)) = c.meta.get("adapters") {
        for (lang, info) in sets {
            let get = |k: &str| info.get(k).and_then(|v| v.as_u64()).map(|v| v as usize);
            let set = AdapterSet {
                language: lang.clone(),
                hidden: get("hidden").ok_or_else(|| Error::Format("adapter metadata".into()))?,
                bottleneck: get("bottleneck").ok_or_else(|| Error::Format("adapter metadata".into()))?,
                enc_layers: get("enc_layers").ok_or_else(|| Error::Format("adapter metadata".into()))?,
                dec_layers: get("dec_layers").ok_or_else(|| Error::Format("adapter metadata".into()))?,
                parent_fingerprint: info.get("fingerprint").and_then(|v| v.as_str()).unwrap_or_default().to_string(),
                params: c.take_store(&format!("adapters.{lang}."))?,
            };
            registry.insert(set);
        }
    }
    let mut adam = AdamState { t: c.meta_u64("adam_t")?, moments: BTreeMap::new() };
    for r in c.records.iter().filter(|r| r.name.starts_with("adam.m.")) {
        let key = &r.name["adam.m.".len()..];
        let v = c.get(&format!("adam.v.{key}")).ok_or_else(|| Error::Format(format!("second moment of `{key}` missing")))?;
        adam.moments.insert(key.to_string(), Moments { m: r.tensor.data().to_vec(), v: v.data().to_vec() });
    }
    let state = TrainState {
        step: c.meta_u64("step")?,
        adam,
        best_score: c.meta.get("best_score").and_then(|v| v.as_f64()),
        best_step: c.meta_u64("best_step")?,
    };
    Ok((model, registry, state))
}

// ---------------------------------------------------------------------------
// Data helpers

/// Denoising task `g(T) → T` over a monolingual corpus.
pub fn denoise_task(lang: &str, mono: &[Vec<TokenId>], max_tokens: usize) -> Result<Task> {
    let ex = mono.iter().map(|s| Example { src: s.clone(), tgt: s.clone() }).collect();
    Task::new(lang, lang, TaskKind::Denoise, ex, max_tokens)
}

/// Translation task over `(src, tgt)` pairs.
pub fn translate_task(src: &str, tgt: &str, pairs: impl IntoIterator<Item = (Vec<TokenId>, Vec<TokenId>)>, max_tokens: usize) -> Result<Task> {
    let ex = pairs.into_iter().map(|(s, t)| Example { src: s, tgt: t }).collect();
    Task::new(src, tgt, TaskKind::Translate, ex, max_tokens)
}

/// Both directions of every pivot-centric parallel corpus.
pub fn parallel_tasks(
    pivot: &str,
    parallel: &BTreeMap<String, Vec<(Vec<TokenId>, Vec<TokenId>)>>,
    max_tokens: usize,
) -> Result<Vec<Task>> {
    let mut tasks = Vec::new();
    for (lang, pairs) in parallel {
        tasks.push(translate_task(lang, pivot, pairs.iter().map(|(p, x)| (x.clone(), p.clone())), max_tokens)?);
        tasks.push(translate_task(pivot, lang, pairs.iter().cloned(), max_tokens)?);
    }
    Ok(tasks)
}

// ---------------------------------------------------------------------------
// Stages

/// Stage 0: text-infilling pretraining of every parameter on the
/// monolingual corpora of `langs`, same-language tag on both sides.
pub fn pretrain_base(
    model: &mut Model,
    mono: &BTreeMap<String, Vec<Vec<TokenId>>>,
    langs: &[String],
    noise: &NoiseSpec,
    vocab: &Vocab,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    let tasks = langs
        .iter()
        .map(|l| {
            let data = mono.get(l).ok_or_else(|| Error::Data(format!("no monolingual data for `{l}`")))?;
            denoise_task(l, data, cfg.max_tokens)
        })
        .collect::<Result<Vec<_>>>()?;
    let mixture = Mixture::new(tasks, cfg.temperature)?;
    let mut registry = AdapterRegistry::new();
    let mut job = TrainJob {
        model,
        registry: &mut registry,
        mixture: &mixture,
        binding: AdapterBinding::None,
        mask: FreezeMask::new(FreezePolicy::PretrainAll),
        cfg,
        noise: Some(noise),
        vocab,
        checkpoint_path: None,
    };
    train(&mut job, &mut TrainState::default(), None)
}

/// Stage 1: trains a fresh adapter set for `lang` on `g(T) → T` with the
/// base model frozen; the same set is bound on both sides.
#[allow(clippy::too_many_arguments)]
pub fn train_denoising_adapters(
    base: &Model,
    lang: &str,
    mono: &[Vec<TokenId>],
    noise: &NoiseSpec,
    vocab: &Vocab,
    cfg: &TrainConfig,
    bottleneck: usize,
    new_language: bool,
) -> Result<(AdapterSet, TrainLog)> {
    let mut set = new_adapter_set(base, lang, bottleneck, derive_seed(cfg.seed, &["adapter-init", lang]))?;
    let policy = if new_language {
        set.add_output_projection_delta(base.cfg.vocab_size);
        FreezePolicy::AdaptersPlusOutputProj
    } else {
        FreezePolicy::AdaptersOnly
    };
    let mut registry = AdapterRegistry::new();
    registry.insert(set);
    let mixture = Mixture::new(vec![denoise_task(lang, mono, cfg.max_tokens)?], cfg.temperature)?;
    let mut model = base.clone();
    let mut job = TrainJob {
        model: &mut model,
        registry: &mut registry,
        mixture: &mixture,
        binding: AdapterBinding::PerLanguage,
        mask: FreezeMask::new(policy),
        cfg,
        noise: Some(noise),
        vocab,
        checkpoint_path: None,
    };
    let log = train(&mut job, &mut TrainState::default(), None)?;
    debug_assert_eq!(model.checksum(), base.checksum());
    let set = registry.get(lang)?.clone();
    Ok((set, log))
}

/// New-language extension: adapters plus a per-language output-projection
/// delta, trained on monolingual data against the base model.
pub fn add_new_language(
    base: &Model,
    lang: &str,
    mono: &[Vec<TokenId>],
    noise: &NoiseSpec,
    vocab: &Vocab,
    cfg: &TrainConfig,
    bottleneck: usize,
) -> Result<(AdapterSet, TrainLog)> {
    train_denoising_adapters(base, lang, mono, noise, vocab, cfg, bottleneck, true)
}

/// Stage 2: cross-attention fine-tuning on auxiliary parallel data with the
/// per-language adapters composed for every batch.
pub fn finetune_cross_attention(
    model: &mut Model,
    registry: &mut AdapterRegistry,
    tasks: Vec<Task>,
    vocab: &Vocab,
    cfg: &TrainConfig,
    validator: Option<&mut Validator<'_>>,
) -> Result<TrainLog> {
    let mixture = Mixture::new(tasks, cfg.temperature)?;
    let mut job = TrainJob {
        model,
        registry,
        mixture: &mixture,
        binding: AdapterBinding::PerLanguage,
        mask: FreezeMask::new(FreezePolicy::CrossAttnOnly),
        cfg,
        noise: None,
        vocab,
        checkpoint_path: None,
    };
    train(&mut job, &mut TrainState::default(), validator)
}

/// Baseline transfer: full fine-tuning without adapters, or a single
/// language-agnostic adapter set trained together with cross-attention.
pub fn finetune_baseline(
    model: &mut Model,
    registry: &mut AdapterRegistry,
    tasks: Vec<Task>,
    task_adapters: Option<usize>,
    vocab: &Vocab,
    cfg: &TrainConfig,
    validator: Option<&mut Validator<'_>>,
) -> Result<TrainLog> {
    let mixture = Mixture::new(tasks, cfg.temperature)?;
    let (binding, mask) = match task_adapters {
        Some(b) => {
            let set = new_adapter_set(model, TASK_ADAPTER, b, derive_seed(cfg.seed, &["adapter-init", TASK_ADAPTER]))?;
            registry.insert(set);
            (AdapterBinding::Shared(TASK_ADAPTER.into()), FreezeMask::new(FreezePolicy::CrossAttnPlusAdapters))
        }
        None => (AdapterBinding::None, FreezeMask::new(FreezePolicy::FullFinetune)),
    };
    let mut job = TrainJob { model, registry, mixture: &mixture, binding, mask, cfg, noise: None, vocab, checkpoint_path: None };
    train(&mut job, &mut TrainState::default(), validator)
}

/// Offline back-translation fine-tuning in one direction on copies of the
/// model and adapters; returns the specialized bundle.
#[allow(clippy::too_many_arguments)]
pub fn finetune_bt(
    model: &Model,
    registry: &AdapterRegistry,
    binding: AdapterBinding,
    policy: FreezePolicy,
    task: Task,
    vocab: &Vocab,
    cfg: &TrainConfig,
) -> Result<(Model, AdapterRegistry, TrainLog)> {
    let mut m = model.clone();
    let mut r = registry.clone();
    let mixture = Mixture::new(vec![task], cfg.temperature)?;
    let mut job = TrainJob {
        model: &mut m,
        registry: &mut r,
        mixture: &mixture,
        binding,
        mask: FreezeMask::new(policy),
        cfg,
        noise: None,
        vocab,
        checkpoint_path: None,
    };
    let log = train(&mut job, &mut TrainState::default(), None)?;
    Ok((m, r, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies_resolve_to_nonempty_sets() {
        for p in [
            FreezePolicy::PretrainAll,
            FreezePolicy::AdaptersOnly,
            FreezePolicy::AdaptersPlusOutputProj,
            FreezePolicy::CrossAttnOnly,
            FreezePolicy::CrossAttnPlusAdapters,
            FreezePolicy::FullFinetune,
        ] {
            assert!(!FreezeMask::new(p).groups().is_empty());
        }
        let m = FreezeMask::new(FreezePolicy::CrossAttnOnly);
        assert_eq!(m.groups(), [ParamGroup::CrossAttn].into());
        let n = FreezeMask::new(FreezePolicy::AdaptersPlusOutputProj);
        assert!(n.model_groups.is_empty());
        assert!(n.adapter_trains(ParamGroup::OutputProjection));
    }

    #[test]
    fn default_config_mirrors_reference_hyperparameters() {
        let c = TrainConfig::default();
        assert_eq!(c.label_smoothing, 0.2);
        assert_eq!(c.dropout, 0.3);
        assert_eq!(c.warmup_updates, 4000);
        assert_eq!(c.betas, (0.9, 0.98));
        assert_eq!(c.weight_decay, 0.01);
        c.validate().unwrap();
    }
}
