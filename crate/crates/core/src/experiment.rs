//! Experiment manifests and the end-to-end benchmark: corpus generation,
//! the three training stages, the FT and TA baselines, back-translation,
//! new-language extension and evaluation.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adapters::{AdapterRegistry, AdapterSet, TASK_ADAPTER};
use crate::batch::TokenId;
use crate::corpus::{derive_seed, generate, CorpusSet, CorpusSpec, LangRole, LanguageSpec, ProtoSpec};
use crate::error::{Error, Result};
use crate::inference::{DecodeConfig, Translator};
use crate::metrics::{benchmark_report, chrf, corpus_bleu, BenchmarkReport, ScoreRow};
use crate::model::{build_model, Model, ModelConfig};
use crate::noising::NoiseSpec;
use crate::training::{
    add_new_language, finetune_baseline, finetune_bt, finetune_cross_attention, parallel_tasks, pretrain_base,
    train_denoising_adapters, translate_task, AdapterBinding, CheckpointSelection, FreezePolicy, TrainConfig, TrainLog,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub mask_ratio: f64,
    pub poisson_lambda: f64,
    pub random_replace_ratio: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { mask_ratio: 0.3, poisson_lambda: 3.5, random_replace_ratio: 0.1 }
    }
}

impl NoiseConfig {
    pub fn spec(&self, range: (TokenId, TokenId)) -> NoiseSpec {
        NoiseSpec {
            mask_ratio: self.mask_ratio,
            poisson_lambda: self.poisson_lambda,
            random_replace_ratio: self.random_replace_ratio,
            ..NoiseSpec::new(range)
        }
    }
}

/// Everything a run needs. `model.vocab_size` is taken from the corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub name: String,
    pub seed: u64,
    pub corpus: CorpusSpec,
    pub languages: Vec<LanguageSpec>,
    pub model: ModelConfig,
    pub noise: NoiseConfig,
    pub bottleneck: usize,
    pub pretrain: TrainConfig,
    pub adapters: TrainConfig,
    pub transfer: TrainConfig,
    pub full_finetune: TrainConfig,
    pub task_adapter: TrainConfig,
    pub new_language: TrainConfig,
    pub backtranslation: TrainConfig,
    pub decode: DecodeConfig,
    /// Decoding used for checkpoint selection.
    pub valid_decode: DecodeConfig,
    /// Validation sentences per direction used for checkpoint selection.
    pub valid_sentences: usize,
    /// Test sentences per direction (0 means all).
    pub test_sentences: usize,
    /// Systems that receive back-translation fine-tuning.
    pub bt_systems: Vec<String>,
}

fn lang(code: &str, role: LangRole, seed: u64, reorder: Option<usize>) -> LanguageSpec {
    LanguageSpec {
        code: code.into(),
        role,
        seed,
        reorder_period: reorder,
        new_language: false,
        mono_size: None,
        parallel_size: None,
    }
}

impl ExperimentManifest {
    /// The desk-scale benchmark: English pivot, six auxiliary languages,
    /// two unsupervised languages seen in pretraining and one new language.
    pub fn bench() -> Self {
        use LangRole::*;
        let mut languages = vec![lang("en", Pivot, 1, None)];
        for (i, r) in [None, Some(3), None, Some(4), None, Some(5)].into_iter().enumerate() {
            languages.push(lang(&format!("a{}", i + 1), Auxiliary, 10 + i as u64, r));
        }
        languages.push(lang("z1", Unsupervised, 20, None));
        languages.push(lang("z2", Unsupervised, 21, Some(3)));
        let mut n1 = lang("n1", Unsupervised, 22, None);
        n1.new_language = true;
        languages.push(n1);
        let stage = |updates: u64, lr: f64, warmup: u64| TrainConfig {
            max_tokens: 512,
            update_frequency: 1,
            total_updates: updates,
            max_lr: lr,
            warmup_updates: warmup,
            label_smoothing: 0.1,
            dropout: 0.1,
            seed: 7,
            ..TrainConfig::default()
        };
        Self {
            name: "bench".into(),
            seed: 7,
            corpus: CorpusSpec {
                proto: ProtoSpec::new(96, 4, 12),
                anchor_fraction: 0.25,
                anchor_min_rank: 4,
                mono_size: 4000,
                parallel_size: 2000,
                valid_size: 100,
                test_size: 200,
                seed: 7,
            },
            languages,
            model: ModelConfig {
                enc_layers: 2,
                dec_layers: 2,
                hidden: 64,
                heads: 4,
                ffn_dim: 256,
                vocab_size: 0,
                max_positions: 40,
                dropout: 0.1,
                attn_dropout: 0.0,
                share_embeddings: true,
            },
            noise: NoiseConfig::default(),
            bottleneck: 32,
            pretrain: stage(3000, 2e-3, 300),
            adapters: stage(600, 2e-3, 60),
            transfer: TrainConfig { checkpoint_selection: CheckpointSelection::BestBleu, validation_interval: 500, ..stage(3000, 1e-3, 300) },
            full_finetune: TrainConfig {
                checkpoint_selection: CheckpointSelection::BestBleu,
                validation_interval: 500,
                ..stage(3000, 1e-3, 300)
            },
            task_adapter: TrainConfig {
                checkpoint_selection: CheckpointSelection::BestBleu,
                validation_interval: 500,
                ..stage(3000, 1e-3, 300)
            },
            new_language: stage(600, 2e-3, 60),
            backtranslation: stage(400, 5e-4, 40),
            decode: DecodeConfig { beam: 4, ..DecodeConfig::default() },
            valid_decode: DecodeConfig::greedy(),
            valid_sentences: 50,
            test_sentences: 0,
            bt_systems: vec!["DA".into()],
        }
    }

    pub fn validate(&self) -> Result<()> {
        crate::corpus::validate_languages(&self.languages)?;
        self.corpus.proto.validate()?;
        for c in [
            &self.pretrain,
            &self.adapters,
            &self.transfer,
            &self.full_finetune,
            &self.task_adapter,
            &self.new_language,
            &self.backtranslation,
        ] {
            c.validate()?;
        }
        self.decode.validate()?;
        self.valid_decode.validate()?;
        if self.bottleneck == 0 {
            return Err(Error::Config("bottleneck must be positive".into()));
        }
        for s in &self.bt_systems {
            if !["DA", "FT", "TA"].contains(&s.as_str()) {
                return Err(Error::Config(format!("unknown system `{s}` in bt_systems")));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn codes(&self, role: LangRole, new_language: bool) -> Vec<String> {
        self.languages.iter().filter(|l| l.role == role && l.new_language == new_language).map(|l| l.code.clone()).collect()
    }

    /// Languages whose monolingual data enters base pretraining.
    pub fn stage0_languages(&self) -> Vec<String> {
        self.languages.iter().filter(|l| !l.new_language).map(|l| l.code.clone()).collect()
    }

    pub fn pivot(&self) -> Result<String> {
        self.languages
            .iter()
            .find(|l| l.role == LangRole::Pivot)
            .map(|l| l.code.clone())
            .ok_or_else(|| Error::Config("no pivot language".into()))
    }
}

/// Bound adapters for one direction of one system.
#[derive(Clone, Copy)]
pub struct System<'a> {
    pub model: &'a Model,
    pub registry: &'a AdapterRegistry,
    pub binding: &'a AdapterBinding,
}

impl<'a> System<'a> {
    pub fn translator(&self, corpus: &CorpusSet, src: &str, tgt: &str) -> Result<Translator<'a>> {
        let (enc, dec): (Option<&AdapterSet>, Option<&AdapterSet>) = match self.binding {
            AdapterBinding::None => (None, None),
            AdapterBinding::PerLanguage => {
                self.registry.compose(self.model, src, tgt)?;
                (Some(self.registry.get(src)?), Some(self.registry.get(tgt)?))
            }
            AdapterBinding::Shared(n) => {
                let s = self.registry.get(n)?;
                (Some(s), Some(s))
            }
        };
        Translator::new(self.model, &corpus.vocab, src, tgt, enc, dec)
    }

    pub fn translate(&self, corpus: &CorpusSet, src: &str, tgt: &str, sources: &[Vec<TokenId>], cfg: &DecodeConfig) -> Result<Vec<Vec<TokenId>>> {
        self.translator(corpus, src, tgt)?.translate_corpus(sources, cfg)
    }

    /// `(BLEU, chrF)` of `src → tgt` on held-out sentences.
    pub fn score(&self, corpus: &CorpusSet, src: &str, tgt: &str, held_out: &BTreeMap<String, Vec<Vec<TokenId>>>, limit: usize, cfg: &DecodeConfig) -> Result<(f64, f64, usize)> {
        let get = |l: &str| held_out.get(l).ok_or_else(|| Error::Data(format!("no held-out data for `{l}`")));
        let (s, r) = (get(src)?, get(tgt)?);
        let n = if limit == 0 { s.len() } else { limit.min(s.len()) };
        let hyps = self.translate(corpus, src, tgt, &s[..n], cfg)?;
        let hyp_text: Vec<String> = hyps.iter().map(|h| corpus.vocab.decode(h)).collect();
        let ref_text: Vec<String> = r[..n].iter().map(|h| corpus.vocab.decode(h)).collect();
        Ok((corpus_bleu(&hyp_text, &ref_text)?.score, chrf(&hyp_text, &ref_text)?, n))
    }
}

/// Macro validation BLEU over both directions of every auxiliary language.
pub fn validation_bleu(sys: System<'_>, corpus: &CorpusSet, aux: &[String], pivot: &str, limit: usize, cfg: &DecodeConfig) -> Result<f64> {
    let mut total = 0.0;
    for a in aux {
        total += sys.score(corpus, a, pivot, &corpus.valid, limit, cfg)?.0;
        total += sys.score(corpus, pivot, a, &corpus.valid, limit, cfg)?.0;
    }
    Ok(total / (2 * aux.len()).max(1) as f64)
}

/// Back-translates monolingual `lang` text into `pivot` and returns
/// `(synthetic pivot, real lang)` pairs, dropping empty outputs.
pub fn backtranslate_corpus(sys: System<'_>, corpus: &CorpusSet, lang: &str, pivot: &str, cfg: &DecodeConfig) -> Result<(Vec<(Vec<TokenId>, Vec<TokenId>)>, usize)> {
    let mono = corpus.mono.get(lang).ok_or_else(|| Error::Data(format!("no monolingual data for `{lang}`")))?;
    let out = sys.translate(corpus, lang, pivot, mono, cfg)?;
    let mut pairs = Vec::with_capacity(mono.len());
    let mut dropped = 0;
    for (syn, real) in out.into_iter().zip(mono) {
        if syn.is_empty() {
            dropped += 1;
        } else {
            pairs.push((syn, real.clone()));
        }
    }
    Ok((pairs, dropped))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BtDelta {
    pub system: String,
    pub src: String,
    pub tgt: String,
    pub before: f64,
    pub after: f64,
    pub delta: f64,
    pub synthetic_pairs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewLanguageResult {
    pub language: String,
    pub bleu_to_pivot: f64,
    pub reference_language: String,
    pub reference_bleu_to_pivot: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairResult {
    pub src: String,
    pub tgt: String,
    pub bleu: f64,
    pub permuted_bleu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub name: String,
    pub vocab_size: usize,
    pub checksums: BTreeMap<String, String>,
    pub final_losses: BTreeMap<String, f64>,
    pub report: BenchmarkReport,
    pub backtranslation: Vec<BtDelta>,
    pub new_languages: Vec<NewLanguageResult>,
    pub unsupervised_pairs: Vec<PairResult>,
}

impl BenchResult {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn macro_bleu(&self, system: &str, class: &str) -> Option<f64> {
        self.report.macro_bleu.get(system)?.get(class).copied()
    }
}

fn mean_tail(losses: &[f64]) -> f64 {
    let n = losses.len().min(50);
    if n == 0 {
        return f64::NAN;
    }
    losses[losses.len() - n..].iter().sum::<f64>() / n as f64
}

struct Timer(Instant, &'static str);

impl Timer {
    fn start(label: &'static str) -> Self {
        log::info!("{label}: started");
        Self(Instant::now(), label)
    }
}

impl Drop for Timer {
    fn drop(&mut self) {
        log::info!("{}: {:.1}s", self.1, self.0.elapsed().as_secs_f64());
    }
}

/// Stage-0 model and stage-1 adapters, the shared starting point of every
/// system.
pub struct Foundation {
    pub corpus: CorpusSet,
    pub model_cfg: ModelConfig,
    pub base: Model,
    pub adapters: AdapterRegistry,
    pub noise: NoiseSpec,
    pub losses: BTreeMap<String, f64>,
}

pub fn build_foundation(m: &ExperimentManifest) -> Result<Foundation> {
    m.validate()?;
    let corpus = {
        let _t = Timer::start("corpus");
        generate(&m.corpus, &m.languages)?
    };
    let model_cfg = ModelConfig { vocab_size: corpus.vocab.len(), ..m.model.clone() };
    let mut base = build_model(&model_cfg, derive_seed(m.seed, &["model-init"]))?;
    let noise = m.noise.spec(corpus.vocab.content_range());
    let mut losses = BTreeMap::new();
    {
        let _t = Timer::start("stage 0 pretraining");
        let log = pretrain_base(&mut base, &corpus.mono, &m.stage0_languages(), &noise, &corpus.vocab, &m.pretrain)?;
        losses.insert("pretrain".into(), mean_tail(&log.losses));
    }
    let mut adapters = AdapterRegistry::new();
    {
        let _t = Timer::start("stage 1 adapters");
        for l in m.stage0_languages() {
            let (set, log) = train_denoising_adapters(&base, &l, &corpus.mono[&l], &noise, &corpus.vocab, &m.adapters, m.bottleneck, false)?;
            losses.insert(format!("adapter.{l}"), mean_tail(&log.losses));
            adapters.insert(set);
        }
    }
    Ok(Foundation { corpus, model_cfg, base, adapters, noise, losses })
}

/// The three transfer systems compared by the benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SystemKind {
    /// Denoising adapters with cross-attention transfer.
    Da,
    /// Full fine-tuning.
    Ft,
    /// One task adapter set plus cross-attention.
    Ta,
}

impl SystemKind {
    pub const ALL: [SystemKind; 3] = [SystemKind::Da, SystemKind::Ft, SystemKind::Ta];

    pub fn name(self) -> &'static str {
        match self {
            SystemKind::Da => "DA",
            SystemKind::Ft => "FT",
            SystemKind::Ta => "TA",
        }
    }

    fn label(self) -> &'static str {
        match self {
            SystemKind::Da => "stage 2 cross-attention",
            SystemKind::Ft => "FT baseline",
            SystemKind::Ta => "TA baseline",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown system `{s}` (expected DA, FT or TA)")))
    }

    pub fn binding(self) -> AdapterBinding {
        match self {
            SystemKind::Da => AdapterBinding::PerLanguage,
            SystemKind::Ft => AdapterBinding::None,
            SystemKind::Ta => AdapterBinding::Shared(TASK_ADAPTER.into()),
        }
    }
}

/// Trains one transfer system on the auxiliary parallel data, starting
/// from the base model (and, for DA, the stage-1 adapters).
pub fn train_system(
    m: &ExperimentManifest,
    corpus: &CorpusSet,
    base: &Model,
    adapters: &AdapterRegistry,
    kind: SystemKind,
) -> Result<(Model, AdapterRegistry, TrainLog)> {
    let pivot = m.pivot()?;
    let aux = m.codes(LangRole::Auxiliary, false);
    let binding = kind.binding();
    let mut valid = |mm: &Model, rr: &AdapterRegistry| {
        validation_bleu(System { model: mm, registry: rr, binding: &binding }, corpus, &aux, &pivot, m.valid_sentences, &m.valid_decode)
    };
    let mut model = base.clone();
    let (mut reg, cfg) = match kind {
        SystemKind::Da => (adapters.clone(), &m.transfer),
        SystemKind::Ft => (AdapterRegistry::new(), &m.full_finetune),
        SystemKind::Ta => (AdapterRegistry::new(), &m.task_adapter),
    };
    let tasks = parallel_tasks(&pivot, &corpus.parallel, cfg.max_tokens)?;
    let log = match kind {
        SystemKind::Da => finetune_cross_attention(&mut model, &mut reg, tasks, &corpus.vocab, cfg, Some(&mut valid))?,
        SystemKind::Ft => finetune_baseline(&mut model, &mut reg, tasks, None, &corpus.vocab, cfg, Some(&mut valid))?,
        SystemKind::Ta => finetune_baseline(&mut model, &mut reg, tasks, Some(m.bottleneck), &corpus.vocab, cfg, Some(&mut valid))?,
    };
    Ok((model, reg, log))
}

/// Runs the full benchmark.
pub fn run_bench(m: &ExperimentManifest) -> Result<BenchResult> {
    let f = build_foundation(m)?;
    let corpus = &f.corpus;
    let pivot = m.pivot()?;
    let aux = m.codes(LangRole::Auxiliary, false);
    let unsup = m.codes(LangRole::Unsupervised, false);
    let new_langs = m.codes(LangRole::Unsupervised, true);
    let mut losses = f.losses.clone();
    let mut checksums = BTreeMap::new();
    checksums.insert("base".to_string(), f.base.checksum());

    let mut trained = Vec::new();
    for kind in SystemKind::ALL {
        let _t = Timer::start(kind.label());
        let (model, reg, log) = train_system(m, corpus, &f.base, &f.adapters, kind)?;
        losses.insert(kind.name().into(), mean_tail(&log.losses));
        checksums.insert(kind.name().into(), model.checksum());
        trained.push((kind, model, reg));
    }
    let bindings: Vec<AdapterBinding> = trained.iter().map(|(k, _, _)| k.binding()).collect();
    let systems: Vec<(&str, System<'_>)> = trained
        .iter()
        .zip(&bindings)
        .map(|((k, model, registry), binding)| (k.name(), System { model, registry, binding }))
        .collect();
    let (da_model, da_reg) = (&trained[0].1, &trained[0].2);

    let mut rows = Vec::new();
    {
        let _t = Timer::start("evaluation");
        for (name, sys) in &systems {
            for l in unsup.iter().chain(aux.iter()) {
                for (s, t) in [(l.as_str(), pivot.as_str()), (pivot.as_str(), l.as_str())] {
                    let (bleu, c, n) = sys.score(corpus, s, t, &corpus.test, m.test_sentences, &m.decode)?;
                    log::info!("{name} {s}->{t}: BLEU {bleu:.2} chrF {c:.2}");
                    rows.push(ScoreRow { system: name.to_string(), src: s.into(), tgt: t.into(), bleu, chrf: c, sentences: n });
                }
            }
        }
    }
    let mut report_rows = rows.clone();

    // Offline back-translation, one direction at a time.
    let mut bt = Vec::new();
    {
        let _t = Timer::start("back-translation");
        for (name, sys) in systems.iter().filter(|(n, _)| m.bt_systems.iter().any(|b| b == n)) {
            let policy = if *name == "FT" { FreezePolicy::FullFinetune } else { FreezePolicy::CrossAttnPlusAdapters };
            for z in &unsup {
                let (pairs, _) = backtranslate_corpus(*sys, corpus, z, &pivot, &m.decode)?;
                let n_pairs = pairs.len();
                for (s, t) in [(pivot.as_str(), z.as_str()), (z.as_str(), pivot.as_str())] {
                    let data: Vec<(Vec<TokenId>, Vec<TokenId>)> = if s == pivot {
                        pairs.clone()
                    } else {
                        pairs.iter().map(|(a, b)| (b.clone(), a.clone())).collect()
                    };
                    let task = translate_task(s, t, data, m.backtranslation.max_tokens)?;
                    let (bm, br, _) = finetune_bt(sys.model, sys.registry, sys.binding.clone(), policy, task, &corpus.vocab, &m.backtranslation)?;
                    let bsys = System { model: &bm, registry: &br, binding: sys.binding };
                    let (after, c, n) = bsys.score(corpus, s, t, &corpus.test, m.test_sentences, &m.decode)?;
                    let before = rows.iter().find(|r| r.system == *name && r.src == s && r.tgt == t).map(|r| r.bleu).unwrap_or(0.0);
                    log::info!("{name}+BT {s}->{t}: BLEU {before:.2} -> {after:.2}");
                    report_rows.push(ScoreRow { system: format!("{name}+BT"), src: s.into(), tgt: t.into(), bleu: after, chrf: c, sentences: n });
                    bt.push(BtDelta {
                        system: name.to_string(),
                        src: s.into(),
                        tgt: t.into(),
                        before,
                        after,
                        delta: after - before,
                        synthetic_pairs: n_pairs,
                    });
                }
            }
        }
    }

    // New languages join the DA system through the base model.
    let mut new_results = Vec::new();
    {
        let _t = Timer::start("new languages");
        let mut reg = da_reg.clone();
        for l in &new_langs {
            let (set, log) = add_new_language(&f.base, l, &corpus.mono[l], &f.noise, &corpus.vocab, &m.new_language, m.bottleneck)?;
            losses.insert(format!("new.{l}"), mean_tail(&log.losses));
            reg.insert(set);
        }
        let sys = System { model: da_model, registry: &reg, binding: &AdapterBinding::PerLanguage };
        for l in &new_langs {
            let (bleu, c, n) = sys.score(corpus, l, &pivot, &corpus.test, m.test_sentences, &m.decode)?;
            report_rows.push(ScoreRow { system: "DA".into(), src: l.clone(), tgt: pivot.clone(), bleu, chrf: c, sentences: n });
            let reference = same_difficulty(m, l, &unsup);
            let reference_bleu = rows
                .iter()
                .find(|r| r.system == "DA" && r.src == reference && r.tgt == pivot)
                .map(|r| r.bleu)
                .unwrap_or(0.0);
            log::info!("new language {l}->{pivot}: BLEU {bleu:.2} (reference {reference}: {reference_bleu:.2})");
            new_results.push(NewLanguageResult {
                language: l.clone(),
                bleu_to_pivot: bleu,
                reference_language: reference,
                reference_bleu_to_pivot: reference_bleu,
            });
        }
    }

    // Unsupervised-to-unsupervised through composition alone.
    let mut pairs = Vec::new();
    if unsup.len() >= 2 {
        let sys = systems[0].1;
        let (s, t) = (&unsup[0], &unsup[1]);
        let n = if m.test_sentences == 0 { corpus.test[s].len() } else { m.test_sentences.min(corpus.test[s].len()) };
        let hyps = sys.translate(corpus, s, t, &corpus.test[s][..n], &m.decode)?;
        let hyp_text: Vec<String> = hyps.iter().map(|h| corpus.vocab.decode(h)).collect();
        let ref_text: Vec<String> = corpus.test[t][..n].iter().map(|h| corpus.vocab.decode(h)).collect();
        let bleu = corpus_bleu(&hyp_text, &ref_text)?.score;
        let mut perm = hyp_text.clone();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(m.seed, &["permutation"])));
        let permuted_bleu = corpus_bleu(&perm, &ref_text)?.score;
        log::info!("{s}->{t}: BLEU {bleu:.2} (permuted {permuted_bleu:.2})");
        pairs.push(PairResult { src: s.clone(), tgt: t.clone(), bleu, permuted_bleu });
    }

    Ok(BenchResult {
        name: m.name.clone(),
        vocab_size: corpus.vocab.len(),
        checksums,
        final_losses: losses,
        report: benchmark_report(report_rows, &pivot),
        backtranslation: bt,
        new_languages: new_results,
        unsupervised_pairs: pairs,
    })
}

/// The stage-0 unsupervised language with the same reordering as `code`.
fn same_difficulty(m: &ExperimentManifest, code: &str, candidates: &[String]) -> String {
    let period = |c: &str| m.languages.iter().find(|l| l.code == c).and_then(|l| l.reorder_period);
    let p = period(code);
    candidates.iter().find(|c| period(c) == p).or(candidates.first()).cloned().unwrap_or_default()
}

/// Writes the resolved manifest and the bench result into `dir`.
pub fn write_outputs(dir: &Path, m: &ExperimentManifest, r: &BenchResult) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    crate::archive::write_atomic(&dir.join("manifest.resolved.json"), m.to_json()?.as_bytes())?;
    crate::archive::write_atomic(&dir.join("bench.json"), r.to_json()?.as_bytes())?;
    crate::archive::write_atomic(&dir.join("bench.txt"), r.report.to_table().as_bytes())?;
    Ok(())
}
