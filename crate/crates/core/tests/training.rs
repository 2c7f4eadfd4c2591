use dadapt::adapters::{new_adapter_set, AdapterRegistry};
use dadapt::archive::{load_adapter_set, load_model, save_adapter_set, save_model};
use dadapt::corpus::{generate, CorpusSet, CorpusSpec, LangRole, LanguageSpec, Mixture, ProtoSpec};
use dadapt::model::{build_model, Model, ModelConfig};
use dadapt::noising::NoiseSpec;
use dadapt::params::ParamGroup;
use dadapt::training::{
    denoise_task, finetune_baseline, load_checkpoint, parallel_tasks, train, AdapterBinding, CheckpointSelection,
    FreezeMask, FreezePolicy, TrainConfig, TrainJob, TrainState,
};
use dadapt::{Error, ErrorKind};

fn corpus() -> CorpusSet {
    let l = |code: &str, role, seed| LanguageSpec {
        code: code.into(),
        role,
        seed,
        reorder_period: None,
        new_language: false,
        mono_size: None,
        parallel_size: None,
    };
    let spec = CorpusSpec {
        proto: ProtoSpec::new(60, 3, 8),
        anchor_fraction: 0.1,
        anchor_min_rank: 0,
        mono_size: 1500,
        parallel_size: 200,
        valid_size: 10,
        test_size: 10,
        seed: 5,
    };
    generate(&spec, &[l("en", LangRole::Pivot, 1), l("xa", LangRole::Auxiliary, 2)]).unwrap()
}

fn small_model(c: &CorpusSet) -> Model {
    let cfg = ModelConfig {
        enc_layers: 1,
        dec_layers: 1,
        hidden: 16,
        heads: 2,
        ffn_dim: 32,
        vocab_size: c.vocab.len(),
        max_positions: 16,
        dropout: 0.0,
        attn_dropout: 0.0,
        share_embeddings: true,
    };
    build_model(&cfg, 2).unwrap()
}

fn cfg(total: u64) -> TrainConfig {
    TrainConfig {
        max_tokens: 96,
        update_frequency: 2,
        total_updates: total,
        max_lr: 1e-3,
        warmup_updates: 4,
        dropout: 0.1,
        ..TrainConfig::default()
    }
}

#[test]
fn resume_from_checkpoint_is_bit_exact() {
    let c = corpus();
    let noise = NoiseSpec::new(c.vocab.content_range());
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("run.ckpt");
    let mut tc = cfg(20);
    tc.checkpoint_interval = 10;
    tc.validation_interval = 11;
    tc.checkpoint_selection = CheckpointSelection::BestBleu;
    let tasks = vec![denoise_task("en", &c.mono["en"], tc.max_tokens).unwrap(), denoise_task("xa", &c.mono["xa"], tc.max_tokens).unwrap()];
    let mixture = Mixture::new(tasks, 5.0).unwrap();

    let fresh = || {
        let m = small_model(&c);
        let mut r = AdapterRegistry::new();
        for l in ["en", "xa"] {
            r.insert(new_adapter_set(&m, l, 4, 3).unwrap());
        }
        (m, r)
    };
    // Scores rise with every call, so the last validation always wins.
    let run = |model: &mut Model, reg: &mut AdapterRegistry, state: &mut TrainState, fail_at: Option<u64>| {
        let mut calls = 0u64;
        let mut validator = |_: &Model, _: &AdapterRegistry| -> dadapt::Result<f64> {
            calls += 1;
            if Some(calls) == fail_at {
                return Err(Error::Data("simulated interruption".into()));
            }
            Ok(calls as f64)
        };
        let mut job = TrainJob {
            model,
            registry: reg,
            mixture: &mixture,
            binding: AdapterBinding::PerLanguage,
            mask: FreezeMask::new(FreezePolicy::AdaptersOnly),
            cfg: &tc,
            noise: Some(&noise),
            vocab: &c.vocab,
            checkpoint_path: Some(ckpt.clone()),
        };
        train(&mut job, state, Some(&mut validator))
    };

    let (mut m1, mut r1) = fresh();
    let mut s1 = TrainState::default();
    run(&mut m1, &mut r1, &mut s1, None).unwrap();

    let (mut m2, mut r2) = fresh();
    let mut s2 = TrainState::default();
    assert!(run(&mut m2, &mut r2, &mut s2, Some(1)).is_err());
    let (mut m3, mut r3, mut s3) = load_checkpoint(&ckpt).unwrap();
    assert_eq!(s3.step, 10);
    run(&mut m3, &mut r3, &mut s3, None).unwrap();

    assert_eq!(m1.checksum(), m3.checksum());
    let sums = |r: &AdapterRegistry| r.sets().map(|s| s.checksum()).collect::<Vec<_>>();
    assert_eq!(sums(&r1), sums(&r3));
    assert_eq!(s1.adam, s3.adam);
}

#[test]
fn model_and_adapter_files_round_trip() {
    let c = corpus();
    let m = small_model(&c);
    let mut set = new_adapter_set(&m, "xa", 4, 9).unwrap();
    set.add_output_projection_delta(m.cfg.vocab_size);
    let dir = tempfile::tempdir().unwrap();
    save_model(&m, &dir.path().join("m.dmdl")).unwrap();
    save_adapter_set(&set, &dir.path().join("xa.dadp")).unwrap();
    let m2 = load_model(&dir.path().join("m.dmdl")).unwrap();
    let set2 = load_adapter_set(&dir.path().join("xa.dadp")).unwrap();
    assert_eq!(m2.checksum(), m.checksum());
    assert_eq!(m2.fingerprint(), m.fingerprint());
    assert_eq!(set2, set);
    // A model file is not an adapter file.
    assert!(load_adapter_set(&dir.path().join("m.dmdl")).is_err());
}

#[test]
fn full_finetuning_detaches_foreign_adapters() {
    let c = corpus();
    let mut m = small_model(&c);
    let mut reg = AdapterRegistry::new();
    for l in ["en", "xa"] {
        reg.insert(new_adapter_set(&m, l, 4, 3).unwrap());
    }
    let before = reg.clone();
    let tasks = parallel_tasks("en", &c.parallel, 96).unwrap();
    finetune_baseline(&mut m, &mut AdapterRegistry::new(), tasks, None, &c.vocab, &cfg(6), None).unwrap();
    let err = before.compose(&m, "xa", "en").unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Incompatible);
}

#[test]
fn freeze_policies_select_expected_groups() {
    use ParamGroup::*;
    let all = FreezeMask::new(FreezePolicy::PretrainAll);
    assert!(all.model_trains(Embeddings) && all.model_trains(CrossAttn) && !all.adapter_trains(Adapters));
    let ad = FreezeMask::new(FreezePolicy::AdaptersOnly);
    assert!(!ad.model_trains(Embeddings) && !ad.model_trains(CrossAttn));
    assert!(ad.adapter_trains(Adapters) && !ad.adapter_trains(OutputProjection));
    let nl = FreezeMask::new(FreezePolicy::AdaptersPlusOutputProj);
    assert!(!nl.model_trains(Embeddings) && nl.adapter_trains(Adapters) && nl.adapter_trains(OutputProjection));
    let ca = FreezeMask::new(FreezePolicy::CrossAttnOnly);
    assert!(ca.model_trains(CrossAttn) && !ca.model_trains(Embeddings) && !ca.adapter_trains(Adapters));
    let cpa = FreezeMask::new(FreezePolicy::CrossAttnPlusAdapters);
    assert!(cpa.model_trains(CrossAttn) && !cpa.model_trains(Embeddings) && cpa.adapter_trains(Adapters));
}

#[test]
fn invalid_schedule_is_a_config_error() {
    let c = corpus();
    let mut m = small_model(&c);
    let mut bad = cfg(10);
    bad.warmup_updates = 50;
    let tasks = parallel_tasks("en", &c.parallel, 96).unwrap();
    let err = finetune_baseline(&mut m, &mut AdapterRegistry::new(), tasks, None, &c.vocab, &bad, None).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Config);
}
