//! `dadapt`: runs the staged denoising-adapter pipeline one step at a time
//! inside a work directory, or the whole benchmark at once.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use dadapt::adapters::{AdapterRegistry, TASK_ADAPTER};
use dadapt::archive::{digest, load_adapter_set, load_model, save_adapter_set, save_model, write_atomic};
use dadapt::corpus::{derive_seed, generate, CorpusSet};
use dadapt::experiment::{backtranslate_corpus, run_bench, train_system, write_outputs, ExperimentManifest, System, SystemKind};
use dadapt::inference::DecodeConfig;
use dadapt::model::{build_model, Model, ModelConfig};
use dadapt::training::{add_new_language, finetune_bt, pretrain_base, train_denoising_adapters, translate_task, FreezePolicy};
use dadapt::ErrorKind;

#[derive(Parser)]
#[command(name = "dadapt", version, about = "Denoising adapters for unsupervised translation")]
struct Cli {
    /// Experiment manifest (JSON). Defaults to `<workdir>/manifest.json`
    /// when present, else the built-in benchmark manifest.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    /// Directory holding every artifact of a run.
    #[arg(long, global = true, default_value = "run")]
    workdir: PathBuf,
    /// Recompute artifacts even when their inputs are unchanged.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Direction {
    /// Source language into the pivot.
    ToPivot,
    /// Pivot into the target language.
    FromPivot,
}

#[derive(Subcommand)]
enum Cmd {
    /// Writes the generated corpora as text.
    GenCorpus,
    /// Stage 0: denoising pretraining of the base model.
    Pretrain,
    /// Stage 1: denoising adapters for one language or all stage-0 languages.
    TrainAdapter {
        #[arg(long)]
        lang: Option<String>,
    },
    /// Stage 2 (DA) or a baseline (FT, TA) on the auxiliary parallel data.
    FinetuneMt {
        #[arg(long, default_value = "DA")]
        system: String,
    },
    /// Adapters plus an output-projection delta for a new language.
    AddLanguage {
        #[arg(long)]
        lang: String,
    },
    /// Back-translates a language's monolingual data into the pivot.
    Backtranslate {
        #[arg(long)]
        lang: String,
        #[arg(long, default_value = "DA")]
        system: String,
    },
    /// Fine-tunes a copy of a system on back-translated data, one direction.
    FinetuneBt {
        #[arg(long)]
        lang: String,
        #[arg(long, value_enum)]
        direction: Direction,
        #[arg(long, default_value = "DA")]
        system: String,
    },
    /// Translates text (one sentence per line).
    Translate {
        #[arg(long, default_value = "DA")]
        system: String,
        #[arg(long)]
        src: String,
        #[arg(long)]
        tgt: String,
        /// Use the back-translation fine-tuned copy for this direction.
        #[arg(long)]
        bt: bool,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        beam: Option<usize>,
    },
    /// Scores a direction on held-out data.
    Eval {
        #[arg(long, default_value = "DA")]
        system: String,
        #[arg(long)]
        src: String,
        #[arg(long)]
        tgt: String,
        #[arg(long)]
        bt: bool,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Runs the whole benchmark and writes `bench.json`.
    Bench {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prints the built-in benchmark manifest.
    DefaultManifest,
}

struct Ctx {
    manifest: ExperimentManifest,
    manifest_json: String,
    workdir: PathBuf,
    force: bool,
}

impl Ctx {
    fn path(&self, rel: &str) -> PathBuf {
        self.workdir.join(rel)
    }

    fn corpus(&self) -> anyhow::Result<CorpusSet> {
        Ok(generate(&self.manifest.corpus, &self.manifest.languages)?)
    }

    fn model_cfg(&self, corpus: &CorpusSet) -> ModelConfig {
        ModelConfig { vocab_size: corpus.vocab.len(), ..self.manifest.model.clone() }
    }

    fn decode(&self) -> anyhow::Result<DecodeConfig> {
        let mut d = self.manifest.decode.clone();
        if let Ok(t) = std::env::var("DADAPT_THREADS") {
            d.threads = t.parse().with_context(|| format!("DADAPT_THREADS={t:?} is not a number"))?;
        }
        Ok(d)
    }

    /// True when `artifact` already exists and was built from `inputs`.
    fn up_to_date(&self, artifact: &Path, inputs: &str) -> bool {
        let stamp = stamp_path(artifact);
        let fresh = !self.force && artifact.exists() && std::fs::read_to_string(&stamp).is_ok_and(|s| s.trim() == inputs);
        if fresh {
            log::info!("{} is up to date; skipping", artifact.display());
        }
        fresh
    }

    fn stamp(&self, artifact: &Path, inputs: &str) -> anyhow::Result<()> {
        write_atomic(&stamp_path(artifact), inputs.as_bytes())?;
        Ok(())
    }

    fn base(&self) -> anyhow::Result<Model> {
        let p = self.path("base.dmdl");
        load_model(&p).with_context(|| format!("loading {} (run `pretrain` first)", p.display()))
    }

    fn stage1_registry(&self, corpus: &CorpusSet) -> anyhow::Result<AdapterRegistry> {
        let mut reg = AdapterRegistry::new();
        for l in corpus.vocab.languages() {
            let p = self.path(&format!("adapters/{l}.dadp"));
            if p.exists() {
                reg.insert(load_adapter_set(&p)?);
            }
        }
        Ok(reg)
    }

    fn system_dir(&self, kind: SystemKind, bt: Option<(&str, &str)>) -> PathBuf {
        let name = kind.name().to_lowercase();
        match bt {
            None => self.path(&format!("systems/{name}")),
            Some((s, t)) => self.path(&format!("bt/{name}.{s}-{t}")),
        }
    }

    /// Model and adapters of a trained system.
    fn load_system(&self, corpus: &CorpusSet, kind: SystemKind, bt: Option<(&str, &str)>) -> anyhow::Result<(Model, AdapterRegistry)> {
        let dir = self.system_dir(kind, bt);
        let model = load_model(&dir.join("model.dmdl"))
            .with_context(|| format!("loading {} (run `finetune-{}` first)", dir.display(), if bt.is_some() { "bt" } else { "mt" }))?;
        let mut reg = match kind {
            SystemKind::Da => self.stage1_registry(corpus)?,
            _ => AdapterRegistry::new(),
        };
        for entry in std::fs::read_dir(&dir)? {
            let p = entry?.path();
            if p.extension().is_some_and(|e| e == "dadp") {
                reg.insert(load_adapter_set(&p)?);
            }
        }
        Ok((model, reg))
    }

    fn save_system(&self, dir: &Path, model: &Model, reg: &AdapterRegistry, only: &[&str]) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir)?;
        save_model(model, &dir.join("model.dmdl"))?;
        for set in reg.sets().filter(|s| only.contains(&s.language.as_str())) {
            save_adapter_set(set, &dir.join(adapter_file(&set.language)))?;
        }
        Ok(())
    }
}

fn adapter_file(lang: &str) -> String {
    if lang == TASK_ADAPTER {
        "task.dadp".into()
    } else {
        format!("{lang}.dadp")
    }
}

fn stamp_path(artifact: &Path) -> PathBuf {
    let mut s = artifact.as_os_str().to_owned();
    s.push(".inputs");
    PathBuf::from(s)
}

fn load_manifest(cli: &Cli) -> anyhow::Result<ExperimentManifest> {
    let default_path = cli.workdir.join("manifest.json");
    let path = cli.manifest.clone().or_else(|| default_path.exists().then_some(default_path));
    Ok(match path {
        Some(p) => ExperimentManifest::from_json(&std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)?,
        None => ExperimentManifest::bench(),
    })
}

fn read_lines(input: Option<&Path>) -> anyhow::Result<Vec<String>> {
    let mut text = String::new();
    match input {
        Some(p) => text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => {
            std::io::stdin().read_to_string(&mut text)?;
        }
    }
    Ok(text.lines().map(str::to_string).collect())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Cmd::DefaultManifest = cli.cmd {
        println!("{}", ExperimentManifest::bench().to_json()?);
        return Ok(());
    }
    let manifest = load_manifest(&cli)?;
    let manifest_json = manifest.to_json()?;
    std::fs::create_dir_all(&cli.workdir).with_context(|| format!("creating {}", cli.workdir.display()))?;
    write_atomic(&cli.workdir.join("manifest.resolved.json"), manifest_json.as_bytes())?;
    let ctx = Ctx { manifest, manifest_json, workdir: cli.workdir, force: cli.force };
    let m = &ctx.manifest;

    match cli.cmd {
        Cmd::DefaultManifest => unreachable!(),
        Cmd::GenCorpus => {
            let corpus = ctx.corpus()?;
            let files = corpus.write_text(&ctx.path("corpus"))?;
            println!("wrote {} files to {}", files.len(), ctx.path("corpus").display());
        }
        Cmd::Pretrain => {
            let out = ctx.path("base.dmdl");
            let inputs = digest(&[b"pretrain", json(&m.corpus).as_bytes(), json(&m.languages).as_bytes(), json(&m.model).as_bytes(), json(&m.noise).as_bytes(), json(&m.pretrain).as_bytes(), &m.seed.to_le_bytes()]);
            if ctx.up_to_date(&out, &inputs) {
                return Ok(());
            }
            let corpus = ctx.corpus()?;
            let mut model = build_model(&ctx.model_cfg(&corpus), derive_seed(m.seed, &["model-init"]))?;
            let noise = m.noise.spec(corpus.vocab.content_range());
            pretrain_base(&mut model, &corpus.mono, &m.stage0_languages(), &noise, &corpus.vocab, &m.pretrain)?;
            save_model(&model, &out)?;
            ctx.stamp(&out, &inputs)?;
            println!("base model {} ({})", out.display(), model.fingerprint());
        }
        Cmd::TrainAdapter { lang } => {
            let corpus = ctx.corpus()?;
            let base = ctx.base()?;
            let langs = match lang {
                Some(l) => {
                    if !m.stage0_languages().contains(&l) {
                        bail!(dadapt::Error::Config(format!("`{l}` is not a stage-0 language; use `add-language` for new languages")));
                    }
                    vec![l]
                }
                None => m.stage0_languages(),
            };
            let noise = m.noise.spec(corpus.vocab.content_range());
            for l in langs {
                let out = ctx.path(&format!("adapters/{l}.dadp"));
                let inputs = digest(&[b"adapter", l.as_bytes(), base.fingerprint().as_bytes(), json(&m.adapters).as_bytes(), json(&m.noise).as_bytes(), &m.bottleneck.to_le_bytes()]);
                if ctx.up_to_date(&out, &inputs) {
                    continue;
                }
                let (set, _) = train_denoising_adapters(&base, &l, &corpus.mono[&l], &noise, &corpus.vocab, &m.adapters, m.bottleneck, false)?;
                save_adapter_set(&set, &out)?;
                ctx.stamp(&out, &inputs)?;
                println!("adapters {}", out.display());
            }
        }
        Cmd::FinetuneMt { system } => {
            let kind = SystemKind::from_name(&system)?;
            let corpus = ctx.corpus()?;
            let base = ctx.base()?;
            let mut adapters = AdapterRegistry::new();
            if kind == SystemKind::Da {
                for l in m.stage0_languages() {
                    let p = ctx.path(&format!("adapters/{l}.dadp"));
                    adapters.insert(load_adapter_set(&p).with_context(|| format!("loading {} (run `train-adapter` first)", p.display()))?);
                }
            }
            let dir = ctx.system_dir(kind, None);
            let out = dir.join("model.dmdl");
            let sums: Vec<String> = adapters.sets().map(|s| s.checksum()).collect();
            let cfg = match kind {
                SystemKind::Da => &m.transfer,
                SystemKind::Ft => &m.full_finetune,
                SystemKind::Ta => &m.task_adapter,
            };
            let inputs = digest(&[b"finetune-mt", kind.name().as_bytes(), base.fingerprint().as_bytes(), sums.join(",").as_bytes(), json(cfg).as_bytes(), ctx.manifest_json.as_bytes()]);
            if ctx.up_to_date(&out, &inputs) {
                return Ok(());
            }
            let (model, reg, _) = train_system(m, &corpus, &base, &adapters, kind)?;
            ctx.save_system(&dir, &model, &reg, &[TASK_ADAPTER])?;
            ctx.stamp(&out, &inputs)?;
            println!("{} system in {}", kind.name(), dir.display());
        }
        Cmd::AddLanguage { lang } => {
            let corpus = ctx.corpus()?;
            let spec = corpus.spec(&lang)?;
            if !spec.new_language {
                bail!(dadapt::Error::Config(format!("`{lang}` is not marked as a new language in the manifest")));
            }
            let base = ctx.base()?;
            let out = ctx.path(&format!("adapters/{lang}.dadp"));
            let inputs = digest(&[b"add-language", lang.as_bytes(), base.fingerprint().as_bytes(), json(&m.new_language).as_bytes(), &m.bottleneck.to_le_bytes()]);
            if ctx.up_to_date(&out, &inputs) {
                return Ok(());
            }
            let noise = m.noise.spec(corpus.vocab.content_range());
            let (set, _) = add_new_language(&base, &lang, &corpus.mono[&lang], &noise, &corpus.vocab, &m.new_language, m.bottleneck)?;
            save_adapter_set(&set, &out)?;
            ctx.stamp(&out, &inputs)?;
            println!("adapters {}", out.display());
        }
        Cmd::Backtranslate { lang, system } => {
            let kind = SystemKind::from_name(&system)?;
            let corpus = ctx.corpus()?;
            let pivot = m.pivot()?;
            let (model, reg) = ctx.load_system(&corpus, kind, None)?;
            let binding = kind.binding();
            let sys = System { model: &model, registry: &reg, binding: &binding };
            let (pairs, dropped) = backtranslate_corpus(sys, &corpus, &lang, &pivot, &ctx.decode()?)?;
            let dir = ctx.path("bt");
            std::fs::create_dir_all(&dir)?;
            let mut syn = String::new();
            let mut real = String::new();
            for (s, r) in &pairs {
                syn += &(corpus.vocab.decode(s) + "\n");
                real += &(corpus.vocab.decode(r) + "\n");
            }
            let stem = format!("{}.{lang}", kind.name().to_lowercase());
            write_atomic(&dir.join(format!("{stem}.{pivot}.txt")), syn.as_bytes())?;
            write_atomic(&dir.join(format!("{stem}.{lang}.txt")), real.as_bytes())?;
            println!("{} synthetic pairs ({dropped} empty outputs dropped) in {}", pairs.len(), dir.display());
        }
        Cmd::FinetuneBt { lang, direction, system } => {
            let kind = SystemKind::from_name(&system)?;
            let corpus = ctx.corpus()?;
            let pivot = m.pivot()?;
            let stem = format!("{}.{lang}", kind.name().to_lowercase());
            let syn_path = ctx.path(&format!("bt/{stem}.{pivot}.txt"));
            let real_path = ctx.path(&format!("bt/{stem}.{lang}.txt"));
            let syn = read_lines(Some(&syn_path)).context("run `backtranslate` first")?;
            let real = read_lines(Some(&real_path))?;
            if syn.len() != real.len() {
                bail!(dadapt::Error::Data(format!("{} and {} differ in length", syn_path.display(), real_path.display())));
            }
            let mut pairs = Vec::with_capacity(syn.len());
            for (s, r) in syn.iter().zip(&real) {
                pairs.push((corpus.vocab.encode(s)?, corpus.vocab.encode(r)?));
            }
            let (src, tgt) = match direction {
                Direction::FromPivot => (pivot.clone(), lang.clone()),
                Direction::ToPivot => {
                    pairs = pairs.into_iter().map(|(a, b)| (b, a)).collect();
                    (lang.clone(), pivot.clone())
                }
            };
            let (model, reg) = ctx.load_system(&corpus, kind, None)?;
            let policy = if kind == SystemKind::Ft { FreezePolicy::FullFinetune } else { FreezePolicy::CrossAttnPlusAdapters };
            let task = translate_task(&src, &tgt, pairs, m.backtranslation.max_tokens)?;
            let (bm, br, _) = finetune_bt(&model, &reg, kind.binding(), policy, task, &corpus.vocab, &m.backtranslation)?;
            let dir = ctx.system_dir(kind, Some((&src, &tgt)));
            let bound: Vec<&str> = match kind {
                SystemKind::Da => vec![src.as_str(), tgt.as_str()],
                SystemKind::Ta => vec![TASK_ADAPTER],
                SystemKind::Ft => vec![],
            };
            ctx.save_system(&dir, &bm, &br, &bound)?;
            println!("{}+BT {src}->{tgt} in {}", kind.name(), dir.display());
        }
        Cmd::Translate { system, src, tgt, bt, input, output, beam } => {
            let kind = SystemKind::from_name(&system)?;
            let corpus = ctx.corpus()?;
            let (model, reg) = ctx.load_system(&corpus, kind, bt.then_some((src.as_str(), tgt.as_str())))?;
            let binding = kind.binding();
            let sys = System { model: &model, registry: &reg, binding: &binding };
            let mut cfg = ctx.decode()?;
            if let Some(b) = beam {
                cfg.beam = b;
            }
            let lines = read_lines(input.as_deref())?;
            let sources = lines.iter().map(|l| corpus.vocab.encode(l)).collect::<dadapt::Result<Vec<_>>>()?;
            let hyps = sys.translate(&corpus, &src, &tgt, &sources, &cfg)?;
            let mut text = String::new();
            for h in &hyps {
                text += &(corpus.vocab.decode(h) + "\n");
            }
            match output {
                Some(p) => write_atomic(&p, text.as_bytes())?,
                None => std::io::stdout().write_all(text.as_bytes())?,
            }
        }
        Cmd::Eval { system, src, tgt, bt, split } => {
            let kind = SystemKind::from_name(&system)?;
            let corpus = ctx.corpus()?;
            let held_out = match split.as_str() {
                "test" => &corpus.test,
                "valid" => &corpus.valid,
                other => bail!(dadapt::Error::Config(format!("unknown split `{other}` (expected test or valid)"))),
            };
            let (model, reg) = ctx.load_system(&corpus, kind, bt.then_some((src.as_str(), tgt.as_str())))?;
            let binding = kind.binding();
            let sys = System { model: &model, registry: &reg, binding: &binding };
            let (bleu, c, n) = sys.score(&corpus, &src, &tgt, held_out, m.test_sentences, &ctx.decode()?)?;
            println!("{} {src}->{tgt} ({split}, {n} sentences): BLEU {bleu:.2} chrF {c:.2}", kind.name());
        }
        Cmd::Bench { out } => {
            let mut m = m.clone();
            m.decode = ctx.decode()?;
            let r = run_bench(&m)?;
            let dir = out.unwrap_or_else(|| ctx.path("bench"));
            write_outputs(&dir, &m, &r)?;
            print!("{}", r.report.to_table());
            println!("wrote {}", dir.join("bench.json").display());
        }
    }
    Ok(())
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap_or_default()
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<dadapt::Error>()).map(|e| e.kind()) {
        Some(ErrorKind::Config) => 2,
        Some(ErrorKind::Data) => 3,
        Some(ErrorKind::Numeric) => 4,
        Some(ErrorKind::Incompatible) => 5,
        None => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}
