//! Synthetic multilingual data: a Zipfian proto-language with bigram
//! structure, cipher languages rendered from it, vocabularies with trimming,
//! temperature sampling and length-bucketed batching.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::batch::{Example, TokenId, EOS, MASK, PAD};
use crate::error::{Error, Result};

/// Stable 64-bit seed derived from a master seed and a label path.
pub fn derive_seed(master: u64, parts: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LangRole {
    Pivot,
    Auxiliary,
    Unsupervised,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanguageSpec {
    pub code: String,
    pub role: LangRole,
    pub seed: u64,
    /// Period of the adjacent-swap reordering, if any.
    #[serde(default)]
    pub reorder_period: Option<usize>,
    /// Excluded from stage-0 pretraining; added later with its own delta.
    #[serde(default)]
    pub new_language: bool,
    #[serde(default)]
    pub mono_size: Option<usize>,
    #[serde(default)]
    pub parallel_size: Option<usize>,
}

// ---------------------------------------------------------------------------
// Proto language

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtoSpec {
    pub vocab_size: usize,
    pub zipf_exponent: f64,
    pub len_min: usize,
    pub len_max: usize,
    /// Latent contexts per token; fewer means sharper bigrams.
    pub contexts_per_token: usize,
    /// Number of distinct latent contexts.
    pub latent_count: usize,
    /// Probability that the next token is a fresh unigram draw.
    pub fresh_prob: f64,
}

impl ProtoSpec {
    pub fn new(vocab_size: usize, len_min: usize, len_max: usize) -> Self {
        Self {
            vocab_size,
            zipf_exponent: 1.0,
            len_min,
            len_max,
            contexts_per_token: 2,
            latent_count: (vocab_size / 4).max(1),
            fresh_prob: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 50 {
            return Err(Error::Config(format!("proto vocabulary of {} is below 50", self.vocab_size)));
        }
        if self.len_min == 0 || self.len_min > self.len_max {
            return Err(Error::Config("invalid sentence length range".into()));
        }
        if self.contexts_per_token == 0 || self.latent_count == 0 || !(0.0..=1.0).contains(&self.fresh_prob) {
            return Err(Error::Config("invalid proto chain parameters".into()));
        }
        Ok(())
    }
}

/// Cumulative distribution over `items`.
#[derive(Clone, Debug)]
struct Cdf {
    items: Vec<u32>,
    cum: Vec<f64>,
}

impl Cdf {
    fn new(items: Vec<u32>, weights: &[f64]) -> Self {
        let mut acc = 0.0;
        let cum = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Self { items, cum }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let total = *self.cum.last().expect("non-empty distribution");
        let u = rng.random::<f64>() * total;
        let i = self.cum.partition_point(|&c| c <= u).min(self.items.len() - 1);
        self.items[i]
    }
}

/// Markov chain over proto tokens whose stationary law is exactly the Zipf
/// unigram `π`. Each token carries a few latent contexts `z` with weights
/// `p(z|a)`; a step draws `z ~ p(·|a)` then `b ∝ π(b)·p(z|b)` (a Gibbs
/// kernel, reversible w.r.t. `π`), mixed with fresh draws from `π`.
#[derive(Clone, Debug)]
pub struct ProtoChain {
    spec: ProtoSpec,
    unigram: Cdf,
    contexts: Vec<Cdf>,
    emit: Vec<Cdf>,
}

impl ProtoChain {
    pub fn new(spec: &ProtoSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = spec.vocab_size;
        let pi: Vec<f64> = (0..v).map(|k| ((k + 1) as f64).powf(-spec.zipf_exponent)).collect();
        let ids: Vec<u32> = (0..v as u32).collect();
        let unigram = Cdf::new(ids, &pi);
        let mut contexts = Vec::with_capacity(v);
        let mut members: Vec<Vec<(u32, f64)>> = vec![Vec::new(); spec.latent_count];
        for a in 0..v {
            let mut zs: Vec<u32> = Vec::new();
            while zs.len() < spec.contexts_per_token.min(spec.latent_count) {
                let z = rng.random_range(0..spec.latent_count as u32);
                if !zs.contains(&z) {
                    zs.push(z);
                }
            }
            let w: Vec<f64> = zs.iter().map(|_| rng.random_range(0.2..1.0)).collect();
            let s: f64 = w.iter().sum();
            for (z, wz) in zs.iter().zip(&w) {
                members[*z as usize].push((a as u32, pi[a] * wz / s));
            }
            contexts.push(Cdf::new(zs, &w));
        }
        let emit = members
            .into_iter()
            .map(|m| {
                let (items, w): (Vec<u32>, Vec<f64>) = m.into_iter().unzip();
                Cdf::new(items, &w)
            })
            .collect();
        Ok(Self { spec: spec.clone(), unigram, contexts, emit })
    }

    pub fn sentence<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<u32> {
        let len = rng.random_range(self.spec.len_min..=self.spec.len_max);
        let mut out = Vec::with_capacity(len);
        let mut cur = self.unigram.sample(rng);
        out.push(cur);
        while out.len() < len {
            cur = if rng.random::<f64>() < self.spec.fresh_prob {
                self.unigram.sample(rng)
            } else {
                let z = self.contexts[cur as usize].sample(rng);
                self.emit[z as usize].sample(rng)
            };
            out.push(cur);
        }
        out
    }
}

pub fn gen_proto_corpus(spec: &ProtoSpec, n_sentences: usize, seed: u64) -> Result<Vec<Vec<u32>>> {
    let chain = ProtoChain::new(spec, derive_seed(seed, &["chain"]))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_sentences).map(|_| chain.sentence(&mut rng)).collect())
}

// ---------------------------------------------------------------------------
// Languages

/// A cipher of the proto language: a token permutation into the language's
/// own surface range, shared anchor tokens, and optional local reordering.
#[derive(Clone, Debug, PartialEq)]
pub struct LanguageProfile {
    pub code: String,
    /// Surface range index; the pivot owns slot 0.
    pub slot: usize,
    pub proto_size: usize,
    perm: Vec<u32>,
    inv: Vec<u32>,
    anchors: Vec<bool>,
    pub reorder_period: Option<usize>,
}

impl LanguageProfile {
    /// The pivot: identity map, no reordering.
    pub fn pivot(code: &str, proto_size: usize) -> Self {
        let perm: Vec<u32> = (0..proto_size as u32).collect();
        Self {
            code: code.to_string(),
            slot: 0,
            proto_size,
            inv: perm.clone(),
            perm,
            anchors: vec![true; proto_size],
            reorder_period: None,
        }
    }

    pub fn cipher(code: &str, slot: usize, proto_size: usize, anchors: &[bool], reorder: Option<usize>, seed: u64) -> Result<Self> {
        if slot == 0 {
            return Err(Error::Config("slot 0 is reserved for the pivot".into()));
        }
        if anchors.len() != proto_size {
            return Err(Error::Config("anchor mask does not match the proto vocabulary".into()));
        }
        if matches!(reorder, Some(k) if k < 2) {
            return Err(Error::Config("reorder period must be at least 2".into()));
        }
        let mut perm: Vec<u32> = (0..proto_size as u32).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut inv = vec![0; proto_size];
        for (p, &s) in perm.iter().enumerate() {
            inv[s as usize] = p as u32;
        }
        Ok(Self { code: code.to_string(), slot, proto_size, perm, inv, anchors: anchors.to_vec(), reorder_period: reorder })
    }

    fn reorder(&self, s: &mut [u32]) {
        if let Some(k) = self.reorder_period {
            let mut j = 0;
            while j + 1 < s.len() {
                s.swap(j, j + 1);
                j += k;
            }
        }
    }

    /// Proto ids to surface ids.
    pub fn render(&self, proto: &[u32]) -> Result<Vec<u32>> {
        let mut out = proto
            .iter()
            .map(|&p| {
                let pu = p as usize;
                if pu >= self.proto_size {
                    Err(Error::Data(format!("proto id {p} outside a vocabulary of {}", self.proto_size)))
                } else if self.anchors[pu] {
                    Ok(p)
                } else {
                    Ok((self.slot * self.proto_size) as u32 + self.perm[pu])
                }
            })
            .collect::<Result<Vec<_>>>()?;
        self.reorder(&mut out);
        Ok(out)
    }

    /// Surface ids back to proto ids.
    pub fn inverse_render(&self, surface: &[u32]) -> Result<Vec<u32>> {
        let mut s = surface.to_vec();
        self.reorder(&mut s);
        let base = self.slot * self.proto_size;
        s.iter()
            .map(|&x| {
                let xu = x as usize;
                if xu < self.proto_size && self.anchors[xu] {
                    Ok(x)
                } else if xu >= base && xu < base + self.proto_size && !self.anchors[self.inv[xu - base] as usize] {
                    Ok(self.inv[xu - base])
                } else {
                    Err(Error::Data(format!("surface id {x} does not belong to `{}`", self.code)))
                }
            })
            .collect()
    }
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// Pseudo-word spelling of a surface id: at least two CV syllables.
pub fn surface_word(id: u32) -> String {
    let base = (CONSONANTS.len() * VOWELS.len()) as u32;
    let mut digits = Vec::new();
    let mut x = id;
    loop {
        digits.push(x % base);
        x /= base;
        if x == 0 {
            break;
        }
    }
    while digits.len() < 2 {
        digits.push(0);
    }
    let mut s = String::with_capacity(digits.len() * 2);
    for d in digits.iter().rev() {
        s.push(CONSONANTS[(*d as usize) / VOWELS.len()] as char);
        s.push(VOWELS[(*d as usize) % VOWELS.len()] as char);
    }
    s
}

// ---------------------------------------------------------------------------
// Vocabulary

pub const PAD_TOKEN: &str = "<pad>";
pub const MASK_TOKEN: &str = "<mask>";
pub const EOS_TOKEN: &str = "</s>";

pub fn lang_tag(code: &str) -> String {
    format!("<lang:{code}>")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    n_specials: usize,
}

impl Vocab {
    /// Specials (pad, mask, eos, one tag per language) followed by content.
    pub fn new<S: AsRef<str>>(languages: &[S], content: impl IntoIterator<Item = String>) -> Result<Self> {
        let mut tokens = vec![PAD_TOKEN.to_string(), MASK_TOKEN.to_string(), EOS_TOKEN.to_string()];
        tokens.extend(languages.iter().map(|l| lang_tag(l.as_ref())));
        let n_specials = tokens.len();
        tokens.extend(content);
        Self::from_tokens(tokens, n_specials)
    }

    fn from_tokens(tokens: Vec<String>, n_specials: usize) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Data(format!("invalid token {t:?}")));
            }
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::Data(format!("duplicate token {t:?}")));
            }
        }
        if tokens.get(PAD as usize).map(String::as_str) != Some(PAD_TOKEN)
            || tokens.get(MASK as usize).map(String::as_str) != Some(MASK_TOKEN)
            || tokens.get(EOS as usize).map(String::as_str) != Some(EOS_TOKEN)
        {
            return Err(Error::Data("vocabulary must start with <pad> <mask> </s>".into()));
        }
        Ok(Self { tokens, index, n_specials })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn n_specials(&self) -> usize {
        self.n_specials
    }

    /// Half-open range of content ids.
    pub fn content_range(&self) -> (TokenId, TokenId) {
        (self.n_specials as TokenId, self.tokens.len() as TokenId)
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        (id as usize) < self.n_specials
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tag(&self, lang: &str) -> Result<TokenId> {
        self.id(&lang_tag(lang)).ok_or_else(|| Error::Data(format!("no tag for language `{lang}`")))
    }

    pub fn languages(&self) -> Vec<String> {
        self.tokens[3..self.n_specials]
            .iter()
            .map(|t| t.trim_start_matches("<lang:").trim_end_matches('>').to_string())
            .collect()
    }

    pub fn encode(&self, line: &str) -> Result<Vec<TokenId>> {
        line.split_whitespace()
            .map(|w| match self.id(w) {
                Some(id) if !self.is_special(id) => Ok(id),
                Some(_) => Err(Error::Data(format!("special token {w:?} in text"))),
                None => Err(Error::Data(format!("unknown token {w:?}"))),
            })
            .collect()
    }

    /// Space-joined content tokens; specials are dropped.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .filter(|&&i| !self.is_special(i))
            .filter_map(|&i| self.token(i))
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = format!("# specials {}\n", self.n_specials);
        for t in &self.tokens {
            s.push_str(t);
            s.push('\n');
        }
        crate::archive::write_atomic(path, s.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Data("empty vocabulary file".into()))?;
        let n_specials = header
            .strip_prefix("# specials ")
            .and_then(|n| n.parse().ok())
            .ok_or_else(|| Error::Data("vocabulary header is missing".into()))?;
        Self::from_tokens(lines.map(str::to_string).collect(), n_specials)
    }
}

/// Keeps every special and every content token used by `corpora`; returns
/// the trimmed vocabulary and the old→new id map.
pub fn trim_vocab(full: &Vocab, corpora: &[&[Vec<TokenId>]]) -> (Vocab, Vec<Option<TokenId>>) {
    let mut used = vec![false; full.len()];
    used[..full.n_specials].iter_mut().for_each(|u| *u = true);
    for c in corpora {
        for s in c.iter() {
            for &t in s {
                if let Some(u) = used.get_mut(t as usize) {
                    *u = true;
                }
            }
        }
    }
    let mut map = vec![None; full.len()];
    let mut tokens = Vec::new();
    for (i, keep) in used.iter().enumerate() {
        if *keep {
            map[i] = Some(tokens.len() as TokenId);
            tokens.push(full.tokens[i].clone());
        }
    }
    let v = Vocab::from_tokens(tokens, full.n_specials).expect("subset of a valid vocabulary");
    (v, map)
}

// ---------------------------------------------------------------------------
// Sampling and batching

/// `p_i = n_i^{1/T} / Σ_j n_j^{1/T}`.
pub fn temperature_probs(sizes: &[usize], temperature: f64) -> Result<Vec<f64>> {
    if temperature < 1.0 {
        return Err(Error::Config(format!("temperature {temperature} is below 1")));
    }
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::Config("every sampled corpus must be non-empty".into()));
    }
    let w: Vec<f64> = sizes.iter().map(|&n| (n as f64).powf(1.0 / temperature)).collect();
    let z: f64 = w.iter().sum();
    Ok(w.into_iter().map(|x| x / z).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// `g(T) → T` in one language.
    Denoise,
    Translate,
}

/// One language pair's examples, pre-cut into length-bucketed batches.
#[derive(Clone, Debug)]
pub struct Task {
    pub src_lang: String,
    pub tgt_lang: String,
    pub kind: TaskKind,
    pub examples: Vec<Example>,
    pub batches: Vec<Vec<usize>>,
    /// Sentences dropped for exceeding `max_tokens`.
    pub skipped: usize,
}

impl Task {
    pub fn new(src_lang: &str, tgt_lang: &str, kind: TaskKind, examples: Vec<Example>, max_tokens: usize) -> Result<Self> {
        let mut order: Vec<usize> = Vec::with_capacity(examples.len());
        let mut skipped = 0;
        for (i, e) in examples.iter().enumerate() {
            if e.tgt.len() + 1 > max_tokens || e.src.len() + 2 > max_tokens {
                skipped += 1;
                log::warn!("skipping a sentence of length {} (max_tokens {max_tokens})", e.tgt.len());
            } else {
                order.push(i);
            }
        }
        if order.is_empty() {
            return Err(Error::Data(format!("no usable examples for {src_lang}->{tgt_lang}")));
        }
        order.sort_by_key(|&i| (examples[i].tgt.len(), examples[i].src.len(), i));
        let mut batches = Vec::new();
        let mut cur: Vec<usize> = Vec::new();
        let mut cur_len = 0;
        for i in order {
            let len = examples[i].tgt.len() + 1;
            let new_len = cur_len.max(len);
            if !cur.is_empty() && (cur.len() + 1) * new_len > max_tokens {
                batches.push(std::mem::take(&mut cur));
                cur_len = 0;
            }
            cur_len = cur_len.max(len);
            cur.push(i);
        }
        batches.push(cur);
        Ok(Self { src_lang: src_lang.into(), tgt_lang: tgt_lang.into(), kind, examples, batches, skipped })
    }

    pub fn len(&self) -> usize {
        self.examples.len() - self.skipped
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Temperature-weighted mixture of tasks.
#[derive(Clone, Debug)]
pub struct Mixture {
    pub tasks: Vec<Task>,
    pub probs: Vec<f64>,
    cum: Vec<f64>,
}

impl Mixture {
    pub fn new(tasks: Vec<Task>, temperature: f64) -> Result<Self> {
        let sizes: Vec<usize> = tasks.iter().map(Task::len).collect();
        let probs = temperature_probs(&sizes, temperature)?;
        let mut acc = 0.0;
        let cum = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self { tasks, probs, cum })
    }

    /// Draws a task by temperature probability, then one of its batches.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, &[usize]) {
        let u = rng.random::<f64>() * self.cum.last().copied().unwrap_or(1.0);
        let t = self.cum.partition_point(|&c| c <= u).min(self.tasks.len() - 1);
        let task = &self.tasks[t];
        let b = rng.random_range(0..task.batches.len());
        (t, &task.batches[b])
    }

    /// Every language appearing on either side of a task.
    pub fn languages(&self) -> Vec<&str> {
        let mut v: Vec<&str> =
            self.tasks.iter().flat_map(|t| [t.src_lang.as_str(), t.tgt_lang.as_str()]).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

// ---------------------------------------------------------------------------
// Full synthetic corpus

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub proto: ProtoSpec,
    /// Fraction of proto tokens spelled identically in every language.
    pub anchor_fraction: f64,
    /// Proto ids below this rank are never anchors. Ids are in decreasing
    /// frequency order, so this keeps shared spellings to rarer words.
    #[serde(default)]
    pub anchor_min_rank: usize,
    pub mono_size: usize,
    pub parallel_size: usize,
    pub valid_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

/// All generated data, as trimmed-vocabulary ids.
#[derive(Clone, Debug)]
pub struct CorpusSet {
    pub vocab: Vocab,
    pub languages: Vec<LanguageSpec>,
    pub profiles: BTreeMap<String, LanguageProfile>,
    pub mono: BTreeMap<String, Vec<Vec<TokenId>>>,
    /// Per auxiliary language: `(pivot sentence, auxiliary sentence)`.
    pub parallel: BTreeMap<String, Vec<(Vec<TokenId>, Vec<TokenId>)>>,
    /// Multi-parallel held-out sets: index `i` is the same proto sentence in
    /// every language.
    pub valid: BTreeMap<String, Vec<Vec<TokenId>>>,
    pub test: BTreeMap<String, Vec<Vec<TokenId>>>,
}

impl CorpusSet {
    pub fn pivot(&self) -> &str {
        self.languages.iter().find(|l| l.role == LangRole::Pivot).map(|l| l.code.as_str()).expect("validated")
    }

    pub fn spec(&self, code: &str) -> Result<&LanguageSpec> {
        self.languages
            .iter()
            .find(|l| l.code == code)
            .ok_or_else(|| Error::Config(format!("unknown language `{code}`")))
    }

    pub fn codes_with_role(&self, role: LangRole) -> Vec<String> {
        self.languages.iter().filter(|l| l.role == role).map(|l| l.code.clone()).collect()
    }

    /// Writes one text file per corpus plus `vocab.txt`; returns the
    /// relative file list.
    pub fn write_text(&self, dir: &Path) -> Result<Vec<String>> {
        fs::create_dir_all(dir)?;
        self.vocab.save(&dir.join("vocab.txt"))?;
        let mut files = vec!["vocab.txt".to_string()];
        let mut write = |name: String, rows: &mut dyn Iterator<Item = &Vec<TokenId>>| -> Result<()> {
            let mut s = String::new();
            for r in rows {
                s.push_str(&self.vocab.decode(r));
                s.push('\n');
            }
            crate::archive::write_atomic(&dir.join(&name), s.as_bytes())?;
            files.push(name);
            Ok(())
        };
        for (l, c) in &self.mono {
            write(format!("mono.{l}.txt"), &mut c.iter())?;
        }
        let pivot = self.pivot().to_string();
        for (l, c) in &self.parallel {
            write(format!("parallel.{l}-{pivot}.{pivot}.txt"), &mut c.iter().map(|p| &p.0))?;
            write(format!("parallel.{l}-{pivot}.{l}.txt"), &mut c.iter().map(|p| &p.1))?;
        }
        for (l, c) in &self.valid {
            write(format!("valid.{l}.txt"), &mut c.iter())?;
        }
        for (l, c) in &self.test {
            write(format!("test.{l}.txt"), &mut c.iter())?;
        }
        Ok(files)
    }
}

pub fn validate_languages(langs: &[LanguageSpec]) -> Result<()> {
    let pivots = langs.iter().filter(|l| l.role == LangRole::Pivot).count();
    if pivots != 1 {
        return Err(Error::Config(format!("exactly one pivot language is required, found {pivots}")));
    }
    let mut seen = std::collections::BTreeSet::new();
    for l in langs {
        if l.code.is_empty() || l.code.chars().any(|c| c.is_whitespace() || c == '>' || c == '*') {
            return Err(Error::Config(format!("invalid language code {:?}", l.code)));
        }
        if !seen.insert(&l.code) {
            return Err(Error::Config(format!("duplicate language `{}`", l.code)));
        }
        if l.new_language && l.role != LangRole::Unsupervised {
            return Err(Error::Config(format!("new language `{}` must be unsupervised", l.code)));
        }
        if l.role == LangRole::Pivot && l.reorder_period.is_some() {
            return Err(Error::Config("the pivot cannot be reordered".into()));
        }
    }
    Ok(())
}

/// Generates every corpus of the experiment deterministically from `spec`.
pub fn generate(spec: &CorpusSpec, langs: &[LanguageSpec]) -> Result<CorpusSet> {
    validate_languages(langs)?;
    spec.proto.validate()?;
    if !(0.0..1.0).contains(&spec.anchor_fraction) {
        return Err(Error::Config("anchor_fraction must lie in [0, 1)".into()));
    }
    if spec.anchor_min_rank > spec.proto.vocab_size {
        return Err(Error::Config("anchor_min_rank exceeds the proto vocabulary".into()));
    }
    let p = spec.proto.vocab_size;
    let mut arng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &["anchors"]));
    let anchors: Vec<bool> = (0..p).map(|k| arng.random::<f64>() < spec.anchor_fraction && k >= spec.anchor_min_rank).collect();
    let chain = ProtoChain::new(&spec.proto, derive_seed(spec.seed, &["chain"]))?;
    let draw = |label: &[&str], n: usize| -> Vec<Vec<u32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, label));
        (0..n).map(|_| chain.sentence(&mut rng)).collect()
    };

    let mut profiles = BTreeMap::new();
    let mut slot = 1;
    for l in langs {
        let prof = if l.role == LangRole::Pivot {
            LanguageProfile::pivot(&l.code, p)
        } else {
            let pr = LanguageProfile::cipher(&l.code, slot, p, &anchors, l.reorder_period, l.seed)?;
            slot += 1;
            pr
        };
        profiles.insert(l.code.clone(), prof);
    }
    let n_slots = slot;
    let codes: Vec<&str> = langs.iter().map(|l| l.code.as_str()).collect();
    let full = Vocab::new(&codes, (0..(n_slots * p) as u32).map(surface_word))?;
    let off = full.n_specials() as u32;
    let render = |code: &str, s: &[u32]| -> Result<Vec<TokenId>> {
        Ok(profiles[code].render(s)?.into_iter().map(|x| x + off).collect())
    };

    let mut mono = BTreeMap::new();
    let mut parallel = BTreeMap::new();
    for l in langs {
        let n = l.mono_size.unwrap_or(spec.mono_size);
        let proto = draw(&["mono", &l.code], n);
        mono.insert(l.code.clone(), proto.iter().map(|s| render(&l.code, s)).collect::<Result<Vec<_>>>()?);
        if l.role == LangRole::Auxiliary {
            let pivot = langs.iter().find(|x| x.role == LangRole::Pivot).expect("validated");
            let n = l.parallel_size.unwrap_or(spec.parallel_size);
            let proto = draw(&["parallel", &l.code], n);
            let pairs = proto
                .iter()
                .map(|s| Ok((render(&pivot.code, s)?, render(&l.code, s)?)))
                .collect::<Result<Vec<_>>>()?;
            parallel.insert(l.code.clone(), pairs);
        }
    }
    let valid_proto = draw(&["valid"], spec.valid_size);
    let test_proto = draw(&["test"], spec.test_size);
    let mut valid = BTreeMap::new();
    let mut test = BTreeMap::new();
    for l in langs {
        valid.insert(l.code.clone(), valid_proto.iter().map(|s| render(&l.code, s)).collect::<Result<Vec<_>>>()?);
        test.insert(l.code.clone(), test_proto.iter().map(|s| render(&l.code, s)).collect::<Result<Vec<_>>>()?);
    }

    // Trim against every training corpus, parallel and monolingual.
    let par_flat: Vec<Vec<TokenId>> =
        parallel.values().flat_map(|v: &Vec<(Vec<TokenId>, Vec<TokenId>)>| v.iter().flat_map(|(a, b)| [a.clone(), b.clone()])).collect();
    let mut training: Vec<&[Vec<TokenId>]> = mono.values().map(|v: &Vec<Vec<TokenId>>| v.as_slice()).collect();
    training.push(&par_flat);
    let (vocab, map) = trim_vocab(&full, &training);
    let remap = |s: &[TokenId]| -> Result<Vec<TokenId>> {
        s.iter()
            .map(|&t| map[t as usize].ok_or_else(|| Error::Data(format!("held-out token {:?} never occurs in training data", full.token(t)))))
            .collect()
    };
    let remap_all = |m: BTreeMap<String, Vec<Vec<TokenId>>>| -> Result<BTreeMap<String, Vec<Vec<TokenId>>>> {
        m.into_iter().map(|(k, v)| Ok((k, v.iter().map(|s| remap(s)).collect::<Result<Vec<_>>>()?))).collect()
    };
    let mono = remap_all(mono)?;
    let valid = remap_all(valid)?;
    let test = remap_all(test)?;
    let parallel = parallel
        .into_iter()
        .map(|(k, v)| Ok((k, v.iter().map(|(a, b)| Ok((remap(a)?, remap(b)?))).collect::<Result<Vec<_>>>()?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(CorpusSet { vocab, languages: langs.to_vec(), profiles, mono, parallel, valid, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn temperature_reference_values() {
        let p = temperature_probs(&[214_000, 18_000], 1.0).unwrap();
        assert!((p[0] - 0.922).abs() < 1e-3 && (p[1] - 0.078).abs() < 1e-3);
        let p = temperature_probs(&[214_000, 18_000], 5.0).unwrap();
        assert!((p[0] - 0.621).abs() < 1e-3 && (p[1] - 0.379).abs() < 1e-3);
        let p = temperature_probs(&[7, 7, 7], 3.0).unwrap();
        assert!(p.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn trim_keeps_specials_and_used() {
        let full = Vocab::new::<&str>(&[], ["a", "b", "c", "d"].map(String::from)).unwrap();
        let a = full.id("a").unwrap();
        let c = full.id("c").unwrap();
        let corpus = vec![vec![a, c, a]];
        let (t, map) = trim_vocab(&full, &[&corpus]);
        let toks: Vec<&str> = (0..t.len() as u32).map(|i| t.token(i).unwrap()).collect();
        assert_eq!(toks, vec!["<pad>", "<mask>", "</s>", "a", "c"]);
        assert_eq!(map[full.id("b").unwrap() as usize], None);
    }

    #[test]
    fn surface_words_are_distinct() {
        let words: std::collections::HashSet<String> = (0..20_000).map(surface_word).collect();
        assert_eq!(words.len(), 20_000);
    }

    #[test]
    fn cipher_round_trip() {
        let anchors: Vec<bool> = (0..60).map(|i| i % 7 == 0).collect();
        let prof = LanguageProfile::cipher("xx", 2, 60, &anchors, Some(3), 9).unwrap();
        let s: Vec<u32> = vec![0, 5, 7, 59, 13, 14, 3];
        let r = prof.render(&s).unwrap();
        assert_eq!(prof.inverse_render(&r).unwrap(), s);
        assert!(prof.render(&[60]).is_err());
    }

    #[test]
    fn batches_respect_max_tokens() {
        let ex: Vec<Example> = (1..40).map(|n| Example { src: vec![5; n % 13 + 1], tgt: vec![5; n % 11 + 1] }).collect();
        let t = Task::new("a", "a", TaskKind::Denoise, ex, 40).unwrap();
        for b in &t.batches {
            let max = b.iter().map(|&i| t.examples[i].tgt.len() + 1).max().unwrap();
            assert!(b.len() * max <= 40);
        }
        let total: usize = t.batches.iter().map(Vec::len).sum();
        assert_eq!(total, 39);
    }
}
