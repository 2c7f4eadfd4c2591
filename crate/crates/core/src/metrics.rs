//! Corpus BLEU and chrF, computed the same way sacrebleu does with its
//! default `13a` tokenizer and `exp` smoothing, plus benchmark reporting.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_NGRAM_ORDER: usize = 4;
pub const CHRF_CHAR_ORDER: usize = 6;
pub const CHRF_BETA: f64 = 2.0;

/// mteval-v13a tokenization.
pub fn tokenize_13a(line: &str) -> Vec<String> {
    let mut line = line.replace("<skipped>", "").replace("-\n", "").replace('\n', " ");
    if line.contains('&') {
        line = line.replace("&quot;", "\"").replace("&amp;", "&").replace("&lt;", "<").replace("&gt;", ">");
    }
    let padded: Vec<char> = format!(" {line} ").chars().collect();
    let mut s: Vec<char> = Vec::with_capacity(padded.len() * 2);
    for c in padded {
        if is_13a_punct(c) {
            s.extend([' ', c, ' ']);
        } else {
            s.push(c);
        }
    }
    let digit = |c: char| c.is_ascii_digit();
    let period = |c: char| c == '.' || c == ',';
    // ([^0-9])([.,]) -> "\1 \2 "
    let s = sub_pairs(&s, |a, b| !digit(a) && period(b), |a, b, o| o.extend([a, ' ', b, ' ']));
    // ([.,])([^0-9]) -> " \1 \2"
    let s = sub_pairs(&s, |a, b| period(a) && !digit(b), |a, b, o| o.extend([' ', a, ' ', b]));
    // ([0-9])(-) -> "\1 \2 "
    let s = sub_pairs(&s, |a, b| digit(a) && b == '-', |a, b, o| o.extend([a, ' ', b, ' ']));
    s.into_iter().collect::<String>().split_whitespace().map(str::to_string).collect()
}

fn is_13a_punct(c: char) -> bool {
    matches!(c, '{'..='~' | '['..='`' | ' '..='&' | '('..='+' | ':'..='@' | '/')
}

/// Non-overlapping left-to-right substitution of two-character matches.
fn sub_pairs(s: &[char], hit: impl Fn(char, char) -> bool, rep: impl Fn(char, char, &mut Vec<char>)) -> Vec<char> {
    let mut out = Vec::with_capacity(s.len() + 8);
    let mut i = 0;
    while i < s.len() {
        if i + 1 < s.len() && hit(s[i], s[i + 1]) {
            rep(s[i], s[i + 1], &mut out);
            i += 2;
        } else {
            out.push(s[i]);
            i += 1;
        }
    }
    out
}

fn ngram_counts<T: std::hash::Hash + Eq + Clone>(items: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut m = HashMap::new();
    if items.len() >= n {
        for w in items.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    pub score: f64,
    pub counts: [u64; MAX_NGRAM_ORDER],
    pub totals: [u64; MAX_NGRAM_ORDER],
    pub precisions: [f64; MAX_NGRAM_ORDER],
    pub bp: f64,
    pub sys_len: u64,
    pub ref_len: u64,
}

fn check_lengths(hyps: usize, refs: usize) -> Result<()> {
    if hyps != refs {
        return Err(Error::Data(format!("{hyps} hypotheses but {refs} references")));
    }
    Ok(())
}

/// Corpus BLEU against a single reference per segment.
pub fn corpus_bleu<S: AsRef<str>, R: AsRef<str>>(hyps: &[S], refs: &[R]) -> Result<BleuReport> {
    check_lengths(hyps.len(), refs.len())?;
    let mut counts = [0u64; MAX_NGRAM_ORDER];
    let mut totals = [0u64; MAX_NGRAM_ORDER];
    let (mut sys_len, mut ref_len) = (0u64, 0u64);
    for (h, r) in hyps.iter().zip(refs) {
        let h = tokenize_13a(h.as_ref());
        let r = tokenize_13a(r.as_ref());
        sys_len += h.len() as u64;
        ref_len += r.len() as u64;
        for n in 1..=MAX_NGRAM_ORDER {
            let hc = ngram_counts(&h, n);
            let rc = ngram_counts(&r, n);
            totals[n - 1] += h.len().saturating_sub(n - 1) as u64;
            counts[n - 1] += hc.iter().map(|(g, c)| (*c).min(rc.get(g).copied().unwrap_or(0)) as u64).sum::<u64>();
        }
    }
    Ok(bleu_from_stats(counts, totals, sys_len, ref_len))
}

fn my_log(x: f64) -> f64 {
    if x == 0.0 {
        -9_999_999_999.0
    } else {
        x.ln()
    }
}

fn bleu_from_stats(counts: [u64; 4], totals: [u64; 4], sys_len: u64, ref_len: u64) -> BleuReport {
    let bp = if sys_len < ref_len {
        if sys_len > 0 {
            (1.0 - ref_len as f64 / sys_len as f64).exp()
        } else {
            0.0
        }
    } else {
        1.0
    };
    let mut precisions = [0.0; MAX_NGRAM_ORDER];
    let mut report = BleuReport { score: 0.0, counts, totals, precisions, bp, sys_len, ref_len };
    if counts.iter().all(|&c| c == 0) {
        return report;
    }
    let mut smooth = 1.0;
    for n in 0..MAX_NGRAM_ORDER {
        if totals[n] == 0 {
            break;
        }
        precisions[n] = if counts[n] == 0 {
            smooth *= 2.0;
            100.0 / (smooth * totals[n] as f64)
        } else {
            100.0 * counts[n] as f64 / totals[n] as f64
        };
    }
    let mean = precisions.iter().map(|&p| my_log(p)).sum::<f64>() / MAX_NGRAM_ORDER as f64;
    report.score = bp * mean.exp();
    report.precisions = precisions;
    report
}

/// Corpus chrF (character orders 1..=6, β = 2, whitespace kept).
pub fn chrf<S: AsRef<str>, R: AsRef<str>>(hyps: &[S], refs: &[R]) -> Result<f64> {
    check_lengths(hyps.len(), refs.len())?;
    let mut stats = [[0u64; 3]; CHRF_CHAR_ORDER];
    for (h, r) in hyps.iter().zip(refs) {
        let h: Vec<char> = h.as_ref().chars().collect();
        let r: Vec<char> = r.as_ref().chars().collect();
        for n in 1..=CHRF_CHAR_ORDER {
            let hc = ngram_counts(&h, n);
            let rc = ngram_counts(&r, n);
            let s = &mut stats[n - 1];
            s[0] += h.len().saturating_sub(n - 1) as u64;
            s[1] += r.len().saturating_sub(n - 1) as u64;
            s[2] += hc.iter().map(|(g, c)| (*c).min(rc.get(g).copied().unwrap_or(0)) as u64).sum::<u64>();
        }
    }
    Ok(chrf_from_stats(&stats))
}

fn chrf_from_stats(stats: &[[u64; 3]]) -> f64 {
    const EPS: f64 = 1e-16;
    let factor = CHRF_BETA * CHRF_BETA;
    let (mut avg_prec, mut avg_rec, mut eff) = (0.0, 0.0, 0usize);
    for &[n_hyp, n_ref, n_match] in stats {
        let prec = if n_hyp > 0 { n_match as f64 / n_hyp as f64 } else { EPS };
        let rec = if n_ref > 0 { n_match as f64 / n_ref as f64 } else { EPS };
        if n_hyp > 0 && n_ref > 0 {
            avg_prec += prec;
            avg_rec += rec;
            eff += 1;
        }
    }
    if eff == 0 {
        return 0.0;
    }
    avg_prec /= eff as f64;
    avg_rec /= eff as f64;
    if avg_prec + avg_rec == 0.0 {
        return 0.0;
    }
    100.0 * (1.0 + factor) * avg_prec * avg_rec / (factor * avg_prec + avg_rec)
}

/// One scored system output on one direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub system: String,
    pub src: String,
    pub tgt: String,
    pub bleu: f64,
    pub chrf: f64,
    pub sentences: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<ScoreRow>,
    /// Macro BLEU per system and direction class (`xx->en`, `en->xx`).
    pub macro_bleu: BTreeMap<String, BTreeMap<String, f64>>,
}

/// Groups rows by system and by whether the pivot is the target or the
/// source, averaging BLEU within each group.
pub fn benchmark_report(rows: Vec<ScoreRow>, pivot: &str) -> BenchmarkReport {
    let mut acc: BTreeMap<String, BTreeMap<String, (f64, usize)>> = BTreeMap::new();
    for r in &rows {
        let class = if r.tgt == pivot {
            format!("xx->{pivot}")
        } else if r.src == pivot {
            format!("{pivot}->xx")
        } else {
            "xx->yy".to_string()
        };
        let e = acc.entry(r.system.clone()).or_default().entry(class).or_insert((0.0, 0));
        e.0 += r.bleu;
        e.1 += 1;
    }
    let macro_bleu = acc
        .into_iter()
        .map(|(s, m)| (s, m.into_iter().map(|(k, (sum, n))| (k, sum / n as f64)).collect()))
        .collect();
    BenchmarkReport { rows, macro_bleu }
}

impl BenchmarkReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<14} {:<12} {:>7} {:>7}\n", "system", "direction", "BLEU", "chrF");
        for r in &self.rows {
            out += &format!("{:<14} {:<12} {:>7.2} {:>7.2}\n", r.system, format!("{}->{}", r.src, r.tgt), r.bleu, r.chrf);
        }
        out += "\nmacro BLEU\n";
        for (s, m) in &self.macro_bleu {
            for (k, v) in m {
                out += &format!("{s:<14} {k:<12} {v:>7.2}\n");
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(tokenize_13a("Hello, world."), ["Hello", ",", "world", "."]);
        assert_eq!(tokenize_13a("3.5 1,000 2-3"), ["3.5", "1,000", "2", "-", "3"]);
        assert_eq!(tokenize_13a("a&amp;b (c)"), ["a", "&", "b", "(", "c", ")"]);
    }

    #[test]
    fn identical_corpus_is_perfect() {
        let s = ["ba ka da fa ga", "mo no po lo so to"];
        assert!((corpus_bleu(&s, &s).unwrap().score - 100.0).abs() < 1e-9);
        assert!((chrf(&s, &s).unwrap() - 100.0).abs() < 1e-9);
    }

    #[test]
    fn disjoint_corpus_is_zero() {
        assert_eq!(corpus_bleu(&["aa bb"], &["cc dd"]).unwrap().score, 0.0);
        assert_eq!(chrf(&["aa"], &["cc"]).unwrap(), 0.0);
    }

    #[test]
    fn length_mismatch_is_data_error() {
        assert!(matches!(corpus_bleu(&["a"], &["a", "b"]), Err(Error::Data(_))));
    }

    #[test]
    fn macro_average_by_direction_class() {
        let row = |s: &str, t: &str, b| ScoreRow { system: "DA".into(), src: s.into(), tgt: t.into(), bleu: b, chrf: 0.0, sentences: 1 };
        let r = benchmark_report(vec![row("aa", "en", 10.0), row("bb", "en", 20.0), row("en", "aa", 4.0)], "en");
        assert_eq!(r.macro_bleu["DA"]["xx->en"], 15.0);
        assert_eq!(r.macro_bleu["DA"]["en->xx"], 4.0);
    }
}
