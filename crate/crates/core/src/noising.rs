//! Span-masking corruption `g` for the denoising objective.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::batch::{TokenId, MASK};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub mask_ratio: f64,
    pub poisson_lambda: f64,
    pub random_replace_ratio: f64,
    pub mask_token_id: TokenId,
    /// Half-open id range that random replacements are drawn from.
    pub random_range: (TokenId, TokenId),
}

impl NoiseSpec {
    pub fn new(random_range: (TokenId, TokenId)) -> Self {
        Self { mask_ratio: 0.3, poisson_lambda: 3.5, random_replace_ratio: 0.1, mask_token_id: MASK, random_range }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mask_ratio) {
            return Err(Error::Config(format!("mask_ratio {} outside [0, 1]", self.mask_ratio)));
        }
        if !(self.poisson_lambda > 0.0 && self.poisson_lambda.is_finite()) {
            return Err(Error::Config(format!("poisson_lambda must be positive, got {}", self.poisson_lambda)));
        }
        if !(0.0..=1.0).contains(&self.random_replace_ratio) {
            return Err(Error::Config("random_replace_ratio outside [0, 1]".into()));
        }
        if self.random_range.0 >= self.random_range.1 {
            return Err(Error::Config("random replacement range is empty".into()));
        }
        Ok(())
    }
}

/// `max(X, 1)` with `X ~ Poisson(λ)`.
pub fn poisson_span_length<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> usize {
    let x: f64 = Poisson::new(lambda).expect("lambda is positive").sample(rng);
    (x as usize).max(1)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    /// Length drawn before truncation.
    pub drawn: usize,
    /// Tokens actually covered.
    pub len: usize,
    pub random: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Corrupted {
    pub tokens: Vec<TokenId>,
    pub spans: Vec<Span>,
}

impl Corrupted {
    pub fn covered(&self) -> usize {
        self.spans.iter().map(|s| s.len).sum()
    }
}

/// Covers `⌊ratio·len⌋` tokens with non-overlapping spans whose lengths are
/// Poisson draws (the last truncated to the remaining budget), replacing each
/// span with one mask token, or with one random token at the replace rate.
///
/// A span start is drawn uniformly among the starts that fit without
/// overlap; when no gap is long enough the span shrinks to the longest gap.
pub fn span_mask<R: Rng + ?Sized>(tokens: &[TokenId], spec: &NoiseSpec, rng: &mut R) -> Corrupted {
    let n = tokens.len();
    let target = ((spec.mask_ratio * n as f64) + 1e-9).floor() as usize;
    let target = target.min(n);
    let mut covered = vec![false; n];
    let mut spans = Vec::new();
    let mut done = 0;
    while done < target {
        let drawn = poisson_span_length(spec.poisson_lambda, rng);
        let mut len = drawn.min(target - done);
        let mut starts = valid_starts(&covered, len);
        if starts.is_empty() {
            len = longest_gap(&covered);
            starts = valid_starts(&covered, len);
        }
        let start = starts[rng.random_range(0..starts.len())];
        covered[start..start + len].iter_mut().for_each(|c| *c = true);
        let random = rng.random::<f64>() < spec.random_replace_ratio;
        spans.push(Span { start, drawn, len, random });
        done += len;
    }
    spans.sort_by_key(|s| s.start);
    let mut out = Vec::with_capacity(n);
    let mut next = spans.iter().peekable();
    let mut i = 0;
    while i < n {
        match next.peek() {
            Some(s) if s.start == i => {
                out.push(if s.random {
                    rng.random_range(spec.random_range.0..spec.random_range.1)
                } else {
                    spec.mask_token_id
                });
                i += s.len;
                next.next();
            }
            _ => {
                out.push(tokens[i]);
                i += 1;
            }
        }
    }
    Corrupted { tokens: out, spans }
}

fn valid_starts(covered: &[bool], len: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut run = 0;
    for (i, c) in covered.iter().enumerate() {
        run = if *c { 0 } else { run + 1 };
        if run >= len {
            out.push(i + 1 - len);
        }
    }
    out
}

fn longest_gap(covered: &[bool]) -> usize {
    let mut best = 0;
    let mut run = 0;
    for c in covered {
        run = if *c { 0 } else { run + 1 };
        best = best.max(run);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(ratio: f64) -> NoiseSpec {
        NoiseSpec { mask_ratio: ratio, ..NoiseSpec::new((10, 100)) }
    }

    #[test]
    fn zero_ratio_is_identity() {
        let t: Vec<TokenId> = (10..20).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(span_mask(&t, &spec(0.0), &mut rng).tokens, t);
    }

    #[test]
    fn tiny_lambda_always_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!((0..1000).all(|_| poisson_span_length(1e-9, &mut rng) == 1));
    }

    #[test]
    fn ten_tokens_cover_three() {
        let t: Vec<TokenId> = (10..20).collect();
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = span_mask(&t, &spec(0.3), &mut rng);
            assert_eq!(c.covered(), 3);
            assert_eq!(c.tokens.len(), 10 - 3 + c.spans.len());
        }
    }

    #[test]
    fn full_cover_single_span_is_one_mask() {
        let t: Vec<TokenId> = (10..13).collect();
        let s = NoiseSpec { random_replace_ratio: 0.0, ..spec(1.0) };
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = span_mask(&t, &s, &mut rng);
            if c.spans.len() == 1 {
                assert_eq!(c.tokens, vec![MASK]);
            }
            assert!(c.tokens.iter().all(|&x| x == MASK));
        }
    }

    #[test]
    fn empty_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(span_mask(&[], &spec(0.3), &mut rng).tokens.is_empty());
    }
}
