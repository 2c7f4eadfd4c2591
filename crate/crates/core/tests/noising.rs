use dadapt::batch::{TokenId, MASK};
use dadapt::noising::{span_mask, NoiseSpec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn spans_cover_the_budget_without_overlap(len in 1usize..60, seed in any::<u64>(), ratio in 0.0f64..1.0) {
        let tokens: Vec<TokenId> = (0..len as TokenId).map(|t| t + 500).collect();
        let spec = NoiseSpec { mask_ratio: ratio, ..NoiseSpec::new((10, 400)) };
        let c = span_mask(&tokens, &spec, &mut ChaCha8Rng::seed_from_u64(seed));
        let budget = ((ratio * len as f64) + 1e-9).floor() as usize;
        prop_assert_eq!(c.covered(), budget);
        let mut end = 0;
        for s in &c.spans {
            prop_assert!(s.start >= end && s.len >= 1 && s.start + s.len <= len);
            end = s.start + s.len;
        }
        prop_assert_eq!(c.tokens.len(), len - c.covered() + c.spans.len());
    }

    #[test]
    fn uncovered_tokens_survive_in_order(len in 1usize..60, seed in any::<u64>()) {
        let tokens: Vec<TokenId> = (0..len as TokenId).map(|t| t + 500).collect();
        let c = span_mask(&tokens, &NoiseSpec::new((10, 400)), &mut ChaCha8Rng::seed_from_u64(seed));
        let kept: Vec<TokenId> = c.tokens.iter().copied().filter(|&t| t >= 500).collect();
        let mut expected = Vec::new();
        let mut i = 0;
        for s in &c.spans {
            expected.extend_from_slice(&tokens[i..s.start]);
            i = s.start + s.len;
        }
        expected.extend_from_slice(&tokens[i..]);
        prop_assert_eq!(kept, expected);
        for t in &c.tokens {
            prop_assert!(*t >= 500 || *t == MASK || (10..400).contains(t));
        }
    }
}

#[test]
fn same_seed_same_corruption() {
    let tokens: Vec<TokenId> = (100..130).collect();
    let spec = NoiseSpec::new((10, 400));
    let a = span_mask(&tokens, &spec, &mut ChaCha8Rng::seed_from_u64(3));
    let b = span_mask(&tokens, &spec, &mut ChaCha8Rng::seed_from_u64(3));
    assert_eq!(a, b);
}
