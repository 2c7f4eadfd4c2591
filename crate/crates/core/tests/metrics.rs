//! BLEU and chrF against values produced by sacrebleu 2.6.0
//! (`BLEU()` and `CHRF(whitespace=True)`) on the same inputs.

use dadapt::metrics::{chrf, corpus_bleu};

const FIXTURE_BLEU: f64 = 66.66074485809682;
const FIXTURE_CHRF: f64 = 80.88272778858759;

fn lines(s: &str) -> Vec<&str> {
    s.lines().collect()
}

#[test]
fn twenty_sentence_fixture_matches_reference() {
    let hyp = lines(include_str!("fixtures/hyp.txt"));
    let refs = lines(include_str!("fixtures/ref.txt"));
    assert_eq!(hyp.len(), 20);
    let b = corpus_bleu(&hyp, &refs).unwrap();
    assert_eq!(b.counts, [159, 122, 91, 70]);
    assert_eq!(b.totals, [177, 158, 139, 120]);
    assert_eq!((b.sys_len, b.ref_len), (177, 190));
    assert!((b.score - FIXTURE_BLEU).abs() < 0.01, "{}", b.score);
    let c = chrf(&hyp, &refs).unwrap();
    assert!((c - FIXTURE_CHRF).abs() < 0.01, "{c}");
}

#[test]
fn small_cases_match_reference() {
    let cases: [(&[&str], &[&str], f64, f64); 3] = [
        (&["a b c", "d e"], &["a b d", "d e f"], 0.0, 44.13571000599161),
        (&["x y z w"], &["x y q w v"], 27.534765745159184, 28.43548930806549),
        (&["Hello, world.", "It costs $3.50!"], &["Hello world!", "It costs $3.50."], 44.17918226831576, 77.07216885278683),
    ];
    for (h, r, bleu, c) in cases {
        assert!((corpus_bleu(h, r).unwrap().score - bleu).abs() < 1e-9, "{h:?}");
        assert!((chrf(h, r).unwrap() - c).abs() < 1e-9, "{h:?}");
    }
}

#[test]
fn sentence_order_does_not_matter() {
    let hyp = lines(include_str!("fixtures/hyp.txt"));
    let refs = lines(include_str!("fixtures/ref.txt"));
    let (mut h2, mut r2) = (hyp.clone(), refs.clone());
    h2.reverse();
    r2.reverse();
    assert_eq!(corpus_bleu(&hyp, &refs).unwrap().score, corpus_bleu(&h2, &r2).unwrap().score);
}
