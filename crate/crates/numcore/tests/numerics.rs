use dadapt_numcore::{adam_step, gemm, grad_check, lr_at, AdamConfig, AdamState, AttnLayout, CheckParam, GradCheckConfig, Graph, LrSchedule, ParamUpdate, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn naive(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                let x = if ta { a[p * m + i] } else { a[i * k + p] };
                let y = if tb { b[j * k + p] } else { b[p * n + j] };
                c[i * n + j] += x * y;
            }
        }
    }
    c
}

proptest! {
    #[test]
    fn gemm_matches_naive(m in 1usize..7, k in 1usize..7, n in 1usize..7, ta: bool, tb: bool, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Tensor::<f64>::randn([m * k], 1.0, &mut rng);
        let b = Tensor::<f64>::randn([k * n], 1.0, &mut rng);
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, a.data(), ta, b.data(), tb, &mut c, false);
        for (x, y) in c.iter().zip(naive(m, k, n, a.data(), ta, b.data(), tb)) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn schedule_is_bounded_and_peaks_at_warmup(warm in 1u64..50, extra in 0u64..200) {
        let s = LrSchedule::new(1e-3, warm, warm + extra).unwrap();
        for step in 0..=warm + extra {
            let lr = lr_at(step, &s).unwrap();
            prop_assert!((0.0..=1e-3 + 1e-18).contains(&lr));
        }
        prop_assert!((lr_at(warm, &s).unwrap() - 1e-3).abs() < 1e-15);
        prop_assert!(lr_at(warm + extra + 1, &s).is_err());
    }
}

#[test]
fn adam_leaves_state_untouched_on_bad_gradient() {
    let mut p = vec![1.0f64, 2.0];
    let mut st = AdamState::<f64>::new();
    let g = [f64::NAN, 0.0];
    let mut ups = [ParamUpdate { name: "p", value: &mut p, grad: Some(&g) }];
    assert!(adam_step(&mut ups, &mut st, 0.1, &AdamConfig::default()).is_err());
    assert_eq!(p, vec![1.0, 2.0]);
    assert_eq!(st, AdamState::new());
}

#[test]
fn attention_and_layer_norm_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (batch, t, heads, hd) = (2, 3, 2, 2);
    let w = heads * hd;
    let shapes = [vec![batch * t, w], vec![w, w], vec![w], vec![w]];
    let mut params: Vec<CheckParam> = shapes
        .iter()
        .enumerate()
        .map(|(i, s)| CheckParam { name: format!("p{i}"), value: Tensor::randn(s.clone(), 0.7, &mut rng), trainable: true })
        .collect();
    let layout = AttnLayout {
        batch,
        heads,
        tq: t,
        tk: t,
        head_dim: hd,
        causal: true,
        key_pad: vec![false, false, true, false, false, false],
        query_offset: 0,
    };
    let build = |p: &[CheckParam], g: &mut Graph<f64>| {
        let vars: Vec<_> = p.iter().map(|c| g.param(&c.value, true)).collect();
        let x = g.layer_norm(vars[0], vars[2], vars[3], 1e-5).unwrap();
        let q = g.matmul(x, vars[1], false).unwrap();
        let a = g.attention::<ChaCha8Rng>(q, x, q, layout.clone(), 0.0, None).unwrap();
        let s = g.gelu(a);
        let s = g.mul(s, s).unwrap();
        (vars, g.sum(s))
    };
    let mut g = Graph::<f64>::new();
    let (vars, loss) = build(&params, &mut g);
    let grads = g.backward(loss).unwrap();
    let analytic: Vec<_> = vars.iter().map(|v| grads.get(*v).map(|s| s.to_vec())).collect();
    let report = grad_check(
        &mut params,
        &analytic,
        |p| {
            let mut g = Graph::<f64>::new();
            let (_, l) = build(p, &mut g);
            Ok(g.value(l)[0])
        },
        &GradCheckConfig { samples_per_param: 24, ..GradCheckConfig::default() },
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-6, "{report:?}");
}
