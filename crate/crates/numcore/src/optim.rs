use std::collections::BTreeMap;

use crate::error::{NumError, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.98, eps: 1e-8, weight_decay: 0.01 }
    }
}

/// First/second moments for one parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
}

/// Optimizer state, keyed by parameter name. The step counter is shared.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct AdamState<T = f32> {
    pub t: u64,
    pub moments: BTreeMap<String, Moments<T>>,
}

/// One trainable parameter together with its gradient for an update.
pub struct ParamUpdate<'a, T> {
    pub name: &'a str,
    pub value: &'a mut [T],
    pub grad: Option<&'a [T]>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new() -> Self {
        Self { t: 0, moments: BTreeMap::new() }
    }
}

/// Adam with bias correction and decoupled weight decay.
///
/// All gradients are validated before anything is written, so a failing
/// call leaves both the parameters and `state` untouched.
pub fn adam_step<T: Scalar>(
    params: &mut [ParamUpdate<'_, T>],
    state: &mut AdamState<T>,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    for p in params.iter() {
        let g = p.grad.ok_or_else(|| NumError::MissingGradient(p.name.to_string()))?;
        if g.len() != p.value.len() {
            return Err(NumError::Shape(format!("gradient of `{}` has wrong length", p.name)));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(NumError::NonFiniteGradient(p.name.to_string()));
        }
        if let Some(mo) = state.moments.get(p.name) {
            if mo.m.len() != p.value.len() {
                return Err(NumError::Shape(format!("optimizer state of `{}` has wrong length", p.name)));
            }
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = T::of(1.0 - cfg.beta1.powi(t));
    let bc2 = T::of(1.0 - cfg.beta2.powi(t));
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let (one_b1, one_b2) = (T::of(1.0 - cfg.beta1), T::of(1.0 - cfg.beta2));
    let lr_t = T::of(lr);
    let eps = T::of(cfg.eps);
    let decay = T::of(1.0 - lr * cfg.weight_decay);
    for p in params.iter_mut() {
        let g = p.grad.expect("validated above");
        let n = p.value.len();
        let mo = state
            .moments
            .entry(p.name.to_string())
            .or_insert_with(|| Moments { m: vec![T::zero(); n], v: vec![T::zero(); n] });
        for i in 0..n {
            if cfg.weight_decay != 0.0 {
                p.value[i] *= decay;
            }
            mo.m[i] = b1 * mo.m[i] + one_b1 * g[i];
            mo.v[i] = b2 * mo.v[i] + one_b2 * g[i] * g[i];
            let mhat = mo.m[i] / bc1;
            let vhat = mo.v[i] / bc2;
            p.value[i] -= lr_t * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(p: &mut [f64], g: &[f64], st: &mut AdamState<f64>, lr: f64, wd: f64) -> Result<()> {
        let cfg = AdamConfig { weight_decay: wd, ..AdamConfig::default() };
        let mut ups = [ParamUpdate { name: "p", value: p, grad: Some(g) }];
        adam_step(&mut ups, st, lr, &cfg)
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = [1.0f64];
        let mut st = AdamState::new();
        step(&mut p, &[1.0], &mut st, 0.1, 0.0).unwrap();
        assert!((p[0] - 0.9).abs() < 1e-7);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn decoupled_decay_only() {
        let mut p = [1.0f64];
        let mut st = AdamState::new();
        step(&mut p, &[0.0], &mut st, 0.1, 0.01).unwrap();
        assert!((p[0] - 0.999).abs() < 1e-15);
    }

    #[test]
    fn zero_grad_no_decay_is_noop() {
        let mut p = [0.25f64, -3.0];
        let mut st = AdamState::new();
        step(&mut p, &[0.0, 0.0], &mut st, 0.1, 0.0).unwrap();
        assert_eq!(p, [0.25, -3.0]);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn non_finite_gradient_leaves_state_untouched() {
        let mut p = [1.0f64];
        let mut st = AdamState::new();
        step(&mut p, &[0.5], &mut st, 0.1, 0.0).unwrap();
        let (p0, st0) = (p, st.clone());
        let err = step(&mut p, &[f64::NAN], &mut st, 0.1, 0.0).unwrap_err();
        assert_eq!(err, NumError::NonFiniteGradient("p".into()));
        assert_eq!(p, p0);
        assert_eq!(st, st0);
    }

    #[test]
    fn missing_gradient_errors() {
        let mut p = [1.0f64];
        let mut st = AdamState::new();
        let mut ups = [ParamUpdate { name: "w", value: &mut p[..], grad: None }];
        assert_eq!(
            adam_step(&mut ups, &mut st, 0.1, &AdamConfig::default()).unwrap_err(),
            NumError::MissingGradient("w".into())
        );
        assert_eq!(st.t, 0);
    }
}
