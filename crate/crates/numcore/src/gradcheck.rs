//! Central finite-difference verification of analytic gradients (64-bit).

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{NumError, Result};
use crate::tensor::Tensor;

pub struct CheckParam {
    pub name: String,
    pub value: Tensor<f64>,
    pub trainable: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    /// Finite-difference half step.
    pub eps: f64,
    /// Entries probed per trainable parameter (all entries if larger).
    pub samples_per_param: usize,
    /// Lower bound on the relative-error denominator, so entries whose
    /// true gradient is ~0 are judged on absolute error.
    pub floor: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { eps: 1e-5, samples_per_param: 8, floor: 1e-6, seed: 0 }
    }
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (parameter, flat index) of the worst entry.
    pub worst: Option<(String, usize)>,
    /// Every (parameter, flat index) that was perturbed.
    pub probes: Vec<(String, usize)>,
}

/// Compares `analytic[i]` (gradient of parameter `i`) with central
/// differences of `loss` on a seeded subsample of trainable entries.
/// Frozen parameters are never perturbed.
pub fn grad_check<F>(
    params: &mut [CheckParam],
    analytic: &[Option<Vec<f64>>],
    mut loss: F,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    F: FnMut(&[CheckParam]) -> Result<f64>,
{
    if analytic.len() != params.len() {
        return Err(NumError::Shape("one analytic gradient slot per parameter is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradCheckReport::default();
    for pi in 0..params.len() {
        if !params[pi].trainable {
            continue;
        }
        let n = params[pi].value.len();
        let grad = analytic[pi].as_ref().ok_or_else(|| NumError::MissingGradient(params[pi].name.clone()))?;
        if grad.len() != n {
            return Err(NumError::Shape(format!("gradient of `{}` has wrong length", params[pi].name)));
        }
        let mut idx = sample(&mut rng, n, cfg.samples_per_param.min(n)).into_vec();
        idx.sort_unstable();
        for i in idx {
            let orig = params[pi].value.data()[i];
            params[pi].value.data_mut()[i] = orig + cfg.eps;
            let up = loss(params)?;
            params[pi].value.data_mut()[i] = orig - cfg.eps;
            let down = loss(params)?;
            params[pi].value.data_mut()[i] = orig;
            if !up.is_finite() || !down.is_finite() {
                return Err(NumError::NonFiniteLoss);
            }
            let numeric = (up - down) / (2.0 * cfg.eps);
            let a = grad[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(cfg.floor);
            report.probes.push((params[pi].name.clone(), i));
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = rel;
                report.worst = Some((params[pi].name.clone(), i));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_at_three() {
        let mut ps = vec![CheckParam {
            name: "p".into(),
            value: Tensor::from_vec([1], vec![3.0]).unwrap(),
            trainable: true,
        }];
        let analytic = vec![Some(vec![6.0])];
        let r = grad_check(&mut ps, &analytic, |ps| Ok(ps[0].value.data()[0].powi(2)), &GradCheckConfig::default())
            .unwrap();
        assert!(r.max_rel_error * 6.0 < 1e-8);
    }

    #[test]
    fn frozen_parameters_are_not_probed() {
        let mut ps = vec![
            CheckParam { name: "a".into(), value: Tensor::full([4], 1.0), trainable: true },
            CheckParam { name: "frozen".into(), value: Tensor::full([4], 2.0), trainable: false },
        ];
        let analytic = vec![Some(vec![2.0; 4]), None];
        let r = grad_check(
            &mut ps,
            &analytic,
            |ps| Ok(ps[0].value.data().iter().map(|x| 2.0 * x).sum::<f64>() * ps[1].value.data()[0] / 2.0),
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert_eq!(r.probes.len(), 4);
        assert!(r.probes.iter().all(|(n, _)| n == "a"));
        assert!(r.max_rel_error < 1e-8);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let mut ps = vec![CheckParam { name: "p".into(), value: Tensor::full([1], 1.0), trainable: true }];
        let r = grad_check(&mut ps, &[Some(vec![1.0])], |ps| Ok(ps[0].value.data()[0].powi(2)), &GradCheckConfig::default())
            .unwrap();
        assert!((r.max_rel_error - 0.5).abs() < 1e-6);
    }

    #[test]
    fn non_finite_loss_errors() {
        let mut ps = vec![CheckParam { name: "p".into(), value: Tensor::full([1], 1.0), trainable: true }];
        let e = grad_check(&mut ps, &[Some(vec![1.0])], |_| Ok(f64::NAN), &GradCheckConfig::default()).unwrap_err();
        assert_eq!(e, NumError::NonFiniteLoss);
    }
}
