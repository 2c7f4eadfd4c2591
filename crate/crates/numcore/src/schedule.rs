use crate::error::{NumError, Result};

/// Linear warmup followed by polynomial decay to zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrSchedule {
    pub max_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
    pub decay_power: f64,
}

impl LrSchedule {
    pub fn new(max_lr: f64, warmup_steps: u64, total_steps: u64) -> Result<Self> {
        let s = Self { max_lr, warmup_steps, total_steps, decay_power: 1.0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.max_lr > 0.0 && self.max_lr.is_finite()) {
            return Err(NumError::InvalidSchedule(format!("max_lr must be positive, got {}", self.max_lr)));
        }
        if self.warmup_steps == 0 || self.warmup_steps > self.total_steps {
            return Err(NumError::InvalidSchedule(format!(
                "need 0 < warmup ({}) <= total ({})",
                self.warmup_steps, self.total_steps
            )));
        }
        if !(self.decay_power > 0.0) {
            return Err(NumError::InvalidSchedule("decay_power must be positive".into()));
        }
        Ok(())
    }
}

/// Learning rate at `step` (0-based count of completed warmup progress).
pub fn lr_at(step: u64, sched: &LrSchedule) -> Result<f64> {
    if step > sched.total_steps {
        return Err(NumError::ScheduleExhausted { step, total: sched.total_steps });
    }
    if step < sched.warmup_steps {
        return Ok(sched.max_lr * step as f64 / sched.warmup_steps as f64);
    }
    let span = sched.total_steps - sched.warmup_steps;
    if span == 0 {
        return Ok(sched.max_lr);
    }
    let frac = (sched.total_steps - step) as f64 / span as f64;
    Ok(sched.max_lr * frac.powf(sched.decay_power))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table7() -> LrSchedule {
        LrSchedule::new(1e-4, 4000, 120_000).unwrap()
    }

    #[test]
    fn reference_points() {
        let s = table7();
        assert_eq!(lr_at(0, &s).unwrap(), 0.0);
        assert!((lr_at(4000, &s).unwrap() - 1e-4).abs() < 1e-18);
        assert!((lr_at(62_000, &s).unwrap() - 5e-5).abs() < 1e-18);
        assert_eq!(lr_at(120_000, &s).unwrap(), 0.0);
    }

    #[test]
    fn exhausted_schedule_errors() {
        assert_eq!(
            lr_at(120_001, &table7()).unwrap_err(),
            NumError::ScheduleExhausted { step: 120_001, total: 120_000 }
        );
    }

    #[test]
    fn continuous_at_warmup() {
        let s = table7();
        let before = lr_at(3999, &s).unwrap();
        let at = lr_at(4000, &s).unwrap();
        let after = lr_at(4001, &s).unwrap();
        assert!((at - before).abs() < 1e-7 && (at - after).abs() < 1e-7);
    }

    #[test]
    fn invalid_schedules_rejected() {
        assert!(LrSchedule::new(1e-4, 0, 10).is_err());
        assert!(LrSchedule::new(1e-4, 11, 10).is_err());
        assert!(LrSchedule::new(0.0, 1, 10).is_err());
    }
}
