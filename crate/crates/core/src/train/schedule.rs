use crate::error::{Error, Result};

/// `base · (1 − step/total)`.
pub fn linear_schedule(step: usize, total: usize, base: f64) -> Result<f64> {
    LinearSchedule::new(base, total, 0)?.lr_at(step)
}

/// Linear decay to zero over `total` steps, after an optional linear warmup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSchedule {
    pub base: f64,
    pub total: usize,
    pub warmup: usize,
}

impl LinearSchedule {
    pub fn new(base: f64, total: usize, warmup: usize) -> Result<Self> {
        if total == 0 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        if warmup >= total && warmup > 0 {
            return Err(Error::invalid(format!(
                "warmup of {warmup} steps leaves no decay within {total}"
            )));
        }
        Ok(LinearSchedule {
            base,
            total,
            warmup,
        })
    }

    pub fn lr_at(&self, step: usize) -> Result<f64> {
        if step > self.total {
            return Err(Error::invalid(format!(
                "step {step} past the end of a {}-step schedule",
                self.total
            )));
        }
        if step < self.warmup {
            return Ok(self.base * step as f64 / self.warmup as f64);
        }
        Ok(self.base * (self.total - step) as f64 / (self.total - self.warmup) as f64)
    }
}
