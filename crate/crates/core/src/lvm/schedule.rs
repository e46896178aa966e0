use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// β as a function of the epoch index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BetaSchedule {
    Constant { value: f64 },
    /// Geometric interpolation from `from` at `start_epoch` to `to` at `end_epoch`, flat outside.
    Exponential { from: f64, to: f64, start_epoch: usize, end_epoch: usize },
    Linear { from: f64, to: f64, start_epoch: usize, end_epoch: usize },
}

impl BetaSchedule {
    pub fn constant(value: f64) -> Self {
        BetaSchedule::Constant { value }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |b: f64| b > 0.0 && b.is_finite();
        match *self {
            BetaSchedule::Constant { value } if ok(value) => Ok(()),
            BetaSchedule::Exponential { from, to, start_epoch, end_epoch }
            | BetaSchedule::Linear { from, to, start_epoch, end_epoch }
                if ok(from) && ok(to) && start_epoch <= end_epoch =>
            {
                Ok(())
            }
            _ => Err(Error::invalid(format!("invalid beta schedule {self:?}"))),
        }
    }

    pub fn at(&self, epoch: usize) -> f64 {
        match *self {
            BetaSchedule::Constant { value } => value,
            BetaSchedule::Exponential { from, to, start_epoch, end_epoch } => {
                let f = fraction(epoch, start_epoch, end_epoch);
                from * (to / from).powf(f)
            }
            BetaSchedule::Linear { from, to, start_epoch, end_epoch } => {
                let f = fraction(epoch, start_epoch, end_epoch);
                from + (to - from) * f
            }
        }
    }
}

fn fraction(epoch: usize, start: usize, end: usize) -> f64 {
    if epoch <= start {
        0.0
    } else if epoch >= end {
        1.0
    } else {
        (epoch - start) as f64 / (end - start) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_endpoints_and_midpoint() {
        let s = BetaSchedule::Exponential { from: 1.0, to: 1e-3, start_epoch: 0, end_epoch: 100 };
        assert_eq!(s.at(0), 1.0);
        assert!((s.at(100) - 1e-3).abs() < 1e-15);
        assert!((s.at(50) - 10f64.powf(-1.5)).abs() < 1e-12);
        assert!((s.at(500) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn linear_and_validation() {
        let s = BetaSchedule::Linear { from: 2.0, to: 1.0, start_epoch: 10, end_epoch: 20 };
        assert_eq!(s.at(5), 2.0);
        assert_eq!(s.at(15), 1.5);
        assert!(BetaSchedule::constant(0.0).validate().is_err());
        assert!(BetaSchedule::Exponential { from: 1.0, to: -1.0, start_epoch: 0, end_epoch: 1 }.validate().is_err());
    }
}
