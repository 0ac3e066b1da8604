use std::fmt;
use std::str::FromStr;

use crate::classic::{linear_counting_estimate, original_estimate, raw_estimate};
use crate::error::{Error, Result};
use crate::improved::improved_estimate;
use crate::ml::{ml_estimate, SolverConfig};
use crate::sketch::RegisterHistogram;

/// Selects one of the single-sketch cardinality estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    Raw,
    Linear,
    Original,
    Improved,
    Ml,
}

impl Estimator {
    pub const ALL: [Estimator; 5] = [
        Estimator::Raw,
        Estimator::Linear,
        Estimator::Original,
        Estimator::Improved,
        Estimator::Ml,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Raw => "raw",
            Estimator::Linear => "linear",
            Estimator::Original => "original",
            Estimator::Improved => "improved",
            Estimator::Ml => "ml",
        }
    }

    /// Estimates the cardinality; the ML estimator uses the default solver.
    pub fn estimate(&self, h: &RegisterHistogram) -> Result<f64> {
        match self {
            Estimator::Raw => Ok(raw_estimate(h)),
            Estimator::Linear => linear_counting_estimate(h.zeros(), h.m()),
            Estimator::Original => original_estimate(h),
            Estimator::Improved => Ok(improved_estimate(h)),
            Estimator::Ml => ml_estimate(h, &SolverConfig::default()),
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Estimator::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown estimator {s:?}")))
    }
}
