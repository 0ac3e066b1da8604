//! HyperLogLog sketches with several cardinality estimators.
//!
//! * [`classic`]: raw estimator, linear counting and the original composite
//! * [`improved`]: the σ/τ-corrected estimator, unbiased over the full range
//! * [`ml`]: single-sketch maximum likelihood via a secant root search
//! * [`joint`]: joint maximum likelihood for `|A \ B|`, `|B \ A|`, `|A ∩ B|`
//! * [`sim`]: exact register-law sampling and error statistics
//!
//! ```
//! use hllkit::{Sketch, SketchConfig, improved_estimate};
//!
//! let mut sketch = Sketch::new(SketchConfig::new(12, 20)?);
//! let mut h = 0x9e37_79b9_7f4a_7c15_u64;
//! for _ in 0..10_000 {
//!     h = h.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
//!     sketch.insert_hash(h ^ (h >> 29));
//! }
//! let n = improved_estimate(&sketch.histogram());
//! assert!((n / 10_000.0 - 1.0).abs() < 0.1);
//! # Ok::<(), hllkit::Error>(())
//! ```

mod bfgs;
pub mod classic;
pub mod cli;
pub mod error;
pub mod estimator;
pub mod improved;
pub mod joint;
pub mod ml;
pub mod sim;
pub mod sketch;

pub use classic::{large_range_correction, linear_counting_estimate, original_estimate, raw_estimate, ALPHA_INF};
pub use error::{Degeneracy, Error, Result};
pub use estimator::Estimator;
pub use improved::{improved_estimate, sigma, tau, zeta};
pub use joint::{
    equal_register_probability_bounds, inclusion_exclusion_estimate, joint_ml_estimate, JointEstimate,
    JointStatistic,
};
pub use ml::{ml_estimate, SolverConfig};
pub use sim::{ErrorReport, RngSeed};

pub use sketch::{RegisterHistogram, Sketch, SketchConfig};
