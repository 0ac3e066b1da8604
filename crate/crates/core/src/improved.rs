//! The improved estimator.
//!
//! Zero-valued and saturated registers are the reason the raw estimator is
//! biased at small and large cardinalities. The improved estimator replaces
//! `C_0` by `m σ(C_0/m)` and `C_{q+1}` by `2 m τ(1 - C_{q+1}/m)` in the
//! raw estimator's denominator, which extrapolates the register value
//! distribution below 0 and above `q + 1`.

use std::f64::consts::LN_2;

use crate::classic::ALPHA_INF;
use crate::error::{Error, Result};
use crate::sketch::{RegisterHistogram, SketchConfig};

/// Termination control for the σ and τ series.
///
/// The series stop when the next term no longer changes the accumulated sum,
/// or when a term drops below `rel_eps` times the sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecialFunctionTolerance {
    rel_eps: f64,
}

impl SpecialFunctionTolerance {
    pub fn new(rel_eps: f64) -> Result<Self> {
        if !(rel_eps > 0.0 && rel_eps <= 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "series tolerance must be in (0, 1e-12], got {rel_eps}"
            )));
        }
        Ok(Self { rel_eps })
    }

    pub fn rel_eps(&self) -> f64 {
        self.rel_eps
    }
}

impl Default for SpecialFunctionTolerance {
    fn default() -> Self {
        Self {
            rel_eps: f64::EPSILON / 4.0,
        }
    }
}

// Hard cap on series length. σ needs ~log2(1/ln(1/x)) + 53 terms as x -> 1
// and τ needs ~25; neither gets near this.
const MAX_SERIES_TERMS: usize = 1100;

fn check_unit_interval(x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{x} is not in [0, 1]")))
    }
}

/// `σ(x) = x + Σ_{k≥1} x^(2^k) 2^(k-1)`; `+∞` at `x = 1`.
pub fn sigma(x: f64) -> Result<f64> {
    sigma_with(x, SpecialFunctionTolerance::default())
}

pub fn sigma_with(x: f64, tol: SpecialFunctionTolerance) -> Result<f64> {
    check_unit_interval(x)?;
    if x == 1.0 {
        return Ok(f64::INFINITY);
    }
    let mut power = x;
    let mut weight = 1.0;
    let mut sum = x;
    for _ in 0..MAX_SERIES_TERMS {
        power *= power;
        let term = power * weight;
        let next = sum + term;
        if next == sum || term <= tol.rel_eps * sum {
            return Ok(next);
        }
        sum = next;
        weight *= 2.0;
    }
    Ok(sum)
}

/// Terms `(1 - x^(2^-k))² 2^-k`, `k = 1, 2, ...`, of the τ series, up to the
/// point where they stop contributing.
pub fn tau_series_terms(x: f64) -> Result<Vec<f64>> {
    tau_series_terms_with(x, SpecialFunctionTolerance::default())
}

pub fn tau_series_terms_with(x: f64, tol: SpecialFunctionTolerance) -> Result<Vec<f64>> {
    check_unit_interval(x)?;
    let mut terms = Vec::new();
    if x == 0.0 || x == 1.0 {
        return Ok(terms);
    }
    let head = 1.0 - x;
    let mut root = x;
    let mut weight = 1.0;
    let mut running = head;
    for _ in 0..MAX_SERIES_TERMS {
        root = root.sqrt();
        weight *= 0.5;
        let gap = 1.0 - root;
        let term = gap * gap * weight;
        let next = running - term;
        if term == 0.0 || next == running || term <= tol.rel_eps * running {
            break;
        }
        terms.push(term);
        running = next;
    }
    Ok(terms)
}

/// `τ(x) = (1 - x - Σ_{k≥1} (1 - x^(2^-k))² 2^-k) / 3`, evaluated by
/// repeated square roots. Terms are summed smallest first.
pub fn tau(x: f64) -> Result<f64> {
    tau_with(x, SpecialFunctionTolerance::default())
}

pub fn tau_with(x: f64, tol: SpecialFunctionTolerance) -> Result<f64> {
    let terms = tau_series_terms_with(x, tol)?;
    if terms.is_empty() && (x == 0.0 || x == 1.0) {
        return Ok(0.0);
    }
    let tail: f64 = terms.iter().rev().sum();
    Ok(((1.0 - x) - tail) / 3.0)
}

/// `ζ(x) = ln 2 Σ_k 2^(k+x) exp(-2^(k+x))`, a periodic function (period 1)
/// with mean 1 and amplitude below 1e-5.
pub fn zeta(x: f64) -> f64 {
    if !x.is_finite() {
        return f64::NAN;
    }
    let frac = x - x.floor();
    // Outside k in [-64, 64] every term is below 1e-300 relative to the peak.
    // Summing from the small end keeps rounding at the last-ulp level.
    let mut sum = 0.0;
    for k in -64i32..=64 {
        let t = (f64::from(k) + frac).exp2();
        sum += t * (-t).exp();
    }
    LN_2 * sum
}

/// `m σ(C_0/m)`, with the `C_0 = m` case mapped to `+∞`.
fn small_correction(c0: u32, m: f64) -> f64 {
    // `sigma` only fails outside [0, 1], which a valid histogram cannot produce.
    m * sigma(f64::from(c0) / m).unwrap_or(f64::INFINITY)
}

fn large_correction(c_saturated: u32, m: f64, q: usize) -> f64 {
    let x = 1.0 - f64::from(c_saturated) / m;
    m * tau(x).unwrap_or(0.0) * (-(q as f64)).exp2()
}

fn improved_from_parts(h: &RegisterHistogram, small: f64, large: f64) -> f64 {
    let m = h.m() as f64;
    if h.zeros() as usize == h.m() {
        return 0.0;
    }
    let q = h.q();
    let middle: f64 = (1..=q)
        .map(|k| f64::from(h.count(k)) * (-(k as f64)).exp2())
        .sum();
    let denominator = small + middle + large;
    if denominator == 0.0 {
        // every register saturated
        return f64::INFINITY;
    }
    ALPHA_INF * m * m / denominator
}

/// Improved estimator `α∞ m² / (m σ(C_0/m) + Σ_{k=1}^{q} C_k 2^-k + m τ(1 - C_{q+1}/m) 2^-q)`.
///
/// Returns 0 for a fresh sketch and `+∞` when every register is saturated.
pub fn improved_estimate(h: &RegisterHistogram) -> f64 {
    let m = h.m() as f64;
    let small = small_correction(h.zeros(), m);
    let large = large_correction(h.saturated(), m, h.q());
    improved_from_parts(h, small, large)
}

/// Precomputed `m σ(i/m)` and `m τ(1 - i/m) 2^-q` for `i = 0..=m`, which makes
/// the improved estimate a table lookup plus a `q`-term sum.
#[derive(Debug, Clone)]
pub struct CorrectionTables {
    config: SketchConfig,
    small: Vec<f64>,
    large: Vec<f64>,
}

impl CorrectionTables {
    pub fn new(config: SketchConfig) -> Self {
        let m = config.m();
        let mf = m as f64;
        let q = usize::from(config.q());
        let small = (0..=m as u32).map(|i| small_correction(i, mf)).collect();
        let large = (0..=m as u32)
            .map(|i| large_correction(i, mf, q))
            .collect();
        Self {
            config,
            small,
            large,
        }
    }

    pub fn config(&self) -> SketchConfig {
        self.config
    }

    pub fn estimate(&self, h: &RegisterHistogram) -> Result<f64> {
        self.config.ensure_same(&h.config())?;
        Ok(improved_from_parts(
            h,
            self.small[h.zeros() as usize],
            self.large[h.saturated() as usize],
        ))
    }
}

/// Estimate of `C'_k` for `k <= 0`: `m x^(2^-k) (1 - x^(2^-k))` with `x = C_0/m`.
pub fn extrapolated_low_multiplicity(c0: u32, m: usize, k: i32) -> f64 {
    let mf = m as f64;
    let x = f64::from(c0) / mf;
    let y = x.powf((-f64::from(k)).exp2());
    mf * y * (1.0 - y)
}

/// Estimate of `C'_k` for `k >= q + 1`: `m x^(2^(q-k)) (1 - x^(2^(q-k)))` with
/// `x = 1 - C_{q+1}/m`.
pub fn extrapolated_high_multiplicity(c_saturated: u32, m: usize, q: u8, k: i32) -> f64 {
    let mf = m as f64;
    let x = 1.0 - f64::from(c_saturated) / mf;
    let y = x.powf((f64::from(q) - f64::from(k)).exp2());
    mf * y * (1.0 - y)
}
