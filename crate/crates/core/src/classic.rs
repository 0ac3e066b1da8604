//! The original estimation chain: raw harmonic-mean estimator, linear
//! counting, the 32-bit large range correction, and the composite method
//! that switches between them.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::sketch::RegisterHistogram;

/// `1 / (2 ln 2)`, the large-`m` limit of the bias correction factor.
pub const ALPHA_INF: f64 = 1.0 / (2.0 * LN_2);

/// `α∞ m² / Σ C_k 2^-k`.
pub fn raw_estimate(h: &RegisterHistogram) -> f64 {
    let m = h.m() as f64;
    let denominator: f64 = h
        .counts()
        .iter()
        .enumerate()
        .map(|(k, &c)| f64::from(c) * (-(k as f64)).exp2())
        .sum();
    ALPHA_INF * m * m / denominator
}

/// `m ln(m / C_0)`.
pub fn linear_counting_estimate(c0: u32, m: usize) -> Result<f64> {
    if c0 == 0 {
        return Err(Error::ZeroRegistersExhausted);
    }
    if c0 as usize > m {
        return Err(Error::Domain(format!("C0 = {c0} exceeds m = {m}")));
    }
    let m = m as f64;
    Ok(m * (m / f64::from(c0)).ln())
}

/// `-2^bits ln(1 - raw / 2^bits)`; undefined once `raw >= 2^bits`.
pub fn large_range_correction(raw: f64, bits: u32) -> Result<f64> {
    if raw.is_nan() || raw < 0.0 {
        return Err(Error::Domain(format!("raw estimate {raw} is negative")));
    }
    let limit = f64::from(bits).exp2();
    if raw >= limit {
        return Err(Error::OutOfDomain { raw, limit });
    }
    Ok(-limit * (-raw / limit).ln_1p())
}

/// Original composite estimator for 32-bit hashes: linear counting while
/// `raw <= 5m/2` and a zero register exists, the large range correction
/// once `raw > 2^32 / 30`, the raw estimate otherwise.
pub fn original_estimate(h: &RegisterHistogram) -> Result<f64> {
    let config = h.config();
    if config.hash_bits() != 32 {
        return Err(Error::UnsupportedConfig {
            p: config.p(),
            q: config.q(),
        });
    }
    let raw = raw_estimate(h);
    let m = h.m();
    if raw <= 2.5 * m as f64 && h.zeros() > 0 {
        linear_counting_estimate(h.zeros(), m)
    } else if raw > 32f64.exp2() / 30.0 {
        large_range_correction(raw, 32)
    } else {
        Ok(raw)
    }
}
