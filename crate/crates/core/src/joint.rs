//! Joint estimation of `|A| = |S₁ \ S₂|`, `|B| = |S₂ \ S₁|` and
//! `|X| = |S₁ ∩ S₂|` from two sketches.
//!
//! Under the Poisson model each register pair `(K₁, K₂)` is an independent
//! draw whose distribution depends on three rates `λ_a, λ_b, λ_x`. The five
//! count vectors of [`JointStatistic`] are sufficient for the joint
//! likelihood, which is maximized in log-parameter space with BFGS.

use std::f64::consts::LN_2;

use crate::bfgs::{Minimizer, Step};
use crate::classic::ALPHA_INF;
use crate::error::{Error, Result};
use crate::estimator::Estimator;
use crate::ml::{ln_one_minus_exp_neg, ml_estimate, u_over_expm1, SolverConfig};
use crate::sketch::{RegisterHistogram, Sketch, SketchConfig};

pub const DEFAULT_JOINT_MAX_ITERATIONS: usize = 500;

// A component is dropped to zero once its rate is below this and the
// likelihood keeps pulling it down for `FREEZE_STREAK` iterations.
const FREEZE_RATE: f64 = 1e-6;
const FREEZE_STREAK: usize = 5;
// Largest per-iteration change of any log-rate.
const MAX_LOG_STEP: f64 = 2.0;
// Gradient sizes, relative to |L|, treated as zero.
const GRADIENT_NOISE: f64 = 1e-12;
const STALL_GRADIENT: f64 = 1e-6;

/// Counts of register pairs split by which side is larger, indexed by value.
///
/// * `c1_less[k]`: registers with `K₁ = k < K₂`
/// * `c1_greater[k]`: registers with `K₁ = k > K₂`
/// * `c2_less[k]`: registers with `K₂ = k < K₁`
/// * `c2_greater[k]`: registers with `K₂ = k > K₁`
/// * `c_equal[k]`: registers with `K₁ = K₂ = k`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JointStatistic {
    config: SketchConfig,
    pub c1_less: Vec<u32>,
    pub c1_greater: Vec<u32>,
    pub c2_less: Vec<u32>,
    pub c2_greater: Vec<u32>,
    pub c_equal: Vec<u32>,
}

impl JointStatistic {
    pub fn new(s1: &Sketch, s2: &Sketch) -> Result<Self> {
        let config = s1.config();
        config.ensure_same(&s2.config())?;
        let len = usize::from(config.q()) + 2;
        let mut stat = JointStatistic {
            config,
            c1_less: vec![0; len],
            c1_greater: vec![0; len],
            c2_less: vec![0; len],
            c2_greater: vec![0; len],
            c_equal: vec![0; len],
        };
        for (&k1, &k2) in s1.registers().iter().zip(s2.registers()) {
            let (k1, k2) = (usize::from(k1), usize::from(k2));
            match k1.cmp(&k2) {
                std::cmp::Ordering::Less => {
                    stat.c1_less[k1] += 1;
                    stat.c2_greater[k2] += 1;
                }
                std::cmp::Ordering::Greater => {
                    stat.c1_greater[k1] += 1;
                    stat.c2_less[k2] += 1;
                }
                std::cmp::Ordering::Equal => stat.c_equal[k1] += 1,
            }
        }
        Ok(stat)
    }

    pub fn config(&self) -> SketchConfig {
        self.config
    }

    /// The statistic of the pair with the two sketches exchanged.
    pub fn swapped(&self) -> JointStatistic {
        JointStatistic {
            config: self.config,
            c1_less: self.c2_less.clone(),
            c1_greater: self.c2_greater.clone(),
            c2_less: self.c1_less.clone(),
            c2_greater: self.c1_greater.clone(),
            c_equal: self.c_equal.clone(),
        }
    }

    fn combine(&self, parts: [&[u32]; 3]) -> RegisterHistogram {
        let counts = (0..self.c_equal.len())
            .map(|k| parts.iter().map(|p| p[k]).sum())
            .collect();
        RegisterHistogram::from_counts(self.config, counts)
            .expect("joint statistic rows always sum to m")
    }

    /// Register histogram of the first sketch.
    pub fn first_histogram(&self) -> RegisterHistogram {
        self.combine([&self.c1_less, &self.c_equal, &self.c1_greater])
    }

    /// Register histogram of the second sketch.
    pub fn second_histogram(&self) -> RegisterHistogram {
        self.combine([&self.c2_less, &self.c_equal, &self.c2_greater])
    }

    /// Register histogram of the merged sketch.
    pub fn union_histogram(&self) -> RegisterHistogram {
        self.combine([&self.c1_greater, &self.c_equal, &self.c2_greater])
    }
}

/// Rates for the three disjoint parts; also the cardinality estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointEstimate {
    /// `|S₁ \ S₂|`
    pub lambda_a: f64,
    /// `|S₂ \ S₁|`
    pub lambda_b: f64,
    /// `|S₁ ∩ S₂|`
    pub lambda_x: f64,
}

impl JointEstimate {
    pub fn new(lambda_a: f64, lambda_b: f64, lambda_x: f64) -> Self {
        Self {
            lambda_a,
            lambda_b,
            lambda_x,
        }
    }

    pub fn union(&self) -> f64 {
        self.lambda_a + self.lambda_b + self.lambda_x
    }

    pub fn swapped(&self) -> JointEstimate {
        JointEstimate::new(self.lambda_b, self.lambda_a, self.lambda_x)
    }

    fn as_array(&self) -> [f64; 3] {
        [self.lambda_a, self.lambda_b, self.lambda_x]
    }
}

/// Inclusion-exclusion result. Components are not clamped and may be negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InclusionExclusionEstimate {
    pub estimate: JointEstimate,
    /// Estimate of `|S₁ ∪ S₂|` from the merged sketch.
    pub union: f64,
    /// Set when any component came out negative.
    pub negative: bool,
}

/// `|A| = |U| - |S₂|`, `|B| = |U| - |S₁|`, `|X| = |S₁| + |S₂| - |U|` from three
/// single-sketch estimates.
pub fn inclusion_exclusion_estimate(
    s1: &Sketch,
    s2: &Sketch,
    estimator: Estimator,
) -> Result<InclusionExclusionEstimate> {
    let stat = JointStatistic::new(s1, s2)?;
    inclusion_exclusion_from_statistic(&stat, estimator)
}

pub fn inclusion_exclusion_from_statistic(
    stat: &JointStatistic,
    estimator: Estimator,
) -> Result<InclusionExclusionEstimate> {
    let n1 = estimator.estimate(&stat.first_histogram())?;
    let n2 = estimator.estimate(&stat.second_histogram())?;
    let union = estimator.estimate(&stat.union_histogram())?;
    let estimate = JointEstimate::new(union - n2, union - n1, n1 + n2 - union);
    let negative = estimate.as_array().iter().any(|&v| v < 0.0);
    Ok(InclusionExclusionEstimate {
        estimate,
        union,
        negative,
    })
}

/// Per-value constants shared by likelihood and gradient.
struct Scales {
    m: f64,
    q: usize,
    // 1 / (m 2^k) for k = 0..=q
    inv: Vec<f64>,
}

impl Scales {
    fn new(config: SketchConfig) -> Self {
        let m = config.m() as f64;
        let q = usize::from(config.q());
        let inv = (0..=q).map(|k| 1.0 / (m * (k as f64).exp2())).collect();
        Self { m, q, inv }
    }

    /// `1 / (m 2^min(k,q))`
    fn t(&self, k: usize) -> f64 {
        self.inv[k.min(self.q)]
    }
}

/// Linear-term weights `Σ_{k=0}^{q} (…)_k / 2^k` of the three rates.
fn linear_weights(stat: &JointStatistic, q: usize) -> [f64; 3] {
    let mut w = [0.0; 3];
    for k in 0..=q {
        let scale = (-(k as f64)).exp2();
        let e = f64::from(stat.c_equal[k]);
        w[0] += (f64::from(stat.c1_less[k]) + e + f64::from(stat.c1_greater[k])) * scale;
        w[1] += (f64::from(stat.c2_less[k]) + e + f64::from(stat.c2_greater[k])) * scale;
        w[2] += (f64::from(stat.c1_less[k]) + e + f64::from(stat.c2_less[k])) * scale;
    }
    w
}

/// `1 - e^{-(a+x)t} - e^{-(b+x)t} + e^{-(a+b+x)t}`, written as a sum of
/// non-negative terms.
fn equal_probability_factor(a: f64, b: f64, x: f64, t: f64) -> f64 {
    let one_minus_a = -(-(a + x) * t).exp_m1();
    let one_minus_b = -(-(b + x) * t).exp_m1();
    one_minus_a * one_minus_b + (-(a + b + x) * t).exp() * -(-x * t).exp_m1()
}

/// `ln(1 - e^{-λ t})` weighted by a count; zero-count terms vanish even when
/// the logarithm is `-∞`.
fn weighted_ln(count: u32, lambda: f64, t: f64) -> f64 {
    if count == 0 {
        0.0
    } else {
        f64::from(count) * ln_one_minus_exp_neg(lambda * t)
    }
}

/// `part · t / (e^{total t} - 1)`; zero when `part` is zero.
fn rate_share(part: f64, total: f64, t: f64) -> f64 {
    if part == 0.0 {
        0.0
    } else {
        part / total * u_over_expm1(total * t)
    }
}

/// Joint log-likelihood for rates that may be zero.
fn log_likelihood_raw(rates: [f64; 3], stat: &JointStatistic, scales: &Scales) -> f64 {
    let [a, b, x] = rates;
    let q = scales.q;
    let w = linear_weights(stat, q);
    let mut value = -(a * w[0] + b * w[1] + x * w[2]) / scales.m;
    for k in 1..=q + 1 {
        let t = scales.t(k);
        if k <= q {
            value += weighted_ln(stat.c1_less[k], a + x, t);
            value += weighted_ln(stat.c2_less[k], b + x, t);
        }
        value += weighted_ln(stat.c1_greater[k], a, t);
        value += weighted_ln(stat.c2_greater[k], b, t);
        let ce = stat.c_equal[k];
        if ce > 0 {
            value += f64::from(ce) * equal_probability_factor(a, b, x, t).ln();
        }
    }
    value
}

/// `λ_i ∂L/∂λ_i` for the three rates, i.e. the gradient in log-rate space.
fn gradient_raw(rates: [f64; 3], stat: &JointStatistic, scales: &Scales) -> [f64; 3] {
    let [a, b, x] = rates;
    let q = scales.q;
    let w = linear_weights(stat, q);
    let mut g = [-a * w[0] / scales.m, -b * w[1] / scales.m, -x * w[2] / scales.m];
    for k in 1..=q + 1 {
        let t = scales.t(k);
        if k <= q {
            let c = f64::from(stat.c1_less[k]);
            if c > 0.0 {
                g[0] += c * rate_share(a, a + x, t);
                g[2] += c * rate_share(x, a + x, t);
            }
            let c = f64::from(stat.c2_less[k]);
            if c > 0.0 {
                g[1] += c * rate_share(b, b + x, t);
                g[2] += c * rate_share(x, b + x, t);
            }
        }
        let c = f64::from(stat.c1_greater[k]);
        if c > 0.0 {
            g[0] += c * rate_share(a, a, t);
        }
        let c = f64::from(stat.c2_greater[k]);
        if c > 0.0 {
            g[1] += c * rate_share(b, b, t);
        }
        let c = f64::from(stat.c_equal[k]);
        if c > 0.0 {
            let e = equal_probability_factor(a, b, x, t);
            let ea = (-(a + x) * t).exp();
            let eb = (-(b + x) * t).exp();
            let one_minus_a = -(-a * t).exp_m1();
            let one_minus_b = -(-b * t).exp_m1();
            let d_a = t * ea * one_minus_b;
            let d_b = t * eb * one_minus_a;
            let d_x = t * (ea + eb * one_minus_a);
            g[0] += c * a * d_a / e;
            g[1] += c * b * d_b / e;
            g[2] += c * x * d_x / e;
        }
    }
    g
}

fn check_rates(est: &JointEstimate, stat: &JointStatistic) -> Result<()> {
    let rates = est.as_array();
    if rates.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(Error::Domain(format!(
            "joint rates must be positive and finite, got {rates:?}"
        )));
    }
    if stat.c_equal.len() != usize::from(stat.config.q()) + 2 {
        return Err(Error::InvalidArgument("malformed joint statistic".into()));
    }
    Ok(())
}

/// Joint Poisson-model log-likelihood of the three rates.
pub fn joint_log_likelihood(est: &JointEstimate, stat: &JointStatistic) -> Result<f64> {
    check_rates(est, stat)?;
    Ok(log_likelihood_raw(
        est.as_array(),
        stat,
        &Scales::new(stat.config),
    ))
}

/// Gradient of [`joint_log_likelihood`] with respect to `(ln λ_a, ln λ_b, ln λ_x)`.
pub fn joint_gradient(est: &JointEstimate, stat: &JointStatistic) -> Result<[f64; 3]> {
    check_rates(est, stat)?;
    Ok(gradient_raw(est.as_array(), stat, &Scales::new(stat.config)))
}

/// Joint ML estimate plus solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointSolution {
    pub estimate: JointEstimate,
    /// Starting point (inclusion-exclusion, clamped to at least 1).
    pub initial: JointEstimate,
    pub iterations: usize,
    /// Log-likelihood at the estimate.
    pub log_likelihood: f64,
}

/// Joint ML estimate of `(|A|, |B|, |X|)` for two sketches.
///
/// `solver.max_iterations()` bounds the BFGS iterations; use
/// [`SolverConfig::default_joint`] for the usual limit.
pub fn joint_ml_estimate(s1: &Sketch, s2: &Sketch, solver: &SolverConfig) -> Result<JointEstimate> {
    let stat = JointStatistic::new(s1, s2)?;
    joint_ml_solve(&stat, solver).map(|s| s.estimate)
}

pub fn joint_ml_solve(stat: &JointStatistic, solver: &SolverConfig) -> Result<JointSolution> {
    let config = stat.config;
    let m = config.m();
    let q = usize::from(config.q());
    let h1 = stat.first_histogram();
    let h2 = stat.second_histogram();
    let single = SolverConfig::default();

    let trivial = |estimate: JointEstimate| JointSolution {
        estimate,
        initial: estimate,
        iterations: 0,
        log_likelihood: f64::NAN,
    };
    let empty1 = h1.zeros() as usize == m;
    let empty2 = h2.zeros() as usize == m;
    if empty1 && empty2 {
        return Ok(trivial(JointEstimate::new(0.0, 0.0, 0.0)));
    }
    if stat.c_equal[q + 1] as usize == m {
        return Ok(trivial(JointEstimate::new(0.0, 0.0, f64::INFINITY)));
    }
    if empty1 {
        return Ok(trivial(JointEstimate::new(0.0, ml_estimate(&h2, &single)?, 0.0)));
    }
    if empty2 {
        return Ok(trivial(JointEstimate::new(ml_estimate(&h1, &single)?, 0.0, 0.0)));
    }
    // One side saturated everywhere: only the other side's total is identifiable.
    if h1.saturated() as usize == m {
        return Ok(trivial(JointEstimate::new(
            f64::INFINITY,
            0.0,
            ml_estimate(&h2, &single)?,
        )));
    }
    if h2.saturated() as usize == m {
        return Ok(trivial(JointEstimate::new(
            0.0,
            f64::INFINITY,
            ml_estimate(&h1, &single)?,
        )));
    }

    let start = inclusion_exclusion_from_statistic(stat, Estimator::Improved)?.estimate;
    let upper = (config.hash_bits() as f64 + 8.0).exp2();
    let clamp = |v: f64| if v.is_nan() { 1.0 } else { v.clamp(1.0, upper) };
    let initial = JointEstimate::new(
        clamp(start.lambda_a),
        clamp(start.lambda_b),
        clamp(start.lambda_x),
    );

    let scales = Scales::new(config);
    let delta = solver.delta(m);
    // log-rates of active components; frozen ones are pinned at rate zero
    let mut log_rates = initial.as_array().map(f64::ln);
    let mut frozen = [false; 3];
    let mut streak = [0usize; 3];
    let mut iterations = 0usize;

    'restart: loop {
        let active: Vec<usize> = (0..3).filter(|&i| !frozen[i]).collect();
        let frozen_now = frozen;
        let base = log_rates;
        let rates_of = move |phi: &[f64]| {
            let mut rates = [0.0; 3];
            let mut full = base;
            for (slot, &i) in active.iter().enumerate() {
                full[i] = phi[slot];
            }
            for i in 0..3 {
                rates[i] = if frozen_now[i] { 0.0 } else { full[i].exp() };
            }
            rates
        };
        let active: Vec<usize> = (0..3).filter(|&i| !frozen[i]).collect();
        let objective = |phi: &[f64]| {
            let rates = rates_of(phi);
            let value = -log_likelihood_raw(rates, stat, &scales);
            let g = gradient_raw(rates, stat, &scales);
            let grad = active.iter().map(|&i| -g[i]).collect();
            (value, grad)
        };
        let x0: Vec<f64> = active.iter().map(|&i| log_rates[i]).collect();
        let mut minimizer = Minimizer::new(x0, objective, MAX_LOG_STEP);

        loop {
            if iterations >= solver.max_iterations() {
                return Err(Error::NoConvergence { iterations });
            }
            iterations += 1;
            let outcome = minimizer.step();
            for (slot, &i) in active.iter().enumerate() {
                log_rates[i] = minimizer.x()[slot];
            }
            let scale = minimizer.value().abs().max(1.0);
            let worst = minimizer
                .gradient()
                .iter()
                .fold(0.0f64, |acc, g| acc.max(g.abs()));
            let converged = match outcome {
                // gradient at rounding level: further steps cannot make progress
                Step::Moved { .. } if worst <= GRADIENT_NOISE * scale => true,
                Step::Moved {
                    max_change,
                    full_step,
                } => full_step && max_change < delta,
                Step::Stalled if worst <= STALL_GRADIENT * scale => true,
                Step::Stalled => return Err(Error::NoConvergence { iterations }),
            };

            // The likelihood gradient is minus the minimizer's gradient.
            let mut freeze = None;
            for (slot, &i) in active.iter().enumerate() {
                let pulling_down = minimizer.gradient()[slot] > 0.0;
                if log_rates[i].exp() < FREEZE_RATE && pulling_down {
                    streak[i] += 1;
                    if streak[i] >= FREEZE_STREAK {
                        freeze = Some(i);
                    }
                } else {
                    streak[i] = 0;
                }
            }
            if let Some(i) = freeze {
                frozen[i] = true;
                if frozen.iter().all(|&f| f) {
                    break 'restart;
                }
                continue 'restart;
            }
            if converged {
                break 'restart;
            }
        }
    }

    let mut rates = [0.0; 3];
    for i in 0..3 {
        rates[i] = if frozen[i] { 0.0 } else { log_rates[i].exp() };
    }
    Ok(JointSolution {
        estimate: JointEstimate::new(rates[0], rates[1], rates[2]),
        initial,
        iterations,
        log_likelihood: log_likelihood_raw(rates, stat, &scales),
    })
}

/// Approximate bounds on the probability that a register has the same value
/// in both sketches, as a function of the Jaccard distance `D`:
/// `1 + 2α∞ ln(1 - D/2) <= P(K₁ = K₂) <= 1 + 2α∞ ln(1 - D/2 + D²/16)`.
pub fn equal_register_probability_bounds(jaccard_distance: f64) -> Result<(f64, f64)> {
    let d = jaccard_distance;
    if !(0.0..=1.0).contains(&d) {
        return Err(Error::Domain(format!("Jaccard distance {d} is not in [0, 1]")));
    }
    let lower = 1.0 + 2.0 * ALPHA_INF * (-d / 2.0).ln_1p();
    let upper = 1.0 + 2.0 * ALPHA_INF * (-d / 2.0 + d * d / 16.0).ln_1p();
    // 2 α∞ ln 2 = 1 exactly in real arithmetic
    let lower = if d == 1.0 { 1.0 - 2.0 * ALPHA_INF * LN_2 } else { lower };
    Ok((lower, upper))
}

impl SolverConfig {
    /// Default stop constant with the iteration limit used for joint estimation.
    pub fn default_joint() -> Self {
        SolverConfig::default().with_max_iterations(DEFAULT_JOINT_MAX_ITERATIONS)
    }
}
