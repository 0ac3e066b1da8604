//! Seeded Monte-Carlo harness.
//!
//! Sketches at a given true cardinality are drawn directly from the register
//! law instead of inserting `n` random hashes: the `n` elements are spread
//! over the registers by a multinomial draw, then each register value is drawn
//! by inverse CDF. Under the uniform-hash assumption this is exact and its cost
//! does not grow with `n`.
//!
//! Every trial gets its own ChaCha8 stream, so results do not depend on the
//! number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::Estimator;
use crate::joint::{inclusion_exclusion_from_statistic, joint_ml_solve, JointStatistic};
use crate::ml::SolverConfig;
use crate::sketch::{Sketch, SketchConfig};

pub const DEFAULT_QUANTILES: [f64; 6] = [0.01, 0.05, 0.25, 0.75, 0.95, 0.99];

/// A base seed plus a substream id. Equal pairs give equal random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngSeed {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngSeed {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Substream for trial `trial` of grid point `group`.
    pub fn for_trial(seed: u64, group: u32, trial: u32) -> Self {
        Self::new(seed, (u64::from(group) << 32) | u64::from(trial))
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Draws the sketch of a set of `n` distinct elements with uniformly random
/// hashes.
pub fn sample_sketch<R: Rng + ?Sized>(n: u64, config: SketchConfig, rng: &mut R) -> Sketch {
    let m = config.m();
    let q = config.q();
    let mut registers = vec![0u8; m];
    let mut remaining = n;
    for (i, register) in registers.iter_mut().enumerate() {
        if remaining == 0 {
            break;
        }
        let left = (m - i) as u64;
        let here = if left == 1 {
            remaining
        } else {
            Binomial::new(remaining, 1.0 / left as f64)
                .expect("probability is in (0, 1)")
                .sample(rng)
        };
        remaining -= here;
        if here > 0 {
            *register = sample_register(here, q, rng);
        }
    }
    Sketch::from_registers(config, registers).expect("sampled values are at most q + 1")
}

/// Value of a register that received `k ≥ 1` elements:
/// `P(K <= j) = (1 - 2^-j)^k` for `j <= q`.
fn sample_register<R: Rng + ?Sized>(k: u64, q: u8, rng: &mut R) -> u8 {
    let u: f64 = rng.random();
    let kf = k as f64;
    let cdf = |j: u8| -> f64 {
        if j > q {
            1.0
        } else {
            (kf * (-(-f64::from(j)).exp2()).ln_1p()).exp()
        }
    };
    let guess = -(-(u.ln() / kf).exp_m1()).log2();
    let mut j = if guess.is_finite() {
        guess.ceil().clamp(1.0, f64::from(q) + 1.0) as u8
    } else {
        q + 1
    };
    while j > 1 && cdf(j - 1) >= u {
        j -= 1;
    }
    while j <= q && cdf(j) < u {
        j += 1;
    }
    j
}

/// Sketches of `S₁ = A ∪ X` and `S₂ = B ∪ X` for disjoint `A`, `B`, `X`.
pub fn sample_joint_pair<R: Rng + ?Sized>(
    card_a: u64,
    card_b: u64,
    card_x: u64,
    config: SketchConfig,
    rng: &mut R,
) -> (Sketch, Sketch) {
    let a = sample_sketch(card_a, config, rng);
    let b = sample_sketch(card_b, config, rng);
    let x = sample_sketch(card_x, config, rng);
    let s1 = a.merge(&x).expect("same config");
    let s2 = b.merge(&x).expect("same config");
    (s1, s2)
}

/// Runs `f` on `trials` independent sketches of cardinality `n`, in parallel.
/// Trial `t` uses stream `RngSeed::for_trial(seed, group, t)`; the output is
/// in trial order.
pub fn map_trials<T, F>(n: u64, trials: u32, config: SketchConfig, seed: u64, group: u32, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&Sketch) -> T + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = RngSeed::for_trial(seed, group, t).rng();
            f(&sample_sketch(n, config, &mut rng))
        })
        .collect()
}

/// Error statistics of one estimator at one cardinality.
///
/// Errors are relative, `(estimate - n) / n`, except at `n = 0` where the
/// absolute error is used. Failed trials are excluded from the statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub estimator: Estimator,
    pub cardinality: u64,
    pub trials: u32,
    pub mean_rel_err: f64,
    pub median_rel_err: f64,
    pub stddev_rel_err: f64,
    pub rmse_rel: f64,
    /// `(probability, value)` pairs.
    pub quantiles: Vec<(f64, f64)>,
    pub failures: u32,
}

impl ErrorReport {
    pub fn from_errors(
        estimator: Estimator,
        cardinality: u64,
        errors: &[f64],
        failures: u32,
        probabilities: &[f64],
    ) -> Self {
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mean = mean(errors);
        ErrorReport {
            estimator,
            cardinality,
            trials: errors.len() as u32 + failures,
            mean_rel_err: mean,
            median_rel_err: quantile(&sorted, 0.5),
            stddev_rel_err: stddev(errors, mean),
            rmse_rel: rmse(errors),
            quantiles: probabilities.iter().map(|&p| (p, quantile(&sorted, p))).collect(),
            failures,
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (`n - 1` denominator).
fn stddev(xs: &[f64], mean: f64) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

fn rmse(xs: &[f64]) -> f64 {
    mean(&xs.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt()
}

/// Linearly interpolated quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        len => {
            let pos = p.clamp(0.0, 1.0) * (len - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

fn error_of(estimate: f64, truth: u64) -> f64 {
    if truth == 0 {
        estimate
    } else {
        (estimate - truth as f64) / truth as f64
    }
}

fn check_trials(trials: u32) -> Result<()> {
    if trials < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 trials, got {trials}")));
    }
    Ok(())
}

/// Error statistics of each estimator at each cardinality.
///
/// Every trial sketch is evaluated by all estimators. Reports are ordered by
/// cardinality, then by estimator in the given order.
pub fn run_error_experiment(
    cardinalities: &[u64],
    trials: u32,
    config: SketchConfig,
    estimators: &[Estimator],
    seed: u64,
) -> Result<Vec<ErrorReport>> {
    check_trials(trials)?;
    let mut reports = Vec::with_capacity(cardinalities.len() * estimators.len());
    for (group, &n) in cardinalities.iter().enumerate() {
        let outcomes = map_trials(n, trials, config, seed, group as u32, |sketch| {
            let h = sketch.histogram();
            estimators.iter().map(|e| e.estimate(&h)).collect::<Vec<_>>()
        });
        for (i, &estimator) in estimators.iter().enumerate() {
            let mut errors = Vec::with_capacity(trials as usize);
            let mut failures = 0;
            for outcome in &outcomes {
                match outcome[i] {
                    Ok(est) => errors.push(error_of(est, n)),
                    Err(_) => failures += 1,
                }
            }
            reports.push(ErrorReport::from_errors(
                estimator,
                n,
                &errors,
                failures,
                &DEFAULT_QUANTILES,
            ));
        }
    }
    Ok(reports)
}

/// RMSE comparison of inclusion-exclusion and joint ML for one configuration.
///
/// Arrays are indexed `[A, B, X, U]`. Inclusion-exclusion uses the improved
/// estimator, with `U` estimated from the merged sketch; the ML union is
/// `λ_a + λ_b + λ_x`. Trials where either method fails are dropped from both.
#[derive(Debug, Clone, PartialEq)]
pub struct JointReport {
    pub card_a: u64,
    pub card_b: u64,
    pub card_x: u64,
    pub trials: u32,
    pub rmse_inclusion_exclusion: [f64; 4],
    pub rmse_ml: [f64; 4],
    /// `rmse_inclusion_exclusion / rmse_ml`
    pub improvement: [f64; 4],
    pub failures: u32,
}

pub fn run_joint_experiment(
    configurations: &[(u64, u64, u64)],
    trials: u32,
    config: SketchConfig,
    seed: u64,
) -> Result<Vec<JointReport>> {
    check_trials(trials)?;
    let solver = SolverConfig::default_joint();
    let mut reports = Vec::with_capacity(configurations.len());
    for (group, &(a, b, x)) in configurations.iter().enumerate() {
        let truth = [a, b, x, a + b + x];
        let outcomes: Vec<Option<([f64; 4], [f64; 4])>> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = RngSeed::for_trial(seed, group as u32, t).rng();
                let (s1, s2) = sample_joint_pair(a, b, x, config, &mut rng);
                let stat = JointStatistic::new(&s1, &s2).ok()?;
                let ie = inclusion_exclusion_from_statistic(&stat, Estimator::Improved).ok()?;
                let ml = joint_ml_solve(&stat, &solver).ok()?.estimate;
                let e = ie.estimate;
                Some((
                    [e.lambda_a, e.lambda_b, e.lambda_x, ie.union],
                    [ml.lambda_a, ml.lambda_b, ml.lambda_x, ml.union()],
                ))
            })
            .collect();

        let mut sq_ie = [0.0; 4];
        let mut sq_ml = [0.0; 4];
        let mut ok = 0u32;
        for (ie, ml) in outcomes.iter().flatten() {
            ok += 1;
            for i in 0..4 {
                sq_ie[i] += error_of(ie[i], truth[i]).powi(2);
                sq_ml[i] += error_of(ml[i], truth[i]).powi(2);
            }
        }
        let root_mean = |s: f64| if ok == 0 { f64::NAN } else { (s / f64::from(ok)).sqrt() };
        let rmse_ie = sq_ie.map(root_mean);
        let rmse_ml = sq_ml.map(root_mean);
        let mut improvement = [0.0; 4];
        for i in 0..4 {
            improvement[i] = rmse_ie[i] / rmse_ml[i];
        }
        reports.push(JointReport {
            card_a: a,
            card_b: b,
            card_x: x,
            trials,
            rmse_inclusion_exclusion: rmse_ie,
            rmse_ml,
            improvement,
            failures: trials - ok,
        });
    }
    Ok(reports)
}
