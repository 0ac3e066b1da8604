//! Single-sketch maximum-likelihood estimation under the Poisson model.
//!
//! The estimate is the unique root of the decreasing, convex function
//!
//! ```text
//! f(λ) = Σ_{k=1}^{q+1} C_k u_k / (e^{u_k} - 1) - (λ/m) Σ_{k=0}^{q} C_k 2^-k,
//! u_k = λ / (m 2^min(k,q))
//! ```
//!
//! located by secant iteration started at 0 and at an analytic lower bound.

use crate::error::{Degeneracy, Error, Result};
use crate::sketch::RegisterHistogram;

pub const DEFAULT_EPSILON: f64 = 1e-2;
pub const DEFAULT_MAX_ITERATIONS: usize = 64;

/// Stop rule for the ML iterations: stop once the relative increment is
/// below `δ = ε / √m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    epsilon: f64,
    max_iterations: usize,
}

impl SolverConfig {
    pub fn new(epsilon: f64, max_iterations: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if max_iterations == 0 {
            return Err(Error::InvalidArgument("max_iterations must be > 0".into()));
        }
        Ok(Self {
            epsilon,
            max_iterations,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn max_iterations(&self) -> usize {
        self.max_iterations
    }

    /// `δ = ε / √m`.
    pub fn delta(&self, m: usize) -> f64 {
        self.epsilon / (m as f64).sqrt()
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations.max(1);
        self
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        }
    }
}

/// Interval guaranteed to contain the ML estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
}

impl Bracket {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// `u / (e^u - 1)`, continuous at 0.
#[inline]
pub(crate) fn u_over_expm1(u: f64) -> f64 {
    if u < 1e-4 {
        1.0 - u / 2.0 + u * u / 12.0
    } else {
        u / u.exp_m1()
    }
}

/// Derivative of `u / (e^u - 1)`.
#[inline]
fn u_over_expm1_derivative(u: f64) -> f64 {
    if u < 1e-4 {
        -0.5 + u / 6.0
    } else {
        let e = u.exp_m1();
        if !e.is_finite() {
            return 0.0;
        }
        (e - u * (e + 1.0)) / (e * e)
    }
}

/// `ln(1 - e^-x)`.
#[inline]
pub(crate) fn ln_one_minus_exp_neg(x: f64) -> f64 {
    (-(-x).exp_m1()).ln()
}

/// `Σ_{k=0}^{q} C_k 2^-k`.
fn linear_weight(h: &RegisterHistogram) -> f64 {
    (0..=h.q())
        .map(|k| f64::from(h.count(k)) * (-(k as f64)).exp2())
        .sum()
}

/// `m 2^min(k,q)`.
#[inline]
fn scale(m: f64, k: usize, q: usize) -> f64 {
    m * (k.min(q) as f64).exp2()
}

/// Poisson-model log-likelihood of the register histogram at rate `lambda`.
pub fn log_likelihood(lambda: f64, h: &RegisterHistogram) -> Result<f64> {
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::Domain(format!("rate must be positive, got {lambda}")));
    }
    let m = h.m() as f64;
    let q = h.q();
    let mut value = -lambda / m * linear_weight(h);
    for k in 1..=q + 1 {
        let c = h.count(k);
        if c > 0 {
            value += f64::from(c) * ln_one_minus_exp_neg(lambda / scale(m, k, q));
        }
    }
    Ok(value)
}

/// Derivative of [`log_likelihood`] with respect to `lambda`.
pub fn log_likelihood_derivative(lambda: f64, h: &RegisterHistogram) -> Result<f64> {
    if lambda.is_nan() || lambda <= 0.0 {
        return Err(Error::Domain(format!("rate must be positive, got {lambda}")));
    }
    Ok(ml_root_function(lambda, h) / lambda)
}

/// `λ · d/dλ log L(λ)`; the ML estimate is its unique root. Equals `m - C_0` at 0.
pub fn ml_root_function(lambda: f64, h: &RegisterHistogram) -> f64 {
    let m = h.m() as f64;
    let q = h.q();
    let mut value = -lambda / m * linear_weight(h);
    for k in 1..=q + 1 {
        let c = h.count(k);
        if c > 0 {
            value += f64::from(c) * u_over_expm1(lambda / scale(m, k, q));
        }
    }
    value
}

/// Derivative of [`ml_root_function`] with respect to `lambda`.
pub fn ml_root_function_derivative(lambda: f64, h: &RegisterHistogram) -> f64 {
    let m = h.m() as f64;
    let q = h.q();
    let mut value = -linear_weight(h) / m;
    for k in 1..=q + 1 {
        let c = h.count(k);
        if c > 0 {
            let s = scale(m, k, q);
            value += f64::from(c) * u_over_expm1_derivative(lambda / s) / s;
        }
    }
    value
}

/// Analytic bounds on the root, from `1 - x/2 <= x/(e^x - 1) <= 1`.
pub fn ml_bracket(h: &RegisterHistogram) -> Result<Bracket> {
    let m_usize = h.m();
    if h.zeros() as usize == m_usize {
        return Err(Error::Degenerate(Degeneracy::Zero));
    }
    if h.saturated() as usize == m_usize {
        return Err(Error::Degenerate(Degeneracy::Saturated));
    }
    let m = m_usize as f64;
    let q = h.q();
    let c0 = f64::from(h.zeros());
    let numerator = m * (m - c0);
    let middle: f64 = (1..=q)
        .map(|k| f64::from(h.count(k)) * (-(k as f64)).exp2())
        .sum();
    let lower_den = c0 + 1.5 * middle + f64::from(h.saturated()) * (-((q + 1) as f64)).exp2();
    let upper_den = c0 + middle;
    Ok(Bracket {
        lower: numerator / lower_den,
        upper: numerator / upper_den,
    })
}

/// Result of a root search, with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlSolution {
    pub estimate: f64,
    pub iterations: usize,
    /// Last relative increment `|λ_{t+1} - λ_t| / λ_{t+1}`.
    pub last_increment: f64,
}

/// Single-sketch ML cardinality estimate. Returns 0 for a fresh sketch and
/// `+∞` if every register is saturated.
pub fn ml_estimate(h: &RegisterHistogram, solver: &SolverConfig) -> Result<f64> {
    ml_solve(h, solver).map(|s| s.estimate)
}

pub fn ml_solve(h: &RegisterHistogram, solver: &SolverConfig) -> Result<MlSolution> {
    solve(h, solver, Method::Secant)
}

/// Newton-Raphson variant of [`ml_solve`], kept for cross-checking the
/// secant solver. Starts from the lower bound.
#[doc(hidden)]
pub fn ml_solve_newton(h: &RegisterHistogram, solver: &SolverConfig) -> Result<MlSolution> {
    solve(h, solver, Method::Newton)
}

#[derive(Clone, Copy)]
enum Method {
    Secant,
    Newton,
}

fn solve(h: &RegisterHistogram, solver: &SolverConfig, method: Method) -> Result<MlSolution> {
    let bracket = match ml_bracket(h) {
        Ok(b) => b,
        Err(Error::Degenerate(Degeneracy::Zero)) => {
            return Ok(MlSolution {
                estimate: 0.0,
                iterations: 0,
                last_increment: 0.0,
            })
        }
        Err(Error::Degenerate(Degeneracy::Saturated)) => {
            return Ok(MlSolution {
                estimate: f64::INFINITY,
                iterations: 0,
                last_increment: 0.0,
            })
        }
        Err(e) => return Err(e),
    };
    let delta = solver.delta(h.m());
    let f = |x: f64| ml_root_function(x, h);

    let mut x_prev = 0.0;
    let mut f_prev = f(0.0);
    let mut x = bracket.lower;
    let mut fx = f(x);
    for iteration in 1..=solver.max_iterations {
        if fx <= 0.0 {
            // landed on (or numerically past) the root
            return Ok(MlSolution {
                estimate: x,
                iterations: iteration - 1,
                last_increment: 0.0,
            });
        }
        let next = match method {
            Method::Secant => {
                let slope = f_prev - fx;
                if slope <= 0.0 {
                    // f is strictly decreasing; a flat secant means f(x) is
                    // rounding noise around the root.
                    return Ok(MlSolution {
                        estimate: x,
                        iterations: iteration - 1,
                        last_increment: 0.0,
                    });
                }
                x + fx * (x - x_prev) / slope
            }
            Method::Newton => {
                let d = ml_root_function_derivative(x, h);
                if d >= 0.0 {
                    return Ok(MlSolution {
                        estimate: x,
                        iterations: iteration - 1,
                        last_increment: 0.0,
                    });
                }
                x - fx / d
            }
        };
        let increment = (next - x).abs() / next;
        x_prev = x;
        f_prev = fx;
        x = next;
        fx = f(x);
        if increment < delta {
            return Ok(MlSolution {
                estimate: x,
                iterations: iteration,
                last_increment: increment,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: solver.max_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sketch::{Sketch, SketchConfig};
    use proptest::prelude::*;

    fn cfg(p: u8, q: u8) -> SketchConfig {
        SketchConfig::new(p, q).unwrap()
    }

    fn hist(c: SketchConfig, counts: Vec<u32>) -> RegisterHistogram {
        RegisterHistogram::from_counts(c, counts).unwrap()
    }

    prop_compose! {
        /// Histogram with registers drawn from a geometric-ish profile
        /// around a random centre, so that both tails get exercised.
        fn arb_histogram(p: u8, q: u8)(weights in prop::collection::vec(0u32..1000, usize::from(q) + 2)) -> RegisterHistogram {
            let c = cfg(p, q);
            let m = c.m() as u64;
            let total: u64 = weights.iter().map(|&w| u64::from(w)).sum::<u64>().max(1);
            let mut counts: Vec<u32> = weights.iter().map(|&w| (u64::from(w) * m / total) as u32).collect();
            let assigned: u32 = counts.iter().sum();
            let last = counts.len() / 2;
            counts[last] += m as u32 - assigned;
            RegisterHistogram::from_counts(c, counts).unwrap()
        }
    }

    #[test]
    fn fresh_log_likelihood_is_minus_lambda() {
        let h = Sketch::new(cfg(12, 20)).histogram();
        for lambda in [0.5, 3.0, 1e4] {
            assert!((log_likelihood(lambda, &h).unwrap() + lambda).abs() < 1e-9 * lambda);
        }
        assert!(log_likelihood(0.0, &h).is_err());
        assert!(log_likelihood(-1.0, &h).is_err());
    }

    #[test]
    fn root_function_at_zero() {
        let c = cfg(8, 10);
        let mut counts = vec![0u32; 12];
        counts[0] = 200;
        counts[3] = 40;
        counts[11] = 16;
        let h = hist(c, counts);
        assert_eq!(ml_root_function(0.0, &h), 56.0);
    }

    #[test]
    fn bracket_single_register_at_one() {
        let c = cfg(12, 20);
        let mut counts = vec![0u32; 22];
        counts[0] = 4095;
        counts[1] = 1;
        let b = ml_bracket(&hist(c, counts)).unwrap();
        assert!((b.lower - 4096.0 / 4095.75).abs() < 1e-12);
        assert!((b.upper - 4096.0 / 4095.5).abs() < 1e-12);
    }

    #[test]
    fn bracket_degenerate_cases() {
        let c = cfg(6, 4);
        let fresh = Sketch::new(c).histogram();
        assert_eq!(ml_bracket(&fresh), Err(Error::Degenerate(Degeneracy::Zero)));
        let saturated = hist(c, vec![0, 0, 0, 0, 0, 64]);
        assert_eq!(
            ml_bracket(&saturated),
            Err(Error::Degenerate(Degeneracy::Saturated))
        );
        let solver = SolverConfig::default();
        assert_eq!(ml_estimate(&fresh, &solver).unwrap(), 0.0);
        assert_eq!(ml_estimate(&saturated, &solver).unwrap(), f64::INFINITY);
    }

    #[test]
    fn q_zero_is_linear_counting() {
        let c = cfg(12, 0);
        let solver = SolverConfig::default();
        let delta = solver.delta(4096);
        for c0 in [1u32, 10, 500, 2048, 4000, 4095] {
            let h = hist(c, vec![c0, 4096 - c0]);
            let est = ml_estimate(&h, &solver).unwrap();
            let lc = 4096.0 * (4096.0 / f64::from(c0)).ln();
            assert!((est / lc - 1.0).abs() <= delta, "c0={c0}: {est} vs {lc}");
        }
    }

    #[test]
    fn secant_agrees_with_newton() {
        let c = cfg(10, 12);
        let mut counts = vec![0u32; 14];
        counts[0] = 100;
        counts[1] = 200;
        counts[2] = 300;
        counts[3] = 200;
        counts[4] = 150;
        counts[6] = 50;
        counts[13] = 24;
        let h = hist(c, counts);
        let tight = SolverConfig::new(1e-10, 200).unwrap();
        let a = ml_solve(&h, &tight).unwrap();
        let b = ml_solve_newton(&h, &tight).unwrap();
        assert!((a.estimate / b.estimate - 1.0).abs() < 1e-10);
        assert!(ml_root_function(a.estimate, &h).abs() < 1e-6);
    }

    #[test]
    fn mid_range_bracket_ratio_is_at_most_three_halves() {
        let c = cfg(8, 16);
        let mut counts = vec![0u32; 18];
        counts[5] = 100;
        counts[6] = 100;
        counts[9] = 56;
        let b = ml_bracket(&hist(c, counts)).unwrap();
        assert!(b.upper / b.lower <= 1.5 + 1e-12);
    }

    #[test]
    fn solver_config_validation() {
        assert!(SolverConfig::new(0.0, 10).is_err());
        assert!(SolverConfig::new(1e-2, 0).is_err());
        let s = SolverConfig::default();
        assert_eq!(s.epsilon(), 1e-2);
        assert!((s.delta(4096) - 1e-2 / 64.0).abs() < 1e-18);
    }

    #[test]
    fn iteration_cap_reports_no_convergence() {
        let c = cfg(10, 12);
        let mut counts = vec![0u32; 14];
        counts[0] = 10;
        counts[4] = 1000;
        counts[13] = 14;
        let h = hist(c, counts);
        let solver = SolverConfig::new(1e-14, 1).unwrap();
        assert!(matches!(ml_solve(&h, &solver), Err(Error::NoConvergence { .. })));
    }

    proptest! {
        #[test]
        fn root_function_is_decreasing(h in arb_histogram(8, 12), a in 0.0f64..5e4, b in 0.0f64..5e4) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(ml_root_function(lo, &h) >= ml_root_function(hi, &h) - 1e-9);
        }

        #[test]
        fn estimate_lies_in_bracket(h in arb_histogram(8, 12)) {
            let solver = SolverConfig::default();
            if let Ok(b) = ml_bracket(&h) {
                let sol = ml_solve(&h, &solver).unwrap();
                prop_assert!(b.contains(sol.estimate), "{:?} {:?}", b, sol);
                // first secant start is the lower bound; iterates never move below it
                prop_assert!(sol.estimate >= b.lower);
                let delta = solver.delta(h.m());
                let residual = ml_root_function(sol.estimate, &h).abs();
                let slope = ml_root_function_derivative(sol.estimate, &h).abs();
                prop_assert!(residual <= 2.0 * slope * delta * sol.estimate + 1e-9,
                    "residual {} slope {}", residual, slope);
            }
        }

        #[test]
        fn derivative_matches_finite_differences(h in arb_histogram(6, 10), lambda in 1.0f64..1e5) {
            let step = lambda * 1e-5;
            let fd = (log_likelihood(lambda + step, &h).unwrap() - log_likelihood(lambda - step, &h).unwrap()) / (2.0 * step);
            let g = log_likelihood_derivative(lambda, &h).unwrap();
            prop_assert!((fd - g).abs() <= 1e-6 * g.abs().max(1.0 / lambda), "{} vs {}", fd, g);
        }

        #[test]
        fn log_likelihood_is_concave_in_log_lambda(h in arb_histogram(6, 10), phi in 0.0f64..12.0) {
            let step = 1e-2;
            let l = |p: f64| log_likelihood(p.exp(), &h).unwrap();
            let second = l(phi + step) - 2.0 * l(phi) + l(phi - step);
            prop_assert!(second <= 1e-9 * l(phi).abs().max(1.0));
        }
    }
}
