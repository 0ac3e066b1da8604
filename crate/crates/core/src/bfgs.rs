//! A small dense BFGS minimizer with Armijo backtracking.
//!
//! The caller drives the iteration one [`Minimizer::step`] at a time and
//! decides when to stop, which lets the joint estimator apply its own
//! stopping rule and drop parameters that run off to `-∞`.

const ARMIJO_C1: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;

/// Outcome of one quasi-Newton iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Step {
    /// A point with sufficient decrease was found.
    Moved {
        /// Largest absolute coordinate change of the accepted step.
        max_change: f64,
        /// Whether the unscaled quasi-Newton step was accepted as is.
        full_step: bool,
    },
    /// Neither the quasi-Newton direction nor steepest descent decreased the
    /// objective.
    Stalled,
}

pub(crate) struct Minimizer<F>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    objective: F,
    x: Vec<f64>,
    value: f64,
    gradient: Vec<f64>,
    // row-major n x n inverse Hessian approximation
    inverse_hessian: Vec<f64>,
    scaled: bool,
    max_step: f64,
}

impl<F> Minimizer<F>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    /// `max_step` bounds the largest coordinate change of any single step.
    pub(crate) fn new(x0: Vec<f64>, mut objective: F, max_step: f64) -> Self {
        let (value, gradient) = objective(&x0);
        let n = x0.len();
        Self {
            objective,
            x: x0,
            value,
            gradient,
            inverse_hessian: identity(n),
            scaled: false,
            max_step,
        }
    }

    pub(crate) fn x(&self) -> &[f64] {
        &self.x
    }

    pub(crate) fn value(&self) -> f64 {
        self.value
    }

    pub(crate) fn gradient(&self) -> &[f64] {
        &self.gradient
    }

    pub(crate) fn step(&mut self) -> Step {
        let n = self.x.len();
        if n == 0 {
            return Step::Stalled;
        }
        let mut direction = self.quasi_newton_direction();
        if dot(&direction, &self.gradient) >= 0.0 {
            self.reset();
            direction = self.gradient.iter().map(|g| -g).collect();
        }
        let accepted = match self.line_search(&direction) {
            Some(found) => Some(found),
            None => {
                // steepest-descent fallback
                self.reset();
                let steepest: Vec<f64> = self.gradient.iter().map(|g| -g).collect();
                self.line_search(&steepest)
            }
        };
        let Some((step, value, gradient, full_step)) = accepted else {
            return Step::Stalled;
        };

        let y: Vec<f64> = gradient
            .iter()
            .zip(&self.gradient)
            .map(|(new, old)| new - old)
            .collect();
        let sy = dot(&step, &y);
        if sy > 1e-12 * norm(&step) * norm(&y) {
            if !self.scaled {
                // Shanno-Phua scaling of the initial identity before the first update
                let factor = sy / dot(&y, &y);
                for v in &mut self.inverse_hessian {
                    *v *= factor;
                }
                self.scaled = true;
            }
            self.update_inverse_hessian(&step, &y, sy);
        }
        for (xi, si) in self.x.iter_mut().zip(&step) {
            *xi += si;
        }
        self.value = value;
        self.gradient = gradient;
        Step::Moved {
            max_change: step.iter().fold(0.0, |acc, s| acc.max(s.abs())),
            full_step,
        }
    }

    fn reset(&mut self) {
        self.inverse_hessian = identity(self.x.len());
        self.scaled = false;
    }

    fn quasi_newton_direction(&self) -> Vec<f64> {
        let n = self.x.len();
        (0..n)
            .map(|i| {
                -(0..n)
                    .map(|j| self.inverse_hessian[i * n + j] * self.gradient[j])
                    .sum::<f64>()
            })
            .collect()
    }

    #[allow(clippy::type_complexity)]
    fn line_search(&mut self, direction: &[f64]) -> Option<(Vec<f64>, f64, Vec<f64>, bool)> {
        let slope = dot(direction, &self.gradient);
        if slope.is_nan() || slope >= 0.0 {
            return None;
        }
        let longest = direction.iter().fold(0.0f64, |acc, d| acc.max(d.abs()));
        let mut alpha = 1.0;
        let mut capped = false;
        if longest > self.max_step {
            alpha = self.max_step / longest;
            capped = true;
        }
        for attempt in 0..=MAX_BACKTRACKS {
            let step: Vec<f64> = direction.iter().map(|d| alpha * d).collect();
            let trial: Vec<f64> = self.x.iter().zip(&step).map(|(x, s)| x + s).collect();
            let (value, gradient) = (self.objective)(&trial);
            if value.is_finite()
                && gradient.iter().all(|g| g.is_finite())
                && value <= self.value + ARMIJO_C1 * alpha * slope
                && value < self.value
            {
                return Some((step, value, gradient, attempt == 0 && !capped));
            }
            alpha *= BACKTRACK;
        }
        None
    }

    fn update_inverse_hessian(&mut self, s: &[f64], y: &[f64], sy: f64) {
        // H <- (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ
        let n = s.len();
        let rho = 1.0 / sy;
        let h = &self.inverse_hessian;
        let hy: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum())
            .collect();
        let yhy = dot(y, &hy);
        let mut next = h.clone();
        for i in 0..n {
            for j in 0..n {
                next[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                    + (rho * rho * yhy + rho) * s[i] * s[j];
            }
        }
        self.inverse_hessian = next;
    }
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
