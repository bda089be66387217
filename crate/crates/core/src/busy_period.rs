//! High-priority busy periods.
//!
//! A busy period of classes `n+1..N` is the busy period of an M/H/1 queue fed
//! by those classes only. Its Laplace-Stieltjes transform `psi(s)` is the
//! minimal fixed point of
//!
//! ```text
//! psi = sum_m (lambda_m / L) * mu_m / (mu_m + s + L * (1 - psi)),   L = sum_m lambda_m
//! ```
//!
//! Evaluated at the total lower-class arrival rate, it yields the probability
//! that no lower-class customer arrives during the busy period.

use crate::error::{Error, Result};
use crate::model::PrioritySystem;

pub const DEFAULT_TOLERANCE: f64 = 1e-14;
pub const DEFAULT_MAX_ITERATIONS: usize = 1_000_000;

/// Evaluates the aggregate busy-period transform of classes above `n`.
#[derive(Debug, Clone)]
pub struct BusyPeriodEvaluator {
    /// `(lambda_m, mu_m)` for the aggregated classes.
    classes: Vec<(f64, f64)>,
    total_rate: f64,
    tolerance: f64,
    max_iterations: usize,
}

impl BusyPeriodEvaluator {
    /// Aggregates classes `lowest_excluded_class + 1 ..= N`.
    pub fn new(system: &PrioritySystem, lowest_excluded_class: usize) -> Result<Self> {
        let n_classes = system.num_classes();
        if lowest_excluded_class >= n_classes {
            return Err(Error::IndexOutOfRange {
                index: lowest_excluded_class,
                max: n_classes.saturating_sub(1),
            });
        }
        let classes: Vec<(f64, f64)> = (lowest_excluded_class + 1..=n_classes)
            .map(|m| (system.lambda(m), system.mu(m)))
            .collect();
        let total_rate = classes.iter().map(|c| c.0).sum();
        Ok(Self {
            classes,
            total_rate,
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
        })
    }

    pub fn with_tolerance(mut self, tolerance: f64, max_iterations: usize) -> Self {
        self.tolerance = tolerance;
        self.max_iterations = max_iterations;
        self
    }

    fn step(&self, s: f64, psi: f64) -> f64 {
        let l = self.total_rate;
        self.classes
            .iter()
            .map(|&(lam, mu)| (lam / l) * mu / (mu + s + l * (1.0 - psi)))
            .sum()
    }

    /// Minimal fixed point at `s >= 0`, by successive substitution from 0.
    pub fn lst(&self, s: f64) -> Result<f64> {
        self.iterate(s, |_| {})
    }

    /// Same as [`lst`](Self::lst) but records every iterate.
    pub fn lst_iterates(&self, s: f64) -> Result<Vec<f64>> {
        let mut trace = vec![0.0];
        self.iterate(s, |p| trace.push(p))?;
        Ok(trace)
    }

    fn iterate(&self, s: f64, mut observe: impl FnMut(f64)) -> Result<f64> {
        assert!(s >= 0.0, "transform argument must be nonnegative");
        if s == 0.0 {
            // the aggregate of a stable system has a proper busy period
            observe(1.0);
            return Ok(1.0);
        }
        let mut psi = 0.0f64;
        let mut prev_step = f64::INFINITY;
        for _ in 0..self.max_iterations {
            let next = self.step(s, psi);
            observe(next);
            let step = (next - psi).abs();
            psi = next;
            if step == 0.0 {
                return Ok(psi);
            }
            if step < self.tolerance {
                // remaining error of a linearly converging sequence
                let ratio = step / prev_step;
                if ratio < 1.0 && step * ratio / (1.0 - ratio) < self.tolerance {
                    return Ok(psi);
                }
            }
            prev_step = step;
        }
        Err(Error::NoConvergence {
            iterations: self.max_iterations,
            last_step: prev_step,
        })
    }
}

/// `E[exp(-s B)]` for the busy period `B` of the evaluator's classes.
pub fn busy_period_lst(evaluator: &BusyPeriodEvaluator, s: f64) -> Result<f64> {
    evaluator.lst(s)
}

/// Probability `g_{k;0_n}` that a busy period of classes above `n`, started by
/// a class-`k` customer, sees no arrivals of classes `1..=n`.
pub fn g_zero(system: &PrioritySystem, n: usize, k: usize) -> Result<f64> {
    if k <= n || k > system.num_classes() {
        return Err(Error::IndexOutOfRange {
            index: k,
            max: system.num_classes(),
        });
    }
    Ok(g_zero_all(system, n)?[k - n - 1])
}

/// `g_{k;0_n}` for every `k = n+1..=N`, sharing one transform evaluation.
pub fn g_zero_all(system: &PrioritySystem, n: usize) -> Result<Vec<f64>> {
    let evaluator = BusyPeriodEvaluator::new(system, n)?;
    let s = system.lower_arrival_rate(n);
    let psi = evaluator.lst(s)?;
    let upper = system.upper_arrival_rate(n);
    Ok((n + 1..=system.num_classes())
        .map(|k| {
            let mu = system.mu(k);
            mu / (mu + s + upper * (1.0 - psi))
        })
        .collect())
}
