//! Priority system definition.
//!
//! Classes are numbered by priority rank: class 1 is the lowest priority and
//! class `N` the highest. Rate vectors are stored rank-1-first, while state
//! tuples elsewhere in the crate are ordered `(q_N, ..., q_1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An M/M/1 queue shared by `N` preemptive-priority classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrioritySystem {
    arrival_rates: Vec<f64>,
    service_rates: Vec<f64>,
}

impl PrioritySystem {
    /// Builds and validates a system. Rates are given rank-1-first.
    pub fn new(arrival_rates: Vec<f64>, service_rates: Vec<f64>) -> Result<Self> {
        let system = Self {
            arrival_rates,
            service_rates,
        };
        validate(&system)?;
        Ok(system)
    }

    /// Skips validation; zero rates are allowed for degenerate test cases.
    #[cfg(test)]
    pub(crate) fn unchecked(arrival_rates: Vec<f64>, service_rates: Vec<f64>) -> Self {
        Self {
            arrival_rates,
            service_rates,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.arrival_rates.len()
    }

    pub fn arrival_rates(&self) -> &[f64] {
        &self.arrival_rates
    }

    pub fn service_rates(&self) -> &[f64] {
        &self.service_rates
    }

    /// Arrival rate of class `n` (1-based rank).
    pub fn lambda(&self, n: usize) -> f64 {
        self.arrival_rates[n - 1]
    }

    /// Service rate of class `n` (1-based rank).
    pub fn mu(&self, n: usize) -> f64 {
        self.service_rates[n - 1]
    }

    /// Total arrival rate.
    pub fn total_arrival_rate(&self) -> f64 {
        self.arrival_rates.iter().sum()
    }

    /// Arrival rate summed over classes `1..=n`.
    pub fn lower_arrival_rate(&self, n: usize) -> f64 {
        self.arrival_rates[..n].iter().sum()
    }

    /// Arrival rate summed over classes `n+1..=N`.
    pub fn upper_arrival_rate(&self, n: usize) -> f64 {
        self.arrival_rates[n..].iter().sum()
    }

    /// Utilization `sum lambda_n / mu_n`.
    pub fn utilization(&self) -> f64 {
        self.arrival_rates
            .iter()
            .zip(&self.service_rates)
            .map(|(l, m)| l / m)
            .sum()
    }

    /// Load offered by class `n` alone.
    pub fn class_load(&self, n: usize) -> f64 {
        self.lambda(n) / self.mu(n)
    }

    /// Restriction to classes `lowest_class..=N`, relabeled so that
    /// `lowest_class` becomes rank 1.
    pub fn subsystem(&self, lowest_class: usize) -> Result<SubsystemView> {
        let n = self.num_classes();
        if lowest_class == 0 || lowest_class > n {
            return Err(Error::IndexOutOfRange {
                index: lowest_class,
                max: n,
            });
        }
        let system = Self {
            arrival_rates: self.arrival_rates[lowest_class - 1..].to_vec(),
            service_rates: self.service_rates[lowest_class - 1..].to_vec(),
        };
        Ok(SubsystemView {
            lowest_class,
            system,
        })
    }
}

/// A priority system restricted to its top classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsystemView {
    lowest_class: usize,
    system: PrioritySystem,
}

impl SubsystemView {
    /// Rank of the restricted lowest class in the parent system.
    pub fn lowest_class(&self) -> usize {
        self.lowest_class
    }

    /// The relabeled system (parent class `lowest_class` has rank 1).
    pub fn system(&self) -> &PrioritySystem {
        &self.system
    }

    /// Parent rank of relabeled class `r`.
    pub fn parent_rank(&self, r: usize) -> usize {
        r + self.lowest_class - 1
    }

    pub fn into_system(self) -> PrioritySystem {
        self.system
    }
}

/// Checks rates and the stability condition, returning the utilization.
pub fn validate(system: &PrioritySystem) -> Result<f64> {
    let (arrivals, services) = (&system.arrival_rates, &system.service_rates);
    if arrivals.len() != services.len() {
        return Err(Error::LengthMismatch {
            arrivals: arrivals.len(),
            services: services.len(),
        });
    }
    if arrivals.is_empty() {
        return Err(Error::NoClasses);
    }
    for (i, (&l, &m)) in arrivals.iter().zip(services).enumerate() {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::NonPositiveRate {
                class: i + 1,
                which: "arrival",
                value: l,
            });
        }
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::NonPositiveRate {
                class: i + 1,
                which: "service",
                value: m,
            });
        }
    }
    let rho = system.utilization();
    if rho >= 1.0 {
        return Err(Error::Unstable { rho });
    }
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_class_experiment_load() {
        let beta = 900.0 * 0.9 / 13.0;
        let l = vec![1.0 / 300.0, 2.0 / 300.0, 3.0 / 300.0];
        let m = (1..=3).map(|n| (4 - n) as f64 / beta).collect();
        let rho = validate(&PrioritySystem::unchecked(l, m)).unwrap();
        assert!((rho - 0.9).abs() < 1e-12);
    }

    #[test]
    fn single_class() {
        let s = PrioritySystem::new(vec![0.5], vec![1.0]).unwrap();
        assert_eq!(validate(&s).unwrap(), 0.5);
        assert_eq!(s.total_arrival_rate(), 0.5);
    }

    #[test]
    fn rejects_unstable() {
        let err = PrioritySystem::new(vec![0.6, 0.6], vec![1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Unstable { rho } if (rho - 1.2).abs() < 1e-15));
        // boundary rho = 1 is unstable too
        assert!(matches!(
            PrioritySystem::new(vec![0.5, 0.5], vec![1.0, 1.0]),
            Err(Error::Unstable { .. })
        ));
    }

    #[test]
    fn rejects_bad_rates() {
        assert!(matches!(
            PrioritySystem::new(vec![0.1, 0.0], vec![1.0, 1.0]),
            Err(Error::NonPositiveRate { class: 2, which: "arrival", .. })
        ));
        assert!(matches!(
            PrioritySystem::new(vec![0.1], vec![-1.0]),
            Err(Error::NonPositiveRate { class: 1, which: "service", .. })
        ));
        assert!(matches!(
            PrioritySystem::new(vec![0.1], vec![f64::NAN]),
            Err(Error::NonPositiveRate { .. })
        ));
        assert!(matches!(
            PrioritySystem::new(vec![], vec![]),
            Err(Error::NoClasses)
        ));
        assert!(matches!(
            PrioritySystem::new(vec![0.1], vec![1.0, 2.0]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn subsystem_views() {
        let s = PrioritySystem::new(vec![0.1, 0.2, 0.3], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.subsystem(1).unwrap().system(), &s);
        let v = s.subsystem(2).unwrap();
        assert_eq!(v.system().arrival_rates(), &[0.2, 0.3]);
        assert_eq!(v.system().service_rates(), &[2.0, 3.0]);
        assert_eq!(v.parent_rank(1), 2);
        let top = s.subsystem(3).unwrap();
        assert_eq!(top.system().num_classes(), 1);
        assert!(matches!(s.subsystem(0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(s.subsystem(4), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn dropping_classes_reduces_load() {
        let s = PrioritySystem::new(vec![0.1, 0.2, 0.3], vec![1.0, 2.0, 3.0]).unwrap();
        let rho = validate(&s).unwrap();
        for n in 1..=3 {
            let sub = validate(s.subsystem(n).unwrap().system()).unwrap();
            assert!(sub <= rho);
        }
    }
}
