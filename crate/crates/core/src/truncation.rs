//! Truncation cuboid construction.

use serde::{Deserialize, Serialize};

use crate::equilibrium::{boundary_marginal, solve, JointDistribution};
use crate::error::{Error, Result};
use crate::model::{validate, PrioritySystem};

/// Default cap on the number of cuboid states.
pub const DEFAULT_STATE_CAP: u128 = 100_000_000;

/// The box `{0..=c_N} x ... x {0..=c_1}` and the tail mass it targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationCuboid {
    /// `c_1..c_N`, rank-1-first.
    bounds: Vec<usize>,
    epsilon: f64,
}

impl TruncationCuboid {
    pub fn new(bounds: Vec<usize>, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(Error::InvalidEpsilon(epsilon));
        }
        if bounds.is_empty() {
            return Err(Error::NoClasses);
        }
        Ok(Self { bounds, epsilon })
    }

    /// `c_1..c_N`.
    pub fn bounds(&self) -> &[usize] {
        &self.bounds
    }

    /// Cap on class `n` (1-based rank).
    pub fn bound(&self, n: usize) -> usize {
        self.bounds[n - 1]
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `(c_N + 1, ..., c_1 + 1)`.
    pub fn extents_high_first(&self) -> Vec<usize> {
        self.bounds.iter().rev().map(|c| c + 1).collect()
    }

    pub fn state_count(&self) -> u128 {
        self.bounds.iter().map(|&c| c as u128 + 1).product()
    }
}

/// Smallest `c` with geometric top-class mass `sum_{q<=c} p_N(q) > 1 - epsilon`,
/// from the closed form `ceil(log(eps) / log(lambda_N / mu_N) - 1)`.
pub fn bound_top_class(system: &PrioritySystem, epsilon: f64) -> Result<usize> {
    validate(system)?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    let r = system.class_load(system.num_classes());
    let c = (epsilon.ln() / r.ln() - 1.0).ceil();
    Ok(if c > 0.0 { c as usize } else { 0 })
}

/// Bound for class `n` from the class-`n` marginal of the subsystem of
/// classes `n..N`.
pub fn bound_class(system: &PrioritySystem, n: usize, epsilon: f64) -> Result<usize> {
    let m = boundary_marginal(system, n, epsilon)?;
    Ok(m.pmf.len() - 1)
}

fn grow(c: usize) -> usize {
    c + (c as f64 * 0.25).ceil().max(1.0) as usize
}

/// Builds a cuboid whose joint distribution captures mass `> 1 - epsilon`,
/// returning the joint computed on it.
///
/// Each class gets the marginal bound for tail `epsilon / N`, so the box
/// misses less than `epsilon` in total. Should roundoff still leave a
/// deficit, `c_1` is grown once and then every bound by 25% until the mass is
/// captured.
pub fn build_cuboid(
    system: &PrioritySystem,
    epsilon: f64,
    state_cap: u128,
) -> Result<(TruncationCuboid, JointDistribution)> {
    validate(system)?;
    let big_n = system.num_classes();
    let share = epsilon / big_n as f64;
    let mut bounds = Vec::with_capacity(big_n);
    for n in 1..big_n {
        bounds.push(bound_class(system, n, share)?);
    }
    bounds.push(bound_top_class(system, share)?);

    let mut grown_lowest = false;
    loop {
        let cuboid = TruncationCuboid::new(bounds.clone(), epsilon)?;
        let states = cuboid.state_count();
        if states > state_cap {
            return Err(Error::BudgetExceeded {
                size: states,
                cap: state_cap,
            });
        }
        let joint = solve(system, &cuboid)?;
        if joint.captured_mass() > 1.0 - epsilon {
            return Ok((cuboid, joint));
        }
        if grown_lowest || big_n == 1 {
            bounds.iter_mut().for_each(|c| *c = grow(*c));
        } else {
            bounds[0] = grow(bounds[0]);
            grown_lowest = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(l: &[f64], m: &[f64]) -> PrioritySystem {
        PrioritySystem::new(l.to_vec(), m.to_vec()).unwrap()
    }

    fn experiment(rho: f64) -> PrioritySystem {
        let beta = 900.0 * rho / 13.0;
        sys(
            &[1.0 / 300.0, 2.0 / 300.0, 3.0 / 300.0],
            &[3.0 / beta, 2.0 / beta, 1.0 / beta],
        )
    }

    /// Smallest c whose geometric mass exceeds 1 - eps.
    fn geometric_oracle(r: f64, eps: f64) -> usize {
        let mut c = 0;
        while 1.0 - r.powi(c as i32 + 1) <= 1.0 - eps {
            c += 1;
        }
        c
    }

    #[test]
    fn top_class_bound_values() {
        let s = sys(&[0.5], &[1.0]);
        assert_eq!(bound_top_class(&s, 1e-6).unwrap(), 19);
        assert_eq!(geometric_oracle(0.5, 1e-6), 19);
        assert_eq!(bound_top_class(&s, 0.99).unwrap(), 0);
        // H M L at rho = 0.9: SKU 1 on top with load beta / 900
        let beta = 900.0 * 0.9 / 13.0;
        let hml = sys(
            &[3.0 / 300.0, 2.0 / 300.0, 1.0 / 300.0],
            &[1.0 / beta, 2.0 / beta, 3.0 / beta],
        );
        assert_eq!(bound_top_class(&hml, 1e-6).unwrap(), 5);
    }

    #[test]
    fn class_bound_on_single_class_matches_closed_form() {
        for &(l, eps) in &[(0.5, 1e-6), (0.3, 1e-4), (0.9, 1e-8)] {
            let s = sys(&[l], &[1.0]);
            let a = bound_class(&s, 1, eps).unwrap();
            let b = bound_top_class(&s, eps).unwrap();
            assert!(a.abs_diff(b) <= 1, "{a} vs {b}");
        }
    }

    #[test]
    fn middle_bound_has_small_tail() {
        let s = experiment(0.9);
        let c2 = bound_class(&s, 2, 1e-6).unwrap();
        let m = boundary_marginal(&s, 2, 1e-6).unwrap();
        let tail_before: f64 = 1.0 - m.pmf[..c2].iter().sum::<f64>();
        assert!(1.0 - m.mass() < 1e-6);
        assert!(tail_before >= 1e-6 - 1e-12);
    }

    #[test]
    fn bounds_monotone_in_epsilon() {
        let s = experiment(0.9);
        for n in 1..=2 {
            let loose = bound_class(&s, n, 1e-4).unwrap();
            let tight = bound_class(&s, n, 1e-5).unwrap();
            assert!(tight >= loose);
        }
        assert!(bound_top_class(&s, 1e-7).unwrap() >= bound_top_class(&s, 1e-6).unwrap());
    }

    #[test]
    fn bounds_monotone_in_rates() {
        let base = sys(&[0.1, 0.2, 0.3], &[0.5, 1.0, 1.5]);
        let faster = sys(&[0.1, 0.2, 0.3], &[0.55, 1.0, 1.5]);
        let busier = sys(&[0.11, 0.2, 0.3], &[0.5, 1.0, 1.5]);
        let c = bound_class(&base, 1, 1e-6).unwrap();
        assert!(bound_class(&faster, 1, 1e-6).unwrap() <= c);
        assert!(bound_class(&busier, 1, 1e-6).unwrap() >= c);
    }

    #[test]
    fn single_class_cuboid_captures_immediately() {
        let s = sys(&[0.5], &[1.0]);
        let (c, j) = build_cuboid(&s, 1e-6, DEFAULT_STATE_CAP).unwrap();
        assert_eq!(c.bounds(), &[19]);
        assert!(j.captured_mass() > 1.0 - 1e-6);
    }

    #[test]
    fn built_cuboid_captures_mass_and_shrinking_eps_never_shrinks() {
        let s = sys(&[0.1, 0.2, 0.3], &[0.5, 1.0, 1.5]);
        let (c1, j) = build_cuboid(&s, 1e-6, DEFAULT_STATE_CAP).unwrap();
        assert!(j.captured_mass() > 1.0 - 1e-6);
        let (c2, _) = build_cuboid(&s, 1e-7, DEFAULT_STATE_CAP).unwrap();
        for (a, b) in c1.bounds().iter().zip(c2.bounds()) {
            assert!(b >= a);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let s = sys(&[0.1, 0.2, 0.3], &[0.5, 1.0, 1.5]);
        assert!(matches!(
            build_cuboid(&s, 1e-6, 10),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn cuboid_validation() {
        assert!(TruncationCuboid::new(vec![1], 0.0).is_err());
        assert!(TruncationCuboid::new(vec![1], 1.0).is_err());
        assert!(TruncationCuboid::new(vec![], 0.5).is_err());
        let c = TruncationCuboid::new(vec![3, 1, 2], 0.1).unwrap();
        assert_eq!(c.extents_high_first(), vec![3, 2, 4]);
        assert_eq!(c.state_count(), 24);
        assert_eq!(c.bound(2), 1);
    }
}
