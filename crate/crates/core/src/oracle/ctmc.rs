//! Stationary distribution of the preemptive priority chain restricted to a
//! cuboid.
//!
//! Arrivals that would leave the cuboid are dropped, which keeps the generator
//! conservative. States are ordered so that the largest dimension varies
//! slowest; every transition then stays within a band of half-width
//! `w = states / largest extent`, and Grassmann-Taksar-Heyman elimination
//! (subtraction free) runs in `O(states * w^2)` time and `O(states * w)` memory.

use crate::equilibrium::{JointDistribution, RecursionDiagnostics};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::model::{validate, PrioritySystem};
use crate::truncation::TruncationCuboid;

/// Default cap on band storage (entries), about 480 MB.
pub const DEFAULT_BAND_CAP: u128 = 60_000_000;

/// Generator of the chain truncated to a cuboid.
#[derive(Debug, Clone)]
pub struct TruncatedGenerator {
    system: PrioritySystem,
    cuboid: TruncationCuboid,
    extents: Vec<usize>,
    /// State dimensions (high-first positions) from slowest to fastest.
    order: Vec<usize>,
    /// Stride of each high-first position in the solver ordering.
    strides: Vec<usize>,
    half_width: usize,
}

impl TruncatedGenerator {
    pub fn new(system: &PrioritySystem, cuboid: &TruncationCuboid) -> Result<Self> {
        validate(system)?;
        let extents = cuboid.extents_high_first();
        if extents.len() != system.num_classes() {
            return Err(Error::MissingDependency("cuboid has the wrong class count".into()));
        }
        let slow = (0..extents.len()).max_by_key(|&d| (extents[d], usize::MAX - d)).unwrap();
        let mut order = vec![slow];
        order.extend((0..extents.len()).filter(|&d| d != slow));
        let mut strides = vec![0; extents.len()];
        let mut s = 1;
        for &d in order.iter().rev() {
            strides[d] = s;
            s *= extents[d];
        }
        let half_width = if extents.len() == 1 { 1 } else { strides[slow] };
        Ok(Self {
            system: system.clone(),
            cuboid: cuboid.clone(),
            extents,
            order,
            strides,
            half_width,
        })
    }

    pub fn state_count(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    /// Entries of band storage the elimination needs.
    pub fn band_size(&self) -> u128 {
        self.state_count() as u128 * (2 * self.half_width as u128 + 1)
    }

    fn index(&self, state: &[usize]) -> usize {
        state.iter().zip(&self.strides).map(|(q, s)| q * s).sum()
    }

    fn state(&self, mut index: usize) -> Vec<usize> {
        let mut state = vec![0; self.extents.len()];
        for &d in &self.order {
            state[d] = index / self.strides[d];
            index %= self.strides[d];
        }
        state
    }

    /// Outgoing transitions `(target, rate)` of a state given high-first.
    pub fn transitions(&self, state: &[usize]) -> Vec<(Vec<usize>, f64)> {
        let big_n = self.extents.len();
        let mut out = Vec::with_capacity(big_n + 1);
        for pos in 0..big_n {
            if state[pos] + 1 < self.extents[pos] {
                let mut t = state.to_vec();
                t[pos] += 1;
                out.push((t, self.system.lambda(big_n - pos)));
            }
        }
        if let Some(pos) = state.iter().position(|&q| q > 0) {
            let mut t = state.to_vec();
            t[pos] -= 1;
            out.push((t, self.system.mu(big_n - pos)));
        }
        out
    }

    /// Dense generator in the row-major (high-first) state order. Small
    /// cuboids only.
    pub fn dense(&self) -> Vec<Vec<f64>> {
        let grid = Grid::zeros(&self.extents);
        let n = grid.len();
        let mut q = vec![vec![0.0; n]; n];
        for (i, row) in q.iter_mut().enumerate() {
            let s = grid.unflat(i);
            for (t, r) in self.transitions(&s) {
                row[grid.flat(&t)] += r;
                row[i] -= r;
            }
        }
        q
    }

    /// `max_j |(pi Q)_j|` for a distribution given on the high-first grid.
    pub fn residual(&self, pi: &Grid) -> f64 {
        let mut flow = vec![0.0; pi.len()];
        for (i, &p) in pi.data().iter().enumerate() {
            let s = pi.unflat(i);
            for (t, r) in self.transitions(&s) {
                flow[pi.flat(&t)] += p * r;
                flow[i] -= p * r;
            }
        }
        flow.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Stationary vector on the high-first grid, normalized to 1.
    pub fn stationary(&self, band_cap: u128) -> Result<Grid> {
        if self.band_size() > band_cap {
            return Err(Error::BudgetExceeded {
                size: self.band_size(),
                cap: band_cap,
            });
        }
        let n = self.state_count();
        let w = self.half_width;
        let width = 2 * w + 1;
        let mut band = vec![0.0f64; n * width];
        // band[i * width + (j + w - i)] holds the rate i -> j
        for i in 0..n {
            let s = self.state(i);
            for (t, r) in self.transitions(&s) {
                let j = self.index(&t);
                band[i * width + j + w - i] += r;
            }
        }

        let mut pivots = vec![0.0; n];
        for k in (1..n).rev() {
            let lo = k.saturating_sub(w);
            let row_k = k * width + w - k;
            let s: f64 = band[row_k + lo..row_k + k].iter().sum();
            if !(s > 0.0) {
                return Err(Error::SingularSystem);
            }
            pivots[k] = s;
            for i in lo..k {
                let a = band[i * width + k + w - i];
                if a == 0.0 {
                    continue;
                }
                let a = a / s;
                let row_i = i * width + w - i;
                for j in lo..k {
                    if j != i {
                        band[row_i + j] += a * band[row_k + j];
                    }
                }
            }
        }

        let mut pi = vec![0.0; n];
        pi[0] = 1.0;
        for k in 1..n {
            let lo = k.saturating_sub(w);
            let mut acc = 0.0;
            for i in lo..k {
                acc += pi[i] * band[i * width + k + w - i];
            }
            pi[k] = acc / pivots[k];
        }
        let total: f64 = crate::grid::neumaier_sum(pi.iter().copied());
        let mut grid = Grid::zeros(&self.extents);
        for (k, p) in pi.iter().enumerate() {
            let s = self.state(k);
            grid.set(&s, p / total);
        }
        Ok(grid)
    }

    pub fn cuboid(&self) -> &TruncationCuboid {
        &self.cuboid
    }
}

/// Stationary distribution of the truncated chain as an oracle-normalized
/// [`JointDistribution`].
pub fn solve_truncated_ctmc(
    system: &PrioritySystem,
    cuboid: &TruncationCuboid,
    band_cap: u128,
) -> Result<JointDistribution> {
    let generator = TruncatedGenerator::new(system, cuboid)?;
    let grid = generator.stationary(band_cap)?;
    Ok(JointDistribution::from_parts(
        system.clone(),
        cuboid.clone(),
        grid,
        true,
        RecursionDiagnostics::default(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sys(l: &[f64], m: &[f64]) -> PrioritySystem {
        PrioritySystem::new(l.to_vec(), m.to_vec()).unwrap()
    }

    fn cuboid(b: &[usize]) -> TruncationCuboid {
        TruncationCuboid::new(b.to_vec(), 1e-6).unwrap()
    }

    #[test]
    fn generator_rows_are_conservative() {
        let g = TruncatedGenerator::new(&sys(&[0.1, 0.2, 0.3], &[0.5, 1.0, 1.5]), &cuboid(&[3, 2, 2])).unwrap();
        for row in g.dense() {
            let off: f64 = row.iter().filter(|v| **v > 0.0).sum();
            let diag: f64 = row.iter().filter(|v| **v < 0.0).sum();
            assert!(row.iter().filter(|v| **v < 0.0).count() <= 1);
            assert!((off + diag).abs() < 1e-15);
        }
    }

    #[test]
    fn single_class_truncated_geometric() {
        let s = sys(&[0.4], &[1.0]);
        let j = solve_truncated_ctmc(&s, &cuboid(&[10]), DEFAULT_BAND_CAP).unwrap();
        let norm: f64 = (0..=10).map(|q| 0.4f64.powi(q)).sum();
        for q in 0..=10 {
            let want = 0.4f64.powi(q as i32) / norm;
            assert!((j.probability(&[q]) - want).abs() < 1e-15);
        }
        assert!(j.is_oracle_normalized());
    }

    #[test]
    fn stationary_residual_is_tiny() {
        let s = sys(&[0.1, 0.2, 0.3], &[0.5, 1.0, 1.5]);
        let g = TruncatedGenerator::new(&s, &cuboid(&[15, 8, 6])).unwrap();
        let pi = g.stationary(DEFAULT_BAND_CAP).unwrap();
        assert!(g.residual(&pi) < 1e-12);
        assert!((pi.sum() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ordering_puts_largest_dimension_outermost() {
        let s = sys(&[0.1, 0.2, 0.3], &[0.5, 1.0, 1.5]);
        let g = TruncatedGenerator::new(&s, &cuboid(&[40, 5, 3])).unwrap();
        assert_eq!(g.half_width(), 6 * 4);
        for i in 0..g.state_count() {
            assert_eq!(g.index(&g.state(i)), i);
        }
    }

    #[test]
    fn band_budget() {
        let s = sys(&[0.1, 0.2], &[0.5, 1.0]);
        assert!(matches!(
            solve_truncated_ctmc(&s, &cuboid(&[100, 100]), 1000),
            Err(Error::BudgetExceeded { .. })
        ));
    }
}
