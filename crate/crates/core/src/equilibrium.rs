//! Joint equilibrium distribution by counting excursions level by level.
//!
//! Probabilities are filled starting from `p(0,...,0) = 1 - rho`: first the
//! class-1 axis, then each class-`n` level outward, reading only states with
//! componentwise smaller (or equal, on lower dimensions) coordinates.
//! Entries inside the cuboid are therefore exact; the cuboid only limits which
//! states are produced.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{conv_point, neumaier_sum, ConvGrid, Grid};
use crate::model::{validate, PrioritySystem};
use crate::passage::PassageSet;
use crate::truncation::TruncationCuboid;

/// Entries below this are errors; entries in `[-NEGATIVE_TOLERANCE, 0)` are
/// clamped and counted.
pub const NEGATIVE_TOLERANCE: f64 = 1e-12;

/// Numerical health of one recursion run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RecursionDiagnostics {
    pub clamped_negatives: usize,
    /// Per level `n = 1..N-1`: smallest `(f - g) / f` over consumed entries.
    pub worst_cancellation: Vec<f64>,
    /// Smallest `f - g` over all consumed entries.
    pub min_f_minus_g: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    system: PrioritySystem,
    cuboid: TruncationCuboid,
    probabilities: Grid,
    captured_mass: f64,
    oracle_normalized: bool,
    diagnostics: RecursionDiagnostics,
}

impl JointDistribution {
    pub(crate) fn from_parts(
        system: PrioritySystem,
        cuboid: TruncationCuboid,
        probabilities: Grid,
        oracle_normalized: bool,
        diagnostics: RecursionDiagnostics,
    ) -> Self {
        let captured_mass = probabilities.sum();
        Self {
            system,
            cuboid,
            probabilities,
            captured_mass,
            oracle_normalized,
            diagnostics,
        }
    }

    pub fn system(&self) -> &PrioritySystem {
        &self.system
    }

    pub fn cuboid(&self) -> &TruncationCuboid {
        &self.cuboid
    }

    /// Probabilities over `(q_N, ..., q_1)`.
    pub fn probabilities(&self) -> &Grid {
        &self.probabilities
    }

    /// `p(q_N, ..., q_1)`, zero outside the cuboid.
    pub fn probability(&self, state: &[usize]) -> f64 {
        self.probabilities.get(state)
    }

    pub fn captured_mass(&self) -> f64 {
        self.captured_mass
    }

    /// True when the distribution was rescaled to total mass 1 (oracle solves).
    pub fn is_oracle_normalized(&self) -> bool {
        self.oracle_normalized
    }

    pub fn diagnostics(&self) -> &RecursionDiagnostics {
        &self.diagnostics
    }

    /// `Err(MassDeficit)` unless the captured mass exceeds `1 - epsilon`.
    pub fn check_mass(&self, epsilon: f64) -> Result<()> {
        if self.captured_mass > 1.0 - epsilon {
            Ok(())
        } else {
            Err(Error::MassDeficit {
                captured: self.captured_mass,
                epsilon,
            })
        }
    }

    /// Total variation distance to another distribution on the same cuboid.
    pub fn total_variation(&self, other: &JointDistribution) -> f64 {
        assert_eq!(
            self.probabilities.extents(),
            other.probabilities.extents(),
            "distributions live on different cuboids"
        );
        0.5 * neumaier_sum(
            self.probabilities
                .data()
                .iter()
                .zip(other.probabilities.data())
                .map(|(a, b)| (a - b).abs()),
        )
    }

    /// Mean queue length of every class, rank-1-first.
    pub fn mean_queue_lengths(&self) -> Vec<f64> {
        (1..=self.system.num_classes())
            .map(|n| marginal(self, n).mean)
            .collect()
    }

    /// CSV rows `q_N,...,q_1,probability` with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let big_n = self.system.num_classes();
        let header: Vec<String> = (1..=big_n).rev().map(|n| format!("q_{n}")).collect();
        writeln!(out, "{},probability", header.join(","))?;
        for (flat, p) in self.probabilities.data().iter().enumerate() {
            let state: Vec<String> = self
                .probabilities
                .unflat(flat)
                .iter()
                .map(|q| q.to_string())
                .collect();
            writeln!(out, "{},{:.16e}", state.join(","), p)?;
        }
        Ok(())
    }

    /// Reads the output of [`write_csv`](Self::write_csv). Lines starting
    /// with `#` are skipped, as is the header. The cuboid is inferred from
    /// the largest state seen.
    pub fn read_csv<R: BufRead>(input: R, system: PrioritySystem, epsilon: f64) -> Result<Self> {
        let big_n = system.num_classes();
        let mut rows: Vec<(Vec<usize>, f64)> = Vec::new();
        let bad = |line: usize, what: &str| Error::InvalidScenario(format!("csv line {line}: {what}"));
        let mut header_seen = false;
        for (ln, line) in input.lines().enumerate() {
            let line = line.map_err(|e| bad(ln + 1, &e.to_string()))?;
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            if !header_seen {
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != big_n + 1 {
                return Err(bad(ln + 1, "wrong field count"));
            }
            let state = fields[..big_n]
                .iter()
                .map(|f| f.trim().parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(ln + 1, &e.to_string()))?;
            let p: f64 = fields[big_n]
                .trim()
                .parse()
                .map_err(|e: std::num::ParseFloatError| bad(ln + 1, &e.to_string()))?;
            rows.push((state, p));
        }
        let mut high_first = vec![0usize; big_n];
        for (s, _) in &rows {
            for (b, q) in high_first.iter_mut().zip(s) {
                *b = (*b).max(*q);
            }
        }
        let bounds: Vec<usize> = high_first.iter().rev().copied().collect();
        let cuboid = TruncationCuboid::new(bounds, epsilon)?;
        let mut grid = Grid::zeros(&cuboid.extents_high_first());
        for (s, p) in rows {
            grid.set(&s, p);
        }
        Ok(Self::from_parts(system, cuboid, grid, false, RecursionDiagnostics::default()))
    }

    pub fn to_document(&self) -> JointDocument {
        JointDocument {
            arrival_rates: self.system.arrival_rates().to_vec(),
            service_rates: self.system.service_rates().to_vec(),
            bounds: self.cuboid.bounds().iter().rev().copied().collect(),
            epsilon: self.cuboid.epsilon(),
            captured_mass: self.captured_mass,
            probabilities: self.probabilities.data().to_vec(),
        }
    }

    pub fn from_document(doc: JointDocument) -> Result<Self> {
        let system = PrioritySystem::new(doc.arrival_rates, doc.service_rates)?;
        let bounds: Vec<usize> = doc.bounds.iter().rev().copied().collect();
        let cuboid = TruncationCuboid::new(bounds, doc.epsilon)?;
        let extents = cuboid.extents_high_first();
        if extents.iter().product::<usize>() != doc.probabilities.len() {
            return Err(Error::InvalidScenario(
                "probability array does not match bounds".into(),
            ));
        }
        let grid = Grid::from_vec(&extents, doc.probabilities);
        Ok(Self::from_parts(system, cuboid, grid, false, RecursionDiagnostics::default()))
    }
}

/// JSON form of a joint distribution. `bounds` are ordered `(c_N, ..., c_1)`
/// to match the row-major layout of `probabilities`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDocument {
    pub arrival_rates: Vec<f64>,
    pub service_rates: Vec<f64>,
    pub bounds: Vec<usize>,
    pub epsilon: f64,
    pub captured_mass: f64,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalDistribution {
    pub class: usize,
    pub pmf: Vec<f64>,
    pub mean: f64,
}

impl MarginalDistribution {
    fn from_pmf(class: usize, pmf: Vec<f64>) -> Self {
        let mean = neumaier_sum(pmf.iter().enumerate().map(|(q, p)| q as f64 * p));
        Self { class, pmf, mean }
    }

    pub fn mass(&self) -> f64 {
        neumaier_sum(self.pmf.iter().copied())
    }
}

/// Runs the level-by-level recursion over `cuboid` with precomputed tables.
pub fn compute_joint(
    system: &PrioritySystem,
    cuboid: &TruncationCuboid,
    tables: &PassageSet,
) -> Result<JointDistribution> {
    let rho = validate(system)?;
    let big_n = system.num_classes();
    if cuboid.bounds().len() != big_n || tables.num_classes() != big_n {
        return Err(Error::MissingDependency(
            "cuboid, tables and system disagree on the class count".into(),
        ));
    }
    let extents = cuboid.extents_high_first();
    // extents of the trailing n dimensions, i.e. the level-n box
    let level_extents = |n: usize| extents[big_n - n..].to_vec();
    for n in 1..big_n {
        for k in n + 1..=big_n {
            for t in [tables.g(n, k), tables.f(n, k)] {
                match t {
                    Some(t) if t.extents() == level_extents(n).as_slice() => {}
                    _ => {
                        return Err(Error::MissingDependency(format!(
                            "tables for level {n}, class {k} over {:?}",
                            level_extents(n)
                        )))
                    }
                }
            }
        }
    }

    let mut grid = Grid::zeros(&extents);
    grid.data_mut()[0] = 1.0 - rho;
    let mut diag = RecursionDiagnostics {
        min_f_minus_g: f64::INFINITY,
        ..Default::default()
    };

    for n in 1..=big_n {
        let ext_n = level_extents(n);
        let ext_lower = level_extents(n - 1);
        let slice: usize = ext_lower.iter().product();
        let size: usize = slice * ext_n[0];
        let lower_shape = Grid::zeros(&ext_lower);

        // excursions started by classes above n, weighted by their rates
        let upper = if n < big_n {
            let mut h = Grid::zeros(&ext_n);
            let mut worst = f64::INFINITY;
            for m in n + 1..=big_n {
                let g = tables.g(n, m).unwrap().data();
                let f = tables.f(n, m).unwrap().data();
                for i in 0..h.len() {
                    let diff = if n == 1 {
                        1.0 - neumaier_sum(g[..=i].iter().copied())
                    } else {
                        f[i] - g[i]
                    };
                    diag.min_f_minus_g = diag.min_f_minus_g.min(diff);
                    if f[i] > 0.0 {
                        worst = worst.min(diff / f[i]);
                    }
                    h.data_mut()[i] += system.lambda(m) * diff;
                }
            }
            diag.worst_cancellation.push(worst);
            Some(ConvGrid::from_grid(h))
        } else {
            None
        };
        let arrivals_same_class = if n >= 2 {
            Some(tables.g(n - 1, n).unwrap().conv())
        } else {
            None
        };

        let (lam_n, mu_n) = (system.lambda(n), system.mu(n));
        let mut idx = vec![0usize; n];
        for qn in 0..ext_n[0] - 1 {
            for r in 0..slice {
                idx[0] = qn;
                idx[1..].copy_from_slice(&lower_shape.unflat(r));
                let data = grid.data();
                let first = match &upper {
                    Some(h) => conv_point(&data[..size], h.rev(), &ext_n, &idx, usize::MAX),
                    None => 0.0,
                };
                let second = match arrivals_same_class {
                    None => lam_n * data[qn],
                    Some(g) => {
                        lam_n
                            * conv_point(
                                &data[qn * slice..(qn + 1) * slice],
                                g.rev(),
                                &ext_lower,
                                &idx[1..],
                                usize::MAX,
                            )
                    }
                };
                let mut v = (first + second) / mu_n;
                let target = (qn + 1) * slice + r;
                if !v.is_finite() {
                    return Err(Error::NonFiniteEntry {
                        table: "joint".into(),
                        index: target,
                        value: v,
                    });
                }
                if v < 0.0 {
                    if v < -NEGATIVE_TOLERANCE {
                        return Err(Error::NegativeProbability {
                            state: grid.unflat(target),
                            value: v,
                        });
                    }
                    diag.clamped_negatives += 1;
                    v = 0.0;
                }
                grid.data_mut()[target] = v;
            }
        }
    }

    Ok(JointDistribution::from_parts(
        system.clone(),
        cuboid.clone(),
        grid,
        false,
        diag,
    ))
}

/// Builds all passage tables for `cuboid` and runs the recursion.
pub fn solve(system: &PrioritySystem, cuboid: &TruncationCuboid) -> Result<JointDistribution> {
    let tables = PassageSet::build(system, cuboid.bounds())?;
    compute_joint(system, cuboid, &tables)
}

/// Marginal distribution of class `n` over the cuboid.
pub fn marginal(joint: &JointDistribution, n: usize) -> MarginalDistribution {
    let big_n = joint.system.num_classes();
    assert!(n >= 1 && n <= big_n);
    let grid = &joint.probabilities;
    let axis = big_n - n;
    let mut pmf = vec![0.0; grid.extents()[axis]];
    let stride = grid.strides()[axis];
    let extent = grid.extents()[axis];
    let mut parts: Vec<Vec<f64>> = vec![Vec::new(); extent];
    for (flat, &p) in grid.data().iter().enumerate() {
        parts[(flat / stride) % extent].push(p);
    }
    for (q, v) in parts.into_iter().enumerate() {
        pmf[q] = neumaier_sum(v);
    }
    MarginalDistribution::from_pmf(n, pmf)
}

/// Class-`n` marginal from the boundary of the subsystem of classes `n..N`,
/// without the full joint: every downward crossing of class-`n` level `q`
/// happens by a class-`n` service with no higher class present, so
/// `lambda_n p_n(q) = mu_n p(0, ..., 0, q + 1)`. The pmf is extended until its
/// mass exceeds `1 - epsilon`.
pub fn boundary_marginal(system: &PrioritySystem, n: usize, epsilon: f64) -> Result<MarginalDistribution> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    let sub = system.subsystem(n)?.into_system();
    validate(&sub)?;
    let k = sub.num_classes();
    let ratio = sub.mu(1) / sub.lambda(1);
    let mut len = 64usize;
    loop {
        let mut bounds = vec![0; k];
        bounds[0] = len;
        let cuboid = TruncationCuboid::new(bounds, epsilon)?;
        let joint = solve(&sub, &cuboid)?;
        let axis = &joint.probabilities.data()[..=len];
        let mut pmf = Vec::with_capacity(len);
        let mut cum = 0.0;
        let mut comp = 0.0;
        for q in 0..len {
            let p = ratio * axis[q + 1];
            pmf.push(p);
            // Neumaier running sum
            let t = cum + p;
            if cum.abs() >= p.abs() {
                comp += (cum - t) + p;
            } else {
                comp += (p - t) + cum;
            }
            cum = t;
            if cum + comp > 1.0 - epsilon {
                return Ok(MarginalDistribution::from_pmf(n, pmf));
            }
        }
        if len >= 1 << 24 {
            return Err(Error::BudgetExceeded {
                size: len as u128,
                cap: 1 << 24,
            });
        }
        len *= 2;
    }
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

    /// Balance residual of the untruncated chain at state `q` (high-first).
    fn balance_residual(j: &JointDistribution, q: &[usize]) -> f64 {
        let s = j.system();
        let big_n = s.num_classes();
        let class_at = |pos: usize| big_n - pos;
        let top = q.iter().position(|&x| x > 0).map(class_at);
        let out = (s.total_arrival_rate() + top.map_or(0.0, |c| s.mu(c))) * j.probability(q);
        let mut inflow = 0.0;
        for pos in 0..big_n {
            let c = class_at(pos);
            if q[pos] > 0 {
                let mut from = q.to_vec();
                from[pos] -= 1;
                inflow += s.lambda(c) * j.probability(&from);
            }
            // service of class c from q + e_c requires no higher class in q
            if q[..pos].iter().all(|&x| x == 0) {
                let mut from = q.to_vec();
                from[pos] += 1;
                inflow += s.mu(c) * j.probability(&from);
            }
        }
        (inflow - out).abs()
    }

    #[test]
    fn single_class_is_geometric() {
        let s = sys(&[0.4], &[1.0]);
        let j = solve(&s, &cuboid(&[30])).unwrap();
        for q in 0..=30 {
            let want = 0.6 * 0.4f64.powi(q as i32);
            assert!((j.probability(&[q]) - want).abs() < 1e-15);
        }
        let m = marginal(&j, 1);
        assert_eq!(m.pmf, j.probabilities().data());
    }

    #[test]
    fn empty_state_is_seeded_exactly() {
        let s = sys(&[0.1, 0.2, 0.3], &[0.5, 1.0, 1.5]);
        let j = solve(&s, &cuboid(&[5, 4, 3])).unwrap();
        assert_eq!(j.probability(&[0, 0, 0]), 1.0 - s.utilization());
    }

    #[test]
    fn global_balance_holds_in_the_interior() {
        for (l, m, b) in [
            (vec![0.3, 0.3], vec![1.0, 1.0], vec![30, 20]),
            (vec![0.1, 0.2, 0.3], vec![0.5, 1.0, 1.5], vec![12, 10, 8]),
            (vec![0.05, 0.1, 0.1, 0.2], vec![0.6, 1.0, 0.9, 1.5], vec![8, 6, 5, 5]),
        ] {
            let s = sys(&l, &m);
            let j = solve(&s, &cuboid(&b)).unwrap();
            let scale = s.total_arrival_rate() + m.iter().cloned().fold(0.0, f64::max);
            let grid = j.probabilities().clone();
            for q in grid.indices() {
                let interior = q.iter().zip(grid.extents()).all(|(x, e)| x + 1 < *e);
                if interior {
                    let r = balance_residual(&j, &q);
                    assert!(r < 1e-9 * scale, "state {q:?} residual {r}");
                }
            }
            assert_eq!(j.diagnostics().clamped_negatives, 0);
        }
    }

    #[test]
    fn top_class_marginal_is_geometric() {
        let s = sys(&[0.1, 0.2, 0.3], &[0.5, 1.0, 1.5]);
        let j = solve(&s, &cuboid(&[40, 30, 25])).unwrap();
        let r: f64 = 0.2;
        let m = marginal(&j, 3);
        // every state with q_3 = q has q_2, q_1 within bounds up to tail mass
        for (q, p) in m.pmf.iter().enumerate().take(10) {
            let want = (1.0 - r) * r.powi(q as i32);
            assert!((p - want).abs() < 1e-8, "q={q}: {p} vs {want}");
        }
    }

    #[test]
    fn boundary_marginal_single_class_is_geometric() {
        let s = sys(&[0.1, 0.5], &[1.0, 1.0]);
        let m = boundary_marginal(&s, 2, 1e-6).unwrap();
        for (q, p) in m.pmf.iter().enumerate() {
            assert!((p - 0.5 * 0.5f64.powi(q as i32)).abs() < 1e-15);
        }
        assert!(m.mass() > 1.0 - 1e-6);
        assert!(m.mass() - m.pmf.last().unwrap() <= 1.0 - 1e-6);
    }

    #[test]
    fn boundary_marginal_matches_full_joint() {
        let s = sys(&[0.1, 0.2, 0.3], &[0.5, 1.0, 1.5]);
        let m = boundary_marginal(&s, 2, 1e-12).unwrap();
        let sub = s.subsystem(2).unwrap().into_system();
        let j = solve(&sub, &cuboid(&[m.pmf.len() + 10, 40])).unwrap();
        let full = marginal(&j, 1);
        assert!((full.mean - m.mean).abs() < 1e-8, "{} vs {}", full.mean, m.mean);
        assert!(m.mass() > 1.0 - 1e-12);
    }

    #[test]
    fn csv_and_json_roundtrip_bit_exact() {
        let s = sys(&[0.1, 0.2, 0.3], &[0.5, 1.0, 1.5]);
        let j = solve(&s, &cuboid(&[4, 3, 2])).unwrap();
        let mut buf = Vec::new();
        j.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("q_3,q_2,q_1,probability\n0,0,0,"));
        let back = JointDistribution::read_csv(&buf[..], s.clone(), 1e-6).unwrap();
        assert_eq!(back.probabilities(), j.probabilities());
        assert_eq!(back.cuboid(), j.cuboid());
        let mut commented = b"# a note\n".to_vec();
        commented.extend_from_slice(&buf);
        let back = JointDistribution::read_csv(&commented[..], s.clone(), 1e-6).unwrap();
        assert_eq!(back.probabilities(), j.probabilities());

        let doc = serde_json::to_string(&j.to_document()).unwrap();
        let parsed: JointDocument = serde_json::from_str(&doc).unwrap();
        let back = JointDistribution::from_document(parsed).unwrap();
        assert_eq!(back.probabilities(), j.probabilities());
        assert_eq!(back.captured_mass(), j.captured_mass());
    }

    #[test]
    fn mass_check() {
        let s = sys(&[0.3, 0.3], &[1.0, 1.0]);
        let j = solve(&s, &cuboid(&[2, 2])).unwrap();
        assert!(matches!(j.check_mass(1e-6), Err(Error::MassDeficit { .. })));
        assert!(j.check_mass(0.9).is_ok());
    }

    #[test]
    fn rejects_mismatched_tables() {
        let s = sys(&[0.1, 0.2, 0.3], &[0.5, 1.0, 1.5]);
        let tables = PassageSet::build(&s, &[3, 3, 3]).unwrap();
        assert!(matches!(
            compute_joint(&s, &cuboid(&[4, 3, 3]), &tables),
            Err(Error::MissingDependency(_))
        ));
    }
}
