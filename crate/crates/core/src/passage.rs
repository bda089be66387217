//! First-passage probability tables.
//!
//! For an embedding level `n` (states with no customers above class `n`) and
//! a class `k > n`:
//!
//! * `g_{k;i}` is the probability that a busy period of classes above `n`,
//!   started by a class-`k` customer, sees exactly `i_m` arrivals of every
//!   class `m <= n`;
//! * `f_{k;i}` is the probability that, starting from a class-`k` customer,
//!   the first passage to class-`n` levels `<= q_n + i_n` lands exactly at
//!   offset `i` ("at least" on the leading index, "exactly" on the rest).
//!
//! Both tables satisfy one-step recursions that only read componentwise
//! smaller indices, except for terms at the index itself that couple the
//! classes `k = n+1..N` through a rank-one system; that system is solved in
//! closed form at each index.

use std::fmt;
use std::io::{self, Write};

use crate::busy_period::g_zero_all;
use crate::error::{Error, Result};
use crate::grid::{conv_point, neumaier_sum, ConvGrid, Grid};
use crate::model::PrioritySystem;

/// Multi-index `(i_n, ..., i_1)`, highest subscript first.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(components: Vec<usize>) -> Self {
        Self(components)
    }

    pub fn zero(level: usize) -> Self {
        Self(vec![0; level])
    }

    /// Unit vector for class `k` at the given level.
    pub fn unit(level: usize, k: usize) -> Self {
        assert!(k >= 1 && k <= level);
        let mut v = vec![0; level];
        v[level - k] = 1;
        Self(v)
    }

    pub fn level(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[usize] {
        &self.0
    }

    /// Component for class `k`.
    pub fn class_component(&self, k: usize) -> usize {
        self.0[self.0.len() - k]
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn checked_sub(&self, other: &MultiIndex) -> Option<MultiIndex> {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.checked_sub(*b))
            .collect::<Option<Vec<_>>>()
            .map(MultiIndex)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|c| c.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassageKind {
    G,
    F,
}

impl fmt::Display for PassageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PassageKind::G => f.write_str("g"),
            PassageKind::F => f.write_str("f"),
        }
    }
}

/// Dense table of `g_{k;i}` or `f_{k;i}` over a box of multi-indices.
#[derive(Debug, Clone)]
pub struct PassageTable {
    kind: PassageKind,
    level: usize,
    class: usize,
    table: ConvGrid,
}

impl PassageTable {
    pub fn kind(&self) -> PassageKind {
        self.kind
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn class(&self) -> usize {
        self.class
    }

    /// Index caps `(b_n, ..., b_1)`.
    pub fn bounds(&self) -> Vec<usize> {
        self.table.extents().iter().map(|e| e - 1).collect()
    }

    pub fn extents(&self) -> &[usize] {
        self.table.extents()
    }

    pub fn grid(&self) -> &Grid {
        self.table.grid()
    }

    pub fn data(&self) -> &[f64] {
        self.table.data()
    }

    pub(crate) fn conv(&self) -> &ConvGrid {
        &self.table
    }

    /// Entry at `index`, 0 outside the box.
    pub fn get(&self, index: &MultiIndex) -> f64 {
        self.table.grid().get(index.components())
    }

    /// Overwrites one entry. Intended for negative-control experiments.
    pub fn set(&mut self, index: &MultiIndex, value: f64) {
        let flat = self.table.grid().flat(index.components());
        self.table.set_flat(flat, value);
    }

    pub fn sum(&self) -> f64 {
        self.table.grid().sum()
    }

    pub fn name(&self) -> String {
        format!("{}[level {}, class {}]", self.kind, self.level, self.class)
    }

    /// CSV with one row per index: `i_n,...,i_1,value`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let header: Vec<String> = (1..=self.level).rev().map(|m| format!("i_{m}")).collect();
        writeln!(out, "{},value", header.join(","))?;
        let grid = self.table.grid();
        for (flat, v) in grid.data().iter().enumerate() {
            let idx: Vec<String> = grid.unflat(flat).iter().map(|c| c.to_string()).collect();
            writeln!(out, "{},{:.16e}", idx.join(","), v)?;
        }
        Ok(())
    }
}

/// Solves `d_k x_k - u_k * sum_m lam_m x_m = r_k` for all `k`.
fn solve_rank_one(d: &[f64], u: &[f64], lam: &[f64], r: &[f64], x: &mut [f64]) {
    let mut a = 0.0;
    let mut b = 0.0;
    for k in 0..d.len() {
        a += lam[k] * r[k] / d[k];
        b += lam[k] * u[k] / d[k];
    }
    let s = a / (1.0 - b);
    for k in 0..d.len() {
        x[k] = (r[k] + u[k] * s) / d[k];
    }
}

fn check_level(system: &PrioritySystem, n: usize) -> Result<()> {
    let big_n = system.num_classes();
    if n == 0 || n >= big_n {
        return Err(Error::IndexOutOfRange {
            index: n,
            max: big_n.saturating_sub(1),
        });
    }
    Ok(())
}

fn check_finite(value: f64, kind: PassageKind, level: usize, class: usize, flat: usize) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteEntry {
            table: format!("{kind}[level {level}, class {class}]"),
            index: flat,
            value,
        })
    }
}

/// `g_{k;i}` for every class `k = n+1..=N` at level `n`, over the box
/// `0..=bounds` (`bounds` highest subscript first). `seeds[k-n-1]` must hold
/// `g_{k;0_n}`.
pub fn compute_g_tables(
    system: &PrioritySystem,
    n: usize,
    bounds: &[usize],
    seeds: &[f64],
) -> Result<Vec<PassageTable>> {
    check_level(system, n)?;
    let big_n = system.num_classes();
    if bounds.len() != n {
        return Err(Error::MissingDependency(format!(
            "level {n} needs {n} bounds, got {}",
            bounds.len()
        )));
    }
    if seeds.len() != big_n - n {
        return Err(Error::MissingSeed {
            level: n,
            class: n + 1 + seeds.len().min(big_n - n - 1),
        });
    }
    let classes: Vec<usize> = (n + 1..=big_n).collect();
    let extents: Vec<usize> = bounds.iter().map(|b| b + 1).collect();
    let lam_up: Vec<f64> = classes.iter().map(|&m| system.lambda(m)).collect();
    let lam_total = system.total_arrival_rate();

    let mut tables: Vec<ConvGrid> = classes.iter().map(|_| ConvGrid::zeros(&extents)).collect();
    for (t, &s) in seeds.iter().enumerate() {
        tables[t].set_flat(0, s);
    }
    let sigma: f64 = lam_up.iter().zip(seeds).map(|(l, g)| l * g).sum();
    let d: Vec<f64> = classes
        .iter()
        .map(|&k| lam_total + system.mu(k) - sigma)
        .collect();

    let shape = Grid::zeros(&extents);
    let strides = shape.strides().to_vec();
    let mut r = vec![0.0; classes.len()];
    let mut x = vec![0.0; classes.len()];
    for flat in 1..shape.len() {
        let idx = shape.unflat(flat);
        for t in 0..classes.len() {
            let mut acc = 0.0;
            for m in 1..=n {
                let pos = n - m;
                if idx[pos] > 0 {
                    acc += system.lambda(m) * tables[t].get_flat(flat - strides[pos]);
                }
            }
            for (u, &lm) in lam_up.iter().enumerate() {
                acc += lm * conv_point(tables[u].data(), tables[t].rev(), &extents, &idx, usize::MAX);
            }
            r[t] = acc;
        }
        solve_rank_one(&d, seeds, &lam_up, &r, &mut x);
        for (t, &v) in x.iter().enumerate() {
            check_finite(v, PassageKind::G, n, classes[t], flat)?;
            tables[t].set_flat(flat, v);
        }
    }

    Ok(classes
        .iter()
        .zip(tables)
        .map(|(&k, table)| PassageTable {
            kind: PassageKind::G,
            level: n,
            class: k,
            table,
        })
        .collect())
}

/// Single-class view of [`compute_g_tables`]; the classes are coupled, so all
/// of them are computed.
pub fn compute_g_table(
    system: &PrioritySystem,
    n: usize,
    k: usize,
    bounds: &[usize],
    seeds: &[f64],
) -> Result<PassageTable> {
    compute_g_tables(system, n, bounds, seeds)?
        .into_iter()
        .find(|t| t.class == k)
        .ok_or(Error::IndexOutOfRange {
            index: k,
            max: system.num_classes(),
        })
}

/// `f_{k;i}` for every class `k = n+1..=N` at level `n`.
///
/// `g_level` are the level-`n` G tables (classes `n+1..=N`). For `n >= 2`,
/// `g_prev` must hold the level-`(n-1)` G tables (classes `n..=N`) over the
/// trailing `n-1` dimensions of the same box.
pub fn compute_f_tables(
    system: &PrioritySystem,
    n: usize,
    g_level: &[PassageTable],
    g_prev: Option<&[PassageTable]>,
) -> Result<Vec<PassageTable>> {
    check_level(system, n)?;
    let big_n = system.num_classes();
    let classes: Vec<usize> = (n + 1..=big_n).collect();
    let find = |tables: &[PassageTable], level: usize, k: usize| -> Result<usize> {
        tables
            .iter()
            .position(|t| t.kind == PassageKind::G && t.level == level && t.class == k)
            .ok_or_else(|| Error::MissingDependency(format!("g[level {level}, class {k}]")))
    };
    let g_pos: Vec<usize> = classes.iter().map(|&k| find(g_level, n, k)).collect::<Result<_>>()?;
    let extents = g_level[g_pos[0]].extents().to_vec();

    if n == 1 {
        return Ok(classes
            .iter()
            .zip(&g_pos)
            .map(|(&k, &p)| {
                let g = g_level[p].data();
                let mut data = Vec::with_capacity(g.len());
                data.push(1.0);
                for i in 1..g.len() {
                    data.push(1.0 - neumaier_sum(g[..i].iter().copied()));
                }
                PassageTable {
                    kind: PassageKind::F,
                    level: 1,
                    class: k,
                    table: ConvGrid::from_grid(Grid::from_vec(&extents, data)),
                }
            })
            .collect());
    }

    let g_prev = g_prev.ok_or_else(|| Error::MissingDependency(format!("level {} G tables", n - 1)))?;
    let prev_pos: Vec<usize> = classes
        .iter()
        .map(|&k| find(g_prev, n - 1, k))
        .collect::<Result<_>>()?;
    for &p in &prev_pos {
        if g_prev[p].extents() != &extents[1..] {
            return Err(Error::MissingDependency(format!(
                "{} covers {:?}, need {:?}",
                g_prev[p].name(),
                g_prev[p].extents(),
                &extents[1..]
            )));
        }
    }

    let lam_up: Vec<f64> = classes.iter().map(|&m| system.lambda(m)).collect();
    let lam_total = system.total_arrival_rate();
    let seeds: Vec<f64> = g_pos.iter().map(|&p| g_level[p].data()[0]).collect();
    let sigma: f64 = lam_up.iter().zip(&seeds).map(|(l, g)| l * g).sum();
    let d: Vec<f64> = classes
        .iter()
        .map(|&k| lam_total + system.mu(k) - sigma)
        .collect();
    let u: Vec<f64> = prev_pos.iter().map(|&p| g_prev[p].data()[0]).collect();

    let shape = Grid::zeros(&extents);
    let strides = shape.strides().to_vec();
    let slice = strides[0];
    let mut tables: Vec<ConvGrid> = classes.iter().map(|_| ConvGrid::zeros(&extents)).collect();
    for (t, &p) in prev_pos.iter().enumerate() {
        for (flat, &v) in g_prev[p].data().iter().enumerate() {
            tables[t].set_flat(flat, v);
        }
    }

    let mut r = vec![0.0; classes.len()];
    let mut x = vec![0.0; classes.len()];
    for flat in slice..shape.len() {
        let idx = shape.unflat(flat);
        let lead = idx[0];
        let inner = &idx[1..];
        for t in 0..classes.len() {
            let mut acc = 0.0;
            for m in 1..=n {
                let pos = n - m;
                if idx[pos] > 0 {
                    acc += system.lambda(m) * tables[t].get_flat(flat - strides[pos]);
                }
            }
            for (v, &lm) in lam_up.iter().enumerate() {
                // busy period of class m ends below the target level
                let below = conv_point(
                    g_level[g_pos[v]].data(),
                    tables[t].rev(),
                    &extents,
                    &idx,
                    lead - 1,
                );
                // class m reaches the target level, class k finishes the excursion
                let f_row = &tables[v].data()[lead * slice..(lead + 1) * slice];
                let beyond = conv_point(f_row, g_prev[prev_pos[t]].conv().rev(), &extents[1..], inner, usize::MAX);
                acc += lm * (below + beyond);
            }
            r[t] = acc;
        }
        solve_rank_one(&d, &u, &lam_up, &r, &mut x);
        for (t, &v) in x.iter().enumerate() {
            check_finite(v, PassageKind::F, n, classes[t], flat)?;
            tables[t].set_flat(flat, v);
        }
    }

    Ok(classes
        .iter()
        .zip(tables)
        .map(|(&k, table)| PassageTable {
            kind: PassageKind::F,
            level: n,
            class: k,
            table,
        })
        .collect())
}

/// Single-class view of [`compute_f_tables`]; the classes are coupled, so all
/// of them are computed.
pub fn compute_f_table(
    system: &PrioritySystem,
    n: usize,
    k: usize,
    g_level: &[PassageTable],
    g_prev: Option<&[PassageTable]>,
) -> Result<PassageTable> {
    compute_f_tables(system, n, g_level, g_prev)?
        .into_iter()
        .find(|t| t.class == k)
        .ok_or(Error::IndexOutOfRange {
            index: k,
            max: system.num_classes(),
        })
}

/// G and F tables at one level.
#[derive(Debug, Clone)]
pub struct LevelTables {
    pub g: Vec<PassageTable>,
    pub f: Vec<PassageTable>,
}

/// All first-passage tables needed for a joint distribution over the box
/// `0..=bounds`, levels `1..N-1`.
#[derive(Debug, Clone)]
pub struct PassageSet {
    num_classes: usize,
    levels: Vec<LevelTables>,
}

impl PassageSet {
    /// `bounds` are per-class caps `c_1..c_N` (rank-1-first). Tables at level
    /// `n` cover `(c_n, ..., c_1)`; the joint recursion never reads past them.
    pub fn build(system: &PrioritySystem, bounds: &[usize]) -> Result<Self> {
        let big_n = system.num_classes();
        assert_eq!(bounds.len(), big_n, "one bound per class");
        let mut levels: Vec<LevelTables> = Vec::with_capacity(big_n.saturating_sub(1));
        for n in 1..big_n {
            let level_bounds: Vec<usize> = bounds[..n].iter().rev().copied().collect();
            let seeds = g_zero_all(system, n)?;
            let g = compute_g_tables(system, n, &level_bounds, &seeds)?;
            let prev = levels.last().map(|l| l.g.as_slice());
            let f = compute_f_tables(system, n, &g, prev)?;
            levels.push(LevelTables { g, f });
        }
        Ok(Self {
            num_classes: big_n,
            levels,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn table(&self, kind: PassageKind, level: usize, k: usize) -> Option<&PassageTable> {
        let lt = self.levels.get(level.checked_sub(1)?)?;
        let list = if kind == PassageKind::G { &lt.g } else { &lt.f };
        list.iter().find(|t| t.class == k)
    }

    pub fn g(&self, level: usize, k: usize) -> Option<&PassageTable> {
        self.table(PassageKind::G, level, k)
    }

    pub fn f(&self, level: usize, k: usize) -> Option<&PassageTable> {
        self.table(PassageKind::F, level, k)
    }

    pub fn g_mut(&mut self, level: usize, k: usize) -> Option<&mut PassageTable> {
        let lt = self.levels.get_mut(level.checked_sub(1)?)?;
        lt.g.iter_mut().find(|t| t.class == k)
    }

    pub fn level(&self, level: usize) -> Option<&LevelTables> {
        self.levels.get(level.checked_sub(1)?)
    }

    pub fn tables(&self) -> impl Iterator<Item = &PassageTable> {
        self.levels.iter().flat_map(|l| l.g.iter().chain(l.f.iter()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::busy_period::g_zero;

    fn sys(l: &[f64], m: &[f64]) -> PrioritySystem {
        PrioritySystem::new(l.to_vec(), m.to_vec()).unwrap()
    }

    fn level1_g(system: &PrioritySystem, bound: usize) -> Vec<PassageTable> {
        let seeds = g_zero_all(system, 1).unwrap();
        compute_g_tables(system, 1, &[bound], &seeds).unwrap()
    }

    /// Direct two-class recursion, solved for g_{2;i} term by term.
    fn two_class_direct(l1: f64, l2: f64, mu2: f64, len: usize) -> Vec<f64> {
        let lam = l1 + l2;
        let b = lam + mu2;
        let g0 = (b - (b * b - 4.0 * l2 * mu2).sqrt()) / (2.0 * l2);
        let mut g = vec![g0];
        for i in 1..len {
            let inner: f64 = (1..i).map(|j| g[j] * g[i - j]).sum();
            g.push((l1 * g[i - 1] + l2 * inner) / (b - 2.0 * l2 * g0));
        }
        g
    }

    #[test]
    fn no_lower_arrivals_gives_point_mass() {
        let s = PrioritySystem::unchecked(vec![0.0, 0.3], vec![1.0, 1.0]);
        let seeds = g_zero_all(&s, 1).unwrap();
        assert_eq!(seeds, vec![1.0]);
        let g = compute_g_tables(&s, 1, &[5], &seeds).unwrap();
        assert_eq!(g[0].data(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn two_class_first_entry() {
        let s = sys(&[0.3, 0.3], &[1.0, 1.0]);
        let g = &level1_g(&s, 3)[0];
        let g0 = g.data()[0];
        let want = 0.3 * g0 / (0.6 + 1.0 - 2.0 * 0.3 * g0);
        assert!((g.data()[1] - want).abs() < 1e-15);
    }

    #[test]
    fn two_class_matches_direct_recursion() {
        for &(l1, l2, mu1, mu2) in &[(0.3, 0.3, 1.0, 1.0), (0.05, 0.4, 0.2, 0.9), (0.2, 0.1, 0.5, 2.0)] {
            let s = sys(&[l1, l2], &[mu1, mu2]);
            let g = &level1_g(&s, 60)[0];
            let direct = two_class_direct(l1, l2, mu2, 61);
            for (a, b) in g.data().iter().zip(&direct) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn level_one_tables_are_pmfs() {
        let s = sys(&[0.1, 0.2, 0.3], &[0.5, 1.0, 1.5]);
        for g in level1_g(&s, 400) {
            assert!(g.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!((g.sum() - 1.0).abs() < 1e-12, "{}", g.sum());
        }
    }

    #[test]
    fn level_one_f_is_tail() {
        let s = sys(&[0.1, 0.2, 0.3], &[0.5, 1.0, 1.5]);
        let g = level1_g(&s, 30);
        let f = compute_f_tables(&s, 1, &g, None).unwrap();
        for (gk, fk) in g.iter().zip(&f) {
            assert_eq!(fk.data()[0], 1.0);
            assert_eq!(fk.data()[1], 1.0 - gk.data()[0]);
            for w in fk.data().windows(2) {
                assert!(w[1] <= w[0]);
            }
        }
    }

    #[test]
    fn single_f_table_picks_class() {
        let s = sys(&[0.1, 0.2, 0.3], &[0.5, 1.0, 1.5]);
        let g = level1_g(&s, 10);
        let all = compute_f_tables(&s, 1, &g, None).unwrap();
        let one = compute_f_table(&s, 1, all[1].class, &g, None).unwrap();
        assert_eq!(one.data(), all[1].data());
        assert!(compute_f_table(&s, 1, 9, &g, None).is_err());
    }

    #[test]
    fn missing_seed_and_dependency() {
        let s = sys(&[0.1, 0.2, 0.3], &[0.5, 1.0, 1.5]);
        assert!(matches!(
            compute_g_tables(&s, 1, &[3], &[0.5]),
            Err(Error::MissingSeed { level: 1, .. })
        ));
        let seeds = g_zero_all(&s, 2).unwrap();
        let g2 = compute_g_tables(&s, 2, &[3, 3], &seeds).unwrap();
        assert!(matches!(
            compute_f_tables(&s, 2, &g2, None),
            Err(Error::MissingDependency(_))
        ));
        let g1_short = level1_g(&s, 2);
        assert!(matches!(
            compute_f_tables(&s, 2, &g2, Some(&g1_short)),
            Err(Error::MissingDependency(_))
        ));
        assert!(compute_g_tables(&s, 3, &[1, 1, 1], &[]).is_err());
    }

    /// Marginalizing the level-2 table over class-2 counts leaves the class-1
    /// count during a pure class-3 busy period, i.e. the level-1 table of the
    /// system without class 2.
    #[test]
    fn marginal_over_middle_class_matches_reduced_system() {
        let s = sys(&[0.1, 0.15, 0.25], &[1.0, 0.8, 1.2]);
        let seeds = g_zero_all(&s, 2).unwrap();
        let g3 = &compute_g_tables(&s, 2, &[200, 8], &seeds).unwrap()[0];
        let reduced = sys(&[0.1, 0.25], &[1.0, 1.2]);
        let g_red = &level1_g(&reduced, 8)[0];
        for i1 in 0..=8 {
            let m: f64 = (0..=200).map(|i2| g3.get(&MultiIndex::new(vec![i2, i1]))).sum();
            assert!((m - g_red.data()[i1]).abs() < 1e-12, "i1={i1}: {m} vs {}", g_red.data()[i1]);
        }
    }

    #[test]
    fn f_dominates_g_and_boundary_slice() {
        let s = sys(&[0.1, 0.15, 0.25, 0.1], &[1.0, 0.8, 1.2, 2.0]);
        let set = PassageSet::build(&s, &[6, 5, 4, 3]).unwrap();
        for n in 1..4 {
            for k in n + 1..=4 {
                let g = set.g(n, k).unwrap();
                let f = set.f(n, k).unwrap();
                for (a, b) in f.data().iter().zip(g.data()) {
                    assert!(*a >= *b - 1e-15);
                    assert!((0.0..=1.0).contains(a) && (0.0..=1.0).contains(b));
                }
                if n >= 2 {
                    let prev = set.g(n - 1, k).unwrap();
                    let slice = prev.data().len();
                    assert_eq!(&f.data()[..slice], prev.data());
                }
            }
        }
        assert_eq!(
            set.g(2, 3).unwrap().data()[0],
            g_zero(&s, 2, 3).unwrap()
        );
    }

    #[test]
    fn multi_index_helpers() {
        let e = MultiIndex::unit(3, 1);
        assert_eq!(e.components(), &[0, 0, 1]);
        assert_eq!(MultiIndex::unit(3, 3).components(), &[1, 0, 0]);
        let i = MultiIndex::new(vec![2, 0, 4]);
        assert_eq!(i.class_component(1), 4);
        assert_eq!(i.checked_sub(&e), Some(MultiIndex::new(vec![2, 0, 3])));
        assert_eq!(i.checked_sub(&MultiIndex::unit(3, 2)), None);
        assert_eq!(i.to_string(), "(2,0,4)");
        assert_eq!(MultiIndex::zero(2).total(), 0);
    }

    #[test]
    fn csv_dump() {
        let s = sys(&[0.3, 0.3], &[1.0, 1.0]);
        let g = &level1_g(&s, 2)[0];
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "i_1,value");
        assert_eq!(lines.len(), 4);
        let v: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(v, g.data()[0]);
    }
}
