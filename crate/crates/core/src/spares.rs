//! Spare-parts availability on top of the joint queue-length distribution.
//!
//! `M` machines each carry, per SKU `n`, a `k_n`-out-of-`Z_n` subsystem. Failed
//! parts queue at a single repair shop where SKUs are served under the
//! priority assignment. With `q_n` parts of SKU `n` in repair and basestock
//! `S_n`, there are `(q_n - S_n)^+` backorders, spread uniformly over the
//! `M * Z_n` slots of the fleet.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::equilibrium::{marginal, JointDistribution};
use crate::error::{Error, Result};
use crate::model::PrioritySystem;
use crate::truncation::build_cuboid;

/// One stock-keeping unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sku {
    /// `Z`: parts per machine.
    pub parts_per_machine: usize,
    /// `k`: parts that must function.
    pub required: usize,
    /// `S`: initial stock.
    pub basestock: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparePartsScenario {
    machines: usize,
    skus: Vec<Sku>,
    /// Priority rank of each SKU (1 = lowest).
    priority_assignment: Vec<usize>,
}

impl SparePartsScenario {
    pub fn new(machines: usize, skus: Vec<Sku>, priority_assignment: Vec<usize>) -> Result<Self> {
        if machines == 0 {
            return Err(Error::InvalidScenario("need at least one machine".into()));
        }
        if skus.is_empty() {
            return Err(Error::InvalidScenario("need at least one SKU".into()));
        }
        for (i, s) in skus.iter().enumerate() {
            if s.required >= s.parts_per_machine {
                return Err(Error::InvalidScenario(format!(
                    "SKU {}: required {} must be below parts per machine {}",
                    i + 1,
                    s.required,
                    s.parts_per_machine
                )));
            }
        }
        let n = skus.len();
        let mut seen = vec![false; n];
        if priority_assignment.len() != n {
            return Err(Error::InvalidScenario("one priority per SKU".into()));
        }
        for &r in &priority_assignment {
            if r == 0 || r > n || seen[r - 1] {
                return Err(Error::InvalidScenario(format!(
                    "priority assignment {priority_assignment:?} is not a permutation of 1..={n}"
                )));
            }
            seen[r - 1] = true;
        }
        Ok(Self {
            machines,
            skus,
            priority_assignment,
        })
    }

    pub fn machines(&self) -> usize {
        self.machines
    }

    pub fn skus(&self) -> &[Sku] {
        &self.skus
    }

    pub fn priority_assignment(&self) -> &[usize] {
        &self.priority_assignment
    }

    /// Priority rank of SKU `i` (0-based SKU index).
    pub fn rank_of(&self, sku: usize) -> usize {
        self.priority_assignment[sku]
    }

    pub fn with_basestock(mut self, basestock: &[usize]) -> Self {
        assert_eq!(basestock.len(), self.skus.len());
        for (s, &b) in self.skus.iter_mut().zip(basestock) {
            s.basestock = b;
        }
        self
    }
}

/// Priority label for a rank: `L`/`M`/`H` with three classes, the rank
/// number otherwise.
pub fn rank_label(rank: usize, num_classes: usize) -> String {
    match (num_classes, rank) {
        (3, 1) => "L".into(),
        (3, 2) => "M".into(),
        (3, 3) => "H".into(),
        (2, 1) => "L".into(),
        (2, 2) => "H".into(),
        _ => rank.to_string(),
    }
}

/// Inverse of [`rank_label`]; also accepts plain rank numbers.
pub fn parse_rank(label: &str, num_classes: usize) -> Result<usize> {
    let label = label.trim();
    let rank = match label.to_ascii_uppercase().as_str() {
        "H" => num_classes,
        "L" => 1,
        "M" if num_classes == 3 => 2,
        other => other
            .parse::<usize>()
            .map_err(|_| Error::InvalidScenario(format!("unknown priority label {label:?}")))?,
    };
    if rank == 0 || rank > num_classes {
        return Err(Error::InvalidScenario(format!(
            "priority {label:?} outside 1..={num_classes}"
        )));
    }
    Ok(rank)
}

/// `Prob{E = s | q parts in repair}` for `s = 0..=Z`, where `E` counts empty
/// slots of one SKU on one given machine.
///
/// With `b = q - S` backorders (`b <= 0` means no empty slot) spread over the
/// `M * Z` slots, `E` is hypergeometric:
/// `C(Z, s) C(Z(M-1), b-s) / C(MZ, b)`. Terms are built from successive ratios
/// in log space and normalized, so nothing overflows at fleet sizes where the
/// binomials do. More backorders than slots leaves every slot empty.
pub fn empty_slot_pmf(z: usize, machines: usize, basestock: usize, q: usize) -> Vec<f64> {
    assert!(z >= 1 && machines >= 1);
    let mut pmf = vec![0.0; z + 1];
    if q <= basestock {
        pmf[0] = 1.0;
        return pmf;
    }
    let slots = machines * z;
    let b = (q - basestock).min(slots);
    let others = slots - z;
    let lo = b.saturating_sub(others);
    let hi = z.min(b);
    if let Some(total) = binomial(slots, b).filter(|&t| t <= EXACT_LIMIT) {
        // every count is an integer below 2^53, so each entry is one rounding
        for s in lo..=hi {
            let ways = binomial(z, s).unwrap() * binomial(others, b - s).unwrap();
            pmf[s] = ways as f64 / total as f64;
        }
        return pmf;
    }
    log_ratio_fill(&mut pmf, z, others, b);
    pmf
}

fn log_ratio_fill(pmf: &mut [f64], z: usize, others: usize, b: usize) {
    let lo = b.saturating_sub(others);
    let hi = z.min(b);
    let mut logs = Vec::with_capacity(hi - lo + 1);
    let mut acc = 0.0f64;
    logs.push(acc);
    for s in lo..hi {
        let (zs, bs) = ((z - s) as f64, (b - s) as f64);
        acc += zs.ln() - ((s + 1) as f64).ln() + bs.ln() - ((others + s + 1 - b) as f64).ln();
        logs.push(acc);
    }
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    for (s, w) in (lo..=hi).zip(weights) {
        pmf[s] = w / total;
    }
}

const EXACT_LIMIT: u128 = 1 << 53;

fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i + 1) as u128;
    }
    Some(acc)
}

/// Probability that one machine's subsystem for this SKU still works.
fn subsystem_up(sku: &Sku, machines: usize, q: usize) -> f64 {
    let pmf = empty_slot_pmf(sku.parts_per_machine, machines, sku.basestock, q);
    pmf[..=sku.parts_per_machine - sku.required].iter().sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvailabilityResult {
    /// Availability counting out-of-cuboid mass as machines down.
    pub availability: f64,
    /// Availability counting out-of-cuboid mass as machines up.
    pub upper_bound: f64,
    /// Mean number in repair per SKU.
    pub mean_queue_lengths: Vec<f64>,
    pub captured_mass: f64,
    pub mass_deficit: bool,
}

/// Fraction of working machines,
/// `sum_state prod_n Prob{E_n <= Z_n - k_n | q_n} p(state)`.
pub fn availability(joint: &JointDistribution, scenario: &SparePartsScenario) -> Result<AvailabilityResult> {
    let big_n = joint.system().num_classes();
    if scenario.skus.len() != big_n {
        return Err(Error::InvalidScenario(format!(
            "{} SKUs for a {big_n}-class system",
            scenario.skus.len()
        )));
    }
    let grid = joint.probabilities();
    // factor tables indexed by state position (q_N first)
    let factors: Vec<Vec<f64>> = (0..big_n)
        .map(|pos| {
            let rank = big_n - pos;
            let sku_idx = scenario
                .priority_assignment
                .iter()
                .position(|&r| r == rank)
                .expect("assignment is a permutation");
            let sku = &scenario.skus[sku_idx];
            (0..grid.extents()[pos])
                .map(|q| subsystem_up(sku, scenario.machines, q))
                .collect()
        })
        .collect();
    let mut terms = Vec::with_capacity(grid.len());
    let mut idx = vec![0usize; big_n];
    for &p in grid.data() {
        let up: f64 = idx.iter().zip(&factors).map(|(&q, f)| f[q]).product();
        terms.push(up * p);
        // advance row-major index
        for d in (0..big_n).rev() {
            idx[d] += 1;
            if idx[d] < grid.extents()[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    let a = crate::grid::neumaier_sum(terms);
    let captured = joint.captured_mass();
    let means = (0..big_n)
        .map(|i| marginal(joint, scenario.rank_of(i)).mean)
        .collect();
    Ok(AvailabilityResult {
        availability: a,
        upper_bound: a + (1.0 - captured).max(0.0),
        mean_queue_lengths: means,
        captured_mass: captured,
        mass_deficit: joint.check_mass(joint.cuboid().epsilon()).is_err(),
    })
}

/// `S_n = floor(E[Q_n])` per SKU.
pub fn basestock_from_means(joint: &JointDistribution, priority_assignment: &[usize]) -> Vec<usize> {
    priority_assignment
        .iter()
        .map(|&rank| marginal(joint, rank).mean.floor() as usize)
        .collect()
}

/// The three-SKU repair-shop experiment: `lambda_n = n / 300`,
/// `mu_n = (4 - n) / beta` with `beta` chosen so the load is `rho`;
/// `M = 100`, `Z_n = 4`, `k_n = 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Experiment {
    rho: f64,
    beta: f64,
}

pub const EXPERIMENT_MACHINES: usize = 100;
pub const EXPERIMENT_SKU: Sku = Sku {
    parts_per_machine: 4,
    required: 2,
    basestock: 0,
};

impl Experiment {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::Unstable { rho });
        }
        Ok(Self {
            rho,
            beta: 900.0 * rho / 13.0,
        })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `(lambda, mu)` of SKU `sku` (1-based).
    pub fn sku_rates(&self, sku: usize) -> (f64, f64) {
        (sku as f64 / 300.0, (4 - sku) as f64 / self.beta)
    }

    /// Priority system for an assignment of ranks to SKUs 1..=3.
    pub fn system(&self, priority_assignment: &[usize]) -> Result<PrioritySystem> {
        let n = priority_assignment.len();
        if n != 3 {
            return Err(Error::InvalidScenario("the experiment has three SKUs".into()));
        }
        let mut lambdas = vec![0.0; n];
        let mut mus = vec![0.0; n];
        for (i, &rank) in priority_assignment.iter().enumerate() {
            if rank == 0 || rank > n {
                return Err(Error::InvalidScenario(format!("rank {rank} out of range")));
            }
            let (l, m) = self.sku_rates(i + 1);
            lambdas[rank - 1] = l;
            mus[rank - 1] = m;
        }
        PrioritySystem::new(lambdas, mus)
    }

    pub fn scenario(&self, priority_assignment: &[usize]) -> Result<SparePartsScenario> {
        SparePartsScenario::new(
            EXPERIMENT_MACHINES,
            vec![EXPERIMENT_SKU; 3],
            priority_assignment.to_vec(),
        )
    }
}

/// System and scenario (basestock still zero) for the experiment.
pub fn experiment_system(rho: f64, priority_assignment: &[usize]) -> Result<(PrioritySystem, SparePartsScenario)> {
    let e = Experiment::new(rho)?;
    Ok((e.system(priority_assignment)?, e.scenario(priority_assignment)?))
}

/// Priority assignments in table order (ranks of SKUs 1, 2, 3).
pub const TABLE_ASSIGNMENTS: [[usize; 3]; 6] = [
    [3, 2, 1],
    [3, 1, 2],
    [2, 3, 1],
    [2, 1, 3],
    [1, 3, 2],
    [1, 2, 3],
];

pub const TABLE_UTILIZATIONS: [f64; 2] = [0.90, 0.95];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub rho: f64,
    pub priorities: Vec<String>,
    pub mean_queue_lengths: Vec<f64>,
    pub basestock: Vec<usize>,
    pub availability: f64,
    pub captured_mass: f64,
    /// `c_1..c_N` of the cuboid used.
    pub bounds: Vec<usize>,
    pub seconds: f64,
}

impl TableRow {
    pub const CSV_HEADER: &'static str =
        "rho,r1,r2,r3,mean1,mean2,mean3,S1,S2,S3,availability,captured_mass,seconds";

    pub fn csv_line(&self, timings: bool) -> String {
        let mut cols = vec![format!("{:.2}", self.rho)];
        cols.extend(self.priorities.iter().cloned());
        cols.extend(self.mean_queue_lengths.iter().map(|m| format!("{m:.4}")));
        cols.extend(self.basestock.iter().map(|s| s.to_string()));
        cols.push(format!("{:.4}", self.availability));
        cols.push(format!("{:.10}", self.captured_mass));
        cols.push(if timings {
            format!("{:.2}", self.seconds)
        } else {
            String::new()
        });
        cols.join(",")
    }
}

/// Means, basestock `floor(E[Q_n])` and availability for one utilization and
/// priority assignment.
pub fn experiment_row(rho: f64, priority_assignment: &[usize], epsilon: f64, state_cap: u128) -> Result<TableRow> {
    let start = Instant::now();
    let (system, scenario) = experiment_system(rho, priority_assignment)?;
    let (cuboid, joint) = build_cuboid(&system, epsilon, state_cap)?;
    let basestock = basestock_from_means(&joint, priority_assignment);
    let scenario = scenario.with_basestock(&basestock);
    let result = availability(&joint, &scenario)?;
    Ok(TableRow {
        rho,
        priorities: priority_assignment.iter().map(|&r| rank_label(r, 3)).collect(),
        mean_queue_lengths: result.mean_queue_lengths,
        basestock,
        availability: result.availability,
        captured_mass: result.captured_mass,
        bounds: cuboid.bounds().to_vec(),
        seconds: start.elapsed().as_secs_f64(),
    })
}
