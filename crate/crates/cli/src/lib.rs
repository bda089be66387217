//! `prioq`: joint queue-length distributions of the preemptive priority
//! M/M/1 queue, spare-parts availability, and oracle checks.
//!
//! Exit codes: 0 success, 1 bad input, 2 cuboid misses more than `epsilon`,
//! 3 the recursion disagrees with its oracles.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use prio_core::oracle::{simulate, solve_truncated_ctmc, DEFAULT_BAND_CAP};
use prio_core::spares::{
    availability, basestock_from_means, experiment_row, parse_rank, rank_label, Experiment, Sku,
    SparePartsScenario, TableRow, TABLE_ASSIGNMENTS, TABLE_UTILIZATIONS,
};
use prio_core::truncation::DEFAULT_STATE_CAP;
use prio_core::{
    build_cuboid, compute_joint, solve, validate, JointDistribution, MultiIndex, PassageSet,
    PrioritySystem, TruncationCuboid,
};

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_VALIDATE_EPSILON: f64 = 1e-10;
pub const DEFAULT_SEED: u64 = 20_240_501;
/// Family-wise false-alarm rate of the simulation check in `validate`.
pub const VALIDATE_FAMILY_ALPHA: f64 = 1e-3;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_MASS_DEFICIT: i32 = 2;
pub const EXIT_ORACLE_MISMATCH: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "prioq",
    version,
    about = "Joint queue lengths of the preemptive priority M/M/1 queue"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub options: RunConfig,
}

#[derive(Debug, Clone, Args)]
pub struct RunConfig {
    /// Probability mass allowed outside the truncation cuboid
    /// [default: the config's value, else 1e-6; 1e-10 for validate]
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Csv, global = true)]
    pub format: Format,
    /// Output file (a directory for `dump-passage --format csv`); stdout if absent
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SEED, global = true)]
    pub seed: u64,
    /// Largest cuboid, in states, the solver may build
    #[arg(long, default_value_t = DEFAULT_STATE_CAP as u64, global = true)]
    pub state_cap: u64,
    /// Leave timing columns empty so output is byte-reproducible
    #[arg(long, global = true)]
    pub no_timings: bool,
    /// Diagnostics on stderr; repeat for more
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Joint equilibrium distribution of a priority system
    Distribution {
        /// System JSON: {"arrival_rates": [...], "service_rates": [...]}
        config: PathBuf,
        /// Explicit cuboid bounds c_1,...,c_N instead of building one from epsilon
        #[arg(long, value_delimiter = ',')]
        bounds: Option<Vec<usize>>,
    },
    /// Machine availability for a spare-parts scenario
    Availability {
        /// Scenario JSON: {"machines", "skus": [{"Z","k","S","priority"}], "rho"}
        scenario: PathBuf,
    },
    /// The utilization x priority-assignment experiment (12 rows)
    Table1 {
        /// Only these utilizations
        #[arg(long, value_delimiter = ',')]
        rho: Vec<f64>,
        /// Only these assignments, written as SKU 1..3 labels, e.g. HML
        #[arg(long, value_delimiter = ',')]
        priorities: Vec<String>,
    },
    /// Compare the recursion with the truncated-chain solve and a simulation
    Validate {
        /// System JSON; a two-class system at load 0.6 if absent
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        replications: usize,
        /// Simulated events to aim for, over all replications
        #[arg(long, default_value_t = 2_000_000)]
        events: u64,
        /// Negative control: damage one g-table entry before the recursion
        #[arg(long, hide = true)]
        corrupt_g_table: bool,
    },
    /// Export the first-passage tables g and f
    DumpPassage {
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        bounds: Option<Vec<usize>>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("invalid JSON in {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Core(#[from] prio_core::Error),
    #[error("write failed: {0}")]
    Io(#[from] io::Error),
    #[error("mass deficit: {0}")]
    MassDeficit(String),
    #[error("oracle mismatch: {0}")]
    OracleMismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::MassDeficit(_) | CliError::Core(prio_core::Error::MassDeficit { .. }) => EXIT_MASS_DEFICIT,
            CliError::OracleMismatch(_) => EXIT_ORACLE_MISMATCH,
            _ => EXIT_INPUT,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// System config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub arrival_rates: Vec<f64>,
    pub service_rates: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Priority {
    Rank(usize),
    Label(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkuConfig {
    #[serde(rename = "Z")]
    pub z: usize,
    pub k: usize,
    /// Basestock; `floor(E[Q])` when absent.
    #[serde(rename = "S", default)]
    pub s: Option<usize>,
    pub priority: Priority,
}

/// Spare-parts scenario file. Rates come either from `rho` (the three-SKU
/// experiment) or from per-SKU `arrival_rates` / `service_rates`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub machines: usize,
    pub skus: Vec<SkuConfig>,
    #[serde(default)]
    pub rho: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub arrival_rates: Option<Vec<f64>>,
    #[serde(default)]
    pub service_rates: Option<Vec<f64>>,
}

/// Parses arguments (exit 1 on usage errors) and runs the command.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli, stdout, stderr),
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                EXIT_INPUT
            } else {
                let _ = write!(stdout, "{}", e.render());
                EXIT_OK
            }
        }
    }
}

pub fn run(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Distribution { config, bounds } => cmd_distribution(&cli.options, config, bounds.as_deref(), stdout, stderr),
        Command::Availability { scenario } => cmd_availability(&cli.options, scenario, stdout, stderr),
        Command::Table1 { rho, priorities } => cmd_table1(&cli.options, rho, priorities, stdout, stderr),
        Command::Validate {
            config,
            replications,
            events,
            corrupt_g_table,
        } => cmd_validate(
            &cli.options,
            config.as_deref(),
            *replications,
            *events,
            *corrupt_g_table,
            stdout,
            stderr,
        ),
        Command::DumpPassage { config, bounds } => cmd_dump_passage(&cli.options, config, bounds.as_deref(), stdout, stderr),
    };
    match result {
        Ok(code) => code,
        Err(CliError::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

fn load_system(path: &Path) -> CliResult<(PrioritySystem, Option<f64>)> {
    let cfg: SystemConfig = read_json(path)?;
    let system = PrioritySystem::new(cfg.arrival_rates, cfg.service_rates)?;
    Ok((system, cfg.epsilon))
}

fn check_epsilon(eps: f64) -> CliResult<f64> {
    if eps > 0.0 && eps < 1.0 {
        Ok(eps)
    } else {
        Err(CliError::Input(format!("epsilon must lie in (0, 1), got {eps}")))
    }
}

/// Output sink: `--out` if given, stdout otherwise.
fn sink<'a>(opts: &RunConfig, stdout: &'a mut dyn Write) -> CliResult<Box<dyn Write + 'a>> {
    Ok(match &opts.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(stdout),
    })
}

/// Cuboid for `epsilon`, with running out of states reported as a mass deficit.
fn build(system: &PrioritySystem, eps: f64, opts: &RunConfig) -> CliResult<(TruncationCuboid, JointDistribution)> {
    build_cuboid(system, eps, opts.state_cap as u128).map_err(|e| match e {
        prio_core::Error::BudgetExceeded { size, cap } => CliError::MassDeficit(format!(
            "capturing 1 - {eps:e} needs a cuboid of {size} states, above the cap of {cap} (--state-cap)"
        )),
        other => other.into(),
    })
}

fn joint_for(
    system: &PrioritySystem,
    eps: f64,
    bounds: Option<&[usize]>,
    opts: &RunConfig,
) -> CliResult<(TruncationCuboid, JointDistribution)> {
    match bounds {
        None => build(system, eps, opts),
        Some(b) => {
            if b.len() != system.num_classes() {
                return Err(CliError::Input(format!(
                    "--bounds has {} entries for {} classes",
                    b.len(),
                    system.num_classes()
                )));
            }
            let cuboid = TruncationCuboid::new(b.to_vec(), eps)?;
            if cuboid.state_count() > opts.state_cap as u128 {
                return Err(prio_core::Error::BudgetExceeded {
                    size: cuboid.state_count(),
                    cap: opts.state_cap as u128,
                }
                .into());
            }
            let joint = solve(system, &cuboid)?;
            Ok((cuboid, joint))
        }
    }
}

fn describe(joint: &JointDistribution, stderr: &mut dyn Write, verbose: u8) -> io::Result<()> {
    if verbose == 0 {
        return Ok(());
    }
    let c = joint.cuboid();
    writeln!(
        stderr,
        "cuboid c_1..c_N = {:?}, {} states, captured mass {:.12}",
        c.bounds(),
        c.state_count(),
        joint.captured_mass()
    )?;
    if verbose > 1 {
        let d = joint.diagnostics();
        writeln!(
            stderr,
            "clamped negatives {}, min f - g {:e}, worst relative cancellation per level {:?}",
            d.clamped_negatives, d.min_f_minus_g, d.worst_cancellation
        )?;
    }
    Ok(())
}

pub fn cmd_distribution(
    opts: &RunConfig,
    config: &Path,
    bounds: Option<&[usize]>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> CliResult<i32> {
    let (system, cfg_eps) = load_system(config)?;
    let eps = check_epsilon(opts.epsilon.or(cfg_eps).unwrap_or(DEFAULT_EPSILON))?;
    let (cuboid, joint) = joint_for(&system, eps, bounds, opts)?;
    describe(&joint, stderr, opts.verbose)?;
    let mut out = sink(opts, stdout)?;
    match opts.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &joint.to_document()).map_err(io::Error::from)?;
            writeln!(out)?;
        }
        Format::Csv => {
            let high_first: Vec<String> = cuboid.bounds().iter().rev().map(|c| c.to_string()).collect();
            writeln!(out, "# bounds c_N..c_1: {}", high_first.join(","))?;
            writeln!(out, "# epsilon: {eps:e}")?;
            writeln!(out, "# captured_mass: {:.16e}", joint.captured_mass())?;
            joint.write_csv(&mut out)?;
        }
    }
    out.flush()?;
    match joint.check_mass(eps) {
        Ok(()) => Ok(EXIT_OK),
        Err(e) => {
            writeln!(stderr, "warning: {e}")?;
            Ok(EXIT_MASS_DEFICIT)
        }
    }
}

#[derive(Debug, Serialize)]
struct AvailabilityReport {
    rho: f64,
    priorities: Vec<String>,
    mean_queue_lengths: Vec<f64>,
    basestock: Vec<usize>,
    availability: f64,
    availability_upper: f64,
    captured_mass: f64,
    /// `c_1..c_N`
    bounds: Vec<usize>,
}

fn scenario_system(cfg: &ScenarioConfig, assignment: &[usize]) -> CliResult<PrioritySystem> {
    let n = cfg.skus.len();
    match (&cfg.arrival_rates, &cfg.service_rates, cfg.rho) {
        (Some(l), Some(m), None) => {
            if l.len() != n || m.len() != n {
                return Err(CliError::Input("one arrival and service rate per SKU".into()));
            }
            let mut lambdas = vec![0.0; n];
            let mut mus = vec![0.0; n];
            for (i, &r) in assignment.iter().enumerate() {
                lambdas[r - 1] = l[i];
                mus[r - 1] = m[i];
            }
            Ok(PrioritySystem::new(lambdas, mus)?)
        }
        (None, None, Some(rho)) => Ok(Experiment::new(rho)?.system(assignment)?),
        _ => Err(CliError::Input(
            "give either rho (three-SKU experiment) or both arrival_rates and service_rates".into(),
        )),
    }
}

pub fn cmd_availability(
    opts: &RunConfig,
    path: &Path,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> CliResult<i32> {
    let cfg: ScenarioConfig = read_json(path)?;
    let n = cfg.skus.len();
    let assignment = cfg
        .skus
        .iter()
        .map(|s| match &s.priority {
            Priority::Rank(r) => parse_rank(&r.to_string(), n),
            Priority::Label(l) => parse_rank(l, n),
        })
        .collect::<prio_core::Result<Vec<_>>>()?;
    let skus: Vec<Sku> = cfg
        .skus
        .iter()
        .map(|s| Sku {
            parts_per_machine: s.z,
            required: s.k,
            basestock: s.s.unwrap_or(0),
        })
        .collect();
    let scenario = SparePartsScenario::new(cfg.machines, skus, assignment.clone())?;
    let system = scenario_system(&cfg, &assignment)?;
    let eps = check_epsilon(opts.epsilon.or(cfg.epsilon).unwrap_or(DEFAULT_EPSILON))?;
    let (cuboid, joint) = build(&system, eps, opts)?;
    describe(&joint, stderr, opts.verbose)?;

    let from_means = basestock_from_means(&joint, &assignment);
    let basestock: Vec<usize> = cfg
        .skus
        .iter()
        .zip(&from_means)
        .map(|(s, m)| s.s.unwrap_or(*m))
        .collect();
    let scenario = scenario.with_basestock(&basestock);
    let result = availability(&joint, &scenario)?;
    let report = AvailabilityReport {
        rho: system.utilization(),
        priorities: assignment.iter().map(|&r| rank_label(r, n)).collect(),
        mean_queue_lengths: result.mean_queue_lengths.clone(),
        basestock,
        availability: result.availability,
        availability_upper: result.upper_bound,
        captured_mass: result.captured_mass,
        bounds: cuboid.bounds().to_vec(),
    };

    let mut out = sink(opts, stdout)?;
    match opts.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &report).map_err(io::Error::from)?;
            writeln!(out)?;
        }
        Format::Csv => {
            let mut header = vec!["rho".to_string()];
            header.extend((1..=n).map(|i| format!("r{i}")));
            header.extend((1..=n).map(|i| format!("mean{i}")));
            header.extend((1..=n).map(|i| format!("S{i}")));
            header.extend(["availability", "availability_upper", "captured_mass"].map(String::from));
            writeln!(out, "{}", header.join(","))?;
            let mut row = vec![format!("{:.4}", report.rho)];
            row.extend(report.priorities.iter().cloned());
            row.extend(report.mean_queue_lengths.iter().map(|m| format!("{m:.6}")));
            row.extend(report.basestock.iter().map(|s| s.to_string()));
            row.push(format!("{:.8}", report.availability));
            row.push(format!("{:.8}", report.availability_upper));
            row.push(format!("{:.10}", report.captured_mass));
            writeln!(out, "{}", row.join(","))?;
        }
    }
    out.flush()?;
    Ok(if result.mass_deficit { EXIT_MASS_DEFICIT } else { EXIT_OK })
}

fn parse_assignment(label: &str) -> CliResult<[usize; 3]> {
    let chars: Vec<String> = label.chars().map(|c| c.to_string()).collect();
    if chars.len() != 3 {
        return Err(CliError::Input(format!("priorities {label:?}: one label per SKU, e.g. HML")));
    }
    let mut out = [0; 3];
    for (o, c) in out.iter_mut().zip(&chars) {
        *o = parse_rank(c, 3)?;
    }
    let mut sorted = out;
    sorted.sort();
    if sorted != [1, 2, 3] {
        return Err(CliError::Input(format!("priorities {label:?} repeat a rank")));
    }
    Ok(out)
}

pub fn cmd_table1(
    opts: &RunConfig,
    rhos: &[f64],
    priorities: &[String],
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> CliResult<i32> {
    let eps = check_epsilon(opts.epsilon.unwrap_or(DEFAULT_EPSILON))?;
    let rhos: Vec<f64> = if rhos.is_empty() { TABLE_UTILIZATIONS.to_vec() } else { rhos.to_vec() };
    let assignments: Vec<[usize; 3]> = if priorities.is_empty() {
        TABLE_ASSIGNMENTS.to_vec()
    } else {
        priorities.iter().map(|p| parse_assignment(p)).collect::<CliResult<_>>()?
    };
    let mut rows: Vec<TableRow> = Vec::new();
    for &rho in &rhos {
        for a in &assignments {
            let row = experiment_row(rho, a, eps, opts.state_cap as u128).map_err(|e| match e {
                prio_core::Error::BudgetExceeded { size, cap } => {
                    CliError::MassDeficit(format!("row needs {size} states, cap {cap}"))
                }
                other => other.into(),
            })?;
            if opts.verbose > 0 {
                writeln!(stderr, "rho {rho:.2} {}: bounds {:?}", row.priorities.join(""), row.bounds)?;
            }
            rows.push(row);
        }
    }
    let mut out = sink(opts, stdout)?;
    match opts.format {
        Format::Csv => {
            writeln!(out, "{}", TableRow::CSV_HEADER)?;
            for r in &rows {
                writeln!(out, "{}", r.csv_line(!opts.no_timings))?;
            }
        }
        Format::Json => {
            let mut values = Vec::with_capacity(rows.len());
            for r in &rows {
                let mut v = serde_json::to_value(r).map_err(io::Error::from)?;
                if opts.no_timings {
                    v.as_object_mut().expect("row is an object").remove("seconds");
                }
                values.push(v);
            }
            serde_json::to_writer_pretty(&mut out, &values).map_err(io::Error::from)?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
pub struct ValidationReport {
    pub bounds: Vec<usize>,
    pub states: u128,
    pub epsilon: f64,
    pub total_variation: f64,
    pub total_variation_threshold: f64,
    pub simulated_events: u64,
    pub compared_states: usize,
    pub worst_z: f64,
    pub worst_z_at: String,
    pub z_threshold: f64,
    pub seed: u64,
    pub passed: bool,
}

fn default_validation_system() -> PrioritySystem {
    PrioritySystem::new(vec![0.3, 0.3], vec![1.0, 1.0]).expect("stable")
}

pub fn cmd_validate(
    opts: &RunConfig,
    config: Option<&Path>,
    replications: usize,
    events: u64,
    corrupt: bool,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> CliResult<i32> {
    let (system, cfg_eps) = match config {
        Some(p) => load_system(p)?,
        None => (default_validation_system(), None),
    };
    let rho = validate(&system)?;
    let eps = check_epsilon(opts.epsilon.or(cfg_eps).unwrap_or(DEFAULT_VALIDATE_EPSILON))?;
    if replications < 1 || events == 0 {
        return Err(CliError::Input("need at least one replication and one event".into()));
    }
    let (cuboid, mut joint) = build(&system, eps, opts)?;
    if corrupt {
        let big_n = system.num_classes();
        if big_n < 2 {
            return Err(CliError::Input("the g-table hook needs two or more classes".into()));
        }
        let mut tables = PassageSet::build(&system, cuboid.bounds())?;
        let g = tables.g_mut(big_n - 1, big_n).expect("table exists");
        let origin = MultiIndex::zero(big_n - 1);
        let v = g.get(&origin);
        g.set(&origin, 0.5 * v);
        joint = match compute_joint(&system, &cuboid, &tables) {
            Ok(j) => j,
            Err(e) => return Err(CliError::OracleMismatch(format!("recursion failed on corrupted tables: {e}"))),
        };
    }
    describe(&joint, stderr, opts.verbose)?;

    let ctmc = solve_truncated_ctmc(&system, &cuboid, DEFAULT_BAND_CAP).map_err(|e| match e {
        prio_core::Error::BudgetExceeded { .. } => CliError::Input(format!(
            "cuboid {:?} is too large for the stationary solve ({e}); try a larger --epsilon",
            cuboid.bounds()
        )),
        other => other.into(),
    })?;
    let tv = joint.total_variation(&ctmc);
    let tv_threshold = (100.0 * eps).max(1e-8);

    // about two events per customer
    let rate = 2.0 * system.total_arrival_rate();
    let measure = events as f64 / rate / replications as f64;
    let est = simulate(&system, measure / 10.0, measure, replications, opts.seed)?;
    let grid = joint.probabilities();
    let mut scores: Vec<(f64, String)> = Vec::new();
    for (i, &p) in grid.data().iter().enumerate() {
        if p > 1e-4 {
            let state = grid.unflat(i);
            let z = est.state(&state).map_or(f64::INFINITY, |e| e.probability.z_score(p));
            scores.push((z, format!("state {state:?}")));
        }
    }
    let compared_states = scores.len();
    for (n, (m, e)) in joint.mean_queue_lengths().iter().zip(&est.mean_queue_lengths).enumerate() {
        scores.push((e.z_score(*m), format!("class {} mean", n + 1)));
    }
    scores.push((est.empty_fraction.z_score(1.0 - rho), "empty fraction".into()));
    let (worst_z, worst_z_at) = scores
        .iter()
        .cloned()
        .fold((0.0, String::new()), |acc, s| if s.0 > acc.0 || s.0.is_nan() { s } else { acc });
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let z_threshold = normal.inverse_cdf(1.0 - VALIDATE_FAMILY_ALPHA / (2.0 * scores.len() as f64));
    let passed = tv <= tv_threshold && worst_z <= z_threshold;

    let report = ValidationReport {
        bounds: cuboid.bounds().to_vec(),
        states: cuboid.state_count(),
        epsilon: eps,
        total_variation: tv,
        total_variation_threshold: tv_threshold,
        simulated_events: est.events,
        compared_states,
        worst_z,
        worst_z_at,
        z_threshold,
        seed: opts.seed,
        passed,
    };
    let mut out = sink(opts, stdout)?;
    match opts.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &report).map_err(io::Error::from)?;
            writeln!(out)?;
        }
        Format::Csv => {
            writeln!(out, "cuboid c_1..c_N: {:?} ({} states, epsilon {:e})", report.bounds, report.states, eps)?;
            writeln!(out, "max total variation: {tv:.3e} (threshold {tv_threshold:.1e})")?;
            writeln!(
                out,
                "worst z-score: {worst_z:.3} at {} over {compared_states} states, {} means and the empty fraction (threshold {z_threshold:.3})",
                report.worst_z_at,
                system.num_classes()
            )?;
            writeln!(out, "simulated events: {} (seed {})", est.events, opts.seed)?;
            writeln!(out, "result: {}", if passed { "ok" } else { "mismatch" })?;
        }
    }
    out.flush()?;
    Ok(if passed { EXIT_OK } else { EXIT_ORACLE_MISMATCH })
}

#[derive(Debug, Serialize)]
struct TableDocument {
    kind: String,
    level: usize,
    class: usize,
    /// `(b_n, ..., b_1)`
    bounds: Vec<usize>,
    values: Vec<f64>,
}

pub fn cmd_dump_passage(
    opts: &RunConfig,
    config: &Path,
    bounds: Option<&[usize]>,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> CliResult<i32> {
    let (system, cfg_eps) = load_system(config)?;
    let eps = check_epsilon(opts.epsilon.or(cfg_eps).unwrap_or(DEFAULT_EPSILON))?;
    let cuboid = match bounds {
        Some(_) => joint_for(&system, eps, bounds, opts)?.0,
        None => build(&system, eps, opts)?.0,
    };
    let tables = PassageSet::build(&system, cuboid.bounds())?;
    if opts.verbose > 0 {
        writeln!(stderr, "tables over c_1..c_N = {:?}", cuboid.bounds())?;
    }
    match (opts.format, &opts.out) {
        (Format::Csv, Some(dir)) => {
            fs::create_dir_all(dir)?;
            for t in tables.tables() {
                let path = dir.join(format!("{}_level{}_class{}.csv", t.kind(), t.level(), t.class()));
                let mut f = BufWriter::new(File::create(path)?);
                t.write_csv(&mut f)?;
                f.flush()?;
            }
        }
        (Format::Csv, None) => {
            for t in tables.tables() {
                writeln!(stdout, "# {}", t.name())?;
                t.write_csv(&mut *stdout)?;
            }
        }
        (Format::Json, _) => {
            let docs: Vec<TableDocument> = tables
                .tables()
                .map(|t| TableDocument {
                    kind: t.kind().to_string(),
                    level: t.level(),
                    class: t.class(),
                    bounds: t.bounds(),
                    values: t.data().to_vec(),
                })
                .collect();
            let mut out = sink(opts, stdout)?;
            serde_json::to_writer_pretty(&mut out, &docs).map_err(io::Error::from)?;
            writeln!(out)?;
            out.flush()?;
        }
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Input("x".into()).exit_code(), 1);
        assert_eq!(CliError::MassDeficit("x".into()).exit_code(), 2);
        assert_eq!(CliError::OracleMismatch("x".into()).exit_code(), 3);
        assert_eq!(CliError::Core(prio_core::Error::Unstable { rho: 1.2 }).exit_code(), 1);
        let deficit = prio_core::Error::MassDeficit {
            captured: 0.9,
            epsilon: 1e-6,
        };
        assert_eq!(CliError::Core(deficit).exit_code(), 2);
    }

    #[test]
    fn assignment_labels() {
        assert_eq!(parse_assignment("HML").unwrap(), [3, 2, 1]);
        assert_eq!(parse_assignment("lmh").unwrap(), [1, 2, 3]);
        assert!(parse_assignment("HHL").is_err());
        assert!(parse_assignment("HM").is_err());
    }

    #[test]
    fn usage_errors_exit_one_and_help_exits_zero() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(main_with_args(["prioq", "frobnicate"], &mut out, &mut err), 1);
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(main_with_args(["prioq", "--help"], &mut out, &mut err), 0);
        assert!(String::from_utf8(out).unwrap().contains("distribution"));
    }

    #[test]
    fn epsilon_range() {
        assert!(check_epsilon(0.0).is_err());
        assert!(check_epsilon(1.0).is_err());
        assert!(check_epsilon(1e-6).is_ok());
    }

    #[test]
    fn scenario_rates_follow_ranks() {
        let cfg: ScenarioConfig = serde_json::from_str(
            r#"{"machines": 2, "skus": [{"Z":2,"k":1,"priority":"H"},{"Z":2,"k":1,"priority":1}],
                "arrival_rates": [0.1, 0.2], "service_rates": [1.0, 2.0]}"#,
        )
        .unwrap();
        let s = scenario_system(&cfg, &[2, 1]).unwrap();
        assert_eq!(s.arrival_rates(), &[0.2, 0.1]);
        assert_eq!(s.service_rates(), &[2.0, 1.0]);
    }
}
