//! Event-driven simulation of the preemptive priority queue.
//!
//! Each replication runs on its own ChaCha8 stream (`seed`, stream = replication
//! index) and measures time-average occupancy over `[warmup, warmup + measure]`.
//! Estimates pool replications: mean across replications, standard error
//! `sd / sqrt(R)`. A single replication is cut into equal batches instead.

use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate, PrioritySystem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    fn from_samples(samples: &[f64]) -> Self {
        let r = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / r;
        let var = if samples.len() > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (r - 1.0)
        } else {
            f64::NAN
        };
        Self {
            mean,
            std_error: (var / r).sqrt(),
        }
    }

    /// `|value - mean|` in standard errors.
    pub fn z_score(&self, value: f64) -> f64 {
        (value - self.mean).abs() / self.std_error
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEstimate {
    /// `(q_N, ..., q_1)`
    pub state: Vec<usize>,
    pub probability: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationEstimate {
    pub seed: u64,
    pub replications: usize,
    pub warmup: f64,
    pub measure: f64,
    /// Events inside the measurement windows, summed over replications.
    pub events: u64,
    pub states: Vec<StateEstimate>,
    /// Per class `1..=N`.
    pub mean_queue_lengths: Vec<Estimate>,
    pub empty_fraction: Estimate,
    /// Mean sojourn time per class, over customers who arrive and leave
    /// inside the window.
    pub mean_sojourn_times: Vec<Estimate>,
    pub arrivals: Vec<u64>,
    pub departures: Vec<u64>,
}

impl SimulationEstimate {
    pub fn state(&self, state: &[usize]) -> Option<&StateEstimate> {
        self.states.iter().find(|s| s.state == state)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("estimate serializes")
    }
}

/// Batches used when a single replication must carry its own error estimate.
pub const SINGLE_RUN_BATCHES: usize = 10;

#[derive(Default)]
struct Window {
    occupancy: HashMap<Vec<u32>, f64>,
    area: Vec<f64>,
    empty: f64,
    sojourn_sum: Vec<f64>,
    sojourn_count: Vec<u64>,
    arrivals: Vec<u64>,
    departures: Vec<u64>,
}

impl Window {
    fn new(classes: usize) -> Self {
        Self {
            area: vec![0.0; classes],
            sojourn_sum: vec![0.0; classes],
            sojourn_count: vec![0; classes],
            arrivals: vec![0; classes],
            departures: vec![0; classes],
            ..Default::default()
        }
    }

    fn hold(&mut self, state: &[u32], dt: f64) {
        match self.occupancy.get_mut(state) {
            Some(v) => *v += dt,
            None => {
                self.occupancy.insert(state.to_vec(), dt);
            }
        }
        let big_n = state.len();
        for (p, &q) in state.iter().enumerate() {
            self.area[big_n - 1 - p] += q as f64 * dt;
        }
        if state.iter().all(|&q| q == 0) {
            self.empty += dt;
        }
    }
}

/// One run split into `batches` equal windows after the warmup.
fn run(
    system: &PrioritySystem,
    warmup: f64,
    measure: f64,
    batches: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<Window>, u64) {
    let big_n = system.num_classes();
    let end = warmup + measure;
    let width = measure / batches as f64;
    let window_of = |t: f64| (((t - warmup) / width) as usize).min(batches - 1);
    let lambda = system.total_arrival_rate();
    // position p in `state` is class N - p
    let mut state = vec![0u32; big_n];
    let mut waiting: Vec<VecDeque<f64>> = vec![VecDeque::new(); big_n];
    let mut windows: Vec<Window> = (0..batches).map(|_| Window::new(big_n)).collect();
    let mut events = 0;
    let mut t = 0.0;
    loop {
        let top = state.iter().position(|&q| q > 0);
        let mu = top.map_or(0.0, |p| system.mu(big_n - p));
        let rate = lambda + mu;
        let u: f64 = rng.gen();
        let next = t - (1.0 - u).ln() / rate;

        let mut from = t.max(warmup);
        let to = next.min(end);
        while from < to {
            let w = window_of(from);
            let edge = if w + 1 == batches { end } else { warmup + (w + 1) as f64 * width };
            let upto = to.min(edge);
            windows[w].hold(&state, upto - from);
            from = upto;
        }
        if next >= end {
            break;
        }
        t = next;
        let window = (t >= warmup).then(|| window_of(t));
        if window.is_some() {
            events += 1;
        }

        let mut x = rng.gen::<f64>() * rate;
        let mut arrived = None;
        for c in 1..=big_n {
            let l = system.lambda(c);
            if x < l {
                arrived = Some(c);
                break;
            }
            x -= l;
        }
        match (arrived, top) {
            (Some(c), _) => {
                state[big_n - c] += 1;
                waiting[c - 1].push_back(t);
                if let Some(w) = window {
                    windows[w].arrivals[c - 1] += 1;
                }
            }
            (None, Some(p)) => {
                let c = big_n - p;
                state[p] -= 1;
                let since = waiting[c - 1].pop_front().expect("queue tracks state");
                if let Some(w) = window {
                    let win = &mut windows[w];
                    win.departures[c - 1] += 1;
                    if since >= warmup {
                        win.sojourn_sum[c - 1] += t - since;
                        win.sojourn_count[c - 1] += 1;
                    }
                }
            }
            // rounding pushed x past the last arrival with an empty system
            (None, None) => {}
        }
    }
    (windows, events)
}

/// Simulate `replications` independent runs.
pub fn simulate(
    system: &PrioritySystem,
    warmup: f64,
    measure: f64,
    replications: usize,
    seed: u64,
) -> Result<SimulationEstimate> {
    validate(system)?;
    if replications < 1 || !(measure > 0.0) || !(warmup >= 0.0) {
        return Err(Error::InvalidScenario(
            "simulation needs a replication and a positive window".into(),
        ));
    }
    let big_n = system.num_classes();
    let batches = if replications == 1 { SINGLE_RUN_BATCHES } else { 1 };
    let width = measure / batches as f64;
    let mut samples: Vec<Window> = Vec::with_capacity(replications * batches);
    let mut events = 0;
    for r in 0..replications {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let (windows, e) = run(system, warmup, measure, batches, &mut rng);
        samples.extend(windows);
        events += e;
    }

    let mut keys: Vec<Vec<u32>> = samples.iter().flat_map(|w| w.occupancy.keys().cloned()).collect();
    keys.sort();
    keys.dedup();
    let states = keys
        .into_iter()
        .map(|k| {
            let fractions: Vec<f64> = samples
                .iter()
                .map(|w| w.occupancy.get(&k).copied().unwrap_or(0.0) / width)
                .collect();
            StateEstimate {
                state: k.iter().map(|&q| q as usize).collect(),
                probability: Estimate::from_samples(&fractions),
            }
        })
        .collect();
    let per_class = |f: &dyn Fn(&Window, usize) -> f64| -> Vec<Estimate> {
        (0..big_n)
            .map(|c| Estimate::from_samples(&samples.iter().map(|w| f(w, c)).collect::<Vec<_>>()))
            .collect()
    };
    let mean_queue_lengths = per_class(&|w, c| w.area[c] / width);
    let mean_sojourn_times = per_class(&|w, c| w.sojourn_sum[c] / w.sojourn_count[c].max(1) as f64);
    let empty: Vec<f64> = samples.iter().map(|w| w.empty / width).collect();
    let sum_counts = |f: &dyn Fn(&Window) -> &Vec<u64>| -> Vec<u64> {
        (0..big_n).map(|c| samples.iter().map(|w| f(w)[c]).sum()).collect()
    };

    Ok(SimulationEstimate {
        seed,
        replications,
        warmup,
        measure,
        events,
        states,
        mean_queue_lengths,
        empty_fraction: Estimate::from_samples(&empty),
        mean_sojourn_times,
        arrivals: sum_counts(&|w| &w.arrivals),
        departures: sum_counts(&|w| &w.departures),
    })
}
