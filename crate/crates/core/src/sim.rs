//! Discrete-event simulation of gradient-descent iterations.
//!
//! One iteration samples every worker's finishing time, delivers messages to
//! the master in ascending time order (ties broken by worker index) and stops
//! at the first message after which the scheme's completion rule holds.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::latency::LatencyModel;
use crate::rng::{keys, Stream};
use crate::schemes::{CoverageTracker, Placement, SchemeSpec};
use crate::stats::MeanCi;
use crate::{Error, Result};

/// How a worker's latency load is measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LoadBasis {
    /// Number of units processed, `|G_i|`.
    #[default]
    Examples,
    /// Normalized size of the worker's message. Suits clusters where upload
    /// dominates computation.
    Messages,
}

impl std::str::FromStr for LoadBasis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "examples" => Ok(LoadBasis::Examples),
            "messages" => Ok(LoadBasis::Messages),
            other => Err(Error::param(
                "basis",
                format!("expected examples|messages, got `{other}`"),
            )),
        }
    }
}

/// Outcome of one simulated iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationStats {
    /// `|W|`, every received message including discarded duplicates.
    pub recovery_count: usize,
    /// `L`, in units of one single-example gradient.
    pub comm_load: usize,
    /// `T`, the arrival time of the last counted message.
    pub completion_time: f64,
    pub covered: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arrival {
    pub worker_id: usize,
    pub time: f64,
    /// Whether the master processed the message before completing.
    pub counted: bool,
    /// Communication load accumulated up to and including this message.
    pub cumulative_units: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationTrace {
    pub stats: IterationStats,
    /// Every worker that sends something, in delivery order.
    pub arrivals: Vec<Arrival>,
}

/// Workers sorted by ascending time, ties by index; infinite times dropped.
pub fn arrival_order(times: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..times.len()).filter(|&i| times[i].is_finite()).collect();
    order.sort_by(|&x, &y| times[x].total_cmp(&times[y]).then(x.cmp(&y)));
    order
}

/// Per-worker latency loads of `placement` under `basis`.
pub fn worker_loads(placement: &Placement, basis: LoadBasis) -> Vec<usize> {
    (0..placement.num_workers())
        .map(|i| match basis {
            LoadBasis::Examples => placement.load(i),
            LoadBasis::Messages => placement.size_units(i),
        })
        .collect()
}

/// Replays an iteration for given finishing times. Workers holding no data
/// never send.
pub fn run_with_times(placement: &Placement, times: &[f64]) -> IterationTrace {
    let mut tracker = CoverageTracker::new(placement.completion_rule().clone());
    let mut arrivals = Vec::with_capacity(times.len());
    let mut completion_time = 0.0;
    for i in arrival_order(times) {
        if placement.load(i) == 0 {
            continue;
        }
        let counted = tracker
            .ingest(i, placement.covers(i), placement.size_units(i))
            .is_some();
        if counted {
            completion_time = times[i];
        }
        arrivals.push(Arrival {
            worker_id: i,
            time: times[i],
            counted,
            cumulative_units: tracker.comm_load(),
        });
    }
    IterationTrace {
        stats: IterationStats {
            recovery_count: tracker.received(),
            comm_load: tracker.comm_load(),
            completion_time,
            covered: tracker.is_complete(),
        },
        arrivals,
    }
}

/// Samples finishing times for every worker; workers with load zero get
/// `+∞`. Worker `i` draws from `stream.child(i)`.
pub fn sample_times(latency: &LatencyModel, loads: &[usize], stream: Stream) -> Vec<f64> {
    loads
        .iter()
        .enumerate()
        .map(|(i, &load)| {
            if load == 0 {
                f64::INFINITY
            } else {
                latency.time_from_unit(i, load, stream.child(i as u64).rng().sample(Exp1))
            }
        })
        .collect()
}

pub fn run_iteration(
    placement: &Placement,
    latency: &LatencyModel,
    basis: LoadBasis,
    stream: Stream,
) -> Result<IterationTrace> {
    if latency.num_workers() != placement.num_workers() {
        return Err(Error::param(
            "mu",
            format!(
                "latency model has {} workers, placement has {}",
                latency.num_workers(),
                placement.num_workers()
            ),
        ));
    }
    let times = sample_times(latency, &worker_loads(placement, basis), stream);
    Ok(run_with_times(placement, &times))
}

/// `T̂(s) = min{t : Σ_{i: T_i ≤ t} r_i ≥ s}` for one realization.
pub fn waiting_time(loads: &[usize], times: &[f64], s: usize) -> Result<f64> {
    if s == 0 {
        return Ok(0.0);
    }
    let mut total = 0;
    for i in arrival_order(times) {
        total += loads[i];
        if total >= s {
            return Ok(times[i]);
        }
    }
    Err(Error::Infeasible {
        required: s,
        capacity: total,
    })
}

pub fn waiting_time_for_count(
    loads: &[usize],
    latency: &LatencyModel,
    s: usize,
    stream: Stream,
) -> Result<f64> {
    if loads.len() != latency.num_workers() {
        return Err(Error::param("loads", "one load per worker is required"));
    }
    let capacity: usize = loads.iter().sum();
    if s > capacity {
        return Err(Error::Infeasible {
            required: s,
            capacity,
        });
    }
    waiting_time(loads, &sample_times(latency, loads, stream), s)
}

/// Number of uniform draws with replacement until all `types` coupons are
/// seen.
pub fn coupon_draws<R: Rng + ?Sized>(types: usize, rng: &mut R) -> usize {
    let mut seen = vec![false; types];
    let mut distinct = 0;
    let mut draws = 0;
    while distinct < types {
        let c = rng.random_range(0..types);
        draws += 1;
        if !seen[c] {
            seen[c] = true;
            distinct += 1;
        }
    }
    draws
}

/// Number of random `r`-subsets of `0..m` drawn until their union is `0..m`.
pub fn random_cover_draws<R: Rng + ?Sized>(m: usize, r: usize, rng: &mut R) -> usize {
    let mut seen = vec![false; m];
    let mut distinct = 0;
    let mut draws = 0;
    while distinct < m {
        draws += 1;
        for j in sample(rng, m, r) {
            if !seen[j] {
                seen[j] = true;
                distinct += 1;
            }
        }
    }
    draws
}

fn parallel_means(
    trials: usize,
    seed: u64,
    f: impl Fn(&mut crate::rng::StreamRng) -> usize + Sync,
) -> MeanCi {
    let root = Stream::new(seed).child(keys::TRIALS);
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| f(&mut root.child(t as u64).rng()) as f64)
        .collect();
    MeanCi::of(&values)
}

/// Mean coupon-collector draws for `types` coupons: BCC's recovery
/// threshold with unlimited workers.
pub fn coupon_monte_carlo(types: usize, trials: usize, seed: u64) -> Result<MeanCi> {
    if types == 0 {
        return Err(Error::param("N", "must be at least 1"));
    }
    if trials < 2 {
        return Err(Error::param("trials", "must be at least 2"));
    }
    Ok(parallel_means(trials, seed, |rng| coupon_draws(types, rng)))
}

/// Mean workers to coverage for the simple randomized scheme with unlimited
/// workers.
pub fn random_cover_monte_carlo(m: usize, r: usize, trials: usize, seed: u64) -> Result<MeanCi> {
    if r == 0 || r > m {
        return Err(Error::param(
            "r",
            format!("must satisfy 1 <= r <= m = {m}, got {r}"),
        ));
    }
    if trials < 2 {
        return Err(Error::param("trials", "must be at least 2"));
    }
    Ok(parallel_means(trials, seed, |rng| {
        random_cover_draws(m, r, rng)
    }))
}

/// A scheme on a cluster, ready to simulate.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub scheme: SchemeSpec,
    pub n: usize,
    /// Placement units.
    pub m: usize,
    pub latency: LatencyModel,
    pub basis: LoadBasis,
    /// Draw the placement once instead of once per trial.
    pub freeze_placement: bool,
}

impl SimConfig {
    pub fn new(scheme: SchemeSpec, n: usize, m: usize, latency: LatencyModel) -> Self {
        SimConfig {
            scheme,
            n,
            m,
            latency,
            basis: LoadBasis::default(),
            freeze_placement: false,
        }
    }

    pub fn with_basis(mut self, basis: LoadBasis) -> Self {
        self.basis = basis;
        self
    }

    fn trial(&self, frozen: Option<&Placement>, root: Stream, t: usize) -> Result<IterationTrace> {
        let ts = root.child(keys::TRIALS).child(t as u64);
        let owned;
        let placement = match frozen {
            Some(p) => p,
            None => {
                owned = self
                    .scheme
                    .place(self.n, self.m, ts.child(keys::PLACEMENT))?;
                &owned
            }
        };
        run_iteration(
            placement,
            &self.latency,
            self.basis,
            ts.child(keys::LATENCY),
        )
    }

    fn frozen(&self, root: Stream) -> Result<Option<Placement>> {
        if self.freeze_placement || !self.scheme.is_randomized() {
            Ok(Some(self.scheme.place(
                self.n,
                self.m,
                root.child(keys::PLACEMENT),
            )?))
        } else {
            Ok(None)
        }
    }

    /// Runs `trials` iterations, each on its own sub-stream of `seed`.
    pub fn run_trials(&self, trials: usize, seed: u64) -> Result<Vec<IterationTrace>> {
        let root = Stream::new(seed);
        let frozen = self.frozen(root)?;
        (0..trials)
            .into_par_iter()
            .map(|t| self.trial(frozen.as_ref(), root, t))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonteCarloSummary {
    pub trials: usize,
    /// Trials whose messages achieved the completion rule.
    pub covered_trials: usize,
    /// Over covered trials.
    pub mean_k: f64,
    pub ci95_k: f64,
    /// Over covered trials.
    pub mean_l: f64,
    pub ci95_l: f64,
    /// Over all trials; an uncovered trial contributes its last arrival.
    pub mean_t: f64,
    pub ci95_t: f64,
}

impl MonteCarloSummary {
    /// Aggregates in slice order.
    pub fn from_stats<'a>(stats: impl IntoIterator<Item = &'a IterationStats>) -> Self {
        let stats: Vec<&IterationStats> = stats.into_iter().collect();
        let covered: Vec<&&IterationStats> = stats.iter().filter(|s| s.covered).collect();
        let k: Vec<f64> = covered.iter().map(|s| s.recovery_count as f64).collect();
        let l: Vec<f64> = covered.iter().map(|s| s.comm_load as f64).collect();
        let t: Vec<f64> = stats.iter().map(|s| s.completion_time).collect();
        let (k, l, t) = (MeanCi::of(&k), MeanCi::of(&l), MeanCi::of(&t));
        MonteCarloSummary {
            trials: stats.len(),
            covered_trials: covered.len(),
            mean_k: k.mean,
            ci95_k: k.ci95,
            mean_l: l.mean,
            ci95_l: l.ci95,
            mean_t: t.mean,
            ci95_t: t.ci95,
        }
    }

    pub fn covered_fraction(&self) -> f64 {
        self.covered_trials as f64 / self.trials as f64
    }
}

pub fn monte_carlo(config: &SimConfig, trials: usize, seed: u64) -> Result<MonteCarloSummary> {
    if trials < 2 {
        return Err(Error::param("trials", "must be at least 2"));
    }
    let traces = config.run_trials(trials, seed)?;
    Ok(MonteCarloSummary::from_stats(
        traces.iter().map(|t| &t.stats),
    ))
}
