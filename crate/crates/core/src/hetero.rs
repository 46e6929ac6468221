//! Heterogeneous clusters: the load-balancing baseline, load optimization
//! for the counting time `T̂(s)`, generalized BCC evaluation and the
//! coverage-time bounds.
//!
//! Load optimization is a sample-average approximation. A fixed set of
//! unit-exponential draws (one per realization and worker) is frozen up
//! front, so every candidate load vector is scored on the same latency
//! realizations. The search starts from the better of two initial guesses
//! and refines it by integer pattern search.

use rand::Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use crate::analysis::c_constant;
use crate::latency::LatencyModel;
use crate::rng::Stream;
use crate::schemes::SchemeSpec;
use crate::sim::{monte_carlo, MonteCarloSummary, SimConfig};
use crate::stats::MeanCi;
use crate::{Error, Result};

/// Default number of frozen realizations for [`optimize_loads`].
pub const DEFAULT_OPTIMIZER_TRIALS: usize = 1000;
/// Cap on pattern-search sweeps.
pub const MAX_SWEEPS: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct LoadAssignment {
    pub loads: Vec<usize>,
    /// The `s` the loads were chosen for.
    pub objective_s: usize,
    /// Sample-average estimate of `E[T̂(s)]`, when one was computed.
    pub estimated_objective: Option<f64>,
    /// 95% half-width of that estimate.
    pub estimate_ci95: Option<f64>,
}

impl LoadAssignment {
    pub fn total(&self) -> usize {
        self.loads.iter().sum()
    }
}

/// Splits `total` proportionally to `weights` by largest remainder (ties to
/// the lower index). The result sums to `total` exactly.
pub fn proportional_loads(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut loads: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = loads.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&x, &y| {
        let fx = quotas[x] - quotas[x].floor();
        let fy = quotas[y] - quotas[y].floor();
        fy.total_cmp(&fx).then(x.cmp(&y))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        loads[i] += 1;
    }
    loads
}

/// Load-balancing baseline: `r_i ∝ μ_i` with `Σ r_i = m`, every worker
/// holding at least one unit and no unit repeated.
pub fn lb_assignment(mu: &[f64], m: usize) -> Result<LoadAssignment> {
    if mu.is_empty() {
        return Err(Error::param("mu", "needs at least one worker"));
    }
    if mu.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::param("mu", "rates must be positive"));
    }
    if m < mu.len() {
        return Err(Error::param(
            "m",
            format!("needs at least one unit per worker ({} workers)", mu.len()),
        ));
    }
    let mut loads = proportional_loads(mu, m);
    while let Some(empty) = loads.iter().position(|&l| l == 0) {
        let donor = (0..loads.len())
            .max_by_key(|&i| (loads[i], std::cmp::Reverse(i)))
            .expect("non-empty");
        loads[donor] -= 1;
        loads[empty] += 1;
    }
    Ok(LoadAssignment {
        loads,
        objective_s: m,
        estimated_objective: None,
        estimate_ci95: None,
    })
}

/// Frozen unit-exponential draws, `trials × n`, used as common random
/// numbers across candidate loads.
#[derive(Clone, Debug)]
pub struct Realizations {
    n: usize,
    draws: Vec<f64>,
}

impl Realizations {
    pub fn draw(n: usize, trials: usize, stream: Stream) -> Self {
        let draws = (0..trials)
            .into_par_iter()
            .flat_map_iter(|k| {
                let mut rng = stream.child(k as u64).rng();
                (0..n)
                    .map(move |_| rng.sample::<f64, _>(Exp1))
                    .collect::<Vec<_>>()
            })
            .collect();
        Realizations { n, draws }
    }

    pub fn trials(&self) -> usize {
        self.draws.len() / self.n
    }

    /// Sample average of `T̂(s)` for `loads`; `+∞` when `Σ loads < s`.
    pub fn mean_waiting_time(&self, latency: &LatencyModel, loads: &[usize], s: usize) -> f64 {
        match self.waiting_times(latency, loads, s) {
            Some(values) => values.iter().sum::<f64>() / values.len() as f64,
            None => f64::INFINITY,
        }
    }

    /// Mean and 95% half-width of `T̂(s)` over the realizations.
    pub fn waiting_time_summary(
        &self,
        latency: &LatencyModel,
        loads: &[usize],
        s: usize,
    ) -> Option<MeanCi> {
        self.waiting_times(latency, loads, s)
            .map(|v| MeanCi::of(&v))
    }

    /// Per-realization `T̂(s)`; `None` when `Σ loads < s`.
    fn waiting_times(&self, latency: &LatencyModel, loads: &[usize], s: usize) -> Option<Vec<f64>> {
        if loads.iter().sum::<usize>() < s {
            return None;
        }
        if s == 0 {
            return Some(vec![0.0; self.trials()]);
        }
        Some(
            self.draws
                .par_chunks(self.n)
                .map_init(Vec::new, |buf: &mut Vec<(f64, usize)>, unit| {
                    buf.clear();
                    buf.extend(
                        loads
                            .iter()
                            .enumerate()
                            .filter(|(_, &l)| l > 0)
                            .map(|(i, &l)| (latency.time_from_unit(i, l, unit[i]), i)),
                    );
                    buf.sort_unstable_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
                    let mut got = 0;
                    for &(t, i) in buf.iter() {
                        got += loads[i];
                        if got >= s {
                            return t;
                        }
                    }
                    unreachable!("feasibility checked above")
                })
                .collect(),
        )
    }
}

/// Integer `r ∈ [0, cap]` maximizing the expected delivered count
/// `r·Pr[T_i(r) ≤ t]`, with that count.
fn best_expected_load(latency: &LatencyModel, i: usize, t: f64, cap: usize) -> (usize, f64) {
    let a = latency.a()[i];
    let upper = if a > 0.0 {
        ((t / a).floor() as usize).min(cap)
    } else {
        cap
    };
    (1..=upper)
        .map(|r| (r, r as f64 * latency.cdf(i, r, t)))
        .fold(
            (0, 0.0),
            |best, cur| if cur.1 > best.1 { cur } else { best },
        )
}

/// Loads whose expected delivered count first reaches `s`, found by
/// bisection on the deadline `t`.
fn expected_count_loads(latency: &LatencyModel, s: usize, cap: usize) -> Vec<usize> {
    let n = latency.num_workers();
    let expected = |t: f64| -> f64 {
        (0..n)
            .map(|i| best_expected_load(latency, i, t, cap).1)
            .sum()
    };
    let mut hi = 1.0;
    while expected(hi) < s as f64 {
        hi *= 2.0;
        if hi > 1e12 {
            break;
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if expected(mid) >= s as f64 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (0..n)
        .map(|i| best_expected_load(latency, i, hi, cap).0)
        .collect()
}

/// Proportional split of `s` capped at `cap`, overflow redistributed.
fn proportional_capped(mu: &[f64], s: usize, cap: usize) -> Vec<usize> {
    let mut loads = proportional_loads(mu, s);
    let mut excess: usize = loads.iter().map(|&l| l.saturating_sub(cap)).sum();
    for l in loads.iter_mut() {
        *l = (*l).min(cap);
    }
    let mut i = 0;
    while excess > 0 {
        if loads[i] < cap {
            loads[i] += 1;
            excess -= 1;
        }
        i = (i + 1) % loads.len();
    }
    loads
}

/// Approximately minimizes the sample-average `E[T̂(s)]` over integer loads
/// in `[0, max_load]`, using `trials` frozen realizations drawn from
/// `stream`.
pub fn optimize_loads(
    latency: &LatencyModel,
    s: usize,
    max_load: usize,
    trials: usize,
    stream: Stream,
) -> Result<LoadAssignment> {
    let n = latency.num_workers();
    if s == 0 {
        return Err(Error::param("s", "must be at least 1"));
    }
    if max_load == 0 {
        return Err(Error::param("max_load", "must be at least 1"));
    }
    if trials == 0 {
        return Err(Error::param("trials", "must be at least 1"));
    }
    let capacity = n.saturating_mul(max_load);
    if s > capacity {
        return Err(Error::Infeasible {
            required: s,
            capacity,
        });
    }
    let frozen = Realizations::draw(n, trials, stream);
    let score = |loads: &[usize]| frozen.mean_waiting_time(latency, loads, s);

    let mut loads = {
        let a = proportional_capped(latency.mu(), s, max_load);
        let b = expected_count_loads(latency, s, max_load);
        if score(&b) < score(&a) {
            b
        } else {
            a
        }
    };
    let mut best = score(&loads);

    let mean_load = s as f64 / n as f64;
    let mut step = 1usize << ((mean_load / 4.0).max(1.0).log2().floor() as u32);
    let mut total: usize = loads.iter().sum();
    for _ in 0..MAX_SWEEPS {
        let mut improved = false;
        for i in 0..n {
            for up in [true, false] {
                let candidate = if up {
                    match loads[i].checked_add(step).filter(|&l| l <= max_load) {
                        Some(l) => l,
                        None => continue,
                    }
                } else {
                    match loads[i].checked_sub(step) {
                        Some(l) if total - step >= s => l,
                        _ => continue,
                    }
                };
                let old = loads[i];
                loads[i] = candidate;
                let value = score(&loads);
                if value < best {
                    best = value;
                    total = total + candidate - old;
                    improved = true;
                } else {
                    loads[i] = old;
                }
            }
        }
        // When the count constraint binds, single moves stall; shift `step`
        // units to the best receiver from the best donor.
        if !improved {
            if let Some(value) = exchange(&mut loads, step, max_load, best, &score) {
                best = value;
                improved = true;
            }
        }
        if !improved {
            if step == 1 {
                break;
            }
            step /= 2;
        }
    }

    let summary = frozen
        .waiting_time_summary(latency, &loads, s)
        .expect("feasible loads");
    Ok(LoadAssignment {
        loads,
        objective_s: s,
        estimated_objective: Some(best),
        estimate_ci95: Some(summary.ci95),
    })
}

/// Best single exchange of `step` units: first the receiver with the lowest
/// objective after `+step`, then the donor with the lowest objective after
/// `−step`. Applies it and returns the new objective if it beats `best`.
fn exchange(
    loads: &mut [usize],
    step: usize,
    max_load: usize,
    best: f64,
    score: &impl Fn(&[usize]) -> f64,
) -> Option<f64> {
    let n = loads.len();
    let mut trial = loads.to_vec();
    let receiver = (0..n)
        .filter(|&j| loads[j] + step <= max_load)
        .map(|j| {
            trial[j] += step;
            let v = score(&trial);
            trial[j] -= step;
            (v, j)
        })
        .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)))?
        .1;
    trial[receiver] += step;
    let (value, donor) = (0..n)
        .filter(|&i| i != receiver && loads[i] >= step)
        .map(|i| {
            trial[i] -= step;
            let v = score(&trial);
            trial[i] += step;
            (v, i)
        })
        .min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)))?;
    if value < best {
        loads[receiver] += step;
        loads[donor] -= step;
        Some(value)
    } else {
        None
    }
}

/// Estimated bounds on the minimum mean coverage time.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageBounds {
    /// Optimized `E[T̂(m)]`.
    pub lower: f64,
    /// Optimized `E[T̂(s_upper)] + 1`.
    pub upper: f64,
    pub c_used: f64,
    pub s_upper: usize,
    /// Whether `⌊c·m·ln m⌋` exceeded `n·m` and was clamped to it.
    pub s_clamped: bool,
    pub lower_loads: LoadAssignment,
    pub upper_loads: LoadAssignment,
}

/// `s` used by the upper bound: `⌊c·m·ln m⌋`.
pub fn upper_bound_count(latency: &LatencyModel, m: usize) -> Result<(f64, usize)> {
    let c = c_constant(
        latency.max_shift(),
        latency.min_rate(),
        latency.num_workers(),
        m,
    )?;
    Ok((c, (c * m as f64 * (m as f64).ln()).floor() as usize))
}

pub fn coverage_time_bounds(
    latency: &LatencyModel,
    m: usize,
    optimizer_trials: usize,
    stream: Stream,
) -> Result<CoverageBounds> {
    let (c, s_raw) = upper_bound_count(latency, m)?;
    let capacity = latency.num_workers() * m;
    let s_upper = s_raw.min(capacity);
    let lower_loads = optimize_loads(latency, m, m, optimizer_trials, stream.child(0))?;
    let upper_loads = optimize_loads(latency, s_upper, m, optimizer_trials, stream.child(1))?;
    let lower = lower_loads
        .estimated_objective
        .expect("optimizer sets the estimate");
    let upper = upper_loads
        .estimated_objective
        .expect("optimizer sets the estimate")
        + 1.0;
    Ok(CoverageBounds {
        lower,
        upper,
        c_used: c,
        s_upper,
        s_clamped: s_raw > capacity,
        lower_loads,
        upper_loads,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Strategy {
    /// Worker `i` samples `r_i` distinct units; stop at coverage.
    GeneralizedBcc,
    /// Disjoint proportional shards; everyone must report.
    LoadBalanced,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::GeneralizedBcc => "gbcc",
            Strategy::LoadBalanced => "lb",
        }
    }
}

/// Monte-Carlo coverage time for `loads` under `strategy`. Generalized BCC
/// redraws its placement every trial; a trial that never reaches coverage
/// is charged the last arrival and shows up in `covered_trials`.
pub fn evaluate_coverage_time(
    loads: &[usize],
    m: usize,
    strategy: Strategy,
    latency: &LatencyModel,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloSummary> {
    let n = latency.num_workers();
    let scheme = match strategy {
        Strategy::GeneralizedBcc => SchemeSpec::GeneralizedBcc {
            loads: loads.to_vec(),
        },
        Strategy::LoadBalanced => {
            if loads.iter().sum::<usize>() != m {
                return Err(Error::param("loads", "load-balanced shards must sum to m"));
            }
            SchemeSpec::Disjoint {
                loads: loads.to_vec(),
            }
        }
    };
    monte_carlo(&SimConfig::new(scheme, n, m, latency.clone()), trials, seed)
}
