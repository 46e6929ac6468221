//! Experiment execution. Every runner returns its artifacts as strings so
//! the caller decides where they go.

use anyhow::{Context, Result};
use bcc_core::analysis::tradeoff_table;
use bcc_core::data::generate_dataset;
use bcc_core::hetero::{
    coverage_time_bounds, evaluate_coverage_time, lb_assignment, optimize_loads, Strategy,
};
use bcc_core::rng::{keys, Stream};
use bcc_core::schemes::{SchemeKind, SchemeSpec};
use bcc_core::sim::{coupon_monte_carlo, random_cover_monte_carlo, MonteCarloSummary, SimConfig};
use bcc_core::train::{train, TrainConfig};

use crate::config::{
    CouponConfig, ExperimentConfig, HeteroConfig, SimulateConfig, TradeoffConfig, TrainRunConfig,
};
use crate::format::{g6, Csv};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    /// The main CSV.
    pub csv: String,
    /// Per-trial arrival dump (`simulate` with tracing).
    pub trace: Option<String>,
    /// `lower,upper,c` (`hetero`).
    pub bounds: Option<String>,
    pub summary: String,
}

pub fn run(config: &ExperimentConfig, trace: bool) -> Result<Report> {
    match config {
        ExperimentConfig::Tradeoff(c) => tradeoff(c),
        ExperimentConfig::Simulate(c) => simulate(c, trace),
        ExperimentConfig::Hetero(c) => hetero(c),
        ExperimentConfig::Train(c) => train_run(c),
        ExperimentConfig::Coupon(c) => coupon(c),
    }
}

fn scheme_spec(kind: SchemeKind, n: usize, r: usize, loads: &Option<Vec<usize>>) -> SchemeSpec {
    match loads {
        Some(loads) => SchemeSpec::GeneralizedBcc {
            loads: loads.clone(),
        },
        None => SchemeSpec::homogeneous(kind, n, r),
    }
}

fn tradeoff(c: &TradeoffConfig) -> Result<Report> {
    let rows = tradeoff_table(c.m, c.n, &c.r_values)?;
    let mut csv = Csv::with_header(&[
        "r",
        "k_lower",
        "k_bcc",
        "k_cr",
        "k_random",
        "mc_k_bcc",
        "mc_k_random",
    ]);
    for row in &rows {
        let batches = c.m.div_ceil(row.r);
        let mc_bcc = coupon_monte_carlo(batches, c.trials, c.seed.wrapping_add(2 * row.r as u64))?;
        let mc_random = random_cover_monte_carlo(
            c.m,
            row.r,
            c.trials,
            c.seed.wrapping_add(2 * row.r as u64 + 1),
        )?;
        csv.row(&[
            row.r.to_string(),
            g6(row.k_lower),
            g6(row.k_bcc),
            g6(row.k_cr),
            g6(row.k_random),
            g6(mc_bcc.mean),
            g6(mc_random.mean),
        ]);
    }
    Ok(Report {
        csv: csv.into_string(),
        summary: format!(
            "tradeoff m={} n={}: {} rows, {} trials per Monte-Carlo column",
            c.m,
            c.n,
            rows.len(),
            c.trials
        ),
        ..Report::default()
    })
}

fn simulate(c: &SimulateConfig, want_trace: bool) -> Result<Report> {
    let spec = scheme_spec(c.scheme, c.n, c.r, &c.loads);
    let mut config = SimConfig::new(spec, c.n, c.m, c.latency.model()).with_basis(c.basis);
    config.freeze_placement = c.freeze_placement;
    let traces = config.run_trials(c.trials, c.seed)?;
    let s = MonteCarloSummary::from_stats(traces.iter().map(|t| &t.stats));

    let mut csv = Csv::with_header(&[
        "scheme",
        "n",
        "m",
        "r",
        "trials",
        "covered_trials",
        "mean_K",
        "ci95_K",
        "mean_L",
        "ci95_L",
        "mean_T",
        "ci95_T",
    ]);
    csv.row(&[
        c.scheme.name().to_string(),
        c.n.to_string(),
        c.m.to_string(),
        c.r.to_string(),
        s.trials.to_string(),
        s.covered_trials.to_string(),
        g6(s.mean_k),
        g6(s.ci95_k),
        g6(s.mean_l),
        g6(s.ci95_l),
        g6(s.mean_t),
        g6(s.ci95_t),
    ]);
    let trace = want_trace.then(|| {
        let mut out = Csv::with_header(&[
            "trial",
            "worker_id",
            "arrival_time",
            "counted",
            "cumulative_units",
        ]);
        for (t, tr) in traces.iter().enumerate() {
            for a in &tr.arrivals {
                out.row(&[
                    (t + 1).to_string(),
                    (a.worker_id + 1).to_string(),
                    g6(a.time),
                    u8::from(a.counted).to_string(),
                    a.cumulative_units.to_string(),
                ]);
            }
        }
        out.into_string()
    });
    Ok(Report {
        csv: csv.into_string(),
        trace,
        summary: format!(
            "{} n={} m={} r={}: mean K {} mean L {} mean T {} ({} of {} trials covered)",
            c.scheme,
            c.n,
            c.m,
            c.r,
            g6(s.mean_k),
            g6(s.mean_l),
            g6(s.mean_t),
            s.covered_trials,
            s.trials
        ),
        ..Report::default()
    })
}

fn hetero(c: &HeteroConfig) -> Result<Report> {
    let latency = c.latency.model();
    let n = latency.num_workers();
    let root = Stream::new(c.seed).child(keys::OPTIMIZER);
    let lb = lb_assignment(latency.mu(), c.m)?;
    let gbcc = optimize_loads(&latency, c.s, c.m, c.optimizer_trials, root.child(0))
        .with_context(|| format!("optimizing loads for s = {}", c.s))?;
    let bounds = coverage_time_bounds(&latency, c.m, c.optimizer_trials, root.child(1))?;

    let mut header = vec![
        "strategy".to_string(),
        "mean_T".into(),
        "ci95".into(),
        "covered_fraction".into(),
    ];
    header.extend((1..=n).map(|i| format!("r_{i}")));
    let mut csv = Csv::with_header(&header);
    let mut means = Vec::new();
    for (strategy, loads) in [
        (Strategy::LoadBalanced, &lb.loads),
        (Strategy::GeneralizedBcc, &gbcc.loads),
    ] {
        let s = evaluate_coverage_time(loads, c.m, strategy, &latency, c.trials, c.seed)?;
        let mut row = vec![
            strategy.name().to_string(),
            g6(s.mean_t),
            g6(s.ci95_t),
            g6(s.covered_fraction()),
        ];
        row.extend(loads.iter().map(usize::to_string));
        csv.row(&row);
        means.push(s.mean_t);
    }
    let mut b = Csv::with_header(&["lower", "upper", "c"]);
    b.row(&[g6(bounds.lower), g6(bounds.upper), g6(bounds.c_used)]);
    Ok(Report {
        csv: csv.into_string(),
        bounds: Some(b.into_string()),
        summary: format!(
            "hetero n={n} m={} s={}: lb {} gbcc {} ({}% reduction); bounds [{}, {}]{}",
            c.m,
            c.s,
            g6(means[0]),
            g6(means[1]),
            g6(100.0 * (1.0 - means[1] / means[0])),
            g6(bounds.lower),
            g6(bounds.upper),
            if bounds.s_clamped {
                " (upper count clamped to n·m)"
            } else {
                ""
            }
        ),
        ..Report::default()
    })
}

fn train_run(c: &TrainRunConfig) -> Result<Report> {
    let data = generate_dataset(c.p, c.d, c.seed)?;
    let mut config = TrainConfig::new(
        scheme_spec(c.scheme, c.n, c.r, &c.loads),
        c.latency.model(),
        c.iterations,
    );
    config.basis = c.basis;
    config.step_size = c.step_size;
    config.momentum = c.momentum;
    config.persistent_stragglers = c.persistent_stragglers;
    let report = train(&data, &config, c.seed)?;

    let mut csv = Csv::with_header(&[
        "iteration",
        "loss",
        "recovery_count",
        "comm_load",
        "sim_time",
    ]);
    for (t, (loss, s)) in report.loss.iter().zip(&report.stats).enumerate() {
        csv.row(&[
            (t + 1).to_string(),
            g6(*loss),
            s.recovery_count.to_string(),
            s.comm_load.to_string(),
            g6(s.completion_time),
        ]);
    }
    let total_time: f64 = report.stats.iter().map(|s| s.completion_time).sum();
    Ok(Report {
        csv: csv.into_string(),
        summary: format!(
            "train {} p={} d={} n={}: final loss {} accuracy {} total simulated time {}",
            c.scheme,
            c.p,
            c.d,
            c.n,
            g6(*report.loss.last().expect("at least one iteration")),
            g6(report.final_accuracy),
            g6(total_time)
        ),
        ..Report::default()
    })
}

fn coupon(c: &CouponConfig) -> Result<Report> {
    let mc = coupon_monte_carlo(c.types, c.trials, c.seed)?;
    let expected = bcc_core::analysis::k_bcc(c.types, 1)?;
    let mut csv = Csv::with_header(&["N", "trials", "mean_draws", "ci95", "expected"]);
    csv.row(&[
        c.types.to_string(),
        c.trials.to_string(),
        g6(mc.mean),
        g6(mc.ci95),
        g6(expected),
    ]);
    Ok(Report {
        csv: csv.into_string(),
        summary: format!(
            "coupon N={}: mean draws {} ± {} (N·H_N = {})",
            c.types,
            g6(mc.mean),
            g6(mc.ci95),
            g6(expected)
        ),
        ..Report::default()
    })
}
