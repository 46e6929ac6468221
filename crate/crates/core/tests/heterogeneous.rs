use bcc_core::hetero::{
    coverage_time_bounds, evaluate_coverage_time, lb_assignment, optimize_loads,
    proportional_loads, Realizations, Strategy,
};
use bcc_core::latency::LatencyModel;
use bcc_core::rng::Stream;
use rand::Rng;

fn fast_slow_latency() -> LatencyModel {
    let mut mu = vec![1.0; 95];
    mu.extend([20.0; 5]);
    LatencyModel::new(mu, vec![20.0; 100]).unwrap()
}

#[test]
fn generalized_bcc_beats_load_balancing() {
    let latency = fast_slow_latency();
    let lb = lb_assignment(latency.mu(), 500).unwrap();
    let lb_time =
        evaluate_coverage_time(&lb.loads, 500, Strategy::LoadBalanced, &latency, 2000, 1).unwrap();
    let bounds = coverage_time_bounds(&latency, 500, 1000, Stream::new(2)).unwrap();
    let gbcc = optimize_loads(&latency, 3107, 500, 1000, Stream::new(5)).unwrap();
    println!("estimate {:?}", gbcc.estimated_objective);
    let g_time = evaluate_coverage_time(
        &gbcc.loads,
        500,
        Strategy::GeneralizedBcc,
        &latency,
        2000,
        3,
    )
    .unwrap();
    println!(
        "lb {} gbcc {} covered {} lower {} upper {} loads {:?}",
        lb_time.mean_t,
        g_time.mean_t,
        g_time.covered_fraction(),
        bounds.lower,
        bounds.upper,
        gbcc.loads
    );
    assert!((lb_time.mean_t - 1031.5).abs() <= 0.03 * 1031.5);
    assert!(g_time.mean_t <= 800.0);
    assert!(1.0 - g_time.mean_t / lb_time.mean_t >= 0.25);
    assert!(gbcc.estimated_objective.unwrap() <= 760.0);
    assert!(bounds.lower <= g_time.mean_t && bounds.lower <= bounds.upper);
}

#[test]
fn optimized_objective_never_loses_to_proportional_loads() {
    let mut rng = Stream::new(8).rng();
    for k in 0..10 {
        let n = rng.random_range(2..8);
        let mu: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..5.0)).collect();
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        let latency = LatencyModel::new(mu.clone(), a).unwrap();
        let s = rng.random_range(n..4 * n);
        let stream = Stream::new(100 + k);
        let opt = optimize_loads(&latency, s, s, 300, stream).unwrap();
        let frozen = Realizations::draw(n, 300, stream);
        let proportional = frozen.mean_waiting_time(&latency, &proportional_loads(&mu, s), s);
        assert!(opt.estimated_objective.unwrap() <= proportional);
        assert!(opt.total() >= s && opt.loads.iter().all(|&l| l <= s));
    }
}

#[test]
fn single_worker_strategies_coincide() {
    let latency = LatencyModel::new(vec![0.5], vec![3.0]).unwrap();
    let g = evaluate_coverage_time(&[10], 10, Strategy::GeneralizedBcc, &latency, 4000, 1).unwrap();
    let l = evaluate_coverage_time(&[10], 10, Strategy::LoadBalanced, &latency, 4000, 1).unwrap();
    assert!((g.mean_t - l.mean_t).abs() <= g.ci95_t + l.ci95_t);
}

#[test]
fn single_worker_lower_bound_is_its_mean() {
    let latency = LatencyModel::new(vec![1.0], vec![0.0]).unwrap();
    let bounds = coverage_time_bounds(&latency, 2, 20_000, Stream::new(3)).unwrap();
    assert_eq!(bounds.lower_loads.loads, vec![2]);
    assert!((bounds.lower / 2.0 - 1.0).abs() <= 0.02);
    assert!(bounds.lower <= bounds.upper);
}
