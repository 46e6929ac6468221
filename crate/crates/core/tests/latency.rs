use bcc_core::analysis::harmonic;
use bcc_core::latency::{expected_max_time, LatencyModel};
use bcc_core::rng::Stream;

#[test]
fn shift_exponential_moments() {
    let model = LatencyModel::homogeneous(1, 1.0, 20.0).unwrap();
    let mut rng = Stream::new(1).rng();
    let samples: Vec<f64> = (0..1_000_000)
        .map(|_| model.sample_time(0, 5, &mut rng).unwrap())
        .collect();
    assert!(samples.iter().all(|&t| t >= 100.0));
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    assert!((mean - 105.0).abs() <= 0.5, "{mean}");
}

#[test]
fn unit_exponential_cdf_and_ks() {
    let model = LatencyModel::homogeneous(1, 1.0, 0.0).unwrap();
    let mut rng = Stream::new(2).rng();
    let mut samples: Vec<f64> = (0..100_000)
        .map(|_| model.sample_time(0, 1, &mut rng).unwrap())
        .collect();
    let below = samples.iter().filter(|&&t| t <= 1.0).count() as f64 / samples.len() as f64;
    assert!((below - (1.0 - (-1.0f64).exp())).abs() <= 0.005);

    let hetero = LatencyModel::new(vec![0.7], vec![1.5]).unwrap();
    let mut rng = Stream::new(3).rng();
    samples = (0..100_000)
        .map(|_| hetero.sample_time(0, 3, &mut rng).unwrap())
        .collect();
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let ks = samples
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let f = hetero.cdf(0, 3, t);
            (f - k as f64 / n).abs().max((f - (k + 1) as f64 / n).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.01, "{ks}");
}

#[test]
fn load_scales_quantiles() {
    let model = LatencyModel::new(vec![2.0], vec![0.3]).unwrap();
    let quantiles = |load: usize, seed: u64| {
        let mut rng = Stream::new(seed).rng();
        let mut v: Vec<f64> = (0..200_000)
            .map(|_| model.sample_time(0, load, &mut rng).unwrap())
            .collect();
        v.sort_by(f64::total_cmp);
        [0.1, 0.25, 0.5, 0.75, 0.9].map(|q| v[(q * v.len() as f64) as usize])
    };
    let one = quantiles(1, 4);
    let seven = quantiles(7, 5);
    for (a, b) in one.iter().zip(seven) {
        assert!((b / (7.0 * a) - 1.0).abs() <= 0.01, "{b} vs 7·{a}");
    }
}

#[test]
fn expected_max_matches_simulation() {
    assert!((expected_max_time(100, 1.0, 20.0, 5).unwrap() - 125.936_887_9).abs() < 1e-6);
    assert!((expected_max_time(1, 2.0, 3.0, 4).unwrap() - 4.0 * (3.0 + 0.5)).abs() < 1e-12);
    let model = LatencyModel::homogeneous(100, 1.0, 20.0).unwrap();
    let mut rng = Stream::new(6).rng();
    let trials = 100_000;
    let mut total = 0.0;
    for _ in 0..trials {
        total += (0..100)
            .map(|i| model.sample_time(i, 5, &mut rng).unwrap())
            .fold(0.0, f64::max);
    }
    let mc = total / trials as f64;
    assert!((mc / expected_max_time(100, 1.0, 20.0, 5).unwrap() - 1.0).abs() <= 0.01);
    assert!((5.0 * (20.0 + harmonic(100).unwrap()) - 125.936_887_9).abs() < 1e-6);
}
