//! Logistic regression trained with Nesterov's accelerated gradient, where
//! every full gradient is recovered through a straggler-mitigation scheme.
//!
//! The `d` examples are grouped into `n` contiguous units, one per worker
//! slot, and schemes place units. Each iteration the master broadcasts the
//! lookahead point, workers compute unit gradients, messages are delivered
//! in simulated arrival order until the scheme completes, and the decoded
//! sum divided by `d` drives the Nesterov step.

use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;

use crate::data::{dot, even_split, TrainingSet};
use crate::latency::LatencyModel;
use crate::rng::{keys, Stream};
use crate::schemes::{cr_build, encode_worker, DecodeState, SchemeSpec};
use crate::sim::{
    arrival_order, run_with_times, sample_times, worker_loads, IterationStats, LoadBasis,
};
use crate::{Error, Result};

/// `log(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Logistic sigmoid without overflow.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Loss `log(1 + exp(−y·xᵀw))` of one example.
pub fn logistic_loss(w: &[f64], x: &[f64], y: f64) -> f64 {
    softplus(-y * dot(x, w))
}

/// `∇_w log(1 + exp(−y·xᵀw)) = −y·σ(−y·xᵀw)·x`.
pub fn logistic_partial_gradient(w: &[f64], x: &[f64], y: f64) -> Result<Vec<f64>> {
    if w.len() != x.len() {
        return Err(Error::param(
            "x",
            format!("dimension {} does not match weights {}", x.len(), w.len()),
        ));
    }
    if !y.is_finite() || w.iter().chain(x).any(|v| !v.is_finite()) {
        return Err(Error::Numeric(
            "non-finite input to the logistic gradient".into(),
        ));
    }
    let scale = -y * sigmoid(-y * dot(x, w));
    Ok(x.iter().map(|v| scale * v).collect())
}

/// Mean logistic loss over the dataset.
pub fn empirical_risk(data: &TrainingSet, w: &[f64]) -> f64 {
    let d = data.num_examples();
    let total: f64 = (0..d)
        .into_par_iter()
        .map(|i| logistic_loss(w, data.example(i), data.label(i)))
        .collect::<Vec<_>>()
        .iter()
        .sum();
    total / d as f64
}

/// Single-node gradient of [`empirical_risk`], summed in example order.
pub fn full_gradient(data: &TrainingSet, w: &[f64]) -> Result<Vec<f64>> {
    let d = data.num_examples();
    let mut out = vec![0.0; w.len()];
    for i in 0..d {
        for (o, g) in out.iter_mut().zip(logistic_partial_gradient(
            w,
            data.example(i),
            data.label(i),
        )?) {
            *o += g;
        }
    }
    for o in out.iter_mut() {
        *o /= d as f64;
    }
    Ok(out)
}

/// Fraction of examples where `sign(xᵀw)` equals the label (ties predict +1).
pub fn accuracy(data: &TrainingSet, w: &[f64]) -> f64 {
    let correct = (0..data.num_examples())
        .filter(|&i| {
            let pred = if dot(data.example(i), w) >= 0.0 {
                1.0
            } else {
                -1.0
            };
            pred == data.label(i)
        })
        .count();
    correct as f64 / data.num_examples() as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub weights: Vec<f64>,
    pub velocity: Vec<f64>,
    pub iteration: usize,
    pub step_size: f64,
    pub momentum: f64,
}

impl TrainState {
    pub fn new(weights: Vec<f64>, step_size: f64, momentum: f64) -> Result<Self> {
        if !(step_size.is_finite() && step_size >= 0.0) {
            return Err(Error::param("step_size", "must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::param("momentum", "must lie in [0, 1)"));
        }
        Ok(TrainState {
            velocity: vec![0.0; weights.len()],
            weights,
            iteration: 0,
            step_size,
            momentum,
        })
    }

    /// Point where the next gradient is evaluated, `w + β·v`.
    pub fn lookahead(&self) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.velocity)
            .map(|(w, v)| w + self.momentum * v)
            .collect()
    }
}

/// `v ← β·v − μ·g`, `w ← w + v`, with `g` taken at [`TrainState::lookahead`].
pub fn nesterov_step(state: &TrainState, gradient: &[f64]) -> Result<TrainState> {
    if gradient.len() != state.weights.len() {
        return Err(Error::param("gradient", "dimension does not match weights"));
    }
    let velocity: Vec<f64> = state
        .velocity
        .iter()
        .zip(gradient)
        .map(|(v, g)| state.momentum * v - state.step_size * g)
        .collect();
    let weights: Vec<f64> = state
        .weights
        .iter()
        .zip(&velocity)
        .map(|(w, v)| w + v)
        .collect();
    if weights.iter().chain(&velocity).any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "iterate diverged at iteration {}",
            state.iteration + 1
        )));
    }
    Ok(TrainState {
        weights,
        velocity,
        iteration: state.iteration + 1,
        step_size: state.step_size,
        momentum: state.momentum,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub scheme: SchemeSpec,
    pub latency: LatencyModel,
    pub basis: LoadBasis,
    pub iterations: usize,
    pub step_size: f64,
    pub momentum: f64,
    /// Reuse the first iteration's latencies in every iteration, so the same
    /// workers straggle throughout.
    pub persistent_stragglers: bool,
}

impl TrainConfig {
    pub fn new(scheme: SchemeSpec, latency: LatencyModel, iterations: usize) -> Self {
        TrainConfig {
            scheme,
            latency,
            basis: LoadBasis::default(),
            iterations,
            step_size: 2.0,
            momentum: 0.9,
            persistent_stragglers: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// Empirical risk after each iteration.
    pub loss: Vec<f64>,
    pub stats: Vec<IterationStats>,
    /// Weights after each iteration.
    pub trajectory: Vec<Vec<f64>>,
    pub final_accuracy: f64,
}

impl TrainReport {
    pub fn final_weights(&self) -> &[f64] {
        self.trajectory.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Per-unit gradient sums at `w`, units in index order.
fn unit_gradients(data: &TrainingSet, units: &[Range<usize>], w: &[f64]) -> Result<Vec<Vec<f64>>> {
    units
        .par_iter()
        .map(|range| {
            let mut acc = vec![0.0; w.len()];
            for i in range.clone() {
                for (a, g) in acc.iter_mut().zip(logistic_partial_gradient(
                    w,
                    data.example(i),
                    data.label(i),
                )?) {
                    *a += g;
                }
            }
            Ok(acc)
        })
        .collect()
}

/// Trains from `w = 0`. The placement (and cyclic code) is drawn once; the
/// latencies are redrawn every iteration unless stragglers are persistent.
pub fn train(data: &TrainingSet, config: &TrainConfig, seed: u64) -> Result<TrainReport> {
    let n = config.latency.num_workers();
    let d = data.num_examples();
    if config.iterations == 0 {
        return Err(Error::param("iterations", "must be at least 1"));
    }
    if d < n {
        return Err(Error::param(
            "d",
            format!("needs at least one example per worker ({n} workers)"),
        ));
    }
    let root = Stream::new(seed);
    let units = even_split(d, n);
    let placement = config.scheme.place(n, n, root.child(keys::PLACEMENT))?;
    if !placement.covers_all() {
        return Err(Error::param(
            "loads",
            "placement leaves some units uncovered",
        ));
    }
    let code = match &config.scheme {
        SchemeSpec::CyclicRepetition { r } => {
            Some(Arc::new(cr_build(n, *r, root.child(keys::CODE))?))
        }
        _ => None,
    };
    let loads = worker_loads(&placement, config.basis);

    let mut state = TrainState::new(
        vec![0.0; data.num_features()],
        config.step_size,
        config.momentum,
    )?;
    let mut report = TrainReport {
        loss: Vec::with_capacity(config.iterations),
        stats: Vec::with_capacity(config.iterations),
        trajectory: Vec::with_capacity(config.iterations),
        final_accuracy: 0.0,
    };
    for t in 0..config.iterations {
        let grads = unit_gradients(data, &units, &state.lookahead())?;
        let draw = if config.persistent_stragglers {
            0
        } else {
            t as u64
        };
        let times = sample_times(
            &config.latency,
            &loads,
            root.child(keys::LATENCY).child(draw),
        );
        let mut decoder = DecodeState::for_placement(&placement, code.clone())?;
        for w in arrival_order(&times) {
            if decoder.is_complete() {
                break;
            }
            if placement.load(w) > 0 {
                decoder.ingest(encode_worker(&placement, code.as_deref(), w, &grads)?)?;
            }
        }
        let mut gradient = decoder.decode()?;
        for g in gradient.iter_mut() {
            *g /= d as f64;
        }
        state = nesterov_step(&state, &gradient)?;
        report.loss.push(empirical_risk(data, &state.weights));
        report.stats.push(run_with_times(&placement, &times).stats);
        report.trajectory.push(state.weights.clone());
    }
    report.final_accuracy = accuracy(data, &state.weights);
    Ok(report)
}

/// Power-iteration estimate of `λ_max(XᵀX)/(4d)`, the smoothness constant
/// of the mean logistic loss.
pub fn smoothness_estimate(data: &TrainingSet, iterations: usize) -> f64 {
    let p = data.num_features();
    let d = data.num_examples();
    let mut v = vec![1.0 / (p as f64).sqrt(); p];
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let mut next = vec![0.0; p];
        for i in 0..d {
            let x = data.example(i);
            let s = dot(x, &v);
            for (o, xi) in next.iter_mut().zip(x) {
                *o += s * xi;
            }
        }
        lambda = dot(&next, &next).sqrt();
        if lambda == 0.0 {
            return 0.0;
        }
        v = next.into_iter().map(|x| x / lambda).collect();
    }
    lambda / (4.0 * d as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_dataset;
    use rand::Rng;

    #[test]
    fn gradient_at_zero_is_half_negated_example() {
        let x = [1.0, -2.0, 0.5];
        for y in [1.0, -1.0] {
            let g = logistic_partial_gradient(&[0.0; 3], &x, y).unwrap();
            for (gi, xi) in g.iter().zip(x) {
                assert_eq!(*gi, -y * xi / 2.0);
            }
        }
    }

    #[test]
    fn saturated_gradient_vanishes_without_overflow() {
        let g = logistic_partial_gradient(&[1e6], &[1e6], 1.0).unwrap();
        assert_eq!(g, vec![0.0]);
        let g = logistic_partial_gradient(&[1e6], &[1e6], -1.0).unwrap();
        assert_eq!(g, vec![1e6]);
        assert!(logistic_loss(&[1e6], &[1e6], -1.0).is_finite());
    }

    #[test]
    fn gradient_rejects_bad_input() {
        assert!(logistic_partial_gradient(&[0.0], &[1.0, 2.0], 1.0).is_err());
        assert!(matches!(
            logistic_partial_gradient(&[f64::NAN], &[1.0], 1.0),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = Stream::new(11).rng();
        for _ in 0..50 {
            let p = rng.random_range(1..8);
            let w: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
            let x: Vec<f64> = (0..p).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let g = logistic_partial_gradient(&w, &x, y).unwrap();
            let h = 1e-5;
            for k in 0..p {
                let mut up = w.clone();
                let mut dn = w.clone();
                up[k] += h;
                dn[k] -= h;
                let fd = (logistic_loss(&up, &x, y) - logistic_loss(&dn, &x, y)) / (2.0 * h);
                assert!(
                    (fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1e-3),
                    "{fd} vs {}",
                    g[k]
                );
            }
        }
    }

    #[test]
    fn nesterov_matches_scalar_recurrence_on_quadratic() {
        let (mu, beta) = (0.1, 0.9);
        let mut state = TrainState::new(vec![1.0], mu, beta).unwrap();
        let (mut w, mut v) = (1.0f64, 0.0f64);
        for _ in 0..200 {
            // f(w) = w²/2, gradient at the lookahead point
            let g = state.lookahead()[0];
            state = nesterov_step(&state, &[g]).unwrap();
            let look = w + beta * v;
            v = beta * v - mu * look;
            w += v;
            assert!((state.weights[0] - w).abs() <= 1e-12);
        }
        assert_eq!(state.iteration, 200);
    }

    #[test]
    fn zero_momentum_is_plain_gradient_descent() {
        let state = TrainState::new(vec![1.0, -1.0], 0.5, 0.0).unwrap();
        let next = nesterov_step(&state, &[2.0, 4.0]).unwrap();
        assert_eq!(next.weights, vec![0.0, -3.0]);
    }

    #[test]
    fn zero_gradient_keeps_weights() {
        let state = TrainState::new(vec![3.0], 1.0, 0.9).unwrap();
        let next = nesterov_step(&nesterov_step(&state, &[0.0]).unwrap(), &[0.0]).unwrap();
        assert_eq!(next.weights, vec![3.0]);
    }

    #[test]
    fn divergence_is_reported() {
        let state = TrainState::new(vec![1.0], 1.0, 0.0).unwrap();
        assert!(matches!(
            nesterov_step(&state, &[f64::INFINITY]),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn zero_step_leaves_weights() {
        let data = generate_dataset(5, 40, 2).unwrap();
        let latency = LatencyModel::homogeneous(4, 1.0, 1.0).unwrap();
        let mut config = TrainConfig::new(SchemeSpec::Bcc { r: 2 }, latency, 1);
        config.step_size = 0.0;
        let report = train(&data, &config, 0).unwrap();
        assert_eq!(report.trajectory[0], vec![0.0; 5]);
        assert_eq!(report.loss.len(), 1);
    }

    #[test]
    fn decoded_gradient_matches_single_node() {
        let data = generate_dataset(6, 60, 5).unwrap();
        let latency = LatencyModel::homogeneous(6, 1.0, 0.5).unwrap();
        let mut config = TrainConfig::new(SchemeSpec::Uncoded, latency, 1);
        config.momentum = 0.0;
        config.step_size = 1.0;
        let expected = full_gradient(&data, &[0.0; 6]).unwrap();
        for scheme in [
            SchemeSpec::Uncoded,
            SchemeSpec::Bcc { r: 2 },
            SchemeSpec::CyclicRepetition { r: 3 },
            SchemeSpec::SimpleRandom { r: 3 },
            SchemeSpec::GeneralizedBcc { loads: vec![6; 6] },
        ] {
            config.scheme = scheme;
            let report = train(&data, &config, 9).unwrap();
            for (w, g) in report.trajectory[0].iter().zip(&expected) {
                assert!((w + g).abs() <= 1e-10 * g.abs().max(1.0));
            }
        }
    }

    #[test]
    fn small_step_plain_gd_never_increases_loss() {
        let data = generate_dataset(20, 400, 3).unwrap();
        let l_hat = smoothness_estimate(&data, 100);
        let latency = LatencyModel::homogeneous(10, 1.0, 1.0).unwrap();
        let mut config = TrainConfig::new(SchemeSpec::Bcc { r: 2 }, latency, 30);
        config.momentum = 0.0;
        config.step_size = 0.9 / l_hat;
        let report = train(&data, &config, 1).unwrap();
        let mut prev = std::f64::consts::LN_2;
        for &l in &report.loss {
            assert!(l <= prev + 1e-12, "{l} > {prev}");
            prev = l;
        }
    }
}
