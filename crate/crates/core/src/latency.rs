//! Shift-exponential worker latency.
//!
//! Worker `i` with load `r` finishes (compute and upload together) after
//! `T = a_i·r + E`, where `E` is exponential with rate `μ_i/r`. Equivalently
//! `T = r·(a_i + E₁/μ_i)` with `E₁` a unit exponential, which is how samples
//! are drawn here: the same unit draw scales exactly with the load.

use rand::Rng;
use rand_distr::Exp1;

use crate::analysis::harmonic;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LatencyModel {
    mu: Vec<f64>,
    a: Vec<f64>,
}

impl LatencyModel {
    pub fn new(mu: Vec<f64>, a: Vec<f64>) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::param("mu", "needs at least one worker"));
        }
        if mu.len() != a.len() {
            return Err(Error::param(
                "a",
                format!("has {} entries but mu has {}", a.len(), mu.len()),
            ));
        }
        if let Some(bad) = mu.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::param(
                "mu",
                format!("rates must be positive and finite, got {bad}"),
            ));
        }
        if let Some(bad) = a.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(Error::param(
                "a",
                format!("shifts must be non-negative and finite, got {bad}"),
            ));
        }
        Ok(LatencyModel { mu, a })
    }

    pub fn homogeneous(n: usize, mu: f64, a: f64) -> Result<Self> {
        Self::new(vec![mu; n], vec![a; n])
    }

    pub fn num_workers(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    /// Largest shift parameter.
    pub fn max_shift(&self) -> f64 {
        self.a.iter().copied().fold(0.0, f64::max)
    }

    /// Smallest straggler parameter.
    pub fn min_rate(&self) -> f64 {
        self.mu.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Completion time of worker `i` for a given unit-exponential draw.
    #[inline]
    pub fn time_from_unit(&self, worker: usize, load: usize, unit_exp: f64) -> f64 {
        load as f64 * (self.a[worker] + unit_exp / self.mu[worker])
    }

    pub fn sample_time<R: Rng + ?Sized>(
        &self,
        worker: usize,
        load: usize,
        rng: &mut R,
    ) -> Result<f64> {
        if worker >= self.num_workers() {
            return Err(Error::param(
                "worker",
                format!("{worker} is outside the model"),
            ));
        }
        if load == 0 {
            return Err(Error::param("load", "must be at least 1"));
        }
        Ok(self.time_from_unit(worker, load, rng.sample(Exp1)))
    }

    /// `Pr[T_i ≤ t]` for load `r`.
    pub fn cdf(&self, worker: usize, load: usize, t: f64) -> f64 {
        let r = load as f64;
        let shift = self.a[worker] * r;
        if t < shift {
            0.0
        } else {
            1.0 - (-(self.mu[worker] / r) * (t - shift)).exp()
        }
    }
}

/// `E[max]` of `n` i.i.d. shift-exponentials with common `(μ, a)` and load
/// `r`: `r·(a + H_n/μ)`.
pub fn expected_max_time(n: usize, mu: f64, a: f64, r: usize) -> Result<f64> {
    if mu.is_nan() || mu <= 0.0 {
        return Err(Error::param("mu", "must be positive"));
    }
    if r == 0 {
        return Err(Error::param("r", "must be at least 1"));
    }
    Ok(r as f64 * (a + harmonic(n)? / mu))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;

    #[test]
    fn rejects_bad_parameters() {
        assert!(LatencyModel::new(vec![1.0, 0.0], vec![0.0, 0.0]).is_err());
        assert!(LatencyModel::new(vec![1.0], vec![-1.0]).is_err());
        assert!(LatencyModel::new(vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(LatencyModel::new(vec![], vec![]).is_err());
    }

    #[test]
    fn shift_is_a_floor() {
        let model = LatencyModel::homogeneous(1, 1.0, 20.0).unwrap();
        let mut rng = Stream::new(1).rng();
        for _ in 0..10_000 {
            assert!(model.sample_time(0, 5, &mut rng).unwrap() >= 100.0);
        }
        assert!(model.sample_time(0, 0, &mut rng).is_err());
    }

    #[test]
    fn cdf_matches_closed_form() {
        let model = LatencyModel::homogeneous(1, 2.0, 1.0).unwrap();
        assert_eq!(model.cdf(0, 3, 2.9), 0.0);
        let expect = 1.0 - (-(2.0f64 / 3.0) * 1.5).exp();
        assert!((model.cdf(0, 3, 4.5) - expect).abs() < 1e-15);
    }

    #[test]
    fn expected_max_values() {
        assert!((expected_max_time(1, 2.0, 3.0, 4).unwrap() - 4.0 * 3.5).abs() < 1e-12);
        let h100: f64 = (1..=100).map(|k| 1.0 / k as f64).sum();
        let v = expected_max_time(100, 1.0, 20.0, 5).unwrap();
        assert!((v - 5.0 * (20.0 + h100)).abs() < 1e-10);
        assert!((v - 125.9369).abs() < 1e-4);
    }
}
