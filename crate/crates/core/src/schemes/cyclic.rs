//! Cyclic repetition gradient code.
//!
//! Row `i` of the `n × n` coefficient matrix `B` is supported on the cyclic
//! window `{i, …, i+r−1 mod n}`. With `s = r − 1`, a random `s × n` matrix
//! `H` with `H·1 = 0` is drawn and each row is solved to lie in `ker H`:
//! the leading coefficient is 1 and the other `s` follow from an `s × s`
//! system. `ker H` has dimension `n − s` and contains the all-ones vector,
//! so any `n − s = n − r + 1` generic rows span it and admit a vector `a`
//! with `aᵀ·B[S,:] = 1ᵀ`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::rng::Stream;
use crate::{Error, Result};

/// Retry budget for [`cr_build`].
pub const DEFAULT_CR_RETRIES: usize = 16;

/// Max residual `‖B[S,:]ᵀ·a − 1‖∞` accepted for a decoding vector.
const RESIDUAL_TOL: f64 = 1e-8;

/// Subset count up to which validation is exhaustive.
const EXHAUSTIVE_LIMIT: u128 = 5000;
const SAMPLED_SUBSETS: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct CyclicCode {
    n: usize,
    r: usize,
    coefficients: DMatrix<f64>,
}

pub(crate) fn support(n: usize, r: usize, i: usize) -> impl Iterator<Item = usize> {
    (0..r).map(move |k| (i + k) % n)
}

impl CyclicCode {
    pub fn num_workers(&self) -> usize {
        self.n
    }

    pub fn load(&self) -> usize {
        self.r
    }

    /// Number of workers the master needs: `n − r + 1`.
    pub fn threshold(&self) -> usize {
        self.n - self.r + 1
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    /// Units held by `worker`, in the order its gradients are combined.
    pub fn support(&self, worker: usize) -> impl Iterator<Item = usize> {
        support(self.n, self.r, worker)
    }

    /// Coefficients of `worker`'s combination, aligned with [`Self::support`].
    pub fn row_coefficients(&self, worker: usize) -> Vec<f64> {
        self.support(worker)
            .map(|j| self.coefficients[(worker, j)])
            .collect()
    }

    /// Solves `B[S,:]ᵀ·a = 1` by least squares and checks the residual.
    pub fn decoding_vector(&self, workers: &[usize]) -> Result<DVector<f64>> {
        if workers.iter().any(|&w| w >= self.n) {
            return Err(Error::Decode("worker index out of range".into()));
        }
        let sub = DMatrix::from_fn(self.n, workers.len(), |j, k| {
            self.coefficients[(workers[k], j)]
        });
        let ones = DVector::from_element(self.n, 1.0);
        let a = sub
            .clone()
            .svd(true, true)
            .solve(&ones, 1e-13)
            .map_err(|e| Error::Decode(e.to_string()))?;
        let residual = (&sub * &a - &ones).amax();
        if residual.is_nan() || residual > RESIDUAL_TOL {
            return Err(Error::Decode(format!(
                "worker subset is not decodable (residual {residual:e})"
            )));
        }
        Ok(a)
    }

    /// Checks that every subset of `n − r + 1` workers is decodable, or a
    /// random sample of them when there are too many to enumerate.
    pub fn validate(&self, stream: Stream) -> Result<()> {
        let k = self.threshold();
        if binomial(self.n, k).is_some_and(|c| c <= EXHAUSTIVE_LIMIT) {
            let mut first_err = None;
            for_each_subset(self.n, k, |s| {
                if first_err.is_none() {
                    if let Err(e) = self.decoding_vector(s) {
                        first_err = Some(e);
                    }
                }
            });
            first_err.map_or(Ok(()), Err)
        } else {
            let mut rng = stream.rng();
            for _ in 0..SAMPLED_SUBSETS {
                let subset = sample(&mut rng, self.n, k).into_vec();
                self.decoding_vector(&subset)?;
            }
            Ok(())
        }
    }

    /// Writes `B` as a headerless CSV matrix, one row per worker.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n)
                .map(|j| self.coefficients[(i, j)].to_string())
                .collect();
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Builds a cyclic repetition code for `n` workers with load `r` (`m = n`).
///
/// Each attempt draws fresh randomness from `stream.child(attempt)` and is
/// kept only if [`CyclicCode::validate`] passes.
pub fn cr_build(n: usize, r: usize, stream: Stream) -> Result<CyclicCode> {
    cr_build_with_retries(n, r, stream, DEFAULT_CR_RETRIES)
}

pub fn cr_build_with_retries(
    n: usize,
    r: usize,
    stream: Stream,
    retries: usize,
) -> Result<CyclicCode> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    if r == 0 || r > n {
        return Err(Error::param(
            "r",
            format!("must satisfy 1 <= r <= n = {n}, got {r}"),
        ));
    }
    let mut last = String::new();
    for attempt in 0..retries.max(1) {
        let s = stream.child(attempt as u64);
        match draw_code(n, r, s.child(0)) {
            Ok(code) => match code.validate(s.child(1)) {
                Ok(()) => return Ok(code),
                Err(e) => last = e.to_string(),
            },
            Err(e) => last = e.to_string(),
        }
    }
    Err(Error::Construction {
        attempts: retries.max(1),
        reason: last,
    })
}

fn draw_code(n: usize, r: usize, stream: Stream) -> Result<CyclicCode> {
    let s = r - 1;
    let mut rng = stream.rng();
    let mut h = DMatrix::<f64>::zeros(s, n);
    for row in 0..s {
        let mut total = 0.0;
        for col in 0..n - 1 {
            let v: f64 = rng.sample(StandardNormal);
            h[(row, col)] = v;
            total += v;
        }
        h[(row, n - 1)] = -total;
    }

    let mut b = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        b[(i, i)] = 1.0;
        if s == 0 {
            continue;
        }
        let rest: Vec<usize> = support(n, r, i).skip(1).collect();
        let lhs = DMatrix::from_fn(s, s, |row, k| h[(row, rest[k])]);
        let rhs = DVector::from_fn(s, |row, _| -h[(row, i)]);
        let x = lhs
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Numeric(format!("singular window system for row {i}")))?;
        for (k, &j) in rest.iter().enumerate() {
            b[(i, j)] = x[k];
        }
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite coefficient".into()));
    }
    Ok(CyclicCode {
        n,
        r,
        coefficients: b,
    })
}

/// `C(n, k)`, or `None` on overflow.
pub fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// Calls `f` on every `k`-subset of `0..n` in lexicographic order.
pub(crate) fn for_each_subset(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomials() {
        assert_eq!(binomial(20, 16), Some(4845));
        assert_eq!(binomial(5, 0), Some(1));
        assert_eq!(binomial(3, 4), Some(0));
    }

    #[test]
    fn subset_enumeration_counts() {
        let mut count = 0;
        let mut last = Vec::new();
        for_each_subset(6, 3, |s| {
            count += 1;
            last = s.to_vec();
        });
        assert_eq!(count, 20);
        assert_eq!(last, vec![3, 4, 5]);
        let mut all = 0;
        for_each_subset(4, 4, |_| all += 1);
        assert_eq!(all, 1);
        let mut none = 0;
        for_each_subset(4, 0, |s| {
            assert!(s.is_empty());
            none += 1
        });
        assert_eq!(none, 1);
    }

    #[test]
    fn load_one_is_identity() {
        let code = cr_build(7, 1, Stream::new(1)).unwrap();
        assert_eq!(code.coefficients(), &DMatrix::identity(7, 7));
        assert_eq!(code.threshold(), 7);
    }

    #[test]
    fn rows_have_cyclic_support() {
        let code = cr_build(9, 4, Stream::new(2)).unwrap();
        for i in 0..9 {
            let window: Vec<usize> = code.support(i).collect();
            for j in 0..9 {
                let v = code.coefficients()[(i, j)];
                if window.contains(&j) {
                    assert!(v != 0.0);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn full_load_decodes_from_any_worker() {
        let code = cr_build(5, 5, Stream::new(4)).unwrap();
        assert_eq!(code.threshold(), 1);
        for w in 0..5 {
            code.decoding_vector(&[w]).unwrap();
        }
    }

    #[test]
    fn too_few_workers_is_rejected() {
        let code = cr_build(8, 3, Stream::new(5)).unwrap();
        assert!(matches!(
            code.decoding_vector(&[0, 2, 4, 6, 7]),
            Err(Error::Decode(_))
        ));
    }

    #[test]
    fn threshold_for_hundred_workers() {
        let code = cr_build(100, 10, Stream::new(6)).unwrap();
        assert_eq!(code.threshold(), 91);
    }
}
