//! Closed-form recovery thresholds, communication loads and bounds.
//!
//! All logarithms are natural.

use crate::{Error, Result};

/// `H_t = Σ_{k=1}^t 1/k`, accumulated from the smallest term up.
pub fn harmonic(t: usize) -> Result<f64> {
    if t == 0 {
        return Err(Error::param("t", "harmonic numbers start at t = 1"));
    }
    Ok((1..=t).rev().map(|k| 1.0 / k as f64).sum())
}

fn check(m: usize, r: usize) -> Result<()> {
    if m == 0 {
        return Err(Error::param("m", "must be at least 1"));
    }
    if r == 0 || r > m {
        return Err(Error::param(
            "r",
            format!("must satisfy 1 <= r <= m = {m}, got {r}"),
        ));
    }
    Ok(())
}

/// BCC recovery threshold (and communication load): `⌈m/r⌉·H_⌈m/r⌉`.
pub fn k_bcc(m: usize, r: usize) -> Result<f64> {
    check(m, r)?;
    let batches = m.div_ceil(r);
    Ok(batches as f64 * harmonic(batches)?)
}

/// Cyclic repetition threshold `m − r + 1`; also its communication load.
pub fn k_cr(m: usize, r: usize) -> Result<usize> {
    check(m, r)?;
    Ok(m - r + 1)
}

/// Lower bound `m/r` on any scheme's recovery threshold.
pub fn k_lower(m: usize, r: usize) -> Result<f64> {
    check(m, r)?;
    Ok(m as f64 / r as f64)
}

/// Approximate threshold `(m/r)·ln m` of the simple randomized scheme.
pub fn k_random_approx(m: usize, r: usize) -> Result<f64> {
    check(m, r)?;
    Ok(m as f64 / r as f64 * (m as f64).ln())
}

/// Approximate communication load `m·ln m` of the simple randomized scheme.
pub fn l_random_approx(m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::param("m", "must be at least 1"));
    }
    Ok(m as f64 * (m as f64).ln())
}

/// Coupon-collector tail bound: `Pr(M ≥ (1+ε)·m·ln m) ≤ m^{−ε}`.
pub fn tail_bound(m: usize, eps: f64) -> Result<f64> {
    if m < 2 {
        return Err(Error::param("m", "must be at least 2"));
    }
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::param("eps", "must be non-negative"));
    }
    Ok((m as f64).powf(-eps))
}

/// `c = 2 + ln(a + H_n/μ)/ln m` for the coverage-time upper bound, with `a`
/// the largest shift and `μ` the smallest straggler parameter.
pub fn c_constant(a: f64, mu: f64, n: usize, m: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::param("m", "must be at least 2"));
    }
    if mu.is_nan() || mu <= 0.0 {
        return Err(Error::param("mu", "must be positive"));
    }
    Ok(2.0 + (a + harmonic(n)? / mu).ln() / (m as f64).ln())
}

/// One row of the load/threshold tradeoff.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TradeoffPoint {
    pub r: usize,
    pub k_lower: f64,
    pub k_bcc: f64,
    pub k_cr: f64,
    /// Approximation, not an exact expectation.
    pub k_random: f64,
    pub l_bcc: f64,
    pub l_random: f64,
}

pub fn tradeoff_point(m: usize, r: usize) -> Result<TradeoffPoint> {
    let k_bcc = k_bcc(m, r)?;
    Ok(TradeoffPoint {
        r,
        k_lower: k_lower(m, r)?,
        k_bcc,
        k_cr: k_cr(m, r)? as f64,
        k_random: k_random_approx(m, r)?,
        l_bcc: k_bcc,
        l_random: l_random_approx(m)?,
    })
}

/// Tradeoff rows for each `r` in `r_values`. The thresholds assume enough
/// workers for coverage, so `n` is only validated.
pub fn tradeoff_table(m: usize, n: usize, r_values: &[usize]) -> Result<Vec<TradeoffPoint>> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    r_values.iter().map(|&r| tradeoff_point(m, r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Exact `H_t` as a reduced fraction, for small `t`.
    fn harmonic_rational(t: u64) -> (u128, u128) {
        fn gcd(a: u128, b: u128) -> u128 {
            if b == 0 {
                a
            } else {
                gcd(b, a % b)
            }
        }
        let (mut num, mut den) = (0u128, 1u128);
        for k in 1..=t as u128 {
            num = num * k + den;
            den *= k;
            let g = gcd(num, den);
            num /= g;
            den /= g;
        }
        (num, den)
    }

    #[test]
    fn harmonic_small_values() {
        assert_eq!(harmonic(1).unwrap(), 1.0);
        assert_eq!(harmonic_rational(5), (137, 60));
        assert!((harmonic(5).unwrap() - 137.0 / 60.0).abs() < 1e-15);
        let (num, den) = harmonic_rational(10);
        assert!((harmonic(10).unwrap() - num as f64 / den as f64).abs() < 1e-15);
        assert!((harmonic(10).unwrap() - 2.9289682).abs() < 1e-7);
        assert!(harmonic(0).is_err());
    }

    #[test]
    fn harmonic_matches_asymptotics() {
        for t in 10..2000 {
            let approx = (t as f64).ln() + 0.5772156649;
            assert!((harmonic(t).unwrap() - approx).abs() <= 1.0 / (2.0 * t as f64));
        }
    }

    #[test]
    fn bcc_thresholds() {
        assert!((k_bcc(50, 10).unwrap() - 11.416_666_666_666_666).abs() < 1e-12);
        assert_eq!(k_bcc(100, 100).unwrap(), 1.0);
        assert!((k_bcc(100, 10).unwrap() - 29.289_682_539_682_54).abs() < 1e-10);
        assert!(k_bcc(10, 11).is_err());
    }

    #[test]
    fn coded_and_lower_thresholds() {
        assert_eq!(k_cr(100, 10).unwrap(), 91);
        assert_eq!(k_cr(50, 10).unwrap(), 41);
        assert_eq!(k_cr(30, 30).unwrap(), 1);
        assert_eq!(k_lower(30, 30).unwrap(), 1.0);
        assert!((k_random_approx(100, 10).unwrap() - 46.051_701_859_880_91).abs() < 1e-9);
        assert!((l_random_approx(100).unwrap() - 460.517_018_598_809_1).abs() < 1e-9);
    }

    #[test]
    fn tail_bounds() {
        assert_eq!(tail_bound(50, 0.0).unwrap(), 1.0);
        assert!((tail_bound(50, 1.0).unwrap() - 0.02).abs() < 1e-15);
        assert!(tail_bound(1, 1.0).is_err());
    }

    #[test]
    fn c_constant_values() {
        // a + H_1/μ = 1
        assert_eq!(c_constant(0.0, 1.0, 1, 3).unwrap(), 2.0);
        let h100 = harmonic(100).unwrap();
        let c = c_constant(20.0, 1.0, 100, 500).unwrap();
        assert!((c - (2.0 + (20.0 + h100).ln() / 500f64.ln())).abs() < 1e-14);
        assert!((c - 2.519_154_695_803).abs() < 1e-11);
    }

    #[test]
    fn tradeoff_endpoints() {
        let rows = tradeoff_table(100, 100, &[1, 100]).unwrap();
        assert_eq!(rows[0].k_lower, 100.0);
        assert_eq!(rows[0].k_cr, 100.0);
        assert!((rows[0].k_bcc - 518.737_751_763_962).abs() < 1e-9);
        assert_eq!(rows[1].k_lower, 1.0);
        assert_eq!(rows[1].k_cr, 1.0);
        assert_eq!(rows[1].k_bcc, 1.0);
        assert!((rows[1].k_random - 100f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn sweep_orderings() {
        let r_values: Vec<usize> = (1..=100).collect();
        let rows = tradeoff_table(100, 100, &r_values).unwrap();
        for w in rows.windows(2) {
            assert!(w[1].k_bcc <= w[0].k_bcc);
            assert!(w[1].k_cr < w[0].k_cr);
        }
        for row in &rows {
            assert!(row.k_lower <= row.k_bcc);
            assert_eq!(row.l_bcc, row.k_bcc);
        }
    }

    #[test]
    fn logarithmic_gap() {
        for m in 1..=120 {
            for r in 1..=m {
                let ratio = k_bcc(m, r).unwrap() / k_lower(m, r).unwrap();
                let batches = m.div_ceil(r);
                // k_bcc / k_lower = H_N · N·r/m, and N·r/m ≥ 1 only through rounding
                let gap = harmonic(batches).unwrap() * (batches * r) as f64 / m as f64;
                assert!((ratio - gap).abs() < 1e-9);
                assert!(harmonic(batches).unwrap() <= 1.0 + (batches as f64).ln() + 1e-12);
            }
        }
    }
}
