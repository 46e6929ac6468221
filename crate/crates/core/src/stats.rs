//! Small sample-statistics helpers shared by the Monte-Carlo code.

/// Sample mean and 95% confidence half-width `1.96 · s / √n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanCi {
    pub mean: f64,
    pub ci95: f64,
}

impl MeanCi {
    /// Summarizes `values` in slice order, so the result is bit-reproducible
    /// for a fixed input order. Fewer than two values give a zero half-width.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return MeanCi {
                mean: f64::NAN,
                ci95: 0.0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return MeanCi { mean, ci95: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        MeanCi {
            mean,
            ci95: 1.96 * var.sqrt() / (n as f64).sqrt(),
        }
    }
}
