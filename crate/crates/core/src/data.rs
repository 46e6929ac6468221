//! Synthetic logistic-regression data and batch partitioning.
//!
//! Features are drawn from an equal-weight mixture of two unit-covariance
//! Gaussians centred at `±(1.5/p)·w*`, and each label is `+1` with
//! probability `κ = 1/(exp(xᵀw*) + 1)`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::rng::{keys, Stream};
use crate::{Error, Result};

/// A generated dataset with its ground-truth weights.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingSet {
    p: usize,
    d: usize,
    /// Row-major `d × p`.
    features: Vec<f64>,
    labels: Vec<f64>,
    true_weights: Vec<f64>,
    seed: u64,
}

impl TrainingSet {
    pub fn num_features(&self) -> usize {
        self.p
    }

    pub fn num_examples(&self) -> usize {
        self.d
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn example(&self, i: usize) -> &[f64] {
        &self.features[i * self.p..(i + 1) * self.p]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn true_weights(&self) -> &[f64] {
        &self.true_weights
    }

    /// `Pr(y = +1 | x_i)` under the generating model.
    pub fn kappa(&self, i: usize) -> f64 {
        kappa(dot(self.example(i), &self.true_weights))
    }

    /// Writes `y,x1,...,xp` rows to `path` and `p,d,seed,true_weights` to
    /// the sidecar returned by [`TrainingSet::meta_path`]. Weights in the
    /// sidecar are `;`-separated.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        write!(out, "y")?;
        for j in 1..=self.p {
            write!(out, ",x{j}")?;
        }
        writeln!(out)?;
        for i in 0..self.d {
            write!(out, "{}", self.labels[i])?;
            for v in self.example(i) {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        out.flush()?;

        let mut meta = BufWriter::new(File::create(Self::meta_path(path))?);
        writeln!(meta, "p,d,seed,true_weights")?;
        let w: Vec<String> = self.true_weights.iter().map(|w| w.to_string()).collect();
        writeln!(meta, "{},{},{},{}", self.p, self.d, self.seed, w.join(";"))?;
        meta.flush()?;
        Ok(())
    }

    pub fn meta_path(path: &Path) -> PathBuf {
        let mut s = path.as_os_str().to_owned();
        s.push(".meta");
        PathBuf::from(s)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let meta = std::fs::read_to_string(Self::meta_path(path))?;
        let row = meta
            .lines()
            .nth(1)
            .ok_or_else(|| Error::Format("metadata file has no value row".into()))?;
        let fields: Vec<&str> = row.splitn(4, ',').collect();
        if fields.len() != 4 {
            return Err(Error::Format("metadata row needs 4 fields".into()));
        }
        let p: usize = parse_field(fields[0], "p")?;
        let d: usize = parse_field(fields[1], "d")?;
        let seed: u64 = parse_field(fields[2], "seed")?;
        let true_weights = fields[3]
            .split(';')
            .map(|w| parse_field::<f64>(w, "true_weights"))
            .collect::<Result<Vec<_>>>()?;
        if true_weights.len() != p {
            return Err(Error::Format(format!(
                "expected {p} true weights, found {}",
                true_weights.len()
            )));
        }

        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Format("empty data file".into()))??;
        if header.split(',').count() != p + 1 {
            return Err(Error::Format("header width does not match p".into()));
        }
        let mut labels = Vec::with_capacity(d);
        let mut features = Vec::with_capacity(d * p);
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut cells = line.split(',');
            let y: f64 = parse_field(cells.next().unwrap_or(""), "y")?;
            labels.push(y);
            let before = features.len();
            for c in cells {
                features.push(parse_field::<f64>(c, "x")?);
            }
            if features.len() - before != p {
                return Err(Error::Format(format!(
                    "row {} has the wrong width",
                    labels.len()
                )));
            }
        }
        if labels.len() != d {
            return Err(Error::Format(format!(
                "expected {d} rows, found {}",
                labels.len()
            )));
        }
        let set = TrainingSet {
            p,
            d,
            features,
            labels,
            true_weights,
            seed,
        };
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<()> {
        if self
            .labels
            .iter()
            .chain(&self.true_weights)
            .any(|&v| v != 1.0 && v != -1.0)
        {
            return Err(Error::Format("labels and true weights must be ±1".into()));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("non-finite feature".into()));
        }
        Ok(())
    }
}

fn parse_field<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("cannot parse {what} from `{s}`")))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn kappa(margin: f64) -> f64 {
    1.0 / (margin.exp() + 1.0)
}

/// Draws a dataset of `d` examples with `p` features.
///
/// Each example uses its own sub-stream keyed by its index, so generation
/// runs in parallel and is still bit-identical for a given seed.
pub fn generate_dataset(p: usize, d: usize, seed: u64) -> Result<TrainingSet> {
    if p == 0 {
        return Err(Error::param("p", "must be at least 1"));
    }
    if d == 0 {
        return Err(Error::param("d", "must be at least 1"));
    }
    let root = Stream::new(seed);
    let mut wrng = root.child(keys::WEIGHTS).rng();
    let true_weights: Vec<f64> = (0..p)
        .map(|_| if wrng.random_bool(0.5) { 1.0 } else { -1.0 })
        .collect();

    let scale = 1.5 / p as f64;
    let examples = root.child(keys::EXAMPLES);
    let mut features = vec![0.0; d * p];
    let mut labels = vec![0.0; d];
    features
        .par_chunks_mut(p)
        .zip(labels.par_iter_mut())
        .enumerate()
        .for_each(|(i, (row, label))| {
            let mut rng = examples.child(i as u64).rng();
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            for (x, w) in row.iter_mut().zip(&true_weights) {
                let z: f64 = rng.sample(StandardNormal);
                *x = sign * scale * w + z;
            }
            let k = kappa(dot(row, &true_weights));
            *label = if rng.random::<f64>() < k { 1.0 } else { -1.0 };
        });

    Ok(TrainingSet {
        p,
        d,
        features,
        labels,
        true_weights,
        seed,
    })
}

/// Contiguous batches `B_1..B_⌈m/r⌉` over `0..m`.
///
/// Only real indices are stored. The last batch is conceptually topped up
/// with `padded_count` zero examples whose partial gradient is the zero
/// vector, so they never change a sum and are simply omitted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchPartition {
    m: usize,
    batch_size: usize,
    batches: Vec<Range<usize>>,
    padded_count: usize,
}

impl BatchPartition {
    pub fn num_units(&self) -> usize {
        self.m
    }

    pub fn num_batches(&self) -> usize {
        self.batches.len()
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn padded_count(&self) -> usize {
        self.padded_count
    }

    pub fn batch(&self, b: usize) -> Range<usize> {
        self.batches[b].clone()
    }

    pub fn batches(&self) -> &[Range<usize>] {
        &self.batches
    }
}

pub fn partition_batches(m: usize, r: usize) -> Result<BatchPartition> {
    if m == 0 {
        return Err(Error::param("m", "must be at least 1"));
    }
    if r == 0 || r > m {
        return Err(Error::param(
            "r",
            format!("must satisfy 1 <= r <= m = {m}, got {r}"),
        ));
    }
    let num = m.div_ceil(r);
    let batches = (0..num).map(|b| b * r..((b + 1) * r).min(m)).collect();
    Ok(BatchPartition {
        m,
        batch_size: r,
        batches,
        padded_count: num * r - m,
    })
}

/// Splits `0..m` into `groups` contiguous ranges whose sizes differ by at
/// most one, larger ranges first.
pub fn even_split(m: usize, groups: usize) -> Vec<Range<usize>> {
    let base = m / groups;
    let extra = m % groups;
    let mut start = 0;
    (0..groups)
        .map(|g| {
            let len = base + usize::from(g < extra);
            let range = start..start + len;
            start += len;
            range
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn partition_even() {
        let part = partition_batches(100, 10).unwrap();
        assert_eq!(part.num_batches(), 10);
        assert_eq!(part.padded_count(), 0);
        assert_eq!(part.batch(0), 0..10);
        assert_eq!(part.batch(9), 90..100);
    }

    #[test]
    fn partition_with_padding() {
        let part = partition_batches(7, 3).unwrap();
        assert_eq!(part.num_batches(), 3);
        assert_eq!(part.batch(2), 6..7);
        assert_eq!(part.padded_count(), 2);
    }

    #[test]
    fn partition_single_batch() {
        let part = partition_batches(5, 5).unwrap();
        assert_eq!(part.batches(), std::slice::from_ref(&(0..5)));
        assert_eq!(part.padded_count(), 0);
    }

    #[test]
    fn partition_rejects_bad_load() {
        assert!(matches!(
            partition_batches(5, 0),
            Err(Error::Parameter { name: "r", .. })
        ));
        assert!(matches!(
            partition_batches(5, 6),
            Err(Error::Parameter { name: "r", .. })
        ));
    }

    #[test]
    fn even_split_sizes() {
        let sizes: Vec<usize> = even_split(10, 4).iter().map(|r| r.len()).collect();
        assert_eq!(sizes, vec![3, 3, 2, 2]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn partition_is_disjoint_cover(m in 1usize..500, frac in 0.0f64..1.0) {
            let r = 1 + ((m - 1) as f64 * frac) as usize;
            let part = partition_batches(m, r).unwrap();
            let mut seen = vec![0u8; m];
            for (b, range) in part.batches().iter().enumerate() {
                prop_assert!(range.len() <= r);
                if b + 1 < part.num_batches() {
                    prop_assert_eq!(range.len(), r);
                }
                for j in range.clone() {
                    seen[j] += 1;
                }
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            prop_assert_eq!(part.num_batches() * r - m, part.padded_count());
        }
    }

    #[test]
    fn minimal_dataset() {
        let set = generate_dataset(1, 1, 0).unwrap();
        assert!(set.label(0) == 1.0 || set.label(0) == -1.0);
        assert!(set.example(0)[0].is_finite());
        assert!(generate_dataset(0, 1, 0).is_err());
        assert!(generate_dataset(1, 0, 0).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_dataset(13, 40, 5).unwrap();
        let b = generate_dataset(13, 40, 5).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(13, 40, 6).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn csv_round_trip() {
        let dir = std::env::temp_dir().join(format!("bcc-data-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("set.csv");
        let set = generate_dataset(4, 9, 3).unwrap();
        set.write_csv(&path).unwrap();
        let back = TrainingSet::read_csv(&path).unwrap();
        assert_eq!(set, back);
        std::fs::remove_dir_all(&dir).ok();
    }
}
