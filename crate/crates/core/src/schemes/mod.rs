//! Data placement, worker encoding, master completion rules and decoding.
//!
//! Every scheme works on *placement units*. When the dataset has more
//! examples than there are workers, examples are grouped into contiguous
//! super-examples first and a unit's partial gradient is the sum over its
//! group.
//!
//! | scheme            | placement                      | message          | master stops when            |
//! |-------------------|--------------------------------|------------------|------------------------------|
//! | uncoded           | disjoint contiguous shards     | shard sum        | all `n` workers reported     |
//! | simple randomized | random `r`-subset per worker   | each gradient    | units cover `0..m`           |
//! | cyclic repetition | cyclic window of `r` units     | coded combination| any `m − r + 1` workers      |
//! | BCC               | one uniformly chosen batch     | batch sum        | every batch seen once        |
//! | generalized BCC   | random `r_i`-subset per worker | each gradient    | units cover `0..m`           |

mod cyclic;
mod decode;

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use std::sync::Arc;

use crate::data::{even_split, BatchPartition};
use crate::rng::Stream;
use crate::{Error, Result};

pub use cyclic::{binomial, cr_build, CyclicCode, DEFAULT_CR_RETRIES};
pub use decode::{
    bcc_encode, cr_encode, encode_separate, encode_sum, CompletionRule, CoverageTracker, Covers,
    DecodeState, Message, Payload, Received,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    Uncoded,
    SimpleRandom,
    CyclicRepetition,
    Bcc,
    GeneralizedBcc,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 5] = [
        SchemeKind::Uncoded,
        SchemeKind::SimpleRandom,
        SchemeKind::CyclicRepetition,
        SchemeKind::Bcc,
        SchemeKind::GeneralizedBcc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Uncoded => "uncoded",
            SchemeKind::SimpleRandom => "random",
            SchemeKind::CyclicRepetition => "cr",
            SchemeKind::Bcc => "bcc",
            SchemeKind::GeneralizedBcc => "gbcc",
        }
    }

    /// Whether workers send every partial gradient separately rather than a
    /// single combined vector.
    pub fn sends_separately(self) -> bool {
        matches!(self, SchemeKind::SimpleRandom | SchemeKind::GeneralizedBcc)
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::param(
                    "scheme",
                    format!("unknown scheme `{s}` (expected uncoded|random|cr|bcc|gbcc)"),
                )
            })
    }
}

/// The bipartite data-assignment graph: which units each worker processes,
/// plus what the master needs to know to apply the completion rule.
#[derive(Clone, Debug, PartialEq)]
pub struct Placement {
    scheme: SchemeKind,
    m: usize,
    assignments: Vec<Vec<usize>>,
    /// BCC only: the batch each worker picked.
    batch_of: Option<Vec<usize>>,
    rule: CompletionRule,
}

impl Placement {
    pub fn scheme(&self) -> SchemeKind {
        self.scheme
    }

    pub fn num_workers(&self) -> usize {
        self.assignments.len()
    }

    pub fn num_units(&self) -> usize {
        self.m
    }

    pub fn units(&self, worker: usize) -> &[usize] {
        &self.assignments[worker]
    }

    pub fn assignments(&self) -> &[Vec<usize>] {
        &self.assignments
    }

    pub fn load(&self, worker: usize) -> usize {
        self.assignments[worker].len()
    }

    pub fn loads(&self) -> Vec<usize> {
        self.assignments.iter().map(Vec::len).collect()
    }

    /// Computational load: the largest `|G_i|`.
    pub fn max_load(&self) -> usize {
        self.assignments.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn batch_of(&self, worker: usize) -> Option<usize> {
        self.batch_of.as_ref().map(|b| b[worker])
    }

    pub fn completion_rule(&self) -> &CompletionRule {
        &self.rule
    }

    /// Normalized size of worker `i`'s message; zero for a worker holding no
    /// data, which never sends anything.
    pub fn size_units(&self, worker: usize) -> usize {
        let load = self.load(worker);
        if load == 0 {
            0
        } else if self.scheme.sends_separately() {
            load
        } else {
            1
        }
    }

    /// What worker `i`'s message contributes toward completion.
    pub fn covers(&self, worker: usize) -> Covers<'_> {
        match self.scheme {
            SchemeKind::Bcc => Covers::Batch(
                self.batch_of(worker)
                    .expect("BCC placement records batch choices"),
            ),
            SchemeKind::SimpleRandom | SchemeKind::GeneralizedBcc => {
                Covers::Units(self.units(worker))
            }
            SchemeKind::Uncoded | SchemeKind::CyclicRepetition => Covers::Worker,
        }
    }

    /// Whether the union of all `G_i` is `0..m`.
    pub fn covers_all(&self) -> bool {
        let mut seen = vec![false; self.m];
        for &j in self.assignments.iter().flatten() {
            seen[j] = true;
        }
        seen.into_iter().all(|s| s)
    }

    /// Writes `worker_id,unit_index` rows, both 1-based.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "worker_id,unit_index")?;
        for (i, units) in self.assignments.iter().enumerate() {
            for j in units {
                writeln!(out, "{},{}", i + 1, j + 1)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// BCC placement: worker `i` picks batch `σ_i` uniformly from its own
/// sub-stream `stream.child(i)`, independently of every other worker.
pub fn bcc_place(n: usize, partition: &BatchPartition, stream: Stream) -> Result<Placement> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    let num_batches = partition.num_batches();
    let batch_of: Vec<usize> = (0..n)
        .map(|i| stream.child(i as u64).rng().random_range(0..num_batches))
        .collect();
    bcc_assign(partition, batch_of)
}

/// BCC placement from explicit batch choices `σ_i`.
pub fn bcc_assign(partition: &BatchPartition, batch_of: Vec<usize>) -> Result<Placement> {
    let num_batches = partition.num_batches();
    if batch_of.is_empty() {
        return Err(Error::param("n", "must be at least 1"));
    }
    if let Some(&bad) = batch_of.iter().find(|&&b| b >= num_batches) {
        return Err(Error::param(
            "batch",
            format!("{bad} is not below {num_batches}"),
        ));
    }
    let assignments = batch_of
        .iter()
        .map(|&b| partition.batch(b).collect())
        .collect();
    Ok(Placement {
        scheme: SchemeKind::Bcc,
        m: partition.num_units(),
        assignments,
        batch_of: Some(batch_of),
        rule: CompletionRule::BatchCoverage { num_batches },
    })
}

/// Uncoded placement: `m` units split into `n` contiguous shards whose sizes
/// differ by at most one.
pub fn uncoded_place(n: usize, m: usize) -> Result<Placement> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    if m < n {
        return Err(Error::param(
            "m",
            format!("uncoded placement needs m >= n = {n}, got {m}"),
        ));
    }
    let loads: Vec<usize> = even_split(m, n).iter().map(|r| r.len()).collect();
    disjoint_place(&loads)
}

/// Disjoint contiguous shards with the given sizes; `m` is their sum. The
/// master has to hear from every worker.
pub fn disjoint_place(loads: &[usize]) -> Result<Placement> {
    if loads.is_empty() {
        return Err(Error::param("n", "must be at least 1"));
    }
    if loads.contains(&0) {
        return Err(Error::param("loads", "disjoint shards must be non-empty"));
    }
    let mut start = 0;
    let assignments: Vec<Vec<usize>> = loads
        .iter()
        .map(|&l| {
            let shard = (start..start + l).collect();
            start += l;
            shard
        })
        .collect();
    Ok(Placement {
        scheme: SchemeKind::Uncoded,
        m: start,
        rule: CompletionRule::AllWorkers { n: loads.len() },
        assignments,
        batch_of: None,
    })
}

/// Simple randomized placement: every worker draws an `r`-subset of `0..m`
/// uniformly without replacement.
pub fn random_place(n: usize, m: usize, r: usize, stream: Stream) -> Result<Placement> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    check_load(r, m)?;
    let mut placement = subset_place(&vec![r; n], m, stream)?;
    placement.scheme = SchemeKind::SimpleRandom;
    Ok(placement)
}

/// Generalized BCC placement: worker `i` draws `loads[i]` distinct units
/// uniformly at random. A load of zero excludes the worker.
pub fn gbcc_place(loads: &[usize], m: usize, stream: Stream) -> Result<Placement> {
    if loads.is_empty() {
        return Err(Error::param("n", "must be at least 1"));
    }
    if m == 0 {
        return Err(Error::param("m", "must be at least 1"));
    }
    if let Some(&bad) = loads.iter().find(|&&l| l > m) {
        return Err(Error::param("loads", format!("load {bad} exceeds m = {m}")));
    }
    subset_place(loads, m, stream)
}

fn subset_place(loads: &[usize], m: usize, stream: Stream) -> Result<Placement> {
    let assignments = loads
        .iter()
        .enumerate()
        .map(|(i, &l)| {
            let mut rng = stream.child(i as u64).rng();
            let mut units = rand::seq::index::sample(&mut rng, m, l).into_vec();
            units.sort_unstable();
            units
        })
        .collect();
    Ok(Placement {
        scheme: SchemeKind::GeneralizedBcc,
        m,
        assignments,
        batch_of: None,
        rule: CompletionRule::UnitCoverage { m },
    })
}

/// Cyclic repetition placement with `m = n`: worker `i` holds units
/// `i, i+1, …, i+r−1 (mod n)` and any `n − r + 1` workers suffice.
pub fn cyclic_place(n: usize, r: usize) -> Result<Placement> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    check_load(r, n)?;
    let assignments = (0..n).map(|i| cyclic::support(n, r, i).collect()).collect();
    Ok(Placement {
        scheme: SchemeKind::CyclicRepetition,
        m: n,
        assignments,
        batch_of: None,
        rule: CompletionRule::AnyOf { k: n - r + 1 },
    })
}

fn check_load(r: usize, m: usize) -> Result<()> {
    if r == 0 || r > m {
        return Err(Error::param(
            "r",
            format!("must satisfy 1 <= r <= {m}, got {r}"),
        ));
    }
    Ok(())
}

/// Worker `worker`'s message under `placement`, given every unit's partial
/// gradient. Cyclic repetition needs its code.
pub fn encode_worker(
    placement: &Placement,
    code: Option<&CyclicCode>,
    worker: usize,
    unit_gradients: &[Vec<f64>],
) -> Result<Message> {
    let pick = |units: &mut dyn Iterator<Item = usize>| -> Vec<Vec<f64>> {
        units.map(|j| unit_gradients[j].clone()).collect()
    };
    let units = placement.units(worker);
    match placement.scheme() {
        SchemeKind::Bcc => {
            let batch = placement
                .batch_of(worker)
                .expect("BCC placement records batches");
            bcc_encode(worker, batch, &pick(&mut units.iter().copied()))
        }
        SchemeKind::Uncoded => encode_sum(worker, worker, &pick(&mut units.iter().copied())),
        SchemeKind::CyclicRepetition => {
            let code =
                code.ok_or_else(|| Error::Encode("cyclic repetition needs its code".into()))?;
            cr_encode(code, worker, &pick(&mut code.support(worker)))
        }
        SchemeKind::SimpleRandom | SchemeKind::GeneralizedBcc => {
            encode_separate(worker, units, &pick(&mut units.iter().copied()))
        }
    }
}

impl DecodeState {
    /// Master state matching `placement`.
    pub fn for_placement(placement: &Placement, code: Option<Arc<CyclicCode>>) -> Result<Self> {
        match (placement.scheme(), code) {
            (SchemeKind::CyclicRepetition, Some(code)) => Ok(DecodeState::cyclic(code)),
            (SchemeKind::CyclicRepetition, None) => {
                Err(Error::Decode("cyclic repetition needs its code".into()))
            }
            (kind, _) => Ok(DecodeState::new(kind, placement.completion_rule().clone())),
        }
    }
}

/// A scheme together with its parameters, able to produce placements.
#[derive(Clone, Debug, PartialEq)]
pub enum SchemeSpec {
    /// Nearly even disjoint shards.
    Uncoded,
    /// Disjoint shards of prescribed sizes (the load-balancing baseline).
    Disjoint {
        loads: Vec<usize>,
    },
    SimpleRandom {
        r: usize,
    },
    CyclicRepetition {
        r: usize,
    },
    Bcc {
        r: usize,
    },
    GeneralizedBcc {
        loads: Vec<usize>,
    },
}

impl SchemeSpec {
    pub fn kind(&self) -> SchemeKind {
        match self {
            SchemeSpec::Uncoded | SchemeSpec::Disjoint { .. } => SchemeKind::Uncoded,
            SchemeSpec::SimpleRandom { .. } => SchemeKind::SimpleRandom,
            SchemeSpec::CyclicRepetition { .. } => SchemeKind::CyclicRepetition,
            SchemeSpec::Bcc { .. } => SchemeKind::Bcc,
            SchemeSpec::GeneralizedBcc { .. } => SchemeKind::GeneralizedBcc,
        }
    }

    /// Builds the homogeneous variant of `kind` with load `r`.
    pub fn homogeneous(kind: SchemeKind, n: usize, r: usize) -> Self {
        match kind {
            SchemeKind::Uncoded => SchemeSpec::Uncoded,
            SchemeKind::SimpleRandom => SchemeSpec::SimpleRandom { r },
            SchemeKind::CyclicRepetition => SchemeSpec::CyclicRepetition { r },
            SchemeKind::Bcc => SchemeSpec::Bcc { r },
            SchemeKind::GeneralizedBcc => SchemeSpec::GeneralizedBcc { loads: vec![r; n] },
        }
    }

    /// Whether placements depend on randomness.
    pub fn is_randomized(&self) -> bool {
        matches!(
            self,
            SchemeSpec::SimpleRandom { .. }
                | SchemeSpec::Bcc { .. }
                | SchemeSpec::GeneralizedBcc { .. }
        )
    }

    /// Places `m` units on `n` workers. Cyclic repetition requires `m = n`.
    pub fn place(&self, n: usize, m: usize, stream: Stream) -> Result<Placement> {
        match self {
            SchemeSpec::Uncoded => uncoded_place(n, m),
            SchemeSpec::Disjoint { loads } => {
                let p = disjoint_place(loads)?;
                if p.num_workers() != n || p.num_units() != m {
                    return Err(Error::param(
                        "loads",
                        "shard sizes must give n workers and m units",
                    ));
                }
                Ok(p)
            }
            SchemeSpec::SimpleRandom { r } => random_place(n, m, *r, stream),
            SchemeSpec::CyclicRepetition { r } => {
                if m != n {
                    return Err(Error::param(
                        "m",
                        format!("cyclic repetition needs m = n = {n}, got {m}"),
                    ));
                }
                cyclic_place(n, *r)
            }
            SchemeSpec::Bcc { r } => bcc_place(n, &crate::data::partition_batches(m, *r)?, stream),
            SchemeSpec::GeneralizedBcc { loads } => {
                if loads.len() != n {
                    return Err(Error::param(
                        "loads",
                        format!("expected {n} loads, got {}", loads.len()),
                    ));
                }
                gbcc_place(loads, m, stream)
            }
        }
    }
}
