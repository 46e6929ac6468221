//! Worker messages and master-side ingestion.

use std::sync::Arc;

use super::{CyclicCode, SchemeKind};
use crate::{Error, Result};

/// The master's stopping rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CompletionRule {
    /// Every one of `n` workers must report.
    AllWorkers { n: usize },
    /// Every batch must be seen at least once.
    BatchCoverage { num_batches: usize },
    /// Every unit must be seen at least once.
    UnitCoverage { m: usize },
    /// Any `k` distinct workers suffice.
    AnyOf { k: usize },
}

/// What a single message contributes toward the completion rule.
#[derive(Clone, Copy, Debug)]
pub enum Covers<'a> {
    Batch(usize),
    Units(&'a [usize]),
    /// The sender itself counts (uncoded shards, coded messages).
    Worker,
}

/// Bookkeeping for one received message.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Received {
    pub worker_id: usize,
    pub size_units: usize,
    /// Whether the message added anything new. Duplicates are still counted
    /// toward `|W|` and the communication load.
    pub kept: bool,
}

/// Payload-free completion tracking, shared by the simulator and
/// [`DecodeState`].
#[derive(Clone, Debug)]
pub struct CoverageTracker {
    rule: CompletionRule,
    covered: Vec<bool>,
    covered_count: usize,
    received: usize,
    comm_load: usize,
    complete: bool,
}

impl CoverageTracker {
    pub fn new(rule: CompletionRule) -> Self {
        let slots = match rule {
            CompletionRule::AllWorkers { n } => n,
            CompletionRule::BatchCoverage { num_batches } => num_batches,
            CompletionRule::UnitCoverage { m } => m,
            // distinct senders; grown on demand
            CompletionRule::AnyOf { .. } => 0,
        };
        let complete = Self::target(&rule) == 0;
        CoverageTracker {
            rule,
            covered: vec![false; slots],
            covered_count: 0,
            received: 0,
            comm_load: 0,
            complete,
        }
    }

    fn target(rule: &CompletionRule) -> usize {
        match *rule {
            CompletionRule::AllWorkers { n } => n,
            CompletionRule::BatchCoverage { num_batches } => num_batches,
            CompletionRule::UnitCoverage { m } => m,
            CompletionRule::AnyOf { k } => k,
        }
    }

    pub fn rule(&self) -> &CompletionRule {
        &self.rule
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    /// `|W|`: messages received so far, duplicates included.
    pub fn received(&self) -> usize {
        self.received
    }

    /// Total normalized size of received messages.
    pub fn comm_load(&self) -> usize {
        self.comm_load
    }

    /// Batches, units, or distinct workers covered so far.
    pub fn covered_count(&self) -> usize {
        self.covered_count
    }

    fn mark(&mut self, slot: usize) -> bool {
        if slot >= self.covered.len() {
            self.covered.resize(slot + 1, false);
        }
        if self.covered[slot] {
            false
        } else {
            self.covered[slot] = true;
            self.covered_count += 1;
            true
        }
    }

    /// Records a message. Returns the new-coverage mask: for unit coverage one
    /// flag per unit in `covers`, otherwise a single flag. Messages arriving
    /// after completion are rejected with `None`.
    pub fn ingest(
        &mut self,
        worker_id: usize,
        covers: Covers<'_>,
        size_units: usize,
    ) -> Option<Vec<bool>> {
        if self.complete {
            return None;
        }
        let fresh = match (&self.rule, covers) {
            (CompletionRule::BatchCoverage { .. }, Covers::Batch(b)) => vec![self.mark(b)],
            (CompletionRule::UnitCoverage { .. }, Covers::Units(units)) => {
                units.iter().map(|&j| self.mark(j)).collect()
            }
            (CompletionRule::AllWorkers { .. } | CompletionRule::AnyOf { .. }, _) => {
                vec![self.mark(worker_id)]
            }
            (rule, covers) => panic!("message {covers:?} does not match completion rule {rule:?}"),
        };
        self.received += 1;
        self.comm_load += size_units;
        self.complete = self.covered_count >= Self::target(&self.rule);
        Some(fresh)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Payload {
    /// A plain sum of the partial gradients of one group: a BCC batch or an
    /// uncoded shard.
    Summed { group: usize, gradient: Vec<f64> },
    /// A cyclic-repetition linear combination.
    Coded { gradient: Vec<f64> },
    /// Every partial gradient sent on its own, keyed by unit.
    Separate(Vec<(usize, Vec<f64>)>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Message {
    pub worker_id: usize,
    pub payload: Payload,
    pub size_units: usize,
}

fn sum_same_length(grads: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = grads
        .first()
        .ok_or_else(|| Error::Encode("no partial gradients".into()))?;
    let mut acc = first.clone();
    for g in &grads[1..] {
        if g.len() != acc.len() {
            return Err(Error::Encode(format!(
                "gradient dimension mismatch: {} vs {}",
                g.len(),
                acc.len()
            )));
        }
        for (a, v) in acc.iter_mut().zip(g) {
            *a += v;
        }
    }
    Ok(acc)
}

/// Sums a group's partial gradients in the given order.
pub fn encode_sum(
    worker_id: usize,
    group: usize,
    partial_gradients: &[Vec<f64>],
) -> Result<Message> {
    Ok(Message {
        worker_id,
        payload: Payload::Summed {
            group,
            gradient: sum_same_length(partial_gradients)?,
        },
        size_units: 1,
    })
}

/// BCC worker message: the sum over the chosen batch, tagged with its index.
pub fn bcc_encode(
    worker_id: usize,
    batch: usize,
    partial_gradients: &[Vec<f64>],
) -> Result<Message> {
    encode_sum(worker_id, batch, partial_gradients)
}

/// Coded message `Σ_j B[i,j]·g_j` over worker `i`'s cyclic window.
/// `partial_gradients` must follow [`CyclicCode::support`] order.
pub fn cr_encode(
    code: &CyclicCode,
    worker_id: usize,
    partial_gradients: &[Vec<f64>],
) -> Result<Message> {
    if worker_id >= code.num_workers() {
        return Err(Error::Encode(format!(
            "worker {worker_id} is outside the code"
        )));
    }
    if partial_gradients.len() != code.load() {
        return Err(Error::Encode(format!(
            "worker {worker_id} holds {} units, got {} gradients",
            code.load(),
            partial_gradients.len()
        )));
    }
    let dim = partial_gradients[0].len();
    let mut acc = vec![0.0; dim];
    for (coef, g) in code
        .row_coefficients(worker_id)
        .into_iter()
        .zip(partial_gradients)
    {
        if g.len() != dim {
            return Err(Error::Encode("gradient dimension mismatch".into()));
        }
        for (a, v) in acc.iter_mut().zip(g) {
            *a += coef * v;
        }
    }
    Ok(Message {
        worker_id,
        payload: Payload::Coded { gradient: acc },
        size_units: 1,
    })
}

/// Sends each of `units`' gradients separately.
pub fn encode_separate(
    worker_id: usize,
    units: &[usize],
    partial_gradients: &[Vec<f64>],
) -> Result<Message> {
    if units.len() != partial_gradients.len() || units.is_empty() {
        return Err(Error::Encode("one gradient per unit is required".into()));
    }
    let dim = partial_gradients[0].len();
    if partial_gradients.iter().any(|g| g.len() != dim) {
        return Err(Error::Encode("gradient dimension mismatch".into()));
    }
    Ok(Message {
        worker_id,
        payload: Payload::Separate(
            units
                .iter()
                .copied()
                .zip(partial_gradients.iter().cloned())
                .collect(),
        ),
        size_units: units.len(),
    })
}

/// Master-side state: the coverage tracker plus whatever payloads must be
/// kept for decoding.
#[derive(Clone, Debug)]
pub struct DecodeState {
    scheme: SchemeKind,
    tracker: CoverageTracker,
    received: Vec<Received>,
    kept: Vec<Vec<f64>>,
    coded: Vec<(usize, Vec<f64>)>,
    code: Option<Arc<CyclicCode>>,
    dim: Option<usize>,
}

impl DecodeState {
    /// State for a summation or separate-gradient scheme.
    pub fn new(scheme: SchemeKind, rule: CompletionRule) -> Self {
        DecodeState {
            scheme,
            tracker: CoverageTracker::new(rule),
            received: Vec::new(),
            kept: Vec::new(),
            coded: Vec::new(),
            code: None,
            dim: None,
        }
    }

    pub fn bcc(num_batches: usize) -> Self {
        Self::new(
            SchemeKind::Bcc,
            CompletionRule::BatchCoverage { num_batches },
        )
    }

    pub fn cyclic(code: Arc<CyclicCode>) -> Self {
        let mut state = Self::new(
            SchemeKind::CyclicRepetition,
            CompletionRule::AnyOf {
                k: code.threshold(),
            },
        );
        state.code = Some(code);
        state
    }

    pub fn scheme(&self) -> SchemeKind {
        self.scheme
    }

    pub fn is_complete(&self) -> bool {
        self.tracker.is_complete()
    }

    pub fn received(&self) -> &[Received] {
        &self.received
    }

    pub fn tracker(&self) -> &CoverageTracker {
        &self.tracker
    }

    /// Number of payload vectors kept for decoding.
    pub fn kept_count(&self) -> usize {
        self.kept.len() + self.coded.len()
    }

    fn check_dim(&mut self, len: usize) -> Result<()> {
        match self.dim {
            Some(d) if d != len => Err(Error::Decode(format!(
                "payload dimension {len} differs from {d}"
            ))),
            _ => {
                self.dim = Some(len);
                Ok(())
            }
        }
    }

    /// Ingests one message. A message for an already covered batch or unit
    /// is recorded but its payload dropped. Messages after completion are
    /// ignored; the return value says whether the message was accepted.
    pub fn ingest(&mut self, msg: Message) -> Result<bool> {
        if self.is_complete() {
            return Ok(false);
        }
        let Message {
            worker_id,
            payload,
            size_units,
        } = msg;
        let kept = match payload {
            Payload::Summed { group, gradient } => {
                self.check_dim(gradient.len())?;
                let covers = match self.tracker.rule() {
                    CompletionRule::BatchCoverage { .. } => Covers::Batch(group),
                    CompletionRule::AllWorkers { .. } => Covers::Worker,
                    other => return Err(Error::Decode(format!("summed payload under {other:?}"))),
                };
                let fresh = self
                    .tracker
                    .ingest(worker_id, covers, size_units)
                    .expect("not complete")[0];
                if fresh {
                    self.kept.push(gradient);
                }
                fresh
            }
            Payload::Coded { gradient } => {
                if self.code.is_none() {
                    return Err(Error::Decode("coded payload without a code".into()));
                }
                self.check_dim(gradient.len())?;
                let fresh = self
                    .tracker
                    .ingest(worker_id, Covers::Worker, size_units)
                    .expect("not complete")[0];
                if fresh {
                    self.coded.push((worker_id, gradient));
                }
                fresh
            }
            Payload::Separate(parts) => {
                if !matches!(self.tracker.rule(), CompletionRule::UnitCoverage { .. }) {
                    return Err(Error::Decode("separate payload needs unit coverage".into()));
                }
                for (_, g) in &parts {
                    self.check_dim(g.len())?;
                }
                let units: Vec<usize> = parts.iter().map(|(j, _)| *j).collect();
                let fresh = self
                    .tracker
                    .ingest(worker_id, Covers::Units(&units), size_units)
                    .expect("not complete");
                let mut any = false;
                for ((_, g), new) in parts.into_iter().zip(fresh) {
                    if new {
                        self.kept.push(g);
                        any = true;
                    }
                }
                any
            }
        };
        self.received.push(Received {
            worker_id,
            size_units,
            kept,
        });
        Ok(kept)
    }

    /// Recovers `Σ_j g_j`.
    pub fn decode(&self) -> Result<Vec<f64>> {
        if !self.is_complete() {
            return Err(Error::NotReady);
        }
        let dim = self.dim.unwrap_or(0);
        if let Some(code) = &self.code {
            let workers: Vec<usize> = self.coded.iter().map(|(w, _)| *w).collect();
            let a = code.decoding_vector(&workers)?;
            let mut out = vec![0.0; dim];
            for ((_, g), coef) in self.coded.iter().zip(a.iter()) {
                for (o, v) in out.iter_mut().zip(g) {
                    *o += coef * v;
                }
            }
            return Ok(out);
        }
        let mut out = vec![0.0; dim];
        for g in &self.kept {
            for (o, v) in out.iter_mut().zip(g) {
                *o += v;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use crate::schemes::cr_build;

    fn unit(dim: usize, k: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[k] = 1.0;
        v
    }

    #[test]
    fn encode_two_vector_sum() {
        let msg = bcc_encode(0, 2, &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(msg.size_units, 1);
        assert_eq!(
            msg.payload,
            Payload::Summed {
                group: 2,
                gradient: vec![4.0, 6.0]
            }
        );
        let single = bcc_encode(0, 0, &[vec![0.5, -1.5]]).unwrap();
        assert_eq!(
            single.payload,
            Payload::Summed {
                group: 0,
                gradient: vec![0.5, -1.5]
            }
        );
    }

    #[test]
    fn encode_rejects_mismatch() {
        assert!(matches!(
            bcc_encode(0, 0, &[vec![1.0], vec![1.0, 2.0]]),
            Err(Error::Encode(_))
        ));
        assert!(matches!(bcc_encode(0, 0, &[]), Err(Error::Encode(_))));
    }

    #[test]
    fn bcc_duplicate_trace() {
        let mut state = DecodeState::bcc(5);
        let picks = [1, 1, 0, 2, 4, 3];
        for (w, &b) in picks.iter().enumerate() {
            assert!(!state.is_complete());
            state
                .ingest(bcc_encode(w, b, &[vec![b as f64]]).unwrap())
                .unwrap();
        }
        assert!(state.is_complete());
        assert_eq!(state.received().len(), 6);
        assert_eq!(state.kept_count(), 5);
        assert_eq!(state.tracker().comm_load(), 6);
        assert!(!state.received()[1].kept);
        assert_eq!(state.decode().unwrap(), vec![10.0]);
    }

    #[test]
    fn bcc_single_batch_completes_at_once() {
        let mut state = DecodeState::bcc(1);
        state
            .ingest(bcc_encode(3, 0, &[vec![2.0]]).unwrap())
            .unwrap();
        assert!(state.is_complete());
        assert_eq!(state.received().len(), 1);
    }

    #[test]
    fn decode_before_completion_fails() {
        let mut state = DecodeState::bcc(2);
        state
            .ingest(bcc_encode(0, 0, &[vec![1.0]]).unwrap())
            .unwrap();
        assert!(matches!(state.decode(), Err(Error::NotReady)));
    }

    #[test]
    fn unit_vector_coverage() {
        // m=4, r=2: batches {0,1} and {2,3}
        let mut state = DecodeState::bcc(2);
        state
            .ingest(bcc_encode(0, 1, &[unit(4, 2), unit(4, 3)]).unwrap())
            .unwrap();
        state
            .ingest(bcc_encode(1, 0, &[unit(4, 0), unit(4, 1)]).unwrap())
            .unwrap();
        assert_eq!(state.decode().unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn zero_gradients_decode_to_zero() {
        let mut state = DecodeState::bcc(1);
        state
            .ingest(bcc_encode(0, 0, &vec![vec![0.0; 3]; 4]).unwrap())
            .unwrap();
        assert_eq!(state.decode().unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn ignores_messages_after_completion() {
        let mut state = DecodeState::bcc(1);
        assert!(state
            .ingest(bcc_encode(0, 0, &[vec![1.0]]).unwrap())
            .unwrap());
        assert!(!state
            .ingest(bcc_encode(1, 0, &[vec![1.0]]).unwrap())
            .unwrap());
        assert_eq!(state.received().len(), 1);
    }

    #[test]
    fn separate_keeps_only_new_units() {
        let mut state = DecodeState::new(
            SchemeKind::SimpleRandom,
            CompletionRule::UnitCoverage { m: 3 },
        );
        state
            .ingest(encode_separate(0, &[0, 1], &[vec![1.0], vec![2.0]]).unwrap())
            .unwrap();
        assert!(!state.is_complete());
        state
            .ingest(encode_separate(1, &[1, 2], &[vec![2.0], vec![4.0]]).unwrap())
            .unwrap();
        assert!(state.is_complete());
        assert_eq!(state.tracker().comm_load(), 4);
        assert_eq!(state.decode().unwrap(), vec![7.0]);
    }

    #[test]
    fn cr_all_ones_row_is_plain_sum() {
        let code = cr_build(4, 1, Stream::new(0)).unwrap();
        let msg = cr_encode(&code, 2, &[vec![3.0, 1.0]]).unwrap();
        assert_eq!(
            msg.payload,
            Payload::Coded {
                gradient: vec![3.0, 1.0]
            }
        );
        assert!(matches!(
            cr_encode(&code, 2, &[vec![1.0], vec![1.0]]),
            Err(Error::Encode(_))
        ));
    }

    #[test]
    fn cr_zero_gradients() {
        let code = cr_build(6, 3, Stream::new(1)).unwrap();
        let msg = cr_encode(&code, 5, &vec![vec![0.0; 2]; 3]).unwrap();
        assert_eq!(
            msg.payload,
            Payload::Coded {
                gradient: vec![0.0; 2]
            }
        );
    }

    #[test]
    fn cr_end_to_end() {
        let n = 10;
        let r = 3;
        let code = Arc::new(cr_build(n, r, Stream::new(11)).unwrap());
        let grads: Vec<Vec<f64>> = (0..n)
            .map(|j| vec![j as f64 + 0.5, (j * j) as f64 - 3.0])
            .collect();
        let expect: Vec<f64> = (0..2).map(|c| grads.iter().map(|g| g[c]).sum()).collect();
        let mut state = DecodeState::cyclic(code.clone());
        for w in [9, 3, 0, 7, 5, 1, 2, 8] {
            let local: Vec<Vec<f64>> = code.support(w).map(|j| grads[j].clone()).collect();
            state.ingest(cr_encode(&code, w, &local).unwrap()).unwrap();
        }
        assert!(state.is_complete());
        assert_eq!(state.received().len(), n - r + 1);
        let got = state.decode().unwrap();
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).abs() <= 1e-8 * e.abs().max(1.0));
        }
    }
}
