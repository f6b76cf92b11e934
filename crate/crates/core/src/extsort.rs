//! External sort with simulated I/O.
//!
//! Standard replacement selection (SRS) and the segment-aware variant (MRS)
//! share one engine. MRS splits the input into segments of tuples agreeing
//! on the known sorted prefix and sorts each segment on its own; SRS is the
//! same engine with an empty known prefix, so the whole input is one segment.
//!
//! A segment that fits in memory is sorted in place and costs no I/O. A
//! segment that overflows memory goes through replacement selection, spills
//! runs to the simulated disk and is merged back with fan-in at most `M - 1`
//! before the next segment starts.
//!
//! Block counters are the ceiling of the total bytes written (or read)
//! divided by the block size.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::iter::Peekable;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::BlockConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tuple {
    pub keys: Vec<i64>,
    pub payload_bytes: u32,
}

impl Tuple {
    pub fn new(keys: Vec<i64>, payload_bytes: u32) -> Tuple {
        Tuple { keys, payload_bytes }
    }

    /// Simulated on-disk width: eight bytes per key plus the payload.
    pub fn bytes(&self) -> u64 {
        8 * self.keys.len() as u64 + self.payload_bytes as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SortSpec {
    /// Sort on key positions `0..target_order_len`.
    pub target_order_len: usize,
    /// The input is already ordered on key positions `0..known_prefix_len`.
    pub known_prefix_len: usize,
    pub cfg: BlockConfig,
}

impl SortSpec {
    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        if self.cfg.memory_blocks < 3 {
            return Err(Error::Config(format!(
                "memory_blocks must be at least 3, got {}",
                self.cfg.memory_blocks
            )));
        }
        if self.target_order_len == 0 {
            return Err(Error::Config("target_order_len must be at least 1".into()));
        }
        if self.known_prefix_len >= self.target_order_len {
            return Err(Error::Config(format!(
                "known_prefix_len {} must be below target_order_len {}",
                self.known_prefix_len, self.target_order_len
            )));
        }
        Ok(())
    }

    pub fn fan_in(&self) -> usize {
        (self.cfg.memory_blocks - 1) as usize
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SortMetrics {
    pub run_blocks_written: u64,
    pub run_blocks_read: u64,
    /// Logical comparator calls.
    pub comparisons: u64,
    /// Key positions examined across all comparator calls.
    pub positions_inspected: u64,
    pub tuples_in_before_first_out: u64,
    pub runs_generated: u64,
    pub segments: u64,
    /// Intermediate merges performed before a segment's final merge.
    pub intermediate_merges: u64,
    pub max_fan_in: u64,
    pub tuples_out: u64,
}

#[derive(Default)]
struct Counters {
    comparisons: u64,
    positions: u64,
}

impl Counters {
    /// Compare key positions `from..to`; one logical comparison.
    fn cmp(&mut self, a: &Tuple, b: &Tuple, from: usize, to: usize) -> Ordering {
        self.comparisons += 1;
        for p in from..to {
            self.positions += 1;
            match a.keys[p].cmp(&b.keys[p]) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        Ordering::Equal
    }
}

/// Binary min-heap driven by an external comparator so comparisons can be
/// counted.
struct Heap<T> {
    items: Vec<T>,
}

impl<T> Heap<T> {
    fn new() -> Self {
        Heap { items: Vec::new() }
    }

    fn len(&self) -> usize {
        self.items.len()
    }

    fn push(&mut self, x: T, less: &mut impl FnMut(&T, &T) -> bool) {
        self.items.push(x);
        let mut i = self.items.len() - 1;
        while i > 0 {
            let parent = (i - 1) / 2;
            if less(&self.items[i], &self.items[parent]) {
                self.items.swap(i, parent);
                i = parent;
            } else {
                break;
            }
        }
    }

    fn pop(&mut self, less: &mut impl FnMut(&T, &T) -> bool) -> Option<T> {
        if self.items.is_empty() {
            return None;
        }
        let last = self.items.len() - 1;
        self.items.swap(0, last);
        let top = self.items.pop();
        self.sift_down(0, less);
        top
    }

    fn sift_down(&mut self, mut i: usize, less: &mut impl FnMut(&T, &T) -> bool) {
        let n = self.items.len();
        loop {
            let (l, r) = (2 * i + 1, 2 * i + 2);
            let mut m = i;
            if l < n && less(&self.items[l], &self.items[m]) {
                m = l;
            }
            if r < n && less(&self.items[r], &self.items[m]) {
                m = r;
            }
            if m == i {
                return;
            }
            self.items.swap(i, m);
            i = m;
        }
    }

    fn heapify(items: Vec<T>, less: &mut impl FnMut(&T, &T) -> bool) -> Self {
        let mut h = Heap { items };
        for i in (0..h.items.len() / 2).rev() {
            h.sift_down(i, less);
        }
        h
    }
}

/// Lazy k-way merge of sorted runs.
struct Merger {
    runs: Vec<VecDeque<Tuple>>,
    heap: Heap<(Tuple, usize)>,
}

enum Pending {
    Idle,
    Memory(std::vec::IntoIter<Tuple>),
    Merge(Merger),
}

/// Pull-based sorted output. Metrics are complete once the stream is
/// exhausted.
pub struct SortStream<I: Iterator<Item = Tuple>> {
    input: Peekable<I>,
    spec: SortSpec,
    memory_bytes: u64,
    metrics: SortMetrics,
    counters: Counters,
    bytes_written: u128,
    bytes_read: u128,
    absorbed: u64,
    prev_prefix: Option<Vec<i64>>,
    pending: Pending,
    done: bool,
}

/// Sort with standard replacement selection; nothing is assumed about the
/// input order.
pub fn sort_srs<I: IntoIterator<Item = Tuple>>(input: I, spec: SortSpec) -> Result<SortStream<I::IntoIter>> {
    SortStream::new(
        input.into_iter(),
        SortSpec {
            known_prefix_len: 0,
            ..spec
        },
    )
}

/// Sort exploiting that the input is ordered on the first
/// `spec.known_prefix_len` key positions.
pub fn sort_mrs<I: IntoIterator<Item = Tuple>>(input: I, spec: SortSpec) -> Result<SortStream<I::IntoIter>> {
    SortStream::new(input.into_iter(), spec)
}

impl<I: Iterator<Item = Tuple>> SortStream<I> {
    fn new(input: I, spec: SortSpec) -> Result<Self> {
        spec.validate()?;
        Ok(SortStream {
            input: input.peekable(),
            spec,
            memory_bytes: spec.cfg.memory_blocks * spec.cfg.block_bytes,
            metrics: SortMetrics::default(),
            counters: Counters::default(),
            bytes_written: 0,
            bytes_read: 0,
            absorbed: 0,
            prev_prefix: None,
            pending: Pending::Idle,
            done: false,
        })
    }

    pub fn metrics(&self) -> SortMetrics {
        let block = self.spec.cfg.block_bytes as u128;
        SortMetrics {
            run_blocks_written: self.bytes_written.div_ceil(block) as u64,
            run_blocks_read: self.bytes_read.div_ceil(block) as u64,
            comparisons: self.counters.comparisons,
            positions_inspected: self.counters.positions,
            ..self.metrics.clone()
        }
    }

    /// Drain the stream, returning the sorted tuples and final metrics.
    pub fn collect_all(mut self) -> Result<(Vec<Tuple>, SortMetrics)> {
        let mut out = Vec::new();
        for t in self.by_ref() {
            out.push(t?);
        }
        Ok((out, self.metrics()))
    }

    fn prefix<'a>(&self, t: &'a Tuple) -> &'a [i64] {
        &t.keys[..self.spec.known_prefix_len]
    }

    fn check_shape(&self, t: &Tuple) -> Result<()> {
        if t.keys.len() < self.spec.target_order_len {
            return Err(Error::Config(format!(
                "tuple #{} has {} keys but the sort order needs {}",
                self.absorbed,
                t.keys.len(),
                self.spec.target_order_len
            )));
        }
        Ok(())
    }

    /// Take the next tuple if it belongs to the segment with `prefix`.
    fn next_in_segment(&mut self, prefix: &[i64]) -> Result<Option<Tuple>> {
        let k = self.spec.known_prefix_len;
        match self.input.peek() {
            Some(t) if t.keys.get(..k) == Some(prefix) => {
                let t = self.input.next().expect("peeked");
                self.check_shape(&t)?;
                self.absorbed += 1;
                Ok(Some(t))
            }
            _ => Ok(None),
        }
    }

    /// Read and sort the next segment. Returns false at end of input.
    fn load_segment(&mut self) -> Result<bool> {
        let Some(first) = self.input.next() else {
            return Ok(false);
        };
        self.check_shape(&first)?;
        let prefix = self.prefix(&first).to_vec();
        if let Some(prev) = &self.prev_prefix {
            if prefix < *prev {
                return Err(Error::UnsortedPrefix { position: self.absorbed });
            }
        }
        self.absorbed += 1;
        self.metrics.segments += 1;
        let capacity = (self.memory_bytes / first.bytes().max(1)).max(1) as usize;
        let mut buf = vec![first];
        let overflow = loop {
            if buf.len() == capacity {
                break self.next_in_segment(&prefix)?;
            }
            match self.next_in_segment(&prefix)? {
                Some(t) => buf.push(t),
                None => break None,
            }
        };
        let (k, n) = (self.spec.known_prefix_len, self.spec.target_order_len);
        match overflow {
            None => {
                let c = &mut self.counters;
                buf.sort_by(|a, b| c.cmp(a, b, k, n));
                self.pending = Pending::Memory(buf.into_iter());
            }
            Some(extra) => {
                let runs = self.replacement_selection(buf, extra, &prefix)?;
                let runs = self.reduce_runs(runs);
                self.pending = Pending::Merge(self.start_merge(runs));
            }
        }
        self.prev_prefix = Some(prefix);
        Ok(true)
    }

    /// Form runs from a full heap and the rest of the segment.
    fn replacement_selection(&mut self, buf: Vec<Tuple>, extra: Tuple, prefix: &[i64]) -> Result<Vec<VecDeque<Tuple>>> {
        let (k, n) = (self.spec.known_prefix_len, self.spec.target_order_len);
        // heap entries carry their run number; lower runs drain first
        let less =|a: &(u64, Tuple), b: &(u64, Tuple), c: &mut Counters| {
            a.0 < b.0 || (a.0 == b.0 && c.cmp(&a.1, &b.1, k, n) == Ordering::Less)
        };
        let mut heap = {
            let c = &mut self.counters;
            Heap::heapify(buf.into_iter().map(|t| (0u64, t)).collect(), &mut |a, b| less(a, b, c))
        };
        let mut runs: Vec<VecDeque<Tuple>> = Vec::new();
        let mut current: VecDeque<Tuple> = VecDeque::new();
        let mut current_run = 0u64;
        let mut incoming = Some(extra);
        while let Some(t) = incoming {
            let (run, out) = {
                let c = &mut self.counters;
                heap.pop(&mut |a, b| less(a, b, c)).expect("heap is full while input remains")
            };
            if run != current_run {
                runs.push(std::mem::take(&mut current));
                current_run = run;
            }
            let tag = if self.counters.cmp(&t, &out, k, n) == Ordering::Less {
                current_run + 1
            } else {
                current_run
            };
            self.bytes_written += out.bytes() as u128;
            current.push_back(out);
            {
                let c = &mut self.counters;
                heap.push((tag, t), &mut |a, b| less(a, b, c));
            }
            incoming = self.next_in_segment(prefix)?;
        }
        loop {
            let popped = {
                let c = &mut self.counters;
                heap.pop(&mut |a, b| less(a, b, c))
            };
            let Some((run, out)) = popped else { break };
            if run != current_run {
                runs.push(std::mem::take(&mut current));
                current_run = run;
            }
            self.bytes_written += out.bytes() as u128;
            current.push_back(out);
        }
        runs.push(current);
        self.metrics.runs_generated += runs.len() as u64;
        Ok(runs)
    }

    /// Merge the shortest runs until at most `M - 1` remain.
    fn reduce_runs(&mut self, mut runs: Vec<VecDeque<Tuple>>) -> Vec<VecDeque<Tuple>> {
        let fan_in = self.spec.fan_in();
        while runs.len() > fan_in {
            runs.sort_by_key(|r| r.len());
            let take = fan_in.min(runs.len() - fan_in + 1);
            let group: Vec<_> = runs.drain(..take).collect();
            let mut merger = self.start_merge(group);
            let mut merged = VecDeque::new();
            while let Some(t) = self.merge_next(&mut merger) {
                self.bytes_written += t.bytes() as u128;
                merged.push_back(t);
            }
            self.metrics.intermediate_merges += 1;
            runs.push(merged);
        }
        runs
    }

    fn start_merge(&mut self, mut runs: Vec<VecDeque<Tuple>>) -> Merger {
        self.metrics.max_fan_in = self.metrics.max_fan_in.max(runs.len() as u64);
        for r in &runs {
            self.bytes_read += r.iter().map(|t| t.bytes() as u128).sum::<u128>();
        }
        let (k, n) = (self.spec.known_prefix_len, self.spec.target_order_len);
        let mut heap = Heap::new();
        for (i, r) in runs.iter_mut().enumerate() {
            if let Some(t) = r.pop_front() {
                let c = &mut self.counters;
                heap.push((t, i), &mut |a: &(Tuple, usize), b: &(Tuple, usize)| {
                    c.cmp(&a.0, &b.0, k, n) == Ordering::Less
                });
            }
        }
        Merger { runs, heap }
    }

    fn merge_next(&mut self, m: &mut Merger) -> Option<Tuple> {
        let (k, n) = (self.spec.known_prefix_len, self.spec.target_order_len);
        let c = &mut self.counters;
        let mut less = |a: &(Tuple, usize), b: &(Tuple, usize)| c.cmp(&a.0, &b.0, k, n) == Ordering::Less;
        let (t, i) = m.heap.pop(&mut less)?;
        if let Some(next) = m.runs[i].pop_front() {
            m.heap.push((next, i), &mut less);
        }
        debug_assert!(m.heap.len() <= m.runs.len());
        Some(t)
    }

    fn pull(&mut self) -> Result<Option<Tuple>> {
        loop {
            let next = match &mut self.pending {
                Pending::Idle => None,
                Pending::Memory(it) => it.next(),
                Pending::Merge(_) => {
                    let Pending::Merge(mut m) = std::mem::replace(&mut self.pending, Pending::Idle) else {
                        unreachable!()
                    };
                    let t = self.merge_next(&mut m);
                    self.pending = Pending::Merge(m);
                    t
                }
            };
            if let Some(t) = next {
                if self.metrics.tuples_out == 0 {
                    self.metrics.tuples_in_before_first_out = self.absorbed;
                }
                self.metrics.tuples_out += 1;
                return Ok(Some(t));
            }
            if !self.load_segment()? {
                return Ok(None);
            }
        }
    }
}

impl<I: Iterator<Item = Tuple>> Iterator for SortStream<I> {
    type Item = Result<Tuple>;

    fn next(&mut self) -> Option<Result<Tuple>> {
        if self.done {
            return None;
        }
        match self.pull() {
            Ok(Some(t)) => Some(Ok(t)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Deterministic input whose first key is constant within each segment of
/// `segment_rows` tuples and increases between segments; other keys are
/// uniform.
pub struct SegmentedInput {
    rng: ChaCha8Rng,
    produced: u64,
    rows: u64,
    segment_rows: u64,
    key_positions: usize,
    payload_bytes: u32,
}

pub fn gen_segmented_input(
    rows: u64,
    segment_rows: u64,
    key_positions: usize,
    payload_bytes: u32,
    seed: u64,
) -> SegmentedInput {
    SegmentedInput {
        rng: ChaCha8Rng::seed_from_u64(seed),
        produced: 0,
        rows,
        segment_rows: segment_rows.max(1),
        key_positions: key_positions.max(1),
        payload_bytes,
    }
}

impl Iterator for SegmentedInput {
    type Item = Tuple;

    fn next(&mut self) -> Option<Tuple> {
        if self.produced == self.rows {
            return None;
        }
        let mut keys = Vec::with_capacity(self.key_positions);
        keys.push((self.produced / self.segment_rows) as i64);
        for _ in 1..self.key_positions {
            keys.push(self.rng.gen_range(0..1_000_000_000));
        }
        self.produced += 1;
        Some(Tuple::new(keys, self.payload_bytes))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.rows - self.produced) as usize;
        (left, Some(left))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(target: usize, known: usize, mem: u64, block: u64) -> SortSpec {
        SortSpec {
            target_order_len: target,
            known_prefix_len: known,
            cfg: BlockConfig {
                block_bytes: block,
                memory_blocks: mem,
            },
        }
    }

    fn sorted_copy(v: &[Tuple], n: usize) -> Vec<Vec<i64>> {
        let mut keys: Vec<Vec<i64>> = v.iter().map(|t| t.keys[..n].to_vec()).collect();
        keys.sort();
        keys
    }

    fn keys_of(v: &[Tuple], n: usize) -> Vec<Vec<i64>> {
        v.iter().map(|t| t.keys[..n].to_vec()).collect()
    }

    #[test]
    fn heap_orders_and_counts() {
        let mut c = 0u64;
        let mut less = |a: &i32, b: &i32| {
            c += 1;
            a < b
        };
        let mut h = Heap::heapify(vec![5, 3, 9, 1, 7], &mut less);
        h.push(0, &mut less);
        let mut out = vec![];
        while let Some(x) = h.pop(&mut less) {
            out.push(x);
        }
        assert_eq!(out, vec![0, 1, 3, 5, 7, 9]);
        assert!(c > 0);
    }

    #[test]
    fn fully_sorted_input_is_one_run() {
        let input: Vec<Tuple> = (0..5000).map(|i| Tuple::new(vec![i, 0], 100)).collect();
        let (out, m) = sort_srs(input.clone(), spec(2, 0, 4, 1024)).unwrap().collect_all().unwrap();
        assert_eq!(out, input);
        assert_eq!(m.runs_generated, 1);
        assert!(m.run_blocks_written > 0);
    }

    #[test]
    fn in_memory_input_does_no_io() {
        let input: Vec<Tuple> = gen_segmented_input(100, 100, 3, 16, 7).collect();
        let (out, m) = sort_srs(input.clone(), spec(3, 0, 10, 4096)).unwrap().collect_all().unwrap();
        assert_eq!(keys_of(&out, 3), sorted_copy(&input, 3));
        assert_eq!((m.run_blocks_written, m.run_blocks_read), (0, 0));
        assert_eq!(m.tuples_in_before_first_out, 100);
    }

    #[test]
    fn spilling_sort_is_correct_and_respects_fan_in() {
        // 40-byte tuples, 3 blocks of 128 bytes: 9 tuples fit, fan-in 2
        let input: Vec<Tuple> = gen_segmented_input(2000, 2000, 2, 24, 11).collect();
        let (out, m) = sort_srs(input.clone(), spec(2, 0, 3, 128)).unwrap().collect_all().unwrap();
        assert_eq!(keys_of(&out, 2), sorted_copy(&input, 2));
        assert!(m.runs_generated > 2);
        assert!(m.intermediate_merges > 0);
        assert!(m.max_fan_in <= 2);
        assert!(m.run_blocks_read >= m.run_blocks_written);
    }

    #[test]
    fn mrs_emits_after_one_segment() {
        let input: Vec<Tuple> = gen_segmented_input(1000, 100, 2, 16, 3).collect();
        let mut s = sort_mrs(input.clone(), spec(2, 1, 10, 4096)).unwrap();
        s.next().unwrap().unwrap();
        assert_eq!(s.metrics().tuples_in_before_first_out, 100);
        let (rest, m) = s.collect_all().unwrap();
        assert_eq!(rest.len(), 999);
        assert_eq!(m.segments, 10);
        assert_eq!(m.run_blocks_written, 0);
    }

    #[test]
    fn mrs_rejects_unsorted_prefix() {
        let input = vec![
            Tuple::new(vec![2, 1], 0),
            Tuple::new(vec![2, 0], 0),
            Tuple::new(vec![1, 5], 0),
        ];
        let err = sort_mrs(input, spec(2, 1, 10, 4096)).unwrap().collect_all().unwrap_err();
        assert!(matches!(err, Error::UnsortedPrefix { position: 2 }));
    }

    #[test]
    fn spec_validation() {
        assert!(sort_mrs(Vec::new(), spec(2, 2, 10, 4096)).is_err());
        assert!(sort_mrs(Vec::new(), spec(0, 0, 10, 4096)).is_err());
        assert!(sort_mrs(Vec::new(), spec(1, 0, 2, 4096)).is_err());
        let (out, m) = sort_mrs(Vec::new(), spec(1, 0, 3, 4096)).unwrap().collect_all().unwrap();
        assert!(out.is_empty());
        assert_eq!(m, SortMetrics::default());
        let short = vec![Tuple::new(vec![1], 0)];
        assert!(sort_srs(short, spec(2, 0, 3, 4096)).unwrap().collect_all().is_err());
    }

    #[test]
    fn generator_shape_and_determinism() {
        let a: Vec<Tuple> = gen_segmented_input(10_000, 1000, 3, 8, 42).collect();
        let b: Vec<Tuple> = gen_segmented_input(10_000, 1000, 3, 8, 42).collect();
        assert_eq!(a, b);
        let segments: std::collections::BTreeSet<i64> = a.iter().map(|t| t.keys[0]).collect();
        assert_eq!(segments.len(), 10);
        assert!(a.windows(2).all(|w| w[0].keys[0] <= w[1].keys[0]));
        let c: Vec<Tuple> = gen_segmented_input(10_000, 1000, 3, 8, 43).collect();
        assert_ne!(a, c);
    }
}
