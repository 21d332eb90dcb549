//! The two-stage index: keys pass through the flow (or not), then AFLI.
//!
//! The flow maps keys to floats through a sum of latent coordinates, which is
//! neither order-preserving nor guaranteed injective. With the flow active the
//! index therefore stores a record id per transformed key and checks the
//! original key on every hit; the rare distinct keys that land on an occupied
//! transformed key live in a small overflow map.

use crate::afli::{Index, IndexConfig, IndexError, Key, Payload};
use crate::conflict::{switch_decision, ConflictError, SwitchDecision};
use crate::numflow::{FlowError, FlowParams, DEFAULT_BATCH};
use ordered_float::OrderedFloat;
use std::collections::BTreeMap;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NflError {
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Conflict(#[from] ConflictError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlowMode {
    /// Use the flow iff it does not worsen the tail conflict degree.
    #[default]
    Auto,
    On,
    Off,
}

impl std::str::FromStr for FlowMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(Self::Auto),
            "on" => Ok(Self::On),
            "off" => Ok(Self::Off),
            other => Err(format!("unknown flow mode {other:?}")),
        }
    }
}

impl std::fmt::Display for FlowMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Auto => "auto",
            Self::On => "on",
            Self::Off => "off",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Op {
    Lookup(Key),
    Insert(Key, Payload),
    Update(Key, Payload),
    Delete(Key),
}

impl Op {
    #[inline]
    pub fn key(&self) -> Key {
        match *self {
            Op::Lookup(k) | Op::Insert(k, _) | Op::Update(k, _) | Op::Delete(k) => k,
        }
    }

    pub fn is_read(&self) -> bool {
        matches!(self, Op::Lookup(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OpOutcome {
    Found(Option<Payload>),
    Done,
    Failed(IndexError),
}

impl<T> From<Result<T, IndexError>> for OpOutcome {
    fn from(r: Result<T, IndexError>) -> Self {
        match r {
            Ok(_) => OpOutcome::Done,
            Err(e) => OpOutcome::Failed(e),
        }
    }
}

/// Operations and their positionally aligned outcomes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RequestBatch {
    pub ops: Vec<Op>,
    pub results: Vec<OpOutcome>,
}

impl RequestBatch {
    pub fn new(ops: Vec<Op>) -> Self {
        Self {
            ops,
            results: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NflConfig {
    pub index: IndexConfig,
    pub flow_mode: FlowMode,
    /// Keys per flow call during bulk loading.
    pub transform_batch: usize,
}

impl Default for NflConfig {
    fn default() -> Self {
        Self {
            index: IndexConfig::default(),
            flow_mode: FlowMode::Auto,
            transform_batch: DEFAULT_BATCH,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BulkTimings {
    pub transform_s: f64,
    pub build_s: f64,
}

#[derive(Debug, Clone)]
pub struct NflIndex {
    flow: FlowParams,
    use_flow: bool,
    decision: Option<SwitchDecision>,
    index: Index,
    config: NflConfig,
    /// Original key and payload per record id; used only with the flow on.
    records: Vec<(Key, Payload)>,
    free_records: Vec<u64>,
    overflow: BTreeMap<OrderedFloat<Key>, Payload>,
    span: Option<(Key, Key)>,
    timings: BulkTimings,
    scratch: Vec<Key>,
}

/// Builds the two-stage index over sorted, unique pairs.
pub fn nfl_bulkload(pairs: &[(Key, Payload)], flow: FlowParams, config: NflConfig) -> Result<NflIndex, NflError> {
    NflIndex::bulkload(pairs, flow, config)
}

/// Runs every op of `batch` in order and fills `batch.results`.
pub fn nfl_execute(index: &mut NflIndex, batch: &mut RequestBatch) {
    index.execute(batch)
}

impl NflIndex {
    pub fn bulkload(pairs: &[(Key, Payload)], flow: FlowParams, config: NflConfig) -> Result<Self, NflError> {
        config.index.validate()?;
        flow.validate()?;
        let mut this = Self {
            flow,
            use_flow: false,
            decision: None,
            index: Index::empty(config.index),
            config,
            records: Vec::new(),
            free_records: Vec::new(),
            overflow: BTreeMap::new(),
            span: pairs.first().zip(pairs.last()).map(|(a, b)| (a.0, b.0)),
            timings: BulkTimings::default(),
            scratch: Vec::new(),
        };
        if config.flow_mode == FlowMode::Off || pairs.is_empty() {
            let t = Instant::now();
            this.index = Index::bulkload(pairs, config.index)?;
            this.timings.build_s = t.elapsed().as_secs_f64();
            return Ok(this);
        }

        for (i, w) in pairs.windows(2).enumerate() {
            if w[0].0 == w[1].0 {
                return Err(IndexError::DuplicateKey(w[0].0).into());
            }
            if !(w[0].0 < w[1].0) {
                return Err(IndexError::NotSorted(i + 1).into());
            }
        }
        let t = Instant::now();
        let keys: Vec<Key> = pairs.iter().map(|p| p.0).collect();
        let transformed = crate::numflow::transform_keys_batched(&keys, &this.flow, config.transform_batch);
        this.timings.transform_s = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let decision = switch_decision(&keys, &transformed, config.index.alpha, config.index.gamma)?;
        this.decision = Some(decision);
        this.use_flow = match config.flow_mode {
            FlowMode::On => true,
            FlowMode::Auto => decision.use_flow,
            FlowMode::Off => unreachable!(),
        };
        if !this.use_flow {
            this.index = Index::bulkload(pairs, config.index)?;
            this.timings.build_s = t.elapsed().as_secs_f64();
            return Ok(this);
        }

        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.sort_by(|&a, &b| transformed[a].total_cmp(&transformed[b]));
        let mut loaded: Vec<(Key, Payload)> = Vec::with_capacity(pairs.len());
        for i in order {
            let z = transformed[i];
            if loaded.last().is_some_and(|l| l.0 == z) {
                this.overflow.insert(OrderedFloat(pairs[i].0), pairs[i].1);
                continue;
            }
            loaded.push((z, this.records.len() as u64));
            this.records.push(pairs[i]);
        }
        this.index = Index::bulkload(&loaded, config.index)?;
        this.timings.build_s = t.elapsed().as_secs_f64();
        Ok(this)
    }

    pub fn use_flow(&self) -> bool {
        self.use_flow
    }

    /// Tail conflict degrees measured at bulk load, when the flow ran.
    pub fn decision(&self) -> Option<SwitchDecision> {
        self.decision
    }

    pub fn flow(&self) -> &FlowParams {
        &self.flow
    }

    pub fn index(&self) -> &Index {
        &self.index
    }

    pub fn config(&self) -> &NflConfig {
        &self.config
    }

    pub fn timings(&self) -> BulkTimings {
        self.timings
    }

    pub fn len(&self) -> usize {
        self.index.len() + self.overflow.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Index plus record arena, overflow and flow parameters.
    pub fn size_bytes(&self) -> usize {
        let mut bytes = self.index.stats().size_bytes;
        if self.use_flow {
            bytes += self.flow.size_bytes()
                + self.records.capacity() * std::mem::size_of::<(Key, Payload)>()
                + self.free_records.capacity() * 8
                + self.overflow.len() * 2 * std::mem::size_of::<(Key, Payload)>();
        }
        bytes
    }

    /// Checks the underlying index and the record bookkeeping.
    pub fn audit(&self) -> Result<(), String> {
        self.index.audit()?;
        if self.use_flow {
            let live = self.records.len() - self.free_records.len();
            if live != self.index.len() {
                return Err(format!("{live} live records for {} indexed keys", self.index.len()));
            }
        } else if !self.overflow.is_empty() {
            return Err("overflow in use without the flow".into());
        }
        Ok(())
    }

    #[inline]
    fn transform_one(&self, key: Key) -> Key {
        self.flow.transform_key(key)
    }

    fn in_span(&self, key: Key) -> bool {
        matches!(self.span, Some((lo, hi)) if key >= lo && key <= hi)
    }

    pub fn lookup(&self, key: Key) -> Option<Payload> {
        if self.use_flow {
            self.lookup_z(key, self.transform_one(key))
        } else {
            self.index.lookup(key)
        }
    }

    pub fn insert(&mut self, key: Key, payload: Payload) -> Result<(), IndexError> {
        if self.use_flow {
            let z = self.transform_one(key);
            self.insert_z(key, z, payload)
        } else {
            self.index.insert(key, payload)
        }
    }

    pub fn update(&mut self, key: Key, payload: Payload) -> Result<(), IndexError> {
        if self.use_flow {
            let z = self.transform_one(key);
            self.update_z(key, z, payload)
        } else {
            self.index.update(key, payload)
        }
    }

    pub fn delete(&mut self, key: Key) -> Result<(), IndexError> {
        if self.use_flow {
            let z = self.transform_one(key);
            self.delete_z(key, z)
        } else {
            self.index.delete(key)
        }
    }

    /// Record id stored under `z` if it belongs to `key`.
    #[inline]
    fn record_of(&self, key: Key, z: Key) -> Result<usize, bool> {
        match self.index.lookup(z) {
            Some(r) if self.records[r as usize].0 == key => Ok(r as usize),
            Some(_) => Err(true),
            None => Err(false),
        }
    }

    #[inline]
    fn lookup_z(&self, key: Key, z: Key) -> Option<Payload> {
        match self.record_of(key, z) {
            Ok(r) => Some(self.records[r].1),
            Err(_) if self.overflow.is_empty() => None,
            Err(_) => self.overflow.get(&OrderedFloat(key)).copied(),
        }
    }

    fn insert_z(&mut self, key: Key, z: Key, payload: Payload) -> Result<(), IndexError> {
        if !self.in_span(key) {
            return Err(IndexError::OutOfKeySpace);
        }
        match self.record_of(key, z) {
            Ok(_) => Err(IndexError::AlreadyExists),
            Err(occupied) => {
                if self.overflow.contains_key(&OrderedFloat(key)) {
                    return Err(IndexError::AlreadyExists);
                }
                if occupied {
                    self.overflow.insert(OrderedFloat(key), payload);
                    return Ok(());
                }
                let rid = match self.free_records.pop() {
                    Some(r) => {
                        self.records[r as usize] = (key, payload);
                        r
                    }
                    None => {
                        self.records.push((key, payload));
                        (self.records.len() - 1) as u64
                    }
                };
                self.index.insert_unbounded(z, rid).inspect_err(|_| {
                    self.free_records.push(rid);
                })
            }
        }
    }

    fn update_z(&mut self, key: Key, z: Key, payload: Payload) -> Result<(), IndexError> {
        match self.record_of(key, z) {
            Ok(r) => {
                self.records[r].1 = payload;
                Ok(())
            }
            Err(_) => match self.overflow.get_mut(&OrderedFloat(key)) {
                Some(v) => {
                    *v = payload;
                    Ok(())
                }
                None => Err(IndexError::NotFound),
            },
        }
    }

    fn delete_z(&mut self, key: Key, z: Key) -> Result<(), IndexError> {
        match self.record_of(key, z) {
            Ok(r) => {
                self.index.delete(z)?;
                self.free_records.push(r as u64);
                Ok(())
            }
            Err(_) => match self.overflow.remove(&OrderedFloat(key)) {
                Some(_) => Ok(()),
                None => Err(IndexError::NotFound),
            },
        }
    }

    /// Transforms all keys of the batch in one flow call, then applies the
    /// ops in order.
    pub fn execute(&mut self, batch: &mut RequestBatch) {
        batch.results.clear();
        batch.results.reserve(batch.ops.len());
        if !self.use_flow {
            for op in &batch.ops {
                let outcome = match *op {
                    Op::Lookup(k) => OpOutcome::Found(self.index.lookup(k)),
                    Op::Insert(k, v) => self.index.insert(k, v).into(),
                    Op::Update(k, v) => self.index.update(k, v).into(),
                    Op::Delete(k) => self.index.delete(k).into(),
                };
                batch.results.push(outcome);
            }
            return;
        }
        let mut keys = std::mem::take(&mut self.scratch);
        keys.clear();
        keys.extend(batch.ops.iter().map(Op::key));
        let mut zs = vec![0.0; keys.len()];
        self.flow.transform_batch(&keys, &mut zs);
        for (op, &z) in batch.ops.iter().zip(&zs) {
            let outcome = match *op {
                Op::Lookup(k) => OpOutcome::Found(self.lookup_z(k, z)),
                Op::Insert(k, v) => self.insert_z(k, z, v).into(),
                Op::Update(k, v) => self.update_z(k, z, v).into(),
                Op::Delete(k) => self.delete_z(k, z).into(),
            };
            batch.results.push(outcome);
        }
        self.scratch = keys;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keycodec::fit_codec;
    use crate::numflow::FlowParams;

    fn pairs(keys: &[f64]) -> Vec<(Key, Payload)> {
        keys.iter().enumerate().map(|(i, &k)| (k, i as u64)).collect()
    }

    fn bypass(keys: &[f64]) -> FlowParams {
        FlowParams::bypass(fit_codec(keys, 1024.0, 2).unwrap(), 2, 2)
    }

    #[test]
    fn bypass_forced_on_serves_every_key() {
        let keys: Vec<f64> = (0..500).map(|i| (i as f64).powi(3)).collect();
        let config = NflConfig {
            flow_mode: FlowMode::On,
            ..NflConfig::default()
        };
        let idx = nfl_bulkload(&pairs(&keys), bypass(&keys), config).unwrap();
        assert!(idx.use_flow());
        for (i, &k) in keys.iter().enumerate() {
            assert_eq!(idx.lookup(k), Some(i as u64));
        }
        assert_eq!(idx.lookup(2.0), None);
        idx.audit().unwrap();
    }

    #[test]
    fn batch_matches_serial_and_isolates_errors() {
        let keys: Vec<f64> = (0..100).map(|i| i as f64 * 10.0).collect();
        for mode in [FlowMode::On, FlowMode::Off] {
            let config = NflConfig {
                flow_mode: mode,
                ..NflConfig::default()
            };
            let mut batched = nfl_bulkload(&pairs(&keys), bypass(&keys), config).unwrap();
            let mut serial = batched.clone();
            let ops = vec![
                Op::Lookup(10.0),
                Op::Insert(15.0, 1),
                Op::Insert(15.0, 2),
                Op::Lookup(15.0),
                Op::Update(15.0, 3),
                Op::Insert(5000.0, 0),
                Op::Delete(10.0),
                Op::Lookup(10.0),
                Op::Delete(10.0),
                Op::Lookup(15.0),
            ];
            let mut batch = RequestBatch::new(ops.clone());
            nfl_execute(&mut batched, &mut batch);
            let expected = vec![
                OpOutcome::Found(Some(1)),
                OpOutcome::Done,
                OpOutcome::Failed(IndexError::AlreadyExists),
                OpOutcome::Found(Some(1)),
                OpOutcome::Done,
                OpOutcome::Failed(IndexError::OutOfKeySpace),
                OpOutcome::Done,
                OpOutcome::Found(None),
                OpOutcome::Failed(IndexError::NotFound),
                OpOutcome::Found(Some(3)),
            ];
            assert_eq!(batch.results, expected, "{mode}");
            let one_by_one: Vec<OpOutcome> = ops
                .iter()
                .map(|op| match *op {
                    Op::Lookup(k) => OpOutcome::Found(serial.lookup(k)),
                    Op::Insert(k, v) => serial.insert(k, v).into(),
                    Op::Update(k, v) => serial.update(k, v).into(),
                    Op::Delete(k) => serial.delete(k).into(),
                })
                .collect();
            assert_eq!(one_by_one, expected);
            batched.audit().unwrap();
        }
    }

    #[test]
    fn colliding_transforms_fall_back_to_overflow() {
        // `key - min` rounds every small key onto the same value
        let keys = [-1e300, 0.0, 1.0, 1.0 + 1e-12, 2.0, 1e300];
        let codec = fit_codec(&keys, 1024.0, 2).unwrap();
        let flow = FlowParams::bypass(codec, 2, 2);
        assert_eq!(flow.transform_key(1.0), flow.transform_key(2.0));
        let config = NflConfig {
            flow_mode: FlowMode::On,
            ..NflConfig::default()
        };
        let mut idx = nfl_bulkload(&pairs(&keys), flow, config).unwrap();
        for (i, &k) in keys.iter().enumerate() {
            assert_eq!(idx.lookup(k), Some(i as u64));
        }
        assert_eq!(idx.lookup(3.0), None);
        idx.insert(3.0, 33).unwrap();
        assert_eq!(idx.insert(3.0, 34), Err(IndexError::AlreadyExists));
        idx.update(2.0, 22).unwrap();
        assert_eq!(idx.lookup(2.0), Some(22));
        idx.delete(-1e300).unwrap();
        idx.delete(0.0).unwrap();
        idx.delete(1.0).unwrap();
        assert_eq!(idx.lookup(2.0), Some(22));
        assert_eq!(idx.lookup(3.0), Some(33));
        assert_eq!(idx.lookup(1.0), None);
        assert_eq!(idx.len(), keys.len() - 2);
        idx.audit().unwrap();
    }

    #[test]
    fn auto_rejects_non_injective_flow() {
        let keys = [-1e300, 1.0, 2.0, 1e300];
        let flow = FlowParams::bypass(fit_codec(&keys, 1024.0, 2).unwrap(), 2, 2);
        let idx = nfl_bulkload(&pairs(&keys), flow, NflConfig::default()).unwrap();
        assert!(!idx.use_flow());
        assert!(!idx.decision().unwrap().injective);
        assert_eq!(idx.lookup(1.0), Some(1));
    }

    #[test]
    fn empty_bulkload() {
        let flow = bypass(&[0.0, 1.0]);
        let mut idx = nfl_bulkload(&[], flow, NflConfig::default()).unwrap();
        assert_eq!(idx.lookup(1.0), None);
        assert_eq!(idx.insert(1.0, 1), Err(IndexError::OutOfKeySpace));
    }
}
