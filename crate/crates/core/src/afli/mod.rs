//! After-flow learned index.
//!
//! A tree of three node kinds:
//!
//! * model nodes, which place every key exactly at the slot their linear
//!   model predicts (no local search),
//! * buckets, short arrays hanging off a model-node slot that absorb small
//!   local conflicts,
//! * dense nodes, ordered gapped arrays for keys too close for a model to
//!   separate.
//!
//! Bulk loading computes the tail conflict degree of the whole key set once
//! and uses it as the bucket capacity and dense-node gap count for the
//! lifetime of the index. Full buckets and full dense nodes are rebuilt by the
//! same modelling routine that bulk loading uses.

mod audit;
mod dense;
mod node;

pub use audit::IndexStats;
pub use node::{BucketId, BucketMode, Entry, NodeId};

use crate::conflict::{conflict_degrees, fit_scaled_ranks, tail_conflict_degree};
use dense::{DenseInsert, DenseNode};
use node::{Bucket, ModelNode};
use thiserror::Error;

pub type Key = f64;
pub type Payload = u64;

const EMPTY_ROOT_SLOTS: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("duplicate key {0} in bulk load input")]
    DuplicateKey(Key),
    #[error("bulk load input is not sorted at position {0}")]
    NotSorted(usize),
    #[error("key already exists")]
    AlreadyExists,
    #[error("key not found")]
    NotFound,
    #[error("key lies outside the bulk-loaded key span")]
    OutOfKeySpace,
    #[error("modelling exceeded the maximum depth {0}")]
    DepthExceeded(usize),
    #[error("invalid index configuration: {0}")]
    InvalidConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexConfig {
    /// Space amplification factor for model-node arrays.
    pub alpha: f64,
    /// Tail percent for the tail conflict degree.
    pub gamma: f64,
    /// Upper bound on bucket capacity.
    pub bucket_cap: usize,
    pub max_depth: usize,
    pub bucket_mode: BucketMode,
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            gamma: crate::conflict::DEFAULT_GAMMA,
            bucket_cap: 6,
            max_depth: 64,
            bucket_mode: BucketMode::Linear,
        }
    }
}

impl IndexConfig {
    pub fn validate(&self) -> Result<(), IndexError> {
        if !(self.alpha >= 1.0) || !self.alpha.is_finite() {
            return Err(IndexError::InvalidConfig("alpha must be >= 1"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(IndexError::InvalidConfig("gamma must be in (0, 1]"));
        }
        if self.bucket_cap < 2 {
            return Err(IndexError::InvalidConfig("bucket_cap must be >= 2"));
        }
        if self.max_depth < 1 {
            return Err(IndexError::InvalidConfig("max_depth must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Node {
    Model(ModelNode),
    Dense(DenseNode),
    Free,
}

#[derive(Debug, Clone)]
pub struct Index {
    nodes: Vec<Node>,
    buckets: Vec<Option<Bucket>>,
    free_nodes: Vec<NodeId>,
    free_buckets: Vec<BucketId>,
    root: NodeId,
    config: IndexConfig,
    tail: usize,
    bucket_capacity: usize,
    len: usize,
    span: Option<(Key, Key)>,
}

enum Step {
    Done(Result<(), IndexError>),
    Descend(NodeId),
    SplitBucket { node: NodeId, slot: usize, bucket: BucketId },
    RebuildDense(NodeId),
}

impl Index {
    pub fn empty(config: IndexConfig) -> Self {
        Self {
            nodes: vec![Node::Dense(DenseNode::with_gaps(&[], EMPTY_ROOT_SLOTS))],
            buckets: Vec::new(),
            free_nodes: Vec::new(),
            free_buckets: Vec::new(),
            root: NodeId(0),
            config,
            tail: 1,
            bucket_capacity: 2,
            len: 0,
            span: None,
        }
    }

    /// Builds an index over strictly increasing keys.
    pub fn bulkload(pairs: &[(Key, Payload)], config: IndexConfig) -> Result<Self, IndexError> {
        config.validate()?;
        for (i, w) in pairs.windows(2).enumerate() {
            if w[0].0 == w[1].0 {
                return Err(IndexError::DuplicateKey(w[0].0));
            }
            if !(w[0].0 < w[1].0) {
                return Err(IndexError::NotSorted(i + 1));
            }
        }
        if pairs.iter().any(|p| !p.0.is_finite()) {
            return Err(IndexError::InvalidConfig("keys must be finite"));
        }
        let mut index = Self::empty(config);
        if pairs.is_empty() {
            return Ok(index);
        }
        let keys: Vec<Key> = pairs.iter().map(|p| p.0).collect();
        let model = fit_scaled_ranks(&keys, config.alpha);
        index.tail = tail_conflict_degree(&conflict_degrees(&keys, &model), config.gamma)
            .expect("non-empty key set has an occupied position");
        index.bucket_capacity = index.tail.min(config.bucket_cap).max(2);
        index.nodes.clear();
        index.root = index.modelling(pairs, 1)?;
        index.len = pairs.len();
        index.span = Some((keys[0], keys[keys.len() - 1]));
        Ok(index)
    }

    pub fn config(&self) -> &IndexConfig {
        &self.config
    }

    /// Tail conflict degree fixed at bulk load.
    pub fn tail_conflict(&self) -> usize {
        self.tail
    }

    /// Capacity of every bucket in this index.
    pub fn bucket_capacity(&self) -> usize {
        self.bucket_capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// `[min, max]` of the bulk-loaded keys.
    pub fn span(&self) -> Option<(Key, Key)> {
        self.span
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    fn alloc_node(&mut self, node: Node) -> NodeId {
        if let Some(id) = self.free_nodes.pop() {
            self.nodes[id.0 as usize] = node;
            id
        } else {
            self.nodes.push(node);
            NodeId((self.nodes.len() - 1) as u32)
        }
    }

    fn alloc_bucket(&mut self, bucket: Bucket) -> BucketId {
        if let Some(id) = self.free_buckets.pop() {
            self.buckets[id.0 as usize] = Some(bucket);
            id
        } else {
            self.buckets.push(Some(bucket));
            BucketId((self.buckets.len() - 1) as u32)
        }
    }

    fn free_bucket(&mut self, id: BucketId) -> Bucket {
        let b = self.buckets[id.0 as usize].take().expect("live bucket");
        self.free_buckets.push(id);
        b
    }

    #[inline]
    fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0 as usize]
    }

    #[inline]
    fn bucket(&self, id: BucketId) -> &Bucket {
        self.buckets[id.0 as usize].as_ref().expect("live bucket")
    }

    #[inline]
    fn bucket_mut(&mut self, id: BucketId) -> &mut Bucket {
        self.buckets[id.0 as usize].as_mut().expect("live bucket")
    }

    fn dense(&mut self, pairs: &[(Key, Payload)]) -> NodeId {
        self.alloc_node(Node::Dense(DenseNode::with_gaps(pairs, self.tail)))
    }

    /// Builds a subtree over sorted, unique pairs and returns its root.
    pub(crate) fn modelling(&mut self, pairs: &[(Key, Payload)], depth: usize) -> Result<NodeId, IndexError> {
        if depth > self.config.max_depth {
            return Err(IndexError::DepthExceeded(self.config.max_depth));
        }
        let n = pairs.len();
        let keys: Vec<Key> = pairs.iter().map(|p| p.0).collect();
        let mut model = fit_scaled_ranks(&keys, self.config.alpha);
        // the deepest level never recurses, so inserts cannot fail on depth
        if n < 2 || model.slope == 0.0 || depth == self.config.max_depth {
            return Ok(self.dense(pairs));
        }
        let first = model.predict(keys[0]);
        let last = model.predict(keys[n - 1]);
        if first == last {
            return Ok(self.dense(pairs));
        }
        // anchor the first prediction at slot 0
        model.intercept -= first as f64;
        let span = (last - first + 1).max(1) as usize;
        let size = ((n as f64 * self.config.alpha).floor() as usize).min(span).max(1);
        let mut node = ModelNode::new(model, size);
        let slots: Vec<usize> = keys.iter().map(|&k| node.slot_of(k)).collect();
        if slots[0] == slots[n - 1] {
            return Ok(self.dense(pairs));
        }

        let cap = self.bucket_capacity;
        // (first slot, last slot, start, end) of runs that become children
        let mut runs: Vec<(usize, usize, usize, usize)> = Vec::new();
        let mut i = 0;
        while i < n {
            let pos = slots[i];
            let mut j = i + 1;
            while j < n && slots[j] == pos {
                j += 1;
            }
            let degree = j - i;
            if degree == 1 {
                node.set(pos, Entry::Data(pairs[i].0, pairs[i].1));
                i = j;
            } else if degree < cap {
                let bucket = Bucket::new(pairs[i..j].to_vec(), cap, self.config.bucket_mode);
                let id = self.alloc_bucket(bucket);
                node.set(pos, Entry::Bucket(id));
                i = j;
            } else {
                // extend over following adjacent slots whose degree exceeds cap
                let mut last_pos = pos;
                let mut end = j;
                loop {
                    let next_pos = last_pos + 1;
                    if end >= n || slots[end] != next_pos {
                        break;
                    }
                    let mut k = end;
                    while k < n && slots[k] == next_pos {
                        k += 1;
                    }
                    if k - end <= cap {
                        break;
                    }
                    last_pos = next_pos;
                    end = k;
                }
                runs.push((pos, last_pos, i, end));
                i = end;
            }
        }
        for (from, to, start, end) in runs {
            let child = if end - start == n {
                self.dense(pairs)
            } else {
                self.modelling(&pairs[start..end], depth + 1)?
            };
            for s in from..=to {
                node.set(s, Entry::Child(child));
            }
        }
        Ok(self.alloc_node(Node::Model(node)))
    }

    pub fn lookup(&self, key: Key) -> Option<Payload> {
        let mut id = self.root;
        loop {
            match self.node(id) {
                Node::Model(m) => {
                    let slot = m.slot_of(key);
                    match m.entry(slot) {
                        Entry::Empty => return None,
                        Entry::Data(k, v) => return (k == key).then_some(v),
                        Entry::Bucket(b) => {
                            let b = self.bucket(b);
                            return b.position(key, self.config.bucket_mode).map(|i| b.data[i].1);
                        }
                        Entry::Child(c) => id = c,
                    }
                }
                Node::Dense(d) => return d.get(key),
                Node::Free => unreachable!("freed node reachable from root"),
            }
        }
    }

    /// Inserts a pair whose key lies within the bulk-loaded span.
    pub fn insert(&mut self, key: Key, payload: Payload) -> Result<(), IndexError> {
        match self.span {
            Some((lo, hi)) if key >= lo && key <= hi => self.insert_unbounded(key, payload),
            _ => Err(IndexError::OutOfKeySpace),
        }
    }

    /// Inserts without the key-span check. Keys outside the span are routed to
    /// the boundary slots by clamping.
    pub fn insert_unbounded(&mut self, key: Key, payload: Payload) -> Result<(), IndexError> {
        if !key.is_finite() {
            return Err(IndexError::OutOfKeySpace);
        }
        let mut id = self.root;
        let mut depth = 1;
        loop {
            let step = self.insert_step(id, key, payload);
            match step {
                Step::Done(r) => {
                    if r.is_ok() {
                        self.len += 1;
                    }
                    return r;
                }
                Step::Descend(child) => {
                    id = child;
                    depth += 1;
                }
                Step::SplitBucket { node, slot, bucket } => {
                    let mut pairs = self.bucket(bucket).data.clone();
                    pairs.push((key, payload));
                    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                    let child = self.modelling(&pairs, depth + 1)?;
                    self.free_bucket(bucket);
                    match &mut self.nodes[node.0 as usize] {
                        Node::Model(m) => m.set(slot, Entry::Child(child)),
                        _ => unreachable!(),
                    }
                    self.len += 1;
                    return Ok(());
                }
                Step::RebuildDense(node) => {
                    let mut pairs = match self.node(node) {
                        Node::Dense(d) => d.pairs(),
                        _ => unreachable!(),
                    };
                    let at = pairs.partition_point(|p| p.0 < key);
                    pairs.insert(at, (key, payload));
                    let fresh = self.modelling(&pairs, depth)?;
                    self.nodes.swap(node.0 as usize, fresh.0 as usize);
                    self.nodes[fresh.0 as usize] = Node::Free;
                    self.free_nodes.push(fresh);
                    self.len += 1;
                    return Ok(());
                }
            }
        }
    }

    fn insert_step(&mut self, id: NodeId, key: Key, payload: Payload) -> Step {
        let mode = self.config.bucket_mode;
        let cap = self.bucket_capacity;
        match &mut self.nodes[id.0 as usize] {
            Node::Model(m) => {
                let slot = m.slot_of(key);
                match m.entry(slot) {
                    Entry::Empty => {
                        m.set(slot, Entry::Data(key, payload));
                        Step::Done(Ok(()))
                    }
                    Entry::Data(k, _) if k == key => Step::Done(Err(IndexError::AlreadyExists)),
                    Entry::Data(k, v) => {
                        let bucket = Bucket::new(vec![(k, v), (key, payload)], cap, mode);
                        let b = self.alloc_bucket(bucket);
                        match &mut self.nodes[id.0 as usize] {
                            Node::Model(m) => m.set(slot, Entry::Bucket(b)),
                            _ => unreachable!(),
                        }
                        Step::Done(Ok(()))
                    }
                    Entry::Bucket(b) => {
                        let bucket = self.bucket_mut(b);
                        if bucket.position(key, mode).is_some() {
                            Step::Done(Err(IndexError::AlreadyExists))
                        } else if bucket.is_full() {
                            Step::SplitBucket {
                                node: id,
                                slot,
                                bucket: b,
                            }
                        } else {
                            bucket.push(key, payload, mode);
                            Step::Done(Ok(()))
                        }
                    }
                    Entry::Child(c) => Step::Descend(c),
                }
            }
            Node::Dense(d) => match d.insert(key, payload) {
                DenseInsert::Inserted => Step::Done(Ok(())),
                DenseInsert::Exists => Step::Done(Err(IndexError::AlreadyExists)),
                DenseInsert::Full => Step::RebuildDense(id),
            },
            Node::Free => unreachable!("freed node reachable from root"),
        }
    }

    /// Overwrites the payload of an existing key in place.
    pub fn update(&mut self, key: Key, payload: Payload) -> Result<(), IndexError> {
        let mode = self.config.bucket_mode;
        let mut id = self.root;
        loop {
            let next = match &mut self.nodes[id.0 as usize] {
                Node::Model(m) => {
                    let slot = m.slot_of(key);
                    match m.entry(slot) {
                        Entry::Empty => return Err(IndexError::NotFound),
                        Entry::Data(k, _) if k == key => {
                            m.set_payload(slot, payload);
                            return Ok(());
                        }
                        Entry::Data(..) => return Err(IndexError::NotFound),
                        Entry::Bucket(b) => {
                            let bucket = self.bucket_mut(b);
                            return match bucket.position(key, mode) {
                                Some(i) => {
                                    bucket.data[i].1 = payload;
                                    Ok(())
                                }
                                None => Err(IndexError::NotFound),
                            };
                        }
                        Entry::Child(c) => c,
                    }
                }
                Node::Dense(d) => {
                    return if d.update(key, payload) {
                        Ok(())
                    } else {
                        Err(IndexError::NotFound)
                    }
                }
                Node::Free => unreachable!("freed node reachable from root"),
            };
            id = next;
        }
    }

    pub fn delete(&mut self, key: Key) -> Result<(), IndexError> {
        let mode = self.config.bucket_mode;
        let mut id = self.root;
        loop {
            let next = match &mut self.nodes[id.0 as usize] {
                Node::Model(m) => {
                    let slot = m.slot_of(key);
                    match m.entry(slot) {
                        Entry::Empty => return Err(IndexError::NotFound),
                        Entry::Data(k, _) if k == key => {
                            m.set(slot, Entry::Empty);
                            self.len -= 1;
                            return Ok(());
                        }
                        Entry::Data(..) => return Err(IndexError::NotFound),
                        Entry::Bucket(b) => {
                            let bucket = self.bucket_mut(b);
                            return match bucket.position(key, mode) {
                                Some(i) => {
                                    bucket.remove(i, mode);
                                    self.len -= 1;
                                    Ok(())
                                }
                                None => Err(IndexError::NotFound),
                            };
                        }
                        Entry::Child(c) => c,
                    }
                }
                Node::Dense(d) => {
                    return if d.delete(key) {
                        self.len -= 1;
                        Ok(())
                    } else {
                        Err(IndexError::NotFound)
                    }
                }
                Node::Free => unreachable!("freed node reachable from root"),
            };
            id = next;
        }
    }

    /// Decoded entries of a model node, or `None` for other node kinds.
    pub fn model_entries(&self, id: NodeId) -> Option<Vec<Entry>> {
        match self.node(id) {
            Node::Model(m) => Some((0..m.len()).map(|i| m.entry(i)).collect()),
            _ => None,
        }
    }

    /// Slope and intercept of a model node.
    pub fn model_of(&self, id: NodeId) -> Option<crate::conflict::LinearModel> {
        match self.node(id) {
            Node::Model(m) => Some(m.model),
            _ => None,
        }
    }

    /// Live pairs of a bucket.
    pub fn bucket_pairs(&self, id: BucketId) -> Vec<(Key, Payload)> {
        self.bucket(id).data.clone()
    }

    /// Raw slot contents of a dense node, gap copies included.
    pub fn dense_slots(&self, id: NodeId) -> Option<Vec<(Key, Payload)>> {
        match self.node(id) {
            Node::Dense(d) => Some(d.data.clone()),
            _ => None,
        }
    }
}
