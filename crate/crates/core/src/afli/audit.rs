use super::node::{Bucket, ModelNode};
use super::{Entry, Index, Key, Node, NodeId};
use std::mem::size_of;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IndexStats {
    pub key_count: usize,
    pub model_nodes: usize,
    pub dense_nodes: usize,
    pub buckets: usize,
    /// Entries over all model nodes, empty slots included.
    pub model_entries: usize,
    /// Slots over all dense nodes, gap copies included.
    pub dense_slots: usize,
    /// Deepest node; the root is at height 1.
    pub max_height: usize,
    /// Mean height of the node holding each key.
    pub avg_height: f64,
    pub size_bytes: usize,
}

const SLOT_BYTES: usize = size_of::<(Key, u64)>();

impl Index {
    pub fn stats(&self) -> IndexStats {
        let mut s = IndexStats::default();
        let mut height_sum = 0usize;
        // (node, height); shared children are visited once per run
        let mut stack = vec![(self.root, 1usize)];
        s.size_bytes += size_of::<Self>();
        while let Some((id, h)) = stack.pop() {
            s.max_height = s.max_height.max(h);
            match self.node(id) {
                Node::Model(m) => {
                    s.model_nodes += 1;
                    s.model_entries += m.len();
                    s.size_bytes += size_of::<Node>() + m.len() * SLOT_BYTES + m.bitmap_bytes();
                    let mut prev_child = None;
                    for i in 0..m.len() {
                        match m.entry(i) {
                            Entry::Data(..) => {
                                s.key_count += 1;
                                height_sum += h;
                            }
                            Entry::Bucket(b) => {
                                let b = self.bucket(b);
                                s.buckets += 1;
                                s.key_count += b.data.len();
                                height_sum += h * b.data.len();
                                s.size_bytes += size_of::<Bucket>() + b.capacity * SLOT_BYTES;
                            }
                            Entry::Child(c) if prev_child != Some(c) => stack.push((c, h + 1)),
                            _ => {}
                        }
                        prev_child = match m.entry(i) {
                            Entry::Child(c) => Some(c),
                            _ => None,
                        };
                    }
                }
                Node::Dense(d) => {
                    s.dense_nodes += 1;
                    s.dense_slots += d.len_slots();
                    s.key_count += d.count;
                    height_sum += h * d.count;
                    s.size_bytes += size_of::<Node>() + d.len_slots() * SLOT_BYTES;
                }
                Node::Free => unreachable!("freed node reachable from root"),
            }
        }
        if s.key_count > 0 {
            s.avg_height = height_sum as f64 / s.key_count as f64;
        }
        s
    }

    /// Walks the whole tree and checks every structural invariant.
    pub fn audit(&self) -> Result<(), String> {
        let mut keys = 0usize;
        let mut seen = vec![false; self.nodes.len()];
        self.audit_node(self.root, 1, &mut Vec::new(), &mut keys, &mut seen)?;
        if keys != self.len {
            return Err(format!("index reports {} keys but holds {keys}", self.len));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if !seen[i] && !matches!(n, Node::Free) {
                return Err(format!("node {i} is live but unreachable"));
            }
        }
        let mut free = vec![false; self.buckets.len()];
        for f in &self.free_buckets {
            if std::mem::replace(&mut free[f.0 as usize], true) {
                return Err(format!("bucket {} is on the free list twice", f.0));
            }
        }
        for (i, b) in self.buckets.iter().enumerate() {
            if b.is_some() == free[i] {
                return Err(format!("bucket {i} free-list state is inconsistent"));
            }
        }
        Ok(())
    }

    /// `runs` holds, for every ancestor, its model node and the slot run
    /// `[from, to]` the path descends through.
    fn audit_node<'a>(
        &'a self,
        id: NodeId,
        depth: usize,
        runs: &mut Vec<(&'a ModelNode, usize, usize)>,
        keys: &mut usize,
        seen: &mut [bool],
    ) -> Result<(), String> {
        if depth > self.config.max_depth {
            return Err(format!("node {} at depth {depth} exceeds max depth", id.0));
        }
        if std::mem::replace(&mut seen[id.0 as usize], true) {
            return Err(format!("node {} is linked from two runs", id.0));
        }
        let in_parent = |runs: &[(&ModelNode, usize, usize)], k: Key| {
            runs.iter().all(|&(p, from, to)| (from..=to).contains(&p.slot_of(k)))
        };
        match self.node(id) {
            Node::Model(m) => {
                let mut i = 0;
                while i < m.len() {
                    match m.entry(i) {
                        Entry::Empty => {}
                        Entry::Data(k, _) => {
                            if m.slot_of(k) != i {
                                return Err(format!("node {} slot {i}: key {k} predicts {}", id.0, m.slot_of(k)));
                            }
                            if !in_parent(runs, k) {
                                return Err(format!("key {k} escapes its parent run"));
                            }
                            *keys += 1;
                        }
                        Entry::Bucket(b) => {
                            let bucket = self.bucket(b);
                            if bucket.data.len() > self.bucket_capacity || bucket.capacity != self.bucket_capacity {
                                return Err(format!("bucket {} holds {} of {}", b.0, bucket.data.len(), bucket.capacity));
                            }
                            if self.config.bucket_mode == super::BucketMode::Ordered
                                && bucket.data.windows(2).any(|w| !(w[0].0 < w[1].0))
                            {
                                return Err(format!("ordered bucket {} is unsorted", b.0));
                            }
                            for &(k, _) in &bucket.data {
                                if m.slot_of(k) != i || !in_parent(runs, k) {
                                    return Err(format!("bucket key {k} misplaced at slot {i}"));
                                }
                            }
                            *keys += bucket.data.len();
                        }
                        Entry::Child(c) => {
                            let mut j = i;
                            while j + 1 < m.len() && m.entry(j + 1) == Entry::Child(c) {
                                j += 1;
                            }
                            runs.push((m, i, j));
                            self.audit_node(c, depth + 1, runs, keys, seen)?;
                            runs.pop();
                            i = j;
                        }
                    }
                    i += 1;
                }
            }
            Node::Dense(d) => {
                d.check().map_err(|e| format!("dense node {}: {e}", id.0))?;
                for (k, _) in d.pairs() {
                    if !in_parent(runs, k) {
                        return Err(format!("dense key {k} escapes its parent run"));
                    }
                }
                *keys += d.count;
            }
            Node::Free => return Err(format!("freed node {} is linked", id.0)),
        }
        Ok(())
    }
}
