//! Ordered, gapped array for keys a linear model cannot tell apart.
//!
//! A gap slot holds a copy of the element in front of it, so the array is
//! always non-decreasing and a slot is a gap exactly when it equals its
//! predecessor. The first occurrence of a key is the live element.

use super::{Key, Payload};

#[derive(Debug, Clone)]
pub(crate) struct DenseNode {
    pub(crate) data: Vec<(Key, Payload)>,
    /// Live elements; 0 means every slot is free.
    pub(crate) count: usize,
}

pub(crate) enum DenseInsert {
    Inserted,
    Exists,
    Full,
}

impl DenseNode {
    /// Lays out `pairs` (sorted, unique) followed by `gaps` evenly spread
    /// gap copies.
    pub(crate) fn with_gaps(pairs: &[(Key, Payload)], gaps: usize) -> Self {
        let n = pairs.len();
        if n == 0 {
            return Self {
                data: vec![(0.0, 0); gaps.max(1)],
                count: 0,
            };
        }
        let mut data = Vec::with_capacity(n + gaps);
        for (i, &pair) in pairs.iter().enumerate() {
            let copies = (i + 1) * gaps / n - i * gaps / n;
            data.extend(std::iter::repeat_n(pair, copies + 1));
        }
        Self { data, count: n }
    }

    pub(crate) fn len_slots(&self) -> usize {
        self.data.len()
    }

    pub(crate) fn find(&self, key: Key) -> Option<usize> {
        if self.count == 0 {
            return None;
        }
        let p = self.data.partition_point(|e| e.0 < key);
        (p < self.data.len() && self.data[p].0 == key).then_some(p)
    }

    pub(crate) fn get(&self, key: Key) -> Option<Payload> {
        self.find(key).map(|p| self.data[p].1)
    }

    fn run_end(&self, start: usize) -> usize {
        let key = self.data[start].0;
        let mut e = start;
        while e + 1 < self.data.len() && self.data[e + 1].0 == key {
            e += 1;
        }
        e
    }

    #[inline]
    fn is_gap(&self, idx: usize) -> bool {
        idx >= 1 && self.data[idx].0 == self.data[idx - 1].0
    }

    pub(crate) fn insert(&mut self, key: Key, payload: Payload) -> DenseInsert {
        if self.count == 0 {
            self.data.fill((key, payload));
            self.count = 1;
            return DenseInsert::Inserted;
        }
        let len = self.data.len();
        let p = self.data.partition_point(|e| e.0 < key);
        if p < len && self.data[p].0 == key {
            return DenseInsert::Exists;
        }
        if self.count == len {
            return DenseInsert::Full;
        }
        // Gap copies directly in front of the insertion point: take them over.
        if p > 0 && self.is_gap(p - 1) {
            let mut q = p - 1;
            while self.is_gap(q) {
                q -= 1;
            }
            self.data[q + 1..p].fill((key, payload));
            self.count += 1;
            return DenseInsert::Inserted;
        }
        let left = (1..p).rev().find(|&g| self.is_gap(g));
        let right = (p.max(1)..len).find(|&g| self.is_gap(g));
        let use_right = match (left, right) {
            (Some(l), Some(r)) => r - p <= p - l,
            (None, Some(_)) => true,
            (Some(_), None) => false,
            (None, None) => unreachable!("count < len implies a gap"),
        };
        if use_right {
            let g = right.expect("checked");
            self.data.copy_within(p..g, p + 1);
            self.data[p] = (key, payload);
        } else {
            let g = left.expect("checked");
            self.data.copy_within(g + 1..p, g);
            self.data[p - 1] = (key, payload);
        }
        self.count += 1;
        DenseInsert::Inserted
    }

    pub(crate) fn update(&mut self, key: Key, payload: Payload) -> bool {
        let Some(q) = self.find(key) else {
            return false;
        };
        let e = self.run_end(q);
        for slot in &mut self.data[q..=e] {
            slot.1 = payload;
        }
        true
    }

    /// Removes `key`; its slots become gap copies of a neighbour.
    pub(crate) fn delete(&mut self, key: Key) -> bool {
        let Some(q) = self.find(key) else {
            return false;
        };
        let e = self.run_end(q);
        if q > 0 {
            let prev = self.data[q - 1];
            self.data[q..=e].fill(prev);
        } else if e + 1 < self.data.len() {
            let next = self.data[e + 1];
            self.data[..=e].fill(next);
        }
        self.count -= 1;
        true
    }

    /// Live pairs in key order.
    pub(crate) fn pairs(&self) -> Vec<(Key, Payload)> {
        if self.count == 0 {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(self.count);
        for (i, &pair) in self.data.iter().enumerate() {
            if i == 0 || pair.0 != self.data[i - 1].0 {
                out.push(pair);
            }
        }
        out
    }

    pub(crate) fn check(&self) -> Result<(), String> {
        if self.count == 0 {
            return Ok(());
        }
        let mut live = 1;
        for i in 1..self.data.len() {
            let (a, b) = (self.data[i - 1], self.data[i]);
            if b.0 < a.0 || b.0.is_nan() {
                return Err(format!("dense array decreases at slot {i}"));
            }
            if b.0 == a.0 {
                if b.1 != a.1 {
                    return Err(format!("gap copy at slot {i} has a stale payload"));
                }
            } else {
                live += 1;
            }
        }
        if live != self.count {
            return Err(format!("dense count {} but {live} live keys", self.count));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn pairs(keys: &[f64]) -> Vec<(Key, Payload)> {
        keys.iter().map(|&k| (k, k as u64 * 10)).collect()
    }

    #[test]
    fn even_gap_layout() {
        let d = DenseNode::with_gaps(&pairs(&[1.0, 2.0, 3.0, 4.0]), 2);
        let keys: Vec<f64> = d.data.iter().map(|e| e.0).collect();
        assert_eq!(keys, vec![1.0, 2.0, 2.0, 3.0, 4.0, 4.0]);
        assert_eq!(d.count, 4);
        d.check().unwrap();
    }

    #[test]
    fn lookups_hit_first_occurrence() {
        let d = DenseNode::with_gaps(&pairs(&[1.0, 2.0, 3.0]), 3);
        assert_eq!(d.get(2.0), Some(20));
        assert_eq!(d.get(2.5), None);
        assert_eq!(d.get(0.0), None);
        assert_eq!(d.get(9.0), None);
    }

    #[test]
    fn insert_uses_gaps_then_reports_full() {
        let mut d = DenseNode::with_gaps(&pairs(&[10.0, 20.0, 30.0]), 2);
        for k in [15.0, 5.0] {
            assert!(matches!(d.insert(k, 1), DenseInsert::Inserted));
            d.check().unwrap();
        }
        assert!(matches!(d.insert(25.0, 1), DenseInsert::Full));
        assert!(matches!(d.insert(10.0, 1), DenseInsert::Exists));
        assert_eq!(d.get(5.0), Some(1));
        assert_eq!(d.get(30.0), Some(300));
    }

    #[test]
    fn delete_head_and_tail() {
        let mut d = DenseNode::with_gaps(&pairs(&[1.0, 2.0, 3.0]), 1);
        assert!(d.delete(1.0));
        d.check().unwrap();
        assert_eq!(d.get(1.0), None);
        assert_eq!(d.get(2.0), Some(20));
        assert!(d.delete(3.0));
        assert!(d.delete(2.0));
        assert_eq!(d.count, 0);
        assert!(!d.delete(2.0));
        assert!(matches!(d.insert(7.0, 70), DenseInsert::Inserted));
        assert_eq!(d.get(7.0), Some(70));
        d.check().unwrap();
    }

    #[test]
    fn empty_node() {
        let mut d = DenseNode::with_gaps(&[], 16);
        assert_eq!(d.len_slots(), 16);
        assert_eq!(d.get(1.0), None);
        assert!(matches!(d.insert(1.0, 1), DenseInsert::Inserted));
        assert_eq!(d.pairs(), vec![(1.0, 1)]);
    }

    #[derive(Debug, Clone)]
    enum Op {
        Insert(u8),
        Delete(u8),
        Update(u8, u64),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            3 => any::<u8>().prop_map(Op::Insert),
            1 => any::<u8>().prop_map(Op::Delete),
            1 => (any::<u8>(), any::<u64>()).prop_map(|(k, v)| Op::Update(k, v)),
        ]
    }

    proptest! {
        #[test]
        fn matches_reference_map(init in prop::collection::btree_set(any::<u8>(), 0..20), gaps in 1usize..8, ops in prop::collection::vec(op(), 0..80)) {
            let init: Vec<(Key, Payload)> = init.iter().map(|&k| (k as f64, k as u64)).collect();
            let mut d = DenseNode::with_gaps(&init, gaps);
            let mut reference: BTreeMap<u8, u64> = init.iter().map(|&(k, v)| (k as u8, v)).collect();
            for op in ops {
                match op {
                    Op::Insert(k) => match d.insert(k as f64, k as u64 + 1000) {
                        DenseInsert::Inserted => { prop_assert!(reference.insert(k, k as u64 + 1000).is_none()); }
                        DenseInsert::Exists => prop_assert!(reference.contains_key(&k)),
                        DenseInsert::Full => {
                            prop_assert!(!reference.contains_key(&k));
                            prop_assert_eq!(d.count, d.len_slots());
                        }
                    },
                    Op::Delete(k) => prop_assert_eq!(d.delete(k as f64), reference.remove(&k).is_some()),
                    Op::Update(k, v) => {
                        let had = reference.contains_key(&k);
                        if had { reference.insert(k, v); }
                        prop_assert_eq!(d.update(k as f64, v), had);
                    }
                }
                d.check().map_err(TestCaseError::fail)?;
                let live: Vec<(Key, Payload)> = reference.iter().map(|(&k, &v)| (k as f64, v)).collect();
                prop_assert_eq!(d.pairs(), live);
            }
        }
    }
}
