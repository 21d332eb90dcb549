use super::{Key, Payload};
use crate::conflict::LinearModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub(crate) u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BucketId(pub(crate) u32);

/// Decoded view of one model-node entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Entry {
    Empty,
    Data(Key, Payload),
    Bucket(BucketId),
    Child(NodeId),
}

const TAG_EMPTY: u8 = 0;
const TAG_DATA: u8 = 1;
const TAG_BUCKET: u8 = 2;
const TAG_CHILD: u8 = 3;

/// An array of entries placed exactly at their predicted slots. The entry
/// type lives in two bitmaps: `lo` / `hi` bits read as `00` empty, `01` data,
/// `10` bucket link, `11` child link.
#[derive(Debug, Clone)]
pub(crate) struct ModelNode {
    pub(crate) model: LinearModel,
    slots: Vec<(Key, u64)>,
    lo: Vec<u64>,
    hi: Vec<u64>,
}

impl ModelNode {
    pub(crate) fn new(model: LinearModel, size: usize) -> Self {
        let words = size.div_ceil(64);
        Self {
            model,
            slots: vec![(0.0, 0); size],
            lo: vec![0; words],
            hi: vec![0; words],
        }
    }

    #[inline]
    pub(crate) fn len(&self) -> usize {
        self.slots.len()
    }

    #[inline]
    pub(crate) fn slot_of(&self, key: Key) -> usize {
        self.model.predict_clamped(key, self.slots.len())
    }

    #[inline]
    fn tag(&self, i: usize) -> u8 {
        let (w, b) = (i / 64, i % 64);
        (((self.lo[w] >> b) & 1) | (((self.hi[w] >> b) & 1) << 1)) as u8
    }

    #[inline]
    fn set_tag(&mut self, i: usize, tag: u8) {
        let (w, b) = (i / 64, i % 64);
        let mask = 1u64 << b;
        self.lo[w] = (self.lo[w] & !mask) | (((tag & 1) as u64) << b);
        self.hi[w] = (self.hi[w] & !mask) | ((((tag >> 1) & 1) as u64) << b);
    }

    #[inline]
    pub(crate) fn entry(&self, i: usize) -> Entry {
        let (k, v) = self.slots[i];
        match self.tag(i) {
            TAG_EMPTY => Entry::Empty,
            TAG_DATA => Entry::Data(k, v),
            TAG_BUCKET => Entry::Bucket(BucketId(v as u32)),
            _ => Entry::Child(NodeId(v as u32)),
        }
    }

    pub(crate) fn set(&mut self, i: usize, entry: Entry) {
        let (tag, slot) = match entry {
            Entry::Empty => (TAG_EMPTY, (0.0, 0)),
            Entry::Data(k, v) => (TAG_DATA, (k, v)),
            Entry::Bucket(b) => (TAG_BUCKET, (0.0, b.0 as u64)),
            Entry::Child(c) => (TAG_CHILD, (0.0, c.0 as u64)),
        };
        self.set_tag(i, tag);
        self.slots[i] = slot;
    }

    pub(crate) fn set_payload(&mut self, i: usize, payload: Payload) {
        debug_assert_eq!(self.tag(i), TAG_DATA);
        self.slots[i].1 = payload;
    }

    pub(crate) fn bitmap_bytes(&self) -> usize {
        8 * (self.lo.len() + self.hi.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BucketMode {
    /// Append on insert, scan everything on lookup.
    #[default]
    Linear,
    /// Kept sorted; lookups stop at the first larger key.
    Ordered,
}

#[derive(Debug, Clone)]
pub(crate) struct Bucket {
    pub(crate) data: Vec<(Key, Payload)>,
    pub(crate) capacity: usize,
}

impl Bucket {
    pub(crate) fn new(mut data: Vec<(Key, Payload)>, capacity: usize, mode: BucketMode) -> Self {
        if mode == BucketMode::Ordered {
            data.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        data.reserve_exact(capacity.saturating_sub(data.len()));
        Self { data, capacity }
    }

    pub(crate) fn position(&self, key: Key, mode: BucketMode) -> Option<usize> {
        match mode {
            BucketMode::Linear => self.data.iter().position(|e| e.0 == key),
            BucketMode::Ordered => {
                for (i, e) in self.data.iter().enumerate() {
                    if e.0 == key {
                        return Some(i);
                    }
                    if e.0 > key {
                        return None;
                    }
                }
                None
            }
        }
    }

    pub(crate) fn is_full(&self) -> bool {
        self.data.len() >= self.capacity
    }

    pub(crate) fn push(&mut self, key: Key, payload: Payload, mode: BucketMode) {
        match mode {
            BucketMode::Linear => self.data.push((key, payload)),
            BucketMode::Ordered => {
                let at = self.data.partition_point(|e| e.0 < key);
                self.data.insert(at, (key, payload));
            }
        }
    }

    pub(crate) fn remove(&mut self, at: usize, mode: BucketMode) {
        match mode {
            BucketMode::Linear => {
                self.data.swap_remove(at);
            }
            BucketMode::Ordered => {
                self.data.remove(at);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_roundtrip_through_bitmaps() {
        let model = LinearModel {
            slope: 1.0,
            intercept: 0.0,
        };
        let mut n = ModelNode::new(model, 130);
        let entries = [
            Entry::Data(1.5, 7),
            Entry::Bucket(BucketId(3)),
            Entry::Child(NodeId(9)),
            Entry::Empty,
        ];
        for (i, e) in entries.iter().cycle().take(130).enumerate() {
            n.set(i, *e);
        }
        for (i, e) in entries.iter().cycle().take(130).enumerate() {
            assert_eq!(n.entry(i), *e);
        }
        n.set(64, Entry::Empty);
        assert_eq!(n.entry(64), Entry::Empty);
        assert_eq!(n.entry(65), Entry::Bucket(BucketId(3)));
        assert_eq!(n.bitmap_bytes(), 2 * 3 * 8);
    }

    #[test]
    fn ordered_bucket_stays_sorted() {
        let mut b = Bucket::new(vec![(3.0, 3), (1.0, 1)], 4, BucketMode::Ordered);
        b.push(2.0, 2, BucketMode::Ordered);
        assert_eq!(b.data, vec![(1.0, 1), (2.0, 2), (3.0, 3)]);
        assert_eq!(b.position(2.0, BucketMode::Ordered), Some(1));
        assert_eq!(b.position(1.5, BucketMode::Ordered), None);
        b.remove(0, BucketMode::Ordered);
        assert_eq!(b.data, vec![(2.0, 2), (3.0, 3)]);
    }

    #[test]
    fn linear_bucket_overwrites_with_tail() {
        let mut b = Bucket::new(vec![(3.0, 3), (1.0, 1), (2.0, 2)], 4, BucketMode::Linear);
        b.remove(0, BucketMode::Linear);
        assert_eq!(b.data, vec![(2.0, 2), (1.0, 1)]);
        assert!(!b.is_full());
    }
}
