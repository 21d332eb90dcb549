//! Reference ordered map with the index's operation vocabulary.

use crate::afli::{IndexError, Key, Payload};
use crate::framework::{Op, OpOutcome, RequestBatch};
use ordered_float::OrderedFloat;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Default)]
pub struct RefMap {
    map: BTreeMap<OrderedFloat<Key>, Payload>,
    span: Option<(Key, Key)>,
}

impl RefMap {
    /// Loads pairs; like the index, later inserts must stay inside
    /// `[first key, last key]`.
    pub fn bulkload(pairs: &[(Key, Payload)]) -> Result<Self, IndexError> {
        for (i, w) in pairs.windows(2).enumerate() {
            if w[0].0 == w[1].0 {
                return Err(IndexError::DuplicateKey(w[0].0));
            }
            if !(w[0].0 < w[1].0) {
                return Err(IndexError::NotSorted(i + 1));
            }
        }
        Ok(Self {
            map: pairs.iter().map(|&(k, v)| (OrderedFloat(k), v)).collect(),
            span: pairs.first().zip(pairs.last()).map(|(a, b)| (a.0, b.0)),
        })
    }

    /// An unbounded map: every finite key may be inserted.
    pub fn unbounded() -> Self {
        Self {
            map: BTreeMap::new(),
            span: Some((f64::MIN, f64::MAX)),
        }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn lookup(&self, key: Key) -> Option<Payload> {
        self.map.get(&OrderedFloat(key)).copied()
    }

    pub fn insert(&mut self, key: Key, payload: Payload) -> Result<(), IndexError> {
        match self.span {
            Some((lo, hi)) if key >= lo && key <= hi => {}
            _ => return Err(IndexError::OutOfKeySpace),
        }
        match self.map.entry(OrderedFloat(key)) {
            std::collections::btree_map::Entry::Occupied(_) => Err(IndexError::AlreadyExists),
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(payload);
                Ok(())
            }
        }
    }

    pub fn update(&mut self, key: Key, payload: Payload) -> Result<(), IndexError> {
        match self.map.get_mut(&OrderedFloat(key)) {
            Some(v) => {
                *v = payload;
                Ok(())
            }
            None => Err(IndexError::NotFound),
        }
    }

    pub fn delete(&mut self, key: Key) -> Result<(), IndexError> {
        self.map.remove(&OrderedFloat(key)).map(|_| ()).ok_or(IndexError::NotFound)
    }

    pub fn execute(&mut self, batch: &mut RequestBatch) {
        batch.results.clear();
        for op in &batch.ops {
            let outcome = match *op {
                Op::Lookup(k) => OpOutcome::Found(self.lookup(k)),
                Op::Insert(k, v) => self.insert(k, v).into(),
                Op::Update(k, v) => self.update(k, v).into(),
                Op::Delete(k) => self.delete(k).into(),
            };
            batch.results.push(outcome);
        }
    }

    /// Rough footprint: each entry plus one word of tree overhead.
    pub fn size_bytes(&self) -> usize {
        std::mem::size_of::<Self>() + self.map.len() * (std::mem::size_of::<(Key, Payload)>() + 8)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Key, Payload)> + '_ {
        self.map.iter().map(|(k, &v)| (k.0, v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_semantics() {
        let mut m = RefMap::bulkload(&[(1.0, 10), (5.0, 50)]).unwrap();
        m.insert(3.0, 30).unwrap();
        assert_eq!(m.lookup(3.0), Some(30));
        assert_eq!(m.insert(3.0, 31), Err(IndexError::AlreadyExists));
        assert_eq!(m.insert(6.0, 0), Err(IndexError::OutOfKeySpace));
        m.delete(3.0).unwrap();
        assert_eq!(m.lookup(3.0), None);
        assert_eq!(m.delete(3.0), Err(IndexError::NotFound));
        assert_eq!(m.update(3.0, 1), Err(IndexError::NotFound));
        m.update(1.0, 11).unwrap();
        assert_eq!(m.iter().collect::<Vec<_>>(), vec![(1.0, 11), (5.0, 50)]);
    }

    #[test]
    fn unbounded_accepts_any_key() {
        let mut m = RefMap::unbounded();
        m.insert(-1e300, 1).unwrap();
        assert_eq!(m.lookup(-1e300), Some(1));
    }
}
