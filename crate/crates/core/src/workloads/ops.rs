use super::WorkloadError;
use crate::afli::{Key, Payload};
use crate::framework::{Op, RequestBatch};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

pub const DEFAULT_ZIPF_S: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mix {
    ReadOnly,
    ReadHeavy,
    WriteHeavy,
    WriteOnly,
}

impl Mix {
    pub const ALL: [Mix; 4] = [Mix::ReadOnly, Mix::ReadHeavy, Mix::WriteHeavy, Mix::WriteOnly];

    /// Percentage of reads; the rest are inserts.
    pub fn read_percent(self) -> usize {
        match self {
            Mix::ReadOnly => 100,
            Mix::ReadHeavy => 80,
            Mix::WriteHeavy => 20,
            Mix::WriteOnly => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Mix::ReadOnly => "read-only",
            Mix::ReadHeavy => "read-heavy",
            Mix::WriteHeavy => "write-heavy",
            Mix::WriteOnly => "write-only",
        }
    }
}

impl std::str::FromStr for Mix {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Mix::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown workload {s:?}"))
    }
}

impl std::fmt::Display for Mix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorkloadSpec {
    pub mix: Mix,
    pub bulk_fraction: f64,
    pub op_count: usize,
    pub zipf_s: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for WorkloadSpec {
    fn default() -> Self {
        Self {
            mix: Mix::ReadHeavy,
            bulk_fraction: 0.5,
            op_count: 100_000,
            zipf_s: DEFAULT_ZIPF_S,
            batch_size: crate::numflow::DEFAULT_BATCH,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    /// Sorted bulk-load pairs; the payload is the key's rank in the dataset.
    pub bulk: Vec<(Key, Payload)>,
    pub batches: Vec<RequestBatch>,
}

impl Workload {
    pub fn op_count(&self) -> usize {
        self.batches.iter().map(RequestBatch::len).sum()
    }

    pub fn ops(&self) -> impl Iterator<Item = &Op> {
        self.batches.iter().flat_map(|b| b.ops.iter())
    }
}

/// Splits sorted unique `keys` into a bulk-load set and an op stream.
///
/// The bulk set is a seeded random subset that always contains the smallest
/// and largest key, so every insert lies inside its span. Reads follow a
/// Zipf law over the keys loaded so far in load order; inserts consume the
/// remaining keys without replacement.
pub fn gen_ops(keys: &[Key], spec: &WorkloadSpec) -> Result<Workload, WorkloadError> {
    let n = keys.len();
    if n < 2 {
        return Err(WorkloadError::Invalid("need at least 2 keys".into()));
    }
    if !(spec.bulk_fraction > 0.0 && spec.bulk_fraction <= 1.0) {
        return Err(WorkloadError::Invalid(format!("bulk fraction {}", spec.bulk_fraction)));
    }
    if spec.batch_size == 0 {
        return Err(WorkloadError::Invalid("batch size 0".into()));
    }
    if !(spec.zipf_s >= 0.0) {
        return Err(WorkloadError::Invalid(format!("zipf skew {}", spec.zipf_s)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n_bulk = ((spec.bulk_fraction * n as f64).floor() as usize).clamp(2, n);

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    for extreme in [0, n - 1] {
        let at = perm.iter().position(|&i| i == extreme).expect("permutation");
        if at >= n_bulk {
            let slot = (0..n_bulk)
                .find(|&j| perm[j] != 0 && perm[j] != n - 1)
                .expect("n_bulk >= 2 leaves room for both extremes");
            perm.swap(slot, at);
        }
    }

    let mut bulk_ids = perm[..n_bulk].to_vec();
    bulk_ids.sort_unstable();
    let bulk: Vec<(Key, Payload)> = bulk_ids.iter().map(|&i| (keys[i], i as Payload)).collect();

    let reads = spec.op_count * spec.mix.read_percent() / 100;
    let inserts = spec.op_count - reads;
    let remainder = &perm[n_bulk..];
    if inserts > remainder.len() {
        return Err(WorkloadError::ExhaustedInserts {
            want: inserts,
            have: remainder.len(),
        });
    }
    let mut kinds: Vec<bool> = std::iter::repeat_n(true, reads).chain(std::iter::repeat_n(false, inserts)).collect();
    kinds.shuffle(&mut rng);

    let mut loaded: Vec<usize> = perm[..n_bulk].to_vec();
    let mut next_insert = remainder.iter();
    let mut ops = Vec::with_capacity(spec.op_count);
    for is_read in kinds {
        if is_read {
            let zipf = Zipf::new(loaded.len() as f64, spec.zipf_s).expect("validated parameters");
            let rank = zipf.sample(&mut rng) as usize;
            ops.push(Op::Lookup(keys[loaded[rank.clamp(1, loaded.len()) - 1]]));
        } else {
            let i = *next_insert.next().expect("checked above");
            loaded.push(i);
            ops.push(Op::Insert(keys[i], i as Payload));
        }
    }
    let batches = ops.chunks(spec.batch_size).map(|c| RequestBatch::new(c.to_vec())).collect();
    Ok(Workload { bulk, batches })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64 * 3.0).collect()
    }

    #[test]
    fn exact_mix_ratios_and_batching() {
        let ks = keys(10_000);
        for mix in Mix::ALL {
            let spec = WorkloadSpec {
                mix,
                op_count: 1000,
                batch_size: 256,
                ..WorkloadSpec::default()
            };
            let w = gen_ops(&ks, &spec).unwrap();
            let reads = w.ops().filter(|o| o.is_read()).count();
            assert_eq!(reads, 1000 * mix.read_percent() / 100, "{mix}");
            assert_eq!(w.op_count(), 1000);
            assert_eq!(w.batches.len(), 4);
            assert!(w.batches[..3].iter().all(|b| b.len() == 256));
            assert_eq!(w.bulk.len(), 5000);
        }
    }

    #[test]
    fn inserts_lie_in_span_and_are_new() {
        let ks = keys(1000);
        let spec = WorkloadSpec {
            mix: Mix::WriteOnly,
            op_count: 500,
            ..WorkloadSpec::default()
        };
        let w = gen_ops(&ks, &spec).unwrap();
        assert_eq!(w.bulk[0].0, ks[0]);
        assert_eq!(w.bulk.last().unwrap().0, ks[999]);
        let mut all: Vec<f64> = w.bulk.iter().map(|p| p.0).collect();
        for op in w.ops() {
            let Op::Insert(k, v) = *op else { panic!("write-only") };
            assert_eq!(ks[v as usize], k);
            all.push(k);
        }
        all.sort_by(f64::total_cmp);
        assert_eq!(all, ks);
    }

    #[test]
    fn reads_target_loaded_keys() {
        let ks = keys(2000);
        let spec = WorkloadSpec {
            mix: Mix::ReadHeavy,
            op_count: 1000,
            ..WorkloadSpec::default()
        };
        let w = gen_ops(&ks, &spec).unwrap();
        let mut loaded: std::collections::HashSet<u64> = w.bulk.iter().map(|p| p.0.to_bits()).collect();
        for op in w.ops() {
            match *op {
                Op::Lookup(k) => assert!(loaded.contains(&k.to_bits())),
                Op::Insert(k, _) => assert!(loaded.insert(k.to_bits())),
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn exhausted_inserts() {
        let spec = WorkloadSpec {
            mix: Mix::WriteOnly,
            op_count: 600,
            ..WorkloadSpec::default()
        };
        assert!(matches!(
            gen_ops(&keys(1000), &spec),
            Err(WorkloadError::ExhaustedInserts { want: 600, have: 500 })
        ));
    }

    #[test]
    fn deterministic() {
        let ks = keys(5000);
        let spec = WorkloadSpec::default();
        let spec = WorkloadSpec { op_count: 2000, ..spec };
        assert_eq!(gen_ops(&ks, &spec).unwrap(), gen_ops(&ks, &spec).unwrap());
        let other = WorkloadSpec { seed: 1, ..spec };
        assert_ne!(gen_ops(&ks, &spec).unwrap(), gen_ops(&ks, &other).unwrap());
    }

    #[test]
    fn zipf_top_rank_mass() {
        let items = 10_000u64;
        let s = 0.99;
        let zipf = Zipf::new(items as f64, s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 1_000_000;
        let top = (0..draws).filter(|_| zipf.sample(&mut rng) == 1.0).count();
        let h: f64 = (1..=items).map(|k| 1.0 / (k as f64).powf(s)).sum();
        let expected = draws as f64 / h;
        assert!((top as f64 - expected).abs() < 0.1 * expected, "{top} vs {expected}");
    }

    #[test]
    fn zero_skew_is_uniform() {
        let zipf = Zipf::new(4.0, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = [0usize; 4];
        for _ in 0..40_000 {
            counts[zipf.sample(&mut rng) as usize - 1] += 1;
        }
        assert!(counts.iter().all(|&c| (c as f64 - 10_000.0).abs() < 500.0), "{counts:?}");
    }
}
