use super::keyfile::{read_keys, HeaderMode};
use super::WorkloadError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use std::path::PathBuf;

/// Rounds of top-up draws before giving up on reaching `n` unique keys.
const MAX_ROUNDS: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetKind {
    /// `floor(exp(N(0, 2^2)) * 1e9)`.
    Lognormal,
    /// `180 * floor(lon) + lat` over uniform coordinates.
    Longlat,
    /// Uniform floats in `[lo, hi)`.
    Uniform { lo: f64, hi: f64 },
    File { path: PathBuf, header: HeaderMode },
}

impl DatasetKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Lognormal => "lognormal",
            Self::Longlat => "longlat",
            Self::Uniform { .. } => "uniform",
            Self::File { .. } => "file",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub n: usize,
    pub seed: u64,
}

pub fn longlat_key(lon: f64, lat: f64) -> f64 {
    180.0 * lon.floor() + lat
}

/// Sorted, unique, finite keys; identical for identical specs.
pub fn gen_dataset(spec: &DatasetSpec) -> Result<Vec<f64>, WorkloadError> {
    if let DatasetKind::File { path, header } = &spec.kind {
        return read_keys(path, *header);
    }
    if spec.n < 2 {
        return Err(WorkloadError::Invalid("a dataset needs at least 2 keys".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lognormal = LogNormal::<f64>::new(0.0, 2.0).expect("valid parameters");
    let draw = |rng: &mut ChaCha8Rng| -> f64 {
        match spec.kind {
            DatasetKind::Lognormal => (lognormal.sample(rng) * 1e9f64).floor(),
            DatasetKind::Longlat => longlat_key(rng.random_range(-180.0..180.0), rng.random_range(-90.0..90.0)),
            DatasetKind::Uniform { lo, hi } => rng.random_range(lo..hi),
            DatasetKind::File { .. } => unreachable!(),
        }
    };
    if let DatasetKind::Uniform { lo, hi } = spec.kind {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(WorkloadError::Invalid(format!("empty uniform range [{lo}, {hi})")));
        }
    }
    let mut keys: Vec<f64> = Vec::with_capacity(spec.n);
    for _ in 0..MAX_ROUNDS {
        let missing = spec.n - keys.len();
        keys.extend((0..missing).map(|_| draw(&mut rng)).filter(|k| k.is_finite()));
        keys.sort_by(f64::total_cmp);
        keys.dedup();
        if keys.len() == spec.n {
            return Ok(keys);
        }
    }
    Err(WorkloadError::InsufficientUnique {
        got: keys.len(),
        want: spec.n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn longlat_formula() {
        assert!((longlat_key(12.3, 45.6) - 2205.6).abs() < 1e-9);
        assert_eq!(longlat_key(-0.5, 10.0), -170.0);
    }

    #[test]
    fn deterministic_sorted_unique() {
        for kind in [
            DatasetKind::Lognormal,
            DatasetKind::Longlat,
            DatasetKind::Uniform { lo: 0.0, hi: 1.0 },
        ] {
            let spec = DatasetSpec { kind, n: 20_000, seed: 7 };
            let a = gen_dataset(&spec).unwrap();
            assert_eq!(a.len(), 20_000);
            assert!(a.windows(2).all(|w| w[0] < w[1]));
            let b = gen_dataset(&spec).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn lognormal_moments() {
        let n = 1_000_000;
        let keys = gen_dataset(&DatasetSpec {
            kind: DatasetKind::Lognormal,
            n,
            seed: 3,
        })
        .unwrap();
        assert!(keys.iter().all(|k| k.fract() == 0.0));
        // flooring and dedup only touch keys below ~1e3 (log < -14), a
        // vanishing share of the mass
        let logs: Vec<f64> = keys.iter().filter(|&&k| k > 0.0).map(|k| (k / 1e9).ln()).collect();
        let mean = logs.iter().sum::<f64>() / logs.len() as f64;
        let se = 2.0 / (logs.len() as f64).sqrt();
        assert!(mean.abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn uniform_range_is_checked() {
        let spec = DatasetSpec {
            kind: DatasetKind::Uniform { lo: 1.0, hi: 1.0 },
            n: 10,
            seed: 0,
        };
        assert!(matches!(gen_dataset(&spec), Err(WorkloadError::Invalid(_))));
    }

    #[test]
    fn too_narrow_range_reports_insufficient_unique() {
        let spec = DatasetSpec {
            kind: DatasetKind::Uniform {
                lo: 1.0,
                hi: 1.0 + 4.0 * f64::EPSILON,
            },
            n: 100,
            seed: 0,
        };
        assert!(matches!(
            gen_dataset(&spec),
            Err(WorkloadError::InsufficientUnique { want: 100, .. })
        ));
    }
}
