//! Maximum-likelihood training by minibatch stochastic gradient ascent.
//!
//! Training runs on a standardized copy of the features (per-dimension
//! median / interquartile range) against a unit normal latent. The
//! standardization and the latent scale are affine, so once training ends
//! they are folded into the first and last layers; the returned network maps
//! raw features straight to the wide latent and has exactly the same
//! likelihood up to a constant.

use super::network::{FlowArch, FlowNet};
use super::{FlowError, FlowParams, DEFAULT_BATCH, DEFAULT_SIGMA_LATENT};
use crate::keycodec::{fit_codec, DEFAULT_DIMS, DEFAULT_THETA};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub dims: usize,
    pub layers: usize,
    pub hidden: usize,
    pub sigma_latent: f64,
    pub theta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub sample_fraction: f64,
    pub learning_rate: f64,
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dims: DEFAULT_DIMS,
            layers: 2,
            hidden: 2,
            sigma_latent: DEFAULT_SIGMA_LATENT,
            theta: DEFAULT_THETA,
            batch_size: DEFAULT_BATCH,
            epochs: 3,
            sample_fraction: 0.1,
            learning_rate: 1e-2,
            grad_clip: 10.0,
            seed: 0x5eed,
        }
    }
}

impl FlowConfig {
    pub fn arch(&self) -> FlowArch {
        FlowArch {
            dims: self.dims,
            layers: self.layers,
            hidden: self.hidden,
        }
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |m: &str| Err(FlowError::InvalidConfig(m.to_string()));
        if self.dims < 2 {
            return bad("dims must be >= 2");
        }
        if self.layers < 1 || self.hidden < 1 {
            return bad("layers and hidden must be >= 1");
        }
        if !(self.sigma_latent > 0.0) {
            return bad("sigma_latent must be > 0");
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return bad("sample_fraction must be in (0, 1]");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(self.learning_rate > 0.0) || !(self.grad_clip > 0.0) {
            return bad("learning_rate and grad_clip must be > 0");
        }
        Ok(())
    }
}

/// Per-step training log-likelihood (batch means, in the raw feature space).
#[derive(Debug, Clone, Default)]
pub struct TrainTrace {
    pub step_ll: Vec<f64>,
    pub steps_per_epoch: usize,
}

impl TrainTrace {
    /// Mean log-likelihood of each epoch.
    pub fn epoch_means(&self) -> Vec<f64> {
        if self.steps_per_epoch == 0 {
            return Vec::new();
        }
        self.step_ll
            .chunks(self.steps_per_epoch)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect()
    }
}

pub fn train_flow(keys: &[f64], config: &FlowConfig) -> Result<FlowParams, FlowError> {
    train_flow_traced(keys, config).map(|(p, _)| p)
}

pub fn train_flow_traced(keys: &[f64], config: &FlowConfig) -> Result<(FlowParams, TrainTrace), FlowError> {
    config.validate()?;
    let codec = fit_codec(keys, config.theta, config.dims)?;
    let d = config.dims;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let n = keys.len();
    let m = ((n as f64 * config.sample_fraction).ceil() as usize).clamp(2.min(n), n);
    let picked = rand::seq::index::sample(&mut rng, n, m);
    let mut sample = vec![0.0; m * d];
    for (idx, chunk) in picked.iter().zip(sample.chunks_exact_mut(d)) {
        codec.expand_into(codec.normalize(keys[idx]), chunk);
    }

    let (center, scale) = robust_standardization(&sample, d);
    for chunk in sample.chunks_exact_mut(d) {
        for k in 0..d {
            chunk[k] = (chunk[k] - center[k]) / scale[k];
        }
    }
    let log_scale_sum: f64 = scale.iter().map(|s| s.ln()).sum();

    let arch = config.arch();
    let mut net = FlowNet::zeros(arch);
    for w in net.weights.iter_mut() {
        *w = rng.random_range(-0.1..=0.1);
    }

    let mut order: Vec<usize> = (0..m).collect();
    let mut grad_w = vec![0.0; net.weights.len()];
    let mut grad_b = vec![0.0; net.biases.len()];
    let mut trace = TrainTrace {
        step_ll: Vec::new(),
        steps_per_epoch: m.div_ceil(config.batch_size),
    };
    let mut step = 0usize;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            grad_w.fill(0.0);
            grad_b.fill(0.0);
            let mut total = 0.0;
            for &i in batch {
                total += net.backward(&sample[i * d..(i + 1) * d], 1.0, &mut grad_w, &mut grad_b);
            }
            let inv = 1.0 / batch.len() as f64;
            let norm = grad_w
                .iter()
                .chain(grad_b.iter())
                .map(|g| (g * inv) * (g * inv))
                .sum::<f64>()
                .sqrt();
            if !total.is_finite() || !norm.is_finite() {
                return Err(FlowError::FlowDiverged { step });
            }
            let clip = if norm > config.grad_clip {
                config.grad_clip / norm
            } else {
                1.0
            };
            let rate = config.learning_rate * inv * clip;
            for (w, g) in net.weights.iter_mut().zip(&grad_w) {
                *w += rate * g;
            }
            for (b, g) in net.biases.iter_mut().zip(&grad_b) {
                *b += rate * g;
            }
            // the latent rescale cancels against its log-determinant; only
            // the input standardization shifts the likelihood
            trace.step_ll.push(total * inv - log_scale_sum);
            step += 1;
        }
    }

    fold_affine(&mut net, &center, &scale, config.sigma_latent);
    Ok((
        FlowParams {
            net,
            codec,
            sigma_latent: config.sigma_latent,
            bypass: false,
        },
        trace,
    ))
}

/// Per-dimension median and interquartile range. Falls back to the standard
/// deviation, then to 1, when the spread is zero.
fn robust_standardization(sample: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
    let m = sample.len() / d;
    let mut center = vec![0.0; d];
    let mut scale = vec![1.0; d];
    let mut col = Vec::with_capacity(m);
    for k in 0..d {
        col.clear();
        col.extend(sample.iter().skip(k).step_by(d).copied());
        col.sort_by(f64::total_cmp);
        let q = |p: f64| col[((m - 1) as f64 * p).round() as usize];
        center[k] = q(0.5);
        let iqr = q(0.75) - q(0.25);
        let s = if iqr > 0.0 {
            iqr
        } else {
            let mean = col.iter().sum::<f64>() / m as f64;
            (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m as f64).sqrt()
        };
        scale[k] = if s > 0.0 && s.is_finite() { s } else { 1.0 };
    }
    (center, scale)
}

/// Rewrites `net` so that `net'(x) = sigma * net((x - center) / scale)`.
fn fold_affine(net: &mut FlowNet, center: &[f64], scale: &[f64], sigma: f64) {
    let arch = net.arch;
    let d = arch.dims;
    // Layer 0 has one input per block (a = 1).
    let b0 = arch.block_out(0);
    let mut offset = 0;
    for i in 0..d {
        for j in 0..=i {
            for o in 0..b0 {
                let w = &mut net.weights[offset + o];
                let m = if i == j { w.exp() } else { *w };
                net.biases[i * b0 + o] -= m * center[j] / scale[j];
                if i == j {
                    *w -= scale[j].ln();
                } else {
                    *w /= scale[j];
                }
            }
            offset += b0;
        }
    }

    let last = arch.layers - 1;
    let (a, b) = (arch.block_in(last), arch.block_out(last));
    let tri = d * (d + 1) / 2;
    let wlen = tri * a * b;
    let wstart = net.weights.len() - wlen;
    let bstart = net.biases.len() - d * b;
    let ln_sigma = sigma.ln();
    let mut idx = wstart;
    for i in 0..d {
        for j in 0..=i {
            for _ in 0..a * b {
                if i == j {
                    net.weights[idx] += ln_sigma;
                } else {
                    net.weights[idx] *= sigma;
                }
                idx += 1;
            }
        }
    }
    for bias in &mut net.biases[bstart..] {
        *bias *= sigma;
    }
}

/// Mean log-likelihood of `keys` under `params` (latent `params.sigma_latent`).
pub fn mean_log_likelihood(keys: &[f64], params: &FlowParams) -> f64 {
    if keys.is_empty() {
        return 0.0;
    }
    let d = params.dims();
    let mut x = vec![0.0; d];
    let mut z = vec![0.0; d];
    let mut total = 0.0;
    for &k in keys {
        params.codec.expand_into(params.codec.normalize(k), &mut x);
        let logdet = if params.bypass {
            z.copy_from_slice(&x);
            0.0
        } else {
            params.net.forward_one(&x, &mut z)
        };
        total += super::gaussian_log_density(&z, params.sigma_latent) + logdet;
    }
    total / keys.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn fold_preserves_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for layers in 1..4 {
            let arch = FlowArch {
                dims: 3,
                layers,
                hidden: 2,
            };
            let mut net = FlowNet::zeros(arch);
            for w in net.weights.iter_mut().chain(net.biases.iter_mut()) {
                *w = rng.random_range(-0.5..0.5);
            }
            let center = [3.0, -1.0, 0.5];
            let scale = [10.0, 0.5, 2.0];
            let sigma = 7.0;
            let mut folded = net.clone();
            fold_affine(&mut folded, &center, &scale, sigma);
            for _ in 0..20 {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-20.0..20.0)).collect();
                let xs: Vec<f64> = (0..3).map(|k| (x[k] - center[k]) / scale[k]).collect();
                let (mut z0, mut z1) = ([0.0; 3], [0.0; 3]);
                let ld0 = net.forward_one(&xs, &mut z0);
                let ld1 = folded.forward_one(&x, &mut z1);
                for k in 0..3 {
                    assert!((z1[k] - sigma * z0[k]).abs() < 1e-9 * sigma * z0[k].abs().max(1.0));
                }
                let shift = 3.0 * sigma.ln() - scale.iter().map(|s: &f64| s.ln()).sum::<f64>();
                assert!((ld1 - (ld0 + shift)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn zero_epochs_is_seeded_init() {
        let keys: Vec<f64> = (0..1000).map(|i| (i * i) as f64).collect();
        let cfg = FlowConfig {
            epochs: 0,
            ..FlowConfig::default()
        };
        let a = train_flow(&keys, &cfg).unwrap();
        let b = train_flow(&keys, &cfg).unwrap();
        assert_eq!(a, b);
        let other = train_flow(&keys, &FlowConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.net.weights, other.net.weights);
    }

    #[test]
    fn training_is_deterministic() {
        let keys: Vec<f64> = (1..5000).map(|i| (i as f64).powf(1.7)).collect();
        let cfg = FlowConfig {
            sample_fraction: 0.5,
            ..FlowConfig::default()
        };
        let a = train_flow(&keys, &cfg).unwrap();
        let b = train_flow(&keys, &cfg).unwrap();
        let bits = |p: &FlowParams| p.net.weights.iter().chain(&p.net.biases).map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn invalid_configs() {
        let keys = [1.0, 2.0, 3.0];
        for cfg in [
            FlowConfig { dims: 1, ..FlowConfig::default() },
            FlowConfig { layers: 0, ..FlowConfig::default() },
            FlowConfig { sample_fraction: 0.0, ..FlowConfig::default() },
            FlowConfig { sigma_latent: 0.0, ..FlowConfig::default() },
        ] {
            assert!(matches!(train_flow(&keys, &cfg), Err(FlowError::InvalidConfig(_))));
        }
        assert!(matches!(
            train_flow(&[4.0, 4.0], &FlowConfig::default()),
            Err(FlowError::Codec(_))
        ));
    }
}
