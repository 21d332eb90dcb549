//! Numerical normalizing flow over expanded key features.
//!
//! The flow runs in the density-estimation direction (raw features to
//! latent), which is the only direction needed online. Keys go through
//! `normalize -> expand -> flow -> merge` to become transformed keys.

mod io;
mod network;
mod train;

pub use io::{load_flow, load_flow_file, save_flow, save_flow_file, FLOW_MAGIC, FLOW_VERSION};
pub use network::{gaussian_log_density, FlowArch, FlowNet};
pub use train::{mean_log_likelihood, train_flow, train_flow_traced, FlowConfig, TrainTrace};

use crate::keycodec::{merge, CodecError, CodecParams, FeatureVector};
use thiserror::Error;

/// Request batch size for inference, matching the training batch.
pub const DEFAULT_BATCH: usize = 256;
/// Latent standard deviation (variance 1e16).
pub const DEFAULT_SIGMA_LATENT: f64 = 1e8;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("feature vector has {got} components, flow expects {want}")]
    ShapeMismatch { got: usize, want: usize },
    #[error("training diverged: non-finite loss at step {step}")]
    FlowDiverged { step: usize },
    #[error("invalid flow configuration: {0}")]
    InvalidConfig(String),
    #[error("bad magic bytes in flow file")]
    BadMagic,
    #[error("flow file is truncated")]
    TruncatedFile,
    #[error("unsupported flow file version {0}")]
    VersionMismatch(u32),
    #[error("malformed flow file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Everything needed to transform keys: network, codec constants, latent
/// scale, and the identity switch.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowParams {
    pub net: FlowNet,
    pub codec: CodecParams,
    pub sigma_latent: f64,
    /// When set, the network is skipped: `z = x`, log-determinant 0.
    pub bypass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformResult {
    pub z_batch: Vec<FeatureVector>,
    pub logdet_batch: Vec<f64>,
}

impl FlowParams {
    /// Identity flow over a fitted codec.
    pub fn bypass(codec: CodecParams, layers: usize, hidden: usize) -> Self {
        let arch = FlowArch {
            dims: codec.dims,
            layers,
            hidden,
        };
        Self {
            net: FlowNet::zeros(arch),
            codec,
            sigma_latent: DEFAULT_SIGMA_LATENT,
            bypass: true,
        }
    }

    pub fn dims(&self) -> usize {
        self.net.arch.dims
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        if !self.net.is_well_formed() {
            return Err(FlowError::Malformed("parameter counts do not match architecture".into()));
        }
        if self.net.arch.dims != self.codec.dims {
            return Err(FlowError::Malformed("codec and network dimensions differ".into()));
        }
        if !(self.sigma_latent > 0.0) {
            return Err(FlowError::Malformed("sigma_latent must be positive".into()));
        }
        Ok(())
    }

    /// Transforms a single key.
    pub fn transform_key(&self, key: f64) -> f64 {
        let d = self.dims();
        let mut x = vec![0.0; d];
        self.codec.expand_into(self.codec.normalize(key), &mut x);
        if self.bypass {
            return merge(&x);
        }
        let mut z = vec![0.0; d];
        self.net.forward_batch(&x, &mut z);
        merge(&z)
    }

    /// Transforms one batch of keys into `out`. Scratch space is allocated
    /// per call and shared across the batch.
    pub fn transform_batch(&self, keys: &[f64], out: &mut [f64]) {
        assert_eq!(keys.len(), out.len());
        let d = self.dims();
        let mut x = vec![0.0; keys.len() * d];
        for (key, chunk) in keys.iter().zip(x.chunks_exact_mut(d)) {
            self.codec.expand_into(self.codec.normalize(*key), chunk);
        }
        if self.bypass {
            for (o, chunk) in out.iter_mut().zip(x.chunks_exact(d)) {
                *o = merge(chunk);
            }
            return;
        }
        let mut z = vec![0.0; x.len()];
        self.net.forward_batch(&x, &mut z);
        for (o, chunk) in out.iter_mut().zip(z.chunks_exact(d)) {
            *o = merge(chunk);
        }
    }

    /// Approximate in-memory footprint of the parameters.
    pub fn size_bytes(&self) -> usize {
        std::mem::size_of::<Self>() + 8 * (self.net.weights.len() + self.net.biases.len())
    }
}

pub fn flow_forward(x_batch: &[FeatureVector], params: &FlowParams) -> Result<TransformResult, FlowError> {
    let d = params.dims();
    let mut z_batch = Vec::with_capacity(x_batch.len());
    let mut logdet_batch = Vec::with_capacity(x_batch.len());
    for x in x_batch {
        if x.len() != d {
            return Err(FlowError::ShapeMismatch { got: x.len(), want: d });
        }
        if params.bypass {
            z_batch.push(x.clone());
            logdet_batch.push(0.0);
            continue;
        }
        let mut z = vec![0.0; d];
        let logdet = params.net.forward_one(x.as_slice(), &mut z);
        z_batch.push(FeatureVector(z));
        logdet_batch.push(logdet);
    }
    Ok(TransformResult {
        z_batch,
        logdet_batch,
    })
}

/// Mean over the batch of `sum_k log N(z_k; 0, sigma^2) + logdet`.
pub fn log_likelihood(result: &TransformResult, sigma_latent: f64) -> f64 {
    if result.z_batch.is_empty() {
        return 0.0;
    }
    let total: f64 = result
        .z_batch
        .iter()
        .zip(&result.logdet_batch)
        .map(|(z, ld)| gaussian_log_density(z.as_slice(), sigma_latent) + ld)
        .sum();
    total / result.z_batch.len() as f64
}

pub fn transform_keys(keys: &[f64], params: &FlowParams) -> Vec<f64> {
    transform_keys_batched(keys, params, DEFAULT_BATCH)
}

/// Transforms keys in chunks of `batch_size`. The output does not depend on
/// the chunking.
pub fn transform_keys_batched(keys: &[f64], params: &FlowParams, batch_size: usize) -> Vec<f64> {
    let batch_size = batch_size.max(1);
    let mut out = vec![0.0; keys.len()];
    for (k, o) in keys.chunks(batch_size).zip(out.chunks_mut(batch_size)) {
        params.transform_batch(k, o);
    }
    out
}
