//! Flow parameter file.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "NFL1" | version u32 | dims u32 | layers u32 | hidden u32
//! sigma_latent f64 | theta f64 | mu f64 | sigma f64 | bypass u8
//! weight count u64 | weights f64[] | bias count u64 | biases f64[]
//! ```

use super::network::{FlowArch, FlowNet};
use super::{FlowError, FlowParams};
use crate::keycodec::CodecParams;
use std::io::{Read, Write};
use std::path::Path;

pub const FLOW_MAGIC: &[u8; 4] = b"NFL1";
pub const FLOW_VERSION: u32 = 1;

pub fn save_flow<W: Write>(params: &FlowParams, mut sink: W) -> Result<(), FlowError> {
    let arch = params.net.arch;
    let mut buf = Vec::with_capacity(64 + 8 * (params.net.weights.len() + params.net.biases.len()));
    buf.extend_from_slice(FLOW_MAGIC);
    buf.extend_from_slice(&FLOW_VERSION.to_le_bytes());
    for v in [arch.dims, arch.layers, arch.hidden] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for v in [
        params.sigma_latent,
        params.codec.theta,
        params.codec.mu,
        params.codec.sigma,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.push(params.bypass as u8);
    for arr in [&params.net.weights, &params.net.biases] {
        buf.extend_from_slice(&(arr.len() as u64).to_le_bytes());
        for v in arr.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    sink.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], FlowError> {
        if self.bytes.len() < N {
            return Err(FlowError::TruncatedFile);
        }
        let (head, rest) = self.bytes.split_at(N);
        self.bytes = rest;
        Ok(head.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32, FlowError> {
        self.take::<4>().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64, FlowError> {
        self.take::<8>().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64, FlowError> {
        self.take::<8>().map(f64::from_le_bytes)
    }

    fn f64s(&mut self, count: u64) -> Result<Vec<f64>, FlowError> {
        let count = usize::try_from(count).map_err(|_| FlowError::TruncatedFile)?;
        if self.bytes.len() / 8 < count {
            return Err(FlowError::TruncatedFile);
        }
        (0..count).map(|_| self.f64()).collect()
    }
}

pub fn load_flow<R: Read>(mut source: R) -> Result<FlowParams, FlowError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    if bytes.len() < 4 {
        return Err(FlowError::TruncatedFile);
    }
    let mut cur = Cursor { bytes: &bytes };
    if &cur.take::<4>()? != FLOW_MAGIC {
        return Err(FlowError::BadMagic);
    }
    let version = cur.u32()?;
    if version != FLOW_VERSION {
        return Err(FlowError::VersionMismatch(version));
    }
    let dims = cur.u32()? as usize;
    let layers = cur.u32()? as usize;
    let hidden = cur.u32()? as usize;
    let sigma_latent = cur.f64()?;
    let theta = cur.f64()?;
    let mu = cur.f64()?;
    let sigma = cur.f64()?;
    let bypass = match cur.take::<1>()?[0] {
        0 => false,
        1 => true,
        other => return Err(FlowError::Malformed(format!("bypass flag {other}"))),
    };
    let wn = cur.u64()?;
    let weights = cur.f64s(wn)?;
    let bn = cur.u64()?;
    let biases = cur.f64s(bn)?;
    if !cur.bytes.is_empty() {
        return Err(FlowError::Malformed(format!("{} trailing bytes", cur.bytes.len())));
    }
    let params = FlowParams {
        net: FlowNet {
            arch: FlowArch { dims, layers, hidden },
            weights,
            biases,
        },
        codec: CodecParams {
            mu,
            sigma,
            theta,
            dims,
        },
        sigma_latent,
        bypass,
    };
    params.validate()?;
    Ok(params)
}

pub fn save_flow_file(params: &FlowParams, path: impl AsRef<Path>) -> Result<(), FlowError> {
    let file = std::fs::File::create(path)?;
    save_flow(params, std::io::BufWriter::new(file))
}

pub fn load_flow_file(path: impl AsRef<Path>) -> Result<FlowParams, FlowError> {
    let file = std::fs::File::open(path)?;
    load_flow(std::io::BufReader::new(file))
}
