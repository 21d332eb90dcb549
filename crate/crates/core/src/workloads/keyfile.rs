//! Binary key files: an optional little-endian `u64` count followed by
//! little-endian `f64` keys.

use super::WorkloadError;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeaderMode {
    /// A header is assumed when the first word equals the number of
    /// following keys.
    #[default]
    Auto,
    Present,
    Absent,
}

pub fn write_keys_to<W: Write>(keys: &[f64], header: bool, mut sink: W) -> Result<(), WorkloadError> {
    let mut buf = Vec::with_capacity(8 * (keys.len() + 1));
    if header {
        buf.extend_from_slice(&(keys.len() as u64).to_le_bytes());
    }
    for k in keys {
        buf.extend_from_slice(&k.to_le_bytes());
    }
    sink.write_all(&buf)?;
    Ok(())
}

pub fn write_keys(path: impl AsRef<Path>, keys: &[f64], header: bool) -> Result<(), WorkloadError> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_keys_to(keys, header, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Reads keys and returns them sorted and deduplicated.
pub fn read_keys_from<R: Read>(mut source: R, mode: HeaderMode) -> Result<Vec<f64>, WorkloadError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(WorkloadError::FileFormat(format!(
            "length {} is not a multiple of 8",
            bytes.len()
        )));
    }
    let words = bytes.len() / 8;
    let first = (words > 0).then(|| u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")));
    let has_header = match mode {
        HeaderMode::Present => {
            let count = first.ok_or_else(|| WorkloadError::FileFormat("missing count header".into()))?;
            if count != (words - 1) as u64 {
                return Err(WorkloadError::FileFormat(format!(
                    "header declares {count} keys but {} follow",
                    words - 1
                )));
            }
            true
        }
        HeaderMode::Absent => false,
        HeaderMode::Auto => first.is_some_and(|c| c == (words - 1) as u64),
    };
    let body = &bytes[if has_header { 8 } else { 0 }..];
    let mut keys: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    if let Some(bad) = keys.iter().position(|k| !k.is_finite()) {
        return Err(WorkloadError::FileFormat(format!("key {bad} is not finite")));
    }
    keys.sort_by(f64::total_cmp);
    keys.dedup();
    Ok(keys)
}

pub fn read_keys(path: impl AsRef<Path>, mode: HeaderMode) -> Result<Vec<f64>, WorkloadError> {
    let file = std::fs::File::open(path)?;
    read_keys_from(std::io::BufReader::new(file), mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encode(keys: &[f64], header: bool) -> Vec<u8> {
        let mut buf = Vec::new();
        write_keys_to(keys, header, &mut buf).unwrap();
        buf
    }

    #[test]
    fn roundtrip_with_and_without_header() {
        let keys = [1.5, -2.0, 1e300, 0.0];
        let mut sorted = keys.to_vec();
        sorted.sort_by(f64::total_cmp);
        for header in [true, false] {
            let buf = encode(&keys, header);
            assert_eq!(buf.len(), 8 * (keys.len() + header as usize));
            assert_eq!(read_keys_from(&buf[..], HeaderMode::Auto).unwrap(), sorted);
        }
    }

    #[test]
    fn forced_modes() {
        // 2.0 as a count word would be read as data without a header
        let buf = encode(&[5.0, 6.0], true);
        assert_eq!(read_keys_from(&buf[..], HeaderMode::Present).unwrap(), vec![5.0, 6.0]);
        let headless = read_keys_from(&buf[..], HeaderMode::Absent).unwrap();
        assert_eq!(headless.len(), 3);
        assert_eq!(headless[0], f64::from_bits(2));
        let buf = encode(&[5.0, 6.0], false);
        assert!(matches!(
            read_keys_from(&buf[..], HeaderMode::Present),
            Err(WorkloadError::FileFormat(_))
        ));
    }

    #[test]
    fn rejects_ragged_and_non_finite() {
        assert!(matches!(
            read_keys_from(&[0u8; 12][..], HeaderMode::Auto),
            Err(WorkloadError::FileFormat(_))
        ));
        let buf = encode(&[1.0, f64::NAN], false);
        assert!(matches!(
            read_keys_from(&buf[..], HeaderMode::Auto),
            Err(WorkloadError::FileFormat(_))
        ));
    }

    #[test]
    fn empty_file() {
        assert!(read_keys_from(&[][..], HeaderMode::Auto).unwrap().is_empty());
    }
}
