//! Binary files with a JSON header: `u64` little-endian header length, the
//! UTF-8 JSON header, then a payload of little-endian `f64` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

const MAX_HEADER: u64 = 1 << 28;

pub fn write<H: Serialize>(path: &Path, header: &H, payload: &[f64]) -> Result<()> {
    let json = serde_json::to_vec(header)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| Error::io(path, e));
    put(&(json.len() as u64).to_le_bytes())?;
    put(&json)?;
    for v in payload {
        put(&v.to_le_bytes())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn open_header<H: DeserializeOwned>(path: &Path) -> Result<(H, BufReader<File>)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(|_| Error::Format(format!("{}: truncated header", path.display())))?;
    let len = u64::from_le_bytes(len);
    if len > MAX_HEADER {
        return Err(Error::Format(format!("{}: implausible header length {len}", path.display())));
    }
    let mut json = vec![0u8; len as usize];
    r.read_exact(&mut json).map_err(|_| Error::Format(format!("{}: truncated header", path.display())))?;
    let header = serde_json::from_slice(&json)
        .map_err(|e| Error::Format(format!("{}: bad header: {e}", path.display())))?;
    Ok((header, r))
}

/// Reads only the JSON header.
pub fn read_header<H: DeserializeOwned>(path: &Path) -> Result<H> {
    open_header(path).map(|(h, _)| h)
}

/// Reads header and payload; the payload must hold exactly `expected(&header)` values.
pub fn read<H: DeserializeOwned>(path: &Path, expected: impl Fn(&H) -> usize) -> Result<(H, Vec<f64>)> {
    let (header, mut r) = open_header::<H>(path)?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    let n = expected(&header);
    if bytes.len() != 8 * n {
        return Err(Error::Format(format!(
            "{}: payload has {} bytes, expected {} values",
            path.display(),
            bytes.len(),
            n
        )));
    }
    Ok((header, decode_f64(&bytes)))
}

pub fn decode_f64(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect()
}

pub fn encode_f64(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    struct H {
        n: usize,
        name: String,
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        let payload = [1.5, -0.0, f64::MIN_POSITIVE, 1.0 / 3.0];
        write(&path, &H { n: 4, name: "a".into() }, &payload).unwrap();
        let (h, p): (H, Vec<f64>) = read(&path, |h: &H| h.n).unwrap();
        assert_eq!(h, H { n: 4, name: "a".into() });
        assert_eq!(p.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), payload.map(f64::to_bits).to_vec());
        assert!(matches!(read(&path, |_: &H| 5), Err(Error::Format(_))));
        let only: H = read_header(&path).unwrap();
        assert_eq!(only.n, 4);
    }

    #[test]
    fn garbage_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, [0xffu8; 12]).unwrap();
        assert!(matches!(read_header::<H>(&path), Err(Error::Format(_))));
    }
}
