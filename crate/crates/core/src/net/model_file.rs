//! Model file: one JSON header line, then every weight as a little-endian
//! `f32`, tensor by tensor in header order.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NetParams, NetShape};
use crate::error::{Error, Result};
use crate::types::Vec3;

const FORMAT: &str = "audiotrack-net";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub format: String,
    pub version: u32,
    /// Fingerprint of the front-end settings the network was trained on.
    pub fingerprint: String,
    pub shape: NetShape,
    pub tensors: Vec<TensorEntry>,
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub target_mean: Vec3,
    pub target_std: Vec3,
}

pub fn write_model<W: Write>(mut w: W, params: &NetParams, fingerprint: &str) -> Result<()> {
    let header = ModelHeader {
        format: FORMAT.into(),
        version: VERSION,
        fingerprint: fingerprint.into(),
        shape: params.shape,
        tensors: params
            .layout()
            .into_iter()
            .map(|t| TensorEntry {
                name: t.name.into(),
                shape: t.shape,
            })
            .collect(),
        input_mean: params.input_mean.clone(),
        input_std: params.input_std.clone(),
        target_mean: params.target_mean,
        target_std: params.target_std,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    let mut buf = Vec::with_capacity(4 * params.weights.len());
    for &v in &params.weights {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

fn format_err(reason: impl Into<String>) -> Error {
    Error::Format {
        what: "model file",
        reason: reason.into(),
    }
}

/// Reads a model; when `expected_fingerprint` is given it must match.
pub fn read_model<R: Read>(r: R, expected_fingerprint: Option<&str>) -> Result<(NetParams, ModelHeader)> {
    let mut r = BufReader::new(r);
    let mut line = Vec::new();
    r.read_until(b'\n', &mut line)?;
    if line.last() != Some(&b'\n') {
        return Err(format_err("missing header line"));
    }
    let header: ModelHeader = serde_json::from_slice(&line)
        .map_err(|e| format_err(format!("bad header: {e}")))?;
    if header.format != FORMAT || header.version != VERSION {
        return Err(format_err(format!(
            "unsupported format {} v{}",
            header.format, header.version
        )));
    }
    if let Some(expected) = expected_fingerprint {
        if header.fingerprint != expected {
            return Err(Error::FingerprintMismatch {
                expected: expected.into(),
                found: header.fingerprint.clone(),
            });
        }
    }
    let mut params = NetParams::init(header.shape, 0)?;
    let layout = params.layout();
    if layout.len() != header.tensors.len()
        || layout
            .iter()
            .zip(&header.tensors)
            .any(|(a, b)| a.name != b.name || a.shape != b.shape)
    {
        return Err(format_err("tensor list does not match the declared shape"));
    }
    let planes = header.shape.planes;
    if header.input_mean.len() != planes || header.input_std.len() != planes {
        return Err(format_err("standardization length does not match planes"));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 4 * params.n_weights() {
        return Err(format_err(format!(
            "expected {} weight bytes, found {}",
            4 * params.n_weights(),
            bytes.len()
        )));
    }
    for (w, chunk) in params.weights.iter_mut().zip(bytes.chunks_exact(4)) {
        *w = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk")) as f64;
    }
    params.input_mean = header.input_mean.clone();
    params.input_std = header.input_std.clone();
    params.target_mean = header.target_mean;
    params.target_std = header.target_std;
    let all_finite = params
        .weights
        .iter()
        .chain(&params.input_mean)
        .chain(&params.input_std)
        .chain(&params.target_mean)
        .chain(&params.target_std)
        .all(|v| v.is_finite());
    if !all_finite {
        return Err(Error::NonFinite("model parameters"));
    }
    Ok((params, header))
}

pub fn save_model(path: &Path, params: &NetParams, fingerprint: &str) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::from(e).at_path(path))?;
    write_model(std::io::BufWriter::new(f), params, fingerprint).map_err(|e| e.at_path(path))
}

pub fn load_model(path: &Path, expected_fingerprint: Option<&str>) -> Result<(NetParams, ModelHeader)> {
    let f = std::fs::File::open(path).map_err(|e| Error::from(e).at_path(path))?;
    read_model(f, expected_fingerprint).map_err(|e| e.at_path(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bytes(p: &NetParams, fp: &str) -> Vec<u8> {
        let mut out = Vec::new();
        write_model(&mut out, p, fp).unwrap();
        out
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let mut p = NetParams::init(NetShape::standard(64), 11).unwrap();
        p.input_mean = vec![-3.25, 0.1, 1.0 / 3.0, 7.0];
        p.target_std = [0.3, 2.0, 1e-3];
        let first = bytes(&p, "abc");
        let (q, header) = read_model(first.as_slice(), Some("abc")).unwrap();
        assert_eq!(header.fingerprint, "abc");
        assert_eq!(q.input_mean, p.input_mean);
        assert_eq!(q.target_std, p.target_std);
        for (a, b) in p.weights.iter().zip(&q.weights) {
            assert_eq!(*a as f32, *b as f32);
        }
        assert_eq!(bytes(&q, "abc"), first);
        let (r, _) = read_model(first.as_slice(), None).unwrap();
        assert_eq!(r, q);
    }

    #[test]
    fn fingerprint_mismatch() {
        let p = NetParams::init(NetShape::standard(16), 1).unwrap();
        let b = bytes(&p, "one");
        assert!(matches!(
            read_model(b.as_slice(), Some("two")),
            Err(Error::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn truncated_file_rejected() {
        let p = NetParams::init(NetShape::standard(16), 1).unwrap();
        let b = bytes(&p, "x");
        assert!(matches!(
            read_model(&b[..b.len() - 1], None),
            Err(Error::Format { .. })
        ));
        assert!(read_model(&b[..10], None).is_err());
    }
}
