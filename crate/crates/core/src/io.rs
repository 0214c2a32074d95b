//! File formats: trajectory CSV, scan CSV and 4-channel WAV.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! read of a written file reproduces every value bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{ScanCloud, Sensor, TimedPoint3, Trajectory};

pub const TRAJECTORY_HEADER: [&str; 4] = ["t", "x", "y", "z"];
pub const SCAN_HEADER: [&str; 5] = ["stamp", "x", "y", "z", "sensor"];

fn format_err(what: &'static str, reason: impl Into<String>) -> Error {
    Error::Format {
        what,
        reason: reason.into(),
    }
}

fn parse_f64(field: Option<&str>, what: &'static str, line: u64) -> Result<f64> {
    let field = field.ok_or_else(|| format_err(what, format!("line {line}: missing column")))?;
    field
        .trim()
        .parse::<f64>()
        .map_err(|e| format_err(what, format!("line {line}: `{field}`: {e}")))
}

/// Writes `t,x,y,z` rows, plus a `var` column when variances are given.
pub fn write_trajectory<W: Write>(
    writer: W,
    traj: &Trajectory,
    variance: Option<&[f64]>,
) -> Result<()> {
    if let Some(v) = variance {
        if v.len() != traj.len() {
            return Err(Error::Shape(format!(
                "{} variances for {} points",
                v.len(),
                traj.len()
            )));
        }
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    let mut header: Vec<&str> = TRAJECTORY_HEADER.to_vec();
    if variance.is_some() {
        header.push("var");
    }
    w.write_record(&header)?;
    for (i, pt) in traj.points().iter().enumerate() {
        let mut row = vec![
            pt.t.to_string(),
            pt.p[0].to_string(),
            pt.p[1].to_string(),
            pt.p[2].to_string(),
        ];
        if let Some(v) = variance {
            row.push(v[i].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trajectory CSV; the optional fifth column is returned as variances.
pub fn read_trajectory<R: Read>(reader: R) -> Result<(Trajectory, Option<Vec<f64>>)> {
    const WHAT: &str = "trajectory csv";
    let mut r = csv::ReaderBuilder::new().from_reader(reader);
    let header = r.headers()?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let has_var = match names.as_slice() {
        ["t", "x", "y", "z"] => false,
        ["t", "x", "y", "z", "var"] => true,
        _ => {
            return Err(format_err(
                WHAT,
                format!("expected header `t,x,y,z[,var]`, got `{}`", names.join(",")),
            ))
        }
    };
    let mut points = Vec::new();
    let mut var = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let t = parse_f64(rec.get(0), WHAT, line)?;
        let p = [
            parse_f64(rec.get(1), WHAT, line)?,
            parse_f64(rec.get(2), WHAT, line)?,
            parse_f64(rec.get(3), WHAT, line)?,
        ];
        points.push(TimedPoint3::new(t, p));
        if has_var {
            var.push(parse_f64(rec.get(4), WHAT, line)?);
        }
    }
    Ok((Trajectory::new(points)?, has_var.then_some(var)))
}

pub fn save_trajectory(path: &Path, traj: &Trajectory, variance: Option<&[f64]>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::from(e).at_path(path))?;
    write_trajectory(std::io::BufWriter::new(file), traj, variance).map_err(|e| e.at_path(path))
}

pub fn load_trajectory(path: &Path) -> Result<(Trajectory, Option<Vec<f64>>)> {
    let file = std::fs::File::open(path).map_err(|e| Error::from(e).at_path(path))?;
    read_trajectory(std::io::BufReader::new(file)).map_err(|e| e.at_path(path))
}

/// One row per point. Empty scans have no rows and are not representable.
pub fn write_scans<W: Write>(writer: W, scans: &[ScanCloud]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    w.write_record(SCAN_HEADER)?;
    for scan in scans {
        for p in &scan.points {
            w.write_record([
                scan.stamp.to_string(),
                p[0].to_string(),
                p[1].to_string(),
                p[2].to_string(),
                scan.sensor.as_str().to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Groups rows into scans by `(sensor, stamp)`, returned in stamp order
/// (panoramic before conical on equal stamps).
pub fn read_scans<R: Read>(reader: R) -> Result<Vec<ScanCloud>> {
    const WHAT: &str = "scan csv";
    let mut r = csv::ReaderBuilder::new().from_reader(reader);
    let header = r.headers()?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != SCAN_HEADER {
        return Err(format_err(
            WHAT,
            format!("expected header `stamp,x,y,z,sensor`, got `{}`", names.join(",")),
        ));
    }
    let mut scans: Vec<ScanCloud> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let stamp = parse_f64(rec.get(0), WHAT, line)?;
        let p = [
            parse_f64(rec.get(1), WHAT, line)?,
            parse_f64(rec.get(2), WHAT, line)?,
            parse_f64(rec.get(3), WHAT, line)?,
        ];
        let sensor: Sensor = rec
            .get(4)
            .ok_or_else(|| format_err(WHAT, format!("line {line}: missing sensor")))?
            .parse()?;
        if !stamp.is_finite() || !p.iter().all(|v| v.is_finite()) {
            return Err(format_err(WHAT, format!("line {line}: non-finite value")));
        }
        match scans.last_mut() {
            Some(s) if s.sensor == sensor && s.stamp.to_bits() == stamp.to_bits() => {
                s.points.push(p)
            }
            _ => scans.push(ScanCloud {
                sensor,
                stamp,
                points: vec![p],
            }),
        }
    }
    scans.sort_by(|a, b| a.stamp.total_cmp(&b.stamp).then(a.sensor.cmp(&b.sensor)));
    Ok(scans)
}

pub fn save_scans(path: &Path, scans: &[ScanCloud]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::from(e).at_path(path))?;
    write_scans(std::io::BufWriter::new(file), scans).map_err(|e| e.at_path(path))
}

pub fn load_scans(path: &Path) -> Result<Vec<ScanCloud>> {
    let file = std::fs::File::open(path).map_err(|e| Error::from(e).at_path(path))?;
    read_scans(std::io::BufReader::new(file)).map_err(|e| e.at_path(path))
}

/// De-interleaved multichannel audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub sample_rate: u32,
    pub channels: Vec<Vec<f64>>,
}

/// Reads 16-bit integer or 32-bit float WAV data. Integer samples are
/// mapped to [-1, 1) by dividing by 32768.
pub fn load_wav(path: &Path) -> Result<Waveform> {
    let mut reader = hound::WavReader::open(path).map_err(|e| Error::from(e).at_path(path))?;
    let spec = reader.spec();
    let n_ch = spec.channels as usize;
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(format_err(
                "wav file",
                format!("unsupported sample format {fmt:?} with {bits} bits"),
            )
            .at_path(path))
        }
    };
    let mut channels = vec![Vec::with_capacity(interleaved.len() / n_ch.max(1)); n_ch];
    for (i, v) in interleaved.into_iter().enumerate() {
        channels[i % n_ch].push(v);
    }
    Ok(Waveform {
        sample_rate: spec.sample_rate,
        channels,
    })
}

/// Writes 32-bit float WAV.
pub fn save_wav(path: &Path, wave: &Waveform) -> Result<()> {
    let n_ch = wave.channels.len();
    let len = wave.channels.first().map_or(0, Vec::len);
    if n_ch == 0 || wave.channels.iter().any(|c| c.len() != len) {
        return Err(Error::Shape("channels must be non-empty and equal length".into()));
    }
    let spec = hound::WavSpec {
        channels: n_ch as u16,
        sample_rate: wave.sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(|e| Error::from(e).at_path(path))?;
    for i in 0..len {
        for ch in &wave.channels {
            w.write_sample(ch[i] as f32)?;
        }
    }
    w.finalize()?;
    Ok(())
}
