//! On-disk formats.
//!
//! Two minimal containers, both "magic line + text header + raw
//! little-endian payload":
//!
//! ```text
//! GPV1                      GPS1
//! dims 32 32 32             detectors 64
//! spacing 0.0004            samples 1216
//! origin -0.0062 ... ...    sample_rate 40000000
//! dtype f64                 sound_speed 1500
//! count 32768               t_start 0
//! end                       dtype f32
//! <payload>                 positions 1
//!                           end
//!                           <N x 3 f64 positions><payload>
//! ```
//!
//! Floats in headers are written with Rust's shortest round-tripping
//! `Display` form, so write → read is bit-identical, payload included.
//! Payloads are x-fastest (volumes) / detector-major (signals), matching
//! the in-memory layouts exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{GpairError, Result};
use crate::geometry::{DetectorArray, VoxelGrid, VoxelImage};
use crate::operators::SignalSet;
use crate::phantom::PlanarImage;
use crate::real::{Dtype, Real};
use crate::wavefield::AcousticConfig;

const VOLUME_MAGIC: &str = "GPV1";
const SIGNAL_MAGIC: &str = "GPS1";

fn bad(msg: impl Into<String>) -> GpairError {
    GpairError::Format(msg.into())
}

/// Volume of either precision, as stored in a file.
#[derive(Clone, Debug)]
pub enum AnyVolume {
    F32(VoxelImage<f32>),
    F64(VoxelImage<f64>),
}

impl AnyVolume {
    pub fn dtype(&self) -> Dtype {
        match self {
            AnyVolume::F32(_) => Dtype::F32,
            AnyVolume::F64(_) => Dtype::F64,
        }
    }

    pub fn grid(&self) -> &VoxelGrid {
        match self {
            AnyVolume::F32(v) => &v.grid,
            AnyVolume::F64(v) => &v.grid,
        }
    }

    /// Widens to f64 (exact) regardless of stored precision.
    pub fn into_f64(self) -> VoxelImage<f64> {
        match self {
            AnyVolume::F32(v) => v.cast(),
            AnyVolume::F64(v) => v,
        }
    }
}

/// Signal block of either precision, plus optional detector positions.
#[derive(Clone, Debug)]
pub enum AnySignals {
    F32(SignalSet<f32>),
    F64(SignalSet<f64>),
}

impl AnySignals {
    pub fn dtype(&self) -> Dtype {
        match self {
            AnySignals::F32(_) => Dtype::F32,
            AnySignals::F64(_) => Dtype::F64,
        }
    }

    pub fn acoustic(&self) -> AcousticConfig {
        match self {
            AnySignals::F32(s) => s.acoustic,
            AnySignals::F64(s) => s.acoustic,
        }
    }

    pub fn n_detectors(&self) -> usize {
        match self {
            AnySignals::F32(s) => s.n_detectors,
            AnySignals::F64(s) => s.n_detectors,
        }
    }

    pub fn into_f64(self) -> SignalSet<f64> {
        match self {
            AnySignals::F32(s) => s.cast(),
            AnySignals::F64(s) => s,
        }
    }
}

fn write_payload<F: Real>(w: &mut impl Write, values: &[F]) -> Result<()> {
    match F::DTYPE {
        Dtype::F32 => {
            for v in values {
                w.write_all(&(v.to_f64() as f32).to_le_bytes())?;
            }
        }
        Dtype::F64 => {
            for v in values {
                w.write_all(&v.to_f64().to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_payload_f32(r: &mut impl Read, count: usize) -> Result<Vec<f32>> {
    let mut bytes = vec![0u8; count * 4];
    r.read_exact(&mut bytes)
        .map_err(|e| bad(format!("payload truncated: {e}")))?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn read_payload_f64(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)
        .map_err(|e| bad(format!("payload truncated: {e}")))?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
        .collect())
}

/// Text header as ordered key → fields lines, terminated by `end`.
struct Header {
    lines: Vec<(String, Vec<String>)>,
}

impl Header {
    fn parse(r: &mut impl BufRead, expect_magic: &str) -> Result<Self> {
        let mut line = String::new();
        r.read_line(&mut line)?;
        if line.trim_end_matches('\n') != expect_magic {
            return Err(bad(format!(
                "bad magic: expected {expect_magic:?}, found {:?}",
                line.trim_end_matches('\n')
            )));
        }
        let mut lines = Vec::new();
        loop {
            let mut raw = String::new();
            if r.read_line(&mut raw)? == 0 {
                return Err(bad("header ended before `end`"));
            }
            let raw = raw.trim_end_matches('\n');
            if raw == "end" {
                return Ok(Header { lines });
            }
            let mut parts = raw.split_whitespace().map(str::to_string);
            let key = parts.next().ok_or_else(|| bad("empty header line"))?;
            lines.push((key, parts.collect()));
        }
    }

    fn fields(&self, key: &str) -> Result<&[String]> {
        self.lines
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_slice())
            .ok_or_else(|| bad(format!("missing header field {key:?}")))
    }

    fn scalar<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let fields = self.fields(key)?;
        if fields.len() != 1 {
            return Err(bad(format!(
                "field {key:?} wants one value, has {}",
                fields.len()
            )));
        }
        fields[0]
            .parse()
            .map_err(|_| bad(format!("cannot parse {key:?} from {:?}", fields[0])))
    }

    fn triple<T: std::str::FromStr + Copy>(&self, key: &str) -> Result<[T; 3]> {
        let fields = self.fields(key)?;
        if fields.len() != 3 {
            return Err(bad(format!(
                "field {key:?} wants three values, has {}",
                fields.len()
            )));
        }
        let mut out: Vec<T> = Vec::with_capacity(3);
        for f in fields {
            out.push(
                f.parse()
                    .map_err(|_| bad(format!("cannot parse {key:?} entry {f:?}")))?,
            );
        }
        Ok([out[0], out[1], out[2]])
    }

    fn dtype(&self) -> Result<Dtype> {
        match self.fields("dtype")? {
            [tag] if tag == "f32" => Ok(Dtype::F32),
            [tag] if tag == "f64" => Ok(Dtype::F64),
            other => Err(bad(format!("unknown dtype {other:?}"))),
        }
    }
}

fn dtype_tag(d: Dtype) -> &'static str {
    match d {
        Dtype::F32 => "f32",
        Dtype::F64 => "f64",
    }
}

pub fn write_volume(path: impl AsRef<Path>, volume: &AnyVolume) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let grid = volume.grid();
    writeln!(w, "{VOLUME_MAGIC}")?;
    writeln!(w, "dims {} {} {}", grid.dims[0], grid.dims[1], grid.dims[2])?;
    writeln!(w, "spacing {}", grid.spacing)?;
    writeln!(
        w,
        "origin {} {} {}",
        grid.origin[0], grid.origin[1], grid.origin[2]
    )?;
    writeln!(w, "dtype {}", dtype_tag(volume.dtype()))?;
    writeln!(w, "count {}", grid.len())?;
    writeln!(w, "end")?;
    match volume {
        AnyVolume::F32(v) => write_payload(&mut w, &v.values)?,
        AnyVolume::F64(v) => write_payload(&mut w, &v.values)?,
    }
    w.flush()?;
    Ok(())
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<AnyVolume> {
    let mut r = BufReader::new(File::open(path)?);
    let header = Header::parse(&mut r, VOLUME_MAGIC)?;
    let dims: [usize; 3] = header.triple("dims")?;
    let spacing: f64 = header.scalar("spacing")?;
    let origin: [f64; 3] = header.triple("origin")?;
    let count: usize = header.scalar("count")?;
    let grid = VoxelGrid::new(dims, spacing, origin)
        .map_err(|e| bad(format!("header describes an invalid grid: {e}")))?;
    if count != grid.len() {
        return Err(bad(format!("count {count} does not match dims {dims:?}")));
    }
    let volume = match header.dtype()? {
        Dtype::F32 => AnyVolume::F32(
            VoxelImage::from_values(grid, read_payload_f32(&mut r, count)?)
                .map_err(|e| bad(format!("{e}")))?,
        ),
        Dtype::F64 => AnyVolume::F64(
            VoxelImage::from_values(grid, read_payload_f64(&mut r, count)?)
                .map_err(|e| bad(format!("{e}")))?,
        ),
    };
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(bad("trailing bytes after payload"));
    }
    Ok(volume)
}

pub fn write_signals(
    path: impl AsRef<Path>,
    signals: &AnySignals,
    positions: Option<&DetectorArray>,
) -> Result<()> {
    if let Some(array) = positions {
        if array.positions.len() != signals.n_detectors() {
            return Err(GpairError::ShapeMismatch(format!(
                "{} positions for {} detectors",
                array.positions.len(),
                signals.n_detectors()
            )));
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    let acoustic = signals.acoustic();
    writeln!(w, "{SIGNAL_MAGIC}")?;
    writeln!(w, "detectors {}", signals.n_detectors())?;
    writeln!(w, "samples {}", acoustic.n_samples)?;
    writeln!(w, "sample_rate {}", acoustic.sample_rate)?;
    writeln!(w, "sound_speed {}", acoustic.sound_speed)?;
    writeln!(w, "t_start {}", acoustic.t_start)?;
    writeln!(w, "dtype {}", dtype_tag(signals.dtype()))?;
    writeln!(w, "positions {}", if positions.is_some() { 1 } else { 0 })?;
    writeln!(w, "end")?;
    if let Some(array) = positions {
        for p in &array.positions {
            for c in p {
                w.write_all(&c.to_le_bytes())?;
            }
        }
    }
    match signals {
        AnySignals::F32(s) => write_payload(&mut w, &s.data)?,
        AnySignals::F64(s) => write_payload(&mut w, &s.data)?,
    }
    w.flush()?;
    Ok(())
}

pub fn read_signals(path: impl AsRef<Path>) -> Result<(AnySignals, Option<DetectorArray>)> {
    let mut r = BufReader::new(File::open(path)?);
    let header = Header::parse(&mut r, SIGNAL_MAGIC)?;
    let n_detectors: usize = header.scalar("detectors")?;
    let n_samples: usize = header.scalar("samples")?;
    let sample_rate: f64 = header.scalar("sample_rate")?;
    let sound_speed: f64 = header.scalar("sound_speed")?;
    let t_start: f64 = header.scalar("t_start")?;
    let has_positions: u8 = header.scalar("positions")?;
    let acoustic = AcousticConfig::new(sound_speed, sample_rate, n_samples, t_start)
        .map_err(|e| bad(format!("header describes an invalid acquisition: {e}")))?;

    let array = match has_positions {
        0 => None,
        1 => {
            let flat = read_payload_f64(&mut r, n_detectors * 3)?;
            let positions: Vec<[f64; 3]> =
                flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
            Some(
                DetectorArray::custom(positions)
                    .map_err(|e| bad(format!("stored positions are invalid: {e}")))?,
            )
        }
        other => return Err(bad(format!("positions flag must be 0 or 1, got {other}"))),
    };

    let count = n_detectors * n_samples;
    let signals = match header.dtype()? {
        Dtype::F32 => AnySignals::F32(
            SignalSet::from_data(n_detectors, acoustic, read_payload_f32(&mut r, count)?)
                .map_err(|e| bad(format!("{e}")))?,
        ),
        Dtype::F64 => AnySignals::F64(
            SignalSet::from_data(n_detectors, acoustic, read_payload_f64(&mut r, count)?)
                .map_err(|e| bad(format!("{e}")))?,
        ),
    };
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(bad("trailing bytes after payload"));
    }
    Ok((signals, array))
}

/// 8-bit binary PGM, min..max of the image mapped to 0..255 (a flat
/// image comes out all zero).
pub fn write_pgm(path: impl AsRef<Path>, image: &PlanarImage) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{} {}\n255\n", image.cols, image.rows)?;
    let lo = image.data.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let hi = image.data.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let span = hi - lo;
    for &v in &image.data {
        let byte = if span > 0.0 {
            ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
        } else {
            0
        };
        w.write_all(&[byte])?;
    }
    w.flush()?;
    Ok(())
}

/// Interop escape hatch: bare payload at `path` plus a `<path>.txt`
/// sidecar describing the layout in plain text.
pub fn export_raw_with_sidecar(path: impl AsRef<Path>, volume: &AnyVolume) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path)?);
    match volume {
        AnyVolume::F32(v) => write_payload(&mut w, &v.values)?,
        AnyVolume::F64(v) => write_payload(&mut w, &v.values)?,
    }
    w.flush()?;

    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".txt");
    let grid = volume.grid();
    let mut s = BufWriter::new(File::create(sidecar)?);
    writeln!(s, "layout raw little-endian {}", dtype_tag(volume.dtype()))?;
    writeln!(s, "order x-fastest then y then z")?;
    writeln!(s, "dims {} {} {}", grid.dims[0], grid.dims[1], grid.dims[2])?;
    writeln!(s, "spacing {}", grid.spacing)?;
    writeln!(
        s,
        "origin {} {} {}",
        grid.origin[0], grid.origin[1], grid.origin[2]
    )?;
    s.flush()?;
    Ok(())
}
