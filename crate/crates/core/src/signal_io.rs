//! WAV and CSV export of rendered traces, and WAV import for input signals.
//!
//! WAV files always carry the 44-byte canonical PCM header, whatever the
//! channel count or bit depth.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::sim::TraceSet;

pub const DEFAULT_BITS: u16 = 16;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("E_IO: {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("E_IO: {path}: {source}")]
    Decode { path: PathBuf, source: hound::Error },
    #[error("{0}")]
    Format(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Sample layout of an exported WAV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AudioFormat {
    pub sample_rate: u32,
    pub bits: u16,
    pub channels: u16,
}

impl AudioFormat {
    pub fn block_align(&self) -> u16 {
        self.channels * self.bits / 8
    }

    pub fn byte_rate(&self) -> u32 {
        self.sample_rate * self.block_align() as u32
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WavOptions {
    /// 16 or 24.
    pub bits: u16,
    /// Volts mapped to digital full scale.
    pub full_scale: f64,
    /// Traces to export, in channel order; all traces when `None`.
    pub channels: Option<Vec<String>>,
}

impl Default for WavOptions {
    fn default() -> Self {
        Self {
            bits: DEFAULT_BITS,
            full_scale: crate::block::DEFAULT_RAIL,
            channels: None,
        }
    }
}

/// `v / rail`, clamped to `[-1, 1]`.
pub fn normalize(v: f64, rail: f64) -> f64 {
    (v / rail).clamp(-1.0, 1.0)
}

/// Integer code of a normalized sample: `round(s * (2^(bits-1) - 1))`.
pub fn quantize(s: f64, bits: u16) -> i32 {
    let max = ((1i64 << (bits - 1)) - 1) as f64;
    (s.clamp(-1.0, 1.0) * max).round() as i32
}

fn selected<'a>(traces: &'a TraceSet, names: Option<&[String]>) -> Result<Vec<&'a [f64]>, IoError> {
    if traces.traces.is_empty() {
        return Err(IoError::Format("nothing to export: the patch has no probes".into()));
    }
    let len = traces.len();
    if traces.traces.iter().any(|t| t.samples.len() != len) {
        return Err(IoError::Format("traces differ in length".into()));
    }
    match names {
        None => Ok(traces.traces.iter().map(|t| t.samples.as_slice()).collect()),
        Some([]) => Err(IoError::Format("no channels selected".into())),
        Some(names) => names
            .iter()
            .map(|n| {
                traces
                    .get(n)
                    .ok_or_else(|| IoError::Format(format!("no trace named `{n}`")))
            })
            .collect(),
    }
}

/// Encodes the selected traces as interleaved little-endian PCM.
pub fn encode_wav(traces: &TraceSet, opts: &WavOptions) -> Result<Vec<u8>, IoError> {
    if opts.bits != 16 && opts.bits != 24 {
        return Err(IoError::Format(format!("bit depth must be 16 or 24 (got {})", opts.bits)));
    }
    if !(opts.full_scale.is_finite() && opts.full_scale > 0.0) {
        return Err(IoError::Format(format!("full scale must be > 0 (got {})", opts.full_scale)));
    }
    let rate = traces.sample_rate;
    if !(rate >= 1.0 && rate <= u32::MAX as f64 && rate.fract() == 0.0) {
        return Err(IoError::Format(format!("WAV needs an integer sample rate (got {rate})")));
    }
    let chans = selected(traces, opts.channels.as_deref())?;
    let channels = u16::try_from(chans.len()).map_err(|_| IoError::Format("too many channels".into()))?;
    let format = AudioFormat {
        sample_rate: rate as u32,
        bits: opts.bits,
        channels,
    };
    let frames = traces.len();
    let data_len = frames as u64 * format.block_align() as u64;
    if data_len + 36 > u32::MAX as u64 {
        return Err(IoError::Format("audio data exceeds the 4 GiB WAV limit".into()));
    }
    let data_len = data_len as u32;

    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&format.channels.to_le_bytes());
    out.extend_from_slice(&format.sample_rate.to_le_bytes());
    out.extend_from_slice(&format.byte_rate().to_le_bytes());
    out.extend_from_slice(&format.block_align().to_le_bytes());
    out.extend_from_slice(&format.bits.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    let width = (opts.bits / 8) as usize;
    for i in 0..frames {
        for ch in &chans {
            let code = quantize(normalize(ch[i], opts.full_scale), opts.bits);
            out.extend_from_slice(&code.to_le_bytes()[..width]);
        }
    }
    Ok(out)
}

/// Writes a WAV file and returns the number of bytes written.
pub fn write_wav(traces: &TraceSet, path: &Path, opts: &WavOptions) -> Result<u64, IoError> {
    let bytes = encode_wav(traces, opts)?;
    fs::write(path, &bytes).map_err(io_err(path))?;
    Ok(bytes.len() as u64)
}

/// Seconds with nine significant digits.
fn format_time(t: f64) -> String {
    let decimals = if t > 0.0 { (8 - t.log10().floor() as i32).max(0) } else { 8 };
    format!("{t:.*}", decimals as usize)
}

/// CSV text: a `t,<trace names>` header and one row per sample.
pub fn encode_csv(traces: &TraceSet) -> Result<String, IoError> {
    let chans = selected(traces, None)?;
    let mut out = String::from("t");
    for t in &traces.traces {
        out.push(',');
        out.push_str(&t.name);
    }
    out.push('\n');
    for i in 0..traces.len() {
        out.push_str(&format_time(i as f64 / traces.sample_rate));
        for ch in &chans {
            let _ = write!(out, ",{}", ch[i]);
        }
        out.push('\n');
    }
    Ok(out)
}

/// Writes a CSV file and returns the number of bytes written.
pub fn write_csv(traces: &TraceSet, path: &Path) -> Result<u64, IoError> {
    let text = encode_csv(traces)?;
    fs::write(path, &text).map_err(io_err(path))?;
    Ok(text.len() as u64)
}

/// Decoded PCM audio, samples normalized to `[-1, 1]` per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub sample_rate: u32,
    pub channels: Vec<Vec<f64>>,
}

/// Reads an integer or float PCM WAV file.
pub fn read_wav(path: &Path) -> Result<Audio, IoError> {
    let decode = |source| IoError::Decode {
        path: path.to_path_buf(),
        source,
    };
    let reader = hound::WavReader::open(path).map_err(decode)?;
    let spec = reader.spec();
    let n = spec.channels as usize;
    let flat: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(decode)?,
        hound::SampleFormat::Int => {
            let max = ((1i64 << (spec.bits_per_sample - 1)) - 1) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| (v as f64 / max).clamp(-1.0, 1.0)))
                .collect::<Result<_, _>>()
                .map_err(decode)?
        }
    };
    let mut channels = vec![Vec::with_capacity(flat.len() / n.max(1)); n];
    for (i, v) in flat.into_iter().enumerate() {
        channels[i % n].push(v);
    }
    Ok(Audio {
        sample_rate: spec.sample_rate,
        channels,
    })
}
