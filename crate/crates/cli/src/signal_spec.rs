//! `--in name=spec` signal specifications.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anacomp::signal_io::read_wav;
use anacomp::Signal;

#[derive(Debug, Clone, PartialEq)]
pub enum SignalSpec {
    Const(f64),
    Step(f64),
    Sine { freq: f64, amp: f64 },
    Wav(PathBuf),
}

fn number(s: &str, what: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("invalid {what} `{s}`"))?;
    if !v.is_finite() {
        return Err(format!("invalid {what} `{s}`"));
    }
    Ok(v)
}

/// Parses `name=step:amp`, `name=sine:freq,amp`, `name=const:v` or
/// `name=wav:path`.
pub fn parse_input(arg: &str) -> Result<(String, SignalSpec), String> {
    let (name, spec) = arg
        .split_once('=')
        .ok_or_else(|| format!("expected name=spec, got `{arg}`"))?;
    if name.is_empty() {
        return Err(format!("missing input name in `{arg}`"));
    }
    let (kind, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let spec = match kind {
        "step" => SignalSpec::Step(if rest.is_empty() { 1.0 } else { number(rest, "step amplitude")? }),
        "const" => SignalSpec::Const(number(rest, "constant")?),
        "sine" => {
            let (f, a) = rest.split_once(',').unwrap_or((rest, "1"));
            let freq = number(f, "sine frequency")?;
            if freq < 0.0 {
                return Err(format!("sine frequency must be >= 0, got {freq}"));
            }
            SignalSpec::Sine {
                freq,
                amp: number(a, "sine amplitude")?,
            }
        }
        "wav" if !rest.is_empty() => SignalSpec::Wav(PathBuf::from(rest)),
        _ => return Err(format!("unknown signal `{spec}`; use step:A, sine:F,A, const:V or wav:PATH")),
    };
    Ok((name.to_string(), spec))
}

/// Linear-interpolation resampling.
pub fn resample(data: &[f64], from: f64, to: f64) -> Vec<f64> {
    if data.is_empty() || from == to {
        return data.to_vec();
    }
    let n = ((data.len() as f64) * to / from).round() as usize;
    (0..n)
        .map(|i| {
            let x = i as f64 * from / to;
            let j = x.floor() as usize;
            let frac = x - j as f64;
            let a = data[j.min(data.len() - 1)];
            let b = data[(j + 1).min(data.len() - 1)];
            a + (b - a) * frac
        })
        .collect()
}

impl SignalSpec {
    /// Engine signal at `rate` Hz; WAV samples are scaled so that digital
    /// full scale reads `full_scale` volts.
    pub fn to_signal(&self, rate: f64, full_scale: f64) -> Result<Signal, String> {
        Ok(match self {
            SignalSpec::Const(v) => Signal::Constant(*v),
            SignalSpec::Step(amp) => Signal::Step { amp: *amp, at: 0.0 },
            SignalSpec::Sine { freq, amp } => Signal::Sine { freq: *freq, amp: *amp },
            SignalSpec::Wav(path) => wav_signal(path, rate, full_scale)?,
        })
    }
}

fn wav_signal(path: &Path, rate: f64, full_scale: f64) -> Result<Signal, String> {
    let audio = read_wav(path).map_err(|e| e.to_string())?;
    let first = audio.channels.into_iter().next().unwrap_or_default();
    let volts: Vec<f64> = first.iter().map(|s| s * full_scale).collect();
    let data = resample(&volts, audio.sample_rate as f64, rate);
    Ok(Signal::Samples {
        rate,
        data: Arc::from(data),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs() {
        assert_eq!(parse_input("x=step:1").unwrap(), ("x".into(), SignalSpec::Step(1.0)));
        assert_eq!(parse_input("x=step").unwrap().1, SignalSpec::Step(1.0));
        assert_eq!(
            parse_input("cv=sine:440,2.5").unwrap().1,
            SignalSpec::Sine {
                freq: 440.0,
                amp: 2.5
            }
        );
        assert_eq!(parse_input("x=const:-3").unwrap().1, SignalSpec::Const(-3.0));
        assert_eq!(parse_input("x=wav:a/b.wav").unwrap().1, SignalSpec::Wav("a/b.wav".into()));
    }

    #[test]
    fn bad_specs() {
        for s in ["x", "=step:1", "x=step:abc", "x=sine:-1,1", "x=saw:1", "x=wav:", "x=const:inf"] {
            assert!(parse_input(s).is_err(), "{s}");
        }
    }

    #[test]
    fn resample_identity_and_upsample() {
        let d = vec![0.0, 1.0, 0.0];
        assert_eq!(resample(&d, 10.0, 10.0), d);
        assert_eq!(resample(&d, 1.0, 2.0), vec![0.0, 0.5, 1.0, 0.5, 0.0, 0.0]);
    }
}
