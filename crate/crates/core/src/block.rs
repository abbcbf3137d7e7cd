//! Catalog of analogue computing elements and their instantaneous semantics.
//!
//! Coefficients are stored as non-negative magnitudes. Gain stages, summers
//! and integrators invert by construction, as their op-amp realizations do;
//! a negative weight is obtained by chaining a unit inverter.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Default saturation bound of every signal, in machine volts.
pub const DEFAULT_RAIL: f64 = 10.0;

/// Default scale constant of the two-input multiplier (`v_a * v_b / 10`).
pub const DEFAULT_MULTIPLIER_SCALE: f64 = 0.1;

/// Gate voltage above which an envelope is considered held.
pub const GATE_THRESHOLD: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockKind {
    Atten,
    Gain,
    Summer,
    Integrator,
    Multiplier,
    Const,
    Osc,
    Noise,
    Env,
    Seq,
    Cmp,
    Lim,
    Bbd,
    Input,
    Output,
    Probe,
}

impl BlockKind {
    pub const ALL: [BlockKind; 16] = [
        BlockKind::Atten,
        BlockKind::Gain,
        BlockKind::Summer,
        BlockKind::Integrator,
        BlockKind::Multiplier,
        BlockKind::Const,
        BlockKind::Osc,
        BlockKind::Noise,
        BlockKind::Env,
        BlockKind::Seq,
        BlockKind::Cmp,
        BlockKind::Lim,
        BlockKind::Bbd,
        BlockKind::Input,
        BlockKind::Output,
        BlockKind::Probe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BlockKind::Atten => "atten",
            BlockKind::Gain => "gain",
            BlockKind::Summer => "summer",
            BlockKind::Integrator => "integrator",
            BlockKind::Multiplier => "multiplier",
            BlockKind::Const => "const",
            BlockKind::Osc => "osc",
            BlockKind::Noise => "noise",
            BlockKind::Env => "env",
            BlockKind::Seq => "seq",
            BlockKind::Cmp => "cmp",
            BlockKind::Lim => "lim",
            BlockKind::Bbd => "bbd",
            BlockKind::Input => "input",
            BlockKind::Output => "output",
            BlockKind::Probe => "probe",
        }
    }

    /// Stateful blocks break instantaneous dependency chains: their output
    /// is a function of internal state only.
    pub fn is_stateful(self) -> bool {
        matches!(self, BlockKind::Integrator | BlockKind::Bbd)
    }

    /// Sinks have no output port.
    pub fn is_sink(self) -> bool {
        matches!(self, BlockKind::Output | BlockKind::Probe)
    }

    /// Output inverts the sign of its weighted inputs.
    pub fn is_inverting(self) -> bool {
        matches!(
            self,
            BlockKind::Gain | BlockKind::Summer | BlockKind::Integrator
        )
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BlockKind {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BlockKind::ALL
            .iter()
            .copied()
            .find(|k| k.name() == s)
            .ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Sine,
    Tri,
    Saw,
    Square,
}

impl Shape {
    pub fn name(self) -> &'static str {
        match self {
            Shape::Sine => "sine",
            Shape::Tri => "tri",
            Shape::Saw => "saw",
            Shape::Square => "square",
        }
    }

    /// Unit-amplitude waveform at `phase` radians.
    pub fn eval(self, phase: f64) -> f64 {
        let p = phase.rem_euclid(TAU);
        match self {
            Shape::Sine => p.sin(),
            Shape::Saw => p / PI - 1.0,
            Shape::Tri => 1.0 - 2.0 * (p / PI - 1.0).abs(),
            Shape::Square => {
                if p < PI {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

impl FromStr for Shape {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sine" => Ok(Shape::Sine),
            "tri" => Ok(Shape::Tri),
            "saw" => Ok(Shape::Saw),
            "square" => Ok(Shape::Square),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SeqMode {
    Step,
    Linear,
}

impl SeqMode {
    pub fn name(self) -> &'static str {
        match self {
            SeqMode::Step => "step",
            SeqMode::Linear => "linear",
        }
    }
}

impl FromStr for SeqMode {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "step" => Ok(SeqMode::Step),
            "linear" => Ok(SeqMode::Linear),
            _ => Err(()),
        }
    }
}

/// Per-kind coefficient record.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockParams {
    /// Passive divider, `a * v` with `0 <= a <= 1`.
    Atten { a: f64 },
    /// Inverting scalar gain, `-k * v`.
    Gain { k: f64 },
    /// Inverting weighted sum, `-sum(k_n * v_n)`.
    Summer { k: Vec<f64> },
    /// Inverting integrator, `dV/dt = -sum(k_n * v_n)`, `V(0) = ic`.
    Integrator { k: Vec<f64>, ic: f64 },
    /// Two-input multiplier, `s * v_a * v_b`.
    Multiplier { s: f64 },
    Const { v: f64 },
    /// Oscillator with a 1 V/octave control input.
    Osc { shape: Shape, f_ref: f64, amp: f64 },
    /// Uniform white noise in `[-amp, amp]`.
    Noise { seed: u64, amp: f64 },
    /// Linear-segment ADSR driven by a gate input.
    Env {
        attack: f64,
        decay: f64,
        sustain: f64,
        release: f64,
        amp: f64,
    },
    /// Breakpoint function of time.
    Seq { points: Vec<(f64, f64)>, mode: SeqMode },
    Cmp { hi: f64, lo: f64 },
    Lim { lo: f64, hi: f64 },
    /// Bucket-brigade delay: `stages` cells clocked at `f_clk`.
    Bbd { stages: u32, f_clk: f64 },
    Input,
    /// Audio pre-amplifier sink, `g * v`.
    Output { g: f64 },
    Probe,
}

impl BlockParams {
    pub fn kind(&self) -> BlockKind {
        match self {
            BlockParams::Atten { .. } => BlockKind::Atten,
            BlockParams::Gain { .. } => BlockKind::Gain,
            BlockParams::Summer { .. } => BlockKind::Summer,
            BlockParams::Integrator { .. } => BlockKind::Integrator,
            BlockParams::Multiplier { .. } => BlockKind::Multiplier,
            BlockParams::Const { .. } => BlockKind::Const,
            BlockParams::Osc { .. } => BlockKind::Osc,
            BlockParams::Noise { .. } => BlockKind::Noise,
            BlockParams::Env { .. } => BlockKind::Env,
            BlockParams::Seq { .. } => BlockKind::Seq,
            BlockParams::Cmp { .. } => BlockKind::Cmp,
            BlockParams::Lim { .. } => BlockKind::Lim,
            BlockParams::Bbd { .. } => BlockKind::Bbd,
            BlockParams::Input => BlockKind::Input,
            BlockParams::Output { .. } => BlockKind::Output,
            BlockParams::Probe => BlockKind::Probe,
        }
    }

    /// Number of input ports.
    pub fn input_arity(&self) -> usize {
        match self {
            BlockParams::Summer { k } | BlockParams::Integrator { k, .. } => k.len(),
            BlockParams::Multiplier { .. } | BlockParams::Cmp { .. } => 2,
            BlockParams::Const { .. }
            | BlockParams::Noise { .. }
            | BlockParams::Seq { .. }
            | BlockParams::Input => 0,
            BlockParams::Atten { .. }
            | BlockParams::Gain { .. }
            | BlockParams::Osc { .. }
            | BlockParams::Env { .. }
            | BlockParams::Lim { .. }
            | BlockParams::Bbd { .. }
            | BlockParams::Output { .. }
            | BlockParams::Probe => 1,
        }
    }

    pub fn has_output(&self) -> bool {
        !self.kind().is_sink()
    }

    /// Resolves a named port alias (`a`, `b`, `cv`, `gate`) to an index.
    pub fn port_alias(&self, name: &str) -> Option<usize> {
        match (self, name) {
            (_, "in") => Some(0),
            (BlockParams::Multiplier { .. } | BlockParams::Cmp { .. }, "a") => Some(0),
            (BlockParams::Multiplier { .. } | BlockParams::Cmp { .. }, "b") => Some(1),
            (BlockParams::Osc { .. }, "cv") => Some(0),
            (BlockParams::Env { .. }, "gate") => Some(0),
            _ => None,
        }
    }

    /// Checks the coefficient invariants; returns a description of the first
    /// violation.
    pub fn check(&self) -> Result<(), String> {
        fn finite(name: &str, v: f64) -> Result<(), String> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(format!("`{name}` must be finite"))
            }
        }
        fn magnitude(name: &str, v: f64) -> Result<(), String> {
            finite(name, v)?;
            if v < 0.0 {
                return Err(format!(
                    "`{name}` is a magnitude and must be >= 0 (got {v}); invert with a unit gain stage instead"
                ));
            }
            Ok(())
        }
        match self {
            BlockParams::Atten { a } => {
                finite("a", *a)?;
                if !(0.0..=1.0).contains(a) {
                    return Err(format!("attenuation `a` must be within [0, 1] (got {a})"));
                }
            }
            BlockParams::Gain { k } => magnitude("k", *k)?,
            BlockParams::Summer { k } => {
                if k.is_empty() {
                    return Err("summer needs at least one coefficient".into());
                }
                k.iter().try_for_each(|v| magnitude("k", *v))?;
            }
            BlockParams::Integrator { k, ic } => {
                if k.is_empty() {
                    return Err("integrator needs at least one coefficient".into());
                }
                k.iter().try_for_each(|v| magnitude("k", *v))?;
                finite("ic", *ic)?;
            }
            BlockParams::Multiplier { s } => finite("s", *s)?,
            BlockParams::Const { v } => finite("v", *v)?,
            BlockParams::Osc { f_ref, amp, .. } => {
                finite("f_ref", *f_ref)?;
                if *f_ref <= 0.0 {
                    return Err(format!("`f_ref` must be > 0 (got {f_ref})"));
                }
                magnitude("amp", *amp)?;
            }
            BlockParams::Noise { amp, .. } => magnitude("amp", *amp)?,
            BlockParams::Env {
                attack,
                decay,
                sustain,
                release,
                amp,
            } => {
                magnitude("a", *attack)?;
                magnitude("d", *decay)?;
                magnitude("r", *release)?;
                finite("amp", *amp)?;
                finite("s", *sustain)?;
                if !(0.0..=1.0).contains(sustain) {
                    return Err(format!("sustain `s` must be within [0, 1] (got {sustain})"));
                }
            }
            BlockParams::Seq { points, .. } => {
                if points.is_empty() {
                    return Err("seq needs at least one breakpoint".into());
                }
                for (t, v) in points {
                    finite("points", *t)?;
                    finite("points", *v)?;
                }
                if points.windows(2).any(|w| w[1].0 < w[0].0) {
                    return Err("seq breakpoint times must be non-decreasing".into());
                }
            }
            BlockParams::Cmp { hi, lo } => {
                finite("hi", *hi)?;
                finite("lo", *lo)?;
            }
            BlockParams::Lim { lo, hi } => {
                finite("lo", *lo)?;
                finite("hi", *hi)?;
                if lo > hi {
                    return Err(format!("limiter needs lo <= hi (got lo={lo}, hi={hi})"));
                }
            }
            BlockParams::Bbd { stages, f_clk } => {
                if *stages < 1 {
                    return Err("bbd needs at least one stage".into());
                }
                finite("f_clk", *f_clk)?;
                if *f_clk <= 0.0 {
                    return Err(format!("`f_clk` must be > 0 (got {f_clk})"));
                }
            }
            BlockParams::Output { g } => finite("g", *g)?,
            BlockParams::Input | BlockParams::Probe => {}
        }
        Ok(())
    }
}

/// Instantaneous state a block needs to produce its output.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BlockState {
    #[default]
    None,
    /// Integrator capacitor voltage.
    Integrator(f64),
    /// Oscillator phase in radians.
    Osc(f64),
    /// Held noise sample.
    Noise(f64),
    /// Envelope level in `[0, 1]`.
    Env(f64),
    /// Value at the bucket-brigade output.
    Bbd(f64),
    /// External signal value.
    Input(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BlockError {
    #[error("E_ARITY: {kind} expects {expected} inputs, got {got}")]
    Arity {
        kind: BlockKind,
        expected: usize,
        got: usize,
    },
    #[error("{kind} block evaluated without its state")]
    MissingState { kind: BlockKind },
}

pub fn clamp_rail(v: f64, rail: f64) -> f64 {
    v.clamp(-rail, rail)
}

fn check_arity(params: &BlockParams, got: usize) -> Result<(), BlockError> {
    let expected = params.input_arity();
    if expected != got {
        return Err(BlockError::Arity {
            kind: params.kind(),
            expected,
            got,
        });
    }
    Ok(())
}

/// Value of a breakpoint function at time `t`. Before the first breakpoint
/// the first value holds; after the last, the last value holds.
pub fn seq_value(points: &[(f64, f64)], mode: SeqMode, t: f64) -> f64 {
    let Some(&(t0, v0)) = points.first() else {
        return 0.0;
    };
    if t <= t0 {
        return v0;
    }
    // index of the last breakpoint with time <= t
    let idx = points.partition_point(|&(bt, _)| bt <= t) - 1;
    let (ta, va) = points[idx];
    match (mode, points.get(idx + 1)) {
        (SeqMode::Linear, Some(&(tb, vb))) if tb > ta => va + (vb - va) * (t - ta) / (tb - ta),
        _ => va,
    }
}

/// Instantaneous output of a block, rail-clamped.
pub fn eval_block(
    params: &BlockParams,
    inputs: &[f64],
    state: BlockState,
    t: f64,
    rail: f64,
) -> Result<f64, BlockError> {
    check_arity(params, inputs.len())?;
    let missing = || BlockError::MissingState {
        kind: params.kind(),
    };
    let v = match params {
        BlockParams::Atten { a } => a * inputs[0],
        BlockParams::Gain { k } => -k * inputs[0],
        BlockParams::Summer { k } => -weighted_sum(k, inputs),
        BlockParams::Integrator { .. } => match state {
            BlockState::Integrator(v) => v,
            _ => return Err(missing()),
        },
        BlockParams::Multiplier { s } => s * inputs[0] * inputs[1],
        BlockParams::Const { v } => *v,
        BlockParams::Osc { shape, amp, .. } => match state {
            BlockState::Osc(phase) => amp * shape.eval(phase),
            _ => return Err(missing()),
        },
        BlockParams::Noise { .. } => match state {
            BlockState::Noise(v) => v,
            _ => return Err(missing()),
        },
        BlockParams::Env { amp, .. } => match state {
            BlockState::Env(level) => amp * level,
            _ => return Err(missing()),
        },
        BlockParams::Seq { points, mode } => seq_value(points, *mode, t),
        BlockParams::Cmp { hi, lo } => {
            if inputs[0] > inputs[1] {
                *hi
            } else {
                *lo
            }
        }
        BlockParams::Lim { lo, hi } => inputs[0].clamp(*lo, *hi),
        BlockParams::Bbd { .. } => match state {
            BlockState::Bbd(v) => v,
            _ => return Err(missing()),
        },
        BlockParams::Input => match state {
            BlockState::Input(v) => v,
            _ => return Err(missing()),
        },
        BlockParams::Output { g } => g * inputs[0],
        BlockParams::Probe => inputs[0],
    };
    Ok(clamp_rail(v, rail))
}

fn weighted_sum(k: &[f64], v: &[f64]) -> f64 {
    k.iter().zip(v).map(|(k, v)| k * v).sum()
}

/// Time derivative of an integrator's output, `-sum(k_n * v_n)` volts per
/// second.
pub fn integrator_rate(params: &BlockParams, inputs: &[f64]) -> Result<f64, BlockError> {
    match params {
        BlockParams::Integrator { k, .. } => {
            check_arity(params, inputs.len())?;
            Ok(-weighted_sum(k, inputs))
        }
        other => Err(BlockError::Arity {
            kind: other.kind(),
            expected: other.input_arity(),
            got: inputs.len(),
        }),
    }
}

/// Exponential 1 V/octave frequency law, clamped to `(0, nyquist]`.
pub fn vco_frequency(f_ref: f64, v_ctrl: f64, nyquist: f64) -> f64 {
    (f_ref * v_ctrl.exp2()).clamp(f64::MIN_POSITIVE, nyquist)
}
