//! Fixed-step RK4 simulation of patches.
//!
//! Integrator voltages are the continuous state. Oscillator phase, envelope
//! level, noise and bucket-brigade outputs are advanced alongside the
//! integrators but held (or, for oscillators, extrapolated at the frequency
//! seen at the start of the step) inside the RK stages. Blocks with
//! discontinuities are evaluated as ordinary functions, so accuracy near a
//! jump is limited to the step size.

use std::collections::{BTreeMap, BinaryHeap};
use std::cmp::Reverse;
use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use thiserror::Error;

use crate::block::{
    eval_block, integrator_rate, vco_frequency, BlockKind, BlockParams, BlockState, DEFAULT_RAIL, GATE_THRESHOLD,
};
use crate::diag::{Code, Diagnostic, Location};
use crate::patch::{validate_patch, Patch};

const UNDRIVEN: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    /// Output sample rate in Hz.
    pub sample_rate: f64,
    /// Solver substeps per output sample.
    pub oversample: u32,
    pub rail: f64,
    /// Global seed mixed into every noise block.
    pub seed: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            sample_rate: 48_000.0,
            oversample: 4,
            rail: DEFAULT_RAIL,
            seed: 0,
        }
    }
}

impl EngineConfig {
    /// Internal step `1 / (sample_rate * oversample)`.
    pub fn step(&self) -> f64 {
        1.0 / (self.sample_rate * self.oversample as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid patch:\n{}", render_diags(.0))]
    InvalidPatch(Vec<Diagnostic>),
    #[error("invalid engine configuration: {0}")]
    Config(String),
    #[error("patch has no input named `{0}`")]
    UnknownInput(String),
    #[error("duration must be > 0 (got {0})")]
    Duration(f64),
    #[error("E_OVERFLOW: non-finite value at block `{block}` at t = {t} s")]
    Overflow { block: String, t: f64 },
}

fn render_diags(d: &[Diagnostic]) -> String {
    d.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n")
}

/// External signal driving an `input` block.
#[derive(Clone)]
pub enum Signal {
    Constant(f64),
    /// `amp` from time `at` on, zero before.
    Step { amp: f64, at: f64 },
    Sine { freq: f64, amp: f64 },
    /// Zero-order hold over samples at `rate`; silent after the last one.
    Samples { rate: f64, data: Arc<[f64]> },
    Func(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Signal {
    pub fn func(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Signal::Func(Arc::new(f))
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Signal::Constant(v) => *v,
            Signal::Step { amp, at } => {
                if t >= *at {
                    *amp
                } else {
                    0.0
                }
            }
            Signal::Sine { freq, amp } => amp * (TAU * freq * t).sin(),
            Signal::Samples { rate, data } => {
                // tolerance keeps sample instants on their own sample
                let i = (t * rate + 1e-9).floor();
                if i < 0.0 {
                    return 0.0;
                }
                data.get(i as usize).copied().unwrap_or(0.0)
            }
            Signal::Func(f) => f(t),
        }
    }
}

impl fmt::Debug for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Signal::Constant(v) => write!(f, "Constant({v})"),
            Signal::Step { amp, at } => write!(f, "Step {{ amp: {amp}, at: {at} }}"),
            Signal::Sine { freq, amp } => write!(f, "Sine {{ freq: {freq}, amp: {amp} }}"),
            Signal::Samples { rate, data } => write!(f, "Samples {{ rate: {rate}, len: {} }}", data.len()),
            Signal::Func(_) => f.write_str("Func(..)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub name: String,
    pub samples: Vec<f64>,
}

/// Sampled output of a render, one trace per sink block in declaration
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    pub patch: String,
    pub sample_rate: f64,
    pub duration: f64,
    pub seed: u64,
    pub traces: Vec<Trace>,
}

impl TraceSet {
    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.traces.iter().find(|t| t.name == name).map(|t| t.samples.as_slice())
    }

    pub fn len(&self) -> usize {
        self.traces.first().map_or(0, |t| t.samples.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EnvStage {
    Idle,
    Attack,
    Decay,
    Sustain,
    Release(f64),
}

#[derive(Debug, Clone, PartialEq)]
struct Envelope {
    stage: EnvStage,
    level: f64,
    gate: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct DelayLine {
    buf: Vec<f64>,
    pos: usize,
    out: f64,
    /// Index of the next clock tick.
    next_tick: u64,
}

/// Mutable simulation state; one per render.
#[derive(Debug, Clone)]
pub struct State {
    pub integrators: Vec<f64>,
    phases: Vec<f64>,
    freqs: Vec<f64>,
    noise: Vec<(SplitMix64, f64)>,
    envs: Vec<Envelope>,
    bbds: Vec<DelayLine>,
    signals: Vec<Signal>,
}

struct Scratch {
    out: Vec<f64>,
    buf: Vec<f64>,
    k: [Vec<f64>; 4],
    y: Vec<f64>,
}

/// A patch prepared for simulation.
#[derive(Debug, Clone)]
pub struct CompiledSystem {
    name: String,
    ids: Vec<String>,
    params: Vec<BlockParams>,
    /// Driver block of every input port, flattened; `port_start[b]` indexes
    /// block `b`'s first port.
    drivers: Vec<usize>,
    port_start: Vec<usize>,
    /// Kind-local index of every block (integrator slot, osc slot, ...).
    slot: Vec<usize>,
    integrators: Vec<usize>,
    oscs: Vec<usize>,
    noises: Vec<usize>,
    envs: Vec<usize>,
    bbds: Vec<usize>,
    inputs: Vec<usize>,
    roots: Vec<usize>,
    schedule: Vec<usize>,
    sinks: Vec<usize>,
    config: EngineConfig,
}

/// Validates `patch` and orders its stateless blocks for evaluation.
pub fn build_system(patch: &Patch, config: EngineConfig) -> Result<CompiledSystem, SimError> {
    if !(config.sample_rate.is_finite() && config.sample_rate > 0.0) {
        return Err(SimError::Config(format!("sample rate must be > 0 (got {})", config.sample_rate)));
    }
    if config.oversample < 1 {
        return Err(SimError::Config("oversample must be >= 1".into()));
    }
    if !(config.rail.is_finite() && config.rail > 0.0) {
        return Err(SimError::Config(format!("rail must be > 0 (got {})", config.rail)));
    }
    let diags: Vec<Diagnostic> = validate_patch(patch).into_iter().filter(|d| d.is_error()).collect();
    if !diags.is_empty() {
        return Err(SimError::InvalidPatch(diags));
    }

    let n = patch.blocks.len();
    let index: BTreeMap<&str, usize> = patch.blocks.iter().enumerate().map(|(i, b)| (b.id.as_str(), i)).collect();
    let mut port_start = Vec::with_capacity(n + 1);
    let mut total = 0;
    for b in &patch.blocks {
        port_start.push(total);
        total += b.params.input_arity();
    }
    port_start.push(total);
    let mut drivers = vec![UNDRIVEN; total];
    for w in &patch.wires {
        let (from, to) = (index[w.from.as_str()], index[w.to.as_str()]);
        drivers[port_start[to] + w.port] = from;
    }

    let mut sys = CompiledSystem {
        name: patch.name.clone(),
        ids: patch.blocks.iter().map(|b| b.id.clone()).collect(),
        params: patch.blocks.iter().map(|b| b.params.clone()).collect(),
        drivers,
        port_start,
        slot: vec![0; n],
        integrators: Vec::new(),
        oscs: Vec::new(),
        noises: Vec::new(),
        envs: Vec::new(),
        bbds: Vec::new(),
        inputs: Vec::new(),
        roots: Vec::new(),
        schedule: Vec::new(),
        sinks: Vec::new(),
        config,
    };
    let mut pending = Vec::new();
    for (i, b) in patch.blocks.iter().enumerate() {
        let list = match b.kind() {
            BlockKind::Integrator => Some(&mut sys.integrators),
            BlockKind::Osc => Some(&mut sys.oscs),
            BlockKind::Noise => Some(&mut sys.noises),
            BlockKind::Env => Some(&mut sys.envs),
            BlockKind::Bbd => Some(&mut sys.bbds),
            BlockKind::Input => Some(&mut sys.inputs),
            _ => None,
        };
        if let Some(list) = list {
            sys.slot[i] = list.len();
            list.push(i);
        }
        match b.kind() {
            BlockKind::Integrator | BlockKind::Bbd | BlockKind::Input => sys.roots.push(i),
            BlockKind::Probe | BlockKind::Output => sys.sinks.push(i),
            _ => pending.push(i),
        }
    }

    // Kahn's algorithm over stateless blocks, lowest declaration index first
    let scheduled = |i: usize| pending.binary_search(&i).is_ok();
    let mut indegree = vec![0usize; n];
    let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &b in &pending {
        for p in sys.port_start[b]..sys.port_start[b + 1] {
            let d = sys.drivers[p];
            if d != UNDRIVEN && scheduled(d) {
                indegree[b] += 1;
                succ[d].push(b);
            }
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> = pending.iter().filter(|&&b| indegree[b] == 0).map(|&b| Reverse(b)).collect();
    while let Some(Reverse(b)) = ready.pop() {
        sys.schedule.push(b);
        for &s in &succ[b] {
            indegree[s] -= 1;
            if indegree[s] == 0 {
                ready.push(Reverse(s));
            }
        }
    }
    if sys.schedule.len() != pending.len() {
        let stuck = pending.iter().find(|&&b| indegree[b] > 0).copied().unwrap_or(0);
        return Err(SimError::InvalidPatch(vec![Diagnostic::error(
            Code::AlgebraicLoop,
            Location::Block(stuck),
            format!("block `{}` is part of a loop without an integrator or bbd", sys.ids[stuck]),
        )]));
    }
    Ok(sys)
}

fn mix_seed(block: u64, global: u64) -> u64 {
    block ^ global.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(31)
}

fn uniform(rng: &mut SplitMix64) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

impl CompiledSystem {
    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Ids of the scheduled stateless blocks, in evaluation order.
    pub fn schedule(&self) -> Vec<&str> {
        self.schedule.iter().map(|&i| self.ids[i].as_str()).collect()
    }

    /// One slot per integrator plus one per bucket-brigade stage.
    pub fn state_slots(&self) -> usize {
        self.integrators.len()
            + self
                .bbds
                .iter()
                .map(|&b| match self.params[b] {
                    BlockParams::Bbd { stages, .. } => stages as usize,
                    _ => 0,
                })
                .sum::<usize>()
    }

    /// Names of the recorded traces.
    pub fn trace_names(&self) -> Vec<&str> {
        self.sinks.iter().map(|&i| self.ids[i].as_str()).collect()
    }

    pub fn input_names(&self) -> Vec<&str> {
        self.inputs.iter().map(|&i| self.ids[i].as_str()).collect()
    }

    /// State at t = 0 with all inputs silent.
    pub fn initial_state(&self) -> State {
        let param = |i: usize| &self.params[i];
        State {
            integrators: self
                .integrators
                .iter()
                .map(|&i| match param(i) {
                    BlockParams::Integrator { ic, .. } => *ic,
                    _ => 0.0,
                })
                .collect(),
            phases: vec![0.0; self.oscs.len()],
            freqs: vec![0.0; self.oscs.len()],
            noise: self
                .noises
                .iter()
                .map(|&i| match param(i) {
                    BlockParams::Noise { seed, .. } => {
                        (SplitMix64::seed_from_u64(mix_seed(*seed, self.config.seed)), 0.0)
                    }
                    _ => unreachable!("noise slot holds a noise block"),
                })
                .collect(),
            envs: vec![
                Envelope {
                    stage: EnvStage::Idle,
                    level: 0.0,
                    gate: false,
                };
                self.envs.len()
            ],
            bbds: self
                .bbds
                .iter()
                .map(|&i| match param(i) {
                    BlockParams::Bbd { stages, .. } => DelayLine {
                        buf: vec![0.0; *stages as usize],
                        pos: 0,
                        out: 0.0,
                        next_tick: 0,
                    },
                    _ => unreachable!("bbd slot holds a bbd block"),
                })
                .collect(),
            signals: vec![Signal::Constant(0.0); self.inputs.len()],
        }
    }

    /// Attaches a signal to the named input of `state`.
    pub fn set_input(&self, state: &mut State, name: &str, signal: Signal) -> Result<(), SimError> {
        let slot = self
            .inputs
            .iter()
            .position(|&i| self.ids[i] == name)
            .ok_or_else(|| SimError::UnknownInput(name.to_string()))?;
        state.signals[slot] = signal;
        Ok(())
    }

    fn block_inputs(&self, b: usize, out: &[f64], buf: &mut Vec<f64>) {
        buf.clear();
        buf.extend(self.drivers[self.port_start[b]..self.port_start[b + 1]].iter().map(|&d| {
            if d == UNDRIVEN {
                0.0
            } else {
                out[d]
            }
        }));
    }

    fn input_of(&self, b: usize, port: usize, out: &[f64]) -> f64 {
        match self.drivers[self.port_start[b] + port] {
            UNDRIVEN => 0.0,
            d => out[d],
        }
    }

    /// Evaluates every block output at stage time `t0 + dt` with
    /// integrator voltages `y`.
    fn evaluate(&self, st: &State, y: &[f64], t0: f64, dt: f64, out: &mut [f64], buf: &mut Vec<f64>) {
        let rail = self.config.rail;
        let t = t0 + dt;
        for &b in self.roots.iter().chain(&self.schedule) {
            let s = self.slot[b];
            let state = match self.params[b].kind() {
                BlockKind::Integrator => BlockState::Integrator(y[s]),
                BlockKind::Bbd => BlockState::Bbd(st.bbds[s].out),
                BlockKind::Input => BlockState::Input(st.signals[s].value(t)),
                BlockKind::Osc => BlockState::Osc(st.phases[s] + TAU * st.freqs[s] * dt),
                BlockKind::Noise => BlockState::Noise(st.noise[s].1),
                BlockKind::Env => BlockState::Env(st.envs[s].level),
                _ => BlockState::None,
            };
            self.block_inputs(b, out, buf);
            out[b] = eval_block(&self.params[b], buf, state, t, rail).expect("validated patch");
        }
    }

    fn rates(&self, out: &[f64], k: &mut [f64], buf: &mut Vec<f64>) {
        for (s, &b) in self.integrators.iter().enumerate() {
            self.block_inputs(b, out, buf);
            k[s] = integrator_rate(&self.params[b], buf).expect("validated patch");
        }
    }

    fn sink_value(&self, b: usize, out: &[f64]) -> f64 {
        let v = self.input_of(b, 0, out);
        eval_block(&self.params[b], &[v], BlockState::None, 0.0, self.config.rail).expect("sink has one input")
    }

    /// Latches oscillator frequencies and envelope gates from the stage-one
    /// outputs.
    fn latch_controls(&self, st: &mut State, out: &[f64]) {
        let nyquist = self.config.sample_rate / 2.0;
        for (s, &b) in self.oscs.iter().enumerate() {
            if let BlockParams::Osc { f_ref, .. } = self.params[b] {
                st.freqs[s] = vco_frequency(f_ref, self.input_of(b, 0, out), nyquist);
            }
        }
        for (s, &b) in self.envs.iter().enumerate() {
            let on = self.input_of(b, 0, out) > GATE_THRESHOLD;
            let env = &mut st.envs[s];
            if on && !env.gate {
                env.stage = EnvStage::Attack;
            } else if !on && env.gate {
                let release = match self.params[b] {
                    BlockParams::Env { release, .. } => release,
                    _ => 0.0,
                };
                if release > 0.0 {
                    env.stage = EnvStage::Release(env.level / release);
                } else {
                    env.stage = EnvStage::Idle;
                    env.level = 0.0;
                }
            }
            env.gate = on;
        }
    }

    fn advance_envelopes(&self, st: &mut State, h: f64) {
        for (s, &b) in self.envs.iter().enumerate() {
            let BlockParams::Env {
                attack, decay, sustain, ..
            } = self.params[b]
            else {
                continue;
            };
            let env = &mut st.envs[s];
            match env.stage {
                EnvStage::Idle => {}
                EnvStage::Attack => {
                    env.level = if attack > 0.0 { env.level + h / attack } else { 1.0 };
                    if env.level >= 1.0 {
                        env.level = 1.0;
                        env.stage = EnvStage::Decay;
                    }
                }
                EnvStage::Decay => {
                    env.level = if decay > 0.0 {
                        env.level - h * (1.0 - sustain) / decay
                    } else {
                        sustain
                    };
                    if env.level <= sustain {
                        env.level = sustain;
                        env.stage = EnvStage::Sustain;
                    }
                }
                EnvStage::Sustain => env.level = sustain,
                EnvStage::Release(rate) => {
                    env.level -= h * rate;
                    if env.level <= 0.0 {
                        env.level = 0.0;
                        env.stage = EnvStage::Idle;
                    }
                }
            }
        }
    }

    /// RK4 update of the integrators from stage-one outputs in `sc.out`,
    /// then oscillator and envelope advance.
    fn advance(&self, st: &mut State, t: f64, h: f64, sc: &mut Scratch) -> Result<(), SimError> {
        let n = self.integrators.len();
        self.latch_controls(st, &sc.out);
        if n > 0 {
            self.rates(&sc.out, &mut sc.k[0], &mut sc.buf);
            for (stage, dt) in [(1, h / 2.0), (2, h / 2.0), (3, h)] {
                for i in 0..n {
                    sc.y[i] = st.integrators[i] + dt * sc.k[stage - 1][i];
                }
                self.evaluate(st, &sc.y, t, dt, &mut sc.out, &mut sc.buf);
                self.rates(&sc.out, &mut sc.k[stage], &mut sc.buf);
            }
            let rail = self.config.rail;
            let k = &sc.k;
            for i in 0..n {
                let v = st.integrators[i] + h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
                if !v.is_finite() {
                    return Err(SimError::Overflow {
                        block: self.ids[self.integrators[i]].clone(),
                        t: t + h,
                    });
                }
                st.integrators[i] = v.clamp(-rail, rail);
            }
        }
        for (s, phase) in st.phases.iter_mut().enumerate() {
            *phase = (*phase + TAU * st.freqs[s] * h).rem_euclid(TAU);
        }
        self.advance_envelopes(st, h);
        Ok(())
    }

    fn scratch(&self) -> Scratch {
        let n = self.integrators.len();
        Scratch {
            out: vec![0.0; self.params.len()],
            buf: Vec::new(),
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            y: vec![0.0; n],
        }
    }

    /// One RK4 step of length `h` from time `t`. Noise and bucket-brigade
    /// outputs are held.
    pub fn step(&self, st: &mut State, t: f64, h: f64) -> Result<(), SimError> {
        let mut sc = self.scratch();
        sc.y.clone_from(&st.integrators);
        self.evaluate(st, &sc.y, t, 0.0, &mut sc.out, &mut sc.buf);
        self.advance(st, t, h, &mut sc)
    }

    /// Clocks every bucket-brigade line whose ticks fall on substep `j`.
    fn clock_bbds(&self, st: &mut State, j: u64, h: f64, out: &[f64]) -> bool {
        let mut ticked = false;
        for (s, &b) in self.bbds.iter().enumerate() {
            let BlockParams::Bbd { f_clk, .. } = self.params[b] else {
                continue;
            };
            let period = 1.0 / (2.0 * f_clk);
            let input = self.input_of(b, 0, out);
            let line = &mut st.bbds[s];
            while ((line.next_tick as f64 * period) / h).round() as u64 <= j {
                line.out = line.buf[line.pos];
                line.buf[line.pos] = input;
                line.pos = (line.pos + 1) % line.buf.len();
                line.next_tick += 1;
                ticked = true;
            }
        }
        ticked
    }

    /// Simulates `duration` seconds and samples every sink block.
    pub fn render(&self, duration: f64, inputs: &BTreeMap<String, Signal>) -> Result<TraceSet, SimError> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(SimError::Duration(duration));
        }
        let mut st = self.initial_state();
        for (name, sig) in inputs {
            self.set_input(&mut st, name, sig.clone())?;
        }
        let samples = (duration * self.config.sample_rate).round() as usize;
        let m = self.config.oversample as u64;
        let h = self.config.step();
        let mut traces: Vec<Vec<f64>> = vec![Vec::with_capacity(samples); self.sinks.len()];
        let mut sc = self.scratch();
        for j in 0..samples as u64 * m {
            let t = j as f64 * h;
            if j % m == 0 {
                for (s, &b) in self.noises.iter().enumerate() {
                    if let BlockParams::Noise { amp, .. } = self.params[b] {
                        let (rng, held) = &mut st.noise[s];
                        *held = amp * (2.0 * uniform(rng) - 1.0);
                    }
                }
            }
            sc.y.clone_from(&st.integrators);
            self.evaluate(&st, &sc.y, t, 0.0, &mut sc.out, &mut sc.buf);
            if !self.bbds.is_empty() && self.clock_bbds(&mut st, j, h, &sc.out) {
                self.evaluate(&st, &sc.y, t, 0.0, &mut sc.out, &mut sc.buf);
            }
            if j % m == 0 {
                for (trace, &b) in traces.iter_mut().zip(&self.sinks) {
                    let v = self.sink_value(b, &sc.out);
                    if !v.is_finite() {
                        return Err(SimError::Overflow {
                            block: self.ids[b].clone(),
                            t,
                        });
                    }
                    trace.push(v);
                }
            }
            self.advance(&mut st, t, h, &mut sc)?;
        }
        Ok(TraceSet {
            patch: self.name.clone(),
            sample_rate: self.config.sample_rate,
            duration,
            seed: self.config.seed,
            traces: self
                .sinks
                .iter()
                .zip(traces)
                .map(|(&b, samples)| Trace {
                    name: self.ids[b].clone(),
                    samples,
                })
                .collect(),
        })
    }
}

/// Builds and renders in one call.
pub fn render(
    patch: &Patch,
    config: EngineConfig,
    duration: f64,
    inputs: &BTreeMap<String, Signal>,
) -> Result<TraceSet, SimError> {
    build_system(patch, config)?.render(duration, inputs)
}
