//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, HashSet};
use std::f64::consts::{LN_2, TAU};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use anacomp::fpaa::{capacity, demand, CabInventory, ResourceProfile, Resources, SWITCH};
use anacomp::signal_io::{encode_wav, WavOptions};
use anacomp::{
    build_system, parse_equations, parse_patch, render, serialize_patch, synthesize, validate_patch, BlockKind,
    BlockParams, Code, EngineConfig, Patch, ScalingOptions, Shape, SimError, Signal, Trace, TraceSet,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn db(g: f64) -> f64 {
    20.0 * g.log10()
}

fn compile(text: &str) -> Result<Patch, String> {
    let sys = parse_equations(text).map_err(|d| format!("{d:?}"))?;
    let s = synthesize(&sys, &ScalingOptions::default()).map_err(|d| format!("{d:?}"))?;
    Ok(s.patch)
}

fn single_input(name: &str, s: Signal) -> BTreeMap<String, Signal> {
    [(name.to_string(), s)].into()
}

/// Solves a small dense system by Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Amplitude of the `freq` component of `y` by least squares on
/// `sin`, `cos` and a constant, over samples from `start`.
fn tone_amplitude(y: &[f64], fs: f64, freq: f64, start: usize) -> f64 {
    let mut ata = vec![vec![0.0; 3]; 3];
    let mut aty = vec![0.0; 3];
    for (i, v) in y.iter().enumerate().skip(start) {
        let t = i as f64 / fs;
        let row = [(TAU * freq * t).sin(), (TAU * freq * t).cos(), 1.0];
        for r in 0..3 {
            for c in 0..3 {
                ata[r][c] += row[r] * row[c];
            }
            aty[r] += row[r] * v;
        }
    }
    let x = solve(ata, aty);
    x[0].hypot(x[1])
}

/// Steady-state gain of `probe` for a unit sine at `freq` on input `x`.
fn sine_gain(patch: &Patch, probe: &str, freq: f64, settle: f64, window: f64) -> Result<f64, String> {
    let cfg = EngineConfig::default();
    let tr = render(patch, cfg, settle + window, &single_input("x", Signal::Sine { freq, amp: 1.0 }))
        .map_err(|e| e.to_string())?;
    let y = tr.get(probe).ok_or_else(|| format!("no probe `{probe}`"))?;
    Ok(tone_amplitude(y, cfg.sample_rate, freq, (settle * cfg.sample_rate) as usize))
}

fn lowpass_semantics() -> Outcome {
    let b = 1.0 / (TAU * 100.0);
    let text = format!("system lp\nparam a = 1\nparam b = {b:?}\ninput x\neq: y = a*x - b*y'\nend\n");
    let patch = compile(&text)?;
    let cfg = EngineConfig::default();
    let dc = render(&patch, cfg, 0.1, &single_input("x", Signal::Constant(1.0))).map_err(|e| e.to_string())?;
    let dc = *dc.get("y").unwrap().last().unwrap();
    let g100 = sine_gain(&patch, "y", 100.0, 0.05, 0.2)?;
    let g1k = sine_gain(&patch, "y", 1000.0, 0.05, 0.1)?;
    let g10k = sine_gain(&patch, "y", 10_000.0, 0.05, 0.1)?;
    let rel = db(g100 / dc);
    let slope = db(g10k / g1k);
    let detail = format!("gain@100Hz {rel:.4} dB, slope {slope:.3} dB/decade");
    ensure((rel + 3.0103).abs() <= 0.1, || detail.clone())?;
    ensure((slope + 20.0).abs() <= 1.0, || detail.clone())?;
    Ok(detail)
}

fn step_response() -> Outcome {
    let patch = compile(&fs::read_to_string(repo("patches/lowpass.ode")).map_err(|e| e.to_string())?)?;
    let cfg = EngineConfig::default();
    let tr = render(&patch, cfg, 1.0, &single_input("x", Signal::Step { amp: 1.0, at: 0.0 }))
        .map_err(|e| e.to_string())?;
    let y = tr.get("y").unwrap();
    let sq: f64 = y
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let t = i as f64 / cfg.sample_rate;
            (v - (1.0 - (-t / 0.5).exp())).powi(2)
        })
        .sum();
    let rms = (sq / y.len() as f64).sqrt();
    ensure(rms < 1e-4, || format!("rms {rms:e}"))?;
    Ok(format!("rms {rms:.3e} over {} samples", y.len()))
}

fn reaches(patch: &Patch, from: &str, to: &str) -> bool {
    let mut seen = HashSet::new();
    let mut stack: Vec<&str> = patch.wires.iter().filter(|w| w.from == from).map(|w| w.to.as_str()).collect();
    while let Some(b) = stack.pop() {
        if b == to {
            return true;
        }
        if seen.insert(b) {
            stack.extend(patch.wires.iter().filter(|w| w.from == b).map(|w| w.to.as_str()));
        }
    }
    false
}

fn svf_structure_and_response() -> Outcome {
    let patch = compile(&fs::read_to_string(repo("patches/svf.ode")).map_err(|e| e.to_string())?)?;
    let ints: Vec<&str> = patch
        .blocks
        .iter()
        .filter(|b| b.kind() == BlockKind::Integrator)
        .map(|b| b.id.as_str())
        .collect();
    ensure(ints.len() == 2, || format!("{} integrators", ints.len()))?;
    let loop_summer = patch
        .blocks
        .iter()
        .filter(|b| b.kind() == BlockKind::Summer)
        .any(|s| ints.iter().all(|i| reaches(&patch, &s.id, i) && reaches(&patch, i, &s.id)));
    ensure(loop_summer, || "no summer closes a loop through both integrators".into())?;

    let f0 = 100.0;
    let gain = |f: f64| sine_gain(&patch, "y_d1", f, 0.05, 0.25);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (50.0f64, 200.0f64);
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let (mut gc, mut gd) = (gain(c)?, gain(d)?);
    while hi - lo > 0.05 {
        if gc > gd {
            hi = d;
            d = c;
            gd = gc;
            c = hi - phi * (hi - lo);
            gc = gain(c)?;
        } else {
            lo = c;
            c = d;
            gc = gd;
            d = lo + phi * (hi - lo);
            gd = gain(d)?;
        }
    }
    let peak = (lo + hi) / 2.0;
    let err = (peak - f0).abs() / f0;
    let slope = db(sine_gain(&patch, "y", 2.0 * f0, 0.05, 0.25)? / sine_gain(&patch, "y", 4.0 * f0, 0.05, 0.25)?);
    let detail = format!("2 integrators, summer loop, peak {peak:.3} Hz ({:.3}%), slope {slope:.3} dB", err * 100.0);
    ensure(err <= 0.01, || detail.clone())?;
    ensure((slope - 12.0).abs() <= 0.5, || detail.clone())?;
    Ok(detail)
}

/// Mean frequency from linearly interpolated upward zero crossings.
fn measured_frequency(y: &[f64], fs: f64) -> Option<f64> {
    let crossings: Vec<f64> = y
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[0] < 0.0 && w[1] >= 0.0)
        .map(|(i, w)| i as f64 + w[0] / (w[0] - w[1]))
        .collect();
    let (first, last) = (crossings.first()?, crossings.last()?);
    (crossings.len() > 2).then(|| (crossings.len() - 1) as f64 * fs / (last - first))
}

fn pitch_ratio(ode: &str, v0: f64) -> Result<f64, String> {
    let mut patch = compile(&fs::read_to_string(repo(ode)).map_err(|e| e.to_string())?)?;
    let src = patch.driver("y", 0).ok_or("no source for y")?.to_string();
    patch.add_block(
        "vco",
        BlockParams::Osc {
            shape: Shape::Sine,
            f_ref: 220.0,
            amp: 5.0,
        },
    );
    patch.wire(src, "vco", 0).probe("tone", "vco");
    let cfg = EngineConfig::default();
    let freq = |v: f64| -> Result<f64, String> {
        let tr = render(&patch, cfg, 1.0, &single_input("x", Signal::Constant(v))).map_err(|e| e.to_string())?;
        measured_frequency(tr.get("tone").unwrap(), cfg.sample_rate).ok_or_else(|| "no oscillation".into())
    };
    Ok(freq(v0 + 1.0)? / freq(v0)?)
}

fn pitch_program() -> Outcome {
    let octave = pitch_ratio("patches/glide.ode", 0.25)?;
    let fifth = pitch_ratio("patches/fifth.ode", 0.25)?;
    let want = (7.0 / 12.0 * LN_2).exp();
    let (e1, e2) = ((octave - 2.0).abs() / 2.0, (fifth - want).abs() / want);
    let detail = format!("octave ratio {octave:.9} (rel {e1:.1e}), fifth ratio {fifth:.9} (rel {e2:.1e})");
    ensure(e1 <= 1e-6 && e2 <= 1e-6, || detail.clone())?;
    Ok(detail)
}

fn decay_error(oversample: u32) -> Result<f64, String> {
    let mut p = Patch::new("decay");
    p.add_block("i", BlockParams::Integrator { k: vec![1.0], ic: 1.0 });
    p.wire("i", "i", 0).probe("y", "i");
    let cfg = EngineConfig {
        sample_rate: 10.0,
        oversample,
        ..Default::default()
    };
    let tr = render(&p, cfg, 5.0, &BTreeMap::new()).map_err(|e| e.to_string())?;
    let y = tr.get("y").unwrap();
    let sq: f64 = y
        .iter()
        .enumerate()
        .map(|(i, v)| (v - (-(i as f64) / 10.0).exp()).powi(2))
        .sum();
    Ok((sq / y.len() as f64).sqrt())
}

fn rk4_convergence() -> Outcome {
    let (coarse, fine) = (decay_error(1)?, decay_error(2)?);
    let ratio = coarse / fine;
    let detail = format!("rms {coarse:.3e} -> {fine:.3e}, ratio {ratio:.2}");
    ensure((12.0..=20.0).contains(&ratio), || detail.clone())?;
    Ok(detail)
}

fn run_one(patch: &Patch, dur: f64, inputs: BTreeMap<String, Signal>) -> Result<TraceSet, String> {
    let cfg = EngineConfig {
        sample_rate: 1000.0,
        ..Default::default()
    };
    render(patch, cfg, dur, &inputs).map_err(|e| e.to_string())
}

fn block_semantics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut checks = 0;
    for _ in 0..20 {
        let (k1, k2, kg, ki) = (rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0), rng.gen_range(0.5..5.0));
        let ic = rng.gen_range(-5.0..5.0);
        let mut p = Patch::new("lin");
        p.add_input("a").add_input("b");
        p.add_block("s", BlockParams::Summer { k: vec![k1, k2] });
        p.add_block("g", BlockParams::Gain { k: kg });
        p.add_block("i", BlockParams::Integrator { k: vec![ki], ic: 0.0 });
        p.add_block("j", BlockParams::Integrator { k: vec![1.0], ic });
        p.add_block("c", BlockParams::Const { v: 1.0 });
        p.wire("a", "s", 0).wire("b", "s", 1).wire("s", "g", 0).wire("g", "i", 0).wire("c", "j", 0);
        p.probe("sum", "s").probe("gain", "g").probe("int", "i").probe("ramp", "j");

        let (fa, fb) = (rng.gen_range(1.0..20.0), rng.gen_range(1.0..20.0));
        let (aa, ab) = (rng.gen_range(0.1..0.8), rng.gen_range(0.1..0.8));
        let xa = Signal::Sine { freq: fa, amp: aa };
        let xb = Signal::Sine { freq: fb, amp: ab };
        let zero = Signal::Constant(0.0);
        let ra = run_one(&p, 0.5, [("a".into(), xa.clone()), ("b".into(), zero.clone())].into())?;
        let rb = run_one(&p, 0.5, [("a".into(), zero.clone()), ("b".into(), xb.clone())].into())?;
        let rboth = run_one(&p, 0.5, [("a".into(), xa.clone()), ("b".into(), xb.clone())].into())?;

        for (i, s) in ra.get("sum").unwrap().iter().enumerate() {
            let t = i as f64 / 1000.0;
            let want = -k1 * xa.value(t);
            ensure((s - want).abs() <= 1e-12, || format!("summer sign at t={t}: {s} vs {want}"))?;
            let g = ra.get("gain").unwrap()[i];
            ensure((g + kg * s).abs() <= 1e-12, || format!("gain sign at t={t}"))?;
        }
        for name in ["sum", "gain", "int"] {
            let (a, b) = (ra.get(name).unwrap(), rb.get(name).unwrap());
            for (i, v) in rboth.get(name).unwrap().iter().enumerate() {
                let sup = a[i] + b[i];
                ensure((v - sup).abs() <= 1e-9, || format!("{name} superposition at {i}: {v} vs {sup}"))?;
            }
        }
        let ramp = ra.get("ramp").unwrap();
        ensure(ramp[0] == ic, || format!("integrator ic {} vs {ic}", ramp[0]))?;
        ensure(ramp[1] < ramp[0], || "integrator of a positive input does not fall".into())?;
        checks += 1;
    }

    for _ in 0..20 {
        let (hi, lo) = (rng.gen_range(0.0..10.0), rng.gen_range(-10.0..0.0));
        let (llo, lhi) = (rng.gen_range(-5.0..-0.5), rng.gen_range(0.5..5.0));
        let mut p = Patch::new("nl");
        p.add_input("a").add_input("b");
        p.add_block("cmp", BlockParams::Cmp { hi, lo });
        p.add_block("lim", BlockParams::Lim { lo: llo, hi: lhi });
        p.wire("a", "cmp", 0).wire("b", "cmp", 1).wire("a", "lim", 0);
        p.probe("c", "cmp").probe("l", "lim");
        let xa = Signal::Sine { freq: rng.gen_range(1.0..30.0), amp: rng.gen_range(1.0..9.0) };
        let xb = Signal::Sine { freq: rng.gen_range(1.0..30.0), amp: rng.gen_range(0.0..5.0) };
        let tr = run_one(&p, 0.5, [("a".into(), xa.clone()), ("b".into(), xb.clone())].into())?;
        for (i, (c, l)) in tr.get("c").unwrap().iter().zip(tr.get("l").unwrap()).enumerate() {
            let t = i as f64 / 1000.0;
            let (a, b) = (xa.value(t), xb.value(t));
            if (a - b).abs() > 1e-9 {
                let want = if a > b { hi } else { lo };
                ensure(*c == want, || format!("cmp at t={t}: {c} vs {want}"))?;
            }
            ensure(*c == hi || *c == lo, || format!("cmp output {c} is neither {hi} nor {lo}"))?;
            ensure((l - a.clamp(llo, lhi)).abs() <= 1e-12, || format!("lim at t={t}: {l} vs {a}"))?;
            ensure((llo..=lhi).contains(l), || format!("lim output {l} outside [{llo}, {lhi}]"))?;
        }
        checks += 1;
    }
    Ok(format!("{checks} randomized patches: signs, superposition, cmp, lim, ic"))
}

fn stateless(rng: &mut ChaCha8Rng, id: &str, p: &mut Patch) {
    let params = match rng.gen_range(0..5) {
        0 => BlockParams::Gain { k: rng.gen_range(0.1..2.0) },
        1 => BlockParams::Atten { a: rng.gen_range(0.0..1.0) },
        2 => BlockParams::Summer { k: vec![rng.gen_range(0.1..2.0)] },
        3 => BlockParams::Lim { lo: -1.0, hi: 1.0 },
        _ => BlockParams::Multiplier { s: 0.1 },
    };
    let multiplier = matches!(params, BlockParams::Multiplier { .. });
    p.add_block(id, params);
    if multiplier {
        p.wire("bias", id, 1);
    }
}

fn generated_cycle(rng: &mut ChaCha8Rng, with_integrator: bool, n: usize) -> Patch {
    let mut p = Patch::new("cycle");
    p.add_block("bias", BlockParams::Const { v: 1.0 });
    let ids: Vec<String> = (0..n).map(|i| format!("b{i}")).collect();
    let state = rng.gen_range(0..n);
    for (i, id) in ids.iter().enumerate() {
        if with_integrator && i == state {
            p.add_block(id.as_str(), BlockParams::Integrator { k: vec![1.0], ic: 0.0 });
        } else {
            stateless(rng, id, &mut p);
        }
    }
    for i in 0..n {
        p.wire(ids[i].as_str(), ids[(i + 1) % n].as_str(), 0);
    }
    let tap = rng.gen_range(0..n);
    p.probe("y", ids[tap].as_str());
    p
}

fn algebraic_loops() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut rejected, mut accepted) = (0, 0);
    for case in 0..50 {
        let with_integrator = case % 2 == 1;
        let n = rng.gen_range(1..=6);
        let p = generated_cycle(&mut rng, with_integrator, n);
        let diags = validate_patch(&p);
        let looped = diags.iter().any(|d| d.code == Code::AlgebraicLoop);
        let built = build_system(&p, EngineConfig::default());
        if with_integrator {
            ensure(diags.is_empty() && built.is_ok(), || format!("case {case}: cycle through integrator rejected: {diags:?}"))?;
            accepted += 1;
        } else {
            let engine_rejects = matches!(&built, Err(SimError::InvalidPatch(d)) if d.iter().any(|d| d.code == Code::AlgebraicLoop));
            ensure(looped && engine_rejects, || format!("case {case}: stateless cycle of {n} accepted"))?;
            rejected += 1;
        }
    }
    Ok(format!("{rejected} stateless cycles rejected, {accepted} integrator cycles accepted"))
}

fn corpus(ext: &str) -> Result<Vec<PathBuf>, String> {
    let mut files: Vec<PathBuf> = fs::read_dir(repo("patches"))
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    files.sort();
    Ok(files)
}

fn round_trip() -> Outcome {
    let mut texts = Vec::new();
    for path in corpus("apc")? {
        texts.push((path.display().to_string(), fs::read_to_string(&path).map_err(|e| e.to_string())?));
    }
    for path in corpus("ode")? {
        let patch = compile(&fs::read_to_string(&path).map_err(|e| e.to_string())?)?;
        texts.push((path.display().to_string(), serialize_patch(&patch)));
    }
    for (name, text) in &texts {
        let a = parse_patch(text).map_err(|d| format!("{name}: {d:?}"))?;
        let once = serialize_patch(&a);
        let b = parse_patch(&once).map_err(|d| format!("{name}: {d:?}"))?;
        ensure(a == b, || format!("{name}: parse/serialize/parse differs"))?;
        ensure(serialize_patch(&b) == once, || format!("{name}: serialization is not a fixpoint"))?;
    }
    Ok(format!("{} patches", texts.len()))
}

fn determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("anacomp-acceptance-{}", std::process::id()));
    fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let mut files = 0;
    for patch in ["patches/echo.apc", "patches/voice.apc"] {
        let mut outputs = Vec::new();
        for run in 0..2 {
            let wav = dir.join(format!("{run}.wav"));
            let csv = dir.join(format!("{run}.csv"));
            let o = Command::new(env!("CARGO_BIN_EXE_anacomp"))
                .arg("run")
                .arg(repo(patch))
                .args(["--dur", "0.5", "--seed", "1234", "--wav"])
                .arg(&wav)
                .arg("--csv")
                .arg(&csv)
                .output()
                .map_err(|e| e.to_string())?;
            ensure(o.status.success(), || String::from_utf8_lossy(&o.stderr).into_owned())?;
            outputs.push((fs::read(&wav).map_err(|e| e.to_string())?, fs::read(&csv).map_err(|e| e.to_string())?));
        }
        ensure(outputs[0] == outputs[1], || format!("{patch}: outputs differ between runs"))?;
        files += 2;
    }
    let _ = fs::remove_dir_all(&dir);
    Ok(format!("{files} file pairs byte-identical"))
}

fn brute_force(inv: &CabInventory, need: &Resources) -> Option<u64> {
    if need.values().all(|d| *d == 0) {
        return None;
    }
    let have = |r: &str| {
        if r == SWITCH {
            inv.switch_matrix_budget
        } else {
            inv.cab_count * inv.cab.get(r).copied().unwrap_or(0)
        }
    };
    let fits = |n: u64| need.iter().all(|(r, d)| n * d <= have(r));
    let mut n = 0;
    while fits(n + 1) {
        n += 1;
    }
    Some(n)
}

fn fpaa_estimator() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let names = ["ota", "capacitor", "multiplier", "comparator", SWITCH];
    for case in 0..1000 {
        let inv = CabInventory {
            name: None,
            cab_count: rng.gen_range(1..=8),
            switch_matrix_budget: rng.gen_range(0..=200),
            cab: names[..4]
                .iter()
                .filter_map(|r| rng.gen_bool(0.8).then_some((r.to_string(), rng.gen_range(0..=12))))
                .collect(),
        };
        let need: Resources = names
            .iter()
            .filter_map(|r| rng.gen_bool(0.6).then_some((r.to_string(), rng.gen_range(0..=9))))
            .collect();
        let (got, want) = (capacity(&inv, &need), brute_force(&inv, &need));
        ensure(got == want, || format!("case {case}: {got:?} vs brute force {want:?}"))?;
    }
    let patch = parse_patch(&fs::read_to_string(repo("patches/vcf.apc")).map_err(|e| e.to_string())?)
        .map_err(|d| format!("{d:?}"))?;
    let dev = CabInventory::from_toml(&fs::read_to_string(repo("models/sample.dev")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let prof = ResourceProfile::from_toml(&fs::read_to_string(repo("models/sample.prof")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let n = capacity(&dev, &demand(&patch, &prof).map_err(|e| e.to_string())?);
    ensure(n == Some(12), || format!("shipped model gives {n:?}"))?;
    let o = Command::new(env!("CARGO_BIN_EXE_anacomp"))
        .arg("estimate")
        .arg(repo("patches/vcf.apc"))
        .arg("--device")
        .arg(repo("models/sample.dev"))
        .arg("--profile")
        .arg(repo("models/sample.prof"))
        .output()
        .map_err(|e| e.to_string())?;
    let out = String::from_utf8_lossy(&o.stdout);
    ensure(out == "copies: 12\n", || format!("estimate printed {out:?}"))?;
    Ok("1000 random instances match brute force; shipped model: copies: 12".into())
}

fn wav_conformance() -> Outcome {
    for n in [0usize, 1, 2, 1000, 48_000] {
        let samples: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 10.0 } else { -10.0 }).collect();
        let traces = TraceSet {
            patch: "w".into(),
            sample_rate: 48_000.0,
            duration: n as f64 / 48_000.0,
            seed: 0,
            traces: vec![Trace { name: "y".into(), samples }],
        };
        let b = encode_wav(&traces, &WavOptions::default()).map_err(|e| e.to_string())?;
        ensure(b.len() == 44 + 2 * n, || format!("{n} samples: {} bytes", b.len()))?;
        let u32_at = |i: usize| u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]]);
        ensure(&b[0..4] == b"RIFF" && &b[8..16] == b"WAVEfmt " && &b[36..40] == b"data", || "chunk ids".into())?;
        ensure(u32_at(4) as usize == 36 + 2 * n && u32_at(40) as usize == 2 * n, || format!("{n}: chunk sizes"))?;
        ensure(u32_at(16) == 16 && u32_at(24) == 48_000 && u32_at(28) == 96_000, || format!("{n}: fmt fields"))?;
        if n > 1 {
            let s0 = i16::from_le_bytes([b[44], b[45]]);
            let s1 = i16::from_le_bytes([b[46], b[47]]);
            ensure(s0 == 32767 && s1 == -32767, || format!("full scale coded as {s0}, {s1}"))?;
        }
    }
    Ok("44 + 2N bytes for N in {0, 1, 2, 1000, 48000}; full scale = 32767".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("lowpass semantics", lowpass_semantics),
        ("step response", step_response),
        ("state-variable filter", svf_structure_and_response),
        ("pitch program", pitch_program),
        ("RK4 convergence", rk4_convergence),
        ("block semantics", block_semantics),
        ("algebraic-loop rejection", algebraic_loops),
        ("patch language round-trip", round_trip),
        ("determinism", determinism),
        ("FPAA estimator", fpaa_estimator),
        ("WAV conformance", wav_conformance),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} [{secs:.2} s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail} [{secs:.2} s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
