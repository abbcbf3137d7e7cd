//! `anacomp`: check, compile, render and size analogue computer patches.

mod signal_spec;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anacomp::fpaa::{capacity, demand, CabInventory, ResourceProfile};
use anacomp::ode::{parse_equations, synthesize, ScalingOptions, DEFAULT_COEFF_CAP};
use anacomp::signal_io::{write_csv, write_wav, WavOptions};
use anacomp::{build_system, parse_patch, serialize_patch, Diagnostic, EngineConfig, Patch, DEFAULT_RAIL};
use clap::{Args, Parser, Subcommand};

use signal_spec::{parse_input, SignalSpec};

#[derive(Parser)]
#[command(name = "anacomp", version, about = "Virtual analogue computer for sound")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a patch and print its diagnostics
    Check { patch: PathBuf },
    /// Compile linear differential equations into a patch
    Compile(CompileArgs),
    /// Render a patch to WAV and/or CSV
    Run(RunArgs),
    /// Estimate how many copies of a patch fit an FPAA
    Estimate(EstimateArgs),
}

#[derive(Args)]
struct CompileArgs {
    ode: PathBuf,
    /// Output patch file (standard output when omitted)
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Machine seconds per problem second
    #[arg(long, default_value_t = 1.0)]
    time_scale: f64,
    /// Volts per problem unit for a variable, as var=volts
    #[arg(long = "amplitude", value_name = "VAR=VOLTS", value_parser = parse_amplitude)]
    amplitude: Vec<(String, f64)>,
    /// Largest coefficient magnitude allowed in the result
    #[arg(long, default_value_t = DEFAULT_COEFF_CAP)]
    coeff_cap: f64,
}

#[derive(Args)]
struct RunArgs {
    patch: PathBuf,
    #[arg(long)]
    wav: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Duration in seconds
    #[arg(long, default_value_t = 1.0)]
    dur: f64,
    /// Input signal: name=step:A | name=sine:F,A | name=const:V | name=wav:PATH
    #[arg(long = "in", value_name = "NAME=SPEC", value_parser = parse_input)]
    inputs: Vec<(String, SignalSpec)>,
    /// Seed for noise blocks
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output sample rate in Hz
    #[arg(long, default_value_t = 48_000)]
    rate: u32,
    /// Solver substeps per output sample
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
    oversample: u32,
    /// Saturation rail in volts
    #[arg(long, default_value_t = DEFAULT_RAIL)]
    rail: f64,
    /// WAV bit depth
    #[arg(long, default_value_t = 16, value_parser = parse_bits)]
    bits: u16,
    /// Volts at digital full scale (defaults to the rail)
    #[arg(long)]
    full_scale: Option<f64>,
    /// Trace to write as a WAV channel; repeat for more channels
    #[arg(long = "channel", value_name = "NAME")]
    channels: Vec<String>,
}

#[derive(Args)]
struct EstimateArgs {
    patch: PathBuf,
    /// Device model (TOML)
    #[arg(long)]
    device: PathBuf,
    /// Resource profile (TOML)
    #[arg(long)]
    profile: PathBuf,
}

fn parse_bits(s: &str) -> Result<u16, String> {
    match s {
        "16" => Ok(16),
        "24" => Ok(24),
        _ => Err("bit depth must be 16 or 24".into()),
    }
}

fn parse_amplitude(s: &str) -> Result<(String, f64), String> {
    let (name, v) = s.split_once('=').ok_or("expected VAR=VOLTS")?;
    let v: f64 = v.parse().map_err(|_| format!("invalid amplitude `{v}`"))?;
    Ok((name.to_string(), v))
}

/// Failure already reported on standard error.
struct Failed;

type Outcome = Result<(), Failed>;

fn fail(msg: impl std::fmt::Display) -> Failed {
    eprintln!("error: {msg}");
    Failed
}

fn read(path: &Path) -> Result<String, Failed> {
    fs::read_to_string(path).map_err(|e| fail(format!("E_IO: {}: {e}", path.display())))
}

fn report(path: &Path, diags: &[Diagnostic]) {
    for d in diags {
        eprintln!("{}:{d}", path.display());
    }
}

fn load_patch(path: &Path) -> Result<Patch, Failed> {
    parse_patch(&read(path)?).map_err(|d| {
        report(path, &d);
        Failed
    })
}

fn check(path: &Path) -> Outcome {
    load_patch(path).map(|_| ())
}

fn compile(args: &CompileArgs) -> Outcome {
    let system = parse_equations(&read(&args.ode)?).map_err(|d| {
        report(&args.ode, &d);
        Failed
    })?;
    let opts = ScalingOptions {
        time_scale: args.time_scale,
        amplitude: args.amplitude.iter().cloned().collect(),
        coeff_cap: args.coeff_cap,
        ..Default::default()
    };
    let out = synthesize(&system, &opts).map_err(|d| {
        report(&args.ode, &d);
        Failed
    })?;
    report(&args.ode, &out.warnings);
    for p in out.probes.iter().filter(|p| p.scale != 1.0) {
        eprintln!(
            "note: probe `{}` reads {} times {}",
            p.name,
            p.scale,
            system.derivative_name(p.output)
        );
    }
    let text = serialize_patch(&out.patch);
    match &args.output {
        Some(path) => fs::write(path, text).map_err(|e| fail(format!("E_IO: {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(args: &RunArgs) -> Outcome {
    if !(args.dur.is_finite() && args.dur > 0.0) {
        return Err(fail(format!("duration must be > 0 (got {})", args.dur)));
    }
    let patch = load_patch(&args.patch)?;
    let config = EngineConfig {
        sample_rate: args.rate as f64,
        oversample: args.oversample,
        rail: args.rail,
        seed: args.seed,
    };
    let system = build_system(&patch, config).map_err(fail)?;
    let full_scale = args.full_scale.unwrap_or(args.rail);
    let mut inputs = BTreeMap::new();
    for (name, spec) in &args.inputs {
        let signal = spec.to_signal(config.sample_rate, full_scale).map_err(fail)?;
        inputs.insert(name.clone(), signal);
    }
    let traces = system.render(args.dur, &inputs).map_err(fail)?;
    if let Some(path) = &args.wav {
        let channels = if !args.channels.is_empty() {
            Some(args.channels.clone())
        } else if !patch.outputs.is_empty() {
            Some(patch.outputs.clone())
        } else {
            None
        };
        let opts = WavOptions {
            bits: args.bits,
            full_scale,
            channels,
        };
        write_wav(&traces, path, &opts).map_err(fail)?;
    }
    if let Some(path) = &args.csv {
        write_csv(&traces, path).map_err(fail)?;
    }
    if args.wav.is_none() && args.csv.is_none() {
        for t in &traces.traces {
            let (lo, hi) = t
                .samples
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
            let last = t.samples.last().copied().unwrap_or(0.0);
            println!("{}: min {lo} max {hi} final {last}", t.name);
        }
    }
    Ok(())
}

fn estimate(args: &EstimateArgs) -> Outcome {
    let patch = load_patch(&args.patch)?;
    let device = CabInventory::from_toml(&read(&args.device)?).map_err(fail)?;
    let profile = ResourceProfile::from_toml(&read(&args.profile)?).map_err(fail)?;
    let need = demand(&patch, &profile).map_err(fail)?;
    match capacity(&device, &need) {
        Some(n) => println!("copies: {n}"),
        None => println!("copies: unbounded"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Check { patch } => check(patch),
        Command::Compile(a) => compile(a),
        Command::Run(a) => run(a),
        Command::Estimate(a) => estimate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failed) => ExitCode::from(1),
    }
}
