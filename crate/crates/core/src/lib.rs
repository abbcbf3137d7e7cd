//! A virtual general-purpose analogue computer for sound and music.
//!
//! Patches are wirings of classic computing elements (inverting gains,
//! summers, integrators, multipliers, function generators). They can be
//! written by hand in the `.apc` patch language, or synthesized from linear
//! differential equations by the [`ode`] compiler, then simulated in
//! continuous time by the RK4 [`sim`] engine and exported as WAV or CSV.
//! The [`fpaa`] module estimates how many copies of a patch fit a
//! configurable analogue array.

pub mod block;
pub mod diag;
pub mod dsl;
pub mod fpaa;
mod lex;
pub mod ode;
pub mod patch;
pub mod signal_io;
pub mod sim;

pub use block::{BlockKind, BlockParams, BlockState, SeqMode, Shape, DEFAULT_RAIL};
pub use diag::{Code, Diagnostic, Location, Severity, SourceSpan};
pub use dsl::{parse_patch, serialize_patch};
pub use patch::{validate_patch, Block, Patch, Wire};
pub use ode::{parse_equations, synthesize, EquationSystem, ScalingOptions, Synthesis};
pub use sim::{build_system, render, CompiledSystem, EngineConfig, SimError, Signal, Trace, TraceSet};
