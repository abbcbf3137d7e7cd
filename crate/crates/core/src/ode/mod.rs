//! Linear constant-coefficient equation systems and their compilation into
//! patches of integrators, summers and unit inverters.
//!
//! Every equation is normalized to
//!
//! ```text
//! c_n y^(n) + ... + c_1 y' + c_0 y + (coupling terms) = b_1 x_1 + ... + b_0
//! ```
//!
//! where the coupling terms reference other variables of the system.

mod parse;
mod synth;

use std::fmt::Write as _;

pub use parse::parse_equations;
pub use synth::{inverting_depth, synthesize, ProbeInfo, ScalingOptions, Synthesis, DEFAULT_COEFF_CAP};

use crate::dsl::format_number;

/// Highest derivative order accepted for a variable.
pub const MAX_ORDER: usize = 8;

/// A derivative of one system variable: `variables[var]` differentiated
/// `order` times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Derivative {
    pub var: usize,
    pub order: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Equation {
    /// Highest derivative of the defined variable.
    pub order: usize,
    /// `coeffs[i]` multiplies `y^(i)`; `coeffs[order]` is non-zero.
    pub coeffs: Vec<f64>,
    /// Terms in other variables, sorted by derivative.
    pub coupling: Vec<(Derivative, f64)>,
    /// One right-hand-side coefficient per system input.
    pub inputs: Vec<f64>,
    pub constant: f64,
    /// `y(0), y'(0), ..., y^(order-1)(0)`.
    pub initial: Vec<f64>,
}

impl Equation {
    pub fn leading(&self) -> f64 {
        self.coeffs[self.order]
    }
}

/// A parsed and normalized system. `equations[i]` defines `variables[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquationSystem {
    pub name: String,
    pub params: Vec<(String, f64)>,
    pub inputs: Vec<String>,
    pub variables: Vec<String>,
    pub equations: Vec<Equation>,
    pub outputs: Vec<Derivative>,
}

impl EquationSystem {
    pub fn variable(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    /// `y`, `y'`, `y''`, ...
    pub fn derivative_name(&self, d: Derivative) -> String {
        format!("{}{}", self.variables[d.var], "'".repeat(d.order))
    }
}

/// Rewrites the system in machine time `tau = lambda * t`: the coefficient of
/// every `y^(i)` is multiplied by `lambda^i` and derivative initial
/// conditions are divided by it. The solution at machine time `lambda * t`
/// equals the original solution at `t`.
pub fn time_scale(system: &EquationSystem, lambda: f64) -> EquationSystem {
    let mut out = system.clone();
    for eq in &mut out.equations {
        for (i, c) in eq.coeffs.iter_mut().enumerate() {
            *c *= lambda.powi(i as i32);
        }
        for (d, c) in &mut eq.coupling {
            *c *= lambda.powi(d.order as i32);
        }
        for (i, v) in eq.initial.iter_mut().enumerate() {
            *v /= lambda.powi(i as i32);
        }
    }
    out
}

fn push_term(out: &mut String, coeff: f64, atom: &str) {
    if coeff == 0.0 && !out.is_empty() {
        return;
    }
    let mag = format_number(coeff.abs());
    let neg = coeff.is_sign_negative();
    if out.is_empty() {
        let _ = write!(out, "{}{mag}*{atom}", if neg { "-" } else { "" });
    } else {
        let _ = write!(out, " {} {mag}*{atom}", if neg { "-" } else { "+" });
    }
}

/// Text form of a normalized system that parses back to an identical
/// coefficient table.
pub fn serialize_equations(system: &EquationSystem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "system {}", system.name);
    for (name, v) in &system.params {
        let _ = writeln!(out, "param {name} = {}", format_number(*v));
    }
    for name in &system.inputs {
        let _ = writeln!(out, "input {name}");
    }
    for (vi, eq) in system.equations.iter().enumerate() {
        let mut lhs = String::new();
        for i in (0..=eq.order).rev() {
            let d = Derivative { var: vi, order: i };
            if i == eq.order || eq.coeffs[i] != 0.0 {
                push_term(&mut lhs, eq.coeffs[i], &system.derivative_name(d));
            }
        }
        for (d, c) in &eq.coupling {
            push_term(&mut lhs, *c, &system.derivative_name(*d));
        }
        let mut rhs = String::new();
        for (j, b) in eq.inputs.iter().enumerate() {
            if *b != 0.0 {
                push_term(&mut rhs, *b, &system.inputs[j]);
            }
        }
        if eq.constant != 0.0 || rhs.is_empty() {
            let mag = format_number(eq.constant.abs());
            match (rhs.is_empty(), eq.constant.is_sign_negative()) {
                (true, true) => rhs = format!("-{mag}"),
                (true, false) => rhs = mag,
                (false, true) => {
                    let _ = write!(rhs, " - {mag}");
                }
                (false, false) => {
                    let _ = write!(rhs, " + {mag}");
                }
            }
        }
        let _ = writeln!(out, "eq: {lhs} = {rhs}");
    }
    for (vi, eq) in system.equations.iter().enumerate() {
        for (i, v) in eq.initial.iter().enumerate() {
            if *v != 0.0 {
                let d = Derivative { var: vi, order: i };
                let _ = writeln!(out, "ic {} = {}", system.derivative_name(d), format_number(*v));
            }
        }
    }
    let outs: Vec<String> = system.outputs.iter().map(|d| system.derivative_name(*d)).collect();
    let _ = writeln!(out, "out: {}", outs.join(", "));
    out.push_str("end\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lowpass(b: f64) -> EquationSystem {
        parse_equations(&format!(
            "system lp\nparam a = 1\nparam b = {b}\ninput x\neq: y = a*x - b*y'\nend\n"
        ))
        .unwrap()
    }

    #[test]
    fn time_scale_identity() {
        let s = lowpass(0.5);
        assert_eq!(time_scale(&s, 1.0), s);
    }

    #[test]
    fn time_scale_doubles_time_constant() {
        let s = parse_equations("system d\neq: y' + y = 0\nic y = 1\nend\n").unwrap();
        let t = time_scale(&s, 2.0);
        assert_eq!(t.equations[0].coeffs, vec![1.0, 2.0]);
        assert_eq!(t.equations[0].initial, vec![1.0]);
    }

    #[test]
    fn time_scale_effective_time_constant() {
        let t = time_scale(&lowpass(0.5), 10.0);
        let eq = &t.equations[0];
        assert_eq!(eq.coeffs[1] / eq.coeffs[0], 5.0);
    }

    #[test]
    fn time_scale_divides_derivative_ics() {
        let s = parse_equations("system o\neq: y'' + y = 0\nic y = 1\nic y' = 4\nend\n").unwrap();
        let t = time_scale(&s, 2.0);
        assert_eq!(t.equations[0].coeffs, vec![1.0, 0.0, 4.0]);
        assert_eq!(t.equations[0].initial, vec![1.0, 2.0]);
    }

    #[test]
    fn serialization_is_idempotent() {
        let sources = [
            "system lp\nparam a = 1\nparam b = 0.5\ninput x\neq: y = a*x - b*y'\nend\n",
            "system svf\nparam w = 628.3185307179587\nparam q = 0.7071067811865476\ninput x\neq: y'' + (w/q)*y' + w^2*y = w^2*x\nout: y, y', y''\nend\n",
            "system osc\neq: y' = -z\neq: z' = y\nic y = 1\nout: y, z\nend\n",
            "system g\ninput x\neq: y = semi(7)*x - 3\nend\n",
            "system z\neq: 0 = y\nend\n",
        ];
        for src in sources {
            let a = parse_equations(src).unwrap();
            let text = serialize_equations(&a);
            let b = parse_equations(&text).unwrap_or_else(|d| panic!("{text}\n{d:?}"));
            assert_eq!(a, b, "{text}");
            assert_eq!(serialize_equations(&b), text);
        }
    }
}
