//! Kelvin feedback synthesis.
//!
//! For each variable of order `n` the highest derivative is isolated and
//! produced (negated) by a summer, then fed through a chain of `n`
//! integrators; the summer collects the input terms, the constant term and
//! the lower derivatives tapped from the chain. Unit inverters are added
//! wherever a tap has the wrong sign, so that every probe reads its
//! quantity with positive sense.
//!
//! Derivatives are carried in scaled form: with frequency scale `rho`, the
//! machine voltage of `y^(i)` is `A * y^(i) / rho^i`, every chain integrator
//! has gain `rho` and the summer weights stay of order one. `rho` is chosen
//! from the equation's own coefficients so that the zero-order weight is
//! exactly one.

use std::collections::{BTreeMap, HashSet};

use super::{time_scale, Derivative, EquationSystem};
use crate::block::{BlockKind, BlockParams, DEFAULT_RAIL};
use crate::diag::{Code, Diagnostic, Location};
use crate::dsl::canonicalize;
use crate::patch::{validate_patch, Patch};

/// Largest synthesized coefficient magnitude accepted by default.
pub const DEFAULT_COEFF_CAP: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingOptions {
    /// Machine seconds per problem second.
    pub time_scale: f64,
    /// Volts per problem unit, per variable name (default 1).
    pub amplitude: BTreeMap<String, f64>,
    pub coeff_cap: f64,
    /// Rail used for the overflow estimate.
    pub rail: f64,
}

impl Default for ScalingOptions {
    fn default() -> Self {
        Self {
            time_scale: 1.0,
            amplitude: BTreeMap::new(),
            coeff_cap: DEFAULT_COEFF_CAP,
            rail: DEFAULT_RAIL,
        }
    }
}

/// How a probe of the synthesized patch relates to the system.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeInfo {
    pub name: String,
    pub output: Derivative,
    /// Probe volts per problem unit of the derivative.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthesis {
    pub patch: Patch,
    pub probes: Vec<ProbeInfo>,
    pub warnings: Vec<Diagnostic>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Quantity {
    Var(Derivative),
    Input(usize),
    One,
}

struct Builder {
    patch: Patch,
    ids: HashSet<String>,
    /// Blocks whose output equals `sign * quantity`.
    sources: Vec<(Quantity, String, bool)>,
}

impl Builder {
    fn fresh(&mut self, base: &str) -> String {
        let mut id = base.to_string();
        let mut n = 2;
        while self.ids.contains(&id) {
            id = format!("{base}_{n}");
            n += 1;
        }
        self.ids.insert(id.clone());
        id
    }

    fn add(&mut self, base: &str, params: BlockParams) -> String {
        let id = self.fresh(base);
        self.patch.add_block(id.clone(), params);
        id
    }

    /// A block carrying `q` with positive (`positive = true`) or negative
    /// sense, inserting a unit inverter or reference when needed.
    fn source(&mut self, q: Quantity, positive: bool) -> String {
        if let Some((_, id, _)) = self.sources.iter().find(|(sq, _, p)| *sq == q && *p == positive) {
            return id.clone();
        }
        if q == Quantity::One {
            let (base, v) = if positive { ("ref_pos", 1.0) } else { ("ref_neg", -1.0) };
            let id = self.add(base, BlockParams::Const { v });
            self.sources.push((q, id.clone(), positive));
            return id;
        }
        let src = self
            .sources
            .iter()
            .find(|(sq, _, _)| *sq == q)
            .map(|(_, id, _)| id.clone())
            .expect("every quantity has a primary source");
        let id = self.add(&format!("{src}_inv"), BlockParams::Gain { k: 1.0 });
        self.patch.wire(src, id.clone(), 0);
        self.sources.push((q, id.clone(), positive));
        id
    }
}

fn frequency_scale(coeffs: &[f64]) -> f64 {
    let n = coeffs.len() - 1;
    let lead = coeffs[n].abs();
    coeffs[..n]
        .iter()
        .enumerate()
        .find(|(_, c)| **c != 0.0)
        .map(|(i, c)| (c.abs() / lead).powf(1.0 / (n - i) as f64))
        .unwrap_or(1.0)
}

/// Compiles a linear system into a patch. The probe for each requested
/// output reads `scale * y^(i)` of the time-scaled system, see
/// [`ProbeInfo`].
pub fn synthesize(system: &EquationSystem, opts: &ScalingOptions) -> Result<Synthesis, Vec<Diagnostic>> {
    let mut errors = Vec::new();
    if !(opts.time_scale.is_finite() && opts.time_scale > 0.0) {
        errors.push(Diagnostic::error(
            Code::Param,
            Location::Patch,
            format!("time scale must be > 0 (got {})", opts.time_scale),
        ));
    }
    for (name, a) in &opts.amplitude {
        if system.variable(name).is_none() {
            errors.push(Diagnostic::error(
                Code::Undefined,
                Location::Patch,
                format!("amplitude scale given for unknown variable `{name}`"),
            ));
        } else if !(a.is_finite() && *a > 0.0) {
            errors.push(Diagnostic::error(
                Code::Param,
                Location::Patch,
                format!("amplitude scale of `{name}` must be > 0 (got {a})"),
            ));
        }
    }
    if !errors.is_empty() {
        return Err(errors);
    }

    let sys = time_scale(system, opts.time_scale);
    let amp: Vec<f64> = sys
        .variables
        .iter()
        .map(|v| opts.amplitude.get(v).copied().unwrap_or(1.0))
        .collect();
    let rho: Vec<f64> = sys.equations.iter().map(|e| frequency_scale(&e.coeffs)).collect();
    // machine volts per problem unit of each derivative
    let factor = |d: Derivative| amp[d.var] / rho[d.var].powi(d.order as i32);

    let mut b = Builder {
        patch: Patch::new(sys.name.clone()),
        ids: HashSet::new(),
        sources: Vec::new(),
    };
    b.patch.params = sys.params.clone();
    for (j, name) in sys.inputs.iter().enumerate() {
        let id = b.fresh(name);
        b.patch.add_input(id.clone());
        b.sources.push((Quantity::Input(j), id, true));
    }

    let mut summers = Vec::new();
    for (v, eq) in sys.equations.iter().enumerate() {
        let name = &sys.variables[v];
        let n = eq.order;
        let summer = b.add(&format!("{name}_sum"), BlockParams::Summer { k: vec![] });
        // summer output is the negated machine highest derivative
        b.sources.push((Quantity::Var(Derivative { var: v, order: n }), summer.clone(), false));
        let mut prev = summer.clone();
        for m in 1..=n {
            let d = Derivative { var: v, order: n - m };
            // integrator m carries (-1)^(m+1) times the machine derivative
            let positive = m % 2 == 1;
            let sign = if positive { 1.0 } else { -1.0 };
            // adding 0.0 turns -0.0 into 0.0
            let ic = sign * factor(d) * eq.initial[n - m] + 0.0;
            let id = b.add(
                &format!("{name}_int{m}"),
                BlockParams::Integrator {
                    k: vec![rho[v]],
                    ic,
                },
            );
            b.patch.wire(prev, id.clone(), 0);
            b.sources.push((Quantity::Var(d), id.clone(), positive));
            prev = id;
        }
        summers.push(summer);
    }

    for (v, eq) in sys.equations.iter().enumerate() {
        let n = eq.order;
        let top = amp[v] / (rho[v].powi(n as i32) * eq.leading());
        let mut terms: Vec<(Quantity, f64)> = Vec::new();
        for (j, bj) in eq.inputs.iter().enumerate() {
            terms.push((Quantity::Input(j), top * bj));
        }
        terms.push((Quantity::One, top * eq.constant));
        for i in 0..n {
            let d = Derivative { var: v, order: i };
            terms.push((Quantity::Var(d), -top * eq.coeffs[i] / factor(d)));
        }
        for (d, c) in &eq.coupling {
            terms.push((Quantity::Var(*d), -top * c / factor(*d)));
        }
        terms.retain(|(_, w)| *w != 0.0);
        if terms.is_empty() {
            terms.push((Quantity::One, 0.0));
        }

        let mut k = Vec::with_capacity(terms.len());
        for (port, (q, w)) in terms.into_iter().enumerate() {
            let src = b.source(q, w >= 0.0);
            b.patch.wire(src, summers[v].clone(), port);
            k.push(w.abs());
        }
        let idx = b.patch.block_index(&summers[v]).expect("summer exists");
        b.patch.blocks[idx].params = BlockParams::Summer { k };
    }

    let mut probes = Vec::new();
    let mut taps = Vec::new();
    for d in &sys.outputs {
        taps.push(b.source(Quantity::Var(*d), true));
    }
    for (d, tap) in sys.outputs.iter().zip(taps) {
        let base = match d.order {
            0 => sys.variables[d.var].clone(),
            o => format!("{}_d{o}", sys.variables[d.var]),
        };
        let name = b.fresh(&base);
        b.patch.probe(name.clone(), tap);
        probes.push(ProbeInfo {
            name,
            output: *d,
            scale: factor(*d),
        });
    }
    canonicalize(&mut b.patch);

    for block in &b.patch.blocks {
        let coeffs: &[f64] = match &block.params {
            BlockParams::Summer { k } | BlockParams::Integrator { k, .. } => k,
            _ => &[],
        };
        if let Some(c) = coeffs.iter().find(|c| **c > opts.coeff_cap) {
            errors.push(Diagnostic::error(
                Code::Coeff,
                Location::Patch,
                format!(
                    "{} `{}` needs coefficient {c:.6e}, above the cap of {}; rescale time or raise the cap",
                    block.kind(),
                    block.id,
                    opts.coeff_cap
                ),
            ));
        }
    }
    errors.extend(validate_patch(&b.patch));
    if !errors.is_empty() {
        return Err(errors);
    }

    let mut warnings = Vec::new();
    for (v, eq) in sys.equations.iter().enumerate() {
        if eq.coeffs[0] == 0.0 || !eq.coupling.is_empty() {
            continue;
        }
        // DC level for inputs at 1 V
        let dc = (eq.inputs.iter().map(|b| b.abs()).sum::<f64>() + eq.constant.abs()) / eq.coeffs[0].abs();
        if dc * amp[v] > opts.rail {
            warnings.push(Diagnostic::warning(
                Code::Rail,
                Location::Patch,
                format!(
                    "`{}` may reach {:.3} V at DC for 1 V inputs, beyond the {} V rail",
                    sys.variables[v],
                    dc * amp[v],
                    opts.rail
                ),
            ));
        }
    }

    Ok(Synthesis {
        patch: b.patch,
        probes,
        warnings,
    })
}

/// Number of inverting stages between a block and the summer that defines
/// its variable, following first input ports upstream.
pub fn inverting_depth(patch: &Patch, from: &str) -> Option<usize> {
    let mut depth = 0;
    let mut cur = patch.driver(from, 0)?.to_string();
    loop {
        let block = patch.block(&cur)?;
        if block.kind().is_inverting() {
            depth += 1;
        }
        if block.kind() == BlockKind::Summer {
            return Some(depth);
        }
        cur = patch.driver(&cur, 0)?.to_string();
    }
}
