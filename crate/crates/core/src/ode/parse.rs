//! Parser for `.ode` equation files.
//!
//! ```text
//! system lowpass
//! param a = 1.0
//! param b = 0.5
//! input x
//! eq: y = a*x - b*y'
//! ic y = 0.0
//! out: y
//! end
//! ```
//!
//! Parameters and inputs must be declared before the equations using them;
//! any other identifier in an equation is a system variable. Each equation
//! defines the variable carrying its highest derivative (the first one
//! written, on ties).

use std::collections::HashMap;
use std::f64::consts::PI;

use super::{Derivative, Equation, EquationSystem, MAX_ORDER};
use crate::diag::{has_errors, Code, Diagnostic, Location, SourceSpan};
use crate::lex::{lex_line, Cursor, Tok, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Atom {
    /// Provisional variable index (discovery order) and derivative order.
    Var(usize, usize),
    Input(usize),
}

/// A linear form `constant + sum(coeff * atom)`, terms in first-seen order.
#[derive(Debug, Clone, Default)]
struct Lin {
    constant: f64,
    terms: Vec<(Atom, f64)>,
}

impl Lin {
    fn constant(v: f64) -> Self {
        Self {
            constant: v,
            terms: Vec::new(),
        }
    }

    fn atom(a: Atom) -> Self {
        Self {
            constant: 0.0,
            terms: vec![(a, 1.0)],
        }
    }

    fn as_constant(&self) -> Option<f64> {
        self.terms.is_empty().then_some(self.constant)
    }

    fn scale(mut self, k: f64) -> Self {
        self.constant *= k;
        for (_, c) in &mut self.terms {
            *c *= k;
        }
        self
    }

    fn add(mut self, other: Lin) -> Self {
        self.constant += other.constant;
        for (a, c) in other.terms {
            match self.terms.iter_mut().find(|(b, _)| *b == a) {
                Some((_, acc)) => *acc += c,
                None => self.terms.push((a, c)),
            }
        }
        self
    }
}

struct ParsedEq {
    lin: Lin,
    span: SourceSpan,
}

#[derive(Default)]
struct Parser {
    name: Option<String>,
    params: Vec<(String, f64)>,
    param_index: HashMap<String, f64>,
    inputs: Vec<String>,
    vars: Vec<String>,
    var_spans: Vec<SourceSpan>,
    equations: Vec<ParsedEq>,
    ics: Vec<(usize, usize, f64, SourceSpan)>,
    outputs: Vec<(usize, usize, SourceSpan)>,
    ended: bool,
    diags: Vec<Diagnostic>,
    /// Reported only when every identifier resolves.
    nonlinear: Vec<Diagnostic>,
}

fn err(code: Code, span: SourceSpan, msg: impl Into<String>) -> Diagnostic {
    Diagnostic::error(code, Location::Patch, msg).at(span)
}

/// Parses and normalizes an equation file.
pub fn parse_equations(text: &str) -> Result<EquationSystem, Vec<Diagnostic>> {
    let mut p = Parser::default();
    let mut last_line = 1;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        let toks = match lex_line(line, line_no) {
            Ok(t) => t,
            Err(d) => {
                p.diags.push(d);
                continue;
            }
        };
        if toks.is_empty() {
            continue;
        }
        if let Err(d) = p.statement(&toks, line_no, line.len()) {
            p.diags.push(d);
            if p.name.is_none() {
                break;
            }
        }
    }
    if p.diags.is_empty() {
        if p.name.is_none() {
            p.diags.push(err(
                Code::Syntax,
                SourceSpan::new(1, 1, 1),
                "missing `system <name>` header",
            ));
        } else if !p.ended {
            p.diags.push(err(Code::Syntax, SourceSpan::new(last_line, 1, 1), "missing `end`"));
        }
    }
    if has_errors(&p.diags) {
        return Err(p.diags);
    }
    p.finish()
}

impl Parser {
    fn statement(&mut self, toks: &[Token], line: usize, len: usize) -> Result<(), Diagnostic> {
        let mut c = Cursor::new(toks, line, len);
        let (kw, kw_span) = c.expect_ident()?;
        if self.ended {
            return Err(err(Code::Syntax, kw_span, "statement after `end`"));
        }
        if self.name.is_none() && kw != "system" {
            return Err(err(Code::Syntax, kw_span, "the first statement must be `system <name>`"));
        }
        match kw.as_str() {
            "system" => {
                let (name, _) = c.expect_ident()?;
                c.expect_end()?;
                if self.name.is_some() {
                    return Err(err(Code::Syntax, kw_span, "duplicate `system` header"));
                }
                self.name = Some(name);
            }
            "param" => {
                let (name, span) = c.expect_ident()?;
                c.expect_sym("=")?;
                let lin = self.expr(&mut c)?;
                c.expect_end()?;
                let v = lin
                    .as_constant()
                    .ok_or_else(|| err(Code::Syntax, span, "parameter values must be constant"))?;
                if self.is_declared(&name) {
                    return Err(err(Code::DuplicateId, span, format!("`{name}` is already declared")));
                }
                self.param_index.insert(name.clone(), v);
                self.params.push((name, v));
            }
            "input" => {
                let (name, span) = c.expect_ident()?;
                c.expect_end()?;
                if self.is_declared(&name) {
                    return Err(err(Code::DuplicateId, span, format!("`{name}` is already declared")));
                }
                self.inputs.push(name);
            }
            "eq" => {
                c.expect_sym(":")?;
                let start = c.here();
                let lhs = self.expr(&mut c)?;
                c.expect_sym("=")?;
                let rhs = self.expr(&mut c)?;
                c.expect_end()?;
                let span = SourceSpan::new(line, start.column, len + 1 - start.column);
                self.equations.push(ParsedEq {
                    lin: lhs.add(rhs.scale(-1.0)),
                    span,
                });
            }
            "ic" => {
                let (var, order, span) = self.derivative(&mut c)?;
                c.expect_sym("=")?;
                let lin = self.expr(&mut c)?;
                c.expect_end()?;
                let v = lin
                    .as_constant()
                    .ok_or_else(|| err(Code::Syntax, span, "initial conditions must be constant"))?;
                self.ics.push((var, order, v, span));
            }
            "out" => {
                c.expect_sym(":")?;
                loop {
                    let (var, order, span) = self.derivative(&mut c)?;
                    self.outputs.push((var, order, span));
                    if c.peek_sym(",") {
                        c.next();
                    } else {
                        break;
                    }
                }
                c.expect_end()?;
            }
            "end" => {
                c.expect_end()?;
                self.ended = true;
            }
            other => return Err(err(Code::Syntax, kw_span, format!("unknown statement `{other}`"))),
        }
        Ok(())
    }

    fn is_declared(&self, name: &str) -> bool {
        self.param_index.contains_key(name) || self.inputs.iter().any(|i| i == name)
    }

    fn var_index(&mut self, name: &str, span: SourceSpan) -> usize {
        match self.vars.iter().position(|v| v == name) {
            Some(i) => i,
            None => {
                self.vars.push(name.to_string());
                self.var_spans.push(span);
                self.vars.len() - 1
            }
        }
    }

    fn primes(&mut self, c: &mut Cursor) -> usize {
        let mut n = 0;
        while c.peek_sym("'") {
            c.next();
            n += 1;
        }
        n
    }

    /// `<var>'...` in `ic` and `out` statements.
    fn derivative(&mut self, c: &mut Cursor) -> Result<(usize, usize, SourceSpan), Diagnostic> {
        let (name, span) = c.expect_ident()?;
        let order = self.primes(c);
        if self.is_declared(&name) {
            return Err(err(Code::Syntax, span, format!("`{name}` is not a system variable")));
        }
        let var = self.var_index(&name, span);
        Ok((var, order, SourceSpan::new(span.line, span.column, span.length + order)))
    }

    fn expr(&mut self, c: &mut Cursor) -> Result<Lin, Diagnostic> {
        let mut acc = self.term(c)?;
        loop {
            if c.peek_sym("+") {
                c.next();
                acc = acc.add(self.term(c)?);
            } else if c.peek_sym("-") {
                c.next();
                acc = acc.add(self.term(c)?.scale(-1.0));
            } else {
                return Ok(acc);
            }
        }
    }

    fn term(&mut self, c: &mut Cursor) -> Result<Lin, Diagnostic> {
        let mut acc = self.unary(c)?;
        loop {
            let op_span = c.here();
            if c.peek_sym("*") {
                c.next();
                let rhs = self.unary(c)?;
                acc = match (acc.as_constant(), rhs.as_constant()) {
                    (Some(a), _) => rhs.scale(a),
                    (_, Some(b)) => acc.scale(b),
                    _ => self.nonlinear(op_span, "product of two signals is not linear"),
                };
            } else if c.peek_sym("/") {
                c.next();
                let rhs = self.unary(c)?;
                let Some(d) = rhs.as_constant() else {
                    acc = self.nonlinear(op_span, "division by a signal is not linear");
                    continue;
                };
                if d == 0.0 {
                    return Err(err(Code::Syntax, op_span, "division by zero"));
                }
                acc = acc.scale(1.0 / d);
            } else {
                return Ok(acc);
            }
        }
    }

    fn unary(&mut self, c: &mut Cursor) -> Result<Lin, Diagnostic> {
        if c.peek_sym("-") {
            c.next();
            return Ok(self.unary(c)?.scale(-1.0));
        }
        if c.peek_sym("+") {
            c.next();
            return self.unary(c);
        }
        self.power(c)
    }

    fn power(&mut self, c: &mut Cursor) -> Result<Lin, Diagnostic> {
        let base = self.primary(c)?;
        if !c.peek_sym("^") {
            return Ok(base);
        }
        let op_span = c.next().expect("peeked").span;
        let exp = self.unary(c)?;
        let Some(e) = exp.as_constant() else {
            return Ok(self.nonlinear(op_span, "exponent must be constant"));
        };
        match base.as_constant() {
            Some(b) => Ok(Lin::constant(b.powf(e))),
            None if e == 1.0 => Ok(base),
            None => Ok(self.nonlinear(op_span, "power of a signal is not linear")),
        }
    }

    fn primary(&mut self, c: &mut Cursor) -> Result<Lin, Diagnostic> {
        let here = c.here();
        match c.next() {
            Some(Token {
                tok: Tok::Number(v, _),
                ..
            }) => Ok(Lin::constant(*v)),
            Some(Token {
                tok: Tok::Sym("("),
                ..
            }) => {
                let inner = self.expr(c)?;
                c.expect_sym(")")?;
                Ok(inner)
            }
            Some(Token {
                tok: Tok::Ident(name),
                span,
            }) => {
                let span = *span;
                if c.peek_sym("(") {
                    c.next();
                    let arg = self.expr(c)?;
                    c.expect_sym(")")?;
                    return self.call(name, span, arg);
                }
                let order = self.primes(c);
                if let Some(v) = self.param_index.get(name) {
                    if order > 0 {
                        return Err(err(Code::Syntax, span, format!("parameter `{name}` has no derivative")));
                    }
                    return Ok(Lin::constant(*v));
                }
                if let Some(j) = self.inputs.iter().position(|i| i == name) {
                    if order > 0 {
                        return Err(err(
                            Code::Order,
                            span,
                            format!("derivatives of input `{name}` are not supported"),
                        ));
                    }
                    return Ok(Lin::atom(Atom::Input(j)));
                }
                if name == "pi" && order == 0 {
                    return Ok(Lin::constant(PI));
                }
                if order > MAX_ORDER {
                    return Err(err(
                        Code::Order,
                        SourceSpan::new(span.line, span.column, span.length + order),
                        format!("derivative order {order} exceeds the maximum of {MAX_ORDER}"),
                    ));
                }
                let var = self.var_index(name, span);
                Ok(Lin::atom(Atom::Var(var, order)))
            }
            _ => Err(err(Code::Syntax, here, "expected an expression")),
        }
    }

    fn nonlinear(&mut self, span: SourceSpan, msg: &str) -> Lin {
        self.nonlinear.push(err(Code::Nonlinear, span, msg));
        Lin::constant(0.0)
    }

    fn call(&mut self, name: &str, span: SourceSpan, arg: Lin) -> Result<Lin, Diagnostic> {
        let f: fn(f64) -> f64 = match name {
            "semi" => |k| k / 12.0,
            "sqrt" => f64::sqrt,
            "exp" => f64::exp,
            "ln" => f64::ln,
            "sin" => f64::sin,
            "cos" => f64::cos,
            "tan" => f64::tan,
            _ => return Err(err(Code::Undefined, span, format!("unknown function `{name}`"))),
        };
        match arg.as_constant() {
            Some(v) => Ok(Lin::constant(f(v))),
            None => Ok(self.nonlinear(span, &format!("`{name}` applied to a signal is not linear"))),
        }
    }

    fn finish(self) -> Result<EquationSystem, Vec<Diagnostic>> {
        let mut diags = Vec::new();
        // defined variable (provisional index) of each equation
        let mut defines: Vec<Option<(usize, usize)>> = Vec::new();
        for eq in &self.equations {
            let mut best: Option<(usize, usize)> = None;
            for (atom, c) in &eq.lin.terms {
                if let (Atom::Var(v, o), true) = (atom, *c != 0.0) {
                    if best.is_none_or(|(_, bo)| *o > bo) {
                        best = Some((*v, *o));
                    }
                }
            }
            if best.is_none() && self.nonlinear.is_empty() {
                diags.push(err(Code::Undefined, eq.span, "equation does not involve any variable"));
            }
            defines.push(best);
        }

        let mut definer: HashMap<usize, usize> = HashMap::new();
        for (ei, d) in defines.iter().enumerate() {
            if let Some((v, _)) = d {
                if definer.insert(*v, ei).is_some() {
                    diags.push(err(
                        Code::DuplicateId,
                        self.equations[ei].span,
                        format!("variable `{}` is defined by more than one equation", self.vars[*v]),
                    ));
                }
            }
        }
        for (v, name) in self.vars.iter().enumerate() {
            if !definer.contains_key(&v) {
                diags.push(err(
                    Code::Undefined,
                    self.var_spans[v],
                    format!("unknown identifier `{name}`: not a parameter, input, or variable defined by an equation"),
                ));
            }
        }
        if !diags.is_empty() {
            return Err(diags);
        }

        if !self.nonlinear.is_empty() {
            return Err(self.nonlinear);
        }

        // final variable order follows equation order
        let remap: HashMap<usize, usize> = defines
            .iter()
            .enumerate()
            .map(|(ei, d)| (d.expect("checked").0, ei))
            .collect();
        let orders: Vec<usize> = defines.iter().map(|d| d.expect("checked").1).collect();
        let variables: Vec<String> = defines
            .iter()
            .map(|d| self.vars[d.expect("checked").0].clone())
            .collect();

        let mut equations = Vec::new();
        for (ei, eq) in self.equations.iter().enumerate() {
            let own = ei;
            let order = orders[ei];
            let mut coeffs = vec![0.0; order + 1];
            let mut coupling: Vec<(Derivative, f64)> = Vec::new();
            let mut inputs = vec![0.0; self.inputs.len()];
            for (atom, c) in &eq.lin.terms {
                match *atom {
                    Atom::Input(j) => inputs[j] -= c,
                    Atom::Var(pv, o) => {
                        let v = remap[&pv];
                        if v == own {
                            // zero-weight terms above the order were cancelled
                            if o <= order {
                                coeffs[o] += c;
                            }
                        } else if *c != 0.0 {
                            if o > orders[v] {
                                diags.push(err(
                                    Code::Order,
                                    eq.span,
                                    format!(
                                        "`{}{}` exceeds the order of its own equation ({})",
                                        variables[v],
                                        "'".repeat(o),
                                        orders[v]
                                    ),
                                ));
                            }
                            coupling.push((Derivative { var: v, order: o }, *c));
                        }
                    }
                }
            }
            coupling.sort_by_key(|a| a.0);
            equations.push(Equation {
                order,
                coeffs,
                coupling,
                inputs,
                constant: -eq.lin.constant,
                initial: vec![0.0; order],
            });
        }

        for (pv, o, v, span) in &self.ics {
            let Some(&var) = remap.get(pv) else { continue };
            let eq = &mut equations[var];
            if *o >= eq.order {
                diags.push(err(
                    Code::Order,
                    *span,
                    format!(
                        "initial conditions of `{}` go up to derivative {} (order {} equation)",
                        variables[var],
                        eq.order as isize - 1,
                        eq.order
                    ),
                ));
                continue;
            }
            eq.initial[*o] = *v;
        }

        let mut outputs = Vec::new();
        for (pv, o, span) in &self.outputs {
            let Some(&var) = remap.get(pv) else { continue };
            if *o > equations[var].order {
                diags.push(err(
                    Code::Order,
                    *span,
                    format!(
                        "`{}` has order {}; derivative {} is not available",
                        variables[var], equations[var].order, o
                    ),
                ));
                continue;
            }
            let d = Derivative { var, order: *o };
            if !outputs.contains(&d) {
                outputs.push(d);
            }
        }
        if self.outputs.is_empty() {
            outputs = (0..variables.len()).map(|var| Derivative { var, order: 0 }).collect();
        }
        if !diags.is_empty() {
            return Err(diags);
        }

        Ok(EquationSystem {
            name: self.name.unwrap_or_default(),
            params: self.params,
            inputs: self.inputs,
            variables,
            equations,
            outputs,
        })
    }
}
