//! The `.apc` patch language: one statement per line, `#` comments.
//!
//! ```text
//! patch lowpass
//! param b = 0.5
//! input x
//! block s1 = summer(k=[2.0, 2.0])
//! block i1 = integrator(k=[1.0], ic=0.0)
//! wire x -> s1.in[0]
//! wire i1.out -> s1.in[1]
//! wire s1.out -> i1.in[0]
//! probe y = i1.out
//! end
//! ```
//!
//! Parameter references and `semi(n)` (n/12 volts) may appear wherever a
//! number is expected. Wires may reference blocks declared later.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::block::{BlockKind, BlockParams, SeqMode, Shape};
use crate::diag::{has_errors, Code, Diagnostic, Location, SourceSpan};
use crate::lex::{lex_line, Cursor, Tok, Token};
use crate::patch::{validate_patch, Patch, Wire};

/// Formats a number as the shortest decimal that reads back bit-exactly.
pub fn format_number(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Clone)]
enum Value {
    Num(f64, SourceSpan),
    List(Vec<f64>, SourceSpan),
    Word(String, SourceSpan),
    /// Integer literal kept verbatim so 64-bit seeds survive.
    Int(u64, SourceSpan),
}

impl Value {
    fn span(&self) -> SourceSpan {
        match self {
            Value::Num(_, s) | Value::List(_, s) | Value::Word(_, s) | Value::Int(_, s) => *s,
        }
    }
}

struct PendingWire {
    from: String,
    from_span: SourceSpan,
    to: String,
    to_span: SourceSpan,
    port_name: String,
    port_index: Option<usize>,
}

#[derive(Default)]
struct Parser {
    patch: Patch,
    diags: Vec<Diagnostic>,
    params: HashMap<String, f64>,
    ids: HashMap<String, SourceSpan>,
    header_span: Option<SourceSpan>,
    block_spans: Vec<SourceSpan>,
    wires: Vec<PendingWire>,
    probe_wires: Vec<PendingWire>,
    output_spans: Vec<SourceSpan>,
    ended: bool,
}

/// Parses patch source text. On success the patch satisfies every
/// validation rule; otherwise at least one error diagnostic with a span is
/// returned.
pub fn parse_patch(text: &str) -> Result<Patch, Vec<Diagnostic>> {
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
            if p.header_span.is_none() {
                break;
            }
        }
    }
    if p.header_span.is_none() && p.diags.is_empty() {
        p.diags.push(
            Diagnostic::error(Code::Syntax, Location::Patch, "missing `patch <name>` header")
                .at(SourceSpan::new(1, 1, 1)),
        );
    }
    if !p.ended && p.diags.is_empty() {
        p.diags.push(
            Diagnostic::error(Code::Syntax, Location::Patch, "missing `end`")
                .at(SourceSpan::new(last_line, 1, 1)),
        );
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
            return Err(
                Diagnostic::error(Code::Syntax, Location::Patch, "statement after `end`").at(kw_span),
            );
        }
        if self.header_span.is_none() && kw != "patch" {
            return Err(Diagnostic::error(
                Code::Syntax,
                Location::Patch,
                "the first statement must be `patch <name>`",
            )
            .at(kw_span));
        }
        match kw.as_str() {
            "patch" => {
                let (name, span) = c.expect_ident()?;
                c.expect_end()?;
                if self.header_span.is_some() {
                    return Err(Diagnostic::error(
                        Code::Syntax,
                        Location::Patch,
                        "duplicate `patch` header",
                    )
                    .at(kw_span));
                }
                self.patch.name = name;
                self.header_span = Some(span);
            }
            "param" => {
                let (name, span) = c.expect_ident()?;
                c.expect_sym("=")?;
                let v = self.number(&mut c)?;
                c.expect_end()?;
                if self.params.contains_key(&name) {
                    return Err(Diagnostic::error(
                        Code::DuplicateId,
                        Location::Patch,
                        format!("parameter `{name}` is declared more than once"),
                    )
                    .at(span));
                }
                self.params.insert(name.clone(), v);
                self.patch.params.push((name, v));
            }
            "input" => {
                let (id, span) = c.expect_ident()?;
                c.expect_end()?;
                self.declare(id, span, BlockParams::Input)?;
            }
            "block" => {
                let (id, span) = c.expect_ident()?;
                c.expect_sym("=")?;
                let params = self.block_params(&mut c)?;
                c.expect_end()?;
                self.declare(id, span, params)?;
            }
            "wire" => {
                let (from, from_span) = self.source(&mut c)?;
                c.expect_sym("->")?;
                let (to, to_span) = c.expect_ident()?;
                c.expect_sym(".")?;
                let (port_name, port_span) = c.expect_ident()?;
                let mut end = port_span;
                let port_index = if c.peek_sym("[") {
                    c.next();
                    let idx = self.index(&mut c)?;
                    end = c.expect_sym("]")?;
                    Some(idx)
                } else {
                    None
                };
                c.expect_end()?;
                let to_span = join(to_span, end);
                self.wires.push(PendingWire {
                    from,
                    from_span,
                    to,
                    to_span,
                    port_name,
                    port_index,
                });
            }
            "probe" => {
                let (id, span) = c.expect_ident()?;
                c.expect_sym("=")?;
                let (from, from_span) = self.source(&mut c)?;
                c.expect_end()?;
                self.declare(id.clone(), span, BlockParams::Probe)?;
                self.probe_wires.push(PendingWire {
                    from,
                    from_span,
                    to: id,
                    to_span: span,
                    port_name: "in".into(),
                    port_index: Some(0),
                });
            }
            "output" => {
                let (id, span) = c.expect_ident()?;
                c.expect_end()?;
                self.patch.outputs.push(id);
                self.output_spans.push(span);
            }
            "end" => {
                c.expect_end()?;
                self.ended = true;
            }
            other => {
                return Err(Diagnostic::error(
                    Code::Syntax,
                    Location::Patch,
                    format!("unknown statement `{other}`"),
                )
                .at(kw_span))
            }
        }
        Ok(())
    }

    fn declare(&mut self, id: String, span: SourceSpan, params: BlockParams) -> Result<(), Diagnostic> {
        if let Some(prev) = self.ids.get(&id) {
            return Err(Diagnostic::error(
                Code::DuplicateId,
                Location::Patch,
                format!("`{id}` is already declared on line {}", prev.line),
            )
            .at(span));
        }
        self.ids.insert(id.clone(), span);
        self.block_spans.push(span);
        self.patch.add_block(id, params);
        Ok(())
    }

    /// `<id>` or `<id>.out`.
    fn source(&mut self, c: &mut Cursor) -> Result<(String, SourceSpan), Diagnostic> {
        let (id, span) = c.expect_ident()?;
        if c.peek_sym(".") {
            c.next();
            let (port, pspan) = c.expect_ident()?;
            if port != "out" {
                return Err(Diagnostic::error(
                    Code::Port,
                    Location::Patch,
                    format!("`{id}.{port}`: blocks have a single output port `out`"),
                )
                .at(pspan));
            }
            let full = SourceSpan::new(span.line, span.column, pspan.column + pspan.length - span.column);
            return Ok((id, full));
        }
        Ok((id, span))
    }

    fn index(&mut self, c: &mut Cursor) -> Result<usize, Diagnostic> {
        match c.next() {
            Some(Token {
                tok: Tok::Number(v, raw),
                span,
            }) => {
                if raw.chars().all(|ch| ch.is_ascii_digit()) {
                    Ok(*v as usize)
                } else {
                    Err(Diagnostic::error(
                        Code::Syntax,
                        Location::Patch,
                        format!("port index `{raw}` must be a non-negative integer"),
                    )
                    .at(*span))
                }
            }
            _ => Err(c.error("expected port index")),
        }
    }

    /// number | -number | param reference | semi(number)
    fn number(&mut self, c: &mut Cursor) -> Result<f64, Diagnostic> {
        match self.value(c)? {
            Value::Num(v, _) => Ok(v),
            Value::Int(v, _) => Ok(v as f64),
            other => Err(Diagnostic::error(Code::Syntax, Location::Patch, "expected a number")
                .at(other.span())),
        }
    }

    fn value(&mut self, c: &mut Cursor) -> Result<Value, Diagnostic> {
        let start = c.here();
        if c.peek_sym("-") || c.peek_sym("+") {
            let neg = c.peek_sym("-");
            c.next();
            return match self.value(c)? {
                Value::Num(v, s) => Ok(Value::Num(if neg { -v } else { v }, join(start, s))),
                Value::Int(v, s) => Ok(Value::Num(if neg { -(v as f64) } else { v as f64 }, join(start, s))),
                other => Err(Diagnostic::error(Code::Syntax, Location::Patch, "expected a number after sign")
                    .at(other.span())),
            };
        }
        if c.peek_sym("[") {
            c.next();
            let mut items = Vec::new();
            if !c.peek_sym("]") {
                loop {
                    items.push(self.number(c)?);
                    if c.peek_sym(",") {
                        c.next();
                    } else {
                        break;
                    }
                }
            }
            let end = c.expect_sym("]")?;
            return Ok(Value::List(items, join(start, end)));
        }
        match c.next() {
            Some(Token {
                tok: Tok::Number(v, raw),
                span,
            }) => {
                if raw.chars().all(|ch| ch.is_ascii_digit()) {
                    if let Ok(i) = raw.parse::<u64>() {
                        return Ok(Value::Int(i, *span));
                    }
                }
                Ok(Value::Num(*v, *span))
            }
            Some(Token {
                tok: Tok::Ident(name),
                span,
            }) => {
                if name == "semi" && c.peek_sym("(") {
                    c.next();
                    let v = self.number(c)?;
                    let end = c.expect_sym(")")?;
                    return Ok(Value::Num(v / 12.0, join(*span, end)));
                }
                match self.params.get(name) {
                    Some(v) => Ok(Value::Num(*v, *span)),
                    None => Ok(Value::Word(name.clone(), *span)),
                }
            }
            _ => Err(Diagnostic::error(Code::Syntax, Location::Patch, "expected a value").at(start)),
        }
    }

    fn block_params(&mut self, c: &mut Cursor) -> Result<BlockParams, Diagnostic> {
        let (kind_name, kind_span) = c.expect_ident()?;
        let kind: BlockKind = kind_name.parse().map_err(|_| {
            Diagnostic::error(
                Code::Syntax,
                Location::Patch,
                format!("unknown block kind `{kind_name}`"),
            )
            .at(kind_span)
        })?;
        if matches!(kind, BlockKind::Input | BlockKind::Probe) {
            return Err(Diagnostic::error(
                Code::Syntax,
                Location::Patch,
                format!("declare {kind} blocks with the `{kind}` statement"),
            )
            .at(kind_span));
        }
        c.expect_sym("(")?;
        let mut args: Vec<(String, SourceSpan, Value)> = Vec::new();
        if !c.peek_sym(")") {
            loop {
                let (key, kspan) = c.expect_ident()?;
                c.expect_sym("=")?;
                let v = self.value(c)?;
                if args.iter().any(|(k, _, _)| *k == key) {
                    return Err(Diagnostic::error(
                        Code::Param,
                        Location::Patch,
                        format!("parameter `{key}` given twice"),
                    )
                    .at(kspan));
                }
                args.push((key, kspan, v));
                if c.peek_sym(",") {
                    c.next();
                } else {
                    break;
                }
            }
        }
        let close = c.expect_sym(")")?;
        let mut a = Args {
            args,
            kind,
            span: join(kind_span, close),
        };
        let params = match kind {
            BlockKind::Atten => BlockParams::Atten { a: a.num("a", None)? },
            BlockKind::Gain => BlockParams::Gain {
                k: a.num("k", Some(1.0))?,
            },
            BlockKind::Summer => BlockParams::Summer { k: a.list("k")? },
            BlockKind::Integrator => BlockParams::Integrator {
                k: a.list("k")?,
                ic: a.num("ic", Some(0.0))?,
            },
            BlockKind::Multiplier => BlockParams::Multiplier {
                s: a.num("s", Some(crate::block::DEFAULT_MULTIPLIER_SCALE))?,
            },
            BlockKind::Const => BlockParams::Const {
                v: a.num("v", Some(0.0))?,
            },
            BlockKind::Osc => BlockParams::Osc {
                shape: a.word("shape", Shape::Sine)?,
                f_ref: a.num("f_ref", Some(261.63))?,
                amp: a.num("amp", Some(1.0))?,
            },
            BlockKind::Noise => BlockParams::Noise {
                seed: a.int("seed", 0)?,
                amp: a.num("amp", Some(1.0))?,
            },
            BlockKind::Env => BlockParams::Env {
                attack: a.num("a", Some(0.01))?,
                decay: a.num("d", Some(0.1))?,
                sustain: a.num("s", Some(0.7))?,
                release: a.num("r", Some(0.2))?,
                amp: a.num("amp", Some(1.0))?,
            },
            BlockKind::Seq => {
                let flat = a.list("points")?;
                if flat.len() % 2 != 0 {
                    return Err(a.err("`points` must hold (time, value) pairs"));
                }
                BlockParams::Seq {
                    points: flat.chunks(2).map(|p| (p[0], p[1])).collect(),
                    mode: a.word("mode", SeqMode::Step)?,
                }
            }
            BlockKind::Cmp => BlockParams::Cmp {
                hi: a.num("hi", Some(5.0))?,
                lo: a.num("lo", Some(0.0))?,
            },
            BlockKind::Lim => BlockParams::Lim {
                lo: a.num("lo", Some(-5.0))?,
                hi: a.num("hi", Some(5.0))?,
            },
            BlockKind::Bbd => {
                let stages = a.int("stages", 1024)?;
                let stages = u32::try_from(stages)
                    .map_err(|_| a.err("`stages` does not fit in 32 bits"))?;
                BlockParams::Bbd {
                    stages,
                    f_clk: a.num("f_clk", Some(10_000.0))?,
                }
            }
            BlockKind::Output => BlockParams::Output {
                g: a.num("g", Some(1.0))?,
            },
            BlockKind::Input | BlockKind::Probe => unreachable!("rejected above"),
        };
        if let Some((key, span, _)) = a.args.first() {
            return Err(Diagnostic::error(
                Code::Param,
                Location::Patch,
                format!("{kind} has no parameter `{key}`"),
            )
            .at(*span));
        }
        params.check().map_err(|msg| {
            Diagnostic::error(Code::Param, Location::Patch, format!("{kind}: {msg}")).at(a.span)
        })?;
        Ok(params)
    }

    fn finish(mut self) -> Result<Patch, Vec<Diagnostic>> {
        let mut wire_spans = Vec::new();
        let pending: Vec<PendingWire> = self.wires.drain(..).chain(self.probe_wires.drain(..)).collect();
        for w in pending {
            let port = match self.patch.block(&w.to) {
                Some(block) => match (w.port_name.as_str(), w.port_index) {
                    ("in", idx) => idx.unwrap_or(0),
                    (alias, None) => match block.params.port_alias(alias) {
                        Some(i) => i,
                        None => {
                            self.diags.push(
                                Diagnostic::error(
                                    Code::Port,
                                    Location::Patch,
                                    format!("{} `{}` has no port `{alias}`", block.kind(), w.to),
                                )
                                .at(w.to_span),
                            );
                            continue;
                        }
                    },
                    (alias, Some(_)) => {
                        self.diags.push(
                            Diagnostic::error(
                                Code::Port,
                                Location::Patch,
                                format!("named port `{alias}` takes no index"),
                            )
                            .at(w.to_span),
                        );
                        continue;
                    }
                },
                None => w.port_index.unwrap_or(0),
            };
            self.patch.wires.push(Wire {
                from: w.from,
                to: w.to,
                port,
            });
            wire_spans.push((w.from_span, w.to_span));
        }
        let header = self.header_span.unwrap_or(SourceSpan::new(1, 1, 1));
        for d in validate_patch(&self.patch) {
            let span = match d.location {
                Location::Patch => header,
                Location::Block(i) => self.block_spans[i],
                Location::WireSource(i) => wire_spans[i].0,
                Location::WireTarget(i) => wire_spans[i].1,
                Location::Output(i) => self.output_spans[i],
            };
            self.diags.push(d.at(span));
        }
        if has_errors(&self.diags) {
            Err(self.diags)
        } else {
            Ok(self.patch)
        }
    }
}

fn join(a: SourceSpan, b: SourceSpan) -> SourceSpan {
    SourceSpan::new(a.line, a.column, b.column + b.length - a.column)
}

struct Args {
    args: Vec<(String, SourceSpan, Value)>,
    kind: BlockKind,
    span: SourceSpan,
}

impl Args {
    fn take(&mut self, key: &str) -> Option<(SourceSpan, Value)> {
        let i = self.args.iter().position(|(k, _, _)| k == key)?;
        let (_, s, v) = self.args.remove(i);
        Some((s, v))
    }

    fn err(&self, msg: impl Into<String>) -> Diagnostic {
        Diagnostic::error(Code::Param, Location::Patch, format!("{}: {}", self.kind, msg.into()))
            .at(self.span)
    }

    fn num(&mut self, key: &str, default: Option<f64>) -> Result<f64, Diagnostic> {
        match self.take(key) {
            Some((_, Value::Num(v, _))) => Ok(v),
            Some((_, Value::Int(v, _))) => Ok(v as f64),
            Some((_, Value::Word(w, s))) => Err(Diagnostic::error(
                Code::UnknownId,
                Location::Patch,
                format!("unknown parameter `{w}`"),
            )
            .at(s)),
            Some((_, v)) => Err(Diagnostic::error(
                Code::Param,
                Location::Patch,
                format!("`{key}` expects a number"),
            )
            .at(v.span())),
            None => default.ok_or_else(|| self.err(format!("missing required parameter `{key}`"))),
        }
    }

    fn list(&mut self, key: &str) -> Result<Vec<f64>, Diagnostic> {
        match self.take(key) {
            Some((_, Value::List(v, _))) => Ok(v),
            Some((_, Value::Num(v, _))) => Ok(vec![v]),
            Some((_, Value::Int(v, _))) => Ok(vec![v as f64]),
            Some((_, Value::Word(w, s))) => Err(Diagnostic::error(
                Code::UnknownId,
                Location::Patch,
                format!("unknown parameter `{w}`"),
            )
            .at(s)),
            None => Err(self.err(format!("missing required parameter `{key}`"))),
        }
    }

    fn word<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, Diagnostic> {
        match self.take(key) {
            Some((_, Value::Word(w, s))) => w.parse().map_err(|_| {
                Diagnostic::error(Code::Param, Location::Patch, format!("invalid `{key}` value `{w}`"))
                    .at(s)
            }),
            Some((_, v)) => Err(Diagnostic::error(
                Code::Param,
                Location::Patch,
                format!("`{key}` expects a keyword"),
            )
            .at(v.span())),
            None => Ok(default),
        }
    }

    fn int(&mut self, key: &str, default: u64) -> Result<u64, Diagnostic> {
        match self.take(key) {
            Some((_, Value::Int(v, _))) => Ok(v),
            Some((_, Value::Num(v, _))) if v >= 0.0 && v.fract() == 0.0 && v < 1.8e19 => Ok(v as u64),
            Some((_, v)) => Err(Diagnostic::error(
                Code::Param,
                Location::Patch,
                format!("`{key}` expects a non-negative integer"),
            )
            .at(v.span())),
            None => Ok(default),
        }
    }
}

fn list(values: &[f64]) -> String {
    let items: Vec<String> = values.iter().map(|v| format_number(*v)).collect();
    format!("[{}]", items.join(", "))
}

fn block_expr(params: &BlockParams) -> String {
    let n = format_number;
    match params {
        BlockParams::Atten { a } => format!("atten(a={})", n(*a)),
        BlockParams::Gain { k } => format!("gain(k={})", n(*k)),
        BlockParams::Summer { k } => format!("summer(k={})", list(k)),
        BlockParams::Integrator { k, ic } => format!("integrator(k={}, ic={})", list(k), n(*ic)),
        BlockParams::Multiplier { s } => format!("multiplier(s={})", n(*s)),
        BlockParams::Const { v } => format!("const(v={})", n(*v)),
        BlockParams::Osc { shape, f_ref, amp } => {
            format!("osc(shape={}, f_ref={}, amp={})", shape.name(), n(*f_ref), n(*amp))
        }
        BlockParams::Noise { seed, amp } => format!("noise(seed={seed}, amp={})", n(*amp)),
        BlockParams::Env {
            attack,
            decay,
            sustain,
            release,
            amp,
        } => format!(
            "env(a={}, d={}, s={}, r={}, amp={})",
            n(*attack),
            n(*decay),
            n(*sustain),
            n(*release),
            n(*amp)
        ),
        BlockParams::Seq { points, mode } => {
            let flat: Vec<f64> = points.iter().flat_map(|(t, v)| [*t, *v]).collect();
            format!("seq(points={}, mode={})", list(&flat), mode.name())
        }
        BlockParams::Cmp { hi, lo } => format!("cmp(hi={}, lo={})", n(*hi), n(*lo)),
        BlockParams::Lim { lo, hi } => format!("lim(lo={}, hi={})", n(*lo), n(*hi)),
        BlockParams::Bbd { stages, f_clk } => format!("bbd(stages={stages}, f_clk={})", n(*f_clk)),
        BlockParams::Output { g } => format!("output(g={})", n(*g)),
        BlockParams::Input | BlockParams::Probe => unreachable!("not a block statement"),
    }
}

fn source_ref(patch: &Patch, id: &str) -> String {
    match patch.block(id) {
        Some(b) if b.kind() == BlockKind::Input => id.to_string(),
        _ => format!("{id}.out"),
    }
}

/// Canonical source text: header, parameters, declarations in order, then
/// wires, outputs and `end`. Wires into probes are folded into the probe
/// statements.
pub fn serialize_patch(patch: &Patch) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "patch {}", patch.name);
    for (name, v) in &patch.params {
        let _ = writeln!(out, "param {name} = {}", format_number(*v));
    }
    for block in &patch.blocks {
        match block.kind() {
            BlockKind::Input => {
                let _ = writeln!(out, "input {}", block.id);
            }
            BlockKind::Probe => {
                if let Some(src) = patch.driver(&block.id, 0) {
                    let _ = writeln!(out, "probe {} = {}", block.id, source_ref(patch, src));
                }
            }
            _ => {
                let _ = writeln!(out, "block {} = {}", block.id, block_expr(&block.params));
            }
        }
    }
    for w in &patch.wires {
        if patch.block(&w.to).map(|b| b.kind()) == Some(BlockKind::Probe) {
            continue;
        }
        let _ = writeln!(out, "wire {} -> {}.in[{}]", source_ref(patch, &w.from), w.to, w.port);
    }
    for o in &patch.outputs {
        let _ = writeln!(out, "output {o}");
    }
    out.push_str("end\n");
    out
}

/// Reorders wires into the order the parser produces: ordinary wires first,
/// then one wire per probe in probe declaration order.
pub fn canonicalize(patch: &mut Patch) {
    let order: Vec<String> = patch.probe_names().map(str::to_string).collect();
    let (mut probe_wires, plain): (Vec<Wire>, Vec<Wire>) =
        patch.wires.drain(..).partition(|w| order.contains(&w.to));
    probe_wires.sort_by_key(|w| order.iter().position(|p| *p == w.to));
    patch.wires = plain;
    patch.wires.extend(probe_wires);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::block::DEFAULT_RAIL;
    use proptest::prelude::*;

    const LOWPASS: &str = "\
# first-order lowpass with a=1, b=0.5
patch lowpass
param a = 1.0
param b = 0.5
input x
block s1 = summer(k=[2.0, 2.0])        # 1/b = 2
block i1 = integrator(k=[1.0], ic=0.0)
wire x -> s1.in[0]
wire i1.out -> s1.in[1]
wire s1.out -> i1.in[0]
probe y = i1.out
end
";

    fn errors(src: &str) -> Vec<Diagnostic> {
        parse_patch(src).unwrap_err()
    }

    #[test]
    fn parses_format_example() {
        let p = parse_patch(LOWPASS).unwrap();
        assert_eq!(p.name, "lowpass");
        assert_eq!(p.blocks.len(), 4);
        assert_eq!(p.wires.len(), 4);
        assert_eq!(p.probe_names().count(), 1);
        assert_eq!(p.params, vec![("a".to_string(), 1.0), ("b".to_string(), 0.5)]);
        assert_eq!(p.driver("y", 0), Some("i1"));
    }

    #[test]
    fn negative_gain_is_param_error() {
        let d = errors("patch p\nblock g = gain(k=-1)\nend\n");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, Code::Param);
        assert_eq!(d[0].span.unwrap().line, 2);
    }

    #[test]
    fn unknown_target_has_span() {
        let d = errors("patch p\nblock a = const(v=1.0)\nwire a.out -> b.in\nend\n");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, Code::UnknownId);
        let span = d[0].span.unwrap();
        assert_eq!((span.line, span.column), (3, 15));
        assert_eq!(span.length, 4);
    }

    #[test]
    fn port_arity_error_located_at_wire() {
        let src = LOWPASS.replace("wire x -> s1.in[0]", "wire x -> s1.in[5]");
        let d = errors(&src);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].code, Code::Port);
        assert_eq!(d[0].span.unwrap().line, 8);
    }

    #[test]
    fn algebraic_loop_rejected() {
        let d = errors("patch p\nblock s = summer(k=[1.0])\nwire s.out -> s.in[0]\nend\n");
        assert_eq!(d[0].code, Code::AlgebraicLoop);
        assert_eq!(d[0].span.unwrap().line, 3);
    }

    #[test]
    fn syntax_errors_report_their_line() {
        let d = errors("patch p\nblock = gain()\nwire a ->\nfrobnicate\nend\n");
        let lines: Vec<usize> = d.iter().map(|d| d.span.unwrap().line).collect();
        assert_eq!(lines, vec![2, 3, 4]);
        assert!(d.iter().all(|d| d.code == Code::Syntax));
    }

    #[test]
    fn duplicate_ids() {
        let d = errors("patch p\ninput x\nblock x = gain()\nend\n");
        assert_eq!(d[0].code, Code::DuplicateId);
        assert_eq!(d[0].span.unwrap().line, 3);
    }

    #[test]
    fn header_and_end_required() {
        assert_eq!(errors("input x\nend\n")[0].code, Code::Syntax);
        assert_eq!(errors("patch p\ninput x\n")[0].code, Code::Syntax);
        assert_eq!(errors("patch p\nend\ninput x\n")[0].code, Code::Syntax);
    }

    #[test]
    fn param_references_and_semitones() {
        let p = parse_patch(
            "patch p\nparam k = 0.25\nblock g = gain(k=k)\nblock h = gain(k=semi(7))\nblock n = noise(seed=18446744073709551615)\nend\n",
        )
        .unwrap();
        assert_eq!(p.blocks[0].params, BlockParams::Gain { k: 0.25 });
        assert_eq!(p.blocks[1].params, BlockParams::Gain { k: 7.0 / 12.0 });
        assert_eq!(
            p.blocks[2].params,
            BlockParams::Noise {
                seed: u64::MAX,
                amp: 1.0
            }
        );
        let d = errors("patch p\nblock g = gain(k=kk)\nend\n");
        assert_eq!(d[0].code, Code::UnknownId);
    }

    #[test]
    fn named_ports() {
        let p = parse_patch(
            "patch p\ninput x\ninput y\nblock m = multiplier()\nblock o = osc(shape=saw)\nwire x -> m.a\nwire y -> m.b\nwire m.out -> o.cv\nprobe out = o.out\nend\n",
        )
        .unwrap();
        assert_eq!(p.wires[1].port, 1);
        assert_eq!(p.wires[2].port, 0);
        let d = errors("patch p\ninput x\nblock g = gain()\nwire x -> g.gate\nend\n");
        assert_eq!(d[0].code, Code::Port);
    }

    #[test]
    fn serialize_canonical_form() {
        let p = parse_patch(LOWPASS).unwrap();
        let text = serialize_patch(&p);
        assert_eq!(
            text,
            "patch lowpass\nparam a = 1.0\nparam b = 0.5\ninput x\nblock s1 = summer(k=[2.0, 2.0])\nblock i1 = integrator(k=[1.0], ic=0.0)\nprobe y = i1.out\nwire x -> s1.in[0]\nwire i1.out -> s1.in[1]\nwire s1.out -> i1.in[0]\nend\n"
        );
        assert_eq!(parse_patch(&text).unwrap(), p);
    }

    #[test]
    fn no_wires_serializes_to_declarations() {
        let text = "patch solo\nblock c = const(v=1.5)\nend\n";
        assert_eq!(serialize_patch(&parse_patch(text).unwrap()), text);
    }

    #[test]
    fn canonicalize_moves_probe_wires_last() {
        let mut p = Patch::new("c");
        p.add_block("c", BlockParams::Const { v: 1.0 })
            .probe("y", "c")
            .add_block("g", BlockParams::Gain { k: 1.0 })
            .wire("c", "g", 0);
        canonicalize(&mut p);
        assert_eq!(p.wires[0].to, "g");
        assert_eq!(parse_patch(&serialize_patch(&p)).unwrap(), p);
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![
            -1e6..1e6f64,
            any::<f64>().prop_filter("finite", |v| v.is_finite()),
        ]
    }

    fn params() -> impl Strategy<Value = BlockParams> {
        let mag = || prop_oneof![0.0..100.0f64, Just(0.1), Just(1e-300)];
        prop_oneof![
            (0.0..=1.0f64).prop_map(|a| BlockParams::Atten { a }),
            mag().prop_map(|k| BlockParams::Gain { k }),
            prop::collection::vec(mag(), 1..5).prop_map(|k| BlockParams::Summer { k }),
            (prop::collection::vec(mag(), 1..4), finite())
                .prop_map(|(k, ic)| BlockParams::Integrator { k, ic }),
            finite().prop_map(|s| BlockParams::Multiplier { s }),
            finite().prop_map(|v| BlockParams::Const { v }),
            (any::<u64>(), mag()).prop_map(|(seed, amp)| BlockParams::Noise { seed, amp }),
            (finite(), finite()).prop_map(|(hi, lo)| BlockParams::Cmp { hi, lo }),
            (1u32..100_000, 1.0..1e6f64).prop_map(|(stages, f_clk)| BlockParams::Bbd { stages, f_clk }),
            finite().prop_map(|g| BlockParams::Output { g }),
        ]
    }

    proptest! {
        #[test]
        fn round_trip_random_patches(blocks in prop::collection::vec(params(), 1..8), seed in any::<u64>()) {
            let mut p = Patch::new("rand");
            p.params.push(("gain".into(), DEFAULT_RAIL));
            p.add_input("x");
            for (i, params) in blocks.iter().enumerate() {
                p.add_block(format!("b{i}"), params.clone());
            }
            // a chain from the input through every block with a free port 0
            let mut prev = "x".to_string();
            for (i, params) in blocks.iter().enumerate() {
                if params.input_arity() > 0 && !matches!(params, BlockParams::Output { .. }) {
                    p.wire(prev.clone(), format!("b{i}"), (seed as usize + i) % params.input_arity());
                    prev = format!("b{i}");
                }
            }
            p.probe("y", prev);
            prop_assert!(validate_patch(&p).is_empty());
            let text = serialize_patch(&p);
            let back = parse_patch(&text).unwrap();
            prop_assert_eq!(&back, &p);
            prop_assert_eq!(serialize_patch(&back), text);
        }
    }
}
