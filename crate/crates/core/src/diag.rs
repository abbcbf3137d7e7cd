//! Diagnostics shared by the patch validator, the patch language and the
//! equation compiler.

use std::fmt;

/// Stable machine-readable diagnostic codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Code {
    Syntax,
    DuplicateId,
    UnknownId,
    Param,
    Port,
    Arity,
    DuplicateDriver,
    AlgebraicLoop,
    Nonlinear,
    Undefined,
    Order,
    Coeff,
    Rail,
}

impl Code {
    pub fn as_str(self) -> &'static str {
        match self {
            Code::Syntax => "E_SYNTAX",
            Code::DuplicateId => "E_DUPLICATE_ID",
            Code::UnknownId => "E_UNKNOWN_ID",
            Code::Param => "E_PARAM",
            Code::Port => "E_PORT",
            Code::Arity => "E_ARITY",
            Code::DuplicateDriver => "E_DUPLICATE_DRIVER",
            Code::AlgebraicLoop => "E_ALGEBRAIC_LOOP",
            Code::Nonlinear => "E_NONLINEAR",
            Code::Undefined => "E_UNDEFINED",
            Code::Order => "E_ORDER",
            Code::Coeff => "E_COEFF",
            Code::Rail => "W_RAIL",
        }
    }
}

impl fmt::Display for Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Severity {
    Error,
    Warning,
}

/// 1-based position of a diagnostic inside a source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SourceSpan {
    pub line: usize,
    pub column: usize,
    pub length: usize,
}

impl SourceSpan {
    pub fn new(line: usize, column: usize, length: usize) -> Self {
        Self {
            line,
            column,
            length,
        }
    }
}

/// Where in an in-memory patch a validation problem sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Location {
    Patch,
    Block(usize),
    WireSource(usize),
    WireTarget(usize),
    Output(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub code: Code,
    pub message: String,
    pub location: Location,
    pub span: Option<SourceSpan>,
}

impl Diagnostic {
    pub fn error(code: Code, location: Location, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            code,
            message: message.into(),
            location,
            span: None,
        }
    }

    pub fn warning(code: Code, location: Location, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            ..Self::error(code, location, message)
        }
    }

    pub fn at(mut self, span: SourceSpan) -> Self {
        self.span = Some(span);
        self
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        if let Some(span) = self.span {
            write!(f, "{}:{}: ", span.line, span.column)?;
        }
        write!(f, "{sev}[{}]: {}", self.code, self.message)
    }
}

pub fn has_errors(diags: &[Diagnostic]) -> bool {
    diags.iter().any(Diagnostic::is_error)
}
