//! Line-oriented text formats for the toolkit's objects, with canonical
//! printers (`parse ∘ print = id`) and span-carrying parse errors.
//!
//! A file holds one or more documents. Each document starts with a header
//! line `<kind> <name>` and continues with keyword-led section lines until
//! the next header. Blank lines and lines starting with `#` are ignored.
//! The six kinds:
//!
//! ```text
//! machine <name>      change/states/obs/actions(or fiber)/view/update
//! wiring <name>       pattern parallel|cascade|feedback|explicit + carriers
//! bool-cert <name>    obs/actions/gamma/alpha pairs/optional phi
//! quant-cert <name>   obs-dim/act-dim/gamma/alpha   (interface form)
//!                     phi/alpha/gamma/lambda        (Lyapunov form)
//! ode <name>          state-dim/input-dim/obs-dim/field/view/x0/a0/domain/input-domain
//! simulation <name>   src-*/dst-* machine sections + chart-obs/chart-act/map
//! ```
//!
//! Symbols are atoms (`s0`, `ok`) or parenthesized pairs (`(a,b)`,
//! left-nested for products). Arithmetic expressions follow the usual
//! precedence (`^` > unary `-` > `*`,`/` > `+`,`-`, all left-associative)
//! with variables `x1…`, `a1…`, `o1…` and functions `abs`, `sin`, `cos`,
//! `exp`, `min`, `max`. Piecewise-linear functions are written
//! `pl [(0,0),(1,2)] slope 0.5`, with `id` and `zero` as aliases.
//!
//! Everything a document could violate structurally (duplicate symbols,
//! fiber mismatches, ill-formed certificates, non-equilibria, …) is checked
//! at parse time, so a parsed document is a valid domain object. Printing is
//! deterministic: carriers print in declaration order and tables in carrier
//! order.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::certbool::{InterfaceCertificate, MachineCertificate, Predicate};
use crate::error::AglError;
use crate::expr::{check_vars, fmt_float, var_limits, Expr, VarKind};
use crate::lens::{identity_lens, make_cascade, make_feedback, Chart, Interface, Lens};
use crate::machine::{Change, ChangeKind, Machine, Simulation};
use crate::ode::{LyapunovCandidate, OpenODE};
use crate::plfun::{id_minus_in_kinf, PLFun};
use crate::quant::QuantCertificate;
use crate::symbol::{FiniteSet, Symbol};

/// Location of a token inside an input file; lines and columns are 1-based
/// and columns count characters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SourceSpan {
    pub file: String,
    pub line: usize,
    pub column: usize,
    pub length: usize,
}

impl std::fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.file, self.line, self.column)
    }
}

/// A lexical or structural error, anchored to the offending token.
#[derive(Clone, Debug, PartialEq)]
pub struct ParseError {
    pub span: SourceSpan,
    pub message: String,
    /// Tokens that would have been accepted at the error position, when the
    /// parser knows them.
    pub expected: Vec<String>,
}

impl std::fmt::Display for ParseError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.span, self.message)
    }
}

impl std::error::Error for ParseError {}

fn perr(
    file: &str,
    line: usize,
    column: usize,
    length: usize,
    message: impl Into<String>,
) -> ParseError {
    ParseError {
        span: SourceSpan {
            file: file.to_string(),
            line,
            column,
            length: length.max(1),
        },
        message: message.into(),
        expected: Vec::new(),
    }
}

// ---------------------------------------------------------------------------
// Character-level scanner over one line (columns are char-accurate).

struct Scanner<'s> {
    file: &'s str,
    line: usize,
    chars: Vec<char>,
    pos: usize,
}

impl<'s> Scanner<'s> {
    fn new(file: &'s str, line: usize, text: &str) -> Self {
        Scanner {
            file,
            line,
            chars: text.chars().collect(),
            pos: 0,
        }
    }

    fn resume(file: &'s str, line: usize, text: &str, pos: usize) -> Self {
        let mut s = Scanner::new(file, line, text);
        s.pos = pos;
        s
    }

    fn col(&self) -> usize {
        self.pos + 1
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.chars.len()
    }

    fn err(&self, column: usize, length: usize, message: impl Into<String>) -> ParseError {
        perr(self.file, self.line, column, length, message)
    }

    fn err_here(&self, message: impl Into<String>, expected: Vec<String>) -> ParseError {
        let mut e = self.err(self.col(), 1, message);
        e.expected = expected;
        e
    }

    fn expect_char(&mut self, c: char) -> Result<(), ParseError> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err_here(format!("expected \"{c}\""), vec![c.to_string()]))
        }
    }

    fn expect_end(&mut self) -> Result<(), ParseError> {
        if self.at_end() {
            Ok(())
        } else {
            let len = self.chars.len() - self.pos;
            Err(self.err(self.col(), len, "unexpected trailing input"))
        }
    }

    /// Keyword-ish token: letters, digits, `-`, `_`.
    fn word(&mut self) -> Result<(String, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self
            .peek()
            .is_some_and(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
        {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err_here("expected a word", vec![]));
        }
        Ok((self.chars[start..self.pos].iter().collect(), start + 1))
    }

    /// Symbol: an atom or a parenthesized pair `(sym,sym)`.
    fn symbol(&mut self) -> Result<Symbol, ParseError> {
        self.skip_ws();
        match self.peek() {
            Some('(') => {
                self.pos += 1;
                let left = self.symbol()?;
                self.expect_char(',')?;
                let right = self.symbol()?;
                self.expect_char(')')?;
                Ok(Symbol::pair(left, right))
            }
            Some(c) if is_atom_char(c) => {
                let start = self.pos;
                while self.peek().is_some_and(is_atom_char) {
                    self.pos += 1;
                }
                Ok(Symbol::atom(
                    self.chars[start..self.pos].iter().collect::<String>(),
                ))
            }
            _ => Err(self.err_here("expected a symbol", vec!["symbol".to_string()])),
        }
    }

    /// Symbol plus its (column, length) for precise error reporting.
    fn symbol_spanned(&mut self) -> Result<(Symbol, usize, usize), ParseError> {
        self.skip_ws();
        let start = self.pos;
        let s = self.symbol()?;
        Ok((s, start + 1, self.pos - start))
    }

    /// Whitespace-separated symbols until the end of the line.
    fn symbol_list(&mut self) -> Result<Vec<Symbol>, ParseError> {
        let mut out = Vec::new();
        while !self.at_end() {
            out.push(self.symbol()?);
        }
        Ok(out)
    }

    /// Decimal float: `-? digits (. digits)? ([eE] [+-]? digits)?`.
    fn float(&mut self) -> Result<f64, ParseError> {
        self.skip_ws();
        let start = self.pos;
        if self.peek() == Some('-') {
            self.pos += 1;
        }
        let int_start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == int_start {
            return Err(self.err_here("expected a number", vec!["number".to_string()]));
        }
        if self.peek() == Some('.') {
            self.pos += 1;
            let frac_start = self.pos;
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
            }
            if self.pos == frac_start {
                return Err(self.err_here("expected digits after the decimal point", vec![]));
            }
        }
        if matches!(self.peek(), Some('e' | 'E')) {
            self.pos += 1;
            if matches!(self.peek(), Some('+' | '-')) {
                self.pos += 1;
            }
            let exp_start = self.pos;
            while self.peek().is_some_and(|c| c.is_ascii_digit()) {
                self.pos += 1;
            }
            if self.pos == exp_start {
                return Err(self.err_here("expected exponent digits", vec![]));
            }
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse()
            .map_err(|_| self.err(start + 1, self.pos - start, format!("invalid number `{text}`")))
    }

    fn float_list(&mut self) -> Result<Vec<f64>, ParseError> {
        let mut out = Vec::new();
        while !self.at_end() {
            out.push(self.float()?);
        }
        Ok(out)
    }

    /// Nonnegative decimal integer.
    fn usize_value(&mut self) -> Result<usize, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return Err(self.err_here("expected a nonnegative integer", vec![]));
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse()
            .map_err(|_| self.err(start + 1, self.pos - start, format!("integer `{text}` is out of range")))
    }

    /// Signed integer exponent for `^`.
    fn i32_value(&mut self) -> Result<i32, ParseError> {
        self.skip_ws();
        let start = self.pos;
        if self.peek() == Some('-') {
            self.pos += 1;
        }
        let digit_start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == digit_start {
            return Err(self.err_here("expected an integer exponent", vec![]));
        }
        let text: String = self.chars[start..self.pos].iter().collect();
        text.parse().map_err(|_| {
            self.err(
                start + 1,
                self.pos - start,
                format!("exponent `{text}` is out of range for a 32-bit integer"),
            )
        })
    }
}

fn is_atom_char(c: char) -> bool {
    !c.is_whitespace() && !matches!(c, '(' | ')' | ',' | '{' | '}' | '#')
}

// ---------------------------------------------------------------------------
// Expression grammar.

fn expr_add(sc: &mut Scanner) -> Result<Expr, ParseError> {
    let mut lhs = expr_mul(sc)?;
    loop {
        sc.skip_ws();
        match sc.peek() {
            Some('+') => {
                sc.pos += 1;
                lhs = Expr::Add(Box::new(lhs), Box::new(expr_mul(sc)?));
            }
            Some('-') => {
                sc.pos += 1;
                lhs = Expr::Sub(Box::new(lhs), Box::new(expr_mul(sc)?));
            }
            _ => return Ok(lhs),
        }
    }
}

fn expr_mul(sc: &mut Scanner) -> Result<Expr, ParseError> {
    let mut lhs = expr_unary(sc)?;
    loop {
        sc.skip_ws();
        match sc.peek() {
            Some('*') => {
                sc.pos += 1;
                lhs = Expr::Mul(Box::new(lhs), Box::new(expr_unary(sc)?));
            }
            Some('/') => {
                sc.pos += 1;
                lhs = Expr::Div(Box::new(lhs), Box::new(expr_unary(sc)?));
            }
            _ => return Ok(lhs),
        }
    }
}

fn expr_unary(sc: &mut Scanner) -> Result<Expr, ParseError> {
    sc.skip_ws();
    if sc.peek() == Some('-') {
        sc.pos += 1;
        Ok(Expr::Neg(Box::new(expr_unary(sc)?)))
    } else {
        expr_power(sc)
    }
}

fn expr_power(sc: &mut Scanner) -> Result<Expr, ParseError> {
    let base = expr_atom(sc)?;
    sc.skip_ws();
    if sc.peek() == Some('^') {
        sc.pos += 1;
        let n = sc.i32_value()?;
        Ok(Expr::Pow(Box::new(base), n))
    } else {
        Ok(base)
    }
}

fn expr_atom(sc: &mut Scanner) -> Result<Expr, ParseError> {
    sc.skip_ws();
    match sc.peek() {
        Some('(') => {
            sc.pos += 1;
            let inner = expr_add(sc)?;
            sc.expect_char(')')?;
            Ok(inner)
        }
        Some(c) if c.is_ascii_digit() => Ok(Expr::Const(sc.float()?)),
        Some(c) if c.is_ascii_alphabetic() => {
            let start = sc.pos;
            while sc.peek().is_some_and(|c| c.is_ascii_alphabetic()) {
                sc.pos += 1;
            }
            let name: String = sc.chars[start..sc.pos].iter().collect();
            let kind = match name.as_str() {
                "x" => Some(VarKind::State),
                "a" => Some(VarKind::Input),
                "o" => Some(VarKind::Obs),
                _ => None,
            };
            if let Some(kind) = kind {
                if sc.peek().is_some_and(|c| c.is_ascii_digit()) {
                    let idx = sc.usize_value()?;
                    if idx == 0 {
                        return Err(sc.err(
                            start + 1,
                            sc.pos - start,
                            "variable indices start at 1",
                        ));
                    }
                    return Ok(Expr::Var(kind, idx));
                }
                return Err(sc.err(
                    start + 1,
                    name.chars().count(),
                    format!("expected a variable index after `{name}`"),
                ));
            }
            match name.as_str() {
                "abs" | "sin" | "cos" | "exp" => {
                    sc.expect_char('(')?;
                    let arg = Box::new(expr_add(sc)?);
                    sc.expect_char(')')?;
                    Ok(match name.as_str() {
                        "abs" => Expr::Abs(arg),
                        "sin" => Expr::Sin(arg),
                        "cos" => Expr::Cos(arg),
                        _ => Expr::Exp(arg),
                    })
                }
                "min" | "max" => {
                    sc.expect_char('(')?;
                    let left = Box::new(expr_add(sc)?);
                    sc.expect_char(',')?;
                    let right = Box::new(expr_add(sc)?);
                    sc.expect_char(')')?;
                    Ok(if name == "min" {
                        Expr::Min(left, right)
                    } else {
                        Expr::Max(left, right)
                    })
                }
                _ => Err(sc.err(
                    start + 1,
                    name.chars().count(),
                    format!("unknown identifier `{name}`"),
                )),
            }
        }
        _ => Err(sc.err_here(
            "expected an expression",
            vec![
                "number".to_string(),
                "variable".to_string(),
                "function".to_string(),
                "(".to_string(),
                "-".to_string(),
            ],
        )),
    }
}

/// Parse a standalone arithmetic expression.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let mut sc = Scanner::new("<expr>", 1, text);
    let e = expr_add(&mut sc)?;
    sc.expect_end()?;
    Ok(e)
}

// ---------------------------------------------------------------------------
// Piecewise-linear function notation.

fn plfun_value(sc: &mut Scanner) -> Result<PLFun, ParseError> {
    sc.skip_ws();
    let (word, col) = sc.word()?;
    match word.as_str() {
        "id" => Ok(PLFun::identity()),
        "zero" => Ok(PLFun::zero()),
        "pl" => {
            sc.expect_char('[')?;
            let mut breakpoints = Vec::new();
            loop {
                sc.expect_char('(')?;
                let r = sc.float()?;
                sc.expect_char(',')?;
                let v = sc.float()?;
                sc.expect_char(')')?;
                breakpoints.push((r, v));
                sc.skip_ws();
                if sc.peek() == Some(',') {
                    sc.pos += 1;
                } else {
                    break;
                }
            }
            sc.expect_char(']')?;
            let (kw, kw_col) = sc.word()?;
            if kw != "slope" {
                return Err(sc.err(kw_col, kw.chars().count(), "expected `slope`"));
            }
            let slope = sc.float()?;
            PLFun::new(breakpoints, slope)
                .map_err(|e| sc.err(col, sc.pos + 1 - col, e.to_string()))
        }
        other => Err(sc.err(
            col,
            other.chars().count(),
            "expected `id`, `zero`, or `pl [(r,v),...] slope s`",
        )),
    }
}

/// Canonical text for a piecewise-linear function (`id` and `zero` print as
/// their aliases).
pub fn plfun_to_string(f: &PLFun) -> String {
    if *f == PLFun::identity() {
        return "id".to_string();
    }
    if *f == PLFun::zero() {
        return "zero".to_string();
    }
    let pairs: Vec<String> = f
        .breakpoints()
        .iter()
        .map(|&(r, v)| format!("({},{})", fmt_float(r), fmt_float(v)))
        .collect();
    format!("pl [{}] slope {}", pairs.join(","), fmt_float(f.final_slope()))
}

/// Parse the textual form produced by [`plfun_to_string`].
pub fn parse_plfun(text: &str) -> Result<PLFun, ParseError> {
    let mut sc = Scanner::new("<plfun>", 1, text);
    let f = plfun_value(&mut sc)?;
    sc.expect_end()?;
    Ok(f)
}

// ---------------------------------------------------------------------------
// Documents.

/// A parsed, validated document.
#[derive(Clone, Debug, PartialEq)]
pub enum Document {
    Machine(MachineDoc),
    Wiring(WiringDoc),
    BoolCert(BoolCertDoc),
    QuantCert(QuantCertDoc),
    Ode(OdeDoc),
    Simulation(SimulationDoc),
}

impl Document {
    pub fn kind(&self) -> &'static str {
        match self {
            Document::Machine(_) => "machine",
            Document::Wiring(_) => "wiring",
            Document::BoolCert(_) => "bool-cert",
            Document::QuantCert(_) => "quant-cert",
            Document::Ode(_) => "ode",
            Document::Simulation(_) => "simulation",
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Document::Machine(d) => &d.name,
            Document::Wiring(d) => &d.name,
            Document::BoolCert(d) => &d.name,
            Document::QuantCert(d) => &d.name,
            Document::Ode(d) => &d.name,
            Document::Simulation(d) => &d.name,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MachineDoc {
    pub name: String,
    pub machine: Machine,
}

impl MachineDoc {
    pub fn new(name: impl Into<String>, machine: Machine) -> Self {
        MachineDoc {
            name: name.into(),
            machine,
        }
    }
}

/// How a wiring lens was described; the carriers are kept so the document
/// prints back in the same shape it was written in.
#[derive(Clone, Debug, PartialEq)]
pub enum WiringSpec {
    Parallel {
        obs1: FiniteSet,
        actions1: FiniteSet,
        obs2: FiniteSet,
        actions2: FiniteSet,
    },
    Cascade {
        actions: FiniteSet,
        obs1: FiniteSet,
        mid: FiniteSet,
        obs2: FiniteSet,
    },
    Feedback {
        actions: FiniteSet,
        mid: FiniteSet,
        obs: FiniteSet,
    },
    /// Fully tabulated lens between simple interfaces; the tables live in
    /// the lens itself.
    Explicit {
        src_obs: FiniteSet,
        src_actions: FiniteSet,
        dst_obs: FiniteSet,
        dst_actions: FiniteSet,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct WiringDoc {
    pub name: String,
    pub spec: WiringSpec,
    pub lens: Lens,
}

/// A boolean certificate in tabular form over a simple interface: the
/// guarantee's true set and the assumption's true pairs (stored sorted in
/// carrier order). `phi` is an optional machine-spec true set whose carrier
/// is only known once the certificate is bound to a machine.
#[derive(Clone, Debug, PartialEq)]
pub struct BoolCertDoc {
    pub name: String,
    pub obs: FiniteSet,
    pub actions: FiniteSet,
    pub gamma: Vec<Symbol>,
    pub alpha: Vec<(Symbol, Symbol)>,
    pub phi: Option<Vec<Symbol>>,
}

impl BoolCertDoc {
    pub fn interface(&self) -> Interface {
        Interface::simple(self.obs.clone(), self.actions.clone())
    }

    pub fn to_interface_certificate(&self) -> Result<InterfaceCertificate, AglError> {
        let gamma = Predicate::from_true_set(self.obs.clone(), &self.gamma)?;
        let mut pairs = BTreeSet::new();
        for (o, a) in &self.alpha {
            pairs.insert((self.obs.require(o)?, self.actions.require(a)?));
        }
        InterfaceCertificate::from_fns(self.interface(), gamma, |o, a| {
            let oi = self.obs.position(o).expect("observation in carrier");
            let ai = self.actions.position(a).expect("action in carrier");
            pairs.contains(&(oi, ai))
        })
    }

    /// Bind to a machine: `phi` becomes the spec predicate over its states.
    pub fn to_machine_certificate(&self, machine: &Machine) -> Result<MachineCertificate, AglError> {
        let phi = match &self.phi {
            Some(trues) => Predicate::from_true_set(machine.states().clone(), trues)?,
            None => {
                return Err(AglError::CarrierMismatch(format!(
                    "certificate `{}` has no `phi` line to serve as the machine spec",
                    self.name
                )))
            }
        };
        let icert = self.to_interface_certificate()?;
        MachineCertificate::new(machine.clone(), phi, icert)
    }

    /// Tabulate a machine certificate back into document form (the machine's
    /// interface must be simple).
    pub fn from_machine_certificate(
        name: impl Into<String>,
        mc: &MachineCertificate,
    ) -> Result<Self, AglError> {
        let iface = mc.icert().iface();
        let actions = iface.require_simple()?.clone();
        let obs = iface.obs().clone();
        let gamma = mc.icert().gamma().true_symbols().into_iter().cloned().collect();
        let mut alpha = Vec::new();
        for (oi, o) in obs.iter().enumerate() {
            for (ai, a) in actions.iter().enumerate() {
                if mc.icert().alpha_idx(oi, ai) {
                    alpha.push((o.clone(), a.clone()));
                }
            }
        }
        Ok(BoolCertDoc {
            name: name.into(),
            obs,
            actions,
            gamma,
            alpha,
            phi: Some(mc.phi().true_symbols().into_iter().cloned().collect()),
        })
    }
}

/// Quantitative certificates come in two shapes: interface bounds over
/// observation/action spaces, and Lyapunov candidates for an ODE.
#[derive(Clone, Debug, PartialEq)]
pub enum QuantCertBody {
    Interface(QuantCertificate),
    Lyapunov {
        phi: Expr,
        alpha: Expr,
        gamma: Expr,
        lambda: PLFun,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantCertDoc {
    pub name: String,
    pub body: QuantCertBody,
}

impl QuantCertDoc {
    pub fn to_quant_certificate(&self) -> Result<QuantCertificate, AglError> {
        match &self.body {
            QuantCertBody::Interface(c) => Ok(c.clone()),
            QuantCertBody::Lyapunov { .. } => Err(AglError::InvalidCandidate(format!(
                "certificate `{}` is a Lyapunov candidate, not an interface certificate",
                self.name
            ))),
        }
    }

    pub fn to_candidate(&self) -> Result<LyapunovCandidate, AglError> {
        match &self.body {
            QuantCertBody::Lyapunov {
                phi,
                alpha,
                gamma,
                lambda,
            } => Ok(LyapunovCandidate {
                phi: phi.clone(),
                alpha: alpha.clone(),
                gamma: gamma.clone(),
                lambda: lambda.clone(),
            }),
            QuantCertBody::Interface(_) => Err(AglError::InvalidCandidate(format!(
                "certificate `{}` is in interface form; a Lyapunov candidate needs phi/alpha/gamma/lambda",
                self.name
            ))),
        }
    }

    pub fn from_candidate(name: impl Into<String>, cand: &LyapunovCandidate) -> Self {
        QuantCertDoc {
            name: name.into(),
            body: QuantCertBody::Lyapunov {
                phi: cand.phi.clone(),
                alpha: cand.alpha.clone(),
                gamma: cand.gamma.clone(),
                lambda: cand.lambda.clone(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OdeDoc {
    pub name: String,
    pub ode: OpenODE,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationDoc {
    pub name: String,
    pub sim: Simulation,
}

// ---------------------------------------------------------------------------
// Splitting a file into documents.

const DOC_KINDS: [&str; 6] = [
    "machine",
    "wiring",
    "bool-cert",
    "quant-cert",
    "ode",
    "simulation",
];

struct Entry<'s> {
    kw: String,
    kw_col: usize,
    line: usize,
    text: &'s str,
    pos: usize,
}

struct DocLines<'s> {
    file: &'s str,
    kind: &'static str,
    name: String,
    header_line: usize,
    header_len: usize,
    entries: Vec<Entry<'s>>,
}

impl<'s> DocLines<'s> {
    fn header_err(&self, message: impl Into<String>) -> ParseError {
        perr(self.file, self.header_line, 1, self.header_len, message)
    }

    fn scan(&self, e: &Entry<'s>) -> Scanner<'s> {
        Scanner::resume(self.file, e.line, e.text, e.pos)
    }

    fn entry_err(&self, e: &Entry<'s>, message: impl Into<String>) -> ParseError {
        perr(self.file, e.line, e.kw_col, e.kw.chars().count(), message)
    }

    fn entries(&self, kw: &str) -> Vec<&Entry<'s>> {
        self.entries.iter().filter(|e| e.kw == kw).collect()
    }

    fn single(&self, kw: &str) -> Result<&Entry<'s>, ParseError> {
        let es = self.entries(kw);
        match es.len() {
            0 => Err(self.header_err(format!(
                "{} `{}` is missing its `{kw}` line",
                self.kind, self.name
            ))),
            1 => Ok(es[0]),
            _ => Err(self.entry_err(es[1], format!("duplicate `{kw}` line"))),
        }
    }

    fn at_most_one(&self, kw: &str) -> Result<Option<&Entry<'s>>, ParseError> {
        let es = self.entries(kw);
        match es.len() {
            0 => Ok(None),
            1 => Ok(Some(es[0])),
            _ => Err(self.entry_err(es[1], format!("duplicate `{kw}` line"))),
        }
    }

    fn check_allowed(&self, allowed: &[&str]) -> Result<(), ParseError> {
        for e in &self.entries {
            if !allowed.contains(&e.kw.as_str()) {
                return Err(self.entry_err(
                    e,
                    format!(
                        "unknown section `{}` in a {} document (expected one of: {})",
                        e.kw,
                        self.kind,
                        allowed.join(", ")
                    ),
                ));
            }
        }
        Ok(())
    }
}

fn split_documents<'s>(file: &'s str, text: &'s str) -> Result<Vec<DocLines<'s>>, ParseError> {
    let mut docs: Vec<DocLines<'s>> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let trimmed = line.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut sc = Scanner::new(file, line_no, line);
        let (kw, kw_col) = sc.word()?;
        if let Some(kind) = DOC_KINDS.iter().find(|k| **k == kw) {
            let name = sc
                .word()
                .map_err(|_| sc.err_here(format!("a `{kw}` header needs a name"), vec![]))?
                .0;
            sc.expect_end()?;
            docs.push(DocLines {
                file,
                kind,
                name,
                header_line: line_no,
                header_len: kw.chars().count(),
                entries: Vec::new(),
            });
        } else {
            match docs.last_mut() {
                Some(d) => d.entries.push(Entry {
                    kw,
                    kw_col,
                    line: line_no,
                    text: line,
                    pos: sc.pos,
                }),
                None => {
                    return Err(perr(
                        file,
                        line_no,
                        kw_col,
                        kw.chars().count(),
                        format!(
                            "expected a document header (one of: {}), found `{kw}`",
                            DOC_KINDS.join(", ")
                        ),
                    ))
                }
            }
        }
    }
    Ok(docs)
}

// ---------------------------------------------------------------------------
// Per-kind section parsers.

fn require_position(
    d: &DocLines,
    line: usize,
    col: usize,
    len: usize,
    set: &FiniteSet,
    s: &Symbol,
) -> Result<usize, ParseError> {
    set.position(s).ok_or_else(|| {
        perr(
            d.file,
            line,
            col,
            len,
            format!("unknown symbol `{s}` (carrier is {{{}}})", set.describe()),
        )
    })
}

fn finite_set_line(d: &DocLines, e: &Entry) -> Result<FiniteSet, ParseError> {
    let mut sc = d.scan(e);
    let syms = sc.symbol_list()?;
    FiniteSet::new(syms).map_err(|er| d.entry_err(e, er.to_string()))
}

fn expr_line(d: &DocLines, e: &Entry) -> Result<Expr, ParseError> {
    let mut sc = d.scan(e);
    let expr = expr_add(&mut sc)?;
    sc.expect_end()?;
    Ok(expr)
}

fn usize_line(d: &DocLines, e: &Entry) -> Result<usize, ParseError> {
    let mut sc = d.scan(e);
    let v = sc.usize_value()?;
    sc.expect_end()?;
    Ok(v)
}

/// Parse machine sections whose keywords carry the given prefix (`""` for a
/// machine document, `"src-"`/`"dst-"` inside a simulation document).
fn machine_from_sections(d: &DocLines, prefix: &str) -> Result<Machine, ParseError> {
    let key = |base: &str| format!("{prefix}{base}");

    let change_entry = d.single(&key("change"))?;
    let mut sc = d.scan(change_entry);
    let (word, word_col) = sc.word()?;
    let change = match word.as_str() {
        "deterministic" => ChangeKind::Deterministic,
        "nondeterministic" => ChangeKind::Nondeterministic,
        _ => {
            return Err(perr(
                d.file,
                change_entry.line,
                word_col,
                word.chars().count(),
                "expected `deterministic` or `nondeterministic`",
            ))
        }
    };
    sc.expect_end()?;

    let states = finite_set_line(d, d.single(&key("states"))?)?;
    let obs = finite_set_line(d, d.single(&key("obs"))?)?;

    let actions_entry = d.at_most_one(&key("actions"))?;
    let fiber_entries = d.entries(&key("fiber"));
    let iface = match (actions_entry, fiber_entries.is_empty()) {
        (Some(e), true) => Interface::simple(obs.clone(), finite_set_line(d, e)?),
        (None, false) => {
            let mut fibers: Vec<Option<FiniteSet>> = vec![None; obs.len()];
            for e in &fiber_entries {
                let mut sc = d.scan(e);
                let (o, col, len) = sc.symbol_spanned()?;
                let oi = require_position(d, e.line, col, len, &obs, &o)?;
                if fibers[oi].is_some() {
                    return Err(perr(
                        d.file,
                        e.line,
                        col,
                        len,
                        format!("duplicate `{}` line for `{o}`", key("fiber")),
                    ));
                }
                let syms = sc.symbol_list()?;
                fibers[oi] =
                    Some(FiniteSet::new(syms).map_err(|er| d.entry_err(e, er.to_string()))?);
            }
            let mut complete = Vec::with_capacity(obs.len());
            for (oi, f) in fibers.into_iter().enumerate() {
                match f {
                    Some(f) => complete.push(f),
                    None => {
                        return Err(d.header_err(format!(
                            "{} `{}` has no `{}` line for `{}`",
                            d.kind,
                            d.name,
                            key("fiber"),
                            obs.get(oi)
                        )))
                    }
                }
            }
            Interface::new(obs.clone(), complete).map_err(|er| d.header_err(er.to_string()))?
        }
        (Some(_), false) => {
            return Err(d.entry_err(
                fiber_entries[0],
                format!(
                    "use either one `{}` line or per-observation `{}` lines, not both",
                    key("actions"),
                    key("fiber")
                ),
            ))
        }
        (None, true) => {
            return Err(d.header_err(format!(
                "{} `{}` needs an `{}` line or `{}` lines",
                d.kind,
                d.name,
                key("actions"),
                key("fiber")
            )))
        }
    };

    let mut views: Vec<Option<usize>> = vec![None; states.len()];
    for e in d.entries(&key("view")) {
        let mut sc = d.scan(e);
        let (s, s_col, s_len) = sc.symbol_spanned()?;
        let si = require_position(d, e.line, s_col, s_len, &states, &s)?;
        if views[si].is_some() {
            return Err(perr(
                d.file,
                e.line,
                s_col,
                s_len,
                format!("duplicate `{}` line for state `{s}`", key("view")),
            ));
        }
        let (o, o_col, o_len) = sc.symbol_spanned()?;
        let oi = require_position(d, e.line, o_col, o_len, iface.obs(), &o)?;
        sc.expect_end()?;
        views[si] = Some(oi);
    }
    let mut view_tab = Vec::with_capacity(states.len());
    for (si, v) in views.into_iter().enumerate() {
        match v {
            Some(oi) => view_tab.push(oi),
            None => {
                return Err(d.header_err(format!(
                    "{} `{}` has no `{}` line for state `{}`",
                    d.kind,
                    d.name,
                    key("view"),
                    states.get(si)
                )))
            }
        }
    }

    let mut updates: Vec<Vec<Option<Change>>> = (0..states.len())
        .map(|si| vec![None; iface.fiber_at(view_tab[si]).len()])
        .collect();
    for e in d.entries(&key("update")) {
        let mut sc = d.scan(e);
        let (s, s_col, s_len) = sc.symbol_spanned()?;
        let si = require_position(d, e.line, s_col, s_len, &states, &s)?;
        let fiber = iface.fiber_at(view_tab[si]);
        let (a, a_col, a_len) = sc.symbol_spanned()?;
        let ai = fiber.position(&a).ok_or_else(|| {
            perr(
                d.file,
                e.line,
                a_col,
                a_len,
                format!(
                    "action `{a}` is not in the fiber over `{}` (fiber is {{{}}})",
                    iface.obs().get(view_tab[si]),
                    fiber.describe()
                ),
            )
        })?;
        if updates[si][ai].is_some() {
            return Err(perr(
                d.file,
                e.line,
                s_col,
                s_len,
                format!("duplicate `{}` line for (`{s}`, `{a}`)", key("update")),
            ));
        }
        sc.skip_ws();
        let change_value = if sc.peek() == Some('{') {
            if change == ChangeKind::Deterministic {
                return Err(sc.err_here(
                    "a deterministic machine's update is a single next state, not a set",
                    vec![],
                ));
            }
            sc.pos += 1;
            let mut set = BTreeSet::new();
            loop {
                sc.skip_ws();
                match sc.peek() {
                    Some('}') => {
                        sc.pos += 1;
                        break;
                    }
                    Some(_) => {
                        let (t, t_col, t_len) = sc.symbol_spanned()?;
                        require_position(d, e.line, t_col, t_len, &states, &t)?;
                        set.insert(t);
                    }
                    None => return Err(sc.err_here("expected \"}\"", vec!["}".to_string()])),
                }
            }
            Change::Set(set)
        } else {
            if change == ChangeKind::Nondeterministic {
                return Err(sc.err_here(
                    "a nondeterministic machine's update is a set of states in braces",
                    vec!["{".to_string()],
                ));
            }
            let (t, t_col, t_len) = sc.symbol_spanned()?;
            require_position(d, e.line, t_col, t_len, &states, &t)?;
            Change::Next(t)
        };
        sc.expect_end()?;
        updates[si][ai] = Some(change_value);
    }
    for (si, row) in updates.iter().enumerate() {
        for (ai, c) in row.iter().enumerate() {
            if c.is_none() {
                return Err(d.header_err(format!(
                    "{} `{}` has no `{}` line for (`{}`, `{}`)",
                    d.kind,
                    d.name,
                    key("update"),
                    states.get(si),
                    iface.fiber_at(view_tab[si]).get(ai)
                )));
            }
        }
    }

    let iface_for_lookup = iface.clone();
    let states_for_lookup = states.clone();
    Machine::from_maps(states, iface, change, {
        let states = states_for_lookup.clone();
        let iface = iface_for_lookup.clone();
        let view_tab = view_tab.clone();
        move |s| {
            let si = states.position(s).expect("validated state");
            iface.obs().get(view_tab[si]).clone()
        }
    }, {
        let states = states_for_lookup;
        let iface = iface_for_lookup;
        let view_tab = view_tab.clone();
        move |s, a| {
            let si = states.position(s).expect("validated state");
            let ai = iface
                .fiber_at(view_tab[si])
                .position(a)
                .expect("validated action");
            updates[si][ai].clone().expect("validated update")
        }
    })
    .map_err(|er| d.header_err(er.to_string()))
}

const MACHINE_SECTIONS: [&str; 7] = [
    "change", "states", "obs", "actions", "fiber", "view", "update",
];

fn machine_doc(d: &DocLines) -> Result<MachineDoc, ParseError> {
    d.check_allowed(&MACHINE_SECTIONS)?;
    Ok(MachineDoc {
        name: d.name.clone(),
        machine: machine_from_sections(d, "")?,
    })
}

fn wiring_doc(d: &DocLines) -> Result<WiringDoc, ParseError> {
    let pattern_entry = d.single("pattern")?;
    let mut sc = d.scan(pattern_entry);
    let (pattern, pat_col) = sc.word()?;
    sc.expect_end()?;
    let set = |kw: &str| -> Result<FiniteSet, ParseError> { finite_set_line(d, d.single(kw)?) };
    let (spec, lens) = match pattern.as_str() {
        "parallel" => {
            d.check_allowed(&["pattern", "obs1", "actions1", "obs2", "actions2"])?;
            let obs1 = set("obs1")?;
            let actions1 = set("actions1")?;
            let obs2 = set("obs2")?;
            let actions2 = set("actions2")?;
            let iface = Interface::simple(obs1.clone(), actions1.clone())
                .product(&Interface::simple(obs2.clone(), actions2.clone()));
            (
                WiringSpec::Parallel {
                    obs1,
                    actions1,
                    obs2,
                    actions2,
                },
                identity_lens(&iface),
            )
        }
        "cascade" => {
            d.check_allowed(&["pattern", "actions", "obs1", "mid", "obs2"])?;
            let actions = set("actions")?;
            let obs1 = set("obs1")?;
            let mid = set("mid")?;
            let obs2 = set("obs2")?;
            let lens = make_cascade(&actions, &obs1, &mid, &obs2);
            (
                WiringSpec::Cascade {
                    actions,
                    obs1,
                    mid,
                    obs2,
                },
                lens,
            )
        }
        "feedback" => {
            d.check_allowed(&["pattern", "actions", "mid", "obs"])?;
            let actions = set("actions")?;
            let mid = set("mid")?;
            let obs = set("obs")?;
            let lens = make_feedback(&actions, &mid, &obs);
            (WiringSpec::Feedback { actions, mid, obs }, lens)
        }
        "explicit" => {
            d.check_allowed(&[
                "pattern",
                "src-obs",
                "src-actions",
                "dst-obs",
                "dst-actions",
                "fwd",
                "bwd",
            ])?;
            let src_obs = set("src-obs")?;
            let src_actions = set("src-actions")?;
            let dst_obs = set("dst-obs")?;
            let dst_actions = set("dst-actions")?;

            let mut fwd_tab: Vec<Option<Symbol>> = vec![None; src_obs.len()];
            for e in d.entries("fwd") {
                let mut sc = d.scan(e);
                let (o, o_col, o_len) = sc.symbol_spanned()?;
                let oi = require_position(d, e.line, o_col, o_len, &src_obs, &o)?;
                if fwd_tab[oi].is_some() {
                    return Err(perr(
                        d.file,
                        e.line,
                        o_col,
                        o_len,
                        format!("duplicate `fwd` line for `{o}`"),
                    ));
                }
                let (t, t_col, t_len) = sc.symbol_spanned()?;
                require_position(d, e.line, t_col, t_len, &dst_obs, &t)?;
                sc.expect_end()?;
                fwd_tab[oi] = Some(t);
            }
            let mut bwd_tab: Vec<Vec<Option<Symbol>>> =
                vec![vec![None; dst_actions.len()]; src_obs.len()];
            for e in d.entries("bwd") {
                let mut sc = d.scan(e);
                let (o, o_col, o_len) = sc.symbol_spanned()?;
                let oi = require_position(d, e.line, o_col, o_len, &src_obs, &o)?;
                let (a2, a2_col, a2_len) = sc.symbol_spanned()?;
                let a2i = require_position(d, e.line, a2_col, a2_len, &dst_actions, &a2)?;
                if bwd_tab[oi][a2i].is_some() {
                    return Err(perr(
                        d.file,
                        e.line,
                        o_col,
                        o_len,
                        format!("duplicate `bwd` line for (`{o}`, `{a2}`)"),
                    ));
                }
                let (a1, a1_col, a1_len) = sc.symbol_spanned()?;
                require_position(d, e.line, a1_col, a1_len, &src_actions, &a1)?;
                sc.expect_end()?;
                bwd_tab[oi][a2i] = Some(a1);
            }
            for (oi, t) in fwd_tab.iter().enumerate() {
                if t.is_none() {
                    return Err(d.header_err(format!(
                        "wiring `{}` has no `fwd` line for `{}`",
                        d.name,
                        src_obs.get(oi)
                    )));
                }
            }
            for (oi, row) in bwd_tab.iter().enumerate() {
                for (ai, v) in row.iter().enumerate() {
                    if v.is_none() {
                        return Err(d.header_err(format!(
                            "wiring `{}` has no `bwd` line for (`{}`, `{}`)",
                            d.name,
                            src_obs.get(oi),
                            dst_actions.get(ai)
                        )));
                    }
                }
            }
            let lens = Lens::from_maps(
                Interface::simple(src_obs.clone(), src_actions.clone()),
                Interface::simple(dst_obs.clone(), dst_actions.clone()),
                |o| {
                    fwd_tab[src_obs.position(o).expect("validated observation")]
                        .clone()
                        .expect("total forward table")
                },
                |o, a2| {
                    let oi = src_obs.position(o).expect("validated observation");
                    let a2i = dst_actions.position(a2).expect("validated action");
                    bwd_tab[oi][a2i].clone().expect("total backward table")
                },
            )
            .map_err(|er| d.header_err(er.to_string()))?;
            (
                WiringSpec::Explicit {
                    src_obs,
                    src_actions,
                    dst_obs,
                    dst_actions,
                },
                lens,
            )
        }
        other => {
            return Err(perr(
                d.file,
                pattern_entry.line,
                pat_col,
                other.chars().count(),
                "expected `parallel`, `cascade`, `feedback`, or `explicit`",
            ))
        }
    };
    Ok(WiringDoc {
        name: d.name.clone(),
        spec,
        lens,
    })
}

fn bool_cert_doc(d: &DocLines) -> Result<BoolCertDoc, ParseError> {
    d.check_allowed(&["obs", "actions", "gamma", "alpha", "phi"])?;
    let obs = finite_set_line(d, d.single("obs")?)?;
    let actions = finite_set_line(d, d.single("actions")?)?;

    let gamma_entry = d.single("gamma")?;
    let mut sc = d.scan(gamma_entry);
    let mut gamma_true = vec![false; obs.len()];
    while !sc.at_end() {
        let (o, col, len) = sc.symbol_spanned()?;
        gamma_true[require_position(d, gamma_entry.line, col, len, &obs, &o)?] = true;
    }

    let mut alpha_pairs: BTreeSet<(usize, usize)> = BTreeSet::new();
    for e in d.entries("alpha") {
        let mut sc = d.scan(e);
        let (o, o_col, o_len) = sc.symbol_spanned()?;
        let oi = require_position(d, e.line, o_col, o_len, &obs, &o)?;
        let (a, a_col, a_len) = sc.symbol_spanned()?;
        let ai = require_position(d, e.line, a_col, a_len, &actions, &a)?;
        sc.expect_end()?;
        if !gamma_true[oi] {
            return Err(perr(
                d.file,
                e.line,
                o_col,
                o_len,
                AglError::IllFormedCertificate {
                    obs: o.to_string(),
                    action: a.to_string(),
                }
                .to_string(),
            ));
        }
        alpha_pairs.insert((oi, ai));
    }

    let phi = match d.at_most_one("phi")? {
        Some(e) => {
            let mut sc = d.scan(e);
            Some(sc.symbol_list()?)
        }
        None => None,
    };

    let gamma = obs
        .iter()
        .enumerate()
        .filter(|(i, _)| gamma_true[*i])
        .map(|(_, s)| s.clone())
        .collect();
    let alpha = alpha_pairs
        .into_iter()
        .map(|(oi, ai)| (obs.get(oi).clone(), actions.get(ai).clone()))
        .collect();
    Ok(BoolCertDoc {
        name: d.name.clone(),
        obs,
        actions,
        gamma,
        alpha,
        phi,
    })
}

fn quant_cert_doc(d: &DocLines) -> Result<QuantCertDoc, ParseError> {
    let interface_form = !d.entries("obs-dim").is_empty() || !d.entries("act-dim").is_empty();
    let lyapunov_form = !d.entries("phi").is_empty() || !d.entries("lambda").is_empty();
    let body = match (interface_form, lyapunov_form) {
        (true, false) => {
            d.check_allowed(&["obs-dim", "act-dim", "gamma", "alpha"])?;
            let obs_dim_entry = d.single("obs-dim")?;
            let obs_dim = usize_line(d, obs_dim_entry)?;
            let act_dim = usize_line(d, d.single("act-dim")?)?;
            let gamma_entry = d.single("gamma")?;
            let gamma = expr_line(d, gamma_entry)?;
            check_vars(&gamma, 0, 0, obs_dim)
                .map_err(|er| d.entry_err(gamma_entry, er.to_string()))?;
            let alpha_entry = d.single("alpha")?;
            let alpha = expr_line(d, alpha_entry)?;
            check_vars(&alpha, 0, act_dim, obs_dim)
                .map_err(|er| d.entry_err(alpha_entry, er.to_string()))?;
            let cert = QuantCertificate::new(obs_dim, act_dim, gamma, alpha)
                .map_err(|er| d.entry_err(gamma_entry, er.to_string()))?;
            QuantCertBody::Interface(cert)
        }
        (false, true) => {
            d.check_allowed(&["phi", "alpha", "gamma", "lambda"])?;
            let phi_entry = d.single("phi")?;
            let phi = expr_line(d, phi_entry)?;
            let (_, pa, po) = var_limits(&phi);
            if pa > 0 || po > 0 {
                return Err(d.entry_err(phi_entry, "phi must depend only on state variables"));
            }
            let alpha_entry = d.single("alpha")?;
            let alpha = expr_line(d, alpha_entry)?;
            let (ax, _, ao) = var_limits(&alpha);
            if ax > 0 || ao > 0 {
                return Err(d.entry_err(alpha_entry, "alpha must depend only on input variables"));
            }
            let gamma_entry = d.single("gamma")?;
            let gamma = expr_line(d, gamma_entry)?;
            let (gx, ga, _) = var_limits(&gamma);
            if gx > 0 || ga > 0 {
                return Err(
                    d.entry_err(gamma_entry, "gamma must depend only on observation variables")
                );
            }
            let lambda_entry = d.single("lambda")?;
            let mut sc = d.scan(lambda_entry);
            let lambda = plfun_value(&mut sc)?;
            sc.expect_end()?;
            if !id_minus_in_kinf(&lambda) {
                return Err(d.entry_err(
                    lambda_entry,
                    "id-lambda must be of class K-infinity: lambda(0)=0 with every slope below 1",
                ));
            }
            QuantCertBody::Lyapunov {
                phi,
                alpha,
                gamma,
                lambda,
            }
        }
        (true, true) => {
            return Err(d.header_err(format!(
                "quant-cert `{}` mixes interface sections (obs-dim/act-dim) with Lyapunov sections (phi/lambda)",
                d.name
            )))
        }
        (false, false) => {
            return Err(d.header_err(format!(
                "quant-cert `{}` must use interface form (obs-dim/act-dim/gamma/alpha) or Lyapunov form (phi/alpha/gamma/lambda)",
                d.name
            )))
        }
    };
    Ok(QuantCertDoc {
        name: d.name.clone(),
        body,
    })
}

fn ode_doc(d: &DocLines) -> Result<OdeDoc, ParseError> {
    d.check_allowed(&[
        "state-dim",
        "input-dim",
        "obs-dim",
        "field",
        "view",
        "x0",
        "a0",
        "domain",
        "input-domain",
    ])?;
    let state_dim_entry = d.single("state-dim")?;
    let state_dim = usize_line(d, state_dim_entry)?;
    if state_dim == 0 {
        return Err(d.entry_err(state_dim_entry, "state-dim must be at least 1"));
    }
    let input_dim = usize_line(d, d.single("input-dim")?)?;
    let obs_dim = usize_line(d, d.single("obs-dim")?)?;

    let counted = |kw: &str, want: usize| -> Result<Vec<&Entry>, ParseError> {
        let es = d.entries(kw);
        if es.len() != want {
            return Err(d.header_err(format!(
                "ode `{}` needs exactly {want} `{kw}` line(s), found {}",
                d.name,
                es.len()
            )));
        }
        Ok(es)
    };

    let mut field = Vec::with_capacity(state_dim);
    for e in counted("field", state_dim)? {
        let expr = expr_line(d, e)?;
        check_vars(&expr, state_dim, input_dim, 0).map_err(|er| d.entry_err(e, er.to_string()))?;
        field.push(expr);
    }
    let mut view = Vec::with_capacity(obs_dim);
    for e in counted("view", obs_dim)? {
        let expr = expr_line(d, e)?;
        check_vars(&expr, state_dim, 0, 0).map_err(|er| d.entry_err(e, er.to_string()))?;
        view.push(expr);
    }

    let floats_line = |e: &Entry, want: usize, what: &str| -> Result<Vec<f64>, ParseError> {
        let mut sc = d.scan(e);
        let vs = sc.float_list()?;
        if vs.len() != want {
            return Err(d.entry_err(
                e,
                format!("{what} needs {want} coordinate(s), found {}", vs.len()),
            ));
        }
        Ok(vs)
    };
    let x0 = floats_line(d.single("x0")?, state_dim, "x0")?;
    let a0 = if input_dim > 0 {
        floats_line(d.single("a0")?, input_dim, "a0")?
    } else {
        if let Some(e) = d.at_most_one("a0")? {
            return Err(d.entry_err(e, "input-dim is 0; drop the `a0` line"));
        }
        Vec::new()
    };

    let range_lines = |kw: &str, want: usize| -> Result<Vec<(f64, f64)>, ParseError> {
        let es = d.entries(kw);
        if es.len() != want {
            return Err(d.header_err(format!(
                "ode `{}` needs exactly {want} `{kw}` line(s), found {}",
                d.name,
                es.len()
            )));
        }
        let mut out = Vec::with_capacity(want);
        for e in es {
            let mut sc = d.scan(e);
            let lo = sc.float()?;
            let hi = sc.float()?;
            sc.expect_end()?;
            out.push((lo, hi));
        }
        Ok(out)
    };
    let domain = range_lines("domain", state_dim)?;
    let input_domain = range_lines("input-domain", input_dim)?;

    let ode = OpenODE::new(
        state_dim,
        input_dim,
        obs_dim,
        field,
        view,
        x0,
        a0,
        domain,
        input_domain,
    )
    .map_err(|er| d.header_err(er.to_string()))?;
    Ok(OdeDoc {
        name: d.name.clone(),
        ode,
    })
}

fn simulation_doc(d: &DocLines) -> Result<SimulationDoc, ParseError> {
    let mut allowed: Vec<String> = Vec::new();
    for prefix in ["src-", "dst-"] {
        for base in MACHINE_SECTIONS {
            allowed.push(format!("{prefix}{base}"));
        }
    }
    allowed.extend(["chart-obs".to_string(), "chart-act".to_string(), "map".to_string()]);
    let allowed_refs: Vec<&str> = allowed.iter().map(|s| s.as_str()).collect();
    d.check_allowed(&allowed_refs)?;

    let src = machine_from_sections(d, "src-")?;
    let dst = machine_from_sections(d, "dst-")?;
    let src_iface = src.iface().clone();
    let dst_iface = dst.iface().clone();
    let src_states = src.states().clone();
    let dst_states = dst.states().clone();

    let mut fwd_tab: Vec<Option<usize>> = vec![None; src_iface.obs().len()];
    for e in d.entries("chart-obs") {
        let mut sc = d.scan(e);
        let (o, o_col, o_len) = sc.symbol_spanned()?;
        let oi = require_position(d, e.line, o_col, o_len, src_iface.obs(), &o)?;
        if fwd_tab[oi].is_some() {
            return Err(perr(
                d.file,
                e.line,
                o_col,
                o_len,
                format!("duplicate `chart-obs` line for `{o}`"),
            ));
        }
        let (t, t_col, t_len) = sc.symbol_spanned()?;
        let ti = require_position(d, e.line, t_col, t_len, dst_iface.obs(), &t)?;
        sc.expect_end()?;
        fwd_tab[oi] = Some(ti);
    }
    let mut fwd_total = Vec::with_capacity(fwd_tab.len());
    for (oi, t) in fwd_tab.iter().enumerate() {
        match t {
            Some(ti) => fwd_total.push(*ti),
            None => {
                return Err(d.header_err(format!(
                    "simulation `{}` has no `chart-obs` line for `{}`",
                    d.name,
                    src_iface.obs().get(oi)
                )))
            }
        }
    }

    let mut push_tab: Vec<Vec<Option<usize>>> = (0..src_iface.obs().len())
        .map(|oi| vec![None; src_iface.fiber_at(oi).len()])
        .collect();
    for e in d.entries("chart-act") {
        let mut sc = d.scan(e);
        let (o, o_col, o_len) = sc.symbol_spanned()?;
        let oi = require_position(d, e.line, o_col, o_len, src_iface.obs(), &o)?;
        let (a, a_col, a_len) = sc.symbol_spanned()?;
        let ai = src_iface.fiber_at(oi).position(&a).ok_or_else(|| {
            perr(
                d.file,
                e.line,
                a_col,
                a_len,
                format!(
                    "action `{a}` is not in the fiber over `{o}` (fiber is {{{}}})",
                    src_iface.fiber_at(oi).describe()
                ),
            )
        })?;
        if push_tab[oi][ai].is_some() {
            return Err(perr(
                d.file,
                e.line,
                o_col,
                o_len,
                format!("duplicate `chart-act` line for (`{o}`, `{a}`)"),
            ));
        }
        let target_fiber = dst_iface.fiber_at(fwd_total[oi]);
        let (ta, ta_col, ta_len) = sc.symbol_spanned()?;
        let tai = target_fiber.position(&ta).ok_or_else(|| {
            perr(
                d.file,
                e.line,
                ta_col,
                ta_len,
                format!(
                    "action `{ta}` is not in the target fiber over `{}` (fiber is {{{}}})",
                    dst_iface.obs().get(fwd_total[oi]),
                    target_fiber.describe()
                ),
            )
        })?;
        sc.expect_end()?;
        push_tab[oi][ai] = Some(tai);
    }
    for (oi, row) in push_tab.iter().enumerate() {
        for (ai, v) in row.iter().enumerate() {
            if v.is_none() {
                return Err(d.header_err(format!(
                    "simulation `{}` has no `chart-act` line for (`{}`, `{}`)",
                    d.name,
                    src_iface.obs().get(oi),
                    src_iface.fiber_at(oi).get(ai)
                )));
            }
        }
    }

    let mut map_tab: Vec<Option<usize>> = vec![None; src_states.len()];
    for e in d.entries("map") {
        let mut sc = d.scan(e);
        let (s, s_col, s_len) = sc.symbol_spanned()?;
        let si = require_position(d, e.line, s_col, s_len, &src_states, &s)?;
        if map_tab[si].is_some() {
            return Err(perr(
                d.file,
                e.line,
                s_col,
                s_len,
                format!("duplicate `map` line for `{s}`"),
            ));
        }
        let (t, t_col, t_len) = sc.symbol_spanned()?;
        let ti = require_position(d, e.line, t_col, t_len, &dst_states, &t)?;
        sc.expect_end()?;
        map_tab[si] = Some(ti);
    }
    let mut map_total = Vec::with_capacity(map_tab.len());
    for (si, t) in map_tab.iter().enumerate() {
        match t {
            Some(ti) => map_total.push(*ti),
            None => {
                return Err(d.header_err(format!(
                    "simulation `{}` has no `map` line for state `{}`",
                    d.name,
                    src_states.get(si)
                )))
            }
        }
    }

    let chart = Chart::from_maps(
        src_iface.clone(),
        dst_iface.clone(),
        |o| {
            let oi = src_iface.obs().position(o).expect("validated observation");
            dst_iface.obs().get(fwd_total[oi]).clone()
        },
        |o, a| {
            let oi = src_iface.obs().position(o).expect("validated observation");
            let ai = src_iface
                .fiber_at(oi)
                .position(a)
                .expect("validated action");
            dst_iface
                .fiber_at(fwd_total[oi])
                .get(push_tab[oi][ai].expect("total chart table"))
                .clone()
        },
    )
    .map_err(|er| d.header_err(er.to_string()))?;
    let sim = Simulation::from_map(src, dst, chart, |s| {
        let si = src_states.position(s).expect("validated state");
        dst_states.get(map_total[si]).clone()
    })
    .map_err(|er| d.header_err(er.to_string()))?;
    Ok(SimulationDoc {
        name: d.name.clone(),
        sim,
    })
}

fn parse_doc(d: &DocLines) -> Result<Document, ParseError> {
    match d.kind {
        "machine" => Ok(Document::Machine(machine_doc(d)?)),
        "wiring" => Ok(Document::Wiring(wiring_doc(d)?)),
        "bool-cert" => Ok(Document::BoolCert(bool_cert_doc(d)?)),
        "quant-cert" => Ok(Document::QuantCert(quant_cert_doc(d)?)),
        "ode" => Ok(Document::Ode(ode_doc(d)?)),
        "simulation" => Ok(Document::Simulation(simulation_doc(d)?)),
        other => unreachable!("unhandled document kind {other}"),
    }
}

/// Parse every document in a file.
pub fn parse_documents(file: &str, text: &str) -> Result<Vec<Document>, ParseError> {
    split_documents(file, text)?.iter().map(parse_doc).collect()
}

fn exactly_one(file: &str, text: &str, kind: &str) -> Result<Document, ParseError> {
    let docs = parse_documents(file, text)?;
    match docs.len() {
        1 => {
            let doc = docs.into_iter().next().expect("length checked");
            if doc.kind() == kind {
                Ok(doc)
            } else {
                Err(perr(
                    file,
                    1,
                    1,
                    1,
                    format!("expected a {kind} document, found a {} document", doc.kind()),
                ))
            }
        }
        n => Err(perr(
            file,
            1,
            1,
            1,
            format!("expected exactly one {kind} document in this file, found {n}"),
        )),
    }
}

pub fn parse_machine(file: &str, text: &str) -> Result<MachineDoc, ParseError> {
    match exactly_one(file, text, "machine")? {
        Document::Machine(d) => Ok(d),
        _ => unreachable!("kind checked"),
    }
}

pub fn parse_wiring(file: &str, text: &str) -> Result<WiringDoc, ParseError> {
    match exactly_one(file, text, "wiring")? {
        Document::Wiring(d) => Ok(d),
        _ => unreachable!("kind checked"),
    }
}

pub fn parse_ode(file: &str, text: &str) -> Result<OdeDoc, ParseError> {
    match exactly_one(file, text, "ode")? {
        Document::Ode(d) => Ok(d),
        _ => unreachable!("kind checked"),
    }
}

pub fn parse_simulation(file: &str, text: &str) -> Result<SimulationDoc, ParseError> {
    match exactly_one(file, text, "simulation")? {
        Document::Simulation(d) => Ok(d),
        _ => unreachable!("kind checked"),
    }
}

/// Parse a file of certificate documents (one or more, boolean or
/// quantitative).
pub fn parse_certificates(file: &str, text: &str) -> Result<Vec<Document>, ParseError> {
    let docs = parse_documents(file, text)?;
    if docs.is_empty() {
        return Err(perr(file, 1, 1, 1, "expected at least one certificate document"));
    }
    for doc in &docs {
        if !matches!(doc, Document::BoolCert(_) | Document::QuantCert(_)) {
            return Err(perr(
                file,
                1,
                1,
                1,
                format!(
                    "expected certificate documents only, found a {} document (`{}`)",
                    doc.kind(),
                    doc.name()
                ),
            ));
        }
    }
    Ok(docs)
}

// ---------------------------------------------------------------------------
// Printers.

fn push_symbols(out: &mut String, kw: &str, syms: impl IntoIterator<Item = Symbol>) {
    out.push_str(kw);
    for s in syms {
        let _ = write!(out, " {s}");
    }
    out.push('\n');
}

fn change_text(c: &Change) -> String {
    match c {
        Change::Next(s) => s.to_string(),
        Change::Set(us) if us.is_empty() => "{}".to_string(),
        Change::Set(us) => {
            let names: Vec<String> = us.iter().map(|s| s.to_string()).collect();
            format!("{{ {} }}", names.join(" "))
        }
    }
}

fn print_machine_sections(out: &mut String, m: &Machine, prefix: &str) {
    let _ = writeln!(
        out,
        "{prefix}change {}",
        match m.change() {
            ChangeKind::Deterministic => "deterministic",
            ChangeKind::Nondeterministic => "nondeterministic",
        }
    );
    push_symbols(out, &format!("{prefix}states"), m.states().iter().cloned());
    push_symbols(out, &format!("{prefix}obs"), m.iface().obs().iter().cloned());
    match m.iface().simple_actions() {
        Some(actions) => push_symbols(out, &format!("{prefix}actions"), actions.iter().cloned()),
        None => {
            for (oi, o) in m.iface().obs().iter().enumerate() {
                let mut items = vec![o.clone()];
                items.extend(m.iface().fiber_at(oi).iter().cloned());
                push_symbols(out, &format!("{prefix}fiber"), items);
            }
        }
    }
    for s in m.states().iter() {
        let o = m.view(s).expect("view is total");
        let _ = writeln!(out, "{prefix}view {s} {o}");
    }
    for s in m.states().iter() {
        for a in m.enabled(s).expect("state in carrier").iter() {
            let c = m.update(s, a).expect("update is total");
            let _ = writeln!(out, "{prefix}update {s} {a} {}", change_text(c));
        }
    }
}

fn print_machine(doc: &MachineDoc) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "machine {}", doc.name);
    print_machine_sections(&mut out, &doc.machine, "");
    out
}

fn print_wiring(doc: &WiringDoc) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "wiring {}", doc.name);
    match &doc.spec {
        WiringSpec::Parallel {
            obs1,
            actions1,
            obs2,
            actions2,
        } => {
            out.push_str("pattern parallel\n");
            push_symbols(&mut out, "obs1", obs1.iter().cloned());
            push_symbols(&mut out, "actions1", actions1.iter().cloned());
            push_symbols(&mut out, "obs2", obs2.iter().cloned());
            push_symbols(&mut out, "actions2", actions2.iter().cloned());
        }
        WiringSpec::Cascade {
            actions,
            obs1,
            mid,
            obs2,
        } => {
            out.push_str("pattern cascade\n");
            push_symbols(&mut out, "actions", actions.iter().cloned());
            push_symbols(&mut out, "obs1", obs1.iter().cloned());
            push_symbols(&mut out, "mid", mid.iter().cloned());
            push_symbols(&mut out, "obs2", obs2.iter().cloned());
        }
        WiringSpec::Feedback { actions, mid, obs } => {
            out.push_str("pattern feedback\n");
            push_symbols(&mut out, "actions", actions.iter().cloned());
            push_symbols(&mut out, "mid", mid.iter().cloned());
            push_symbols(&mut out, "obs", obs.iter().cloned());
        }
        WiringSpec::Explicit {
            src_obs,
            src_actions,
            dst_obs,
            dst_actions,
        } => {
            out.push_str("pattern explicit\n");
            push_symbols(&mut out, "src-obs", src_obs.iter().cloned());
            push_symbols(&mut out, "src-actions", src_actions.iter().cloned());
            push_symbols(&mut out, "dst-obs", dst_obs.iter().cloned());
            push_symbols(&mut out, "dst-actions", dst_actions.iter().cloned());
            for o in src_obs.iter() {
                let t = doc.lens.fwd(o).expect("total lens");
                let _ = writeln!(out, "fwd {o} {t}");
            }
            for o in src_obs.iter() {
                for a2 in dst_actions.iter() {
                    let a1 = doc.lens.bwd(o, a2).expect("total lens");
                    let _ = writeln!(out, "bwd {o} {a2} {a1}");
                }
            }
        }
    }
    out
}

fn print_bool_cert(doc: &BoolCertDoc) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "bool-cert {}", doc.name);
    push_symbols(&mut out, "obs", doc.obs.iter().cloned());
    push_symbols(&mut out, "actions", doc.actions.iter().cloned());
    push_symbols(&mut out, "gamma", doc.gamma.iter().cloned());
    for (o, a) in &doc.alpha {
        let _ = writeln!(out, "alpha {o} {a}");
    }
    if let Some(phi) = &doc.phi {
        push_symbols(&mut out, "phi", phi.iter().cloned());
    }
    out
}

fn print_quant_cert(doc: &QuantCertDoc) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "quant-cert {}", doc.name);
    match &doc.body {
        QuantCertBody::Interface(c) => {
            let _ = writeln!(out, "obs-dim {}", c.obs_dim());
            let _ = writeln!(out, "act-dim {}", c.act_dim());
            let _ = writeln!(out, "gamma {}", c.gamma());
            let _ = writeln!(out, "alpha {}", c.alpha());
        }
        QuantCertBody::Lyapunov {
            phi,
            alpha,
            gamma,
            lambda,
        } => {
            let _ = writeln!(out, "phi {phi}");
            let _ = writeln!(out, "alpha {alpha}");
            let _ = writeln!(out, "gamma {gamma}");
            let _ = writeln!(out, "lambda {}", plfun_to_string(lambda));
        }
    }
    out
}

fn print_ode(doc: &OdeDoc) -> String {
    let ode = &doc.ode;
    let mut out = String::new();
    let _ = writeln!(out, "ode {}", doc.name);
    let _ = writeln!(out, "state-dim {}", ode.state_dim());
    let _ = writeln!(out, "input-dim {}", ode.input_dim());
    let _ = writeln!(out, "obs-dim {}", ode.obs_dim());
    for f in ode.field() {
        let _ = writeln!(out, "field {f}");
    }
    for v in ode.view() {
        let _ = writeln!(out, "view {v}");
    }
    let floats = |vs: &[f64]| -> String {
        vs.iter().map(|v| fmt_float(*v)).collect::<Vec<_>>().join(" ")
    };
    let _ = writeln!(out, "x0 {}", floats(ode.x0()));
    if ode.input_dim() > 0 {
        let _ = writeln!(out, "a0 {}", floats(ode.a0()));
    }
    for &(lo, hi) in ode.domain() {
        let _ = writeln!(out, "domain {} {}", fmt_float(lo), fmt_float(hi));
    }
    for &(lo, hi) in ode.input_domain() {
        let _ = writeln!(out, "input-domain {} {}", fmt_float(lo), fmt_float(hi));
    }
    out
}

fn print_simulation(doc: &SimulationDoc) -> String {
    let sim = &doc.sim;
    let mut out = String::new();
    let _ = writeln!(out, "simulation {}", doc.name);
    print_machine_sections(&mut out, sim.src(), "src-");
    print_machine_sections(&mut out, sim.dst(), "dst-");
    let chart = sim.chart();
    for o in sim.src().iface().obs().iter() {
        let t = chart.fwd(o).expect("chart is total");
        let _ = writeln!(out, "chart-obs {o} {t}");
    }
    for (oi, o) in sim.src().iface().obs().iter().enumerate() {
        for a in sim.src().iface().fiber_at(oi).iter() {
            let t = chart.push(o, a).expect("chart is total");
            let _ = writeln!(out, "chart-act {o} {a} {t}");
        }
    }
    for s in sim.src().states().iter() {
        let t = sim.map(s).expect("state map is total");
        let _ = writeln!(out, "map {s} {t}");
    }
    out
}

/// Canonical text of a document (sections in fixed order, carriers in
/// declaration order, tables in carrier order; ends with a newline).
pub fn print_document(doc: &Document) -> String {
    match doc {
        Document::Machine(d) => print_machine(d),
        Document::Wiring(d) => print_wiring(d),
        Document::BoolCert(d) => print_bool_cert(d),
        Document::QuantCert(d) => print_quant_cert(d),
        Document::Ode(d) => print_ode(d),
        Document::Simulation(d) => print_simulation(d),
    }
}

/// Print several documents into one file, separated by blank lines.
pub fn print_documents(docs: &[Document]) -> String {
    docs.iter()
        .map(print_document)
        .collect::<Vec<_>>()
        .join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certbool::certify_machine;
    use crate::machine::check_simulation;

    fn sym(s: &str) -> Symbol {
        Symbol::atom(s)
    }

    fn set(names: &[&str]) -> FiniteSet {
        FiniteSet::from_names(names.iter().copied()).unwrap()
    }

    const TOGGLE: &str = "machine toggle\n\
change deterministic\n\
states s0 s1\n\
obs lo hi\n\
actions go stay\n\
view s0 lo\n\
view s1 hi\n\
update s0 go s1\n\
update s0 stay s0\n\
update s1 go s0\n\
update s1 stay s1\n";

    fn toggle_machine() -> Machine {
        Machine::from_maps(
            set(&["s0", "s1"]),
            Interface::simple(set(&["lo", "hi"]), set(&["go", "stay"])),
            ChangeKind::Deterministic,
            |s| if *s == sym("s0") { sym("lo") } else { sym("hi") },
            |s, a| {
                Change::Next(if *a == sym("stay") {
                    s.clone()
                } else if *s == sym("s0") {
                    sym("s1")
                } else {
                    sym("s0")
                })
            },
        )
        .unwrap()
    }

    #[test]
    fn expr_examples_parse_to_the_expected_trees() {
        assert_eq!(
            parse_expr("2*x1 + sin(a1)").unwrap(),
            Expr::Add(
                Box::new(Expr::Mul(
                    Box::new(Expr::Const(2.0)),
                    Box::new(Expr::Var(VarKind::State, 1)),
                )),
                Box::new(Expr::Sin(Box::new(Expr::Var(VarKind::Input, 1)))),
            )
        );
        assert_eq!(
            parse_expr("x1^2 - 0.5*x1").unwrap(),
            Expr::Sub(
                Box::new(Expr::Pow(Box::new(Expr::Var(VarKind::State, 1)), 2)),
                Box::new(Expr::Mul(
                    Box::new(Expr::Const(0.5)),
                    Box::new(Expr::Var(VarKind::State, 1)),
                )),
            )
        );
    }

    #[test]
    fn unclosed_parenthesis_reports_column_and_expectation() {
        let err = parse_expr("2*(x1").unwrap_err();
        assert_eq!(err.span.line, 1);
        assert_eq!(err.span.column, 6);
        assert!(err.expected.contains(&")".to_string()), "{err:?}");
        assert!(err.message.contains("\")\""), "{err}");
    }

    #[test]
    fn expr_text_round_trips_token_for_token() {
        for text in [
            "x1",
            "-x1+a1",
            "x1/2",
            "2*x1+a1",
            "a1*-2",
            "--x1",
            "x1-(a1-o1)",
            "x1*(a1+1)",
            "(x1+a1)*o2",
            "x1^2",
            "(x1^2)^3",
            "x1^-2",
            "(-x1)^2",
            "abs(x1)",
            "min(x1,max(a1,0))",
            "sin(cos(exp(x1)))",
            "0.05*x1",
            "1e-9+x1",
            "2.5e300",
        ] {
            let parsed = parse_expr(text).unwrap();
            assert_eq!(parsed.to_string(), text, "canonical text changed");
            assert_eq!(parse_expr(&parsed.to_string()).unwrap(), parsed);
        }
    }

    #[test]
    fn expr_errors_carry_spans_inside_the_text() {
        for text in ["", "x", "x0", "foo", "1..2", "2*", "min(x1)", "1e", "x1^x2", "@"] {
            let err = parse_expr(text).unwrap_err();
            assert!(err.span.column >= 1, "{text}: {err:?}");
            assert!(
                err.span.column <= text.chars().count() + 1,
                "{text}: column {} escapes the input",
                err.span.column
            );
        }
    }

    #[test]
    fn plfun_notation_round_trips() {
        for (text, expect) in [
            ("id", PLFun::identity()),
            ("zero", PLFun::zero()),
            (
                "pl [(0,0),(1,2)] slope 0.5",
                PLFun::new(vec![(0.0, 0.0), (1.0, 2.0)], 0.5).unwrap(),
            ),
            (
                "pl [(0,1)] slope 0",
                PLFun::new(vec![(0.0, 1.0)], 0.0).unwrap(),
            ),
        ] {
            let parsed = parse_plfun(text).unwrap();
            assert_eq!(parsed, expect);
            assert_eq!(plfun_to_string(&parsed), text);
        }
        // The identity in raw notation canonicalizes to the alias.
        let raw = parse_plfun("pl [(0,0)] slope 1").unwrap();
        assert_eq!(raw, PLFun::identity());
        assert_eq!(plfun_to_string(&raw), "id");
        // Invalid functions are rejected with the validator's message.
        let err = parse_plfun("pl [(1,0)] slope 1").unwrap_err();
        assert!(err.message.contains("piecewise-linear"), "{err}");
    }

    #[test]
    fn machine_document_parses_to_the_table_machine() {
        let doc = parse_machine("toggle.mach", TOGGLE).unwrap();
        assert_eq!(doc.name, "toggle");
        assert_eq!(doc.machine, toggle_machine());
        // Canonical text is stable.
        assert_eq!(print_document(&Document::Machine(doc)), TOGGLE);
    }

    #[test]
    fn machine_document_accepts_shuffled_sections_and_comments() {
        let shuffled = "machine toggle\n\
# a comment\n\
update s1 go s0\n\
states s0 s1\n\
view s1 hi\n\
obs lo hi\n\
\n\
update s0 stay s0\n\
change deterministic\n\
actions go stay\n\
update s1 stay s1\n\
view s0 lo\n\
update s0 go s1\n";
        let doc = parse_machine("toggle.mach", shuffled).unwrap();
        assert_eq!(doc.machine, toggle_machine());
    }

    #[test]
    fn nondeterministic_machine_round_trips_with_sets() {
        let text = "machine relay\n\
change nondeterministic\n\
states r0 r1\n\
obs q\n\
actions tick\n\
view r0 q\n\
view r1 q\n\
update r0 tick { r0 r1 }\n\
update r1 tick {}\n";
        let doc = parse_machine("relay.mach", text).unwrap();
        assert_eq!(print_document(&Document::Machine(doc.clone())), text);
        match doc.machine.update(&sym("r0"), &sym("tick")).unwrap() {
            Change::Set(us) => assert_eq!(us.len(), 2),
            Change::Next(_) => panic!("expected a set"),
        }
        match doc.machine.update(&sym("r1"), &sym("tick")).unwrap() {
            Change::Set(us) => assert!(us.is_empty()),
            Change::Next(_) => panic!("expected a set"),
        }
    }

    #[test]
    fn machine_errors_point_at_their_lines() {
        // Unknown next state, on line 7 at the final symbol.
        let text = "machine bad\n\
change deterministic\n\
states s0\n\
obs lo\n\
actions go\n\
view s0 lo\n\
update s0 go zz\n";
        let err = parse_machine("bad.mach", text).unwrap_err();
        assert_eq!(err.span.line, 7);
        assert_eq!(err.span.column, 14);
        assert!(err.message.contains("unknown symbol `zz`"), "{err}");

        // Missing view line reports at the header.
        let text = "machine bad\nchange deterministic\nstates s0\nobs lo\nactions\n";
        let err = parse_machine("bad.mach", text).unwrap_err();
        assert_eq!(err.span.line, 1);
        assert!(err.message.contains("no `view` line for state `s0`"), "{err}");

        // Duplicate carrier symbol.
        let text = "machine bad\nchange deterministic\nstates s0 s0\nobs lo\nactions\n";
        let err = parse_machine("bad.mach", text).unwrap_err();
        assert_eq!(err.span.line, 3);
        assert!(err.message.contains("duplicate symbol"), "{err}");

        // Set update on a deterministic machine.
        let text = "machine bad\n\
change deterministic\n\
states s0\n\
obs lo\n\
actions go\n\
view s0 lo\n\
update s0 go { s0 }\n";
        let err = parse_machine("bad.mach", text).unwrap_err();
        assert_eq!(err.span.line, 7);
        assert!(err.message.contains("single next state"), "{err}");
    }

    #[test]
    fn wiring_patterns_build_the_algebra_lenses() {
        let cascade = "wiring stage_pair\n\
pattern cascade\n\
actions act\n\
obs1 u\n\
mid lo hi\n\
obs2 v\n";
        let doc = parse_wiring("w.wire", cascade).unwrap();
        assert_eq!(
            doc.lens,
            make_cascade(&set(&["act"]), &set(&["u"]), &set(&["lo", "hi"]), &set(&["v"]))
        );
        // The backward map routes (a, (m, a)).
        let o = Symbol::pair(Symbol::pair(sym("u"), sym("lo")), sym("v"));
        assert_eq!(
            doc.lens.bwd(&o, &sym("act")).unwrap(),
            &Symbol::pair(sym("act"), Symbol::pair(sym("lo"), sym("act")))
        );
        assert_eq!(print_document(&Document::Wiring(doc)), cascade);

        let feedback = "wiring latch\n\
pattern feedback\n\
actions go stay\n\
mid 0 1\n\
obs ok err\n";
        let doc = parse_wiring("w.wire", feedback).unwrap();
        assert_eq!(
            doc.lens,
            make_feedback(&set(&["go", "stay"]), &set(&["0", "1"]), &set(&["ok", "err"]))
        );
        assert_eq!(print_document(&Document::Wiring(doc)), feedback);

        let parallel = "wiring pair\n\
pattern parallel\n\
obs1 lo hi\n\
actions1 go stay\n\
obs2 q\n\
actions2 tick\n";
        let doc = parse_wiring("w.wire", parallel).unwrap();
        let iface = Interface::simple(set(&["lo", "hi"]), set(&["go", "stay"]))
            .product(&Interface::simple(set(&["q"]), set(&["tick"])));
        assert_eq!(doc.lens, identity_lens(&iface));
        assert_eq!(print_document(&Document::Wiring(doc)), parallel);
    }

    #[test]
    fn explicit_wiring_round_trips_and_matches_hand_tables() {
        let text = "wiring relabel\n\
pattern explicit\n\
src-obs p q\n\
src-actions c d\n\
dst-obs x\n\
dst-actions a b\n\
fwd p x\n\
fwd q x\n\
bwd p a c\n\
bwd p b d\n\
bwd q a d\n\
bwd q b c\n";
        let doc = parse_wiring("w.wire", text).unwrap();
        assert_eq!(doc.lens.fwd(&sym("p")).unwrap(), &sym("x"));
        assert_eq!(doc.lens.bwd(&sym("q"), &sym("b")).unwrap(), &sym("c"));
        assert_eq!(print_document(&Document::Wiring(doc)), text);

        // A missing bwd row is caught with the pair named.
        let partial = text.replace("bwd q b c\n", "");
        let err = parse_wiring("w.wire", &partial).unwrap_err();
        assert!(err.message.contains("no `bwd` line for (`q`, `b`)"), "{err}");
    }

    #[test]
    fn bool_cert_documents_bind_to_machines() {
        let text = "bool-cert safe\n\
obs lo hi\n\
actions go stay\n\
gamma lo hi\n\
alpha lo go\n\
alpha lo stay\n\
alpha hi go\n\
alpha hi stay\n\
phi s0 s1\n";
        let docs = parse_certificates("c.cert", text).unwrap();
        assert_eq!(docs.len(), 1);
        let Document::BoolCert(doc) = &docs[0] else {
            panic!("expected a bool-cert");
        };
        assert_eq!(print_document(&docs[0]), text);
        let mc = doc.to_machine_certificate(&toggle_machine()).unwrap();
        assert!(certify_machine(mc.machine(), &mc).unwrap().holds);
    }

    #[test]
    fn ill_formed_certificate_is_a_parse_error_with_the_alpha_line_span() {
        let text = "bool-cert wrong\n\
obs ok err\n\
actions go stop\n\
gamma ok\n\
alpha err stop\n";
        let err = parse_certificates("c.cert", text).unwrap_err();
        assert_eq!(err.span.line, 5);
        assert!(
            err.message.contains("assumptions must imply guarantees"),
            "{err}"
        );
    }

    #[test]
    fn gamma_symbols_canonicalize_to_carrier_order() {
        let text = "bool-cert any\nobs ok err\nactions go\ngamma err ok\n";
        let docs = parse_certificates("c.cert", text).unwrap();
        let Document::BoolCert(doc) = &docs[0] else {
            panic!("expected a bool-cert");
        };
        assert_eq!(doc.gamma, vec![sym("ok"), sym("err")]);
        let printed = print_document(&docs[0]);
        assert_eq!(parse_certificates("c.cert", &printed).unwrap()[0], docs[0]);
    }

    #[test]
    fn quant_cert_interface_form_round_trips() {
        let text = "quant-cert stage\n\
obs-dim 2\n\
act-dim 2\n\
gamma 2*o1^2+o2^2\n\
alpha a1^2+a2^2\n";
        let docs = parse_certificates("q.cert", text).unwrap();
        assert_eq!(print_document(&docs[0]), text);
        let Document::QuantCert(doc) = &docs[0] else {
            panic!("expected a quant-cert");
        };
        let cert = doc.to_quant_certificate().unwrap();
        assert_eq!(cert.obs_dim(), 2);
        assert_eq!(cert.gamma_at(&[1.0, 2.0]).unwrap(), 6.0);

        // γ that misses the base point is rejected at the gamma line.
        let bad = text.replace("gamma 2*o1^2+o2^2", "gamma o1+1");
        let err = parse_certificates("q.cert", &bad).unwrap_err();
        assert_eq!(err.span.line, 4);
        assert!(err.message.contains("vanish"), "{err}");

        // Out-of-range variable is rejected at its line.
        let bad = text.replace("alpha a1^2+a2^2", "alpha a3^2");
        let err = parse_certificates("q.cert", &bad).unwrap_err();
        assert_eq!(err.span.line, 5);
        assert!(err.message.contains("a3"), "{err}");
    }

    #[test]
    fn quant_cert_lyapunov_form_round_trips_and_validates() {
        let text = "quant-cert energy\n\
phi x1^2\n\
alpha a1^2\n\
gamma o1^2\n\
lambda zero\n";
        let docs = parse_certificates("q.cert", text).unwrap();
        assert_eq!(print_document(&docs[0]), text);
        let Document::QuantCert(doc) = &docs[0] else {
            panic!("expected a quant-cert");
        };
        let cand = doc.to_candidate().unwrap();
        assert_eq!(cand.phi.to_string(), "x1^2");
        assert_eq!(cand.lambda, PLFun::zero());

        // λ = id fails the decrease-rate class check at the lambda line.
        let bad = text.replace("lambda zero", "lambda id");
        let err = parse_certificates("q.cert", &bad).unwrap_err();
        assert_eq!(err.span.line, 5);
        assert!(err.message.contains("K-infinity"), "{err}");

        // α mentioning the state is rejected at the alpha line.
        let bad = text.replace("alpha a1^2", "alpha a1^2+x1");
        let err = parse_certificates("q.cert", &bad).unwrap_err();
        assert_eq!(err.span.line, 3);
        assert!(err.message.contains("input variables"), "{err}");
    }

    const LEAKY: &str = "ode leaky\n\
state-dim 1\n\
input-dim 1\n\
obs-dim 1\n\
field -x1+a1\n\
view x1/2\n\
x0 0\n\
a0 0\n\
domain -2 2\n\
input-domain -1 1\n";

    #[test]
    fn ode_document_round_trips_and_validates() {
        let doc = parse_ode("leaky.ode", LEAKY).unwrap();
        assert_eq!(doc.ode.state_dim(), 1);
        assert_eq!(doc.ode.field_at(&[1.0], &[0.25]).unwrap(), vec![-0.75]);
        assert_eq!(print_document(&Document::Ode(doc)), LEAKY);

        // Field using an out-of-range variable errors at the field line.
        let bad = LEAKY.replace("field -x1+a1", "field -x1+x2");
        let err = parse_ode("leaky.ode", &bad).unwrap_err();
        assert_eq!(err.span.line, 5);
        assert!(err.message.contains("x2"), "{err}");

        // Non-equilibrium base point errors at the header.
        let bad = LEAKY.replace("a0 0", "a0 1");
        let err = parse_ode("leaky.ode", &bad).unwrap_err();
        assert_eq!(err.span.line, 1);
        assert!(err.message.contains("equilibrium"), "{err}");

        // A closed system drops the input lines entirely.
        let closed = "ode decay\n\
state-dim 1\n\
input-dim 0\n\
obs-dim 1\n\
field -x1\n\
view x1\n\
x0 0\n\
domain -1 1\n";
        let doc = parse_ode("decay.ode", closed).unwrap();
        assert_eq!(doc.ode.input_dim(), 0);
        assert_eq!(print_document(&Document::Ode(doc)), closed);
    }

    const COLLAPSE: &str = "simulation collapse\n\
src-change deterministic\n\
src-states s0 s1\n\
src-obs lo hi\n\
src-actions go stay\n\
src-view s0 lo\n\
src-view s1 hi\n\
src-update s0 go s1\n\
src-update s0 stay s0\n\
src-update s1 go s0\n\
src-update s1 stay s1\n\
dst-change deterministic\n\
dst-states t\n\
dst-obs any\n\
dst-actions go stay\n\
dst-view t any\n\
dst-update t go t\n\
dst-update t stay t\n\
chart-obs lo any\n\
chart-obs hi any\n\
chart-act lo go go\n\
chart-act lo stay stay\n\
chart-act hi go go\n\
chart-act hi stay stay\n\
map s0 t\n\
map s1 t\n";

    #[test]
    fn simulation_document_round_trips_and_its_squares_commute() {
        let doc = parse_simulation("collapse.sim", COLLAPSE).unwrap();
        assert_eq!(doc.sim.src(), &toggle_machine());
        assert!(check_simulation(&doc.sim).holds);
        assert_eq!(print_document(&Document::Simulation(doc)), COLLAPSE);

        // A missing map line is reported with the state named.
        let partial = COLLAPSE.replace("map s1 t\n", "");
        let err = parse_simulation("collapse.sim", &partial).unwrap_err();
        assert!(err.message.contains("no `map` line for state `s1`"), "{err}");
    }

    #[test]
    fn files_hold_multiple_documents() {
        let text = format!("{TOGGLE}\n{LEAKY}");
        let docs = parse_documents("mixed.txt", &text).unwrap();
        assert_eq!(docs.len(), 2);
        assert_eq!(docs[0].kind(), "machine");
        assert_eq!(docs[1].kind(), "ode");
        assert_eq!(docs[0].name(), "toggle");
        // print_documents round-trips the whole file.
        let printed = print_documents(&docs);
        assert_eq!(parse_documents("mixed.txt", &printed).unwrap(), docs);
    }

    #[test]
    fn content_before_a_header_is_rejected() {
        let err = parse_documents("x.txt", "states s0 s1\n").unwrap_err();
        assert_eq!(err.span.line, 1);
        assert!(err.message.contains("document header"), "{err}");

        let err = parse_documents("x.txt", "machine\n").unwrap_err();
        assert!(err.message.contains("needs a name"), "{err}");
    }

    #[test]
    fn unknown_sections_and_kind_mismatches_are_rejected() {
        let text = "machine m\nchange deterministic\nstates s\nobs o\nactions\nview s o\nbogus 1\n";
        let err = parse_machine("m.mach", text).unwrap_err();
        assert_eq!(err.span.line, 7);
        assert!(err.message.contains("unknown section `bogus`"), "{err}");

        let err = parse_wiring("m.mach", TOGGLE).unwrap_err();
        assert!(err.message.contains("expected a wiring document"), "{err}");

        let err = parse_certificates("m.mach", TOGGLE).unwrap_err();
        assert!(err.message.contains("certificate documents only"), "{err}");
    }

    #[test]
    fn pair_symbols_survive_printing() {
        // Product-state machines print pair symbols that reparse exactly.
        let m1 = toggle_machine();
        let coupled = crate::machine::parallel_machines(&m1, &m1).unwrap();
        let doc = Document::Machine(MachineDoc::new("pair", coupled));
        let printed = print_document(&doc);
        let reparsed = parse_machine("pair.mach", &printed).unwrap();
        assert_eq!(Document::Machine(reparsed), doc);
    }

    #[test]
    fn machine_certificate_documents_regenerate_from_bound_certificates() {
        let text = "bool-cert safe\n\
obs lo hi\n\
actions go stay\n\
gamma lo hi\n\
alpha lo go\n\
alpha lo stay\n\
alpha hi go\n\
alpha hi stay\n\
phi s0 s1\n";
        let docs = parse_certificates("c.cert", text).unwrap();
        let Document::BoolCert(doc) = &docs[0] else {
            panic!("expected a bool-cert");
        };
        let mc = doc.to_machine_certificate(&toggle_machine()).unwrap();
        let back = BoolCertDoc::from_machine_certificate("safe", &mc).unwrap();
        assert_eq!(&back, doc);
    }
}
