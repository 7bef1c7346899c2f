//! Text format for PLG circuits (`.plg` files): parser, canonical
//! serializer and linter.
//!
//! One statement per line, `#` starts a comment, whitespace between tokens
//! is free. Units are fixed per keyword and not written in the text:
//! pressures in bar, lengths and diameters in mm.
//!
//! ```text
//! module  <id> <inverter|buffer|generic> [bellow(thickness=<mm>, ...)] [ratio=<r>]
//! supply  <id> pressure=<bar>
//! connect <a>.<SOCKET> -> <b>.<SOCKET> [tube(len=<mm>, id=<mm>)]
//! stopper <id>.<SOCKET>
//! ```
//!
//! `bellow(...)` accepts `thickness` (required) plus the optional geometry
//! keys `pitch`, `external_angle`, `internal_angle`, `outer_diameter` and
//! `length`; `tube(...)` accepts `len` and `id` and defaults to a 140 mm
//! tube of 2 mm bore when omitted. Unknown keys are errors. Numbers are
//! decimal with an optional fraction; no exponents.
//!
//! Canonical form (what [`serialize`] emits) lists modules in id order,
//! then supplies, connects and stoppers, with every tube written out
//! explicitly. Output is byte-identical across runs for equal netlists.
//!
//! A sibling one-gate format (`.gate` files) describes generic-gate valve
//! wiring for truth-table queries; see [`parse_gate_wiring`].

use thiserror::Error;

use crate::actuator::BellowSpec;
use crate::circuit::{
    DiagCode, Diagnostic, Endpoint, GateKind, GenericWiring, ModuleSpec, Netlist, Socket,
    StopperSpec, SupplySpec, TubeSpec, ValidationReport, ValveKind, ValveSpec,
    DEFAULT_OUTPUT_RATIO, DEFAULT_TUBE_INNER_DIAMETER_MM, DEFAULT_TUBE_LENGTH_MM,
};

/// Position of a token in the parsed text; line and column are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceSpan {
    pub line: usize,
    pub column: usize,
    pub length: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    UnknownSocket,
    UnknownModuleRef,
    UnknownKey,
    InvalidValue,
}

/// Deterministic parse failure at a specific span.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {}, column {}: expected {expected}, found {found}", span.line, span.column)]
pub struct ParseError {
    pub span: SourceSpan,
    pub kind: ParseErrorKind,
    pub expected: String,
    pub found: String,
}

impl ParseError {
    fn new(span: SourceSpan, kind: ParseErrorKind, expected: &str, found: &str) -> ParseError {
        ParseError {
            span,
            kind,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum DslError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("netlist fails validation with {} error(s); first: {first}", report.errors.len())]
    InvalidNetlist {
        report: ValidationReport,
        first: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    text: String,
    column: usize,
}

impl Token {
    fn span(&self, line: usize) -> SourceSpan {
        SourceSpan {
            line,
            column: self.column,
            length: self.text.chars().count(),
        }
    }
}

fn lex_line(line_no: usize, line: &str) -> Result<Vec<Token>, ParseError> {
    let chars: Vec<char> = line.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '#' {
            break;
        }
        let column = i + 1;
        if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < chars.len() && chars[i] == '.' && chars[i + 1].is_ascii_digit() {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            tokens.push(Token {
                text: chars[start..i].iter().collect(),
                column,
            });
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            tokens.push(Token {
                text: chars[start..i].iter().collect(),
                column,
            });
        } else if c == '-' && i + 1 < chars.len() && chars[i + 1] == '>' {
            tokens.push(Token {
                text: "->".to_string(),
                column,
            });
            i += 2;
        } else if matches!(c, '.' | '(' | ')' | '=' | ',') {
            tokens.push(Token {
                text: c.to_string(),
                column,
            });
            i += 1;
        } else {
            return Err(ParseError::new(
                SourceSpan {
                    line: line_no,
                    column,
                    length: 1,
                },
                ParseErrorKind::Syntax,
                "statement token",
                &c.to_string(),
            ));
        }
    }
    Ok(tokens)
}

struct Cursor<'a> {
    line: usize,
    line_len: usize,
    tokens: &'a [Token],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(line: usize, line_text: &str, tokens: &'a [Token]) -> Cursor<'a> {
        Cursor {
            line,
            line_len: line_text.chars().count(),
            tokens,
            pos: 0,
        }
    }

    fn end_span(&self) -> SourceSpan {
        SourceSpan {
            line: self.line,
            column: self.line_len + 1,
            length: 0,
        }
    }

    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self, expected: &str) -> Result<&'a Token, ParseError> {
        match self.tokens.get(self.pos) {
            Some(tok) => {
                self.pos += 1;
                Ok(tok)
            }
            None => Err(ParseError::new(
                self.end_span(),
                ParseErrorKind::Syntax,
                expected,
                "end of line",
            )),
        }
    }

    fn expect(&mut self, text: &str) -> Result<&'a Token, ParseError> {
        let tok = self.next(&format!("`{text}`"))?;
        if tok.text == text {
            Ok(tok)
        } else {
            Err(ParseError::new(
                tok.span(self.line),
                ParseErrorKind::Syntax,
                &format!("`{text}`"),
                &tok.text,
            ))
        }
    }

    fn ident(&mut self, expected: &str) -> Result<&'a Token, ParseError> {
        let tok = self.next(expected)?;
        let mut chars = tok.text.chars();
        let head_ok = chars
            .next()
            .map(|c| c.is_alphabetic() || c == '_')
            .unwrap_or(false);
        if head_ok {
            Ok(tok)
        } else {
            Err(ParseError::new(
                tok.span(self.line),
                ParseErrorKind::Syntax,
                expected,
                &tok.text,
            ))
        }
    }

    fn number(&mut self, expected: &str) -> Result<(f64, &'a Token), ParseError> {
        let tok = self.next(expected)?;
        match tok.text.parse::<f64>() {
            Ok(v) if tok.text.chars().next().map(|c| c.is_ascii_digit()) == Some(true) => {
                Ok((v, tok))
            }
            _ => Err(ParseError::new(
                tok.span(self.line),
                ParseErrorKind::Syntax,
                expected,
                &tok.text,
            )),
        }
    }

    fn done(&mut self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(tok) => Err(ParseError::new(
                tok.span(self.line),
                ParseErrorKind::Syntax,
                "end of statement",
                &tok.text,
            )),
        }
    }

    fn socket(&mut self) -> Result<Socket, ParseError> {
        let tok = self.ident("socket name")?;
        tok.text.parse::<Socket>().map_err(|()| {
            ParseError::new(
                tok.span(self.line),
                ParseErrorKind::UnknownSocket,
                "socket name (SP_IN, SP_THRU, T, OUT, OUT_NEXT, C1, C2, EXHAUST)",
                &tok.text,
            )
        })
    }

    fn endpoint(&mut self) -> Result<(String, Socket, SourceSpan), ParseError> {
        let module = self.ident("module reference")?;
        self.expect(".")?;
        let socket = self.socket()?;
        Ok((module.text.clone(), socket, module.span(self.line)))
    }

    /// Parses `name(key=value, ...)` bodies after `name` was consumed.
    fn key_values(
        &mut self,
        allowed: &[&str],
    ) -> Result<Vec<(String, f64, SourceSpan)>, ParseError> {
        self.expect("(")?;
        let mut pairs: Vec<(String, f64, SourceSpan)> = Vec::new();
        loop {
            let key = self.ident("parameter key")?;
            if !allowed.contains(&key.text.as_str()) {
                return Err(ParseError::new(
                    key.span(self.line),
                    ParseErrorKind::UnknownKey,
                    &format!("one of {}", allowed.join(", ")),
                    &key.text,
                ));
            }
            if pairs.iter().any(|(k, _, _)| *k == key.text) {
                return Err(ParseError::new(
                    key.span(self.line),
                    ParseErrorKind::UnknownKey,
                    "each key at most once",
                    &key.text,
                ));
            }
            self.expect("=")?;
            let (value, tok) = self.number("number")?;
            pairs.push((key.text.clone(), value, tok.span(self.line)));
            let tok = self.next("`,` or `)`")?;
            match tok.text.as_str() {
                "," => continue,
                ")" => break,
                other => {
                    return Err(ParseError::new(
                        tok.span(self.line),
                        ParseErrorKind::Syntax,
                        "`,` or `)`",
                        other,
                    ))
                }
            }
        }
        Ok(pairs)
    }
}

/// Parses `.plg` text into a [`Netlist`].
///
/// The result is structurally identical to what the builders produce for
/// the same circuit. Parsing does not validate: a parsed netlist may still
/// fail [`Netlist::validate`].
pub fn parse(text: &str) -> Result<Netlist, ParseError> {
    let mut netlist = Netlist::default();
    // module references found in supply/connect/stopper lines, resolved
    // once all module statements are known.
    let mut references: Vec<(String, SourceSpan)> = Vec::new();

    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let tokens = lex_line(line_no, line)?;
        if tokens.is_empty() {
            continue;
        }
        let mut cursor = Cursor::new(line_no, line, &tokens);
        let keyword = cursor.ident("statement keyword")?;
        match keyword.text.as_str() {
            "module" => {
                let id = cursor.ident("module id")?;
                let kind_tok = cursor.ident("gate kind (inverter, buffer, generic)")?;
                let gate = match kind_tok.text.as_str() {
                    "inverter" => GateKind::Inverter,
                    "buffer" => GateKind::Buffer,
                    "generic" => GateKind::Generic(GenericWiring::conventional()),
                    other => {
                        return Err(ParseError::new(
                            kind_tok.span(line_no),
                            ParseErrorKind::Syntax,
                            "gate kind (inverter, buffer, generic)",
                            other,
                        ))
                    }
                };
                let mut bellow = None;
                let mut ratio = DEFAULT_OUTPUT_RATIO;
                while let Some(tok) = cursor.peek() {
                    match tok.text.as_str() {
                        "bellow" => {
                            cursor.next("`bellow`")?;
                            let pairs = cursor.key_values(&[
                                "thickness",
                                "pitch",
                                "external_angle",
                                "internal_angle",
                                "outer_diameter",
                                "length",
                            ])?;
                            let thickness = pairs
                                .iter()
                                .find(|(k, _, _)| k == "thickness")
                                .ok_or_else(|| {
                                    ParseError::new(
                                        tok.span(line_no),
                                        ParseErrorKind::Syntax,
                                        "bellow(thickness=...)",
                                        "bellow without thickness",
                                    )
                                })?;
                            let mut spec =
                                BellowSpec::with_thickness(thickness.1).map_err(|e| {
                                    ParseError::new(
                                        thickness.2,
                                        ParseErrorKind::InvalidValue,
                                        "wall thickness in [1.0, 3.0] mm",
                                        &e.to_string(),
                                    )
                                })?;
                            for (key, value, _) in &pairs {
                                match key.as_str() {
                                    "thickness" => {}
                                    "pitch" => spec.pitch_mm = *value,
                                    "external_angle" => spec.external_angle_deg = *value,
                                    "internal_angle" => spec.internal_angle_deg = *value,
                                    "outer_diameter" => spec.outer_diameter_mm = *value,
                                    "length" => spec.length_mm = *value,
                                    _ => unreachable!("filtered by key_values"),
                                }
                            }
                            bellow = Some(spec);
                        }
                        "ratio" => {
                            cursor.next("`ratio`")?;
                            cursor.expect("=")?;
                            let (value, vtok) = cursor.number("output ratio")?;
                            if !(value > 0.0 && value <= 1.0) {
                                return Err(ParseError::new(
                                    vtok.span(line_no),
                                    ParseErrorKind::InvalidValue,
                                    "ratio in (0, 1]",
                                    &vtok.text,
                                ));
                            }
                            ratio = value;
                        }
                        other => {
                            return Err(ParseError::new(
                                tok.span(line_no),
                                ParseErrorKind::Syntax,
                                "`bellow(...)`, `ratio=...` or end of statement",
                                other,
                            ))
                        }
                    }
                }
                cursor.done()?;
                netlist.modules.push(ModuleSpec {
                    id: id.text.as_str().into(),
                    gate,
                    bellow,
                    output_ratio: ratio,
                });
            }
            "supply" => {
                let id = cursor.ident("module id")?;
                let key = cursor.ident("`pressure`")?;
                if key.text != "pressure" {
                    return Err(ParseError::new(
                        key.span(line_no),
                        ParseErrorKind::Syntax,
                        "`pressure`",
                        &key.text,
                    ));
                }
                cursor.expect("=")?;
                let (pressure, _) = cursor.number("pressure in bar")?;
                cursor.done()?;
                references.push((id.text.clone(), id.span(line_no)));
                netlist.supplies.push(SupplySpec {
                    module: id.text.as_str().into(),
                    pressure_bar: pressure,
                });
            }
            "connect" => {
                let (from_mod, from_sock, from_span) = cursor.endpoint()?;
                cursor.expect("->")?;
                let (to_mod, to_sock, to_span) = cursor.endpoint()?;
                let mut length = DEFAULT_TUBE_LENGTH_MM;
                let mut inner = DEFAULT_TUBE_INNER_DIAMETER_MM;
                if let Some(tok) = cursor.peek() {
                    if tok.text == "tube" {
                        cursor.next("`tube`")?;
                        for (key, value, _) in cursor.key_values(&["len", "id"])? {
                            match key.as_str() {
                                "len" => length = value,
                                "id" => inner = value,
                                _ => unreachable!("filtered by key_values"),
                            }
                        }
                    } else {
                        return Err(ParseError::new(
                            tok.span(line_no),
                            ParseErrorKind::Syntax,
                            "`tube(...)` or end of statement",
                            &tok.text,
                        ));
                    }
                }
                cursor.done()?;
                references.push((from_mod.clone(), from_span));
                references.push((to_mod.clone(), to_span));
                netlist.tubes.push(TubeSpec {
                    from: Endpoint::new(from_mod.as_str(), from_sock),
                    to: Endpoint::new(to_mod.as_str(), to_sock),
                    length_mm: length,
                    inner_diameter_mm: inner,
                });
            }
            "stopper" => {
                let (module, socket, span) = cursor.endpoint()?;
                cursor.done()?;
                references.push((module.clone(), span));
                netlist.stoppers.push(StopperSpec {
                    module: module.as_str().into(),
                    socket,
                });
            }
            other => {
                return Err(ParseError::new(
                    keyword.span(line_no),
                    ParseErrorKind::Syntax,
                    "statement keyword (module, supply, connect, stopper)",
                    other,
                ))
            }
        }
    }

    for (name, span) in references {
        if !netlist.modules.iter().any(|m| m.id.as_str() == name) {
            return Err(ParseError::new(
                span,
                ParseErrorKind::UnknownModuleRef,
                "declared module id",
                &name,
            ));
        }
    }

    Ok(netlist)
}

/// Formats numbers without exponents; `2.0` prints as `2`.
fn fmt_num(v: f64) -> String {
    format!("{v}")
}

/// Canonical serialization of a valid netlist.
///
/// Statements come out in id order (modules, then supplies, connects,
/// stoppers) with explicit tube parameters, so output is byte-identical
/// across runs for equal netlists and `parse(serialize(n)) == n` for
/// canonically ordered `n`.
pub fn serialize(netlist: &Netlist) -> Result<String, DslError> {
    let report = netlist.validate();
    if !report.is_valid() {
        let first = report.errors[0].to_string();
        return Err(DslError::InvalidNetlist { report, first });
    }
    let mut canonical = netlist.clone();
    canonical.canonicalize();

    let mut out = String::new();
    for module in &canonical.modules {
        out.push_str(&format!("module {} {}", module.id, module.gate.name()));
        if let Some(bellow) = &module.bellow {
            out.push_str(&format!(
                " bellow(thickness={}",
                fmt_num(bellow.wall_thickness_mm)
            ));
            let optional = [
                ("pitch", bellow.pitch_mm, BellowSpec::DEFAULT_PITCH_MM),
                (
                    "external_angle",
                    bellow.external_angle_deg,
                    BellowSpec::DEFAULT_EXTERNAL_ANGLE_DEG,
                ),
                (
                    "internal_angle",
                    bellow.internal_angle_deg,
                    BellowSpec::DEFAULT_INTERNAL_ANGLE_DEG,
                ),
                (
                    "outer_diameter",
                    bellow.outer_diameter_mm,
                    BellowSpec::DEFAULT_OUTER_DIAMETER_MM,
                ),
                ("length", bellow.length_mm, BellowSpec::DEFAULT_LENGTH_MM),
            ];
            for (key, value, default) in optional {
                if value != default {
                    out.push_str(&format!(", {key}={}", fmt_num(value)));
                }
            }
            out.push(')');
        }
        if module.output_ratio != DEFAULT_OUTPUT_RATIO {
            out.push_str(&format!(" ratio={}", fmt_num(module.output_ratio)));
        }
        out.push('\n');
    }
    for supply in &canonical.supplies {
        out.push_str(&format!(
            "supply {} pressure={}\n",
            supply.module,
            fmt_num(supply.pressure_bar)
        ));
    }
    for tube in &canonical.tubes {
        out.push_str(&format!(
            "connect {} -> {} tube(len={}, id={})\n",
            tube.from,
            tube.to,
            fmt_num(tube.length_mm),
            fmt_num(tube.inner_diameter_mm)
        ));
    }
    for stopper in &canonical.stoppers {
        out.push_str(&format!("stopper {}.{}\n", stopper.module, stopper.socket));
    }
    Ok(out)
}

/// Warns about tubes no longer than the module spacing: tubes must leave
/// slack for the robot's elongation.
pub fn lint(netlist: &Netlist, module_spacing_mm: f64) -> Vec<Diagnostic> {
    let mut warnings = Vec::new();
    for tube in &netlist.tubes {
        if tube.length_mm <= module_spacing_mm {
            warnings.push(Diagnostic {
                code: DiagCode::TubeTooShort,
                message: format!(
                    "tube {} -> {} is {} mm, not longer than the {} mm module spacing",
                    tube.from, tube.to, tube.length_mm, module_spacing_mm
                ),
                location: tube.from.to_string(),
            });
        }
    }
    warnings
}

/// Parses a `.gate` wiring description for a generic gate:
///
/// ```text
/// valve NO OUT -> EXHAUST control=C2
/// valve NC T -> OUT control=C2
/// inputs C2, T
/// ```
pub fn parse_gate_wiring(text: &str) -> Result<GenericWiring, ParseError> {
    let mut valves = Vec::new();
    let mut inputs: Vec<Socket> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let tokens = lex_line(line_no, line)?;
        if tokens.is_empty() {
            continue;
        }
        let mut cursor = Cursor::new(line_no, line, &tokens);
        let keyword = cursor.ident("`valve` or `inputs`")?;
        match keyword.text.as_str() {
            "valve" => {
                let kind_tok = cursor.ident("valve kind (NO, NC)")?;
                let kind = match kind_tok.text.as_str() {
                    "NO" => ValveKind::NormallyOpen,
                    "NC" => ValveKind::NormallyClosed,
                    other => {
                        return Err(ParseError::new(
                            kind_tok.span(line_no),
                            ParseErrorKind::Syntax,
                            "valve kind (NO, NC)",
                            other,
                        ))
                    }
                };
                let tube_in = cursor.socket()?;
                cursor.expect("->")?;
                let tube_out = cursor.socket()?;
                let ctrl_tok = cursor.ident("`control`")?;
                if ctrl_tok.text != "control" {
                    return Err(ParseError::new(
                        ctrl_tok.span(line_no),
                        ParseErrorKind::Syntax,
                        "`control`",
                        &ctrl_tok.text,
                    ));
                }
                cursor.expect("=")?;
                let control = cursor.socket()?;
                cursor.done()?;
                valves.push(ValveSpec::new(kind, tube_in, tube_out, control));
            }
            "inputs" => loop {
                inputs.push(cursor.socket()?);
                match cursor.peek() {
                    Some(tok) if tok.text == "," => {
                        cursor.next("`,`")?;
                    }
                    Some(tok) => {
                        return Err(ParseError::new(
                            tok.span(line_no),
                            ParseErrorKind::Syntax,
                            "`,` or end of statement",
                            &tok.text,
                        ))
                    }
                    None => break,
                }
            },
            other => {
                return Err(ParseError::new(
                    keyword.span(line_no),
                    ParseErrorKind::Syntax,
                    "`valve` or `inputs`",
                    other,
                ))
            }
        }
    }
    GenericWiring::new(valves, inputs).map_err(|e| {
        ParseError::new(
            SourceSpan {
                line: 1,
                column: 1,
                length: 0,
            },
            ParseErrorKind::InvalidValue,
            "consistent valve wiring",
            &e.to_string(),
        )
    })
}
