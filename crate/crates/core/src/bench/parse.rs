//! Parser for the bench text format.
//!
//! One statement per line, `#` starts a comment:
//!
//! ```text
//! path <name>
//! source photon <path> <H|V>
//! bs <pathA> <pathB> theta=<radians>
//! phase <path> knob
//! phase <path> value=<radians>
//! pbs <inA> <inB> <outA> <outB>
//! qwp <path> angle=<radians>
//! hwp <path> angle=<radians>
//! eop <path>
//! delay <path> length_m=<float>
//! mirror <path>
//! detector <name> <path> <H|V>
//! ```

use std::collections::HashMap;

use super::{Bench, BenchBuilder, DiagCode, Diagnostic, Span};
use crate::fock::Polarization;
use crate::optics::{Element, OpticsError, PathId, PhaseSetting};

struct Token<'a> {
    text: &'a str,
    span: Span,
}

fn tokenize(line: &str, line_no: usize) -> Vec<Token<'_>> {
    let code = match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    };
    let mut tokens = Vec::new();
    let mut start = None;
    for (i, ch) in code.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                tokens.push((s, i));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        tokens.push((s, code.len()));
    }
    tokens
        .into_iter()
        .map(|(s, e)| Token {
            text: &code[s..e],
            span: Span {
                line: line_no,
                column: code[..s].chars().count() + 1,
            },
        })
        .collect()
}

struct Parser {
    builder: BenchBuilder,
    paths: HashMap<String, PathId>,
    detector_names: HashMap<String, Span>,
    diags: Vec<Diagnostic>,
}

impl Parser {
    fn error(&mut self, code: DiagCode, span: Span, msg: impl Into<String>) {
        self.diags.push(Diagnostic::new(code, span, msg));
    }

    fn path(&mut self, tok: &Token) -> Option<PathId> {
        match self.paths.get(tok.text) {
            Some(&id) => Some(id),
            None => {
                self.error(
                    DiagCode::UndeclaredPath,
                    tok.span,
                    format!("path `{}` is not declared", tok.text),
                );
                None
            }
        }
    }

    fn polarization(&mut self, tok: &Token) -> Option<Polarization> {
        match tok.text {
            "H" => Some(Polarization::H),
            "V" => Some(Polarization::V),
            other => {
                self.error(
                    DiagCode::Syntax,
                    tok.span,
                    format!("expected H or V, found `{other}`"),
                );
                None
            }
        }
    }

    fn keyed_float(&mut self, tok: &Token, key: &str) -> Option<f64> {
        let Some(value) = tok.text.strip_prefix(key).and_then(|r| r.strip_prefix('=')) else {
            self.error(
                DiagCode::Syntax,
                tok.span,
                format!("expected `{key}=<number>`, found `{}`", tok.text),
            );
            return None;
        };
        match value.parse::<f64>() {
            Ok(v) if v.is_finite() => Some(v),
            _ => {
                self.error(
                    DiagCode::BadParam,
                    tok.span,
                    format!("`{value}` is not a finite number"),
                );
                None
            }
        }
    }

    fn arity(&mut self, toks: &[Token], n: usize, usage: &str) -> bool {
        if toks.len() == n {
            true
        } else {
            self.error(
                DiagCode::Syntax,
                toks[0].span,
                format!("expected `{usage}`"),
            );
            false
        }
    }

    fn push_element(&mut self, span: Span, built: Result<Element, OpticsError>) {
        match built {
            Ok(e) => {
                self.builder.element(e);
                self.builder.source_map().elements.push(span);
            }
            Err(err) => {
                let code = match err {
                    OpticsError::BadWiring(_) => DiagCode::BadWiring,
                    _ => DiagCode::BadParam,
                };
                self.error(code, span, err.to_string());
            }
        }
    }

    fn statement(&mut self, toks: &[Token]) {
        let head = &toks[0];
        let span = head.span;
        match head.text {
            "path" => {
                if !self.arity(toks, 2, "path <name>") {
                    return;
                }
                let name = toks[1].text;
                if self.paths.contains_key(name) {
                    self.error(
                        DiagCode::DuplicatePath,
                        toks[1].span,
                        format!("path `{name}` declared twice"),
                    );
                    return;
                }
                let id = self.builder.path(name);
                self.builder.source_map().paths.push(span);
                self.paths.insert(name.to_string(), id);
            }
            "source" => {
                if !self.arity(toks, 4, "source photon <path> <H|V>") {
                    return;
                }
                if toks[1].text != "photon" {
                    self.error(
                        DiagCode::Syntax,
                        toks[1].span,
                        format!("expected `photon`, found `{}`", toks[1].text),
                    );
                    return;
                }
                let (p, pol) = (self.path(&toks[2]), self.polarization(&toks[3]));
                if let (Some(p), Some(pol)) = (p, pol) {
                    self.builder.source(p, pol);
                    self.builder.source_map().sources.push(span);
                }
            }
            "bs" => {
                if !self.arity(toks, 4, "bs <pathA> <pathB> theta=<radians>") {
                    return;
                }
                let a = self.path(&toks[1]);
                let b = self.path(&toks[2]);
                let theta = self.keyed_float(&toks[3], "theta");
                if let (Some(a), Some(b), Some(theta)) = (a, b, theta) {
                    self.push_element(span, Element::beam_splitter(a, b, theta));
                }
            }
            "phase" => {
                if !self.arity(toks, 3, "phase <path> knob|value=<radians>") {
                    return;
                }
                let p = self.path(&toks[1]);
                let setting = if toks[2].text == "knob" {
                    Some(PhaseSetting::Knob)
                } else {
                    self.keyed_float(&toks[2], "value").map(PhaseSetting::Fixed)
                };
                if let (Some(p), Some(setting)) = (p, setting) {
                    self.push_element(span, Element::phase_shifter(p, setting));
                }
            }
            "pbs" => {
                if !self.arity(toks, 5, "pbs <inA> <inB> <outA> <outB>") {
                    return;
                }
                let ids: Vec<Option<PathId>> = toks[1..].iter().map(|t| self.path(t)).collect();
                if let [Some(a), Some(b), Some(c), Some(d)] = ids[..] {
                    self.push_element(span, Element::polarizing_bs(a, b, c, d));
                }
            }
            "qwp" | "hwp" => {
                if !self.arity(toks, 3, &format!("{} <path> angle=<radians>", head.text)) {
                    return;
                }
                let p = self.path(&toks[1]);
                let angle = self.keyed_float(&toks[2], "angle");
                if let (Some(p), Some(angle)) = (p, angle) {
                    let e = if head.text == "qwp" {
                        Element::quarter_wave_plate(p, angle)
                    } else {
                        Element::half_wave_plate(p, angle)
                    };
                    self.push_element(span, e);
                }
            }
            "eop" | "mirror" => {
                if !self.arity(toks, 2, &format!("{} <path>", head.text)) {
                    return;
                }
                if let Some(p) = self.path(&toks[1]) {
                    let e = if head.text == "eop" {
                        Element::pockels_cell(p)
                    } else {
                        Element::mirror(p)
                    };
                    self.push_element(span, Ok(e));
                }
            }
            "delay" => {
                if !self.arity(toks, 3, "delay <path> length_m=<float>") {
                    return;
                }
                let p = self.path(&toks[1]);
                let len = self.keyed_float(&toks[2], "length_m");
                if let (Some(p), Some(len)) = (p, len) {
                    self.push_element(span, Element::delay_line(p, len));
                }
            }
            "detector" => {
                if !self.arity(toks, 4, "detector <name> <path> <H|V>") {
                    return;
                }
                let name = toks[1].text;
                if let Some(first) = self.detector_names.get(name).copied() {
                    self.error(
                        DiagCode::DuplicateDetector,
                        toks[1].span,
                        format!("detector `{name}` already declared on line {}", first.line),
                    );
                    return;
                }
                let (p, pol) = (self.path(&toks[2]), self.polarization(&toks[3]));
                if let (Some(p), Some(pol)) = (p, pol) {
                    self.detector_names.insert(name.to_string(), span);
                    self.builder.detector(name, p, pol);
                    self.builder.source_map().detectors.push(span);
                }
            }
            other => self.error(
                DiagCode::UnknownElement,
                span,
                format!("unknown statement `{other}`"),
            ),
        }
    }
}

/// Parses bench text. On failure every error found is returned, in order of
/// appearance, with whole-file problems (missing source, detectors, knob)
/// first.
pub fn parse(source: &str) -> Result<Bench, Vec<Diagnostic>> {
    let mut parser = Parser {
        builder: BenchBuilder::new(),
        paths: HashMap::new(),
        detector_names: HashMap::new(),
        diags: Vec::new(),
    };
    for (i, line) in source.lines().enumerate() {
        let toks = tokenize(line, i + 1);
        if !toks.is_empty() {
            parser.statement(&toks);
        }
    }
    let line_errors = std::mem::take(&mut parser.diags);
    let bench = parser.builder.finish();

    // Whole-bench checks; per-element ones were already done while parsing.
    let mut diags: Vec<Diagnostic> = bench
        .validate()
        .into_iter()
        .filter(|d| {
            d.is_error()
                && matches!(
                    d.code,
                    DiagCode::MissingSource
                        | DiagCode::MissingDetector
                        | DiagCode::MissingPhaseKnob
                        | DiagCode::MultiplePhaseKnobs
                        | DiagCode::TooManyPhotons
                )
        })
        .collect();
    diags.sort_by_key(|d| d.code);
    diags.extend(line_errors);
    if diags.is_empty() {
        Ok(bench)
    } else {
        Err(diags)
    }
}
