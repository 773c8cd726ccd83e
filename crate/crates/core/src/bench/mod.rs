//! Bench descriptions: the mode table, ordered element pipeline, photon
//! sources and detectors of an optical set-up.
//!
//! Benches are read from a small line-oriented text format (see [`parse`]) or
//! built in code with [`BenchBuilder`]. [`builtin_figure1`] is the active
//! teleportation set-up; `data/figure1.bench` holds the same bench as text.

mod parse;

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use crate::fock::{ModeId, Polarization};
use crate::optics::{Element, PathId, PhaseSetting};

pub use parse::parse;

/// Text of the bundled teleportation bench file.
pub const FIGURE1_BENCH: &str = include_str!("../../data/figure1.bench");

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Error,
    Warning,
}

/// Stable diagnostic codes. The `Display` form is what appears in reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DiagCode {
    Syntax,
    UnknownElement,
    UndeclaredPath,
    DuplicatePath,
    DuplicateDetector,
    MissingSource,
    MissingDetector,
    MissingPhaseKnob,
    MultiplePhaseKnobs,
    TooManyPhotons,
    BadParam,
    BadWiring,
    UndeclaredFile,
    UnreferencedPath,
    UnreachableDetector,
}

impl DiagCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagCode::Syntax => "Syntax",
            DiagCode::UnknownElement => "UnknownElement",
            DiagCode::UndeclaredPath => "UndeclaredPath",
            DiagCode::DuplicatePath => "DuplicatePath",
            DiagCode::DuplicateDetector => "DuplicateDetector",
            DiagCode::MissingSource => "MissingSource",
            DiagCode::MissingDetector => "MissingDetector",
            DiagCode::MissingPhaseKnob => "MissingPhaseKnob",
            DiagCode::MultiplePhaseKnobs => "MultiplePhaseKnobs",
            DiagCode::TooManyPhotons => "TooManyPhotons",
            DiagCode::BadParam => "BadParam",
            DiagCode::BadWiring => "BadWiring",
            DiagCode::UndeclaredFile => "UndeclaredFile",
            DiagCode::UnreferencedPath => "UnreferencedPath",
            DiagCode::UnreachableDetector => "UnreachableDetector",
        }
    }

    pub fn severity(self) -> Severity {
        match self {
            DiagCode::UnreferencedPath | DiagCode::UnreachableDetector => Severity::Warning,
            _ => Severity::Error,
        }
    }
}

impl fmt::Display for DiagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// 1-based source position. `line == 0` means the item has no source text
/// (it was built in code).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord)]
pub struct Span {
    pub line: usize,
    pub column: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub code: DiagCode,
    pub span: Span,
    pub message: String,
}

impl Diagnostic {
    pub fn new(code: DiagCode, span: Span, message: impl Into<String>) -> Self {
        Diagnostic {
            code,
            span,
            message: message.into(),
        }
    }

    pub fn severity(&self) -> Severity {
        self.code.severity()
    }

    pub fn is_error(&self) -> bool {
        self.severity() == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity() {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(
            f,
            "{level}[{}] {}:{}: {}",
            self.code, self.span.line, self.span.column, self.message
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Detector {
    pub name: String,
    pub mode: ModeId,
}

/// Source positions of the items in a parsed bench, parallel to the item lists.
#[derive(Clone, Debug, Default)]
pub struct SourceMap {
    pub paths: Vec<Span>,
    pub sources: Vec<Span>,
    pub elements: Vec<Span>,
    pub detectors: Vec<Span>,
}

/// A compiled optical bench.
///
/// Equality ignores the [`SourceMap`], so a parsed bench compares equal to
/// the same bench built in code.
#[derive(Clone, Debug)]
pub struct Bench {
    pub paths: Vec<String>,
    /// Canonical mode order: paths in declaration order, H before V.
    pub modes: Vec<ModeId>,
    pub pipeline: Vec<Element>,
    pub detectors: Vec<Detector>,
    /// One entry per photon created at the start of each trial.
    pub sources: Vec<ModeId>,
    pub source_map: SourceMap,
}

impl PartialEq for Bench {
    fn eq(&self, other: &Self) -> bool {
        self.paths == other.paths
            && self.modes == other.modes
            && self.pipeline == other.pipeline
            && self.detectors == other.detectors
            && self.sources == other.sources
    }
}

impl Bench {
    pub fn path_id(&self, name: &str) -> Option<PathId> {
        self.paths.iter().position(|p| p == name).map(|i| i as PathId)
    }

    pub fn path_name(&self, id: PathId) -> &str {
        self.paths.get(id as usize).map(String::as_str).unwrap_or("?")
    }

    pub fn detector(&self, name: &str) -> Option<&Detector> {
        self.detectors.iter().find(|d| d.name == name)
    }

    /// Index of the swept phase shifter, if there is exactly one.
    pub fn phase_knob(&self) -> Option<usize> {
        let mut knobs = self.pipeline.iter().enumerate().filter(|(_, e)| e.is_knob());
        match (knobs.next(), knobs.next()) {
            (Some((i, _)), None) => Some(i),
            _ => None,
        }
    }

    fn element_span(&self, i: usize) -> Span {
        self.source_map.elements.get(i).copied().unwrap_or_default()
    }

    /// Checks every bench invariant. Errors and warnings are both returned;
    /// the list is empty iff the bench is clean.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        let n_paths = self.paths.len() as PathId;

        let expected_modes: Vec<ModeId> = (0..n_paths)
            .flat_map(|p| [ModeId::h(p), ModeId::v(p)])
            .collect();
        if self.modes != expected_modes {
            diags.push(Diagnostic::new(
                DiagCode::BadWiring,
                Span::default(),
                "mode table is not in canonical order",
            ));
        }

        if self.sources.is_empty() {
            diags.push(Diagnostic::new(
                DiagCode::MissingSource,
                Span::default(),
                "bench declares no photon source",
            ));
        }
        if self.sources.len() > 2 {
            diags.push(Diagnostic::new(
                DiagCode::TooManyPhotons,
                self.source_map.sources.get(2).copied().unwrap_or_default(),
                "at most two source photons are supported",
            ));
        }
        for (i, s) in self.sources.iter().enumerate() {
            if s.path >= n_paths {
                diags.push(Diagnostic::new(
                    DiagCode::UndeclaredPath,
                    self.source_map.sources.get(i).copied().unwrap_or_default(),
                    format!("source on undeclared path {}", s.path),
                ));
            }
        }

        for (i, e) in self.pipeline.iter().enumerate() {
            for p in e.paths() {
                if p >= n_paths {
                    diags.push(Diagnostic::new(
                        DiagCode::UndeclaredPath,
                        self.element_span(i),
                        format!("{} references undeclared path {p}", e.kind()),
                    ));
                }
            }
            let rebuilt = match *e {
                Element::BeamSplitter { paths: [a, b], theta } => Element::beam_splitter(a, b, theta),
                Element::PolarizingBs { inputs, outputs } => {
                    Element::polarizing_bs(inputs[0], inputs[1], outputs[0], outputs[1])
                }
                Element::DelayLine { path, length_m } => Element::delay_line(path, length_m),
                Element::QuarterWavePlate { path, angle } => Element::quarter_wave_plate(path, angle),
                Element::HalfWavePlate { path, angle } => Element::half_wave_plate(path, angle),
                Element::PhaseShifter { path, setting } => Element::phase_shifter(path, setting),
                _ => Ok(e.clone()),
            };
            if let Err(err) = rebuilt {
                let code = match err {
                    crate::optics::OpticsError::BadWiring(_) => DiagCode::BadWiring,
                    _ => DiagCode::BadParam,
                };
                diags.push(Diagnostic::new(code, self.element_span(i), err.to_string()));
            }
        }

        let knobs: Vec<usize> = self
            .pipeline
            .iter()
            .enumerate()
            .filter(|(_, e)| e.is_knob())
            .map(|(i, _)| i)
            .collect();
        match knobs.len() {
            0 => diags.push(Diagnostic::new(
                DiagCode::MissingPhaseKnob,
                Span::default(),
                "bench needs one `phase <path> knob` element",
            )),
            1 => {}
            _ => diags.push(Diagnostic::new(
                DiagCode::MultiplePhaseKnobs,
                self.element_span(knobs[1]),
                format!("{} phase knobs declared, expected one", knobs.len()),
            )),
        }

        if self.detectors.is_empty() {
            diags.push(Diagnostic::new(
                DiagCode::MissingDetector,
                Span::default(),
                "bench declares no detector",
            ));
        }
        for (i, d) in self.detectors.iter().enumerate() {
            let span = self.source_map.detectors.get(i).copied().unwrap_or_default();
            if self.detectors[..i].iter().any(|o| o.name == d.name) {
                diags.push(Diagnostic::new(
                    DiagCode::DuplicateDetector,
                    span,
                    format!("detector `{}` declared twice", d.name),
                ));
            }
            if d.mode.path >= n_paths {
                diags.push(Diagnostic::new(
                    DiagCode::UndeclaredPath,
                    span,
                    format!("detector `{}` on undeclared path", d.name),
                ));
            }
        }
        if diags.iter().any(Diagnostic::is_error) {
            return diags;
        }

        let mut used = vec![false; self.paths.len()];
        for p in self
            .pipeline
            .iter()
            .flat_map(Element::paths)
            .chain(self.sources.iter().map(|m| m.path))
            .chain(self.detectors.iter().map(|d| d.mode.path))
        {
            used[p as usize] = true;
        }
        for (i, name) in self.paths.iter().enumerate() {
            if !used[i] {
                diags.push(Diagnostic::new(
                    DiagCode::UnreferencedPath,
                    self.source_map.paths.get(i).copied().unwrap_or_default(),
                    format!("path `{name}` is never used"),
                ));
            }
        }

        let reachable = self.reachable_modes();
        for (i, d) in self.detectors.iter().enumerate() {
            if !reachable.contains(&d.mode) {
                diags.push(Diagnostic::new(
                    DiagCode::UnreachableDetector,
                    self.source_map.detectors.get(i).copied().unwrap_or_default(),
                    format!("no photon can reach detector `{}`", d.name),
                ));
            }
        }
        diags
    }

    /// Modes that can hold a photon after the full pipeline.
    pub fn reachable_modes(&self) -> BTreeSet<ModeId> {
        let mut live: BTreeSet<ModeId> = self.sources.iter().copied().collect();
        for e in &self.pipeline {
            match *e {
                Element::BeamSplitter { paths: [a, b], .. } => {
                    for pol in [Polarization::H, Polarization::V] {
                        let (ma, mb) = (ModeId::new(a, pol), ModeId::new(b, pol));
                        if live.contains(&ma) || live.contains(&mb) {
                            live.insert(ma);
                            live.insert(mb);
                        }
                    }
                }
                Element::HalfWavePlate { path, .. } | Element::QuarterWavePlate { path, .. } => {
                    if live.contains(&ModeId::h(path)) || live.contains(&ModeId::v(path)) {
                        live.insert(ModeId::h(path));
                        live.insert(ModeId::v(path));
                    }
                }
                Element::PolarizingBs { inputs, outputs } => {
                    let pairs = [
                        (ModeId::h(inputs[0]), ModeId::h(outputs[0])),
                        (ModeId::h(inputs[1]), ModeId::h(outputs[1])),
                        (ModeId::v(inputs[0]), ModeId::v(outputs[1])),
                        (ModeId::v(inputs[1]), ModeId::v(outputs[0])),
                    ];
                    let before = live.clone();
                    for (f, t) in pairs {
                        live.remove(&f);
                        live.remove(&t);
                    }
                    for (f, t) in pairs {
                        if before.contains(&f) {
                            live.insert(t);
                        }
                        if before.contains(&t) {
                            live.insert(f);
                        }
                    }
                }
                _ => {}
            }
        }
        live
    }

    /// Canonical text form; parses back to an equal bench.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let name = |p: PathId| self.path_name(p).to_string();
        for p in &self.paths {
            let _ = writeln!(out, "path {p}");
        }
        for s in &self.sources {
            let _ = writeln!(out, "source photon {} {}", name(s.path), s.polarization);
        }
        for e in &self.pipeline {
            let line = match *e {
                Element::BeamSplitter { paths: [a, b], theta } => {
                    format!("bs {} {} theta={theta}", name(a), name(b))
                }
                Element::PhaseShifter { path, setting: PhaseSetting::Knob } => {
                    format!("phase {} knob", name(path))
                }
                Element::PhaseShifter { path, setting: PhaseSetting::Fixed(v) } => {
                    format!("phase {} value={v}", name(path))
                }
                Element::PockelsCell { path } => format!("eop {}", name(path)),
                Element::PolarizingBs { inputs, outputs } => format!(
                    "pbs {} {} {} {}",
                    name(inputs[0]),
                    name(inputs[1]),
                    name(outputs[0]),
                    name(outputs[1])
                ),
                Element::HalfWavePlate { path, angle } => format!("hwp {} angle={angle}", name(path)),
                Element::QuarterWavePlate { path, angle } => {
                    format!("qwp {} angle={angle}", name(path))
                }
                Element::DelayLine { path, length_m } => {
                    format!("delay {} length_m={length_m}", name(path))
                }
                Element::Mirror { path } => format!("mirror {}", name(path)),
            };
            out.push_str(&line);
            out.push('\n');
        }
        for d in &self.detectors {
            let _ = writeln!(
                out,
                "detector {} {} {}",
                d.name,
                name(d.mode.path),
                d.mode.polarization
            );
        }
        out
    }
}

/// Incremental construction of a [`Bench`] in code.
#[derive(Debug, Default)]
pub struct BenchBuilder {
    bench: Option<Bench>,
}

impl BenchBuilder {
    pub fn new() -> Self {
        BenchBuilder {
            bench: Some(Bench {
                paths: Vec::new(),
                modes: Vec::new(),
                pipeline: Vec::new(),
                detectors: Vec::new(),
                sources: Vec::new(),
                source_map: SourceMap::default(),
            }),
        }
    }

    fn b(&mut self) -> &mut Bench {
        self.bench.as_mut().expect("builder already finished")
    }

    pub fn path(&mut self, name: &str) -> PathId {
        let b = self.b();
        let id = b.paths.len() as PathId;
        b.paths.push(name.to_string());
        b.modes.push(ModeId::h(id));
        b.modes.push(ModeId::v(id));
        id
    }

    pub fn source(&mut self, path: PathId, pol: Polarization) -> &mut Self {
        self.b().sources.push(ModeId::new(path, pol));
        self
    }

    pub fn element(&mut self, e: Element) -> &mut Self {
        self.b().pipeline.push(e);
        self
    }

    pub fn detector(&mut self, name: &str, path: PathId, pol: Polarization) -> &mut Self {
        self.b().detectors.push(Detector {
            name: name.to_string(),
            mode: ModeId::new(path, pol),
        });
        self
    }

    pub(crate) fn source_map(&mut self) -> &mut SourceMap {
        &mut self.b().source_map
    }

    pub fn finish(&mut self) -> Bench {
        self.bench.take().expect("builder already finished")
    }
}

/// The active teleportation set-up.
///
/// One down-converted photon enters the balanced splitter BS on `kA` and
/// leaves the singlet `(|1>_A|0>_B - |0>_A|1>_B)/√2` on `kA`/`kB`. Its twin
/// enters the variable splitter BS_S on `kS`, preparing the input qubit on
/// `kS` entangled with the ancilla `ka`. The piezo phase knob sits on `kS`.
/// BS_A mixes `kS` and `kA` in front of Alice's detectors D1 (on `kA`) and
/// D2 (on `kS`). The ancilla is turned to H and joins the channel photon on
/// the delay line `dl` through a PBS; the Pockels cell acts on V only. A
/// quarter-wave plate and PBS_B form Bob's variable splitter in front of
/// D2* (`b1`, H) and D1* (`b2`, V). The fixed phase on `kS` cancels the
/// quarter-wave plate's π/2 offset so the fringes take the closed forms
/// ½cos²(φ/2) and ½sin²(φ/2).
pub fn builtin_figure1() -> Bench {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
    use Polarization::{H, V};

    let mut b = BenchBuilder::new();
    let k_a = b.path("kA");
    let k_b = b.path("kB");
    let k_s = b.path("kS");
    let anc = b.path("ka");
    let dump = b.path("dump");
    let dl = b.path("dl");
    let vac = b.path("vac");
    let b1 = b.path("b1");
    let b2 = b.path("b2");
    b.source(k_a, V).source(k_s, V);
    let elements = [
        Element::beam_splitter(k_a, k_b, FRAC_PI_4),
        Element::beam_splitter(anc, k_s, FRAC_PI_4),
        Element::phase_shifter(k_s, PhaseSetting::Knob),
        Element::phase_shifter(k_s, PhaseSetting::Fixed(FRAC_PI_2)),
        Element::half_wave_plate(anc, FRAC_PI_4),
        Element::beam_splitter(k_s, k_a, FRAC_PI_4),
        Element::polarizing_bs(k_b, anc, dump, dl),
        Element::delay_line(dl, 8.0),
        Ok(Element::pockels_cell(dl)),
        Element::quarter_wave_plate(dl, FRAC_PI_4),
        Element::polarizing_bs(dl, vac, b1, b2),
    ];
    for e in elements {
        b.element(e.expect("builtin element parameters are valid"));
    }
    b.detector("D1", k_a, V)
        .detector("D2", k_s, V)
        .detector("D1*", b2, V)
        .detector("D2*", b1, H);
    b.finish()
}
