//! Optical components of the teleportation bench.
//!
//! Every element is an immutable value that knows its wiring (spatial path
//! indices) and reduces to [`FockState`] primitives. Non-polarizing elements
//! act identically on the H and V modes of their paths.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use num_complex::Complex64;
use thiserror::Error;

use crate::fock::{FockError, FockState, Matrix2, ModeId, Polarization};

pub type PathId = u32;

/// Nanoseconds of optical delay per meter of line implied by 8 m ↔ 24 ns.
pub const DEFAULT_NS_PER_M: f64 = 3.0;
/// Vacuum propagation, 1/c in ns per meter.
pub const VACUUM_NS_PER_M: f64 = 1e9 / 299_792_458.0;
/// Half-wave voltage of the LiNbO3 cell, kV. Metadata only.
pub const EOP_HALF_WAVE_KV: f64 = 1.4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error("bad parameter: {0}")]
    BadParam(String),
    #[error("bad wiring: {0}")]
    BadWiring(String),
    #[error("Pockels cell needs a V-polarized mode, got {0}")]
    PolarizationMismatch(ModeId),
    #[error(transparent)]
    Fock(#[from] FockError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PhaseSetting {
    /// The swept phase φ, supplied at run time.
    Knob,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementKind {
    BeamSplitter,
    PhaseShifter,
    PockelsCell,
    PolarizingBs,
    HalfWavePlate,
    QuarterWavePlate,
    DelayLine,
    Mirror,
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ElementKind::BeamSplitter => "bs",
            ElementKind::PhaseShifter => "phase",
            ElementKind::PockelsCell => "eop",
            ElementKind::PolarizingBs => "pbs",
            ElementKind::HalfWavePlate => "hwp",
            ElementKind::QuarterWavePlate => "qwp",
            ElementKind::DelayLine => "delay",
            ElementKind::Mirror => "mirror",
        };
        f.write_str(name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Element {
    /// Non-polarizing splitter, `u = [[cos θ, -sin θ], [sin θ, cos θ]]`.
    BeamSplitter { paths: [PathId; 2], theta: f64 },
    PhaseShifter { path: PathId, setting: PhaseSetting },
    /// Phase π on the V mode of `path` while armed. H light is untouched.
    PockelsCell { path: PathId },
    /// H transmits `inputs[k] -> outputs[k]`, V reflects `inputs[k] -> outputs[1-k]`.
    PolarizingBs {
        inputs: [PathId; 2],
        outputs: [PathId; 2],
    },
    HalfWavePlate { path: PathId, angle: f64 },
    QuarterWavePlate { path: PathId, angle: f64 },
    /// No amplitude change; contributes propagation time only.
    DelayLine { path: PathId, length_m: f64 },
    Mirror { path: PathId },
}

/// Run-time inputs for elements whose action is not fixed at build time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ApplyContext {
    pub knob_phase: f64,
    pub eop: EopConfig,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EopConfig {
    pub v_half_wave_kv: f64,
    pub armed: bool,
}

impl EopConfig {
    pub fn armed() -> Self {
        EopConfig {
            v_half_wave_kv: EOP_HALF_WAVE_KV,
            armed: true,
        }
    }

    pub fn disarmed() -> Self {
        EopConfig {
            v_half_wave_kv: EOP_HALF_WAVE_KV,
            armed: false,
        }
    }
}

/// σ_z on the vacuum/one-photon qubit carried by `mode` when armed.
pub fn apply_eop(state: &FockState, config: &EopConfig, mode: ModeId) -> Result<FockState, OpticsError> {
    if mode.polarization != Polarization::V {
        return Err(OpticsError::PolarizationMismatch(mode));
    }
    if config.armed {
        Ok(state.apply_parity(mode)?)
    } else {
        state.mode_index(mode)?;
        Ok(state.clone())
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn rotate(angle: f64, diag: [Complex64; 2]) -> Matrix2 {
    // R(-ξ) · diag · R(ξ), R(ξ) = [[cos, sin], [-sin, cos]]
    let (s, co) = angle.sin_cos();
    let (d0, d1) = (diag[0], diag[1]);
    [
        [d0 * co * co + d1 * s * s, (d0 - d1) * co * s],
        [(d0 - d1) * co * s, d0 * s * s + d1 * co * co],
    ]
}

/// Jones matrix of a quarter-wave plate with fast axis at `angle` from H,
/// acting on `(E_H, E_V)`.
pub fn quarter_wave_jones(angle: f64) -> Matrix2 {
    rotate(angle, [c(1.0, 0.0), c(0.0, 1.0)])
}

pub fn half_wave_jones(angle: f64) -> Matrix2 {
    rotate(angle, [c(1.0, 0.0), c(-1.0, 0.0)])
}

pub fn splitter_matrix(theta: f64) -> Matrix2 {
    let (s, co) = theta.sin_cos();
    [[c(co, 0.0), c(-s, 0.0)], [c(s, 0.0), c(co, 0.0)]]
}

fn transpose(u: &Matrix2) -> Matrix2 {
    [[u[0][0], u[1][0]], [u[0][1], u[1][1]]]
}

fn check_angle(name: &str, value: f64) -> Result<(), OpticsError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(OpticsError::BadParam(format!("{name} must be finite")))
    }
}

impl Element {
    pub fn beam_splitter(a: PathId, b: PathId, theta: f64) -> Result<Element, OpticsError> {
        if !(0.0..=FRAC_PI_2).contains(&theta) {
            return Err(OpticsError::BadParam(format!(
                "splitter angle {theta} outside [0, pi/2]"
            )));
        }
        if a == b {
            return Err(OpticsError::BadWiring("splitter needs two distinct paths".into()));
        }
        Ok(Element::BeamSplitter { paths: [a, b], theta })
    }

    pub fn phase_shifter(path: PathId, setting: PhaseSetting) -> Result<Element, OpticsError> {
        if let PhaseSetting::Fixed(v) = setting {
            check_angle("phase", v)?;
        }
        Ok(Element::PhaseShifter { path, setting })
    }

    pub fn pockels_cell(path: PathId) -> Element {
        Element::PockelsCell { path }
    }

    pub fn polarizing_bs(
        in_a: PathId,
        in_b: PathId,
        out_a: PathId,
        out_b: PathId,
    ) -> Result<Element, OpticsError> {
        let all = [in_a, in_b, out_a, out_b];
        for i in 0..4 {
            if all[..i].contains(&all[i]) {
                return Err(OpticsError::BadWiring(format!(
                    "polarizing splitter uses path {} twice",
                    all[i]
                )));
            }
        }
        Ok(Element::PolarizingBs {
            inputs: [in_a, in_b],
            outputs: [out_a, out_b],
        })
    }

    pub fn quarter_wave_plate(path: PathId, angle: f64) -> Result<Element, OpticsError> {
        check_angle("plate angle", angle)?;
        Ok(Element::QuarterWavePlate { path, angle })
    }

    pub fn half_wave_plate(path: PathId, angle: f64) -> Result<Element, OpticsError> {
        check_angle("plate angle", angle)?;
        Ok(Element::HalfWavePlate { path, angle })
    }

    pub fn delay_line(path: PathId, length_m: f64) -> Result<Element, OpticsError> {
        if !(length_m > 0.0 && length_m.is_finite()) {
            return Err(OpticsError::BadParam(format!(
                "delay length {length_m} m must be positive"
            )));
        }
        Ok(Element::DelayLine { path, length_m })
    }

    pub fn mirror(path: PathId) -> Element {
        Element::Mirror { path }
    }

    pub fn kind(&self) -> ElementKind {
        match self {
            Element::BeamSplitter { .. } => ElementKind::BeamSplitter,
            Element::PhaseShifter { .. } => ElementKind::PhaseShifter,
            Element::PockelsCell { .. } => ElementKind::PockelsCell,
            Element::PolarizingBs { .. } => ElementKind::PolarizingBs,
            Element::HalfWavePlate { .. } => ElementKind::HalfWavePlate,
            Element::QuarterWavePlate { .. } => ElementKind::QuarterWavePlate,
            Element::DelayLine { .. } => ElementKind::DelayLine,
            Element::Mirror { .. } => ElementKind::Mirror,
        }
    }

    /// Paths the element reads from or writes to.
    pub fn paths(&self) -> Vec<PathId> {
        match *self {
            Element::BeamSplitter { paths, .. } => paths.to_vec(),
            Element::PolarizingBs { inputs, outputs } => {
                vec![inputs[0], inputs[1], outputs[0], outputs[1]]
            }
            Element::PhaseShifter { path, .. }
            | Element::PockelsCell { path }
            | Element::HalfWavePlate { path, .. }
            | Element::QuarterWavePlate { path, .. }
            | Element::DelayLine { path, .. }
            | Element::Mirror { path } => vec![path],
        }
    }

    pub fn is_knob(&self) -> bool {
        matches!(
            self,
            Element::PhaseShifter {
                setting: PhaseSetting::Knob,
                ..
            }
        )
    }

    /// Propagation time contributed by this element, if it is a delay line.
    pub fn delay_ns(&self, ns_per_m: f64) -> Option<f64> {
        match *self {
            Element::DelayLine { length_m, .. } => Some(length_m * ns_per_m),
            _ => None,
        }
    }

    /// Mode permutation of a polarizing splitter as `(from, to)` pairs. The
    /// unused output ports feed back to the inputs so the map is a bijection.
    fn pbs_mapping(inputs: [PathId; 2], outputs: [PathId; 2]) -> [(ModeId, ModeId); 8] {
        let forward = [
            (ModeId::h(inputs[0]), ModeId::h(outputs[0])),
            (ModeId::h(inputs[1]), ModeId::h(outputs[1])),
            (ModeId::v(inputs[0]), ModeId::v(outputs[1])),
            (ModeId::v(inputs[1]), ModeId::v(outputs[0])),
        ];
        let mut all = [(ModeId::h(0), ModeId::h(0)); 8];
        for (i, &(f, t)) in forward.iter().enumerate() {
            all[i] = (f, t);
            all[i + 4] = (t, f);
        }
        all
    }

    pub fn apply(&self, state: &FockState, ctx: &ApplyContext) -> Result<FockState, OpticsError> {
        let out = match *self {
            Element::BeamSplitter { paths: [a, b], theta } => {
                let u = splitter_matrix(theta);
                state
                    .apply_two_mode_unitary(ModeId::h(a), ModeId::h(b), &u)?
                    .apply_two_mode_unitary(ModeId::v(a), ModeId::v(b), &u)?
            }
            Element::PhaseShifter { path, setting } => {
                let phi = match setting {
                    PhaseSetting::Knob => ctx.knob_phase,
                    PhaseSetting::Fixed(v) => v,
                };
                state
                    .apply_phase(ModeId::h(path), phi)?
                    .apply_phase(ModeId::v(path), phi)?
            }
            Element::PockelsCell { path } => apply_eop(state, &ctx.eop, ModeId::v(path))?,
            Element::PolarizingBs { inputs, outputs } => {
                state.permute_modes(&Self::pbs_mapping(inputs, outputs))?
            }
            Element::HalfWavePlate { path, angle } => state.apply_two_mode_unitary(
                ModeId::h(path),
                ModeId::v(path),
                &transpose(&half_wave_jones(angle)),
            )?,
            Element::QuarterWavePlate { path, angle } => state.apply_two_mode_unitary(
                ModeId::h(path),
                ModeId::v(path),
                &transpose(&quarter_wave_jones(angle)),
            )?,
            Element::DelayLine { path, .. } | Element::Mirror { path } => {
                state.mode_index(ModeId::h(path))?;
                state.clone()
            }
        };
        Ok(out)
    }

    /// Single-photon transfer matrix over `modes`: row `i` lists where a
    /// photon created in `modes[i]` ends up (`a†_i -> Σ_j M[i][j] a†_j`).
    pub fn mode_matrix(&self, modes: &[ModeId], ctx: &ApplyContext) -> Result<Vec<Vec<Complex64>>, OpticsError> {
        let n = modes.len();
        let index = |m: ModeId| {
            modes
                .iter()
                .position(|&x| x == m)
                .ok_or(OpticsError::Fock(FockError::UnknownMode(m)))
        };
        let mut mat = vec![vec![c(0.0, 0.0); n]; n];
        for (i, row) in mat.iter_mut().enumerate() {
            row[i] = c(1.0, 0.0);
        }
        let mut embed = |m1: ModeId, m2: ModeId, u: &Matrix2| -> Result<(), OpticsError> {
            let (i, j) = (index(m1)?, index(m2)?);
            mat[i][i] = u[0][0];
            mat[i][j] = u[0][1];
            mat[j][i] = u[1][0];
            mat[j][j] = u[1][1];
            Ok(())
        };
        match *self {
            Element::BeamSplitter { paths: [a, b], theta } => {
                let u = splitter_matrix(theta);
                embed(ModeId::h(a), ModeId::h(b), &u)?;
                embed(ModeId::v(a), ModeId::v(b), &u)?;
            }
            Element::PhaseShifter { path, setting } => {
                let phi = match setting {
                    PhaseSetting::Knob => ctx.knob_phase,
                    PhaseSetting::Fixed(v) => v,
                };
                let p = Complex64::from_polar(1.0, phi);
                for m in [ModeId::h(path), ModeId::v(path)] {
                    let i = index(m)?;
                    mat[i][i] = p;
                }
            }
            Element::PockelsCell { path } => {
                if ctx.eop.armed {
                    let i = index(ModeId::v(path))?;
                    mat[i][i] = c(-1.0, 0.0);
                }
            }
            Element::PolarizingBs { inputs, outputs } => {
                for (f, t) in Self::pbs_mapping(inputs, outputs) {
                    let (fi, ti) = (index(f)?, index(t)?);
                    mat[fi][fi] = c(0.0, 0.0);
                    mat[fi][ti] = c(1.0, 0.0);
                }
            }
            Element::HalfWavePlate { path, angle } => {
                embed(ModeId::h(path), ModeId::v(path), &transpose(&half_wave_jones(angle)))?;
            }
            Element::QuarterWavePlate { path, angle } => {
                embed(ModeId::h(path), ModeId::v(path), &transpose(&quarter_wave_jones(angle)))?;
            }
            Element::DelayLine { .. } | Element::Mirror { .. } => {}
        }
        Ok(mat)
    }
}
