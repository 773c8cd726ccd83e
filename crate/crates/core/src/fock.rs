//! Truncated multi-mode Fock space.
//!
//! A [`FockState`] is a sparse map from photon-occupation vectors to complex
//! amplitudes over a fixed, ordered list of optical modes. All operations are
//! pure: they return a new state and leave the receiver untouched, so states
//! can be shared freely between Monte Carlo workers.
//!
//! Linear-optical elements act on creation operators by substitution. For a
//! two-mode unitary `u` acting on modes `(m1, m2)`:
//!
//! ```text
//!     a†(m1) -> u11 a†(m1) + u12 a†(m2)
//!     a†(m2) -> u21 a†(m1) + u22 a†(m2)
//! ```
//!
//! so a single photon with amplitude vector `c` comes out as `uᵀ c`. With the
//! real beam-splitter matrix `[[t, -r], [r, t]]` a photon entering the first
//! port leaves as `t|1,0> - r|0,1>`.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use smallvec::SmallVec;
use thiserror::Error;

/// Amplitudes below this modulus are dropped from the map.
pub const PRUNE_EPSILON: f64 = 1e-14;
/// Normalization tolerance.
pub const NORM_TOLERANCE: f64 = 1e-12;
/// Tolerance for `u†u = I` checks on supplied matrices.
pub const UNITARY_TOLERANCE: f64 = 1e-10;

pub type Matrix2 = [[Complex64; 2]; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("no modes given")]
    EmptyModes,
    #[error("mode {0} listed more than once")]
    DuplicateMode(ModeId),
    #[error("mode {0} is not part of this state")]
    UnknownMode(ModeId),
    #[error("occupation of mode {0} would exceed the truncation limit")]
    TruncationOverflow(ModeId),
    #[error("matrix is not unitary (max deviation {0:.3e})")]
    NonUnitary(f64),
    #[error("measurement outcome has zero probability")]
    ImpossibleOutcome,
    #[error("state is not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("mode {0} does not have a definite occupation")]
    IndefiniteOccupation(ModeId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub fn other(self) -> Polarization {
        match self {
            Polarization::H => Polarization::V,
            Polarization::V => Polarization::H,
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Polarization::H => f.write_str("H"),
            Polarization::V => f.write_str("V"),
        }
    }
}

/// One field mode: a spatial path carrying one linear polarization.
///
/// Ordering is by path, then polarization (H before V), which is also the
/// canonical mode order of a compiled bench.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ModeId {
    pub path: u32,
    pub polarization: Polarization,
}

impl ModeId {
    pub const fn new(path: u32, polarization: Polarization) -> Self {
        ModeId { path, polarization }
    }

    pub const fn h(path: u32) -> Self {
        ModeId::new(path, Polarization::H)
    }

    pub const fn v(path: u32) -> Self {
        ModeId::new(path, Polarization::V)
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.path, self.polarization)
    }
}

/// Photon numbers, one per mode, in the owning state's mode order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OccupationVector(SmallVec<[u8; 24]>);

impl OccupationVector {
    pub fn zeros(len: usize) -> Self {
        OccupationVector(SmallVec::from_elem(0, len))
    }

    pub fn from_counts(counts: &[u8]) -> Self {
        OccupationVector(SmallVec::from_slice(counts))
    }

    pub fn counts(&self) -> &[u8] {
        &self.0
    }

    pub fn total(&self) -> u32 {
        self.0.iter().map(|&n| n as u32).sum()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl std::ops::Index<usize> for OccupationVector {
    type Output = u8;

    fn index(&self, i: usize) -> &u8 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for OccupationVector {
    fn index_mut(&mut self, i: usize) -> &mut u8 {
        &mut self.0[i]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Truncation {
    pub max_per_mode: u8,
    pub max_total: u32,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation {
            max_per_mode: 2,
            max_total: 2,
        }
    }
}

/// A qubit in the vacuum / one-photon basis of a single mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QubitSpec {
    pub alpha: Complex64,
    pub beta: Complex64,
}

impl QubitSpec {
    pub fn new(alpha: Complex64, beta: Complex64) -> Result<Self, FockError> {
        let norm = alpha.norm_sqr() + beta.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(FockError::NotNormalized(norm));
        }
        Ok(QubitSpec { alpha, beta })
    }

    /// Splitter angle and relative phase that prepare this qubit on the input
    /// mode when a photon enters the variable splitter: `sin θ` lands on the
    /// vacuum component and `cos θ` on the one-photon component.
    pub fn preparation(&self) -> (f64, f64) {
        let theta = self.alpha.norm().atan2(self.beta.norm());
        let phase = if self.alpha.norm() < PRUNE_EPSILON || self.beta.norm() < PRUNE_EPSILON {
            0.0
        } else {
            self.beta.arg() - self.alpha.arg()
        };
        (theta, phase)
    }
}

/// `u†u = I` within `tol`, reporting the largest deviation on failure.
pub fn check_unitary(u: &Matrix2, tol: f64) -> Result<(), FockError> {
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = Complex64::new(0.0, 0.0);
            for row in u {
                acc += row[i].conj() * row[j];
            }
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((acc - target).norm());
        }
    }
    if worst > tol {
        Err(FockError::NonUnitary(worst))
    } else {
        Ok(())
    }
}

pub fn adjoint(u: &Matrix2) -> Matrix2 {
    [
        [u[0][0].conj(), u[1][0].conj()],
        [u[0][1].conj(), u[1][1].conj()],
    ]
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

fn binomial(n: u32, k: u32) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FockState {
    modes: Vec<ModeId>,
    amplitudes: BTreeMap<OccupationVector, Complex64>,
    truncation: Truncation,
}

impl FockState {
    /// All modes empty, amplitude one.
    pub fn vacuum(modes: &[ModeId]) -> Result<Self, FockError> {
        Self::vacuum_with(modes, Truncation::default())
    }

    pub fn vacuum_with(modes: &[ModeId], truncation: Truncation) -> Result<Self, FockError> {
        if modes.is_empty() {
            return Err(FockError::EmptyModes);
        }
        for (i, m) in modes.iter().enumerate() {
            if modes[..i].contains(m) {
                return Err(FockError::DuplicateMode(*m));
            }
        }
        let mut amplitudes = BTreeMap::new();
        amplitudes.insert(OccupationVector::zeros(modes.len()), Complex64::new(1.0, 0.0));
        Ok(FockState {
            modes: modes.to_vec(),
            amplitudes,
            truncation,
        })
    }

    /// Builds a state from explicit entries. Entries are not renormalized.
    pub fn from_entries(
        modes: &[ModeId],
        entries: impl IntoIterator<Item = (OccupationVector, Complex64)>,
    ) -> Result<Self, FockError> {
        let mut state = Self::vacuum(modes)?;
        state.amplitudes.clear();
        for (occ, amp) in entries {
            assert_eq!(occ.len(), modes.len(), "occupation length must match mode count");
            for (i, &n) in occ.counts().iter().enumerate() {
                if n > state.truncation.max_per_mode {
                    return Err(FockError::TruncationOverflow(modes[i]));
                }
            }
            if occ.total() > state.truncation.max_total {
                return Err(FockError::TruncationOverflow(modes[0]));
            }
            *state.amplitudes.entry(occ).or_default() += amp;
        }
        state.prune();
        Ok(state)
    }

    pub fn modes(&self) -> &[ModeId] {
        &self.modes
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&OccupationVector, &Complex64)> {
        self.amplitudes.iter()
    }

    pub fn amplitude(&self, occ: &OccupationVector) -> Complex64 {
        self.amplitudes.get(occ).copied().unwrap_or_default()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn mode_index(&self, mode: ModeId) -> Result<usize, FockError> {
        self.modes
            .iter()
            .position(|&m| m == mode)
            .ok_or(FockError::UnknownMode(mode))
    }

    /// Occupation vector with the given per-mode counts set and all others zero.
    pub fn occupation(&self, pattern: &[(ModeId, u8)]) -> Result<OccupationVector, FockError> {
        let mut occ = OccupationVector::zeros(self.modes.len());
        for &(m, n) in pattern {
            occ[self.mode_index(m)?] = n;
        }
        Ok(occ)
    }

    fn with_amplitudes(&self, amplitudes: BTreeMap<OccupationVector, Complex64>) -> FockState {
        let mut out = FockState {
            modes: self.modes.clone(),
            amplitudes,
            truncation: self.truncation,
        };
        out.prune();
        out
    }

    fn prune(&mut self) {
        self.amplitudes.retain(|_, a| a.norm() >= PRUNE_EPSILON);
    }

    pub fn normalized(&self) -> Result<FockState, FockError> {
        let norm = self.norm_sqr();
        if norm <= 0.0 {
            return Err(FockError::ImpossibleOutcome);
        }
        let scale = norm.sqrt().recip();
        Ok(self.with_amplitudes(
            self.amplitudes
                .iter()
                .map(|(o, a)| (o.clone(), a * scale))
                .collect(),
        ))
    }

    /// Applies a bosonic creation operator on `mode` and renormalizes.
    pub fn create_photon(&self, mode: ModeId) -> Result<FockState, FockError> {
        let idx = self.mode_index(mode)?;
        let mut next = BTreeMap::new();
        for (occ, amp) in &self.amplitudes {
            let n = occ[idx];
            if n >= self.truncation.max_per_mode || occ.total() >= self.truncation.max_total {
                return Err(FockError::TruncationOverflow(mode));
            }
            let mut raised = occ.clone();
            raised[idx] = n + 1;
            next.insert(raised, amp * (f64::from(n) + 1.0).sqrt());
        }
        self.with_amplitudes(next).normalized()
    }

    /// Exact action of a two-mode linear-optical unitary on the truncated basis.
    pub fn apply_two_mode_unitary(
        &self,
        m1: ModeId,
        m2: ModeId,
        u: &Matrix2,
    ) -> Result<FockState, FockError> {
        check_unitary(u, UNITARY_TOLERANCE)?;
        let i1 = self.mode_index(m1)?;
        let i2 = self.mode_index(m2)?;
        if i1 == i2 {
            return Err(FockError::DuplicateMode(m1));
        }
        let cap = u32::from(self.truncation.max_per_mode);
        let mut next: BTreeMap<OccupationVector, Complex64> = BTreeMap::new();
        for (occ, amp) in &self.amplitudes {
            let n1 = u32::from(occ[i1]);
            let n2 = u32::from(occ[i2]);
            if n1 == 0 && n2 == 0 {
                *next.entry(occ.clone()).or_default() += amp;
                continue;
            }
            let total = n1 + n2;
            let mut out = vec![Complex64::new(0.0, 0.0); total as usize + 1];
            for p in 0..=n1 {
                let first = u[0][0].powu(p) * u[0][1].powu(n1 - p) * binomial(n1, p);
                for q in 0..=n2 {
                    let second = u[1][0].powu(q) * u[1][1].powu(n2 - q) * binomial(n2, q);
                    out[(p + q) as usize] += first * second;
                }
            }
            let norm_in = (factorial(n1) * factorial(n2)).sqrt();
            for (k, coeff) in out.into_iter().enumerate() {
                let k = k as u32;
                let c = coeff * ((factorial(k) * factorial(total - k)).sqrt() / norm_in);
                if c.norm() < PRUNE_EPSILON {
                    continue;
                }
                if k > cap {
                    return Err(FockError::TruncationOverflow(m1));
                }
                if total - k > cap {
                    return Err(FockError::TruncationOverflow(m2));
                }
                let mut o = occ.clone();
                o[i1] = k as u8;
                o[i2] = (total - k) as u8;
                *next.entry(o).or_default() += amp * c;
            }
        }
        Ok(self.with_amplitudes(next))
    }

    /// Multiplies every basis entry by `exp(i·phi·n)`, `n` the occupation of `mode`.
    pub fn apply_phase(&self, mode: ModeId, phi: f64) -> Result<FockState, FockError> {
        let idx = self.mode_index(mode)?;
        let step = Complex64::from_polar(1.0, phi);
        Ok(self.with_amplitudes(
            self.amplitudes
                .iter()
                .map(|(o, a)| (o.clone(), a * step.powu(u32::from(o[idx]))))
                .collect(),
        ))
    }

    /// Multiplies every basis entry by `(-1)^n`, `n` the occupation of `mode`.
    /// Exact, unlike a phase of π.
    pub fn apply_parity(&self, mode: ModeId) -> Result<FockState, FockError> {
        let idx = self.mode_index(mode)?;
        Ok(self.with_amplitudes(
            self.amplitudes
                .iter()
                .map(|(o, &a)| (o.clone(), if o[idx] % 2 == 1 { -a } else { a }))
                .collect(),
        ))
    }

    /// Relabels modes: the occupation of `from` moves to `to` for every pair.
    /// The pairs must describe a permutation of the modes they mention.
    pub fn permute_modes(&self, mapping: &[(ModeId, ModeId)]) -> Result<FockState, FockError> {
        let mut perm: Vec<(usize, usize)> = Vec::with_capacity(mapping.len());
        for &(from, to) in mapping {
            perm.push((self.mode_index(from)?, self.mode_index(to)?));
        }
        for (i, &(f, t)) in perm.iter().enumerate() {
            if perm[..i].iter().any(|&(f2, _)| f2 == f) {
                return Err(FockError::DuplicateMode(self.modes[f]));
            }
            if perm[..i].iter().any(|&(_, t2)| t2 == t) {
                return Err(FockError::DuplicateMode(self.modes[t]));
            }
        }
        for &(_, t) in &perm {
            if !perm.iter().any(|&(f, _)| f == t) {
                return Err(FockError::DuplicateMode(self.modes[t]));
            }
        }
        Ok(self.with_amplitudes(
            self.amplitudes
                .iter()
                .map(|(o, a)| {
                    let mut moved = o.clone();
                    for &(f, t) in &perm {
                        moved[t] = o[f];
                    }
                    (moved, *a)
                })
                .collect(),
        ))
    }

    fn matches(&self, occ: &OccupationVector, pattern: &[(usize, u8)]) -> bool {
        pattern.iter().all(|&(i, n)| occ[i] == n)
    }

    fn resolve(&self, pattern: &[(ModeId, u8)]) -> Result<Vec<(usize, u8)>, FockError> {
        pattern
            .iter()
            .map(|&(m, n)| Ok((self.mode_index(m)?, n)))
            .collect()
    }

    /// Probability that the constrained modes hold exactly the given counts.
    pub fn partial_probability(&self, pattern: &[(ModeId, u8)]) -> Result<f64, FockError> {
        let pattern = self.resolve(pattern)?;
        Ok(self
            .amplitudes
            .iter()
            .filter(|(o, _)| self.matches(o, &pattern))
            .map(|(_, a)| a.norm_sqr())
            .sum())
    }

    /// Collapses onto the entries matching `pattern` and renormalizes.
    /// Returns the pre-collapse probability of the pattern.
    pub fn project(&self, pattern: &[(ModeId, u8)]) -> Result<(FockState, f64), FockError> {
        let resolved = self.resolve(pattern)?;
        let kept: BTreeMap<_, _> = self
            .amplitudes
            .iter()
            .filter(|(o, _)| self.matches(o, &resolved))
            .map(|(o, a)| (o.clone(), *a))
            .collect();
        let prob: f64 = kept.values().map(|a| a.norm_sqr()).sum();
        if prob <= PRUNE_EPSILON * PRUNE_EPSILON {
            return Err(FockError::ImpossibleOutcome);
        }
        let state = self.with_amplitudes(kept).normalized()?;
        Ok((state, prob))
    }

    /// Drops modes whose occupation is the same in every entry.
    pub fn without_modes(&self, drop: &[ModeId]) -> Result<FockState, FockError> {
        let idx = drop
            .iter()
            .map(|&m| self.mode_index(m))
            .collect::<Result<Vec<_>, _>>()?;
        for (&i, &m) in idx.iter().zip(drop) {
            let mut values = self.amplitudes.keys().map(|o| o[i]);
            if let Some(first) = values.next() {
                if values.any(|n| n != first) {
                    return Err(FockError::IndefiniteOccupation(m));
                }
            }
        }
        let keep: Vec<usize> = (0..self.modes.len()).filter(|i| !idx.contains(i)).collect();
        if keep.is_empty() {
            return Err(FockError::EmptyModes);
        }
        let modes: Vec<ModeId> = keep.iter().map(|&i| self.modes[i]).collect();
        let amplitudes = self
            .amplitudes
            .iter()
            .map(|(o, a)| {
                let counts: SmallVec<[u8; 24]> = keep.iter().map(|&i| o[i]).collect();
                (OccupationVector(counts), *a)
            })
            .collect();
        Ok(FockState {
            modes,
            amplitudes,
            truncation: self.truncation,
        })
    }

    /// Largest per-entry amplitude difference, treating missing entries as zero.
    pub fn max_amplitude_distance(&self, other: &FockState) -> f64 {
        let mut worst: f64 = 0.0;
        for (o, a) in &self.amplitudes {
            worst = worst.max((a - other.amplitude(o)).norm());
        }
        for (o, b) in &other.amplitudes {
            if !self.amplitudes.contains_key(o) {
                worst = worst.max(b.norm());
            }
        }
        worst
    }
}
