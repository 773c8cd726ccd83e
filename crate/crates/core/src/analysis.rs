//! Fringe data, weighted sinusoid fits, and fidelity estimates.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Best fidelity reachable with classical measure-and-prepare strategies.
pub const CLASSICAL_FIDELITY_BOUND: f64 = 2.0 / 3.0;

/// Amplitude-to-offset ratio below which the fitted phase is meaningless.
const PHASE_CONSTRAINT_FLOOR: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("csv line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("fit needs at least 4 distinct phases, got {0}")]
    FitUnderdetermined(usize),
    #[error("no coincidences to fit")]
    NoSignal,
    #[error("bad parameter: {0}")]
    BadParam(String),
    #[error("unknown pair label {0:?}")]
    UnknownPair(String),
}

/// Alice detector paired with a Bob detector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Pair {
    D1D1s,
    D1D2s,
    D2D1s,
    D2D2s,
}

impl Pair {
    pub const ALL: [Pair; 4] = [Pair::D1D1s, Pair::D1D2s, Pair::D2D1s, Pair::D2D2s];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Indices into the (D1, D2) and (D1*, D2*) detector pairs.
    pub fn detectors(self) -> (usize, usize) {
        (self.index() / 2, self.index() % 2)
    }

    pub fn label(self) -> &'static str {
        match self {
            Pair::D1D1s => "D1-D1*",
            Pair::D1D2s => "D1-D2*",
            Pair::D2D1s => "D2-D1*",
            Pair::D2D2s => "D2-D2*",
        }
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Pair {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Pair::ALL
            .into_iter()
            .find(|p| p.label() == s)
            .ok_or_else(|| AnalysisError::UnknownPair(s.to_string()))
    }
}

pub const FRINGE_CSV_HEADER: &str = "phi_rad,pair,coincidences,trials_kept,trials_total";

/// Coincidence counts of a phase sweep.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FringeData {
    pub phi: Vec<f64>,
    /// Per phase, indexed by [`Pair::index`].
    pub counts: Vec<[u64; 4]>,
    /// Trials that survived post-selection.
    pub trials_kept: Vec<u64>,
    pub trials_total: Vec<u64>,
}

/// One coincidence channel of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct FringeSeries {
    pub phi: Vec<f64>,
    pub counts: Vec<u64>,
    pub trials_kept: Vec<u64>,
}

impl FringeData {
    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn series(&self, pair: Pair) -> FringeSeries {
        FringeSeries {
            phi: self.phi.clone(),
            counts: self.counts.iter().map(|c| c[pair.index()]).collect(),
            trials_kept: self.trials_kept.clone(),
        }
    }

    /// Coincidence fraction of `pair` among kept trials at each phase.
    pub fn fractions(&self, pair: Pair) -> Vec<f64> {
        self.counts
            .iter()
            .zip(&self.trials_kept)
            .map(|(c, &k)| if k == 0 { 0.0 } else { c[pair.index()] as f64 / k as f64 })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(FRINGE_CSV_HEADER);
        out.push('\n');
        for i in 0..self.len() {
            for pair in Pair::ALL {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    self.phi[i],
                    pair,
                    self.counts[i][pair.index()],
                    self.trials_kept[i],
                    self.trials_total[i]
                ));
            }
        }
        out
    }

    /// Parses the CSV written by [`FringeData::to_csv`]. Rows sharing a phase
    /// must be contiguous; absent pairs count as zero.
    pub fn from_csv(text: &str) -> Result<FringeData, AnalysisError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == FRINGE_CSV_HEADER => {}
            Some((i, _)) => {
                return Err(AnalysisError::Csv {
                    line: i + 1,
                    message: format!("expected header {FRINGE_CSV_HEADER:?}"),
                })
            }
            None => {
                return Err(AnalysisError::Csv {
                    line: 1,
                    message: "empty file".into(),
                })
            }
        }
        let mut data = FringeData::default();
        let mut seen: Vec<[bool; 4]> = Vec::new();
        for (i, line) in lines {
            let err = |message: String| AnalysisError::Csv { line: i + 1, message };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(err(format!("expected 5 fields, got {}", fields.len())));
            }
            let phi: f64 = fields[0].parse().map_err(|_| err(format!("bad phase {:?}", fields[0])))?;
            let pair: Pair = fields[1].parse().map_err(|e: AnalysisError| err(e.to_string()))?;
            let int = |s: &str| s.parse::<u64>().map_err(|_| err(format!("bad count {s:?}")));
            let (count, kept, total) = (int(fields[2])?, int(fields[3])?, int(fields[4])?);
            if kept > total || count > kept {
                return Err(err("counts must satisfy coincidences <= kept <= total".into()));
            }
            if data.phi.last() != Some(&phi) {
                if data.phi.contains(&phi) {
                    return Err(err(format!("rows for phase {phi} are not contiguous")));
                }
                data.phi.push(phi);
                data.counts.push([0; 4]);
                data.trials_kept.push(kept);
                data.trials_total.push(total);
                seen.push([false; 4]);
            }
            let k = data.len() - 1;
            if data.trials_kept[k] != kept || data.trials_total[k] != total {
                return Err(err(format!("inconsistent trial counts for phase {phi}")));
            }
            if std::mem::replace(&mut seen[k][pair.index()], true) {
                return Err(err(format!("duplicate row for {pair} at phase {phi}")));
            }
            data.counts[k][pair.index()] = count;
        }
        Ok(data)
    }
}

/// Result of fitting `A (1 + V cos(φ - φ0))` to a coincidence series.
#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    /// Mean coincidences per point, on the scale of the input counts.
    pub amplitude: f64,
    pub amplitude_err: f64,
    /// Visibility clamped to [0, 1].
    pub visibility: f64,
    pub visibility_raw: f64,
    pub visibility_err: f64,
    /// Phase offset in (-π, π].
    pub phase: f64,
    pub phase_err: f64,
    /// False when the modulation vanishes and `phase` carries no information.
    pub phase_constrained: bool,
    pub chi2: f64,
    pub dof: usize,
}

impl FitResult {
    pub fn reduced_chi2(&self) -> f64 {
        if self.dof == 0 {
            f64::NAN
        } else {
            self.chi2 / self.dof as f64
        }
    }
}

/// Wraps an angle into (-π, π].
pub fn wrap_phase(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

fn distinct_phases(phi: &[f64]) -> usize {
    let mut wrapped: Vec<f64> = phi.iter().map(|&p| p.rem_euclid(TAU)).collect();
    wrapped.sort_by(f64::total_cmp);
    let mut n = 0;
    let mut last: Option<f64> = None;
    for &p in &wrapped {
        if last.is_none_or(|l| (p - l).abs() > 1e-9) {
            n += 1;
        }
        last = Some(p);
    }
    // 0 and 2π are the same phase
    if n > 1 && wrapped[0] < 1e-9 && TAU - wrapped[wrapped.len() - 1] < 1e-9 {
        n -= 1;
    }
    n
}

fn invert3(m: &[[f64; 3]; 3]) -> Option<[[f64; 3]; 3]> {
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let cof = [
        [c(1, 2, 1, 2), -c(1, 2, 0, 2), c(1, 2, 0, 1)],
        [-c(0, 2, 1, 2), c(0, 2, 0, 2), -c(0, 2, 0, 1)],
        [c(0, 1, 1, 2), -c(0, 1, 0, 2), c(0, 1, 0, 1)],
    ];
    let det = m[0][0] * cof[0][0] + m[0][1] * cof[0][1] + m[0][2] * cof[0][2];
    let diag = m[0][0] * m[1][1] * m[2][2];
    if !det.is_finite() || diag.is_nan() || diag <= 0.0 || det.abs() <= 1e-12 * diag {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    for (i, row) in inv.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = cof[j][i] / det;
        }
    }
    Some(inv)
}

/// Weighted least-squares fit of `a + b cos φ + c sin φ`.
///
/// Counts are first rescaled to the mean number of kept trials, so that
/// points with different post-selection yields compare on one scale. Each
/// point is weighted by the inverse of its binomial variance, floored at one
/// count.
pub fn fit_fringe(series: &FringeSeries) -> Result<FitResult, AnalysisError> {
    let raw: Vec<(f64, f64, f64)> = series
        .phi
        .iter()
        .zip(&series.counts)
        .zip(&series.trials_kept)
        .filter(|(_, &k)| k > 0)
        .map(|((&phi, &c), &k)| (phi, c as f64, k as f64))
        .collect();
    let phis: Vec<f64> = raw.iter().map(|p| p.0).collect();
    let distinct = distinct_phases(&phis);
    if distinct < 4 {
        return Err(AnalysisError::FitUnderdetermined(distinct));
    }
    if raw.iter().all(|p| p.1 == 0.0) {
        return Err(AnalysisError::NoSignal);
    }
    let mean_kept = raw.iter().map(|p| p.2).sum::<f64>() / raw.len() as f64;
    let points: Vec<(f64, f64, f64)> = raw
        .iter()
        .map(|&(phi, c, k)| {
            let scale = mean_kept / k;
            let var = (c * (1.0 - c / k)).max(1.0) * scale * scale;
            (phi, c * scale, 1.0 / var)
        })
        .collect();

    let mut m = [[0.0; 3]; 3];
    let mut r = [0.0; 3];
    for &(phi, y, w) in &points {
        let x = [1.0, phi.cos(), phi.sin()];
        for i in 0..3 {
            r[i] += w * x[i] * y;
            for j in 0..3 {
                m[i][j] += w * x[i] * x[j];
            }
        }
    }
    let cov = invert3(&m).ok_or(AnalysisError::FitUnderdetermined(distinct))?;
    let beta: Vec<f64> = (0..3).map(|i| (0..3).map(|j| cov[i][j] * r[j]).sum()).collect();
    let (a, b, c) = (beta[0], beta[1], beta[2]);

    let chi2: f64 = points
        .iter()
        .map(|&(phi, y, w)| {
            let d = y - (a + b * phi.cos() + c * phi.sin());
            w * d * d
        })
        .sum();

    let modulation = b.hypot(c);
    let phase_constrained = a > 0.0 && modulation > PHASE_CONSTRAINT_FLOOR * a;
    let (visibility_raw, visibility_err, phase, phase_err) = if a <= 0.0 {
        (0.0, f64::INFINITY, 0.0, PI)
    } else if phase_constrained {
        let v = modulation / a;
        let grad_v = [-modulation / (a * a), b / (a * modulation), c / (a * modulation)];
        let m2 = modulation * modulation;
        let grad_p = [0.0, -c / m2, b / m2];
        (
            v,
            quad_form(&cov, &grad_v).sqrt(),
            wrap_phase(c.atan2(b)),
            quad_form(&cov, &grad_p).sqrt(),
        )
    } else {
        (modulation / a, ((cov[1][1] + cov[2][2]) / 2.0).sqrt() / a, 0.0, PI)
    };

    Ok(FitResult {
        amplitude: a,
        amplitude_err: cov[0][0].max(0.0).sqrt(),
        visibility: visibility_raw.clamp(0.0, 1.0),
        visibility_raw,
        visibility_err,
        phase,
        phase_err,
        phase_constrained,
        chi2,
        dof: points.len().saturating_sub(3),
    })
}

fn quad_form(cov: &[[f64; 3]; 3], g: &[f64; 3]) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += g[i] * cov[i][j] * g[j];
        }
    }
    s.max(0.0)
}

/// Teleportation fidelity of a qubit with fringe visibility `v`.
pub fn fidelity_from_visibility(v: f64) -> Result<f64, AnalysisError> {
    if !(0.0..=1.0).contains(&v) {
        return Err(AnalysisError::BadParam(format!("visibility {v} outside [0, 1]")));
    }
    Ok((1.0 + v) / 2.0)
}

pub fn visibility_from_fidelity(f: f64) -> f64 {
    2.0 * f - 1.0
}

/// Standard error of the fidelity: half that of the visibility.
pub fn error_propagation(fit: &FitResult) -> f64 {
    fidelity_error(fit.visibility_err)
}

pub fn fidelity_error(visibility_err: f64) -> f64 {
    visibility_err / 2.0
}

/// Whether `fidelity` is strictly above [`CLASSICAL_FIDELITY_BOUND`].
pub fn classical_bound_check(fidelity: f64) -> bool {
    fidelity > CLASSICAL_FIDELITY_BOUND
}

/// Distance above the classical bound in units of the fidelity error.
pub fn bound_margin_sigma(fidelity: f64, fidelity_err: f64) -> f64 {
    let margin = fidelity - CLASSICAL_FIDELITY_BOUND;
    if fidelity_err > 0.0 {
        margin / fidelity_err
    } else if margin > 0.0 {
        f64::INFINITY
    } else {
        f64::NEG_INFINITY
    }
}
