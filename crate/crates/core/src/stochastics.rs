//! Randomness-bearing models: Born-rule sampling, detector efficiency and
//! dark counts, and Gaussian dephasing of the nonlocal channel.
//!
//! Every function takes the generator explicitly. Parallel workers derive
//! independent ChaCha streams from one seed with [`stream_rng`].

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::fock::{FockError, FockState, ModeId, OccupationVector};

/// Quantum efficiency of the Si avalanche detectors.
pub const SPCM_QE: f64 = 0.45;

const SAMPLING_NORM_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StochasticsError {
    #[error("state is not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("bad noise parameter: {0}")]
    BadParam(String),
    #[error("bad calibration: {0}")]
    BadCalibration(String),
    #[error(transparent)]
    Fock(#[from] FockError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    /// Probability that one photon reaching a detector registers.
    pub qe: f64,
    /// Standard deviation (rad) of the random phase on the channel mode.
    pub dephasing_sigma: f64,
    /// Per-detector, per-trial dark-click probability.
    pub dark_count_prob: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            qe: 1.0,
            dephasing_sigma: 0.0,
            dark_count_prob: 0.0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), StochasticsError> {
        if !(0.0..=1.0).contains(&self.qe) {
            return Err(StochasticsError::BadParam(format!("qe {} outside [0, 1]", self.qe)));
        }
        if !(self.dephasing_sigma >= 0.0 && self.dephasing_sigma.is_finite()) {
            return Err(StochasticsError::BadParam(format!(
                "dephasing sigma {} must be finite and >= 0",
                self.dephasing_sigma
            )));
        }
        if !(0.0..1.0).contains(&self.dark_count_prob) {
            return Err(StochasticsError::BadParam(format!(
                "dark-count probability {} outside [0, 1)",
                self.dark_count_prob
            )));
        }
        Ok(())
    }
}

/// Clicks of an ordered set of detectors. `Some(t)` is a click at `t` ns.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClickPattern {
    clicks: Vec<Option<f64>>,
}

impl ClickPattern {
    pub fn new(clicks: Vec<Option<f64>>) -> Self {
        ClickPattern { clicks }
    }

    /// Pattern with the given click flags, all clicks at time zero.
    pub fn from_flags(flags: &[bool]) -> Self {
        ClickPattern {
            clicks: flags.iter().map(|&f| f.then_some(0.0)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.clicks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clicks.is_empty()
    }

    pub fn clicked(&self, i: usize) -> bool {
        self.clicks.get(i).is_some_and(Option::is_some)
    }

    pub fn timestamp(&self, i: usize) -> Option<f64> {
        self.clicks.get(i).copied().flatten()
    }

    pub fn click_count(&self) -> usize {
        self.clicks.iter().filter(|c| c.is_some()).count()
    }
}

/// Independent generator for `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws one basis entry with probability `|amplitude|²`.
pub fn sample_occupations<R: Rng + ?Sized>(
    state: &FockState,
    rng: &mut R,
) -> Result<OccupationVector, StochasticsError> {
    let norm = state.norm_sqr();
    if (norm - 1.0).abs() > SAMPLING_NORM_TOLERANCE {
        return Err(StochasticsError::NotNormalized(norm));
    }
    let target = rng.random::<f64>() * norm;
    let mut acc = 0.0;
    let mut last = None;
    for (occ, amp) in state.entries() {
        acc += amp.norm_sqr();
        if target < acc {
            return Ok(occ.clone());
        }
        last = Some(occ);
    }
    // target landed in the rounding gap at the top of the range
    Ok(last.expect("normalized state has entries").clone())
}

/// Turns photon numbers at detectors into clicks: each photon registers with
/// probability `qe`, and each detector may fire a dark count. Clicks are
/// stamped `at_ns`.
pub fn thin_by_efficiency<R: Rng + ?Sized>(
    photons: &[u8],
    qe: f64,
    dark_count_prob: f64,
    at_ns: f64,
    rng: &mut R,
) -> ClickPattern {
    let clicks = photons
        .iter()
        .map(|&n| {
            let registered = if qe >= 1.0 {
                n > 0
            } else if qe <= 0.0 {
                false
            } else {
                (0..n).fold(false, |hit, _| rng.random::<f64>() < qe || hit)
            };
            let dark = dark_count_prob > 0.0 && rng.random::<f64>() < dark_count_prob;
            (registered || dark).then_some(at_ns)
        })
        .collect();
    ClickPattern { clicks }
}

/// Applies a random phase `θ ~ N(0, σ²)` to `mode`. Averaged over trials
/// this scales fringe visibility by `exp(-σ²/2)`.
pub fn apply_channel_dephasing<R: Rng + ?Sized>(
    state: &FockState,
    mode: ModeId,
    sigma: f64,
    rng: &mut R,
) -> Result<FockState, StochasticsError> {
    if sigma.is_nan() || sigma < 0.0 {
        return Err(StochasticsError::BadParam(format!("sigma {sigma} < 0")));
    }
    if sigma == 0.0 {
        state.mode_index(mode)?;
        return Ok(state.clone());
    }
    let theta: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
    Ok(state.apply_phase(mode, theta)?)
}

/// Phase-noise width that reduces visibility `v_in` to `v_out`:
/// `σ = sqrt(2 ln(v_in / v_out))`.
pub fn calibrate_sigma(v_in: f64, v_out: f64) -> Result<f64, StochasticsError> {
    if !(v_in > 0.0 && v_in <= 1.0) {
        return Err(StochasticsError::BadCalibration(format!(
            "input visibility {v_in} outside (0, 1]"
        )));
    }
    if v_out.is_nan() || v_out <= 0.0 {
        return Err(StochasticsError::BadCalibration(format!(
            "output visibility {v_out} is not reachable by phase noise"
        )));
    }
    if v_out > v_in {
        return Err(StochasticsError::BadCalibration(format!(
            "output visibility {v_out} exceeds input {v_in}"
        )));
    }
    Ok((2.0 * (v_in / v_out).ln()).sqrt())
}

/// Mean of `exp(iθ)` for `θ ~ N(0, σ²)`.
pub fn dephasing_contrast(sigma: f64) -> f64 {
    (-sigma * sigma / 2.0).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::ModeId;
    use num_complex::Complex64;
    use std::f64::consts::FRAC_PI_4;

    const A: ModeId = ModeId::v(0);
    const B: ModeId = ModeId::v(1);

    fn singlet() -> FockState {
        let u = crate::optics::splitter_matrix(FRAC_PI_4);
        FockState::vacuum(&[A, B])
            .unwrap()
            .create_photon(A)
            .unwrap()
            .apply_two_mode_unitary(A, B, &u)
            .unwrap()
    }

    #[test]
    fn deterministic_state_always_samples_its_entry() {
        let s = FockState::vacuum(&[A, B]).unwrap().create_photon(B).unwrap();
        let mut rng = stream_rng(1, 0);
        for _ in 0..100 {
            assert_eq!(sample_occupations(&s, &mut rng).unwrap().counts(), &[0, 1]);
        }
    }

    #[test]
    fn unnormalized_state_is_rejected() {
        let s = FockState::from_entries(
            &[A],
            [(OccupationVector::from_counts(&[0]), Complex64::new(0.5, 0.0))],
        )
        .unwrap();
        assert!(matches!(
            sample_occupations(&s, &mut stream_rng(0, 0)),
            Err(StochasticsError::NotNormalized(_))
        ));
    }

    #[test]
    fn singlet_branches_are_balanced() {
        let s = singlet();
        let mut rng = stream_rng(11, 0);
        let n = 1_000_000;
        let hits = (0..n)
            .filter(|_| sample_occupations(&s, &mut rng).unwrap()[0] == 1)
            .count();
        let f = hits as f64 / n as f64;
        assert!((f - 0.5).abs() < 0.0015, "{f}");
    }

    #[test]
    fn efficiency_edge_cases() {
        let mut rng = stream_rng(3, 0);
        let p = thin_by_efficiency(&[1, 0, 2], 1.0, 0.0, 5.0, &mut rng);
        assert_eq!(p, ClickPattern::new(vec![Some(5.0), None, Some(5.0)]));
        for _ in 0..100 {
            let p = thin_by_efficiency(&[1, 2], 0.0, 0.0, 0.0, &mut rng);
            assert_eq!(p.click_count(), 0);
        }
    }

    #[test]
    fn efficiency_rate_matches_qe() {
        let mut rng = stream_rng(5, 0);
        let n = 1_000_000u32;
        let hits = (0..n)
            .filter(|_| thin_by_efficiency(&[1], SPCM_QE, 0.0, 0.0, &mut rng).clicked(0))
            .count();
        let f = hits as f64 / f64::from(n);
        let sigma = (SPCM_QE * (1.0 - SPCM_QE) / f64::from(n)).sqrt();
        assert!((f - SPCM_QE).abs() < 3.0 * sigma, "{f}");
    }

    #[test]
    fn dark_counts_alone_fire_at_their_rate() {
        let mut rng = stream_rng(6, 0);
        let n = 200_000u32;
        let hits = (0..n)
            .filter(|_| thin_by_efficiency(&[0], 0.0, 0.1, 0.0, &mut rng).clicked(0))
            .count();
        let f = hits as f64 / f64::from(n);
        assert!((f - 0.1).abs() < 3.0 * (0.09 / f64::from(n)).sqrt());
    }

    #[test]
    fn zero_sigma_dephasing_is_identity() {
        let s = singlet();
        let out = apply_channel_dephasing(&s, B, 0.0, &mut stream_rng(0, 0)).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn dephasing_preserves_norm() {
        let s = singlet();
        let mut rng = stream_rng(9, 0);
        for _ in 0..100 {
            let out = apply_channel_dephasing(&s, B, 1.3, &mut rng).unwrap();
            assert!((out.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dephasing_contrast_matches_monte_carlo() {
        // E[cos θ] estimated from the relative phase the channel acquires
        let s = singlet();
        let sigma = calibrate_sigma(0.906, 0.80).unwrap();
        let mut rng = stream_rng(21, 0);
        let n = 1_000_000;
        let occ_a = OccupationVector::from_counts(&[1, 0]);
        let occ_b = OccupationVector::from_counts(&[0, 1]);
        let mut acc = 0.0;
        for _ in 0..n {
            let out = apply_channel_dephasing(&s, B, sigma, &mut rng).unwrap();
            let rel = out.amplitude(&occ_b) / -out.amplitude(&occ_a);
            acc += rel.re;
        }
        let mean = acc / n as f64;
        assert!((mean - dephasing_contrast(sigma)).abs() < 3e-3, "{mean}");
        assert!((0.906 * dephasing_contrast(sigma) - 0.80).abs() < 1e-4);
    }

    #[test]
    fn large_sigma_washes_out_contrast() {
        assert!(dephasing_contrast(20.0) < 1e-80);
    }

    #[test]
    fn calibration_closed_form() {
        assert_eq!(calibrate_sigma(0.9, 0.9).unwrap(), 0.0);
        let sigma = calibrate_sigma(0.906, 0.80).unwrap();
        assert!((sigma - 0.4989).abs() < 1e-4, "{sigma}");
        assert!(matches!(
            calibrate_sigma(0.8, 0.9),
            Err(StochasticsError::BadCalibration(_))
        ));
        assert!(matches!(
            calibrate_sigma(0.8, 0.0),
            Err(StochasticsError::BadCalibration(_))
        ));
    }

    #[test]
    fn seeded_streams_are_reproducible() {
        let a: Vec<u64> = (0..8).map(|_| stream_rng(42, 3).random()).collect();
        let b: Vec<u64> = (0..8).map(|_| stream_rng(42, 3).random()).collect();
        assert_eq!(a, b);
        let mut r1 = stream_rng(42, 3);
        let mut r2 = stream_rng(42, 4);
        assert_ne!(r1.random::<u64>(), r2.random::<u64>());
    }

    #[test]
    fn noise_model_validation() {
        assert!(NoiseModel::default().validate().is_ok());
        let bad = NoiseModel {
            qe: 1.2,
            ..NoiseModel::default()
        };
        assert!(bad.validate().is_err());
        let bad = NoiseModel {
            dark_count_prob: 1.0,
            ..NoiseModel::default()
        };
        assert!(bad.validate().is_err());
    }
}
