//! Trial execution and phase sweeps.
//!
//! A trial propagates the sources to the Pockels cell, samples Alice's
//! detectors, races the feed-forward switch, then propagates Bob's
//! conditional state through the cell and his analyzer. Everything that does
//! not depend on randomness is computed once per phase by [`TrialEngine`].

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{FringeData, Pair};
use crate::bench::{Bench, Diagnostic};
use crate::fock::{FockError, FockState, ModeId};
use crate::optics::{ApplyContext, Element, EopConfig, OpticsError, PathId};
use crate::stochastics::{
    apply_channel_dephasing, sample_occupations, stream_rng, thin_by_efficiency, ClickPattern,
    NoiseModel, StochasticsError,
};
use crate::timing::{effective_correction, race, EventKind, EventLog, TimingModel, Trigger};

/// Trials drawn from one generator stream.
pub const CHUNK_TRIALS: u64 = 4096;

/// Wavelength of the down-converted photons.
pub const DEFAULT_WAVELENGTH_NM: f64 = 727.6;

pub const ALICE_DETECTORS: [&str; 2] = ["D1", "D2"];
pub const BOB_DETECTORS: [&str; 2] = ["D1*", "D2*"];

#[derive(Debug, Error)]
pub enum RunError {
    #[error("bench has errors:\n{}", render(.0))]
    Bench(Vec<Diagnostic>),
    #[error("bench roles: {0}")]
    Roles(String),
    #[error("bad run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Stochastics(#[from] StochasticsError),
}

fn render(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RunMode {
    /// No feed-forward; the cell stays off.
    Passive,
    /// A D2 click arms the cell, which flips Bob's relative phase.
    Active,
    /// The race runs but the HV output is blocked.
    ActiveInhibited,
}

impl RunMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::Passive => "passive",
            RunMode::Active => "active",
            RunMode::ActiveInhibited => "active-inhibited",
        }
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RunMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "passive" => Ok(RunMode::Passive),
            "active" => Ok(RunMode::Active),
            "active-inhibited" | "inhibited" => Ok(RunMode::ActiveInhibited),
            _ => Err(format!("unknown mode {s:?} (passive, active, active-inhibited)")),
        }
    }
}

/// Bell-state label of Alice's measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BellOutcome {
    /// No Alice click.
    Psi1Idle,
    /// Both Alice detectors, or a single click with no photon reaching Bob.
    Psi2Idle,
    /// D1 alone.
    Psi3,
    /// D2 alone.
    Psi4,
}

impl BellOutcome {
    pub fn is_idle(self) -> bool {
        matches!(self, BellOutcome::Psi1Idle | BellOutcome::Psi2Idle)
    }
}

/// Labels Alice's click pattern, ordered (D1, D2).
pub fn classify(alice: &ClickPattern) -> BellOutcome {
    match (alice.clicked(0), alice.clicked(1)) {
        (false, false) => BellOutcome::Psi1Idle,
        (true, true) => BellOutcome::Psi2Idle,
        (true, false) => BellOutcome::Psi3,
        (false, true) => BellOutcome::Psi4,
    }
}

/// Threshold detectors cannot tell one photon from two, so a lone Alice click
/// can hide both photons. Such events leave Bob dark; they are discarded with
/// the other idle events.
pub fn coincidence_gate(outcome: BellOutcome, bob: &ClickPattern) -> BellOutcome {
    if !outcome.is_idle() && bob.click_count() == 0 {
        BellOutcome::Psi2Idle
    } else {
        outcome
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mode: RunMode,
    pub trials_per_phi: u64,
    pub phi_grid: Vec<f64>,
    /// Angle of the input splitter: `α = cos θ` on the ancilla path.
    pub input_theta: f64,
    pub noise: NoiseModel,
    pub timing: TimingModel,
    /// Overrides the delay length read from the bench.
    pub delay_m: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: RunMode::Active,
            trials_per_phi: 1000,
            phi_grid: phi_grid(25),
            input_theta: PI / 4.0,
            noise: NoiseModel::default(),
            timing: TimingModel::default(),
            delay_m: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        self.noise.validate()?;
        self.timing.validate().map_err(RunError::Config)?;
        if !(0.0..=PI / 2.0).contains(&self.input_theta) {
            return Err(RunError::Config(format!(
                "input theta {} outside [0, pi/2]",
                self.input_theta
            )));
        }
        if let Some(d) = self.delay_m {
            if !(d > 0.0 && d.is_finite()) {
                return Err(RunError::Config(format!("delay {d} m must be positive")));
            }
        }
        if self.phi_grid.iter().any(|p| !p.is_finite()) {
            return Err(RunError::Config("phase grid has non-finite values".into()));
        }
        Ok(())
    }
}

/// `k` evenly spaced phases covering [0, 2π] inclusive.
pub fn phi_grid(k: usize) -> Vec<f64> {
    match k {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..k).map(|i| TAU * i as f64 / (k - 1) as f64).collect(),
    }
}

/// Interferometer phase produced by a mirror displacement `x`, in the same
/// length unit as `wavelength`.
pub fn phase_from_position(x: f64, wavelength: f64) -> Result<f64, RunError> {
    check_wavelength(wavelength)?;
    Ok(PI * x * 2f64.powf(1.5) / wavelength)
}

pub fn position_from_phase(phi: f64, wavelength: f64) -> Result<f64, RunError> {
    check_wavelength(wavelength)?;
    Ok(phi * wavelength / (PI * 2f64.powf(1.5)))
}

fn check_wavelength(wavelength: f64) -> Result<(), RunError> {
    if wavelength > 0.0 && wavelength.is_finite() {
        Ok(())
    } else {
        Err(RunError::Config(format!("wavelength {wavelength} must be positive")))
    }
}

/// Where the protocol roles live in a bench.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRoles {
    pub alice: [ModeId; 2],
    pub bob: [ModeId; 2],
    pub knob: usize,
    pub input_splitter: usize,
    pub eop: usize,
    pub eop_mode: ModeId,
    /// Summed delay before the cell on its path.
    pub delay_m: f64,
}

impl BenchRoles {
    pub fn resolve(bench: &Bench) -> Result<BenchRoles, RunError> {
        let errors: Vec<Diagnostic> = bench.validate().into_iter().filter(|d| d.is_error()).collect();
        if !errors.is_empty() {
            return Err(RunError::Bench(errors));
        }
        let find = |name: &str| {
            bench
                .detector(name)
                .map(|d| d.mode)
                .ok_or_else(|| RunError::Roles(format!("detector {name} is not declared")))
        };
        let alice = [find(ALICE_DETECTORS[0])?, find(ALICE_DETECTORS[1])?];
        let bob = [find(BOB_DETECTORS[0])?, find(BOB_DETECTORS[1])?];
        let knob = bench
            .phase_knob()
            .ok_or_else(|| RunError::Roles("need exactly one phase knob".into()))?;
        let knob_path = bench.pipeline[knob].paths()[0];
        let input_splitter = bench.pipeline[..knob]
            .iter()
            .rposition(|e| matches!(e, Element::BeamSplitter { .. }) && e.paths().contains(&knob_path))
            .ok_or_else(|| {
                RunError::Roles("no splitter feeds the phase knob's path before it".into())
            })?;
        let eops: Vec<usize> = bench
            .pipeline
            .iter()
            .enumerate()
            .filter(|(_, e)| matches!(e, Element::PockelsCell { .. }))
            .map(|(i, _)| i)
            .collect();
        let [eop] = eops[..] else {
            return Err(RunError::Roles(format!(
                "need exactly one Pockels cell, found {}",
                eops.len()
            )));
        };
        let eop_path = bench.pipeline[eop].paths()[0];
        let alice_paths: Vec<PathId> = alice.iter().map(|m| m.path).collect();
        if let Some(e) = bench.pipeline[eop..]
            .iter()
            .find(|e| e.paths().iter().any(|p| alice_paths.contains(p)))
        {
            return Err(RunError::Roles(format!(
                "{} after the Pockels cell touches an Alice detector path",
                e.kind()
            )));
        }
        if alice_paths.contains(&eop_path) {
            return Err(RunError::Roles("Pockels cell sits on an Alice detector path".into()));
        }
        let delay_m = bench.pipeline[..eop]
            .iter()
            .filter_map(|e| match *e {
                Element::DelayLine { path, length_m } if path == eop_path => Some(length_m),
                _ => None,
            })
            .sum();
        Ok(BenchRoles {
            alice,
            bob,
            knob,
            input_splitter,
            eop,
            eop_mode: ModeId::v(eop_path),
            delay_m,
        })
    }
}

/// Everything recorded about one trial.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub phi: f64,
    pub bell: BellOutcome,
    pub alice_photons: [u8; 2],
    pub bob_photons: [u8; 2],
    pub alice_clicks: ClickPattern,
    pub bob_clicks: ClickPattern,
    pub eop_applied: bool,
    /// The cell fired on a kept D2 event.
    pub corrected: bool,
    pub log: EventLog,
}

impl TrialRecord {
    pub fn discarded(&self) -> bool {
        self.bell.is_idle()
    }

    /// Coincidence pairs registered by this trial.
    pub fn pairs(&self) -> impl Iterator<Item = Pair> + '_ {
        Pair::ALL.into_iter().filter(move |p| {
            let (a, b) = p.detectors();
            !self.discarded() && self.alice_clicks.clicked(a) && self.bob_clicks.clicked(b)
        })
    }
}

#[derive(Clone, Debug)]
struct AliceBranch {
    photons: [u8; 2],
    prob: f64,
    /// Normalized state conditioned on Alice's photon numbers.
    state: FockState,
}

/// Per-phase cache of the deterministic part of a trial.
#[derive(Clone, Debug)]
pub struct TrialEngine {
    phi: f64,
    cfg: RunConfig,
    roles: BenchRoles,
    post: Vec<Element>,
    pre_eop: FockState,
    branches: Vec<AliceBranch>,
    delay_m: f64,
}

impl TrialEngine {
    pub fn new(bench: &Bench, cfg: &RunConfig, phi: f64) -> Result<TrialEngine, RunError> {
        let roles = BenchRoles::resolve(bench)?;
        Self::with_roles(bench, roles, cfg, phi)
    }

    fn with_roles(
        bench: &Bench,
        roles: BenchRoles,
        cfg: &RunConfig,
        phi: f64,
    ) -> Result<TrialEngine, RunError> {
        cfg.validate()?;
        let mut pipeline = bench.pipeline.clone();
        if let Element::BeamSplitter { paths: [a, b], .. } = pipeline[roles.input_splitter] {
            pipeline[roles.input_splitter] = Element::beam_splitter(a, b, cfg.input_theta)?;
        }
        let ctx = ApplyContext {
            knob_phase: phi,
            eop: EopConfig::disarmed(),
        };
        let mut state = FockState::vacuum(&bench.modes)?;
        for &m in &bench.sources {
            state = state.create_photon(m)?;
        }
        for e in &pipeline[..roles.eop] {
            state = e.apply(&state, &ctx)?;
        }

        let mut branches: Vec<AliceBranch> = Vec::new();
        let (i1, i2) = (state.mode_index(roles.alice[0])?, state.mode_index(roles.alice[1])?);
        for (occ, _) in state.entries() {
            let photons = [occ[i1], occ[i2]];
            if branches.iter().any(|b| b.photons == photons) {
                continue;
            }
            let (projected, prob) = state.project(&[
                (roles.alice[0], photons[0]),
                (roles.alice[1], photons[1]),
            ])?;
            branches.push(AliceBranch {
                photons,
                prob,
                state: projected,
            });
        }

        let delay_m = cfg.delay_m.unwrap_or(roles.delay_m);
        Ok(TrialEngine {
            phi,
            cfg: cfg.clone(),
            post: pipeline[roles.eop + 1..].to_vec(),
            pre_eop: state,
            branches,
            roles,
            delay_m,
        })
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn roles(&self) -> &BenchRoles {
        &self.roles
    }

    /// State just before the Pockels cell, before any measurement.
    pub fn pre_eop_state(&self) -> &FockState {
        &self.pre_eop
    }

    /// Alice photon-number outcomes and their probabilities.
    pub fn alice_distribution(&self) -> Vec<([u8; 2], f64)> {
        self.branches.iter().map(|b| (b.photons, b.prob)).collect()
    }

    fn branch(&self, photons: [u8; 2]) -> &AliceBranch {
        self.branches
            .iter()
            .find(|b| b.photons == photons)
            .expect("sampled outcome has a cached branch")
    }

    fn bob_final(&self, state: &FockState, armed: bool) -> Result<FockState, RunError> {
        let ctx = ApplyContext {
            knob_phase: self.phi,
            eop: EopConfig {
                armed,
                ..EopConfig::disarmed()
            },
        };
        let mut s = crate::optics::apply_eop(state, &ctx.eop, self.roles.eop_mode)?;
        for e in &self.post {
            s = e.apply(&s, &ctx)?;
        }
        Ok(s)
    }

    /// Whether the switch wins the race with no jitter.
    fn nominal_armed(&self) -> bool {
        self.cfg.timing.mean_ready_ns(0.0) <= self.cfg.timing.transit_ns(self.delay_m)
    }

    /// Final state for one Alice outcome with noise switched off. The cell
    /// fires when the mode would arm it.
    pub fn conditional_final_state(&self, photons: [u8; 2]) -> Result<Option<FockState>, RunError> {
        let Some(b) = self.branches.iter().find(|b| b.photons == photons) else {
            return Ok(None);
        };
        let fire = self.cfg.mode == RunMode::Active
            && photons == [0, 1]
            && effective_correction(Trigger::D2, self.nominal_armed());
        self.bob_final(&b.state, fire).map(Some)
    }

    /// Coincidence probabilities among kept trials, ideal detectors and no
    /// phase noise.
    pub fn analytic_pairs(&self) -> Result<[f64; 4], RunError> {
        let mut joint = [0.0; 4];
        let mut kept = 0.0;
        for (a, photons) in [[1u8, 0u8], [0, 1]].into_iter().enumerate() {
            let Some(fin) = self.conditional_final_state(photons)? else {
                continue;
            };
            let prob = self.branch(photons).prob;
            let (j1, j2) = (fin.mode_index(self.roles.bob[0])?, fin.mode_index(self.roles.bob[1])?);
            for (occ, amp) in fin.entries() {
                let p = prob * amp.norm_sqr();
                let hits = [occ[j1] > 0, occ[j2] > 0];
                if hits[0] || hits[1] {
                    kept += p;
                }
                for (b, &hit) in hits.iter().enumerate() {
                    if hit {
                        joint[2 * a + b] += p;
                    }
                }
            }
        }
        if kept > 0.0 {
            for v in &mut joint {
                *v /= kept;
            }
        }
        Ok(joint)
    }

    /// Probability that Alice registers exactly one photon.
    pub fn analytic_bell_efficiency(&self) -> f64 {
        self.branches
            .iter()
            .filter(|b| b.photons[0] + b.photons[1] == 1)
            .map(|b| b.prob)
            .sum()
    }

    pub fn run_trial<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<TrialRecord, RunError> {
        let noise = &self.cfg.noise;
        let mode = self.cfg.mode;

        let occ = sample_occupations(&self.pre_eop, rng)?;
        let alice_photons = [
            occ[self.pre_eop.mode_index(self.roles.alice[0])?],
            occ[self.pre_eop.mode_index(self.roles.alice[1])?],
        ];
        let alice_clicks = thin_by_efficiency(&alice_photons, noise.qe, noise.dark_count_prob, 0.0, rng);
        let first = classify(&alice_clicks);

        let transit_ns = self.cfg.timing.transit_ns(self.delay_m);
        let mut eop_applied = false;
        let log = if mode != RunMode::Passive && first == BellOutcome::Psi4 {
            let outcome = race(0.0, &self.cfg.timing, self.delay_m, rng);
            let mut log = outcome.log;
            if mode == RunMode::Active {
                if effective_correction(Trigger::D2, outcome.armed_in_time) {
                    eop_applied = true;
                    log.push(transit_ns, EventKind::EopApplied, "");
                } else {
                    log.push(transit_ns, EventKind::EopMissed, "");
                }
            }
            log
        } else {
            let mut log = EventLog::new();
            log.push(0.0, EventKind::PhotonEmitted, "");
            let detail = match first {
                BellOutcome::Psi3 => Some("D1"),
                BellOutcome::Psi4 => Some("D2"),
                BellOutcome::Psi2Idle => Some("D1+D2"),
                BellOutcome::Psi1Idle => None,
            };
            if let Some(d) = detail {
                log.push(0.0, EventKind::AliceClick, d);
            }
            log.push(transit_ns, EventKind::PhotonAtEop, "");
            log
        };

        let branch = self.branch(alice_photons);
        let dephased = apply_channel_dephasing(&branch.state, self.roles.eop_mode, noise.dephasing_sigma, rng)?;
        let fin = self.bob_final(&dephased, eop_applied)?;
        let bob_occ = sample_occupations(&fin, rng)?;
        let bob_photons = [
            bob_occ[fin.mode_index(self.roles.bob[0])?],
            bob_occ[fin.mode_index(self.roles.bob[1])?],
        ];
        let bob_clicks = thin_by_efficiency(&bob_photons, noise.qe, noise.dark_count_prob, transit_ns, rng);
        let bell = coincidence_gate(first, &bob_clicks);

        Ok(TrialRecord {
            phi: self.phi,
            bell,
            alice_photons,
            bob_photons,
            alice_clicks,
            bob_clicks,
            eop_applied,
            corrected: eop_applied && bell == BellOutcome::Psi4,
            log,
        })
    }
}

/// Runs one trial at `phi`. Sweeps should build a [`TrialEngine`] once.
pub fn run_trial<R: Rng + ?Sized>(
    bench: &Bench,
    cfg: &RunConfig,
    phi: f64,
    rng: &mut R,
) -> Result<TrialRecord, RunError> {
    TrialEngine::new(bench, cfg, phi)?.run_trial(rng)
}

/// Ideal passive coincidence probabilities at `phi`, normalized over kept
/// trials and ordered as [`Pair::ALL`].
pub fn analytic_coincidences(bench: &Bench, phi: f64) -> Result<[f64; 4], RunError> {
    analytic_coincidences_in(bench, RunMode::Passive, phi)
}

/// As [`analytic_coincidences`] for any mode. The cell fires when the
/// jitter-free race is won.
pub fn analytic_coincidences_in(bench: &Bench, mode: RunMode, phi: f64) -> Result<[f64; 4], RunError> {
    let cfg = RunConfig {
        mode,
        input_theta: input_theta_of(bench)?,
        ..RunConfig::default()
    };
    TrialEngine::new(bench, &cfg, phi)?.analytic_pairs()
}

/// Probability that Alice's measurement yields a usable Bell outcome.
pub fn analytic_bell_efficiency(bench: &Bench, phi: f64) -> Result<f64, RunError> {
    let cfg = RunConfig {
        mode: RunMode::Passive,
        input_theta: input_theta_of(bench)?,
        ..RunConfig::default()
    };
    Ok(TrialEngine::new(bench, &cfg, phi)?.analytic_bell_efficiency())
}

fn input_theta_of(bench: &Bench) -> Result<f64, RunError> {
    let roles = BenchRoles::resolve(bench)?;
    match bench.pipeline[roles.input_splitter] {
        Element::BeamSplitter { theta, .. } => Ok(theta),
        _ => unreachable!("input splitter is a beam splitter"),
    }
}

/// A captured trial log.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialLog {
    pub phi_index: usize,
    pub trial: u64,
    pub log: EventLog,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct Tally {
    counts: [u64; 4],
    kept: u64,
    total: u64,
}

/// Generator stream for one chunk of one phase point.
pub fn chunk_stream(phi_index: usize, chunk: u64) -> u64 {
    ((phi_index as u64) << 32) | chunk
}

/// Monte Carlo sweep over `cfg.phi_grid`. Results depend only on `seed`, not
/// on the worker count.
pub fn run_sweep(bench: &Bench, cfg: &RunConfig, seed: u64, workers: usize) -> Result<FringeData, RunError> {
    run_sweep_logged(bench, cfg, seed, workers, 0).map(|(d, _)| d)
}

/// As [`run_sweep`], also keeping the event logs of the first
/// `logs_per_phi` trials of each phase point.
pub fn run_sweep_logged(
    bench: &Bench,
    cfg: &RunConfig,
    seed: u64,
    workers: usize,
    logs_per_phi: u64,
) -> Result<(FringeData, Vec<TrialLog>), RunError> {
    cfg.validate()?;
    if workers == 0 {
        return Err(RunError::Config("workers must be at least 1".into()));
    }
    let roles = BenchRoles::resolve(bench)?;
    let engines = cfg
        .phi_grid
        .iter()
        .map(|&phi| TrialEngine::with_roles(bench, roles.clone(), cfg, phi))
        .collect::<Result<Vec<_>, _>>()?;

    let chunks = cfg.trials_per_phi.div_ceil(CHUNK_TRIALS);
    let jobs: Vec<(usize, u64)> = (0..engines.len())
        .flat_map(|i| (0..chunks).map(move |c| (i, c)))
        .collect();
    let run_job = |&(i, c): &(usize, u64)| -> Result<(Tally, Vec<TrialLog>), RunError> {
        let engine = &engines[i];
        let mut rng = stream_rng(seed, chunk_stream(i, c));
        let start = c * CHUNK_TRIALS;
        let end = (start + CHUNK_TRIALS).min(cfg.trials_per_phi);
        let mut tally = Tally::default();
        let mut logs = Vec::new();
        for t in start..end {
            let rec = engine.run_trial(&mut rng)?;
            tally.total += 1;
            if !rec.discarded() {
                tally.kept += 1;
                for p in rec.pairs() {
                    tally.counts[p.index()] += 1;
                }
            }
            if t < logs_per_phi {
                logs.push(TrialLog {
                    phi_index: i,
                    trial: t,
                    log: rec.log,
                });
            }
        }
        Ok((tally, logs))
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<(Tally, Vec<TrialLog>), RunError>> =
        pool.install(|| jobs.par_iter().map(run_job).collect());

    let mut data = FringeData {
        phi: cfg.phi_grid.clone(),
        counts: vec![[0; 4]; engines.len()],
        trials_kept: vec![0; engines.len()],
        trials_total: vec![0; engines.len()],
    };
    let mut logs = Vec::new();
    for (&(i, _), result) in jobs.iter().zip(results) {
        let (tally, mut chunk_logs) = result?;
        for k in 0..4 {
            data.counts[i][k] += tally.counts[k];
        }
        data.trials_kept[i] += tally.kept;
        data.trials_total[i] += tally.total;
        logs.append(&mut chunk_logs);
    }
    Ok((data, logs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::builtin_figure1;
    use crate::stochastics::stream_rng;

    fn cos2(phi: f64) -> f64 {
        0.5 * (phi / 2.0).cos().powi(2)
    }

    fn sin2(phi: f64) -> f64 {
        0.5 * (phi / 2.0).sin().powi(2)
    }

    #[test]
    fn roles_of_builtin_bench() {
        let bench = builtin_figure1();
        let roles = BenchRoles::resolve(&bench).unwrap();
        assert_eq!(roles.delay_m, 8.0);
        assert_eq!(roles.eop_mode, ModeId::v(bench.path_id("dl").unwrap()));
        assert!(roles.input_splitter < roles.knob);
    }

    #[test]
    fn passive_fringes_match_closed_form() {
        let bench = builtin_figure1();
        for phi in phi_grid(17) {
            let p = analytic_coincidences(&bench, phi).unwrap();
            let want = [sin2(phi), cos2(phi), cos2(phi), sin2(phi)];
            for k in 0..4 {
                assert!((p[k] - want[k]).abs() < 1e-12, "phi={phi} pair={k} {p:?}");
            }
        }
    }

    #[test]
    fn active_fringes_match_closed_form() {
        let bench = builtin_figure1();
        for phi in phi_grid(17) {
            let p = analytic_coincidences_in(&bench, RunMode::Active, phi).unwrap();
            let want = [sin2(phi), cos2(phi), sin2(phi), cos2(phi)];
            for k in 0..4 {
                assert!((p[k] - want[k]).abs() < 1e-12, "phi={phi} pair={k} {p:?}");
            }
        }
    }

    #[test]
    fn bell_efficiency_is_one_half() {
        let bench = builtin_figure1();
        for phi in [0.0, 1.0, PI] {
            assert!((analytic_bell_efficiency(&bench, phi).unwrap() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn correction_closes_on_the_d1_branch_state() {
        // after correction Bob holds the same state whichever detector fired
        let bench = builtin_figure1();
        let cfg = RunConfig::default();
        for phi in [0.3, 1.7, 4.0] {
            let engine = TrialEngine::new(&bench, &cfg, phi).unwrap();
            let d1 = engine.conditional_final_state([1, 0]).unwrap().unwrap();
            let d2 = engine.conditional_final_state([0, 1]).unwrap().unwrap();
            let drop: Vec<ModeId> = engine.roles().alice.to_vec();
            let (d1, d2) = (d1.without_modes(&drop).unwrap(), d2.without_modes(&drop).unwrap());
            assert!(d1.max_amplitude_distance(&d2) < 1e-12, "phi={phi}");
        }
    }

    #[test]
    fn kept_trials_have_one_photon_each_side() {
        let bench = builtin_figure1();
        let cfg = RunConfig {
            noise: NoiseModel {
                qe: 0.45,
                ..NoiseModel::default()
            },
            ..RunConfig::default()
        };
        let engine = TrialEngine::new(&bench, &cfg, 1.0).unwrap();
        let mut rng = stream_rng(3, 0);
        for _ in 0..20_000 {
            let rec = engine.run_trial(&mut rng).unwrap();
            if !rec.discarded() {
                assert_eq!(rec.alice_photons.iter().sum::<u8>(), 1);
                assert_eq!(rec.bob_photons.iter().sum::<u8>(), 1);
            }
            assert_eq!(rec.corrected, rec.eop_applied && rec.bell == BellOutcome::Psi4);
            assert!(rec.log.is_sorted());
        }
    }

    #[test]
    fn ideal_kept_fraction_is_bell_efficiency() {
        let bench = builtin_figure1();
        let cfg = RunConfig {
            trials_per_phi: 20_000,
            phi_grid: vec![0.0, 2.0],
            ..RunConfig::default()
        };
        let data = run_sweep(&bench, &cfg, 5, 2).unwrap();
        for i in 0..2 {
            let f = data.trials_kept[i] as f64 / data.trials_total[i] as f64;
            assert!((f - 0.5).abs() < 3.0 * (0.25f64 / 20_000.0).sqrt(), "{f}");
        }
    }

    #[test]
    fn inhibited_mode_never_fires() {
        let bench = builtin_figure1();
        let cfg = RunConfig {
            mode: RunMode::ActiveInhibited,
            ..RunConfig::default()
        };
        let engine = TrialEngine::new(&bench, &cfg, 0.5).unwrap();
        let mut rng = stream_rng(1, 0);
        let mut raced = 0;
        for _ in 0..2000 {
            let rec = engine.run_trial(&mut rng).unwrap();
            assert!(!rec.eop_applied);
            raced += rec.log.contains(EventKind::HvReady) as u32;
        }
        assert!(raced > 0);
    }

    #[test]
    fn short_delay_misses_the_photon() {
        let bench = builtin_figure1();
        let cfg = RunConfig {
            delay_m: Some(6.0),
            ..RunConfig::default()
        };
        let engine = TrialEngine::new(&bench, &cfg, 0.5).unwrap();
        let mut rng = stream_rng(1, 0);
        for _ in 0..2000 {
            let rec = engine.run_trial(&mut rng).unwrap();
            assert!(!rec.eop_applied);
            if rec.alice_photons == [0, 1] {
                assert!(rec.log.contains(EventKind::EopMissed));
            }
        }
        let p = engine.analytic_pairs().unwrap();
        assert!((p[Pair::D2D2s.index()] - sin2(0.5)).abs() < 1e-12);
    }

    #[test]
    fn sweep_is_independent_of_worker_count() {
        let bench = builtin_figure1();
        let cfg = RunConfig {
            trials_per_phi: 10_000,
            phi_grid: phi_grid(5),
            noise: NoiseModel {
                qe: 0.45,
                dephasing_sigma: 0.3,
                dark_count_prob: 1e-3,
            },
            ..RunConfig::default()
        };
        let a = run_sweep(&bench, &cfg, 99, 1).unwrap();
        let b = run_sweep(&bench, &cfg, 99, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, run_sweep(&bench, &cfg, 100, 1).unwrap());
    }

    #[test]
    fn classification_table() {
        let c = |a, b| classify(&ClickPattern::from_flags(&[a, b]));
        assert_eq!(c(false, false), BellOutcome::Psi1Idle);
        assert_eq!(c(true, true), BellOutcome::Psi2Idle);
        assert_eq!(c(true, false), BellOutcome::Psi3);
        assert_eq!(c(false, true), BellOutcome::Psi4);
        let dark = ClickPattern::from_flags(&[false, false]);
        assert_eq!(coincidence_gate(BellOutcome::Psi3, &dark), BellOutcome::Psi2Idle);
        let lit = ClickPattern::from_flags(&[false, true]);
        assert_eq!(coincidence_gate(BellOutcome::Psi4, &lit), BellOutcome::Psi4);
    }

    #[test]
    fn mirror_calibration() {
        let x = position_from_phase(PI, DEFAULT_WAVELENGTH_NM).unwrap();
        assert!((x - 257.25).abs() < 0.01, "{x}");
        assert!((phase_from_position(x, DEFAULT_WAVELENGTH_NM).unwrap() - PI).abs() < 1e-12);
        assert_eq!(phase_from_position(0.0, DEFAULT_WAVELENGTH_NM).unwrap(), 0.0);
        assert!(phase_from_position(1.0, 0.0).is_err());
        for x in [0.0, 13.7, 257.25, 900.0] {
            let phi = phase_from_position(x, DEFAULT_WAVELENGTH_NM).unwrap();
            assert!((position_from_phase(phi, DEFAULT_WAVELENGTH_NM).unwrap() - x).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_is_inclusive() {
        let g = phi_grid(25);
        assert_eq!(g.len(), 25);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[24], TAU);
    }
}
