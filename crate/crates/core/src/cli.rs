//! Command-line front end.
//!
//! Exit codes: 0 success, 2 usage, 3 bad input data, 4 internal failure.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::analysis::{
    bound_margin_sigma, classical_bound_check, error_propagation, fidelity_from_visibility,
    fit_fringe, wrap_phase, AnalysisError, FitResult, FringeData, Pair, CLASSICAL_FIDELITY_BOUND,
};
use crate::bench::{self, Bench, DiagCode};
use crate::protocol::{phi_grid, run_sweep_logged, RunConfig, RunError, RunMode};
use crate::stochastics::{calibrate_sigma, NoiseModel, SPCM_QE};
use crate::timing::TimingModel;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INPUT: u8 = 3;
pub const EXIT_INTERNAL: u8 = 4;

const SPARK: [char; 8] = ['▁', '▂', '▃', '▄', '▅', '▆', '▇', '█'];

/// Visibility of the passive fringes before the delay line adds noise.
pub const BASE_VISIBILITY: f64 = 0.906;
/// Visibility after the delay line.
pub const ACTIVE_VISIBILITY: f64 = 0.80;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Input(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Input(_) => EXIT_INPUT,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Input(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(m) => CliError::Usage(m),
            RunError::Stochastics(crate::stochastics::StochasticsError::BadParam(m)) => {
                CliError::Usage(m)
            }
            RunError::Bench(_) | RunError::Roles(_) => CliError::Input(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::Input(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "qst-sim", version, about = "Active single-photon teleportation simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sweep the phase knob and write coincidence counts.
    Run(RunArgs),
    /// Fit every pair of a fringe CSV.
    Analyze(AnalyzeArgs),
    /// Compare the fringes of two runs.
    Compare(CompareArgs),
    /// Parse and check a bench file.
    ValidateBench(ValidateArgs),
    /// Passive, inhibited and active sweeps with calibrated noise.
    ReproducePaper(ReproduceArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SimArgs {
    /// Bench file, or `builtin`.
    #[arg(long, default_value = "builtin")]
    pub bench: String,
    #[arg(long, default_value = "active", value_parser = parse_mode)]
    pub mode: RunMode,
    /// Trials per phase point.
    #[arg(long, default_value_t = 1000)]
    pub trials: u64,
    /// Points in the inclusive [0, 2π] phase grid.
    #[arg(long, default_value_t = 25)]
    pub phi_steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub qe: f64,
    #[arg(long, default_value_t = 0.0)]
    pub dephasing_sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    pub dark_prob: f64,
    /// Overrides the delay length found in the bench.
    #[arg(long)]
    pub delay_m: Option<f64>,
    #[arg(long, default_value_t = crate::timing::DEFAULT_RISETIME_NS)]
    pub risetime_ns: f64,
    #[arg(long, default_value_t = 0.0)]
    pub jitter_ns: f64,
    #[arg(long, default_value_t = crate::optics::DEFAULT_NS_PER_M)]
    pub ns_per_m: f64,
    #[arg(long, default_value_t = 0.0)]
    pub latency_ns: f64,
    /// Input splitter angle; the qubit is cos θ |1,0> + sin θ |0,1>.
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_4)]
    pub input_theta: f64,
}

const SIM_FLAGS: [&str; 14] = [
    "bench",
    "mode",
    "trials",
    "phi_steps",
    "seed",
    "qe",
    "dephasing_sigma",
    "dark_prob",
    "delay_m",
    "risetime_ns",
    "jitter_ns",
    "ns_per_m",
    "latency_ns",
    "input_theta",
];

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    /// Rerun from a manifest written by an earlier run.
    #[arg(long, conflicts_with_all = SIM_FLAGS)]
    pub manifest: Option<PathBuf>,
    /// Directory for fringe.csv, run.manifest and events.csv. Without it the
    /// CSV goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Keep the event logs of the first N trials of each phase point.
    #[arg(long, default_value_t = 0, requires = "out")]
    pub events: u64,
    #[arg(long, default_value_t = default_workers())]
    pub workers: usize,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    pub csv: PathBuf,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    pub run_a: PathBuf,
    pub run_b: PathBuf,
    #[arg(long, default_value = "D1-D2*", value_parser = parse_pair)]
    pub pair_a: Pair,
    #[arg(long, default_value = "D1-D2*", value_parser = parse_pair)]
    pub pair_b: Pair,
    /// Phase window (rad) for the in-phase and π-offset verdicts.
    #[arg(long, default_value_t = 0.05)]
    pub tolerance: f64,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    pub bench: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReproduceArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
    #[arg(long, default_value_t = 25)]
    pub phi_steps: usize,
    #[arg(long, default_value_t = SPCM_QE)]
    pub qe: f64,
    /// Delay-line phase noise (rad). Defaults to the value that takes the
    /// base visibility down to the active one.
    #[arg(long)]
    pub dephasing_sigma: Option<f64>,
    /// Visibility of the passive setup; 1 removes the baseline noise.
    #[arg(long, default_value_t = BASE_VISIBILITY)]
    pub base_visibility: f64,
    #[arg(long, default_value_t = default_workers())]
    pub workers: usize,
    /// Directory for the three fringe CSVs.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_mode(s: &str) -> Result<RunMode, String> {
    s.parse()
}

fn parse_pair(s: &str) -> Result<Pair, String> {
    s.parse().map_err(|e: AnalysisError| e.to_string())
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let mut stdout = String::new();
    match execute(&cli, &mut stdout) {
        Ok(()) => {
            print!("{stdout}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            print!("{stdout}");
            eprintln!("{}", e.message());
            ExitCode::from(e.code())
        }
    }
}

/// Runs a parsed command, appending its standard output to `out`.
pub fn execute(cli: &Cli, out: &mut String) -> Result<(), CliError> {
    match &cli.command {
        Command::Run(a) => cmd_run(a, out),
        Command::Analyze(a) => cmd_analyze(a, out),
        Command::Compare(a) => cmd_compare(a, out),
        Command::ValidateBench(a) => cmd_validate(a, out),
        Command::ReproducePaper(a) => cmd_reproduce(a, out),
    }
}

fn load_bench(spec: &str) -> Result<Bench, CliError> {
    if spec == "builtin" {
        return Ok(bench::builtin_figure1());
    }
    let text = fs::read_to_string(spec).map_err(|e| {
        CliError::Input(format!("error[{}] {spec}: {e}", DiagCode::UndeclaredFile.as_str()))
    })?;
    bench::parse(&text).map_err(|diags| {
        let lines: Vec<String> = diags.iter().map(|d| format!("{spec}: {d}")).collect();
        CliError::Input(lines.join("\n"))
    })
}

impl SimArgs {
    fn config(&self) -> Result<RunConfig, CliError> {
        if self.phi_steps == 0 {
            return Err(CliError::Usage("--phi-steps must be at least 1".into()));
        }
        let cfg = RunConfig {
            mode: self.mode,
            trials_per_phi: self.trials,
            phi_grid: phi_grid(self.phi_steps),
            input_theta: self.input_theta,
            noise: NoiseModel {
                qe: self.qe,
                dephasing_sigma: self.dephasing_sigma,
                dark_count_prob: self.dark_prob,
            },
            timing: TimingModel {
                risetime_ns: self.risetime_ns,
                delay_ns_per_m: self.ns_per_m,
                detector_latency_ns: self.latency_ns,
                jitter_sigma_ns: self.jitter_ns,
            },
            delay_m: self.delay_m,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn manifest(&self) -> String {
        let bench = if self.bench == "builtin" {
            self.bench.clone()
        } else {
            fs::canonicalize(&self.bench)
                .map(|p| p.display().to_string())
                .unwrap_or_else(|_| self.bench.clone())
        };
        let mut m = String::from("# qst-sim run manifest\n");
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(m, "{k}={v}");
        };
        kv("bench", bench);
        kv("mode", self.mode.to_string());
        kv("trials", self.trials.to_string());
        kv("phi_steps", self.phi_steps.to_string());
        kv("seed", self.seed.to_string());
        kv("qe", self.qe.to_string());
        kv("dephasing_sigma", self.dephasing_sigma.to_string());
        kv("dark_prob", self.dark_prob.to_string());
        if let Some(d) = self.delay_m {
            kv("delay_m", d.to_string());
        }
        kv("risetime_ns", self.risetime_ns.to_string());
        kv("jitter_ns", self.jitter_ns.to_string());
        kv("ns_per_m", self.ns_per_m.to_string());
        kv("latency_ns", self.latency_ns.to_string());
        kv("input_theta", self.input_theta.to_string());
        m
    }

    /// Rebuilds arguments from a manifest. Missing keys take their defaults.
    fn from_manifest(text: &str) -> Result<SimArgs, CliError> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Input(format!("manifest line {}: expected key=value", i + 1)))?;
            let k = k.trim();
            if !SIM_FLAGS.contains(&k) {
                return Err(CliError::Input(format!("manifest line {}: unknown key {k:?}", i + 1)));
            }
            map.insert(k.to_string(), v.trim().to_string());
        }
        let mut argv = vec!["qst-sim".to_string(), "run".to_string()];
        for (k, v) in map {
            argv.push(format!("--{}", k.replace('_', "-")));
            argv.push(v);
        }
        match Cli::try_parse_from(&argv) {
            Ok(Cli {
                command: Command::Run(r),
            }) => Ok(r.sim),
            Ok(_) => unreachable!("argv starts with run"),
            Err(e) => Err(CliError::Input(format!("manifest: {e}"))),
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn cmd_run(args: &RunArgs, out: &mut String) -> Result<(), CliError> {
    let sim = match &args.manifest {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            SimArgs::from_manifest(&text)?
        }
        None => args.sim.clone(),
    };
    if args.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let cfg = sim.config()?;
    let bench = load_bench(&sim.bench)?;
    let (data, logs) = run_sweep_logged(&bench, &cfg, sim.seed, args.workers, args.events)?;
    let csv = data.to_csv();

    let Some(dir) = &args.out else {
        out.push_str(&csv);
        return Ok(());
    };
    fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
    write_file(&dir.join("fringe.csv"), &csv)?;
    write_file(&dir.join("run.manifest"), &sim.manifest())?;
    if args.events > 0 {
        let mut buf = b"timestamp_ns,event,detail\n".to_vec();
        for l in &logs {
            let context = format!("phi_index={};trial={}", l.phi_index, l.trial);
            l.log
                .write_csv_rows(&mut buf, &context)
                .map_err(|e| CliError::Internal(e.to_string()))?;
        }
        let text = String::from_utf8(buf).map_err(|e| CliError::Internal(e.to_string()))?;
        write_file(&dir.join("events.csv"), &text)?;
    }
    let _ = writeln!(
        out,
        "{} run, {} trials x {} phases, seed {}",
        sim.mode,
        sim.trials,
        data.len(),
        sim.seed
    );
    out.push_str(&sparklines(&data));
    let _ = writeln!(out, "wrote {}", dir.join("fringe.csv").display());
    Ok(())
}

/// One sparkline per pair, all on a common scale.
pub fn sparklines(data: &FringeData) -> String {
    let rows: Vec<(Pair, Vec<f64>)> = Pair::ALL.iter().map(|&p| (p, data.fractions(p))).collect();
    let max = rows
        .iter()
        .flat_map(|(_, v)| v.iter().copied())
        .fold(0.0f64, f64::max);
    let mut s = String::new();
    for (pair, values) in rows {
        let line: String = values.iter().map(|&v| spark_char(v, max)).collect();
        let _ = writeln!(s, "  {:<7}{line}", pair.label());
    }
    s
}

fn spark_char(v: f64, max: f64) -> char {
    if max <= 0.0 {
        return SPARK[0];
    }
    let level = ((v / max) * (SPARK.len() - 1) as f64).round() as usize;
    SPARK[level.min(SPARK.len() - 1)]
}

struct PairReport {
    fit: FitResult,
    fidelity: f64,
    fidelity_err: f64,
}

fn pair_report(data: &FringeData, pair: Pair) -> Result<PairReport, AnalysisError> {
    let fit = fit_fringe(&data.series(pair))?;
    let fidelity = fidelity_from_visibility(fit.visibility)?;
    let fidelity_err = error_propagation(&fit);
    Ok(PairReport {
        fit,
        fidelity,
        fidelity_err,
    })
}

fn read_fringe(path: &Path) -> Result<FringeData, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    FringeData::from_csv(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn cmd_analyze(args: &AnalyzeArgs, out: &mut String) -> Result<(), CliError> {
    let data = read_fringe(&args.csv)?;
    out.push_str(&sparklines(&data));
    let mut kv = String::new();
    for pair in Pair::ALL {
        let key = pair.label();
        match pair_report(&data, pair) {
            Ok(r) => {
                let verdict = if classical_bound_check(r.fidelity) { "above" } else { "not above" };
                let _ = writeln!(
                    out,
                    "{key:<7} V = {:.4} ± {:.4}  F = {:.4} ± {:.4}  phi0 = {}  {verdict} the classical bound",
                    r.fit.visibility,
                    r.fit.visibility_err,
                    r.fidelity,
                    r.fidelity_err,
                    phase_text(&r.fit),
                );
                let _ = writeln!(kv, "{key}.visibility={}", r.fit.visibility);
                let _ = writeln!(kv, "{key}.visibility_raw={}", r.fit.visibility_raw);
                let _ = writeln!(kv, "{key}.visibility_err={}", r.fit.visibility_err);
                let _ = writeln!(kv, "{key}.fidelity={}", r.fidelity);
                let _ = writeln!(kv, "{key}.fidelity_err={}", r.fidelity_err);
                let _ = writeln!(kv, "{key}.phase={}", r.fit.phase);
                let _ = writeln!(kv, "{key}.phase_err={}", r.fit.phase_err);
                let _ = writeln!(kv, "{key}.phase_constrained={}", r.fit.phase_constrained);
                let _ = writeln!(kv, "{key}.above_classical={}", classical_bound_check(r.fidelity));
            }
            Err(AnalysisError::NoSignal) => {
                let _ = writeln!(out, "{key:<7} no coincidences");
                let _ = writeln!(kv, "{key}.status=no_signal");
            }
            Err(e) => return Err(e.into()),
        }
    }
    let _ = writeln!(kv, "classical_bound={CLASSICAL_FIDELITY_BOUND}");
    out.push('\n');
    out.push_str(&kv);
    Ok(())
}

fn phase_text(fit: &FitResult) -> String {
    if fit.phase_constrained {
        format!("{:+.4} ± {:.4}", fit.phase, fit.phase_err)
    } else {
        "unconstrained".to_string()
    }
}

/// Phase and visibility differences between two fits.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub delta_phase: f64,
    pub delta_phase_err: f64,
    pub delta_visibility: f64,
    pub delta_visibility_err: f64,
    pub in_phase: bool,
    pub pi_offset: bool,
}

pub fn compare_fits(a: &FitResult, b: &FitResult, tolerance: f64) -> Comparison {
    let delta_phase = wrap_phase(b.phase - a.phase);
    let constrained = a.phase_constrained && b.phase_constrained;
    Comparison {
        delta_phase,
        delta_phase_err: a.phase_err.hypot(b.phase_err),
        delta_visibility: b.visibility - a.visibility,
        delta_visibility_err: a.visibility_err.hypot(b.visibility_err),
        in_phase: constrained && delta_phase.abs() < tolerance,
        pi_offset: constrained && (delta_phase.abs() - std::f64::consts::PI).abs() < tolerance,
    }
}

fn grids_match(a: &FringeData, b: &FringeData) -> bool {
    a.len() == b.len() && a.phi.iter().zip(&b.phi).all(|(x, y)| (x - y).abs() <= 1e-12)
}

fn cmd_compare(args: &CompareArgs, out: &mut String) -> Result<(), CliError> {
    if args.tolerance.is_nan() || args.tolerance <= 0.0 {
        return Err(CliError::Usage("--tolerance must be positive".into()));
    }
    let (a, b) = (read_fringe(&args.run_a)?, read_fringe(&args.run_b)?);
    if !grids_match(&a, &b) {
        return Err(CliError::Input(format!(
            "GridMismatch: {} and {} use different phase grids",
            args.run_a.display(),
            args.run_b.display()
        )));
    }
    let fa = fit_fringe(&a.series(args.pair_a))?;
    let fb = fit_fringe(&b.series(args.pair_b))?;
    let c = compare_fits(&fa, &fb, args.tolerance);
    let verdict = if c.in_phase {
        "in phase"
    } else if c.pi_offset {
        "pi offset"
    } else {
        "neither in phase nor pi offset"
    };
    let _ = writeln!(out, "A {} V = {:.4} phi0 = {}", args.pair_a, fa.visibility, phase_text(&fa));
    let _ = writeln!(out, "B {} V = {:.4} phi0 = {}", args.pair_b, fb.visibility, phase_text(&fb));
    let _ = writeln!(
        out,
        "dphi0 = {:+.4} ± {:.4}  dV = {:+.4} ± {:.4}  {verdict}",
        c.delta_phase, c.delta_phase_err, c.delta_visibility, c.delta_visibility_err
    );
    out.push('\n');
    let _ = writeln!(out, "delta_phase={}", c.delta_phase);
    let _ = writeln!(out, "delta_phase_err={}", c.delta_phase_err);
    let _ = writeln!(out, "delta_visibility={}", c.delta_visibility);
    let _ = writeln!(out, "delta_visibility_err={}", c.delta_visibility_err);
    let _ = writeln!(out, "in_phase={}", c.in_phase);
    let _ = writeln!(out, "pi_offset={}", c.pi_offset);
    Ok(())
}

fn cmd_validate(args: &ValidateArgs, out: &mut String) -> Result<(), CliError> {
    let name = args.bench.display().to_string();
    let text = fs::read_to_string(&args.bench).map_err(|e| {
        CliError::Input(format!("error[{}] {name}: {e}", DiagCode::UndeclaredFile.as_str()))
    })?;
    let bench = bench::parse(&text).map_err(|diags| {
        let lines: Vec<String> = diags.iter().map(|d| format!("{name}: {d}")).collect();
        CliError::Input(lines.join("\n"))
    })?;
    let warnings = bench.validate();
    for w in &warnings {
        let _ = writeln!(out, "{name}: {w}");
    }
    let _ = writeln!(
        out,
        "{name}: ok ({} paths, {} elements, {} detectors, {} warnings)",
        bench.paths.len(),
        bench.pipeline.len(),
        bench.detectors.len(),
        warnings.len()
    );
    Ok(())
}

/// Headline numbers of [`reproduce_paper`].
#[derive(Clone, Debug)]
pub struct HeadlineFigures {
    pub passive: FringeData,
    pub inhibited: FringeData,
    pub active: FringeData,
    pub sigma_base: f64,
    pub sigma_delay: f64,
    pub passive_fit: FitResult,
    pub inhibited_fit: FitResult,
    pub active_fit: FitResult,
    pub f_passive: f64,
    pub f_passive_err: f64,
    pub f_active: f64,
    pub f_active_err: f64,
}

/// Passive fringes carry the baseline noise; the two active sweeps add the
/// delay-line noise on top.
pub fn reproduce_paper(args: &ReproduceArgs) -> Result<HeadlineFigures, CliError> {
    let sigma_base = calibrate_sigma(1.0, args.base_visibility)
        .map_err(|e| CliError::Usage(format!("--base-visibility: {e}")))?;
    let sigma_delay = match args.dephasing_sigma {
        Some(s) => s,
        None => calibrate_sigma(BASE_VISIBILITY, ACTIVE_VISIBILITY)
            .map_err(|e| CliError::Internal(e.to_string()))?,
    };
    if !(sigma_delay >= 0.0 && sigma_delay.is_finite()) {
        return Err(CliError::Usage("--dephasing-sigma must be finite and >= 0".into()));
    }
    if args.phi_steps < 4 {
        return Err(CliError::Usage("--phi-steps must be at least 4 to fit".into()));
    }
    if args.workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let bench = bench::builtin_figure1();
    let sweep = |mode: RunMode, sigma: f64| -> Result<FringeData, CliError> {
        let cfg = RunConfig {
            mode,
            trials_per_phi: args.trials,
            phi_grid: phi_grid(args.phi_steps),
            noise: NoiseModel {
                qe: args.qe,
                dephasing_sigma: sigma,
                dark_count_prob: 0.0,
            },
            ..RunConfig::default()
        };
        Ok(run_sweep_logged(&bench, &cfg, args.seed, args.workers, 0)?.0)
    };
    let active_sigma = sigma_base.hypot(sigma_delay);
    let passive = sweep(RunMode::Passive, sigma_base)?;
    let inhibited = sweep(RunMode::ActiveInhibited, active_sigma)?;
    let active = sweep(RunMode::Active, active_sigma)?;

    let passive_fit = fit_fringe(&passive.series(Pair::D1D2s))?;
    let inhibited_fit = fit_fringe(&inhibited.series(Pair::D2D2s))?;
    let active_fit = fit_fringe(&active.series(Pair::D2D2s))?;
    Ok(HeadlineFigures {
        sigma_base,
        sigma_delay,
        f_passive: fidelity_from_visibility(passive_fit.visibility)?,
        f_passive_err: error_propagation(&passive_fit),
        f_active: fidelity_from_visibility(active_fit.visibility)?,
        f_active_err: error_propagation(&active_fit),
        passive,
        inhibited,
        active,
        passive_fit,
        inhibited_fit,
        active_fit,
    })
}

fn cmd_reproduce(args: &ReproduceArgs, out: &mut String) -> Result<(), CliError> {
    let r = reproduce_paper(args)?;
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
        write_file(&dir.join("passive.csv"), &r.passive.to_csv())?;
        write_file(&dir.join("inhibited.csv"), &r.inhibited.to_csv())?;
        write_file(&dir.join("active.csv"), &r.active.to_csv())?;
    }
    let tol = 0.05;
    let to_active = compare_fits(&r.passive_fit, &r.active_fit, tol);
    let to_inhibited = compare_fits(&r.passive_fit, &r.inhibited_fit, tol);

    let _ = writeln!(
        out,
        "{} trials x {} phases, qe {}, seed {}",
        args.trials, args.phi_steps, args.qe, args.seed
    );
    let _ = writeln!(
        out,
        "phase noise: baseline {:.4} rad, delay line {:.4} rad\n",
        r.sigma_base, r.sigma_delay
    );
    for (title, data, pair, fit) in [
        ("passive", &r.passive, Pair::D1D2s, &r.passive_fit),
        ("active, switch inhibited", &r.inhibited, Pair::D2D2s, &r.inhibited_fit),
        ("active", &r.active, Pair::D2D2s, &r.active_fit),
    ] {
        let _ = writeln!(out, "{title}");
        out.push_str(&sparklines(data));
        let _ = writeln!(
            out,
            "  fit {pair}: V = {:.4} ± {:.4}, phi0 = {}\n",
            fit.visibility,
            fit.visibility_err,
            phase_text(fit)
        );
    }
    let _ = writeln!(
        out,
        "active {} vs passive {}: dphi0 = {:+.4} ± {:.4} ({})",
        Pair::D2D2s,
        Pair::D1D2s,
        to_active.delta_phase,
        to_active.delta_phase_err,
        if to_active.in_phase { "in phase" } else { "not in phase" }
    );
    let _ = writeln!(
        out,
        "inhibited {} vs passive {}: dphi0 = {:+.4} ± {:.4} ({})",
        Pair::D2D2s,
        Pair::D1D2s,
        to_inhibited.delta_phase,
        to_inhibited.delta_phase_err,
        if to_inhibited.pi_offset { "pi offset" } else { "no pi offset" }
    );
    let _ = writeln!(out, "F   = {:.4} ± {:.4}", r.f_passive, r.f_passive_err);
    let _ = writeln!(out, "F_a = {:.4} ± {:.4}", r.f_active, r.f_active_err);
    let _ = writeln!(
        out,
        "F_a is {:.1} sigma above the classical bound {:.4}\n",
        bound_margin_sigma(r.f_active, r.f_active_err),
        CLASSICAL_FIDELITY_BOUND
    );
    let _ = writeln!(out, "f_passive={}", r.f_passive);
    let _ = writeln!(out, "f_passive_err={}", r.f_passive_err);
    let _ = writeln!(out, "f_active={}", r.f_active);
    let _ = writeln!(out, "f_active_err={}", r.f_active_err);
    let _ = writeln!(out, "active_delta_phase={}", to_active.delta_phase);
    let _ = writeln!(out, "inhibited_delta_phase={}", to_inhibited.delta_phase);
    let _ = writeln!(out, "above_classical={}", classical_bound_check(r.f_active));
    Ok(())
}
