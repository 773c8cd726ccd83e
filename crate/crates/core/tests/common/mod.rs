//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use proptest::prelude::*;
use qst_sim::bench::{Bench, BenchBuilder};
use qst_sim::fock::{FockState, ModeId, OccupationVector, Polarization};
use qst_sim::optics::{ApplyContext, Element, EopConfig, PhaseSetting};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Matrix = Vec<Vec<Complex64>>;

#[derive(Clone, Debug)]
pub struct BenchSpec {
    pub bench: Bench,
    pub knob: f64,
    pub armed: bool,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn identity(n: usize) -> Matrix {
    (0..n).map(|i| (0..n).map(|j| c(f64::from(u8::from(i == j)), 0.0)).collect()).collect()
}

fn matmul(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|k| (0..n).map(|j| a[i][j] * b[j][k]).sum()).collect())
        .collect()
}

/// Jones matrix of a retarder with retardance `gamma` and fast axis at `angle`.
fn retarder(angle: f64, gamma: f64) -> [[Complex64; 2]; 2] {
    let (s, co) = angle.sin_cos();
    let e = Complex64::from_polar(1.0, gamma);
    let off = (c(1.0, 0.0) - e) * co * s;
    [[co * co + e * s * s, off], [off, e * co * co + s * s]]
}

/// Row `i`: where a photon created in `modes[i]` goes. Written from the
/// textbook element definitions, without the crate's matrices.
pub fn element_matrix(e: &Element, modes: &[ModeId], ctx: &ApplyContext) -> Matrix {
    let idx = |m: ModeId| modes.iter().position(|&x| x == m).expect("mode in bench");
    let mut m = identity(modes.len());
    let pols = [Polarization::H, Polarization::V];
    match *e {
        Element::BeamSplitter { paths: [a, b], theta } => {
            for pol in pols {
                let (i, j) = (idx(ModeId::new(a, pol)), idx(ModeId::new(b, pol)));
                m[i][i] = c(theta.cos(), 0.0);
                m[i][j] = c(-theta.sin(), 0.0);
                m[j][i] = c(theta.sin(), 0.0);
                m[j][j] = c(theta.cos(), 0.0);
            }
        }
        Element::PhaseShifter { path, setting } => {
            let phi = match setting {
                PhaseSetting::Knob => ctx.knob_phase,
                PhaseSetting::Fixed(v) => v,
            };
            for pol in pols {
                let i = idx(ModeId::new(path, pol));
                m[i][i] = Complex64::from_polar(1.0, phi);
            }
        }
        Element::PockelsCell { path } => {
            if ctx.eop.armed {
                let i = idx(ModeId::v(path));
                m[i][i] = c(-1.0, 0.0);
            }
        }
        Element::PolarizingBs { inputs, outputs } => {
            let swaps = [
                (ModeId::h(inputs[0]), ModeId::h(outputs[0])),
                (ModeId::h(inputs[1]), ModeId::h(outputs[1])),
                (ModeId::v(inputs[0]), ModeId::v(outputs[1])),
                (ModeId::v(inputs[1]), ModeId::v(outputs[0])),
            ];
            for (f, t) in swaps {
                let (i, j) = (idx(f), idx(t));
                m[i][i] = c(0.0, 0.0);
                m[j][j] = c(0.0, 0.0);
                m[i][j] = c(1.0, 0.0);
                m[j][i] = c(1.0, 0.0);
            }
        }
        Element::HalfWavePlate { path, angle } | Element::QuarterWavePlate { path, angle } => {
            let gamma = if matches!(e, Element::HalfWavePlate { .. }) { PI } else { FRAC_PI_2 };
            let j = retarder(angle, gamma);
            let (h, v) = (idx(ModeId::h(path)), idx(ModeId::v(path)));
            m[h][h] = j[0][0];
            m[h][v] = j[1][0];
            m[v][h] = j[0][1];
            m[v][v] = j[1][1];
        }
        Element::DelayLine { .. } | Element::Mirror { .. } => {}
    }
    m
}

pub fn transfer_matrix(bench: &Bench, ctx: &ApplyContext) -> Matrix {
    bench
        .pipeline
        .iter()
        .fold(identity(bench.modes.len()), |acc, e| matmul(&acc, &element_matrix(e, &bench.modes, ctx)))
}

pub fn propagate(bench: &Bench, ctx: &ApplyContext) -> FockState {
    let mut s = FockState::vacuum(&bench.modes).unwrap();
    for &m in &bench.sources {
        s = s.create_photon(m).unwrap();
    }
    for e in &bench.pipeline {
        s = e.apply(&s, ctx).unwrap();
    }
    s
}

/// Random pipeline over `n_paths` paths with one to `max_photons` photons.
/// Polarizing splitters appear when there are at least four paths.
pub fn bench_from_seed(seed: u64, n_paths: u32, max_photons: usize, max_len: usize) -> BenchSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = BenchBuilder::new();
    for i in 0..n_paths {
        b.path(&format!("p{i}"));
    }
    let photons = rng.random_range(1..=max_photons);
    for _ in 0..photons {
        let pol = if rng.random::<bool>() { Polarization::H } else { Polarization::V };
        b.source(rng.random_range(0..n_paths), pol);
    }
    let len = rng.random_range(1..=max_len);
    let kinds = if n_paths >= 4 { 8 } else { 7 };
    for _ in 0..len {
        let p = rng.random_range(0..n_paths);
        let angle = rng.random_range(-PI..PI);
        let e = match rng.random_range(0..kinds) {
            0 if n_paths >= 2 => {
                let mut q = rng.random_range(0..n_paths - 1);
                if q >= p {
                    q += 1;
                }
                Element::beam_splitter(p, q, rng.random_range(0.0..=FRAC_PI_2)).unwrap()
            }
            0 | 1 => Element::phase_shifter(p, PhaseSetting::Fixed(angle)).unwrap(),
            2 => Element::phase_shifter(p, PhaseSetting::Knob).unwrap(),
            3 => Element::quarter_wave_plate(p, angle).unwrap(),
            4 => Element::half_wave_plate(p, angle).unwrap(),
            5 => Element::pockels_cell(p),
            6 => Element::mirror(p),
            _ => {
                let mut order: Vec<u32> = (0..n_paths).collect();
                order.shuffle(&mut rng);
                Element::polarizing_bs(order[0], order[1], order[2], order[3]).unwrap()
            }
        };
        b.element(e);
    }
    BenchSpec {
        bench: b.finish(),
        knob: rng.random_range(0.0..std::f64::consts::TAU),
        armed: rng.random(),
    }
}

pub fn random_bench(n_paths: u32, max_photons: usize, max_len: usize) -> impl Strategy<Value = BenchSpec> {
    any::<u64>().prop_map(move |seed| bench_from_seed(seed, n_paths, max_photons, max_len))
}

pub fn permanent(m: &[Vec<Complex64>]) -> Complex64 {
    let n = m.len();
    if n == 0 {
        return Complex64::new(1.0, 0.0);
    }
    // Laplace expansion along the first row
    let mut total = Complex64::new(0.0, 0.0);
    for col in 0..n {
        let minor: Vec<Vec<Complex64>> = m[1..]
            .iter()
            .map(|row| row.iter().enumerate().filter(|&(j, _)| j != col).map(|(_, v)| *v).collect())
            .collect();
        total += m[0][col] * permanent(&minor);
    }
    total
}

fn factorial(n: u8) -> f64 {
    (1..=u32::from(n)).product::<u32>() as f64
}

/// Output amplitude `<t| U |s>` for photon-number vectors `s` and `t`.
pub fn permanent_amplitude(u: &[Vec<Complex64>], s: &[u8], t: &[u8]) -> Complex64 {
    let rows: Vec<usize> = s.iter().enumerate().flat_map(|(i, &n)| std::iter::repeat_n(i, n as usize)).collect();
    let cols: Vec<usize> = t.iter().enumerate().flat_map(|(j, &n)| std::iter::repeat_n(j, n as usize)).collect();
    if rows.len() != cols.len() {
        return Complex64::new(0.0, 0.0);
    }
    let sub: Vec<Vec<Complex64>> = rows.iter().map(|&r| cols.iter().map(|&c| u[r][c]).collect()).collect();
    let norm: f64 = s.iter().chain(t).map(|&n| factorial(n)).product();
    permanent(&sub) / norm.sqrt()
}

/// Every occupation of `modes` modes with exactly `n` photons.
pub fn occupations(modes: usize, n: u8) -> Vec<Vec<u8>> {
    if modes == 0 {
        return if n == 0 { vec![vec![]] } else { vec![] };
    }
    (0..=n)
        .flat_map(|k| {
            occupations(modes - 1, n - k).into_iter().map(move |mut rest| {
                rest.insert(0, k);
                rest
            })
        })
        .collect()
}

pub fn check_against_permanents(spec: &BenchSpec) -> f64 {
    let bench = &spec.bench;
    let ctx = ApplyContext {
        knob_phase: spec.knob,
        eop: if spec.armed { EopConfig::armed() } else { EopConfig::disarmed() },
    };
    let state = propagate(bench, &ctx);
    let u = transfer_matrix(bench, &ctx);
    let n_modes = bench.modes.len();
    let mut input = vec![0u8; n_modes];
    for m in &bench.sources {
        input[bench.modes.iter().position(|x| x == m).unwrap()] += 1;
    }
    let n: u8 = input.iter().sum();
    let mut worst = 0.0f64;
    let mut oracle_norm = 0.0;
    for t in occupations(n_modes, n) {
        let want = permanent_amplitude(&u, &input, &t);
        oracle_norm += want.norm_sqr();
        let got = state.amplitude(&OccupationVector::from_counts(&t));
        worst = worst.max((want - got).norm());
    }
    assert!((oracle_norm - 1.0).abs() < 1e-10, "oracle norm {oracle_norm}");
    for (occ, _) in state.entries() {
        assert_eq!(occ.total(), u32::from(n), "photon number changed");
    }
    worst
}
