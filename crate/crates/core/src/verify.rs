//! Seeded Monte Carlo property suites. Each seed is one independent random
//! instance; seeds may run in parallel, results are reported sorted by seed.

use std::f64::consts::PI;
use std::fmt;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{
    bound_general, bound_pure, integrand_gap, integrand_general, integrand_generator, integrand_pure,
    uncertainty_f, UncertaintyInput,
};
use crate::dynamics::{fidelity_series, propagate_density, Domain, OperatorPath, TimeGrid};
use crate::error::{QslError, Result};
use crate::linalg::{
    commutator, hermitian_eig, identity, outer, spectral_norm, trace, trace_product_re,
};
use crate::projectors::{
    eigenvector_path, fictitious_generator, propagator_path, rank1_derivative_norm, ProjectorPath,
};
use crate::random;
use crate::scenarios::{
    make_loschmidt_pair, make_random_smooth, random_hamiltonian_path, random_state_path,
    random_unitary_path, DEFAULT_HARMONICS, DEFAULT_STEPS, RANDOM_WINDOW,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum Suite {
    Theorem1,
    Corollary,
    AppendixA,
    AppendixB,
    Uncertainty,
    Hierarchy,
    Loschmidt,
    Invariance,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Theorem1,
        Suite::Corollary,
        Suite::AppendixA,
        Suite::AppendixB,
        Suite::Uncertainty,
        Suite::Hierarchy,
        Suite::Loschmidt,
        Suite::Invariance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Theorem1 => "theorem1",
            Suite::Corollary => "corollary",
            Suite::AppendixA => "appendixA",
            Suite::AppendixB => "appendixB",
            Suite::Uncertainty => "uncertainty",
            Suite::Hierarchy => "hierarchy",
            Suite::Loschmidt => "loschmidt",
            Suite::Invariance => "invariance",
        }
    }

    pub fn from_name(name: &str) -> Option<Suite> {
        Suite::ALL.into_iter().find(|s| s.name() == name)
    }

    /// Largest accepted deviation for the suite's checks.
    pub fn tolerance(self) -> f64 {
        match self {
            Suite::Theorem1 | Suite::Corollary | Suite::Loschmidt | Suite::AppendixA => 1e-6,
            Suite::AppendixB => 1e-6,
            Suite::Uncertainty | Suite::Hierarchy | Suite::Invariance => 1e-10,
        }
    }

    fn stream(self) -> u64 {
        Suite::ALL.iter().position(|s| *s == self).unwrap() as u64 + 1
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Outcome for one seed. `worst` is the largest deviation measured (a signed
/// violation for inequalities, an absolute difference for identities);
/// `margin = tolerance - worst`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub dim: usize,
    pub passed: bool,
    pub worst: Option<f64>,
    pub margin: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub tolerance: f64,
    pub seeds: usize,
    pub passed: Vec<u64>,
    pub failed: Vec<u64>,
    pub worst: Option<f64>,
    pub min_margin: Option<f64>,
    pub runtime_seconds: f64,
    pub outcomes: Vec<SeedOutcome>,
}

impl SuiteReport {
    pub fn all_passed(&self) -> bool {
        self.failed.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SuiteOptions {
    /// Fixed dimension; `None` lets each suite choose (seed-dependent for some).
    pub dim: Option<usize>,
    /// Grid steps for suites that propagate; `None` means the default 2000.
    pub steps: Option<usize>,
    /// Worker threads; `None` or `Some(0)` means automatic.
    pub threads: Option<usize>,
    /// First seed; seeds are `first_seed .. first_seed + count`.
    pub first_seed: u64,
}

/// Thread cap from `QSL_THREADS` (`0` or unset means automatic).
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var("QSL_THREADS") {
        Err(_) => Ok(None),
        Ok(s) => s
            .trim()
            .parse::<usize>()
            .map(|n| (n > 0).then_some(n))
            .map_err(|_| QslError::input(format!("QSL_THREADS must be a non-negative integer, got '{s}'"))),
    }
}

pub fn run_suite(suite: Suite, seeds: usize, opts: &SuiteOptions) -> Result<SuiteReport> {
    if let Some(d) = opts.dim {
        if !(2..=16).contains(&d) {
            return Err(QslError::input(format!("dim must be in [2, 16], got {d}")));
        }
    }
    if let Some(s) = opts.steps {
        if s < 2 {
            return Err(QslError::input("steps must be at least 2"));
        }
    }
    let start = Instant::now();
    let seed_list: Vec<u64> = (0..seeds as u64).map(|k| opts.first_seed + k).collect();
    let run = || -> Vec<SeedOutcome> {
        seed_list.par_iter().map(|&s| run_seed(suite, s, opts)).collect()
    };
    let mut outcomes = match opts.threads {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| QslError::Numerical(format!("thread pool: {e}")))?
            .install(run),
        _ => run(),
    };
    outcomes.sort_by_key(|o| o.seed);
    let tolerance = suite.tolerance();
    let worst = outcomes.iter().filter_map(|o| o.worst).reduce(f64::max);
    Ok(SuiteReport {
        suite,
        tolerance,
        seeds,
        passed: outcomes.iter().filter(|o| o.passed).map(|o| o.seed).collect(),
        failed: outcomes.iter().filter(|o| !o.passed).map(|o| o.seed).collect(),
        worst,
        min_margin: worst.map(|w| tolerance - w),
        runtime_seconds: start.elapsed().as_secs_f64(),
        outcomes,
    })
}

/// Runs one seed of a suite.
pub fn run_seed(suite: Suite, seed: u64, opts: &SuiteOptions) -> SeedOutcome {
    let mut rng = random::substream(seed, suite.stream());
    let dim = opts.dim.unwrap_or_else(|| default_dim(suite, seed));
    let steps = opts.steps.unwrap_or(DEFAULT_STEPS);
    let result = match suite {
        Suite::Theorem1 => check_theorem1(seed, dim, steps),
        Suite::Corollary => check_corollary(&mut rng, dim, steps),
        Suite::AppendixA => check_appendix_a(&mut rng, dim),
        Suite::AppendixB => check_appendix_b(&mut rng, dim, steps),
        Suite::Uncertainty => check_uncertainty(&mut rng, dim),
        Suite::Hierarchy => check_hierarchy(&mut rng, dim),
        Suite::Loschmidt => check_loschmidt(&mut rng, seed, dim, steps),
        Suite::Invariance => check_invariance(&mut rng, dim),
    };
    let tol = suite.tolerance();
    match result {
        Ok(worst) => SeedOutcome {
            seed,
            dim,
            passed: worst <= tol,
            worst: Some(worst),
            margin: Some(tol - worst),
            error: None,
        },
        Err(e) => SeedOutcome {
            seed,
            dim,
            passed: false,
            worst: None,
            margin: None,
            error: Some(e.to_string()),
        },
    }
}

fn default_dim(suite: Suite, seed: u64) -> usize {
    match suite {
        Suite::AppendixA | Suite::AppendixB => 2 + (seed % 7) as usize,
        _ => 4,
    }
}

fn window() -> Domain {
    Domain::new(0.0, RANDOM_WINDOW).expect("fixed window")
}

fn probes(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let d = window();
    (0..n).map(|_| rng.random_range(d.start..d.end)).collect()
}

/// Exact fidelity against the general bound (both sides) for a random scenario.
fn check_theorem1(seed: u64, dim: usize, steps: usize) -> Result<f64> {
    let s = make_random_smooth(dim, seed, DEFAULT_HARMONICS)?;
    let grid = TimeGrid::uniform(s.domain.start, s.domain.end, steps)?;
    let traj = propagate_density(&s.hamiltonian, &s.rho0, &grid)?;
    let f = fidelity_series(&traj, &s.projector)?;
    let report = bound_general(&s.hamiltonian, &s.projector, &s.rho0, &grid)?;
    Ok(report.compare(&f.values)?.worst_violation().unwrap_or(f64::NEG_INFINITY))
}

/// Rank-one targets: the pure-state integrand equals the general one, and the
/// pure-state bound holds against exact dynamics.
fn check_corollary(rng: &mut impl Rng, dim: usize, steps: usize) -> Result<f64> {
    let d = window();
    let h = random_hamiltonian_path(rng, dim, DEFAULT_HARMONICS, d);
    let phi = random_state_path(rng, dim, d);
    let rho0 = random::density(rng, dim);
    let proj = ProjectorPath::from_state(&phi)?;
    let grid = TimeGrid::uniform(d.start, d.end, steps)?;
    let general = bound_general(&h, &proj, &rho0, &grid)?;
    let pure = bound_pure(&h, &phi, &rho0, &grid)?;
    let agreement = general
        .integrand
        .iter()
        .zip(&pure.integrand)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let traj = propagate_density(&h, &rho0, &grid)?;
    let f = fidelity_series(&traj, &proj)?;
    let violation = pure.compare(&f.values)?.worst_violation().unwrap_or(f64::NEG_INFINITY);
    Ok(agreement.max(violation))
}

/// Rank-one speed formula against the finite-difference spectral norm.
fn check_appendix_a(rng: &mut impl Rng, dim: usize) -> Result<f64> {
    let d = window();
    let phi = random_state_path(rng, dim, d);
    let p = phi.clone();
    let fd_path = ProjectorPath::custom(dim, d, move |t| Ok(outer(&p.at(t)?)))?;
    let mut worst = 0.0f64;
    for t in probes(rng, 5) {
        let formula = rank1_derivative_norm(&phi, t)?;
        let fd = spectral_norm(&fd_path.derivative_at(t)?)?;
        worst = worst.max((formula - fd).abs());
    }
    Ok(worst)
}

/// `||dPi|| <= ||dW||` for `Pi = W Pi_0 W^dag`, and equality when `W` is
/// regenerated from the fictitious generator `i[dPi, Pi]`.
fn check_appendix_b(rng: &mut impl Rng, dim: usize, steps: usize) -> Result<f64> {
    let d = window();
    let w = random_unitary_path(rng, dim, d);
    let rank = rng.random_range(1..dim);
    let pi0 = random::projector(rng, dim, rank);
    let path = ProjectorPath::unitary_generated(w.clone(), pi0.clone())?;
    let ts = probes(rng, 5);
    let mut worst = f64::NEG_INFINITY;
    for &t in &ts {
        let dp = spectral_norm(&path.derivative_at(t)?)?;
        let dw = spectral_norm(&w.derivative_at(t)?)?;
        // inequality: scaled so the 1e-10 slack maps onto the suite tolerance
        worst = worst.max((dp - dw - 1e-10) * 1e4);
    }
    let p2 = path.clone();
    let k = OperatorPath::new(dim, d, move |t| {
        fictitious_generator(&p2, t).expect("generated path is defined on its domain")
    });
    // the flow is only integrated up to the last probe
    let grid = TimeGrid::uniform(d.start, d.start + 0.5, steps)?;
    let regenerated = propagator_path(&k, &grid)?;
    let near: Vec<f64> = (0..5).map(|_| rng.random_range(d.start..d.start + 0.5)).collect();
    for &t in &near {
        let dp = spectral_norm(&path.derivative_at(t)?)?;
        let dw = spectral_norm(&regenerated.derivative_at(t)?)?;
        worst = worst.max((dp - dw).abs());
        let wt = regenerated.at(t)?;
        let rebuilt = &wt * &pi0 * wt.adjoint();
        worst = worst.max(spectral_norm(&(rebuilt - path.at(t)?))?);
    }
    Ok(worst)
}

/// `|tr R[A,B]| <= 2 f(R,A) f(R,B)` for random PSD `R`, and
/// `f(Pi, rho)^2 <= sqrt(F (1 - F))` with `F = tr rho Pi`.
fn check_uncertainty(rng: &mut impl Rng, dim: usize) -> Result<f64> {
    let r = random::psd(rng, dim, 0.3);
    let a = random::hermitian(rng, dim, 1.0);
    let b = random::hermitian(rng, dim, 1.0);
    let fa = uncertainty_f(&UncertaintyInput { r: r.clone(), a: a.clone(), cluster_tol: None })?.value;
    let fb = uncertainty_f(&UncertaintyInput { r: r.clone(), a: b.clone(), cluster_tol: None })?.value;
    let lhs = trace(&(&r * commutator(&a, &b)?)).norm();
    let first = lhs - 2.0 * fa * fb;

    let rank = rng.random_range(1..dim);
    let pi = random::projector(rng, dim, rank);
    let rho = if rng.random::<bool>() {
        random::density(rng, dim)
    } else {
        let r = rng.random_range(1..=dim);
        random::density_of_rank(rng, dim, r)
    };
    let f = trace_product_re(&rho, &pi).clamp(0.0, 1.0);
    let fr = uncertainty_f(&UncertaintyInput { r: pi, a: rho, cluster_tol: None })?.value;
    let second = fr * fr - (f * (1.0 - f)).sqrt();
    Ok(first.max(second))
}

/// Weaker integrands dominate stronger ones: generator >= general for a
/// unitary-generated target, gap >= eigenpath speed for a tracked level.
fn check_hierarchy(rng: &mut impl Rng, dim: usize) -> Result<f64> {
    let d = window();
    let h = random_hamiltonian_path(rng, dim, DEFAULT_HARMONICS, d);
    let w = random_unitary_path(rng, dim, d);
    let rank = rng.random_range(1..dim);
    let path = ProjectorPath::unitary_generated(w.clone(), random::projector(rng, dim, rank))?;
    let ts = probes(rng, 5);
    let mut worst = f64::NEG_INFINITY;
    for &t in &ts {
        let ht = h.at(t)?;
        let general = integrand_general(&ht, &path.at(t)?, &path.derivative_at(t)?)?;
        let generator = integrand_generator(&ht, &w.derivative_at(t)?, &w.at(t)?)?;
        worst = worst.max(general - generator);
    }
    let level = rng.random_range(0..dim);
    let grid = TimeGrid::uniform(d.start, d.end, 400)?;
    let phi = eigenvector_path(&h, level, &grid, None)?;
    for &t in &ts {
        let ht = h.at(t)?;
        let eig = hermitian_eig(&ht, crate::linalg::default_cluster_tol(&ht)?)?;
        let gap = eig.gap_around(&[level]).expect("dim >= 2");
        let bound = integrand_gap(&h.derivative_at(t)?, gap)?;
        worst = worst.max(rank1_derivative_norm(&phi, t)? - bound);
    }
    Ok(worst)
}

/// Echo bound against the numerically propagated echo for a random pair.
fn check_loschmidt(rng: &mut impl Rng, seed: u64, dim: usize, steps: usize) -> Result<f64> {
    let mut base = make_random_smooth(dim, seed.wrapping_mul(3), DEFAULT_HARMONICS)?;
    base.rho0 = outer(&random::unit_vector(rng, dim));
    let eps = rng.random_range(0.05..0.5);
    let v = random::hermitian(rng, dim, 1.0);
    let pair = make_loschmidt_pair(eps, &base, Some(v))?;
    let grid = TimeGrid::uniform(pair.domain.start, pair.domain.end, steps)?;
    let report = crate::bounds::bound_loschmidt(&pair.h1, &pair.h2, &pair.psi2, &grid, None)?;
    let echo = pair.exact_echo(&grid)?;
    Ok(report.compare(&echo)?.worst_violation().unwrap_or(f64::NEG_INFINITY))
}

/// Pure-state integrand under a smooth phase change of the target and, for
/// eigenvector targets, under a scalar energy shift.
fn check_invariance(rng: &mut impl Rng, dim: usize) -> Result<f64> {
    let d = window();
    let h = random_hamiltonian_path(rng, dim, DEFAULT_HARMONICS, d);
    let phi = random_state_path(rng, dim, d);
    let (a, b, w) = (rng.random_range(-3.0..3.0), rng.random_range(-2.0..2.0), rng.random_range(0.2..3.0));
    let rephased = phi.with_phase(move |t| a * (w * t).sin() + b * t, move |t| a * w * (w * t).cos() + b);
    let ts = probes(rng, 5);
    let mut worst = 0.0f64;
    for &t in &ts {
        let ht = h.at(t)?;
        let x = integrand_pure(&ht, &phi.at(t)?, &phi.derivative_at(t)?)?;
        let y = integrand_pure(&ht, &rephased.at(t)?, &rephased.derivative_at(t)?)?;
        worst = worst.max((x - y).abs());
    }
    let level = rng.random_range(0..dim);
    let grid = TimeGrid::uniform(d.start, d.end, 400)?;
    let eigvec = eigenvector_path(&h, level, &grid, None)?;
    let (c0, c1, nu) = (rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(0.2..3.0));
    for &t in &ts {
        let ht = h.at(t)?;
        let shift = c0 + c1 * (nu * t).cos() + PI;
        let shifted = &ht + identity(dim) * Complex64::new(shift, 0.0);
        let v = eigvec.at(t)?;
        let dv = eigvec.derivative_at(t)?;
        let x = integrand_pure(&ht, &v, &dv)?;
        let y = integrand_pure(&shifted, &v, &dv)?;
        worst = worst.max((x - y).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(Suite::from_name(s.name()), Some(s));
        }
        assert_eq!(Suite::from_name("theorem3"), None);
    }

    #[test]
    fn empty_suite_passes() {
        let r = run_suite(Suite::Theorem1, 0, &SuiteOptions::default()).unwrap();
        assert!(r.passed.is_empty() && r.failed.is_empty() && r.all_passed());
        assert_eq!(r.worst, None);
    }

    #[test]
    fn every_suite_runs_a_seed() {
        let opts = SuiteOptions {
            dim: Some(3),
            ..Default::default()
        };
        for s in Suite::ALL {
            // the regenerated flow needs the default resolution
            let opts = SuiteOptions {
                steps: (s != Suite::AppendixB).then_some(400),
                ..opts
            };
            let r = run_suite(s, 2, &opts).unwrap();
            assert!(r.all_passed(), "{s}: {:?}", r.outcomes);
            assert_eq!(r.outcomes.iter().map(|o| o.seed).collect::<Vec<_>>(), vec![0, 1]);
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let base = SuiteOptions {
            steps: Some(200),
            ..Default::default()
        };
        let one = run_suite(Suite::Uncertainty, 6, &SuiteOptions { threads: Some(1), ..base }).unwrap();
        let many = run_suite(Suite::Uncertainty, 6, &SuiteOptions { threads: Some(4), ..base }).unwrap();
        assert_eq!(one.outcomes, many.outcomes);
    }
}
