//! Packaged test models: a Hamiltonian path, a target projector (and state,
//! for rank-one targets), an initial density and, where one exists, the
//! closed-form fidelity.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

use crate::bounds::default_residual_tol;
use crate::dynamics::{propagate_state, Domain, OperatorPath, TimeGrid};
use crate::error::{QslError, Result};
use crate::linalg::{
    basis, c, expm_unitary, hermitian_eig, identity, outer, sigma_x, sigma_y, sigma_z, trace,
    CMatrix, CVector, I,
};
use crate::projectors::{eigenprojector_path, eigenvector_path, ProjectorPath, StatePath};
use crate::random;

/// Steps of the default working grid.
pub const DEFAULT_STEPS: usize = 2000;

/// Fourier harmonics in random Hamiltonian paths.
pub const DEFAULT_HARMONICS: usize = 3;

/// Length of the time window of random scenarios.
pub const RANDOM_WINDOW: f64 = 3.0;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct Scenario {
    pub name: String,
    pub dim: usize,
    pub hamiltonian: OperatorPath,
    pub projector: ProjectorPath,
    /// Rank-one targets also carry their (gauge-fixed) state path.
    pub state: Option<StatePath>,
    pub rho0: CMatrix,
    pub exact_fidelity: Option<ScalarFn>,
    pub domain: Domain,
    pub params: BTreeMap<String, f64>,
}

impl fmt::Debug for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scenario")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("projector", &self.projector)
            .field("domain", &self.domain)
            .field("params", &self.params)
            .finish()
    }
}

impl Scenario {
    pub fn default_grid(&self) -> TimeGrid {
        TimeGrid::uniform(self.domain.start, self.domain.end, DEFAULT_STEPS)
            .expect("scenario domains are non-empty")
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied()
    }

    /// Levels of an eigen-tracked target.
    pub fn levels(&self) -> Option<&[usize]> {
        match self.projector.kind() {
            crate::projectors::ProjectorKind::EigenTracked { levels, .. } => Some(levels),
            _ => None,
        }
    }

    /// `(W_t, Pi_0)` of a unitary-generated target.
    pub fn generator(&self) -> Option<(&OperatorPath, &CMatrix)> {
        match self.projector.kind() {
            crate::projectors::ProjectorKind::UnitaryGenerated { generator, initial } => {
                Some((generator, initial))
            }
            _ => None,
        }
    }

    /// Initial state vector when `rho0` is pure.
    pub fn pure_initial_state(&self) -> Result<CVector> {
        pure_state_of(&self.rho0)
    }
}

fn pure_state_of(rho: &CMatrix) -> Result<CVector> {
    let purity = trace(&(rho * rho)).re;
    if (purity - 1.0).abs() > 1e-10 {
        return Err(QslError::input(format!("initial density is not pure (purity {purity})")));
    }
    let eig = hermitian_eig(rho, 0.0)?;
    Ok(eig.eigenvector(rho.nrows() - 1))
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn require_positive(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(QslError::input(format!("{name} must be positive and finite, got {x}")));
    }
    Ok(())
}

/// `H = 0`, `Pi = |0><0|`, `rho_0 = |0><0|`, on `[0, 1]`: nothing moves.
pub fn make_static(dim: usize) -> Result<Scenario> {
    if dim < 1 {
        return Err(QslError::input("dimension must be at least 1"));
    }
    let domain = Domain::new(0.0, 1.0)?;
    let p0 = outer(&basis(dim, 0));
    Ok(Scenario {
        name: "static".into(),
        dim,
        hamiltonian: OperatorPath::zero(dim, domain),
        projector: ProjectorPath::fixed(p0.clone(), domain)?,
        state: Some(StatePath::constant(basis(dim, 0), domain)),
        rho0: p0,
        exact_fidelity: Some(Arc::new(|_| 1.0)),
        domain,
        params: params(&[("dim", dim as f64)]),
    })
}

/// Rabi oscillation out of a static target: `H = (delta/2) sigma_x`,
/// `Pi = rho_0 = |0><0|`, exact `F_t = cos^2(delta t / 2)`.
pub fn make_constant_two_level(delta: f64) -> Result<Scenario> {
    require_positive("delta", delta)?;
    let domain = Domain::new(0.0, 1.25 * PI / delta)?;
    let p0 = outer(&basis(2, 0));
    Ok(Scenario {
        name: "constant_two_level".into(),
        dim: 2,
        hamiltonian: OperatorPath::constant(sigma_x().scale(delta / 2.0), domain),
        projector: ProjectorPath::fixed(p0.clone(), domain)?,
        state: Some(StatePath::constant(basis(2, 0), domain)),
        rho0: p0,
        exact_fidelity: Some(Arc::new(move |t| (delta * t / 2.0).cos().powi(2))),
        domain,
        params: params(&[("delta", delta)]),
    })
}

pub fn rotating_field_hamiltonian(delta: f64, v: f64, domain: Domain) -> OperatorPath {
    OperatorPath::new(2, domain, move |t| {
        (sigma_z().scale((v * t).cos()) + sigma_x().scale((v * t).sin())).scale(delta / 2.0)
    })
    .with_derivative(move |t| {
        (sigma_z().scale(-(v * t).sin()) + sigma_x().scale((v * t).cos())).scale(delta * v / 2.0)
    })
}

/// Field of magnitude `delta` rotating at angular speed `v` in the x-z plane;
/// the target is the tracked ground state. In the frame co-rotating with the
/// field the Hamiltonian is constant, which gives
/// `F_t = 1 - v^2/(delta^2 + v^2) sin^2(sqrt(delta^2 + v^2) t / 2)`.
pub fn make_rotating_field(delta: f64, v: f64) -> Result<Scenario> {
    require_positive("delta", delta)?;
    require_positive("v", v)?;
    let domain = Domain::new(0.0, 1.25 * PI / v)?;
    let h = rotating_field_hamiltonian(delta, v, domain);
    let grid = TimeGrid::uniform(domain.start, domain.end, DEFAULT_STEPS)?;
    let projector = eigenprojector_path(&h, &[0], &grid, None)?;
    let state = eigenvector_path(&h, 0, &grid, None)?;
    let rho0 = outer(&state.at(0.0)?);
    let omega = (delta * delta + v * v).sqrt() / 2.0;
    let mix = v * v / (delta * delta + v * v);
    Ok(Scenario {
        name: "rotating_field".into(),
        dim: 2,
        hamiltonian: h,
        projector,
        state: Some(state),
        rho0,
        exact_fidelity: Some(Arc::new(move |t| 1.0 - mix * (omega * t).sin().powi(2))),
        domain,
        params: params(&[("delta", delta), ("v", v)]),
    })
}

/// Block-diagonal `sigma_y` on `n` blocks, `dim = 2n`.
fn block_sigma_y(n: usize) -> CMatrix {
    let mut m = CMatrix::zeros(2 * n, 2 * n);
    for b in 0..n {
        m.view_mut((2 * b, 2 * b), (2, 2)).copy_from(&sigma_y());
    }
    m
}

/// Generator `W_t = exp(-i (v t / 2) Y)` of `n` independent block rotations.
pub fn block_rotor_generator(n: usize, v: f64, domain: Domain) -> OperatorPath {
    let y = block_sigma_y(n);
    let y2 = y.clone();
    OperatorPath::new(2 * n, domain, move |t| {
        expm_unitary(&y, v * t / 2.0).expect("block sigma_y is Hermitian")
    })
    .with_derivative(move |t| {
        let w = expm_unitary(&y2, v * t / 2.0).expect("block sigma_y is Hermitian");
        &y2 * w * (-I * (v / 2.0))
    })
}

/// One-dimensional projector of block `block`:
/// `phi = cos(v t/2)|2b> + sin(v t/2)|2b+1>`.
pub fn block_rotor_component(n: usize, v: f64, block: usize, domain: Domain) -> Result<ProjectorPath> {
    if block >= n {
        return Err(QslError::input("block index out of range"));
    }
    let dim = 2 * n;
    let phi = move |t: f64| {
        let mut x = CVector::zeros(dim);
        x[2 * block] = c((v * t / 2.0).cos(), 0.0);
        x[2 * block + 1] = c((v * t / 2.0).sin(), 0.0);
        x
    };
    let dphi = move |t: f64| {
        let mut x = CVector::zeros(dim);
        x[2 * block] = c(-(v / 2.0) * (v * t / 2.0).sin(), 0.0);
        x[2 * block + 1] = c((v / 2.0) * (v * t / 2.0).cos(), 0.0);
        x
    };
    let path = StatePath::new(dim, domain, move |t| Ok(phi(t))).with_derivative(move |t| Ok(dphi(t)));
    ProjectorPath::from_state(&path)
}

/// `n` two-level blocks, each carrying a rank-one projector that rotates at
/// speed `v/2` in its own block; `H = 0` and `rho_0 = Pi_0 / n`.
/// Then `||dPi|| = v/2` while `tr dPi^2 = 2 n (v/2)^2`.
pub fn make_block_rotors(n: usize, v: f64) -> Result<Scenario> {
    if n < 1 {
        return Err(QslError::input("need at least one block"));
    }
    require_positive("v", v)?;
    let dim = 2 * n;
    let domain = Domain::new(0.0, 1.25 * PI / v)?;
    let mut p0 = CMatrix::zeros(dim, dim);
    for b in 0..n {
        p0[(2 * b, 2 * b)] = c(1.0, 0.0);
    }
    let projector = ProjectorPath::unitary_generated(block_rotor_generator(n, v, domain), p0.clone())?;
    let state = if n == 1 {
        let w = block_rotor_generator(1, v, domain);
        let w2 = w.clone();
        Some(
            StatePath::new(2, domain, move |t| Ok(w.at(t)?.column(0).into_owned()))
                .with_derivative(move |t| Ok(w2.derivative_at(t)?.column(0).into_owned())),
        )
    } else {
        None
    };
    Ok(Scenario {
        name: "block_rotors".into(),
        dim,
        hamiltonian: OperatorPath::zero(dim, domain),
        projector,
        state,
        rho0: p0.scale(1.0 / n as f64),
        exact_fidelity: Some(Arc::new(move |t| (v * t / 2.0).cos().powi(2))),
        domain,
        params: params(&[("n", n as f64), ("v", v)]),
    })
}

pub fn landau_zener_hamiltonian(delta: f64, sweep: f64, domain: Domain) -> OperatorPath {
    OperatorPath::new(2, domain, move |t| {
        (sigma_z().scale(sweep * t) + sigma_x().scale(delta)).scale(0.5)
    })
    .with_derivative(move |_| sigma_z().scale(sweep / 2.0))
}

/// `H_t = (sweep t sigma_z + delta sigma_x) / 2` over `t_span`, tracking the
/// lower level. With `delta = 0` and `0` inside `t_span` the levels cross and
/// construction fails with a degeneracy error.
pub fn make_landau_zener(delta: f64, sweep: f64, t_span: (f64, f64)) -> Result<Scenario> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(QslError::input("delta must be non-negative"));
    }
    require_positive("sweep", sweep)?;
    let domain = Domain::new(t_span.0, t_span.1)?;
    let h = landau_zener_hamiltonian(delta, sweep, domain);
    let grid = TimeGrid::uniform(domain.start, domain.end, DEFAULT_STEPS)?;
    let projector = eigenprojector_path(&h, &[0], &grid, None)?;
    let state = eigenvector_path(&h, 0, &grid, None)?;
    let rho0 = outer(&state.at(domain.start)?);
    Ok(Scenario {
        name: "landau_zener".into(),
        dim: 2,
        hamiltonian: h,
        projector,
        state: Some(state),
        rho0,
        exact_fidelity: None,
        domain,
        params: params(&[
            ("delta", delta),
            ("sweep", sweep),
            ("t_start", t_span.0),
            ("t_end", t_span.1),
        ]),
    })
}

/// Two Hamiltonians started from the same pure state: `h1 = h2 + epsilon V`
/// and the reference solution `psi2` of `h2`.
#[derive(Clone)]
pub struct LoschmidtPair {
    pub name: String,
    pub h1: OperatorPath,
    pub h2: OperatorPath,
    pub psi0: CVector,
    pub psi2: StatePath,
    pub epsilon: f64,
    pub perturbation: CMatrix,
    pub domain: Domain,
}

impl fmt::Debug for LoschmidtPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LoschmidtPair")
            .field("name", &self.name)
            .field("epsilon", &self.epsilon)
            .field("domain", &self.domain)
            .finish()
    }
}

impl LoschmidtPair {
    pub fn default_grid(&self) -> TimeGrid {
        TimeGrid::uniform(self.domain.start, self.domain.end, DEFAULT_STEPS)
            .expect("pair domains are non-empty")
    }

    /// `|<psi1_t|psi2_t>|^2` with `psi1` propagated numerically under `h1`.
    pub fn exact_echo(&self, grid: &TimeGrid) -> Result<Vec<f64>> {
        let traj = propagate_state(&self.h1, &self.psi0, grid)?;
        let states = traj.states.unwrap();
        grid.nodes()
            .iter()
            .zip(states)
            .map(|(&t, psi1)| Ok(psi1.dotc(&self.psi2.at(t)?).norm_sqr().min(1.0)))
            .collect()
    }
}

/// `sigma_x` on the first two basis states of a `dim`-dimensional space.
pub fn first_block_sigma_x(dim: usize) -> CMatrix {
    let mut v = CMatrix::zeros(dim, dim);
    v.view_mut((0, 0), (2, 2)).copy_from(&sigma_x());
    v
}

/// Checks `||i dpsi - H psi|| <= tol` at every grid node.
pub fn check_reference_solution(
    h: &OperatorPath,
    psi: &StatePath,
    grid: &TimeGrid,
    tol: Option<f64>,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for &t in grid.nodes() {
        let ht = h.at(t)?;
        let v = psi.at(t)?;
        let residual = (psi.derivative_at(t)? * I - &ht * &v).norm();
        let tol = match tol {
            Some(x) => x,
            None => default_residual_tol(&ht)?,
        };
        if !(residual <= tol) {
            return Err(QslError::ReferenceSolution {
                t,
                residual,
                tolerance: tol,
            });
        }
        worst = worst.max(residual);
    }
    Ok(worst)
}

/// Perturbs `base` by `epsilon V` (`V` defaults to `sigma_x` on the first
/// block). The base evolution is the reference: constant when `H = 0`,
/// otherwise propagated on the default grid and residual-checked.
pub fn make_loschmidt_pair(
    epsilon: f64,
    base: &Scenario,
    perturbation: Option<CMatrix>,
) -> Result<LoschmidtPair> {
    make_loschmidt_pair_on(epsilon, base, perturbation, &base.default_grid(), None)
}

/// [`make_loschmidt_pair`] with the reference propagated on `grid` and checked
/// against `residual_tol` (default `1e-6 max(1, ||H_t||)`).
pub fn make_loschmidt_pair_on(
    epsilon: f64,
    base: &Scenario,
    perturbation: Option<CMatrix>,
    grid: &TimeGrid,
    residual_tol: Option<f64>,
) -> Result<LoschmidtPair> {
    if !epsilon.is_finite() {
        return Err(QslError::input("epsilon must be finite"));
    }
    if base.dim < 2 && perturbation.is_none() {
        return Err(QslError::input("default perturbation needs dim >= 2"));
    }
    let v = perturbation.unwrap_or_else(|| first_block_sigma_x(base.dim));
    if v.shape() != (base.dim, base.dim) {
        return Err(QslError::input("perturbation has the wrong dimension"));
    }
    crate::linalg::check_hermitian(&v, crate::linalg::HERMITICITY_TOL)?;
    grid.within(&base.domain)?;
    let psi0 = base.pure_initial_state()?;
    let h2 = base.hamiltonian.clone();
    let h1 = h2.plus_constant(&v, epsilon)?;
    let is_free = grid
        .nodes()
        .iter()
        .step_by(97)
        .chain(std::iter::once(&grid.end()))
        .map(|&t| h2.at(t).map(|m| crate::linalg::max_abs(&m)))
        .collect::<Result<Vec<_>>>()?
        .iter()
        .all(|&x| x == 0.0);
    let domain = grid.domain();
    let psi2 = if is_free {
        StatePath::constant(psi0.clone(), domain)
    } else {
        let traj = propagate_state(&h2, &psi0, grid)?;
        StatePath::from_trajectory(&h2, grid, traj.states.unwrap())?
    };
    check_reference_solution(&h2, &psi2, grid, residual_tol)?;
    Ok(LoschmidtPair {
        name: format!("{}+perturbation", base.name),
        h1,
        h2,
        psi0,
        psi2,
        epsilon,
        perturbation: v,
        domain,
    })
}

/// `sum_k A_k cos(w_k t) + B_k sin(w_k t)` with Gaussian Hermitian `A_k, B_k`.
pub fn random_hamiltonian_path(
    rng: &mut impl Rng,
    dim: usize,
    n_harmonics: usize,
    domain: Domain,
) -> OperatorPath {
    let terms: Vec<(f64, CMatrix, CMatrix)> = (0..n_harmonics)
        .map(|_| {
            let w = rng.random_range(0.3..2.0);
            (w, random::hermitian(rng, dim, 1.0), random::hermitian(rng, dim, 1.0))
        })
        .collect();
    let terms = Arc::new(terms);
    let t2 = terms.clone();
    OperatorPath::new(dim, domain, move |t| {
        terms.iter().fold(CMatrix::zeros(dim, dim), |acc, (w, a, b)| {
            acc + a.scale((w * t).cos()) + b.scale((w * t).sin())
        })
    })
    .with_derivative(move |t| {
        t2.iter().fold(CMatrix::zeros(dim, dim), |acc, (w, a, b)| {
            acc + a.scale(-w * (w * t).sin()) + b.scale(w * (w * t).cos())
        })
    })
}

/// Smooth random unitary path `W_t = exp(-i K1 t) exp(-i K2 sin(w t))`.
pub fn random_unitary_path(rng: &mut impl Rng, dim: usize, domain: Domain) -> OperatorPath {
    let k1 = random::hermitian(rng, dim, 1.0);
    let k2 = random::hermitian(rng, dim, 1.0);
    let w = rng.random_range(0.5..2.0);
    let (a1, a2) = (k1.clone(), k2.clone());
    let factors = move |t: f64| {
        (
            expm_unitary(&a1, t).expect("Hermitian"),
            expm_unitary(&a2, (w * t).sin()).expect("Hermitian"),
        )
    };
    let f2 = factors.clone();
    OperatorPath::new(dim, domain, move |t| {
        let (e1, e2) = factors(t);
        e1 * e2
    })
    .with_derivative(move |t| {
        let (e1, e2) = f2(t);
        let left = &k1 * &e1 * &e2 * (-I);
        let right = &e1 * &k2 * &e2 * (-I * (w * (w * t).cos()));
        left + right
    })
}

/// `phi_t = W_t phi_0` for a random smooth unitary path, with analytic derivative.
pub fn random_state_path(rng: &mut impl Rng, dim: usize, domain: Domain) -> StatePath {
    let w = random_unitary_path(rng, dim, domain);
    let phi0 = random::unit_vector(rng, dim);
    let (w2, p2) = (w.clone(), phi0.clone());
    StatePath::new(dim, domain, move |t| Ok(w.at(t)? * &phi0))
        .with_derivative(move |t| Ok(w2.derivative_at(t)? * &p2))
}

/// Which target a random scenario uses; picked from the seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomTarget {
    Static,
    UnitaryGenerated,
    EigenTracked,
}

impl RandomTarget {
    pub fn for_seed(seed: u64) -> Self {
        match seed % 3 {
            0 => RandomTarget::Static,
            1 => RandomTarget::UnitaryGenerated,
            _ => RandomTarget::EigenTracked,
        }
    }
}

/// Random smooth Hamiltonian, random mixed initial state and a random target
/// (static, unitary-generated or eigen-tracked, by seed) on `[0, 3]`.
pub fn make_random_smooth(dim: usize, seed: u64, n_harmonics: usize) -> Result<Scenario> {
    if !(2..=16).contains(&dim) {
        return Err(QslError::input(format!("random scenarios need dim in [2, 16], got {dim}")));
    }
    if n_harmonics == 0 {
        return Err(QslError::input("need at least one harmonic"));
    }
    let domain = Domain::new(0.0, RANDOM_WINDOW)?;
    let mut rng = random::rng(seed);
    let h = random_hamiltonian_path(&mut rng, dim, n_harmonics, domain);
    let rho0 = random::density(&mut rng, dim);
    let rank = rng.random_range(1..dim);
    let target = RandomTarget::for_seed(seed);
    let projector = match target {
        RandomTarget::Static => ProjectorPath::fixed(random::projector(&mut rng, dim, rank), domain)?,
        RandomTarget::UnitaryGenerated => {
            let w = random_unitary_path(&mut rng, dim, domain);
            ProjectorPath::unitary_generated(w, random::projector(&mut rng, dim, rank))?
        }
        RandomTarget::EigenTracked => {
            let grid = TimeGrid::uniform(domain.start, domain.end, DEFAULT_STEPS)?;
            let levels: Vec<usize> = (0..rank).collect();
            eigenprojector_path(&h, &levels, &grid, None)?
        }
    };
    Ok(Scenario {
        name: "random_smooth".into(),
        dim,
        hamiltonian: h,
        projector,
        state: None,
        rho0,
        exact_fidelity: None,
        domain,
        params: params(&[
            ("dim", dim as f64),
            ("seed", seed as f64),
            ("n_harmonics", n_harmonics as f64),
            ("rank", rank as f64),
        ]),
    })
}

/// Names accepted by [`make_named`].
pub const SCENARIO_NAMES: [&str; 6] = [
    "static",
    "constant_two_level",
    "rotating_field",
    "block_rotors",
    "landau_zener",
    "random_smooth",
];

fn get_or(params: &BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

fn get_count(params: &BTreeMap<String, f64>, key: &str, default: usize) -> Result<usize> {
    let x = get_or(params, key, default as f64);
    if !(x >= 0.0 && x.fract() == 0.0 && x <= 1e6) {
        return Err(QslError::input(format!("parameter {key} must be a non-negative integer, got {x}")));
    }
    Ok(x as usize)
}

/// Builds a scenario by name from a parameter map; missing parameters take
/// the defaults below.
///
/// | name | parameters (defaults) |
/// |---|---|
/// | `static` | `dim` (2) |
/// | `constant_two_level` | `delta` (1) |
/// | `rotating_field` | `delta` (1), `v` (0.1) |
/// | `block_rotors` | `n` (4), `v` (1) |
/// | `landau_zener` | `delta` (1), `sweep` (1), `t_start` (-10), `t_end` (10) |
/// | `random_smooth` | `dim` (4), `n_harmonics` (3); seed from the caller |
pub fn make_named(name: &str, params: &BTreeMap<String, f64>, seed: u64) -> Result<Scenario> {
    match name {
        "static" => make_static(get_count(params, "dim", 2)?),
        "constant_two_level" => make_constant_two_level(get_or(params, "delta", 1.0)),
        "rotating_field" => make_rotating_field(get_or(params, "delta", 1.0), get_or(params, "v", 0.1)),
        "block_rotors" => make_block_rotors(get_count(params, "n", 4)?, get_or(params, "v", 1.0)),
        "landau_zener" => make_landau_zener(
            get_or(params, "delta", 1.0),
            get_or(params, "sweep", 1.0),
            (get_or(params, "t_start", -10.0), get_or(params, "t_end", 10.0)),
        ),
        "random_smooth" => make_random_smooth(
            get_count(params, "dim", 4)?,
            seed,
            get_count(params, "n_harmonics", DEFAULT_HARMONICS)?,
        ),
        other => Err(QslError::input(format!(
            "unknown scenario '{other}' (expected one of {})",
            SCENARIO_NAMES.join(", ")
        ))),
    }
}

/// `c(t) I` added to a path; used to check energy-shift invariance.
pub fn shifted_by_scalar(h: &OperatorPath, shift: impl Fn(f64) -> f64 + Send + Sync + 'static) -> OperatorPath {
    let dim = h.dim();
    let hh = h.clone();
    OperatorPath::new(dim, h.domain(), move |t| {
        hh.at(t).expect("within domain") + identity(dim) * Complex64::new(shift(t), 0.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{fidelity_series, propagate_density};
    use crate::linalg::{max_abs, max_abs_diff, spectral_norm, trace_product_re};
    use crate::projectors::derivative_norm;

    fn exact_vs_dynamics(s: &Scenario) -> f64 {
        let grid = s.default_grid();
        let traj = propagate_density(&s.hamiltonian, &s.rho0, &grid).unwrap();
        let f = fidelity_series(&traj, &s.projector).unwrap();
        let exact = s.exact_fidelity.as_ref().unwrap();
        grid.nodes()
            .iter()
            .zip(&f.values)
            .map(|(&t, &x)| (exact(t) - x).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn constant_two_level_examples() {
        let s = make_constant_two_level(1.0).unwrap();
        let f = s.exact_fidelity.as_ref().unwrap();
        assert!((f(PI / 2.0) - 0.5).abs() < 1e-15);
        assert_eq!(f(0.0), 1.0);
        assert!(exact_vs_dynamics(&s) < 1e-6);
        assert!(make_constant_two_level(0.0).is_err());
    }

    #[test]
    fn rotating_field_examples() {
        let s = make_rotating_field(1.0, 0.1).unwrap();
        assert!(exact_vs_dynamics(&s) < 1e-6);
        for t in [0.0, 3.0, 17.0] {
            assert!((derivative_norm(&s.projector, t).unwrap() - 0.05).abs() < 1e-7);
        }
        // adiabatic limit
        let worst = |v: f64| {
            let s = make_rotating_field(1.0, v).unwrap();
            let f = s.exact_fidelity.unwrap();
            (0..200).map(|k| 1.0 - f(k as f64 * 0.5)).fold(0.0, f64::max)
        };
        assert!(worst(0.01) < worst(0.1) && worst(0.1) < worst(0.5));
        assert!(worst(0.001) < 1e-5);
        assert!(make_rotating_field(1.0, -1.0).is_err());
    }

    #[test]
    fn block_rotor_structure() {
        for n in [1usize, 3] {
            let v = 0.8;
            let s = make_block_rotors(n, v).unwrap();
            assert_eq!(s.dim, 2 * n);
            assert!(exact_vs_dynamics(&s) < 1e-10);
            let t = 0.7;
            let dp = s.projector.derivative_at(t).unwrap();
            assert!((spectral_norm(&dp).unwrap() - v / 2.0).abs() < 1e-12);
            let tr2 = trace_product_re(&dp, &dp);
            assert!((tr2 - 2.0 * n as f64 * (v / 2.0).powi(2)).abs() < 1e-12);
            let comps: Vec<CMatrix> = (0..n)
                .map(|b| block_rotor_component(n, v, b, s.domain).unwrap().derivative_at(t).unwrap())
                .collect();
            for a in 0..n {
                for b in 0..n {
                    if a != b {
                        assert!(max_abs(&(&comps[a] * &comps[b])) < 1e-12);
                    }
                }
            }
            let sum = comps.iter().fold(CMatrix::zeros(2 * n, 2 * n), |acc, m| acc + m);
            assert!(max_abs_diff(&sum, &dp) < 1e-12);
        }
    }

    #[test]
    fn landau_zener_examples() {
        let s = make_landau_zener(0.5, 1.0, (-4.0, 4.0)).unwrap();
        let h0 = s.hamiltonian.at(0.0).unwrap();
        let eig = hermitian_eig(&h0, 0.0).unwrap();
        assert!((eig.eigenvalues[1] - eig.eigenvalues[0] - 0.5).abs() < 1e-14);
        assert!(matches!(
            make_landau_zener(0.0, 1.0, (-4.0, 4.0)),
            Err(QslError::Degeneracy { .. })
        ));
    }

    #[test]
    fn loschmidt_pair_examples() {
        let base = make_static(2).unwrap();
        let pair = make_loschmidt_pair(0.2, &base, None).unwrap();
        let grid = TimeGrid::uniform(0.0, 1.0, 100).unwrap();
        let echo = pair.exact_echo(&grid).unwrap();
        for (&t, e) in grid.nodes().iter().zip(echo) {
            assert!((e - (0.2 * t).cos().powi(2)).abs() < 1e-12);
        }
        let rf = make_rotating_field(1.0, 0.3).unwrap();
        let pair = make_loschmidt_pair(0.1, &rf, None).unwrap();
        assert!(pair.exact_echo(&TimeGrid::uniform(0.0, 5.0, 50).unwrap()).is_ok());
        // mixed base state is rejected
        let bad = make_block_rotors(2, 1.0).unwrap();
        assert!(make_loschmidt_pair(0.1, &bad, None).is_err());
    }

    #[test]
    fn random_smooth_is_deterministic() {
        let a = make_random_smooth(4, 17, 3).unwrap();
        let b = make_random_smooth(4, 17, 3).unwrap();
        for t in [0.0, 1.3, 2.9] {
            assert_eq!(a.hamiltonian.at(t).unwrap(), b.hamiltonian.at(t).unwrap());
            assert_eq!(a.projector.at(t).unwrap(), b.projector.at(t).unwrap());
        }
        assert_eq!(a.rho0, b.rho0);
        assert!(make_random_smooth(1, 0, 3).is_err());
        assert!(make_random_smooth(17, 0, 3).is_err());
        for seed in 0..3 {
            let s = make_random_smooth(3, seed, 2).unwrap();
            assert!(s.hamiltonian.derivative_mismatch(&[0.4, 2.2]).unwrap() < 1e-7);
            let diag = s.projector.check_invariants(&[0.5, 1.5, 2.5]).unwrap();
            assert!(diag.idempotency < 1e-10 && diag.derivative_identity < 1e-7, "{diag:?}");
        }
    }

    #[test]
    fn named_construction() {
        for name in SCENARIO_NAMES {
            make_named(name, &BTreeMap::new(), 1).unwrap();
        }
        assert!(make_named("nope", &BTreeMap::new(), 0).is_err());
        let mut p = BTreeMap::new();
        p.insert("n".to_string(), 2.5);
        assert!(make_named("block_rotors", &p, 0).is_err());
    }
}
