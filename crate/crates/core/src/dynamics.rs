//! Schrödinger propagation along time-dependent Hamiltonians and the fidelity
//! series `F_t = tr(rho_t Pi_t)`.

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{QslError, Result};
use crate::linalg::{
    check_density, check_projector, ensure_finite, expm_unitary, identity, max_abs_diff, outer,
    trace, trace_product_re, unitarity_defect, CMatrix, CVector,
};
use crate::projectors::ProjectorPath;

/// Relative finite-difference step: `h = FD_REL_STEP * (domain length)`.
pub const FD_REL_STEP: f64 = 1e-5;

/// Fidelity values within this distance outside `[0, 1]` are clamped silently.
pub const CLAMP_SLACK: f64 = 1e-12;

pub type MatrixFn = Arc<dyn Fn(f64) -> CMatrix + Send + Sync>;

/// Closed time interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub start: f64,
    pub end: f64,
}

impl Domain {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if !(start.is_finite() && end.is_finite() && end > start) {
            return Err(QslError::input(format!("invalid time domain [{start}, {end}]")));
        }
        Ok(Domain { start, end })
    }

    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    fn slack(&self) -> f64 {
        1e-12 * self.start.abs().max(self.end.abs()).max(1.0)
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start - self.slack() && t <= self.end + self.slack()
    }

    pub fn check(&self, t: f64) -> Result<()> {
        if self.contains(t) {
            Ok(())
        } else {
            Err(QslError::Domain {
                t,
                start: self.start,
                end: self.end,
            })
        }
    }

    pub fn default_fd_step(&self) -> f64 {
        FD_REL_STEP * self.len()
    }
}

/// Derivative of `f` at `t` by finite differences with one Richardson
/// refinement. Central when the stencil `[t - h, t + h]` fits in `domain`,
/// one-sided (second order, refined to third) otherwise.
pub(crate) fn finite_difference<T, F>(f: F, t: f64, h: f64, domain: &Domain) -> Result<T>
where
    F: Fn(f64) -> Result<T>,
    T: Add<Output = T> + Sub<Output = T> + Mul<Complex64, Output = T> + Clone,
{
    domain.check(t)?;
    let s = |x: f64| Complex64::new(x, 0.0);
    if domain.contains(t - h) && domain.contains(t + h) {
        let d = |h: f64| -> Result<T> { Ok((f(t + h)? - f(t - h)?) * s(0.5 / h)) };
        let coarse = d(h)?;
        let fine = d(0.5 * h)?;
        Ok(fine * s(4.0 / 3.0) - coarse * s(1.0 / 3.0))
    } else {
        let dir = if domain.contains(t + 2.0 * h) { 1.0 } else { -1.0 };
        if !domain.contains(t + dir * 2.0 * h) {
            return Err(QslError::Domain {
                t,
                start: domain.start,
                end: domain.end,
            });
        }
        let f0 = f(t)?;
        let d = |h: f64| -> Result<T> {
            let hs = dir * h;
            Ok((f(t + hs)? * s(4.0) - f0.clone() * s(3.0) - f(t + 2.0 * hs)?) * s(0.5 / hs))
        };
        let coarse = d(h)?;
        let fine = d(0.5 * h)?;
        Ok(fine * s(4.0 / 3.0) - coarse * s(1.0 / 3.0))
    }
}

/// A time-parametrised operator `t -> A_t` with an optional analytic
/// derivative. Holds Hamiltonians `H_t` and generator unitaries `W_t`.
#[derive(Clone)]
pub struct OperatorPath {
    dim: usize,
    domain: Domain,
    sampler: MatrixFn,
    derivative: Option<MatrixFn>,
}

impl fmt::Debug for OperatorPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorPath")
            .field("dim", &self.dim)
            .field("domain", &self.domain)
            .field("analytic_derivative", &self.derivative.is_some())
            .finish()
    }
}

impl OperatorPath {
    pub fn new(
        dim: usize,
        domain: Domain,
        sampler: impl Fn(f64) -> CMatrix + Send + Sync + 'static,
    ) -> Self {
        OperatorPath {
            dim,
            domain,
            sampler: Arc::new(sampler),
            derivative: None,
        }
    }

    pub fn with_derivative(
        mut self,
        derivative: impl Fn(f64) -> CMatrix + Send + Sync + 'static,
    ) -> Self {
        self.derivative = Some(Arc::new(derivative));
        self
    }

    pub fn constant(matrix: CMatrix, domain: Domain) -> Self {
        let dim = matrix.nrows();
        let zero = CMatrix::zeros(dim, dim);
        OperatorPath::new(dim, domain, move |_| matrix.clone()).with_derivative(move |_| zero.clone())
    }

    pub fn zero(dim: usize, domain: Domain) -> Self {
        OperatorPath::constant(CMatrix::zeros(dim, dim), domain)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn has_analytic_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    /// Sample at `t`, rejecting times outside the domain and non-finite output.
    pub fn at(&self, t: f64) -> Result<CMatrix> {
        self.domain.check(t)?;
        let a = (self.sampler)(t);
        if a.shape() != (self.dim, self.dim) {
            return Err(QslError::input(format!(
                "operator path sampled a {:?} matrix, expected dim {}",
                a.shape(),
                self.dim
            )));
        }
        ensure_finite(&a)?;
        Ok(a)
    }

    /// Analytic derivative when available, finite differences otherwise.
    pub fn derivative_at(&self, t: f64) -> Result<CMatrix> {
        match &self.derivative {
            Some(d) => {
                self.domain.check(t)?;
                Ok(d(t))
            }
            None => self.fd_derivative(t, self.domain.default_fd_step()),
        }
    }

    pub fn fd_derivative(&self, t: f64, h: f64) -> Result<CMatrix> {
        finite_difference(|s| self.at(s), t, h, &self.domain)
    }

    /// Largest `max|A'_analytic - A'_fd|` over `probes`; zero when the path
    /// has no analytic derivative.
    pub fn derivative_mismatch(&self, probes: &[f64]) -> Result<f64> {
        let Some(d) = &self.derivative else {
            return Ok(0.0);
        };
        let h = self.domain.default_fd_step();
        let mut worst = 0.0f64;
        for &t in probes {
            worst = worst.max(max_abs_diff(&d(t), &self.fd_derivative(t, h)?));
        }
        Ok(worst)
    }

    /// `A_t + B_t`, with derivative when both sides have one.
    pub fn plus(&self, other: &OperatorPath) -> Result<OperatorPath> {
        if self.dim != other.dim {
            return Err(QslError::input("operator paths have different dimensions"));
        }
        let domain = Domain::new(
            self.domain.start.max(other.domain.start),
            self.domain.end.min(other.domain.end),
        )?;
        let (a, b) = (self.sampler.clone(), other.sampler.clone());
        let mut sum = OperatorPath::new(self.dim, domain, move |t| a(t) + b(t));
        if let (Some(da), Some(db)) = (self.derivative.clone(), other.derivative.clone()) {
            sum = sum.with_derivative(move |t| da(t) + db(t));
        }
        Ok(sum)
    }

    /// `A_t + scale * V` for a constant `V`.
    pub fn plus_constant(&self, v: &CMatrix, scale: f64) -> Result<OperatorPath> {
        let add = OperatorPath::constant(v.scale(scale), self.domain);
        self.plus(&add)
    }
}

/// Strictly increasing time nodes `t_0 < t_1 < ... < t_N`, `N >= 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
    uniform: bool,
}

impl TimeGrid {
    pub fn uniform(start: f64, end: f64, steps: usize) -> Result<Self> {
        if steps < 2 {
            return Err(QslError::input(format!("a time grid needs at least 2 steps, got {steps}")));
        }
        Domain::new(start, end)?;
        let span = end - start;
        let mut nodes: Vec<f64> = (0..=steps)
            .map(|k| start + span * (k as f64) / (steps as f64))
            .collect();
        nodes[steps] = end;
        Ok(TimeGrid {
            nodes,
            uniform: true,
        })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(QslError::input("a time grid needs at least 3 nodes"));
        }
        if nodes.iter().any(|t| !t.is_finite()) || nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(QslError::input("time grid nodes must be finite and strictly increasing"));
        }
        Ok(TimeGrid {
            nodes,
            uniform: false,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn start(&self) -> f64 {
        self.nodes[0]
    }

    pub fn end(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn domain(&self) -> Domain {
        Domain {
            start: self.start(),
            end: self.end(),
        }
    }

    /// Largest step size.
    pub fn max_step(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Index of the node nearest to `t`.
    pub fn nearest(&self, t: f64) -> usize {
        let k = self.nodes.partition_point(|&x| x < t);
        if k == 0 {
            0
        } else if k >= self.nodes.len() {
            self.nodes.len() - 1
        } else if (t - self.nodes[k - 1]) <= (self.nodes[k] - t) {
            k - 1
        } else {
            k
        }
    }

    pub fn within(&self, domain: &Domain) -> Result<()> {
        domain.check(self.start())?;
        domain.check(self.end())
    }

    /// Same grid with every step split in two.
    pub fn refined(&self) -> TimeGrid {
        let mut nodes = Vec::with_capacity(2 * self.nodes.len() - 1);
        for w in self.nodes.windows(2) {
            nodes.push(w[0]);
            nodes.push(0.5 * (w[0] + w[1]));
        }
        nodes.push(self.end());
        TimeGrid {
            nodes,
            uniform: self.uniform,
        }
    }
}

/// Per-node propagators and (optionally) states or densities.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: TimeGrid,
    pub unitaries: Vec<CMatrix>,
    pub states: Option<Vec<CVector>>,
    pub densities: Option<Vec<CMatrix>>,
}

impl Trajectory {
    pub fn final_unitary(&self) -> &CMatrix {
        self.unitaries.last().unwrap()
    }

    /// `max_k max|U_k^dag U_k - I|`.
    pub fn unitarity_drift(&self) -> f64 {
        self.unitaries.iter().map(unitarity_defect).fold(0.0, f64::max)
    }

    /// `max_k |tr rho_k - 1|`, zero without densities.
    pub fn trace_drift(&self) -> f64 {
        self.densities.as_ref().map_or(0.0, |ds| {
            ds.iter().map(|d| (trace(d) - Complex64::new(1.0, 0.0)).norm()).fold(0.0, f64::max)
        })
    }

    /// Density at node `k`, promoting a pure state if that is what we carry.
    pub fn density(&self, k: usize) -> Option<CMatrix> {
        if let Some(ds) = &self.densities {
            return Some(ds[k].clone());
        }
        self.states.as_ref().map(|s| outer(&s[k]))
    }
}

/// Exponential midpoint rule: `U_{k+1} = exp(-i H(t_k + dt/2) dt) U_k`.
pub fn propagate_unitary(h: &OperatorPath, grid: &TimeGrid) -> Result<Trajectory> {
    grid.within(&h.domain())?;
    let mut unitaries = Vec::with_capacity(grid.len());
    let mut u = identity(h.dim());
    unitaries.push(u.clone());
    for w in grid.nodes().windows(2) {
        let dt = w[1] - w[0];
        let step = expm_unitary(&h.at(w[0] + 0.5 * dt)?, dt)?;
        u = step * u;
        unitaries.push(u.clone());
    }
    Ok(Trajectory {
        grid: grid.clone(),
        unitaries,
        states: None,
        densities: None,
    })
}

/// `rho_t = U_t rho_0 U_t^dag`.
pub fn propagate_density(h: &OperatorPath, rho0: &CMatrix, grid: &TimeGrid) -> Result<Trajectory> {
    if rho0.shape() != (h.dim(), h.dim()) {
        return Err(QslError::input("initial density has the wrong dimension"));
    }
    check_density(rho0, 1e-10)?;
    let mut traj = propagate_unitary(h, grid)?;
    traj.densities = Some(
        traj.unitaries
            .iter()
            .map(|u| {
                let r = u * rho0 * u.adjoint();
                (&r + r.adjoint()).scale(0.5)
            })
            .collect(),
    );
    Ok(traj)
}

/// `psi_t = U_t psi_0`.
pub fn propagate_state(h: &OperatorPath, psi0: &CVector, grid: &TimeGrid) -> Result<Trajectory> {
    if psi0.len() != h.dim() {
        return Err(QslError::input("initial state has the wrong dimension"));
    }
    if (psi0.norm() - 1.0).abs() > 1e-10 {
        return Err(QslError::input("initial state is not normalised"));
    }
    let mut traj = propagate_unitary(h, grid)?;
    traj.states = Some(traj.unitaries.iter().map(|u| u * psi0).collect());
    Ok(traj)
}

#[derive(Debug, Clone)]
pub struct FidelitySeries {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    /// Number of values pulled back into `[0, 1]` from within `CLAMP_SLACK`.
    pub clamped: usize,
}

impl FidelitySeries {
    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Clamps `value` into `[0, 1]` if it is within `CLAMP_SLACK`; reports larger
/// excursions as a numerical error.
pub(crate) fn clamp_probability(value: f64, t: f64, clamped: &mut usize) -> Result<f64> {
    if (0.0..=1.0).contains(&value) {
        return Ok(value);
    }
    if value >= -CLAMP_SLACK && value <= 1.0 + CLAMP_SLACK {
        *clamped += 1;
        return Ok(value.clamp(0.0, 1.0));
    }
    Err(QslError::Numerical(format!(
        "fidelity {value:.15e} at t = {t} is outside [0, 1] beyond round-off"
    )))
}

/// `F_k = tr(rho_{t_k} Pi_{t_k})`.
pub fn fidelity_series(traj: &Trajectory, proj: &ProjectorPath) -> Result<FidelitySeries> {
    if traj.densities.is_none() && traj.states.is_none() {
        return Err(QslError::input("trajectory carries neither states nor densities"));
    }
    let mut values = Vec::with_capacity(traj.grid.len());
    let mut clamped = 0;
    for (k, &t) in traj.grid.nodes().iter().enumerate() {
        let rho = traj.density(k).unwrap();
        let pi = proj.at(t)?;
        if pi.shape() != rho.shape() {
            return Err(QslError::input("projector and state dimensions differ"));
        }
        check_projector(&pi, 1e-8)?;
        values.push(clamp_probability(trace_product_re(&rho, &pi), t, &mut clamped)?);
    }
    Ok(FidelitySeries {
        grid: traj.grid.clone(),
        values,
        clamped,
    })
}
