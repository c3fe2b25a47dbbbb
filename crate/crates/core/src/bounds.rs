//! Fidelity bounds of the form `F_t >= cos^2(g_0 + int_0^t s(tau) dtau)`.
//!
//! Each bound family differs only in its speed integrand `s`; everything after
//! that (quadrature, validity windows, threshold times) is shared through
//! [`BoundReport::from_integrand`].

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::dynamics::{OperatorPath, TimeGrid};
use crate::error::{QslError, Result};
use crate::linalg::{
    check_density, check_hermitian, check_projector, commutator, default_cluster_tol,
    hermitian_eig, spectral_norm, trace, trace_product_re, unitarity_defect, CMatrix, CVector,
    HERMITICITY_TOL, I,
};
use crate::projectors::{
    eigenprojector_path, eigenvector_path, orthogonal_norm, rank1_derivative_norm,
    track_eigenspace, ProjectorPath, StatePath,
};

/// Slack on `tr(rho_0 Pi_0)` outside `[0, 1]` that is silently clamped.
pub const OVERLAP_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Integrand `||i[H, Pi] + dPi||`.
    General,
    /// Pure-target integrand `||(I - P_phi)(iH phi + dphi)||`.
    Pure,
    /// Eigenpath speed `||dP_phi||` with `g_0 = 0`.
    Adiabatic,
    /// `||dH|| / gap`.
    Gap,
    /// `||H - i dW W^dag||`.
    Generator,
    /// `sqrt(tr dPi^2 / 2)`.
    Pfeifer,
    /// `||(I - P_psi)(H1 - H2) psi||` along the reference solution `psi`.
    Loschmidt,
}

impl BoundKind {
    pub const ALL: [BoundKind; 7] = [
        BoundKind::General,
        BoundKind::Pure,
        BoundKind::Adiabatic,
        BoundKind::Gap,
        BoundKind::Generator,
        BoundKind::Pfeifer,
        BoundKind::Loschmidt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundKind::General => "general",
            BoundKind::Pure => "pure",
            BoundKind::Adiabatic => "adiabatic",
            BoundKind::Gap => "gap",
            BoundKind::Generator => "generator",
            BoundKind::Pfeifer => "pfeifer",
            BoundKind::Loschmidt => "loschmidt",
        }
    }

    pub fn from_name(name: &str) -> Option<BoundKind> {
        BoundKind::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// Integrand samples, their running integral and the resulting bound series.
#[derive(Debug, Clone)]
pub struct BoundReport {
    pub kind: BoundKind,
    pub grid: TimeGrid,
    pub integrand: Vec<f64>,
    /// Trapezoidal running integral of `integrand`, starting at 0.
    pub cumulative: Vec<f64>,
    pub g0: f64,
    /// `cos^2(g0 + cumulative)` while `g0 + cumulative <= pi/2`, `None` after.
    pub lower: Vec<Option<f64>>,
    /// `cos^2(g0 - cumulative)` while `cumulative <= g0`, `None` after.
    pub upper: Option<Vec<Option<f64>>>,
    /// First time with `g0 + cumulative = pi/2`; `None` if not reached on the grid.
    pub t_plus: Option<f64>,
    /// First time with `g0 - cumulative = 0`.
    pub t_minus: Option<f64>,
}

/// Comparison of a bound against an exact fidelity series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    /// `max(lower - F)` over the lower-bound window (positive means violated).
    pub max_violation_lower: Option<f64>,
    /// `max(F - upper)` over the upper-bound window.
    pub max_violation_upper: Option<f64>,
    /// Smallest `F - lower` or `upper - F` seen anywhere.
    pub min_slack: Option<f64>,
}

impl BoundCheck {
    pub fn worst_violation(&self) -> Option<f64> {
        match (self.max_violation_lower, self.max_violation_upper) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        }
    }
}

impl BoundReport {
    pub fn from_integrand(
        kind: BoundKind,
        grid: &TimeGrid,
        integrand: Vec<f64>,
        g0: f64,
        with_upper: bool,
    ) -> Result<Self> {
        if integrand.len() != grid.len() {
            return Err(QslError::input("integrand length does not match the grid"));
        }
        if let Some(bad) = integrand.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(QslError::Numerical(format!("invalid integrand sample {bad}")));
        }
        if !(0.0..=FRAC_PI_2).contains(&g0) {
            return Err(QslError::input(format!("g0 = {g0} outside [0, pi/2]")));
        }
        let cumulative = cumulative_trapezoid(grid.nodes(), &integrand);
        let t_plus = threshold_time(&cumulative, grid.nodes(), FRAC_PI_2 - g0);
        let lower = cumulative
            .iter()
            .map(|&cum| (g0 + cum <= FRAC_PI_2).then(|| (g0 + cum).cos().powi(2)))
            .collect();
        let (upper, t_minus) = if with_upper {
            let up = cumulative
                .iter()
                .map(|&cum| (cum <= g0).then(|| (g0 - cum).cos().powi(2)))
                .collect();
            (Some(up), threshold_time(&cumulative, grid.nodes(), g0))
        } else {
            (None, None)
        };
        Ok(BoundReport {
            kind,
            grid: grid.clone(),
            integrand,
            cumulative,
            g0,
            lower,
            upper,
            t_plus,
            t_minus,
        })
    }

    pub fn final_cumulative(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    pub fn compare(&self, exact: &[f64]) -> Result<BoundCheck> {
        if exact.len() != self.grid.len() {
            return Err(QslError::input("exact fidelity length does not match the grid"));
        }
        let fold_max = |acc: Option<f64>, x: f64| Some(acc.map_or(x, |a: f64| a.max(x)));
        let mut check = BoundCheck {
            max_violation_lower: None,
            max_violation_upper: None,
            min_slack: None,
        };
        for (k, &f) in exact.iter().enumerate() {
            if let Some(lo) = self.lower[k] {
                check.max_violation_lower = fold_max(check.max_violation_lower, lo - f);
            }
            if let Some(Some(up)) = self.upper.as_ref().map(|u| u[k]) {
                check.max_violation_upper = fold_max(check.max_violation_upper, f - up);
            }
        }
        check.min_slack = check.worst_violation().map(|v| -v);
        Ok(check)
    }
}

/// Running composite-trapezoid integral on (possibly non-uniform) nodes.
pub fn cumulative_trapezoid(nodes: &[f64], values: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..values.len() {
        acc += 0.5 * (values[k] + values[k - 1]) * (nodes[k] - nodes[k - 1]);
        out.push(acc);
    }
    out
}

/// First time at which the nondecreasing `cumulative` reaches `target`,
/// linearly interpolated inside the bracketing step. `None` if never reached.
pub fn threshold_time(cumulative: &[f64], nodes: &[f64], target: f64) -> Option<f64> {
    if cumulative.is_empty() || cumulative.len() != nodes.len() {
        return None;
    }
    if target <= cumulative[0] {
        return Some(nodes[0]);
    }
    for k in 1..cumulative.len() {
        if cumulative[k] >= target {
            let (c0, c1) = (cumulative[k - 1], cumulative[k]);
            let frac = if c1 > c0 { (target - c0) / (c1 - c0) } else { 1.0 };
            return Some(nodes[k - 1] + frac * (nodes[k] - nodes[k - 1]));
        }
    }
    None
}

/// `g_0 = arccos sqrt(overlap)`, with `overlap` clamped into `[0, 1]` when
/// it is within round-off of the interval.
pub fn initial_angle(overlap: f64) -> Result<f64> {
    if !(overlap >= -OVERLAP_CLAMP && overlap <= 1.0 + OVERLAP_CLAMP) {
        return Err(QslError::input(format!("initial overlap {overlap} outside [0, 1]")));
    }
    Ok(overlap.clamp(0.0, 1.0).sqrt().acos())
}

fn check_same_dims(h: &CMatrix, other: &CMatrix) -> Result<()> {
    if h.shape() != other.shape() {
        return Err(QslError::input(format!(
            "dimension mismatch: {:?} vs {:?}",
            h.shape(),
            other.shape()
        )));
    }
    Ok(())
}

fn scan<F>(grid: &TimeGrid, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(f64) -> Result<f64>,
{
    grid.nodes().iter().map(|&t| f(t)).collect()
}

/// `||i[H, Pi] + dPi/dt||`.
pub fn integrand_general(h: &CMatrix, pi: &CMatrix, pidot: &CMatrix) -> Result<f64> {
    check_same_dims(h, pi)?;
    check_same_dims(h, pidot)?;
    check_projector(pi, 1e-8)?;
    spectral_norm(&(commutator(h, pi)? * I + pidot))
}

/// General bound for an arbitrary projector path and initial density.
/// When `[H_t, Pi_t] = 0` the integrand is just `||dPi/dt||`.
pub fn bound_general(
    h: &OperatorPath,
    proj: &ProjectorPath,
    rho0: &CMatrix,
    grid: &TimeGrid,
) -> Result<BoundReport> {
    if h.dim() != proj.dim() {
        return Err(QslError::input("Hamiltonian and projector dimensions differ"));
    }
    grid.within(&h.domain())?;
    grid.within(&proj.domain())?;
    check_density(rho0, 1e-10)?;
    check_same_dims(rho0, &CMatrix::zeros(h.dim(), h.dim()))?;
    let g0 = initial_angle(trace_product_re(rho0, &proj.at(grid.start())?))?;
    let integrand = scan(grid, |t| {
        integrand_general(&h.at(t)?, &proj.at(t)?, &proj.derivative_at(t)?)
    })?;
    BoundReport::from_integrand(BoundKind::General, grid, integrand, g0, true)
}

/// `sqrt(||iH phi + dphi||^2 - |<iH phi + dphi|phi>|^2)` for normalised `phi`.
pub fn integrand_pure(h: &CMatrix, phi: &CVector, phidot: &CVector) -> Result<f64> {
    if h.nrows() != phi.len() || phi.len() != phidot.len() {
        return Err(QslError::input("dimension mismatch in pure-state integrand"));
    }
    if (phi.norm() - 1.0).abs() > 1e-10 {
        return Err(QslError::input(format!("state norm {} is not 1", phi.norm())));
    }
    let chi = h * phi * I + phidot;
    Ok(orthogonal_norm(&phi.unscale(phi.norm()), &chi))
}

/// Bound for a rank-one target `|phi_t><phi_t|`.
pub fn bound_pure(
    h: &OperatorPath,
    phi: &StatePath,
    rho0: &CMatrix,
    grid: &TimeGrid,
) -> Result<BoundReport> {
    if h.dim() != phi.dim() {
        return Err(QslError::input("Hamiltonian and state dimensions differ"));
    }
    grid.within(&h.domain())?;
    grid.within(&phi.domain())?;
    check_density(rho0, 1e-10)?;
    let phi0 = phi.at(grid.start())?;
    let g0 = initial_angle(phi0.dotc(&(rho0 * &phi0)).re)?;
    let integrand = scan(grid, |t| {
        integrand_pure(&h.at(t)?, &phi.at(t)?, &phi.derivative_at(t)?)
    })?;
    BoundReport::from_integrand(BoundKind::Pure, grid, integrand, g0, true)
}

/// Adiabatic condition for a system started in the tracked eigenspace: the
/// integrand is `||dP/dt||` of the instantaneous eigenprojector and `g_0 = 0`.
/// A single level uses the eigenvector formula directly.
pub fn bound_adiabatic(
    h: &OperatorPath,
    levels: &[usize],
    grid: &TimeGrid,
    cluster_tol: Option<f64>,
) -> Result<BoundReport> {
    let integrand = if levels.len() == 1 {
        let phi = eigenvector_path(h, levels[0], grid, cluster_tol)?;
        scan(grid, |t| rank1_derivative_norm(&phi, t))?
    } else {
        let proj = eigenprojector_path(h, levels, grid, cluster_tol)?;
        scan(grid, |t| spectral_norm(&proj.derivative_at(t)?))?
    };
    BoundReport::from_integrand(BoundKind::Adiabatic, grid, integrand, 0.0, false)
}

/// `||dH/dt|| / gap`, an upper bound on the eigenpath speed `||dP_phi||`.
pub fn integrand_gap(hdot: &CMatrix, gap: f64) -> Result<f64> {
    if !(gap > 0.0) {
        return Err(QslError::Degeneracy {
            t_start: f64::NAN,
            t_end: f64::NAN,
            detail: format!("non-positive gap {gap}"),
        });
    }
    Ok(spectral_norm(hdot)? / gap)
}

/// Adiabatic bound with the eigenpath speed replaced by `||dH|| / gap`
/// (weaker, still valid).
pub fn bound_gap(
    h: &OperatorPath,
    level: usize,
    grid: &TimeGrid,
    cluster_tol: Option<f64>,
) -> Result<BoundReport> {
    let track = track_eigenspace(h, &[level], grid, cluster_tol)?;
    let integrand = grid
        .nodes()
        .iter()
        .zip(&track.gaps)
        .map(|(&t, gap)| {
            let gap = gap.ok_or_else(|| QslError::input("gap bound needs at least two levels"))?;
            integrand_gap(&h.derivative_at(t)?, gap).map_err(|e| match e {
                QslError::Degeneracy { detail, .. } => QslError::Degeneracy {
                    t_start: t,
                    t_end: t,
                    detail,
                },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    BoundReport::from_integrand(BoundKind::Gap, grid, integrand, 0.0, false)
}

/// Distance from level `level` to the nearest other eigenvalue of `h`.
pub fn spectral_gap(h: &CMatrix, level: usize) -> Result<f64> {
    let eig = hermitian_eig(h, default_cluster_tol(h)?)?;
    eig.gap_around(&[level])
        .ok_or_else(|| QslError::input("a gap needs at least two levels"))
}

/// `||H - i dW W^dag||`, which dominates the general integrand for
/// `Pi_t = W_t Pi_0 W_t^dag`.
pub fn integrand_generator(h: &CMatrix, wdot: &CMatrix, w: &CMatrix) -> Result<f64> {
    check_same_dims(h, w)?;
    check_same_dims(h, wdot)?;
    let defect = unitarity_defect(w);
    if defect > 1e-8 {
        return Err(QslError::input(format!("generator W is not unitary (defect {defect:.3e})")));
    }
    spectral_norm(&(h - wdot * w.adjoint() * I))
}

/// Bound for `Pi_t = W_t Pi_0 W_t^dag` using the generator integrand.
pub fn bound_generator(
    h: &OperatorPath,
    w: &OperatorPath,
    pi0: &CMatrix,
    rho0: &CMatrix,
    grid: &TimeGrid,
) -> Result<BoundReport> {
    if h.dim() != w.dim() || pi0.nrows() != h.dim() {
        return Err(QslError::input("dimension mismatch in generator bound"));
    }
    grid.within(&h.domain())?;
    grid.within(&w.domain())?;
    check_density(rho0, 1e-10)?;
    check_projector(pi0, 1e-10)?;
    let w0 = w.at(grid.start())?;
    let g0 = initial_angle(trace_product_re(rho0, &(&w0 * pi0 * w0.adjoint())))?;
    let integrand = scan(grid, |t| integrand_generator(&h.at(t)?, &w.derivative_at(t)?, &w.at(t)?))?;
    BoundReport::from_integrand(BoundKind::Generator, grid, integrand, g0, true)
}

/// Arguments of the generalised uncertainty `f(R, A)`.
#[derive(Debug, Clone)]
pub struct UncertaintyInput {
    /// Positive semidefinite.
    pub r: CMatrix,
    /// Hermitian.
    pub a: CMatrix,
    /// Eigenvalue clustering tolerance for `R`; `None` means `1e-8 ||R||`.
    pub cluster_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenCluster {
    pub eigenvalue: f64,
    pub multiplicity: usize,
}

/// `f(R, A)` together with the spectral clustering of `R` it was computed
/// with (`f` is discontinuous in `R`, so the clustering matters).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UncertaintyValue {
    pub value: f64,
    pub clusters: Vec<EigenCluster>,
}

/// `f(R, A) = sqrt(sum_n lambda_n tr(Pi_n A^2 - (Pi_n A)^2))` over the
/// distinct eigenvalues `lambda_n` of `R` with eigenprojectors `Pi_n`.
pub fn uncertainty_f(inp: &UncertaintyInput) -> Result<UncertaintyValue> {
    check_same_dims(&inp.r, &inp.a)?;
    check_hermitian(&inp.a, HERMITICITY_TOL)?;
    let tol = match inp.cluster_tol {
        Some(t) => t,
        None => default_cluster_tol(&inp.r)?,
    };
    let eig = hermitian_eig(&inp.r, tol)?;
    let scale = spectral_norm(&inp.r)?.max(1.0);
    if eig.eigenvalues[0] < -1e-10 * scale {
        return Err(QslError::input(format!(
            "R is not positive semidefinite (eigenvalue {:.3e})",
            eig.eigenvalues[0]
        )));
    }
    let a2 = &inp.a * &inp.a;
    let mut radicand = 0.0;
    let mut clusters = Vec::with_capacity(eig.clusters.len());
    for n in 0..eig.clusters.len() {
        let (lambda, pn) = eig.cluster_projector(n);
        let pa = &pn * &inp.a;
        let term = trace(&(&pn * &a2)).re - trace_product_re(&pa, &pa);
        radicand += lambda * term;
        clusters.push(EigenCluster {
            eigenvalue: lambda,
            multiplicity: eig.clusters[n].len(),
        });
    }
    let a_norm = spectral_norm(&inp.a)?;
    if radicand < -1e-12 * scale * a_norm.powi(2).max(1.0) {
        return Err(QslError::Numerical(format!(
            "negative radicand {radicand:.3e} in f(R, A); eigenvalue clustering is inconsistent"
        )));
    }
    Ok(UncertaintyValue {
        value: radicand.max(0.0).sqrt(),
        clusters,
    })
}

/// Projector-only bound `F_t >= cos^2((1/sqrt 2) int sqrt(tr dPi^2))`, valid
/// when `rho_0` lies in the range of `Pi_0` and `[H_t, Pi_t] = 0`. Pass `h` to
/// have the commutation checked on the grid.
pub fn bound_pfeifer(
    proj: &ProjectorPath,
    rho0: &CMatrix,
    grid: &TimeGrid,
    h: Option<&OperatorPath>,
) -> Result<BoundReport> {
    grid.within(&proj.domain())?;
    check_density(rho0, 1e-10)?;
    let f0 = trace_product_re(rho0, &proj.at(grid.start())?);
    if f0 < 1.0 - 1e-10 {
        return Err(QslError::input(format!(
            "initial state is not supported in the target subspace (tr rho Pi = {f0})"
        )));
    }
    if let Some(h) = h {
        grid.within(&h.domain())?;
        for &t in grid.nodes() {
            let ht = h.at(t)?;
            let comm = spectral_norm(&commutator(&ht, &proj.at(t)?)?)?;
            if comm > 1e-8 * spectral_norm(&ht)?.max(1.0) {
                return Err(QslError::input(format!(
                    "[H, Pi] = {comm:.3e} at t = {t}; the projector-only bound needs commuting paths"
                )));
            }
        }
    }
    let integrand = scan(grid, |t| {
        let dp = proj.derivative_at(t)?;
        Ok(trace_product_re(&dp, &dp).max(0.0).sqrt() / std::f64::consts::SQRT_2)
    })?;
    BoundReport::from_integrand(BoundKind::Pfeifer, grid, integrand, 0.0, false)
}

/// Default Schrödinger residual tolerance for a reference solution:
/// `1e-6 max(1, ||H_t||)`.
pub fn default_residual_tol(h: &CMatrix) -> Result<f64> {
    Ok(1e-6 * spectral_norm(h)?.max(1.0))
}

/// Loschmidt echo bound between `psi1` (evolving under `h1`, unknown) and the
/// reference solution `psi2` of `h2`, both starting from `psi2(t_0)`.
pub fn bound_loschmidt(
    h1: &OperatorPath,
    h2: &OperatorPath,
    psi2: &StatePath,
    grid: &TimeGrid,
    residual_tol: Option<f64>,
) -> Result<BoundReport> {
    if h1.dim() != h2.dim() || h2.dim() != psi2.dim() {
        return Err(QslError::input("dimension mismatch in Loschmidt bound"));
    }
    grid.within(&h1.domain())?;
    grid.within(&h2.domain())?;
    grid.within(&psi2.domain())?;
    let integrand = scan(grid, |t| {
        let psi = psi2.at(t)?;
        let h2t = h2.at(t)?;
        let residual = (psi2.derivative_at(t)? * I - &h2t * &psi).norm();
        let tol = match residual_tol {
            Some(x) => x,
            None => default_residual_tol(&h2t)?,
        };
        if !(residual <= tol) {
            return Err(QslError::ReferenceSolution {
                t,
                residual,
                tolerance: tol,
            });
        }
        let v = h1.at(t)? - h2t;
        Ok(orthogonal_norm(&psi, &(v * &psi)))
    })?;
    BoundReport::from_integrand(BoundKind::Loschmidt, grid, integrand, 0.0, false)
}
