//! Time-dependent projector paths `Pi_t`, normalised state paths `phi_t`,
//! eigenspace tracking with gauge fixing, and the generator identities that
//! tie `||dPi/dt||` to unitary generators.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::dynamics::{finite_difference, propagate_unitary, Domain, OperatorPath, TimeGrid};
use crate::error::{QslError, Result};
use crate::linalg::{
    check_projector, commutator, default_cluster_tol, expm_unitary, hermitian_eig,
    hermitian_part, max_abs_diff, outer, spectral_norm, trace, CMatrix, CVector, I,
};

pub type MatrixResultFn = Arc<dyn Fn(f64) -> Result<CMatrix> + Send + Sync>;
pub type VectorResultFn = Arc<dyn Fn(f64) -> Result<CVector> + Send + Sync>;

/// Tolerance on `||phi|| - 1` for state path samples.
pub const NORM_TOL: f64 = 1e-10;

/// Where a projector path comes from.
#[derive(Clone)]
pub enum ProjectorKind {
    Static,
    /// `Pi_t = W_t Pi_0 W_t^dag`.
    UnitaryGenerated {
        generator: OperatorPath,
        initial: CMatrix,
    },
    /// Spectral projector of `H_t` onto the listed (ascending) levels.
    EigenTracked {
        hamiltonian: OperatorPath,
        levels: Vec<usize>,
    },
    /// `|phi_t><phi_t|` for a state path.
    RankOne,
    /// `U_t^dag Pi_t U_t` for the propagator `U_t` of some Hamiltonian.
    InteractionPicture,
    Custom,
}

impl fmt::Debug for ProjectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ProjectorKind::Static => "Static",
            ProjectorKind::UnitaryGenerated { .. } => "UnitaryGenerated",
            ProjectorKind::EigenTracked { .. } => "EigenTracked",
            ProjectorKind::RankOne => "RankOne",
            ProjectorKind::InteractionPicture => "InteractionPicture",
            ProjectorKind::Custom => "Custom",
        };
        f.write_str(name)
    }
}

/// A smooth family of orthogonal projectors of constant rank.
#[derive(Clone)]
pub struct ProjectorPath {
    dim: usize,
    rank: usize,
    domain: Domain,
    sampler: MatrixResultFn,
    derivative: Option<MatrixResultFn>,
    kind: ProjectorKind,
}

impl fmt::Debug for ProjectorPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProjectorPath")
            .field("dim", &self.dim)
            .field("rank", &self.rank)
            .field("domain", &self.domain)
            .field("kind", &self.kind)
            .field("analytic_derivative", &self.derivative.is_some())
            .finish()
    }
}

/// Worst-case invariant residuals over a set of probe times.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ProjectorDiagnostics {
    pub idempotency: f64,
    pub hermiticity: f64,
    pub rank_drift: f64,
    /// `max|dPi - [[dPi, Pi], Pi]|`.
    pub derivative_identity: f64,
    /// `max|Pi dPi Pi|`.
    pub sandwich: f64,
}

impl ProjectorPath {
    /// Builds a path from a sampler; the rank is read off `tr Pi` at the domain start.
    pub fn custom(
        dim: usize,
        domain: Domain,
        sampler: impl Fn(f64) -> Result<CMatrix> + Send + Sync + 'static,
    ) -> Result<Self> {
        let first = sampler(domain.start)?;
        if first.shape() != (dim, dim) {
            return Err(QslError::input("projector sampler has the wrong dimension"));
        }
        let rank = check_projector(&first, 1e-8)?;
        Ok(ProjectorPath {
            dim,
            rank,
            domain,
            sampler: Arc::new(sampler),
            derivative: None,
            kind: ProjectorKind::Custom,
        })
    }

    pub fn with_derivative(
        mut self,
        derivative: impl Fn(f64) -> Result<CMatrix> + Send + Sync + 'static,
    ) -> Self {
        self.derivative = Some(Arc::new(derivative));
        self
    }

    fn with_kind(mut self, kind: ProjectorKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn fixed(pi: CMatrix, domain: Domain) -> Result<Self> {
        check_projector(&pi, 1e-10)?;
        let dim = pi.nrows();
        let zero = CMatrix::zeros(dim, dim);
        let pi = hermitian_part(&pi);
        Ok(ProjectorPath::custom(dim, domain, move |_| Ok(pi.clone()))?
            .with_derivative(move |_| Ok(zero.clone()))
            .with_kind(ProjectorKind::Static))
    }

    /// `Pi_t = W_t Pi_0 W_t^dag`, derivative `dW Pi_0 W^dag + W Pi_0 dW^dag`.
    pub fn unitary_generated(generator: OperatorPath, initial: CMatrix) -> Result<Self> {
        check_projector(&initial, 1e-10)?;
        if initial.nrows() != generator.dim() {
            return Err(QslError::input("initial projector and generator dimensions differ"));
        }
        let dim = generator.dim();
        let domain = generator.domain();
        let (w, p0) = (generator.clone(), initial.clone());
        let sampler = move |t: f64| -> Result<CMatrix> {
            let wt = w.at(t)?;
            Ok(hermitian_part(&(&wt * &p0 * wt.adjoint())))
        };
        let (w, p0) = (generator.clone(), initial.clone());
        let derivative = move |t: f64| -> Result<CMatrix> {
            let wt = w.at(t)?;
            let dw = w.derivative_at(t)?;
            let half = &dw * &p0 * wt.adjoint();
            Ok(&half + half.adjoint())
        };
        Ok(ProjectorPath::custom(dim, domain, sampler)?
            .with_derivative(derivative)
            .with_kind(ProjectorKind::UnitaryGenerated { generator, initial }))
    }

    /// `|phi_t><phi_t|` with derivative `dphi phi^dag + phi dphi^dag`.
    pub fn from_state(phi: &StatePath) -> Result<Self> {
        let (p, q) = (phi.clone(), phi.clone());
        let path = ProjectorPath::custom(phi.dim(), phi.domain(), move |t| Ok(outer(&p.at(t)?)))?
            .with_derivative(move |t| {
                let v = q.at(t)?;
                let dv = q.derivative_at(t)?;
                let half = &dv * v.adjoint();
                Ok(&half + half.adjoint())
            })
            .with_kind(ProjectorKind::RankOne);
        Ok(path)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn kind(&self) -> &ProjectorKind {
        &self.kind
    }

    pub fn has_analytic_derivative(&self) -> bool {
        self.derivative.is_some()
    }

    /// Sample `Pi_t`. Rejects out-of-domain times and rank changes.
    pub fn at(&self, t: f64) -> Result<CMatrix> {
        self.domain.check(t)?;
        let p = (self.sampler)(t)?;
        let tr = trace(&p).re;
        if (tr - self.rank as f64).abs() > 1e-6 {
            return Err(QslError::Projector(format!(
                "rank changed from {} to tr Pi = {tr:.6} at t = {t}",
                self.rank
            )));
        }
        Ok(p)
    }

    /// `dPi/dt` at any time in the domain: analytic when available, else
    /// Richardson-refined finite differences (one-sided at the edges).
    pub fn derivative_at(&self, t: f64) -> Result<CMatrix> {
        match &self.derivative {
            Some(d) => {
                self.domain.check(t)?;
                d(t)
            }
            None => Ok(hermitian_part(&finite_difference(
                |s| self.at(s),
                t,
                self.domain.default_fd_step(),
                &self.domain,
            )?)),
        }
    }

    /// Residuals of idempotency, Hermiticity, rank and the
    /// `dPi = [[dPi, Pi], Pi]` identity at the probe times.
    pub fn check_invariants(&self, probes: &[f64]) -> Result<ProjectorDiagnostics> {
        let mut d = ProjectorDiagnostics::default();
        for &t in probes {
            let p = self.at(t)?;
            let dp = self.derivative_at(t)?;
            d.idempotency = d.idempotency.max(max_abs_diff(&(&p * &p), &p));
            d.hermiticity = d.hermiticity.max(max_abs_diff(&p, &p.adjoint()));
            d.rank_drift = d.rank_drift.max((trace(&p).re - self.rank as f64).abs());
            let inner = commutator(&dp, &p)?;
            let nested = commutator(&inner, &p)?;
            d.derivative_identity = d.derivative_identity.max(max_abs_diff(&dp, &nested));
            d.sandwich = d.sandwich.max(crate::linalg::max_abs(&(&p * &dp * &p)));
        }
        Ok(d)
    }
}

/// `dPi/dt` at `t`: the analytic derivative if the path has one, otherwise
/// the central difference `(Pi(t+h) - Pi(t-h)) / 2h` with one Richardson
/// refinement. The stencil must fit inside the domain.
pub fn projector_derivative(path: &ProjectorPath, t: f64, h: f64) -> Result<CMatrix> {
    if !(h > 0.0) {
        return Err(QslError::input("finite-difference step must be positive"));
    }
    if let Some(d) = &path.derivative {
        path.domain.check(t)?;
        return d(t);
    }
    let dom = path.domain;
    if !(dom.contains(t - h) && dom.contains(t + h)) {
        return Err(QslError::Domain {
            t,
            start: dom.start,
            end: dom.end,
        });
    }
    Ok(hermitian_part(&finite_difference(|s| path.at(s), t, h, &dom)?))
}

/// `H_t = i [dPi/dt, Pi]`, the generator whose flow reproduces `Pi_t` and
/// whose norm equals `||dPi/dt||`.
pub fn fictitious_generator(path: &ProjectorPath, t: f64) -> Result<CMatrix> {
    let p = path.at(t)?;
    let dp = path.derivative_at(t)?;
    Ok(hermitian_part(&(commutator(&dp, &p)? * I)))
}

/// Operator path of the propagator of `h` on `grid`. Off-node samples take one
/// exponential-midpoint step from the nearest node; the derivative is `-i H W`.
pub fn propagator_path(h: &OperatorPath, grid: &TimeGrid) -> Result<OperatorPath> {
    let traj = propagate_unitary(h, grid)?;
    let nodes = Arc::new(traj.grid.clone());
    let us = Arc::new(traj.unitaries);
    let dim = h.dim();
    let (hs, ns, uu) = (h.clone(), nodes.clone(), us.clone());
    let sampler = move |t: f64| -> CMatrix {
        let k = ns.nearest(t);
        let tk = ns.nodes()[k];
        let step = hs
            .at(0.5 * (t + tk))
            .and_then(|m| expm_unitary(&hermitian_part(&m), t - tk));
        match step {
            Ok(s) => s * &uu[k],
            Err(_) => CMatrix::from_element(dim, dim, Complex64::new(f64::NAN, 0.0)),
        }
    };
    let sampler = Arc::new(sampler);
    let (hd, sd) = (h.clone(), sampler.clone());
    let derivative = move |t: f64| -> CMatrix {
        match hd.at(t) {
            Ok(m) => (m * sd(t)) * (-I),
            Err(_) => CMatrix::from_element(dim, dim, Complex64::new(f64::NAN, 0.0)),
        }
    };
    let s2 = sampler.clone();
    Ok(OperatorPath::new(dim, grid.domain(), move |t| s2(t)).with_derivative(derivative))
}

/// Projector path generated by the Schrödinger flow of `k`: `Pi_t = W_t Pi_0 W_t^dag`
/// with `i dW/dt = K W`, so `dPi/dt = -i [K, Pi]`.
pub fn flow_generated_path(k: &OperatorPath, initial: CMatrix, grid: &TimeGrid) -> Result<ProjectorPath> {
    let w = propagator_path(k, grid)?;
    let path = ProjectorPath::unitary_generated(w, initial)?;
    let (kk, pp) = (k.clone(), path.clone());
    Ok(path.with_derivative(move |t| {
        let p = pp.at(t)?;
        Ok(hermitian_part(&(commutator(&kk.at(t)?, &p)? * (-I))))
    }))
}

/// `Pi^U_t = U_t^dag Pi_t U_t` with `U_t` the propagator of `h`, carrying the
/// analytic derivative `U^dag (i[H, Pi] + dPi) U`.
pub fn interaction_picture_path(
    proj: &ProjectorPath,
    h: &OperatorPath,
    grid: &TimeGrid,
) -> Result<ProjectorPath> {
    if proj.dim() != h.dim() {
        return Err(QslError::input("projector and Hamiltonian dimensions differ"));
    }
    grid.within(&proj.domain())?;
    let u = propagator_path(h, grid)?;
    let (p1, u1) = (proj.clone(), u.clone());
    let sampler = move |t: f64| -> Result<CMatrix> {
        let ut = u1.at(t)?;
        Ok(hermitian_part(&(ut.adjoint() * p1.at(t)? * &ut)))
    };
    let (p2, u2, h2) = (proj.clone(), u, h.clone());
    let derivative = move |t: f64| -> Result<CMatrix> {
        let ut = u2.at(t)?;
        let p = p2.at(t)?;
        let inner = commutator(&h2.at(t)?, &p)? * I + p2.derivative_at(t)?;
        Ok(hermitian_part(&(ut.adjoint() * inner * &ut)))
    };
    Ok(ProjectorPath::custom(proj.dim(), grid.domain(), sampler)?
        .with_derivative(derivative)
        .with_kind(ProjectorKind::InteractionPicture))
}

/// A normalised vector path `t -> phi_t`.
#[derive(Clone)]
pub struct StatePath {
    dim: usize,
    domain: Domain,
    sampler: VectorResultFn,
    derivative: Option<VectorResultFn>,
}

impl fmt::Debug for StatePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("StatePath")
            .field("dim", &self.dim)
            .field("domain", &self.domain)
            .field("analytic_derivative", &self.derivative.is_some())
            .finish()
    }
}

impl StatePath {
    pub fn new(
        dim: usize,
        domain: Domain,
        sampler: impl Fn(f64) -> Result<CVector> + Send + Sync + 'static,
    ) -> Self {
        StatePath {
            dim,
            domain,
            sampler: Arc::new(sampler),
            derivative: None,
        }
    }

    pub fn with_derivative(
        mut self,
        derivative: impl Fn(f64) -> Result<CVector> + Send + Sync + 'static,
    ) -> Self {
        self.derivative = Some(Arc::new(derivative));
        self
    }

    pub fn constant(v: CVector, domain: Domain) -> Self {
        let dim = v.len();
        StatePath::new(dim, domain, move |_| Ok(v.clone()))
            .with_derivative(move |_| Ok(CVector::zeros(dim)))
    }

    /// States of a propagated trajectory. Off-node samples take one
    /// exponential-midpoint step from the nearest node.
    pub fn from_trajectory(h: &OperatorPath, grid: &TimeGrid, states: Vec<CVector>) -> Result<Self> {
        if states.len() != grid.len() {
            return Err(QslError::input("state count does not match the grid"));
        }
        let dim = h.dim();
        let (hs, g, st) = (h.clone(), Arc::new(grid.clone()), Arc::new(states));
        Ok(StatePath::new(dim, grid.domain(), move |t| {
            let k = g.nearest(t);
            let tk = g.nodes()[k];
            if t == tk {
                return Ok(st[k].clone());
            }
            let step = expm_unitary(&hermitian_part(&hs.at(0.5 * (t + tk))?), t - tk)?;
            Ok(step * &st[k])
        }))
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

    pub fn at(&self, t: f64) -> Result<CVector> {
        self.domain.check(t)?;
        let v = (self.sampler)(t)?;
        if v.len() != self.dim {
            return Err(QslError::input("state path sampled a vector of the wrong dimension"));
        }
        if (v.norm() - 1.0).abs() > NORM_TOL {
            return Err(QslError::input(format!(
                "state at t = {t} has norm {} (expected 1)",
                v.norm()
            )));
        }
        Ok(v)
    }

    pub fn derivative_at(&self, t: f64) -> Result<CVector> {
        match &self.derivative {
            Some(d) => {
                self.domain.check(t)?;
                d(t)
            }
            None => finite_difference(|s| self.at(s), t, self.domain.default_fd_step(), &self.domain),
        }
    }

    /// `e^{i theta_t} phi_t`, given `theta` and its derivative.
    pub fn with_phase(
        &self,
        theta: impl Fn(f64) -> f64 + Send + Sync + 'static,
        dtheta: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> StatePath {
        let theta = Arc::new(theta);
        let (a, th) = (self.clone(), theta.clone());
        let b = self.clone();
        StatePath::new(self.dim, self.domain, move |t| Ok(a.at(t)? * (I * th(t)).exp()))
            .with_derivative(move |t| {
                let phase = (I * theta(t)).exp();
                Ok((b.derivative_at(t)? + b.at(t)? * (I * dtheta(t))) * phase)
            })
    }

    /// Smallest `Re <phi_k|phi_{k+1}>` over adjacent grid nodes; non-negative
    /// for a phase-continuous path.
    pub fn min_adjacent_overlap(&self, grid: &TimeGrid) -> Result<f64> {
        let mut prev = self.at(grid.start())?;
        let mut worst = f64::INFINITY;
        for &t in &grid.nodes()[1..] {
            let cur = self.at(t)?;
            worst = worst.min(prev.dotc(&cur).re);
            prev = cur;
        }
        Ok(worst)
    }
}

/// `||(I - P_phi) v||` for normalised `phi`: the component of `v` orthogonal to `phi`.
pub(crate) fn orthogonal_norm(phi: &CVector, v: &CVector) -> f64 {
    let along = phi.dotc(v);
    (v - phi * along).norm()
}

/// `||dP_phi/dt|| = sqrt(<dphi|dphi> - |<dphi|phi>|^2)`, evaluated as the norm
/// of the part of `dphi` orthogonal to `phi`.
pub fn rank1_derivative_norm(phi: &StatePath, t: f64) -> Result<f64> {
    let v = phi.at(t)?;
    let dv = phi.derivative_at(t)?;
    Ok(orthogonal_norm(&v, &dv))
}

/// Gauge-fixed eigenframes of a Hamiltonian path on a grid.
#[derive(Debug, Clone)]
pub struct EigenTrack {
    pub grid: TimeGrid,
    pub levels: Vec<usize>,
    /// `dim x rank` orthonormal frame per node, aligned with its predecessor.
    pub frames: Vec<CMatrix>,
    /// Gap between selected and unselected levels per node (`None` when all levels are selected).
    pub gaps: Vec<Option<f64>>,
}

impl EigenTrack {
    pub fn min_gap(&self) -> Option<(f64, f64)> {
        self.gaps
            .iter()
            .zip(self.grid.nodes())
            .filter_map(|(g, &t)| g.map(|g| (t, g)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

fn validate_levels(levels: &[usize], dim: usize) -> Result<Vec<usize>> {
    let mut lv = levels.to_vec();
    lv.sort_unstable();
    lv.dedup();
    if lv.is_empty() || lv.len() != levels.len() || *lv.last().unwrap() >= dim {
        return Err(QslError::input(format!(
            "level set {levels:?} must be non-empty, distinct and below dim {dim}"
        )));
    }
    Ok(lv)
}

fn cluster_tol_for(h: &CMatrix, cluster_tol: Option<f64>) -> Result<f64> {
    match cluster_tol {
        Some(tol) => Ok(tol),
        None => default_cluster_tol(h),
    }
}

/// Rotates `frame` to best match `reference` (orthogonal Procrustes); for a
/// single column this makes the overlap real positive.
pub fn align_frame(frame: &CMatrix, reference: &CMatrix) -> CMatrix {
    if frame.ncols() == 1 {
        let ov = reference.column(0).dotc(&frame.column(0));
        if ov.norm() == 0.0 {
            return frame.clone();
        }
        return frame * (ov.conj() / ov.norm());
    }
    let m = reference.adjoint() * frame;
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    frame * (vt.adjoint() * u.adjoint())
}

/// Scans `h` over `grid`, checking that the selected levels stay separated from
/// the rest of the spectrum and fixing the eigenvector gauge node by node.
pub fn track_eigenspace(
    h: &OperatorPath,
    levels: &[usize],
    grid: &TimeGrid,
    cluster_tol: Option<f64>,
) -> Result<EigenTrack> {
    let levels = validate_levels(levels, h.dim())?;
    grid.within(&h.domain())?;
    let rank = levels.len();
    let mut frames: Vec<CMatrix> = Vec::with_capacity(grid.len());
    let mut gaps = Vec::with_capacity(grid.len());
    for (k, &t) in grid.nodes().iter().enumerate() {
        let ht = h.at(t)?;
        let tol = cluster_tol_for(&ht, cluster_tol)?;
        let eig = hermitian_eig(&ht, tol)?;
        let gap = eig.gap_around(&levels);
        let window = (grid.nodes()[k.saturating_sub(1)], t);
        if let Some(g) = gap {
            if g <= tol {
                return Err(QslError::Degeneracy {
                    t_start: window.0,
                    t_end: t,
                    detail: format!("gap {g:.3e} around levels {levels:?} at t = {t} is below {tol:.3e}"),
                });
            }
        }
        let mut frame = eig.frame(&levels);
        if let Some(prev) = frames.last() {
            let overlap = (prev.adjoint() * &frame).norm_squared() / rank as f64;
            if overlap < 0.5 {
                return Err(QslError::Degeneracy {
                    t_start: window.0,
                    t_end: window.1,
                    detail: format!(
                        "eigenspace of levels {levels:?} jumped between nodes (overlap {overlap:.3}); \
                         a level crossing lies in this window"
                    ),
                });
            }
            frame = align_frame(&frame, prev);
        }
        frames.push(frame);
        gaps.push(gap);
    }
    Ok(EigenTrack {
        grid: grid.clone(),
        levels,
        frames,
        gaps,
    })
}

/// Spectral projector of `h` onto `levels` (ascending level indices), checked
/// for gap closure on `grid`. Samples between nodes are recomputed from the
/// spectrum of `H_t` and fail with a degeneracy error if the gap closes there.
pub fn eigenprojector_path(
    h: &OperatorPath,
    levels: &[usize],
    grid: &TimeGrid,
    cluster_tol: Option<f64>,
) -> Result<ProjectorPath> {
    let track = track_eigenspace(h, levels, grid, cluster_tol)?;
    let lv = track.levels.clone();
    let hs = h.clone();
    let sampler = move |t: f64| -> Result<CMatrix> {
        let ht = hs.at(t)?;
        let tol = cluster_tol_for(&ht, cluster_tol)?;
        let eig = hermitian_eig(&ht, tol)?;
        if let Some(g) = eig.gap_around(&lv) {
            if g <= tol {
                return Err(QslError::Degeneracy {
                    t_start: t,
                    t_end: t,
                    detail: format!("gap {g:.3e} around levels {lv:?} is below {tol:.3e}"),
                });
            }
        }
        Ok(eig.projector(&lv))
    };
    let dom = Domain::new(grid.start(), grid.end())?;
    Ok(ProjectorPath::custom(h.dim(), dom, sampler)?.with_kind(ProjectorKind::EigenTracked {
        hamiltonian: h.clone(),
        levels: track.levels,
    }))
}

/// Gauge-fixed instantaneous eigenvector of level `level`. Node samples are
/// phase-continuous along `grid`; the derivative is a finite difference taken
/// in the local gauge of the sample at `t`.
pub fn eigenvector_path(
    h: &OperatorPath,
    level: usize,
    grid: &TimeGrid,
    cluster_tol: Option<f64>,
) -> Result<StatePath> {
    let track = Arc::new(track_eigenspace(h, &[level], grid, cluster_tol)?);
    let dom = Domain::new(grid.start(), grid.end())?;
    let raw = {
        let hs = h.clone();
        Arc::new(move |t: f64| -> Result<CVector> {
            let ht = hs.at(t)?;
            let tol = cluster_tol_for(&ht, cluster_tol)?;
            let eig = hermitian_eig(&ht, tol)?;
            match eig.gap_around(&[level]) {
                Some(g) if g <= tol => Err(QslError::Degeneracy {
                    t_start: t,
                    t_end: t,
                    detail: format!("level {level} is degenerate (gap {g:.3e})"),
                }),
                _ => Ok(eig.eigenvector(level)),
            }
        })
    };
    let aligned_to = |v: CVector, reference: &CVector| -> CVector {
        let ov = reference.dotc(&v);
        if ov.norm() == 0.0 {
            v
        } else {
            v * (ov.conj() / ov.norm())
        }
    };
    let sample = {
        let (raw, track) = (raw.clone(), track.clone());
        Arc::new(move |t: f64| -> Result<CVector> {
            let k = track.grid.nearest(t);
            let reference = track.frames[k].column(0).into_owned();
            Ok(aligned_to(raw(t)?, &reference))
        })
    };
    let s2 = sample.clone();
    let derivative = move |t: f64| -> Result<CVector> {
        let here = s2(t)?;
        finite_difference(
            |s| Ok(aligned_to(raw(s)?, &here)),
            t,
            dom.default_fd_step(),
            &dom,
        )
    };
    Ok(StatePath::new(h.dim(), dom, move |t| sample(t)).with_derivative(derivative))
}

/// `||dPi/dt||` at `t`.
pub fn derivative_norm(path: &ProjectorPath, t: f64) -> Result<f64> {
    spectral_norm(&path.derivative_at(t)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{basis, c, max_abs, sigma_x, sigma_y, sigma_z};
    use crate::random;

    fn dom(a: f64, b: f64) -> Domain {
        Domain::new(a, b).unwrap()
    }

    fn rotating(delta: f64, v: f64, d: Domain) -> OperatorPath {
        OperatorPath::new(2, d, move |t| {
            (sigma_z().scale((v * t).cos()) + sigma_x().scale((v * t).sin())).scale(delta / 2.0)
        })
    }

    #[test]
    fn constant_hamiltonian_gives_static_projector() {
        let h = OperatorPath::constant(sigma_z(), dom(0.0, 1.0));
        let grid = TimeGrid::uniform(0.0, 1.0, 20).unwrap();
        let p = eigenprojector_path(&h, &[0], &grid, None).unwrap();
        assert_eq!(p.rank(), 1);
        for t in [0.0, 0.5, 1.0] {
            assert!(max_abs(&p.derivative_at(t).unwrap()) < 1e-9);
        }
    }

    #[test]
    fn rotating_field_projector_speed() {
        let v = 0.3;
        let h = rotating(1.0, v, dom(0.0, 10.0));
        let grid = TimeGrid::uniform(0.0, 10.0, 200).unwrap();
        let p = eigenprojector_path(&h, &[0], &grid, None).unwrap();
        for t in [0.0, 2.5, 7.1, 10.0] {
            let n = derivative_norm(&p, t).unwrap();
            assert!((n - v / 2.0).abs() < 1e-6, "t={t} n={n}");
            // closed-form ground state (-sin(vt/2), cos(vt/2))
            let phi = CVector::from_vec(vec![c(-(v * t / 2.0).sin(), 0.0), c((v * t / 2.0).cos(), 0.0)]);
            assert!(max_abs_diff(&p.at(t).unwrap(), &outer(&phi)) < 1e-12);
        }
        let strict = projector_derivative(&p, 5.0, 1e-4).unwrap();
        assert!((spectral_norm(&strict).unwrap() - v / 2.0).abs() < 1e-6);
        assert!(matches!(projector_derivative(&p, 0.0, 1e-4), Err(QslError::Domain { .. })));
    }

    #[test]
    fn landau_zener_gap_and_crossing() {
        let lz = |delta: f64| {
            OperatorPath::new(2, dom(-2.0, 2.0), move |t| {
                (sigma_z().scale(t) + sigma_x().scale(delta)).scale(0.5)
            })
        };
        let grid = TimeGrid::uniform(-2.0, 2.0, 400).unwrap();
        let track = track_eigenspace(&lz(0.3), &[0], &grid, None).unwrap();
        let (t_min, g_min) = track.min_gap().unwrap();
        assert!(t_min.abs() < 1e-12);
        assert!((g_min - 0.3).abs() < 1e-12);
        match eigenprojector_path(&lz(0.0), &[0], &grid, None) {
            Err(QslError::Degeneracy { t_start, t_end, .. }) => {
                assert!(t_start <= 0.0 && t_end >= 0.0)
            }
            other => panic!("expected degeneracy, got {other:?}"),
        }
        // crossing strictly between nodes is caught by the overlap check
        let even = TimeGrid::uniform(-2.0, 2.0, 401).unwrap();
        assert!(matches!(
            eigenprojector_path(&lz(0.0), &[0], &even, None),
            Err(QslError::Degeneracy { .. })
        ));
    }

    #[test]
    fn rank1_norm_examples() {
        let d = dom(0.0, 3.0);
        let fixed = StatePath::constant(basis(3, 1), d);
        assert_eq!(rank1_derivative_norm(&fixed, 1.0).unwrap(), 0.0);
        let phased = fixed.with_phase(|t| t * t, |t| 2.0 * t);
        assert!(rank1_derivative_norm(&phased, 1.3).unwrap() < 1e-14);
        let v = 0.8;
        let h = rotating(1.0, v, d);
        let grid = TimeGrid::uniform(0.0, 3.0, 300).unwrap();
        let phi = eigenvector_path(&h, 0, &grid, None).unwrap();
        for t in [0.0, 1.0, 3.0] {
            assert!((rank1_derivative_norm(&phi, t).unwrap() - v / 2.0).abs() < 1e-7);
        }
        assert!(phi.min_adjacent_overlap(&grid).unwrap() > 0.0);
        let bad = StatePath::new(2, d, |_| Ok(basis(2, 0) * c(2.0, 0.0)));
        assert!(rank1_derivative_norm(&bad, 0.5).is_err());
    }

    #[test]
    fn fictitious_generator_examples() {
        let d = dom(0.0, 4.0);
        let stat = ProjectorPath::fixed(outer(&basis(2, 0)), d).unwrap();
        assert_eq!(max_abs(&fictitious_generator(&stat, 1.0).unwrap()), 0.0);
        let v = 0.6;
        let h = rotating(1.0, v, d);
        let grid = TimeGrid::uniform(0.0, 4.0, 100).unwrap();
        let p = eigenprojector_path(&h, &[0], &grid, None).unwrap();
        let gen = fictitious_generator(&p, 2.0).unwrap();
        assert!((spectral_norm(&gen).unwrap() - v / 2.0).abs() < 1e-7);
        // i dPi = [H, Pi]
        let lhs = p.derivative_at(2.0).unwrap() * I;
        let rhs = commutator(&gen, &p.at(2.0).unwrap()).unwrap();
        assert!(max_abs_diff(&lhs, &rhs) < 1e-8);
    }

    #[test]
    fn regenerating_a_path_from_its_generator() {
        let mut r = random::rng(5);
        let (k1, k2) = (random::hermitian(&mut r, 3, 1.0), random::hermitian(&mut r, 3, 1.0));
        let d = dom(0.0, 1.0);
        let (a, b) = (k1.clone(), k2.clone());
        let w = OperatorPath::new(3, d, move |t| {
            expm_unitary(&a, t).unwrap() * expm_unitary(&b, (2.0 * t).sin()).unwrap()
        });
        let pi0 = random::projector(&mut r, 3, 1);
        let path = ProjectorPath::unitary_generated(w, pi0.clone()).unwrap();
        let p = path.clone();
        let gen = OperatorPath::new(3, d, move |t| fictitious_generator(&p, t).unwrap());
        let err = |steps| {
            let grid = TimeGrid::uniform(0.0, 1.0, steps).unwrap();
            let regen = flow_generated_path(&gen, pi0.clone(), &grid).unwrap();
            max_abs_diff(&regen.at(1.0).unwrap(), &path.at(1.0).unwrap())
        };
        let (e1, e2) = (err(100), err(200));
        assert!(e2 < 1e-4);
        assert!(e1 / e2 > 3.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn interaction_picture_examples() {
        let d = dom(0.0, 2.0);
        let grid = TimeGrid::uniform(0.0, 2.0, 50).unwrap();
        let p0 = outer(&basis(2, 0));
        let stat = ProjectorPath::fixed(p0.clone(), d).unwrap();
        let zero = OperatorPath::zero(2, d);
        let same = interaction_picture_path(&stat, &zero, &grid).unwrap();
        assert!(max_abs_diff(&same.at(1.3).unwrap(), &p0) < 1e-15);
        let commuting = OperatorPath::constant(sigma_z(), d);
        let pu = interaction_picture_path(&stat, &commuting, &grid).unwrap();
        assert!(max_abs(&pu.derivative_at(0.7).unwrap()) < 1e-15);
        let rabi = OperatorPath::constant(sigma_x().scale(0.5), d);
        let pu = interaction_picture_path(&stat, &rabi, &grid).unwrap();
        for t in [0.0, 0.9, 2.0] {
            assert!((derivative_norm(&pu, t).unwrap() - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn procrustes_alignment_for_degenerate_frames() {
        let mut r = random::rng(9);
        let u = random::unitary(&mut r, 4);
        let reference = u.columns(0, 2).into_owned();
        let mix = random::unitary(&mut r, 2);
        let rotated = &reference * &mix;
        let aligned = align_frame(&rotated, &reference);
        assert!(max_abs_diff(&aligned, &reference) < 1e-12);
        let _ = sigma_y();
    }
}
