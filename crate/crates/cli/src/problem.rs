//! Turns a validated config into a scenario and a working grid.

use std::collections::BTreeMap;
use std::sync::Arc;

use qsl_core::dynamics::{Domain, OperatorPath, TimeGrid};
use qsl_core::linalg::{check_density, check_projector, hermitian_eig, hermitian_part, outer, CMatrix};
use qsl_core::projectors::{
    eigenprojector_path, eigenvector_path, flow_generated_path, ProjectorKind, ProjectorPath, StatePath,
};
use qsl_core::scenarios::{make_named, Scenario, DEFAULT_STEPS};

use crate::config::{HamiltonianSpec, InitialSpec, ProblemSpec, RunConfig, TargetSpec};
use crate::CliError;

/// A scenario ready to run on a grid.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: Scenario,
    pub grid: TimeGrid,
    pub cluster_tol: Option<f64>,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared, CliError> {
    cfg.validate()?;
    let g = cfg.grid.unwrap_or_default();
    let steps = g.steps.unwrap_or(DEFAULT_STEPS);
    let cluster_tol = cfg.tolerances.cluster;
    if let Some(s) = &cfg.scenario {
        let scenario = make_named(&s.name, &s.params, cfg.seed)?;
        let start = g.t_start.unwrap_or(scenario.domain.start);
        let end = g.t_end.unwrap_or(scenario.domain.end);
        let grid = TimeGrid::uniform(start, end, steps).map_err(CliError::config)?;
        grid.within(&scenario.domain).map_err(|_| {
            CliError::Config(format!(
                "grid [{start}, {end}] leaves the scenario window [{}, {}]",
                scenario.domain.start, scenario.domain.end
            ))
        })?;
        return Ok(Prepared {
            scenario,
            grid,
            cluster_tol,
        });
    }
    let p = cfg.problem.as_ref().expect("validated");
    let (start, end) = (g.t_start.unwrap(), g.t_end.unwrap());
    let grid = TimeGrid::uniform(start, end, steps).map_err(CliError::config)?;
    let scenario = build_problem(p, &grid, cluster_tol)?;
    Ok(Prepared {
        scenario,
        grid,
        cluster_tol,
    })
}

fn build_problem(p: &ProblemSpec, grid: &TimeGrid, cluster_tol: Option<f64>) -> Result<Scenario, CliError> {
    let domain = grid.domain();
    let h = hamiltonian_path(&p.hamiltonian, p.dim, domain)?;
    let mut state = None;
    let projector = match &p.target {
        TargetSpec::Static(m) => {
            let pi = hermitian_part(&m.to_matrix(Some(p.dim))?);
            check_projector(&pi, 1e-10).map_err(CliError::config)?;
            ProjectorPath::fixed(pi, domain)?
        }
        TargetSpec::State(v) => {
            let v = v.to_vector(Some(p.dim))?;
            state = Some(StatePath::constant(v.clone(), domain));
            ProjectorPath::fixed(outer(&v), domain)?
        }
        TargetSpec::Eigen { levels } => {
            let mut levels = levels.clone();
            levels.sort_unstable();
            if levels.len() == 1 {
                state = Some(eigenvector_path(&h, levels[0], grid, cluster_tol)?);
            }
            eigenprojector_path(&h, &levels, grid, cluster_tol)?
        }
        TargetSpec::Generated { generator, initial } => {
            let k = hamiltonian_path(generator, p.dim, domain)?;
            let pi0 = hermitian_part(&initial.to_matrix(Some(p.dim))?);
            check_projector(&pi0, 1e-10).map_err(CliError::config)?;
            flow_generated_path(&k, pi0, grid)?
        }
    };
    let rho0 = match &p.rho0 {
        InitialSpec::Density(m) => {
            let rho = hermitian_part(&m.to_matrix(Some(p.dim))?);
            check_density(&rho, 1e-10).map_err(CliError::config)?;
            rho
        }
        InitialSpec::State(v) => outer(&v.to_vector(Some(p.dim))?),
    };
    Ok(Scenario {
        name: "inline".into(),
        dim: p.dim,
        hamiltonian: h,
        projector,
        state,
        rho0,
        exact_fidelity: None,
        domain,
        params: BTreeMap::from([("dim".to_string(), p.dim as f64)]),
    })
}

/// Operator path of a Fourier or sampled Hamiltonian, defined on `domain`.
pub fn hamiltonian_path(spec: &HamiltonianSpec, dim: usize, domain: Domain) -> Result<OperatorPath, CliError> {
    match spec {
        HamiltonianSpec::Fourier(f) => {
            let constant = match &f.constant {
                Some(m) => hermitian_part(&m.to_matrix(Some(dim))?),
                None => CMatrix::zeros(dim, dim),
            };
            let mut terms = Vec::with_capacity(f.terms.len());
            for term in &f.terms {
                let part = |m: &Option<crate::config::MatrixSpec>| -> Result<CMatrix, CliError> {
                    Ok(match m {
                        Some(m) => hermitian_part(&m.to_matrix(Some(dim))?),
                        None => CMatrix::zeros(dim, dim),
                    })
                };
                terms.push((term.omega, part(&term.cos)?, part(&term.sin)?));
            }
            let terms = Arc::new(terms);
            let t2 = terms.clone();
            Ok(OperatorPath::new(dim, domain, move |t| {
                terms.iter().fold(constant.clone(), |acc, (w, a, b)| {
                    acc + a.scale((w * t).cos()) + b.scale((w * t).sin())
                })
            })
            .with_derivative(move |t| {
                t2.iter().fold(CMatrix::zeros(dim, dim), |acc, (w, a, b)| {
                    acc + a.scale(-w * (w * t).sin()) + b.scale(w * (w * t).cos())
                })
            }))
        }
        HamiltonianSpec::Samples(s) => {
            let (first, last) = (s.times[0], *s.times.last().unwrap());
            if domain.start < first || domain.end > last {
                return Err(CliError::Config(format!(
                    "grid [{}, {}] leaves the sampled window [{first}, {last}]",
                    domain.start, domain.end
                )));
            }
            let mats = s
                .matrices
                .iter()
                .map(|m| Ok(hermitian_part(&m.to_matrix(Some(dim))?)))
                .collect::<Result<Vec<_>, CliError>>()?;
            let table = Arc::new((s.times.clone(), mats));
            let t2 = table.clone();
            Ok(OperatorPath::new(dim, domain, move |t| {
                let (times, mats) = &*table;
                let k = segment(times, t);
                let x = (t - times[k]) / (times[k + 1] - times[k]);
                mats[k].scale(1.0 - x) + mats[k + 1].scale(x)
            })
            .with_derivative(move |t| {
                let (times, mats) = &*t2;
                let k = segment(times, t);
                (&mats[k + 1] - &mats[k]).unscale(times[k + 1] - times[k])
            }))
        }
    }
}

/// Index `k` of the segment `[times[k], times[k+1])` holding `t` (the last
/// segment also holds its right end).
fn segment(times: &[f64], t: f64) -> usize {
    let k = times.partition_point(|&s| s <= t);
    k.saturating_sub(1).min(times.len() - 2)
}

/// Rank-one target as a state path, for the pure-state bound.
pub fn target_state(p: &Prepared) -> Result<StatePath, CliError> {
    let s = &p.scenario;
    if let Some(state) = &s.state {
        return Ok(state.clone());
    }
    if s.projector.rank() != 1 {
        return Err(CliError::Config(format!(
            "the pure bound needs a rank-one target, this one has rank {}",
            s.projector.rank()
        )));
    }
    let top = |m: &CMatrix| -> Result<_, CliError> {
        let eig = hermitian_eig(m, 0.0)?;
        Ok(eig.eigenvector(m.nrows() - 1))
    };
    match s.projector.kind() {
        ProjectorKind::Static => Ok(StatePath::constant(top(&s.projector.at(s.domain.start)?)?, s.domain)),
        ProjectorKind::UnitaryGenerated { generator, initial } => {
            let v0 = top(initial)?;
            let (w, w2, v1) = (generator.clone(), generator.clone(), v0.clone());
            Ok(StatePath::new(s.dim, generator.domain(), move |t| Ok(w.at(t)? * &v0))
                .with_derivative(move |t| Ok(w2.derivative_at(t)? * &v1)))
        }
        ProjectorKind::EigenTracked { hamiltonian, levels } => {
            Ok(eigenvector_path(hamiltonian, levels[0], &p.grid, p.cluster_tol)?)
        }
        other => Err(CliError::Config(format!("no state path available for a {other:?} target"))),
    }
}
