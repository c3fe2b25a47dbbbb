//! `simulate` and `echo`: exact dynamics next to the selected bounds, as a CSV
//! time series and a JSON report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};

use qsl_core::bounds::{
    bound_adiabatic, bound_gap, bound_general, bound_generator, bound_loschmidt, bound_pfeifer, bound_pure,
    initial_angle, BoundKind, BoundReport,
};
use qsl_core::linalg::trace_product_re;
use qsl_core::dynamics::{fidelity_series, propagate_density};
use qsl_core::scenarios::make_loschmidt_pair_on;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::problem::{prepare, target_state, Prepared};
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct GridSummary {
    pub t_start: f64,
    pub t_end: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub version: &'static str,
    pub command: &'static str,
    /// SHA-256 of the effective config (after command-line overrides).
    pub config_hash: String,
    pub seed: u64,
    /// Seconds since the Unix epoch; the only field that varies between
    /// identical runs.
    pub timestamp: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExactSummary {
    pub min: f64,
    pub max: f64,
    pub final_value: f64,
    /// Samples clamped into `[0, 1]` (each by at most 1e-12).
    pub clamped: usize,
    /// Largest deviation from the scenario's closed-form fidelity, if it has one.
    pub closed_form_max_deviation: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub unitarity_drift: f64,
    pub trace_drift: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundSummary {
    pub kind: BoundKind,
    pub g0: f64,
    pub t_plus: Option<f64>,
    pub t_minus: Option<f64>,
    pub final_cumulative: f64,
    /// `max(lower - F)` over the lower-bound window; positive means violated.
    pub max_violation_lower: Option<f64>,
    /// `max(F - upper)` over the upper-bound window.
    pub max_violation_upper: Option<f64>,
    pub min_slack: Option<f64>,
    /// Worst violation is within the violation tolerance.
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub provenance: Provenance,
    pub scenario: String,
    pub params: BTreeMap<String, f64>,
    pub dim: usize,
    pub grid: GridSummary,
    pub violation_tolerance: f64,
    pub exact: ExactSummary,
    pub diagnostics: Diagnostics,
    pub bounds: Vec<BoundSummary>,
    /// Final pfeifer cumulative over final general cumulative, when both are
    /// selected and the general one is non-zero.
    pub cumulative_ratio: Option<f64>,
    /// Largest `|ratio(t) - cumulative_ratio|` over grid times with a non-zero
    /// general cumulative.
    pub cumulative_ratio_spread: Option<f64>,
    pub all_hold: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct EchoReport {
    pub provenance: Provenance,
    pub scenario: String,
    pub params: BTreeMap<String, f64>,
    pub dim: usize,
    pub grid: GridSummary,
    pub epsilon: f64,
    pub violation_tolerance: f64,
    /// Time at which the bound argument reaches pi/2; null if not on the grid.
    pub t_star: Option<f64>,
    pub final_cumulative: f64,
    pub max_violation: Option<f64>,
    pub min_slack: Option<f64>,
    pub holds: bool,
}

/// CSV text plus the report to serialise next to it.
#[derive(Debug, Clone)]
pub struct Output<R> {
    pub csv: String,
    pub report: R,
}

pub fn config_hash(cfg: &RunConfig) -> String {
    let canonical = serde_json::to_string(cfg).expect("config serialises");
    Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn provenance(cfg: &RunConfig, command: &'static str) -> Provenance {
    Provenance {
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_hash: config_hash(cfg),
        seed: cfg.seed,
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    }
}

fn grid_summary(p: &Prepared) -> GridSummary {
    GridSummary {
        t_start: p.grid.start(),
        t_end: p.grid.end(),
        steps: p.grid.steps(),
    }
}

/// Full double precision in scientific notation (17 significant digits).
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_num).unwrap_or_default()
}

/// The eigenpath bounds assume a start inside the tracked eigenspace. The
/// eigenprojector commutes with `H`, so the same integral also bounds a general
/// `rho_0` once it is offset by that state's initial angle.
fn from_initial_state(r: BoundReport, p: &Prepared) -> Result<BoundReport, CliError> {
    let s = &p.scenario;
    let overlap = trace_product_re(&s.rho0, &s.projector.at(p.grid.start())?);
    let g0 = initial_angle(overlap)?;
    Ok(BoundReport::from_integrand(r.kind, &p.grid, r.integrand, g0, false)?)
}

pub fn compute_bound(kind: BoundKind, p: &Prepared) -> Result<BoundReport, CliError> {
    let s = &p.scenario;
    let grid = &p.grid;
    let report = match kind {
        BoundKind::General => bound_general(&s.hamiltonian, &s.projector, &s.rho0, grid)?,
        BoundKind::Pure => bound_pure(&s.hamiltonian, &target_state(p)?, &s.rho0, grid)?,
        BoundKind::Adiabatic => {
            let levels = s
                .levels()
                .ok_or_else(|| CliError::Config("the adiabatic bound needs an eigen-tracked target".into()))?;
            from_initial_state(bound_adiabatic(&s.hamiltonian, levels, grid, p.cluster_tol)?, p)?
        }
        BoundKind::Gap => match s.levels() {
            Some([level]) => from_initial_state(bound_gap(&s.hamiltonian, *level, grid, p.cluster_tol)?, p)?,
            _ => return Err(CliError::Config("the gap bound needs a single tracked level".into())),
        },
        BoundKind::Generator => {
            let (w, pi0) = s
                .generator()
                .ok_or_else(|| CliError::Config("the generator bound needs a unitary-generated target".into()))?;
            bound_generator(&s.hamiltonian, w, pi0, &s.rho0, grid)?
        }
        BoundKind::Pfeifer => bound_pfeifer(&s.projector, &s.rho0, grid, Some(&s.hamiltonian))?,
        BoundKind::Loschmidt => {
            return Err(CliError::Config("the loschmidt bound is computed by 'qsl echo'".into()))
        }
    };
    Ok(report)
}

pub fn simulate(cfg: &RunConfig) -> Result<Output<RunReport>, CliError> {
    let p = prepare(cfg)?;
    let s = &p.scenario;
    let traj = propagate_density(&s.hamiltonian, &s.rho0, &p.grid)?;
    let fid = fidelity_series(&traj, &s.projector)?;
    let kinds = cfg.selected_bounds();
    let reports = kinds.iter().map(|&k| compute_bound(k, &p)).collect::<Result<Vec<_>, _>>()?;
    let tol = cfg.violation_tol();

    let mut summaries = Vec::with_capacity(reports.len());
    for r in &reports {
        let check = r.compare(&fid.values)?;
        summaries.push(BoundSummary {
            kind: r.kind,
            g0: r.g0,
            t_plus: r.t_plus,
            t_minus: r.t_minus,
            final_cumulative: r.final_cumulative(),
            max_violation_lower: check.max_violation_lower,
            max_violation_upper: check.max_violation_upper,
            min_slack: check.min_slack,
            holds: check.worst_violation().is_none_or(|v| v <= tol),
        });
    }

    let find = |k: BoundKind| reports.iter().find(|r| r.kind == k);
    let (ratio, spread) = match (find(BoundKind::Pfeifer), find(BoundKind::General)) {
        (Some(pf), Some(gen)) if gen.final_cumulative() > 0.0 => {
            let r = pf.final_cumulative() / gen.final_cumulative();
            let spread = pf
                .cumulative
                .iter()
                .zip(&gen.cumulative)
                .filter(|(_, g)| **g > 0.0)
                .map(|(a, g)| (a / g - r).abs())
                .fold(0.0, f64::max);
            (Some(r), Some(spread))
        }
        _ => (None, None),
    };

    let closed_form = s.exact_fidelity.as_ref().map(|f| {
        p.grid
            .nodes()
            .iter()
            .zip(&fid.values)
            .map(|(&t, &x)| (f(t) - x).abs())
            .fold(0.0, f64::max)
    });

    let mut csv = String::from("t,F_exact");
    for k in &kinds {
        let n = k.name();
        write!(csv, ",{n}_integrand,{n}_cumulative,{n}_lower,{n}_upper").unwrap();
    }
    csv.push('\n');
    for (i, &t) in p.grid.nodes().iter().enumerate() {
        csv.push_str(&fmt_num(t));
        csv.push(',');
        csv.push_str(&fmt_num(fid.values[i]));
        for r in &reports {
            let upper = r.upper.as_ref().and_then(|u| u[i]);
            write!(
                csv,
                ",{},{},{},{}",
                fmt_num(r.integrand[i]),
                fmt_num(r.cumulative[i]),
                fmt_opt(r.lower[i]),
                fmt_opt(upper)
            )
            .unwrap();
        }
        csv.push('\n');
    }

    let report = RunReport {
        provenance: provenance(cfg, "simulate"),
        scenario: s.name.clone(),
        params: s.params.clone(),
        dim: s.dim,
        grid: grid_summary(&p),
        violation_tolerance: tol,
        exact: ExactSummary {
            min: fid.min(),
            max: fid.max(),
            final_value: *fid.values.last().unwrap(),
            clamped: fid.clamped,
            closed_form_max_deviation: closed_form,
        },
        diagnostics: Diagnostics {
            unitarity_drift: traj.unitarity_drift(),
            trace_drift: traj.trace_drift(),
        },
        all_hold: summaries.iter().all(|b| b.holds),
        bounds: summaries,
        cumulative_ratio: ratio,
        cumulative_ratio_spread: spread,
    };
    Ok(Output { csv, report })
}

pub fn echo(cfg: &RunConfig) -> Result<Output<EchoReport>, CliError> {
    let pair_spec = cfg
        .pair
        .as_ref()
        .ok_or_else(|| CliError::Config("'qsl echo' needs a 'pair' section".into()))?;
    if cfg.bounds.as_ref().is_some_and(|b| b != &[BoundKind::Loschmidt]) {
        return Err(CliError::Config("'qsl echo' computes only the loschmidt bound".into()));
    }
    let p = prepare(cfg)?;
    let s = &p.scenario;
    let v = pair_spec.perturbation.as_ref().map(|m| m.to_matrix(Some(s.dim))).transpose()?;
    let pair = make_loschmidt_pair_on(pair_spec.epsilon, s, v, &p.grid, cfg.tolerances.residual)?;
    let report = bound_loschmidt(&pair.h1, &pair.h2, &pair.psi2, &p.grid, cfg.tolerances.residual)?;
    let exact = pair.exact_echo(&p.grid)?;
    let check = report.compare(&exact)?;
    let tol = cfg.violation_tol();

    let mut csv = String::from("t,echo_exact,echo_lower_bound,integrand,cumulative\n");
    for (i, &t) in p.grid.nodes().iter().enumerate() {
        writeln!(
            csv,
            "{},{},{},{},{}",
            fmt_num(t),
            fmt_num(exact[i]),
            fmt_opt(report.lower[i]),
            fmt_num(report.integrand[i]),
            fmt_num(report.cumulative[i])
        )
        .unwrap();
    }
    let report = EchoReport {
        provenance: provenance(cfg, "echo"),
        scenario: s.name.clone(),
        params: s.params.clone(),
        dim: s.dim,
        grid: grid_summary(&p),
        epsilon: pair.epsilon,
        violation_tolerance: tol,
        t_star: report.t_plus,
        final_cumulative: report.final_cumulative(),
        max_violation: check.max_violation_lower,
        min_slack: check.min_slack,
        holds: check.worst_violation().is_none_or(|v| v <= tol),
    };
    Ok(Output { csv, report })
}

/// Writes `<prefix>.csv` and `<prefix>.report.json`, creating the parent
/// directory if needed. Returns the two paths.
pub fn write_outputs<R: Serialize>(
    prefix: &str,
    out: &Output<R>,
) -> Result<(std::path::PathBuf, std::path::PathBuf), CliError> {
    let csv_path = std::path::PathBuf::from(format!("{prefix}.csv"));
    let json_path = std::path::PathBuf::from(format!("{prefix}.report.json"));
    if let Some(dir) = csv_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&csv_path, &out.csv)?;
    let mut json = serde_json::to_string_pretty(&out.report).expect("report serialises");
    json.push('\n');
    std::fs::write(&json_path, json)?;
    Ok((csv_path, json_path))
}
