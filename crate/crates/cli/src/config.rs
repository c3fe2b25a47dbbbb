//! JSON run configuration.
//!
//! A config names either a packaged scenario (`scenario`) or spells out an
//! inline problem (`problem`). Matrices are written as real/imaginary part
//! pairs of row-major nested arrays; `im` may be omitted for real matrices.
//!
//! ```json
//! {
//!   "scenario": { "name": "block_rotors", "params": { "n": 4, "v": 1.0 } },
//!   "grid": { "steps": 2000 },
//!   "bounds": ["general", "pfeifer"],
//!   "seed": 7
//! }
//! ```

use std::collections::BTreeMap;

use qsl_core::bounds::BoundKind;
use qsl_core::linalg::{c, check_hermitian, CMatrix, CVector, HERMITICITY_TOL};
use qsl_core::scenarios::SCENARIO_NAMES;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Largest Hilbert-space dimension accepted from a config file.
pub const MAX_DIM: usize = 64;

/// Largest grid accepted from a config file.
pub const MAX_STEPS: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<BoundKind>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
    /// Perturbation of the base problem for `qsl echo`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<PairSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRef {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub dim: usize,
    pub hamiltonian: HamiltonianSpec,
    pub target: TargetSpec,
    pub rho0: InitialSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum HamiltonianSpec {
    /// `H_t = C + sum_k cos(w_k t) A_k + sin(w_k t) B_k`.
    Fourier(FourierSpec),
    /// Piecewise-linear interpolation of dense samples.
    Samples(SampledSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<MatrixSpec>,
    #[serde(default)]
    pub terms: Vec<FourierTerm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FourierTerm {
    pub omega: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cos: Option<MatrixSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sin: Option<MatrixSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampledSpec {
    pub times: Vec<f64>,
    pub matrices: Vec<MatrixSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// Fixed projector.
    Static(MatrixSpec),
    /// Fixed rank-one projector onto a normalised vector.
    State(VectorSpec),
    /// Instantaneous eigenprojector of the Hamiltonian onto `levels`.
    Eigen { levels: Vec<usize> },
    /// `Pi_t = W_t Pi_0 W_t^dag` with `i dW = K W`.
    Generated {
        generator: HamiltonianSpec,
        initial: MatrixSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Density(MatrixSpec),
    State(VectorSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VectorSpec {
    pub re: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Largest bound violation still reported as holding (default 1e-6).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation: Option<f64>,
    /// Absolute eigenvalue clustering tolerance (default `1e-8 ||H_t||`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<f64>,
    /// Schrödinger residual tolerance for reference solutions
    /// (default `1e-6 max(1, ||H_t||)`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub prefix: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub epsilon: f64,
    /// Defaults to `sigma_x` on the first two basis states.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<MatrixSpec>,
}

pub const DEFAULT_VIOLATION_TOL: f64 = 1e-6;

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Like [`parse_config`] for raw bytes (must be UTF-8).
pub fn parse_config_bytes(data: &[u8]) -> Result<RunConfig, CliError> {
    let text = std::str::from_utf8(data).map_err(|e| CliError::Config(format!("config is not UTF-8: {e}")))?;
    parse_config(text)
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn finite(name: &str, x: f64) -> Result<(), CliError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(bad(format!("{name} must be finite")))
    }
}

fn positive(name: &str, x: Option<f64>) -> Result<(), CliError> {
    match x {
        Some(v) if !(v > 0.0 && v.is_finite()) => Err(bad(format!("{name} must be positive and finite"))),
        _ => Ok(()),
    }
}

impl RunConfig {
    /// Structural checks that need no numerics beyond matrix assembly.
    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.scenario, &self.problem) {
            (Some(_), Some(_)) => return Err(bad("give either 'scenario' or 'problem', not both")),
            (None, None) => return Err(bad("config needs a 'scenario' or a 'problem'")),
            (Some(s), None) => {
                if !SCENARIO_NAMES.contains(&s.name.as_str()) {
                    return Err(bad(format!(
                        "unknown scenario '{}' (expected one of {})",
                        s.name,
                        SCENARIO_NAMES.join(", ")
                    )));
                }
                for (k, v) in &s.params {
                    finite(&format!("scenario parameter {k}"), *v)?;
                }
            }
            (None, Some(p)) => {
                p.validate()?;
                let g = self.grid.unwrap_or_default();
                if g.t_start.is_none() || g.t_end.is_none() {
                    return Err(bad("inline problems need grid.t_start and grid.t_end"));
                }
            }
        }
        if let Some(g) = &self.grid {
            g.validate()?;
        }
        if let Some(b) = &self.bounds {
            if b.is_empty() {
                return Err(bad("bound selection must not be empty"));
            }
        }
        positive("tolerances.violation", self.tolerances.violation)?;
        positive("tolerances.cluster", self.tolerances.cluster)?;
        positive("tolerances.residual", self.tolerances.residual)?;
        if let Some(o) = &self.output {
            if o.prefix.is_empty() {
                return Err(bad("output.prefix must not be empty"));
            }
        }
        if let Some(pair) = &self.pair {
            finite("pair.epsilon", pair.epsilon)?;
            if let Some(m) = &pair.perturbation {
                let dim = self.problem.as_ref().map(|p| p.dim);
                let v = m.to_matrix(dim)?;
                check_hermitian(&v, HERMITICITY_TOL).map_err(|e| bad(format!("pair.perturbation: {e}")))?;
            }
        }
        Ok(())
    }

    /// Bounds to compute; `general` when none are listed.
    pub fn selected_bounds(&self) -> Vec<BoundKind> {
        self.bounds.clone().unwrap_or_else(|| vec![BoundKind::General])
    }

    pub fn violation_tol(&self) -> f64 {
        self.tolerances.violation.unwrap_or(DEFAULT_VIOLATION_TOL)
    }

    /// Applies command-line overrides.
    pub fn with_overrides(mut self, steps: Option<usize>, seed: Option<u64>, tol: Option<f64>) -> Result<Self, CliError> {
        if let Some(s) = steps {
            let mut g = self.grid.unwrap_or_default();
            g.steps = Some(s);
            self.grid = Some(g);
        }
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(t) = tol {
            self.tolerances.violation = Some(t);
        }
        self.validate()?;
        Ok(self)
    }
}

impl GridSpec {
    fn validate(&self) -> Result<(), CliError> {
        if let Some(s) = self.steps {
            if s < 2 {
                return Err(bad(format!("grid.steps must be at least 2, got {s}")));
            }
            if s > MAX_STEPS {
                return Err(bad(format!("grid.steps above {MAX_STEPS}")));
            }
        }
        if let Some(a) = self.t_start {
            finite("grid.t_start", a)?;
        }
        if let Some(b) = self.t_end {
            finite("grid.t_end", b)?;
        }
        if let (Some(a), Some(b)) = (self.t_start, self.t_end) {
            if !(b > a) {
                return Err(bad("grid.t_end must exceed grid.t_start"));
            }
        }
        Ok(())
    }
}

impl ProblemSpec {
    fn validate(&self) -> Result<(), CliError> {
        if !(1..=MAX_DIM).contains(&self.dim) {
            return Err(bad(format!("problem.dim must be in [1, {MAX_DIM}]")));
        }
        self.hamiltonian.validate(self.dim, "hamiltonian")?;
        match &self.target {
            TargetSpec::Static(m) => {
                m.to_matrix(Some(self.dim))?;
            }
            TargetSpec::State(v) => {
                v.to_vector(Some(self.dim))?;
            }
            TargetSpec::Eigen { levels } => {
                if levels.is_empty() {
                    return Err(bad("target.eigen.levels must not be empty"));
                }
                if levels.iter().any(|&l| l >= self.dim) {
                    return Err(bad("target.eigen.levels out of range"));
                }
                let mut sorted = levels.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != levels.len() {
                    return Err(bad("target.eigen.levels has duplicates"));
                }
            }
            TargetSpec::Generated { generator, initial } => {
                generator.validate(self.dim, "target.generated.generator")?;
                initial.to_matrix(Some(self.dim))?;
            }
        }
        match &self.rho0 {
            InitialSpec::Density(m) => {
                m.to_matrix(Some(self.dim))?;
            }
            InitialSpec::State(v) => {
                v.to_vector(Some(self.dim))?;
            }
        }
        Ok(())
    }
}

impl HamiltonianSpec {
    fn validate(&self, dim: usize, what: &str) -> Result<(), CliError> {
        let check = |m: &MatrixSpec| -> Result<(), CliError> {
            let a = m.to_matrix(Some(dim))?;
            check_hermitian(&a, HERMITICITY_TOL).map_err(|e| bad(format!("{what}: {e}")))?;
            Ok(())
        };
        match self {
            HamiltonianSpec::Fourier(f) => {
                if let Some(m) = &f.constant {
                    check(m)?;
                }
                for term in &f.terms {
                    finite(&format!("{what} omega"), term.omega)?;
                    for m in [&term.cos, &term.sin].into_iter().flatten() {
                        check(m)?;
                    }
                }
            }
            HamiltonianSpec::Samples(s) => {
                if s.times.len() < 2 || s.times.len() != s.matrices.len() {
                    return Err(bad(format!("{what}: need at least two samples and one matrix per time")));
                }
                for &t in &s.times {
                    finite(&format!("{what} sample time"), t)?;
                }
                if s.times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(bad(format!("{what}: sample times must be strictly increasing")));
                }
                for m in &s.matrices {
                    check(m)?;
                }
            }
        }
        Ok(())
    }
}

impl MatrixSpec {
    /// Assembles the matrix, checking shape (and `dim`, when given).
    pub fn to_matrix(&self, dim: Option<usize>) -> Result<CMatrix, CliError> {
        let n = self.re.len();
        if n == 0 || n > MAX_DIM {
            return Err(bad(format!("matrix size must be in [1, {MAX_DIM}]")));
        }
        if let Some(d) = dim {
            if n != d {
                return Err(bad(format!("matrix is {n}x{n}, expected {d}x{d}")));
            }
        }
        let rows_ok = |rows: &Vec<Vec<f64>>| rows.len() == n && rows.iter().all(|r| r.len() == n);
        if !rows_ok(&self.re) || !self.im.as_ref().is_none_or(rows_ok) {
            return Err(bad("matrix parts must be square and of equal size"));
        }
        let all = self.re.iter().flatten().chain(self.im.iter().flatten().flatten());
        if all.into_iter().any(|x| !x.is_finite()) {
            return Err(bad("matrix entries must be finite"));
        }
        Ok(CMatrix::from_fn(n, n, |i, j| {
            c(self.re[i][j], self.im.as_ref().map_or(0.0, |m| m[i][j]))
        }))
    }

    pub fn from_matrix(m: &CMatrix) -> Self {
        let rows = |imag: bool| -> Vec<Vec<f64>> {
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| if imag { m[(i, j)].im } else { m[(i, j)].re }).collect())
                .collect()
        };
        MatrixSpec {
            re: rows(false),
            im: Some(rows(true)),
        }
    }
}

impl VectorSpec {
    /// Assembles the vector; it must have unit norm to 1e-10.
    pub fn to_vector(&self, dim: Option<usize>) -> Result<CVector, CliError> {
        let n = self.re.len();
        if n == 0 || n > MAX_DIM {
            return Err(bad(format!("vector length must be in [1, {MAX_DIM}]")));
        }
        if dim.is_some_and(|d| d != n) {
            return Err(bad(format!("vector has length {n}, expected {}", dim.unwrap())));
        }
        if self.im.as_ref().is_some_and(|im| im.len() != n) {
            return Err(bad("vector parts differ in length"));
        }
        let v = CVector::from_fn(n, |i, _| c(self.re[i], self.im.as_ref().map_or(0.0, |m| m[i])));
        if v.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(bad("vector entries must be finite"));
        }
        if (v.norm() - 1.0).abs() > 1e-10 {
            return Err(bad(format!("state vector has norm {}, expected 1", v.norm())));
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_scenario_config() {
        let cfg = parse_config(r#"{"scenario": {"name": "constant_two_level"}}"#).unwrap();
        assert_eq!(cfg.selected_bounds(), vec![BoundKind::General]);
        assert_eq!(cfg.seed, 0);
    }

    #[test]
    fn rejects_structural_errors() {
        for text in [
            "",
            "{}",
            r#"{"scenario": {"name": "nope"}}"#,
            r#"{"scenario": {"name": "static"}, "bounds": []}"#,
            r#"{"scenario": {"name": "static"}, "grid": {"steps": 1}}"#,
            r#"{"scenario": {"name": "static"}, "grid": {"t_start": 1, "t_end": 0}}"#,
            r#"{"scenario": {"name": "static"}, "bounds": ["fastest"]}"#,
            r#"{"scenario": {"name": "static"}, "colour": 1}"#,
            r#"{"scenario": {"name": "static"}, "tolerances": {"violation": -1}}"#,
        ] {
            assert!(matches!(parse_config(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn inline_problem_round_trip() {
        let text = r#"{
            "problem": {
                "dim": 2,
                "hamiltonian": {"fourier": {"constant": {"re": [[0, 0.5], [0.5, 0]]}}},
                "target": {"state": {"re": [1, 0]}},
                "rho0": {"state": {"re": [1, 0]}}
            },
            "grid": {"t_start": 0, "t_end": 3, "steps": 10}
        }"#;
        let cfg = parse_config(text).unwrap();
        let again = parse_config(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn matrix_checks() {
        let m = MatrixSpec { re: vec![vec![1.0, 2.0], vec![3.0]], im: None };
        assert!(m.to_matrix(None).is_err());
        let m = MatrixSpec { re: vec![vec![1.0, 0.0], vec![0.0, 1.0]], im: Some(vec![vec![0.0, 1.0], vec![-1.0, 0.0]]) };
        let a = m.to_matrix(Some(2)).unwrap();
        assert_eq!(a[(0, 1)], c(0.0, 1.0));
        assert!(m.to_matrix(Some(3)).is_err());
        assert_eq!(MatrixSpec::from_matrix(&a).to_matrix(None).unwrap(), a);
        let v = VectorSpec { re: vec![0.6, 0.8], im: None };
        assert!(v.to_vector(Some(2)).is_ok());
        assert!(VectorSpec { re: vec![1.0, 1.0], im: None }.to_vector(None).is_err());
    }

    #[test]
    fn non_hermitian_hamiltonian_is_a_config_error() {
        let text = r#"{
            "problem": {
                "dim": 2,
                "hamiltonian": {"fourier": {"constant": {"re": [[0, 1], [0, 0]]}}},
                "target": {"eigen": {"levels": [0]}},
                "rho0": {"state": {"re": [1, 0]}}
            },
            "grid": {"t_start": 0, "t_end": 1}
        }"#;
        assert!(matches!(parse_config(text), Err(CliError::Config(_))));
    }
}
