//! Dense complex matrix kernel.
//!
//! Everything here works on small `DMatrix<Complex64>` operators (dim up to a
//! few dozen). Eigendecompositions go through nalgebra's Hermitian solver; the
//! rest (norms, exponentials, commutators) is assembled on top of it.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{QslError, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Relative tolerance on `max|A - A^dag|` for a matrix to count as Hermitian.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// Relative factor for the default eigenvalue clustering tolerance.
pub const DEFAULT_CLUSTER_REL_TOL: f64 = 1e-8;

pub const I: Complex64 = Complex64::new(0.0, 1.0);

#[inline]
pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(dim: usize) -> CMatrix {
    CMatrix::identity(dim, dim)
}

pub fn zeros(dim: usize) -> CMatrix {
    CMatrix::zeros(dim, dim)
}

pub fn sigma_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)])
}

pub fn sigma_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)])
}

pub fn sigma_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)])
}

/// Computational basis vector `|index>`.
pub fn basis(dim: usize, index: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    v[index] = c(1.0, 0.0);
    v
}

/// Rank-one projector `|v><v|` (v is used as given, not renormalised).
pub fn outer(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

pub fn trace(a: &CMatrix) -> Complex64 {
    a.diagonal().iter().sum()
}

/// `max_ij |a_ij|`.
pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).fold(0.0, |m, (x, y)| m.max((x - y).norm()))
}

/// `(A + A^dag) / 2`.
pub fn hermitian_part(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

pub fn ensure_square(a: &CMatrix) -> Result<()> {
    if a.nrows() == 0 || a.nrows() != a.ncols() {
        return Err(QslError::input(format!(
            "expected a non-empty square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(())
}

pub fn ensure_finite(a: &CMatrix) -> Result<()> {
    if a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(QslError::input("matrix has non-finite entries"))
    }
}

pub fn ensure_same_dim(a: &CMatrix, b: &CMatrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(QslError::input(format!(
            "dimension mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Checks `max|A - A^dag| <= rel_tol * max|A|` and returns the deviation.
pub fn check_hermitian(a: &CMatrix, rel_tol: f64) -> Result<f64> {
    ensure_square(a)?;
    ensure_finite(a)?;
    let deviation = max_abs_diff(a, &a.adjoint());
    if deviation > rel_tol * max_abs(a) {
        return Err(QslError::Hermiticity { deviation });
    }
    Ok(deviation)
}

/// Default clustering tolerance: `1e-8 * ||A||`.
pub fn default_cluster_tol(a: &CMatrix) -> Result<f64> {
    Ok(DEFAULT_CLUSTER_REL_TOL * spectral_norm(a)?)
}

/// Eigendecomposition of a Hermitian matrix with eigenvalues grouped into
/// clusters of (numerically) equal values.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal columns, column `k` belongs to `eigenvalues[k]`.
    pub eigenvectors: CMatrix,
    /// Each cluster is a contiguous, ascending run of eigenvalue indices.
    pub clusters: Vec<Vec<usize>>,
    pub cluster_tol: f64,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvector(&self, k: usize) -> CVector {
        self.eigenvectors.column(k).into_owned()
    }

    /// Columns selected by `indices`, in the given order.
    pub fn frame(&self, indices: &[usize]) -> CMatrix {
        let cols: Vec<CVector> = indices.iter().map(|&k| self.eigenvector(k)).collect();
        CMatrix::from_columns(&cols)
    }

    /// Orthogonal projector onto the span of the selected eigenvectors.
    pub fn projector(&self, indices: &[usize]) -> CMatrix {
        let v = self.frame(indices);
        hermitian_part(&(&v * v.adjoint()))
    }

    /// Projector onto cluster `n`, together with its mean eigenvalue.
    pub fn cluster_projector(&self, n: usize) -> (f64, CMatrix) {
        let idx = &self.clusters[n];
        let mean = idx.iter().map(|&k| self.eigenvalues[k]).sum::<f64>() / idx.len() as f64;
        (mean, self.projector(idx))
    }

    /// Index of the cluster containing eigenvalue `k`.
    pub fn cluster_of(&self, k: usize) -> usize {
        self.clusters
            .iter()
            .position(|cl| cl.contains(&k))
            .expect("every index belongs to a cluster")
    }

    /// Smallest distance between a selected and a non-selected eigenvalue.
    /// `None` when every level is selected.
    pub fn gap_around(&self, indices: &[usize]) -> Option<f64> {
        let mut gap: Option<f64> = None;
        for &i in indices {
            for j in 0..self.dim() {
                if indices.contains(&j) {
                    continue;
                }
                let d = (self.eigenvalues[i] - self.eigenvalues[j]).abs();
                gap = Some(gap.map_or(d, |g: f64| g.min(d)));
            }
        }
        gap
    }

    pub fn reconstruct(&self) -> CMatrix {
        let lam = CMatrix::from_diagonal(&CVector::from_iterator(
            self.dim(),
            self.eigenvalues.iter().map(|&x| c(x, 0.0)),
        ));
        &self.eigenvectors * lam * self.eigenvectors.adjoint()
    }
}

/// Hermitian eigendecomposition with ascending eigenvalues.
///
/// Eigenvalues closer than `cluster_tol` are grouped transitively. Each
/// eigenvector is rotated so that its largest-magnitude component is real and
/// positive (first such component on ties).
pub fn hermitian_eig(a: &CMatrix, cluster_tol: f64) -> Result<SpectralDecomposition> {
    check_hermitian(a, HERMITICITY_TOL)?;
    if !(cluster_tol >= 0.0) {
        return Err(QslError::input("cluster tolerance must be non-negative"));
    }
    let n = a.nrows();
    let eig = SymmetricEigen::try_new(hermitian_part(a), f64::EPSILON, 0)
        .ok_or_else(|| QslError::Numerical("Hermitian eigensolver did not converge".into()))?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));

    let eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut eigenvectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        fix_phase(&mut col);
        eigenvectors.set_column(dst, &col);
    }

    let mut clusters: Vec<Vec<usize>> = vec![vec![0]];
    for k in 1..n {
        if eigenvalues[k] - eigenvalues[k - 1] <= cluster_tol {
            clusters.last_mut().unwrap().push(k);
        } else {
            clusters.push(vec![k]);
        }
    }

    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
        clusters,
        cluster_tol,
    })
}

/// Rotates `v` so that its largest-magnitude component is real positive.
pub fn fix_phase(v: &mut CVector) {
    let max = v.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    if max == 0.0 {
        return;
    }
    let pivot = v
        .iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-10))
        .unwrap();
    let phase = v[pivot].conj() / v[pivot].norm();
    v.iter_mut().for_each(|z| *z *= phase);
}

/// Operator 2-norm (largest singular value), via the spectrum of `A^dag A`.
pub fn spectral_norm(a: &CMatrix) -> Result<f64> {
    ensure_finite(a)?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let gram = hermitian_part(&(a.adjoint() * a));
    let eig = SymmetricEigen::try_new(gram, f64::EPSILON, 0)
        .ok_or_else(|| QslError::Numerical("Hermitian eigensolver did not converge".into()))?;
    let top = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    Ok(top.max(0.0).sqrt())
}

/// `exp(-i H dt)` through the eigendecomposition of `H`.
pub fn expm_unitary(h: &CMatrix, dt: f64) -> Result<CMatrix> {
    check_hermitian(h, HERMITICITY_TOL)?;
    if !dt.is_finite() {
        return Err(QslError::input("time step must be finite"));
    }
    let n = h.nrows();
    if dt == 0.0 {
        return Ok(identity(n));
    }
    let eig = SymmetricEigen::try_new(hermitian_part(h), f64::EPSILON, 0)
        .ok_or_else(|| QslError::Numerical("Hermitian eigensolver did not converge".into()))?;
    let v = &eig.eigenvectors;
    let phases = CVector::from_iterator(n, eig.eigenvalues.iter().map(|&l| (-I * (l * dt)).exp()));
    let mut scaled = v.clone();
    for (mut col, p) in scaled.column_iter_mut().zip(phases.iter()) {
        col *= *p;
    }
    Ok(scaled * v.adjoint())
}

/// `AB - BA`.
pub fn commutator(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    ensure_square(a)?;
    ensure_same_dim(a, b)?;
    Ok(a * b - b * a)
}

/// `max|U^dag U - I|`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    max_abs_diff(&(u.adjoint() * u), &identity(u.nrows()))
}

/// Real part of the trace of `A B` without forming the product.
pub fn trace_product_re(a: &CMatrix, b: &CMatrix) -> f64 {
    // tr(AB) = sum_ij a_ij b_ji
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += (a[(i, j)] * b[(j, i)]).re;
        }
    }
    acc
}

/// Checks that `rho` is a density matrix: Hermitian, unit trace, PSD.
pub fn check_density(rho: &CMatrix, tol: f64) -> Result<()> {
    check_hermitian(rho, 1e-10).map_err(|_| QslError::input("density matrix is not Hermitian"))?;
    let tr = trace(rho);
    if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
        return Err(QslError::input(format!("density matrix trace is {tr}, expected 1")));
    }
    let eig = hermitian_eig(&hermitian_part(rho), 0.0)?;
    if eig.eigenvalues[0] < -tol {
        return Err(QslError::input(format!(
            "density matrix has negative eigenvalue {:.3e}",
            eig.eigenvalues[0]
        )));
    }
    Ok(())
}

/// Checks `P^2 = P` and `P = P^dag` to `tol` (max-entry) and returns the rank.
pub fn check_projector(p: &CMatrix, tol: f64) -> Result<usize> {
    ensure_square(p)?;
    ensure_finite(p)?;
    let herm = max_abs_diff(p, &p.adjoint());
    let idem = max_abs_diff(&(p * p), p);
    if herm > tol || idem > tol {
        return Err(QslError::Projector(format!(
            "|P - P^dag| = {herm:.3e}, |P^2 - P| = {idem:.3e} (tolerance {tol:.1e})"
        )));
    }
    let tr = trace(p).re;
    let rank = tr.round();
    if (tr - rank).abs() > 1e-6 {
        return Err(QslError::Projector(format!("non-integer trace {tr}")));
    }
    Ok(rank as usize)
}

pub fn normalized(v: &CVector) -> Result<CVector> {
    let n = v.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(QslError::input("cannot normalise a zero or non-finite vector"));
    }
    Ok(v.unscale(n))
}
