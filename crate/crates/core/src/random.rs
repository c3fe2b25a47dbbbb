//! Seeded random operators for scenarios and Monte Carlo suites.
//!
//! All draws go through `ChaCha8Rng` so that a seed reproduces the same
//! matrices on every platform.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{expm_unitary, hermitian_part, CMatrix, CVector};

pub type SeededRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for a derived stream, so sub-draws do not shift when callers add draws.
pub fn substream(seed: u64, stream: u64) -> SeededRng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn gaussian(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn complex_gaussian(rng: &mut impl Rng) -> Complex64 {
    Complex64::new(gaussian(rng), gaussian(rng))
}

/// Matrix with i.i.d. standard complex Gaussian entries.
pub fn ginibre(rng: &mut impl Rng, dim: usize) -> CMatrix {
    CMatrix::from_fn(dim, dim, |_, _| complex_gaussian(rng))
}

/// `(G + G^dag)/2` with `G` Ginibre, scaled by `scale`. Exactly Hermitian.
pub fn hermitian(rng: &mut impl Rng, dim: usize, scale: f64) -> CMatrix {
    hermitian_part(&ginibre(rng, dim)).scale(scale)
}

pub fn unit_vector(rng: &mut impl Rng, dim: usize) -> CVector {
    let v = CVector::from_fn(dim, |_, _| complex_gaussian(rng));
    let n = v.norm();
    v.unscale(n)
}

/// Haar-ish unitary: exponential of a random Hermitian generator.
pub fn unitary(rng: &mut impl Rng, dim: usize) -> CMatrix {
    let h = hermitian(rng, dim, 1.0);
    expm_unitary(&h, 3.0).expect("random generator is Hermitian")
}

/// `G G^dag / tr(G G^dag)`: full-rank mixed state.
pub fn density(rng: &mut impl Rng, dim: usize) -> CMatrix {
    let g = ginibre(rng, dim);
    let r = hermitian_part(&(&g * g.adjoint()));
    let tr: f64 = r.diagonal().iter().map(|z| z.re).sum();
    r.unscale(tr)
}

/// Density with rank `rank` (a normalised Wishart with `rank` columns).
pub fn density_of_rank(rng: &mut impl Rng, dim: usize, rank: usize) -> CMatrix {
    let g = CMatrix::from_fn(dim, rank, |_, _| complex_gaussian(rng));
    let r = hermitian_part(&(&g * g.adjoint()));
    let tr: f64 = r.diagonal().iter().map(|z| z.re).sum();
    r.unscale(tr)
}

/// Projector onto a random `rank`-dimensional subspace.
pub fn projector(rng: &mut impl Rng, dim: usize, rank: usize) -> CMatrix {
    let u = unitary(rng, dim);
    let v = u.columns(0, rank).into_owned();
    hermitian_part(&(&v * v.adjoint()))
}

/// Positive semidefinite matrix with spectrum in `[0, 1]`; with probability
/// `degenerate_p` some eigenvalues are repeated exactly.
pub fn psd(rng: &mut impl Rng, dim: usize, degenerate_p: f64) -> CMatrix {
    let u = unitary(rng, dim);
    let mut lam: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    if rng.random::<f64>() < degenerate_p && dim > 1 {
        let k = rng.random_range(1..dim);
        for i in 0..k {
            lam[i] = lam[0];
        }
    }
    let d = CMatrix::from_diagonal(&CVector::from_iterator(
        dim,
        lam.iter().map(|&x| Complex64::new(x, 0.0)),
    ));
    hermitian_part(&(&u * d * u.adjoint()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{check_density, check_projector, max_abs_diff, unitarity_defect};

    #[test]
    fn same_seed_same_draws() {
        let a = hermitian(&mut rng(7), 4, 1.0);
        let b = hermitian(&mut rng(7), 4, 1.0);
        assert_eq!(a, b);
        assert!(max_abs_diff(&a, &hermitian(&mut rng(8), 4, 1.0)) > 0.0);
    }

    #[test]
    fn draws_satisfy_their_contracts() {
        let mut r = rng(1);
        for dim in 2..6 {
            assert!(unitarity_defect(&unitary(&mut r, dim)) < 1e-12);
            check_density(&density(&mut r, dim), 1e-10).unwrap();
            check_density(&density_of_rank(&mut r, dim, 1), 1e-10).unwrap();
            assert_eq!(check_projector(&projector(&mut r, dim, 1), 1e-10).unwrap(), 1);
            assert!((unit_vector(&mut r, dim).norm() - 1.0).abs() < 1e-14);
        }
    }
}
