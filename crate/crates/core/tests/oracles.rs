//! Library results against closed forms and independently coded references.

use std::f64::consts::{FRAC_PI_4, PI};

use qsl_core::bounds::{
    bound_adiabatic, bound_general, integrand_general, integrand_generator, integrand_pure,
};
use qsl_core::dynamics::{fidelity_series, propagate_density, propagate_state, Domain, OperatorPath, TimeGrid};
use qsl_core::linalg::{basis, c, max_abs_diff, outer, sigma_y, spectral_norm, CMatrix, CVector, I};
use qsl_core::projectors::{
    derivative_norm, interaction_picture_path, track_eigenspace, ProjectorPath, StatePath,
};
use qsl_core::random;
use qsl_core::scenarios::{make_landau_zener, make_rotating_field, random_hamiltonian_path};
use qsl_core::verify::{run_suite, Suite, SuiteOptions};

/// Classical fourth-order Runge-Kutta for `i psi' = H psi`, written out
/// independently of the library's exponential integrator.
fn rk4(h: &OperatorPath, psi0: &CVector, t0: f64, t1: f64, steps: usize) -> CVector {
    let dt = (t1 - t0) / steps as f64;
    let f = |t: f64, v: &CVector| -> CVector { h.at(t).unwrap() * v * (-I) };
    let mut psi = psi0.clone();
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        let k1 = f(t, &psi);
        let k2 = f(t + dt / 2.0, &(&psi + &k1 * c(dt / 2.0, 0.0)));
        let k3 = f(t + dt / 2.0, &(&psi + &k2 * c(dt / 2.0, 0.0)));
        let k4 = f(t + dt, &(&psi + &k3 * c(dt, 0.0)));
        psi += (k1 + k2 * c(2.0, 0.0) + k3 * c(2.0, 0.0) + k4) * c(dt / 6.0, 0.0);
    }
    psi
}

#[test]
fn propagation_matches_runge_kutta_reference() {
    let mut rng = random::rng(2024);
    for dim in [2, 5] {
        let dom = Domain::new(0.0, 3.0).unwrap();
        let h = random_hamiltonian_path(&mut rng, dim, 3, dom);
        let psi0 = random::unit_vector(&mut rng, dim);
        let grid = TimeGrid::uniform(0.0, 3.0, 2000).unwrap();
        let traj = propagate_state(&h, &psi0, &grid).unwrap();
        let ours = traj.states.unwrap().pop().unwrap();
        let reference = rk4(&h, &psi0, 0.0, 3.0, 20000);
        assert!((ours - reference).norm() < 1e-5);
    }
}

#[test]
fn adiabatic_bound_on_rotating_field() {
    let s = make_rotating_field(1.0, 0.1).unwrap();
    let grid = s.default_grid();
    let r = bound_adiabatic(&s.hamiltonian, &[0], &grid, None).unwrap();
    for (k, &t) in grid.nodes().iter().enumerate() {
        match r.lower[k] {
            Some(lo) => assert!((lo - (0.05 * t).cos().powi(2)).abs() < 1e-8, "t = {t}"),
            None => assert!(t > 10.0 * PI - 1e-6),
        }
    }
    assert!((r.t_plus.unwrap() - 10.0 * PI).abs() < grid.max_step());
    // small times: 1 - bound ~ (v t / 2)^2
    let k = 10;
    let t = grid.nodes()[k];
    let deficit = 1.0 - r.lower[k].unwrap();
    assert!((deficit / (0.05 * t).powi(2) - 1.0).abs() < 1e-3);
    // the exact rotating-frame fidelity respects the bound
    let exact = s.exact_fidelity.as_ref().unwrap();
    for (k, &t) in grid.nodes().iter().enumerate() {
        if let Some(lo) = r.lower[k] {
            assert!(exact(t) >= lo - 1e-12);
        }
    }
}

#[test]
fn commuting_target_reduces_to_projector_speed() {
    let s = make_rotating_field(1.0, 0.3).unwrap();
    for t in [0.0, 1.0, 4.2, s.domain.end] {
        let h = s.hamiltonian.at(t).unwrap();
        let p = s.projector.at(t).unwrap();
        let dp = s.projector.derivative_at(t).unwrap();
        let general = integrand_general(&h, &p, &dp).unwrap();
        assert!((general - spectral_norm(&dp).unwrap()).abs() < 1e-10);
        assert!((general - 0.15).abs() < 1e-7);
    }
}

#[test]
fn landau_zener_gap_and_adiabatic_regime() {
    let s = make_landau_zener(1.0, 1.0, (-5.0, 5.0)).unwrap();
    let grid = s.default_grid();
    let track = track_eigenspace(&s.hamiltonian, &[0], &grid, None).unwrap();
    for (&t, gap) in grid.nodes().iter().zip(&track.gaps) {
        assert!((gap.unwrap() - (t * t + 1.0f64).sqrt()).abs() < 1e-12);
    }
    let (t_min, gap_min) = track.min_gap().unwrap();
    assert!(t_min.abs() < 1e-12 && (gap_min - 1.0).abs() < 1e-12);

    // slow sweep relative to the gap: tiny transition probability, above the bound
    let s = make_landau_zener(4.0, 0.1, (-2.0, 2.0)).unwrap();
    let grid = s.default_grid();
    let traj = propagate_density(&s.hamiltonian, &s.rho0, &grid).unwrap();
    let f = fidelity_series(&traj, &s.projector).unwrap();
    let r = bound_adiabatic(&s.hamiltonian, &[0], &grid, None).unwrap();
    assert!(1.0 - f.min() < 1e-4);
    for (k, lo) in r.lower.iter().enumerate() {
        assert!(f.values[k] >= lo.unwrap() - 1e-9);
    }
}

#[test]
fn frozen_half_overlap() {
    let dom = Domain::new(0.0, 2.0).unwrap();
    let h = OperatorPath::zero(2, dom);
    let proj = ProjectorPath::fixed(outer(&basis(2, 0)), dom).unwrap();
    let rho = CMatrix::identity(2, 2).scale(0.5);
    let grid = TimeGrid::uniform(0.0, 2.0, 10).unwrap();
    let r = bound_general(&h, &proj, &rho, &grid).unwrap();
    assert!((r.g0 - FRAC_PI_4).abs() < 1e-15);
    for k in 0..grid.len() {
        assert!((r.lower[k].unwrap() - 0.5).abs() < 1e-15);
        assert!((r.upper.as_ref().unwrap()[k].unwrap() - 0.5).abs() < 1e-15);
    }
}

#[test]
fn rotating_state_speeds() {
    let v = 0.6;
    let dom = Domain::new(0.0, 5.0).unwrap();
    let phi = StatePath::new(2, dom, move |t| {
        Ok(CVector::from_vec(vec![c((v * t / 2.0).cos(), 0.0), c((v * t / 2.0).sin(), 0.0)]))
    })
    .with_derivative(move |t| {
        Ok(CVector::from_vec(vec![c(-(v / 2.0) * (v * t / 2.0).sin(), 0.0), c((v / 2.0) * (v * t / 2.0).cos(), 0.0)]))
    });
    for t in [0.3, 2.0, 4.9] {
        let x = integrand_pure(&CMatrix::zeros(2, 2), &phi.at(t).unwrap(), &phi.derivative_at(t).unwrap()).unwrap();
        assert!((x - v / 2.0).abs() < 1e-14);
    }

    // W_t = exp(-i sigma_y v t / 4) rotating |0><0|, H = 0
    let w = OperatorPath::new(2, dom, move |t| {
        let a = v * t / 4.0;
        CMatrix::identity(2, 2).scale(a.cos()) - sigma_y() * (I * a.sin())
    })
    .with_derivative(move |t| {
        let a = v * t / 4.0;
        (CMatrix::identity(2, 2).scale(-a.sin()) - sigma_y() * (I * a.cos())).scale(v / 4.0)
    });
    let path = ProjectorPath::unitary_generated(w.clone(), outer(&basis(2, 0))).unwrap();
    for t in [0.1, 2.5] {
        let gen = integrand_generator(&CMatrix::zeros(2, 2), &w.derivative_at(t).unwrap(), &w.at(t).unwrap()).unwrap();
        assert!((gen - v / 4.0).abs() < 1e-14);
        let speed = derivative_norm(&path, t).unwrap();
        assert!((speed - v / 4.0).abs() < 1e-12);
        assert!(gen >= speed - 1e-14);
    }
}

#[test]
fn interaction_picture_speed_is_general_integrand() {
    let mut rng = random::rng(99);
    let dom = Domain::new(0.0, 3.0).unwrap();
    let h = random_hamiltonian_path(&mut rng, 3, 3, dom);
    let proj = ProjectorPath::fixed(random::projector(&mut rng, 3, 1), dom).unwrap();
    let grid = TimeGrid::uniform(0.0, 3.0, 1500).unwrap();
    let ip = interaction_picture_path(&proj, &h, &grid).unwrap();
    for &t in grid.nodes().iter().step_by(250) {
        let direct = integrand_general(&h.at(t).unwrap(), &proj.at(t).unwrap(), &proj.derivative_at(t).unwrap()).unwrap();
        assert!((derivative_norm(&ip, t).unwrap() - direct).abs() < 1e-10);
        // and its analytic derivative agrees with differencing the path
        let fd = ProjectorPath::custom(3, grid.domain(), {
            let ip = ip.clone();
            move |s| ip.at(s)
        })
        .unwrap();
        assert!(max_abs_diff(&fd.derivative_at(t).unwrap(), &ip.derivative_at(t).unwrap()) < 1e-6);
    }
    // at t = 0 the conjugation is trivial
    assert!(max_abs_diff(&ip.at(0.0).unwrap(), &proj.at(0.0).unwrap()) < 1e-15);
}

#[test]
fn small_suites_pass() {
    let opts = SuiteOptions::default();
    for s in [Suite::Corollary, Suite::Loschmidt] {
        let r = run_suite(s, 6, &opts).unwrap();
        assert!(r.all_passed(), "{s}: {:?}", r.outcomes);
    }
}
