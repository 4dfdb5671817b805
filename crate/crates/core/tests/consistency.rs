//! Cross-module agreement on the two scenario orbits.

use orbindex::dynamics::{integrate_jacobi, integrate_orbit, jacobi_closed_form, jacobi_coefficients};
use orbindex::indices::analyze_circular_orbit;
use orbindex::magnetic_profile::{build_named, ProfileSpec};
use orbindex::model::Model;
use orbindex::orbits::{find_circular_orbit, orbit_cylinder, period_derivative_analytic};

fn scenario_models() -> Vec<(Model, f64)> {
    vec![
        (Model::new(build_named("fstar", &ProfileSpec::fstar()).unwrap()), 2.0),
        (Model::new(build_named("f2", &ProfileSpec::f2()).unwrap()), 2.5),
    ]
}

#[test]
fn transverse_block_matches_jacobi_monodromy() {
    for (m, seed) in scenario_models() {
        let orbit = find_circular_orbit(&m, 0.5, seed).unwrap();
        let traj = integrate_orbit(&m, &orbit.state(), orbit.period, 2048).unwrap();
        let jac = integrate_jacobi(&jacobi_coefficients(&m, &traj), orbit.period);
        let idx = analyze_circular_orbit(&m, &orbit, 2048).unwrap();
        let block = idx.split.transverse_block;
        // different bases, so compare invariants
        assert!((jac.yy.trace() - block.trace()).abs() < 1e-6, "{} vs {}", jac.yy.trace(), block.trace());
        assert!((jac.yy.determinant() - 1.0).abs() < 1e-8);
        let k = orbit.a * m.coeffs(orbit.rho).f2;
        let closed = jacobi_closed_form(k, orbit.period);
        assert!((closed.trace() - block.trace()).abs() < 1e-6);
    }
}

#[test]
fn correction_term_is_robust_to_cylinder_sampling() {
    for (m, seed) in scenario_models() {
        let orbit = find_circular_orbit(&m, 0.5, seed).unwrap();
        let (_, tprime) = period_derivative_analytic(&m, &orbit).unwrap();
        for eps in [5e-4, 1e-3, 2e-3] {
            for samples in [5, 9, 13] {
                let cyl = orbit_cylinder(&m, 0.5, seed, eps, samples).unwrap();
                assert_eq!(cyl.chi, if tprime > 0.0 { -1 } else { 1 });
                assert!((cyl.tprime_fd - tprime).abs() <= 1e-3 * tprime.abs(), "eps {eps} samples {samples}: {}", cyl.tprime_fd);
            }
        }
    }
}
