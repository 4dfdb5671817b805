use nalgebra::{DMatrix, DVector};
use orbindex::indices::{block_sum, rotation, rotation_path, rs_maslov, shear_block_value, shear_path, symplectic_defect, SymplecticPath};
use orbindex::magnetic_profile::{build_named, ProfileSpec};
use orbindex::model::Model;
use orbindex::morse_index::{discrete_action, discrete_gradient, DiscreteLoop};
use orbindex::orbits::find_circular_orbit;
use orbindex::spectral_flow::{border, crossing_count, endpoint_gap, spectral_flow, spectral_flow_stable, OperatorPath};
use orbindex::HalfInt;
use proptest::prelude::*;
use std::f64::consts::PI;
use std::sync::OnceLock;

fn fstar_model() -> &'static Model {
    static M: OnceLock<Model> = OnceLock::new();
    M.get_or_init(|| Model::new(build_named("fstar", &ProfileSpec::fstar()).unwrap()))
}

/// Index of t ↦ e^{it} on [0, θ] for θ ∉ 2πℤ.
fn rotation_oracle(theta: f64) -> HalfInt {
    let turns = (theta / (2.0 * PI)).floor() as i64;
    HalfInt::from_int(2 * turns + 1)
}

fn symmetric(n: usize, vals: &[f64]) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |i, j| vals[(i * n + j) % vals.len()]);
    (&a + a.transpose()) * 0.5
}

fn diag(v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_row_slice(v))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn halfint_string_round_trip(twice in -1_000_000i64..1_000_000) {
        let h = HalfInt::from_twice(twice);
        prop_assert_eq!(h.to_string().parse::<HalfInt>().unwrap(), h);
        let json = serde_json::to_string(&h).unwrap();
        prop_assert_eq!(serde_json::from_str::<HalfInt>(&json).unwrap(), h);
        prop_assert_eq!(h.is_integer(), twice % 2 == 0);
    }

    #[test]
    fn rotation_index_matches_closed_form(theta in 0.1f64..20.0) {
        prop_assume!((theta / (2.0 * PI) - (theta / (2.0 * PI)).round()).abs() > 1e-3);
        let p = rotation_path(theta, 1.0, 400).unwrap();
        prop_assert_eq!(rs_maslov(&p).unwrap(), rotation_oracle(theta));
        let back = rotation_path(-theta, 1.0, 400).unwrap();
        prop_assert_eq!(rs_maslov(&back).unwrap(), -rotation_oracle(theta));
    }

    #[test]
    fn shear_value_is_half_sign(tp in -50.0f64..50.0) {
        prop_assume!(tp.abs() > 1e-3);
        let p = shear_path(tp, 1.0, 64).unwrap();
        prop_assert_eq!(rs_maslov(&p).unwrap(), shear_block_value(tp));
        prop_assert_eq!(shear_block_value(tp), if tp > 0.0 { -HalfInt::HALF } else { HalfInt::HALF });
    }

    #[test]
    fn maslov_is_additive_under_direct_sum(theta in 0.2f64..12.0, tp in -5.0f64..5.0) {
        prop_assume!((theta / (2.0 * PI) - (theta / (2.0 * PI)).round()).abs() > 1e-3);
        prop_assume!(tp.abs() > 1e-2);
        let a = rotation_path(theta, 1.0, 300).unwrap();
        let b = shear_path(tp, 1.0, 300).unwrap();
        let sum = a.direct_sum(&b).unwrap();
        prop_assert!(symplectic_defect(sum.end()) < 1e-12);
        prop_assert_eq!(rs_maslov(&sum).unwrap(), rs_maslov(&a).unwrap() + rs_maslov(&b).unwrap());
        prop_assert_eq!(block_sum(a.end(), b.end()), sum.end().clone());
    }

    #[test]
    fn maslov_is_invariant_under_refinement(theta in 0.2f64..12.0, k in 2usize..5) {
        prop_assume!((theta / (2.0 * PI) - (theta / (2.0 * PI)).round()).abs() > 1e-3);
        let fine = rotation_path(theta, 1.0, 240 * k).unwrap();
        let coarse = fine.subsampled(k).unwrap();
        prop_assert_eq!(rs_maslov(&fine).unwrap(), rs_maslov(&coarse).unwrap());
    }

    #[test]
    fn maslov_depends_only_on_homotopy_class(theta in 0.3f64..9.0, bump in -0.8f64..0.8) {
        prop_assume!((theta / (2.0 * PI) - (theta / (2.0 * PI)).round()).abs() > 1e-2);
        // reparametrization with fixed endpoints
        let p = SymplecticPath::from_fn(1.0, 400, |t| rotation(theta * (t + bump * t * (1.0 - t)))).unwrap();
        prop_assert_eq!(rs_maslov(&p).unwrap(), rotation_oracle(theta));
    }

    #[test]
    fn bordered_matrix_is_symmetric(n in 2usize..8, vals in prop::collection::vec(-3.0f64..3.0, 64), tau in -3.0f64..3.0) {
        let a = symmetric(n, &vals);
        let h = DVector::from_fn(n, |i, _| vals[(i * 7 + 3) % vals.len()]);
        let b = border(&a, &h, tau);
        prop_assert_eq!(b.nrows(), n + 1);
        prop_assert_eq!(&b, &b.transpose());
        prop_assert_eq!(b.view((0, 0), (n, n)).into_owned(), a);
    }

    #[test]
    fn spectral_flow_is_additive_and_homotopy_invariant(
        m in prop::collection::vec(prop_oneof![-2.0f64..-0.3, 0.3f64..2.0], 4),
        p in prop::collection::vec(prop_oneof![-2.0f64..-0.3, 0.3f64..2.0], 4),
        c in prop::collection::vec(-2.0f64..2.0, 16),
    ) {
        let (am, ap) = (diag(&m), diag(&p));
        let cm = symmetric(4, &c);
        let straight = OperatorPath::from_fn(161, |s| &am * (0.5 - 0.5 * s) + &ap * (0.5 + 0.5 * s)).unwrap();
        let bent = OperatorPath::from_fn(161, |s| &am * (0.5 - 0.5 * s) + &ap * (0.5 + 0.5 * s) + &cm * (1.0 - s * s)).unwrap();
        let f = spectral_flow_stable(&straight).unwrap();
        let expected: i64 = m.iter().zip(&p).map(|(a, b)| (*b > 0.0) as i64 - (*a > 0.0) as i64).sum();
        prop_assert_eq!(f, HalfInt::from_int(expected));
        let delta = 1e-3 * endpoint_gap(&bent);
        prop_assert_eq!(crossing_count(&bent, delta).net(), expected);
        prop_assert_eq!(spectral_flow(&bent, delta).unwrap(), f);
        let sum = straight.direct_sum(&bent).unwrap();
        prop_assert_eq!(spectral_flow_stable(&sum).unwrap(), f + f);
        let constant = OperatorPath::from_fn(5, |_| am.clone()).unwrap();
        prop_assert_eq!(spectral_flow_stable(&constant).unwrap(), HalfInt::ZERO);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn action_gradient_matches_differences(
        seed in prop::collection::vec(-1.0f64..1.0, 64),
        amp in 0.0f64..0.05,
        dt in -0.5f64..0.5,
    ) {
        let m = fstar_model();
        let orbit = find_circular_orbit(m, 0.5, 2.0).unwrap();
        let base = DiscreteLoop::circular(&orbit, 32).unwrap();
        let mut v = base.to_vector();
        for i in 0..64 {
            v[i] += amp * seed[i];
        }
        v[64] += dt;
        let lp = base.with_vector(&v);
        let g = discrete_gradient(m, &lp);
        let h = 1e-6;
        let mut worst = 0.0f64;
        for i in 0..v.len() {
            let mut up = v.clone();
            let mut dn = v.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (discrete_action(m, &lp.with_vector(&up)) - discrete_action(m, &lp.with_vector(&dn))) / (2.0 * h);
            worst = worst.max((fd - g[i]).abs() / (1.0 + g[i].abs()));
        }
        prop_assert!(worst < 1e-6, "worst relative deviation {worst:e}");
    }
}
