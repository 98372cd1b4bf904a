use orlicz_core::degiorgi::{holder_exponent, iterate_sequence};
use orlicz_core::modular::{luxemburg_norm, modular, oscillation};
use orlicz_core::{Ball, DerivedGrowth, DomainSpec, GridFunction, GrowthFunction, NFunction};
use proptest::prelude::*;

fn catalog(idx: usize, p: f64) -> NFunction {
    match idx {
        0 => NFunction::power(p, 2).unwrap(),
        1 => NFunction::double_phase(p, p + 1.0, "x1 + 0.5", 2).unwrap(),
        _ => NFunction::orlicz_log(p, 2).unwrap(),
    }
}

fn grid_values(res: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, res * res)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn young_inequality(idx in 0usize..3, p in 1.2f64..3.5, ls in -2.0f64..2.0, lt in -2.0f64..2.0, x in 0.0f64..1.0) {
        let a = catalog(idx, p);
        let (s, t) = (10f64.powf(ls), 10f64.powf(lt));
        let pt = [x, 0.5];
        let rhs = a.value(&pt, t).unwrap() + a.young_conjugate(&pt, s).unwrap();
        prop_assert!(s * t <= rhs * (1.0 + 1e-10));
    }

    #[test]
    fn inverse_round_trip(idx in 0usize..3, p in 1.2f64..3.5, lsig in -3.0f64..3.0) {
        let a = catalog(idx, p);
        let sigma = 10f64.powf(lsig);
        let t = a.inverse(&[0.3, 0.3], sigma).unwrap();
        let back = a.value(&[0.3, 0.3], t).unwrap();
        prop_assert!((back - sigma).abs() <= 1e-9 * sigma);
    }

    #[test]
    fn conjugate_is_involutive(p in 1.3f64..3.0, lt in -1.0f64..1.0) {
        let a = NFunction::power(p, 2).unwrap();
        let t = 10f64.powf(lt);
        let back = a.conjugate().conjugate().value(&[0.5, 0.5], t).unwrap();
        let want = a.value(&[0.5, 0.5], t).unwrap();
        prop_assert!((back - want).abs() <= 1e-6 * want);
    }

    #[test]
    fn norm_is_homogeneous(idx in 0usize..3, vals in grid_values(9), c in -20.0f64..20.0) {
        prop_assume!(c.abs() > 1e-3);
        let d = DomainSpec::unit_cube(2, 9).unwrap();
        let u = GridFunction::new(d, vals).unwrap();
        prop_assume!(u.sup_norm() > 1e-6);
        let a = catalog(idx, 2.0);
        let n1 = luxemburg_norm(&a, &u).unwrap();
        let n2 = luxemburg_norm(&a, &u.scaled(c)).unwrap();
        prop_assert!((n2 - c.abs() * n1).abs() <= 1e-8 * n2);
    }

    #[test]
    fn modular_is_convex(idx in 0usize..3, u in grid_values(7), v in grid_values(7)) {
        let d = DomainSpec::unit_cube(2, 7).unwrap();
        let u = GridFunction::new(d.clone(), u).unwrap();
        let v = GridFunction::new(d, v).unwrap();
        let a = catalog(idx, 2.5);
        let mid = u.axpy(1.0, &v).unwrap().scaled(0.5);
        let lhs = modular(&a, &mid, None).unwrap();
        let rhs = 0.5 * (modular(&a, &u, None).unwrap() + modular(&a, &v, None).unwrap());
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-14);
    }

    #[test]
    fn growth_hat_is_involutive(p in 1.1f64..4.0, lb in -3.0f64..3.0) {
        let g = GrowthFunction::power(p).unwrap();
        let hh = g.hat().hat();
        let b = 10f64.powf(lb);
        prop_assert!((hh.eval(b) - g.eval(b)).abs() <= 1e-10 * g.eval(b));
    }

    #[test]
    fn derived_inverses_increase(p in 1.2f64..2.8, l1 in -3.0f64..3.0, gap in 0.01f64..2.0) {
        let g = DerivedGrowth::new(GrowthFunction::power(p).unwrap(), 3);
        let (s1, s2) = (10f64.powf(l1), 10f64.powf(l1 + gap));
        prop_assert!(g.tilde_inv(s1).unwrap() < g.tilde_inv(s2).unwrap());
        prop_assert!(g.hat_tilde_inv(s1).unwrap() < g.hat_tilde_inv(s2).unwrap());
    }

    #[test]
    fn exponent_decreases(s in 1u64..40, tau in 2.0f64..50.0) {
        let a = holder_exponent(tau, s);
        prop_assert!(a > 0.0 && a < 1.0);
        prop_assert!(holder_exponent(tau, s + 1) < a);
        prop_assert!(holder_exponent(tau * 1.5, s) < a);
    }

    #[test]
    fn sequence_convergence_is_monotone_in_seed(ly in -12.0f64..-4.0, f in 0.01f64..0.99) {
        let g = DerivedGrowth::new(GrowthFunction::power(2.0).unwrap(), 3);
        let y = 10f64.powf(ly);
        if iterate_sequence(&g, 1.0, 1.0, y, 200).unwrap().converged {
            prop_assert!(iterate_sequence(&g, 1.0, 1.0, f * y, 200).unwrap().converged);
        }
    }

    #[test]
    fn oscillation_shrinks_with_radius(vals in grid_values(17), r in 0.05f64..0.5, f in 0.2f64..1.0) {
        let d = DomainSpec::unit_cube(2, 17).unwrap();
        let u = GridFunction::new(d, vals).unwrap();
        let b = Ball::new(vec![0.5, 0.5], r).unwrap();
        prop_assert!(oscillation(&u, &b.scaled(f)).unwrap() <= oscillation(&u, &b).unwrap());
    }

    #[test]
    fn grid_files_round_trip(vals in grid_values(5)) {
        let d = DomainSpec::new(vec![-1.0, 0.0], vec![1.0, 3.0], vec![5, 5]).unwrap();
        let u = GridFunction::new(d, vals).unwrap();
        let (back, digest) = GridFunction::from_binary(&u.to_binary(Some([7u8; 32]))).unwrap();
        prop_assert_eq!(back.values(), u.values());
        prop_assert_eq!(digest, Some([7u8; 32]));
        let mut buf = Vec::new();
        u.write_csv_to(&mut buf, None).unwrap();
        let back = GridFunction::read_csv_from(&buf[..]).unwrap();
        prop_assert_eq!(back.values(), u.values());
        prop_assert_eq!(back.domain(), u.domain());
    }
}
