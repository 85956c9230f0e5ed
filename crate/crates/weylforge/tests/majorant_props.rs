use proptest::prelude::*;
use weylforge::constants::Constants;
use weylforge::majorant::{majorant_apply_with, weak_l2_norm, Permutation};
use weylforge::spectral::{TrigPolynomial1D, C64};
use weylforge::Exec;

fn tol() -> f64 {
    Constants::embedded().c("identity.multiplier_tol")
}

fn case() -> impl Strategy<Value = (Vec<(f64, f64)>, Vec<usize>)> {
    (2usize..24).prop_flat_map(|n| {
        (
            prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n),
            Just((1..=n).collect::<Vec<_>>()).prop_shuffle(),
        )
    })
}

fn poly(c: &[(f64, f64)]) -> TrigPolynomial1D {
    TrigPolynomial1D::from_terms(c.iter().enumerate().map(|(i, &(re, im))| (i as i64 + 1, C64::new(re, im))))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn strong_dominates_full_sum((c, order) in case()) {
        prop_assume!(c.iter().any(|&(a, b)| a.abs() + b.abs() > 1e-3));
        let n = order.len();
        let r = majorant_apply_with(&poly(&c), &Permutation::new(order).unwrap(), 8 * n, Exec::Sequential).unwrap();
        prop_assert!(r.strong_ratio >= 1.0 - tol());
        prop_assert!(r.weak_norm <= r.strong_ratio + tol());
    }

    #[test]
    fn ratios_are_scale_invariant((c, order) in case(), s in 0.01f64..50.0, phase in 0.0f64..6.28) {
        prop_assume!(c.iter().any(|&(a, b)| a.abs() + b.abs() > 1e-3));
        let n = order.len();
        let sigma = Permutation::new(order).unwrap();
        let p = poly(&c);
        let z = C64::from_polar(s, phase);
        let q = TrigPolynomial1D::from_terms(p.terms().iter().map(|&(j, a)| (j, a * z)));
        let a = majorant_apply_with(&p, &sigma, 8 * n, Exec::Sequential).unwrap();
        let b = majorant_apply_with(&q, &sigma, 8 * n, Exec::Sequential).unwrap();
        let t = 1e3 * tol();
        prop_assert!((a.strong_ratio - b.strong_ratio).abs() <= t * a.strong_ratio);
        prop_assert!((a.weak_norm - b.weak_norm).abs() <= t * a.weak_norm.max(1.0));
    }

    #[test]
    fn field_is_nested_under_refinement((c, order) in case()) {
        let n = order.len();
        let sigma = Permutation::new(order).unwrap();
        let p = poly(&c);
        let coarse = majorant_apply_with(&p, &sigma, 8 * n, Exec::Sequential).unwrap();
        let fine = majorant_apply_with(&p, &sigma, 16 * n, Exec::Sequential).unwrap();
        for (t, v) in coarse.field.iter().enumerate() {
            prop_assert!((fine.field[2 * t] - v).abs() <= 1e3 * tol() * (1.0 + v));
        }
    }

    #[test]
    fn field_bounds_the_full_sum_for_every_order((c, order) in case()) {
        let n = order.len();
        let s = 8 * n;
        let p = poly(&c);
        let r = majorant_apply_with(&p, &Permutation::new(order).unwrap(), s, Exec::Sequential).unwrap();
        for (t, v) in r.field.iter().enumerate() {
            let x = t as f64 / s as f64;
            let full: C64 = p.terms().iter().map(|&(j, a)| a * C64::from_polar(1.0, std::f64::consts::TAU * j as f64 * x)).sum();
            prop_assert!(full.norm() <= v + 1e3 * tol() * (1.0 + v));
        }
    }

    #[test]
    fn weak_norm_is_order_free(v in prop::collection::vec(0.0f64..10.0, 1..64)) {
        let mut w = v.clone();
        w.reverse();
        prop_assert_eq!(weak_l2_norm(&v), weak_l2_norm(&w));
        let rms = (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
        prop_assert!(weak_l2_norm(&v) <= rms + tol());
    }
}

#[test]
fn parallel_matches_sequential() {
    let p = poly(&[(1.0, 0.0), (0.5, -0.25), (0.0, 1.0), (-0.75, 0.5)]);
    let sigma = Permutation::new(vec![3, 1, 4, 2]).unwrap();
    let a = majorant_apply_with(&p, &sigma, 1024, Exec::Sequential).unwrap();
    let b = majorant_apply_with(&p, &sigma, 1024, Exec::default()).unwrap();
    assert_eq!(a.field, b.field);
}

#[test]
fn undersampling_is_rejected() {
    let p = poly(&[(1.0, 0.0), (1.0, 0.0)]);
    assert!(majorant_apply_with(&p, &Permutation::identity(2), 15, Exec::Sequential).is_err());
}
