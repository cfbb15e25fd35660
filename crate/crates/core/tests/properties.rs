use etherstar_core::kernel::flat_phase;
use etherstar_core::starprod::{moyal_poly, PolySymbol};
use etherstar_core::Point;
use num_complex::Complex64;
use proptest::prelude::*;

fn poly_strategy() -> impl Strategy<Value = PolySymbol> {
    prop::collection::vec(((0u32..3, 0u32..3), -2.0f64..2.0, -1.0f64..1.0), 1..5).prop_map(|terms| {
        let mut p = PolySymbol::zero(2);
        for ((a, b), re, im) in terms {
            p.add_term(vec![a, b], Complex64::new(re, im));
        }
        p
    })
}

fn point() -> impl Strategy<Value = Point> {
    (-3.0f64..3.0, -3.0f64..3.0).prop_map(|(q, p)| Point::from_slice(&[q, p]))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn moyal_product_is_associative(f in poly_strategy(), g in poly_strategy(), h in poly_strategy(), hbar in 0.01f64..1.0) {
        let left = moyal_poly(&moyal_poly(&f, &g, hbar).unwrap(), &h, hbar).unwrap();
        let right = moyal_poly(&f, &moyal_poly(&g, &h, hbar).unwrap(), hbar).unwrap();
        prop_assert!(left.sub(&right).max_coefficient() < 1e-10);
    }

    #[test]
    fn moyal_conjugation_reverses_order(f in poly_strategy(), g in poly_strategy(), hbar in 0.01f64..1.0) {
        let lhs = moyal_poly(&f, &g, hbar).unwrap().conj();
        let rhs = moyal_poly(&g.conj(), &f.conj(), hbar).unwrap();
        prop_assert!(lhs.sub(&rhs).max_coefficient() < 1e-12);
    }

    #[test]
    fn flat_phase_is_alternating(x in point(), y in point(), z in point()) {
        let p = flat_phase(&x, &y, &z);
        prop_assert!((p + flat_phase(&y, &x, &z)).abs() < 1e-12);
        prop_assert!((p - flat_phase(&y, &z, &x)).abs() < 1e-12);
    }
}
