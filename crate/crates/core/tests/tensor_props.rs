use proptest::prelude::*;
use qcr_core::instrument::{sic_projectors, CPMap};
use qcr_core::random::{ginibre, haar_unitary, random_density, rng};
use qcr_core::tensor::{
    frame_coefficients, frame_solve, kron, partial_trace, permute_factors, span_rank, ComplexMatrix, Factor, Role,
    SpaceLayout, ZERO,
};

fn layout(dims: &[usize]) -> SpaceLayout {
    SpaceLayout::new(dims.iter().enumerate().map(|(k, &d)| Factor::new(format!("f{k}"), d, Role::In)).collect()).unwrap()
}

/// Index-by-index reference for tracing out the middle of three factors.
fn trace_middle(m: &ComplexMatrix, (a, b, c): (usize, usize, usize)) -> ComplexMatrix {
    ComplexMatrix::from_fn(a * c, a * c, |r, s| {
        let (i, k) = (r / c, r % c);
        let (i2, k2) = (s / c, s % c);
        let mut acc = ZERO;
        for j in 0..b {
            acc += m[((i * b + j) * c + k, (i2 * b + j) * c + k2)];
        }
        acc
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kron_is_associative(seed in any::<u64>(), a in 1usize..4, b in 1usize..4, c in 1usize..4) {
        let mut r = rng(seed);
        let (x, y, z) = (ginibre(a, a, &mut r), ginibre(b, b, &mut r), ginibre(c, c, &mut r));
        let left = kron(&kron(&x, &y), &z);
        let right = kron(&x, &kron(&y, &z));
        prop_assert!(left.max_abs_diff(&right) < 1e-12);
    }

    #[test]
    fn trace_is_multiplicative(seed in any::<u64>(), a in 1usize..5, b in 1usize..5) {
        let mut r = rng(seed);
        let (x, y) = (ginibre(a, a, &mut r), ginibre(b, b, &mut r));
        prop_assert!((kron(&x, &y).trace() - x.trace() * y.trace()).norm() < 1e-10);
    }

    #[test]
    fn partial_trace_of_product(seed in any::<u64>(), a in 1usize..4, b in 1usize..4) {
        let mut r = rng(seed);
        let (x, y) = (ginibre(a, a, &mut r), ginibre(b, b, &mut r));
        let l = layout(&[a, b]);
        let (tb, lb) = partial_trace(&kron(&x, &y), &l, &["f1"]).unwrap();
        prop_assert_eq!(lb.factors()[0].label.as_str(), "f0");
        prop_assert!(tb.max_abs_diff(&x.scale(y.trace())) < 1e-10);
        let (ta, _) = partial_trace(&kron(&x, &y), &l, &["f0"]).unwrap();
        prop_assert!(ta.max_abs_diff(&y.scale(x.trace())) < 1e-10);
    }

    #[test]
    fn partial_trace_matches_index_reference(seed in any::<u64>(), a in 1usize..4, b in 1usize..4, c in 1usize..4) {
        let m = ginibre(a * b * c, a * b * c, &mut rng(seed));
        let (t, _) = partial_trace(&m, &layout(&[a, b, c]), &["f1"]).unwrap();
        prop_assert!(t.max_abs_diff(&trace_middle(&m, (a, b, c))) < 1e-12);
    }

    #[test]
    fn permutation_swaps_kron(seed in any::<u64>(), a in 1usize..4, b in 1usize..4) {
        let mut r = rng(seed);
        let (x, y) = (ginibre(a, a, &mut r), ginibre(b, b, &mut r));
        let (p, lp) = permute_factors(&kron(&x, &y), &layout(&[a, b]), &["f1", "f0"]).unwrap();
        prop_assert!(p.max_abs_diff(&kron(&y, &x)) < 1e-15);
        let (back, _) = permute_factors(&p, &lp, &["f0", "f1"]).unwrap();
        prop_assert!(back.max_abs_diff(&kron(&x, &y)) < 1e-15);
    }

    #[test]
    fn sic_frame_recovers_states(seed in any::<u64>(), d in 2usize..4) {
        let rho = random_density(d, &mut rng(seed));
        let frame = sic_projectors(d).unwrap();
        let probs = frame_coefficients(&frame, &rho);
        let sol = frame_solve(&frame, &probs).unwrap();
        prop_assert!(sol.is_full_rank());
        prop_assert!(sol.solution.max_abs_diff(&rho) < 1e-10);
    }

    #[test]
    fn choi_reproduces_kraus_action(seed in any::<u64>(), din in 1usize..4, dout in 1usize..4) {
        let mut r = rng(seed);
        let u = haar_unitary(din * dout, &mut r);
        // Kraus operators from the first din columns of a unitary on dout blocks.
        let kraus: Vec<ComplexMatrix> = (0..din)
            .map(|k| ComplexMatrix::from_fn(dout, din, |i, j| u[(k * dout + i, j)]))
            .collect();
        let map = CPMap::new(kraus).unwrap();
        let rho = random_density(din, &mut r);
        let via_choi = map.choi().apply(&rho).unwrap();
        prop_assert!(via_choi.max_abs_diff(&map.map(&rho).unwrap()) < 1e-12);
    }
}

#[test]
fn three_sic_elements_do_not_span() {
    let frame = sic_projectors(2).unwrap();
    assert_eq!(span_rank(&frame[..3]).unwrap(), 3);
    let rho = random_density(2, &mut rng(1));
    let sol = frame_solve(&frame[..3], &frame_coefficients(&frame[..3], &rho)).unwrap();
    assert_eq!((sol.rank, sol.required_rank), (3, 4));
    // Consistent equations are still solved exactly; the missing direction is what is lost.
    assert!(sol.residual < 1e-12);
    assert!(sol.solution.max_abs_diff(&rho) > 1e-6);
}
