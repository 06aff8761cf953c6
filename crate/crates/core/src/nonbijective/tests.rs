use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use proptest::prelude::*;

use super::*;
use crate::gaussian::{ExponentBuilder, GaussianSum};
use crate::observables::{expr, ForcingProfile};
use crate::solver::{solve_grid, SolveConfig};
use crate::transforms::{builtin_forced_oscillator, builtin_repulsive_oscillator, FrameTag, DEFAULT_SEED};

fn repulsive_kernel() -> &'static MKernel {
    static M: OnceLock<MKernel> = OnceLock::new();
    M.get_or_init(|| solve_grid(&builtin_repulsive_oscillator().unwrap(), 1.0, &SolveConfig::default()).unwrap().kernel)
}

fn forced_kernel() -> MKernel {
    builtin_forced_oscillator(PI / 3.0, &ForcingProfile::zero(), 1.0).unwrap().candidates.remove(0)
}

fn samples() -> SampleSet {
    SampleSet::default_set(DEFAULT_SEED).excluding_line(SINGULAR_MIN)
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn even_closed_kernel_has_zero_parity() {
    let b = ExponentBuilder::new(4)
        .product(0, 0, -1.0)
        .product(1, 1, -1.0)
        .product(0, 1, 0.3)
        .product(2, 2, -1.0)
        .product(3, 3, c(-1.0, 0.2))
        .linear(2, 0.5);
    let m = MKernel::closed(1.0, 1, GaussianSum::from_exponent(b.build()), FrameTag::Kernel, "even").unwrap();
    assert!(parity_residual(&m, &samples()).unwrap() <= 1e-12);
}

#[test]
fn solver_kernel_is_even_and_forced_kernel_is_not() {
    assert!(parity_residual(repulsive_kernel(), &samples()).unwrap() <= 1e-6);
    let p = parity_residual(&forced_kernel(), &samples()).unwrap();
    assert!(p > 1e-2, "{p}");
}

#[test]
fn split_routes_by_half_plane() {
    let m = repulsive_kernel();
    let a = CoherentCombination::single(1.0, 1.0, 1.0);
    let b = CoherentCombination::single(1.0, -1.0, -1.0);
    let (ua, ub) = (apply(m, &a).unwrap(), apply(m, &b).unwrap());
    let sa = split_apply(m, &a, TieBreak::Plus).unwrap();
    assert!(sa.plus.sup_diff(&ua) == 0.0 && sa.minus.is_zero());
    let sb = split_apply(m, &b, TieBreak::Plus).unwrap();
    assert!(sb.minus.sup_diff(&ub) == 0.0 && sb.plus.is_zero());
    let sab = split_apply(m, &a.plus(&b), TieBreak::Plus).unwrap();
    assert!(sab.plus.sup_diff(&ua) <= 1e-12 && sab.minus.sup_diff(&ub) <= 1e-12);
    assert!(ua.sup_norm() > 0.0 && ua.rel_diff(&ub) <= 1e-12);
}

#[test]
fn tie_break_is_configurable() {
    let m = forced_kernel();
    let on = CoherentCombination::single(1.0, 0.5, -0.5);
    assert!(split_apply(&m, &on, TieBreak::Plus).unwrap().minus.is_zero());
    assert!(split_apply(&m, &on, TieBreak::Minus).unwrap().plus.is_zero());
}

#[test]
fn mirrored_states_collapse_only_without_splitting() {
    let m = repulsive_kernel();
    let a = CoherentCombination::single(1.0, 1.0, 1.0);
    let b = CoherentCombination::single(1.0, -1.0, -1.0);
    let v = injectivity_check(m, &a, &b, IMAGE_TOL, TieBreak::Plus).unwrap();
    assert!(v.unsplit_equal && !v.split_equal && v.equivalent && !v.labels_equal && v.consistent(), "{v:?}");
    let same = injectivity_check(m, &a, &a.clone(), IMAGE_TOL, TieBreak::Plus).unwrap();
    assert!(same.unsplit_equal && same.split_equal && same.labels_equal && same.consistent());
    let far =
        CoherentCombination::single(1.0, 0.4, 1.2).plus(&CoherentCombination::single(1.0, 1.5, 0.2).scale(c(0.5, 0.5)));
    let v = injectivity_check(m, &a, &far, IMAGE_TOL, TieBreak::Plus).unwrap();
    assert!(!v.split_equal && v.consistent(), "{v:?}");
}

#[test]
fn split_map_separates_a_random_corpus() {
    let m = repulsive_kernel();
    let corpus = random_corpus(1.0, 20, 11);
    for i in 0..corpus.len() {
        for j in i + 1..corpus.len() {
            let v = injectivity_check(m, &corpus[i], &corpus[j], IMAGE_TOL, TieBreak::Plus).unwrap();
            assert!(!v.split_equal && !v.labels_equal && v.consistent(), "{i} {j}: {v:?}");
        }
    }
}

#[test]
fn collapse_is_bounded_by_parity() {
    let (eps, cst) = collapse_constant(&forced_kernel(), &samples()).unwrap();
    assert!(eps > 0.0 && cst <= 1.0 + 1e-12, "{eps} {cst}");
    let (eps, cst) = collapse_constant(repulsive_kernel(), &samples()).unwrap();
    assert!(eps <= 1e-6 && cst.is_finite());
}

#[test]
fn classical_branch_table() {
    for src in ["exp(2*q)", "p"] {
        let f = expr(src).unwrap();
        let plus = classical_branch(&f, &repulsive_map, &PhasePoint::one(1.0, 0.0), SINGULAR_MIN).unwrap();
        assert!(plus.minus == c(0.0, 0.0) && plus.plus == plus.unsplit);
        let minus = classical_branch(&f, &repulsive_map, &PhasePoint::one(-1.0, 0.0), SINGULAR_MIN).unwrap();
        assert!(minus.plus == c(0.0, 0.0) && (minus.minus.norm() - plus.plus.norm()).abs() <= 1e-15);
        assert!(matches!(
            classical_branch(&f, &repulsive_map, &PhasePoint::one(0.0, 0.0), SINGULAR_MIN),
            Err(NonbijectiveError::SingularLine { .. })
        ));
    }
    // exp(2Q) pulled back is (q + p)^2
    let v = classical_branch(&expr("exp(2*q)").unwrap(), &repulsive_map, &PhasePoint::one(-1.5, 0.25), 0.1).unwrap();
    assert!((v.minus - c(1.5625, 0.0)).norm() <= 1e-12);
}

#[test]
fn errors_and_serialization() {
    assert!(matches!(CoherentCombination::new(1.0, vec![]), Err(NonbijectiveError::Unlabeled(_))));
    let m = forced_kernel();
    assert!(matches!(
        apply(&m, &CoherentCombination::single(0.5, 1.0, 0.0)),
        Err(NonbijectiveError::PlanckMismatch { .. })
    ));
    let pair = split_apply(&m, &CoherentCombination::single(1.0, 1.0, 0.5), TieBreak::Plus).unwrap();
    let back: KernelPair = serde_json::from_str(&pair.to_json()).unwrap();
    assert_eq!(back, pair);
    let b = classical_branch(&expr("p").unwrap(), &repulsive_map, &PhasePoint::one(0.3, 0.9), 0.1).unwrap();
    let back: BranchValue = serde_json::from_str(&serde_json::to_string(&b).unwrap()).unwrap();
    assert_eq!(back, b);
}

fn combo() -> impl Strategy<Value = CoherentCombination> {
    prop::collection::vec(((-2.0..2.0f64, -1.5..1.5f64), (-1.0..1.0f64, -1.0..1.0f64)), 1..4).prop_map(|ts| {
        CoherentCombination::new(1.0, ts.into_iter().map(|((q, p), (a, b))| (c(a, b), PhasePoint::one(q, p))).collect())
            .unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn partition_sums_to_unsplit(l in combo()) {
        let m = forced_kernel();
        let pair = split_apply(&m, &l, TieBreak::Plus).unwrap();
        prop_assert!(pair.plus.add(&pair.minus).sup_diff(&apply(&m, &l).unwrap()) <= 1e-12);
    }

    #[test]
    fn split_is_linear(l1 in combo(), l2 in combo(), a in -1.0..1.0f64, b in -1.0..1.0f64) {
        let m = forced_kernel();
        let lhs = split_apply(&m, &l1.scale(c(a, 0.0)).plus(&l2.scale(c(0.0, b))), TieBreak::Plus).unwrap();
        let p1 = split_apply(&m, &l1, TieBreak::Plus).unwrap();
        let p2 = split_apply(&m, &l2, TieBreak::Plus).unwrap();
        for (x, (y, z)) in lhs.plus.values.iter().zip(p1.plus.values.iter().zip(&p2.plus.values)) {
            prop_assert!((x - (y * a + z * c(0.0, b))).norm() <= 1e-12);
        }
        for (x, (y, z)) in lhs.minus.values.iter().zip(p1.minus.values.iter().zip(&p2.minus.values)) {
            prop_assert!((x - (y * a + z * c(0.0, b))).norm() <= 1e-12);
        }
    }
}
