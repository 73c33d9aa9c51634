// Copyright 2026 The kdlab Authors
// SPDX-License-Identifier: Apache-2.0

use std::time::Instant;

use kdlab_core::pairing::{
    chi, decompose_irreducible, double_factorial, enumerate_pairings, is_irreducible, laplace_chi, minimal_irreducible,
    removal_violations, verify_combinatorial_bounds, zeta_weight, ChiMethod, Pairing, Side,
};
use kdlab_core::{Error, C64};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn p(pairs: &[(usize, usize)]) -> Pairing {
    Pairing::new(pairs.to_vec()).unwrap()
}

/// A complete pairing splits iff some prefix `{1, …, k}` is closed under it.
fn splits(pi: &Pairing) -> bool {
    let m = 2 * pi.len();
    (2..m)
        .step_by(2)
        .any(|k| pi.pairs().iter().all(|&(r, s)| (r <= k) == (s <= k)))
}

fn random_pairing(n: usize, rng: &mut ChaCha8Rng) -> Pairing {
    let mut idx: Vec<usize> = (1..=2 * n).collect();
    idx.shuffle(rng);
    p(&idx.chunks(2).map(|c| (c[0], c[1])).collect::<Vec<_>>())
}

fn exp_h(u: f64) -> f64 {
    (-u).exp()
}

#[test]
fn pairing_counts() {
    for n in 1..=6 {
        let all = enumerate_pairings(n).unwrap();
        assert_eq!(all.len(), double_factorial(2 * n - 1));
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert!(all.iter().all(Pairing::is_complete));
    }
    assert_eq!(double_factorial(9), 945);
    assert!(enumerate_pairings(0).is_err());
    assert!(enumerate_pairings(9).is_err());
}

#[test]
fn irreducible_counts_and_brute_force() {
    // 1, 2, 10, 74: first-return decomposition of (2n-1)!!
    let expected = [1, 2, 10, 74];
    for n in 1..=4 {
        let all = enumerate_pairings(n).unwrap();
        for pi in &all {
            assert_eq!(is_irreducible(pi), !splits(pi), "{pi}");
        }
        assert_eq!(all.iter().filter(|pi| is_irreducible(pi)).count(), expected[n - 1]);
    }
}

#[test]
fn pair_construction() {
    assert_eq!(p(&[(4, 2), (1, 3)]).pairs(), &[(1, 3), (2, 4)]);
    assert!(Pairing::new(vec![(0, 1)]).is_err());
    assert!(Pairing::new(vec![(1, 2), (2, 3)]).is_err());
    let partial = p(&[(3, 7), (5, 9)]);
    assert!(!partial.is_complete());
    assert_eq!(partial.canonical(), p(&[(1, 3), (2, 4)]));
    assert_eq!(p(&[(1, 3), (2, 4)]).to_string(), "{(1,3),(2,4)}");
}

#[test]
fn decomposition_examples() {
    let d = decompose_irreducible(&p(&[(1, 2), (3, 5), (4, 6)]));
    assert_eq!(d.components, vec![p(&[(1, 2)]), p(&[(1, 3), (2, 4)])]);
    assert_eq!(d.supports, vec![vec![1, 2], vec![3, 4, 5, 6]]);
    assert_eq!(d.offsets, vec![0, 2]);

    let nested = p(&[(1, 6), (2, 3), (4, 5)]);
    assert_eq!(decompose_irreducible(&nested).components, vec![nested.clone()]);
}

#[test]
fn decompose_and_reassemble_random_pairings() {
    let mut rng = ChaCha8Rng::seed_from_u64(2026);
    for i in 0..1000 {
        let pi = random_pairing(1 + i % 9, &mut rng);
        let d = decompose_irreducible(&pi);
        assert_eq!(d.reassemble(), pi);
        assert!(d.components.iter().all(is_irreducible));
        // components occupy consecutive blocks of the support
        let flat: Vec<usize> = d.supports.concat();
        assert_eq!(flat, pi.support());
        for (s, &o) in d.supports.iter().zip(&d.offsets) {
            assert_eq!(s[0], o + 1);
        }
    }
}

#[test]
fn minimal_irreducible_structure() {
    assert_eq!(minimal_irreducible(1).unwrap(), p(&[(1, 2)]));
    assert_eq!(minimal_irreducible(2).unwrap(), p(&[(1, 3), (2, 4)]));
    assert_eq!(
        minimal_irreducible(5).unwrap(),
        p(&[(1, 3), (2, 5), (4, 7), (6, 9), (8, 10)])
    );
    assert!(minimal_irreducible(0).is_err());
    for n in 1..=6 {
        let m = minimal_irreducible(n).unwrap();
        assert!(m.is_complete() && is_irreducible(&m));
        assert!(removal_violations(&m).is_empty(), "n = {n}");
        // removing an interior pair disconnects the chain
        for i in 1..n.saturating_sub(1) {
            assert!(!is_irreducible(&m.without(i)));
        }
    }
    // a nested pairing is irreducible but its inner pairs can be dropped
    let nested = p(&[(1, 6), (2, 4), (3, 5)]);
    assert_eq!(removal_violations(&nested), vec![1]);
}

#[test]
fn zeta_weight_examples() {
    let psi = |t: f64| C64::new((-t.abs()).exp(), 0.3 * t);
    let pi = p(&[(1, 3), (2, 4)]);
    let times = [0.0, 0.5, 1.5, 2.5];
    let same = vec![vec![0i64]; 4];
    let sides = [Side::Left, Side::Right, Side::Left, Side::Right];
    let w = zeta_weight(&pi, &times, &same, &sides, psi).unwrap();
    let expected = psi(1.5) * psi(-2.0);
    assert!((w - expected).norm() < 1e-15);

    let mut apart = same.clone();
    apart[3] = vec![1];
    assert_eq!(
        zeta_weight(&pi, &times, &apart, &sides, psi).unwrap(),
        C64::new(0.0, 0.0)
    );
    assert!(matches!(
        zeta_weight(&pi, &times[..3], &same, &sides, psi),
        Err(Error::Config(_))
    ));
}

#[test]
fn chi_closed_forms() {
    for t in [0.0, 0.3, 1.0, 2.5] {
        let one = chi(&p(&[(1, 2)]), t, &exp_h, ChiMethod::Quadrature).unwrap();
        assert_eq!(one.value, exp_h(t));

        // ∫_{0≤a≤b≤t} e^{-b} e^{-(t-a)} = e^{-t} (t - 1 + e^{-t})
        let two = chi(&minimal_irreducible(2).unwrap(), t, &exp_h, ChiMethod::Quadrature).unwrap();
        let exact = (-t).exp() * (t - 1.0 + (-t).exp());
        assert!((two.value - exact).abs() <= 1e-12, "t = {t}: {} vs {exact}", two.value);
    }
    // constant h: χ is the simplex volume t^{2n-2} / (2n-2)!
    let one = |_: f64| 1.0;
    let v = chi(&minimal_irreducible(3).unwrap(), 2.0, &one, ChiMethod::Quadrature).unwrap();
    assert!((v.value - 16.0 / 24.0).abs() <= 1e-12);

    assert!(matches!(
        chi(&p(&[(2, 3)]), 1.0, &exp_h, ChiMethod::Quadrature),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        chi(&p(&[(1, 2)]), -1.0, &exp_h, ChiMethod::Quadrature),
        Err(Error::Domain(_))
    ));
}

#[test]
fn quasi_monte_carlo_agrees_with_quadrature() {
    let h = |u: f64| 1.0 / (1.0 + u * u);
    for pi in [minimal_irreducible(3).unwrap(), p(&[(1, 6), (2, 4), (3, 5)])] {
        let q = chi(&pi, 1.5, &h, ChiMethod::Quadrature).unwrap();
        let mc = chi(&pi, 1.5, &h, ChiMethod::QuasiMonteCarlo { points: 4096, seed: 3 }).unwrap();
        assert!(q.error <= 1e-9 * q.value);
        assert!(
            (q.value - mc.value).abs() <= 5.0 * mc.error + 1e-9,
            "{pi}: {q:?} vs {mc:?}"
        );
    }
    let pi = minimal_irreducible(2).unwrap();
    assert!(chi(&pi, 1.0, &h, ChiMethod::QuasiMonteCarlo { points: 0, seed: 1 }).is_err());
}

#[test]
fn laplace_transform_of_chi() {
    // χ for min_2 with h = e^{-u} is e^{-t}(t - 1 + e^{-t})
    for z in [0.0, 0.5, 2.0] {
        let a = 1.0 + z;
        let exact = 1.0 / (a * a) - 1.0 / a + 1.0 / (a + 1.0);
        let got = laplace_chi(&minimal_irreducible(2).unwrap(), z, &exp_h).unwrap();
        assert!(
            (got.value - exact).abs() <= 1e-9 * exact,
            "z = {z}: {} vs {exact}",
            got.value
        );
    }
    let one = laplace_chi(&p(&[(1, 2)]), 0.5, &exp_h).unwrap();
    assert!((one.value - 1.0 / 1.5).abs() <= 1e-9);
}

#[test]
fn combinatorial_bounds_hold() {
    let start = Instant::now();
    let report = verify_combinatorial_bounds(4, &exp_h, 1.0, 0.5).unwrap();
    assert!(report.pass, "{report:?}");
    assert_eq!(report.irreducible_sum.len(), 4);
    assert_eq!(report.laplace.len(), 4);
    assert!((report.h_integral - 1.0).abs() <= 1e-10);
    for row in report.irreducible_sum.iter().chain(&report.laplace) {
        assert!(row.lhs <= row.rhs * (1.0 + 1e-8), "{row:?}");
    }
    assert!(start.elapsed().as_secs() < 60, "{:?}", start.elapsed());

    let slow = |u: f64| 1.0 / (1.0 + u).powi(3);
    assert!(verify_combinatorial_bounds(3, &slow, 2.0, 0.0).unwrap().pass);

    assert!(matches!(
        verify_combinatorial_bounds(0, &exp_h, 1.0, 0.0),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        verify_combinatorial_bounds(5, &exp_h, 1.0, 0.0),
        Err(Error::Config(_))
    ));
    assert!(matches!(
        verify_combinatorial_bounds(2, &exp_h, -1.0, 0.0),
        Err(Error::Config(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonical_form_is_idempotent(n in 1usize..8, seed in any::<u64>(), shift in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pi = random_pairing(n, &mut rng);
        // any increasing relabelling has the same canonical form
        let relabel = |i: usize| 3 * i + shift;
        let moved = p(&pi.pairs().iter().map(|&(r, s)| (relabel(r), relabel(s))).collect::<Vec<_>>());
        let c = moved.canonical();
        prop_assert!(c.is_complete());
        prop_assert_eq!(c.canonical(), c.clone());
        prop_assert_eq!(c, pi.clone());
        prop_assert_eq!(is_irreducible(&pi), !splits(&pi));
    }

    #[test]
    fn chi_is_monotone_in_h(scale in 0.1f64..1.0, t in 0.1f64..3.0) {
        let pi = minimal_irreducible(2).unwrap();
        let big = chi(&pi, t, &exp_h, ChiMethod::Quadrature).unwrap().value;
        let small = chi(&pi, t, &|u: f64| scale * exp_h(u), ChiMethod::Quadrature).unwrap().value;
        prop_assert!(small <= big * (1.0 + 1e-12));
        prop_assert!((small - scale * scale * big).abs() <= 1e-12 * big.max(1e-300));
    }
}
