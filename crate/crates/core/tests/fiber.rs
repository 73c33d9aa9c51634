// Copyright 2026 The kdlab Authors
// SPDX-License-Identifier: Apache-2.0

mod common;

use std::f64::consts::PI;

use common::{kernel_2d, standard_kernel, standard_spec};
use kdlab_core::fiber::{build_M, build_M0_real, build_l_fiber, gibbs_state, symmetrize, GibbsState, RateKernel};
use kdlab_core::reservoir::HalfTransforms;
use kdlab_core::spectral::{leading_eigen, symmetrized_spectrum};
use kdlab_core::torus::{DispersionLaw, TorusGrid};
use kdlab_core::{Error, Execution, C64};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn zero(d: usize) -> Vec<C64> {
    vec![C64::new(0.0, 0.0); d]
}

fn gibbs(k: &RateKernel) -> GibbsState {
    GibbsState::from_energy(&k.field().energy, k.grid().weight(), k.beta()).unwrap()
}

#[test]
fn rate_diagonal_is_psi_at_zero() {
    let k = standard_kernel(32);
    let psi0 = standard_spec().eval(0.0);
    for i in 0..32 {
        assert_eq!(k.rate(i, i), psi0);
    }
}

#[test]
fn rates_are_nonnegative_and_balanced() {
    let k = kernel_2d(8);
    let e = &k.field().energy;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let (i, j) = (rng.random_range(0..k.len()), rng.random_range(0..k.len()));
        assert!(k.rate(i, j) >= 0.0);
        let ratio = k.rate(i, j) / k.rate(j, i);
        let expected = (-(e[j] - e[i])).exp();
        assert!((ratio - expected).abs() <= 1e-13 * expected);
    }
    assert!(k.detailed_balance_residual() <= 1e-13);
    assert!(k.total_rate().iter().all(|&r| r > 0.0));
}

#[test]
fn mass_conservation_on_random_data() {
    let k = standard_kernel(64);
    let m = build_M0_real(&k);
    let w = k.grid().weight();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let theta = DVector::from_fn(64, |_, _| rng.random::<f64>());
        let mass = w * (&m * &theta).sum();
        assert!(mass.abs() <= 1e-13 * theta.norm());
    }
}

#[test]
fn gibbs_state_is_stationary() {
    for k in [standard_kernel(64), kernel_2d(8)] {
        let z = gibbs(&k);
        let out = build_M0_real(&k) * DVector::from_column_slice(&z.values);
        assert!(out.norm() <= 1e-10 * DVector::from_column_slice(&z.values).norm());
    }
}

#[test]
fn tilt_adds_velocity_diagonal() {
    let k = standard_kernel(16);
    let m0 = build_M(&k, &zero(1)).unwrap();
    let m1 = build_M(&k, &[C64::new(1.0, 0.0)]).unwrap();
    let diff = &m1.matrix - &m0.matrix;
    for i in 0..16 {
        for j in 0..16 {
            if i == j {
                let kx = k.grid().point(i)[0];
                let expected = C64::new(0.0, 2.0 * kx.sin());
                assert!((diff[(i, i)] - expected).norm() < 1e-14);
            } else {
                assert_eq!(diff[(i, j)], C64::new(0.0, 0.0));
            }
        }
    }
    assert!(build_M(&k, &zero(2)).is_err());
}

#[test]
fn gibbs_examples() {
    let g = TorusGrid::new(1, 16).unwrap();
    let law = DispersionLaw::cosine(1);
    let hot = gibbs_state(&g, &law, 0.0).unwrap();
    assert!(hot.values.iter().all(|&v| (v - 1.0 / (2.0 * PI)).abs() < 1e-15));

    let z = gibbs_state(&g, &law, 1.0).unwrap();
    // index 8 is k = 0, index 0 is k = -π
    assert!((z.values[8] / z.values[0] - 4f64.exp()).abs() < 1e-12 * 4f64.exp());
    assert!((z.mass(g.weight()) - 1.0).abs() < 1e-14);
    for i in 0..16 {
        assert_eq!(z.values[i], z.values[g.negate(i)]);
        assert!(z.values[i] > 0.0);
    }

    let g3 = TorusGrid::new(3, 4).unwrap();
    let hot3 = gibbs_state(&g3, &DispersionLaw::cosine(3), 0.0).unwrap();
    assert!(hot3.values.iter().all(|&v| (v - (2.0 * PI).powi(-3)).abs() < 1e-15));
    assert!(gibbs_state(&g, &law, -1.0).is_err());
}

#[test]
fn symmetrized_operator() {
    let k = kernel_2d(8);
    let m0 = build_M(&k, &zero(2)).unwrap();
    let w = k.grid().weight();
    let s = symmetrize(&m0, &k.field().energy, k.beta(), w).unwrap();
    assert!(s.asymmetry() <= 1e-12);
    let out = &s.matrix * DVector::from_column_slice(&s.zeta);
    assert!(out.norm() <= 1e-10);
    assert!((w * s.zeta.iter().map(|v| v * v).sum::<f64>() - 1.0).abs() < 1e-13);

    // infinite temperature: W is the identity
    let flat = symmetrize(&m0, &k.field().energy, 0.0, w).unwrap();
    assert_eq!(flat.matrix, m0.real_part());

    let tilted = build_M(&k, &[C64::new(0.1, 0.0), C64::new(0.0, 0.0)]).unwrap();
    assert!(symmetrize(&tilted, &k.field().energy, 1.0, w).is_err());
}

#[test]
fn spectrum_is_nonpositive_with_simple_zero() {
    for k in [standard_kernel(32), kernel_2d(8)] {
        let spec = symmetrized_spectrum(&k).unwrap();
        let n = spec.len();
        assert!(spec.iter().all(|&v| v <= 1e-12));
        assert!(spec[n - 1].abs() <= 1e-12);
        assert!(spec[n - 2] < -1e-3);
    }
}

#[test]
fn projector_structure() {
    let k = kernel_2d(8);
    let data = leading_eigen(&build_M(&k, &zero(2)).unwrap()).unwrap();
    let p = data.projector();
    assert!((&p * &p - &p).norm() <= 1e-12 * p.norm());

    // P θ = ⟨1, θ⟩ ζ
    let z = gibbs(&k);
    let w = k.grid().weight();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let theta = DVector::from_fn(k.len(), |_, _| C64::new(rng.random::<f64>(), 0.0));
    let mass = w * theta.iter().map(|c| c.re).sum::<f64>();
    let got = &p * &theta;
    for i in 0..k.len() {
        assert!((got[i] - C64::new(mass * z.values[i], 0.0)).norm() <= 1e-12 * z.values[i].max(1.0));
    }

    // first-order vanishing along both axes
    for a in 0..2 {
        let v = DMatrix::from_diagonal(&DVector::from_iterator(
            k.len(),
            k.field().gradient[a].iter().map(|&g| C64::new(g, 0.0)),
        ));
        assert!((&p * v * &p).norm() <= 1e-12);
    }
}

#[test]
fn one_loop_kernel() {
    let k = standard_kernel(16);
    let spec = standard_spec();
    let ht = HalfTransforms::certified(&spec).unwrap();
    let w = k.grid().weight();

    let l0 = build_l_fiber(
        k.grid(),
        k.law(),
        &ht,
        C64::new(0.0, 0.0),
        &zero(1),
        Execution::Parallel,
    )
    .unwrap();
    let m0 = build_M(&k, &zero(1)).unwrap();
    assert!((&l0.matrix - &m0.matrix).norm() <= 1e-8);

    // mass conservation at p = 0 for real z > 0
    for z in [0.3, 1.0, 4.0] {
        let l = build_l_fiber(k.grid(), k.law(), &ht, C64::new(z, 0.0), &zero(1), Execution::Parallel).unwrap();
        for j in 0..16 {
            let col: C64 = (0..16).map(|i| l.matrix[(i, j)]).sum::<C64>() * w;
            assert!(col.norm() <= 1e-10, "z = {z}, column {j}: {col}");
        }
    }

    // sequential and parallel construction agree bit for bit
    let p = [C64::new(0.4, 0.0)];
    let a = build_l_fiber(k.grid(), k.law(), &ht, C64::new(0.5, 0.2), &p, Execution::Parallel).unwrap();
    let b = build_l_fiber(k.grid(), k.law(), &ht, C64::new(0.5, 0.2), &p, Execution::Sequential).unwrap();
    assert_eq!(a.matrix, b.matrix);

    // outside the certified strip
    let bad = C64::new(-ht.decay_rate(), 0.0);
    assert!(matches!(
        build_l_fiber(k.grid(), k.law(), &ht, bad, &zero(1), Execution::Parallel),
        Err(Error::Domain(_))
    ));
}

#[test]
fn sequential_and_parallel_kernels_agree() {
    let g = TorusGrid::new(2, 8).unwrap();
    let law = DispersionLaw::cosine(2);
    let spec = standard_spec();
    let a = RateKernel::new(&g, &law, &spec, Execution::Parallel).unwrap();
    let b = RateKernel::new(&g, &law, &spec, Execution::Sequential).unwrap();
    for i in 0..g.len() {
        assert_eq!(a.row(i), b.row(i));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn scaled_kernels_keep_balance(s in 0.1f64..10.0) {
        let k = standard_kernel(16).scaled(s);
        prop_assert!(k.detailed_balance_residual() <= 1e-13);
        let m = build_M0_real(&k);
        let z = gibbs(&k);
        let out = &m * DVector::from_column_slice(&z.values);
        prop_assert!(out.norm() <= 1e-10 * s.max(1.0));
    }

    #[test]
    fn complex_tilt_keeps_conjugation_symmetry(re in -0.5f64..0.5, im in -0.3f64..0.3) {
        // conj(M^κ) = M^{-conj κ}
        let k = standard_kernel(16);
        let a = build_M(&k, &[C64::new(re, im)]).unwrap();
        let b = build_M(&k, &[C64::new(-re, im)]).unwrap();
        prop_assert!((a.matrix.map(|z| z.conj()) - b.matrix).norm() < 1e-14);
    }
}
