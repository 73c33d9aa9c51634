// Copyright 2026 The kdlab Authors
// SPDX-License-Identifier: Apache-2.0

mod common;

use std::f64::consts::PI;

use common::{kernel_2d, rel, standard_kernel};
use kdlab_core::fiber::{build_M, GibbsState};
use kdlab_core::spectral::{
    diffusion_hessian, diffusion_resolvent, evolve_fiber, exact_vacf, leading_eigen, leading_eigen_with, spectral_gap,
    CltSolver, EigenMethod, EvolveMethod, DEFAULT_HESSIAN_STEP,
};
use kdlab_core::{Error, Execution, C64};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[test]
fn untilted_eigentriple() {
    let k = standard_kernel(64);
    let data = leading_eigen(&build_M(&k, &[c(0.0, 0.0)]).unwrap()).unwrap();
    assert!(data.f.norm() <= 1e-12);
    let z = GibbsState::from_energy(&k.field().energy, k.grid().weight(), 1.0).unwrap();
    for i in 0..64 {
        assert!((data.right[i] - c(z.values[i], 0.0)).norm() <= 1e-10 * z.values[i].max(1e-3));
        assert!((data.left[i] - c(1.0, 0.0)).norm() <= 1e-10);
    }
    assert!(data.gap > 0.0);
}

#[test]
fn tilted_projector_is_spectral() {
    let k = kernel_2d(8);
    let m = build_M(&k, &[c(0.2, 0.05), c(-0.1, 0.0)]).unwrap();
    let data = leading_eigen(&m).unwrap();
    let p = data.projector();
    assert!((&p * &p - &p).norm() <= 1e-10 * p.norm());
    assert!((&m.matrix * &p - &p * data.f).norm() <= 1e-10 * p.norm());
}

#[test]
fn real_tilt_gives_negative_real_part() {
    let k = standard_kernel(32);
    for kappa in [0.05, 0.2, -0.4] {
        let f = leading_eigen(&build_M(&k, &[c(kappa, 0.0)]).unwrap()).unwrap().f;
        assert!(f.re < 0.0, "κ = {kappa}: {f}");
    }
}

#[test]
fn eigenvalue_is_analytic_on_a_circle() {
    // mean over a circle of radius r around 0 recovers f(0) = 0
    let k = standard_kernel(32);
    let r = 0.1;
    let points = 32;
    let mean: C64 = (0..points)
        .map(|j| {
            let a = 2.0 * PI * j as f64 / points as f64;
            let kappa = c(r * a.cos(), r * a.sin());
            leading_eigen(&build_M(&k, &[kappa]).unwrap()).unwrap().f
        })
        .sum::<C64>()
        / points as f64;
    assert!(mean.norm() <= 1e-8, "{mean}");
}

#[test]
fn power_path_matches_dense() {
    let k = standard_kernel(64);
    let m = build_M(&k, &[c(0.15, 0.0)]).unwrap();
    let dense = leading_eigen_with(&m, EigenMethod::Dense).unwrap();
    let power = leading_eigen_with(&m, EigenMethod::Power).unwrap();
    assert!((dense.f - power.f).norm() <= 1e-9);
    assert!(rel(dense.gap, power.gap) <= 1e-3);
}

#[test]
fn diffusion_routes_agree() {
    let k = standard_kernel(64);
    let h = diffusion_hessian(&k, DEFAULT_HESSIAN_STEP, Execution::Parallel).unwrap();
    let r = diffusion_resolvent(&k).unwrap();
    assert!(rel(h.get(0, 0), r.get(0, 0)) <= 1e-6);
    assert!(h.is_positive_definite() && r.is_positive_definite());

    // two dimensions: isotropic, symmetric, positive
    let k2 = kernel_2d(8);
    let h2 = diffusion_hessian(&k2, DEFAULT_HESSIAN_STEP, Execution::Sequential).unwrap();
    let r2 = diffusion_resolvent(&k2).unwrap();
    assert!(h2.relative_difference(&r2) <= 1e-6);
    assert!((r2.get(0, 1) - r2.get(1, 0)).abs() <= 1e-14);
    assert!(rel(r2.get(0, 0), r2.get(1, 1)) <= 1e-12);
    assert!(r2.get(0, 1).abs() <= 1e-10 * r2.get(0, 0));
    assert!(r2.eigenvalues().iter().all(|&v| v > 0.0));
}

#[test]
fn hessian_tracks_scaled_rates() {
    let k = standard_kernel(32).scaled(2.0);
    let h = diffusion_hessian(&k, DEFAULT_HESSIAN_STEP, Execution::Parallel).unwrap();
    let r = diffusion_resolvent(&k).unwrap();
    assert!(rel(h.get(0, 0), r.get(0, 0)) <= 1e-6);
    // doubling every rate halves the free path
    let base = diffusion_resolvent(&standard_kernel(32)).unwrap();
    assert!(rel(r.get(0, 0), 0.5 * base.get(0, 0)) <= 1e-12);
}

#[test]
fn evolution_identities() {
    let k = standard_kernel(32);
    let m = build_M(&k, &[c(0.3, 0.0)]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let theta: Vec<C64> = (0..32).map(|_| c(rng.random(), rng.random())).collect();

    assert_eq!(evolve_fiber(&m, &theta, 0.0, EvolveMethod::Dense).unwrap(), theta);

    let s = evolve_fiber(&m, &theta, 0.7, EvolveMethod::Dense).unwrap();
    let st = evolve_fiber(&m, &s, 1.3, EvolveMethod::Dense).unwrap();
    let direct = evolve_fiber(&m, &theta, 2.0, EvolveMethod::Dense).unwrap();
    let diff: Vec<C64> = st.iter().zip(&direct).map(|(a, b)| a - b).collect();
    assert!(norm(&diff) <= 1e-9 * norm(&direct));

    let taylor = evolve_fiber(&m, &theta, 2.0, EvolveMethod::Taylor).unwrap();
    let diff: Vec<C64> = taylor.iter().zip(&direct).map(|(a, b)| a - b).collect();
    assert!(norm(&diff) <= 1e-8 * norm(&direct));

    assert!(matches!(
        evolve_fiber(&m, &theta, -1.0, EvolveMethod::Dense),
        Err(Error::Domain(_))
    ));
}

#[test]
fn relaxation_rate_matches_gap() {
    let k = standard_kernel(32);
    let gap = spectral_gap(&k).unwrap();
    let m = build_M(&k, &[c(0.0, 0.0)]).unwrap();
    let w = k.grid().weight();
    let z = GibbsState::from_energy(&k.field().energy, w, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let theta: Vec<C64> = (0..32).map(|_| c(rng.random(), 0.0)).collect();
    let mass = w * theta.iter().map(|v| v.re).sum::<f64>();
    let distance = |t: f64| {
        let v = evolve_fiber(&m, &theta, t, EvolveMethod::Dense).unwrap();
        v.iter()
            .zip(&z.values)
            .map(|(a, b)| (a - c(mass * b, 0.0)).norm_sqr())
            .sum::<f64>()
            .sqrt()
    };
    for t in [4.0, 5.0, 6.0] {
        let ratio = distance(t) / distance(t - 1.0);
        assert!(
            ratio <= (-0.9 * gap).exp(),
            "t = {t}: ratio {ratio}, bound {}",
            (-0.9 * gap).exp()
        );
    }
}

#[test]
fn clt_identities() {
    let k = standard_kernel(32);
    let solver = CltSolver::new(&k, EvolveMethod::Dense).unwrap();
    let (lhs, rhs) = solver.check(&[0.0], 50.0).unwrap();
    assert!((lhs - c(1.0, 0.0)).norm() <= 1e-12);
    assert_eq!(rhs, 1.0);

    let (plus, _) = solver.check(&[0.8], 100.0).unwrap();
    let (minus, _) = solver.check(&[-0.8], 100.0).unwrap();
    assert!((plus - minus.conj()).norm() <= 1e-12);

    let t: f64 = 4.0;
    let q = 1.1 * solver.radius() * t.sqrt();
    assert!(matches!(solver.check(&[q], t), Err(Error::Domain(_))));
    assert!(matches!(solver.check(&[0.1], 0.0), Err(Error::Domain(_))));

    let taylor = CltSolver::new(&k, EvolveMethod::Taylor).unwrap();
    let (a, _) = solver.check(&[1.0], 100.0).unwrap();
    let (b, _) = taylor.check(&[1.0], 100.0).unwrap();
    assert!((a - b).norm() <= 1e-8);
}

#[test]
fn vacf_at_zero_is_velocity_variance() {
    let k = kernel_2d(8);
    let w = k.grid().weight();
    let z = GibbsState::from_energy(&k.field().energy, w, 1.0).unwrap();
    let c0 = &exact_vacf(&k, &[0.0]).unwrap()[0];
    for a in 0..2 {
        let v2: Vec<f64> = k.field().gradient[a].iter().map(|g| g * g).collect();
        assert!(rel(c0[a * 2 + a], z.average(&v2, w)) <= 1e-12);
    }
    assert!(c0[1].abs() <= 1e-12);
}

#[test]
fn green_kubo_of_exact_vacf_is_resolvent_value() {
    let k = standard_kernel(64);
    let step = 0.005;
    let lags: Vec<f64> = (0..=4000).map(|i| i as f64 * step).collect();
    let cv: Vec<f64> = exact_vacf(&k, &lags).unwrap().iter().map(|r| r[0]).collect();
    // composite Simpson, independent of the library quadrature
    let integral = step / 3.0
        * cv.iter()
            .enumerate()
            .map(|(i, v)| {
                let w = if i == 0 || i == cv.len() - 1 {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * v
            })
            .sum::<f64>();
    let d = diffusion_resolvent(&k).unwrap().get(0, 0);
    // ∫_R C = 2 ∫_0^∞ C for the stationary, reversible chain
    assert!(rel(2.0 * integral, d) <= 1e-5, "{} vs {d}", 2.0 * integral);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn eigenvalue_conjugation(re in -0.3f64..0.3, im in -0.2f64..0.2) {
        let k = standard_kernel(16);
        let f = leading_eigen(&build_M(&k, &[c(re, im)]).unwrap()).unwrap().f;
        let g = leading_eigen(&build_M(&k, &[c(-re, im)]).unwrap()).unwrap().f;
        prop_assert!((f.conj() - g).norm() <= 1e-10);
    }
}
