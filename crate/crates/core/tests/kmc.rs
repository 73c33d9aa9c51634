// Copyright 2026 The kdlab Authors
// SPDX-License-Identifier: Apache-2.0

#![allow(clippy::needless_range_loop)]

mod common;

use common::standard_kernel;
use kdlab_core::fiber::{GibbsState, RateKernel};
use kdlab_core::kmc::{
    ensemble_stats, fit_exponential, sample_trajectory, sample_with, EnsembleConfig, InitialState, JumpSampler,
    VacfConfig,
};
use kdlab_core::spectral::{exact_vacf, spectral_gap};
use kdlab_core::torus::{DispersionLaw, TorusGrid};
use kdlab_core::{Error, Execution};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn config(n_traj: usize, t_max: f64, init: InitialState) -> EnsembleConfig {
    EnsembleConfig {
        n_traj,
        t_max,
        sample_times: EnsembleConfig::uniform_times(t_max, 10),
        init,
        seed: 7,
        batches: 10,
        vacf: None,
    }
}

fn gibbs_probabilities(k: &RateKernel) -> Vec<f64> {
    let w = k.grid().weight();
    let g = GibbsState::from_energy(&k.field().energy, w, k.beta()).unwrap();
    g.values.iter().map(|v| v * w).collect()
}

#[test]
fn ballistic_motion_without_rates() {
    let grid = TorusGrid::new(1, 16).unwrap();
    let k = RateKernel::from_rates(&grid, &DispersionLaw::cosine(1), 1.0, vec![0.0; 256]).unwrap();
    let sampler = JumpSampler::new(&k).unwrap();
    let traj = sampler_trajectory(&sampler, 12, 5.0);
    assert_eq!(traj.jumps, vec![(0.0, 12)]);
    let v = sampler.velocity(12)[0];
    for t in [0.0, 1.0, 3.5, 5.0] {
        assert!((traj.position(t, &sampler)[0] - v * t).abs() <= 1e-15 * t.max(1.0));
    }

    let stats = ensemble_stats(&k, &config(200, 4.0, InitialState::Index(12)), Execution::Parallel).unwrap();
    for (i, &t) in stats.sample_times.iter().enumerate() {
        assert!((stats.msd[i][0] - v * v * t * t).abs() <= 1e-12 * v * v * t * t);
        assert_eq!(stats.histogram[i][12], 1.0);
    }
}

fn sampler_trajectory(s: &JumpSampler, i: usize, t_max: f64) -> kdlab_core::kmc::Trajectory {
    sample_with(s, InitialState::Index(i), t_max, 1, 0).unwrap()
}

#[test]
fn holding_times_are_exponential() {
    let k = standard_kernel(32);
    let s = JumpSampler::new(&k).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let n = 10_000;
    for state in [0, 9, 16] {
        let rate = k.total_rate()[state];
        let mean = (0..n).map(|_| s.holding_time(state, &mut rng)).sum::<f64>() / n as f64;
        let sd = 1.0 / (rate * (n as f64).sqrt());
        assert!(
            (mean - 1.0 / rate).abs() <= 3.0 * sd,
            "state {state}: {mean} vs {}",
            1.0 / rate
        );
    }
}

#[test]
fn jump_targets_follow_the_generator() {
    let k = standard_kernel(32);
    let s = JumpSampler::new(&k).unwrap();
    let w = k.grid().weight();
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let n = 100_000;
    for state in [0, 16, 23] {
        let mut counts = vec![0usize; 32];
        for _ in 0..n {
            counts[s.jump(state, &mut rng)] += 1;
        }
        // Pearson χ² over cells with enough expected mass; the rest are pooled
        let (mut chi2, mut cells) = (0.0, 0usize);
        let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
        for j in 0..32 {
            let expected = n as f64 * w * k.rate(state, j) / k.total_rate()[state];
            if expected >= 5.0 {
                chi2 += (counts[j] as f64 - expected).powi(2) / expected;
                cells += 1;
            } else {
                pooled_obs += counts[j] as f64;
                pooled_exp += expected;
            }
        }
        if pooled_exp >= 5.0 {
            chi2 += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
            cells += 1;
        }
        let dof = (cells - 1) as f64;
        // mean + 5 standard deviations of the χ² law
        assert!(
            chi2 <= dof + 5.0 * (2.0 * dof).sqrt(),
            "state {state}: χ² = {chi2} with {dof} dof"
        );
    }
}

#[test]
fn runs_are_deterministic() {
    let k = standard_kernel(32);
    let a = sample_trajectory(&k, InitialState::Gibbs, 30.0, 5).unwrap();
    let b = sample_trajectory(&k, InitialState::Gibbs, 30.0, 5).unwrap();
    assert_eq!(a.jumps, b.jumps);
    assert_eq!(a.positions, b.positions);
    let c = sample_trajectory(&k, InitialState::Gibbs, 30.0, 6).unwrap();
    assert_ne!(a.jumps, c.jumps);

    let mut cfg = config(2_000, 20.0, InitialState::Gibbs);
    cfg.vacf = Some(VacfConfig {
        lag_step: 0.05,
        max_lag: 4.0,
        origin_spacing: 5.0,
    });
    let par = ensemble_stats(&k, &cfg, Execution::Parallel).unwrap();
    let seq = ensemble_stats(&k, &cfg, Execution::Sequential).unwrap();
    assert_eq!(par.msd, seq.msd);
    assert_eq!(par.msd_se, seq.msd_se);
    assert_eq!(par.histogram, seq.histogram);
    assert_eq!(par.vacf, seq.vacf);
    assert_eq!(
        serde_json::to_string(&par).unwrap(),
        serde_json::to_string(&seq).unwrap()
    );
}

#[test]
fn stationary_ensemble_has_no_drift() {
    let k = standard_kernel(32);
    // fifty batches, so the standard error itself is well determined
    let cfg = EnsembleConfig {
        batches: 50,
        ..config(20_000, 20.0, InitialState::Gibbs)
    };
    let stats = ensemble_stats(&k, &cfg, Execution::Parallel).unwrap();
    for i in 0..stats.sample_times.len() {
        let (m, se) = (stats.mean_displacement[i][0], stats.mean_displacement_se[i][0]);
        assert!(m.abs() <= 4.0 * se, "t = {}: ⟨x⟩ = {m} ± {se}", stats.sample_times[i]);
        assert!((stats.histogram[i].iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
    let traj = sample_trajectory(&k, InitialState::Gibbs, 5.0, 3).unwrap();
    assert_eq!(traj.position(0.0, &JumpSampler::new(&k).unwrap()), vec![0.0]);
}

#[test]
fn sampled_vacf_matches_semigroup() {
    let k = standard_kernel(64);
    let g = spectral_gap(&k).unwrap();
    let mut cfg = config(20_000, 40.0, InitialState::Gibbs);
    cfg.vacf = Some(VacfConfig {
        lag_step: 0.02,
        max_lag: 4.0,
        origin_spacing: 5.0,
    });
    let stats = ensemble_stats(&k, &cfg, Execution::Parallel).unwrap();
    let exact = exact_vacf(&k, &stats.vacf_lags).unwrap();
    let mut worst: f64 = 0.0;
    for (l, row) in exact.iter().enumerate() {
        let z = (stats.vacf[l][0] - row[0]) / stats.vacf_se[l][0];
        worst = worst.max(z.abs());
    }
    // two hundred correlated lags: a 4.5σ envelope
    assert!(worst <= 4.5, "largest deviation {worst:.2}σ");

    // C(0) = ⟨v²⟩ under the Gibbs state
    let v2: Vec<f64> = k.field().gradient[0].iter().map(|v| v * v).collect();
    let p = gibbs_probabilities(&k);
    let mean_v2: f64 = v2.iter().zip(&p).map(|(a, b)| a * b).sum();
    assert!((stats.vacf[0][0] - mean_v2).abs() <= 3.0 * stats.vacf_se[0][0]);

    let floor: Vec<f64> = stats.vacf_se.iter().map(|s| 2.0 * s[0]).collect();
    let values: Vec<f64> = stats.vacf.iter().map(|r| r[0]).collect();
    let fit = fit_exponential(&stats.vacf_lags, &values, &floor, 0.5 / g, 2.0 / g).unwrap();
    assert!(fit.rate >= 0.9 * g, "fitted rate {} vs gap {g}", fit.rate);
}

#[test]
fn relaxation_toward_gibbs() {
    let k = standard_kernel(64);
    let p = gibbs_probabilities(&k);
    for start in [0, 16, 32] {
        let mut cfg = config(20_000, 1.5, InitialState::Index(start));
        cfg.sample_times = vec![0.1, 0.4, 1.5];
        let stats = ensemble_stats(&k, &cfg, Execution::Parallel).unwrap();
        let tv: Vec<f64> = (0..3).map(|i| stats.total_variation(i, &p)).collect();
        assert!(tv[0] > tv[1] && tv[1] > tv[2], "start {start}: {tv:?}");
    }
}

#[test]
fn invalid_configurations() {
    let k = standard_kernel(16);
    let base = config(200, 10.0, InitialState::Gibbs);
    let check = |cfg: EnsembleConfig| {
        assert!(
            matches!(ensemble_stats(&k, &cfg, Execution::Sequential), Err(Error::Config(_))),
            "{cfg:?}"
        );
    };
    check(EnsembleConfig {
        n_traj: 50,
        ..base.clone()
    });
    check(EnsembleConfig {
        batches: 1,
        ..base.clone()
    });
    check(EnsembleConfig {
        t_max: -1.0,
        ..base.clone()
    });
    check(EnsembleConfig {
        sample_times: vec![2.0, 1.0],
        ..base.clone()
    });
    check(EnsembleConfig {
        sample_times: vec![11.0],
        ..base.clone()
    });
    check(EnsembleConfig {
        init: InitialState::Index(16),
        ..base.clone()
    });
    check(EnsembleConfig {
        vacf: Some(VacfConfig {
            lag_step: 0.1,
            max_lag: 20.0,
            origin_spacing: 1.0,
        }),
        ..base.clone()
    });
    assert!(matches!(
        sample_trajectory(&k, InitialState::Gibbs, f64::INFINITY, 1),
        Err(Error::Config(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn histograms_are_distributions(seed in any::<u64>(), start in 0usize..16) {
        let k = standard_kernel(16);
        let mut cfg = config(200, 3.0, InitialState::Index(start));
        cfg.seed = seed;
        let stats = ensemble_stats(&k, &cfg, Execution::Sequential).unwrap();
        for h in &stats.histogram {
            prop_assert!(h.iter().all(|&v| v >= 0.0));
            prop_assert!((h.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        for m in &stats.msd {
            prop_assert!(m[0] >= 0.0);
        }
    }
}
