// Copyright 2026 The kdlab Authors
// SPDX-License-Identifier: Apache-2.0

use std::sync::Arc;

use clap::ValueEnum;
use kdlab_core::fiber::{build_M, build_M0_real, symmetrize, GibbsState, RateKernel};
use kdlab_core::kmc::{ensemble_stats, green_kubo, msd_slope, EnsembleConfig, InitialState, VacfConfig};
use kdlab_core::pairing::{double_factorial, enumerate_pairings, is_irreducible, verify_combinatorial_bounds};
use kdlab_core::reservoir::{
    certify_decay, correlation_function, effective_density_from_form_factor, HalfTransforms, OhmicGaussian, RadialFn,
    SpectralDensity, TabulatedDensity,
};
use kdlab_core::spectral::{
    diffusion_hessian, diffusion_resolvent, leading_eigen, spectral_gap, symmetrized_spectrum, CltSolver,
    DiffusionTensor,
};
use kdlab_core::torus::{analyticity_constants, TorusGrid};
use kdlab_core::{Execution, C64};
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::config::{Omega, PairingH, Profile, ReservoirFamily, RunConfig};
use crate::output::{Cell, Table};
use crate::RunError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Build M⁰ and M^κ and check their algebraic invariants.
    Operator,
    /// Leading eigenvalue and gap for each κ.
    Spectrum,
    /// Diffusion tensor by the Hessian and resolvent routes.
    Diffuse,
    /// Kinetic Monte Carlo ensemble with MSD and Green–Kubo estimates.
    Simulate,
    /// Characteristic function against its Gaussian limit.
    Clt,
    /// Pairing counts and the combinatorial bounds.
    Pairings,
    /// Reservoir density, correlation function and decay certification.
    Correlate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Operator => "operator",
            Command::Spectrum => "spectrum",
            Command::Diffuse => "diffuse",
            Command::Simulate => "simulate",
            Command::Clt => "clt",
            Command::Pairings => "pairings",
            Command::Correlate => "correlate",
        }
    }
}

pub struct Product {
    pub result: Value,
    pub tables: Vec<Table>,
    pub failure: Option<String>,
}

pub fn execute(command: Command, cfg: &RunConfig) -> Result<Product, RunError> {
    let context = |e: RunError| match e {
        RunError::Precondition(m) => RunError::Precondition(format!("{}: {m}", command.name())),
        RunError::Certification(m) => RunError::Certification(format!("{}: {m}", command.name())),
        other => other,
    };
    match command {
        Command::Operator => operator(cfg),
        Command::Spectrum => spectrum(cfg),
        Command::Diffuse => diffuse(cfg),
        Command::Simulate => simulate(cfg),
        Command::Clt => clt(cfg),
        Command::Pairings => pairings(cfg),
        Command::Correlate => correlate(cfg),
    }
    .map_err(context)
}

pub fn spectral_density(cfg: &RunConfig) -> Result<SpectralDensity, RunError> {
    Ok(match cfg.family {
        ReservoirFamily::OhmicGaussian => SpectralDensity::ohmic_gaussian(
            cfg.beta,
            OhmicGaussian {
                coupling: cfg.coupling,
                exponent: cfg.exponent,
                cutoff: cfg.cutoff,
            },
        )?,
        ReservoirFamily::Tabulated => SpectralDensity::tabulated(
            cfg.beta,
            TabulatedDensity::new(cfg.table_xi.clone(), cfg.table_values.clone())?,
        )?,
        ReservoirFamily::FormFactor => {
            let omega: RadialFn = match cfg.omega {
                Omega::Linear => Arc::new(|r| r),
                Omega::Quadratic => Arc::new(|r| r * r),
            };
            let s = cfg.form_scale;
            let form: RadialFn = match cfg.profile {
                Profile::Gaussian => Arc::new(move |r: f64| (-(r / s).powi(2)).exp()),
                Profile::Exponential => Arc::new(move |r: f64| (-r / s).exp()),
                Profile::Constant => Arc::new(|_| 1.0),
            };
            effective_density_from_form_factor(omega, form, cfg.beta, cfg.form_dim, cfg.form_r_max)?
        }
    })
}

pub fn kernel(cfg: &RunConfig) -> Result<RateKernel, RunError> {
    let grid = TorusGrid::new(cfg.d, cfg.n)?;
    Ok(RateKernel::new(
        &grid,
        &cfg.law(),
        &spectral_density(cfg)?,
        Execution::Parallel,
    )?)
}

fn complex(z: C64) -> Value {
    json!([z.re, z.im])
}

fn tensor(t: &DiffusionTensor) -> Value {
    json!({
        "entries": t.entries,
        "uncertainty": t.uncertainty,
        "eigenvalues": t.eigenvalues(),
        "positive_definite": t.is_positive_definite(),
    })
}

fn gibbs(k: &RateKernel) -> Result<GibbsState, RunError> {
    Ok(GibbsState::from_energy(&k.field().energy, k.grid().weight(), k.beta())?)
}

fn operator(cfg: &RunConfig) -> Result<Product, RunError> {
    let k = kernel(cfg)?;
    let w = k.grid().weight();
    let n = k.len();
    let zero = vec![C64::new(0.0, 0.0); cfg.d];

    let m0 = build_M0_real(&k);
    let z = gibbs(&k)?;
    let zeta = DVector::from_column_slice(&z.values);
    let stationarity = (&m0 * &zeta).norm() / zeta.norm();
    let mass = (0..n).map(|j| (w * m0.column(j).sum()).abs()).fold(0.0, f64::max) / m0.norm();
    let balance = k.detailed_balance_residual();

    let untilted = build_M(&k, &zero)?;
    let sym = symmetrize(&untilted, &k.field().energy, k.beta(), w)?;
    let asymmetry = sym.asymmetry();
    let spectrum = symmetrized_spectrum(&k)?;
    let scale = spectrum.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let top = spectrum[n - 1];
    let next = spectrum[n - 2];
    let nonpositive = spectrum.iter().all(|&v| v <= 1e-12 * scale);

    let data = leading_eigen(&untilted)?;
    let p = data.projector();
    let first_order: Vec<f64> = (0..cfg.d)
        .map(|a| {
            let v = DMatrix::from_diagonal(&DVector::from_iterator(
                n,
                k.field().gradient[a].iter().map(|&g| C64::new(g, 0.0)),
            ));
            (&p * v * &p).norm() / (p.norm() * p.norm() * k.field().max_speed())
        })
        .collect();
    let first_worst = first_order.iter().copied().fold(0.0, f64::max);

    let tilts = cfg
        .kappas()
        .iter()
        .map(|kappa| {
            let d = leading_eigen(&build_M(&k, kappa)?)?;
            Ok(json!({
                "kappa": kappa.iter().map(|&z| complex(z)).collect::<Vec<_>>(),
                "f": complex(d.f),
                "second": complex(d.second),
                "gap": d.gap,
            }))
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    let constants = analyticity_constants(&cfg.law(), cfg.delta, cfg.gamma, cfg.n)?;

    let checks = [
        ("stationarity", stationarity, 1e-10),
        ("mass_conservation", mass, 1e-12),
        ("detailed_balance", balance, 1e-13),
        ("asymmetry", asymmetry, 1e-12),
        ("zero_eigenvalue", top.abs() / scale, 1e-12),
        ("first_order", first_worst, 1e-12),
    ];
    let mut failed: Vec<String> = checks
        .iter()
        .filter(|(_, v, tol)| !(v <= tol))
        .map(|(name, v, tol)| format!("{name} {v:.3e} > {tol:e}"))
        .collect();
    if !nonpositive {
        failed.push("symmetrized spectrum has positive eigenvalues".into());
    }
    if !(next < 0.0) {
        failed.push("zero eigenvalue is not simple".into());
    }

    let mut table = Table::new("spectrum.csv", &["index", "eigenvalue"]);
    for (i, &v) in spectrum.iter().enumerate() {
        table.rows.push(vec![i.into(), v.into()]);
    }
    let result = json!({
        "states": n,
        "invariants": checks.iter().map(|(name, v, tol)| json!({"name": name, "value": v, "tolerance": tol})).collect::<Vec<_>>(),
        "first_order_per_axis": first_order,
        "spectrum": {"top": top, "second": next, "gap": -next, "nonpositive": nonpositive},
        "tilted": tilts,
        "analyticity": constants,
        "pass": failed.is_empty(),
    });
    Ok(Product {
        result,
        tables: vec![table],
        failure: (!failed.is_empty()).then(|| failed.join("; ")),
    })
}

fn spectrum(cfg: &RunConfig) -> Result<Product, RunError> {
    let k = kernel(cfg)?;
    let g = spectral_gap(&k)?;
    let rows = cfg
        .kappas()
        .iter()
        .map(|kappa| {
            let d = leading_eigen(&build_M(&k, kappa)?)?;
            Ok(json!({
                "kappa": kappa.iter().map(|&z| complex(z)).collect::<Vec<_>>(),
                "f": complex(d.f),
                "second": complex(d.second),
                "gap": d.gap,
            }))
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    Ok(Product {
        result: json!({"g_kin": g, "eigen": rows}),
        tables: Vec::new(),
        failure: None,
    })
}

/// Route agreement required of the deterministic diffusion estimates.
pub const ROUTE_TOLERANCE: f64 = 1e-6;

fn diffuse(cfg: &RunConfig) -> Result<Product, RunError> {
    let k = kernel(cfg)?;
    let h = diffusion_hessian(&k, cfg.hessian_step, Execution::Parallel)?;
    let r = diffusion_resolvent(&k)?;
    let rel = h.relative_difference(&r);
    let pass = rel <= ROUTE_TOLERANCE && h.is_positive_definite() && r.is_positive_definite();
    let mut result = json!({
        "hessian": tensor(&h),
        "resolvent": tensor(&r),
        "relative_difference": rel,
        "tolerance": ROUTE_TOLERANCE,
        "pass": pass,
    });
    if let Some(wn) = &h.warning {
        result["hessian"]["warning"] = json!(wn);
    }
    Ok(Product {
        result,
        tables: Vec::new(),
        failure: (!pass).then(|| format!("routes differ by {rel:.3e} or a tensor is not positive definite")),
    })
}

fn simulate(cfg: &RunConfig) -> Result<Product, RunError> {
    let k = kernel(cfg)?;
    let d = cfg.d;
    let ens = EnsembleConfig {
        n_traj: cfg.n_traj,
        t_max: cfg.t_max,
        sample_times: cfg.sample_times(),
        init: cfg.init,
        seed: cfg.seed,
        batches: cfg.batches,
        vacf: cfg.vacf.then_some(VacfConfig {
            lag_step: cfg.vacf_step,
            max_lag: cfg.vacf_max_lag,
            origin_spacing: cfg.vacf_spacing,
        }),
    };
    let stats = ensemble_stats(&k, &ens, Execution::Parallel)?;
    let spectral = diffusion_resolvent(&k)?;
    let msd = msd_slope(&stats, cfg.msd_window * cfg.t_max, cfg.t_max)?;
    let gk = if cfg.vacf && cfg.init == InitialState::Gibbs {
        Some(green_kubo(&stats))
    } else {
        None
    };
    let z_scores = |t: &DiffusionTensor| -> Vec<f64> {
        (0..d)
            .map(|a| (t.get(a, a) - spectral.get(a, a)) / t.uncertainty[a * d + a])
            .collect()
    };

    let g = gibbs(&k)?;
    let w = k.grid().weight();
    let p: Vec<f64> = g.values.iter().map(|v| v * w).collect();
    let last = stats.sample_times.len() - 1;

    let mut names = vec!["t".to_string()];
    names.extend((0..d).map(|a| format!("msd_{a}")));
    names.extend((0..d).map(|a| format!("stderr_{a}")));
    let mut msd_table = Table::new("msd.csv", &[]);
    msd_table.header = names;
    for (i, &t) in stats.sample_times.iter().enumerate() {
        let mut row: Vec<Cell> = vec![t.into()];
        row.extend((0..d).map(|a| stats.msd[i][a * d + a].into()));
        row.extend((0..d).map(|a| stats.msd_se[i][a * d + a].into()));
        msd_table.rows.push(row);
    }

    let mut hist = Table::new("hist.csv", &["k_index", "empirical", "gibbs"]);
    for (i, (&e, &q)) in stats.histogram[last].iter().zip(&p).enumerate() {
        hist.rows.push(vec![i.into(), e.into(), q.into()]);
    }

    let mut names = vec!["t".to_string()];
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|a| (0..d).map(move |b| (a, b))).collect();
    names.extend(pairs.iter().map(|(a, b)| format!("c_{a}{b}")));
    names.extend(pairs.iter().map(|(a, b)| format!("stderr_{a}{b}")));
    let mut vacf = Table::new("vacf.csv", &[]);
    vacf.header = names;
    for (l, &t) in stats.vacf_lags.iter().enumerate() {
        let mut row: Vec<Cell> = vec![t.into()];
        row.extend(stats.vacf[l].iter().map(|&v| v.into()));
        row.extend(stats.vacf_se[l].iter().map(|&v| v.into()));
        vacf.rows.push(row);
    }

    let gk_value = match &gk {
        Some(Ok(t)) => json!({"tensor": tensor(t), "z_scores": z_scores(t)}),
        Some(Err(e)) => json!({"error": e.to_string()}),
        None => Value::Null,
    };
    let result = json!({
        "n_traj": stats.n_traj,
        "batches": stats.batches,
        "seed": cfg.seed,
        "rng": stats.rng,
        "spectral": tensor(&spectral),
        "msd_slope": {"window": [cfg.msd_window * cfg.t_max, cfg.t_max], "tensor": tensor(&msd), "z_scores": z_scores(&msd)},
        "green_kubo": gk_value,
        "final_time": stats.sample_times[last],
        "mean_displacement": stats.mean_displacement[last],
        "mean_displacement_stderr": stats.mean_displacement_se[last],
        "total_variation_to_gibbs": stats.total_variation(last, &p),
    });
    Ok(Product {
        result,
        tables: vec![msd_table, hist, vacf],
        failure: None,
    })
}

fn clt(cfg: &RunConfig) -> Result<Product, RunError> {
    let k = kernel(cfg)?;
    let solver = CltSolver::new(&k, cfg.clt_method)?;
    let mut table = Table::new("clt.csv", &["q", "t", "lhs_re", "lhs_im", "rhs", "error"]);
    let mut worst: f64 = 0.0;
    for &q in &cfg.clt_q {
        for &t in &cfg.clt_t {
            let mut qv = vec![0.0; cfg.d];
            qv[0] = q;
            let (lhs, rhs) = solver.check(&qv, t)?;
            let err = (lhs - C64::new(rhs, 0.0)).norm();
            worst = worst.max(err);
            table.rows.push(vec![
                q.into(),
                t.into(),
                lhs.re.into(),
                lhs.im.into(),
                rhs.into(),
                err.into(),
            ]);
        }
    }
    Ok(Product {
        result: json!({
            "diffusion": tensor(solver.diffusion()),
            "radius": solver.radius(),
            "axis": 0,
            "largest_error": worst,
        }),
        tables: vec![table],
        failure: None,
    })
}

fn pairings(cfg: &RunConfig) -> Result<Product, RunError> {
    let (rate, power) = (cfg.h_rate, cfg.h_power);
    let h: Box<dyn Fn(f64) -> f64 + Sync> = match cfg.h {
        PairingH::Exponential => Box::new(move |u: f64| (-rate * u).exp()),
        PairingH::Algebraic => Box::new(move |u: f64| (1.0 + u).powf(-power)),
    };
    let report = verify_combinatorial_bounds(cfg.n_max, h.as_ref(), cfg.pair_t, cfg.pair_z)?;
    let counts = (1..=cfg.n_max)
        .map(|n| {
            let all = enumerate_pairings(n)?;
            Ok(json!({
                "n": n,
                "pairings": all.len(),
                "expected": double_factorial(2 * n - 1),
                "irreducible": all.iter().filter(|p| is_irreducible(p)).count(),
            }))
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    let pass = report.pass;
    Ok(Product {
        result: json!({"counts": counts, "bounds": report}),
        tables: Vec::new(),
        failure: (!pass).then(|| "a combinatorial bound is violated".to_string()),
    })
}

fn grid_points(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

fn correlate(cfg: &RunConfig) -> Result<Product, RunError> {
    let spec = spectral_density(cfg)?;
    let profile = certify_decay(&spec, cfg.certify_t_max, cfg.certify_samples)?;

    let mut corr = Table::new("correlation.csv", &["t", "re", "im"]);
    for t in grid_points(0.0, cfg.corr_t_max, cfg.corr_points) {
        let c = correlation_function(t, &spec);
        corr.rows.push(vec![t.into(), c.re.into(), c.im.into()]);
    }

    let xs: Vec<f64> = grid_points(-cfg.corr_xi_max, cfg.corr_xi_max, cfg.corr_points).collect();
    let density = match HalfTransforms::new(&spec, &profile) {
        Ok(ht) => {
            let mut t = Table::new(
                "density.csv",
                &["xi", "psi", "plus_re", "plus_im", "minus_re", "minus_im"],
            );
            for &x in &xs {
                let w = C64::new(x, 0.0);
                let (p, m) = (ht.plus(w)?, ht.minus(w)?);
                t.rows.push(vec![
                    x.into(),
                    spec.eval(x).into(),
                    p.re.into(),
                    p.im.into(),
                    m.re.into(),
                    m.im.into(),
                ]);
            }
            t
        }
        Err(kdlab_core::Error::Certification(_)) => {
            let mut t = Table::new("density.csv", &["xi", "psi"]);
            for &x in &xs {
                t.rows.push(vec![x.into(), spec.eval(x).into()]);
            }
            t
        }
        Err(e) => return Err(e.into()),
    };
    let failure = (!profile.certified).then(|| profile.diagnostic.clone());
    Ok(Product {
        result: json!({
            "psi_at_zero": spec.eval(0.0),
            "thermal_defect": spec.thermal_defect(&xs),
            "certification": profile,
        }),
        tables: vec![corr, density],
        failure,
    })
}
