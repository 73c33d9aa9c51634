// Copyright 2026 The kdlab Authors
// SPDX-License-Identifier: Apache-2.0

//! Linear Boltzmann fiber generators on the momentum grid.
//!
//! The jump rates are `r(k, k') = ψ(ε(k') - ε(k))`. The tilted generator
//! acts on grid functions as
//!
//! ```text
//! (M^κ θ)(k) = i(κ, ∇ε(k)) θ(k) + w Σ_{k'} [r(k', k) θ(k') - r(k, k') θ(k)]
//! ```
//!
//! with `w` the grid weight. The diagonal gain `w r(k, k)` is kept; it cancels
//! against the matching loss term.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::reservoir::{HalfTransforms, SpectralDensity};
use crate::torus::{eval_dispersion, DispersionField, DispersionLaw, TorusGrid};
use crate::{Error, Execution, Result, C64};

/// Jump rates `r(k_i, k_j)` and total rates `R(k_i) = w Σ_j r(k_i, k_j)`.
#[derive(Clone, Debug)]
pub struct RateKernel {
    grid: TorusGrid,
    law: DispersionLaw,
    field: DispersionField,
    beta: f64,
    rates: Vec<f64>,
    total: Vec<f64>,
}

impl RateKernel {
    /// Evaluates `ψ` once per distinct energy difference.
    pub fn new(grid: &TorusGrid, law: &DispersionLaw, spec: &SpectralDensity, exec: Execution) -> Result<Self> {
        let field = eval_dispersion(grid, law)?;
        let n = grid.len();
        let eps = &field.energy;
        let mut slot: HashMap<u64, usize> = HashMap::new();
        let mut distinct = Vec::new();
        let mut index = vec![0usize; n * n];
        for i in 0..n {
            for j in 0..n {
                let diff = eps[j] - eps[i];
                // +0 and -0 are the same difference
                let key = (diff + 0.0).to_bits();
                index[i * n + j] = *slot.entry(key).or_insert_with(|| {
                    distinct.push(diff);
                    distinct.len() - 1
                });
            }
        }
        let psi = exec.map(distinct.len(), |m| spec.eval(distinct[m]));
        let rates = index.iter().map(|&m| psi[m]).collect();
        Self::assemble(grid.clone(), law.clone(), field, spec.beta(), rates)
    }

    /// Kernel from explicit rates, `rates[i * n + j] = r(k_i, k_j)`.
    pub fn from_rates(grid: &TorusGrid, law: &DispersionLaw, beta: f64, rates: Vec<f64>) -> Result<Self> {
        let field = eval_dispersion(grid, law)?;
        if rates.len() != grid.len() * grid.len() {
            return Err(Error::Config(format!(
                "rate matrix has {} entries, expected {}",
                rates.len(),
                grid.len() * grid.len()
            )));
        }
        if rates.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::Config("rates must be finite and nonnegative".into()));
        }
        Self::assemble(grid.clone(), law.clone(), field, beta, rates)
    }

    fn assemble(
        grid: TorusGrid,
        law: DispersionLaw,
        field: DispersionField,
        beta: f64,
        rates: Vec<f64>,
    ) -> Result<Self> {
        let n = grid.len();
        let w = grid.weight();
        let total = (0..n)
            .map(|i| w * rates[i * n..(i + 1) * n].iter().sum::<f64>())
            .collect();
        Ok(Self {
            grid,
            law,
            field,
            beta,
            rates,
            total,
        })
    }

    /// The same kernel with every rate multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.rates.iter_mut().for_each(|r| *r *= s);
        out.total.iter_mut().for_each(|r| *r *= s);
        out
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn law(&self) -> &DispersionLaw {
        &self.law
    }

    pub fn field(&self) -> &DispersionField {
        &self.field
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.rates[i * self.len() + j]
    }

    /// Row `i` of the rate matrix, `r(k_i, ·)`.
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.len();
        &self.rates[i * n..(i + 1) * n]
    }

    pub fn total_rate(&self) -> &[f64] {
        &self.total
    }

    /// Largest `|r(k,k') - r(k',k) e^{-β(ε(k') - ε(k))}|` relative to the
    /// larger side.
    pub fn detailed_balance_residual(&self) -> f64 {
        let n = self.len();
        let eps = &self.field.energy;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let lhs = self.rate(i, j);
                let rhs = self.rate(j, i) * (-self.beta * (eps[j] - eps[i])).exp();
                let scale = lhs.abs().max(rhs.abs());
                if scale > 0.0 {
                    worst = worst.max((lhs - rhs).abs() / scale);
                }
            }
        }
        worst
    }
}

/// Builds the rate kernel on `grid` for `law` and the density `spec`.
pub fn rate_kernel(grid: &TorusGrid, law: &DispersionLaw, spec: &SpectralDensity) -> Result<RateKernel> {
    RateKernel::new(grid, law, spec, Execution::default())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorKind {
    Boltzmann,
    OneLoop,
}

/// A dense operator on grid functions.
#[derive(Clone, Debug)]
pub struct FiberOperator {
    pub kind: OperatorKind,
    /// Tilt `κ` for [`OperatorKind::Boltzmann`], momentum transfer `p` for
    /// [`OperatorKind::OneLoop`].
    pub kappa: Vec<C64>,
    pub matrix: DMatrix<C64>,
    /// Grid quadrature weight `w`; pairings are `⟨a, b⟩ = w Σ a_i b_i`.
    pub weight: f64,
}

impl FiberOperator {
    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    pub fn apply(&self, theta: &[C64]) -> Vec<C64> {
        let v = &self.matrix * DVector::from_column_slice(theta);
        v.as_slice().to_vec()
    }

    /// Real part of the matrix; exact for `κ = 0`.
    pub fn real_part(&self) -> DMatrix<f64> {
        self.matrix.map(|z| z.re)
    }

    pub fn is_untilted(&self) -> bool {
        self.kappa.iter().all(|k| *k == C64::new(0.0, 0.0))
    }
}

/// The tilted Boltzmann generator `M^κ`.
#[allow(non_snake_case)]
pub fn build_M(kernel: &RateKernel, kappa: &[C64]) -> Result<FiberOperator> {
    let d = kernel.grid.dim();
    if kappa.len() != d {
        return Err(Error::Config(format!(
            "tilt has {} components, grid has dimension {d}",
            kappa.len()
        )));
    }
    let n = kernel.len();
    let w = kernel.grid.weight();
    let field = &kernel.field;
    let mut matrix = DMatrix::from_fn(n, n, |i, j| C64::new(w * kernel.rate(j, i), 0.0));
    for i in 0..n {
        let drift: C64 = (0..d).map(|a| kappa[a] * field.gradient[a][i]).sum();
        matrix[(i, i)] = C64::new(0.0, 1.0) * drift + w * kernel.rate(i, i) - kernel.total[i];
    }
    Ok(FiberOperator {
        kind: OperatorKind::Boltzmann,
        kappa: kappa.to_vec(),
        matrix,
        weight: w,
    })
}

/// Untilted generator as a real matrix.
#[allow(non_snake_case)]
pub fn build_M0_real(kernel: &RateKernel) -> DMatrix<f64> {
    let n = kernel.len();
    let w = kernel.grid.weight();
    let mut m = DMatrix::from_fn(n, n, |i, j| w * kernel.rate(j, i));
    for i in 0..n {
        m[(i, i)] = w * kernel.rate(i, i) - kernel.total[i];
    }
    m
}

/// Normalized Gibbs density `e^{-βε} / (w Σ e^{-βε})` on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GibbsState {
    pub values: Vec<f64>,
}

impl GibbsState {
    pub fn from_energy(energy: &[f64], weight: f64, beta: f64) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::Config(format!(
                "inverse temperature must be finite and ≥ 0, got {beta}"
            )));
        }
        let e_min = energy.iter().copied().fold(f64::INFINITY, f64::min);
        let raw: Vec<f64> = energy.iter().map(|e| (-beta * (e - e_min)).exp()).collect();
        let z = weight * raw.iter().sum::<f64>();
        Ok(Self {
            values: raw.iter().map(|v| v / z).collect(),
        })
    }

    /// `⟨1, ζ⟩`, which is 1 up to rounding.
    pub fn mass(&self, weight: f64) -> f64 {
        weight * self.values.iter().sum::<f64>()
    }

    /// Average of `f` against the Gibbs density.
    pub fn average(&self, f: &[f64], weight: f64) -> f64 {
        weight * self.values.iter().zip(f).map(|(z, v)| z * v).sum::<f64>()
    }
}

pub fn gibbs_state(grid: &TorusGrid, law: &DispersionLaw, beta: f64) -> Result<GibbsState> {
    let field = eval_dispersion(grid, law)?;
    GibbsState::from_energy(&field.energy, grid.weight(), beta)
}

/// `M̃ = W M^0 W^{-1}`, `W = diag(e^{βε/2})`, and its null vector
/// `ζ̃ ∝ e^{-βε/2}` normalized to `w Σ ζ̃² = 1`.
#[derive(Clone, Debug)]
pub struct Symmetrized {
    pub matrix: DMatrix<f64>,
    pub zeta: Vec<f64>,
    pub conjugator: Vec<f64>,
}

impl Symmetrized {
    /// `‖M̃ - M̃ᵀ‖_F / ‖M̃‖_F`.
    pub fn asymmetry(&self) -> f64 {
        (&self.matrix - self.matrix.transpose()).norm() / self.matrix.norm()
    }
}

pub fn symmetrize(m0: &FiberOperator, energy: &[f64], beta: f64, weight: f64) -> Result<Symmetrized> {
    if m0.kind != OperatorKind::Boltzmann || !m0.is_untilted() {
        return Err(Error::Config("symmetrization needs the untilted generator".into()));
    }
    let n = m0.len();
    if energy.len() != n {
        return Err(Error::Config("energy and operator sizes differ".into()));
    }
    let e_min = energy.iter().copied().fold(f64::INFINITY, f64::min);
    let conjugator: Vec<f64> = energy.iter().map(|e| (0.5 * beta * (e - e_min)).exp()).collect();
    let matrix = DMatrix::from_fn(n, n, |i, j| m0.matrix[(i, j)].re * conjugator[i] / conjugator[j]);
    let raw: Vec<f64> = conjugator.iter().map(|c| 1.0 / c).collect();
    let norm = (weight * raw.iter().map(|v| v * v).sum::<f64>()).sqrt();
    Ok(Symmetrized {
        matrix,
        zeta: raw.iter().map(|v| v / norm).collect(),
        conjugator,
    })
}

/// The one-loop fiber kernel `(L(z))_p`.
///
/// With `ε^±_i = ε(k_i ± p/2)` the gain entry is
/// `w [ψ₊(ε^-_i - ε^+_j - iz) + ψ₋(ε^+_i - ε^-_j + iz)]` and the loss at `i` is
/// `w Σ_j [ψ₊(ε^+_j - ε^+_i - iz) + ψ₋(ε^-_j - ε^-_i + iz)]`, so that
/// `(L(0))_0 = M^0` and the constant function is a left null vector at
/// `p = 0`.
pub fn build_l_fiber(
    grid: &TorusGrid,
    law: &DispersionLaw,
    transforms: &HalfTransforms,
    z: C64,
    p: &[C64],
    exec: Execution,
) -> Result<FiberOperator> {
    let d = grid.dim();
    if p.len() != d || law.dim() != d {
        return Err(Error::Config(format!(
            "momentum transfer has {} components, grid has dimension {d}",
            p.len()
        )));
    }
    let n = grid.len();
    let w = grid.weight();
    let shifted = |sign: f64| -> Vec<C64> {
        (0..n)
            .map(|i| {
                let k: Vec<C64> = grid
                    .point(i)
                    .iter()
                    .zip(p)
                    .map(|(&kj, &pj)| C64::new(kj, 0.0) + pj * (0.5 * sign))
                    .collect();
                law.energy_complex(&k)
            })
            .collect()
    };
    let plus = shifted(1.0);
    let minus = shifted(-1.0);
    let iz = C64::new(0.0, 1.0) * z;

    // each row is independent; errors surface from the first failing row
    let rows: Vec<Result<(Vec<C64>, C64)>> = exec.map(n, |i| {
        let mut gain = Vec::with_capacity(n);
        let mut loss = C64::new(0.0, 0.0);
        for j in 0..n {
            gain.push((transforms.plus(minus[i] - plus[j] - iz)? + transforms.minus(plus[i] - minus[j] + iz)?) * w);
            loss += (transforms.plus(plus[j] - plus[i] - iz)? + transforms.minus(minus[j] - minus[i] + iz)?) * w;
        }
        Ok((gain, loss))
    });
    let mut matrix = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        let (gain, loss) = row?;
        for (j, g) in gain.into_iter().enumerate() {
            matrix[(i, j)] = g;
        }
        matrix[(i, i)] -= loss;
    }
    Ok(FiberOperator {
        kind: OperatorKind::OneLoop,
        kappa: p.to_vec(),
        matrix,
        weight: w,
    })
}
