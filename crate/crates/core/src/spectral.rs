// Copyright 2026 The kdlab Authors
// SPDX-License-Identifier: Apache-2.0

//! Leading eigenvalue, spectral projection and diffusion tensor of the
//! tilted generator, plus semigroup evolution.
//!
//! Grid functions are paired bilinearly, `⟨a, b⟩ = w Σ a_i b_i`. The
//! right eigenvector `ζ` is normalized by `⟨1, ζ⟩ = 1` and the left one by
//! `⟨l, ζ⟩ = 1`, so the projector is `P θ = ⟨l, θ⟩ ζ`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::fiber::{build_M, build_M0_real, symmetrize, FiberOperator, GibbsState, OperatorKind, RateKernel};
use crate::{Error, Execution, Result, C64};

/// Largest state count handled by the dense Schur path.
pub const DENSE_LIMIT: usize = 4096;

/// Leading eigen-triple of a fiber operator.
#[derive(Clone, Debug)]
pub struct SpectralData {
    pub kappa: Vec<C64>,
    /// Eigenvalue with the largest real part.
    pub f: C64,
    /// Eigenvalue with the next largest real part.
    pub second: C64,
    /// `Re f - Re second`.
    pub gap: f64,
    pub right: Vec<C64>,
    pub left: Vec<C64>,
    pub weight: f64,
}

impl SpectralData {
    /// Dense projector `P = w ζ lᵀ`.
    pub fn projector(&self) -> DMatrix<C64> {
        let n = self.right.len();
        DMatrix::from_fn(n, n, |i, j| self.right[i] * self.left[j] * self.weight)
    }
}

/// Which eigen-solver [`leading_eigen_with`] uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EigenMethod {
    /// Dense up to [`DENSE_LIMIT`] states, power iteration beyond.
    Auto,
    Dense,
    Power,
}

/// The eigenvalue of largest real part with bi-normalized eigenvectors.
pub fn leading_eigen(m: &FiberOperator) -> Result<SpectralData> {
    leading_eigen_with(m, EigenMethod::Auto)
}

pub fn leading_eigen_with(m: &FiberOperator, method: EigenMethod) -> Result<SpectralData> {
    let n = m.len();
    if n == 0 {
        return Err(Error::Config("empty operator".into()));
    }
    let dense = match method {
        EigenMethod::Auto => n <= DENSE_LIMIT,
        EigenMethod::Dense => true,
        EigenMethod::Power => false,
    };
    let (approx, second) = if dense {
        top_two_dense(&m.matrix)?
    } else {
        top_two_power(&m.matrix)?
    };
    let scale = m.matrix.norm().max(1.0);
    let tolerance = 1e-9 * scale;
    if approx.re - second.re <= tolerance {
        return Err(Error::Ambiguous {
            first: approx,
            second,
            tolerance,
        });
    }
    let mut right = inverse_iteration(&m.matrix, approx, scale)?;
    let mut left = inverse_iteration(&m.matrix.transpose(), approx, scale)?;
    // two-sided Rayleigh quotient: second-order accurate in the vector error
    let mr = &m.matrix * &right;
    let f = left.dot(&mr) / left.dot(&right);

    let w = m.weight;
    let mass: C64 = right.sum() * w;
    if mass.norm() < 1e-300 {
        return Err(Error::Numerical("right eigenvector has zero mass".into()));
    }
    right /= mass;
    let pairing: C64 = left.dot(&right) * w;
    left /= pairing;
    Ok(SpectralData {
        kappa: m.kappa.clone(),
        f,
        second,
        gap: f.re - second.re,
        right: right.as_slice().to_vec(),
        left: left.as_slice().to_vec(),
        weight: w,
    })
}

fn top_two_dense(m: &DMatrix<C64>) -> Result<(C64, C64)> {
    let schur = nalgebra::Schur::try_new(m.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    let (_, t) = schur.unpack();
    let mut eig: Vec<C64> = t.diagonal().iter().copied().collect();
    if eig.len() == 1 {
        return Ok((eig[0], C64::new(f64::NEG_INFINITY, 0.0)));
    }
    eig.sort_by(|a, b| b.re.total_cmp(&a.re));
    Ok((eig[0], eig[1]))
}

/// Shifted power iteration for the leading pair; the runner-up is the
/// rightmost Ritz value of an Arnoldi factorization of the deflated
/// operator.
fn top_two_power(m: &DMatrix<C64>) -> Result<(C64, C64)> {
    let n = m.nrows();
    // Gershgorin: every eigenvalue of m + s I has positive real part
    let shift = (0..n)
        .map(|i| (0..n).map(|j| m[(i, j)].norm()).sum::<f64>() - m[(i, i)].re)
        .fold(0.0, f64::max);
    let shifted = m + DMatrix::identity(n, n) * C64::new(shift, 0.0);
    let start = DVector::from_fn(n, |i, _| C64::new(1.0 + (i as f64 * 0.618).fract(), 0.0));
    let (l1, v1) = power(&shifted, start.clone())?;
    let u1 = inverse_iteration(&m.transpose(), l1 - shift, m.norm().max(1.0))?;
    let u1 = u1.clone() / u1.dot(&v1);
    // the deflated operator lives on an (n - 1)-dimensional complement
    let l2 = arnoldi_rightmost(m, start, &v1, &u1, (n - 1).min(80))?;
    Ok((l1 - shift, l2))
}

fn power(a: &DMatrix<C64>, mut v: DVector<C64>) -> Result<(C64, DVector<C64>)> {
    v /= C64::new(v.norm(), 0.0);
    let scale = a.norm().max(1.0);
    for _ in 0..200_000 {
        let av = a * &v;
        let est = v.dotc(&av);
        if (&av - &v * est).norm() <= 1e-12 * scale {
            return Ok((est, v));
        }
        let norm = av.norm();
        if norm == 0.0 {
            return Ok((C64::new(0.0, 0.0), v));
        }
        v = av / C64::new(norm, 0.0);
    }
    Err(Error::Numerical("power iteration did not converge".into()))
}

fn arnoldi_rightmost(
    m: &DMatrix<C64>,
    start: DVector<C64>,
    right: &DVector<C64>,
    left: &DVector<C64>,
    dim: usize,
) -> Result<C64> {
    let project = |x: DVector<C64>| {
        let c = left.dot(&x);
        x - right * c
    };
    let mut basis = vec![{
        let v = project(start);
        let norm = v.norm();
        v / C64::new(norm, 0.0)
    }];
    let mut h = DMatrix::<C64>::zeros(dim + 1, dim);
    let mut k = 0;
    while k < dim {
        let mut w = project(m * &basis[k]);
        // Gram–Schmidt twice keeps the basis orthogonal near breakdown
        for _ in 0..2 {
            for (j, q) in basis.iter().enumerate() {
                let c = q.dotc(&w);
                h[(j, k)] += c;
                w -= q * c;
            }
        }
        let beta = w.norm();
        k += 1;
        if beta <= 1e-13 * m.norm() {
            break;
        }
        h[(k, k - 1)] = C64::new(beta, 0.0);
        basis.push(w / C64::new(beta, 0.0));
    }
    let ritz = h.view((0, 0), (k, k)).into_owned();
    let schur = nalgebra::Schur::try_new(ritz, 1e-15, 10_000)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    let (_, t) = schur.unpack();
    // the deflated direction contributes a spurious zero
    t.diagonal()
        .iter()
        .copied()
        .filter(|z| z.norm() > 1e-10 * m.norm())
        .max_by(|a, b| a.re.total_cmp(&b.re))
        .ok_or_else(|| Error::Numerical("Arnoldi produced no Ritz values".into()))
}

fn inverse_iteration(m: &DMatrix<C64>, lambda: C64, scale: f64) -> Result<DVector<C64>> {
    let n = m.nrows();
    for k in 0..6 {
        let shift = lambda + C64::new(1e-12 * scale * 10f64.powi(k), 0.0);
        let lu = (m - DMatrix::identity(n, n) * shift).lu();
        let mut v = DVector::from_element(n, C64::new(1.0, 0.0));
        let mut ok = true;
        for _ in 0..3 {
            match lu.solve(&v) {
                Some(x) if x.iter().all(|z| z.re.is_finite() && z.im.is_finite()) => {
                    let norm = x.norm();
                    v = x / C64::new(norm, 0.0);
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok(v);
        }
    }
    Err(Error::Numerical("inverse iteration failed".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiffusionRoute {
    Hessian,
    Resolvent,
    GreenKubo,
    Msd,
}

/// Symmetric `d × d` diffusion tensor with per-entry uncertainty.
#[derive(Clone, Debug, Serialize)]
pub struct DiffusionTensor {
    pub dim: usize,
    pub route: DiffusionRoute,
    /// Row-major entries.
    pub entries: Vec<f64>,
    pub uncertainty: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl DiffusionTensor {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.entries[a * self.dim + b]
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.entries)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut e: Vec<f64> = SymmetricEigen::new(self.matrix()).eigenvalues.iter().copied().collect();
        e.sort_by(f64::total_cmp);
        e
    }

    pub fn is_positive_definite(&self) -> bool {
        self.eigenvalues().first().is_some_and(|&v| v > 0.0)
    }

    /// `(q, D q)`.
    pub fn quadratic_form(&self, q: &[f64]) -> f64 {
        let mut acc = 0.0;
        for a in 0..self.dim {
            for b in 0..self.dim {
                acc += q[a] * self.get(a, b) * q[b];
            }
        }
        acc
    }

    /// Largest entrywise relative difference to `other`.
    pub fn relative_difference(&self, other: &DiffusionTensor) -> f64 {
        let scale = self.entries.iter().map(|v| v.abs()).fold(0.0, f64::max);
        self.entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| (a - b).abs() / scale)
            .fold(0.0, f64::max)
    }
}

/// Default finite-difference step of the Hessian route.
pub const DEFAULT_HESSIAN_STEP: f64 = 1e-3;

/// `D = -∇²f(κ)|₀` by central differences at steps `h` and `2h`, combined
/// by Richardson extrapolation.
pub fn diffusion_hessian(kernel: &RateKernel, step: f64, exec: Execution) -> Result<DiffusionTensor> {
    if !(step > 0.0) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let d = kernel.grid().dim();
    // stencil points: for each pair a ≤ b and each of the two steps
    let mut points: Vec<Vec<f64>> = vec![vec![0.0; d]];
    for h in [step, 2.0 * step] {
        for a in 0..d {
            for s in [1.0, -1.0] {
                let mut k = vec![0.0; d];
                k[a] = s * h;
                points.push(k);
            }
            for b in a + 1..d {
                for (sa, sb) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    let mut k = vec![0.0; d];
                    k[a] = sa * h;
                    k[b] = sb * h;
                    points.push(k);
                }
            }
        }
    }
    let values: Vec<Result<f64>> = exec.map(points.len(), |p| {
        let kappa: Vec<C64> = points[p].iter().map(|&x| C64::new(x, 0.0)).collect();
        Ok(leading_eigen(&build_M(kernel, &kappa)?)?.f.re)
    });
    let values = values.into_iter().collect::<Result<Vec<f64>>>()?;
    let f0 = values[0];
    let lookup = |k: &[f64]| -> f64 {
        let idx = points.iter().position(|p| p.as_slice() == k).expect("stencil point");
        values[idx]
    };
    let estimate = |h: f64, a: usize, b: usize| -> f64 {
        let mut k = vec![0.0; d];
        if a == b {
            k[a] = h;
            let fp = lookup(&k);
            k[a] = -h;
            let fm = lookup(&k);
            -(fp - 2.0 * f0 + fm) / (h * h)
        } else {
            let mut at = |sa: f64, sb: f64| {
                k[a] = sa * h;
                k[b] = sb * h;
                lookup(&k)
            };
            -(at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h * h)
        }
    };
    let mut entries = vec![0.0; d * d];
    let mut uncertainty = vec![0.0; d * d];
    let mut warning = None;
    for a in 0..d {
        for b in a..d {
            let fine = estimate(step, a, b);
            let coarse = estimate(2.0 * step, a, b);
            let extrap = (4.0 * fine - coarse) / 3.0;
            let err = (fine - coarse).abs() / 3.0;
            if err > 1e-2 * extrap.abs().max(1e-300) {
                warning = Some(format!(
                    "Richardson estimates disagree at ({a},{b}): step {step} gives {fine}, step {} gives {coarse}",
                    2.0 * step
                ));
            }
            for (i, j) in [(a, b), (b, a)] {
                entries[i * d + j] = extrap;
                uncertainty[i * d + j] = err;
            }
        }
    }
    Ok(DiffusionTensor {
        dim: d,
        route: DiffusionRoute::Hessian,
        entries,
        uncertainty,
        warning,
    })
}

/// `D_ab = 2⟨∂_aε ζ̃, (-M̃)^{-1} ∂_bε ζ̃⟩` with the inverse taken on the
/// complement of `ζ̃`.
pub fn diffusion_resolvent(kernel: &RateKernel) -> Result<DiffusionTensor> {
    let grid = kernel.grid();
    let w = grid.weight();
    let d = grid.dim();
    let field = kernel.field();
    let m0 = build_M(kernel, &vec![C64::new(0.0, 0.0); d])?;
    let sym = symmetrize(&m0, &field.energy, kernel.beta(), w)?;
    let n = kernel.len();
    let zeta = DVector::from_column_slice(&sym.zeta);
    let mt = &sym.matrix;
    // SPD: -M̃ on the complement, identity along ζ̃
    let a = DMatrix::from_fn(n, n, |i, j| -0.5 * (mt[(i, j)] + mt[(j, i)]) + w * zeta[i] * zeta[j]);
    let chol = Cholesky::new(a.clone())
        .ok_or_else(|| Error::Numerical("reduced generator is not positive-definite".into()))?;
    let rhs: Vec<DVector<f64>> = (0..d)
        .map(|j| DVector::from_fn(n, |i, _| field.gradient[j][i] * zeta[i]))
        .collect();
    for (j, b) in rhs.iter().enumerate() {
        let overlap = w * zeta.dot(b);
        let norm = (w * b.dot(b)).sqrt();
        if overlap.abs() > 1e-10 * norm.max(1.0) {
            return Err(Error::Symmetry(format!(
                "velocity along axis {j} has overlap {overlap:e} with the stationary state"
            )));
        }
    }
    let sol: Vec<DVector<f64>> = rhs.iter().map(|b| chol.solve(b)).collect();
    let mut entries = vec![0.0; d * d];
    let mut uncertainty = vec![0.0; d * d];
    for i in 0..d {
        let resid = (&a * &sol[i] - &rhs[i]).norm() / rhs[i].norm().max(1e-300);
        for j in 0..d {
            let v = w * (rhs[i].dot(&sol[j]) + rhs[j].dot(&sol[i]));
            entries[i * d + j] = v;
            uncertainty[i * d + j] = (resid * v.abs()).max(f64::EPSILON * v.abs());
        }
    }
    Ok(DiffusionTensor {
        dim: d,
        route: DiffusionRoute::Resolvent,
        entries,
        uncertainty,
        warning: None,
    })
}

/// Spectrum of `M̃` in ascending order.
pub fn symmetrized_spectrum(kernel: &RateKernel) -> Result<Vec<f64>> {
    let d = kernel.grid().dim();
    let m0 = build_M(kernel, &vec![C64::new(0.0, 0.0); d])?;
    let sym = symmetrize(&m0, &kernel.field().energy, kernel.beta(), kernel.grid().weight())?;
    let m = &sym.matrix;
    let s = (m + m.transpose()) * 0.5;
    let mut e: Vec<f64> = SymmetricEigen::new(s).eigenvalues.iter().copied().collect();
    e.sort_by(f64::total_cmp);
    Ok(e)
}

/// Spectral gap of the untilted generator, `-Re λ₂(M^0)`.
pub fn spectral_gap(kernel: &RateKernel) -> Result<f64> {
    let d = kernel.grid().dim();
    let data = leading_eigen(&build_M(kernel, &vec![C64::new(0.0, 0.0); d])?)?;
    Ok(data.gap)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvolveMethod {
    /// Scaling-and-squaring Padé exponential.
    Dense,
    /// Taylor steps with `h ‖M‖₁ ≤ 1/2`.
    Taylor,
}

/// `e^{tM} θ₀`.
pub fn evolve_fiber(m: &FiberOperator, theta0: &[C64], t: f64, method: EvolveMethod) -> Result<Vec<C64>> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("evolution time must be finite and ≥ 0, got {t}")));
    }
    if theta0.len() != m.len() {
        return Err(Error::Config("initial data and operator sizes differ".into()));
    }
    if t == 0.0 {
        return Ok(theta0.to_vec());
    }
    let v = DVector::from_column_slice(theta0);
    let out = match method {
        EvolveMethod::Dense => (&m.matrix * C64::new(t, 0.0)).exp() * v,
        EvolveMethod::Taylor => taylor(&m.matrix, v, t),
    };
    Ok(out.as_slice().to_vec())
}

fn taylor(m: &DMatrix<C64>, mut v: DVector<C64>, t: f64) -> DVector<C64> {
    let norm1 = m
        .column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max);
    let steps = ((t * norm1) / 0.5).ceil().max(1.0) as usize;
    let h = C64::new(t / steps as f64, 0.0);
    for _ in 0..steps {
        let mut term = v.clone();
        let mut acc = v.clone();
        let base = v.norm().max(1e-300);
        for k in 1..60 {
            term = (m * &term) * (h / C64::new(k as f64, 0.0));
            acc += &term;
            if term.norm() < 1e-17 * base {
                break;
            }
        }
        v = acc;
    }
    v
}

/// One row of a CLT comparison.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CltPoint {
    pub q: f64,
    pub t: f64,
    pub lhs_re: f64,
    pub lhs_im: f64,
    pub rhs: f64,
}

impl CltPoint {
    pub fn error(&self) -> f64 {
        C64::new(self.lhs_re - self.rhs, self.lhs_im).norm()
    }
}

/// Precomputed data for `⟨1, e^{tM^{q/√t}} ζ⟩` versus `e^{-(q, Dq)/2}`.
#[derive(Clone, Debug)]
pub struct CltSolver {
    kernel: RateKernel,
    gibbs: GibbsState,
    diffusion: DiffusionTensor,
    radius: f64,
    method: EvolveMethod,
}

impl CltSolver {
    pub fn new(kernel: &RateKernel, method: EvolveMethod) -> Result<Self> {
        let grid = kernel.grid();
        let gibbs = GibbsState::from_energy(&kernel.field().energy, grid.weight(), kernel.beta())?;
        let diffusion = diffusion_resolvent(kernel)?;
        let gap = spectral_gap(kernel)?;
        let speed = kernel.field().max_speed();
        let radius = if speed > 0.0 { gap / speed } else { f64::INFINITY };
        Ok(Self {
            kernel: kernel.clone(),
            gibbs,
            diffusion,
            radius,
            method,
        })
    }

    /// Tilt radius within which the leading eigenvalue stays isolated.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn diffusion(&self) -> &DiffusionTensor {
        &self.diffusion
    }

    pub fn check(&self, q: &[f64], t: f64) -> Result<(C64, f64)> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("CLT time must be positive, got {t}")));
        }
        let kappa: Vec<f64> = q.iter().map(|v| v / t.sqrt()).collect();
        let size = kappa.iter().map(|v| v * v).sum::<f64>().sqrt();
        if size > self.radius {
            return Err(Error::Domain(format!(
                "tilt |q|/√t = {size:.4} exceeds the certified radius {:.4}",
                self.radius
            )));
        }
        let kc: Vec<C64> = kappa.iter().map(|&v| C64::new(v, 0.0)).collect();
        let m = build_M(&self.kernel, &kc)?;
        let zeta: Vec<C64> = self.gibbs.values.iter().map(|&v| C64::new(v, 0.0)).collect();
        let evolved = evolve_fiber(&m, &zeta, t, self.method)?;
        let lhs = evolved.iter().sum::<C64>() * m.weight;
        let rhs = (-0.5 * self.diffusion.quadratic_form(q)).exp();
        Ok((lhs, rhs))
    }
}

/// `(⟨1, e^{tM^{q/√t}} ζ⟩, e^{-(q, Dq)/2})` for stationary initial data.
pub fn clt_check(kernel: &RateKernel, q: &[f64], t: f64) -> Result<(C64, f64)> {
    CltSolver::new(kernel, EvolveMethod::Dense)?.check(q, t)
}

/// Stationary velocity autocorrelation `C_ab(t) = ⟨∂_aε, e^{tM^0}(∂_bε ζ)⟩`
/// at the given lags, computed from the semigroup.
pub fn exact_vacf(kernel: &RateKernel, lags: &[f64]) -> Result<Vec<Vec<f64>>> {
    let grid = kernel.grid();
    let d = grid.dim();
    let w = grid.weight();
    let field = kernel.field();
    let gibbs = GibbsState::from_energy(&field.energy, w, kernel.beta())?;
    let m0 = build_M0_real(kernel);
    let n = m0.nrows();
    // M^0 = W^{-1} M̃ W with M̃ = Q Λ Qᵀ
    let e_min = field.energy.iter().copied().fold(f64::INFINITY, f64::min);
    let c: Vec<f64> = field
        .energy
        .iter()
        .map(|e| (0.5 * kernel.beta() * (e - e_min)).exp())
        .collect();
    let mt = DMatrix::from_fn(n, n, |i, j| m0[(i, j)] * c[i] / c[j]);
    let sym = SymmetricEigen::new((&mt + mt.transpose()) * 0.5);
    let q = &sym.eigenvectors;
    let mut out = Vec::with_capacity(lags.len());
    // projections of the weighted start and end vectors onto the eigenbasis
    let starts: Vec<DVector<f64>> = (0..d)
        .map(|b| {
            let v = DVector::from_fn(n, |i, _| c[i] * field.gradient[b][i] * gibbs.values[i]);
            q.transpose() * v
        })
        .collect();
    let ends: Vec<DVector<f64>> = (0..d)
        .map(|a| {
            let v = DVector::from_fn(n, |i, _| field.gradient[a][i] / c[i]);
            q.transpose() * v
        })
        .collect();
    for &t in lags {
        let decay = sym.eigenvalues.map(|l| (l * t).exp());
        let mut row = Vec::with_capacity(d * d);
        for a in 0..d {
            for b in 0..d {
                let v: f64 = (0..decay.len()).map(|k| ends[a][k] * decay[k] * starts[b][k]).sum();
                row.push(w * v);
            }
        }
        out.push(row);
    }
    Ok(out)
}

/// Checks `M` is a Boltzmann generator.
pub fn require_boltzmann(m: &FiberOperator) -> Result<()> {
    if m.kind == OperatorKind::Boltzmann {
        Ok(())
    } else {
        Err(Error::Config("operation needs a Boltzmann generator".into()))
    }
}
