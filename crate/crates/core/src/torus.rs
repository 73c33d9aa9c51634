// Copyright 2026 The kdlab Authors
// SPDX-License-Identifier: Apache-2.0

//! Momentum torus discretization and lattice dispersion laws.
//!
//! Grid points sit at `k_m = -π + 2πm/N` on every axis, so both `k = 0` and
//! `k = π` are grid points and the grid is closed under `k -> -k`.
//! Dispersion laws are real cosine polynomials; on the grid they are evaluated
//! through integer phase tables, which makes `ε(-k) = ε(k)` and
//! `∇ε(-k) = -∇ε(k)` hold bit-for-bit.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

/// Uniform product grid on the `d`-torus `[-π, π)^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
    len: usize,
    axis: Vec<f64>,
}

impl TorusGrid {
    /// Builds the grid with `n` points per axis.
    ///
    /// `n` must be even (negation closure) and at least 4; `dim` is 1, 2 or 3.
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Config(format!("torus dimension must be 1..=3, got {dim}")));
        }
        if n < 4 || !n.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "points per axis must be even and at least 4, got {n}"
            )));
        }
        let half = (n / 2) as i64;
        let axis = (0..n as i64).map(|m| 2.0 * PI * (m - half) as f64 / n as f64).collect();
        Ok(Self {
            dim,
            n,
            len: n.pow(dim as u32),
            axis,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of grid points, `N^d`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Quadrature weight `(2π/N)^d`.
    pub fn weight(&self) -> f64 {
        (2.0 * PI / self.n as f64).powi(self.dim as i32)
    }

    /// Per-axis coordinates `k_m`, `m = 0..N`.
    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    /// Multi-index of a linear index; axis 0 varies slowest.
    pub fn multi_index(&self, mut index: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for j in (0..self.dim).rev() {
            out[j] = index % self.n;
            index /= self.n;
        }
        out
    }

    pub fn linear_index(&self, multi: &[usize]) -> usize {
        multi[..self.dim].iter().fold(0, |acc, &m| acc * self.n + m)
    }

    /// Momentum vector of grid point `index`.
    pub fn point(&self, index: usize) -> Vec<f64> {
        let m = self.multi_index(index);
        (0..self.dim).map(|j| self.axis[m[j]]).collect()
    }

    /// Index of the grid point at `-k mod 2π`.
    pub fn negate(&self, index: usize) -> usize {
        let mut m = self.multi_index(index);
        for mj in m.iter_mut().take(self.dim) {
            *mj = (self.n - *mj) % self.n;
        }
        self.linear_index(&m)
    }

    /// `weight * Σ f(k_i)`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weight() * values.iter().sum::<f64>()
    }
}

/// One term `coeff * cos(freq · k)` of a dispersion law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CosineTerm {
    pub freq: Vec<i32>,
    pub coeff: f64,
}

/// Particle dispersion law `ε(k)` on the torus.
///
/// Only cosine polynomials are admitted: they are inversion symmetric and
/// entire, and their grid quadrature is exact below the Nyquist degree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DispersionLaw {
    /// `ε(k) = Σ_j (2 - 2 cos k_j)`.
    NearestNeighborCosine { dim: usize },
    /// `ε(k) = Σ coeff * cos(freq · k)`.
    Trigonometric { dim: usize, terms: Vec<CosineTerm> },
}

impl DispersionLaw {
    pub fn cosine(dim: usize) -> Self {
        DispersionLaw::NearestNeighborCosine { dim }
    }

    /// A user cosine polynomial; every frequency vector must have `dim`
    /// components.
    pub fn trigonometric(dim: usize, terms: Vec<CosineTerm>) -> Result<Self> {
        if let Some(t) = terms.iter().find(|t| t.freq.len() != dim) {
            return Err(Error::Config(format!(
                "cosine term {:?} does not have {dim} frequency components",
                t.freq
            )));
        }
        if terms.iter().any(|t| !t.coeff.is_finite()) {
            return Err(Error::Config("non-finite dispersion coefficient".into()));
        }
        Ok(DispersionLaw::Trigonometric { dim, terms })
    }

    /// A constant law, `∇ε ≡ 0`. Violates the non-degeneracy condition;
    /// useful for testing free flight.
    pub fn flat(dim: usize) -> Self {
        DispersionLaw::Trigonometric {
            dim,
            terms: vec![CosineTerm {
                freq: vec![0; dim],
                coeff: 1.0,
            }],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DispersionLaw::NearestNeighborCosine { dim } | DispersionLaw::Trigonometric { dim, .. } => *dim,
        }
    }

    /// The law expanded into cosine terms.
    pub fn terms(&self) -> Vec<CosineTerm> {
        match self {
            DispersionLaw::NearestNeighborCosine { dim } => {
                let mut terms = vec![CosineTerm {
                    freq: vec![0; *dim],
                    coeff: 2.0 * *dim as f64,
                }];
                for j in 0..*dim {
                    let mut freq = vec![0; *dim];
                    freq[j] = 1;
                    terms.push(CosineTerm { freq, coeff: -2.0 });
                }
                terms
            }
            DispersionLaw::Trigonometric { terms, .. } => terms.clone(),
        }
    }

    /// Largest |frequency| component appearing in the law.
    pub fn max_frequency(&self) -> i32 {
        self.terms()
            .iter()
            .flat_map(|t| t.freq.iter().map(|f| f.abs()))
            .max()
            .unwrap_or(0)
    }

    /// Half-width of the strip in which `ε` can be evaluated without
    /// overflow. Cosine polynomials are entire; the bound is numerical.
    pub fn strip_half_width(&self) -> f64 {
        match self.max_frequency() {
            0 => f64::INFINITY,
            f => 700.0 / f as f64,
        }
    }

    /// `ε(k)` at an arbitrary real momentum.
    pub fn energy(&self, k: &[f64]) -> f64 {
        self.terms().iter().map(|t| t.coeff * dot_i(&t.freq, k).cos()).sum()
    }

    /// `∇ε(k)` at an arbitrary real momentum.
    pub fn gradient(&self, k: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        for t in self.terms() {
            let s = dot_i(&t.freq, k).sin();
            for (gj, &nj) in g.iter_mut().zip(&t.freq) {
                *gj -= t.coeff * nj as f64 * s;
            }
        }
        g
    }

    /// Analytic continuation `ε(k)` for complex momentum.
    pub fn energy_complex(&self, k: &[C64]) -> C64 {
        self.terms()
            .iter()
            .map(|t| {
                let phase: C64 = t.freq.iter().zip(k).map(|(&n, &kj)| kj * n as f64).sum();
                phase.cos() * t.coeff
            })
            .sum()
    }

    /// Checks that `k ↦ (υ, ∇ε(k))` is not identically zero on the grid for
    /// any direction `υ`, i.e. that the gradient Gram matrix is
    /// positive-definite.
    pub fn check_nondegenerate(&self, field: &DispersionField) -> Result<()> {
        let d = field.dim();
        let gram = DMatrix::from_fn(d, d, |a, b| {
            field.gradient[a]
                .iter()
                .zip(&field.gradient[b])
                .map(|(x, y)| x * y)
                .sum::<f64>()
                / field.len() as f64
        });
        let smallest = SymmetricEigen::new(gram).eigenvalues.min();
        if smallest > 1e-12 {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "dispersion gradient vanishes identically along some direction (Gram eigenvalue {smallest:e})"
            )))
        }
    }
}

fn dot_i(freq: &[i32], k: &[f64]) -> f64 {
    freq.iter().zip(k).map(|(&n, &kj)| n as f64 * kj).sum()
}

/// `ε` and `∇ε` sampled on a grid; `gradient[j][i] = ∂_j ε(k_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DispersionField {
    pub energy: Vec<f64>,
    pub gradient: Vec<Vec<f64>>,
}

impl DispersionField {
    pub fn dim(&self) -> usize {
        self.gradient.len()
    }

    pub fn len(&self) -> usize {
        self.energy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energy.is_empty()
    }

    /// Gradient vector at grid point `i`.
    pub fn velocity(&self, i: usize) -> Vec<f64> {
        self.gradient.iter().map(|g| g[i]).collect()
    }

    /// Largest Euclidean norm of `∇ε` on the grid.
    pub fn max_speed(&self) -> f64 {
        (0..self.len())
            .map(|i| self.gradient.iter().map(|g| g[i] * g[i]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// Evaluates `ε` and `∇ε` on every grid point.
pub fn eval_dispersion(grid: &TorusGrid, law: &DispersionLaw) -> Result<DispersionField> {
    if law.dim() != grid.dim() {
        return Err(Error::Config(format!(
            "dispersion law has dimension {} but the grid has {}",
            law.dim(),
            grid.dim()
        )));
    }
    let n = grid.n();
    let (cos_tab, sin_tab) = phase_tables(n);
    let half = (n / 2) as i64;
    let terms = law.terms();
    let d = grid.dim();
    let mut energy = vec![0.0; grid.len()];
    let mut gradient = vec![vec![0.0; grid.len()]; d];
    for i in 0..grid.len() {
        let m = grid.multi_index(i);
        for t in &terms {
            let phase: i64 = t
                .freq
                .iter()
                .zip(&m[..d])
                .map(|(&f, &mj)| f as i64 * (mj as i64 - half))
                .sum();
            let p = phase.rem_euclid(n as i64) as usize;
            energy[i] += t.coeff * cos_tab[p];
            for j in 0..d {
                gradient[j][i] -= t.coeff * t.freq[j] as f64 * sin_tab[p];
            }
        }
    }
    Ok(DispersionField { energy, gradient })
}

/// `cos(2πp/N)` and `sin(2πp/N)` with the reflection symmetries imposed
/// exactly.
fn phase_tables(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut c = vec![0.0; n];
    let mut s = vec![0.0; n];
    for p in 0..=n / 2 {
        let a = 2.0 * PI * p as f64 / n as f64;
        c[p] = a.cos();
        s[p] = a.sin();
    }
    s[0] = 0.0;
    s[n / 2] = 0.0;
    c[0] = 1.0;
    c[n / 2] = -1.0;
    if n.is_multiple_of(4) {
        c[n / 4] = 0.0;
        s[n / 4] = 1.0;
    }
    for p in n / 2 + 1..n {
        c[p] = c[n - p];
        s[p] = -s[n - p];
    }
    (c, s)
}

/// The strip constants `c_ε(δ)` and `b_d(γ)` of the a-priori estimate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalyticityConstants {
    /// Largest sampled `|Im ε(k + κ)|` over `|Im κ| = δ`.
    pub c_eps_sample: f64,
    /// Sample maximum plus a one-step Richardson correction from the
    /// half-resolution sample.
    pub c_eps: f64,
    /// `Σ_{x ∈ Z^d} e^{-γ|x|}` with the Euclidean norm.
    pub b_d: f64,
    /// Certified bound on the lattice-sum truncation error.
    pub b_d_tail_bound: f64,
}

/// Computes `c_ε(δ)` by sampling the boundary `|Im κ| = δ` and `b_d(γ)` by a
/// truncated lattice sum.
///
/// `resolution` is the grid size `N` the sample density is tied to: the real
/// part is sampled at `64 N` points per axis in one dimension (fewer per axis
/// in higher dimension, keeping the total comparable).
pub fn analyticity_constants(
    law: &DispersionLaw,
    delta: f64,
    gamma: f64,
    resolution: usize,
) -> Result<AnalyticityConstants> {
    if !(delta > 0.0 && delta < law.strip_half_width()) {
        return Err(Error::Domain(format!(
            "strip half-width δ = {delta} outside (0, {})",
            law.strip_half_width()
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::Domain(format!("decay parameter γ = {gamma} must be positive")));
    }
    let d = law.dim();
    let per_axis = match d {
        1 => 64 * resolution,
        2 => ((64 * resolution) as f64).sqrt().ceil() as usize * 4,
        _ => ((64 * resolution) as f64).cbrt().ceil() as usize * 4,
    }
    .max(16)
    .next_multiple_of(8);
    let fine = sample_imaginary_max(law, delta, per_axis);
    let coarse = sample_imaginary_max(law, delta, per_axis / 2);
    let (b_d, tail) = lattice_exponential_sum(d, gamma)?;
    Ok(AnalyticityConstants {
        c_eps_sample: fine,
        c_eps: fine + (fine - coarse).max(0.0) / 3.0,
        b_d,
        b_d_tail_bound: tail,
    })
}

fn imaginary_directions(d: usize) -> Vec<Vec<f64>> {
    match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..64)
            .map(|i| {
                let a = 2.0 * PI * i as f64 / 64.0;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            // Fibonacci sphere plus the coordinate axes
            let count = 128;
            let golden = PI * (3.0 - 5f64.sqrt());
            let mut dirs: Vec<Vec<f64>> = (0..count)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let a = golden * i as f64;
                    vec![r * a.cos(), r * a.sin(), z]
                })
                .collect();
            for j in 0..3 {
                for s in [1.0, -1.0] {
                    let mut v = vec![0.0; 3];
                    v[j] = s;
                    dirs.push(v);
                }
            }
            dirs
        }
    }
}

fn sample_imaginary_max(law: &DispersionLaw, delta: f64, per_axis: usize) -> f64 {
    let d = law.dim();
    let total = per_axis.pow(d as u32);
    let terms = law.terms();
    // Im[c cos(n·(a + iδυ))] = -c sin(n·a) sinh(δ n·υ)
    let stretch: Vec<Vec<f64>> = imaginary_directions(d)
        .iter()
        .map(|dir| {
            terms
                .iter()
                .map(|t| t.coeff * (delta * t.freq.iter().zip(dir).map(|(&n, &u)| n as f64 * u).sum::<f64>()).sinh())
                .collect()
        })
        .collect();
    let mut best: f64 = 0.0;
    let mut sines = vec![0.0; terms.len()];
    for idx in 0..total {
        let mut rest = idx;
        let mut re = [0.0; 3];
        for r in re.iter_mut().take(d) {
            *r = -PI + 2.0 * PI * (rest % per_axis) as f64 / per_axis as f64;
            rest /= per_axis;
        }
        for (s, t) in sines.iter_mut().zip(&terms) {
            *s = dot_i(&t.freq, &re[..d]).sin();
        }
        for row in &stretch {
            let im: f64 = row.iter().zip(&sines).map(|(a, b)| a * b).sum();
            best = best.max(im.abs());
        }
    }
    best
}

/// `Σ_{x ∈ Z^d} e^{-γ|x|_2}` over the cube `|x|_∞ ≤ L`, and a bound on the
/// omitted shells, which is kept below `1e-14` absolute or relative.
fn lattice_exponential_sum(d: usize, gamma: f64) -> Result<(f64, f64)> {
    const TOL: f64 = 1e-14;
    // |x|_2 ≥ |x|_∞ and the shell |x|_∞ = m has at most 2d (2m+1)^{d-1} points
    let shell_bound = |m: usize| 2.0 * d as f64 * (2.0 * m as f64 + 1.0).powi(d as i32 - 1) * (-gamma * m as f64).exp();
    let tail = |l: usize| {
        let mut acc = 0.0;
        let mut m = l + 1;
        loop {
            let term = shell_bound(m);
            let ratio = shell_bound(m + 1) / term;
            if ratio < 1.0 {
                // remaining terms decay at least geometrically with this ratio
                // since the shell ratio is increasing towards e^{-γ}
                acc += term / (1.0 - ratio.max((-gamma).exp()));
                break;
            }
            acc += term;
            m += 1;
        }
        acc
    };
    let cap = match d {
        1 => 1_000_000,
        2 => 4_000,
        _ => 400,
    };
    let octant = |l: usize| {
        let side = l + 1;
        // Neumaier summation; the terms span many orders of magnitude
        let (mut sum, mut comp) = (0.0f64, 0.0f64);
        for idx in 0..side.pow(d as u32) {
            let mut rest = idx;
            let mut r2 = 0.0;
            let mut mult = 1.0;
            for _ in 0..d {
                let x = rest % side;
                rest /= side;
                r2 += (x * x) as f64;
                if x != 0 {
                    mult *= 2.0;
                }
            }
            let term = mult * (-gamma * f64::sqrt(r2)).exp();
            let t = sum + term;
            comp += if sum.abs() >= term.abs() {
                (sum - t) + term
            } else {
                (term - t) + sum
            };
            sum = t;
        }
        sum + comp
    };
    let mut l = ((30.0 / gamma).ceil() as usize).max(4);
    loop {
        if l > cap {
            return Err(Error::Domain(format!(
                "lattice sum for γ = {gamma} needs a truncation beyond {cap}"
            )));
        }
        // the sum is at least the continuum ball integral's order; test
        // the tail against the running total
        let t = tail(l);
        if t <= TOL {
            return Ok((octant(l), t));
        }
        let total = octant(l);
        if t <= TOL * total {
            return Ok((total, t));
        }
        l *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_d1_n4() {
        let g = TorusGrid::new(1, 4).unwrap();
        assert_eq!(g.axis(), &[-PI, -PI / 2.0, 0.0, PI / 2.0]);
        assert_eq!(g.weight(), PI / 2.0);
        assert_eq!(g.len(), 4);
    }

    #[test]
    fn grid_d2_n4() {
        let g = TorusGrid::new(2, 4).unwrap();
        assert_eq!(g.len(), 16);
        assert!((g.weight() - (PI / 2.0).powi(2)).abs() < 1e-15);
        assert!((g.weight() * g.len() as f64 - (2.0 * PI).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn odd_or_small_n_rejected() {
        assert!(matches!(TorusGrid::new(1, 3), Err(Error::Config(_))));
        assert!(matches!(TorusGrid::new(1, 2), Err(Error::Config(_))));
        assert!(matches!(TorusGrid::new(4, 8), Err(Error::Config(_))));
    }

    #[test]
    fn negation_closure() {
        for d in 1..=3 {
            let g = TorusGrid::new(d, 6).unwrap();
            for i in 0..g.len() {
                let j = g.negate(i);
                assert_eq!(g.negate(j), i);
                let (a, b) = (g.point(i), g.point(j));
                for (x, y) in a.iter().zip(&b) {
                    let s = (x + y) / (2.0 * PI);
                    assert!((s - s.round()).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn cosine_values() {
        let g = TorusGrid::new(1, 8).unwrap();
        let f = eval_dispersion(&g, &DispersionLaw::cosine(1)).unwrap();
        // k = -π, ..., 0 at index 4, π/2 at index 6
        assert_eq!(f.energy[4], 0.0);
        assert_eq!(f.gradient[0][4], 0.0);
        assert_eq!(f.energy[0], 4.0);
        assert_eq!(f.gradient[0][0], 0.0);
        assert_eq!(f.gradient[0][6], 2.0);
        assert!(f.energy.iter().all(|&e| e >= 0.0));
    }

    #[test]
    fn gradient_is_exactly_odd() {
        let law = DispersionLaw::trigonometric(
            2,
            vec![
                CosineTerm {
                    freq: vec![1, 0],
                    coeff: -1.3,
                },
                CosineTerm {
                    freq: vec![1, 2],
                    coeff: 0.4,
                },
                CosineTerm {
                    freq: vec![0, 3],
                    coeff: -0.2,
                },
            ],
        )
        .unwrap();
        let g = TorusGrid::new(2, 10).unwrap();
        let f = eval_dispersion(&g, &law).unwrap();
        for i in 0..g.len() {
            let j = g.negate(i);
            assert_eq!(f.energy[i], f.energy[j]);
            for a in 0..2 {
                assert_eq!(f.gradient[a][i], -f.gradient[a][j]);
            }
        }
    }

    #[test]
    fn grid_matches_pointwise_evaluation() {
        let law = DispersionLaw::cosine(3);
        let g = TorusGrid::new(3, 6).unwrap();
        let f = eval_dispersion(&g, &law).unwrap();
        for i in 0..g.len() {
            let k = g.point(i);
            assert!((f.energy[i] - law.energy(&k)).abs() < 1e-13);
            let grad = law.gradient(&k);
            for a in 0..3 {
                assert!((f.gradient[a][i] - grad[a]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn flat_law_is_degenerate() {
        let g = TorusGrid::new(1, 8).unwrap();
        let law = DispersionLaw::flat(1);
        let f = eval_dispersion(&g, &law).unwrap();
        assert!(law.check_nondegenerate(&f).is_err());
        let f = eval_dispersion(&g, &DispersionLaw::cosine(1)).unwrap();
        assert!(DispersionLaw::cosine(1).check_nondegenerate(&f).is_ok());
    }

    #[test]
    fn c_eps_cosine_closed_form() {
        let law = DispersionLaw::cosine(1);
        for delta in [0.1, 0.5, 1.0] {
            let c = analyticity_constants(&law, delta, 1.0, 16).unwrap();
            let exact = 2.0 * f64::sinh(delta);
            assert!((c.c_eps_sample - exact).abs() < 1e-12 * exact, "{c:?}");
            assert!(c.c_eps >= c.c_eps_sample);
        }
    }

    #[test]
    fn b1_closed_form() {
        let law = DispersionLaw::cosine(1);
        for gamma in [0.3, 1.0, 2.5] {
            let c = analyticity_constants(&law, 0.5, gamma, 8).unwrap();
            let exact = 1.0 / (gamma / 2.0).tanh();
            assert!((c.b_d - exact).abs() < 1e-12 * exact, "{} vs {}", c.b_d, exact);
        }
    }

    #[test]
    fn b_d_tends_to_one() {
        for d in 1..=3 {
            let law = DispersionLaw::cosine(d);
            let c = analyticity_constants(&law, 0.5, 60.0, 4).unwrap();
            assert!((c.b_d - 1.0).abs() < 1e-20_f64.max(2.0 * d as f64 * (-60f64).exp() * 1.01));
        }
    }

    #[test]
    fn strip_violation() {
        let law = DispersionLaw::cosine(1);
        assert!(matches!(
            analyticity_constants(&law, 0.0, 1.0, 8),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            analyticity_constants(&law, 1e4, 1.0, 8),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            analyticity_constants(&law, 0.5, -1.0, 8),
            Err(Error::Domain(_))
        ));
    }
}
