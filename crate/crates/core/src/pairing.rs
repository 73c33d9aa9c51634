// Copyright 2026 The kdlab Authors
// SPDX-License-Identifier: Apache-2.0

//! Pairings of time-ordered indices: enumeration, irreducible
//! decomposition, correlation weights and the ordered-simplex integrals
//! `χ_t(π)`.
//!
//! Indices are 1-based throughout. A pairing with index set `{1, …, 2n}` is
//! *complete*; any other set of disjoint pairs is a general pair set.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::quadrature::GaussLegendre;
use crate::{Error, Result, C64};

/// Largest `n` accepted by [`enumerate_pairings`]; `(2n-1)!!` grows fast.
pub const MAX_ENUMERATE: usize = 8;

/// A set of disjoint index pairs `(r, s)` with `r < s`, sorted by `r`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Pairing {
    pairs: Vec<(usize, usize)>,
}

impl Pairing {
    /// Normalizes orientation and order; rejects repeated or zero indices.
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut pairs: Vec<(usize, usize)> = pairs.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
        pairs.sort_unstable();
        let mut seen: Vec<usize> = pairs.iter().flat_map(|&(r, s)| [r, s]).collect();
        seen.sort_unstable();
        if seen.first() == Some(&0) {
            return Err(Error::Config("pair indices start at 1".into()));
        }
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("pair indices are not distinct in {pairs:?}")));
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Number of pairs `n`.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Sorted list of the `2n` indices.
    pub fn support(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.pairs.iter().flat_map(|&(r, s)| [r, s]).collect();
        v.sort_unstable();
        v
    }

    /// Whether the index set is exactly `{1, …, 2n}`.
    pub fn is_complete(&self) -> bool {
        self.support().iter().enumerate().all(|(i, &v)| v == i + 1)
    }

    /// The complete pairing with the same order pattern.
    pub fn canonical(&self) -> Pairing {
        let support = self.support();
        let rank = |v: usize| support.binary_search(&v).expect("index in support") + 1;
        Pairing {
            pairs: self.pairs.iter().map(|&(r, s)| (rank(r), rank(s))).collect(),
        }
    }

    /// The pair set with pair `i` removed.
    pub fn without(&self, i: usize) -> Pairing {
        let mut pairs = self.pairs.clone();
        pairs.remove(i);
        Pairing { pairs }
    }
}

impl fmt::Display for Pairing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.pairs.iter().map(|(r, s)| format!("({r},{s})")).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

/// All complete pairings of `{1, …, 2n}` in lexicographic order.
pub fn enumerate_pairings(n: usize) -> Result<Vec<Pairing>> {
    if n == 0 || n > MAX_ENUMERATE {
        return Err(Error::Config(format!(
            "enumeration supports 1 ≤ n ≤ {MAX_ENUMERATE}, got {n}"
        )));
    }
    let mut out = Vec::with_capacity(double_factorial(2 * n - 1));
    let mut used = vec![false; 2 * n + 1];
    let mut current = Vec::with_capacity(n);
    fn rec(n: usize, used: &mut [bool], current: &mut Vec<(usize, usize)>, out: &mut Vec<Pairing>) {
        let Some(r) = (1..=2 * n).find(|&i| !used[i]) else {
            out.push(Pairing { pairs: current.clone() });
            return;
        };
        used[r] = true;
        for s in r + 1..=2 * n {
            if !used[s] {
                used[s] = true;
                current.push((r, s));
                rec(n, used, current, out);
                current.pop();
                used[s] = false;
            }
        }
        used[r] = false;
    }
    rec(n, &mut used, &mut current, &mut out);
    Ok(out)
}

/// `m!! = m (m-2) (m-4) …`.
pub fn double_factorial(m: usize) -> usize {
    (1..=m).rev().step_by(2).product()
}

/// Positions (in the sorted support) after which every pair seen so far is
/// closed, excluding the end.
fn cut_points(sigma: &Pairing) -> Vec<usize> {
    let support = sigma.support();
    let closes: std::collections::HashSet<usize> = sigma.pairs.iter().map(|&(_, s)| s).collect();
    let mut open = 0i64;
    let mut cuts = Vec::new();
    for (pos, v) in support.iter().enumerate() {
        if closes.contains(v) {
            open -= 1;
        } else {
            open += 1;
        }
        if open == 0 && pos + 1 < support.len() {
            cuts.push(pos + 1);
        }
    }
    cuts
}

/// True iff no initial block of pairs lies entirely below the rest.
pub fn is_irreducible(sigma: &Pairing) -> bool {
    !sigma.is_empty() && cut_points(sigma).is_empty()
}

/// Components of a pair set, each with its original index set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IrreducibleDecomposition {
    /// Components as complete pairings.
    pub components: Vec<Pairing>,
    /// Original sorted indices of each component.
    pub supports: Vec<Vec<usize>>,
    /// Smallest original index of each component minus one.
    pub offsets: Vec<usize>,
}

impl IrreducibleDecomposition {
    /// Rebuilds the original pair set.
    pub fn reassemble(&self) -> Pairing {
        let mut pairs = Vec::new();
        for (c, support) in self.components.iter().zip(&self.supports) {
            pairs.extend(c.pairs.iter().map(|&(r, s)| (support[r - 1], support[s - 1])));
        }
        pairs.sort_unstable();
        Pairing { pairs }
    }
}

pub fn decompose_irreducible(pi: &Pairing) -> IrreducibleDecomposition {
    let support = pi.support();
    let mut bounds = vec![0];
    bounds.extend(cut_points(pi));
    bounds.push(support.len());
    let mut components = Vec::new();
    let mut supports = Vec::new();
    let mut offsets = Vec::new();
    for w in bounds.windows(2) {
        let block = &support[w[0]..w[1]];
        let (lo, hi) = (block[0], block[block.len() - 1]);
        let sub = Pairing {
            pairs: pi.pairs.iter().copied().filter(|&(r, _)| r >= lo && r <= hi).collect(),
        };
        components.push(sub.canonical());
        supports.push(block.to_vec());
        offsets.push(lo - 1);
    }
    IrreducibleDecomposition {
        components,
        supports,
        offsets,
    }
}

/// The distinguished irreducible pairing in which every interior pair is
/// needed for irreducibility: `(1,3), (2,5), (4,7), …, (2n-2, 2n)`.
pub fn minimal_irreducible(n: usize) -> Result<Pairing> {
    match n {
        0 => Err(Error::Config("pairings need n ≥ 1".into())),
        1 => Pairing::new(vec![(1, 2)]),
        _ => {
            let mut pairs = vec![(1, 3)];
            pairs.extend((1..n - 1).map(|i| (2 * i, 2 * i + 3)));
            pairs.push((2 * n - 2, 2 * n));
            Pairing::new(pairs)
        }
    }
}

/// Checks the removal property of [`minimal_irreducible`]: dropping any pair
/// other than the first or last leaves a reducible pair set. Returns the
/// offending pair indices.
pub fn removal_violations(pi: &Pairing) -> Vec<usize> {
    let n = pi.len();
    (1..n.saturating_sub(1))
        .filter(|&i| is_irreducible(&pi.without(i)))
        .collect()
}

/// Whether the operator at position `r` acts from the left or the right.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Side {
    Left,
    Right,
}

/// `ζ_π = Π_{(r,s)∈π} δ_{x_r,x_s} ψ̂(±(t_s - t_r))` with `+` when
/// `l_r = Left`. Coordinates are indexed by pair index minus one.
pub fn zeta_weight<F>(pi: &Pairing, times: &[f64], sites: &[Vec<i64>], sides: &[Side], psi_hat: F) -> Result<C64>
where
    F: Fn(f64) -> C64,
{
    let top = pi.support().last().copied().unwrap_or(0);
    if times.len() < top || sites.len() < top || sides.len() < top {
        return Err(Error::Config(format!(
            "pairing uses index {top} but only {} times, {} sites and {} labels were given",
            times.len(),
            sites.len(),
            sides.len()
        )));
    }
    let mut acc = C64::new(1.0, 0.0);
    for &(r, s) in &pi.pairs {
        if sites[r - 1] != sites[s - 1] {
            return Ok(C64::new(0.0, 0.0));
        }
        let dt = times[s - 1] - times[r - 1];
        acc *= match sides[r - 1] {
            Side::Left => psi_hat(dt),
            Side::Right => psi_hat(-dt),
        };
    }
    Ok(acc)
}

/// Value and error estimate of an integral.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// How [`chi`] integrates over the ordered simplex.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChiMethod {
    /// Nested Gauss–Legendre with order doubling.
    Quadrature,
    /// Randomly shifted Kronecker lattice; `points` per shift.
    QuasiMonteCarlo { points: usize, seed: u64 },
}

/// Nested-rule budget: orders whose tensor size exceeds this are skipped.
const QUADRATURE_BUDGET: f64 = 4e7;
const QUADRATURE_ORDERS: [usize; 8] = [4, 6, 8, 12, 16, 24, 32, 48];

/// `χ_t(π) = ∫_{0=t₁≤…≤t_{2n}=t} Π_{(r,s)∈π} h(t_s - t_r) dt₂…dt_{2n-1}`.
pub fn chi<H>(pi: &Pairing, t: f64, h: &H, method: ChiMethod) -> Result<Estimate>
where
    H: Fn(f64) -> f64 + ?Sized,
{
    if !pi.is_complete() {
        return Err(Error::Config(format!("χ needs a complete pairing, got {pi}")));
    }
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("χ needs t ≥ 0, got {t}")));
    }
    let inner = 2 * pi.len() - 2;
    let integrand = |times: &[f64]| -> f64 { pi.pairs.iter().map(|&(r, s)| h(times[s - 1] - times[r - 1])).product() };
    if inner == 0 {
        return Ok(Estimate {
            value: integrand(&[0.0, t]),
            error: 0.0,
        });
    }
    match method {
        ChiMethod::Quadrature => {
            let mut prev: Option<f64> = None;
            let mut last = Estimate {
                value: f64::NAN,
                error: f64::INFINITY,
            };
            for &q in QUADRATURE_ORDERS.iter() {
                if (q as f64).powi(inner as i32) > QUADRATURE_BUDGET {
                    break;
                }
                let rule = GaussLegendre::new(q);
                let mut times = vec![0.0; inner + 2];
                times[inner + 1] = t;
                let v = nested(&rule, &mut times, 1, inner, t, &integrand);
                if let Some(p) = prev {
                    last = Estimate {
                        value: v,
                        error: (v - p).abs(),
                    };
                    if (v - p).abs() <= 1e-10 * v.abs() || v == p {
                        return Ok(last);
                    }
                }
                prev = Some(v);
            }
            Ok(last)
        }
        ChiMethod::QuasiMonteCarlo { points, seed } => {
            if points == 0 {
                return Err(Error::Config("quasi-Monte Carlo needs at least one point".into()));
            }
            let shifts = 16;
            let alpha = kronecker_generator(inner);
            let volume = t.powi(inner as i32) / (1..=inner).map(|k| k as f64).product::<f64>();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut means = Vec::with_capacity(shifts);
            let mut times = vec![0.0; inner + 2];
            times[inner + 1] = t;
            for _ in 0..shifts {
                let shift: Vec<f64> = (0..inner).map(|_| rng.random::<f64>()).collect();
                let mut acc = 0.0;
                for i in 1..=points {
                    for j in 0..inner {
                        times[j + 1] = t * (shift[j] + i as f64 * alpha[j]).fract();
                    }
                    times[1..=inner].sort_by(f64::total_cmp);
                    acc += integrand(&times);
                }
                means.push(volume * acc / points as f64);
            }
            let m = means.iter().sum::<f64>() / shifts as f64;
            let var = means.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (shifts as f64 - 1.0);
            Ok(Estimate {
                value: m,
                error: (var / shifts as f64).sqrt(),
            })
        }
    }
}

/// `∫_{t_{k-1}}^{t} dt_k …` for `k = level..=inner`.
fn nested<F: Fn(&[f64]) -> f64>(
    rule: &GaussLegendre,
    times: &mut [f64],
    level: usize,
    inner: usize,
    t: f64,
    f: &F,
) -> f64 {
    if level > inner {
        return f(times);
    }
    let lo = times[level - 1];
    if lo >= t {
        return 0.0;
    }
    let mut acc = 0.0;
    let nodes: Vec<(f64, f64)> = rule.mapped(lo, t).collect();
    for (x, w) in nodes {
        times[level] = x;
        acc += w * nested(rule, times, level + 1, inner, t, f);
    }
    acc
}

/// `∫_0^∞ e^{-zt} χ_t(π) dt`, written as an integral over the `2n-1` gaps
/// `u_k = t_{k+1} - t_k ∈ (0, ∞)` and mapped by `u = s / (1 - s)`. The map
/// sends exponential tails to functions flat at `s = 1` and algebraic tails
/// `u^{-m}` to polynomials; a logarithmic map would leave `(1 - s)^z`
/// singularities for non-integer `z`.
pub fn laplace_chi<H>(pi: &Pairing, z: f64, h: &H) -> Result<Estimate>
where
    H: Fn(f64) -> f64 + ?Sized,
{
    if !pi.is_complete() {
        return Err(Error::Config(format!("χ needs a complete pairing, got {pi}")));
    }
    let gaps = 2 * pi.len() - 1;
    let integrand = |times: &[f64]| -> f64 {
        (-z * times[gaps]).exp()
            * pi.pairs
                .iter()
                .map(|&(r, s)| h(times[s - 1] - times[r - 1]))
                .product::<f64>()
    };
    let mut prev: Option<f64> = None;
    let mut last = Estimate {
        value: f64::NAN,
        error: f64::INFINITY,
    };
    for &q in QUADRATURE_ORDERS.iter() {
        if (q as f64).powi(gaps as i32) > QUADRATURE_BUDGET {
            break;
        }
        let rule: Vec<(f64, f64)> = GaussLegendre::new(q)
            .mapped(0.0, 1.0)
            .map(|(s, w)| (s / (1.0 - s), w / ((1.0 - s) * (1.0 - s))))
            .collect();
        let mut times = vec![0.0; gaps + 1];
        let v = nested_gaps(&rule, &mut times, 1, &integrand);
        if !v.is_finite() {
            return Err(Error::Domain(format!(
                "Laplace transform of χ({pi}) at z = {z} is not finite"
            )));
        }
        if let Some(p) = prev {
            last = Estimate {
                value: v,
                error: (v - p).abs(),
            };
            if (v - p).abs() <= 1e-10 * v.abs() || v == p {
                return Ok(last);
            }
        }
        prev = Some(v);
    }
    Ok(last)
}

fn nested_gaps<F: Fn(&[f64]) -> f64>(rule: &[(f64, f64)], times: &mut [f64], level: usize, f: &F) -> f64 {
    if level == times.len() {
        return f(times);
    }
    let mut acc = 0.0;
    for &(u, w) in rule {
        times[level] = times[level - 1] + u;
        acc += w * nested_gaps(rule, times, level + 1, f);
    }
    acc
}

/// Generalized golden-ratio additive recurrence in `dim` dimensions.
fn kronecker_generator(dim: usize) -> Vec<f64> {
    // root of x^{d+1} = x + 1
    let mut phi: f64 = 2.0;
    for _ in 0..64 {
        phi = (1.0 + phi).powf(1.0 / (dim as f64 + 1.0));
    }
    (1..=dim).map(|j| (1.0 / phi.powi(j as i32)).fract()).collect()
}

/// One row of the combinatorial-bound certification.
#[derive(Clone, Debug, Serialize)]
pub struct BoundRow {
    pub n: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub lhs_error: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundsReport {
    pub n_max: usize,
    pub t: f64,
    pub z: f64,
    /// `∫_0^∞ h`.
    pub h_integral: f64,
    /// `Σ_{π irr, |π| = n} χ_t(π)` against
    /// `Σ_{j ≤ n} χ_t(min_j) (t ∫h)^{n-j} / (n-j)!`.
    pub irreducible_sum: Vec<BoundRow>,
    /// Truncated totals, against `(Σ_{j ≤ n_max} χ_t(min_j)) e^{t ∫h}`.
    pub irreducible_total: BoundRow,
    /// `∫ e^{-tz} χ_t(min_n) dt` against
    /// `(∫ h(w) e^{-wz} dw) (∫∫ h(y+w) e^{-wz} dy dw)^{n-1}`.
    pub laplace: Vec<BoundRow>,
    pub pass: bool,
}

/// Relative slack of the inequality checks.
pub const BOUND_SLACK: f64 = 1e-8;

/// Largest `n` for which the bounds are certified by quadrature.
pub const MAX_BOUND_N: usize = 4;

/// Evaluates both inequalities of the pairing lemma for `n ≤ n_max`.
pub fn verify_combinatorial_bounds<H>(n_max: usize, h: &H, t: f64, z: f64) -> Result<BoundsReport>
where
    H: Fn(f64) -> f64 + Sync + ?Sized,
{
    if n_max == 0 || n_max > MAX_BOUND_N {
        return Err(Error::Config(format!(
            "n_max must lie in 1..={MAX_BOUND_N}, got {n_max}"
        )));
    }
    if !(t >= 0.0) || !z.is_finite() {
        return Err(Error::Config(format!("need t ≥ 0 and finite z, got t = {t}, z = {z}")));
    }
    let h_integral = half_line(&|w| h(w), "∫ h")?;
    let growth = (t * h_integral).exp();
    let mut irreducible_sum = Vec::new();
    let mut laplace = Vec::new();
    let mut minimal = Vec::new();
    let (mut lhs_total, mut rhs_total, mut err_total) = (0.0, 0.0, 0.0);
    let h_lap = half_line(&|w| h(w) * (-w * z).exp(), "∫ h(w) e^{-wz}")?;
    let h_tail = half_line(
        &|w| (-w * z).exp() * half_line(&|y| h(y + w), "tail of h").unwrap_or(f64::NAN),
        "∫∫ h(y+w) e^{-wz}",
    )?;
    for n in 1..=n_max {
        let min = minimal_irreducible(n)?;
        let (mut lhs, mut err) = (0.0, 0.0);
        for pi in enumerate_pairings(n)?.iter().filter(|p| is_irreducible(p)) {
            let e = chi(pi, t, h, ChiMethod::Quadrature)?;
            lhs += e.value;
            err += e.error;
        }
        minimal.push(chi(&min, t, h, ChiMethod::Quadrature)?.value);
        // level n: a minimal core of size j plus n - j free pairs, each worth at most t ∫h
        let mut rhs = 0.0;
        let mut free = 1.0;
        for m in 0..n {
            rhs += minimal[n - 1 - m] * free;
            free *= t * h_integral / (m + 1) as f64;
        }
        irreducible_sum.push(row(n, lhs, rhs, err));
        lhs_total += lhs;
        rhs_total += minimal[n - 1] * growth;
        err_total += err;

        let lap = laplace_chi(&min, z, h)?;
        laplace.push(row(n, lap.value, h_lap * h_tail.powi(n as i32 - 1), lap.error));
    }
    let irreducible_total = row(0, lhs_total, rhs_total, err_total);
    let pass = irreducible_total.pass && irreducible_sum.iter().chain(&laplace).all(|r| r.pass);
    Ok(BoundsReport {
        n_max,
        t,
        z,
        h_integral,
        irreducible_sum,
        irreducible_total,
        laplace,
        pass,
    })
}

fn row(n: usize, lhs: f64, rhs: f64, lhs_error: f64) -> BoundRow {
    BoundRow {
        n,
        lhs,
        rhs,
        lhs_error,
        pass: lhs <= rhs * (1.0 + BOUND_SLACK),
    }
}

/// `∫_0^∞ f` by composite Gauss–Legendre on `[0, T]`, doubling `T` until
/// the tail contribution is below `1e-12` relative.
fn half_line(f: &dyn Fn(f64) -> f64, what: &str) -> Result<f64> {
    // u = s / (1 - s) again, with composite panels doubled until stable
    let g = |s: f64| {
        if s >= 1.0 {
            return 0.0;
        }
        let c = 1.0 - s;
        f(s / c) / (c * c)
    };
    let rule = GaussLegendre::new(12);
    let mut prev = rule.composite(0.0, 1.0, 1, &g);
    for panels in [2, 4, 8, 16, 32, 64, 128, 256, 512] {
        let v = rule.composite(0.0, 1.0, panels, &g);
        if !v.is_finite() {
            return Err(Error::Domain(format!("{what} is not finite")));
        }
        if (v - prev).abs() <= 1e-12 * v.abs().max(1e-300) {
            return Ok(v);
        }
        prev = v;
    }
    Err(Error::Domain(format!("{what} does not converge on the half-line")))
}
