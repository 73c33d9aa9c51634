// Copyright 2026 The kdlab Authors
// SPDX-License-Identifier: Apache-2.0

//! Reservoir spectral densities and correlation functions.
//!
//! A [`SpectralDensity`] is the nonnegative function `ψ(ξ)` whose Fourier
//! transform is the reservoir time-correlation function
//!
//! ```text
//! ψ̂(t) = (2π)^{-1/2} ∫ dξ e^{iξt} ψ(ξ)
//! ```
//!
//! Every family satisfies the thermal relation `ψ(-ξ) = e^{βξ} ψ(ξ)`: energy
//! is released into the reservoir (negative `ξ`) more readily than absorbed.
//! With jump rates `r(k,k') = ψ(ε(k') - ε(k))` this is exactly detailed
//! balance with respect to `e^{-βε}`.
//!
//! The half-line transforms are normalized so that `ψ₊(x) + ψ₋(x) = ψ(x)` on
//! the real axis:
//!
//! ```text
//! ψ₊(w) = (2π)^{-1/2} ∫_0^∞  dt ψ̂(t) e^{-itw}
//! ψ₋(w) = (2π)^{-1/2} ∫_{-∞}^0 dt ψ̂(t) e^{-itw}
//! ```
//!
//! `ψ₊` is analytic for `Im w` below the decay rate of `ψ̂`, `ψ₋` above its
//! negative.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::quadrature::GaussLegendre;
use crate::{Error, Result, C64};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Samples of `|ψ̂|` below this level are treated as quadrature noise.
pub const NOISE_FLOOR: f64 = 1e-14;

/// Target bound on the ξ-truncation error of `ψ̂`.
const TRUNCATION_TOL: f64 = 1e-13;

/// Radial callable used by the form-factor family.
pub type RadialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Smooth default: `ψ(ξ) = c |ξ|^{d_R - 1} ξ / (e^{βξ} - 1) e^{-(ξ/Λ)²}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OhmicGaussian {
    pub coupling: f64,
    pub exponent: f64,
    pub cutoff: f64,
}

impl Default for OhmicGaussian {
    fn default() -> Self {
        Self {
            coupling: 1.0,
            exponent: 1.0,
            cutoff: 4.0,
        }
    }
}

/// Effective density built from a radial reservoir dispersion `ω(r)` and a
/// spherically symmetric form factor `φ(r)` in `res_dim` dimensions.
#[derive(Clone)]
pub struct FormFactorDensity {
    res_dim: usize,
    omega: RadialFn,
    form: RadialFn,
    r_max: f64,
    xi_max: f64,
}

impl fmt::Debug for FormFactorDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FormFactorDensity")
            .field("res_dim", &self.res_dim)
            .field("r_max", &self.r_max)
            .field("xi_max", &self.xi_max)
            .finish_non_exhaustive()
    }
}

/// Piecewise-linear table of `ψ` on `ξ ≥ 0`, zero beyond the last node and
/// extended to `ξ < 0` by the thermal relation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TabulatedDensity {
    xi: Vec<f64>,
    values: Vec<f64>,
}

impl TabulatedDensity {
    pub fn new(xi: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xi.len() != values.len() || xi.len() < 2 {
            return Err(Error::Config(
                "tabulated density needs at least two (ξ, ψ) nodes".into(),
            ));
        }
        if xi[0] != 0.0 || xi.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "tabulated ξ nodes must start at 0 and increase strictly".into(),
            ));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Config(
                "tabulated ψ values must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { xi, values })
    }

    fn eval_positive(&self, x: f64) -> f64 {
        let last = *self.xi.last().unwrap();
        if x > last {
            return 0.0;
        }
        let j = self.xi.partition_point(|&v| v <= x).clamp(1, self.xi.len() - 1);
        let (x0, x1) = (self.xi[j - 1], self.xi[j]);
        let (y0, y1) = (self.values[j - 1], self.values[j]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }
}

#[derive(Clone, Debug)]
pub enum DensityFamily {
    OhmicGaussian(OhmicGaussian),
    FormFactor(FormFactorDensity),
    Tabulated(TabulatedDensity),
}

/// The effective reservoir spectral density at inverse temperature `β`.
#[derive(Clone, Debug)]
pub struct SpectralDensity {
    beta: f64,
    family: DensityFamily,
}

impl SpectralDensity {
    pub fn ohmic_gaussian(beta: f64, params: OhmicGaussian) -> Result<Self> {
        check_beta(beta)?;
        if !(params.coupling > 0.0 && params.cutoff > 0.0 && params.exponent >= 1.0) {
            return Err(Error::Config(format!(
                "ohmic-gaussian density needs c > 0, Λ > 0, d_R ≥ 1; got {params:?}"
            )));
        }
        Ok(Self {
            beta,
            family: DensityFamily::OhmicGaussian(params),
        })
    }

    pub fn tabulated(beta: f64, table: TabulatedDensity) -> Result<Self> {
        check_beta(beta)?;
        if table.values.iter().all(|&v| v == 0.0) {
            return Err(Error::Config("tabulated density is identically zero".into()));
        }
        Ok(Self {
            beta,
            family: DensityFamily::Tabulated(table),
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn family(&self) -> &DensityFamily {
        &self.family
    }

    /// `ψ(ξ)`.
    pub fn eval(&self, xi: f64) -> f64 {
        let beta = self.beta;
        match &self.family {
            DensityFamily::OhmicGaussian(p) => {
                let bose = if xi.abs() < 1e-300 {
                    1.0 / beta
                } else {
                    xi / (beta * xi).exp_m1()
                };
                let power = if p.exponent == 1.0 {
                    1.0
                } else {
                    xi.abs().powf(p.exponent - 1.0)
                };
                p.coupling * power * bose * (-(xi / p.cutoff).powi(2)).exp()
            }
            DensityFamily::FormFactor(ff) => ff.eval(xi, beta),
            DensityFamily::Tabulated(t) => {
                if xi >= 0.0 {
                    t.eval_positive(xi)
                } else {
                    match t.eval_positive(-xi) {
                        0.0 => 0.0,
                        v => (-beta * xi).exp() * v,
                    }
                }
            }
        }
    }

    /// Symmetric ξ-interval outside which `ψ` is dropped, and a bound on the
    /// induced error in `|ψ̂(t)|`.
    pub fn support(&self) -> (f64, f64) {
        match &self.family {
            DensityFamily::OhmicGaussian(p) => {
                let lam2 = p.cutoff * p.cutoff;
                let pow = p.exponent;
                // for a ≥ 1/β, ψ(-a) ≤ g(a) = c a^{d_R} e^{-a²/Λ²} / (1 - e^{-1}),
                // and ψ(a) ≤ ψ(-a); log g decreases at least at rate s beyond L
                let bound = |a: f64| {
                    let s = 2.0 * a / lam2 - pow / a;
                    if s <= 0.0 {
                        return f64::INFINITY;
                    }
                    let g = p.coupling * a.powf(pow) * (-a * a / lam2).exp() / (1.0 - (-1f64).exp());
                    2.0 * INV_SQRT_2PI * g / s
                };
                let mut l = (1.0 / self.beta).max(p.cutoff);
                while bound(l) > TRUNCATION_TOL {
                    l += 0.25 * p.cutoff;
                }
                (l, bound(l))
            }
            DensityFamily::FormFactor(ff) => (ff.xi_max, 0.0),
            DensityFamily::Tabulated(t) => (*t.xi.last().unwrap(), 0.0),
        }
    }

    /// Trapezoid step for `ψ̂(t)` at times up to `horizon`.
    fn xi_step(&self, horizon: f64) -> f64 {
        let (l, _) = self.support();
        match &self.family {
            DensityFamily::OhmicGaussian(p) => {
                // analytic in |Im ξ| < 2π/β; trapezoid error ~ e^{-2πa/h + a|t|}
                let a = (PI / self.beta).min(p.cutoff);
                let h = 2.0 * PI * a / (40.0 + a * horizon.max(16.0));
                h.min(l / 64.0) / 2.0
            }
            _ => (l / 4096.0).min(PI / (4.0 * horizon.max(1.0))),
        }
    }

    /// ξ-samples of `ψ` for a trapezoid rule resolving times up to `horizon`;
    /// `refine` halves the step that many times.
    pub fn samples(&self, horizon: f64, refine: u32) -> DensitySamples {
        let (l, truncation) = self.support();
        let h0 = self.xi_step(horizon) / 2f64.powi(refine as i32);
        let half = (l / h0).ceil() as i64;
        let step = l / half as f64;
        let xs: Vec<f64> = (-half..=half).map(|m| m as f64 * step).collect();
        let weights: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let w = if i == 0 || i == xs.len() - 1 { 0.5 } else { 1.0 };
                w * step * self.eval(x)
            })
            .collect();
        DensitySamples {
            xs,
            weights,
            truncation,
        }
    }

    /// Checks `ψ(-ξ) = e^{βξ}ψ(ξ)`; returns the largest relative defect.
    pub fn thermal_defect(&self, xis: &[f64]) -> f64 {
        xis.iter()
            .map(|&x| {
                let lhs = self.eval(-x);
                let rhs = (self.beta * x).exp() * self.eval(x);
                let scale = lhs.abs().max(rhs.abs());
                if scale == 0.0 {
                    0.0
                } else {
                    (lhs - rhs).abs() / scale
                }
            })
            .fold(0.0, f64::max)
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "inverse temperature must be positive and finite, got {beta}"
        )))
    }
}

impl FormFactorDensity {
    fn inverse_omega(&self, xi: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, self.r_max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if (self.omega)(mid) < xi {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi.max(1e-300) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// `r^{d-1} (∂r/∂ξ) |φ(r)|²` at `r = r(|ξ|)`, the Jacobian that keeps
    /// the fiber decomposition `|q| = r(ξ)` unitary.
    fn density_of_states(&self, a: f64) -> f64 {
        if a <= 0.0 || a > self.xi_max {
            return 0.0;
        }
        let r = self.inverse_omega(a);
        let h = 1e-6 * r.max(1e-3);
        let lo = (r - h).max(0.0);
        let dxi_dr = ((self.omega)(r + h) - (self.omega)(lo)) / (r + h - lo);
        let phi = (self.form)(r);
        r.powi(self.res_dim as i32 - 1) * phi * phi / dxi_dr
    }

    fn eval(&self, xi: f64, beta: f64) -> f64 {
        if xi == 0.0 {
            // continuous extension
            let h = 1e-9 * self.xi_max;
            return 0.5 * (self.eval(h, beta) + self.eval(-h, beta));
        }
        let a = xi.abs();
        let dos = self.density_of_states(a);
        if xi > 0.0 {
            dos / (beta * a).exp_m1()
        } else {
            -dos / (-beta * a).exp_m1()
        }
    }
}

/// Builds the effective density of a reservoir with radial one-particle
/// dispersion `omega` and form factor `form`, supported on `0 ≤ r ≤ r_max`.
///
/// `omega` must vanish at the origin and increase strictly.
pub fn effective_density_from_form_factor(
    omega: RadialFn,
    form: RadialFn,
    beta: f64,
    res_dim: usize,
    r_max: f64,
) -> Result<SpectralDensity> {
    check_beta(beta)?;
    if res_dim == 0 || !(r_max > 0.0) {
        return Err(Error::Config(
            "form-factor density needs res_dim ≥ 1 and r_max > 0".into(),
        ));
    }
    let w0 = omega(0.0);
    if w0.abs() > 1e-12 {
        return Err(Error::Domain(format!(
            "reservoir dispersion must vanish at r = 0, got {w0}"
        )));
    }
    let samples = 4096;
    let mut prev = w0;
    for i in 1..=samples {
        let r = r_max * i as f64 / samples as f64;
        let w = omega(r);
        if !(w > prev) {
            return Err(Error::Domain(format!(
                "reservoir dispersion is not strictly increasing near r = {r}"
            )));
        }
        prev = w;
    }
    Ok(SpectralDensity {
        beta,
        family: DensityFamily::FormFactor(FormFactorDensity {
            res_dim,
            omega,
            form,
            r_max,
            xi_max: prev,
        }),
    })
}

/// Trapezoid nodes and `step * ψ(ξ)` weights.
#[derive(Clone, Debug)]
pub struct DensitySamples {
    pub xs: Vec<f64>,
    pub weights: Vec<f64>,
    /// Bound on `|ψ̂|` error from dropping `ψ` outside the sample range.
    pub truncation: f64,
}

impl DensitySamples {
    /// `ψ̂(t)` by the trapezoid rule.
    pub fn transform(&self, t: f64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (&x, &w) in self.xs.iter().zip(&self.weights) {
            let (s, c) = (x * t).sin_cos();
            acc += C64::new(w * c, w * s);
        }
        acc * INV_SQRT_2PI
    }
}

/// `ψ̂(t) = (2π)^{-1/2} ∫ e^{iξt} ψ(ξ) dξ`.
pub fn correlation_function(t: f64, spec: &SpectralDensity) -> C64 {
    spec.samples(t.abs(), 0).transform(t)
}

/// Sampled correlation function and its exponential-decay fit.
#[derive(Clone, Debug, Serialize)]
pub struct CorrelationProfile {
    pub times: Vec<f64>,
    pub values: Vec<(f64, f64)>,
    /// Fitted decay rate of `|ψ̂|` over the tail window.
    pub decay_rate: f64,
    /// Fitted prefactor `A` in `|ψ̂(t)| ≈ A e^{-g t}`.
    pub amplitude: f64,
    /// RMS residual of the log-linear fit.
    pub residual: f64,
    /// Number of tail samples above the noise floor.
    pub fit_points: usize,
    /// Largest `|ψ̂(-t) - conj ψ̂(t)|` over the samples.
    pub hermiticity_defect: f64,
    pub certified: bool,
    pub diagnostic: String,
}

impl CorrelationProfile {
    pub fn value(&self, j: usize) -> C64 {
        C64::new(self.values[j].0, self.values[j].1)
    }
}

/// Largest RMS deviation of `ln|ψ̂|` from the exponential fit that still
/// counts as exponential decay.
pub const MAX_FIT_RESIDUAL: f64 = 0.25;

/// Samples `ψ̂` on `[0, t_max]` and fits `ln|ψ̂(t)| = ln A - g t` over
/// `[t_max/2, t_max]`, skipping samples below [`NOISE_FLOOR`].
///
/// Certification requires at least four usable samples, `g > 0` and an RMS
/// residual below [`MAX_FIT_RESIDUAL`], and the rate fitted on
/// `[t_max/4, t_max/2]` must agree within [`MAX_RATE_DRIFT`]. Failure is reported in the profile,
/// not as an error.
pub fn certify_decay(spec: &SpectralDensity, t_max: f64, n_samples: usize) -> Result<CorrelationProfile> {
    if !(t_max > 0.0) || n_samples < 16 {
        return Err(Error::Config(format!(
            "decay certification needs t_max > 0 and at least 16 samples (got {t_max}, {n_samples})"
        )));
    }
    let samples = spec.samples(t_max, 0);
    let times: Vec<f64> = (0..n_samples)
        .map(|j| t_max * j as f64 / (n_samples - 1) as f64)
        .collect();
    let values: Vec<C64> = times.iter().map(|&t| samples.transform(t)).collect();
    let hermiticity_defect = times
        .iter()
        .zip(&values)
        .map(|(&t, v)| (samples.transform(-t) - v.conj()).norm())
        .fold(0.0, f64::max);

    let window_fit = |lo: f64, hi: f64| {
        let (ts, logs): (Vec<f64>, Vec<f64>) = times
            .iter()
            .zip(&values)
            .filter(|(&t, v)| t >= lo && t <= hi && v.norm() > NOISE_FLOOR)
            .map(|(&t, v)| (t, v.norm().ln()))
            .unzip();
        let fit = if ts.len() >= 2 {
            let (slope, intercept, rms) = linear_fit(&ts, &logs);
            (-slope, intercept.exp(), rms)
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        (ts.len(), fit)
    };
    let (fit_points, (decay_rate, amplitude, residual)) = window_fit(0.5 * t_max, t_max);
    // an algebraic tail t^-a shows up as a rate that halves when the window doubles
    let (early_points, (early_rate, _, _)) = window_fit(0.25 * t_max, 0.5 * t_max);

    let mut problems = Vec::new();
    if fit_points < 4 {
        problems.push(format!(
            "only {fit_points} tail samples above the noise floor; lengthen t_max window or add samples"
        ));
    }
    if !(decay_rate > 0.0) {
        problems.push(format!("fitted decay rate {decay_rate} is not positive"));
    }
    if !(residual < MAX_FIT_RESIDUAL) {
        problems.push(format!(
            "log-linear residual {residual:.3} exceeds {MAX_FIT_RESIDUAL}: tail is not exponential"
        ));
    }
    if early_points >= 4 && decay_rate > 0.0 && !((early_rate - decay_rate).abs() <= MAX_RATE_DRIFT * decay_rate) {
        problems.push(format!(
            "decay rate drifts from {early_rate:.4} to {decay_rate:.4} across windows: tail is algebraic, not exponential"
        ));
    }
    let certified = problems.is_empty();
    Ok(CorrelationProfile {
        times,
        values: values.iter().map(|v| (v.re, v.im)).collect(),
        decay_rate,
        amplitude,
        residual,
        fit_points,
        hermiticity_defect,
        certified,
        diagnostic: if certified {
            format!("|ψ̂(t)| ≈ {amplitude:.3e} e^{{-{decay_rate:.4} t}}")
        } else {
            problems.join("; ")
        },
    })
}

/// Least-squares line through `(x, y)`: returns slope, intercept and RMS
/// residual.
pub(crate) fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (slope, intercept, rms)
}

/// Largest relative change of the fitted rate between the two tail windows.
pub const MAX_RATE_DRIFT: f64 = 0.5;

/// Default sampling window for certification.
pub const DEFAULT_CERTIFY_T_MAX: f64 = 6.0;
pub const DEFAULT_CERTIFY_SAMPLES: usize = 64;

/// Tabulated `ψ̂` on a Gauss–Legendre grid of `[0, T]` for evaluating the
/// half-line transforms.
#[derive(Clone, Debug)]
pub struct HalfTransforms {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    values: Vec<C64>,
    decay_rate: f64,
    horizon: f64,
}

impl HalfTransforms {
    /// Builds the table from a certified decay profile; refuses otherwise.
    pub fn new(spec: &SpectralDensity, profile: &CorrelationProfile) -> Result<Self> {
        if !profile.certified || !(profile.decay_rate > 0.0) {
            return Err(Error::Certification(format!(
                "half-line transforms need certified exponential decay of ψ̂: {}",
                profile.diagnostic
            )));
        }
        let g = profile.decay_rate;
        // inside the certified strip the integrand still decays like e^{-gt/2}
        let amp = profile.amplitude.max(profile.value(0).norm()).max(1.0);
        let horizon = (2.0 * (2.0 * amp / (g * 1e-15)).ln() / g).clamp(1.0, 400.0);
        let panels = (horizon / 0.125).ceil() as usize;
        let rule = GaussLegendre::new(16);
        let width = horizon / panels as f64;
        let samples = spec.samples(horizon, 0);
        let mut nodes = Vec::with_capacity(panels * rule.len());
        let mut weights = Vec::with_capacity(panels * rule.len());
        for p in 0..panels {
            let lo = p as f64 * width;
            for (t, w) in rule.mapped(lo, lo + width) {
                nodes.push(t);
                weights.push(w);
            }
        }
        let values = nodes.iter().map(|&t| samples.transform(t)).collect();
        Ok(Self {
            nodes,
            weights,
            values,
            decay_rate: g,
            horizon,
        })
    }

    /// Certifies decay with the default window and builds the table.
    pub fn certified(spec: &SpectralDensity) -> Result<Self> {
        let profile = certify_decay(spec, DEFAULT_CERTIFY_T_MAX, DEFAULT_CERTIFY_SAMPLES)?;
        Self::new(spec, &profile)
    }

    pub fn decay_rate(&self) -> f64 {
        self.decay_rate
    }

    /// Half-width of the strip `|Im w| ≤ g/2` in which evaluation is
    /// certified.
    pub fn strip(&self) -> f64 {
        0.5 * self.decay_rate
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `ψ₊(w)`; requires `Im w ≤ g/2`.
    pub fn plus(&self, w: C64) -> Result<C64> {
        if w.im > self.strip() {
            return Err(Error::Domain(format!(
                "ψ₊ argument {w} leaves the certified strip Im w ≤ {}",
                self.strip()
            )));
        }
        Ok(self.sum(|t, v| v * (C64::new(0.0, -t) * w).exp()))
    }

    /// `ψ₋(w)`; requires `Im w ≥ -g/2`.
    pub fn minus(&self, w: C64) -> Result<C64> {
        if w.im < -self.strip() {
            return Err(Error::Domain(format!(
                "ψ₋ argument {w} leaves the certified strip Im w ≥ {}",
                -self.strip()
            )));
        }
        // ψ̂(-s) = conj ψ̂(s)
        Ok(self.sum(|s, v| v.conj() * (C64::new(0.0, s) * w).exp()))
    }

    fn sum<F: Fn(f64, C64) -> C64>(&self, f: F) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for ((&t, &w), &v) in self.nodes.iter().zip(&self.weights).zip(&self.values) {
            acc += f(t, v) * w;
        }
        acc * INV_SQRT_2PI
    }
}

/// `(ψ₊(x), ψ₋(x))` at a real energy, with the default decay certification.
pub fn half_transforms(x: f64, spec: &SpectralDensity) -> Result<(C64, C64)> {
    let ht = HalfTransforms::certified(spec)?;
    let w = C64::new(x, 0.0);
    Ok((ht.plus(w)?, ht.minus(w)?))
}
