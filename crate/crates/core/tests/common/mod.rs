// Copyright 2026 The kdlab Authors
// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

use kdlab_core::fiber::{rate_kernel, RateKernel};
use kdlab_core::reservoir::{OhmicGaussian, SpectralDensity};
use kdlab_core::torus::{DispersionLaw, TorusGrid};

/// Desk-scale reference setup: d = 1, β = 1, c = 1, Λ = 4, cosine law.
pub fn standard_spec() -> SpectralDensity {
    SpectralDensity::ohmic_gaussian(1.0, OhmicGaussian::default()).unwrap()
}

pub fn standard_kernel(n: usize) -> RateKernel {
    let grid = TorusGrid::new(1, n).unwrap();
    rate_kernel(&grid, &DispersionLaw::cosine(1), &standard_spec()).unwrap()
}

pub fn kernel_2d(n: usize) -> RateKernel {
    let grid = TorusGrid::new(2, n).unwrap();
    rate_kernel(&grid, &DispersionLaw::cosine(2), &standard_spec()).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(a.abs())
}
