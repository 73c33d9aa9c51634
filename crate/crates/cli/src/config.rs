// Copyright 2026 The kdlab Authors
// SPDX-License-Identifier: Apache-2.0

//! Line-oriented `key = value` run configuration.
//!
//! Keys carry dotted section prefixes. `#` starts a comment. Every key has a
//! documented default except `grid.d`, `grid.N` and `beta`, which must be
//! given. [`RunConfig::emit`] writes every key in table order, so
//! `parse(emit(cfg)) == cfg`.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;

use kdlab_core::kmc::InitialState;
use kdlab_core::spectral::EvolveMethod;
use kdlab_core::torus::{CosineTerm, DispersionLaw};
use kdlab_core::C64;

/// A parse or validation failure tied to a key and, when the key appears in
/// the file, its line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: `{}`: {}", self.key, self.message),
            None => write!(f, "`{}`: {}", self.key, self.message),
        }
    }
}

impl std::error::Error for ParseError {}

pub struct KeySpec {
    pub name: &'static str,
    /// `None` marks a required key.
    pub default: Option<&'static str>,
    pub doc: &'static str,
}

pub const KEYS: &[KeySpec] = &[
    KeySpec {
        name: "grid.d",
        default: None,
        doc: "torus dimension, 1 to 3",
    },
    KeySpec {
        name: "grid.N",
        default: None,
        doc: "points per axis, even and at least 4",
    },
    KeySpec {
        name: "beta",
        default: None,
        doc: "inverse temperature, positive",
    },
    KeySpec {
        name: "dispersion.law",
        default: Some("cosine"),
        doc: "`cosine` or `trigonometric`",
    },
    KeySpec {
        name: "dispersion.terms",
        default: Some(""),
        doc: "trigonometric terms `f_1 … f_d : coeff`, separated by `;`",
    },
    KeySpec {
        name: "reservoir.family",
        default: Some("ohmic-gaussian"),
        doc: "`ohmic-gaussian`, `tabulated` or `form-factor`",
    },
    KeySpec {
        name: "reservoir.coupling",
        default: Some("1"),
        doc: "ohmic-gaussian prefactor c",
    },
    KeySpec {
        name: "reservoir.exponent",
        default: Some("1"),
        doc: "ohmic-gaussian bath exponent d_R ≥ 1",
    },
    KeySpec {
        name: "reservoir.cutoff",
        default: Some("4"),
        doc: "ohmic-gaussian cutoff Λ",
    },
    KeySpec {
        name: "reservoir.table.xi",
        default: Some(""),
        doc: "tabulated ξ ≥ 0 nodes, increasing from 0",
    },
    KeySpec {
        name: "reservoir.table.values",
        default: Some(""),
        doc: "tabulated ψ(ξ) at the nodes",
    },
    KeySpec {
        name: "reservoir.form.omega",
        default: Some("linear"),
        doc: "reservoir dispersion ω(r): `linear` or `quadratic`",
    },
    KeySpec {
        name: "reservoir.form.profile",
        default: Some("gaussian"),
        doc: "form factor φ(r): `gaussian`, `exponential` or `constant`",
    },
    KeySpec {
        name: "reservoir.form.scale",
        default: Some("1"),
        doc: "length scale of the form factor",
    },
    KeySpec {
        name: "reservoir.form.dim",
        default: Some("3"),
        doc: "reservoir dimension",
    },
    KeySpec {
        name: "reservoir.form.r_max",
        default: Some("10"),
        doc: "radial support of the form factor",
    },
    KeySpec {
        name: "reservoir.certify.t_max",
        default: Some("6"),
        doc: "horizon of the decay certification",
    },
    KeySpec {
        name: "reservoir.certify.samples",
        default: Some("64"),
        doc: "samples of ψ̂ on [0, t_max], at least 16",
    },
    KeySpec {
        name: "tilt.kappa",
        default: Some(""),
        doc: "κ vectors as `re_1 im_1 … re_d im_d`, separated by `;`; empty means κ = 0",
    },
    KeySpec {
        name: "operator.delta",
        default: Some("0.5"),
        doc: "strip half-width δ for c_ε(δ)",
    },
    KeySpec {
        name: "operator.gamma",
        default: Some("1"),
        doc: "decay γ for the lattice sum b_d(γ)",
    },
    KeySpec {
        name: "diffuse.step",
        default: Some("0.001"),
        doc: "Hessian finite-difference step",
    },
    KeySpec {
        name: "clt.q",
        default: Some("0, 0.5, 1"),
        doc: "wave numbers q along the first axis",
    },
    KeySpec {
        name: "clt.t",
        default: Some("100, 400, 1600"),
        doc: "times t > 0",
    },
    KeySpec {
        name: "clt.method",
        default: Some("dense"),
        doc: "`dense` or `taylor` exponential",
    },
    KeySpec {
        name: "kmc.n_traj",
        default: Some("10000"),
        doc: "trajectories, at least 100",
    },
    KeySpec {
        name: "kmc.t_max",
        default: Some("200"),
        doc: "simulated time",
    },
    KeySpec {
        name: "kmc.samples",
        default: Some("200"),
        doc: "evenly spaced sample times in (0, t_max]",
    },
    KeySpec {
        name: "kmc.init",
        default: Some("gibbs"),
        doc: "`gibbs` or a grid index",
    },
    KeySpec {
        name: "kmc.seed",
        default: Some("0"),
        doc: "master seed; `--seed` overrides",
    },
    KeySpec {
        name: "kmc.batches",
        default: Some("50"),
        doc: "batches for standard errors",
    },
    KeySpec {
        name: "kmc.vacf",
        default: Some("true"),
        doc: "sample the velocity autocorrelation",
    },
    KeySpec {
        name: "kmc.vacf_step",
        default: Some("0.01"),
        doc: "VACF lag step",
    },
    KeySpec {
        name: "kmc.vacf_max_lag",
        default: Some("6"),
        doc: "largest VACF lag",
    },
    KeySpec {
        name: "kmc.vacf_spacing",
        default: Some("20"),
        doc: "spacing of VACF time origins",
    },
    KeySpec {
        name: "kmc.msd_window",
        default: Some("0.5"),
        doc: "MSD slope fitted on [w t_max, t_max]",
    },
    KeySpec {
        name: "pairings.n_max",
        default: Some("3"),
        doc: "largest pairing order, 1 to 4",
    },
    KeySpec {
        name: "pairings.h",
        default: Some("exponential"),
        doc: "`exponential` e^{-a u} or `algebraic` (1+u)^{-p}",
    },
    KeySpec {
        name: "pairings.h_rate",
        default: Some("1"),
        doc: "rate a of the exponential h",
    },
    KeySpec {
        name: "pairings.h_power",
        default: Some("3"),
        doc: "power p > 1 of the algebraic h",
    },
    KeySpec {
        name: "pairings.t",
        default: Some("1"),
        doc: "time of the irreducible-sum bound",
    },
    KeySpec {
        name: "pairings.z",
        default: Some("0"),
        doc: "Laplace variable, nonnegative",
    },
    KeySpec {
        name: "correlate.t_max",
        default: Some("10"),
        doc: "largest time of the ψ̂ table",
    },
    KeySpec {
        name: "correlate.xi_max",
        default: Some("10"),
        doc: "largest |ξ| of the ψ table",
    },
    KeySpec {
        name: "correlate.points",
        default: Some("201"),
        doc: "rows of each table, at least 2",
    },
    KeySpec {
        name: "output.dir",
        default: Some("out"),
        doc: "output directory; `--out` overrides",
    },
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReservoirFamily {
    OhmicGaussian,
    Tabulated,
    FormFactor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Omega {
    Linear,
    Quadratic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    Gaussian,
    Exponential,
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairingH {
    Exponential,
    Algebraic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub d: usize,
    pub n: usize,
    pub beta: f64,
    pub trigonometric: bool,
    pub terms: Vec<CosineTerm>,
    pub family: ReservoirFamily,
    pub coupling: f64,
    pub exponent: f64,
    pub cutoff: f64,
    pub table_xi: Vec<f64>,
    pub table_values: Vec<f64>,
    pub omega: Omega,
    pub profile: Profile,
    pub form_scale: f64,
    pub form_dim: usize,
    pub form_r_max: f64,
    pub certify_t_max: f64,
    pub certify_samples: usize,
    pub kappa: Vec<Vec<C64>>,
    pub delta: f64,
    pub gamma: f64,
    pub hessian_step: f64,
    pub clt_q: Vec<f64>,
    pub clt_t: Vec<f64>,
    pub clt_method: EvolveMethod,
    pub n_traj: usize,
    pub t_max: f64,
    pub samples: usize,
    pub init: InitialState,
    pub seed: u64,
    pub batches: usize,
    pub vacf: bool,
    pub vacf_step: f64,
    pub vacf_max_lag: f64,
    pub vacf_spacing: f64,
    pub msd_window: f64,
    pub n_max: usize,
    pub h: PairingH,
    pub h_rate: f64,
    pub h_power: f64,
    pub pair_t: f64,
    pub pair_z: f64,
    pub corr_t_max: f64,
    pub corr_xi_max: f64,
    pub corr_points: usize,
    pub out: PathBuf,
}

fn number<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("expected a number, got `{v}`"))
}

fn list(v: &str) -> Result<Vec<f64>, String> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| number(s.trim())).collect()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

fn parse_terms(v: &str) -> Result<Vec<CosineTerm>, String> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(';')
        .map(|term| {
            let (freq, coeff) = term
                .split_once(':')
                .ok_or_else(|| format!("term `{}` lacks `: coeff`", term.trim()))?;
            let freq = freq.split_whitespace().map(number).collect::<Result<Vec<i32>, _>>()?;
            Ok(CosineTerm {
                freq,
                coeff: number(coeff.trim())?,
            })
        })
        .collect()
}

fn parse_kappa(v: &str) -> Result<Vec<Vec<C64>>, String> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(';')
        .map(|vec| {
            let reals = vec.split_whitespace().map(number).collect::<Result<Vec<f64>, _>>()?;
            if reals.is_empty() || reals.len() % 2 != 0 {
                return Err(format!("κ vector `{}` needs (re, im) pairs", vec.trim()));
            }
            Ok(reals.chunks(2).map(|c| C64::new(c[0], c[1])).collect())
        })
        .collect()
}

fn choice<T: Copy>(v: &str, options: &[(&str, T)]) -> Result<T, String> {
    options
        .iter()
        .find(|(name, _)| *name == v)
        .map(|(_, t)| *t)
        .ok_or_else(|| {
            let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
            format!("expected one of {}, got `{v}`", names.join(", "))
        })
}

const FAMILIES: &[(&str, ReservoirFamily)] = &[
    ("ohmic-gaussian", ReservoirFamily::OhmicGaussian),
    ("tabulated", ReservoirFamily::Tabulated),
    ("form-factor", ReservoirFamily::FormFactor),
];
const OMEGAS: &[(&str, Omega)] = &[("linear", Omega::Linear), ("quadratic", Omega::Quadratic)];
const PROFILES: &[(&str, Profile)] = &[
    ("gaussian", Profile::Gaussian),
    ("exponential", Profile::Exponential),
    ("constant", Profile::Constant),
];
const METHODS: &[(&str, EvolveMethod)] = &[("dense", EvolveMethod::Dense), ("taylor", EvolveMethod::Taylor)];
const HS: &[(&str, PairingH)] = &[
    ("exponential", PairingH::Exponential),
    ("algebraic", PairingH::Algebraic),
];
const LAWS: &[(&str, bool)] = &[("cosine", false), ("trigonometric", true)];

fn name_of<T: PartialEq>(v: T, options: &[(&'static str, T)]) -> &'static str {
    options
        .iter()
        .find(|(_, t)| *t == v)
        .map(|(n, _)| *n)
        .expect("every variant is named")
}

impl RunConfig {
    fn blank() -> Self {
        RunConfig {
            d: 0,
            n: 0,
            beta: 0.0,
            trigonometric: false,
            terms: Vec::new(),
            family: ReservoirFamily::OhmicGaussian,
            coupling: 0.0,
            exponent: 0.0,
            cutoff: 0.0,
            table_xi: Vec::new(),
            table_values: Vec::new(),
            omega: Omega::Linear,
            profile: Profile::Gaussian,
            form_scale: 0.0,
            form_dim: 0,
            form_r_max: 0.0,
            certify_t_max: 0.0,
            certify_samples: 0,
            kappa: Vec::new(),
            delta: 0.0,
            gamma: 0.0,
            hessian_step: 0.0,
            clt_q: Vec::new(),
            clt_t: Vec::new(),
            clt_method: EvolveMethod::Dense,
            n_traj: 0,
            t_max: 0.0,
            samples: 0,
            init: InitialState::Gibbs,
            seed: 0,
            batches: 0,
            vacf: false,
            vacf_step: 0.0,
            vacf_max_lag: 0.0,
            vacf_spacing: 0.0,
            msd_window: 0.0,
            n_max: 0,
            h: PairingH::Exponential,
            h_rate: 0.0,
            h_power: 0.0,
            pair_t: 0.0,
            pair_z: 0.0,
            corr_t_max: 0.0,
            corr_xi_max: 0.0,
            corr_points: 0,
            out: PathBuf::new(),
        }
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "grid.d" => self.d = number(v)?,
            "grid.N" => self.n = number(v)?,
            "beta" => self.beta = number(v)?,
            "dispersion.law" => self.trigonometric = choice(v, LAWS)?,
            "dispersion.terms" => self.terms = parse_terms(v)?,
            "reservoir.family" => self.family = choice(v, FAMILIES)?,
            "reservoir.coupling" => self.coupling = number(v)?,
            "reservoir.exponent" => self.exponent = number(v)?,
            "reservoir.cutoff" => self.cutoff = number(v)?,
            "reservoir.table.xi" => self.table_xi = list(v)?,
            "reservoir.table.values" => self.table_values = list(v)?,
            "reservoir.form.omega" => self.omega = choice(v, OMEGAS)?,
            "reservoir.form.profile" => self.profile = choice(v, PROFILES)?,
            "reservoir.form.scale" => self.form_scale = number(v)?,
            "reservoir.form.dim" => self.form_dim = number(v)?,
            "reservoir.form.r_max" => self.form_r_max = number(v)?,
            "reservoir.certify.t_max" => self.certify_t_max = number(v)?,
            "reservoir.certify.samples" => self.certify_samples = number(v)?,
            "tilt.kappa" => self.kappa = parse_kappa(v)?,
            "operator.delta" => self.delta = number(v)?,
            "operator.gamma" => self.gamma = number(v)?,
            "diffuse.step" => self.hessian_step = number(v)?,
            "clt.q" => self.clt_q = list(v)?,
            "clt.t" => self.clt_t = list(v)?,
            "clt.method" => self.clt_method = choice(v, METHODS)?,
            "kmc.n_traj" => self.n_traj = number(v)?,
            "kmc.t_max" => self.t_max = number(v)?,
            "kmc.samples" => self.samples = number(v)?,
            "kmc.init" => {
                self.init = if v == "gibbs" {
                    InitialState::Gibbs
                } else {
                    InitialState::Index(
                        v.parse()
                            .map_err(|_| format!("expected `gibbs` or a grid index, got `{v}`"))?,
                    )
                }
            }
            "kmc.seed" => self.seed = number(v)?,
            "kmc.batches" => self.batches = number(v)?,
            "kmc.vacf" => {
                self.vacf = v
                    .parse()
                    .map_err(|_| format!("expected `true` or `false`, got `{v}`"))?
            }
            "kmc.vacf_step" => self.vacf_step = number(v)?,
            "kmc.vacf_max_lag" => self.vacf_max_lag = number(v)?,
            "kmc.vacf_spacing" => self.vacf_spacing = number(v)?,
            "kmc.msd_window" => self.msd_window = number(v)?,
            "pairings.n_max" => self.n_max = number(v)?,
            "pairings.h" => self.h = choice(v, HS)?,
            "pairings.h_rate" => self.h_rate = number(v)?,
            "pairings.h_power" => self.h_power = number(v)?,
            "pairings.t" => self.pair_t = number(v)?,
            "pairings.z" => self.pair_z = number(v)?,
            "correlate.t_max" => self.corr_t_max = number(v)?,
            "correlate.xi_max" => self.corr_xi_max = number(v)?,
            "correlate.points" => self.corr_points = number(v)?,
            "output.dir" => self.out = PathBuf::from(v),
            _ => unreachable!("key table and setter disagree on `{key}`"),
        }
        Ok(())
    }

    /// Value of `key` in the syntax [`RunConfig::parse`] reads.
    pub fn get(&self, key: &str) -> String {
        match key {
            "grid.d" => self.d.to_string(),
            "grid.N" => self.n.to_string(),
            "beta" => self.beta.to_string(),
            "dispersion.law" => name_of(self.trigonometric, LAWS).into(),
            "dispersion.terms" => self
                .terms
                .iter()
                .map(|t| {
                    let f: Vec<String> = t.freq.iter().map(|x| x.to_string()).collect();
                    format!("{} : {}", f.join(" "), t.coeff)
                })
                .collect::<Vec<_>>()
                .join("; "),
            "reservoir.family" => name_of(self.family, FAMILIES).into(),
            "reservoir.coupling" => self.coupling.to_string(),
            "reservoir.exponent" => self.exponent.to_string(),
            "reservoir.cutoff" => self.cutoff.to_string(),
            "reservoir.table.xi" => join(&self.table_xi),
            "reservoir.table.values" => join(&self.table_values),
            "reservoir.form.omega" => name_of(self.omega, OMEGAS).into(),
            "reservoir.form.profile" => name_of(self.profile, PROFILES).into(),
            "reservoir.form.scale" => self.form_scale.to_string(),
            "reservoir.form.dim" => self.form_dim.to_string(),
            "reservoir.form.r_max" => self.form_r_max.to_string(),
            "reservoir.certify.t_max" => self.certify_t_max.to_string(),
            "reservoir.certify.samples" => self.certify_samples.to_string(),
            "tilt.kappa" => self
                .kappa
                .iter()
                .map(|k| {
                    k.iter()
                        .map(|z| format!("{} {}", z.re, z.im))
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect::<Vec<_>>()
                .join("; "),
            "operator.delta" => self.delta.to_string(),
            "operator.gamma" => self.gamma.to_string(),
            "diffuse.step" => self.hessian_step.to_string(),
            "clt.q" => join(&self.clt_q),
            "clt.t" => join(&self.clt_t),
            "clt.method" => name_of(self.clt_method, METHODS).into(),
            "kmc.n_traj" => self.n_traj.to_string(),
            "kmc.t_max" => self.t_max.to_string(),
            "kmc.samples" => self.samples.to_string(),
            "kmc.init" => match self.init {
                InitialState::Gibbs => "gibbs".into(),
                InitialState::Index(i) => i.to_string(),
            },
            "kmc.seed" => self.seed.to_string(),
            "kmc.batches" => self.batches.to_string(),
            "kmc.vacf" => self.vacf.to_string(),
            "kmc.vacf_step" => self.vacf_step.to_string(),
            "kmc.vacf_max_lag" => self.vacf_max_lag.to_string(),
            "kmc.vacf_spacing" => self.vacf_spacing.to_string(),
            "kmc.msd_window" => self.msd_window.to_string(),
            "pairings.n_max" => self.n_max.to_string(),
            "pairings.h" => name_of(self.h, HS).into(),
            "pairings.h_rate" => self.h_rate.to_string(),
            "pairings.h_power" => self.h_power.to_string(),
            "pairings.t" => self.pair_t.to_string(),
            "pairings.z" => self.pair_z.to_string(),
            "correlate.t_max" => self.corr_t_max.to_string(),
            "correlate.xi_max" => self.corr_xi_max.to_string(),
            "correlate.points" => self.corr_points.to_string(),
            "output.dir" => self.out.display().to_string(),
            _ => unreachable!("key table and getter disagree on `{key}`"),
        }
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut lines: HashMap<&'static str, usize> = HashMap::new();
        let mut cfg = Self::blank();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split_once('#').map_or(raw, |(b, _)| b).trim();
            if body.is_empty() {
                continue;
            }
            let Some((key, value)) = body.split_once('=') else {
                return Err(ParseError {
                    line: Some(line),
                    key: body.to_string(),
                    message: "expected `key = value`".into(),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            let err = |message: String| ParseError {
                line: Some(line),
                key: key.to_string(),
                message,
            };
            let spec = KEYS
                .iter()
                .find(|k| k.name == key)
                .ok_or_else(|| err("unknown key".into()))?;
            if let Some(first) = lines.insert(spec.name, line) {
                return Err(err(format!("duplicate key, first set on line {first}")));
            }
            cfg.set(spec.name, value).map_err(err)?;
        }
        for spec in KEYS {
            if lines.contains_key(spec.name) {
                continue;
            }
            match spec.default {
                Some(v) => cfg.set(spec.name, v).expect("defaults parse"),
                None => {
                    return Err(ParseError {
                        line: None,
                        key: spec.name.into(),
                        message: "required key is missing".into(),
                    })
                }
            }
        }
        cfg.validate(&lines)?;
        Ok(cfg)
    }

    /// Every key in table order.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        for spec in KEYS {
            let v = self.get(spec.name);
            if v.is_empty() {
                out.push_str(&format!("{} =\n", spec.name));
            } else {
                out.push_str(&format!("{} = {v}\n", spec.name));
            }
        }
        out
    }

    /// κ list with the empty default expanded to `κ = 0`.
    pub fn kappas(&self) -> Vec<Vec<C64>> {
        if self.kappa.is_empty() {
            vec![vec![C64::new(0.0, 0.0); self.d]]
        } else {
            self.kappa.clone()
        }
    }

    pub fn law(&self) -> DispersionLaw {
        if self.trigonometric {
            DispersionLaw::trigonometric(self.d, self.terms.clone()).expect("validated at parse time")
        } else {
            DispersionLaw::cosine(self.d)
        }
    }

    /// Sample times `t_max i / samples`, `i = 1, …, samples`.
    pub fn sample_times(&self) -> Vec<f64> {
        kdlab_core::kmc::EnsembleConfig::uniform_times(self.t_max, self.samples)
    }

    fn validate(&self, lines: &HashMap<&'static str, usize>) -> Result<(), ParseError> {
        let fail = |key: &'static str, message: String| ParseError {
            line: lines.get(key).copied(),
            key: key.into(),
            message,
        };
        let check =
            |ok: bool, key: &'static str, message: &str| if ok { Ok(()) } else { Err(fail(key, message.into())) };
        let positive = |x: f64| x > 0.0 && x.is_finite();

        check((1..=3).contains(&self.d), "grid.d", "dimension must be 1, 2 or 3")?;
        check(
            self.n >= 4 && self.n.is_multiple_of(2),
            "grid.N",
            "N must be even and at least 4",
        )?;
        check(
            (self.n as f64).powi(self.d as i32) <= 65_536.0,
            "grid.N",
            "N^d above 65536 states",
        )?;
        check(positive(self.beta), "beta", "β must be positive and finite")?;
        if self.trigonometric {
            DispersionLaw::trigonometric(self.d, self.terms.clone())
                .map_err(|e| fail("dispersion.terms", e.to_string()))?;
        }
        check(
            self.terms.iter().all(|t| t.freq.len() == self.d && t.coeff.is_finite()),
            "dispersion.terms",
            "every term needs d frequencies and a finite coefficient",
        )?;

        check(
            positive(self.coupling),
            "reservoir.coupling",
            "coupling must be positive",
        )?;
        check(
            self.exponent >= 1.0 && self.exponent.is_finite(),
            "reservoir.exponent",
            "exponent must be at least 1",
        )?;
        check(positive(self.cutoff), "reservoir.cutoff", "cutoff must be positive")?;
        check(
            self.table_xi.len() == self.table_values.len(),
            "reservoir.table.values",
            "table columns differ in length",
        )?;
        if self.family == ReservoirFamily::Tabulated {
            kdlab_core::reservoir::TabulatedDensity::new(self.table_xi.clone(), self.table_values.clone())
                .map_err(|e| fail("reservoir.table.xi", e.to_string()))?;
        }
        check(
            positive(self.form_scale),
            "reservoir.form.scale",
            "scale must be positive",
        )?;
        check(
            (1..=3).contains(&self.form_dim),
            "reservoir.form.dim",
            "reservoir dimension must be 1, 2 or 3",
        )?;
        check(
            positive(self.form_r_max),
            "reservoir.form.r_max",
            "r_max must be positive",
        )?;
        check(
            positive(self.certify_t_max),
            "reservoir.certify.t_max",
            "horizon must be positive",
        )?;
        check(
            self.certify_samples >= 16,
            "reservoir.certify.samples",
            "need at least 16 samples",
        )?;

        check(
            self.kappa
                .iter()
                .all(|k| k.len() == self.d && k.iter().all(|z| z.re.is_finite() && z.im.is_finite())),
            "tilt.kappa",
            "every κ needs d finite complex components",
        )?;
        check(positive(self.delta), "operator.delta", "δ must be positive")?;
        check(positive(self.gamma), "operator.gamma", "γ must be positive")?;
        check(
            positive(self.hessian_step) && self.hessian_step < 0.1,
            "diffuse.step",
            "step must lie in (0, 0.1)",
        )?;

        check(
            !self.clt_q.is_empty() && self.clt_q.iter().all(|q| q.is_finite()),
            "clt.q",
            "need at least one finite q",
        )?;
        check(
            !self.clt_t.is_empty() && self.clt_t.iter().copied().all(positive),
            "clt.t",
            "times must be positive",
        )?;

        check(self.n_traj >= 100, "kmc.n_traj", "need at least 100 trajectories")?;
        check(positive(self.t_max), "kmc.t_max", "t_max must be positive")?;
        check(self.samples >= 3, "kmc.samples", "need at least 3 sample times")?;
        if let InitialState::Index(i) = self.init {
            check(i < self.n.pow(self.d as u32), "kmc.init", "index outside the grid")?;
        }
        check(
            self.batches >= 2 && self.batches <= self.n_traj,
            "kmc.batches",
            "batches must lie in 2..=n_traj",
        )?;
        check(positive(self.vacf_step), "kmc.vacf_step", "lag step must be positive")?;
        check(
            self.vacf_max_lag >= self.vacf_step && self.vacf_max_lag <= self.t_max,
            "kmc.vacf_max_lag",
            "largest lag must lie in [vacf_step, t_max]",
        )?;
        check(
            positive(self.vacf_spacing),
            "kmc.vacf_spacing",
            "origin spacing must be positive",
        )?;
        check(
            self.msd_window > 0.0 && self.msd_window < 1.0,
            "kmc.msd_window",
            "window fraction must lie in (0, 1)",
        )?;

        check(
            (1..=kdlab_core::pairing::MAX_BOUND_N).contains(&self.n_max),
            "pairings.n_max",
            "n_max must lie in 1..=4",
        )?;
        check(positive(self.h_rate), "pairings.h_rate", "rate must be positive")?;
        check(
            self.h_power > 1.0 && self.h_power.is_finite(),
            "pairings.h_power",
            "power must exceed 1",
        )?;
        check(
            self.pair_t >= 0.0 && self.pair_t.is_finite(),
            "pairings.t",
            "t must be nonnegative",
        )?;
        check(
            self.pair_z >= 0.0 && self.pair_z.is_finite(),
            "pairings.z",
            "z must be nonnegative",
        )?;

        check(positive(self.corr_t_max), "correlate.t_max", "t_max must be positive")?;
        check(
            positive(self.corr_xi_max),
            "correlate.xi_max",
            "xi_max must be positive",
        )?;
        check(self.corr_points >= 2, "correlate.points", "need at least 2 points")?;
        check(
            !self.out.as_os_str().is_empty(),
            "output.dir",
            "output directory must be named",
        )?;
        Ok(())
    }
}

/// Markdown reference of every key, generated from [`KEYS`].
pub fn reference() -> String {
    let mut out = String::from(
        "# Configuration reference\n\n\
         One `key = value` per line; `#` starts a comment. Lists are comma separated.\n\
         Unknown keys, duplicates and out-of-range values are rejected with the line number.\n\n\
         | key | default | meaning |\n|---|---|---|\n",
    );
    for k in KEYS {
        let default = match k.default {
            None => "required".to_string(),
            Some("") => "empty".to_string(),
            Some(v) => format!("`{v}`"),
        };
        out.push_str(&format!("| `{}` | {default} | {} |\n", k.name, k.doc));
    }
    out
}
