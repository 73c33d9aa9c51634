// Copyright 2026 The kdlab Authors
// SPDX-License-Identifier: Apache-2.0

//! Kinetic Monte Carlo for the jump process generated by the fiber kernel.
//!
//! The momentum is a continuous-time Markov chain on grid states: it holds
//! at `k` for an `Exp(R(k))` time and then jumps to `k'` with probability
//! `w r(k, k') / R(k)`. Between jumps the position moves at `∇ε(k)`.
//!
//! Each trajectory draws from its own ChaCha8 stream, seeded by the master
//! seed with the trajectory index as stream number. Ensembles are split into
//! a fixed number of contiguous batches; batches may run in parallel, but
//! every sum is formed in trajectory-index order, so results are
//! bit-identical across thread counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::fiber::{GibbsState, RateKernel};
use crate::reservoir::linear_fit;
use crate::spectral::{DiffusionRoute, DiffusionTensor};
use crate::{Error, Execution, Result};

/// Description of the generator recorded in reports.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha), seed = master seed, stream = trajectory index";

/// Vose alias table for O(1) sampling from a discrete distribution.
#[derive(Clone, Debug)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    /// Builds the table from nonnegative weights with a positive sum.
    pub fn new(weights: &[f64]) -> Result<Self> {
        let n = weights.len();
        let total: f64 = weights.iter().sum();
        if n == 0 || !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config(
                "alias table needs nonnegative weights with positive sum".into(),
            ));
        }
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut prob = vec![1.0; n];
        let mut alias: Vec<u32> = (0..n as u32).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);
        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            prob[s] = scaled[s];
            alias[s] = l as u32;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // leftovers are 1 up to rounding
        Ok(Self { prob, alias })
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.random_range(0..self.prob.len());
        if rng.random::<f64>() < self.prob[i] {
            i
        } else {
            self.alias[i] as usize
        }
    }

    /// Probability of drawing `i`, reconstructed from the table.
    pub fn probability(&self, i: usize) -> f64 {
        let n = self.len() as f64;
        let own = self.prob[i];
        let donated: f64 = (0..self.len())
            .filter(|&j| j != i && self.alias[j] as usize == i)
            .map(|j| 1.0 - self.prob[j])
            .sum();
        (own + donated) / n
    }
}

/// Per-state holding rates, jump tables and velocities.
#[derive(Clone, Debug)]
pub struct JumpSampler {
    dim: usize,
    total: Vec<f64>,
    tables: Vec<Option<AliasTable>>,
    velocity: Vec<[f64; 3]>,
    gibbs: AliasTable,
}

impl JumpSampler {
    pub fn new(kernel: &RateKernel) -> Result<Self> {
        let n = kernel.len();
        let field = kernel.field();
        let dim = field.dim();
        let tables = (0..n)
            .map(|i| {
                if kernel.total_rate()[i] > 0.0 {
                    AliasTable::new(kernel.row(i)).map(Some)
                } else {
                    Ok(None)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let velocity = (0..n)
            .map(|i| {
                let mut v = [0.0; 3];
                for (a, g) in field.gradient.iter().enumerate() {
                    v[a] = g[i];
                }
                v
            })
            .collect();
        let gibbs = GibbsState::from_energy(&field.energy, kernel.grid().weight(), kernel.beta())?;
        Ok(Self {
            dim,
            total: kernel.total_rate().to_vec(),
            tables,
            velocity,
            gibbs: AliasTable::new(&gibbs.values)?,
        })
    }

    pub fn len(&self) -> usize {
        self.total.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total.is_empty()
    }

    /// `Exp(R(k))` holding time; infinite when `R(k) = 0`.
    pub fn holding_time<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> f64 {
        let rate = self.total[k];
        if rate > 0.0 {
            // 1 - U lies in (0, 1]
            -(1.0 - rng.random::<f64>()).ln() / rate
        } else {
            f64::INFINITY
        }
    }

    /// Jump target from `k`; `k` itself when the state is absorbing.
    pub fn jump<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> usize {
        match &self.tables[k] {
            Some(t) => t.sample(rng),
            None => k,
        }
    }

    pub fn sample_gibbs<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.gibbs.sample(rng)
    }

    pub fn velocity(&self, k: usize) -> &[f64] {
        &self.velocity[k][..self.dim]
    }
}

/// Initial momentum of every trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialState {
    /// A fixed grid index.
    Index(usize),
    /// Drawn from the Gibbs state.
    Gibbs,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A single path: jump times, momentum after each jump and positions at the
/// jump times. The first entry is `(0, k₀)` at the origin.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub seed: u64,
    pub t_max: f64,
    pub jumps: Vec<(f64, usize)>,
    pub positions: Vec<Vec<f64>>,
}

impl Trajectory {
    /// Position at time `t ≤ t_max`.
    pub fn position(&self, t: f64, sampler: &JumpSampler) -> Vec<f64> {
        let j = self.jumps.partition_point(|&(s, _)| s <= t).max(1) - 1;
        let (s, k) = self.jumps[j];
        self.positions[j]
            .iter()
            .zip(sampler.velocity(k))
            .map(|(x, v)| x + v * (t - s))
            .collect()
    }
}

/// Samples one trajectory on `[0, t_max]` from stream 0 of `seed`.
pub fn sample_trajectory(kernel: &RateKernel, init: InitialState, t_max: f64, seed: u64) -> Result<Trajectory> {
    let sampler = JumpSampler::new(kernel)?;
    sample_with(&sampler, init, t_max, seed, 0)
}

pub fn sample_with(
    sampler: &JumpSampler,
    init: InitialState,
    t_max: f64,
    seed: u64,
    stream: u64,
) -> Result<Trajectory> {
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(Error::Config(format!("t_max must be positive and finite, got {t_max}")));
    }
    let mut rng = stream_rng(seed, stream);
    let mut k = initial(sampler, init, &mut rng)?;
    let mut t = 0.0;
    let mut x = vec![0.0; sampler.dim];
    let mut jumps = vec![(0.0, k)];
    let mut positions = vec![x.clone()];
    loop {
        let hold = sampler.holding_time(k, &mut rng);
        if t + hold > t_max {
            break;
        }
        t += hold;
        for (xa, va) in x.iter_mut().zip(sampler.velocity(k)) {
            *xa += va * hold;
        }
        k = sampler.jump(k, &mut rng);
        jumps.push((t, k));
        positions.push(x.clone());
    }
    Ok(Trajectory {
        seed,
        t_max,
        jumps,
        positions,
    })
}

fn initial<R: Rng + ?Sized>(sampler: &JumpSampler, init: InitialState, rng: &mut R) -> Result<usize> {
    match init {
        InitialState::Index(i) if i < sampler.len() => Ok(i),
        InitialState::Index(i) => Err(Error::Config(format!(
            "initial index {i} outside the grid of {} states",
            sampler.len()
        ))),
        InitialState::Gibbs => Ok(sampler.sample_gibbs(rng)),
    }
}

/// Velocity autocorrelation sampling: lags `0, step, …, max_lag` measured from
/// origins `0, spacing, 2 spacing, …` that fit inside `t_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VacfConfig {
    pub lag_step: f64,
    pub max_lag: f64,
    pub origin_spacing: f64,
}

impl Default for VacfConfig {
    fn default() -> Self {
        Self {
            lag_step: 0.01,
            max_lag: 6.0,
            origin_spacing: 20.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnsembleConfig {
    pub n_traj: usize,
    pub t_max: f64,
    /// Increasing times in `(0, t_max]` at which MSD and histograms are taken.
    pub sample_times: Vec<f64>,
    pub init: InitialState,
    pub seed: u64,
    pub batches: usize,
    pub vacf: Option<VacfConfig>,
}

impl EnsembleConfig {
    /// `count` evenly spaced sample times ending at `t_max`.
    pub fn uniform_times(t_max: f64, count: usize) -> Vec<f64> {
        (1..=count).map(|i| t_max * i as f64 / count as f64).collect()
    }

    fn validate(&self, states: usize) -> Result<()> {
        if self.n_traj < 100 {
            return Err(Error::Config(format!(
                "ensembles need at least 100 trajectories, got {}",
                self.n_traj
            )));
        }
        if !(self.t_max > 0.0) || !self.t_max.is_finite() {
            return Err(Error::Config(format!(
                "t_max must be positive and finite, got {}",
                self.t_max
            )));
        }
        if self.batches < 2 || self.batches > self.n_traj {
            return Err(Error::Config(format!(
                "batch count must lie in 2..={}, got {}",
                self.n_traj, self.batches
            )));
        }
        if self.sample_times.is_empty()
            || self.sample_times.windows(2).any(|w| w[1] <= w[0])
            || self.sample_times[0] <= 0.0
            || *self.sample_times.last().unwrap() > self.t_max
        {
            return Err(Error::Config(
                "sample times must increase strictly within (0, t_max]".into(),
            ));
        }
        if let InitialState::Index(i) = self.init {
            if i >= states {
                return Err(Error::Config(format!(
                    "initial index {i} outside the grid of {states} states"
                )));
            }
        }
        if let Some(v) = &self.vacf {
            if !(v.lag_step > 0.0 && v.max_lag >= v.lag_step && v.origin_spacing > 0.0) {
                return Err(Error::Config(format!("invalid VACF sampling {v:?}")));
            }
            if v.max_lag > self.t_max {
                return Err(Error::Config("VACF max lag exceeds t_max".into()));
            }
        }
        Ok(())
    }
}

/// Aggregated ensemble observables. Per-batch means are kept for error
/// estimates and excluded from serialization.
#[derive(Clone, Debug, Serialize)]
pub struct EnsembleStats {
    pub n_traj: usize,
    pub batches: usize,
    pub dim: usize,
    pub init: InitialState,
    pub t_max: f64,
    pub sample_times: Vec<f64>,
    /// `⟨Δx_a Δx_b⟩` per sample time, row-major in `(a, b)`.
    pub msd: Vec<Vec<f64>>,
    pub msd_se: Vec<Vec<f64>>,
    pub mean_displacement: Vec<Vec<f64>>,
    pub mean_displacement_se: Vec<Vec<f64>>,
    /// Empirical momentum distribution per sample time.
    pub histogram: Vec<Vec<f64>>,
    pub vacf_lags: Vec<f64>,
    /// `C_ab(lag)`, row-major in `(a, b)`.
    pub vacf: Vec<Vec<f64>>,
    pub vacf_se: Vec<Vec<f64>>,
    pub rng: &'static str,
    #[serde(skip)]
    batch_msd: Vec<Vec<Vec<f64>>>,
    #[serde(skip)]
    batch_vacf: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Copy)]
enum Query {
    Sample(usize),
    Lag { origin: usize, lag: usize },
}

struct Plan {
    times: Vec<f64>,
    kinds: Vec<Query>,
    origins: usize,
    lags: Vec<f64>,
}

fn plan(cfg: &EnsembleConfig) -> Plan {
    let mut events: Vec<(f64, u8, usize, Query)> = cfg
        .sample_times
        .iter()
        .enumerate()
        .map(|(i, &t)| (t, 1, i, Query::Sample(i)))
        .collect();
    let mut origins = 0;
    let mut lags = Vec::new();
    if let Some(v) = &cfg.vacf {
        let n_lags = (v.max_lag / v.lag_step).round() as usize + 1;
        lags = (0..n_lags).map(|l| l as f64 * v.lag_step).collect();
        let mut o = 0;
        loop {
            let start = o as f64 * v.origin_spacing;
            if start + v.max_lag > cfg.t_max {
                break;
            }
            for (l, lag) in lags.iter().enumerate() {
                events.push((start + lag, 0, o * n_lags + l, Query::Lag { origin: o, lag: l }));
            }
            o += 1;
        }
        origins = o;
    }
    // ties: origins (lag 0) before later lags; order is total and fixed
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    Plan {
        times: events.iter().map(|e| e.0).collect(),
        kinds: events.iter().map(|e| e.3).collect(),
        origins,
        lags,
    }
}

struct BatchSums {
    count: usize,
    msd: Vec<Vec<f64>>,
    disp: Vec<Vec<f64>>,
    hist: Vec<Vec<u64>>,
    vacf: Vec<Vec<f64>>,
}

fn run_batch(
    sampler: &JumpSampler,
    cfg: &EnsembleConfig,
    plan: &Plan,
    range: std::ops::Range<usize>,
) -> Result<BatchSums> {
    let d = sampler.dim;
    let n_s = cfg.sample_times.len();
    let n_l = plan.lags.len();
    let mut out = BatchSums {
        count: range.len(),
        msd: vec![vec![0.0; d * d]; n_s],
        disp: vec![vec![0.0; d]; n_s],
        hist: vec![vec![0; sampler.len()]; n_s],
        vacf: vec![vec![0.0; d * d]; n_l],
    };
    let mut origin_v = vec![[0.0; 3]; plan.origins];
    let mut traj_vacf = vec![vec![0.0; d * d]; n_l];
    for idx in range {
        let mut rng = stream_rng(cfg.seed, idx as u64);
        let mut k = initial(sampler, cfg.init, &mut rng)?;
        let mut t = 0.0;
        let mut x = [0.0; 3];
        let mut q = 0;
        traj_vacf.iter_mut().for_each(|row| row.fill(0.0));
        while q < plan.times.len() {
            let hold = sampler.holding_time(k, &mut rng);
            let next = t + hold;
            let v = sampler.velocity(k);
            while q < plan.times.len() && plan.times[q] < next {
                let s = plan.times[q];
                match plan.kinds[q] {
                    Query::Sample(i) => {
                        let mut pos = [0.0; 3];
                        for a in 0..d {
                            pos[a] = x[a] + v[a] * (s - t);
                        }
                        for a in 0..d {
                            out.disp[i][a] += pos[a];
                            for b in 0..d {
                                out.msd[i][a * d + b] += pos[a] * pos[b];
                            }
                        }
                        out.hist[i][k] += 1;
                    }
                    Query::Lag { origin, lag } => {
                        if lag == 0 {
                            origin_v[origin][..d].copy_from_slice(v);
                        }
                        let ov = origin_v[origin];
                        for a in 0..d {
                            for b in 0..d {
                                traj_vacf[lag][a * d + b] += ov[a] * v[b];
                            }
                        }
                    }
                }
                q += 1;
            }
            if q == plan.times.len() {
                break;
            }
            for a in 0..d {
                x[a] += v[a] * hold;
            }
            t = next;
            k = sampler.jump(k, &mut rng);
        }
        if plan.origins > 0 {
            let inv = 1.0 / plan.origins as f64;
            for (acc, row) in out.vacf.iter_mut().zip(&traj_vacf) {
                for (a, r) in acc.iter_mut().zip(row) {
                    *a += r * inv;
                }
            }
        }
    }
    Ok(out)
}

/// Mean over batches (weighted by batch size) and standard error of the
/// batch means.
fn batch_mean_se(values: &[Vec<f64>], counts: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let total: usize = counts.iter().sum();
    let len = values[0].len();
    let b = values.len() as f64;
    let mut mean = vec![0.0; len];
    for (row, &c) in values.iter().zip(counts) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v * c as f64 / total as f64;
        }
    }
    let mut se = vec![0.0; len];
    for row in values {
        for ((s, v), m) in se.iter_mut().zip(row).zip(&mean) {
            *s += (v - m).powi(2);
        }
    }
    se.iter_mut().for_each(|s| *s = (*s / (b * (b - 1.0))).sqrt());
    (mean, se)
}

/// Runs `cfg.n_traj` independent trajectories and aggregates observables.
pub fn ensemble_stats(kernel: &RateKernel, cfg: &EnsembleConfig, exec: Execution) -> Result<EnsembleStats> {
    let sampler = JumpSampler::new(kernel)?;
    ensemble_with(&sampler, cfg, exec)
}

pub fn ensemble_with(sampler: &JumpSampler, cfg: &EnsembleConfig, exec: Execution) -> Result<EnsembleStats> {
    cfg.validate(sampler.len())?;
    let plan = plan(cfg);
    let d = sampler.dim;
    let b = cfg.batches;
    let ranges: Vec<std::ops::Range<usize>> = (0..b).map(|i| i * cfg.n_traj / b..(i + 1) * cfg.n_traj / b).collect();
    let sums = exec
        .map(b, |i| run_batch(sampler, cfg, &plan, ranges[i].clone()))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let counts: Vec<usize> = sums.iter().map(|s| s.count).collect();
    let n_s = cfg.sample_times.len();

    let per_batch = |f: &dyn Fn(&BatchSums) -> Vec<f64>| -> Vec<Vec<f64>> { sums.iter().map(f).collect() };
    let mut msd = Vec::with_capacity(n_s);
    let mut msd_se = Vec::with_capacity(n_s);
    let mut disp = Vec::with_capacity(n_s);
    let mut disp_se = Vec::with_capacity(n_s);
    let mut histogram = Vec::with_capacity(n_s);
    let mut batch_msd = vec![Vec::with_capacity(n_s); b];
    for i in 0..n_s {
        let rows = per_batch(&|s| s.msd[i].iter().map(|v| v / s.count as f64).collect());
        for (bm, r) in batch_msd.iter_mut().zip(&rows) {
            bm.push(r.clone());
        }
        let (m, e) = batch_mean_se(&rows, &counts);
        msd.push(m);
        msd_se.push(e);
        let rows = per_batch(&|s| s.disp[i].iter().map(|v| v / s.count as f64).collect());
        let (m, e) = batch_mean_se(&rows, &counts);
        disp.push(m);
        disp_se.push(e);
        let mut h = vec![0u64; sampler.len()];
        for s in &sums {
            for (a, c) in h.iter_mut().zip(&s.hist[i]) {
                *a += c;
            }
        }
        histogram.push(h.iter().map(|&c| c as f64 / cfg.n_traj as f64).collect());
    }
    let n_l = plan.lags.len();
    let mut vacf = Vec::with_capacity(n_l);
    let mut vacf_se = Vec::with_capacity(n_l);
    let mut batch_vacf = vec![Vec::with_capacity(n_l); b];
    for l in 0..n_l {
        let rows = per_batch(&|s| s.vacf[l].iter().map(|v| v / s.count as f64).collect());
        for (bv, r) in batch_vacf.iter_mut().zip(&rows) {
            bv.push(r.clone());
        }
        let (m, e) = batch_mean_se(&rows, &counts);
        vacf.push(m);
        vacf_se.push(e);
    }
    Ok(EnsembleStats {
        n_traj: cfg.n_traj,
        batches: b,
        dim: d,
        init: cfg.init,
        t_max: cfg.t_max,
        sample_times: cfg.sample_times.clone(),
        msd,
        msd_se,
        mean_displacement: disp,
        mean_displacement_se: disp_se,
        histogram,
        vacf_lags: plan.lags,
        vacf,
        vacf_se,
        rng: RNG_ALGORITHM,
        batch_msd,
        batch_vacf,
    })
}

impl EnsembleStats {
    /// Index of the sample time closest to `t`.
    pub fn nearest_sample(&self, t: f64) -> usize {
        (0..self.sample_times.len())
            .min_by(|&a, &b| {
                (self.sample_times[a] - t)
                    .abs()
                    .total_cmp(&(self.sample_times[b] - t).abs())
            })
            .unwrap_or(0)
    }

    /// Total-variation distance of the histogram at sample `i` to the
    /// distribution `p`.
    pub fn total_variation(&self, i: usize, p: &[f64]) -> f64 {
        0.5 * self.histogram[i].iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>()
    }
}

/// `D` as the weighted least-squares slope of `⟨Δx_a Δx_b⟩` over
/// `t ∈ [t_from, t_to]` with weights `1/t²`; the error is the spread of the
/// per-batch slopes.
pub fn msd_slope(stats: &EnsembleStats, t_from: f64, t_to: f64) -> Result<DiffusionTensor> {
    let idx: Vec<usize> = (0..stats.sample_times.len())
        .filter(|&i| stats.sample_times[i] >= t_from && stats.sample_times[i] <= t_to)
        .collect();
    if idx.len() < 3 {
        return Err(Error::Domain(format!(
            "fewer than three sample times in the MSD window [{t_from}, {t_to}]"
        )));
    }
    let d = stats.dim;
    let slope_of = |curve: &dyn Fn(usize) -> f64| -> f64 {
        let (mut sw, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for &i in &idx {
            let t = stats.sample_times[i];
            let w = 1.0 / (t * t);
            let y = curve(i);
            sw += w;
            sx += w * t;
            sy += w * y;
            sxx += w * t * t;
            sxy += w * t * y;
        }
        (sw * sxy - sx * sy) / (sw * sxx - sx * sx)
    };
    let mut entries = vec![0.0; d * d];
    let mut uncertainty = vec![0.0; d * d];
    let b = stats.batches as f64;
    for ab in 0..d * d {
        entries[ab] = slope_of(&|i| stats.msd[i][ab]);
        let per: Vec<f64> = stats.batch_msd.iter().map(|bm| slope_of(&|i| bm[i][ab])).collect();
        let mean = per.iter().sum::<f64>() / b;
        uncertainty[ab] = (per.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (b * (b - 1.0))).sqrt();
    }
    Ok(DiffusionTensor {
        dim: d,
        route: DiffusionRoute::Msd,
        entries,
        uncertainty,
        warning: None,
    })
}

/// `D_ab = ∫_0^{t_cut} (C_ab + C_ba) dt` by the trapezoid rule, where the
/// cut is the first lag at which the symmetrized VACF drops below two
/// standard errors.
pub fn green_kubo(stats: &EnsembleStats) -> Result<DiffusionTensor> {
    if stats.init != InitialState::Gibbs {
        return Err(Error::Domain(
            "Green–Kubo integration needs a stationary (Gibbs-initialized) ensemble".into(),
        ));
    }
    if stats.vacf_lags.len() < 2 {
        return Err(Error::Domain("ensemble has no velocity autocorrelation samples".into()));
    }
    let d = stats.dim;
    let h = stats.vacf_lags[1] - stats.vacf_lags[0];
    let sym = |rows: &Vec<Vec<f64>>, l: usize, a: usize, b: usize| rows[l][a * d + b] + rows[l][b * d + a];
    let mut entries = vec![0.0; d * d];
    let mut uncertainty = vec![0.0; d * d];
    for a in 0..d {
        for b in a..d {
            let cut = (0..stats.vacf_lags.len())
                .find(|&l| {
                    let se = stats.vacf_se[l][a * d + b].hypot(stats.vacf_se[l][b * d + a]);
                    sym(&stats.vacf, l, a, b).abs() < 2.0 * se
                })
                .ok_or_else(|| {
                    Error::Domain(format!(
                        "VACF ({a},{b}) has not decayed below noise by lag {}; lengthen max_lag",
                        stats.vacf_lags.last().unwrap()
                    ))
                })?;
            let integrate = |rows: &Vec<Vec<f64>>| -> f64 {
                let vals: Vec<f64> = (0..=cut).map(|l| sym(rows, l, a, b)).collect();
                crate::quadrature::trapezoid(&vals, h)
            };
            let value = integrate(&stats.vacf);
            let per: Vec<f64> = stats.batch_vacf.iter().map(integrate).collect();
            let bn = per.len() as f64;
            let mean = per.iter().sum::<f64>() / bn;
            let se = (per.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (bn * (bn - 1.0))).sqrt();
            for (i, j) in [(a, b), (b, a)] {
                entries[i * d + j] = value;
                uncertainty[i * d + j] = se;
            }
        }
    }
    Ok(DiffusionTensor {
        dim: d,
        route: DiffusionRoute::GreenKubo,
        entries,
        uncertainty,
        warning: None,
    })
}

/// Exponential fit of a decaying correlation curve.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    /// Power-law exponent `α` in `C ≈ A t^{-α} e^{-γ t}`; zero for a pure
    /// exponential fit.
    pub power: f64,
    pub residual: f64,
    pub points: usize,
}

/// Fits `ln C = a - γ t` over the lags in `[t_from, t_to]` where `C` is
/// positive and exceeds `floor`.
pub fn fit_exponential(lags: &[f64], values: &[f64], floor: &[f64], t_from: f64, t_to: f64) -> Result<DecayFit> {
    let (ts, ys): (Vec<f64>, Vec<f64>) = lags
        .iter()
        .zip(values)
        .zip(floor)
        .filter(|((&t, &c), &f)| t >= t_from && t <= t_to && c > f && c > 0.0)
        .map(|((&t, &c), _)| (t, c.ln()))
        .unzip();
    if ts.len() < 4 {
        return Err(Error::Domain(format!(
            "only {} usable points for the decay fit on [{t_from}, {t_to}]",
            ts.len()
        )));
    }
    let (slope, _, residual) = linear_fit(&ts, &ys);
    Ok(DecayFit {
        rate: -slope,
        power: 0.0,
        residual,
        points: ts.len(),
    })
}

/// Fits `ln C = a - γ t - α ln t` over `[t_from, t_to]`; this form captures
/// the algebraic prefactor that a continuum of relaxation rates produces at
/// the edge of the spectrum.
pub fn fit_edge_decay(lags: &[f64], values: &[f64], t_from: f64, t_to: f64) -> Result<DecayFit> {
    let rows: Vec<(f64, f64)> = lags
        .iter()
        .zip(values)
        .filter(|(&t, &c)| t >= t_from && t <= t_to && t > 0.0 && c > 0.0)
        .map(|(&t, &c)| (t, c.ln()))
        .collect();
    if rows.len() < 5 {
        return Err(Error::Domain(format!(
            "only {} usable points for the decay fit",
            rows.len()
        )));
    }
    let x = nalgebra::DMatrix::from_fn(rows.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => -rows[i].0,
        _ => -rows[i].0.ln(),
    });
    let y = nalgebra::DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let coef = x
        .clone()
        .svd(true, true)
        .solve(&y, 1e-14)
        .map_err(|e| Error::Numerical(format!("decay fit failed: {e}")))?;
    let resid = (&x * &coef - &y).norm() / (rows.len() as f64).sqrt();
    Ok(DecayFit {
        rate: coef[1],
        power: coef[2],
        residual: resid,
        points: rows.len(),
    })
}
