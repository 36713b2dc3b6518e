//! Truncated Wigner sampling of the spin ensemble.
//!
//! Each emitter carries angles `(θ, φ)` of the discrete spin phase space,
//! starting at `θ = arccos(1/√3)` (the excited state) with uniformly random
//! `φ`. With `v_m = sin θ_m e^{iφ_m}`, `F_n = Σ_m g_nm v_m`,
//! `W_n = −√3 e^{−iφ_n} F_n` and `b_n = e^{−iφ_n} Σ_r G_nr (dW^θ_r + i dW^φ_r)`
//! the Itô equations read
//!
//! ```text
//! dθ_n = [Im W_n + ½Γ_nn cot θ_n + Γ(cot θ_n + csc θ_n/√3)] dt + Im b_n
//! dφ_n = −cot θ_n Re W_n dt − cot θ_n Re b_n
//!        + √(Γ(1 + 2cot²θ_n + (2/√3) csc θ_n cot θ_n)) dW_n
//! ```
//!
//! where `Γ` is the independent single-emitter decay rate. They are
//! integrated with Euler-Maruyama at fixed step.
//!
//! Random numbers per trajectory come from one stream (see [`crate::rng`]),
//! consumed in this order: `N` positions, `N` azimuths, `N` velocity normals,
//! then per step `r` draws `dW^θ`, `r` draws `dW^φ` (`r` the rank of the noise
//! factor) and `N` single-emitter draws.

use std::f64::consts::PI;
use std::ops::Range;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{CollectiveCoupling, WaveguideKernel};
use crate::observables::{wrap_angle, EnsembleAccumulator, FieldGeometry, ObservableSeries, PhaseConvention, SQRT3};
use crate::params::{ModelMode, SimulationConfig};
use crate::rng::trajectory_rng;
use crate::{Error, Result, C64};

/// `arccos(1/√3)`, the polar angle of the excited state.
pub const THETA_EXCITED: f64 = 0.955_316_618_124_509_3;

/// Trajectories per accumulation block. Blocks are reduced in index order,
/// which keeps ensemble results independent of the thread count.
pub const BLOCK_SIZE: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinPhaseState {
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub z: Vec<f64>,
    pub v: Vec<f64>,
    pub t: f64,
}

impl SpinPhaseState {
    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// `Σ_n √3 cos θ_n`.
    pub fn sz_total(&self) -> f64 {
        self.theta.iter().map(|t| SQRT3 * t.cos()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub time_grid: Vec<f64>,
    pub e_plus: Vec<C64>,
    pub e_minus: Vec<C64>,
    pub i_plus: Vec<f64>,
    pub i_minus: Vec<f64>,
    pub sz_total: Vec<f64>,
}

/// Integrator settings that are not part of the physical configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineOptions {
    /// Record observables every this many steps.
    pub record_every: usize,
    /// `θ` is clamped to `[ε, π − ε]` after each step.
    pub theta_eps: f64,
    pub convention: PhaseConvention,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions { record_every: 10, theta_eps: 1e-6, convention: PhaseConvention::Standard }
    }
}

impl EngineOptions {
    /// Recording grid of a run.
    pub fn time_grid(&self, config: &SimulationConfig) -> Vec<f64> {
        let k = self.record_every.max(1);
        (0..=config.n_steps()).step_by(k).map(|s| s as f64 * config.dt).collect()
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn initial_state_from(config: &SimulationConfig, rng: &mut ChaCha8Rng) -> SpinPhaseState {
    let n = config.n_spins;
    let z = (0..n).map(|_| rng.random::<f64>() * config.sample_length).collect();
    let phi = (0..n).map(|_| wrap_angle(rng.random::<f64>() * 2.0 * PI)).collect();
    let moving = config.model_mode == ModelMode::DynamicMotion;
    let v = (0..n)
        .map(|_| {
            let x = normal(rng);
            if moving {
                x * config.v_bar
            } else {
                0.0
            }
        })
        .collect();
    SpinPhaseState { theta: vec![THETA_EXCITED; n], phi, z, v, t: 0.0 }
}

/// Initial phase-space point of trajectory `trajectory_index`.
pub fn sample_initial_state(config: &SimulationConfig, trajectory_index: u64) -> SpinPhaseState {
    initial_state_from(config, &mut trajectory_rng(config.seed, trajectory_index))
}

/// Ballistic motion `z ← z + v dt`.
pub fn update_positions(state: &mut SpinPhaseState, dt: f64) {
    for (z, v) in state.z.iter_mut().zip(&state.v) {
        *z += v * dt;
    }
}

/// Deterministic drifts and noise coefficients of one phase-space point.
///
/// Row `n` of `noise_theta` (`noise_phi`) holds the coefficients of
/// `dW^θ_1 … dW^θ_r, dW^φ_1 … dW^φ_r` in `dθ_n` (`dφ_n`); `single[n]`
/// multiplies the independent draw of emitter `n` in `dφ_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftDiffusion {
    pub drift_theta: Vec<f64>,
    pub drift_phi: Vec<f64>,
    pub noise_theta: Vec<Vec<f64>>,
    pub noise_phi: Vec<Vec<f64>>,
    pub single: Vec<f64>,
}

/// Single-emitter drift of `θ` and diffusion coefficient of `φ`.
#[inline]
fn single_particle(cot: f64, csc: f64, gamma: f64) -> (f64, f64) {
    let drift = gamma * (cot + csc / SQRT3);
    let var = gamma * (1.0 + 2.0 * cot * cot + 2.0 / SQRT3 * csc * cot);
    (drift, var.max(0.0).sqrt())
}

pub fn drift_diffusion<C: CollectiveCoupling + ?Sized>(state: &SpinPhaseState, coupling: &C, gamma_single: f64) -> DriftDiffusion {
    let n = state.len();
    let r = coupling.noise_rank();
    let v: Vec<C64> = (0..n).map(|m| C64::from_polar(state.theta[m].sin(), state.phi[m])).collect();
    let mut f = vec![C64::new(0.0, 0.0); n];
    coupling.apply(&v, &mut f);
    let mut row = vec![C64::new(0.0, 0.0); r];
    let mut out = DriftDiffusion {
        drift_theta: vec![0.0; n],
        drift_phi: vec![0.0; n],
        noise_theta: vec![vec![0.0; 2 * r]; n],
        noise_phi: vec![vec![0.0; 2 * r]; n],
        single: vec![0.0; n],
    };
    for k in 0..n {
        let (s, c) = state.theta[k].sin_cos();
        let (cot, csc) = (c / s, 1.0 / s);
        let rot = C64::from_polar(1.0, -state.phi[k]);
        let w = rot * f[k] * (-SQRT3);
        let (sp_drift, sp_diff) = single_particle(cot, csc, gamma_single);
        out.drift_theta[k] = w.im + 0.5 * coupling.gamma_diag(k) * cot + sp_drift;
        out.drift_phi[k] = -cot * w.re;
        out.single[k] = sp_diff;
        coupling.noise_row(k, &mut row);
        for j in 0..r {
            // b = rot·G_kj·(dW^θ + i dW^φ): Im b = Im(c) dW^θ + Re(c) dW^φ,
            // Re b = Re(c) dW^θ − Im(c) dW^φ.
            let cj = rot * row[j];
            out.noise_theta[k][j] = cj.im;
            out.noise_theta[k][r + j] = cj.re;
            out.noise_phi[k][j] = -cot * cj.re;
            out.noise_phi[k][r + j] = cot * cj.im;
        }
    }
    out
}

/// Reusable buffers of the integrator.
#[derive(Debug, Clone)]
pub struct Workspace {
    v: Vec<C64>,
    f: Vec<C64>,
    a: Vec<C64>,
    xi: Vec<C64>,
}

impl Workspace {
    pub fn new(n: usize, rank: usize) -> Self {
        let zero = C64::new(0.0, 0.0);
        Workspace { v: vec![zero; n], f: vec![zero; n], a: vec![zero; n], xi: vec![zero; rank] }
    }
}

/// One Euler-Maruyama step of `θ, φ` (positions untouched). `step` is only
/// used to label a divergence.
#[allow(clippy::too_many_arguments)]
pub fn step_euler_maruyama<C: CollectiveCoupling + ?Sized>(
    state: &mut SpinPhaseState,
    coupling: &C,
    gamma_single: f64,
    dt: f64,
    theta_eps: f64,
    rng: &mut ChaCha8Rng,
    work: &mut Workspace,
    step: usize,
) -> Result<()> {
    let n = state.len();
    let r = coupling.noise_rank();
    if work.xi.len() != r || work.v.len() != n {
        *work = Workspace::new(n, r);
    }
    for m in 0..n {
        work.v[m] = C64::from_polar(state.theta[m].sin(), state.phi[m]);
    }
    coupling.apply(&work.v, &mut work.f);
    let sdt = dt.sqrt();
    for x in work.xi.iter_mut() {
        x.re = normal(rng) * sdt;
    }
    for x in work.xi.iter_mut() {
        x.im = normal(rng) * sdt;
    }
    coupling.noise_mix(&work.xi, &mut work.a);
    let mut finite = true;
    for k in 0..n {
        let dw = normal(rng) * sdt;
        let (s, c) = state.theta[k].sin_cos();
        let (cot, csc) = (c / s, 1.0 / s);
        let rot = C64::from_polar(1.0, -state.phi[k]);
        let w = rot * work.f[k] * (-SQRT3);
        let b = rot * work.a[k];
        let (sp_drift, sp_diff) = single_particle(cot, csc, gamma_single);
        let d_theta = (w.im + 0.5 * coupling.gamma_diag(k) * cot + sp_drift) * dt + b.im;
        let d_phi = -cot * (w.re * dt + b.re) + sp_diff * dw;
        let theta = state.theta[k] + d_theta;
        let phi = state.phi[k] + d_phi;
        finite &= theta.is_finite() && phi.is_finite();
        state.theta[k] = theta.clamp(theta_eps, PI - theta_eps);
        state.phi[k] = wrap_angle(phi);
    }
    state.t += dt;
    if !finite {
        return Err(Error::IntegrationDiverged { trajectory: 0, step });
    }
    Ok(())
}

/// Coupling and emission geometry of a configuration at given positions.
fn setup(config: &SimulationConfig, z: &[f64], options: &EngineOptions) -> (WaveguideKernel, FieldGeometry) {
    match config.model_mode {
        ModelMode::StaticBlur => {
            let beta = config.static_beta_minus();
            (
                WaveguideKernel::static_model(z, beta, config.gamma_1d, config.lambda0),
                FieldGeometry::static_model(config.lambda0, config.gamma_1d, beta).with_convention(options.convention),
            )
        }
        ModelMode::DynamicMotion | ModelMode::Frozen => (
            WaveguideKernel::dynamic(z, config.lambda0, config.lambda_p, config.gamma_1d),
            FieldGeometry::new(config.lambda0, config.lambda_p, config.gamma_1d).with_convention(options.convention),
        ),
    }
}

/// Integrates one trajectory. `positions`, if given, replace the sampled
/// positions (the position draws are still consumed).
pub fn run_trajectory_with(
    config: &SimulationConfig,
    trajectory_index: u64,
    options: &EngineOptions,
    positions: Option<&[f64]>,
) -> Result<TrajectoryRecord> {
    let mut rng = trajectory_rng(config.seed, trajectory_index);
    let mut state = initial_state_from(config, &mut rng);
    if let Some(p) = positions {
        if p.len() != state.len() {
            return Err(Error::validation(format!("expected {} positions, got {}", state.len(), p.len())));
        }
        state.z.copy_from_slice(p);
    }
    let (mut kernel, geometry) = setup(config, &state.z, options);
    let moving = config.model_mode == ModelMode::DynamicMotion;
    let n_steps = config.n_steps();
    let k = options.record_every.max(1);
    let capacity = n_steps / k + 1;
    let mut record = TrajectoryRecord {
        time_grid: Vec::with_capacity(capacity),
        e_plus: Vec::with_capacity(capacity),
        e_minus: Vec::with_capacity(capacity),
        i_plus: Vec::with_capacity(capacity),
        i_minus: Vec::with_capacity(capacity),
        sz_total: Vec::with_capacity(capacity),
    };
    let observe = |state: &SpinPhaseState, step: usize, record: &mut TrajectoryRecord| {
        let (ep, em) = geometry.field_symbols(&state.theta, &state.phi, &state.z);
        let (ip, im) = geometry.intensities(&state.theta, &state.phi, &state.z);
        record.time_grid.push(step as f64 * config.dt);
        record.e_plus.push(ep);
        record.e_minus.push(em);
        record.i_plus.push(ip);
        record.i_minus.push(im);
        record.sz_total.push(state.sz_total());
    };
    observe(&state, 0, &mut record);
    let mut work = Workspace::new(state.len(), kernel.noise_rank());
    for step in 1..=n_steps {
        step_euler_maruyama(&mut state, &kernel, config.gamma_single, config.dt, options.theta_eps, &mut rng, &mut work, step)
            .map_err(|_| Error::IntegrationDiverged { trajectory: trajectory_index, step })?;
        if moving {
            update_positions(&mut state, config.dt);
            kernel.set_positions(&state.z);
        }
        if step % k == 0 {
            observe(&state, step, &mut record);
        }
    }
    Ok(record)
}

pub fn run_trajectory(config: &SimulationConfig, trajectory_index: u64) -> Result<TrajectoryRecord> {
    run_trajectory_with(config, trajectory_index, &EngineOptions::default(), None)
}

/// Accumulates trajectories `range` (diverged ones are counted, not added).
pub fn accumulate_range(
    config: &SimulationConfig,
    options: &EngineOptions,
    positions: Option<&[f64]>,
    range: Range<u64>,
) -> Result<EnsembleAccumulator> {
    let mut acc = EnsembleAccumulator::new(options.time_grid(config));
    for index in range {
        match run_trajectory_with(config, index, options, positions) {
            Ok(rec) => acc.push(&rec.i_plus, &rec.i_minus, &rec.sz_total),
            Err(Error::IntegrationDiverged { .. }) => acc.n_diverged += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(acc)
}

/// Runs `config.n_traj` trajectories on the current rayon pool.
pub fn run_ensemble_accumulator(
    config: &SimulationConfig,
    options: &EngineOptions,
    positions: Option<&[f64]>,
) -> Result<EnsembleAccumulator> {
    config.validate()?;
    let n = config.n_traj as u64;
    let block = BLOCK_SIZE as u64;
    let n_blocks = n.div_ceil(block);
    let wave = (2 * rayon::current_num_threads()).max(1) as u64;
    let mut total = EnsembleAccumulator::new(options.time_grid(config));
    let mut first = 0;
    while first < n_blocks {
        let last = (first + wave).min(n_blocks);
        let parts: Vec<Result<EnsembleAccumulator>> = (first..last)
            .into_par_iter()
            .map(|b| accumulate_range(config, options, positions, b * block..((b + 1) * block).min(n)))
            .collect();
        for part in parts {
            total.merge(&part?);
        }
        first = last;
    }
    let attempted = total.n_traj + total.n_diverged;
    if total.n_diverged * 1000 > attempted {
        return Err(Error::TooManyDiverged { diverged: total.n_diverged, total: attempted });
    }
    Ok(total)
}

pub fn run_ensemble_with(config: &SimulationConfig, options: &EngineOptions) -> Result<ObservableSeries> {
    Ok(run_ensemble_accumulator(config, options, None)?.finish())
}

/// Ensemble with every trajectory placed at the same fixed positions.
pub fn run_ensemble_at(config: &SimulationConfig, options: &EngineOptions, positions: &[f64]) -> Result<ObservableSeries> {
    Ok(run_ensemble_accumulator(config, options, Some(positions))?.finish())
}

pub fn run_ensemble(config: &SimulationConfig) -> Result<ObservableSeries> {
    run_ensemble_with(config, &EngineOptions::default())
}
