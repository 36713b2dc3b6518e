//! Exact master-equation reference for a few emitters.
//!
//! The density matrix lives in the product basis `|b⟩`, where bit `n` of `b`
//! is set when emitter `n` is excited. The generator is
//!
//! ```text
//! ρ̇ = −i(H_eff ρ − ρ H_eff†) + Σ_lm Γ_lm σ_m⁻ ρ σ_l⁺ + Γ Σ_n σ_n⁻ ρ σ_n⁺
//! H_eff = Σ_lm g_lm σ_l⁺σ_m⁻ − i(Γ/2) Σ_n σ_n⁺σ_n⁻
//! ```
//!
//! integrated with classical fourth-order Runge-Kutta.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::coupling::{build_dynamic_couplings, build_static_couplings, CMatrix, CouplingSet};
use crate::observables::{Direction, FieldGeometry, ObservableSeries};
use crate::params::{ModelMode, SimulationConfig};
use crate::twa::{run_ensemble_at, sample_initial_state, EngineOptions};
use crate::{Error, Result, C64};

pub const MAX_SPINS: usize = 6;

const HERMITICITY_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-8;
const POSITIVITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct DensityState {
    pub rho: CMatrix,
    pub t: f64,
}

impl DensityState {
    /// All emitters excited.
    pub fn excited(n_spins: usize) -> Self {
        let d = 1usize << n_spins;
        let mut rho = CMatrix::zeros(d, d);
        rho[(d - 1, d - 1)] = C64::new(1.0, 0.0);
        DensityState { rho, t: 0.0 }
    }

    /// Checks Hermiticity, normalization and positivity.
    pub fn check_integrity(&self) -> Result<()> {
        let herm = (&self.rho - self.rho.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
        if herm > HERMITICITY_TOL {
            return Err(Error::OracleIntegrity(format!("Hermiticity defect {herm:e} at t = {}", self.t)));
        }
        let tr = self.rho.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(Error::OracleIntegrity(format!("trace {tr} at t = {}", self.t)));
        }
        let herm_part = (&self.rho + self.rho.adjoint()).scale(0.5);
        let min_ev = herm_part.symmetric_eigen().eigenvalues.min();
        if min_ev < -POSITIVITY_TOL {
            return Err(Error::OracleIntegrity(format!("eigenvalue {min_ev:e} at t = {}", self.t)));
        }
        Ok(())
    }
}

/// Sparse generator of the master equation.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    n: usize,
    dim: usize,
    /// Non-zero entries `(row, col, value)` of `H_eff`.
    h_eff: Vec<(usize, usize, C64)>,
    /// Non-zero `(l, m, Γ_lm)` including the independent decay on the diagonal.
    jumps: Vec<(usize, usize, C64)>,
}

impl Liouvillian {
    pub fn new(couplings: &CouplingSet, gamma_single: f64) -> Result<Self> {
        let n = couplings.n();
        if n == 0 || n > MAX_SPINS {
            return Err(Error::Domain(format!("oracle supports 1..={MAX_SPINS} emitters, got {n}")));
        }
        let dim = 1usize << n;
        let mut h = vec![C64::new(0.0, 0.0); dim * dim];
        for b in 0..dim {
            for m in 0..n {
                if b & (1 << m) == 0 {
                    continue;
                }
                let lowered = b ^ (1 << m);
                for l in 0..n {
                    if lowered & (1 << l) != 0 {
                        continue;
                    }
                    let raised = lowered | (1 << l);
                    h[raised * dim + b] += couplings.g[(l, m)];
                }
                h[b * dim + b] += C64::new(0.0, -0.5 * gamma_single);
            }
        }
        let h_eff = (0..dim * dim)
            .filter(|&k| h[k] != C64::new(0.0, 0.0))
            .map(|k| (k / dim, k % dim, h[k]))
            .collect();
        let mut jumps = Vec::new();
        for l in 0..n {
            for m in 0..n {
                let mut rate = couplings.gamma_matrix[(l, m)];
                if l == m {
                    rate += gamma_single;
                }
                if rate != C64::new(0.0, 0.0) {
                    jumps.push((l, m, rate));
                }
            }
        }
        Ok(Liouvillian { n, dim, h_eff, jumps })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `out = 𝓛ρ`, both row-major `dim × dim`.
    pub fn apply(&self, rho: &[C64], out: &mut [C64]) {
        let d = self.dim;
        out.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
        let mi = C64::new(0.0, -1.0);
        for &(r, c, v) in &self.h_eff {
            // −i H ρ: row r of the result gains v·(row c of ρ).
            let coef = mi * v;
            for k in 0..d {
                out[r * d + k] += coef * rho[c * d + k];
            }
            // +i ρ H†: column r gains conj(v)·(column c of ρ).
            let coef = C64::new(0.0, 1.0) * v.conj();
            for k in 0..d {
                out[k * d + r] += coef * rho[k * d + c];
            }
        }
        for &(l, m, rate) in &self.jumps {
            let (bm, bl) = (1 << m, 1 << l);
            for a in 0..d {
                if a & bm != 0 {
                    continue;
                }
                let src_row = (a | bm) * d;
                for b in 0..d {
                    if b & bl == 0 {
                        out[a * d + b] += rate * rho[src_row + (b | bl)];
                    }
                }
            }
        }
    }

    /// One RK4 step of length `h`.
    pub fn rk4_step(&self, rho: &mut [C64], h: f64, scratch: &mut Rk4Scratch) {
        let Rk4Scratch { k1, k2, k3, k4, tmp } = scratch;
        self.apply(rho, k1);
        for i in 0..rho.len() {
            tmp[i] = rho[i] + k1[i] * (0.5 * h);
        }
        self.apply(tmp, k2);
        for i in 0..rho.len() {
            tmp[i] = rho[i] + k2[i] * (0.5 * h);
        }
        self.apply(tmp, k3);
        for i in 0..rho.len() {
            tmp[i] = rho[i] + k3[i] * h;
        }
        self.apply(tmp, k4);
        for i in 0..rho.len() {
            rho[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
        }
    }

    /// Largest total decay rate, used to size the step.
    pub fn total_rate(&self) -> f64 {
        let diag: f64 = self.jumps.iter().filter(|(l, m, _)| l == m).map(|(_, _, r)| r.re).sum();
        let h = self.h_eff.iter().map(|(_, _, v)| v.norm()).fold(0.0, f64::max);
        diag.max(h * self.n as f64)
    }
}

#[derive(Debug, Clone)]
pub struct Rk4Scratch {
    k1: Vec<C64>,
    k2: Vec<C64>,
    k3: Vec<C64>,
    k4: Vec<C64>,
    tmp: Vec<C64>,
}

impl Rk4Scratch {
    pub fn new(len: usize) -> Self {
        let z = vec![C64::new(0.0, 0.0); len];
        Rk4Scratch { k1: z.clone(), k2: z.clone(), k3: z.clone(), k4: z.clone(), tmp: z }
    }
}

/// Default step: `min(10⁻³, 0.01/rate)`.
pub fn default_step(l: &Liouvillian) -> f64 {
    let rate = l.total_rate();
    if rate > 0.0 {
        (0.01 / rate).min(1e-3)
    } else {
        1e-3
    }
}

/// Exact observables on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSeries {
    pub time_grid: Vec<f64>,
    pub i_plus: Vec<f64>,
    pub i_minus: Vec<f64>,
    pub sz_total: Vec<f64>,
    /// Equal-time `⟨E†E†EE⟩` of each direction.
    pub fourth_plus: Vec<f64>,
    pub fourth_minus: Vec<f64>,
}

impl OracleSeries {
    /// Equal-time `⟨E†E†EE⟩/⟨E†E⟩²`.
    pub fn g2_equal_time(&self, direction: Direction) -> Vec<f64> {
        let (f, i) = match direction {
            Direction::Plus => (&self.fourth_plus, &self.i_plus),
            Direction::Minus => (&self.fourth_minus, &self.i_minus),
        };
        f.iter().zip(i).map(|(f, i)| f / (i * i)).collect()
    }
}

/// `⟨σ_j⁺σ_l⁻⟩` for all pairs.
pub fn coherence_matrix(rho: &CMatrix, n: usize) -> CMatrix {
    let d = rho.nrows();
    let mut c = CMatrix::zeros(n, n);
    for j in 0..n {
        for l in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for a in 0..d {
                if a & (1 << l) == 0 {
                    continue;
                }
                let lowered = a ^ (1 << l);
                if lowered & (1 << j) != 0 {
                    continue;
                }
                // ⟨a'|σ_j⁺σ_l⁻|a⟩ = 1 with a' = a − l + j.
                acc += rho[(a, lowered | (1 << j))];
            }
            c[(j, l)] = acc;
        }
    }
    c
}

/// Lowering operator of emitter `n` on `n_spins` emitters.
pub fn lowering_operator(n: usize, n_spins: usize) -> CMatrix {
    let d = 1usize << n_spins;
    let mut op = CMatrix::zeros(d, d);
    for b in 0..d {
        if b & (1 << n) != 0 {
            op[(b ^ (1 << n), b)] = C64::new(1.0, 0.0);
        }
    }
    op
}

/// Field operator `E = i√(Γ_1D/2) Σ_n e^{iqz_n} σ_n⁻`.
pub fn field_operator(positions: &[f64], q: f64, gamma_1d: f64) -> CMatrix {
    let n = positions.len();
    let d = 1usize << n;
    let mut e = CMatrix::zeros(d, d);
    let amp = C64::new(0.0, (0.5 * gamma_1d).sqrt());
    for (k, &z) in positions.iter().enumerate() {
        e += lowering_operator(k, n) * (amp * C64::from_polar(1.0, q * z));
    }
    e
}

fn intensity_from_coherences(c: &CMatrix, positions: &[f64], q: f64, cross: f64, gamma_1d: f64) -> f64 {
    let n = positions.len();
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..n {
        for l in 0..n {
            let w = if j == l { 1.0 } else { cross };
            acc += C64::from_polar(w, q * (positions[l] - positions[j])) * c[(j, l)];
        }
    }
    0.5 * gamma_1d * acc.re
}

/// Integrates from the fully excited state with step `step`, recording on
/// `time_grid` (which must be non-decreasing and start at or after 0).
pub fn evolve_with_step(
    couplings: &CouplingSet,
    gamma_single: f64,
    geometry: &FieldGeometry,
    positions: &[f64],
    time_grid: &[f64],
    step: f64,
) -> Result<OracleSeries> {
    let n = couplings.n();
    if positions.len() != n {
        return Err(Error::Domain(format!("{} positions for {n} emitters", positions.len())));
    }
    if !(step > 0.0) {
        return Err(Error::Domain("oracle step must be positive".into()));
    }
    let l = Liouvillian::new(couplings, gamma_single)?;
    let d = l.dim();
    let mut state = DensityState::excited(n);
    let mut rho: Vec<C64> = (0..d * d).map(|k| state.rho[(k / d, k % d)]).collect();
    let mut scratch = Rk4Scratch::new(d * d);
    let e_plus = field_operator(positions, geometry.q_plus, geometry.gamma_1d);
    let e_minus = field_operator(positions, geometry.q_minus, geometry.gamma_1d);
    let four = |e: &CMatrix| {
        let ee = e * e;
        ee.adjoint() * ee
    };
    let (f_plus, f_minus) = (four(&e_plus), four(&e_minus));
    let mut out = OracleSeries {
        time_grid: time_grid.to_vec(),
        i_plus: Vec::new(),
        i_minus: Vec::new(),
        sz_total: Vec::new(),
        fourth_plus: Vec::new(),
        fourth_minus: Vec::new(),
    };
    let mut t = 0.0;
    for &target in time_grid {
        if target < t {
            return Err(Error::Domain("oracle time grid must be non-decreasing from 0".into()));
        }
        let span = target - t;
        let steps = (span / step).ceil() as usize;
        if steps > 0 {
            let h = span / steps as f64;
            for _ in 0..steps {
                l.rk4_step(&mut rho, h, &mut scratch);
            }
        }
        t = target;
        state.rho = CMatrix::from_row_slice(d, d, &rho);
        state.t = t;
        state.check_integrity()?;
        let c = coherence_matrix(&state.rho, n);
        out.i_plus.push(intensity_from_coherences(&c, positions, geometry.q_plus, geometry.cross_plus, geometry.gamma_1d));
        out.i_minus.push(intensity_from_coherences(&c, positions, geometry.q_minus, geometry.cross_minus, geometry.gamma_1d));
        let sz: f64 = (0..d).map(|b| state.rho[(b, b)].re * (2.0 * (b.count_ones() as f64) - n as f64)).sum();
        out.sz_total.push(sz);
        out.fourth_plus.push((&f_plus * &state.rho).trace().re);
        out.fourth_minus.push((&f_minus * &state.rho).trace().re);
    }
    Ok(out)
}

/// Exact observables with the default step size.
pub fn evolve_master_equation(
    couplings: &CouplingSet,
    gamma_single: f64,
    geometry: &FieldGeometry,
    positions: &[f64],
    time_grid: &[f64],
) -> Result<OracleSeries> {
    let step = default_step(&Liouvillian::new(couplings, gamma_single)?);
    evolve_with_step(couplings, gamma_single, geometry, positions, time_grid, step)
}

/// Couplings and emission geometry the oracle uses for a configuration.
pub fn oracle_model(config: &SimulationConfig, positions: &[f64]) -> Result<(CouplingSet, FieldGeometry)> {
    match config.model_mode {
        ModelMode::Frozen => Ok((
            build_dynamic_couplings(positions, config.lambda0, config.lambda_p, config.gamma_1d)?,
            FieldGeometry::new(config.lambda0, config.lambda_p, config.gamma_1d),
        )),
        ModelMode::StaticBlur => {
            let beta = config.static_beta_minus();
            Ok((
                build_static_couplings(positions, beta, config.gamma_1d, config.lambda0)?,
                FieldGeometry::static_model(config.lambda0, config.gamma_1d, beta),
            ))
        }
        ModelMode::DynamicMotion => Err(Error::validation("the oracle has no atomic motion; use frozen or static mode")),
    }
}

/// Deviation of a TWA ensemble from the exact evolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub n_spins: usize,
    pub n_traj: usize,
    pub positions: Vec<f64>,
    /// Largest `|TWA − exact|/exact` of `I₊` and `I₋` where the exact
    /// intensity exceeds 1% of its peak.
    pub max_rel_dev_plus: f64,
    pub max_rel_dev_minus: f64,
    /// Standard error relative to the exact value at the worst point.
    pub rel_se_plus: f64,
    pub rel_se_minus: f64,
    /// Largest `|TWA − exact|` of `Σ σ_z`, divided by `N`.
    pub max_dev_sz: f64,
    pub twa: ObservableSeries,
    pub exact: OracleSeries,
}

impl ComparisonReport {
    pub fn max_intensity_deviation(&self) -> f64 {
        self.max_rel_dev_plus.max(self.max_rel_dev_minus)
    }
}

fn max_rel_dev(twa: &[f64], se: &[f64], exact: &[f64]) -> (f64, f64) {
    let peak = exact.iter().cloned().fold(0.0, f64::max);
    let mut worst = (0.0, 0.0);
    for k in 0..exact.len() {
        if exact[k] > 0.01 * peak {
            let dev = (twa[k] - exact[k]).abs() / exact[k];
            if dev > worst.0 {
                worst = (dev, se[k] / exact[k]);
            }
        }
    }
    worst
}

/// Positions used by [`compare_twa_oracle`]: one sample of the configured
/// distribution, drawn from a stream reserved for this purpose.
pub fn reference_positions(config: &SimulationConfig) -> Vec<f64> {
    sample_initial_state(config, u64::MAX).z
}

/// Runs the TWA ensemble and the exact evolution at the same fixed positions.
pub fn compare_twa_oracle_at(config: &SimulationConfig, options: &EngineOptions, positions: &[f64]) -> Result<ComparisonReport> {
    if config.n_spins > 4 {
        return Err(Error::validation("oracle comparison supports at most 4 emitters"));
    }
    let (couplings, geometry) = oracle_model(config, positions)?;
    let twa = run_ensemble_at(config, options, positions)?;
    let exact = evolve_master_equation(&couplings, config.gamma_single, &geometry, positions, &twa.time_grid)?;
    let (max_rel_dev_plus, rel_se_plus) = max_rel_dev(&twa.mean_i_plus, &twa.se(Direction::Plus), &exact.i_plus);
    let (max_rel_dev_minus, rel_se_minus) = max_rel_dev(&twa.mean_i_minus, &twa.se(Direction::Minus), &exact.i_minus);
    // TWA records Σ√3 cos θ, the symbol of Σσ_z.
    let max_dev_sz = twa
        .sz_mean
        .iter()
        .zip(&exact.sz_total)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / config.n_spins as f64;
    Ok(ComparisonReport {
        n_spins: config.n_spins,
        n_traj: twa.n_traj,
        positions: positions.to_vec(),
        max_rel_dev_plus,
        max_rel_dev_minus,
        rel_se_plus,
        rel_se_minus,
        max_dev_sz,
        twa,
        exact,
    })
}

pub fn compare_twa_oracle(config: &SimulationConfig, options: &EngineOptions) -> Result<ComparisonReport> {
    compare_twa_oracle_at(config, options, &reference_positions(config))
}

/// Dense superoperator of the same generator, built from Kronecker products
/// (`vec(AρB) = (Bᵀ ⊗ A) vec(ρ)`, column stacking). Only meant for tests.
pub fn dense_superoperator(couplings: &CouplingSet, gamma_single: f64) -> DMatrix<C64> {
    let n = couplings.n();
    let d = 1usize << n;
    let id = CMatrix::identity(d, d);
    let lower: Vec<CMatrix> = (0..n).map(|k| lowering_operator(k, n)).collect();
    let mut h = CMatrix::zeros(d, d);
    for l in 0..n {
        for m in 0..n {
            h += lower[l].adjoint() * &lower[m] * couplings.g[(l, m)];
        }
        h -= lower[l].adjoint() * &lower[l] * C64::new(0.0, 0.5 * gamma_single);
    }
    let mi = C64::new(0.0, -1.0);
    let mut sup = id.kronecker(&h) * mi + h.adjoint().transpose().kronecker(&id) * C64::new(0.0, 1.0);
    for l in 0..n {
        for m in 0..n {
            let mut rate = couplings.gamma_matrix[(l, m)];
            if l == m {
                rate += gamma_single;
            }
            let a = &lower[m];
            let b = lower[l].adjoint();
            sup += b.transpose().kronecker(a) * rate;
        }
    }
    sup
}
