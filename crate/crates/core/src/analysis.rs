//! Fits, parameter sweeps and oracle gates built on top of the simulator.

use serde::{Deserialize, Serialize};

use crate::observables::{burst_statistics, BurstStatistics, Direction, KappaSource};
use crate::oracle::compare_twa_oracle;
use crate::params::{ModelMode, SimulationConfig};
use crate::rng::derive_seed;
use crate::twa::{run_ensemble_with, EngineOptions};
use crate::{Error, Result};

/// Ordinary least squares `y = a + b x`. Returns `(a, b, sse, se_b)`.
fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(u, v)| (u - mx) * (v - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let sse: f64 = x.iter().zip(y).map(|(u, v)| (v - a - b * u).powi(2)).sum();
    let se_b = if n > 2.0 && sxx > 0.0 { (sse / (n - 2.0) / sxx).sqrt() } else { f64::INFINITY };
    (a, b, sse, se_b)
}

/// Two-segment power law fitted in log-log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFit {
    /// Abscissa where the two lines cross, `None` when the data show no
    /// significant change of slope.
    pub breakpoint: Option<f64>,
    pub slope_low: f64,
    pub slope_high: f64,
    pub intercept_low: f64,
    pub intercept_high: f64,
    /// Root-mean-square log residual of `max(low, high)`.
    pub residual: f64,
    /// Slope of a single line through all points.
    pub single_slope: f64,
}

/// Fits `log y = max(a₁ + b₁ log x, a₂ + b₂ log x)`.
///
/// Every split between consecutive sorted abscissae with at least three points
/// on each side is tried; each side gets its own regression and the split
/// with the least total squared error wins (the earlier one on ties). No
/// breakpoint is reported if the upper slope does not exceed the lower one by
/// more than three combined standard errors, or if the lines cross outside
/// the data.
pub fn fit_threshold(points: &[(f64, f64)]) -> Result<ThresholdFit> {
    if points.len() < 6 {
        return Err(Error::InsufficientData(format!("threshold fit needs at least 6 points, got {}", points.len())));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::Domain("threshold fit needs positive abscissae and amplitudes".into()));
    }
    let mut p: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    p.sort_by(|a, b| a.0.total_cmp(&b.0));
    let xs: Vec<f64> = p.iter().map(|q| q.0).collect();
    let ys: Vec<f64> = p.iter().map(|q| q.1).collect();
    let n = p.len();

    let mut best: Option<(f64, usize)> = None;
    for k in 3..=n - 3 {
        if xs[k - 1] == xs[k] {
            continue;
        }
        let sse = ols(&xs[..k], &ys[..k]).2 + ols(&xs[k..], &ys[k..]).2;
        if best.is_none_or(|(s, _)| sse < s) {
            best = Some((sse, k));
        }
    }
    let (_, k) = best.ok_or_else(|| Error::InsufficientData("no split leaves three distinct points per side".into()))?;
    let (a1, b1, _, se1) = ols(&xs[..k], &ys[..k]);
    let (a2, b2, _, se2) = ols(&xs[k..], &ys[k..]);
    let single_slope = ols(&xs, &ys).1;

    let residual = (xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (a1 + b1 * x).max(a2 + b2 * x)).powi(2))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    let spread = (se1 * se1 + se2 * se2).sqrt();
    let significant = b2 - b1 > 3.0 * spread + 1e-9;
    let breakpoint = if significant {
        let x = (a1 - a2) / (b2 - b1);
        (xs[0] <= x && x <= xs[n - 1]).then(|| x.exp())
    } else {
        None
    };
    Ok(ThresholdFit {
        breakpoint,
        slope_low: b1,
        slope_high: b2,
        intercept_low: a1,
        intercept_high: a2,
        residual,
        single_slope,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FwhmScaling {
    /// `c` of `τ = c/(N Γ)` with the exponent fixed to −1.
    pub coefficient: f64,
    /// Free log-log fit `τ = A·N^exponent`.
    pub exponent: f64,
    pub prefactor: f64,
    pub exponent_se: f64,
}

/// Least-squares fits of burst width against cooperation number.
pub fn fit_fwhm_scaling(points: &[(f64, f64)], gamma: f64) -> Result<FwhmScaling> {
    if points.len() < 4 {
        return Err(Error::InsufficientData(format!("width scaling needs at least 4 points, got {}", points.len())));
    }
    if !(gamma > 0.0) || points.iter().any(|&(n, w)| !(n > 0.0 && w > 0.0)) {
        return Err(Error::Domain("width scaling needs positive cooperation numbers, widths and rate".into()));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for &(n, w) in points {
        let u = 1.0 / (n * gamma);
        num += w * u;
        den += u * u;
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (a, b, _, se) = ols(&xs, &ys);
    Ok(FwhmScaling { coefficient: num / den, exponent: b, prefactor: a.exp(), exponent_se: se })
}

/// Grid of ensemble runs over cooperation number and velocity spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: SimulationConfig,
    /// Cooperation numbers `N·Γ_1D/Γ`; the emitter count is derived from them.
    pub axis_n: Vec<f64>,
    /// Velocity spreads in units of `λ₀Γ`.
    pub axis_sigma_v: Vec<f64>,
    #[serde(default)]
    pub replicate_seeds: Vec<u64>,
}

impl SweepSpec {
    fn seeds(&self) -> Vec<u64> {
        if self.replicate_seeds.is_empty() {
            vec![self.base.seed]
        } else {
            self.replicate_seeds.clone()
        }
    }

    /// Configuration of one cell.
    pub fn cell_config(&self, n_mc: f64, sigma_v: f64, seed: u64) -> Result<SimulationConfig> {
        let mut c = self.base.clone();
        let per_spin = if c.gamma_single > 0.0 { c.gamma_1d / c.gamma_single } else { 1.0 };
        if !(per_spin > 0.0) {
            return Err(Error::validation("sweeps over cooperation need `gamma_1d` > 0"));
        }
        c.n_spins = (n_mc / per_spin).round().max(1.0) as usize;
        // Γ is the velocity unit's rate; without it, rates are in units of 1.
        let gamma = if c.gamma_single > 0.0 { c.gamma_single } else { 1.0 };
        c.v_bar = sigma_v * c.lambda0 * gamma;
        c.seed = seed;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.axis_n.is_empty() || self.axis_sigma_v.is_empty() {
            return Err(Error::validation("sweep axes must be non-empty"));
        }
        if self.axis_n.iter().any(|n| !(*n >= 1.0 && n.is_finite())) {
            return Err(Error::validation("`axis_n` values must be at least 1"));
        }
        if self.axis_sigma_v.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::validation("`axis_sigma_v` values must be non-negative"));
        }
        for &n in &self.axis_n {
            for &s in &self.axis_sigma_v {
                self.cell_config(n, s, self.base.seed)?;
            }
        }
        Ok(())
    }
}

/// One row of a sweep table. `error` is set, and the numbers are NaN, when
/// the cell failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_mc: f64,
    pub n_spins: usize,
    pub sigma_v: f64,
    pub seed: u64,
    pub kappa: f64,
    pub standard_error: f64,
    pub r_plus: f64,
    pub r_minus: f64,
    pub delay: f64,
    pub fwhm: Option<f64>,
    pub fwhm_per_shot: Option<f64>,
    pub error: Option<String>,
}

/// Runs every cell of `spec` and returns rows sorted by `(n_mc, sigma_v,
/// seed)`. Cells run concurrently on at most `jobs` threads.
pub fn sweep_directionality(spec: &SweepSpec, options: &EngineOptions, source: KappaSource, jobs: usize) -> Result<Vec<SweepRow>> {
    use rayon::prelude::*;
    spec.validate()?;
    let mut keys = Vec::new();
    for &n in &spec.axis_n {
        for &s in &spec.axis_sigma_v {
            for seed in spec.seeds() {
                keys.push((n, s, seed));
            }
        }
    }
    keys.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    keys.dedup();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::validation(format!("cannot build thread pool: {e}")))?;
    let rows = pool.install(|| {
        keys.par_iter()
            .map(|&(n_mc, sigma_v, seed)| {
                let config = spec.cell_config(n_mc, sigma_v, seed);
                let n_spins = config.as_ref().map_or(0, |c| c.n_spins);
                let outcome = config
                    .and_then(|c| run_ensemble_with(&c, options))
                    .and_then(|s| burst_statistics(&s, source, 0.0));
                sweep_row(n_mc, n_spins, sigma_v, seed, outcome)
            })
            .collect::<Vec<_>>()
    });
    Ok(rows)
}

fn sweep_row(n_mc: f64, n_spins: usize, sigma_v: f64, seed: u64, outcome: Result<BurstStatistics>) -> SweepRow {
    match outcome {
        Ok(b) => SweepRow {
            n_mc,
            n_spins,
            sigma_v,
            seed,
            kappa: b.kappa,
            standard_error: b.kappa_se,
            r_plus: b.r_plus,
            r_minus: b.r_minus,
            delay: b.delay,
            fwhm: b.fwhm,
            fwhm_per_shot: b.fwhm_per_shot,
            error: None,
        },
        Err(e) => SweepRow {
            n_mc,
            n_spins,
            sigma_v,
            seed,
            kappa: f64::NAN,
            standard_error: f64::NAN,
            r_plus: f64::NAN,
            r_minus: f64::NAN,
            delay: f64::NAN,
            fwhm: None,
            fwhm_per_shot: None,
            error: Some(e.to_string()),
        },
    }
}

/// Replicate seeds derived from one base seed.
pub fn replicate_seeds(seed: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|k| derive_seed(seed, k)).collect()
}

/// Default relative tolerance of the master-equation comparison.
pub const ORACLE_TOLERANCE: f64 = 0.10;
/// Tolerance of the single-emitter decay check.
pub const FREE_DECAY_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub pass: bool,
    /// `"free-decay"` for one emitter, `"master-equation"` otherwise.
    pub reference: String,
    pub n_spins: usize,
    pub n_traj: usize,
    pub tolerance: f64,
    pub max_deviation: f64,
    /// Standard error of the TWA mean at the worst point, relative.
    pub relative_se: f64,
    pub max_deviation_plus: Option<f64>,
    pub max_deviation_minus: Option<f64>,
    pub max_deviation_sz: Option<f64>,
}

/// Gate comparing a TWA ensemble with exact results. One emitter is compared
/// with the analytic population `exp(−(Γ_1D + Γ)t)`, larger sets with the
/// master equation at the reference positions.
pub fn oracle_check(config: &SimulationConfig, options: &EngineOptions, tolerance: Option<f64>) -> Result<OracleCheck> {
    if config.model_mode == ModelMode::DynamicMotion {
        return Err(Error::validation("oracle checks need `frozen` or `static_blur` mode"));
    }
    if config.n_spins == 1 {
        let tolerance = tolerance.unwrap_or(FREE_DECAY_TOLERANCE);
        let series = run_ensemble_with(config, options)?;
        let rate = config.gamma_1d + config.gamma_single;
        let (dev, se) = free_decay_deviation(&series.time_grid, &series.excitation(1), &series.sz_se(), rate);
        return Ok(OracleCheck {
            pass: dev <= tolerance,
            reference: "free-decay".into(),
            n_spins: 1,
            n_traj: series.n_traj,
            tolerance,
            max_deviation: dev,
            relative_se: se,
            max_deviation_plus: None,
            max_deviation_minus: None,
            max_deviation_sz: None,
        });
    }
    let tolerance = tolerance.unwrap_or(ORACLE_TOLERANCE);
    let report = compare_twa_oracle(config, options)?;
    let dev = report.max_intensity_deviation();
    let se = if report.max_rel_dev_plus >= report.max_rel_dev_minus { report.rel_se_plus } else { report.rel_se_minus };
    Ok(OracleCheck {
        pass: dev <= tolerance,
        reference: "master-equation".into(),
        n_spins: config.n_spins,
        n_traj: report.n_traj,
        tolerance,
        max_deviation: dev,
        relative_se: se,
        max_deviation_plus: Some(report.max_rel_dev_plus),
        max_deviation_minus: Some(report.max_rel_dev_minus),
        max_deviation_sz: Some(report.max_dev_sz),
    })
}

/// Largest relative deviation of a population curve from `exp(−rate·t)`
/// where the exact value is above 1% of its start, with the relative standard
/// error at that point (`sz_se` is the error of `σ_z`, twice that of the
/// population).
pub fn free_decay_deviation(time_grid: &[f64], population: &[f64], sz_se: &[f64], rate: f64) -> (f64, f64) {
    let mut worst = (0.0, 0.0);
    for k in 0..time_grid.len() {
        let exact = (-rate * time_grid[k]).exp();
        if exact > 0.01 {
            let dev = (population[k] - exact).abs() / exact;
            if dev > worst.0 {
                worst = (dev, 0.5 * sz_se[k] / exact);
            }
        }
    }
    worst
}

/// Result of matching the static model's directionality to a target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauMatch {
    pub tau: f64,
    pub kappa_static: f64,
    pub kappa_se: f64,
    pub kappa_target: f64,
    /// False when the target lies outside the bracketing values of `κ`.
    pub bracketed: bool,
}

/// Finds the blur time `τ` for which the static model reproduces
/// `kappa_target` on `[tau_lo, tau_hi]`, by regula falsi (Illinois variant)
/// in `log τ`. Stops once `|κ − target| ≤ tolerance` or after `max_evals`
/// ensemble runs, returning the closest evaluation.
///
/// All evaluations share the seed of `config`, so the static `κ(τ)` is a
/// smooth, increasing function of `τ` up to sampling noise common to every
/// evaluation.
pub fn match_static_tau(
    config: &SimulationConfig,
    options: &EngineOptions,
    kappa_target: f64,
    bracket: (f64, f64),
    tolerance: f64,
    max_evals: usize,
) -> Result<TauMatch> {
    let (lo, hi) = bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Domain(format!("invalid blur-time bracket ({lo}, {hi})")));
    }
    let eval = |tau: f64| -> Result<(f64, f64)> {
        let mut c = config.clone();
        c.model_mode = ModelMode::StaticBlur;
        c.tau_blur = Some(tau);
        c.beta_minus_override = None;
        let b = burst_statistics(&run_ensemble_with(&c, options)?, KappaSource::Mean, 0.0)?;
        Ok((b.kappa, b.kappa_se))
    };
    let mut best: Option<(f64, f64, f64)> = None;
    let keep = |best: &mut Option<(f64, f64, f64)>, tau: f64, k: f64, se: f64| {
        if best.is_none_or(|b| (k - kappa_target).abs() < (b.1 - kappa_target).abs()) {
            *best = Some((tau, k, se));
        }
    };
    let (mut xa, mut xb) = (lo.ln(), hi.ln());
    let (ka, sa) = eval(lo)?;
    keep(&mut best, lo, ka, sa);
    let (kb, sb) = eval(hi)?;
    keep(&mut best, hi, kb, sb);
    let (mut fa, mut fb) = (ka - kappa_target, kb - kappa_target);
    let bracketed = fa < 0.0 && fb > 0.0;
    let mut evals = 2;
    let mut side = 0i8;
    while bracketed && evals < max_evals && best.is_some_and(|b| (b.1 - kappa_target).abs() > tolerance) {
        let x = (xa * fb - xb * fa) / (fb - fa);
        let tau = x.exp();
        let (k, se) = eval(tau)?;
        evals += 1;
        keep(&mut best, tau, k, se);
        let f = k - kappa_target;
        if f < 0.0 {
            xa = x;
            fa = f;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            xb = x;
            fb = f;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    let (tau, kappa_static, kappa_se) = best.expect("at least two evaluations");
    Ok(TauMatch { tau, kappa_static, kappa_se, kappa_target, bracketed })
}

/// Ensemble peak rates for a list of configurations, in order.
pub fn peak_rates(configs: &[SimulationConfig], options: &EngineOptions, direction: Direction) -> Result<Vec<f64>> {
    configs
        .iter()
        .map(|c| {
            let s = run_ensemble_with(c, options)?;
            Ok(s.mean(direction).iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
    }

    fn composite(x: f64) -> f64 {
        if x < 100.0 {
            x
        } else {
            x * x / 100.0
        }
    }

    #[test]
    fn synthetic_breakpoint_recovered() {
        let pts: Vec<(f64, f64)> = log_spaced(10.0, 1000.0, 20).into_iter().map(|x| (x, composite(x))).collect();
        let fit = fit_threshold(&pts).unwrap();
        let b = fit.breakpoint.expect("breakpoint");
        assert!((b / 100.0 - 1.0).abs() < 0.1, "breakpoint {b}");
        assert!((fit.slope_low - 1.0).abs() < 0.05);
        assert!((fit.slope_high - 2.0).abs() < 0.05);
        assert!(fit.residual >= 0.0);
    }

    #[test]
    fn single_power_law_has_no_breakpoint() {
        let pts: Vec<(f64, f64)> = log_spaced(1.0, 500.0, 15).into_iter().map(|x| (x, 3.0 * x.powf(1.7))).collect();
        let fit = fit_threshold(&pts).unwrap();
        assert_eq!(fit.breakpoint, None);
        assert_relative_eq!(fit.single_slope, 1.7, max_relative = 1e-10);
    }

    #[test]
    fn threshold_fit_rejects_degenerate_input() {
        let pts: Vec<(f64, f64)> = (1..=5).map(|i| (i as f64, i as f64)).collect();
        assert!(matches!(fit_threshold(&pts), Err(Error::InsufficientData(_))));
        let mut bad: Vec<(f64, f64)> = (1..=8).map(|i| (i as f64, i as f64)).collect();
        bad[2].1 = 0.0;
        assert!(matches!(fit_threshold(&bad), Err(Error::Domain(_))));
    }

    #[test]
    fn fwhm_fit_of_exact_law() {
        let pts: Vec<(f64, f64)> = [50.0, 100.0, 200.0, 300.0, 500.0].iter().map(|&n| (n, 6.0 / n)).collect();
        let f = fit_fwhm_scaling(&pts, 1.0).unwrap();
        assert_relative_eq!(f.coefficient, 6.0, max_relative = 1e-12);
        assert_relative_eq!(f.exponent, -1.0, max_relative = 1e-12);
        assert_relative_eq!(f.prefactor, 6.0, max_relative = 1e-10);
        let g = fit_fwhm_scaling(&pts.iter().map(|&(n, w)| (n, w / 2.0)).collect::<Vec<_>>(), 2.0).unwrap();
        assert_relative_eq!(g.coefficient, 6.0, max_relative = 1e-12);
        assert!(matches!(fit_fwhm_scaling(&[(1.0, 1.0), (2.0, -1.0), (3.0, 1.0), (4.0, 1.0)], 1.0), Err(Error::Domain(_))));
        assert!(matches!(fit_fwhm_scaling(&pts[..3], 1.0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn free_decay_reference() {
        let grid: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let pop: Vec<f64> = grid.iter().map(|t| (-2.0 * t).exp() * 1.01).collect();
        let (dev, _) = free_decay_deviation(&grid, &pop, &vec![0.0; 50], 2.0);
        assert_relative_eq!(dev, 0.01, max_relative = 1e-9);
    }

    fn small_spec() -> SweepSpec {
        SweepSpec {
            base: SimulationConfig {
                n_spins: 1,
                sample_length: 20.0,
                n_traj: 16,
                t_max: 0.03,
                model_mode: ModelMode::DynamicMotion,
                ..Default::default()
            },
            axis_n: vec![6.0, 3.0],
            axis_sigma_v: vec![1.0, 0.0],
            replicate_seeds: vec![4, 2],
        }
    }

    #[test]
    fn sweep_rows_are_ordered_and_reproducible() {
        let spec = small_spec();
        let opts = EngineOptions::default();
        let a = sweep_directionality(&spec, &opts, KappaSource::Mean, 2).unwrap();
        assert_eq!(a.len(), 8);
        let keys: Vec<(f64, f64, u64)> = a.iter().map(|r| (r.n_mc, r.sigma_v, r.seed)).collect();
        let mut sorted = keys.clone();
        sorted.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)).then(x.2.cmp(&y.2)));
        assert_eq!(keys, sorted);
        assert_eq!(a[0].n_spins, 3);
        let mut permuted = spec.clone();
        permuted.axis_n.reverse();
        permuted.axis_sigma_v.reverse();
        permuted.replicate_seeds.reverse();
        let b = sweep_directionality(&permuted, &opts, KappaSource::Mean, 1).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn failed_cells_become_rows() {
        let row = sweep_row(10.0, 10, 3.0, 1, Err(Error::UndefinedDirectionality));
        assert!(row.kappa.is_nan() && row.fwhm.is_none());
        assert!(row.error.unwrap().contains("directionality"));
        let mut spec = small_spec();
        spec.axis_n = vec![0.5];
        assert!(matches!(sweep_directionality(&spec, &EngineOptions::default(), KappaSource::Mean, 1), Err(Error::Validation { .. })));
    }

    #[test]
    fn zero_velocity_column_is_symmetric_within_errors() {
        let mut spec = small_spec();
        spec.base.n_traj = 200;
        spec.base.t_max = 0.1;
        spec.axis_n = vec![4.0, 8.0];
        spec.axis_sigma_v = vec![0.0];
        spec.replicate_seeds = vec![];
        for row in sweep_directionality(&spec, &EngineOptions::default(), KappaSource::Mean, 1).unwrap() {
            assert!(row.kappa.abs() < 3.0 * row.standard_error + 1e-12, "{row:?}");
        }
    }

    #[test]
    fn free_decay_gate_passes_without_guided_coupling() {
        let config = SimulationConfig {
            n_spins: 1,
            gamma_1d: 0.0,
            n_traj: 20_000,
            t_max: 2.0,
            ..Default::default()
        };
        let check = oracle_check(&config, &EngineOptions::default(), None).unwrap();
        assert!(check.pass, "{check:?}");
        assert_eq!(check.reference, "free-decay");
    }

    fn pair_config() -> SimulationConfig {
        SimulationConfig {
            n_spins: 2,
            gamma_1d: 0.5,
            sample_length: 2.0,
            n_traj: 20_000,
            t_max: 0.5184,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn weakly_coupled_pair_passes_and_fault_injection_fails() {
        let config = pair_config();
        let good = oracle_check(&config, &EngineOptions::default(), None).unwrap();
        assert!(good.pass, "{good:?}");
        let flipped = EngineOptions { convention: crate::observables::PhaseConvention::Flipped, ..Default::default() };
        let bad = oracle_check(&config, &flipped, None).unwrap();
        assert!(!bad.pass, "{bad:?}");
    }

    #[test]
    fn oracle_gate_rejects_motion() {
        let config = SimulationConfig { model_mode: ModelMode::DynamicMotion, n_spins: 2, ..Default::default() };
        assert!(oracle_check(&config, &EngineOptions::default(), None).is_err());
    }

    #[test]
    fn static_blur_time_reproduces_target() {
        let config = SimulationConfig {
            n_spins: 30,
            v_bar: 3.0,
            sample_length: 30.0,
            n_traj: 64,
            t_max: 0.3,
            ..Default::default()
        };
        let opts = EngineOptions::default();
        let m = match_static_tau(&config, &opts, 0.3, (1e-3, 0.1), 0.02, 12).unwrap();
        assert!(m.bracketed);
        assert!((m.kappa_static - 0.3).abs() <= 0.02, "{m:?}");
        assert!(1e-3 < m.tau && m.tau < 0.1);
        let out = match_static_tau(&config, &opts, 1.5, (1e-3, 0.1), 0.02, 12).unwrap();
        assert!(!out.bracketed);
        assert!(matches!(match_static_tau(&config, &opts, 0.3, (0.1, 0.01), 0.02, 5), Err(Error::Domain(_))));
    }

    #[test]
    fn replicate_seeds_are_distinct() {
        let s = replicate_seeds(9, 16);
        let mut d = s.clone();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), 16);
        assert_eq!(s, replicate_seeds(9, 16));
    }

    proptest! {
        #[test]
        fn threshold_fit_invariant_under_amplitude_scaling(
            scale in 1e-3f64..1e3,
            jitter in prop::collection::vec(-0.05f64..0.05, 16),
        ) {
            let pts: Vec<(f64, f64)> = log_spaced(5.0, 2000.0, 16)
                .into_iter()
                .zip(&jitter)
                .map(|(x, j)| (x, composite(x) * j.exp()))
                .collect();
            let scaled: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (x, y * scale)).collect();
            let a = fit_threshold(&pts).unwrap();
            let b = fit_threshold(&scaled).unwrap();
            prop_assert!((a.slope_low - b.slope_low).abs() < 1e-9);
            prop_assert!((a.slope_high - b.slope_high).abs() < 1e-9);
            prop_assert_eq!(a.breakpoint.is_some(), b.breakpoint.is_some());
            if let (Some(x), Some(y)) = (a.breakpoint, b.breakpoint) {
                prop_assert!((x / y - 1.0).abs() < 1e-9);
            }
            prop_assert!((b.intercept_low - a.intercept_low - scale.ln()).abs() < 1e-9);
        }
    }
}
