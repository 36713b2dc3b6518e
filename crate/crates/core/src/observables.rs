//! Field symbols, directional intensities, ensemble statistics and burst metrics.
//!
//! Spin symbols follow `s⁻ = (√3/2) sin θ e^{iφ}`, `s⁺ = conj(s⁻)` and
//! `s_z = √3 cos θ`. Same-spin operator products are mapped through
//! `σ⁺σ⁻ = (1 + σ_z)/2`, never as products of symbols.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::coupling::wavenumber;
use crate::{Error, Result, C64};

pub const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Relative imaginary residual tolerated in a per-trajectory intensity.
pub const REALITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Plus,
    Minus,
}

impl Direction {
    /// `q = k_p ∓ k₀`.
    pub fn wavevector(self, k0: f64, kp: f64) -> f64 {
        match self {
            Direction::Plus => kp - k0,
            Direction::Minus => kp + k0,
        }
    }
}

/// Sign of the azimuth in `s⁻`. `Flipped` is a deliberately wrong convention
/// kept for fault-injection checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseConvention {
    #[default]
    Standard,
    Flipped,
}

#[inline]
pub fn lowering_symbol(theta: f64, phi: f64, convention: PhaseConvention) -> C64 {
    let phi = match convention {
        PhaseConvention::Standard => phi,
        PhaseConvention::Flipped => -phi,
    };
    C64::from_polar(0.5 * SQRT3 * theta.sin(), phi)
}

/// Symbol of `σ⁺σ⁻` for a single spin.
#[inline]
pub fn population_symbol(theta: f64) -> f64 {
    0.5 * (1.0 + SQRT3 * theta.cos())
}

/// Emission geometry shared by all intensity evaluations of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldGeometry {
    pub gamma_1d: f64,
    pub q_plus: f64,
    pub q_minus: f64,
    /// Weight of the inter-spin terms of `I₊` and `I₋` (motion-averaged
    /// suppression in the static model, 1 otherwise).
    pub cross_plus: f64,
    pub cross_minus: f64,
    pub convention: PhaseConvention,
}

impl FieldGeometry {
    pub fn new(lambda0: f64, lambda_p: f64, gamma_1d: f64) -> Self {
        let (k0, kp) = (wavenumber(lambda0), wavenumber(lambda_p));
        FieldGeometry {
            gamma_1d,
            q_plus: Direction::Plus.wavevector(k0, kp),
            q_minus: Direction::Minus.wavevector(k0, kp),
            cross_plus: 1.0,
            cross_minus: 1.0,
            convention: PhaseConvention::Standard,
        }
    }

    /// Rest-frame geometry of the static model: no pump phase and
    /// backward cross terms weighted by `β₋`.
    pub fn static_model(lambda0: f64, gamma_1d: f64, beta_minus: f64) -> Self {
        FieldGeometry { cross_minus: beta_minus, ..Self::new(lambda0, f64::INFINITY, gamma_1d) }
    }

    pub fn with_convention(mut self, convention: PhaseConvention) -> Self {
        self.convention = convention;
        self
    }

    /// Intensities `(I₊, I₋)` in O(N) via `Σ_{j≠l} = |Σ_j|² − Σ_j |·|²`.
    pub fn intensities(&self, theta: &[f64], phi: &[f64], z: &[f64]) -> (f64, f64) {
        let (mut ap, mut am) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        let (mut self_sq, mut pop) = (0.0, 0.0);
        for ((&th, &ph), &zz) in theta.iter().zip(phi).zip(z) {
            let s = lowering_symbol(th, ph, self.convention);
            ap += C64::from_polar(1.0, self.q_plus * zz) * s;
            am += C64::from_polar(1.0, self.q_minus * zz) * s;
            self_sq += s.norm_sqr();
            pop += population_symbol(th);
        }
        let half = 0.5 * self.gamma_1d;
        (
            half * (self.cross_plus * (ap.norm_sqr() - self_sq) + pop),
            half * (self.cross_minus * (am.norm_sqr() - self_sq) + pop),
        )
    }

    /// Field symbols `e± = i√(Γ_1D/2) Σ_n e^{i q± z_n} s_n⁻`.
    pub fn field_symbols(&self, theta: &[f64], phi: &[f64], z: &[f64]) -> (C64, C64) {
        let amp = C64::new(0.0, (0.5 * self.gamma_1d).sqrt());
        let (mut ep, mut em) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        for ((&th, &ph), &zz) in theta.iter().zip(phi).zip(z) {
            let s = lowering_symbol(th, ph, self.convention);
            ep += C64::from_polar(1.0, self.q_plus * zz) * s;
            em += C64::from_polar(1.0, self.q_minus * zz) * s;
        }
        (amp * ep, amp * em)
    }
}

/// Field symbols `(e₊, e₋)` of one phase-space point.
pub fn field_symbols(theta: &[f64], phi: &[f64], z: &[f64], lambda0: f64, lambda_p: f64, gamma_1d: f64) -> (C64, C64) {
    FieldGeometry::new(lambda0, lambda_p, gamma_1d).field_symbols(theta, phi, z)
}

/// Intensity symbol from the explicit pairwise double sum, with the
/// reality check applied to the summed value.
pub fn intensity(
    theta: &[f64],
    phi: &[f64],
    z: &[f64],
    direction: Direction,
    lambda0: f64,
    lambda_p: f64,
    gamma_1d: f64,
) -> Result<f64> {
    let q = direction.wavevector(wavenumber(lambda0), wavenumber(lambda_p));
    let n = theta.len();
    let mut acc = C64::new(0.0, 0.0);
    let mut scale = 0.0;
    for j in 0..n {
        let sj = lowering_symbol(theta[j], phi[j], PhaseConvention::Standard);
        for l in 0..n {
            if j == l {
                let p = population_symbol(theta[j]);
                acc += p;
                scale += p.abs();
            } else {
                let sl = lowering_symbol(theta[l], phi[l], PhaseConvention::Standard);
                let term = C64::from_polar(1.0, q * (z[l] - z[j])) * sj.conj() * sl;
                acc += term;
                scale += term.norm();
            }
        }
    }
    let residual = acc.im.abs() / acc.re.abs().max(scale).max(f64::MIN_POSITIVE);
    if residual > REALITY_TOL {
        return Err(Error::Symbolization { residual });
    }
    Ok(0.5 * gamma_1d * acc.re)
}

/// `κ = (R₊ − R₋)/(R₊ + R₋)`.
pub fn directionality(r_plus: f64, r_minus: f64) -> Result<f64> {
    if !(r_plus >= 0.0 && r_minus >= 0.0) {
        return Err(Error::Domain(format!("peak rates must be non-negative, got ({r_plus}, {r_minus})")));
    }
    let sum = r_plus + r_minus;
    if sum == 0.0 {
        return Err(Error::UndefinedDirectionality);
    }
    Ok((r_plus - r_minus) / sum)
}

/// Standard error of `κ` by linear error propagation.
pub fn directionality_se(r_plus: f64, r_minus: f64, var_plus: f64, var_minus: f64, cov: f64) -> f64 {
    let s = r_plus + r_minus;
    if s <= 0.0 {
        return f64::NAN;
    }
    let dp = 2.0 * r_minus / (s * s);
    let dm = -2.0 * r_plus / (s * s);
    (dp * dp * var_plus + dm * dm * var_minus + 2.0 * dp * dm * cov).max(0.0).sqrt()
}

/// Sufficient statistics of an ensemble of recorded trajectories.
///
/// Merging is plain addition, so partial accumulators can be combined in any
/// grouping; combining them in a fixed order makes results bit-reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleAccumulator {
    pub time_grid: Vec<f64>,
    pub n_traj: usize,
    pub n_diverged: usize,
    pub sum_plus: Vec<f64>,
    pub sum_minus: Vec<f64>,
    pub sum_sz: Vec<f64>,
    pub sum_sz_sq: Vec<f64>,
    /// Row-major `T×T` sums of `I(t₁)I(t₂)`.
    pub sum_pp: Vec<f64>,
    pub sum_mm: Vec<f64>,
    pub sum_pm: Vec<f64>,
    /// Per-trajectory peak intensities, in trajectory order.
    pub peaks_plus: Vec<f64>,
    pub peaks_minus: Vec<f64>,
    /// Per-trajectory FWHM of `I₊ + I₋`, for trajectories where it is resolved.
    pub shot_widths: Vec<f64>,
}

impl EnsembleAccumulator {
    pub fn new(time_grid: Vec<f64>) -> Self {
        let t = time_grid.len();
        EnsembleAccumulator {
            n_traj: 0,
            n_diverged: 0,
            sum_plus: vec![0.0; t],
            sum_minus: vec![0.0; t],
            sum_sz: vec![0.0; t],
            sum_sz_sq: vec![0.0; t],
            sum_pp: vec![0.0; t * t],
            sum_mm: vec![0.0; t * t],
            sum_pm: vec![0.0; t * t],
            peaks_plus: Vec::new(),
            peaks_minus: Vec::new(),
            shot_widths: Vec::new(),
            time_grid,
        }
    }

    pub fn len(&self) -> usize {
        self.time_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_grid.is_empty()
    }

    pub fn push(&mut self, i_plus: &[f64], i_minus: &[f64], sz: &[f64]) {
        let t = self.len();
        assert!(i_plus.len() == t && i_minus.len() == t && sz.len() == t, "record length mismatch");
        for a in 0..t {
            self.sum_plus[a] += i_plus[a];
            self.sum_minus[a] += i_minus[a];
            self.sum_sz[a] += sz[a];
            self.sum_sz_sq[a] += sz[a] * sz[a];
            let (pa, ma) = (i_plus[a], i_minus[a]);
            let row = a * t;
            for b in 0..t {
                self.sum_pp[row + b] += pa * i_plus[b];
                self.sum_mm[row + b] += ma * i_minus[b];
                self.sum_pm[row + b] += pa * i_minus[b];
            }
        }
        self.peaks_plus.push(i_plus.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        self.peaks_minus.push(i_minus.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        let total: Vec<f64> = i_plus.iter().zip(i_minus).map(|(a, b)| a + b).collect();
        if let Ok(m) = burst_metrics(&total, &self.time_grid) {
            self.shot_widths.push(m.fwhm);
        }
        self.n_traj += 1;
    }

    pub fn merge(&mut self, other: &EnsembleAccumulator) {
        assert_eq!(self.time_grid, other.time_grid, "merging accumulators on different grids");
        let add = |a: &mut Vec<f64>, b: &Vec<f64>| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.sum_plus, &other.sum_plus);
        add(&mut self.sum_minus, &other.sum_minus);
        add(&mut self.sum_sz, &other.sum_sz);
        add(&mut self.sum_sz_sq, &other.sum_sz_sq);
        add(&mut self.sum_pp, &other.sum_pp);
        add(&mut self.sum_mm, &other.sum_mm);
        add(&mut self.sum_pm, &other.sum_pm);
        self.peaks_plus.extend_from_slice(&other.peaks_plus);
        self.peaks_minus.extend_from_slice(&other.peaks_minus);
        self.shot_widths.extend_from_slice(&other.shot_widths);
        self.n_traj += other.n_traj;
        self.n_diverged += other.n_diverged;
    }

    pub fn finish(&self) -> ObservableSeries {
        let n = self.n_traj.max(1) as f64;
        let scale = |v: &Vec<f64>| v.iter().map(|x| x / n).collect::<Vec<_>>();
        ObservableSeries {
            time_grid: self.time_grid.clone(),
            mean_i_plus: scale(&self.sum_plus),
            mean_i_minus: scale(&self.sum_minus),
            second_moment_grid_pp: scale(&self.sum_pp),
            second_moment_grid_mm: scale(&self.sum_mm),
            second_moment_grid_pm: scale(&self.sum_pm),
            n_traj: self.n_traj,
            n_diverged: self.n_diverged,
            sz_mean: scale(&self.sum_sz),
            sz_second_moment: scale(&self.sum_sz_sq),
            peaks_plus: self.peaks_plus.clone(),
            peaks_minus: self.peaks_minus.clone(),
            shot_widths: self.shot_widths.clone(),
        }
    }
}

/// Ensemble means and second moments of the directional intensities.
///
/// Grids are row-major `T×T` with entry `(a, b)` holding `⟨I(t_a)I(t_b)⟩`;
/// the `pm` grid pairs `I₊(t_a)` with `I₋(t_b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub time_grid: Vec<f64>,
    pub mean_i_plus: Vec<f64>,
    pub mean_i_minus: Vec<f64>,
    pub second_moment_grid_pp: Vec<f64>,
    pub second_moment_grid_mm: Vec<f64>,
    pub second_moment_grid_pm: Vec<f64>,
    pub n_traj: usize,
    pub n_diverged: usize,
    /// Mean of `Σ_n √3 cos θ_n`.
    pub sz_mean: Vec<f64>,
    pub sz_second_moment: Vec<f64>,
    pub peaks_plus: Vec<f64>,
    pub peaks_minus: Vec<f64>,
    pub shot_widths: Vec<f64>,
}

impl ObservableSeries {
    pub fn len(&self) -> usize {
        self.time_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time_grid.is_empty()
    }

    fn diag(grid: &[f64], t: usize, a: usize) -> f64 {
        grid[a * t + a]
    }

    /// Standard error of the mean intensity at each grid point.
    pub fn se(&self, direction: Direction) -> Vec<f64> {
        let t = self.len();
        let n = self.n_traj as f64;
        let (mean, grid) = match direction {
            Direction::Plus => (&self.mean_i_plus, &self.second_moment_grid_pp),
            Direction::Minus => (&self.mean_i_minus, &self.second_moment_grid_mm),
        };
        (0..t)
            .map(|a| ((Self::diag(grid, t, a) - mean[a] * mean[a]).max(0.0) / (n - 1.0).max(1.0)).sqrt())
            .collect()
    }

    pub fn sz_se(&self) -> Vec<f64> {
        let n = self.n_traj as f64;
        self.sz_mean
            .iter()
            .zip(&self.sz_second_moment)
            .map(|(m, s)| ((s - m * m).max(0.0) / (n - 1.0).max(1.0)).sqrt())
            .collect()
    }

    /// Mean population symbol `⟨Σ_n (1 + √3 cos θ_n)/2⟩` for `n_spins` emitters.
    pub fn excitation(&self, n_spins: usize) -> Vec<f64> {
        self.sz_mean.iter().map(|s| 0.5 * (n_spins as f64 + s)).collect()
    }

    pub fn mean(&self, direction: Direction) -> &[f64] {
        match direction {
            Direction::Plus => &self.mean_i_plus,
            Direction::Minus => &self.mean_i_minus,
        }
    }
}

/// Peak rates used for `κ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KappaSource {
    /// Maxima of the ensemble-mean intensity curves.
    #[default]
    Mean,
    /// Medians of the per-trajectory maxima.
    PerShotMedian,
}

impl std::str::FromStr for KappaSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(KappaSource::Mean),
            "per-shot-median" => Ok(KappaSource::PerShotMedian),
            other => Err(Error::validation(format!("unknown kappa source `{other}`"))),
        }
    }
}

/// Peak, delay and width of an intensity curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstMetrics {
    pub peak: f64,
    pub delay: f64,
    pub fwhm: f64,
}

/// Peak, earliest time of the peak, and full width at half maximum from
/// linearly interpolated crossings on either side of the peak.
pub fn burst_metrics(intensity: &[f64], time_grid: &[f64]) -> Result<BurstMetrics> {
    if intensity.is_empty() || intensity.len() != time_grid.len() {
        return Err(Error::Domain("intensity and time grid must be non-empty and of equal length".into()));
    }
    let (mut k, mut peak) = (0, intensity[0]);
    for (i, &x) in intensity.iter().enumerate() {
        if x > peak {
            peak = x;
            k = i;
        }
    }
    let half = 0.5 * peak;
    let crossing = |i: usize, j: usize| {
        let (a, b) = (intensity[i], intensity[j]);
        time_grid[i] + (half - a) / (b - a) * (time_grid[j] - time_grid[i])
    };
    if !(peak > 0.0) {
        return Err(Error::FwhmUndefined { side: "leading" });
    }
    let left = (0..k).rev().find(|&i| intensity[i] <= half).map(|i| crossing(i, i + 1));
    let right = (k + 1..intensity.len()).find(|&i| intensity[i] <= half).map(|i| crossing(i - 1, i));
    match (left, right) {
        (None, _) => Err(Error::FwhmUndefined { side: "leading" }),
        (_, None) => Err(Error::FwhmUndefined { side: "trailing" }),
        (Some(l), Some(r)) => Ok(BurstMetrics { peak, delay: time_grid[k], fwhm: r - l }),
    }
}

/// Burst statistics of both directions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurstStatistics {
    pub r_plus: f64,
    pub r_minus: f64,
    pub kappa: f64,
    pub kappa_se: f64,
    pub delay: f64,
    pub fwhm: Option<f64>,
    /// Median of the per-trajectory widths, ignoring unresolved ones.
    pub fwhm_per_shot: Option<f64>,
    pub g2_equal_time_min: Option<f64>,
}

fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().cloned().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Burst statistics of an ensemble. Delay and width refer to the total
/// emission `I₊ + I₋`; the width is `None` if the burst is not resolved.
pub fn burst_statistics(series: &ObservableSeries, source: KappaSource, g2_floor: f64) -> Result<BurstStatistics> {
    let t = series.len();
    if t == 0 || series.n_traj == 0 {
        return Err(Error::EmptyResult);
    }
    let n = series.n_traj as f64;
    let argmax = |v: &[f64]| (0..v.len()).fold(0, |k, i| if v[i] > v[k] { i } else { k });
    let (r_plus, r_minus, kappa_se) = match source {
        KappaSource::Mean => {
            let (a, b) = (argmax(&series.mean_i_plus), argmax(&series.mean_i_minus));
            let (rp, rm) = (series.mean_i_plus[a], series.mean_i_minus[b]);
            let vp = (series.second_moment_grid_pp[a * t + a] - rp * rp) / n;
            let vm = (series.second_moment_grid_mm[b * t + b] - rm * rm) / n;
            let cov = (series.second_moment_grid_pm[a * t + b] - rp * rm) / n;
            (rp, rm, directionality_se(rp, rm, vp, vm, cov))
        }
        KappaSource::PerShotMedian => {
            let (rp, rm) = (median(&series.peaks_plus), median(&series.peaks_minus));
            // Spread of the per-shot κ values as the uncertainty proxy.
            let ks: Vec<f64> = series
                .peaks_plus
                .iter()
                .zip(&series.peaks_minus)
                .filter_map(|(p, m)| directionality(p.max(0.0), m.max(0.0)).ok())
                .collect();
            let mean = ks.iter().sum::<f64>() / ks.len().max(1) as f64;
            let var = ks.iter().map(|k| (k - mean).powi(2)).sum::<f64>() / (ks.len().max(2) - 1) as f64;
            (rp, rm, (var / ks.len().max(1) as f64).sqrt())
        }
    };
    let kappa = directionality(r_plus.max(0.0), r_minus.max(0.0))?;
    let total: Vec<f64> = series.mean_i_plus.iter().zip(&series.mean_i_minus).map(|(a, b)| a + b).collect();
    let (delay, fwhm) = match burst_metrics(&total, &series.time_grid) {
        Ok(m) => (m.delay, Some(m.fwhm)),
        Err(_) => (series.time_grid[argmax(&total)], None),
    };
    let g2_equal_time_min = accumulate_g2(series, Direction::Plus, g2_floor)
        .ok()
        .and_then(|g| g.diagonal().into_iter().flatten().reduce(f64::min));
    let fwhm_per_shot = Some(median(&series.shot_widths)).filter(|w| w.is_finite());
    Ok(BurstStatistics { r_plus, r_minus, kappa, kappa_se, delay, fwhm, fwhm_per_shot, g2_equal_time_min })
}

/// Normalized correlation grid; `None` marks points below the intensity floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct G2Grid {
    pub time_grid: Vec<f64>,
    pub values: Vec<Option<f64>>,
}

impl G2Grid {
    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        self.values[a * self.time_grid.len() + b]
    }

    pub fn diagonal(&self) -> Vec<Option<f64>> {
        (0..self.time_grid.len()).map(|a| self.get(a, a)).collect()
    }
}

fn normalize_grid(time_grid: &[f64], m: &[f64], i1: &[f64], i2: &[f64], floor: f64) -> Result<G2Grid> {
    let t = time_grid.len();
    let mut values = Vec::with_capacity(t * t);
    let mut any = false;
    for a in 0..t {
        for b in 0..t {
            let v = if i1[a] >= floor && i2[b] >= floor && i1[a] > 0.0 && i2[b] > 0.0 {
                any = true;
                Some(m[a * t + b] / (i1[a] * i2[b]))
            } else {
                None
            };
            values.push(v);
        }
    }
    if !any {
        return Err(Error::EmptyResult);
    }
    Ok(G2Grid { time_grid: time_grid.to_vec(), values })
}

/// Classical-moment estimator `⟨I(t₁)I(t₂)⟩/(⟨I(t₁)⟩⟨I(t₂)⟩)` of one direction.
pub fn accumulate_g2(series: &ObservableSeries, direction: Direction, floor: f64) -> Result<G2Grid> {
    if series.n_traj < 2 {
        return Err(Error::InsufficientData("correlations need at least two trajectories".into()));
    }
    let (mean, grid) = match direction {
        Direction::Plus => (&series.mean_i_plus, &series.second_moment_grid_pp),
        Direction::Minus => (&series.mean_i_minus, &series.second_moment_grid_mm),
    };
    normalize_grid(&series.time_grid, grid, mean, mean, floor)
}

/// `⟨I₊(t₁)I₋(t₂)⟩/(⟨I₊(t₁)⟩⟨I₋(t₂)⟩)`.
pub fn cross_correlation(series: &ObservableSeries, floor: f64) -> Result<G2Grid> {
    if series.n_traj < 2 {
        return Err(Error::InsufficientData("correlations need at least two trajectories".into()));
    }
    normalize_grid(&series.time_grid, &series.second_moment_grid_pm, &series.mean_i_plus, &series.mean_i_minus, floor)
}

/// Wraps an angle into `[0, 2π)`.
#[inline]
pub fn wrap_angle(phi: f64) -> f64 {
    let w = phi.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}
