//! Physical parameters, unit conventions and scalar parameter formulas.
//!
//! Internally the single-atom decay rate `Γ` sets the unit of time and the
//! transition wavelength `λ₀` the unit of length, so the default step
//! `dt = 1e-3` means `10⁻³ Γ⁻¹`. [`PhysicalUnits`] converts SI inputs at the
//! boundary.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How emitter motion enters a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelMode {
    /// Ballistic motion, couplings rebuilt every step.
    DynamicMotion,
    /// Emitters at rest with motion-averaged couplings (suppressed backward mode).
    StaticBlur,
    /// Emitters at rest, bare couplings.
    Frozen,
}

impl std::str::FromStr for ModelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dynamic" | "dynamic_motion" => Ok(ModelMode::DynamicMotion),
            "static" | "static_blur" => Ok(ModelMode::StaticBlur),
            "frozen" => Ok(ModelMode::Frozen),
            other => Err(Error::validation(format!("unknown model mode `{other}`"))),
        }
    }
}

/// All physical and numerical parameters of one ensemble run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_spins: usize,
    /// Per-emitter coupling rate into the waveguide, `Γ_1D`.
    pub gamma_1d: f64,
    /// Single-emitter decay into non-guided modes, `Γ`.
    pub gamma_single: f64,
    pub lambda0: f64,
    pub lambda_p: f64,
    /// Standard deviation of the (Gaussian) emitter velocities.
    pub v_bar: f64,
    /// Emitters are placed uniformly on `[0, sample_length)`.
    pub sample_length: f64,
    pub dt: f64,
    pub t_max: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub model_mode: ModelMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_minus_override: Option<f64>,
    /// Blur time `τ` of the static model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_blur: Option<f64>,
}

/// Γ used to express the 2.5 µs measurement window in natural units.
pub const REFERENCE_GAMMA_RAD_PER_S: f64 = 2.0 * PI * 33.0e3;
pub const MEASUREMENT_WINDOW_S: f64 = 2.5e-6;

impl Default for SimulationConfig {
    fn default() -> Self {
        let units = PhysicalUnits { gamma_rad_per_s: REFERENCE_GAMMA_RAD_PER_S, lambda0_m: 795.0e-9 };
        SimulationConfig {
            n_spins: 100,
            gamma_1d: 1.0,
            gamma_single: 1.0,
            lambda0: 1.0,
            lambda_p: 1.0,
            v_bar: 0.0,
            sample_length: 100.0,
            dt: 1e-3,
            t_max: units.time(MEASUREMENT_WINDOW_S),
            n_traj: 1000,
            seed: 1,
            model_mode: ModelMode::Frozen,
            beta_minus_override: None,
            tau_blur: None,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, key: &str, msg: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::validation(format!("`{key}` {msg}")))
            }
        }
        check(self.n_spins >= 1, "n_spins", "must be at least 1")?;
        check(self.n_traj >= 1, "n_traj", "must be at least 1")?;
        check(self.dt > 0.0 && self.dt.is_finite(), "dt", "must be positive")?;
        check(self.t_max >= self.dt && self.t_max.is_finite(), "t_max", "must be at least dt")?;
        check(self.gamma_1d >= 0.0 && self.gamma_1d.is_finite(), "gamma_1d", "must be non-negative")?;
        check(self.gamma_single >= 0.0 && self.gamma_single.is_finite(), "gamma_single", "must be non-negative")?;
        check(self.lambda0 > 0.0 && self.lambda0.is_finite(), "lambda0", "must be positive")?;
        check(self.lambda_p > 0.0, "lambda_p", "must be positive")?;
        check(self.v_bar >= 0.0 && self.v_bar.is_finite(), "v_bar", "must be non-negative")?;
        check(self.sample_length >= 0.0 && self.sample_length.is_finite(), "sample_length", "must be non-negative")?;
        if let Some(b) = self.beta_minus_override {
            check((0.0..=1.0).contains(&b), "beta_minus_override", "must lie in [0, 1]")?;
        }
        if let Some(tau) = self.tau_blur {
            check(tau >= 0.0 && tau.is_finite(), "tau_blur", "must be non-negative")?;
        }
        if self.model_mode == ModelMode::StaticBlur {
            check(
                self.tau_blur.is_some() || self.beta_minus_override.is_some(),
                "model_mode",
                "static_blur requires `tau_blur` or `beta_minus_override`",
            )?;
        }
        Ok(())
    }

    /// Parses and validates a JSON configuration. Errors carry the line of
    /// the offending key where it can be located.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: SimulationConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
            message: e.to_string(),
            line: e.line(),
            column: e.column(),
        })?;
        config.validate().map_err(|e| match e {
            Error::Validation { message, .. } => {
                let line = message
                    .split('`')
                    .nth(1)
                    .and_then(|key| locate_key(text, key));
                Error::Validation { message, line }
            }
            other => other,
        })?;
        Ok(config)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Backward-mode suppression used by the static model.
    pub fn static_beta_minus(&self) -> f64 {
        match (self.beta_minus_override, self.tau_blur) {
            (Some(b), _) => b,
            (None, Some(tau)) => crate::coupling::suppression_factor(self.v_bar, tau, self.lambda0),
            (None, None) => 1.0,
        }
    }

    /// Effective cooperation number `N·Γ_1D/Γ` of the reduced model.
    pub fn cooperation(&self) -> f64 {
        if self.gamma_single > 0.0 {
            self.n_spins as f64 * self.gamma_1d / self.gamma_single
        } else {
            self.n_spins as f64
        }
    }

    /// Number of integrator steps covering `[0, t_max]`.
    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    pub fn scales(&self) -> Result<PhysicalScales> {
        PhysicalScales::new(self.v_bar, self.lambda0, self.gamma_single, self.cooperation())
    }
}

/// Returns the 1-based line number of the first occurrence of `"key"`.
fn locate_key(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

/// Reduced-model helper: the waveguide coupling that keeps `N·Γ_1D` equal to
/// `N_mc·Γ` when only `n_spins` emitters are simulated.
pub fn reduced_gamma_1d(n_mc: f64, n_spins: usize, gamma: f64) -> f64 {
    n_mc * gamma / n_spins as f64
}

/// Conversion between SI quantities and natural units (`Γ = 1`, `λ₀ = 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalUnits {
    pub gamma_rad_per_s: f64,
    pub lambda0_m: f64,
}

impl PhysicalUnits {
    pub fn time(&self, seconds: f64) -> f64 {
        seconds * self.gamma_rad_per_s
    }

    pub fn rate(&self, rad_per_s: f64) -> f64 {
        rad_per_s / self.gamma_rad_per_s
    }

    pub fn length(&self, meters: f64) -> f64 {
        meters / self.lambda0_m
    }

    pub fn speed(&self, m_per_s: f64) -> f64 {
        m_per_s / (self.lambda0_m * self.gamma_rad_per_s)
    }
}

/// Dimensionless scales that organize the directionality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalScales {
    pub sigma_v: f64,
    pub r_tau: f64,
    /// Thermal dephasing time `λ₀/v̄` (infinite at rest).
    pub tau_th: f64,
    /// Collective time `2/(N_mc Γ)`.
    pub tau_col: f64,
}

impl PhysicalScales {
    pub fn new(v_bar: f64, lambda0: f64, gamma: f64, n_mc: f64) -> Result<Self> {
        let sigma_v = velocity_spread(v_bar, lambda0, gamma)?;
        Ok(PhysicalScales {
            sigma_v,
            r_tau: timescale_ratio(sigma_v, n_mc)?,
            tau_th: if v_bar > 0.0 { lambda0 / v_bar } else { f64::INFINITY },
            tau_col: superradiant_time(n_mc, gamma)?,
        })
    }
}

/// Spontaneous Raman scattering rate `½Γ′Ω_p²/(Δ_p² + 2S)` of the dressed
/// two-level system.
pub fn raman_rate(gamma_prime: f64, omega_p: f64, delta_p: f64, stark_shift: f64) -> Result<f64> {
    let denom = delta_p * delta_p + 2.0 * stark_shift;
    if !(denom > 0.0) {
        return Err(Error::Domain(format!("Raman denominator Δ_p² + 2S = {denom} is not positive")));
    }
    Ok(0.5 * gamma_prime * omega_p * omega_p / denom)
}

/// Relative velocity spread `σ_v = v̄/(λ₀Γ)`.
pub fn velocity_spread(v_bar: f64, lambda0: f64, gamma: f64) -> Result<f64> {
    if !(lambda0 > 0.0) || !(gamma > 0.0) {
        return Err(Error::Domain(format!("velocity spread needs λ₀ > 0 and Γ > 0 (got {lambda0}, {gamma})")));
    }
    Ok(v_bar / (lambda0 * gamma))
}

/// Maximum cooperation number per direction and in total.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cooperation {
    pub per_direction: f64,
    pub total: f64,
}

/// `N_mc^(±) = η_s η_inh μ N` with `μ = NA²/4`, and `N_mc = 2 N_mc^(±)`.
pub fn cooperation_number(n_atoms: f64, eta_s: f64, eta_inh: f64, numerical_aperture: f64) -> Result<Cooperation> {
    if n_atoms < 0.0 || numerical_aperture < 0.0 || !(0.0..=1.0).contains(&eta_s) || !(0.0..=1.0).contains(&eta_inh) {
        return Err(Error::Domain("cooperation number needs non-negative inputs and η factors in [0, 1]".into()));
    }
    let per_direction = eta_s * eta_inh * solid_angle_fraction(numerical_aperture) * n_atoms;
    Ok(Cooperation { per_direction, total: 2.0 * per_direction })
}

/// Fraction `μ = NA²/4` of spontaneous emission guided into one direction.
pub fn solid_angle_fraction(numerical_aperture: f64) -> f64 {
    numerical_aperture * numerical_aperture / 4.0
}

/// Characteristic superradiant time `τ(N_mc) = (N_mc Γ/2)⁻¹`.
pub fn superradiant_time(n_mc: f64, gamma: f64) -> Result<f64> {
    if !(n_mc > 0.0) || !(gamma > 0.0) {
        return Err(Error::Domain(format!("superradiant time needs N_mc > 0 and Γ > 0 (got {n_mc}, {gamma})")));
    }
    Ok(2.0 / (n_mc * gamma))
}

/// Ratio `R_τ = 2σ_v/N_mc` of the collective time to the motional dephasing time.
pub fn timescale_ratio(sigma_v: f64, n_mc: f64) -> Result<f64> {
    if !(n_mc > 0.0) {
        return Err(Error::Domain(format!("timescale ratio needs N_mc > 0 (got {n_mc})")));
    }
    Ok(2.0 * sigma_v / n_mc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn raman_rate_examples() {
        assert_relative_eq!(raman_rate(6.0, 2.0, 2.0, 0.0).unwrap(), 3.0);
        assert_eq!(raman_rate(6.0, 0.0, 3.0, 0.0).unwrap(), 0.0);
        assert!(matches!(raman_rate(1.0, 1.0, 0.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(raman_rate(1.0, 1.0, 1.0, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn raman_rate_with_stark_shift_saturates() {
        // With S = c·Ω_p² the rate is bounded by Γ′/(4c) and approaches it.
        let gp = 1.0;
        let c = 4.0;
        let delta = 26.4;
        let mut last = 0.0;
        for k in 0..200 {
            let omega = 0.5 * 1.1f64.powi(k);
            let r = raman_rate(gp, omega, delta, c * omega * omega).unwrap();
            assert!(r <= gp / 16.0 + 1e-15);
            assert!(r >= last);
            last = r;
        }
        assert_relative_eq!(last, gp / 16.0, max_relative = 1e-6);
    }

    #[test]
    fn raman_rate_monotonicity() {
        let r = |om: f64, d: f64| raman_rate(1.0, om, d, 0.3).unwrap();
        assert!(r(2.0, 5.0) > r(1.0, 5.0));
        assert!(r(2.0, 5.0) > r(2.0, 6.0));
        assert_relative_eq!(r(2.0, -5.0), r(2.0, 5.0));
    }

    #[test]
    fn velocity_spread_examples() {
        assert_eq!(velocity_spread(0.0, 1.0, 1.0).unwrap(), 0.0);
        assert!(velocity_spread(1.0, 0.0, 1.0).is_err());
        assert!(velocity_spread(1.0, 1.0, 0.0).is_err());
        assert_relative_eq!(
            velocity_spread(2.0, 1.5, 3.0).unwrap() / velocity_spread(2.0, 1.5, 7.0).unwrap(),
            7.0 / 3.0,
            max_relative = 1e-14
        );
    }

    #[test]
    fn velocity_spread_at_experimental_pump_powers() {
        // v̄ fixed by σ_v = 5.0 at Γ_R = 2π·20 kHz; the other two pump powers
        // must land on 3.0(1) and 1.50(2).
        let lambda0 = 795.0e-9;
        let gamma = |khz: f64| 2.0 * PI * khz * 1e3;
        let v_bar = 5.0 * lambda0 * gamma(20.0);
        let s = |khz| velocity_spread(v_bar, lambda0, gamma(khz)).unwrap();
        assert!((s(20.0) - 5.0).abs() <= 0.2);
        assert!((s(33.0) - 3.0).abs() <= 0.1);
        assert!((s(67.0) - 1.50).abs() <= 0.02);
    }

    #[test]
    fn cooperation_examples() {
        assert_relative_eq!(solid_angle_fraction(0.092), 0.002116, max_relative = 1e-12);
        let c = cooperation_number(100.0, 1.0, 1.0, 2.0).unwrap();
        assert_relative_eq!(c.per_direction, 100.0);
        assert_relative_eq!(c.total, 200.0);
        // 2·10⁵ atoms in a NA 0.092 fiber with inhomogeneity factors of
        // order 0.6 each stay below 150 collective emitters per direction.
        let exp = cooperation_number(2.0e5, 0.59, 0.59, 0.092).unwrap();
        assert!(exp.per_direction <= 150.0, "{}", exp.per_direction);
        assert!(cooperation_number(1.0, 1.5, 1.0, 0.1).is_err());
    }

    #[test]
    fn superradiant_time_examples() {
        assert_eq!(superradiant_time(2.0, 1.0).unwrap(), 1.0);
        assert_relative_eq!(superradiant_time(50.0, 1.0).unwrap(), 2.0 * superradiant_time(100.0, 1.0).unwrap());
        assert!(superradiant_time(0.0, 1.0).is_err());
        assert!(superradiant_time(3.0, 0.0).is_err());
    }

    #[test]
    fn timescale_ratio_examples() {
        assert_eq!(timescale_ratio(0.0, 10.0).unwrap(), 0.0);
        assert_relative_eq!(timescale_ratio(3.0, 6.0).unwrap(), 1.0);
        let s = PhysicalScales::new(0.37, 1.3, 2.1, 40.0).unwrap();
        // R_τ compares the collective time with the thermal dephasing time.
        assert_relative_eq!(s.r_tau, s.tau_col / s.tau_th, max_relative = 1e-14);
    }

    #[test]
    fn scales_invariant_under_time_rescaling() {
        // t → a·t, rates → rates/a, speeds → speeds/a.
        let a = 10.0;
        let (v, l, g, n) = (0.8, 1.0, 1.7, 30.0);
        let s1 = PhysicalScales::new(v, l, g, n).unwrap();
        let s2 = PhysicalScales::new(v / a, l, g / a, n).unwrap();
        assert_relative_eq!(s1.sigma_v, s2.sigma_v, max_relative = 1e-14);
        assert_relative_eq!(s1.r_tau, s2.r_tau, max_relative = 1e-14);
        assert_relative_eq!(s1.tau_col * a, s2.tau_col, max_relative = 1e-14);
        let r1 = raman_rate(3.0, 2.0, 5.0, 0.5).unwrap();
        let r2 = raman_rate(3.0 / a, 2.0 / a, 5.0 / a, 0.5 / (a * a)).unwrap();
        assert_relative_eq!(r1 / a, r2, max_relative = 1e-14);
    }

    #[test]
    fn default_window_in_natural_units() {
        let c = SimulationConfig::default();
        assert_relative_eq!(c.t_max, 2.5e-6 * 2.0 * PI * 33.0e3, max_relative = 1e-12);
        c.validate().unwrap();
    }

    #[test]
    fn json_round_trip_and_validation() {
        let c = SimulationConfig::default();
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(SimulationConfig::from_json_str(&text).unwrap(), c);

        let bad = text.replace("\"dt\": 0.001", "\"dt\": -1.0");
        match SimulationConfig::from_json_str(&bad) {
            Err(Error::Validation { line: Some(line), .. }) => {
                assert!(bad.lines().nth(line - 1).unwrap().contains("\"dt\""));
            }
            other => panic!("unexpected {other:?}"),
        }

        let unknown = text.replacen('{', "{\n  \"n_atoms\": 3,", 1);
        assert!(matches!(SimulationConfig::from_json_str(&unknown), Err(Error::Parse { line: 2, .. })));

        let static_without_tau = text.replace("\"frozen\"", "\"static_blur\"");
        assert!(matches!(
            SimulationConfig::from_json_str(&static_without_tau),
            Err(Error::Validation { .. })
        ));
    }
}
