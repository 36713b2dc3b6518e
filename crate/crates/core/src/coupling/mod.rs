//! Collective exchange and decay couplings of emitters in a 1D waveguide.
//!
//! Index convention: entry `(l, m)` of every matrix multiplies `σ_l⁺σ_m⁻`.
//! The effective Hamiltonian is `H = Σ J_lm σ_l⁺σ_m⁻`, the dissipator
//! `Σ Γ_lm (σ_m⁻ ρ σ_l⁺ − ½{σ_l⁺σ_m⁻, ρ})`, and the kernel `g = J − iΓ/2`.
//! With this convention the two jump operators of the dissipator are exactly
//! the fields emitted into the `(+)` and `(−)` directions.

mod kernel;

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::{Error, Result, C64};

pub use kernel::WaveguideKernel;

pub type CMatrix = DMatrix<C64>;

/// Default relative tolerance below which negative eigenvalues of `Γ` are
/// clipped to zero.
pub const DEFAULT_CLIP_TOL: f64 = 1e-10;

/// Something the SDE integrator can contract spin amplitudes with.
///
/// `apply` evaluates `out_l = Σ_m g_lm v_m`; the noise factor `G`
/// (`G G† = Γ`) may be rectangular with `noise_rank` columns.
pub trait CollectiveCoupling {
    fn len(&self) -> usize;
    fn apply(&self, v: &[C64], out: &mut [C64]);
    fn noise_rank(&self) -> usize;
    /// Row `l` of the noise factor, written into `out[..noise_rank]`.
    fn noise_row(&self, l: usize, out: &mut [C64]);
    fn gamma_diag(&self, l: usize) -> f64;

    /// `out_l = Σ_r G_lr ξ_r`.
    fn noise_mix(&self, xi: &[C64], out: &mut [C64]) {
        let mut row = vec![C64::new(0.0, 0.0); self.noise_rank()];
        for (l, o) in out.iter_mut().enumerate().take(self.len()) {
            self.noise_row(l, &mut row);
            *o = row.iter().zip(xi).map(|(g, x)| g * x).sum();
        }
    }
}

/// Dense coupling matrices together with the noise factor.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingSet {
    /// `g = J − iΓ/2`.
    pub g: CMatrix,
    pub j_matrix: CMatrix,
    pub gamma_matrix: CMatrix,
    /// `G` with `G G† = Γ` (after eigenvalue clipping).
    pub noise_factor: CMatrix,
    pub beta_plus: f64,
    pub beta_minus: f64,
}

impl CouplingSet {
    /// Splits a kernel into its Hermitian parts and factorizes the decay matrix.
    pub fn from_kernel(g: CMatrix, beta_plus: f64, beta_minus: f64) -> Result<Self> {
        let g_adj = g.adjoint();
        let j_matrix = (&g + &g_adj).scale(0.5);
        let gamma_matrix = (&g - &g_adj) * C64::i();
        let noise_factor = noise_factorization(&gamma_matrix, DEFAULT_CLIP_TOL)?;
        Ok(CouplingSet { g, j_matrix, gamma_matrix, noise_factor, beta_plus, beta_minus })
    }

    pub fn n(&self) -> usize {
        self.g.nrows()
    }
}

impl CollectiveCoupling for CouplingSet {
    fn len(&self) -> usize {
        self.n()
    }

    fn apply(&self, v: &[C64], out: &mut [C64]) {
        let n = self.n();
        for l in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for m in 0..n {
                acc += self.g[(l, m)] * v[m];
            }
            out[l] = acc;
        }
    }

    fn noise_rank(&self) -> usize {
        self.noise_factor.ncols()
    }

    fn noise_row(&self, l: usize, out: &mut [C64]) {
        for (r, o) in out.iter_mut().take(self.noise_factor.ncols()).enumerate() {
            *o = self.noise_factor[(l, r)];
        }
    }

    fn gamma_diag(&self, l: usize) -> f64 {
        self.gamma_matrix[(l, l)].re
    }
}

pub fn wavenumber(lambda: f64) -> f64 {
    if lambda.is_infinite() {
        0.0
    } else {
        2.0 * PI / lambda
    }
}

/// Couplings of emitters at `positions` including the pump phase:
/// `g_lm = −i(Γ_1D/2) exp(i k₀|z_l − z_m|) exp(−i k_p (z_l − z_m))`.
pub fn build_dynamic_couplings(positions: &[f64], lambda0: f64, lambda_p: f64, gamma_1d: f64) -> Result<CouplingSet> {
    let k0 = wavenumber(lambda0);
    let kp = wavenumber(lambda_p);
    let n = positions.len();
    let g = CMatrix::from_fn(n, n, |l, m| {
        let dz = positions[l] - positions[m];
        let phase = k0 * dz.abs() - kp * dz;
        C64::new(0.0, -0.5 * gamma_1d) * C64::from_polar(1.0, phase)
    });
    CouplingSet::from_kernel(g, 0.5, 0.5)
}

/// Motion-averaged suppression `exp{−(4π v̄ τ/λ₀)²}` of the backward mode.
pub fn suppression_factor(v_bar: f64, tau: f64, lambda0: f64) -> f64 {
    let x = 4.0 * PI * v_bar * tau / lambda0;
    (-x * x).exp()
}

/// Static-model couplings at rest positions (pump phase gauged away):
/// `Γ̄_lm = (Γ_1D/2)(e^{ik₀z_lm} + β₋e^{−ik₀z_lm})` and
/// `J̄_lm = sgn(z_lm)(Γ_1D/4i)(e^{ik₀z_lm} − β₋e^{−ik₀z_lm})` with `sgn(0) = 0`.
pub fn build_static_couplings(positions: &[f64], beta_minus: f64, gamma_1d: f64, lambda0: f64) -> Result<CouplingSet> {
    if !(0.0..=1.0).contains(&beta_minus) {
        return Err(Error::Domain(format!("β₋ = {beta_minus} outside [0, 1]")));
    }
    let k0 = wavenumber(lambda0);
    let n = positions.len();
    let mut gamma = CMatrix::zeros(n, n);
    let mut j = CMatrix::zeros(n, n);
    for l in 0..n {
        for m in 0..n {
            let z = positions[l] - positions[m];
            let fwd = C64::from_polar(1.0, k0 * z);
            let bwd = C64::from_polar(beta_minus, -k0 * z);
            gamma[(l, m)] = (fwd + bwd) * (0.5 * gamma_1d);
            let sgn = if z > 0.0 {
                1.0
            } else if z < 0.0 {
                -1.0
            } else {
                0.0
            };
            j[(l, m)] = (fwd - bwd) * C64::new(0.0, -0.25 * gamma_1d * sgn);
        }
    }
    let g = &j - &gamma * C64::new(0.0, 0.5);
    let noise_factor = noise_factorization(&gamma, DEFAULT_CLIP_TOL)?;
    Ok(CouplingSet { g, j_matrix: j, gamma_matrix: gamma, noise_factor, beta_plus: 0.5, beta_minus: 0.5 * beta_minus })
}

/// Hermitian square root `G = U √Λ U†` of a positive semidefinite `Γ`.
///
/// Eigenvalues in `[−clip_tol·λ_max, 0)` are clipped to zero; anything more
/// negative is rejected.
pub fn noise_factorization(gamma_matrix: &CMatrix, clip_tol: f64) -> Result<CMatrix> {
    let n = gamma_matrix.nrows();
    if n == 0 {
        return Ok(CMatrix::zeros(0, 0));
    }
    let herm = (gamma_matrix + gamma_matrix.adjoint()).scale(0.5);
    let eig = herm.symmetric_eigen();
    let max_ev = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let floor = -clip_tol * max_ev.max(f64::MIN_POSITIVE);
    if let Some(&bad) = eig.eigenvalues.iter().find(|&&e| e < floor) {
        return Err(Error::NotPsd { eigenvalue: bad, max_eigenvalue: max_ev, tolerance: clip_tol * max_ev });
    }
    let u = &eig.eigenvectors;
    let mut scaled = u.clone();
    for (c, &e) in eig.eigenvalues.iter().enumerate() {
        let s = e.max(0.0).sqrt();
        scaled.column_mut(c).scale_mut(s);
    }
    Ok(scaled * u.adjoint())
}

/// Relative Frobenius residual `‖G G† − Γ‖ / ‖Γ‖`.
pub fn reconstruction_residual(noise_factor: &CMatrix, gamma_matrix: &CMatrix) -> f64 {
    let rec = noise_factor * noise_factor.adjoint();
    let norm = gamma_matrix.norm();
    if norm == 0.0 {
        rec.norm()
    } else {
        (rec - gamma_matrix).norm() / norm
    }
}
