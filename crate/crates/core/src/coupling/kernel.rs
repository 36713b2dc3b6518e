use super::{wavenumber, CollectiveCoupling, CMatrix};
use crate::C64;

/// Matrix-free form of the waveguide kernel.
///
/// Every coupling used by the simulator has the structure
///
/// ```text
/// g_lm = −i(Γ_1D/2)·w_f·f_l·conj(f_m)   if z_m < z_l
///        −i(Γ_1D/2)·w_b·b_l·conj(b_m)   if z_m > z_l
/// ```
///
/// with `f = exp(i(k₀−k_p)z)`, `b = exp(−i(k₀+k_p)z)`, and the average of both
/// branches at coincident positions. Ordering the emitters along the guide
/// turns `g·v` into prefix/suffix sums, so products and noise factors cost
/// O(N) instead of O(N²). The decay part is exactly rank two:
/// `Γ = (Γ_1D/2)(w_f f f† + w_b b b†)`.
#[derive(Debug, Clone)]
pub struct WaveguideKernel {
    gamma_1d: f64,
    k0: f64,
    kp: f64,
    w_fwd: f64,
    w_bwd: f64,
    z: Vec<f64>,
    e_fwd: Vec<C64>,
    e_bwd: Vec<C64>,
    order: Vec<usize>,
}

impl WaveguideKernel {
    /// Kernel of [`super::build_dynamic_couplings`].
    pub fn dynamic(positions: &[f64], lambda0: f64, lambda_p: f64, gamma_1d: f64) -> Self {
        Self::new(positions, wavenumber(lambda0), wavenumber(lambda_p), gamma_1d, 1.0, 1.0)
    }

    /// Kernel of [`super::build_static_couplings`].
    pub fn static_model(positions: &[f64], beta_minus: f64, gamma_1d: f64, lambda0: f64) -> Self {
        Self::new(positions, wavenumber(lambda0), 0.0, gamma_1d, 1.0, beta_minus)
    }

    pub fn new(positions: &[f64], k0: f64, kp: f64, gamma_1d: f64, w_fwd: f64, w_bwd: f64) -> Self {
        let n = positions.len();
        let mut kernel = WaveguideKernel {
            gamma_1d,
            k0,
            kp,
            w_fwd,
            w_bwd,
            z: Vec::with_capacity(n),
            e_fwd: vec![C64::new(0.0, 0.0); n],
            e_bwd: vec![C64::new(0.0, 0.0); n],
            order: (0..n).collect(),
        };
        kernel.set_positions(positions);
        kernel
    }

    /// Moves the emitters. The cached ordering is repaired by insertion sort,
    /// which is linear for the small displacements of one time step.
    pub fn set_positions(&mut self, positions: &[f64]) {
        assert_eq!(positions.len(), self.order.len(), "position count changed");
        self.z.clear();
        self.z.extend_from_slice(positions);
        let (qf, qb) = (self.k0 - self.kp, -(self.k0 + self.kp));
        for (l, &z) in positions.iter().enumerate() {
            self.e_fwd[l] = C64::from_polar(1.0, qf * z);
            self.e_bwd[l] = C64::from_polar(1.0, qb * z);
        }
        let z = &self.z;
        let order = &mut self.order;
        for i in 1..order.len() {
            let cur = order[i];
            let mut j = i;
            while j > 0 && z[order[j - 1]] > z[cur] {
                order[j] = order[j - 1];
                j -= 1;
            }
            order[j] = cur;
        }
    }

    pub fn positions(&self) -> &[f64] {
        &self.z
    }

    /// Dense `g`, for inspection and cross-checks.
    pub fn to_dense(&self) -> CMatrix {
        let n = self.z.len();
        let pre = C64::new(0.0, -0.5 * self.gamma_1d);
        CMatrix::from_fn(n, n, |l, m| {
            let f = self.e_fwd[l] * self.e_fwd[m].conj() * self.w_fwd;
            let b = self.e_bwd[l] * self.e_bwd[m].conj() * self.w_bwd;
            let v = if self.z[m] < self.z[l] {
                f
            } else if self.z[m] > self.z[l] {
                b
            } else {
                (f + b) * 0.5
            };
            pre * v
        })
    }
}

impl CollectiveCoupling for WaveguideKernel {
    fn len(&self) -> usize {
        self.z.len()
    }

    fn apply(&self, v: &[C64], out: &mut [C64]) {
        let n = self.order.len();
        let zero = C64::new(0.0, 0.0);
        let mut suffix_b = zero;
        for &m in &self.order {
            suffix_b += self.e_bwd[m].conj() * v[m];
        }
        let mut prefix_f = zero;
        let pre_f = C64::new(0.0, -0.5 * self.gamma_1d * self.w_fwd);
        let pre_b = C64::new(0.0, -0.5 * self.gamma_1d * self.w_bwd);
        let mut i = 0;
        while i < n {
            let zi = self.z[self.order[i]];
            let mut j = i;
            let (mut tie_f, mut tie_b) = (zero, zero);
            while j < n && self.z[self.order[j]] == zi {
                let m = self.order[j];
                tie_f += self.e_fwd[m].conj() * v[m];
                tie_b += self.e_bwd[m].conj() * v[m];
                j += 1;
            }
            suffix_b -= tie_b;
            let sf = prefix_f + tie_f * 0.5;
            let sb = suffix_b + tie_b * 0.5;
            for &l in &self.order[i..j] {
                out[l] = pre_f * self.e_fwd[l] * sf + pre_b * self.e_bwd[l] * sb;
            }
            prefix_f += tie_f;
            i = j;
        }
    }

    fn noise_rank(&self) -> usize {
        2
    }

    fn noise_row(&self, l: usize, out: &mut [C64]) {
        out[0] = self.e_fwd[l] * (0.5 * self.gamma_1d * self.w_fwd).sqrt();
        out[1] = self.e_bwd[l] * (0.5 * self.gamma_1d * self.w_bwd).sqrt();
    }

    fn gamma_diag(&self, _l: usize) -> f64 {
        0.5 * self.gamma_1d * (self.w_fwd + self.w_bwd)
    }

    fn noise_mix(&self, xi: &[C64], out: &mut [C64]) {
        let xf = xi[0] * (0.5 * self.gamma_1d * self.w_fwd).sqrt();
        let xb = xi[1] * (0.5 * self.gamma_1d * self.w_bwd).sqrt();
        for ((o, f), b) in out.iter_mut().zip(&self.e_fwd).zip(&self.e_bwd) {
            *o = f * xf + b * xb;
        }
    }
}
