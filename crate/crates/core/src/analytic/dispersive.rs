//! Exact solution of the dispersive model with cavity loss, qubit relaxation
//! and pure dephasing, for an initial product `(A₊|+⟩ + A₋|−⟩) ⊗ |α₀⟩`.
//!
//! Each qubit branch carries a coherent pointer state `α_±(t)` obeying
//! `dα/dt = −iω_±α − (κ/2)α − iε(t)`, `ω_± = ω₀ ± χ`. A relaxation jump at `τ`
//! transfers the `+` branch to `−`, after which the field follows the `−`
//! equation from `α₊(τ)`:
//!
//! `ρ₊₊ = |A₊|² e^{−γ₁t} |α₊⟩⟨α₊|`
//! `ρ₋₋ = |A₋|² |α₋⟩⟨α₋| + |A₊|² γ₁∫₀ᵗ e^{−γ₁τ} |α̃(t,τ)⟩⟨α̃(t,τ)| dτ`
//! `ρ₊₋ = A₊A₋* e^{−(γ_φ+γ₁/2)t} F₊₋(t) e^{i(θ₊−θ₋)(t)} |α₊⟩⟨α₋|`
//!
//! where `F₊₋` is the pointer decoherence functional and `θ₊ − θ₋` the
//! Hamiltonian plus geometric phase difference,
//! `d(θ₊−θ₋)/dt = −(ω_qb + χ) − Re(ε*(α₊ − α₋))`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hamiltonian::SystemParams;
use crate::hilbert::{coherent_state_with, DensityMatrix, Sign, StateOptions, Truncation};
use crate::lindblad::TimeGrid;
use crate::C64;

/// Cavity drive waveform `ε(t)`.
pub type Drive<'a> = &'a (dyn Fn(f64) -> C64 + Sync);

/// The undriven cavity.
pub fn no_drive(_t: f64) -> C64 {
    C64::new(0.0, 0.0)
}

fn branch_frequency(p: &SystemParams, sign: Sign) -> Result<f64> {
    Ok(p.omega0 + sign.value() * p.chi()?)
}

/// Integrates the pointer amplitude of one qubit branch with RK4 on every
/// step of `grid`; returns `n_steps + 1` values.
pub fn dispersive_pointer_trajectory(alpha0: C64, sign: Sign, drive: Drive, p: &SystemParams, grid: &TimeGrid) -> Result<Vec<C64>> {
    let w = branch_frequency(p, sign)?;
    let rate = C64::new(p.kappa / 2.0, w);
    let f = |t: f64, a: C64| -rate * a - C64::new(0.0, 1.0) * drive(t);
    let h = grid.dt();
    let mut out = Vec::with_capacity(grid.n_steps() + 1);
    let mut a = alpha0;
    out.push(a);
    for k in 0..grid.n_steps() {
        let t = grid.step_time(k);
        let k1 = f(t, a);
        let k2 = f(t + h / 2.0, a + k1 * (h / 2.0));
        let k3 = f(t + h / 2.0, a + k2 * (h / 2.0));
        let k4 = f(t + h, a + k3 * h);
        a += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        out.push(a);
    }
    Ok(out)
}

/// `α̃(t,τ)`: the `+` branch up to `τ`, the `−` branch afterwards.
pub fn spliced_amplitude(alpha_plus_tau: C64, alpha_minus_tau: C64, alpha_minus_t: C64, elapsed: f64, p: &SystemParams) -> Result<C64> {
    let w = branch_frequency(p, Sign::Minus)?;
    Ok(alpha_minus_t + (alpha_plus_tau - alpha_minus_tau) * (-C64::new(p.kappa / 2.0, w) * elapsed).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispersiveState {
    pub time: f64,
    pub rho_pp: DMatrix<C64>,
    pub rho_mm: DMatrix<C64>,
    pub rho_pm: DMatrix<C64>,
}

impl DispersiveState {
    /// Joint density matrix in the standard basis layout.
    pub fn joint(&self, trunc: Truncation) -> Result<DensityMatrix> {
        let df = trunc.field_dim();
        let mut m = DMatrix::zeros(trunc.dim(), trunc.dim());
        m.view_mut((0, 0), (df, df)).copy_from(&self.rho_pp);
        m.view_mut((df, df), (df, df)).copy_from(&self.rho_mm);
        m.view_mut((0, df), (df, df)).copy_from(&self.rho_pm);
        m.view_mut((df, 0), (df, df)).copy_from(&self.rho_pm.adjoint());
        DensityMatrix::from_entries(m, trunc)
    }

    /// `Tr(ρ₊₊ + ρ₋₋)`.
    pub fn trace(&self) -> f64 {
        (self.rho_pp.trace() + self.rho_mm.trace()).re
    }
}

#[derive(Debug, Clone)]
pub struct DispersiveSolution {
    pub states: Vec<DispersiveState>,
    /// `|Δ| / (g√n̄)`; the model needs this ≫ 1.
    pub validity_ratio: f64,
}

/// Weights `(w_k, w_{k+1})` of `∫_{τ_k}^{τ_k+h} γ₁e^{−γ₁τ} f(τ) dτ` under
/// linear interpolation of `f`, relative to `e^{−γ₁τ_k}`. They sum to
/// `1 − e^{−γ₁h}`, so the quadrature conserves the trace exactly.
fn product_trapezoid_weights(gamma1: f64, h: f64) -> (f64, f64) {
    let x = gamma1 * h;
    let i0 = -(-x).exp_m1();
    let i1 = if x < 1e-3 {
        x / 2.0 - x * x / 3.0 + x * x * x / 8.0 - x.powi(4) / 30.0
    } else {
        (i0 - x * (-x).exp()) / x
    };
    (i0 - i1, i1)
}

#[allow(clippy::too_many_arguments)]
pub fn dispersive_solution(
    a_plus: C64,
    a_minus: C64,
    alpha0: C64,
    drive: Drive,
    p: &SystemParams,
    trunc: Truncation,
    grid: &TimeGrid,
) -> Result<DispersiveSolution> {
    let norm = a_plus.norm_sqr() + a_minus.norm_sqr();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::invalid("A", format!("|A+|^2 + |A-|^2 must be 1, got {norm}")));
    }
    let chi = p.chi()?;
    let ap = dispersive_pointer_trajectory(alpha0, Sign::Plus, drive, p, grid)?;
    let am = dispersive_pointer_trajectory(alpha0, Sign::Minus, drive, p, grid)?;
    let h = grid.dt();
    let opts = StateOptions::simulation();
    let ket = |a: C64| coherent_state_with(a, trunc, &opts).map(|f| f.amplitudes);

    // running integrals for the coherence: log F₊₋ and the phase difference
    let coh_rate = |k: usize| -> C64 {
        let t = grid.step_time(k);
        let d = ap[k] - am[k];
        let lnf = C64::new(-0.5 * p.kappa * d.norm_sqr(), p.kappa * (ap[k] * am[k].conj()).im);
        let dtheta = -(p.omega_qb + chi) - (drive(t).conj() * d).re;
        lnf + C64::new(0.0, dtheta)
    };
    let (w0, w1) = product_trapezoid_weights(p.gamma1, h);

    let mut states = Vec::with_capacity(grid.n_samples());
    let mut log_coh = C64::new(0.0, 0.0);
    let mut prev_rate = coh_rate(0);
    for k in 0..=grid.n_steps() {
        if k > 0 {
            let r = coh_rate(k);
            log_coh += (prev_rate + r) * (h / 2.0);
            prev_rate = r;
        }
        if k % grid.stride() != 0 {
            continue;
        }
        let t = grid.step_time(k);
        let kp = ket(ap[k])?;
        let km = ket(am[k])?;
        let rho_pp = (&kp * kp.adjoint()) * C64::new(a_plus.norm_sqr() * (-p.gamma1 * t).exp(), 0.0);

        let mut rho_mm = (&km * km.adjoint()) * C64::new(a_minus.norm_sqr(), 0.0);
        if p.gamma1 > 0.0 && k > 0 {
            let mut acc = DMatrix::zeros(trunc.field_dim(), trunc.field_dim());
            for j in 0..k {
                let e = (-p.gamma1 * grid.step_time(j)).exp();
                for (jj, w) in [(j, w0), (j + 1, w1)] {
                    let a = spliced_amplitude(ap[jj], am[jj], am[k], t - grid.step_time(jj), p)?;
                    let v = ket(a)?;
                    acc += (&v * v.adjoint()) * C64::new(e * w, 0.0);
                }
            }
            rho_mm += acc * C64::new(a_plus.norm_sqr(), 0.0);
        }

        let damp = (-(p.gamma_phi + p.gamma1 / 2.0) * t).exp();
        let coh = a_plus * a_minus.conj() * log_coh.exp() * damp;
        let rho_pm = (&kp * km.adjoint()) * coh;
        states.push(DispersiveState { time: t, rho_pp, rho_mm, rho_pm });
    }
    let validity_ratio = p.detuning().abs() / (p.g * p.nbar.max(1.0).sqrt());
    Ok(DispersiveSolution { states, validity_ratio })
}
