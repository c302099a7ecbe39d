//! Jaynes-Cummings, dispersive and effective non-Hermitian Hamiltonians
//! (ħ = 1, all energies are angular frequencies).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{Truncation, EXCITED, GROUND};
use crate::lindblad::JumpChannel;
use crate::operator::OperatorMatrix;
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Vacuum Rabi splitting.
    pub g: f64,
    pub omega0: f64,
    pub omega_qb: f64,
    pub kappa: f64,
    pub gamma1: f64,
    pub gamma_phi: f64,
    pub nbar: f64,
}

impl SystemParams {
    /// Resonant system (`ω₀ = ω_qb = 0`, i.e. already in the rotating frame).
    pub fn resonant(g: f64, kappa: f64, gamma1: f64, gamma_phi: f64, nbar: f64) -> Self {
        Self { g, omega0: 0.0, omega_qb: 0.0, kappa, gamma1, gamma_phi, nbar }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.g > 0.0) || !self.g.is_finite() {
            return Err(Error::invalid("g", "must be positive and finite"));
        }
        for (name, v) in [("kappa", self.kappa), ("gamma1", self.gamma1), ("gamma_phi", self.gamma_phi), ("nbar", self.nbar)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, "must be non-negative and finite"));
            }
        }
        if !self.omega0.is_finite() || !self.omega_qb.is_finite() {
            return Err(Error::invalid("omega", "frequencies must be finite"));
        }
        Ok(())
    }

    /// `Δ = ω_qb − ω₀`.
    pub fn detuning(&self) -> f64 {
        self.omega_qb - self.omega0
    }

    /// Dispersive shift per photon `χ = g²/4Δ`.
    pub fn chi(&self) -> Result<f64> {
        let d = self.detuning();
        if d == 0.0 {
            return Err(Error::ZeroDetuning);
        }
        Ok(self.g * self.g / (4.0 * d))
    }

    /// Mean decoherence rate of the Rabi coherence, `Γ = κn̄ + (γ_φ + γ₁)/2`.
    pub fn gamma_total(&self) -> f64 {
        self.kappa * self.nbar + 0.5 * (self.gamma_phi + self.gamma1)
    }

    /// Vacuum Rabi period `t_R = 2π/g`.
    pub fn t_rabi(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.g
    }

    pub fn has_dissipation(&self) -> bool {
        self.kappa > 0.0 || self.gamma1 > 0.0 || self.gamma_phi > 0.0
    }

    /// Same system seen from the frame rotating at `ω₀`.
    pub fn in_rotating_frame(&self) -> Self {
        Self { omega0: 0.0, omega_qb: self.detuning(), ..*self }
    }

    pub fn with_rates_scaled(&self, factor: f64) -> Self {
        Self { kappa: self.kappa * factor, gamma1: self.gamma1 * factor, gamma_phi: self.gamma_phi * factor, ..*self }
    }

    pub fn without_dissipation(&self) -> Self {
        Self { kappa: 0.0, gamma1: 0.0, gamma_phi: 0.0, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Lab,
    #[default]
    Rotating,
}

/// `H = ω₀a†a + (ω_qb/2)σ^z + (g/2)(a†σ⁻ + aσ⁺)`; the rotating frame removes
/// `ω₀(a†a + σ^z/2)`.
pub fn jaynes_cummings(p: &SystemParams, trunc: Truncation, frame: Frame) -> OperatorMatrix {
    let (w_c, w_q) = match frame {
        Frame::Lab => (p.omega0, p.omega_qb),
        Frame::Rotating => (0.0, p.detuning()),
    };
    let d = trunc.dim();
    let mut h = DMatrix::zeros(d, d);
    for n in 0..=trunc.n_max() {
        let e = trunc.index(EXCITED, n);
        let g = trunc.index(GROUND, n);
        h[(e, e)] = C64::new(w_c * n as f64 + 0.5 * w_q, 0.0);
        h[(g, g)] = C64::new(w_c * n as f64 - 0.5 * w_q, 0.0);
        if n < trunc.n_max() {
            // ⟨e,n| (g/2) a σ⁺ |g,n+1⟩ = (g/2)√(n+1)
            let g1 = trunc.index(GROUND, n + 1);
            let c = C64::new(0.5 * p.g * ((n + 1) as f64).sqrt(), 0.0);
            h[(e, g1)] = c;
            h[(g1, e)] = c;
        }
    }
    OperatorMatrix::hermitian_unchecked(h)
}

/// `H = (ω₀ + χσ^z)a†a + ½(ω_qb + χ)σ^z`, `χ = g²/4Δ`.
pub fn dispersive_hamiltonian(p: &SystemParams, trunc: Truncation) -> Result<OperatorMatrix> {
    let chi = p.chi()?;
    let d = trunc.dim();
    let mut h = DMatrix::zeros(d, d);
    for n in 0..=trunc.n_max() {
        let nf = n as f64;
        let e = trunc.index(EXCITED, n);
        let g = trunc.index(GROUND, n);
        h[(e, e)] = C64::new((p.omega0 + chi) * nf + 0.5 * (p.omega_qb + chi), 0.0);
        h[(g, g)] = C64::new((p.omega0 - chi) * nf - 0.5 * (p.omega_qb + chi), 0.0);
    }
    Ok(OperatorMatrix::hermitian_unchecked(h))
}

/// `H_eff = H − (i/2) Σ_j L_j†L_j`.
pub fn effective_nonhermitian(h: &OperatorMatrix, channels: &[JumpChannel]) -> Result<OperatorMatrix> {
    let mut m = h.entries().clone();
    for ch in channels {
        let l = ch.operator();
        if l.dim() != h.dim() {
            return Err(Error::DimensionMismatch { expected: h.dim(), found: l.dim() });
        }
        m -= (l.entries().adjoint() * l.entries()) * C64::new(0.0, 0.5);
    }
    let hermitian = channels.iter().all(|c| c.rate() == 0.0) && h.is_hermitian();
    OperatorMatrix::new(m, hermitian)
}
