//! Telegraph-noise averages produced by pure-dephasing jumps.
//!
//! Each dephasing jump flips the sign `X = ±1` of the slow phase velocity, so
//! between jumps the relative phase accumulates as `λ∫X dτ`. With jumps arriving
//! at rate `r = γ_φ/2` and `X(0) = +1`, the coefficients are
//!
//! `D^(e)(t) = ⟨e^{iλ∫₀ᵗX} ; even number of jumps⟩`,
//! `D^(o)(t) = ⟨e^{iλ∫₀ᵗX} ; odd number of jumps⟩`,
//!
//! i.e. the two components of `exp(t [[iλ − r, r], [r, −iλ − r]]) (1, 0)ᵀ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Exact,
    /// `λ ≫ γ_φ`.
    StrongCoupling,
    /// `λ ≪ γ_φ`, late times.
    WeakCoupling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenewalMode {
    Exact,
    /// Limiting forms where they are accurate, exact otherwise.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenewalCoefficients {
    pub even: C64,
    pub odd: C64,
    pub regime: Regime,
}

/// `λ/γ_φ` above which [`RenewalMode::Auto`] uses the strong-coupling forms.
pub const STRONG_THRESHOLD: f64 = 50.0;
/// `λ/γ_φ` below which (and for `γ_φ t ≥ 5`) the weak-coupling form is used.
pub const WEAK_THRESHOLD: f64 = 0.02;

pub fn renewal_dephasing(lambda: f64, gamma_phi: f64, t: f64, mode: RenewalMode) -> Result<RenewalCoefficients> {
    if !(gamma_phi >= 0.0) {
        return Err(Error::invalid("gamma_phi", "must be non-negative"));
    }
    if !(t >= 0.0) {
        return Err(Error::invalid("t", "must be non-negative"));
    }
    if mode == RenewalMode::Auto && gamma_phi > 0.0 {
        let ratio = lambda.abs() / gamma_phi;
        if ratio >= STRONG_THRESHOLD {
            let (even, odd) = strong_limit(lambda, gamma_phi, t);
            return Ok(RenewalCoefficients { even, odd, regime: Regime::StrongCoupling });
        }
        if ratio <= WEAK_THRESHOLD && gamma_phi * t >= 5.0 {
            let w = weak_limit(lambda, gamma_phi, t);
            return Ok(RenewalCoefficients { even: C64::new(w, 0.0), odd: C64::new(w, 0.0), regime: Regime::WeakCoupling });
        }
    }
    let (even, odd) = exact(lambda, gamma_phi, t);
    Ok(RenewalCoefficients { even, odd, regime: Regime::Exact })
}

/// Exact coefficients. With `w = √(λ² − r²)` (branch `Im w ≥ 0`):
/// `D^(o) = (r/w) e^{−rt} sin wt`, `D^(e) = e^{−rt}(cos wt + i(λ/w) sin wt)`.
/// The removable singularity at `w = 0` (`λ = γ_φ/2`) is handled by series.
pub fn exact(lambda: f64, gamma_phi: f64, t: f64) -> (C64, C64) {
    let r = gamma_phi / 2.0;
    let w = sqrt_upper(C64::new(lambda * lambda - r * r, 0.0));
    let z = w * t;
    // sin(wt)/w and cos(wt), with a series near z = 0
    let (sinc_t, cos) = if z.norm() < 1e-3 {
        let z2 = z * z;
        (C64::new(t, 0.0) * (1.0 - z2 / 6.0 + z2 * z2 / 120.0), 1.0 - z2 / 2.0 + z2 * z2 / 24.0)
    } else {
        (z.sin() / w, z.cos())
    };
    let decay = (-r * t).exp();
    let odd = sinc_t * (r * decay);
    let even = (cos + sinc_t * C64::new(0.0, lambda)) * decay;
    (even, odd)
}

/// Principal square root rotated onto the branch with nonnegative imaginary part.
fn sqrt_upper(z: C64) -> C64 {
    let s = z.sqrt();
    if s.im < 0.0 {
        -s
    } else {
        s
    }
}

/// `λ ≫ γ_φ`: `D^(e) ≈ e^{−γ_φt/2} e^{iλt}`, `D^(o) ≈ (γ_φ/2λ) e^{−γ_φt/2} sin λt`.
pub fn strong_limit(lambda: f64, gamma_phi: f64, t: f64) -> (C64, C64) {
    let decay = (-gamma_phi * t / 2.0).exp();
    let even = C64::from_polar(decay, lambda * t);
    let odd = C64::new(gamma_phi / (2.0 * lambda) * decay * (lambda * t).sin(), 0.0);
    (even, odd)
}

/// `λ ≪ γ_φ`, `t ≫ 1/γ_φ`: both coefficients `≈ ½ e^{−λ²t/γ_φ}`.
pub fn weak_limit(lambda: f64, gamma_phi: f64, t: f64) -> f64 {
    0.5 * (-lambda * lambda * t / gamma_phi).exp()
}
