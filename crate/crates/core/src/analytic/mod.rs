//! Closed-form predictions for the resonant system in the mesoscopic regime.
//!
//! An initial `|+⟩ ⊗ |α = √n̄⟩` splits into two Gea-Banacloche branches whose
//! field components rotate in opposite directions in the Fresnel plane,
//! `λ_±(τ) = √n̄ e^{∓iaτ/2}` with `a = g/2√n̄`. The Rabi signal is
//!
//! `P(t) = ½(1 + Re[e^{−igt√n̄} R₊₋(t) F₊₋(t)])`
//!
//! with the overlap `R₊₋(t) = e^{−n̄} e^{igt√n̄} Σ_k n̄^k/k! e^{−igt√(k+1)}` and the
//! decoherence factor `F₊₋ = e^{−d + iΘ}`. The carrier `e^{−igt√n̄}` is the one
//! that makes the dissipationless signal the exact photon-number sum
//! `Σ_k p_k cos²(g√(k+1)t/2)`.
//!
//! After an echo pulse at `t_π` the pulse exchanges the two branches, so the
//! signal reads `½(1 + Re[(e^{−igs√n̄} R₊₋(s))* F₊₋(t_π,t)])` with `s = 2t_π − t`;
//! without dissipation this is just the free signal at `s`.
//!
//! Cavity-loss phase: the coherent pointer amplitudes shrink while their
//! branches rotate, and the resulting Hamiltonian and geometric phases
//! outweigh the phase of the bare pointer functional. The net cavity phase is
//! the functional's phase with the opposite sign, which is also what the
//! master equation shows.
//!
//! The average photon number is held at `n̄` throughout, so the forms are valid
//! for `t ≪ 1/κ` (see [`validity_horizon`]).

pub mod dispersive;
pub mod renewal;

pub use dispersive::{dispersive_pointer_trajectory, dispersive_solution, no_drive, Drive, DispersiveSolution, DispersiveState};
pub use renewal::{renewal_dephasing, Regime, RenewalCoefficients, RenewalMode};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::SystemParams;
use crate::hilbert::Truncation;
use crate::mcwf::{Protocol, ProtocolKind};
use crate::C64;

/// Accumulated suppression `e^{−d}` and phase `Θ` of the branch coherence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoherenceFactor {
    /// `−d(t)`.
    pub modulus_log: f64,
    /// `Θ(t)`.
    pub phase: f64,
}

impl DecoherenceFactor {
    pub const ONE: Self = Self { modulus_log: 0.0, phase: 0.0 };

    pub fn d(&self) -> f64 {
        -self.modulus_log
    }

    pub fn modulus(&self) -> f64 {
        self.modulus_log.exp()
    }

    pub fn value(&self) -> C64 {
        C64::from_polar(self.modulus(), self.phase)
    }
}

/// Time up to which the constant-`n̄` approximation is meaningful (`1/κ`).
pub fn validity_horizon(p: &SystemParams) -> f64 {
    if p.kappa > 0.0 {
        1.0 / p.kappa
    } else {
        f64::INFINITY
    }
}

fn phi(t: f64, p: &SystemParams) -> f64 {
    p.g * t / (2.0 * p.nbar.sqrt())
}

fn check_nbar(nbar: f64) -> Result<()> {
    if !(nbar > 0.0) {
        return Err(Error::invalid("nbar", "must be positive"));
    }
    Ok(())
}

/// Poisson weights `p_k` for `k = 0..=n_max`, renormalized on the truncation.
fn poisson_weights(nbar: f64, trunc: Truncation) -> Vec<f64> {
    let mut w = Vec::with_capacity(trunc.field_dim());
    let mut x = (-nbar).exp();
    w.push(x);
    for k in 1..=trunc.n_max() {
        x *= nbar / k as f64;
        w.push(x);
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// `R₊₋(t)`, summed over the truncation and renormalized so `R(0) = 1`.
pub fn overlap_factor(t: f64, nbar: f64, g: f64, trunc: Truncation) -> C64 {
    let sq = nbar.sqrt();
    poisson_weights(nbar, trunc)
        .iter()
        .enumerate()
        .map(|(k, &w)| C64::from_polar(w, g * t * (sq - ((k + 1) as f64).sqrt())))
        .sum()
}

/// Dissipationless signal `Σ_k p_k cos²(g√(k+1)t/2)` on the truncation.
pub fn fock_sum_signal(t: f64, nbar: f64, g: f64, trunc: Truncation) -> f64 {
    poisson_weights(nbar, trunc)
        .iter()
        .enumerate()
        .map(|(k, &w)| w * (0.5 * g * ((k + 1) as f64).sqrt() * t).cos().powi(2))
        .sum()
}

/// Free-evolution decoherence factor:
///
/// `d(t) = Γt − (2√n̄/g)(κn̄ + γ₁/4) sin φ_t`, `φ_t = gt/2√n̄`,
/// `Θ(t) = ((γ₁√n̄ + 4κn̄^{3/2})/g) sin²(φ_t/2)`.
///
/// The `γ₁` phase is the argument of [`relaxation_decoherence`]; the `κ` phase
/// is minus that of [`pointer_decoherence_functional`] along the resonant
/// paths.
pub fn free_decoherence(t: f64, p: &SystemParams) -> DecoherenceFactor {
    let sq = p.nbar.sqrt();
    let ph = phi(t, p);
    let d = p.gamma_total() * t - (2.0 * sq / p.g) * (p.kappa * p.nbar + p.gamma1 / 4.0) * ph.sin();
    let s2 = (ph / 2.0).sin().powi(2);
    let theta = (p.gamma1 * sq + 4.0 * p.kappa * p.nbar * sq) / p.g * s2;
    DecoherenceFactor { modulus_log: -d, phase: theta }
}

/// Echo decoherence factor for `t ≥ t_π`:
///
/// `d(t_π,t) = (2√n̄/g)(κn̄ + γ₁/4)(sin(2φ_π − φ_t) − 2 sin φ_π) + Γt`,
/// phase `Θ₁ + Θ_cav` with
/// `Θ₁ = (γ₁√n̄/g)(2 sin²(φ_π/2) − sin²(φ_π − φ_t/2))` and `Θ_cav` minus the
/// phase of the pointer functional along the echo-folded paths (by quadrature).
pub fn echo_decoherence(t_pi: f64, t: f64, p: &SystemParams) -> Result<DecoherenceFactor> {
    if !(t_pi > 0.0) {
        return Err(Error::invalid("t_pi", "must be positive"));
    }
    if t < t_pi {
        return Err(Error::EchoOrdering { t_pi, t });
    }
    let sq = p.nbar.sqrt();
    let (fp, ft) = (phi(t_pi, p), phi(t, p));
    let d = (2.0 * sq / p.g) * (p.kappa * p.nbar + p.gamma1 / 4.0) * ((2.0 * fp - ft).sin() - 2.0 * fp.sin()) + p.gamma_total() * t;
    let theta1 = p.gamma1 * sq / p.g * (2.0 * (fp / 2.0).sin().powi(2) - (fp - ft / 2.0).sin().powi(2));
    let theta_cav = if p.kappa > 0.0 {
        // Richardson-extrapolated trapezoid; the fold at t_π is a node of both
        let fine = PointerTrajectoryPair::resonant_echo(p.nbar, p.g, t_pi, t, ECHO_QUADRATURE_NODES)?;
        let coarse = PointerTrajectoryPair::resonant_echo(p.nbar, p.g, t_pi, t, ECHO_QUADRATURE_NODES / 2)?;
        -(4.0 * pointer_decoherence_exponent(&fine, p.kappa).im - pointer_decoherence_exponent(&coarse, p.kappa).im) / 3.0
    } else {
        0.0
    };
    Ok(DecoherenceFactor { modulus_log: -d, phase: theta1 + theta_cav })
}

/// Quadrature intervals per leg for the echo cavity phase.
pub const ECHO_QUADRATURE_NODES: usize = 512;

/// Relaxation factor `exp((γ₁/2)∫₀ᵗ(½e^{iaτ} − 1)dτ)`, `a = g/2√n̄`, in closed
/// form `exp((γ₁√n̄/2ig)(e^{iφ_t} − 1) − γ₁t/2)`.
pub fn relaxation_decoherence(t: f64, p: &SystemParams) -> C64 {
    let ph = phi(t, p);
    let unit = C64::from_polar(1.0, ph) - 1.0;
    let expo = unit * C64::new(0.0, -p.gamma1 * p.nbar.sqrt() / (2.0 * p.g)) - p.gamma1 * t / 2.0;
    expo.exp()
}

/// Rabi signal and its envelopes at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RabiPoint {
    pub p_plus: f64,
    pub env_hi: f64,
    pub env_lo: f64,
}

impl RabiPoint {
    /// `S^z = P(+) − ½`.
    pub fn sz(&self) -> f64 {
        self.p_plus - 0.5
    }
}

/// `P(t)` and `P_± = ½(1 ± |RF|)`. After an echo pulse the overlap is taken
/// at the reversed time `2t_π − t` and `F` is the echo factor.
pub fn rabi_signal(t: f64, p: &SystemParams, protocol: &Protocol, trunc: Truncation) -> Result<RabiPoint> {
    check_nbar(p.nbar)?;
    let (s, f, reversed) = match protocol.pulse_time() {
        Some(tp) if protocol.kind == ProtocolKind::Echo && t >= tp => (2.0 * tp - t, echo_decoherence(tp, t, p)?, true),
        _ => (t, free_decoherence(t, p), false),
    };
    let mut overlap = overlap_factor(s, p.nbar, p.g, trunc) * C64::from_polar(1.0, -p.g * s * p.nbar.sqrt());
    if reversed {
        overlap = overlap.conj();
    }
    let amp = overlap.norm() * f.modulus();
    Ok(RabiPoint { p_plus: 0.5 * (1.0 + (overlap * f.value()).re), env_hi: 0.5 * (1.0 + amp), env_lo: 0.5 * (1.0 - amp) })
}

/// Complex coherent-amplitude paths of the two branches on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PointerTrajectoryPair {
    times: Vec<f64>,
    lambda_plus: Vec<C64>,
    lambda_minus: Vec<C64>,
}

impl PointerTrajectoryPair {
    pub fn new(times: Vec<f64>, lambda_plus: Vec<C64>, lambda_minus: Vec<C64>) -> Result<Self> {
        if lambda_plus.len() != times.len() || lambda_minus.len() != times.len() {
            return Err(Error::DimensionMismatch { expected: times.len(), found: lambda_plus.len().max(lambda_minus.len()) });
        }
        Ok(Self { times, lambda_plus, lambda_minus })
    }

    /// `λ_±(τ) = √n̄ e^{∓iaτ/2}` on `n` uniform intervals of `[0, t]`.
    pub fn resonant(nbar: f64, g: f64, t: f64, n: usize) -> Result<Self> {
        check_nbar(nbar)?;
        let times: Vec<f64> = (0..=n).map(|k| t * k as f64 / n as f64).collect();
        Self::from_angle(nbar, g, times, |tau| tau)
    }

    /// Resonant paths with the branch rotation reversed at `t_π`: the Fresnel
    /// angle follows `f(τ) = τ` before the pulse and `2t_π − τ` after.
    pub fn resonant_echo(nbar: f64, g: f64, t_pi: f64, t: f64, n: usize) -> Result<Self> {
        check_nbar(nbar)?;
        let mut times: Vec<f64> = (0..=n).map(|k| t_pi * k as f64 / n as f64).collect();
        if t > t_pi {
            times.extend((1..=n).map(|k| t_pi + (t - t_pi) * k as f64 / n as f64));
        }
        Self::from_angle(nbar, g, times, |tau| if tau <= t_pi { tau } else { 2.0 * t_pi - tau })
    }

    fn from_angle(nbar: f64, g: f64, times: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let sq = nbar.sqrt();
        let a = g / (2.0 * sq);
        let lp = times.iter().map(|&tau| C64::from_polar(sq, -a * f(tau) / 2.0)).collect();
        let lm = times.iter().map(|&tau| C64::from_polar(sq, a * f(tau) / 2.0)).collect();
        Self::new(times, lp, lm)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn lambda_plus(&self) -> &[C64] {
        &self.lambda_plus
    }

    pub fn lambda_minus(&self) -> &[C64] {
        &self.lambda_minus
    }
}

/// `exp(−(κ/2)∫|λ₊−λ₋|²dτ) · exp(iκ∫Im(λ₊λ₋*)dτ)` by the trapezoid rule.
pub fn pointer_decoherence_functional(paths: &PointerTrajectoryPair, kappa: f64) -> C64 {
    pointer_decoherence_exponent(paths, kappa).exp()
}

/// Logarithm of [`pointer_decoherence_functional`], free of phase wrapping.
pub fn pointer_decoherence_exponent(paths: &PointerTrajectoryPair, kappa: f64) -> C64 {
    let integrand = |k: usize| {
        let (a, b) = (paths.lambda_plus[k], paths.lambda_minus[k]);
        C64::new(-0.5 * kappa * (a - b).norm_sqr(), kappa * (a * b.conj()).im)
    };
    let mut acc = C64::new(0.0, 0.0);
    for k in 1..paths.times.len() {
        acc += (integrand(k - 1) + integrand(k)) * (0.5 * (paths.times[k] - paths.times[k - 1]));
    }
    acc
}

/// Strong-coupling dephasing rate of a Fock-state pair,
/// `min(γ_φ, (γ_φ/64)(n̄_c/n̄)(p₊−p₋)²)` with `n̄_c = (2g/γ_φ)²`. Meaningful for
/// `n̄ ≫ n̄_c`.
pub fn fock_decoherence_rate(p_plus: u64, p_minus: u64, nbar: f64, gamma_phi: f64, g: f64) -> f64 {
    if gamma_phi == 0.0 || p_plus == p_minus {
        return 0.0;
    }
    let nc = (2.0 * g / gamma_phi).powi(2);
    let dp = p_plus as f64 - p_minus as f64;
    (gamma_phi / 64.0 * nc / nbar * dp * dp).min(gamma_phi)
}

/// Contour-map coefficient: `|F₊₋(t)|` (free) or `|F₊₋(t/2, t)|` (echo).
pub fn contrast_coefficient(t: f64, nbar: f64, p: &SystemParams, kind: ProtocolKind) -> Result<f64> {
    check_nbar(nbar)?;
    let q = SystemParams { nbar, ..*p };
    match kind {
        ProtocolKind::Free => Ok(free_decoherence(t, &q).modulus()),
        ProtocolKind::Echo if t == 0.0 => Ok(1.0),
        ProtocolKind::Echo => Ok((-echo_d(t / 2.0, t, &q)).exp()),
    }
}

/// Modulus part of the echo factor only (no phase quadrature).
fn echo_d(t_pi: f64, t: f64, p: &SystemParams) -> f64 {
    let sq = p.nbar.sqrt();
    let (fp, ft) = (phi(t_pi, p), phi(t, p));
    (2.0 * sq / p.g) * (p.kappa * p.nbar + p.gamma1 / 4.0) * ((2.0 * fp - ft).sin() - 2.0 * fp.sin()) + p.gamma_total() * t
}

/// Leading small-`t` coefficient `c` of the cavity-limited contrast,
/// `−log C ≈ c (t/t_R)³` for `t ≪ t_R√n̄`: expanding `d(t)` gives
/// `c = (π³/3)(κ/g)`, independent of `n̄`.
pub fn cavity_cubic_coefficient(g: f64, kappa: f64) -> f64 {
    std::f64::consts::PI.powi(3) / 3.0 * kappa / g
}

/// Mesoscopic ladder coefficient `√(p + ½ − m)` of `a|X_m^{(p)}⟩`, `m = ±½`.
pub fn photon_jump_coefficient(p: u64, m: f64) -> f64 {
    (p as f64 + 0.5 - m).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{overlap, JointState, EXCITED};
    use nalgebra::DVector;
    use std::f64::consts::PI;

    fn cqed2(nbar: f64) -> SystemParams {
        let g = 1.0;
        SystemParams::resonant(g, g / 840.0, g / 106.0, g / 215.0, nbar)
    }

    #[test]
    fn overlap_basics() {
        let t = Truncation::for_mean_photons(10.0);
        assert_eq!(overlap_factor(0.0, 10.0, 1.0, t), C64::new(1.0, 0.0));
        for k in 0..200 {
            assert!(overlap_factor(0.37 * k as f64, 10.0, 1.0, t).norm() <= 1.0 + 1e-14);
        }
        // first revival t = 2 t_R √n̄ is a local maximum of |R|
        let tr = 2.0 * PI;
        let t_rev = 2.0 * tr * 10f64.sqrt();
        let search: Vec<f64> = (0..=400).map(|k| t_rev - tr + 2.0 * tr * k as f64 / 400.0).collect();
        let best = search.iter().cloned().max_by(|a, b| overlap_factor(*a, 10.0, 1.0, t).norm().total_cmp(&overlap_factor(*b, 10.0, 1.0, t).norm())).unwrap();
        assert!((best - t_rev).abs() < 0.5 * tr, "revival at {} vs {}", best / tr, t_rev / tr);
    }

    #[test]
    fn overlap_equals_branch_field_inner_product() {
        // field components of the exact branches carry e^{∓igt√(k+1)/2}
        let nbar = 10.0;
        let t = Truncation::for_mean_photons(nbar);
        let w = poisson_weights(nbar, t);
        for k in 0..=60 {
            let gt = PI * k as f64 / 2.0;
            let sq = nbar.sqrt();
            let plus = DVector::from_iterator(t.field_dim(), w.iter().enumerate().map(|(n, p)| C64::from_polar(p.sqrt(), gt * sq / 2.0 - gt * ((n + 1) as f64).sqrt() / 2.0)));
            let minus = DVector::from_iterator(t.field_dim(), w.iter().enumerate().map(|(n, p)| C64::from_polar(p.sqrt(), -gt * sq / 2.0 + gt * ((n + 1) as f64).sqrt() / 2.0)));
            let a = overlap_factor(gt, nbar, 1.0, t);
            assert!((minus.dotc(&plus) - a).norm() < 1e-8);
        }
    }

    #[test]
    fn dissipationless_signal_is_fock_sum() {
        let nbar = 10.0;
        let t = Truncation::for_mean_photons(nbar);
        let p = SystemParams::resonant(1.0, 0.0, 0.0, 0.0, nbar);
        let proto = Protocol::free(100.0, 1.0);
        for k in 0..300 {
            let tt = 0.3 * k as f64;
            let r = rabi_signal(tt, &p, &proto, t).unwrap();
            assert!((r.p_plus - fock_sum_signal(tt, nbar, 1.0, t)).abs() < 1e-13);
            assert!(r.env_lo <= r.p_plus + 1e-14 && r.p_plus <= r.env_hi + 1e-14);
        }
        let r0 = rabi_signal(0.0, &p, &proto, t).unwrap();
        assert!((r0.p_plus - 1.0).abs() < 1e-15 && (r0.env_hi - 1.0).abs() < 1e-15);
    }

    #[test]
    fn collapse_within_a_few_periods() {
        let t = Truncation::for_mean_photons(10.0);
        let tr = 2.0 * PI;
        let first_below = (0..1000).map(|k| k as f64 * 0.01 * tr).find(|&s| overlap_factor(s, 10.0, 1.0, t).norm() < 0.1).unwrap();
        assert!(first_below < 3.0 * tr, "collapse at {}", first_below / tr);
    }

    #[test]
    fn echo_without_dissipation_mirrors_free_signal() {
        let nbar = 8.0;
        let t = Truncation::for_mean_photons(nbar);
        let p = SystemParams::resonant(1.0, 0.0, 0.0, 0.0, nbar);
        let tp = 3.0 * 2.0 * PI;
        let echo = Protocol::echo(tp, 4.0 * tp, 1.0);
        for k in 0..100 {
            let tt = tp + 0.13 * k as f64;
            let e = rabi_signal(tt, &p, &echo, t).unwrap();
            assert!((e.p_plus - fock_sum_signal(2.0 * tp - tt, nbar, 1.0, t)).abs() < 1e-13);
        }
        let at = rabi_signal(2.0 * tp, &p, &echo, t).unwrap();
        assert!((at.env_hi - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_rates_give_unit_factors() {
        let p = SystemParams::resonant(1.0, 0.0, 0.0, 0.0, 10.0);
        for &tt in &[0.0, 1.0, 17.0] {
            assert_eq!(free_decoherence(tt, &p).d(), 0.0);
            assert_eq!(free_decoherence(tt, &p).phase, 0.0);
            assert_eq!(relaxation_decoherence(tt, &p), C64::new(1.0, 0.0));
        }
        let e = echo_decoherence(2.0, 5.0, &p).unwrap();
        assert_eq!((e.d(), e.phase), (0.0, 0.0));
        assert!(matches!(echo_decoherence(2.0, 1.0, &p), Err(Error::EchoOrdering { .. })));
        assert_eq!(contrast_coefficient(3.0, 10.0, &p, ProtocolKind::Echo).unwrap(), 1.0);
    }

    #[test]
    fn cavity_part_matches_pointer_functional() {
        let nbar = 10.0;
        let p = SystemParams::resonant(1.0, 1.0 / 840.0, 0.0, 0.0, nbar);
        for &tt in &[1.0, 10.0, 40.0, 80.0] {
            let f = pointer_decoherence_functional(&PointerTrajectoryPair::resonant(nbar, 1.0, tt, 20000).unwrap(), p.kappa);
            let fd = free_decoherence(tt, &p);
            assert!((-f.norm().ln() - fd.d()).abs() < 1e-8);
            assert!((f.arg() + fd.phase).abs() < 1e-8);
        }
        let same = PointerTrajectoryPair::new(vec![0.0, 1.0], vec![C64::new(1.0, 2.0); 2], vec![C64::new(1.0, 2.0); 2]).unwrap();
        assert_eq!(pointer_decoherence_functional(&same, 0.3), C64::new(1.0, 0.0));
        let beta = C64::new(0.7, -0.2);
        let stat = PointerTrajectoryPair::new(vec![0.0, 0.5, 2.0], vec![beta; 3], vec![-beta; 3]).unwrap();
        let f = pointer_decoherence_functional(&stat, 0.3);
        assert!((f.norm() - (-2.0 * 0.3 * beta.norm_sqr() * 2.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn relaxation_factor_decomposes() {
        for nbar in [5.0, 10.0, 20.0] {
            let p = SystemParams::resonant(1.0, 0.0, 1.0 / 106.0, 0.0, nbar);
            for k in 0..=100 {
                let tt = 0.1 * 2.0 * PI * k as f64;
                let f = relaxation_decoherence(tt, &p);
                let fd = free_decoherence(tt, &p);
                assert!((f.norm().ln() - fd.modulus_log).abs() < 1e-12);
                assert!((f.arg() - fd.phase).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn early_decay_and_bounds() {
        let p = cqed2(10.0);
        // slope of d at t → 0 is γ_φ/2 + γ₁/4
        let h = 1e-4;
        let slope = free_decoherence(h, &p).d() / h;
        assert!((slope - (p.gamma_phi / 2.0 + p.gamma1 / 4.0)).abs() < 1e-6);
        let bound = (2.0 * p.nbar.sqrt() / p.g) * (p.kappa * p.nbar + p.gamma1 / 4.0);
        for k in 0..500 {
            let tt = 0.5 * k as f64;
            let d = free_decoherence(tt, &p).d();
            assert!(d >= p.gamma_total() * tt - bound - 1e-12);
            assert!(d >= -1e-15);
        }
    }

    #[test]
    fn echo_continuity_and_dephasing() {
        let p = cqed2(10.0);
        for &tp in &[0.5, 5.0, 3.0 * 2.0 * PI, 60.0] {
            let e = echo_decoherence(tp, tp, &p).unwrap();
            let f = free_decoherence(tp, &p);
            assert!((e.d() - f.d()).abs() < 1e-12);
            assert!((e.phase - f.phase).abs() < 1e-9);
        }
        // envelopes are continuous across the pulse
        let t = Truncation::for_mean_photons(10.0);
        let tp = 17.3;
        let free = rabi_signal(tp * (1.0 - 1e-12), &p, &Protocol::echo(tp, 3.0 * tp, 1.0), t).unwrap();
        let after = rabi_signal(tp, &p, &Protocol::echo(tp, 3.0 * tp, 1.0), t).unwrap();
        assert!((free.env_hi - after.env_hi).abs() < 1e-9);
        let deph = SystemParams::resonant(1.0, 0.0, 0.0, 0.02, 10.0);
        let e = echo_decoherence(3.0, 6.0, &deph).unwrap();
        assert!((e.d() - 0.01 * 6.0).abs() < 1e-15);
    }

    #[test]
    fn echo_cavity_phase_quadrature_matches_closed_form() {
        let nbar = 10.0;
        let p = SystemParams::resonant(1.0, 1.0 / 300.0, 0.0, 0.0, nbar);
        let tp = 3.0 * 2.0 * PI;
        for &tt in &[tp, 1.4 * tp, 2.0 * tp] {
            let a = p.g / (2.0 * nbar.sqrt());
            let (fp, ft) = (a * tp, a * tt);
            let closed = p.kappa * nbar * (1.0 - 2.0 * fp.cos() + (2.0 * fp - ft).cos()) / a;
            let e = echo_decoherence(tp, tt, &p).unwrap();
            assert!((e.phase - closed).abs() < 1e-8, "{} vs {closed}", e.phase);
        }
    }

    #[test]
    fn echo_modulus_matches_folded_functional() {
        let nbar = 10.0;
        let p = SystemParams::resonant(1.0, 1.0 / 300.0, 0.0, 0.0, nbar);
        let tp = 3.0 * 2.0 * PI;
        let tt = 2.0 * tp;
        let f = pointer_decoherence_functional(&PointerTrajectoryPair::resonant_echo(nbar, 1.0, tp, tt, 20000).unwrap(), p.kappa);
        assert!((-f.norm().ln() - echo_decoherence(tp, tt, &p).unwrap().d()).abs() < 1e-8);
    }

    #[test]
    fn fock_rates() {
        assert_eq!(fock_decoherence_rate(3, 3, 100.0, 0.1, 1.0), 0.0);
        let (g, gp) = (1.0f64, 0.1f64);
        let nc = (2.0 * g / gp).powi(2);
        assert!((fock_decoherence_rate(4, 3, 4.0 * nc, gp, g) - gp / 256.0).abs() < 1e-15);
        assert_eq!(fock_decoherence_rate(100, 0, 4.0 * nc, gp, g), gp);
    }

    #[test]
    fn contrast_is_monotone_in_rates() {
        let p = cqed2(10.0);
        let q = p.with_rates_scaled(2.0);
        for kind in [ProtocolKind::Free, ProtocolKind::Echo] {
            for k in 1..50 {
                let tt = k as f64 * 1.3;
                let a = contrast_coefficient(tt, 10.0, &p, kind).unwrap();
                let b = contrast_coefficient(tt, 10.0, &q, kind).unwrap();
                assert!(b < a && a <= 1.0);
            }
        }
    }

    #[test]
    fn photon_jump_coefficients() {
        assert_eq!(photon_jump_coefficient(3, 0.5), 3f64.sqrt());
        assert_eq!(photon_jump_coefficient(3, -0.5), 2.0);
        // consistency with the exact ladder action on a basis state
        let t = Truncation::new(5).unwrap();
        let s = JointState::basis(t, EXCITED, 4);
        let (a, _) = crate::hilbert::apply_elementary(crate::hilbert::Elementary::Annihilate, &s);
        assert!((overlap(&a, &a).unwrap().re.sqrt() - photon_jump_coefficient(3, -0.5)).abs() < 1e-15);
    }
}
