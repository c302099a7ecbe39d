//! Truncated joint qubit ⊗ Fock space: states, density matrices, coherent and
//! Gea-Banacloche states, elementary ladder/Pauli actions and partial traces.
//!
//! Basis layout: `index = qubit * (n_max + 1) + n`, with qubit `0` the excited
//! state `|+⟩` and qubit `1` the ground state `|−⟩`.

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::C64;

/// Default tolerance on the norm discarded by truncating a coherent field.
pub const DEFAULT_LEAK_TOL: f64 = 1e-9;
/// Leakage tolerance used by the simulation drivers. The default truncation
/// `⌈n̄ + 6√n̄⌉ + 2` discards ~10⁻⁸ of the norm at n̄ = 10, far below any
/// Monte-Carlo error but above [`DEFAULT_LEAK_TOL`].
pub const SIMULATION_LEAK_TOL: f64 = 1e-6;

/// Qubit basis index of `|+⟩` (excited).
pub const EXCITED: usize = 0;
/// Qubit basis index of `|−⟩` (ground).
pub const GROUND: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Truncation {
    n_max: usize,
}

impl Truncation {
    pub fn new(n_max: usize) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::invalid("n_max", "must be at least 1"));
        }
        Ok(Self { n_max })
    }

    /// `n_max = ⌈n̄ + 6√n̄⌉ + 2`.
    pub fn for_mean_photons(nbar: f64) -> Self {
        let nbar = nbar.max(0.0);
        let n_max = (nbar + 6.0 * nbar.sqrt()).ceil() as usize + 2;
        Self { n_max }
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn field_dim(&self) -> usize {
        self.n_max + 1
    }

    pub fn dim(&self) -> usize {
        2 * (self.n_max + 1)
    }

    #[inline]
    pub fn index(&self, qubit: usize, n: usize) -> usize {
        debug_assert!(qubit < 2 && n <= self.n_max);
        qubit * (self.n_max + 1) + n
    }

    /// Inverse of [`Truncation::index`]: `(qubit, photon number)`.
    #[inline]
    pub fn split(&self, index: usize) -> (usize, usize) {
        (index / (self.n_max + 1), index % (self.n_max + 1))
    }
}

/// Checks applied when building coherent-field based states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateOptions {
    pub leak_tol: f64,
    /// Enforce `|α|² ≤ n_max / 4`.
    pub occupation_guard: bool,
}

impl Default for StateOptions {
    fn default() -> Self {
        Self { leak_tol: DEFAULT_LEAK_TOL, occupation_guard: true }
    }
}

impl StateOptions {
    /// Settings for truncations sized by [`Truncation::for_mean_photons`]:
    /// their 6σ margin already bounds the tail, so the occupation guard is off
    /// and the leakage tolerance is [`SIMULATION_LEAK_TOL`].
    pub fn simulation() -> Self {
        Self { leak_tol: SIMULATION_LEAK_TOL, occupation_guard: false }
    }
}

/// Renormalized field amplitudes together with the norm lost to truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldVector {
    pub amplitudes: DVector<C64>,
    pub leakage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    amplitudes: DVector<C64>,
    trunc: Truncation,
}

impl JointState {
    pub fn from_amplitudes(amplitudes: DVector<C64>, trunc: Truncation) -> Result<Self> {
        if amplitudes.len() != trunc.dim() {
            return Err(Error::DimensionMismatch { expected: trunc.dim(), found: amplitudes.len() });
        }
        Ok(Self { amplitudes, trunc })
    }

    pub fn zeros(trunc: Truncation) -> Self {
        Self { amplitudes: DVector::zeros(trunc.dim()), trunc }
    }

    pub fn basis(trunc: Truncation, qubit: usize, n: usize) -> Self {
        let mut s = Self::zeros(trunc);
        s.amplitudes[trunc.index(qubit, n)] = C64::new(1.0, 0.0);
        s
    }

    /// `(q₊|+⟩ + q₋|−⟩) ⊗ field`.
    pub fn product(qubit: [C64; 2], field: &DVector<C64>, trunc: Truncation) -> Result<Self> {
        if field.len() != trunc.field_dim() {
            return Err(Error::DimensionMismatch { expected: trunc.field_dim(), found: field.len() });
        }
        let mut s = Self::zeros(trunc);
        for (q, &cq) in qubit.iter().enumerate() {
            for (n, &cf) in field.iter().enumerate() {
                s.amplitudes[trunc.index(q, n)] = cq * cf;
            }
        }
        Ok(s)
    }

    pub fn truncation(&self) -> Truncation {
        self.trunc
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut DVector<C64> {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> DVector<C64> {
        self.amplitudes
    }

    pub fn amplitude(&self, qubit: usize, n: usize) -> C64 {
        self.amplitudes[self.trunc.index(qubit, n)]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    pub fn normalized(&self) -> Self {
        let n = self.amplitudes.norm();
        Self { amplitudes: self.amplitudes.unscale(n), trunc: self.trunc }
    }

    /// Probability of `|+⟩` (for a normalized state).
    pub fn excited_population(&self) -> f64 {
        let d = self.trunc.field_dim();
        self.amplitudes.rows(0, d).norm_squared()
    }

    /// `|⟨self|other⟩|²` of the normalized states.
    pub fn fidelity(&self, other: &JointState) -> Result<f64> {
        let ov = overlap(self, other)?;
        Ok(ov.norm_sqr() / (self.norm_sqr() * other.norm_sqr()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: DMatrix<C64>,
    trunc: Truncation,
}

impl DensityMatrix {
    pub fn from_entries(entries: DMatrix<C64>, trunc: Truncation) -> Result<Self> {
        let d = trunc.dim();
        if entries.nrows() != d || entries.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: entries.nrows() });
        }
        Ok(Self { entries, trunc })
    }

    /// `|ψ⟩⟨ψ| / ⟨ψ|ψ⟩`.
    pub fn pure(state: &JointState) -> Self {
        let v = state.amplitudes();
        let entries = (v * v.adjoint()).unscale(v.norm_squared());
        Self { entries, trunc: state.truncation() }
    }

    pub fn maximally_mixed(trunc: Truncation) -> Self {
        let d = trunc.dim();
        Self { entries: DMatrix::identity(d, d).unscale(d as f64), trunc }
    }

    /// `ρ_q ⊗ ρ_f`.
    pub fn product(qubit: &Matrix2<C64>, field: &DMatrix<C64>, trunc: Truncation) -> Result<Self> {
        let df = trunc.field_dim();
        if field.nrows() != df || field.ncols() != df {
            return Err(Error::DimensionMismatch { expected: df, found: field.nrows() });
        }
        let mut entries = DMatrix::zeros(trunc.dim(), trunc.dim());
        for a in 0..2 {
            for b in 0..2 {
                let block = field * qubit[(a, b)];
                entries.view_mut((a * df, b * df), (df, df)).copy_from(&block);
            }
        }
        Ok(Self { entries, trunc })
    }

    pub fn truncation(&self) -> Truncation {
        self.trunc
    }

    pub fn entries(&self) -> &DMatrix<C64> {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut DMatrix<C64> {
        &mut self.entries
    }

    pub fn into_entries(self) -> DMatrix<C64> {
        self.entries
    }

    pub fn trace(&self) -> C64 {
        self.entries.trace()
    }

    /// `max |ρ − ρ†|`.
    pub fn hermiticity_error(&self) -> f64 {
        let d = self.entries.nrows();
        let mut worst = 0.0f64;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.entries[(i, j)] - self.entries[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let herm = (&self.entries + self.entries.adjoint()).scale(0.5);
        herm.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Frobenius norm of `self − other`.
    pub fn frobenius_distance(&self, other: &DensityMatrix) -> f64 {
        (&self.entries - &other.entries).norm()
    }
}

/// Sign index `m` of `|Ψ_±^X(θ)⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GBParams {
    pub sign: Sign,
    pub theta: f64,
    pub nbar: f64,
}

impl GBParams {
    pub fn new(sign: Sign, theta: f64, nbar: f64) -> Result<Self> {
        if !(nbar > 0.0) {
            return Err(Error::invalid("nbar", "must be positive"));
        }
        Ok(Self { sign, theta, nbar })
    }

    /// Fresnel-plane phase of the quasi-coherent field component, `−mθ/(2√n̄)`
    /// with `m = ±1/2`.
    pub fn fresnel_phase(&self) -> f64 {
        -self.sign.value() * self.theta / (4.0 * self.nbar.sqrt())
    }
}

/// Poisson amplitudes `e^{−|α|²/2} |α|^k / √k!` for `k = 0..=n_max`, built by
/// recurrence to stay finite for large `k`.
fn poisson_moduli(alpha_abs: f64, n_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    let mut c = (-0.5 * alpha_abs * alpha_abs).exp();
    out.push(c);
    for k in 1..=n_max {
        c *= alpha_abs / (k as f64).sqrt();
        out.push(c);
    }
    out
}

/// `Σ_{k > n_max} e^{−x} x^k / k!`, summed directly so that tiny tails keep
/// their relative accuracy.
fn poisson_tail(x: f64, n_max: usize) -> f64 {
    let mut p = poisson_moduli(x.sqrt(), n_max)[n_max].powi(2);
    let mut tail = 0.0;
    let mut k = n_max;
    loop {
        k += 1;
        p *= x / k as f64;
        tail += p;
        if p == 0.0 || (k as f64 > x && p < tail * 1e-17) {
            return tail;
        }
    }
}

fn check_occupation(alpha_sq: f64, trunc: Truncation, opts: &StateOptions) -> Result<()> {
    let limit = trunc.n_max() as f64 / 4.0;
    if opts.occupation_guard && alpha_sq > limit * (1.0 + 1e-12) {
        return Err(Error::TruncationUnsafe { alpha_sq, limit });
    }
    Ok(())
}

fn check_leakage(leakage: f64, opts: &StateOptions) -> Result<()> {
    if leakage > opts.leak_tol {
        return Err(Error::TruncationOverflow { leakage, tolerance: opts.leak_tol });
    }
    Ok(())
}

pub fn coherent_state(alpha: C64, trunc: Truncation) -> Result<FieldVector> {
    coherent_state_with(alpha, trunc, &StateOptions::default())
}

pub fn coherent_state_with(alpha: C64, trunc: Truncation, opts: &StateOptions) -> Result<FieldVector> {
    check_occupation(alpha.norm_sqr(), trunc, opts)?;
    let moduli = poisson_moduli(alpha.norm(), trunc.n_max());
    let phase = if alpha.norm() > 0.0 { alpha / alpha.norm() } else { C64::new(1.0, 0.0) };
    let mut amps = DVector::from_element(trunc.field_dim(), C64::new(0.0, 0.0));
    let mut rot = C64::new(1.0, 0.0);
    for (k, m) in moduli.iter().enumerate() {
        amps[k] = rot * *m;
        rot *= phase;
    }
    let kept = amps.norm_squared();
    let leakage = poisson_tail(alpha.norm_sqr(), trunc.n_max());
    check_leakage(leakage, opts)?;
    Ok(FieldVector { amplitudes: amps.unscale(kept.sqrt()), leakage })
}

/// Exact generalized Gea-Banacloche state
/// `e^{−n̄/2} Σ_p n̄^{p/2}/√p! e^{∓iθ√(p+1)/2} |X_±^{(p)}⟩`,
/// `|X_±^{(p)}⟩ = (|e,p⟩ ± |g,p+1⟩)/√2`, renormalized on the truncation.
pub fn gea_banacloche_state(p: &GBParams, trunc: Truncation) -> Result<JointState> {
    gea_banacloche_state_with(p, trunc, &StateOptions::default())
}

pub fn gea_banacloche_state_with(p: &GBParams, trunc: Truncation, opts: &StateOptions) -> Result<JointState> {
    check_occupation(p.nbar, trunc, opts)?;
    let m = p.sign.value();
    let moduli = poisson_moduli(p.nbar.sqrt(), trunc.n_max());
    let mut s = JointState::zeros(trunc);
    let r2 = std::f64::consts::FRAC_1_SQRT_2;
    for (pp, &modulus) in moduli.iter().enumerate().take(trunc.n_max()) {
        let b = C64::from_polar(modulus, -m * p.theta * ((pp + 1) as f64).sqrt() / 2.0);
        s.amplitudes[trunc.index(EXCITED, pp)] += b * r2;
        s.amplitudes[trunc.index(GROUND, pp + 1)] += b * (m * r2);
    }
    // the |−⟩ component needs p + 1 ≤ n_max, so the last kept term is p = n_max − 1
    check_leakage(poisson_tail(p.nbar, trunc.n_max() - 1), opts)?;
    Ok(s.normalized())
}

/// Factorized mesoscopic approximation `e^{∓iθ√n̄/2} |D_±(θ)⟩ ⊗ |ψ_±(θ)⟩`.
///
/// The polarization is `|D_±(θ)⟩ = (±e^{∓iθ/(4√n̄)}|+⟩ + |−⟩)/√2`: its phase is
/// locked to the Fresnel angle of the field component.
pub fn factorized_gb_state(p: &GBParams, trunc: Truncation) -> Result<JointState> {
    factorized_gb_state_with(p, trunc, &StateOptions::default())
}

pub fn factorized_gb_state_with(p: &GBParams, trunc: Truncation, opts: &StateOptions) -> Result<JointState> {
    let field = gb_field_state(p, trunc, opts)?;
    let m = p.sign.value();
    let sq = p.nbar.sqrt();
    let global = C64::from_polar(1.0, -m * p.theta * sq / 2.0);
    let r2 = std::f64::consts::FRAC_1_SQRT_2;
    let q_plus = C64::from_polar(m * r2, -m * p.theta / (4.0 * sq)) * global;
    let q_minus = C64::new(r2, 0.0) * global;
    JointState::product([q_plus, q_minus], &field.amplitudes, trunc)
}

/// Field component `|ψ_±(θ)⟩ = e^{±iθ√n̄/2} e^{−n̄/2} Σ_k n̄^{k/2}/√k! e^{∓iθ√k/2} |k⟩`.
pub fn gb_field_state(p: &GBParams, trunc: Truncation, opts: &StateOptions) -> Result<FieldVector> {
    check_occupation(p.nbar, trunc, opts)?;
    let m = p.sign.value();
    let moduli = poisson_moduli(p.nbar.sqrt(), trunc.n_max());
    let global = m * p.theta * p.nbar.sqrt() / 2.0;
    let amps = DVector::from_iterator(
        trunc.field_dim(),
        moduli
            .iter()
            .enumerate()
            .map(|(k, &c)| C64::from_polar(c, global - m * p.theta * (k as f64).sqrt() / 2.0)),
    );
    let kept = amps.norm_squared();
    let leakage = poisson_tail(p.nbar, trunc.n_max());
    check_leakage(leakage, opts)?;
    Ok(FieldVector { amplitudes: amps.unscale(kept.sqrt()), leakage })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Elementary {
    Annihilate,
    Create,
    Number,
    SigmaMinus,
    SigmaPlus,
    SigmaZ,
}

/// Applies a ladder or Pauli operator. The flag reports amplitude pushed past
/// `n_max` by `Create` (dropped from the result).
pub fn apply_elementary(op: Elementary, s: &JointState) -> (JointState, bool) {
    let t = s.truncation();
    let nm = t.n_max();
    let mut out = JointState::zeros(t);
    let mut leaked = false;
    for q in 0..2 {
        for n in 0..=nm {
            let c = s.amplitude(q, n);
            if c == C64::new(0.0, 0.0) {
                continue;
            }
            match op {
                Elementary::Annihilate => {
                    if n > 0 {
                        out.amplitudes[t.index(q, n - 1)] += c * (n as f64).sqrt();
                    }
                }
                Elementary::Create => {
                    if n < nm {
                        out.amplitudes[t.index(q, n + 1)] += c * ((n + 1) as f64).sqrt();
                    } else {
                        leaked = true;
                    }
                }
                Elementary::Number => out.amplitudes[t.index(q, n)] += c * n as f64,
                Elementary::SigmaMinus => {
                    if q == EXCITED {
                        out.amplitudes[t.index(GROUND, n)] += c;
                    }
                }
                Elementary::SigmaPlus => {
                    if q == GROUND {
                        out.amplitudes[t.index(EXCITED, n)] += c;
                    }
                }
                Elementary::SigmaZ => {
                    let sgn = if q == EXCITED { 1.0 } else { -1.0 };
                    out.amplitudes[t.index(q, n)] += c * sgn;
                }
            }
        }
    }
    (out, leaked)
}

/// `⟨a|b⟩`.
pub fn overlap(a: &JointState, b: &JointState) -> Result<C64> {
    if a.truncation() != b.truncation() {
        return Err(Error::DimensionMismatch { expected: a.truncation().dim(), found: b.truncation().dim() });
    }
    Ok(a.amplitudes().dotc(b.amplitudes()))
}

/// `⟨a|b⟩` for field vectors.
pub fn field_overlap(a: &DVector<C64>, b: &DVector<C64>) -> Result<C64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    Ok(a.dotc(b))
}

/// Partial trace over the field.
pub fn reduce_qubit(rho: &DensityMatrix) -> Matrix2<C64> {
    let df = rho.truncation().field_dim();
    let e = rho.entries();
    let mut out = Matrix2::zeros();
    for a in 0..2 {
        for b in 0..2 {
            let mut acc = C64::new(0.0, 0.0);
            for n in 0..df {
                acc += e[(a * df + n, b * df + n)];
            }
            out[(a, b)] = acc;
        }
    }
    out
}

/// Partial trace over the qubit.
pub fn reduce_field(rho: &DensityMatrix) -> DMatrix<C64> {
    let df = rho.truncation().field_dim();
    let e = rho.entries();
    e.view((0, 0), (df, df)) + e.view((df, df), (df, df))
}
