//! Master-equation integration on the truncated joint space.
//!
//! The Hamiltonian part of `dρ/dt = −i[H,ρ] + Σ_j (L_jρL_j† − ½{L_j†L_j,ρ})`
//! is propagated exactly through the block spectral decomposition of `H`
//! (integrating factor), and the dissipator by fourth-order Runge-Kutta in that
//! interaction picture. The multi-GHz-scale coherent rotation therefore costs
//! nothing in accuracy, and the fixed-step error is governed only by the
//! dissipative rates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::SystemParams;
use crate::hilbert::{DensityMatrix, Elementary, Truncation};
use crate::operator::{BlockUnitary, OperatorMatrix, SparseOp, Spectral};
use crate::signal::{Observable, Series, SignalRecord};
use crate::C64;

pub const DEFAULT_TRACE_TOL: f64 = 1e-6;
pub const DEFAULT_POSITIVITY_TOL: f64 = 1e-8;
pub const POSITIVITY_CHECK_EVERY: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    CavityLoss,
    QubitRelaxation,
    PureDephasing,
}

impl ChannelKind {
    pub const ALL: [ChannelKind; 3] = [ChannelKind::CavityLoss, ChannelKind::QubitRelaxation, ChannelKind::PureDephasing];

    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::CavityLoss => "cavity_loss",
            ChannelKind::QubitRelaxation => "qubit_relaxation",
            ChannelKind::PureDephasing => "pure_dephasing",
        }
    }
}

/// A dissipation channel with its rate folded into the operator:
/// `√κ a`, `√γ₁ σ⁻` or `√(γ_φ/2) iσ^z`.
///
/// With the dephasing convention the jump rate on any state is `γ_φ/2` while a
/// bare qubit coherence decays at `γ_φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpChannel {
    kind: ChannelKind,
    rate: f64,
    operator: OperatorMatrix,
    sparse: SparseOp,
    /// `L†L`, stored sparse.
    weight: SparseOp,
}

impl JumpChannel {
    pub fn new(kind: ChannelKind, rate: f64, trunc: Truncation) -> Result<Self> {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::invalid("rate", format!("{} rate must be non-negative, got {rate}", kind.name())));
        }
        let (elem, factor) = match kind {
            ChannelKind::CavityLoss => (Elementary::Annihilate, C64::new(rate.sqrt(), 0.0)),
            ChannelKind::QubitRelaxation => (Elementary::SigmaMinus, C64::new(rate.sqrt(), 0.0)),
            ChannelKind::PureDephasing => (Elementary::SigmaZ, C64::new(0.0, (rate / 2.0).sqrt())),
        };
        let m = OperatorMatrix::elementary(elem, trunc).into_entries() * factor;
        let weight = SparseOp::from_dense(&(m.adjoint() * &m));
        let sparse = SparseOp::from_dense(&m);
        let operator = OperatorMatrix::new(m, false)?;
        Ok(Self { kind, rate, operator, sparse, weight })
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn operator(&self) -> &OperatorMatrix {
        &self.operator
    }

    pub fn sparse(&self) -> &SparseOp {
        &self.sparse
    }

    /// `L†L` as a sparse operator.
    pub fn weight(&self) -> &SparseOp {
        &self.weight
    }
}

/// The three standard channels for `p`, omitting those with zero rate.
pub fn standard_channels(p: &SystemParams, trunc: Truncation) -> Vec<JumpChannel> {
    [(ChannelKind::CavityLoss, p.kappa), (ChannelKind::QubitRelaxation, p.gamma1), (ChannelKind::PureDephasing, p.gamma_phi)]
        .into_iter()
        .filter(|&(_, r)| r > 0.0)
        .map(|(k, r)| JumpChannel::new(k, r, trunc).expect("rates validated by SystemParams"))
        .collect()
}

/// `K = ½ Σ_j L_j†L_j`, the decay part of the effective Hamiltonian
/// (`H_eff = H − iK`).
pub fn decay_operator(channels: &[JumpChannel], dim: usize) -> SparseOp {
    let mut k = DMatrix::zeros(dim, dim);
    for ch in channels {
        for &(i, j, z) in ch.weight().triplets() {
            k[(i, j)] += z * 0.5;
        }
    }
    SparseOp::from_dense(&k)
}

/// Default fixed step `(2π/(g√n_max))/50`.
pub fn default_dt(g: f64, trunc: Truncation) -> f64 {
    2.0 * std::f64::consts::PI / (g * (trunc.n_max() as f64).sqrt()) / 50.0
}

/// Uniform integration grid. Observables are recorded every `stride` steps,
/// so the sample spacing is `stride · dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    t1: f64,
    dt: f64,
    stride: usize,
    n_steps: usize,
}

impl TimeGrid {
    /// Grid from `t0` to `t1` with step at most `dt` (shrunk so that `t1` is
    /// hit exactly); every step is recorded.
    pub fn new(t0: f64, t1: f64, dt: f64) -> Result<Self> {
        Self::check(t0, t1, dt)?;
        let n_steps = steps_covering(t1 - t0, dt);
        Ok(Self { t0, t1, dt: (t1 - t0) / n_steps as f64, stride: 1, n_steps })
    }

    /// Samples every `sample_dt` (rounded so the span is an integer number of
    /// samples), with `ceil(sample_dt/dt_max)` integration steps per sample.
    pub fn sampled(t0: f64, t1: f64, sample_dt: f64, dt_max: f64) -> Result<Self> {
        Self::check(t0, t1, dt_max)?;
        if !(sample_dt > 0.0) {
            return Err(Error::invalid("sample_dt", "must be positive"));
        }
        let n_samples = ((t1 - t0) / sample_dt).round().max(1.0) as usize;
        let sdt = (t1 - t0) / n_samples as f64;
        let stride = steps_covering(sdt, dt_max);
        Ok(Self { t0, t1, dt: sdt / stride as f64, stride, n_steps: n_samples * stride })
    }

    fn check(t0: f64, t1: f64, dt: f64) -> Result<()> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid("dt", "must be positive"));
        }
        if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(Error::invalid("t1", "must exceed t0"));
        }
        Ok(())
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_samples(&self) -> usize {
        self.n_steps / self.stride + 1
    }

    pub fn step_time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t1
        } else {
            self.t0 + k as f64 * self.dt
        }
    }

    pub fn sample_times(&self) -> Vec<f64> {
        (0..self.n_samples()).map(|s| self.step_time(s * self.stride)).collect()
    }
}

fn steps_covering(span: f64, dt: f64) -> usize {
    let r = span / dt;
    let n = if (r - r.round()).abs() < 1e-9 * r.max(1.0) { r.round() } else { r.ceil() };
    (n as usize).max(1)
}

fn check_dims(rho: &DensityMatrix, h: &OperatorMatrix, channels: &[JumpChannel]) -> Result<()> {
    let d = rho.truncation().dim();
    if h.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: h.dim() });
    }
    if let Some(c) = channels.iter().find(|c| c.operator().dim() != d) {
        return Err(Error::DimensionMismatch { expected: d, found: c.operator().dim() });
    }
    Ok(())
}

/// `dρ/dt` evaluated with dense matrix products.
pub fn lindblad_rhs(rho: &DensityMatrix, h: &OperatorMatrix, channels: &[JumpChannel]) -> Result<DMatrix<C64>> {
    check_dims(rho, h, channels)?;
    let r = rho.entries();
    let hm = h.entries();
    let mut out = (hm * r - r * hm) * C64::new(0.0, -1.0);
    for ch in channels {
        let l = ch.operator().entries();
        let ldl = l.adjoint() * l;
        out += l * r * l.adjoint() - (&ldl * r + r * &ldl).scale(0.5);
    }
    Ok(out)
}

/// `Tr(ρO)`.
pub fn expectation(rho: &DensityMatrix, o: &OperatorMatrix) -> Result<C64> {
    let d = rho.truncation().dim();
    if o.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: o.dim() });
    }
    let r = rho.entries();
    let m = o.entries();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..d {
        for k in 0..d {
            acc += r[(i, k)] * m[(k, i)];
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterOptions {
    pub trace_tol: f64,
    pub positivity_tol: f64,
    pub positivity_every: usize,
    /// Keep the density matrix at every sample time.
    pub keep_states: bool,
}

impl Default for MasterOptions {
    fn default() -> Self {
        Self {
            trace_tol: DEFAULT_TRACE_TOL,
            positivity_tol: DEFAULT_POSITIVITY_TOL,
            positivity_every: POSITIVITY_CHECK_EVERY,
            keep_states: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MasterRun {
    pub record: SignalRecord,
    pub max_trace_drift: f64,
    pub max_hermiticity_drift: f64,
    pub min_eigenvalue: f64,
    pub states: Vec<DensityMatrix>,
    pub final_state: DensityMatrix,
}

pub fn integrate_master(
    rho0: &DensityMatrix,
    h: &OperatorMatrix,
    channels: &[JumpChannel],
    grid: &TimeGrid,
    observables: &[Observable],
) -> Result<MasterRun> {
    integrate_master_with(rho0, h, channels, grid, observables, &MasterOptions::default())
}

/// Dissipative part of the generator, `D(ρ) = Σ LρL† − Kρ − ρK`.
struct Dissipator {
    jumps: Vec<SparseOp>,
    decay: SparseOp,
}

impl Dissipator {
    fn new(channels: &[JumpChannel], dim: usize) -> Self {
        Self { jumps: channels.iter().map(|c| c.sparse().clone()).collect(), decay: decay_operator(channels, dim) }
    }

    fn apply(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let d = rho.nrows();
        let mut out = DMatrix::zeros(d, d);
        for l in &self.jumps {
            l.add_sandwich(rho, &mut out);
        }
        self.decay.add_left_right(rho, &mut out, -1.0);
        out
    }
}

/// One integrating-factor RK4 step for `dρ/dt = −i[H,ρ] + D(ρ)`.
struct MasterStepper {
    half: BlockUnitary,
    diss: Dissipator,
    dt: f64,
}

impl MasterStepper {
    fn step(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let h = self.dt;
        let e = |x: &DMatrix<C64>| self.half.conjugate(x);
        let k1 = self.diss.apply(rho);
        let x = e(rho);
        let k2 = self.diss.apply(&e(&(rho + &k1 * C64::new(h / 2.0, 0.0))));
        let k3 = self.diss.apply(&(&x + &k2 * C64::new(h / 2.0, 0.0)));
        let full_rho = e(&x);
        let k4 = self.diss.apply(&(&full_rho + e(&k3) * C64::new(h, 0.0)));
        let a = e(&e(&(rho + &k1 * C64::new(h / 6.0, 0.0))));
        let b = e(&(&k2 + &k3)) * C64::new(h / 3.0, 0.0);
        a + b + k4 * C64::new(h / 6.0, 0.0)
    }
}

pub fn integrate_master_with(
    rho0: &DensityMatrix,
    h: &OperatorMatrix,
    channels: &[JumpChannel],
    grid: &TimeGrid,
    observables: &[Observable],
    opts: &MasterOptions,
) -> Result<MasterRun> {
    check_dims(rho0, h, channels)?;
    let trunc = rho0.truncation();
    let d = trunc.dim();
    let spectral = Spectral::new(h)?;
    let stepper = MasterStepper { half: spectral.propagator(grid.dt() / 2.0), diss: Dissipator::new(channels, d), dt: grid.dt() };
    let diags: Vec<Vec<f64>> = observables.iter().map(|o| o.diagonal(trunc)).collect();
    let n_samples = grid.n_samples();
    let mut means: Vec<Vec<f64>> = vec![Vec::with_capacity(n_samples); observables.len()];
    let mut states = Vec::new();

    let tr0 = rho0.trace().re;
    let mut rho = rho0.entries().clone();
    let mut max_trace_drift = 0.0f64;
    let mut max_herm = 0.0f64;
    let mut min_eig = rho0.min_eigenvalue();

    let mut record = |rho: &DMatrix<C64>, states: &mut Vec<DensityMatrix>| {
        for (m, diag) in means.iter_mut().zip(&diags) {
            m.push(diag.iter().enumerate().map(|(i, w)| w * rho[(i, i)].re).sum());
        }
        if opts.keep_states {
            states.push(DensityMatrix::from_entries(rho.clone(), trunc).expect("dimension fixed"));
        }
    };
    record(&rho, &mut states);

    for k in 1..=grid.n_steps() {
        rho = stepper.step(&rho);
        let t = grid.step_time(k);
        let tr = rho.trace();
        let drift = (tr.re - tr0).abs().max(tr.im.abs());
        max_trace_drift = max_trace_drift.max(drift);
        if !drift.is_finite() || drift > opts.trace_tol {
            return Err(Error::StepUnstable { time: t, reason: format!("trace drift {drift:.3e} exceeds {:.1e}", opts.trace_tol) });
        }
        if opts.positivity_every > 0 && k % opts.positivity_every == 0 {
            let snapshot = DensityMatrix::from_entries(rho.clone(), trunc)?;
            max_herm = max_herm.max(snapshot.hermiticity_error());
            let ev = snapshot.min_eigenvalue();
            min_eig = min_eig.min(ev);
            if ev < -opts.positivity_tol {
                return Err(Error::StepUnstable { time: t, reason: format!("density matrix lost positivity (eigenvalue {ev:.3e})") });
            }
        }
        if k % grid.stride() == 0 {
            record(&rho, &mut states);
        }
    }
    let final_state = DensityMatrix::from_entries(rho, trunc)?;
    max_herm = max_herm.max(final_state.hermiticity_error());
    let record = SignalRecord {
        times: grid.sample_times(),
        series: observables
            .iter()
            .zip(means)
            .map(|(&o, mean)| Series { observable: o, stderr: vec![0.0; mean.len()], mean })
            .collect(),
        n_traj: 1,
        jump_counts: Vec::new(),
    };
    Ok(MasterRun { record, max_trace_drift, max_hermiticity_drift: max_herm, min_eigenvalue: min_eig, states, final_state })
}
