//! Quantum-jump (Monte-Carlo wave function) trajectories.
//!
//! Between jumps the unnormalized state obeys `dψ/dt = −iH_eff ψ` with
//! `H_eff = H − iK`. The Hermitian part is applied exactly through its block
//! spectral propagator `P(s) = e^{−iHs}`; the decay `−Kψ` is integrated by a
//! fourth-order Adams-Bashforth scheme in that interaction picture (Lawson
//! form), bootstrapped and restarted after every discontinuity with Runge-Kutta
//! steps of the same kind.
//!
//! Each trajectory draws its random numbers from a ChaCha8 stream selected by
//! its index, so a trajectory depends only on `(seed, traj_index)`. Ensembles
//! are reduced in fixed-size chunks combined in index order; the result does
//! not depend on the number of worker threads.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hamiltonian::{effective_nonhermitian, jaynes_cummings, Frame, SystemParams};
use crate::hilbert::{JointState, Truncation};
use crate::lindblad::{standard_channels, ChannelKind, JumpChannel, TimeGrid};
use crate::operator::{BlockUnitary, OperatorMatrix, SparseOp, Spectral};
use crate::signal::{Observable, Series, SignalRecord};
use crate::C64;

pub const DEFAULT_MAX_JUMPS: usize = 1_000_000;
/// Relative norm growth tolerated in one no-jump step.
pub const NORM_GROWTH_TOL: f64 = 1e-8;
/// Jump-time resolution relative to the step.
pub const JUMP_TIME_TOL: f64 = 1e-6;
/// Below this `⟨L†L⟩` a jump is considered impossible.
pub const NULL_JUMP_TOL: f64 = 1e-30;
/// Trajectories per reduction chunk.
pub const CHUNK: u64 = 64;

/// Observables recorded along every trajectory, in this order.
pub const RECORDED: [Observable; 3] = [Observable::SigmaZ, Observable::PPlus, Observable::PhotonNumber];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Free,
    Echo,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Protocol {
    pub kind: ProtocolKind,
    pub t_pi: Option<f64>,
    pub t_end: f64,
    pub sample_dt: f64,
}

impl Protocol {
    pub fn free(t_end: f64, sample_dt: f64) -> Self {
        Self { kind: ProtocolKind::Free, t_pi: None, t_end, sample_dt }
    }

    pub fn echo(t_pi: f64, t_end: f64, sample_dt: f64) -> Self {
        Self { kind: ProtocolKind::Echo, t_pi: Some(t_pi), t_end, sample_dt }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::invalid("t_end", "must be positive"));
        }
        if !(self.sample_dt > 0.0) {
            return Err(Error::invalid("sample_dt", "must be positive"));
        }
        match (self.kind, self.t_pi) {
            (ProtocolKind::Free, None) => Ok(()),
            (ProtocolKind::Free, Some(_)) => Err(Error::invalid("t_pi", "only meaningful for the echo protocol")),
            (ProtocolKind::Echo, None) => Err(Error::invalid("t_pi", "required for the echo protocol")),
            (ProtocolKind::Echo, Some(tp)) if !(tp > 0.0 && tp < self.t_end) => {
                Err(Error::invalid("t_pi", format!("must satisfy 0 < t_pi < t_end, got {tp}")))
            }
            _ => Ok(()),
        }
    }

    pub fn pulse_time(&self) -> Option<f64> {
        match self.kind {
            ProtocolKind::Echo => self.t_pi,
            ProtocolKind::Free => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    AdamsBashforth4,
    RungeKutta4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryConfig {
    pub seed: u64,
    pub n_traj: u64,
    pub params: SystemParams,
    pub trunc: Truncation,
    pub initial: JointState,
    pub protocol: Protocol,
    /// Maximum integration step; shrunk to divide the sample interval.
    pub dt: f64,
    pub integrator: Integrator,
    pub frame: Frame,
    pub max_jumps: usize,
}

impl TrajectoryConfig {
    pub fn new(seed: u64, n_traj: u64, params: SystemParams, trunc: Truncation, initial: JointState, protocol: Protocol) -> Self {
        Self {
            seed,
            n_traj,
            params,
            trunc,
            initial,
            protocol,
            dt: crate::lindblad::default_dt(params.g, trunc),
            integrator: Integrator::default(),
            frame: Frame::Rotating,
            max_jumps: DEFAULT_MAX_JUMPS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.protocol.validate()?;
        if self.n_traj < 1 {
            return Err(Error::invalid("n_traj", "at least one trajectory is required"));
        }
        if self.initial.truncation() != self.trunc {
            return Err(Error::DimensionMismatch { expected: self.trunc.dim(), found: self.initial.truncation().dim() });
        }
        if !(self.initial.norm_sqr() > 0.0) {
            return Err(Error::invalid("initial", "state has zero norm"));
        }
        if !(self.dt > 0.0) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::sampled(0.0, self.protocol.t_end, self.protocol.sample_dt, self.dt)
    }
}

/// Past decay derivatives `f_k = −Kψ_k` at the most recent grid points
/// (newest first).
#[derive(Debug, Clone, Default)]
pub struct History {
    f: Vec<DVector<C64>>,
}

impl History {
    pub fn len(&self) -> usize {
        self.f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f.is_empty()
    }

    pub fn clear(&mut self) {
        self.f.clear();
    }

    fn push(&mut self, f: DVector<C64>) {
        self.f.insert(0, f);
        self.f.truncate(4);
    }
}

/// Fixed-step propagator for the no-jump evolution.
#[derive(Debug, Clone)]
pub struct NoJumpPropagator {
    spectral: Spectral,
    /// `K`, where `H_eff = H − iK`.
    decay: SparseOp,
    dt: f64,
    /// `P(dt/2), P(dt), P(2dt), P(3dt), P(4dt)`.
    p: [BlockUnitary; 5],
    integrator: Integrator,
}

impl NoJumpPropagator {
    pub fn new(h_eff: &OperatorMatrix, dt: f64, integrator: Integrator) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        let h = h_eff.hermitian_part();
        let k = h_eff.antihermitian_part().scaled(-1.0);
        let spectral = Spectral::new(&h)?;
        let p = [0.5, 1.0, 2.0, 3.0, 4.0].map(|m| spectral.propagator(m * dt));
        Ok(Self { spectral, decay: k.to_sparse(), dt, p, integrator })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn deriv(&self, v: &DVector<C64>) -> DVector<C64> {
        let mut out = self.decay.apply(v);
        out.neg_mut();
        out
    }

    fn has_decay(&self) -> bool {
        self.decay.nnz() > 0
    }

    /// One Lawson-RK4 step of length `s` using the given `P(s/2)`, `P(s)`.
    fn rk4_with(&self, psi: &DVector<C64>, s: f64, half: &BlockUnitary, full: &BlockUnitary) -> DVector<C64> {
        if !self.has_decay() {
            return full.apply(psi);
        }
        let c = |x: f64| C64::new(x, 0.0);
        let k1 = self.deriv(psi);
        let k2 = self.deriv(&half.apply(&(psi + &k1 * c(s / 2.0))));
        let x = half.apply(psi);
        let k3 = self.deriv(&(&x + &k2 * c(s / 2.0)));
        let k4 = self.deriv(&(full.apply(psi) + half.apply(&k3) * c(s)));
        full.apply(&(psi + &k1 * c(s / 6.0))) + half.apply(&(k2 + k3)) * c(s / 3.0) + k4 * c(s / 6.0)
    }

    /// A single Runge-Kutta step of arbitrary length `s` (history untouched).
    pub fn partial(&self, psi: &DVector<C64>, s: f64) -> DVector<C64> {
        if s == self.dt {
            return self.rk4_with(psi, s, &self.p[0], &self.p[1]);
        }
        let half = self.spectral.propagator(s / 2.0);
        let full = self.spectral.propagator(s);
        self.rk4_with(psi, s, &half, &full)
    }

    /// Advances `psi` by one full step without committing history.
    fn candidate(&self, psi: &DVector<C64>, history: &History) -> (DVector<C64>, Option<DVector<C64>>) {
        if !self.has_decay() {
            return (self.p[1].apply(psi), None);
        }
        let f_now = self.deriv(psi);
        if self.integrator == Integrator::RungeKutta4 || history.len() < 3 {
            return (self.rk4_with(psi, self.dt, &self.p[0], &self.p[1]), Some(f_now));
        }
        let h = self.dt;
        let f = &history.f;
        let mut out = self.p[1].apply(psi);
        let inc = self.p[1].apply(&f_now) * C64::new(55.0, 0.0) - self.p[2].apply(&f[0]) * C64::new(59.0, 0.0)
            + self.p[3].apply(&f[1]) * C64::new(37.0, 0.0)
            - self.p[4].apply(&f[2]) * C64::new(9.0, 0.0);
        out += inc * C64::new(h / 24.0, 0.0);
        (out, Some(f_now))
    }

    /// One step of `dψ/dt = −iH_eff ψ`; the history is updated in place.
    pub fn evolve_no_jump(&self, psi: &DVector<C64>, history: &mut History, time: f64) -> Result<DVector<C64>> {
        let (next, f_now) = self.candidate(psi, history);
        check_growth(psi.norm_squared(), next.norm_squared(), time)?;
        if let Some(f) = f_now {
            history.push(f);
        }
        Ok(next)
    }
}

fn check_growth(before: f64, after: f64, time: f64) -> Result<()> {
    if !after.is_finite() || after > before * (1.0 + NORM_GROWTH_TOL) {
        return Err(Error::StepUnstable { time, reason: format!("norm grew from {before:.12e} to {after:.12e}") });
    }
    Ok(())
}

/// Post-jump state `L|ψ⟩/‖L|ψ⟩‖`.
pub fn apply_jump(psi: &JointState, channel: &JumpChannel) -> Result<JointState> {
    let v = psi.amplitudes();
    let w = channel.weight().expectation(v).re / v.norm_squared();
    if !(w >= NULL_JUMP_TOL) {
        return Err(Error::NullJump { channel: channel.kind() as usize });
    }
    let out = channel.sparse().apply(v);
    let n = out.norm();
    JointState::from_amplitudes(out.unscale(n), psi.truncation())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub kind: ChannelKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// `values[k][i]`: observable `RECORDED[k]` at `times[i]`.
    pub values: [Vec<f64>; 3],
    pub jumps: Vec<JumpEvent>,
}

/// Everything a trajectory needs, precomputed once per configuration.
pub struct Simulator {
    cfg: TrajectoryConfig,
    grid: TimeGrid,
    prop: NoJumpPropagator,
    channels: Vec<JumpChannel>,
    diags: [Vec<f64>; 3],
    sigma_z: SparseOp,
}

impl Simulator {
    pub fn new(cfg: &TrajectoryConfig) -> Result<Self> {
        let channels = standard_channels(&cfg.params, cfg.trunc);
        let h = jaynes_cummings(&cfg.params, cfg.trunc, cfg.frame);
        Self::with_hamiltonian(cfg, &h, channels)
    }

    /// Uses an arbitrary Hermitian Hamiltonian and channel set.
    pub fn with_hamiltonian(cfg: &TrajectoryConfig, h: &OperatorMatrix, channels: Vec<JumpChannel>) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid()?;
        let h_eff = effective_nonhermitian(h, &channels)?;
        let prop = NoJumpPropagator::new(&h_eff, grid.dt(), cfg.integrator)?;
        let diags = RECORDED.map(|o| o.diagonal(cfg.trunc));
        let sigma_z = OperatorMatrix::elementary(crate::hilbert::Elementary::SigmaZ, cfg.trunc).to_sparse();
        Ok(Self { cfg: cfg.clone(), grid, prop, channels, diags, sigma_z })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn config(&self) -> &TrajectoryConfig {
        &self.cfg
    }

    pub fn channels(&self) -> &[JumpChannel] {
        &self.channels
    }

    fn rng(&self, traj_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(traj_index);
        rng
    }

    fn record(&self, psi: &DVector<C64>, values: &mut [Vec<f64>; 3]) {
        for (k, d) in self.diags.iter().enumerate() {
            values[k].push(Observable::expect_diag(d, psi));
        }
    }

    pub fn sample(&self, traj_index: u64) -> Result<Trajectory> {
        self.run(traj_index).map_err(|e| Error::Trajectory { traj_index, seed: self.cfg.seed, source: Box::new(e) })
    }

    fn run(&self, traj_index: u64) -> Result<Trajectory> {
        let mut rng = self.rng(traj_index);
        let mut state = RunState {
            psi: self.cfg.initial.amplitudes().unscale(self.cfg.initial.norm_sqr().sqrt()),
            threshold: draw_threshold(&mut rng),
            rng,
            jumps: Vec::new(),
        };
        let mut history = History::default();
        let mut values: [Vec<f64>; 3] = Default::default();
        self.record(&state.psi, &mut values);

        let pulse = self.cfg.protocol.pulse_time();
        let dt = self.grid.dt();
        for k in 0..self.grid.n_steps() {
            let t0 = self.grid.step_time(k);
            let t1 = self.grid.step_time(k + 1);
            match pulse {
                Some(tp) if tp > t0 + 1e-12 * dt && tp < t1 - 1e-12 * dt => {
                    self.advance_partial(&mut state, t0, tp - t0)?;
                    self.pulse(&mut state);
                    self.advance_partial(&mut state, tp, t1 - tp)?;
                    history.clear();
                }
                _ => {
                    self.advance_step(&mut state, &mut history, t0)?;
                    if matches!(pulse, Some(tp) if (tp - t1).abs() <= 1e-12 * dt) {
                        self.pulse(&mut state);
                        history.clear();
                    }
                }
            }
            if (k + 1) % self.grid.stride() == 0 {
                self.record(&state.psi, &mut values);
            }
        }
        Ok(Trajectory { times: self.grid.sample_times(), values, jumps: state.jumps })
    }

    fn pulse(&self, state: &mut RunState) {
        state.psi = self.sigma_z.apply(&state.psi);
    }

    /// One grid step: multistep when no jump happens, otherwise the step is
    /// redone with located jumps and the history restarts.
    fn advance_step(&self, state: &mut RunState, history: &mut History, t0: f64) -> Result<()> {
        let before = state.psi.norm_squared();
        let (next, f_now) = self.prop.candidate(&state.psi, history);
        check_growth(before, next.norm_squared(), t0)?;
        if next.norm_squared() > state.threshold {
            if let Some(f) = f_now {
                history.push(f);
            }
            state.psi = next;
            return Ok(());
        }
        history.clear();
        self.advance_partial(state, t0, self.grid.dt())
    }

    /// Advances by `span` with single-step Runge-Kutta, resolving every jump
    /// inside the interval by bisection on `‖ψ‖² − r`.
    fn advance_partial(&self, state: &mut RunState, t_start: f64, span: f64) -> Result<()> {
        let mut t = t_start;
        let mut remaining = span;
        let tol = JUMP_TIME_TOL * self.grid.dt();
        while remaining > 0.0 {
            let before = state.psi.norm_squared();
            let end = self.prop.partial(&state.psi, remaining);
            check_growth(before, end.norm_squared(), t)?;
            if end.norm_squared() > state.threshold {
                state.psi = end;
                return Ok(());
            }
            let (mut lo, mut hi) = (0.0, remaining);
            let mut at_hi = end;
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                let trial = self.prop.partial(&state.psi, mid);
                if trial.norm_squared() > state.threshold {
                    lo = mid;
                } else {
                    hi = mid;
                    at_hi = trial;
                }
            }
            t += hi;
            remaining -= hi;
            if remaining < tol {
                remaining = 0.0;
            }
            state.psi = at_hi;
            self.jump(state, t)?;
        }
        Ok(())
    }

    fn jump(&self, state: &mut RunState, t: f64) -> Result<()> {
        if state.jumps.len() >= self.cfg.max_jumps {
            return Err(Error::MaxJumpsExceeded { limit: self.cfg.max_jumps });
        }
        let weights: Vec<f64> = self.channels.iter().map(|c| c.weight().expectation(&state.psi).re.max(0.0)).collect();
        let total: f64 = weights.iter().sum();
        if !(total >= NULL_JUMP_TOL * state.psi.norm_squared()) {
            return Err(Error::NullJump { channel: 0 });
        }
        let u: f64 = state.rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = weights.len() - 1;
        for (j, w) in weights.iter().enumerate() {
            acc += w;
            if u < acc && *w > 0.0 {
                pick = j;
                break;
            }
        }
        let ch = &self.channels[pick];
        if weights[pick] < NULL_JUMP_TOL * state.psi.norm_squared() {
            return Err(Error::NullJump { channel: pick });
        }
        let out = ch.sparse().apply(&state.psi);
        state.psi = out.unscale(out.norm());
        state.jumps.push(JumpEvent { time: t, kind: ch.kind() });
        state.threshold = draw_threshold(&mut state.rng);
        Ok(())
    }
}

struct RunState {
    psi: DVector<C64>,
    threshold: f64,
    rng: ChaCha8Rng,
    jumps: Vec<JumpEvent>,
}

/// `r ∈ (0, 1]`.
fn draw_threshold(rng: &mut ChaCha8Rng) -> f64 {
    1.0 - rng.random::<f64>()
}

pub fn sample_trajectory(cfg: &TrajectoryConfig, traj_index: u64) -> Result<Trajectory> {
    Simulator::new(cfg)?.sample(traj_index)
}

/// Streaming mean / sum of squared deviations (Welford) per sample time.
#[derive(Debug, Clone)]
struct Accumulator {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    jumps: [u64; 3],
}

impl Accumulator {
    fn new(len: usize) -> Self {
        Self { count: 0, mean: vec![0.0; len], m2: vec![0.0; len], jumps: [0; 3] }
    }

    fn push(&mut self, traj: &Trajectory) {
        self.count += 1;
        let n = self.count as f64;
        let row = traj.values.iter().flatten();
        for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(row) {
            let delta = x - *m;
            *m += delta / n;
            *s += delta * (x - *m);
        }
        for j in &traj.jumps {
            self.jumps[j.kind as usize] += 1;
        }
    }

    fn merge(&mut self, other: &Accumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.count += other.count;
        for k in 0..3 {
            self.jumps[k] += other.jumps[k];
        }
    }
}

/// Average of `n_traj` trajectories. Runs on the current rayon pool.
pub fn ensemble_average(cfg: &TrajectoryConfig) -> Result<SignalRecord> {
    let sim = Simulator::new(cfg)?;
    sim.ensemble()
}

impl Simulator {
    pub fn ensemble(&self) -> Result<SignalRecord> {
        let n = self.cfg.n_traj;
        let n_samples = self.grid.n_samples();
        let len = RECORDED.len() * n_samples;
        let n_chunks = n.div_ceil(CHUNK);
        let partials: Vec<Result<Accumulator>> = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut acc = Accumulator::new(len);
                for idx in c * CHUNK..((c + 1) * CHUNK).min(n) {
                    acc.push(&self.sample(idx)?);
                }
                Ok(acc)
            })
            .collect();
        let mut total = Accumulator::new(len);
        for p in partials {
            total.merge(&p?);
        }
        let count = total.count as f64;
        let series = RECORDED
            .iter()
            .enumerate()
            .map(|(k, &o)| {
                let range = k * n_samples..(k + 1) * n_samples;
                let mean = total.mean[range.clone()].to_vec();
                let stderr = total.m2[range]
                    .iter()
                    .map(|&s| if total.count > 1 { (s.max(0.0) / (count - 1.0) / count).sqrt() } else { 0.0 })
                    .collect();
                Series { observable: o, mean, stderr }
            })
            .collect();
        let present: Vec<ChannelKind> = self.channels.iter().map(|c| c.kind()).collect();
        let jump_counts = ChannelKind::ALL
            .iter()
            .filter(|k| present.contains(k))
            .map(|&k| (k, total.jumps[k as usize]))
            .collect();
        Ok(SignalRecord { times: self.grid.sample_times(), series, n_traj: n, jump_counts })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{coherent_state_with, gea_banacloche_state_with, GBParams, Sign, StateOptions, EXCITED, GROUND};
    use std::f64::consts::PI;

    fn excited_coherent(nbar: f64, trunc: Truncation) -> JointState {
        // small test truncations: accept whatever tail is cut off
        let opts = StateOptions { leak_tol: 1.0, occupation_guard: false };
        let f = coherent_state_with(C64::new(nbar.sqrt(), 0.0), trunc, &opts).unwrap();
        JointState::product([C64::new(1.0, 0.0), C64::new(0.0, 0.0)], &f.amplitudes, trunc).unwrap()
    }

    #[test]
    fn protocol_validation() {
        assert!(Protocol::free(1.0, 0.1).validate().is_ok());
        assert!(Protocol::echo(0.5, 1.0, 0.1).validate().is_ok());
        assert!(Protocol::echo(1.5, 1.0, 0.1).validate().is_err());
        assert!(Protocol { t_pi: None, ..Protocol::echo(0.5, 1.0, 0.1) }.validate().is_err());
    }

    #[test]
    fn hermitian_evolution_preserves_norm() {
        let t = Truncation::new(6).unwrap();
        let p = SystemParams::resonant(1.0, 0.0, 0.0, 0.0, 2.0);
        let h = jaynes_cummings(&p, t, Frame::Rotating);
        let prop = NoJumpPropagator::new(&h, 0.05, Integrator::AdamsBashforth4).unwrap();
        let mut psi = excited_coherent(2.0, t).into_amplitudes();
        let mut hist = History::default();
        for k in 0..200 {
            psi = prop.evolve_no_jump(&psi, &mut hist, k as f64 * 0.05).unwrap();
        }
        assert!((psi.norm_squared() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn dephasing_norm_decay() {
        let t = Truncation::new(6).unwrap();
        let p = SystemParams::resonant(1.0, 0.0, 0.0, 0.4, 2.0);
        let h_eff = effective_nonhermitian(&jaynes_cummings(&p, t, Frame::Rotating), &standard_channels(&p, t)).unwrap();
        for integ in [Integrator::AdamsBashforth4, Integrator::RungeKutta4] {
            let prop = NoJumpPropagator::new(&h_eff, 0.05, integ).unwrap();
            let mut psi = excited_coherent(2.0, t).into_amplitudes();
            let mut hist = History::default();
            for k in 1..=200 {
                psi = prop.evolve_no_jump(&psi, &mut hist, 0.0).unwrap();
                let expected = (-p.gamma_phi * k as f64 * 0.05 / 2.0).exp();
                assert!((psi.norm_squared() - expected).abs() < 1e-9, "{integ:?} step {k}");
            }
        }
    }

    #[test]
    fn cavity_norm_decay_on_fock_state() {
        let t = Truncation::new(6).unwrap();
        let kappa = 0.3;
        let ch = JumpChannel::new(ChannelKind::CavityLoss, kappa, t).unwrap();
        let h_eff = effective_nonhermitian(&OperatorMatrix::zeros(t.dim()), &[ch]).unwrap();
        let prop = NoJumpPropagator::new(&h_eff, 0.02, Integrator::AdamsBashforth4).unwrap();
        let mut psi = JointState::basis(t, GROUND, 4).into_amplitudes();
        let mut hist = History::default();
        for k in 1..=250 {
            psi = prop.evolve_no_jump(&psi, &mut hist, 0.0).unwrap();
            let expected = (-kappa * 4.0 * k as f64 * 0.02).exp();
            assert!((psi.norm_squared() - expected).abs() < 1e-7 * expected, "k={k} {} {expected}", psi.norm_squared());
        }
    }

    #[test]
    fn jump_actions() {
        let t = Truncation::new(4).unwrap();
        let relax = JumpChannel::new(ChannelKind::QubitRelaxation, 0.5, t).unwrap();
        let out = apply_jump(&JointState::basis(t, EXCITED, 2), &relax).unwrap();
        assert!((out.amplitudes() - JointState::basis(t, GROUND, 2).amplitudes()).norm() < 1e-15);
        assert!(matches!(apply_jump(&JointState::basis(t, GROUND, 2), &relax), Err(Error::NullJump { .. })));

        let r2 = std::f64::consts::FRAC_1_SQRT_2;
        let field = coherent_state_with(C64::new(0.8, 0.0), t, &StateOptions { leak_tol: 1e-3, occupation_guard: true }).unwrap();
        let s = JointState::product([C64::new(r2, 0.0), C64::new(r2, 0.0)], &field.amplitudes, t).unwrap();
        let deph = JumpChannel::new(ChannelKind::PureDephasing, 0.5, t).unwrap();
        let out = apply_jump(&s, &deph).unwrap();
        let expected = JointState::product([C64::new(r2, 0.0), C64::new(-r2, 0.0)], &field.amplitudes, t).unwrap();
        assert!((out.fidelity(&expected).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn relaxation_jump_on_gb_state() {
        // σ⁻|Ψ_+(θ)⟩ ∝ (|Ψ_+(θ)⟩ − |Ψ_−(−θ)⟩)/√2 in the mesoscopic limit; the
        // residual infidelity is the (1/8n̄)-order photon-number spread.
        let nbar = 10.0;
        let t = Truncation::for_mean_photons(nbar);
        let opts = StateOptions::simulation();
        let p = GBParams::new(Sign::Plus, 1.0, nbar).unwrap();
        let psi = gea_banacloche_state_with(&p, t, &opts).unwrap();
        let relax = JumpChannel::new(ChannelKind::QubitRelaxation, 1.0, t).unwrap();
        let out = apply_jump(&psi, &relax).unwrap();
        let a = gea_banacloche_state_with(&p, t, &opts).unwrap();
        let b = gea_banacloche_state_with(&GBParams { sign: Sign::Minus, theta: -1.0, nbar }, t, &opts).unwrap();
        let target = JointState::from_amplitudes(a.amplitudes() - b.amplitudes(), t).unwrap();
        let f = out.fidelity(&target).unwrap();
        assert!(f > 0.97, "fidelity {f}");
    }

    #[test]
    fn dissipationless_trajectory_is_exact() {
        let nbar = 3.0;
        let t = Truncation::for_mean_photons(nbar);
        let p = SystemParams::resonant(1.0, 0.0, 0.0, 0.0, nbar);
        let cfg = TrajectoryConfig::new(1, 1, p, t, excited_coherent(nbar, t), Protocol::free(20.0, 0.5));
        let traj = sample_trajectory(&cfg, 0).unwrap();
        assert!(traj.jumps.is_empty());
        let spec = Spectral::new(&jaynes_cummings(&p, t, Frame::Rotating)).unwrap();
        for (i, &tt) in traj.times.iter().enumerate() {
            let psi = spec.propagator(tt).apply(cfg.initial.amplitudes());
            let pe = Observable::expect_diag(&Observable::PPlus.diagonal(t), &psi);
            assert!((traj.values[1][i] - pe).abs() < 1e-12);
        }
    }

    #[test]
    fn trajectories_are_reproducible() {
        let t = Truncation::new(6).unwrap();
        let p = SystemParams::resonant(1.0, 0.1, 0.1, 0.1, 2.0);
        let cfg = TrajectoryConfig::new(7, 4, p, t, excited_coherent(1.0, t), Protocol::echo(3.0, 8.0, 0.25));
        let sim = Simulator::new(&cfg).unwrap();
        let a = sim.sample(3).unwrap();
        let b = sim.sample(3).unwrap();
        assert_eq!(a, b);
        assert_ne!(sim.sample(2).unwrap().jumps, a.jumps);
    }

    #[test]
    fn single_trajectory_ensemble_has_zero_stderr() {
        let t = Truncation::new(5).unwrap();
        let p = SystemParams::resonant(1.0, 0.1, 0.1, 0.1, 1.0);
        let cfg = TrajectoryConfig::new(3, 1, p, t, excited_coherent(1.0, t), Protocol::free(5.0, 0.5));
        let rec = ensemble_average(&cfg).unwrap();
        let traj = sample_trajectory(&cfg, 0).unwrap();
        assert!(rec.is_consistent());
        assert!(rec.stderr(Observable::SigmaZ).unwrap().iter().all(|&e| e == 0.0));
        assert_eq!(rec.mean(Observable::SigmaZ).unwrap(), traj.values[0].as_slice());
    }

    #[test]
    fn echo_exactly_on_grid_point() {
        // two identical runs with the pulse on/off the grid give continuous results
        let t = Truncation::new(6).unwrap();
        let p = SystemParams::resonant(1.0, 0.0, 0.0, 0.0, 2.0);
        let init = excited_coherent(2.0, t);
        let on = TrajectoryConfig::new(1, 1, p, t, init.clone(), Protocol::echo(2.0, 6.0, 0.5));
        let off = TrajectoryConfig::new(1, 1, p, t, init, Protocol::echo(2.0 + 1e-9, 6.0, 0.5));
        let a = sample_trajectory(&on, 0).unwrap();
        let b = sample_trajectory(&off, 0).unwrap();
        for (x, y) in a.values[0].iter().zip(&b.values[0]) {
            assert!((x - y).abs() < 1e-7);
        }
        // σ^z echo on a dissipationless JC state: P(+) at 2t_π returns to 1
        let last = a.times.iter().position(|&tt| (tt - 4.0).abs() < 1e-12).unwrap();
        assert!((a.values[1][last] - 1.0).abs() < 1e-10, "{}", a.values[1][last]);
        let _ = PI;
    }

    #[test]
    fn accumulator_merge_matches_sequential() {
        let mk = |x: f64| Trajectory { times: vec![0.0], values: [vec![x], vec![x * x], vec![1.0]], jumps: vec![] };
        let xs = [0.3, -1.2, 2.5, 0.7, 0.1, -0.4];
        let mut seq = Accumulator::new(3);
        xs.iter().for_each(|&x| seq.push(&mk(x)));
        let mut a = Accumulator::new(3);
        let mut b = Accumulator::new(3);
        xs[..2].iter().for_each(|&x| a.push(&mk(x)));
        xs[2..].iter().for_each(|&x| b.push(&mk(x)));
        a.merge(&b);
        for i in 0..3 {
            assert!((a.mean[i] - seq.mean[i]).abs() < 1e-14);
            assert!((a.m2[i] - seq.m2[i]).abs() < 1e-13);
        }
    }
}
