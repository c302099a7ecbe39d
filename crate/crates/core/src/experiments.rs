//! Protocol drivers: free evolution and echo runs compared against the
//! master equation and the analytic envelopes, contour sweeps of the
//! decoherence coefficient, and the standard parameter presets.
//!
//! All time arguments here are in units of the vacuum Rabi period
//! `t_R = 2π/g`.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::analytic::{contrast_coefficient, rabi_signal};
use crate::error::{Error, Result};
use crate::hamiltonian::{jaynes_cummings, Frame, SystemParams};
use crate::hilbert::{coherent_state_with, DensityMatrix, JointState, StateOptions, Truncation};
use crate::lindblad::{default_dt, integrate_master, standard_channels};
use crate::mcwf::{ensemble_average, Protocol, ProtocolKind, TrajectoryConfig, RECORDED};
use crate::signal::{Observable, SignalRecord};
use crate::C64;

/// Default coupling, `g/2π = 100 MHz`, in rad/s. Outputs are in `t/t_R`, so
/// the choice only shows up in metadata.
pub const DEFAULT_G: f64 = 2.0 * PI * 100e6;
/// Joint-space size above which the master-equation oracle is skipped unless
/// forced.
pub const ORACLE_MAX_NMAX: usize = 64;
pub const DEFAULT_N_TRAJ: u64 = 2000;
/// Sampling interval in units of `t_R`.
pub const DEFAULT_SAMPLE_DT: f64 = 0.01;
/// z-score bound used for the oracle agreement fraction.
pub const Z_BOUND: f64 = 5.0;
/// Absolute slack added to `Z_BOUND · stderr` (covers points where every
/// trajectory agrees and the standard error vanishes).
pub const Z_SLACK: f64 = 1e-9;

/// Coupling-to-rate ratio `g/γ`; infinity means the rate vanishes.
///
/// Serialized as a number, or as the string `"inf"` for infinity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RatioRepr", into = "RatioRepr")]
pub struct Ratio(f64);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RatioRepr {
    Number(f64),
    Text(String),
}

impl Ratio {
    pub const INFINITE: Ratio = Ratio(f64::INFINITY);

    pub fn new(value: f64) -> Result<Self> {
        if value > 0.0 {
            Ok(Self(value))
        } else {
            Err(Error::invalid("ratio", format!("must be positive or infinite, got {value}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// The absolute rate `g / ratio`.
    pub fn rate(self, g: f64) -> f64 {
        if self.is_infinite() {
            0.0
        } else {
            g / self.0
        }
    }
}

impl TryFrom<RatioRepr> for Ratio {
    type Error = String;

    fn try_from(r: RatioRepr) -> std::result::Result<Self, String> {
        let v = match r {
            RatioRepr::Number(v) => v,
            RatioRepr::Text(s) if matches!(s.to_ascii_lowercase().as_str(), "inf" | "infinity" | "∞") => f64::INFINITY,
            RatioRepr::Text(s) => s.parse::<f64>().map_err(|_| format!("ratio must be a number or \"inf\", got {s:?}"))?,
        };
        Ratio::new(v).map_err(|e| e.to_string())
    }
}

impl From<Ratio> for RatioRepr {
    fn from(r: Ratio) -> Self {
        if r.is_infinite() {
            RatioRepr::Text("inf".into())
        } else {
            RatioRepr::Number(r.0)
        }
    }
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterPreset {
    pub name: String,
    pub g_over_kappa: Ratio,
    pub g_over_gamma1: Ratio,
    pub g_over_gamma_phi: Ratio,
    #[serde(default)]
    pub note: String,
}

impl ParameterPreset {
    pub fn new(name: impl Into<String>, g_over_kappa: f64, g_over_gamma1: f64, g_over_gamma_phi: f64, note: impl Into<String>) -> Result<Self> {
        Ok(Self {
            name: name.into(),
            g_over_kappa: Ratio::new(g_over_kappa)?,
            g_over_gamma1: Ratio::new(g_over_gamma1)?,
            g_over_gamma_phi: Ratio::new(g_over_gamma_phi)?,
            note: note.into(),
        })
    }

    /// Looks a preset up by name, listing the valid names on failure.
    pub fn by_name(name: &str) -> Result<Self> {
        let table = preset_table();
        table.iter().find(|p| p.name == name).cloned().ok_or_else(|| {
            let names: Vec<&str> = table.iter().map(|p| p.name.as_str()).collect();
            Error::invalid("preset", format!("unknown preset {name:?}; valid names: {}", names.join(", ")))
        })
    }

    /// Resonant parameters for coupling `g` and mean photon number `nbar`.
    pub fn params(&self, g: f64, nbar: f64) -> SystemParams {
        SystemParams::resonant(g, self.g_over_kappa.rate(g), self.g_over_gamma1.rate(g), self.g_over_gamma_phi.rate(g), nbar)
    }
}

/// The five experimental parameter sets plus a dissipation-free reference.
pub fn preset_table() -> Vec<ParameterPreset> {
    let inf = f64::INFINITY;
    [
        ("rydberg-1", 310.0, 10230.0, inf, "Rydberg atoms in a superconducting cavity, first set"),
        ("rydberg-2", 4300.0, 10230.0, inf, "Rydberg atoms in a superconducting cavity, improved cavity"),
        ("circuit-qed-1", 19.4, 580.0, 40.0, "transmon in a coplanar resonator, first set"),
        ("circuit-qed-2", 840.0, 106.0, 215.0, "transmon in a coplanar resonator, high-Q resonator"),
        ("circuit-qed-3", 1400.0, 2000.0, 2000.0, "projected circuit parameters"),
        ("zero", inf, inf, inf, "no dissipation"),
    ]
    .into_iter()
    .map(|(n, k, g1, gp, note)| ParameterPreset::new(n, k, g1, gp, note).expect("table ratios are positive"))
    .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleMode {
    Off,
    /// Run the master equation when `n_max ≤ ORACLE_MAX_NMAX`.
    #[default]
    Auto,
    Force,
}

/// Fully resolved description of a free or echo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub preset: ParameterPreset,
    pub nbar: f64,
    pub n_traj: u64,
    pub seed: u64,
    pub protocol: ProtocolKind,
    /// In units of `t_R`.
    pub t_end: f64,
    /// In units of `t_R`; echo only.
    pub t_pi: Option<f64>,
    /// In units of `t_R`.
    pub sample_dt: f64,
    pub oracle: OracleMode,
    pub n_max: Option<usize>,
    /// Integration step in units of `t_R`; the default step when absent.
    pub dt: Option<f64>,
    /// Coupling in rad/s.
    pub g: f64,
    /// Qubit amplitudes `(c₊, c₋)` of the initial product state.
    pub initial_qubit: [C64; 2],
}

impl ExperimentConfig {
    pub fn free(preset: ParameterPreset, nbar: f64, n_traj: u64, t_end: f64, seed: u64) -> Self {
        Self {
            preset,
            nbar,
            n_traj,
            seed,
            protocol: ProtocolKind::Free,
            t_end,
            t_pi: None,
            sample_dt: DEFAULT_SAMPLE_DT,
            oracle: OracleMode::Off,
            n_max: None,
            dt: None,
            g: DEFAULT_G,
            initial_qubit: [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        }
    }

    pub fn echo(preset: ParameterPreset, nbar: f64, t_pi: f64, n_traj: u64, t_end: f64, seed: u64) -> Self {
        Self { protocol: ProtocolKind::Echo, t_pi: Some(t_pi), ..Self::free(preset, nbar, n_traj, t_end, seed) }
    }

    pub fn t_rabi(&self) -> f64 {
        2.0 * PI / self.g
    }

    pub fn params(&self) -> SystemParams {
        self.preset.params(self.g, self.nbar)
    }

    pub fn truncation(&self) -> Result<Truncation> {
        match self.n_max {
            Some(n) => Truncation::new(n),
            None => Ok(Truncation::for_mean_photons(self.nbar)),
        }
    }

    /// Protocol with times converted to absolute units.
    pub fn absolute_protocol(&self) -> Protocol {
        let tr = self.t_rabi();
        Protocol { kind: self.protocol, t_pi: self.t_pi.map(|t| t * tr), t_end: self.t_end * tr, sample_dt: self.sample_dt * tr }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nbar > 0.0) || !self.nbar.is_finite() {
            return Err(Error::invalid("nbar", "must be positive"));
        }
        if !(self.g > 0.0) || !self.g.is_finite() {
            return Err(Error::invalid("g", "must be positive"));
        }
        if self.dt.is_some_and(|dt| !(dt > 0.0)) {
            return Err(Error::invalid("dt", "must be positive"));
        }
        let norm: f64 = self.initial_qubit.iter().map(|c| c.norm_sqr()).sum();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::invalid("initial_qubit", "must be a nonzero vector"));
        }
        self.absolute_protocol().validate()?;
        self.params().validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonMetrics {
    /// `max_t (|S^z_MC| − ½|R F|)`: how far the simulated signal leaves the
    /// analytic envelope.
    pub max_envelope_excess: f64,
    /// Nominal revival time in `t_R` (`2√n̄`, or `2t_π` for the echo).
    pub revival_time: f64,
    /// Half the peak-to-peak swing of `S^z_MC` in a window of width `t_R`
    /// centred on the revival.
    pub revival_contrast_mc: f64,
    /// Largest `½|R F|` in the same window.
    pub revival_contrast_analytic: f64,
    /// `|S^z_MC − S^z_ME| / stderr` at every sample.
    pub z_scores: Option<Vec<f64>>,
    /// Fraction of samples with `|S^z_MC − S^z_ME| ≤ Z_BOUND·stderr + Z_SLACK`.
    pub oracle_agreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub config: ExperimentConfig,
    pub n_max: usize,
    /// Norm of the initial coherent field lost to the truncation.
    pub truncation_leakage: f64,
    pub times_over_tr: Vec<f64>,
    /// `S^z = P(+) − ½` from the trajectories, with its standard error.
    pub sz_mc: Vec<f64>,
    pub sz_stderr: Vec<f64>,
    pub sz_me: Option<Vec<f64>>,
    pub monte_carlo: SignalRecord,
    pub master_equation: Option<SignalRecord>,
    pub me_max_trace_drift: Option<f64>,
    pub analytic_sz: Vec<f64>,
    /// Upper and lower envelopes `±½|R F|` of `S^z`.
    pub env_hi: Vec<f64>,
    pub env_lo: Vec<f64>,
    pub metrics: ComparisonMetrics,
}

fn spin_z(record: &SignalRecord) -> (Vec<f64>, Vec<f64>) {
    let mean = record.mean(Observable::PPlus).expect("recorded").iter().map(|p| p - 0.5).collect();
    (mean, record.stderr(Observable::PPlus).expect("recorded").to_vec())
}

pub fn run_free_evolution(preset: &ParameterPreset, nbar: f64, n_traj: u64, t_end: f64, seed: u64, with_oracle: bool) -> Result<ComparisonReport> {
    let mut cfg = ExperimentConfig::free(preset.clone(), nbar, n_traj, t_end, seed);
    cfg.oracle = if with_oracle { OracleMode::Auto } else { OracleMode::Off };
    run_experiment(&cfg)
}

pub fn run_echo(preset: &ParameterPreset, nbar: f64, t_pi: f64, n_traj: u64, t_end: f64, seed: u64) -> Result<ComparisonReport> {
    run_experiment(&ExperimentConfig::echo(preset.clone(), nbar, t_pi, n_traj, t_end, seed))
}

/// Runs the trajectories, the optional master-equation oracle and the
/// analytic signal on one shared grid.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ComparisonReport> {
    cfg.validate()?;
    let params = cfg.params();
    let trunc = cfg.truncation()?;
    let protocol = cfg.absolute_protocol();
    let field = coherent_state_with(C64::new(cfg.nbar.sqrt(), 0.0), trunc, &StateOptions::simulation())?;
    let norm = cfg.initial_qubit.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let qubit = cfg.initial_qubit.map(|c| c / norm);
    let initial = JointState::product(qubit, &field.amplitudes, trunc)?;

    let mut tc = TrajectoryConfig::new(cfg.seed, cfg.n_traj, params, trunc, initial.clone(), protocol);
    if let Some(dt) = cfg.dt {
        tc.dt = dt * cfg.t_rabi();
    } else {
        tc.dt = default_dt(params.g, trunc);
    }
    let grid = tc.grid()?;
    let run_me = match cfg.oracle {
        OracleMode::Off => false,
        OracleMode::Auto => trunc.n_max() <= ORACLE_MAX_NMAX,
        OracleMode::Force => true,
    };
    if run_me && protocol.kind == ProtocolKind::Echo {
        return Err(Error::invalid("oracle", "the master-equation oracle supports the free protocol only"));
    }

    let (mc, me) = rayon::join(
        || ensemble_average(&tc),
        || {
            run_me.then(|| {
                let h = jaynes_cummings(&params, trunc, Frame::Rotating);
                let channels = standard_channels(&params, trunc);
                integrate_master(&DensityMatrix::pure(&initial), &h, &channels, &grid, &RECORDED)
            })
        },
    );
    let mc = mc?;
    let me = me.transpose()?;

    let tr = cfg.t_rabi();
    let mut analytic_sz = Vec::with_capacity(mc.times.len());
    let mut env_hi = Vec::with_capacity(mc.times.len());
    let mut env_lo = Vec::with_capacity(mc.times.len());
    for &t in &mc.times {
        let r = rabi_signal(t, &params, &protocol, trunc)?;
        analytic_sz.push(r.sz());
        env_hi.push(r.env_hi - 0.5);
        env_lo.push(r.env_lo - 0.5);
    }
    let times_over_tr: Vec<f64> = mc.times.iter().map(|t| t / tr).collect();
    let (sz_mc, sz_stderr) = spin_z(&mc);
    let sz_me = me.as_ref().map(|r| spin_z(&r.record).0);

    let revival_time = match protocol.kind {
        ProtocolKind::Free => 2.0 * cfg.nbar.sqrt(),
        ProtocolKind::Echo => 2.0 * cfg.t_pi.expect("validated"),
    };
    let max_envelope_excess = sz_mc
        .iter().zip(&env_hi).map(|(s, e)| s.abs() - e).fold(f64::NEG_INFINITY, f64::max);
    let revival_contrast_mc = window_contrast(&times_over_tr, &sz_mc, revival_time, 1.0);
    let revival_contrast_analytic = window_max(&times_over_tr, &env_hi, revival_time, 1.0);

    let (z_scores, oracle_agreement) = match sz_me.as_ref() {
        Some(reference) => {
            let (z, frac) = z_scores(&sz_mc, &sz_stderr, reference);
            (Some(z), Some(frac))
        }
        None => (None, None),
    };

    Ok(ComparisonReport {
        config: cfg.clone(),
        n_max: trunc.n_max(),
        truncation_leakage: field.leakage,
        times_over_tr,
        sz_mc,
        sz_stderr,
        sz_me,
        me_max_trace_drift: me.as_ref().map(|r| r.max_trace_drift),
        master_equation: me.map(|r| r.record),
        monte_carlo: mc,
        analytic_sz,
        env_hi,
        env_lo,
        metrics: ComparisonMetrics {
            max_envelope_excess,
            revival_time,
            revival_contrast_mc,
            revival_contrast_analytic,
            z_scores,
            oracle_agreement,
        },
    })
}

/// Pointwise `|a − b| / σ` and the fraction of points with
/// `|a − b| ≤ Z_BOUND·σ + Z_SLACK`.
pub fn z_scores(mc: &[f64], stderr: &[f64], reference: &[f64]) -> (Vec<f64>, f64) {
    let mut within = 0usize;
    let z: Vec<f64> = mc
        .iter()
        .zip(stderr)
        .zip(reference)
        .map(|((m, s), r)| {
            let diff = (m - r).abs();
            if diff <= Z_BOUND * s + Z_SLACK {
                within += 1;
            }
            if *s > 0.0 {
                diff / s
            } else if diff <= Z_SLACK {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let frac = if z.is_empty() { 1.0 } else { within as f64 / z.len() as f64 };
    (z, frac)
}

fn window<'a>(times: &'a [f64], values: &'a [f64], centre: f64, width: f64) -> impl Iterator<Item = f64> + 'a {
    times.iter().zip(values).filter(move |(t, _)| (**t - centre).abs() <= width / 2.0).map(|(_, v)| *v)
}

/// `(max − min)/2` of `values` over `|t − centre| ≤ width/2`; zero if the
/// window holds no sample.
pub fn window_contrast(times: &[f64], values: &[f64], centre: f64, width: f64) -> f64 {
    let (lo, hi) = window(times, values, centre, width).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi >= lo {
        (hi - lo) / 2.0
    } else {
        0.0
    }
}

fn window_max(times: &[f64], values: &[f64], centre: f64, width: f64) -> f64 {
    window(times, values, centre, width).fold(0.0, f64::max)
}

/// Lower end of the photon-number range where the analytic forms hold.
pub const CONTOUR_MIN_NBAR: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourGrid {
    pub preset: String,
    pub protocol: ProtocolKind,
    pub nbars: Vec<f64>,
    pub times_over_tr: Vec<f64>,
    /// `values[i][j]` at `nbars[i]`, `times_over_tr[j]`.
    pub values: Vec<Vec<f64>>,
    /// Cat-preparation time `√n̄` (in `t_R`) per row.
    pub cat_locus: Vec<f64>,
    /// First spontaneous revival `2√n̄` (in `t_R`) per row.
    pub revival_locus: Vec<f64>,
}

/// `C(t, n̄)` (free) or `C_e(t, n̄) = |F₊₋(t/2, t)|` (echo) on a grid.
pub fn contour_sweep(preset: &ParameterPreset, nbars: &[f64], times_over_tr: &[f64], protocol: ProtocolKind) -> Result<ContourGrid> {
    use rayon::prelude::*;
    if let Some(&n) = nbars.iter().find(|&&n| !(n >= CONTOUR_MIN_NBAR)) {
        return Err(Error::invalid("nbar", format!("contour sweeps need n̄ ≥ {CONTOUR_MIN_NBAR}, got {n}")));
    }
    if let Some(&t) = times_over_tr.iter().find(|&&t| !(t >= 0.0)) {
        return Err(Error::invalid("t", format!("times must be non-negative, got {t}")));
    }
    let g = DEFAULT_G;
    let tr = 2.0 * PI / g;
    let values = nbars
        .par_iter()
        .map(|&n| {
            let p = preset.params(g, n);
            times_over_tr.iter().map(|&t| contrast_coefficient(t * tr, n, &p, protocol)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ContourGrid {
        preset: preset.name.clone(),
        protocol,
        nbars: nbars.to_vec(),
        times_over_tr: times_over_tr.to_vec(),
        values,
        cat_locus: nbars.iter().map(|n| n.sqrt()).collect(),
        revival_locus: nbars.iter().map(|n| 2.0 * n.sqrt()).collect(),
    })
}

/// Free-evolution contrast at the cat-preparation time `t = t_R√n̄`.
pub fn cat_contrast(preset: &ParameterPreset, nbar: f64) -> Result<f64> {
    let p = preset.params(1.0, nbar);
    contrast_coefficient(2.0 * PI * nbar.sqrt(), nbar, &p, ProtocolKind::Free)
}
