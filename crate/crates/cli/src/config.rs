use std::fs;
use std::path::{Path, PathBuf};

use qjc_core::experiments::{ExperimentConfig, OracleMode, ParameterPreset, Ratio, CONTOUR_MIN_NBAR, DEFAULT_G, DEFAULT_N_TRAJ, DEFAULT_SAMPLE_DT};
use qjc_core::mcwf::ProtocolKind;
use qjc_core::{Error as CoreError, C64};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Free,
    Echo,
    Contour,
    Compare,
    Presets,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Free => "free",
            Command::Echo => "echo",
            Command::Contour => "contour",
            Command::Compare => "compare",
            Command::Presets => "presets",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Explicit dissipation ratios, used in place of a named preset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rates {
    pub g_over_kappa: Ratio,
    pub g_over_gamma1: Ratio,
    pub g_over_gamma_phi: Ratio,
}

/// One invocation, as read from a JSON file and/or command-line flags.
///
/// All time fields (`t_end`, `t_pi`, `sample_dt`, `dt`) are multiples of the
/// vacuum Rabi period `t_R = 2π/g`. `g` itself is in rad/s and only affects
/// the absolute units reported in run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<Rates>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nbar: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_traj: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_pi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub with_oracle: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nbar_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nbar_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nbar_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_qubit: Option<[C64; 2]>,
}

/// What a resolved configuration asks the driver to do.
#[derive(Debug, Clone, PartialEq)]
pub enum Job {
    Simulate { command: Command, experiment: ExperimentConfig },
    Contour { preset: ParameterPreset, nbars: Vec<f64>, times_over_tr: Vec<f64>, protocol: ProtocolKind },
    Presets,
}

fn field(name: &str, message: impl Into<String>) -> CliError {
    CliError::Config { field: name.to_string(), message: message.into() }
}

fn required<T: Copy>(value: Option<T>, name: &str, command: Command) -> Result<T, CliError> {
    value.ok_or_else(|| field(name, format!("required by `{}`", command.name())))
}

fn positive(value: f64, name: &str) -> Result<f64, CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(field(name, format!("must be positive and finite, got {value}")))
    }
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            preset: None,
            rates: None,
            nbar: None,
            n_traj: None,
            seed: None,
            t_end: None,
            t_pi: None,
            output: None,
            format: None,
            with_oracle: None,
            n_max: None,
            protocol: None,
            nbar_min: None,
            nbar_max: None,
            nbar_step: None,
            sample_dt: None,
            dt: None,
            g: None,
            initial_qubit: None,
        }
    }

    /// Field-wise overlay: every field set in `over` replaces the one here.
    pub fn overlay(self, over: RunConfig) -> RunConfig {
        RunConfig {
            command: over.command,
            preset: over.preset.or(self.preset),
            rates: over.rates.or(self.rates),
            nbar: over.nbar.or(self.nbar),
            n_traj: over.n_traj.or(self.n_traj),
            seed: over.seed.or(self.seed),
            t_end: over.t_end.or(self.t_end),
            t_pi: over.t_pi.or(self.t_pi),
            output: over.output.or(self.output),
            format: over.format.or(self.format),
            with_oracle: over.with_oracle.or(self.with_oracle),
            n_max: over.n_max.or(self.n_max),
            protocol: over.protocol.or(self.protocol),
            nbar_min: over.nbar_min.or(self.nbar_min),
            nbar_max: over.nbar_max.or(self.nbar_max),
            nbar_step: over.nbar_step.or(self.nbar_step),
            sample_dt: over.sample_dt.or(self.sample_dt),
            dt: over.dt.or(self.dt),
            g: over.g.or(self.g),
            initial_qubit: over.initial_qubit.or(self.initial_qubit),
        }
    }

    fn resolve_preset(&self) -> Result<ParameterPreset, CliError> {
        match (&self.preset, &self.rates) {
            (Some(_), Some(_)) => Err(field("rates", "give either a preset name or explicit rates, not both")),
            (Some(name), None) => ParameterPreset::by_name(name).map_err(|e| field("preset", strip_prefix(&e))),
            (None, Some(r)) => Ok(ParameterPreset {
                name: "custom".into(),
                g_over_kappa: r.g_over_kappa,
                g_over_gamma1: r.g_over_gamma1,
                g_over_gamma_phi: r.g_over_gamma_phi,
                note: "explicit rates".into(),
            }),
            (None, None) => Err(field("preset", format!("required by `{}` (or give explicit rates)", self.command.name()))),
        }
    }

    /// Rejects fields that the command would silently ignore.
    fn reject_unused(&self, allowed: &[&str]) -> Result<(), CliError> {
        let present = [
            ("preset", self.preset.is_some()),
            ("rates", self.rates.is_some()),
            ("nbar", self.nbar.is_some()),
            ("n_traj", self.n_traj.is_some()),
            ("seed", self.seed.is_some()),
            ("t_end", self.t_end.is_some()),
            ("t_pi", self.t_pi.is_some()),
            ("with_oracle", self.with_oracle.is_some()),
            ("n_max", self.n_max.is_some()),
            ("protocol", self.protocol.is_some()),
            ("nbar_min", self.nbar_min.is_some()),
            ("nbar_max", self.nbar_max.is_some()),
            ("nbar_step", self.nbar_step.is_some()),
            ("sample_dt", self.sample_dt.is_some()),
            ("dt", self.dt.is_some()),
            ("g", self.g.is_some()),
            ("initial_qubit", self.initial_qubit.is_some()),
        ];
        match present.iter().find(|(name, set)| *set && !allowed.contains(name)) {
            Some((name, _)) => Err(field(name, format!("not used by `{}`", self.command.name()))),
            None => Ok(()),
        }
    }

    /// Checks the configuration, materializes every default and returns the
    /// completed configuration together with the job it describes.
    pub fn resolve(&self) -> Result<(RunConfig, Job), CliError> {
        let mut out = RunConfig { output: self.output.clone(), format: Some(self.format.unwrap_or_default()), ..RunConfig::new(self.command) };
        match self.command {
            Command::Presets => {
                self.reject_unused(&[])?;
                Ok((out, Job::Presets))
            }
            Command::Contour => {
                self.reject_unused(&["preset", "rates", "protocol", "nbar_min", "nbar_max", "nbar_step", "t_end", "sample_dt"])?;
                let preset = self.resolve_preset()?;
                let nbar_min = self.nbar_min.unwrap_or(CONTOUR_MIN_NBAR);
                let nbar_max = self.nbar_max.unwrap_or(30.0);
                let nbar_step = positive(self.nbar_step.unwrap_or(1.0), "nbar_step")?;
                if !(nbar_min >= CONTOUR_MIN_NBAR) {
                    return Err(field("nbar_min", format!("must be at least {CONTOUR_MIN_NBAR}, got {nbar_min}")));
                }
                if !(nbar_max >= nbar_min) || !nbar_max.is_finite() {
                    return Err(field("nbar_max", format!("must be finite and ≥ nbar_min = {nbar_min}, got {nbar_max}")));
                }
                let t_end = positive(self.t_end.unwrap_or((2.0 * nbar_max.sqrt() + 1.0).ceil()), "t_end")?;
                let sample_dt = positive(self.sample_dt.unwrap_or(DEFAULT_SAMPLE_DT), "sample_dt")?;
                let protocol = self.protocol.unwrap_or(ProtocolKind::Free);

                let count = ((nbar_max - nbar_min) / nbar_step + 1e-9).floor() as usize + 1;
                let nbars = (0..count).map(|i| nbar_min + i as f64 * nbar_step).collect();
                let steps = (t_end / sample_dt + 1e-9).floor() as usize;
                let times_over_tr = (0..=steps).map(|i| i as f64 * sample_dt).collect();

                out.preset = self.preset.clone();
                out.rates = self.rates;
                out.protocol = Some(protocol);
                out.nbar_min = Some(nbar_min);
                out.nbar_max = Some(nbar_max);
                out.nbar_step = Some(nbar_step);
                out.t_end = Some(t_end);
                out.sample_dt = Some(sample_dt);
                Ok((out, Job::Contour { preset, nbars, times_over_tr, protocol }))
            }
            Command::Free | Command::Echo | Command::Compare => {
                let mut allowed = vec!["preset", "rates", "nbar", "n_traj", "seed", "t_end", "n_max", "sample_dt", "dt", "g", "initial_qubit"];
                match self.command {
                    Command::Free => allowed.push("with_oracle"),
                    Command::Echo => allowed.push("t_pi"),
                    _ => {}
                }
                if self.command == Command::Echo && self.with_oracle == Some(true) {
                    return Err(field("with_oracle", "the master-equation oracle supports the free protocol only"));
                }
                self.reject_unused(&allowed)?;

                let preset = self.resolve_preset()?;
                let nbar = positive(required(self.nbar, "nbar", self.command)?, "nbar")?;
                let t_end = positive(required(self.t_end, "t_end", self.command)?, "t_end")?;
                let n_traj = self.n_traj.unwrap_or(DEFAULT_N_TRAJ);
                if n_traj == 0 {
                    return Err(field("n_traj", "must be at least 1"));
                }
                let seed = self.seed.unwrap_or(0);
                let mut exp = match self.command {
                    Command::Echo => {
                        let t_pi = positive(required(self.t_pi, "t_pi", self.command)?, "t_pi")?;
                        ExperimentConfig::echo(preset, nbar, t_pi, n_traj, t_end, seed)
                    }
                    _ => ExperimentConfig::free(preset, nbar, n_traj, t_end, seed),
                };
                let with_oracle = match self.command {
                    Command::Compare => true,
                    Command::Free => self.with_oracle.unwrap_or(false),
                    _ => false,
                };
                exp.oracle = if with_oracle { OracleMode::Force } else { OracleMode::Off };
                exp.sample_dt = self.sample_dt.unwrap_or(DEFAULT_SAMPLE_DT);
                exp.dt = self.dt;
                exp.g = self.g.unwrap_or(DEFAULT_G);
                if let Some(q) = self.initial_qubit {
                    exp.initial_qubit = q;
                }
                exp.n_max = self.n_max;
                let trunc = exp.truncation().map_err(|e| field("n_max", strip_prefix(&e)))?;
                exp.n_max = Some(trunc.n_max());
                exp.validate().map_err(config_field_error)?;

                out.preset = self.preset.clone();
                out.rates = self.rates;
                out.nbar = Some(nbar);
                out.n_traj = Some(n_traj);
                out.seed = Some(seed);
                out.t_end = Some(t_end);
                out.t_pi = exp.t_pi;
                if self.command == Command::Free {
                    out.with_oracle = Some(with_oracle);
                }
                out.n_max = exp.n_max;
                out.sample_dt = Some(exp.sample_dt);
                out.dt = exp.dt;
                out.g = Some(exp.g);
                out.initial_qubit = Some(exp.initial_qubit);
                Ok((out, Job::Simulate { command: self.command, experiment: exp }))
            }
        }
    }
}

fn strip_prefix(e: &CoreError) -> String {
    match e {
        CoreError::InvalidParameter { reason, .. } => reason.clone(),
        other => other.to_string(),
    }
}

/// Maps a parameter-validation failure onto the offending config field.
pub(crate) fn config_field_error(e: CoreError) -> CliError {
    match &e {
        CoreError::InvalidParameter { name, reason } => {
            let name = match *name {
                "kappa" | "gamma1" | "gamma_phi" => "rates",
                other => other,
            };
            field(name, reason.clone())
        }
        CoreError::TruncationOverflow { .. } | CoreError::TruncationUnsafe { .. } => field("n_max", e.to_string()),
        CoreError::EchoOrdering { .. } => field("t_pi", e.to_string()),
        _ => CliError::Runtime(e),
    }
}

/// The part of a metadata sidecar needed to replay a run.
#[derive(Deserialize)]
struct SidecarConfig {
    config: RunConfig,
}

/// Reads a run configuration from JSON. A metadata sidecar written by an
/// earlier run is accepted as well; its resolved `config` is used.
pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
    let parse_error = |e: serde_json::Error| CliError::Config {
        field: "config".into(),
        message: format!("{}: line {} column {}: {e}", path.display(), e.line(), e.column()),
    };
    let value: serde_json::Value = serde_json::from_str(&text).map_err(parse_error)?;
    if value.get("code_version").is_some() && value.get("config").is_some() {
        return serde_json::from_str::<SidecarConfig>(&text).map(|s| s.config).map_err(parse_error);
    }
    serde_json::from_str(&text).map_err(parse_error)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn free() -> RunConfig {
        RunConfig { preset: Some("circuit-qed-2".into()), nbar: Some(10.0), t_end: Some(8.0), ..RunConfig::new(Command::Free) }
    }

    #[test]
    fn json_round_trip() {
        let mut c = free();
        c.rates = None;
        c.initial_qubit = Some([C64::new(0.6, 0.0), C64::new(0.0, 0.8)]);
        c.format = Some(Format::Json);
        let text = serde_json::to_string(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn resolve_materializes_defaults() {
        let (resolved, job) = free().resolve().unwrap();
        assert_eq!(resolved.n_traj, Some(DEFAULT_N_TRAJ));
        assert_eq!(resolved.seed, Some(0));
        assert_eq!(resolved.with_oracle, Some(false));
        assert_eq!(resolved.format, Some(Format::Csv));
        assert!(resolved.n_max.is_some());
        // A resolved configuration resolves to itself.
        let (again, job2) = resolved.resolve().unwrap();
        assert_eq!(again, resolved);
        assert_eq!(job, job2);
    }

    #[test]
    fn missing_and_unknown_fields() {
        let mut c = free();
        c.nbar = None;
        match c.resolve() {
            Err(CliError::Config { field, .. }) => assert_eq!(field, "nbar"),
            other => panic!("{other:?}"),
        }
        let mut c = free();
        c.preset = Some("nope".into());
        match c.resolve() {
            Err(CliError::Config { field, message }) => {
                assert_eq!(field, "preset");
                assert!(message.contains("circuit-qed-2"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let mut c = free();
        c.t_pi = Some(3.0);
        assert!(matches!(c.resolve(), Err(CliError::Config { field, .. }) if field == "t_pi"));
    }

    #[test]
    fn echo_needs_t_pi() {
        let c = RunConfig { command: Command::Echo, ..free() };
        assert!(matches!(c.resolve(), Err(CliError::Config { field, .. }) if field == "t_pi"));
    }

    #[test]
    fn contour_grid_bounds() {
        let c = RunConfig {
            preset: Some("circuit-qed-3".into()),
            nbar_min: Some(5.0),
            nbar_max: Some(7.0),
            sample_dt: Some(0.5),
            t_end: Some(2.0),
            ..RunConfig::new(Command::Contour)
        };
        let (_, job) = c.resolve().unwrap();
        match job {
            Job::Contour { nbars, times_over_tr, .. } => {
                assert_eq!(nbars, vec![5.0, 6.0, 7.0]);
                assert_eq!(times_over_tr, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
            }
            other => panic!("{other:?}"),
        }
        let low = RunConfig { nbar_min: Some(2.0), ..c };
        assert!(matches!(low.resolve(), Err(CliError::Config { field, .. }) if field == "nbar_min"));
    }

    #[test]
    fn overlay_prefers_flags() {
        let base = free();
        let over = RunConfig { seed: Some(7), ..RunConfig::new(Command::Free) };
        let merged = base.clone().overlay(over);
        assert_eq!(merged.seed, Some(7));
        assert_eq!(merged.nbar, base.nbar);
    }
}
