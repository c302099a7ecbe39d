use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use qjc_core::experiments::{ComparisonMetrics, ComparisonReport, ContourGrid, ParameterPreset};
use qjc_core::signal::Observable;
use qjc_core::CODE_VERSION;
use serde::{Deserialize, Serialize};

use crate::config::{Format, RunConfig};
use crate::CliError;

/// Anything the driver can write as its primary output.
pub enum RunResult {
    Comparison(Box<ComparisonReport>),
    Contour(ContourGrid),
    Presets(Vec<ParameterPreset>),
}

/// Absolute (SI) view of a run; the primary outputs use `t/t_R` only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsoluteUnits {
    /// rad/s
    pub g: f64,
    pub t_rabi_s: f64,
    /// 1/s
    pub kappa: f64,
    pub gamma1: f64,
    pub gamma_phi: f64,
    pub t_end_s: f64,
    pub t_pi_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourLoci {
    pub nbars: Vec<f64>,
    pub cat_locus: Vec<f64>,
    pub revival_locus: Vec<f64>,
}

/// Sidecar written next to every output file. Deliberately free of
/// timestamps, host names and thread counts so that reruns reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config: RunConfig,
    pub code_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_leakage: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub me_max_trace_drift: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump_counts: Option<BTreeMap<String, u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<ComparisonMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absolute: Option<AbsoluteUnits>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contour_loci: Option<ContourLoci>,
}

impl RunMetadata {
    pub fn new(config: &RunConfig, result: &RunResult) -> Self {
        let mut meta = RunMetadata {
            config: config.clone(),
            code_version: CODE_VERSION.to_string(),
            seed: None,
            n_max: None,
            truncation_leakage: None,
            me_max_trace_drift: None,
            jump_counts: None,
            metrics: None,
            absolute: None,
            contour_loci: None,
        };
        match result {
            RunResult::Comparison(r) => {
                let cfg = &r.config;
                let p = cfg.params();
                let tr = cfg.t_rabi();
                meta.seed = Some(cfg.seed);
                meta.n_max = Some(r.n_max);
                meta.truncation_leakage = Some(r.truncation_leakage);
                meta.me_max_trace_drift = r.me_max_trace_drift;
                meta.jump_counts = Some(r.monte_carlo.jump_counts.iter().map(|(k, n)| (k.name().to_string(), *n)).collect());
                // The per-point z-scores are already implied by the CSV columns.
                meta.metrics = Some(ComparisonMetrics { z_scores: None, ..r.metrics.clone() });
                meta.absolute = Some(AbsoluteUnits {
                    g: p.g,
                    t_rabi_s: tr,
                    kappa: p.kappa,
                    gamma1: p.gamma1,
                    gamma_phi: p.gamma_phi,
                    t_end_s: cfg.t_end * tr,
                    t_pi_s: cfg.t_pi.map(|t| t * tr),
                });
            }
            RunResult::Contour(grid) => {
                meta.contour_loci = Some(ContourLoci {
                    nbars: grid.nbars.clone(),
                    cat_locus: grid.cat_locus.clone(),
                    revival_locus: grid.revival_locus.clone(),
                });
            }
            RunResult::Presets(_) => {}
        }
        meta
    }
}

/// Full double precision, `.` decimal separator, locale independent.
fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn quoted(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn comparison_csv(r: &ComparisonReport) -> String {
    let p_plus = r.monte_carlo.mean(Observable::PPlus).expect("recorded");
    let mut header = vec!["t_over_tR", "sz_mc", "sz_stderr", "p_plus_mc", "sz_analytic", "env_hi", "env_lo"];
    if r.sz_me.is_some() {
        header.push("sz_me");
    }
    if r.metrics.z_scores.is_some() {
        header.push("z");
    }
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..r.times_over_tr.len() {
        let mut row = vec![
            num(r.times_over_tr[i]),
            num(r.sz_mc[i]),
            num(r.sz_stderr[i]),
            num(p_plus[i]),
            num(r.analytic_sz[i]),
            num(r.env_hi[i]),
            num(r.env_lo[i]),
        ];
        if let Some(me) = &r.sz_me {
            row.push(num(me[i]));
        }
        if let Some(z) = &r.metrics.z_scores {
            row.push(num(z[i]));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn contour_csv(grid: &ContourGrid) -> String {
    let mut out = String::from("nbar,t_over_tR,contrast\n");
    for (n, row) in grid.nbars.iter().zip(&grid.values) {
        for (t, c) in grid.times_over_tr.iter().zip(row) {
            let _ = writeln!(out, "{},{},{}", num(*n), num(*t), num(*c));
        }
    }
    out
}

fn ratio_cell(r: qjc_core::experiments::Ratio) -> String {
    if r.is_infinite() {
        "inf".into()
    } else {
        num(r.value())
    }
}

fn presets_csv(presets: &[ParameterPreset]) -> String {
    let mut out = String::from("name,g_over_kappa,g_over_gamma1,g_over_gamma_phi,note\n");
    for p in presets {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.name,
            ratio_cell(p.g_over_kappa),
            ratio_cell(p.g_over_gamma1),
            ratio_cell(p.g_over_gamma_phi),
            quoted(&p.note)
        );
    }
    out
}

/// Human-readable preset table for the terminal.
pub fn presets_table(presets: &[ParameterPreset]) -> String {
    let mut out = format!("{:<15} {:>10} {:>10} {:>10}  {}\n", "name", "g/kappa", "g/gamma1", "g/gamma_phi", "note");
    for p in presets {
        let _ = writeln!(out, "{:<15} {:>10} {:>10} {:>10}  {}", p.name, p.g_over_kappa.to_string(), p.g_over_gamma1.to_string(), p.g_over_gamma_phi.to_string(), p.note);
    }
    out
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Serialize(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Serializes a result in the requested format.
pub fn render(result: &RunResult, format: Format) -> Result<String, CliError> {
    match (result, format) {
        (RunResult::Comparison(r), Format::Csv) => Ok(comparison_csv(r)),
        (RunResult::Comparison(r), Format::Json) => to_json(r),
        (RunResult::Contour(g), Format::Csv) => Ok(contour_csv(g)),
        (RunResult::Contour(g), Format::Json) => to_json(g),
        (RunResult::Presets(p), Format::Csv) => Ok(presets_csv(p)),
        (RunResult::Presets(p), Format::Json) => to_json(p),
    }
}

/// `run.csv` → `run.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

/// Writes the primary output to `path` (stdout when `None`). A metadata
/// sidecar is written next to file outputs.
pub fn dump_result(result: &RunResult, config: &RunConfig, path: Option<&Path>) -> Result<(), CliError> {
    let format = config.format.unwrap_or_default();
    let body = render(result, format)?;
    match path {
        Some(path) => {
            write_file(path, &body)?;
            write_file(&sidecar_path(path), &to_json(&RunMetadata::new(config, result))?)
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(body.as_bytes()).map_err(|source| CliError::Io { path: PathBuf::from("<stdout>"), source })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use qjc_core::experiments::preset_table;
    use qjc_core::mcwf::ProtocolKind;

    #[test]
    fn number_format_round_trips() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.324555320336759, 0.0] {
            let s = num(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
            assert!(!s.contains(','));
        }
        assert_eq!(num(f64::INFINITY), "inf");
    }

    #[test]
    fn contour_layout() {
        let grid = ContourGrid {
            preset: "zero".into(),
            protocol: ProtocolKind::Free,
            nbars: vec![5.0, 6.0],
            times_over_tr: vec![0.0, 1.0],
            values: vec![vec![1.0, 0.9], vec![1.0, 0.8]],
            cat_locus: vec![5f64.sqrt(), 6f64.sqrt()],
            revival_locus: vec![2.0 * 5f64.sqrt(), 2.0 * 6f64.sqrt()],
        };
        let csv = contour_csv(&grid);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "nbar,t_over_tR,contrast");
        assert_eq!(lines.len(), 5);
        assert!(lines[4].starts_with("6.0000000000000000e0,1.0000000000000000e0,8.0000000000000004e-1"), "{}", lines[4]);
        assert!(!csv.contains('\r'));
    }

    #[test]
    fn presets_csv_has_all_rows() {
        let table = preset_table();
        let csv = presets_csv(&table);
        assert_eq!(csv.lines().count(), table.len() + 1);
        assert!(csv.contains("circuit-qed-2,8.4000000000000000e2,1.0600000000000000e2,2.1500000000000000e2"));
        assert!(csv.lines().any(|l| l.starts_with("zero,inf,inf,inf")));
    }

    #[test]
    fn sidecar_name() {
        assert_eq!(sidecar_path(Path::new("out/run.csv")), PathBuf::from("out/run.meta.json"));
    }
}
