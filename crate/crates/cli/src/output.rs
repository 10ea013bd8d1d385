//! Report documents and flat numeric tables.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use timeavg::harness::{AveragingReport, LambdaRun, REPORT_SCHEMA_VERSION};
use timeavg::mild::{ForcingAudit, Trajectory};
use timeavg::operator::AuditReport;

pub const OUTPUT_DIR_ENV: &str = "TIMEAVG_OUTPUT_DIR";
pub const DEFAULT_OUTPUT_DIR: &str = "timeavg-out";
pub const REPORT_FILE: &str = "report.json";
pub const FAILURE_MARKER: &str = "FAILED";

/// `--out`, then the scenario's `[output].directory`, then the environment,
/// then the default.
pub fn resolve_dir(flag: Option<&Path>, scenario: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| scenario.map(Path::to_path_buf))
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

#[derive(Debug, Serialize)]
pub struct AuditDocument<'a> {
    pub schema_version: u32,
    pub scenario_sha256: &'a str,
    pub seed: u64,
    pub consistent: bool,
    pub findings: &'a [String],
    pub audit: &'a AuditReport,
    pub forcing: Option<&'a ForcingAudit>,
}

#[derive(Debug, Serialize)]
pub struct SweepDocument<'a> {
    pub schema_version: u32,
    pub scenario_sha256: &'a str,
    pub seed: u64,
    pub report: &'a AveragingReport,
}

pub fn write_json(path: &Path, value: &impl Serialize) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(path, text)
}

fn number(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn lambda_table(hash: &str, run: &LambdaRun) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# timeavg sweep table");
    let _ = writeln!(out, "# scenario_sha256 {hash}");
    let _ = writeln!(out, "# lambda {}", number(run.lambda));
    let _ = writeln!(out, "# t error norm_lambda norm_averaged");
    for row in &run.table {
        let _ = writeln!(
            out,
            "{} {} {} {}",
            number(row.t),
            number(row.error),
            number(row.norm_lambda),
            number(row.norm_averaged)
        );
    }
    out
}

pub fn table_name(run: &LambdaRun) -> String {
    format!("lambda_{:02}.dat", run.index)
}

pub fn write_tables(dir: &Path, hash: &str, runs: &[LambdaRun]) -> std::io::Result<Vec<PathBuf>> {
    runs.iter()
        .map(|run| {
            let path = dir.join(table_name(run));
            fs::write(&path, lambda_table(hash, run))?;
            Ok(path)
        })
        .collect()
}

pub fn trajectory_table(hash: &str, label: &str, traj: &mut Trajectory) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# timeavg trajectory");
    let _ = writeln!(out, "# scenario_sha256 {hash}");
    let _ = writeln!(out, "# run {label}");
    let _ = writeln!(out, "# t norm_alpha norm_l2");
    for ((t, n), state) in traj.times.iter().zip(&traj.norms).zip(traj.states.iter_mut()) {
        let _ = writeln!(out, "{} {} {}", number(*t), number(*n), number(state.l2_norm()));
    }
    out
}

pub fn state_table(hash: &str, label: &str, traj: &mut Trajectory) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# timeavg final state");
    let _ = writeln!(out, "# scenario_sha256 {hash}");
    let _ = writeln!(out, "# run {label} t {}", number(*traj.times.last().unwrap_or(&0.0)));
    let Some(state) = traj.states.last_mut() else {
        return out;
    };
    let grid = state.grid().clone();
    let axes: Vec<String> = (0..grid.dim()).map(|d| format!("x{d}")).collect();
    let _ = writeln!(out, "# {} re im", axes.join(" "));
    for (m, v) in state.values().iter().enumerate() {
        let x: Vec<String> = grid.point(m).into_iter().map(number).collect();
        let _ = writeln!(out, "{} {} {}", x.join(" "), number(v.re), number(v.im));
    }
    out
}

/// Runs recovered from a written report, tolerating `null` in unrelated
/// fields.
pub fn read_report(dir: &Path) -> Result<(String, u32, Vec<LambdaRun>), String> {
    let path = dir.join(REPORT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    let version = value["schema_version"].as_u64().unwrap_or(0) as u32;
    if version != REPORT_SCHEMA_VERSION {
        return Err(format!(
            "{}: schema version {version}, expected {REPORT_SCHEMA_VERSION}",
            path.display()
        ));
    }
    let hash = value["scenario_sha256"].as_str().unwrap_or_default().to_string();
    let runs: Vec<LambdaRun> =
        serde_json::from_value(value["report"]["runs"].clone()).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok((hash, version, runs))
}

pub fn summary_line(report: &AveragingReport) -> String {
    let window = report
        .fit_asymptotic
        .as_ref()
        .map(|f| format!("order ≈ {:.2} (lambda <= delta, {} points)", f.order, f.points))
        .unwrap_or_else(|| "order n/a (lambda <= delta has < 3 points)".into());
    let all = report
        .fit_all
        .as_ref()
        .map(|f| format!("{:.2}", f.order))
        .unwrap_or_else(|| "n/a".into());
    format!("{window}; all lambdas {all}; non-monotone pairs {}", report.non_monotone_pairs)
}
