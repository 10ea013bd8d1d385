mod output;
mod scenario;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use timeavg::evolution::probe_smoothing_constant;
use timeavg::evolution::SpectralPropagator;
use timeavg::harness::{run_linear_sweep, run_nonlinear_sweep, SweepOptions};
use timeavg::mild::{solve_averaged, solve_mild};
use timeavg::operator::{log_mesh, uniform_mesh};
use timeavg::HarnessError;

use scenario::{LoadedScenario, OutputFormat, ScenarioError};

#[derive(Debug, Parser)]
#[command(name = "timeavg", version, about = "Time-averaging experiments for parabolic evolution systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check declared constants against measurements.
    Audit {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve once, for a given lambda or the averaged problem.
    Solve {
        scenario: PathBuf,
        #[arg(long, allow_hyphen_values = true, required_unless_present = "averaged", conflicts_with = "averaged")]
        lambda: Option<f64>,
        #[arg(long)]
        averaged: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the lambda list and fit the convergence order.
    Sweep {
        scenario: PathBuf,
        #[arg(long, conflicts_with = "nonlinear")]
        linear: bool,
        #[arg(long)]
        nonlinear: bool,
        /// Worker threads for per-lambda runs (0: all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        /// Run even if the audit reports findings.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-render the per-lambda tables of an existing sweep.
    Report { dir: PathBuf },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Finding(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Usage(_) | Self::Scenario(_) => 2,
            Self::Finding(_) | Self::Runtime(_) => 1,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn prepare_dir(flag: Option<&Path>, loaded: &LoadedScenario) -> Result<PathBuf, CliError> {
    let dir = output::resolve_dir(flag, loaded.file.output.directory.as_deref());
    fs::create_dir_all(&dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn cmd_audit(path: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let loaded = scenario::load(path)?;
    let sc = &loaded.scenario;
    let mut report = sc.audit().map_err(runtime)?;
    let norm = sc.norm().map_err(runtime)?;
    let gaps = log_mesh(1e-3, sc.horizon, 32);
    for &lambda in &sc.lambdas {
        let prop = SpectralPropagator::new(sc.family.clone(), sc.grid.clone(), lambda).map_err(runtime)?;
        let probe = probe_smoothing_constant(&prop, &norm, 0.0, &gaps).map_err(runtime)?;
        report.smoothing_k.push((lambda, probe.k));
    }
    let mut findings = report.findings();
    let forcing_audit = match &sc.forcing {
        Some(f) => {
            let times = uniform_mesh(0.0, 2.0 * std::f64::consts::PI, 16);
            let audit = f
                .audit(&sc.grid, &norm, &times, &[1.0, 4.0, 16.0], sc.seed)
                .map_err(runtime)?;
            if !audit.satisfied {
                findings.push(format!(
                    "forcing: growth ratio {:.6} against declared C {:?}",
                    audit.growth_ratio, audit.declared_c
                ));
            }
            Some(audit)
        }
        None => None,
    };
    let doc = output::AuditDocument {
        schema_version: timeavg::harness::REPORT_SCHEMA_VERSION,
        scenario_sha256: &loaded.sha256,
        seed: loaded.file.seed,
        consistent: findings.is_empty(),
        findings: &findings,
        audit: &report,
        forcing: forcing_audit.as_ref(),
    };
    let dir = prepare_dir(out, &loaded)?;
    output::write_json(&dir.join("audit.json"), &doc).map_err(runtime)?;
    println!("nu0 measured {} (declared {})", report.nu0.measured, report.nu0.declared);
    println!("resolvent M {:.9} (bound {:.9})", report.resolvent.m, report.resolvent.analytic_bound);
    if report.holder.trivially_satisfied {
        println!("holder: trivially satisfied");
    } else {
        println!("holder: L fit {:.6}, gamma fit {:?}", report.holder.l_fit, report.holder.gamma_fit);
    }
    for (lambda, k) in &report.smoothing_k {
        println!("smoothing K at lambda {lambda}: {k:.6}");
    }
    if findings.is_empty() {
        println!("audit: consistent");
        Ok(())
    } else {
        Err(CliError::Finding(findings.join("\n")))
    }
}

fn cmd_solve(path: &Path, lambda: Option<f64>, averaged: bool, out: Option<&Path>) -> Result<(), CliError> {
    if let Some(l) = lambda {
        if !(l > 0.0 && l.is_finite()) {
            return Err(CliError::Usage(format!("lambda must be positive, got {l}")));
        }
    }
    let loaded = scenario::load(path)?;
    let sc = &loaded.scenario;
    let opts = sc.solver_options().map_err(runtime)?;
    let steps = sc.mesh_steps();
    let (label, mut traj) = if averaged {
        let semigroup = sc.averaged_semigroup().map_err(runtime)?;
        let forcing = sc
            .forcing
            .as_ref()
            .map(|f| f.averaged(&sc.grid, &sc.solver.cesaro_schedule, sc.solver.cesaro_tol))
            .transpose()
            .map_err(runtime)?;
        let traj = solve_averaged(&semigroup, forcing.as_ref(), &sc.initial, sc.horizon, steps, &opts).map_err(runtime)?;
        ("averaged".to_string(), traj)
    } else {
        let l = lambda.expect("clap enforces --lambda or --averaged");
        let traj = solve_mild(sc.family.clone(), l, sc.forcing.as_ref(), &sc.initial, sc.horizon, steps, &opts)
            .map_err(runtime)?;
        (format!("lambda {l:.16e}"), traj)
    };
    let dir = prepare_dir(out, &loaded)?;
    let stem = if averaged { "averaged".to_string() } else { format!("lambda_{}", lambda.unwrap_or_default()) };
    fs::write(
        dir.join(format!("trajectory_{stem}.dat")),
        output::trajectory_table(&loaded.sha256, &label, &mut traj),
    )
    .map_err(runtime)?;
    fs::write(
        dir.join(format!("state_{stem}.dat")),
        output::state_table(&loaded.sha256, &label, &mut traj),
    )
    .map_err(runtime)?;
    println!(
        "solved {label}: {} steps, final norm_alpha {:.16e}",
        traj.steps,
        traj.norms.last().copied().unwrap_or_default()
    );
    Ok(())
}

fn cmd_sweep(
    path: &Path,
    linear: bool,
    nonlinear: bool,
    jobs: usize,
    force: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let loaded = scenario::load(path)?;
    let sc = &loaded.scenario;
    let nonlinear = match (linear, nonlinear) {
        (true, _) => false,
        (_, true) => true,
        _ => sc.forcing.is_some(),
    };
    let dir = prepare_dir(out, &loaded)?;
    let marker = dir.join(output::FAILURE_MARKER);
    let _ = fs::remove_file(&marker);
    let options = SweepOptions { jobs, force };
    let result = if nonlinear {
        run_nonlinear_sweep(sc, &options)
    } else {
        run_linear_sweep(sc, &options)
    };
    let report = match result {
        Ok(r) => r,
        Err(HarnessError::AuditFailed(findings)) => {
            return Err(CliError::Finding(format!(
                "audit found inconsistent declarations (use --force to run anyway):\n{}",
                findings.join("\n")
            )));
        }
        Err(e @ (HarnessError::MissingForcing | HarnessError::UnexpectedForcing | HarnessError::InvalidScenario(_))) => {
            return Err(CliError::Usage(e.to_string()));
        }
        Err(e) => {
            let _ = fs::write(&marker, format!("{e}\n"));
            return Err(runtime(e));
        }
    };
    let formats = &loaded.file.output.formats;
    if formats.contains(&OutputFormat::Json) {
        let doc = output::SweepDocument {
            schema_version: timeavg::harness::REPORT_SCHEMA_VERSION,
            scenario_sha256: &loaded.sha256,
            seed: loaded.file.seed,
            report: &report,
        };
        output::write_json(&dir.join(output::REPORT_FILE), &doc).map_err(runtime)?;
    }
    if formats.contains(&OutputFormat::Tables) {
        output::write_tables(&dir, &loaded.sha256, &report.runs).map_err(runtime)?;
    }
    for note in &report.notes {
        println!("note: {note}");
    }
    println!("{}", output::summary_line(&report));
    Ok(())
}

fn cmd_report(dir: &Path) -> Result<(), CliError> {
    let (hash, version, runs) = output::read_report(dir).map_err(CliError::Usage)?;
    let written = output::write_tables(dir, &hash, &runs).map_err(runtime)?;
    println!("schema version {version}: rewrote {} tables", written.len());
    for run in &runs {
        println!(
            "lambda {:.6e}: sup[delta,T] {:.6e}, sup[0,T] {:.6e}",
            run.lambda, run.sup_delta, run.sup_full
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Audit { scenario, out } => cmd_audit(&scenario, out.as_deref()),
        Command::Solve {
            scenario,
            lambda,
            averaged,
            out,
        } => cmd_solve(&scenario, lambda, averaged, out.as_deref()),
        Command::Sweep {
            scenario,
            linear,
            nonlinear,
            jobs,
            force,
            out,
        } => cmd_sweep(&scenario, linear, nonlinear, jobs, force, out.as_deref()),
        Command::Report { dir } => cmd_report(&dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
