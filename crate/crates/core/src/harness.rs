//! λ-sweep experiments comparing `u_λ` with the averaged solution `û`,
//! convergence-order fits, and the residual of the commutation identity
//!
//! ```text
//! Ŝ(t−s)ū − U_λ(t,s)ū = ∫_s^t U_λ(t,r)(A(r/λ) − Â)Ŝ(r−s)ū dr.
//! ```

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;
use crate::evolution::{AveragedSemigroup, ModePropagator, SpectralPropagator};
use crate::mild::{solve_averaged, solve_mild, NonlinearForcing, Scheme, SolverOptions, Trajectory};
use crate::operator::{audit_family, averaged_family, AuditMesh, AuditReport, CoefficientFamily};
use crate::profile::SpatialProfile;
use crate::quadrature::composite_fourth_order_weights;
use crate::spectral::{Field, FractionalNormSpec, SpectralGrid};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// How the initial data `ū_λ` approach `ū` along the sweep.
#[derive(Debug, Clone)]
pub enum Perturbation {
    None,
    /// `ū_n = ū + c_n cos(k_n x_1)`, `k_n = base + step·n`, with `c_n`
    /// chosen so that `‖·‖_α` of the bump equals `alpha_norm`. Converges
    /// in `X` but not in `X^α`.
    HighFrequencyBump {
        alpha_norm: f64,
        base_wavenumber: i64,
        wavenumber_step: i64,
    },
    /// `ū_n = ū + coefficient·λ_n·profile`, converging in `X^α`.
    Scaled { profile: SpatialProfile, coefficient: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvergenceMode {
    Exact,
    /// Initial data converge in `X` only.
    InX,
    /// Initial data converge in `X^α`.
    InXAlpha,
}

impl Perturbation {
    pub fn mode(&self) -> ConvergenceMode {
        match self {
            Self::None => ConvergenceMode::Exact,
            Self::HighFrequencyBump { .. } => ConvergenceMode::InX,
            Self::Scaled { .. } => ConvergenceMode::InXAlpha,
        }
    }

    /// `ū_n` for sweep index `n` and parameter `λ_n`.
    pub fn apply(
        &self,
        initial: &Field,
        index: usize,
        lambda: f64,
        norm: &FractionalNormSpec,
    ) -> Result<Field, HarnessError> {
        let grid = initial.grid().clone();
        let mut out = initial.clone();
        match self {
            Self::None => {}
            Self::HighFrequencyBump {
                alpha_norm,
                base_wavenumber,
                wavenumber_step,
            } => {
                let k = base_wavenumber + wavenumber_step * index as i64;
                if 2 * k.unsigned_abs() as usize >= grid.points_per_axis() {
                    return Err(HarnessError::InvalidScenario(format!(
                        "bump wavenumber {k} is not resolved by {} points",
                        grid.points_per_axis()
                    )));
                }
                let mut wave = vec![0i64; grid.dim()];
                wave[0] = k;
                let mut bump = SpatialProfile::single_mode(wave, 1.0).to_field(&grid);
                let scale = alpha_norm / bump.fractional_norm(norm)?;
                out.add_scaled(scale, &mut bump)?;
            }
            Self::Scaled { profile, coefficient } => {
                let mut extra = profile.to_field(&grid);
                out.add_scaled(coefficient * lambda, &mut extra)?;
            }
        }
        Ok(out)
    }
}

/// Solver and averaging controls of a scenario.
#[derive(Debug, Clone)]
pub struct SolverSpec {
    /// Minimum number of time steps on `[0, T]`.
    pub steps: usize,
    /// Mesh points per smallest λ; the mesh has at least `⌈n·T/λ_min⌉` steps.
    pub mesh_per_lambda: f64,
    pub scheme: Scheme,
    pub substep_q: f64,
    pub node_budget: usize,
    pub cesaro_schedule: Vec<f64>,
    pub cesaro_tol: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            steps: 64,
            mesh_per_lambda: 8.0,
            scheme: Scheme::SecondOrder,
            substep_q: 0.125,
            node_budget: 1 << 16,
            cesaro_schedule: vec![1e2, 1e3, 1e4],
            cesaro_tol: 1e-6,
        }
    }
}

/// A complete λ-sweep experiment.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub grid: Arc<SpectralGrid>,
    pub family: Arc<CoefficientFamily>,
    pub forcing: Option<NonlinearForcing>,
    pub initial: Field,
    pub perturbation: Perturbation,
    /// Strictly decreasing.
    pub lambdas: Vec<f64>,
    pub horizon: f64,
    pub delta: f64,
    pub alpha: f64,
    pub solver: SolverSpec,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidScenario(m.to_string()));
        if self.lambdas.is_empty() {
            return bad("lambda list is empty");
        }
        if self.lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return bad("every lambda must be positive and finite");
        }
        if self.lambdas.windows(2).any(|w| !(w[1] < w[0])) {
            return bad("lambda list must be strictly decreasing");
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("horizon T must be positive");
        }
        if !(self.delta > 0.0 && self.delta < self.horizon) {
            return bad("delta must satisfy 0 < delta < T");
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return bad("alpha must lie in [0, 1)");
        }
        if self.family.dim() != self.grid.dim() {
            return bad("operator dimension does not match the grid");
        }
        if self.initial.grid() != &self.grid {
            return bad("initial field lives on another grid");
        }
        if self.solver.steps == 0 {
            return bad("solver steps must be >= 1");
        }
        if !(self.solver.substep_q > 0.0) {
            return bad("substep rule q must be positive");
        }
        Ok(())
    }

    /// `‖·‖_α` anchored at the symbol of `A(0)`.
    pub fn norm(&self) -> Result<FractionalNormSpec, HarnessError> {
        self.norm_with_alpha(self.alpha)
    }

    pub fn norm_with_alpha(&self, alpha: f64) -> Result<FractionalNormSpec, HarnessError> {
        let family = self.family.clone();
        let symbol = Arc::new(move |xi: &[f64]| family.eval_symbol(0.0, xi).unwrap_or(f64::NAN));
        Ok(FractionalNormSpec::new(alpha, symbol)?)
    }

    pub fn smallest_lambda(&self) -> f64 {
        self.lambdas.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Number of steps of the shared time mesh.
    pub fn mesh_steps(&self) -> usize {
        let resolve = (self.solver.mesh_per_lambda * self.horizon / self.smallest_lambda()).ceil() as usize;
        self.solver.steps.max(resolve)
    }

    pub fn solver_options(&self) -> Result<SolverOptions, HarnessError> {
        let mut opts = SolverOptions::new(self.norm()?);
        opts.scheme = self.solver.scheme;
        opts.substep_q = self.solver.substep_q;
        opts.node_budget = self.solver.node_budget;
        Ok(opts)
    }

    pub fn audit(&self) -> Result<AuditReport, HarnessError> {
        let mesh = AuditMesh::for_structure(&self.family.structure());
        let pure = self.forcing.as_ref().and_then(|f| match f.kind() {
            crate::mild::ForcingKind::Pure(family) => Some(family),
            _ => None,
        });
        Ok(audit_family(&self.family, pure, &self.grid, self.alpha, &mesh)?)
    }

    pub fn averaged_semigroup(&self) -> Result<AveragedSemigroup, HarnessError> {
        let avg = averaged_family(&self.family, &self.solver.cesaro_schedule, self.solver.cesaro_tol)?;
        Ok(AveragedSemigroup::from_family(&avg, self.grid.clone())?)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SweepOptions {
    /// Worker threads for per-λ runs; 0 uses the global pool.
    pub jobs: usize,
    /// Run even when the audit reports inconsistent declarations.
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub t: f64,
    pub error: f64,
    pub norm_lambda: f64,
    pub norm_averaged: f64,
}

/// Results for one λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaRun {
    pub index: usize,
    pub lambda: f64,
    /// `sup_{t∈[δ,T]} e_λ(t)` on the mesh.
    pub sup_delta: f64,
    /// `sup_{t∈[0,T]} e_λ(t)` on the mesh.
    pub sup_full: f64,
    pub error_at_zero: f64,
    pub table: Vec<TableRow>,
}

/// Least-squares fit of `log e = intercept + p·log λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderFit {
    pub order: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
    pub excluded_zero: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    Linear,
    Nonlinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEcho {
    pub dim: usize,
    pub points_per_axis: usize,
    pub lambdas: Vec<f64>,
    pub horizon: f64,
    pub delta: f64,
    pub alpha: f64,
    pub mesh_steps: usize,
    pub scheme: Scheme,
    pub substep_q: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragingReport {
    pub schema_version: u32,
    pub kind: SweepKind,
    pub mode: ConvergenceMode,
    pub config: ScenarioEcho,
    pub runs: Vec<LambdaRun>,
    /// Order of `sup_{[δ,T]} e` over every λ.
    pub fit_all: Option<OrderFit>,
    /// Same fit restricted to the asymptotic window `λ ≤ δ`.
    pub fit_asymptotic: Option<OrderFit>,
    /// Pairs of consecutive λ along which the `[δ,T]` sup does not decrease.
    pub non_monotone_pairs: usize,
    pub audit: Option<AuditReport>,
    pub notes: Vec<String>,
}

impl AveragingReport {
    /// Fit used for the summary line: the asymptotic window when it has
    /// enough points, otherwise the full list.
    pub fn headline_fit(&self) -> Option<&OrderFit> {
        self.fit_asymptotic.as_ref().or(self.fit_all.as_ref())
    }
}

/// `(p, intercept, r²)` for `log e` against `log λ`; zero errors are
/// excluded and counted.
pub fn fit_order(points: &[(f64, f64)]) -> Result<OrderFit, HarnessError> {
    let positive: Vec<(f64, f64)> = points
        .iter()
        .filter(|(l, e)| *e > 0.0 && *l > 0.0)
        .map(|(l, e)| (l.ln(), e.ln()))
        .collect();
    let excluded = points.len() - positive.len();
    if positive.len() < 3 {
        return Err(HarnessError::TooFewPoints(positive.len()));
    }
    let first = positive[0].0;
    if positive.iter().all(|p| p.0 == first) {
        return Err(HarnessError::DegenerateFit);
    }
    let n = positive.len() as f64;
    let mx = positive.iter().map(|p| p.0).sum::<f64>() / n;
    let my = positive.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = positive.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = positive.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = positive.iter().map(|p| (p.1 - my).powi(2)).sum();
    let order = sxy / sxx;
    let intercept = my - order * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(OrderFit {
        order,
        intercept,
        r_squared,
        points: positive.len(),
        excluded_zero: excluded,
    })
}

fn with_pool<T: Send>(jobs: usize, work: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    if jobs == 0 {
        return Ok(work());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::InvalidScenario(format!("thread pool: {e}")))?;
    Ok(pool.install(work))
}

fn build_run(index: usize, lambda: f64, delta: f64, rows: Vec<TableRow>) -> LambdaRun {
    let sup_full = rows.iter().map(|r| r.error).fold(0.0, f64::max);
    let sup_delta = rows
        .iter()
        .filter(|r| r.t >= delta * (1.0 - 1e-12))
        .map(|r| r.error)
        .fold(0.0, f64::max);
    LambdaRun {
        index,
        lambda,
        sup_delta,
        sup_full,
        error_at_zero: rows.first().map_or(0.0, |r| r.error),
        table: rows,
    }
}

fn finish_report(
    scenario: &Scenario,
    kind: SweepKind,
    runs: Vec<LambdaRun>,
    audit: Option<AuditReport>,
    mut notes: Vec<String>,
) -> AveragingReport {
    let points: Vec<(f64, f64)> = runs.iter().map(|r| (r.lambda, r.sup_delta)).collect();
    let fit_all = fit_order(&points).ok();
    let window: Vec<(f64, f64)> = points.iter().copied().filter(|(l, _)| *l <= scenario.delta).collect();
    let fit_asymptotic = fit_order(&window).ok();
    let non_monotone_pairs = runs
        .windows(2)
        .filter(|w| w[1].sup_delta > w[0].sup_delta || (w[1].sup_delta == w[0].sup_delta && w[0].sup_delta > 0.0))
        .count();
    notes.push(
        "uniformity is measured on t in [delta, T] with s = 0, not on t in [0, T] with s in [0, t - delta]"
            .into(),
    );
    let mode = scenario.perturbation.mode();
    if mode == ConvergenceMode::InX {
        notes.push("initial data converge in X only: the [0, T] sup is not expected to vanish".into());
    }
    AveragingReport {
        schema_version: REPORT_SCHEMA_VERSION,
        kind,
        mode,
        config: ScenarioEcho {
            dim: scenario.grid.dim(),
            points_per_axis: scenario.grid.points_per_axis(),
            lambdas: scenario.lambdas.clone(),
            horizon: scenario.horizon,
            delta: scenario.delta,
            alpha: scenario.alpha,
            mesh_steps: scenario.mesh_steps(),
            scheme: scenario.solver.scheme,
            substep_q: scenario.solver.substep_q,
            seed: scenario.seed,
        },
        runs,
        fit_all,
        fit_asymptotic,
        non_monotone_pairs,
        audit,
        notes,
    }
}

fn checked_audit(scenario: &Scenario, options: &SweepOptions) -> Result<(AuditReport, Vec<String>), HarnessError> {
    let audit = scenario.audit()?;
    let findings = audit.findings();
    if !findings.is_empty() && !options.force {
        return Err(HarnessError::AuditFailed(findings));
    }
    let notes = findings.into_iter().map(|f| format!("forced past audit finding: {f}")).collect();
    Ok((audit, notes))
}

/// Linear averaging: `u_λ(t) = U_λ(t,0)ū_λ` against `û(t) = Ŝ(t)ū`.
pub fn run_linear_sweep(scenario: &Scenario, options: &SweepOptions) -> Result<AveragingReport, HarnessError> {
    scenario.validate()?;
    if scenario.forcing.is_some() {
        return Err(HarnessError::UnexpectedForcing);
    }
    let (audit, notes) = checked_audit(scenario, options)?;
    let semigroup = scenario.averaged_semigroup()?;
    let norm = scenario.norm()?;
    let steps = scenario.mesh_steps();
    let times: Vec<f64> = (0..=steps)
        .map(|k| scenario.horizon * k as f64 / steps as f64)
        .collect();
    let mut averaged = Vec::with_capacity(times.len());
    for &t in &times {
        let mut u = semigroup.evolve_averaged(t, &scenario.initial)?;
        let n = u.fractional_norm(&norm)?;
        averaged.push((u, n));
    }
    let runs = with_pool(options.jobs, || {
        scenario
            .lambdas
            .par_iter()
            .enumerate()
            .map(|(index, &lambda)| -> Result<LambdaRun, HarnessError> {
                let prop = SpectralPropagator::new(scenario.family.clone(), scenario.grid.clone(), lambda)?;
                let start = scenario.perturbation.apply(&scenario.initial, index, lambda, &norm)?;
                let mut rows = Vec::with_capacity(times.len());
                for (&t, (avg, avg_norm)) in times.iter().zip(&averaged) {
                    let mut u = prop.evolve(0.0, t, &start)?;
                    let n = u.fractional_norm(&norm)?;
                    let mut a = avg.clone();
                    let error = u.difference(&mut a)?.fractional_norm(&norm)?;
                    rows.push(TableRow {
                        t,
                        error,
                        norm_lambda: n,
                        norm_averaged: *avg_norm,
                    });
                }
                Ok(build_run(index, lambda, scenario.delta, rows))
            })
            .collect::<Result<Vec<_>, _>>()
    })??;
    Ok(finish_report(scenario, SweepKind::Linear, runs, Some(audit), notes))
}

fn rows_from(traj: &Trajectory, averaged: &Trajectory, norm: &FractionalNormSpec) -> Result<Vec<TableRow>, HarnessError> {
    traj.times
        .iter()
        .zip(traj.states.iter().zip(&traj.norms))
        .zip(averaged.states.iter().zip(&averaged.norms))
        .map(|((&t, (u, n)), (a, an))| {
            let mut u = u.clone();
            let mut a = a.clone();
            Ok(TableRow {
                t,
                error: u.difference(&mut a)?.fractional_norm(norm)?,
                norm_lambda: *n,
                norm_averaged: *an,
            })
        })
        .collect()
}

/// Nonlinear averaging: mild solutions against the averaged problem.
pub fn run_nonlinear_sweep(scenario: &Scenario, options: &SweepOptions) -> Result<AveragingReport, HarnessError> {
    scenario.validate()?;
    let forcing = scenario.forcing.as_ref().ok_or(HarnessError::MissingForcing)?;
    let (audit, mut notes) = checked_audit(scenario, options)?;
    let semigroup = scenario.averaged_semigroup()?;
    let averaged_forcing = forcing.averaged(&scenario.grid, &scenario.solver.cesaro_schedule, scenario.solver.cesaro_tol)?;
    let opts = scenario.solver_options()?;
    let norm = scenario.norm()?;
    let steps = scenario.mesh_steps();
    let averaged = solve_averaged(
        &semigroup,
        Some(&averaged_forcing),
        &scenario.initial,
        scenario.horizon,
        steps,
        &opts,
    )?;
    let runs = with_pool(options.jobs, || {
        scenario
            .lambdas
            .par_iter()
            .enumerate()
            .map(|(index, &lambda)| -> Result<LambdaRun, HarnessError> {
                let start = scenario.perturbation.apply(&scenario.initial, index, lambda, &norm)?;
                let traj = solve_mild(
                    scenario.family.clone(),
                    lambda,
                    Some(forcing),
                    &start,
                    scenario.horizon,
                    steps,
                    &opts,
                )?;
                Ok(build_run(index, lambda, scenario.delta, rows_from(&traj, &averaged, &norm)?))
            })
            .collect::<Result<Vec<_>, _>>()
    })??;
    if scenario.perturbation.mode() == ConvergenceMode::InXAlpha {
        notes.push("initial data converge in X^alpha: the [0, T] sup is expected to vanish".into());
    }
    Ok(finish_report(scenario, SweepKind::Nonlinear, runs, Some(audit), notes))
}

/// Residual of the commutation identity at each mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub intervals: Vec<usize>,
    pub residuals: Vec<f64>,
    /// `residual[i] / residual[i+1]`.
    pub ratios: Vec<f64>,
    /// `‖Ŝ(t−s)ū − U_λ(t,s)ū‖_α`.
    pub lhs_norm: f64,
    /// `‖ū‖_1`.
    pub initial_norm_one: f64,
}

/// Evaluates both sides of the identity mode-wise; the right side by
/// composite fourth-order quadrature on each mesh in `intervals`.
pub fn identity_residual(
    scenario: &Scenario,
    lambda: f64,
    initial: &Field,
    s: f64,
    t: f64,
    intervals: &[usize],
) -> Result<IdentityResidual, HarnessError> {
    if !(s < t) {
        return Err(HarnessError::InvalidScenario("identity check needs s < t".into()));
    }
    let prop = SpectralPropagator::new(scenario.family.clone(), scenario.grid.clone(), lambda)?;
    let semigroup = scenario.averaged_semigroup()?;
    let p_hat = semigroup.symbol().expect("spectral generator").to_vec();
    let norm = scenario.norm()?;
    let mut u0 = initial.clone();
    let modes0 = u0.modes().to_vec();

    let mut lhs = semigroup.evolve(s, t, initial)?;
    let mut direct = prop.evolve(s, t, initial)?;
    let mut lhs = lhs.difference(&mut direct)?;
    let lhs_norm = lhs.fractional_norm(&norm)?;

    let mut residuals = Vec::with_capacity(intervals.len());
    for &n in intervals {
        if n < 2 {
            return Err(HarnessError::InvalidScenario("identity mesh needs >= 2 intervals".into()));
        }
        let h = (t - s) / n as f64;
        let weights = composite_fourth_order_weights(n, h);
        let mut acc = vec![num_complex::Complex64::new(0.0, 0.0); modes0.len()];
        for (j, w) in weights.iter().enumerate() {
            let r = if j == n { t } else { s + h * j as f64 };
            let outer = prop.mode_factors(r, t)?;
            let symbol = prop.symbol_at(r)?;
            for m in 0..acc.len() {
                let inner = (-(r - s) * p_hat[m]).exp();
                acc[m] += modes0[m] * (w * outer[m] * (symbol[m] - p_hat[m]) * inner);
            }
        }
        let mut rhs = Field::from_modes(&scenario.grid, acc);
        residuals.push(lhs.difference(&mut rhs)?.fractional_norm(&norm)?);
    }
    let ratios = residuals.windows(2).map(|w| w[0] / w[1]).collect();
    let initial_norm_one = u0.fractional_norm(&norm.with_alpha(1.0)?)?;
    Ok(IdentityResidual {
        intervals: intervals.to_vec(),
        residuals,
        ratios,
        lhs_norm,
        initial_norm_one,
    })
}
