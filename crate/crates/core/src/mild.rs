//! Mild solutions of `u̇ = −A(t/λ)u + F(t/λ, u)` and of the averaged problem
//! `u̇ = −Âu + F̂(u)` by exponential stepping:
//!
//! ```text
//! u_{k+1} = U(t_{k+1}, t_k) u_k + ∫_{t_k}^{t_{k+1}} U(t_{k+1}, σ) F(σ/λ, ũ) dσ
//! ```
//!
//! The linear part is exact on the spectral backend. The Duhamel integral is
//! split into `max(1, ⌈h/(λq)⌉)` panels with two Gauss–Legendre nodes each,
//! and `ũ` is either `u_k` (first order) or a predictor at the step midpoint
//! (second order).

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OperatorError, SolverError, SpectralError};
use crate::evolution::{matrix_exponential, AveragedSemigroup, ModePropagator, SpectralPropagator};
use crate::operator::{averaged_forcing, cesaro_average, Coefficient, CoefficientFamily, ForcingFamily};
use crate::quadrature::GaussLegendre;
use crate::spectral::{Field, FractionalNormSpec, SpectralGrid};

pub type ScalarMap = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// How `F(t, u)` depends on time and state.
#[derive(Clone)]
pub enum ForcingKind {
    /// `F(t, u) = f(t, ·)`, independent of `u`.
    Pure(ForcingFamily),
    /// `F(t, u)(x) = c(t) · φ(u(x))` acting on the real part of `u`.
    Reaction {
        modulation: Coefficient,
        map: ScalarMap,
        /// `sup |φ'|`, used by the Lipschitz audit.
        derivative_bound: f64,
    },
    /// Time-independent forcing field, e.g. an averaged `f̂`.
    Steady(Field),
}

impl fmt::Debug for ForcingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Pure(family) => f.debug_tuple("Pure").field(family).finish(),
            Self::Reaction {
                modulation,
                derivative_bound,
                ..
            } => f
                .debug_struct("Reaction")
                .field("modulation", modulation)
                .field("derivative_bound", derivative_bound)
                .finish(),
            Self::Steady(_) => write!(f, "Steady(..)"),
        }
    }
}

/// The perturbation `F` with its growth constant `C` and Lipschitz map `Q(R)`.
#[derive(Clone)]
pub struct NonlinearForcing {
    kind: ForcingKind,
    lipschitz: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    growth_c: Option<f64>,
}

impl fmt::Debug for NonlinearForcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonlinearForcing")
            .field("kind", &self.kind)
            .field("growth_c", &self.growth_c)
            .finish()
    }
}

impl NonlinearForcing {
    pub fn new(kind: ForcingKind, growth_c: Option<f64>, lipschitz: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            kind,
            lipschitz: Arc::new(lipschitz),
            growth_c,
        }
    }

    /// Pure forcing: Lipschitz constant zero.
    pub fn pure(forcing: ForcingFamily, growth_c: Option<f64>) -> Self {
        Self::new(ForcingKind::Pure(forcing), growth_c, |_| 0.0)
    }

    pub fn kind(&self) -> &ForcingKind {
        &self.kind
    }

    pub fn growth_c(&self) -> Option<f64> {
        self.growth_c
    }

    pub fn with_growth_c(mut self, c: Option<f64>) -> Self {
        self.growth_c = c;
        self
    }

    pub fn lipschitz_q(&self, radius: f64) -> f64 {
        (self.lipschitz)(radius)
    }

    /// `F(t, u)` in fast time `t`.
    pub fn eval(&self, t: f64, u: &Field) -> Field {
        let grid = u.grid().clone();
        match &self.kind {
            ForcingKind::Pure(family) => family.field_at(t, &grid),
            ForcingKind::Reaction { modulation, map, .. } => {
                let c = modulation.eval(t);
                let mut state = u.clone();
                let values: Vec<Complex64> = state
                    .values()
                    .iter()
                    .map(|v| Complex64::new(c * map(v.re), 0.0))
                    .collect();
                Field::from_values(&grid, values)
            }
            ForcingKind::Steady(field) => field.clone(),
        }
    }

    /// Does `F` ignore the state?
    pub fn is_state_independent(&self) -> bool {
        !matches!(self.kind, ForcingKind::Reaction { .. })
    }

    /// `F̂(u) = lim (1/ω)∫_0^ω F(t, u) dt`.
    pub fn averaged(&self, grid: &Arc<SpectralGrid>, schedule: &[f64], tol: f64) -> Result<Self, OperatorError> {
        let kind = match &self.kind {
            ForcingKind::Pure(family) => ForcingKind::Steady(averaged_forcing(family, grid, schedule, tol)?),
            ForcingKind::Reaction {
                modulation,
                map,
                derivative_bound,
            } => {
                let r = cesaro_average(&|t| modulation.eval(t), &modulation.structure(), schedule, tol)?;
                if !r.converged {
                    let n = r.history.len();
                    return Err(OperatorError::NotConverged {
                        entry: "reaction modulation".into(),
                        previous: r.history[n - 2].1,
                        last: r.history[n - 1].1,
                    });
                }
                ForcingKind::Reaction {
                    modulation: Coefficient::Constant(r.value),
                    map: map.clone(),
                    derivative_bound: *derivative_bound,
                }
            }
            ForcingKind::Steady(f) => ForcingKind::Steady(f.clone()),
        };
        Ok(Self {
            kind,
            lipschitz: self.lipschitz.clone(),
            growth_c: self.growth_c,
        })
    }

    /// Sample `‖F(t,u)‖/(1+‖u‖_α)` and `‖F(t,u)−F(t,v)‖/‖u−v‖_α` on seeded
    /// random smooth states of α-norm up to each radius.
    pub fn audit(
        &self,
        grid: &Arc<SpectralGrid>,
        norm: &FractionalNormSpec,
        time_mesh: &[f64],
        radii: &[f64],
        seed: u64,
    ) -> Result<ForcingAudit, SpectralError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut growth: f64 = 0.0;
        let mut lipschitz = Vec::with_capacity(radii.len());
        for &radius in radii {
            let mut worst: f64 = 0.0;
            for &t in time_mesh {
                let mut u = random_smooth_field(grid, &mut rng);
                let mut v = random_smooth_field(grid, &mut rng);
                let nu = u.fractional_norm(norm)?;
                let nv = v.fractional_norm(norm)?;
                let su = radius * rng.random::<f64>() / nu.max(f64::MIN_POSITIVE);
                let sv = radius * rng.random::<f64>() / nv.max(f64::MIN_POSITIVE);
                u.scale_modes(&vec![su; grid.len()]);
                v.scale_modes(&vec![sv; grid.len()]);
                for state in [&mut u, &mut v] {
                    let n = state.fractional_norm(norm)?;
                    growth = growth.max(self.eval(t, state).l2_norm() / (1.0 + n));
                }
                let mut fu = self.eval(t, &u);
                let mut fv = self.eval(t, &v);
                let df = fu.difference(&mut fv)?.l2_norm();
                let du = u.difference(&mut v)?.fractional_norm(norm)?;
                if du > 0.0 {
                    worst = worst.max(df / du);
                }
            }
            lipschitz.push(LipschitzSample {
                radius,
                measured: worst,
                declared: self.lipschitz_q(radius),
            });
        }
        let growth_ok = self.growth_c.is_none_or(|c| growth <= c * (1.0 + 1e-9));
        let lipschitz_ok = lipschitz.iter().all(|l| l.measured <= l.declared * (1.0 + 1e-9) + 1e-14);
        Ok(ForcingAudit {
            growth_ratio: growth,
            declared_c: self.growth_c,
            lipschitz,
            satisfied: growth_ok && lipschitz_ok,
        })
    }
}

fn random_smooth_field(grid: &Arc<SpectralGrid>, rng: &mut ChaCha8Rng) -> Field {
    let coeffs: Vec<(f64, f64)> = (0..8 * grid.dim())
        .map(|_| (rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let periods = grid.periods().to_vec();
    Field::from_real_fn(grid, |x| {
        let mut v = 0.0;
        for (d, (&xd, &p)) in x.iter().zip(&periods).enumerate() {
            for k in 1..=8 {
                let (a, b) = coeffs[d * 8 + k - 1];
                let arg = 2.0 * std::f64::consts::PI * k as f64 * xd / p;
                v += (a * arg.cos() + b * arg.sin()) / (k * k) as f64;
            }
        }
        v
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzSample {
    pub radius: f64,
    pub measured: f64,
    pub declared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingAudit {
    pub growth_ratio: f64,
    pub declared_c: Option<f64>,
    pub lipschitz: Vec<LipschitzSample>,
    pub satisfied: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    FirstOrder,
    SecondOrder,
}

/// Stepping controls shared by the mild and averaged solvers.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub scheme: Scheme,
    /// Fast-scale resolution `q`: panels per step are `⌈h/(λq)⌉`.
    pub substep_q: f64,
    /// Largest number of quadrature nodes allowed per step.
    pub node_budget: usize,
    pub norm: FractionalNormSpec,
}

impl SolverOptions {
    pub fn new(norm: FractionalNormSpec) -> Self {
        Self {
            scheme: Scheme::SecondOrder,
            substep_q: 0.125,
            node_budget: 1 << 16,
            norm,
        }
    }
}

/// Solution on a uniform time mesh.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Field>,
    /// `‖u(t)‖_α` per mesh time.
    pub norms: Vec<f64>,
    pub scheme: Scheme,
    pub steps: usize,
    /// `None` for the averaged problem.
    pub lambda: Option<f64>,
    pub alpha: f64,
    /// Largest `‖F(t,u)‖/(1+‖u‖_α)` seen during the solve.
    pub max_growth_ratio: f64,
}

/// Mild solution with the exact spectral propagator `U_λ`.
pub fn solve_mild(
    family: Arc<CoefficientFamily>,
    lambda: f64,
    forcing: Option<&NonlinearForcing>,
    initial: &Field,
    horizon: f64,
    steps: usize,
    options: &SolverOptions,
) -> Result<Trajectory, SolverError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(SolverError::BadLambda(lambda));
    }
    let propagator = SpectralPropagator::new(family, initial.grid().clone(), lambda)?;
    step_exponential(&propagator, Some(lambda), forcing, initial, horizon, steps, options)
}

/// Solution of `u̇ = −Âu + F̂(u)` with the averaged semigroup.
pub fn solve_averaged(
    semigroup: &AveragedSemigroup,
    forcing: Option<&NonlinearForcing>,
    initial: &Field,
    horizon: f64,
    steps: usize,
    options: &SolverOptions,
) -> Result<Trajectory, SolverError> {
    if semigroup.symbol().is_none() {
        return Err(SolverError::Evolution(crate::error::EvolutionError::Unsupported(
            "use solve_averaged_matrix for a matrix generator".into(),
        )));
    }
    step_exponential(semigroup, None, forcing, initial, horizon, steps, options)
}

fn step_exponential(
    propagator: &impl ModePropagator,
    lambda: Option<f64>,
    forcing: Option<&NonlinearForcing>,
    initial: &Field,
    horizon: f64,
    steps: usize,
    options: &SolverOptions,
) -> Result<Trajectory, SolverError> {
    if steps == 0 {
        return Err(SolverError::NoSteps);
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(SolverError::BadHorizon(horizon));
    }
    if initial.grid() != propagator.grid() {
        return Err(SpectralError::GridMismatch.into());
    }
    let h = horizon / steps as f64;
    let panels = match lambda {
        Some(l) => ((h / (l * options.substep_q)).ceil() as usize).max(1),
        None => 1,
    };
    let gauss = GaussLegendre::new(2);
    if forcing.is_some() && 2 * panels > options.node_budget {
        return Err(SolverError::NodeBudget {
            needed: 2 * panels,
            budget: options.node_budget,
        });
    }
    let fast = |sigma: f64| lambda.map_or(sigma, |l| sigma / l);
    let mut stepper = Stepper {
        propagator,
        forcing,
        options,
        gauss: &gauss,
        fast: &fast,
        max_growth: 0.0,
        step: 0,
    };

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut norms = Vec::with_capacity(steps + 1);
    let mut u = initial.clone();
    u.to_modes();
    times.push(0.0);
    norms.push(u.fractional_norm(&options.norm)?);
    states.push(u.clone());
    for k in 0..steps {
        stepper.step = k;
        let t0 = horizon * k as f64 / steps as f64;
        let t1 = horizon * (k + 1) as f64 / steps as f64;
        u = stepper.advance(&u, t0, t1, panels)?;
        times.push(t1);
        norms.push(u.fractional_norm(&options.norm)?);
        states.push(u.clone());
    }
    Ok(Trajectory {
        times,
        states,
        norms,
        scheme: options.scheme,
        steps,
        lambda,
        alpha: options.norm.alpha(),
        max_growth_ratio: stepper.max_growth,
    })
}

struct Stepper<'a, P: ModePropagator> {
    propagator: &'a P,
    forcing: Option<&'a NonlinearForcing>,
    options: &'a SolverOptions,
    gauss: &'a GaussLegendre,
    fast: &'a dyn Fn(f64) -> f64,
    max_growth: f64,
    step: usize,
}

impl<P: ModePropagator> Stepper<'_, P> {
    fn advance(&mut self, u: &Field, t0: f64, t1: f64, panels: usize) -> Result<Field, SolverError> {
        let Some(forcing) = self.forcing else {
            return Ok(self.propagator.evolve(t0, t1, u)?);
        };
        let state = match self.options.scheme {
            Scheme::SecondOrder if !forcing.is_state_independent() => {
                let mid = 0.5 * (t0 + t1);
                let half_panels = panels.div_ceil(2).max(1);
                let predictor = self.duhamel(forcing, u, u, t0, mid, half_panels)?;
                Some(predictor)
            }
            _ => None,
        };
        let frozen = state.as_ref().unwrap_or(u);
        self.duhamel(forcing, u, frozen, t0, t1, panels)
    }

    /// `U(t1,t0)u + Σ_i w_i U(t1,σ_i) F(σ_i/λ, frozen)`.
    fn duhamel(
        &mut self,
        forcing: &NonlinearForcing,
        u: &Field,
        frozen: &Field,
        t0: f64,
        t1: f64,
        panels: usize,
    ) -> Result<Field, SolverError> {
        let mut out = self.propagator.evolve(t0, t1, u)?;
        let mut frozen_state = frozen.clone();
        let frozen_norm = frozen_state.fractional_norm(&self.options.norm)?;
        let width = (t1 - t0) / panels as f64;
        for p in 0..panels {
            let a = t0 + width * p as f64;
            let b = if p + 1 == panels { t1 } else { t0 + width * (p + 1) as f64 };
            for (sigma, w) in self.gauss.mapped(a, b) {
                let mut f = forcing.eval((self.fast)(sigma), &frozen_state);
                let fnorm = f.l2_norm();
                let ratio = fnorm / (1.0 + frozen_norm);
                self.max_growth = self.max_growth.max(ratio);
                if let Some(c) = forcing.growth_c() {
                    let bound = c * (1.0 + frozen_norm);
                    if fnorm > bound * (1.0 + 1e-9) {
                        return Err(SolverError::GrowthBound {
                            step: self.step,
                            t: sigma,
                            forcing_norm: fnorm,
                            bound,
                        });
                    }
                }
                let mut evolved = self.propagator.evolve(sigma, t1, &f)?;
                out.add_scaled(w, &mut evolved)?;
            }
        }
        Ok(out)
    }
}

/// Trajectory of the matrix problem `v̇ = −Âv + F̂(v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

/// Exponential midpoint stepping for the matrix averaged problem.
pub fn solve_averaged_matrix(
    a_hat: &DMatrix<f64>,
    forcing: Option<&dyn Fn(&DVector<f64>) -> DVector<f64>>,
    initial: &DVector<f64>,
    horizon: f64,
    steps: usize,
) -> Result<MatrixTrajectory, SolverError> {
    if steps == 0 {
        return Err(SolverError::NoSteps);
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(SolverError::BadHorizon(horizon));
    }
    let h = horizon / steps as f64;
    let full = matrix_exponential(a_hat, h)?;
    let half = matrix_exponential(a_hat, 0.5 * h)?;
    let gauss = GaussLegendre::new(2);
    let node_props: Vec<(DMatrix<f64>, f64)> = gauss
        .mapped(0.0, h)
        .map(|(x, w)| Ok((matrix_exponential(a_hat, h - x)?, w)))
        .collect::<Result<_, SolverError>>()?;
    let half_props: Vec<(DMatrix<f64>, f64)> = gauss
        .mapped(0.0, 0.5 * h)
        .map(|(x, w)| Ok((matrix_exponential(a_hat, 0.5 * h - x)?, w)))
        .collect::<Result<_, SolverError>>()?;
    let mut times = vec![0.0];
    let mut states = vec![initial.clone()];
    let mut v = initial.clone();
    for k in 0..steps {
        v = match forcing {
            None => &full * &v,
            Some(f) => {
                let fv = f(&v);
                let mut mid = &half * &v;
                for (p, w) in &half_props {
                    mid += (p * &fv) * *w;
                }
                let fm = f(&mid);
                let mut next = &full * &v;
                for (p, w) in &node_props {
                    next += (p * &fm) * *w;
                }
                next
            }
        };
        times.push(horizon * (k + 1) as f64 / steps as f64);
        states.push(v.clone());
    }
    Ok(MatrixTrajectory { times, states })
}

/// Outcome of [`check_apriori_bound`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AprioriReport {
    /// `C̄` with `sup ‖u‖_α ≤ C̄(1 + ‖ū‖_α)`.
    pub c_bar: f64,
    pub bound: f64,
    pub observed_sup: f64,
    /// `bound − observed_sup`.
    pub margin: f64,
    /// Largest `‖F‖/(1+‖u‖_α)` along the trajectory.
    pub observed_growth: f64,
    pub findings: Vec<String>,
    pub satisfied: bool,
}

/// Singular-kernel Gronwall bound for the mild solution.
///
/// With `φ(t) = ‖u(t)‖_α`, the smoothing estimate and the growth bound give
/// `φ(t) ≤ a + b∫_0^t (t−s)^{−α} φ(s) ds` where
/// `a = K‖ū‖_α + KC(T + T^{1−α}/(1−α))` and `b = KC(1 + T^α)`, hence
/// `φ(t) ≤ a·E_{1−α}(θt)` with `θ = (bΓ(1−α))^{1/(1−α)}` and the
/// Mittag-Leffler type series `E_β(z) = Σ z^{nβ}/Γ(nβ+1)`. `K` is raised to
/// at least one since the multiplier propagators are contractions on `X^α`.
pub fn check_apriori_bound(trajectory: &Trajectory, k: f64, c: f64, horizon: f64) -> AprioriReport {
    let alpha = trajectory.alpha;
    let k = k.max(1.0);
    let u0 = trajectory.norms[0];
    let beta = 1.0 - alpha;
    let a = k * u0 + k * c * (horizon + horizon.powf(beta) / beta);
    let b = k * c * (1.0 + horizon.powf(alpha));
    let theta = (b * statrs::function::gamma::gamma(beta)).powf(1.0 / beta);
    let bound = a * henry_series(beta, theta * horizon);
    let c_bar = bound / (1.0 + u0);
    let observed_sup = trajectory
        .times
        .iter()
        .zip(&trajectory.norms)
        .filter(|(t, _)| **t <= horizon * (1.0 + 1e-12))
        .map(|(_, n)| *n)
        .fold(0.0, f64::max);
    let mut findings = Vec::new();
    if observed_sup > bound * (1.0 + 1e-12) {
        findings.push(format!(
            "a-priori bound violated: sup ‖u‖_α = {observed_sup:.6e} > C̄(1+‖ū‖_α) = {bound:.6e}"
        ));
    }
    if trajectory.max_growth_ratio > c * (1.0 + 1e-9) {
        findings.push(format!(
            "growth constant too small: observed ‖F‖/(1+‖u‖_α) = {:.6e} > C = {c:.6e}",
            trajectory.max_growth_ratio
        ));
    }
    AprioriReport {
        c_bar,
        bound,
        observed_sup,
        margin: bound - observed_sup,
        observed_growth: trajectory.max_growth_ratio,
        satisfied: findings.is_empty(),
        findings,
    }
}

/// `E_β(z) = Σ_n z^{nβ}/Γ(nβ+1)` for `z ≥ 0`.
pub fn henry_series(beta: f64, z: f64) -> f64 {
    if z <= 0.0 {
        return 1.0;
    }
    let lz = z.ln();
    let mut sum = 1.0;
    let mut peaked = false;
    for n in 1..100_000 {
        let x = n as f64 * beta;
        let term = (x * lz - statrs::function::gamma::ln_gamma(x + 1.0)).exp();
        sum += term;
        if x > z.powf(beta) {
            peaked = true;
        }
        if peaked && term < 1e-17 * sum {
            break;
        }
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::DeclaredConstants;
    use crate::profile::SpatialProfile;
    use crate::spectral::make_grid;
    use std::f64::consts::PI;

    fn declared() -> DeclaredConstants {
        DeclaredConstants {
            nu0: 1.0,
            c1: 1.0,
            c2: 1.0,
            holder_l: 1.0,
            holder_gamma: 1.0,
        }
    }

    fn h1_norm() -> FractionalNormSpec {
        FractionalNormSpec::new(0.5, Arc::new(|xi: &[f64]| 1.0 + xi.iter().map(|x| x * x).sum::<f64>())).unwrap()
    }

    fn forced_mode_oracle(t: f64) -> f64 {
        (3.0 * t.cos() + t.sin() - 3.0 * (-3.0 * t).exp()) / 10.0
    }

    fn forced_mode_setup() -> (Arc<CoefficientFamily>, NonlinearForcing, Field) {
        let grid = make_grid(1, 8, 2.0 * PI).unwrap();
        let fam = Arc::new(CoefficientFamily::scalar(
            Coefficient::Constant(1.0),
            Coefficient::Constant(2.0),
            declared(),
        ));
        let forcing = NonlinearForcing::pure(
            ForcingFamily::Separable {
                time: Coefficient::cosine(0.0, 1.0, 1.0, 0.0),
                space: SpatialProfile::single_mode(vec![1], 1.0),
            },
            None,
        );
        (fam, forcing, Field::zeros(&grid))
    }

    /// Amplitude of cos(x) in a real field on a 2π grid.
    fn cos_amplitude(field: &mut Field) -> f64 {
        let grid = field.grid().clone();
        let m = (0..grid.len()).find(|&m| grid.frequency(m)[0] == 1.0).unwrap();
        let p = grid.len() as f64;
        2.0 * field.modes()[m].re / p.sqrt()
    }

    #[test]
    fn forced_mode_closed_form() {
        let (fam, forcing, u0) = forced_mode_setup();
        let opts = SolverOptions::new(h1_norm());
        let traj = solve_mild(fam, 1.0, Some(&forcing), &u0, 1.0, 256, &opts).unwrap();
        let mut last = traj.states.last().unwrap().clone();
        let v = cos_amplitude(&mut last);
        assert!((v - forced_mode_oracle(1.0)).abs() < 1e-10, "{v}");
        assert!((forced_mode_oracle(1.0) - 0.231_301_7).abs() < 1e-7);
    }

    #[test]
    fn zero_forcing_is_exact_propagation() {
        let grid = make_grid(1, 16, 2.0 * PI).unwrap();
        let fam = Arc::new(CoefficientFamily::scalar(
            Coefficient::cosine(2.0, 1.0, 1.0, 0.0),
            Coefficient::Constant(1.0),
            declared(),
        ));
        let u0 = Field::from_real_fn(&grid, |x| x[0].cos() + 0.3 * (3.0 * x[0]).sin());
        let opts = SolverOptions::new(h1_norm());
        let traj = solve_mild(fam.clone(), 0.25, None, &u0, 1.0, 10, &opts).unwrap();
        let prop = SpectralPropagator::new(fam, grid, 0.25).unwrap();
        for (t, state) in traj.times.iter().zip(&traj.states) {
            let mut direct = prop.evolve_spectral(0.0, *t, &u0).unwrap();
            let mut s = state.clone();
            assert!(s.difference(&mut direct).unwrap().l2_norm() < 1e-13);
        }
    }

    #[test]
    fn cubic_reaction_dissipates() {
        let grid = make_grid(1, 32, 2.0 * PI).unwrap();
        let fam = Arc::new(CoefficientFamily::scalar(
            Coefficient::cosine(2.0, 1.0, 1.0, 0.0),
            Coefficient::Constant(1.0),
            declared(),
        ));
        let forcing = NonlinearForcing::new(
            ForcingKind::Reaction {
                modulation: Coefficient::Constant(1.0),
                map: Arc::new(|u: f64| -u * u * u),
                derivative_bound: 0.03,
            },
            None,
            |r| 3.0 * r * r,
        );
        let u0 = Field::from_real_fn(&grid, |x| 0.1 * x[0].cos());
        let mut opts = SolverOptions::new(h1_norm());
        opts.norm = opts.norm.with_alpha(0.0).unwrap();
        let traj = solve_mild(fam, 0.5, Some(&forcing), &u0, 1.0, 100, &opts).unwrap();
        assert!(traj.norms.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn averaged_steady_state() {
        let grid = make_grid(1, 16, 2.0 * PI).unwrap();
        let fam = CoefficientFamily::scalar(Coefficient::Constant(2.0), Coefficient::Constant(0.0), declared());
        let sg = AveragedSemigroup::from_family(&fam, grid.clone()).unwrap();
        let forcing = NonlinearForcing::new(
            ForcingKind::Steady(Field::from_real_fn(&grid, |x| x[0].cos())),
            None,
            |_| 0.0,
        );
        let opts = SolverOptions::new(h1_norm());
        let traj = solve_averaged(&sg, Some(&forcing), &Field::zeros(&grid), 20.0, 400, &opts).unwrap();
        let mut last = traj.states.last().unwrap().clone();
        // fixed point of the mode ODE: f̂_ξ / p̂(ξ) = 1/2; two Gauss nodes per step
        assert!((cos_amplitude(&mut last) - 0.5).abs() < 1e-7);
    }

    #[test]
    fn averaged_matrix_backend() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let traj = solve_averaged_matrix(&a, None, &DVector::from_vec(vec![1.0, 1.0]), 1.0, 10).unwrap();
        let last = traj.states.last().unwrap();
        assert!((last[0] - (-1f64).exp()).abs() < 1e-14);
        assert!((last[1] - (-2f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (fam, forcing, u0) = forced_mode_setup();
        let opts = SolverOptions::new(h1_norm());
        assert_eq!(
            solve_mild(fam.clone(), 0.0, Some(&forcing), &u0, 1.0, 4, &opts).unwrap_err(),
            SolverError::BadLambda(0.0)
        );
        assert_eq!(
            solve_mild(fam.clone(), 1.0, None, &u0, 1.0, 0, &opts).unwrap_err(),
            SolverError::NoSteps
        );
        let mut tight = opts.clone();
        tight.node_budget = 4;
        assert!(matches!(
            solve_mild(fam, 1e-3, Some(&forcing), &u0, 1.0, 4, &tight),
            Err(SolverError::NodeBudget { .. })
        ));
    }

    #[test]
    fn growth_check_fires_on_small_c() {
        let (fam, forcing, u0) = forced_mode_setup();
        let forcing = forcing.with_growth_c(Some(0.1));
        let opts = SolverOptions::new(h1_norm());
        assert!(matches!(
            solve_mild(fam, 1.0, Some(&forcing), &u0, 1.0, 16, &opts),
            Err(SolverError::GrowthBound { .. })
        ));
    }

    #[test]
    fn apriori_bound_cases() {
        let (fam, forcing, u0) = forced_mode_setup();
        let opts = SolverOptions::new(h1_norm());
        let free = solve_mild(
            fam.clone(),
            1.0,
            None,
            &Field::from_real_fn(u0.grid(), |x| x[0].cos()),
            1.0,
            8,
            &opts,
        )
        .unwrap();
        let r = check_apriori_bound(&free, 1.0, 0.0, 1.0);
        // K = 1 makes the bound exactly ‖ū‖_α, attained at t = 0
        assert!(r.satisfied && r.margin >= 0.0);
        assert_eq!(r.observed_sup, free.norms[0]);
        assert!(check_apriori_bound(&free, 2.0, 0.0, 1.0).margin > 0.0);

        let traj = solve_mild(fam, 1.0, Some(&forcing), &u0, 1.0, 64, &opts).unwrap();
        // ‖cos x‖_{L²} on [0, 2π] is √π
        let c = PI.sqrt();
        let r = check_apriori_bound(&traj, 1.0, c, 1.0);
        assert!(r.satisfied, "{:?}", r.findings);
        let oracle = traj.norms.iter().copied().fold(0.0, f64::max);
        assert_eq!(r.observed_sup, oracle);

        let r = check_apriori_bound(&traj, 1.0, 0.1, 1.0);
        assert!(!r.satisfied);
    }

    #[test]
    fn henry_series_limits() {
        // β = 1 gives the exponential
        assert!((henry_series(1.0, 2.0) - 2f64.exp()).abs() < 1e-12);
        // β = 1/2: E(z) = e^{z}·erfc(−√z) with z = x², i.e. e^{x²}(1+erf x)
        let x: f64 = 1.3;
        let expected = (x * x).exp() * (1.0 + statrs::function::erf::erf(x));
        assert!((henry_series(0.5, x * x) - expected).abs() < 1e-10 * expected);
    }

    #[test]
    fn forcing_audit_detects_bad_constants() {
        let grid = make_grid(1, 16, 2.0 * PI).unwrap();
        let f = NonlinearForcing::new(
            ForcingKind::Reaction {
                modulation: Coefficient::cosine(0.0, 1.0, 1.0, 0.0),
                map: Arc::new(|u: f64| u.sin()),
                derivative_bound: 1.0,
            },
            Some(1.0),
            |_| 1.0,
        );
        let mesh = crate::operator::uniform_mesh(0.0, 6.0, 7);
        let audit = f.audit(&grid, &h1_norm(), &mesh, &[1.0, 4.0], 7).unwrap();
        assert!(audit.satisfied, "{audit:?}");
        let bad = f.clone().with_growth_c(Some(1e-3));
        assert!(!bad.audit(&grid, &h1_norm(), &mesh, &[1.0], 7).unwrap().satisfied);
    }
}
