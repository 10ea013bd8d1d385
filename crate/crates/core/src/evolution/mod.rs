//! Evolution systems `U_λ(t, s)` generated by `−A(t/λ)` and the averaged
//! semigroup `Ŝ(t) = e^{−tÂ}`.
//!
//! On the spectral backend each Fourier mode evolves by
//!
//! ```text
//! û(t, ξ) = exp(−Σ_ij I_ij(s,t) ξ_i ξ_j − I_g(s,t)) û(s, ξ),
//! I_c(s,t) = ∫_s^t c(ρ/λ) dρ,
//! ```
//!
//! with the coefficient integrals evaluated once per call. The matrix backend
//! ([`levi`]) builds `U(t, s)` for small dense families by the parametrix
//! construction.

mod expm;
pub mod levi;
pub mod probes;

use std::sync::{Arc, RwLock};

use nalgebra::DMatrix;

pub use expm::{matrix_exponential, spectral_norm};
pub use levi::{levi_evolution, levi_evolution_with, LeviOptions, LeviOutcome, MatrixAudit, MatrixFamily};
pub use probes::{
    check_s_derivative, probe_derivative_bound, probe_smoothing_constant, DerivativeSample, SmoothingProbe,
    SmoothingSample,
};

use crate::error::{EvolutionError, SpectralError};
use crate::operator::{Coefficient, CoefficientFamily};
use crate::quadrature::{integrate_adaptive, AdaptiveRule};
use crate::spectral::{Field, SpectralGrid};

/// Anything that acts diagonally on Fourier modes.
pub trait ModePropagator {
    fn grid(&self) -> &Arc<SpectralGrid>;

    /// Factor applied to each mode when evolving from `s` to `t`.
    fn mode_factors(&self, s: f64, t: f64) -> Result<Vec<f64>, EvolutionError>;

    fn evolve(&self, s: f64, t: f64, field: &Field) -> Result<Field, EvolutionError> {
        if field.grid() != self.grid() {
            return Err(SpectralError::GridMismatch.into());
        }
        let factors = self.mode_factors(s, t)?;
        let mut out = field.clone();
        out.scale_modes(&factors);
        Ok(out)
    }
}

/// Running primitive `Ψ(τ) = ∫_0^τ c` of a coefficient without a closed
/// form, tabulated at uniform breakpoints and extended on demand.
#[derive(Debug)]
struct PrimitiveTable {
    step: f64,
    cumulative: RwLock<Vec<f64>>,
}

impl PrimitiveTable {
    fn new(step: f64) -> Self {
        Self {
            step,
            cumulative: RwLock::new(vec![0.0]),
        }
    }

    fn value(&self, c: &Coefficient, tau: f64) -> Result<f64, EvolutionError> {
        let rule = AdaptiveRule::default();
        if tau < 0.0 {
            return Ok(-integrate_adaptive(|x| c.eval(x), tau, 0.0, rule)?);
        }
        let k = (tau / self.step).floor() as usize;
        let base = {
            let table = self.cumulative.read().expect("primitive table lock");
            table.get(k).copied()
        };
        let base = match base {
            Some(v) => v,
            None => {
                let mut table = self.cumulative.write().expect("primitive table lock");
                while table.len() <= k {
                    let j = table.len() - 1;
                    let lo = self.step * j as f64;
                    let piece = integrate_adaptive(|x| c.eval(x), lo, lo + self.step, rule)?;
                    let next = table[j] + piece;
                    table.push(next);
                }
                table[k]
            }
        };
        let lo = self.step * k as f64;
        Ok(base + integrate_adaptive(|x| c.eval(x), lo, tau, rule)?)
    }
}

/// `∫_s^t c(ρ/λ) dρ`.
fn coefficient_integral(
    c: &Coefficient,
    table: Option<&PrimitiveTable>,
    lambda: f64,
    s: f64,
    t: f64,
) -> Result<f64, EvolutionError> {
    let oscillation = |amp: f64, w: f64, phase: f64| {
        if w == 0.0 {
            amp * phase.cos() * (t - s)
        } else {
            amp * lambda / w * ((w * t / lambda + phase).sin() - (w * s / lambda + phase).sin())
        }
    };
    let value = match c {
        Coefficient::Constant(v) => v * (t - s),
        Coefficient::Cosine {
            mean,
            amplitude,
            frequency,
            phase,
        } => mean * (t - s) + oscillation(*amplitude, *frequency, *phase),
        Coefficient::SumOfCosines { mean, terms } => {
            mean * (t - s)
                + terms
                    .iter()
                    .map(|term| oscillation(term.amplitude, term.frequency, term.phase))
                    .sum::<f64>()
        }
        Coefficient::Sampled(_) => {
            let hi = c.primitive(t / lambda).expect("sampled primitive");
            let lo = c.primitive(s / lambda).expect("sampled primitive");
            lambda * (hi - lo)
        }
        Coefficient::Custom { .. } => {
            let table = table.expect("custom coefficients carry a table");
            lambda * (table.value(c, t / lambda)? - table.value(c, s / lambda)?)
        }
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(EvolutionError::NonFinite)
    }
}

/// `U_λ(t, s)` on the Fourier-multiplier backend.
#[derive(Debug)]
pub struct SpectralPropagator {
    family: Arc<CoefficientFamily>,
    grid: Arc<SpectralGrid>,
    lambda: f64,
    tables: Vec<Option<PrimitiveTable>>,
    /// `ξ_i ξ_j` per mode, row-major in `(i, j)`.
    products: Vec<f64>,
}

impl SpectralPropagator {
    pub fn new(family: Arc<CoefficientFamily>, grid: Arc<SpectralGrid>, lambda: f64) -> Result<Self, EvolutionError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(EvolutionError::BadLambda(lambda));
        }
        if family.dim() != grid.dim() {
            return Err(crate::error::OperatorError::DimensionMismatch {
                family: family.dim(),
                grid: grid.dim(),
            }
            .into());
        }
        let tables = family
            .entries()
            .iter()
            .chain(std::iter::once(family.potential()))
            .map(|c| matches!(c, Coefficient::Custom { .. }).then(|| PrimitiveTable::new(0.25)))
            .collect();
        let dim = grid.dim();
        let mut products = Vec::with_capacity(grid.len() * dim * dim);
        for xi in grid.frequencies() {
            for i in 0..dim {
                for j in 0..dim {
                    products.push(xi[i] * xi[j]);
                }
            }
        }
        Ok(Self {
            family,
            grid,
            lambda,
            tables,
            products,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn family(&self) -> &Arc<CoefficientFamily> {
        &self.family
    }

    /// `(I_ij(s,t), I_g(s,t))`, the diffusion integrals row-major.
    pub fn integrals(&self, s: f64, t: f64) -> Result<(Vec<f64>, f64), EvolutionError> {
        if s > t {
            return Err(EvolutionError::Backwards { s, t });
        }
        if !(s.is_finite() && t.is_finite()) {
            return Err(EvolutionError::NonFinite);
        }
        let n = self.family.entries().len();
        let mut a = Vec::with_capacity(n);
        for (k, c) in self.family.entries().iter().enumerate() {
            a.push(coefficient_integral(c, self.tables[k].as_ref(), self.lambda, s, t)?);
        }
        let g = coefficient_integral(self.family.potential(), self.tables[n].as_ref(), self.lambda, s, t)?;
        Ok((a, g))
    }

    /// `∫_s^t p(ρ/λ, ξ) dρ` per mode.
    pub fn exponents(&self, s: f64, t: f64) -> Result<Vec<f64>, EvolutionError> {
        let (a, g) = self.integrals(s, t)?;
        let d2 = a.len();
        Ok(self
            .products
            .chunks_exact(d2)
            .map(|xx| g + xx.iter().zip(&a).map(|(x, i)| x * i).sum::<f64>())
            .collect())
    }

    /// Symbol of `A(t/λ)` per mode.
    pub fn symbol_at(&self, t: f64) -> Result<Vec<f64>, EvolutionError> {
        Ok(self.family.symbol_on_grid(t / self.lambda, &self.grid)?)
    }

    pub fn evolve_spectral(&self, s: f64, t: f64, field: &Field) -> Result<Field, EvolutionError> {
        self.evolve(s, t, field)
    }
}

impl ModePropagator for SpectralPropagator {
    fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    fn mode_factors(&self, s: f64, t: f64) -> Result<Vec<f64>, EvolutionError> {
        Ok(self.exponents(s, t)?.into_iter().map(|e| (-e).exp()).collect())
    }
}

#[derive(Debug, Clone)]
enum Generator {
    Spectral { grid: Arc<SpectralGrid>, symbol: Vec<f64> },
    Matrix(DMatrix<f64>),
}

/// `Ŝ(t) = e^{−tÂ}` for a constant family or a constant matrix.
#[derive(Debug, Clone)]
pub struct AveragedSemigroup {
    generator: Generator,
}

impl AveragedSemigroup {
    /// `family` must be constant in time (e.g. from `averaged_family`).
    pub fn from_family(family: &CoefficientFamily, grid: Arc<SpectralGrid>) -> Result<Self, EvolutionError> {
        if !family.is_constant() {
            return Err(EvolutionError::Unsupported(
                "averaged semigroup needs a time-independent family".into(),
            ));
        }
        let symbol = family.symbol_on_grid(0.0, &grid)?;
        Ok(Self {
            generator: Generator::Spectral { grid, symbol },
        })
    }

    pub fn from_matrix(a_hat: DMatrix<f64>) -> Result<Self, EvolutionError> {
        if !a_hat.is_square() || a_hat.nrows() == 0 || a_hat.nrows() > 64 {
            return Err(EvolutionError::BadDimension(a_hat.nrows()));
        }
        Ok(Self {
            generator: Generator::Matrix(a_hat),
        })
    }

    /// Averaged symbol `p̂(ξ)` per mode (spectral generator only).
    pub fn symbol(&self) -> Option<&[f64]> {
        match &self.generator {
            Generator::Spectral { symbol, .. } => Some(symbol),
            Generator::Matrix(_) => None,
        }
    }

    pub fn generator_matrix(&self) -> Option<&DMatrix<f64>> {
        match &self.generator {
            Generator::Matrix(a) => Some(a),
            Generator::Spectral { .. } => None,
        }
    }

    pub fn evolve_averaged(&self, t: f64, field: &Field) -> Result<Field, EvolutionError> {
        self.evolve(0.0, t, field)
    }

    /// `e^{−tÂ}` on the matrix generator.
    pub fn matrix(&self, t: f64) -> Result<DMatrix<f64>, EvolutionError> {
        match &self.generator {
            Generator::Matrix(a) => matrix_exponential(a, t),
            Generator::Spectral { .. } => Err(EvolutionError::Unsupported(
                "spectral generator has no dense matrix".into(),
            )),
        }
    }

    /// `max_t ‖Ŝ(t)‖` over the probe times, an empirical `M̂`.
    pub fn probe_bound(&self, times: &[f64]) -> Result<f64, EvolutionError> {
        if times.is_empty() {
            return Err(EvolutionError::EmptyMesh);
        }
        let mut m: f64 = 0.0;
        for &t in times {
            let norm = match &self.generator {
                Generator::Spectral { symbol, .. } => {
                    symbol.iter().map(|p| (-t * p).exp()).fold(0.0, f64::max)
                }
                Generator::Matrix(a) => spectral_norm(&matrix_exponential(a, t)?),
            };
            m = m.max(norm);
        }
        Ok(m)
    }

    /// `(t, ‖Â^β Ŝ(t)‖·t^β)` over the probe times.
    ///
    /// The matrix generator supports `β ∈ {1/2, 1}`; the square root is taken
    /// by the Denman–Beavers iteration.
    pub fn probe_analyticity(&self, beta: f64, times: &[f64]) -> Result<Vec<(f64, f64)>, EvolutionError> {
        if times.is_empty() {
            return Err(EvolutionError::EmptyMesh);
        }
        match &self.generator {
            Generator::Spectral { symbol, .. } => Ok(times
                .iter()
                .map(|&t| {
                    let norm = symbol
                        .iter()
                        .map(|&p| p.powf(beta) * (-t * p).exp())
                        .fold(0.0, f64::max);
                    (t, norm * t.powf(beta))
                })
                .collect()),
            Generator::Matrix(a) => {
                let power = if beta == 1.0 {
                    a.clone()
                } else if beta == 0.5 {
                    matrix_sqrt(a)?
                } else {
                    return Err(EvolutionError::Unsupported(format!(
                        "matrix analyticity probe supports beta in {{0.5, 1}}, got {beta}"
                    )));
                };
                times
                    .iter()
                    .map(|&t| Ok((t, spectral_norm(&(&power * matrix_exponential(a, t)?)) * t.powf(beta))))
                    .collect()
            }
        }
    }
}

impl ModePropagator for AveragedSemigroup {
    fn grid(&self) -> &Arc<SpectralGrid> {
        match &self.generator {
            Generator::Spectral { grid, .. } => grid,
            Generator::Matrix(_) => panic!("matrix generator has no spectral grid"),
        }
    }

    fn mode_factors(&self, s: f64, t: f64) -> Result<Vec<f64>, EvolutionError> {
        if s > t {
            return Err(EvolutionError::Backwards { s, t });
        }
        match &self.generator {
            Generator::Spectral { symbol, .. } => Ok(symbol.iter().map(|p| (-(t - s) * p).exp()).collect()),
            Generator::Matrix(_) => Err(EvolutionError::Unsupported(
                "matrix generator does not act on Fourier modes".into(),
            )),
        }
    }

    fn evolve(&self, s: f64, t: f64, field: &Field) -> Result<Field, EvolutionError> {
        if let Generator::Matrix(_) = self.generator {
            return Err(EvolutionError::Unsupported(
                "matrix generator does not act on fields".into(),
            ));
        }
        if field.grid() != self.grid() {
            return Err(SpectralError::GridMismatch.into());
        }
        let factors = self.mode_factors(s, t)?;
        let mut out = field.clone();
        out.scale_modes(&factors);
        Ok(out)
    }
}

fn matrix_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>, EvolutionError> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = DMatrix::<f64>::identity(n, n);
    for _ in 0..100 {
        let yi = y.clone().try_inverse().ok_or(EvolutionError::NonFinite)?;
        let zi = z.clone().try_inverse().ok_or(EvolutionError::NonFinite)?;
        let y_next = (&y + zi) * 0.5;
        let z_next = (&z + yi) * 0.5;
        let change = (&y_next - &y).norm();
        y = y_next;
        z = z_next;
        if change <= 1e-15 * y.norm() {
            break;
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{DeclaredConstants, Structure};
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

    fn cosine_family() -> Arc<CoefficientFamily> {
        Arc::new(CoefficientFamily::scalar(
            Coefficient::cosine(2.0, 1.0, 1.0, 0.0),
            Coefficient::Constant(1.0),
            declared(),
        ))
    }

    fn mode_of(grid: &SpectralGrid, k: f64) -> usize {
        (0..grid.len()).find(|&m| grid.frequency(m)[0] == k).unwrap()
    }

    #[test]
    fn cosine_mode_factor() {
        let grid = make_grid(1, 16, 2.0 * PI).unwrap();
        let prop = SpectralPropagator::new(cosine_family(), grid.clone(), 1.0).unwrap();
        let f = prop.mode_factors(0.0, PI).unwrap();
        let oracle = integrate_adaptive(|r: f64| 2.0 + r.cos() + 1.0, 0.0, PI, AdaptiveRule::default()).unwrap();
        assert!((oracle - 3.0 * PI).abs() < 1e-12);
        let m = mode_of(&grid, 1.0);
        assert!((f[m] - (-oracle).exp()).abs() < 1e-16);
        assert!((f[m] - 8.0699e-5).abs() < 1e-8);
    }

    #[test]
    fn constant_mode_factor_and_identity() {
        let grid = make_grid(1, 16, 2.0 * PI).unwrap();
        let fam = Arc::new(CoefficientFamily::scalar(
            Coefficient::Constant(1.0),
            Coefficient::Constant(0.0),
            declared(),
        ));
        let prop = SpectralPropagator::new(fam, grid.clone(), 0.3).unwrap();
        let f = prop.mode_factors(1.0, 1.25).unwrap();
        assert!((f[mode_of(&grid, 2.0)] - (-1f64).exp()).abs() < 1e-15);
        assert!(prop.mode_factors(0.7, 0.7).unwrap().iter().all(|&v| v == 1.0));
        assert!(matches!(
            prop.mode_factors(1.0, 0.5),
            Err(EvolutionError::Backwards { .. })
        ));
    }

    #[test]
    fn custom_coefficients_use_tables() {
        let grid = make_grid(1, 8, 2.0 * PI).unwrap();
        let closed = SpectralPropagator::new(cosine_family(), grid.clone(), 0.1).unwrap();
        let custom = Arc::new(CoefficientFamily::scalar(
            Coefficient::custom("2+cos", Structure::Periodic(2.0 * PI), |t: f64| 2.0 + t.cos()),
            Coefficient::custom("1", Structure::Constant, |_| 1.0),
            declared(),
        ));
        let tabled = SpectralPropagator::new(custom, grid, 0.1).unwrap();
        for &(s, t) in &[(0.0, 0.3), (0.25, 2.9), (1.0, 1.0)] {
            let a = closed.exponents(s, t).unwrap();
            let b = tabled.exponents(s, t).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-10 * (1.0 + x.abs()), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn averaged_semigroup_examples() {
        let grid = make_grid(1, 16, 2.0 * PI).unwrap();
        let fam = CoefficientFamily::scalar(Coefficient::Constant(2.0), Coefficient::Constant(1.0), declared());
        let sg = AveragedSemigroup::from_family(&fam, grid.clone()).unwrap();
        let f = sg.mode_factors(0.0, 1.0).unwrap();
        assert!((f[mode_of(&grid, 1.0)] - (-3f64).exp()).abs() < 1e-16);
        assert!(sg.mode_factors(0.0, 0.0).unwrap().iter().all(|&v| v == 1.0));

        let m = AveragedSemigroup::from_matrix(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0])))
            .unwrap();
        let e = m.matrix(2f64.ln()).unwrap();
        assert!((e[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((e[(1, 1)] - 0.25).abs() < 1e-15);
        assert!(AveragedSemigroup::from_family(&cosine_family(), grid).is_err());
    }

    #[test]
    fn analyticity_probe_is_bounded() {
        let grid = make_grid(1, 64, 2.0 * PI).unwrap();
        let fam = CoefficientFamily::scalar(Coefficient::Constant(2.0), Coefficient::Constant(1.0), declared());
        let sg = AveragedSemigroup::from_family(&fam, grid).unwrap();
        let times = crate::operator::log_mesh(1e-4, 10.0, 50);
        for beta in [0.5, 1.0] {
            let bound = (beta / std::f64::consts::E).powf(beta);
            for (_, v) in sg.probe_analyticity(beta, &times).unwrap() {
                assert!(v <= bound * (1.0 + 1e-12));
            }
        }
        let mat = AveragedSemigroup::from_matrix(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 3.0])).unwrap();
        for beta in [0.5, 1.0] {
            let vals = mat.probe_analyticity(beta, &times).unwrap();
            assert!(vals.iter().all(|(_, v)| v.is_finite() && *v < 2.0));
        }
        assert!(mat.probe_bound(&times).unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn matrix_square_root() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 0.0, 9.0]);
        let r = matrix_sqrt(&a).unwrap();
        assert!((&r * &r - a).norm() < 1e-12);
    }
}
