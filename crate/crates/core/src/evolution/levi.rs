//! Parametrix (Levi) construction of `U(t, s)` for dense matrix families
//! `A(t)`, `n ≤ 64`:
//!
//! ```text
//! U(t,s)   = e^{−(t−s)A(s)} + ∫_s^t e^{−(t−τ)A(τ)} R(τ,s) dτ
//! R        = Σ_m R_m
//! R_1(t,s) = −(A(t) − A(s)) e^{−(t−s)A(s)}
//! R_{m+1}(t,s) = ∫_s^t R_1(t,τ) R_m(τ,s) dτ
//! ```
//!
//! The Volterra integrals use composite fourth-order weights on a uniform
//! mesh which is doubled until two successive results agree. Long intervals
//! are split into short pieces and composed by the cocycle law.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::expm::{matrix_exponential, spectral_norm};
use crate::error::EvolutionError;
use crate::quadrature::composite_fourth_order_weights;

pub type MatrixFn = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;

/// `t ↦ A(t)` with a claimed lower bound on the real parts of its spectrum.
#[derive(Clone)]
pub struct MatrixFamily {
    n: usize,
    a: MatrixFn,
    claimed_lower_bound: f64,
}

impl fmt::Debug for MatrixFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MatrixFamily")
            .field("n", &self.n)
            .field("claimed_lower_bound", &self.claimed_lower_bound)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixAudit {
    pub min_real_part: f64,
    pub argmin: f64,
    pub claimed: f64,
    pub satisfied: bool,
}

impl MatrixFamily {
    pub fn new(
        n: usize,
        claimed_lower_bound: f64,
        a: impl Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Result<Self, EvolutionError> {
        if n == 0 || n > 64 {
            return Err(EvolutionError::BadDimension(n));
        }
        Ok(Self {
            n,
            a: Arc::new(a),
            claimed_lower_bound,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn claimed_lower_bound(&self) -> f64 {
        self.claimed_lower_bound
    }

    pub fn eval(&self, t: f64) -> Result<DMatrix<f64>, EvolutionError> {
        let m = (self.a)(t);
        if m.nrows() != self.n || m.ncols() != self.n {
            return Err(EvolutionError::BadDimension(m.nrows()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(EvolutionError::NonFinite);
        }
        Ok(m)
    }

    /// Smallest real part of the spectrum of `A(t)` over the mesh.
    pub fn audit(&self, times: &[f64]) -> Result<MatrixAudit, EvolutionError> {
        if times.is_empty() {
            return Err(EvolutionError::EmptyMesh);
        }
        let mut lo = f64::INFINITY;
        let mut argmin = times[0];
        for &t in times {
            let m = self.eval(t)?;
            let re = m
                .complex_eigenvalues()
                .iter()
                .map(|z| z.re)
                .fold(f64::INFINITY, f64::min);
            if re < lo {
                lo = re;
                argmin = t;
            }
        }
        Ok(MatrixAudit {
            min_real_part: lo,
            argmin,
            claimed: self.claimed_lower_bound,
            satisfied: self.claimed_lower_bound > 0.0 && lo >= self.claimed_lower_bound * (1.0 - 1e-9),
        })
    }
}

/// Controls for [`levi_evolution_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeviOptions {
    /// Longest interval handled without the cocycle split.
    pub max_piece: f64,
    pub initial_intervals: usize,
    pub max_intervals: usize,
    /// Cap on the number of series terms `R_m`.
    pub max_terms: usize,
    /// Bisection depth allowed when a piece stalls.
    pub max_depth: usize,
}

impl Default for LeviOptions {
    fn default() -> Self {
        Self {
            max_piece: 0.25,
            initial_intervals: 8,
            max_intervals: 512,
            max_terms: 50,
            max_depth: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeviOutcome {
    pub u: DMatrix<f64>,
    pub pieces: usize,
    pub max_intervals: usize,
    pub max_terms: usize,
}

/// `U(t, s)` with default options.
pub fn levi_evolution(family: &MatrixFamily, s: f64, t: f64, tol: f64) -> Result<DMatrix<f64>, EvolutionError> {
    Ok(levi_evolution_with(family, s, t, tol, &LeviOptions::default())?.u)
}

pub fn levi_evolution_with(
    family: &MatrixFamily,
    s: f64,
    t: f64,
    tol: f64,
    options: &LeviOptions,
) -> Result<LeviOutcome, EvolutionError> {
    if s > t {
        return Err(EvolutionError::Backwards { s, t });
    }
    if !(s.is_finite() && t.is_finite() && tol > 0.0) {
        return Err(EvolutionError::NonFinite);
    }
    let n = family.dim();
    let mut outcome = LeviOutcome {
        u: DMatrix::identity(n, n),
        pieces: 0,
        max_intervals: 0,
        max_terms: 0,
    };
    if s == t {
        return Ok(outcome);
    }
    let count = ((t - s) / options.max_piece).ceil().max(1.0) as usize;
    let width = (t - s) / count as f64;
    for k in 0..count {
        let a = s + width * k as f64;
        let b = if k + 1 == count { t } else { s + width * (k + 1) as f64 };
        let piece = piece_with_bisection(family, a, b, tol, options, 0, &mut outcome)?;
        outcome.u = piece * &outcome.u;
    }
    Ok(outcome)
}

fn piece_with_bisection(
    family: &MatrixFamily,
    s: f64,
    t: f64,
    tol: f64,
    options: &LeviOptions,
    depth: usize,
    stats: &mut LeviOutcome,
) -> Result<DMatrix<f64>, EvolutionError> {
    if let Some(u) = refine_piece(family, s, t, tol, options, stats)? {
        stats.pieces += 1;
        return Ok(u);
    }
    if depth >= options.max_depth {
        return Err(EvolutionError::SeriesStalled {
            s,
            t,
            iterations: options.max_terms,
        });
    }
    let mid = 0.5 * (s + t);
    let left = piece_with_bisection(family, s, mid, tol, options, depth + 1, stats)?;
    let right = piece_with_bisection(family, mid, t, tol, options, depth + 1, stats)?;
    Ok(right * left)
}

/// Doubles the mesh until successive results agree within `tol`.
fn refine_piece(
    family: &MatrixFamily,
    s: f64,
    t: f64,
    tol: f64,
    options: &LeviOptions,
    stats: &mut LeviOutcome,
) -> Result<Option<DMatrix<f64>>, EvolutionError> {
    let mut k = options.initial_intervals.max(2);
    let Some((mut previous, terms)) = parametrix_on_mesh(family, s, t, k, tol, options.max_terms)? else {
        return Ok(None);
    };
    let mut used_terms = terms;
    while k < options.max_intervals {
        k *= 2;
        let Some((next, terms)) = parametrix_on_mesh(family, s, t, k, tol, options.max_terms)? else {
            return Ok(None);
        };
        used_terms = used_terms.max(terms);
        let change = spectral_norm(&(&next - &previous));
        previous = next;
        if change <= tol {
            stats.max_intervals = stats.max_intervals.max(k);
            stats.max_terms = stats.max_terms.max(used_terms);
            return Ok(Some(previous));
        }
    }
    Ok(None)
}

/// One evaluation of the construction on a uniform mesh of `k` intervals.
/// Returns `None` if the series does not decay within `max_terms`.
fn parametrix_on_mesh(
    family: &MatrixFamily,
    s: f64,
    t: f64,
    k: usize,
    tol: f64,
    max_terms: usize,
) -> Result<Option<(DMatrix<f64>, usize)>, EvolutionError> {
    let h = (t - s) / k as f64;
    let nodes: Vec<f64> = (0..=k).map(|i| if i == k { t } else { s + h * i as f64 }).collect();
    let a: Vec<DMatrix<f64>> = nodes.iter().map(|&x| family.eval(x)).collect::<Result<_, _>>()?;
    let n = family.dim();

    // frozen[j][m] = e^{−m h A(τ_j)}
    let mut frozen: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(k + 1);
    for (j, aj) in a.iter().enumerate() {
        let step = matrix_exponential(aj, h)?;
        let mut powers = Vec::with_capacity(k + 1 - j);
        powers.push(DMatrix::identity(n, n));
        for m in 1..=(k - j) {
            let next = &powers[m - 1] * &step;
            powers.push(next);
        }
        frozen.push(powers);
    }

    // kernel[i][j] = R_1(τ_i, τ_j) for j < i
    let kernel: Vec<Vec<DMatrix<f64>>> = (0..=k)
        .map(|i| (0..i).map(|j| -(&a[i] - &a[j]) * &frozen[j][i - j]).collect())
        .collect();
    let weights: Vec<Vec<f64>> = (0..=k).map(|i| composite_fourth_order_weights(i, h)).collect();

    let zero = DMatrix::<f64>::zeros(n, n);
    let mut term: Vec<DMatrix<f64>> = (0..=k)
        .map(|i| if i == 0 { zero.clone() } else { kernel[i][0].clone() })
        .collect();
    let mut total = term.clone();
    let scale = term.iter().map(|m| m.norm()).fold(1.0f64, f64::max);
    let mut converged = term.iter().all(|m| m.norm() <= tol * scale);
    let mut terms = 1;
    while !converged {
        if terms >= max_terms {
            return Ok(None);
        }
        let next: Vec<DMatrix<f64>> = (0..=k)
            .map(|i| {
                let mut acc = zero.clone();
                for j in 1..i {
                    acc += (&kernel[i][j] * &term[j]) * weights[i][j];
                }
                acc
            })
            .collect();
        terms += 1;
        let size = next.iter().map(|m| m.norm()).fold(0.0, f64::max);
        if !size.is_finite() {
            return Ok(None);
        }
        for (acc, piece) in total.iter_mut().zip(&next) {
            *acc += piece;
        }
        term = next;
        converged = size <= tol * scale;
    }

    let outer = composite_fourth_order_weights(k, h);
    let mut u = frozen[0][k].clone();
    for j in 1..k {
        u += (&frozen[j][k - j] * &total[j]) * outer[j];
    }
    // j = k contributes e^{0}·R(t, s)
    u += &total[k] * outer[k];
    Ok(Some((u, terms)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(v))
    }

    #[test]
    fn constant_family_is_semigroup() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 3.0]);
        let a2 = a.clone();
        let fam = MatrixFamily::new(2, 1.0, move |_| a2.clone()).unwrap();
        let out = levi_evolution_with(&fam, 0.2, 1.1, 1e-10, &LeviOptions::default()).unwrap();
        let exact = matrix_exponential(&a, 0.9).unwrap();
        assert!((&out.u - exact).norm() < 1e-12);
        assert_eq!(out.max_terms, 1);
    }

    #[test]
    fn commuting_family_matches_closed_form() {
        let fam = MatrixFamily::new(2, 1.0, |t: f64| diag(&[1.0, 2.0]) * (2.0 + t.cos())).unwrap();
        let tol = 1e-9;
        let u = levi_evolution(&fam, 0.0, 1.0, tol).unwrap();
        let w = 2.0 + 1f64.sin();
        let exact = diag(&[(-w).exp(), (-2.0 * w).exp()]);
        assert!((u - exact).norm() < 10.0 * tol);
    }

    #[test]
    fn identity_at_equal_times() {
        let fam = MatrixFamily::new(3, 1.0, |t: f64| diag(&[1.0 + t, 2.0, 3.0])).unwrap();
        assert_eq!(levi_evolution(&fam, 0.4, 0.4, 1e-8).unwrap(), DMatrix::identity(3, 3));
        assert!(matches!(
            levi_evolution(&fam, 1.0, 0.4, 1e-8),
            Err(EvolutionError::Backwards { .. })
        ));
    }

    #[test]
    fn audit_reports_spectrum() {
        let fam = MatrixFamily::new(2, 1.0, |t: f64| diag(&[2.0 + t.cos(), 3.0])).unwrap();
        let times: Vec<f64> = (0..=64).map(|k| k as f64 * std::f64::consts::PI / 32.0).collect();
        let audit = fam.audit(&times).unwrap();
        assert!((audit.min_real_part - 1.0).abs() < 1e-12);
        assert!(audit.satisfied);
        assert!(MatrixFamily::new(65, 1.0, |_| diag(&[1.0])).is_err());
    }
}
