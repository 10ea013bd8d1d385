//! Operator-norm probes for the smoothing and derivative estimates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::expm::spectral_norm;
use super::levi::{levi_evolution, MatrixFamily};
use super::ModePropagator;
use crate::error::EvolutionError;
use crate::spectral::FractionalNormSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingSample {
    pub gap: f64,
    /// `‖U(s+gap, s)‖_{L(L², X^α)}`.
    pub norm: f64,
    /// `norm / (1 + gap^{−α})`.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothingProbe {
    pub k: f64,
    pub alpha: f64,
    pub start: f64,
    pub samples: Vec<SmoothingSample>,
}

/// Smallest `K` with `‖U(s+h, s)‖_{L(L², X^α)} ≤ K(1 + h^{−α})` on the gaps.
///
/// The operator norm of a diagonal multiplier is the largest weighted mode
/// factor, so it is computed exactly.
pub fn probe_smoothing_constant(
    propagator: &impl ModePropagator,
    norm: &FractionalNormSpec,
    start: f64,
    gaps: &[f64],
) -> Result<SmoothingProbe, EvolutionError> {
    if gaps.is_empty() {
        return Err(EvolutionError::EmptyMesh);
    }
    let alpha = norm.alpha();
    let weights = norm.weights(propagator.grid())?;
    let mut samples = Vec::with_capacity(gaps.len());
    for &gap in gaps {
        if !(gap > 0.0) {
            return Err(EvolutionError::NonFinite);
        }
        let factors = propagator.mode_factors(start, start + gap)?;
        let value = factors
            .iter()
            .zip(&weights)
            .map(|(f, w)| f * w)
            .fold(0.0, f64::max);
        samples.push(SmoothingSample {
            gap,
            norm: value,
            ratio: value / (1.0 + gap.powf(-alpha)),
        });
    }
    let k = samples.iter().map(|s| s.ratio).fold(0.0, f64::max);
    Ok(SmoothingProbe {
        k,
        alpha,
        start,
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeSample {
    pub gap: f64,
    /// `‖∂_t U(s+gap, s)‖ · gap`.
    pub value: f64,
}

fn fd_step(gap: f64) -> Result<f64, EvolutionError> {
    let step = (1e-8 * gap).max(1e-6);
    if 2.0 * step >= gap {
        return Err(EvolutionError::GapTooSmall { gap, step });
    }
    Ok(step)
}

/// Central differences of `t ↦ U(t, s)` scaled by the gap.
///
/// `U(t±δ, s)` share the factor `U(t−δ, s)`, so the difference is formed as
/// `(U(t+δ, t−δ) − I)·U(t−δ, s)` to avoid cancellation.
pub fn probe_derivative_bound(
    family: &MatrixFamily,
    s: f64,
    gaps: &[f64],
    tol: f64,
) -> Result<Vec<DerivativeSample>, EvolutionError> {
    if gaps.is_empty() {
        return Err(EvolutionError::EmptyMesh);
    }
    let n = family.dim();
    let id = DMatrix::<f64>::identity(n, n);
    gaps.iter()
        .map(|&gap| {
            let delta = fd_step(gap)?;
            let t = s + gap;
            let base = levi_evolution(family, s, t - delta, tol)?;
            let short = levi_evolution(family, t - delta, t + delta, tol)?;
            let derivative = (short - &id) * base / (2.0 * delta);
            Ok(DerivativeSample {
                gap,
                value: spectral_norm(&derivative) * gap,
            })
        })
        .collect()
}

/// Relative defect of `∂_s U(t, s) = U(t, s) A(s)` by central differences.
pub fn check_s_derivative(family: &MatrixFamily, s: f64, t: f64, tol: f64) -> Result<f64, EvolutionError> {
    let delta = fd_step(t - s)?;
    let n = family.dim();
    let id = DMatrix::<f64>::identity(n, n);
    let outer = levi_evolution(family, s + delta, t, tol)?;
    let short = levi_evolution(family, s - delta, s + delta, tol)?;
    let derivative = outer * (id - short) / (2.0 * delta);
    let expected = levi_evolution(family, s, t, tol)? * family.eval(s)?;
    Ok(spectral_norm(&(derivative - &expected)) / spectral_norm(&expected).max(f64::MIN_POSITIVE))
}
