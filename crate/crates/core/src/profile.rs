//! Spatial profiles used for initial data and separable forcing.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::spectral::{Field, SpectralGrid};

/// One Fourier term `amplitude · cos(Σ_d 2π k_d x_d / period_d + phase)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTerm {
    pub wavenumber: Vec<i64>,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone)]
pub enum SpatialProfile {
    Zero,
    Modes(Vec<ModeTerm>),
    Gaussian {
        center: Vec<f64>,
        width: f64,
        amplitude: f64,
    },
    Custom(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl fmt::Debug for SpatialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Zero => write!(f, "Zero"),
            Self::Modes(t) => f.debug_tuple("Modes").field(t).finish(),
            Self::Gaussian {
                center,
                width,
                amplitude,
            } => f
                .debug_struct("Gaussian")
                .field("center", center)
                .field("width", width)
                .field("amplitude", amplitude)
                .finish(),
            Self::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl SpatialProfile {
    pub fn single_mode(wavenumber: Vec<i64>, amplitude: f64) -> Self {
        Self::Modes(vec![ModeTerm {
            wavenumber,
            amplitude,
            phase: 0.0,
        }])
    }

    pub fn eval(&self, x: &[f64], periods: &[f64]) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Modes(terms) => terms
                .iter()
                .map(|t| {
                    let arg: f64 = t
                        .wavenumber
                        .iter()
                        .zip(x)
                        .zip(periods)
                        .map(|((&k, &xd), &p)| 2.0 * std::f64::consts::PI * k as f64 * xd / p)
                        .sum();
                    t.amplitude * (arg + t.phase).cos()
                })
                .sum(),
            Self::Gaussian {
                center,
                width,
                amplitude,
            } => {
                // periodic distance to the centre
                let r2: f64 = x
                    .iter()
                    .zip(center)
                    .zip(periods)
                    .map(|((&xd, &cd), &p)| {
                        let mut d = (xd - cd).rem_euclid(p);
                        if d > 0.5 * p {
                            d -= p;
                        }
                        d * d
                    })
                    .sum();
                amplitude * (-r2 / (2.0 * width * width)).exp()
            }
            Self::Custom(f) => f(x),
        }
    }

    /// Largest absolute value, exact for mode sums only as an upper bound.
    pub fn sup_bound(&self) -> Option<f64> {
        match self {
            Self::Zero => Some(0.0),
            Self::Modes(terms) => Some(terms.iter().map(|t| t.amplitude.abs()).sum()),
            Self::Gaussian { amplitude, .. } => Some(amplitude.abs()),
            Self::Custom(_) => None,
        }
    }

    pub fn to_field(&self, grid: &std::sync::Arc<SpectralGrid>) -> Field {
        let periods = grid.periods().to_vec();
        Field::from_real_fn(grid, |x| self.eval(x, &periods))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::make_grid;
    use std::f64::consts::PI;

    #[test]
    fn mode_profile_matches_cosine() {
        let g = make_grid(1, 16, 2.0 * PI).unwrap();
        let p = SpatialProfile::single_mode(vec![2], 0.5);
        let mut f = p.to_field(&g);
        for (m, v) in f.values().iter().enumerate() {
            let x = g.point(m)[0];
            assert!((v.re - 0.5 * (2.0 * x).cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn gaussian_is_periodic() {
        let p = SpatialProfile::Gaussian {
            center: vec![0.1],
            width: 0.3,
            amplitude: 1.0,
        };
        let a = p.eval(&[6.2], &[2.0 * PI]);
        let b = p.eval(&[6.2 - 2.0 * PI], &[2.0 * PI]);
        assert!((a - b).abs() < 1e-14);
    }
}
