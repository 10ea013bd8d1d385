//! Periodic spectral discretization.
//!
//! A [`SpectralGrid`] is a uniform periodic box with `points_per_axis` nodes
//! on every axis. Frequencies follow the standard discrete-transform layout:
//! index `k` runs over `0, 1, …, n/2 − 1, −n/2, …, −1` and maps to the
//! physical frequency `ξ = 2π·k / period`. The `k = −n/2` entry is the
//! unpaired Nyquist mode.
//!
//! Transforms are unitary: `modes = FFT(values) / √P` where `P` is the total
//! point count. The discrete L² inner product carries the cell volume
//! `ΔV = Π period/n` in both representations, so Parseval holds without
//! correction factors:
//!
//! ```text
//! (u, v) = ΔV · Σ u(x) conj(v(x)) = ΔV · Σ û(ξ) conj(v̂(ξ))
//! ```

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::SpectralError;

/// Default cap on the total number of modes a grid may hold.
pub const DEFAULT_MODE_CAP: usize = 1 << 24;

pub struct SpectralGrid {
    dim: usize,
    points: usize,
    periods: Vec<f64>,
    axis_index: Vec<i64>,
    xi: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralGrid")
            .field("dim", &self.dim)
            .field("points", &self.points)
            .field("periods", &self.periods)
            .finish()
    }
}

impl PartialEq for SpectralGrid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.points == other.points && self.periods == other.periods
    }
}

/// Build a grid with the same period on every axis.
pub fn make_grid(dim: usize, points_per_axis: usize, period: f64) -> Result<Arc<SpectralGrid>, SpectralError> {
    SpectralGrid::new(dim, points_per_axis, vec![period; dim.max(1)], DEFAULT_MODE_CAP)
}

impl SpectralGrid {
    pub fn new(
        dim: usize,
        points_per_axis: usize,
        periods: Vec<f64>,
        mode_cap: usize,
    ) -> Result<Arc<Self>, SpectralError> {
        if dim == 0 {
            return Err(SpectralError::ZeroDimension);
        }
        if points_per_axis < 4 || !points_per_axis.is_power_of_two() {
            return Err(SpectralError::BadSize(points_per_axis));
        }
        if let Some(&p) = periods.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(SpectralError::BadPeriod(p));
        }
        if periods.len() != dim {
            return Err(SpectralError::BadPeriod(f64::NAN));
        }
        let total = u32::try_from(dim)
            .ok()
            .and_then(|d| points_per_axis.checked_pow(d))
            .filter(|&t| t <= mode_cap)
            .ok_or(SpectralError::ModeBudget {
                dim,
                points: points_per_axis,
                cap: mode_cap,
            })?;

        let n = points_per_axis as i64;
        let axis_index: Vec<i64> = (0..n).map(|j| if j < n / 2 { j } else { j - n }).collect();

        let mut xi = Vec::with_capacity(total * dim);
        let mut multi = vec![0usize; dim];
        for _ in 0..total {
            for (d, &j) in multi.iter().enumerate() {
                xi.push(2.0 * std::f64::consts::PI * axis_index[j] as f64 / periods[d]);
            }
            increment(&mut multi, points_per_axis);
        }

        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(points_per_axis);
        let inverse = planner.plan_fft_inverse(points_per_axis);
        Ok(Arc::new(Self {
            dim,
            points: points_per_axis,
            periods,
            axis_index,
            xi,
            forward,
            inverse,
        }))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.points
    }

    pub fn period(&self, axis: usize) -> f64 {
        self.periods[axis]
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    /// Total number of grid points, equal to the number of modes.
    pub fn len(&self) -> usize {
        self.xi.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn cell_volume(&self) -> f64 {
        self.periods.iter().map(|p| p / self.points as f64).product()
    }

    /// Per-axis integer mode indices in transform order.
    pub fn axis_indices(&self) -> &[i64] {
        &self.axis_index
    }

    /// Physical frequency vector of flat mode `m`.
    pub fn frequency(&self, m: usize) -> &[f64] {
        &self.xi[m * self.dim..(m + 1) * self.dim]
    }

    pub fn frequencies(&self) -> impl Iterator<Item = &[f64]> {
        self.xi.chunks_exact(self.dim)
    }

    /// Integer multi-index of flat mode `m`.
    pub fn mode_index(&self, m: usize) -> Vec<i64> {
        self.multi_index(m).into_iter().map(|j| self.axis_index[j]).collect()
    }

    /// Whether mode `m` sits on the unpaired Nyquist index along any axis.
    pub fn is_nyquist(&self, m: usize) -> bool {
        let half = self.points as i64 / 2;
        self.mode_index(m).iter().any(|&k| k == -half)
    }

    /// Flat index of the mode with negated frequency (Nyquist maps to itself).
    pub fn conjugate_mode(&self, m: usize) -> usize {
        let n = self.points;
        self.multi_index(m)
            .into_iter()
            .fold(0, |acc, j| acc * n + (n - j) % n)
    }

    /// Physical coordinates of grid point `m`.
    pub fn point(&self, m: usize) -> Vec<f64> {
        self.multi_index(m)
            .into_iter()
            .enumerate()
            .map(|(d, j)| j as f64 * self.periods[d] / self.points as f64)
            .collect()
    }

    fn multi_index(&self, mut m: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim];
        for d in (0..self.dim).rev() {
            idx[d] = m % self.points;
            m /= self.points;
        }
        idx
    }

    fn transform(&self, data: &mut [Complex64], forward: bool) {
        let n = self.points;
        let plan = if forward { &self.forward } else { &self.inverse };
        let total = data.len();
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
        for axis in 0..self.dim {
            let stride = n.pow((self.dim - 1 - axis) as u32);
            let block = stride * n;
            for base in (0..total).step_by(block) {
                for offset in 0..stride {
                    let start = base + offset;
                    for (j, slot) in line.iter_mut().enumerate() {
                        *slot = data[start + j * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for (j, v) in line.iter().enumerate() {
                        data[start + j * stride] = *v;
                    }
                }
            }
        }
        let scale = 1.0 / (total as f64).sqrt();
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

fn increment(multi: &mut [usize], n: usize) {
    for slot in multi.iter_mut().rev() {
        *slot += 1;
        if *slot < n {
            return;
        }
        *slot = 0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Fresh {
    Values,
    Modes,
    Both,
}

/// A state on a [`SpectralGrid`], carried in value space and mode space.
/// Only the representation last written is authoritative; the other is
/// recomputed on demand.
#[derive(Clone)]
pub struct Field {
    grid: Arc<SpectralGrid>,
    values: Vec<Complex64>,
    modes: Vec<Complex64>,
    fresh: Fresh,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("grid", &self.grid)
            .field("fresh", &self.fresh)
            .finish_non_exhaustive()
    }
}

impl Field {
    pub fn zeros(grid: &Arc<SpectralGrid>) -> Self {
        let n = grid.len();
        Self {
            grid: Arc::clone(grid),
            values: vec![Complex64::new(0.0, 0.0); n],
            modes: vec![Complex64::new(0.0, 0.0); n],
            fresh: Fresh::Both,
        }
    }

    pub fn from_values(grid: &Arc<SpectralGrid>, values: Vec<Complex64>) -> Self {
        assert_eq!(values.len(), grid.len(), "value count must match grid");
        Self {
            grid: Arc::clone(grid),
            modes: vec![Complex64::new(0.0, 0.0); values.len()],
            values,
            fresh: Fresh::Values,
        }
    }

    pub fn from_modes(grid: &Arc<SpectralGrid>, modes: Vec<Complex64>) -> Self {
        assert_eq!(modes.len(), grid.len(), "mode count must match grid");
        Self {
            grid: Arc::clone(grid),
            values: vec![Complex64::new(0.0, 0.0); modes.len()],
            modes,
            fresh: Fresh::Modes,
        }
    }

    /// Sample a real function at the grid points.
    pub fn from_real_fn(grid: &Arc<SpectralGrid>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|m| Complex64::new(f(&grid.point(m)), 0.0))
            .collect();
        Self::from_values(grid, values)
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn to_modes(&mut self) -> &mut Self {
        if self.fresh == Fresh::Values {
            self.modes.copy_from_slice(&self.values);
            self.grid.transform(&mut self.modes, true);
            self.fresh = Fresh::Both;
        }
        self
    }

    pub fn to_values(&mut self) -> &mut Self {
        if self.fresh == Fresh::Modes {
            self.values.copy_from_slice(&self.modes);
            self.grid.transform(&mut self.values, false);
            self.fresh = Fresh::Both;
        }
        self
    }

    pub fn modes(&mut self) -> &[Complex64] {
        self.to_modes();
        &self.modes
    }

    pub fn values(&mut self) -> &[Complex64] {
        self.to_values();
        &self.values
    }

    /// Mutable mode access; invalidates the value representation.
    pub fn modes_mut(&mut self) -> &mut [Complex64] {
        self.to_modes();
        self.fresh = Fresh::Modes;
        &mut self.modes
    }

    /// Mutable value access; invalidates the mode representation.
    pub fn values_mut(&mut self) -> &mut [Complex64] {
        self.to_values();
        self.fresh = Fresh::Values;
        &mut self.values
    }

    /// Multiply every mode by `symbol(ξ)`.
    pub fn apply_multiplier(
        &mut self,
        symbol: impl Fn(&[f64]) -> Complex64,
    ) -> Result<(), SpectralError> {
        let grid = Arc::clone(&self.grid);
        let factors = grid
            .frequencies()
            .map(|xi| {
                let s = symbol(xi);
                if s.re.is_finite() && s.im.is_finite() {
                    Ok(s)
                } else {
                    Err(SpectralError::NonFiniteSymbol { xi: xi.to_vec() })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        for (m, s) in self.modes_mut().iter_mut().zip(factors) {
            *m *= s;
        }
        Ok(())
    }

    /// Multiply mode `m` by `factors[m]`.
    pub fn scale_modes(&mut self, factors: &[f64]) {
        for (m, s) in self.modes_mut().iter_mut().zip(factors) {
            *m *= *s;
        }
    }

    /// `self += a · other`, in mode space.
    pub fn add_scaled(&mut self, a: f64, other: &mut Field) -> Result<(), SpectralError> {
        self.check_grid(other)?;
        let rhs = other.modes();
        for (x, y) in self.modes_mut().iter_mut().zip(rhs) {
            *x += y * a;
        }
        Ok(())
    }

    pub fn difference(&mut self, other: &mut Field) -> Result<Field, SpectralError> {
        let mut out = self.clone();
        out.add_scaled(-1.0, other)?;
        Ok(out)
    }

    /// Discrete L² inner product evaluated in value space.
    pub fn inner_values(&mut self, other: &mut Field) -> Result<Complex64, SpectralError> {
        self.check_grid(other)?;
        let dv = self.grid.cell_volume();
        let rhs = other.values();
        let s: Complex64 = self.values().iter().zip(rhs).map(|(u, v)| u * v.conj()).sum();
        Ok(s * dv)
    }

    /// Discrete L² inner product evaluated in mode space.
    pub fn inner_modes(&mut self, other: &mut Field) -> Result<Complex64, SpectralError> {
        self.check_grid(other)?;
        let dv = self.grid.cell_volume();
        let rhs = other.modes();
        let s: Complex64 = self.modes().iter().zip(rhs).map(|(u, v)| u * v.conj()).sum();
        Ok(s * dv)
    }

    pub fn l2_norm(&mut self) -> f64 {
        self.weighted_norm(None)
    }

    /// `sqrt(ΔV Σ w(ξ)² |û(ξ)|²)`, or the plain L² norm with no weights.
    pub fn weighted_norm(&mut self, weights: Option<&[f64]>) -> f64 {
        let dv = self.grid.cell_volume();
        let modes = self.modes();
        let s: f64 = match weights {
            None => modes.iter().map(|m| m.norm_sqr()).sum(),
            Some(w) => modes.iter().zip(w).map(|(m, w)| w * w * m.norm_sqr()).sum(),
        };
        (s * dv).sqrt()
    }

    /// Sobolev norm `‖(1+|ξ|²)^{s/2} û‖`.
    pub fn sobolev_norm(&mut self, s: f64) -> f64 {
        let w = sobolev_weights(&self.grid, s);
        self.weighted_norm(Some(&w))
    }

    /// `‖A(0)^α u‖` for the multiplier `A(0)` with symbol `spec.base_symbol`.
    pub fn fractional_norm(&mut self, spec: &FractionalNormSpec) -> Result<f64, SpectralError> {
        let w = spec.weights(&self.grid)?;
        Ok(self.weighted_norm(Some(&w)))
    }

    pub fn is_real(&mut self, tol: f64) -> bool {
        let scale = self.l2_norm().max(1.0);
        self.values().iter().all(|v| v.im.abs() <= tol * scale)
    }

    fn check_grid(&self, other: &Field) -> Result<(), SpectralError> {
        if Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid {
            Ok(())
        } else {
            Err(SpectralError::GridMismatch)
        }
    }
}

/// Per-mode weights `(1+|ξ|²)^{s/2}`.
pub fn sobolev_weights(grid: &SpectralGrid, s: f64) -> Vec<f64> {
    grid.frequencies()
        .map(|xi| {
            let k2: f64 = xi.iter().map(|x| x * x).sum();
            (1.0 + k2).powf(0.5 * s)
        })
        .collect()
}

pub type RealSymbol = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Fractional index and the symbol of `A(0)` defining `‖u‖_α = ‖A(0)^α u‖`.
#[derive(Clone)]
pub struct FractionalNormSpec {
    alpha: f64,
    base_symbol: RealSymbol,
}

impl fmt::Debug for FractionalNormSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FractionalNormSpec")
            .field("alpha", &self.alpha)
            .finish_non_exhaustive()
    }
}

impl FractionalNormSpec {
    pub fn new(alpha: f64, base_symbol: RealSymbol) -> Result<Self, SpectralError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(SpectralError::BadAlpha(alpha));
        }
        Ok(Self { alpha, base_symbol })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn symbol(&self, xi: &[f64]) -> f64 {
        (self.base_symbol)(xi)
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self, SpectralError> {
        Self::new(alpha, Arc::clone(&self.base_symbol))
    }

    /// Per-mode weights `p(0,ξ)^α`.
    pub fn weights(&self, grid: &SpectralGrid) -> Result<Vec<f64>, SpectralError> {
        grid.frequencies()
            .map(|xi| {
                let p = (self.base_symbol)(xi);
                if !p.is_finite() {
                    Err(SpectralError::NonFiniteSymbol { xi: xi.to_vec() })
                } else if p < 0.0 {
                    Err(SpectralError::NegativeSymbol {
                        xi: xi.to_vec(),
                        value: p,
                    })
                } else if self.alpha == 0.0 {
                    Ok(1.0)
                } else {
                    Ok(p.powf(self.alpha))
                }
            })
            .collect()
    }
}

/// Free-function form of [`Field::fractional_norm`].
pub fn fractional_norm(field: &mut Field, spec: &FractionalNormSpec) -> Result<f64, SpectralError> {
    field.fractional_norm(spec)
}
