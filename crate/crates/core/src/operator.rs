//! The time-dependent operator family `A(t)`, given on the periodic box by
//! the multiplier symbol
//!
//! ```text
//! p(t, ξ) = Σ_ij a_ij(t) ξ_i ξ_j + g(t)
//! ```
//!
//! together with sampling-based audits of the structural hypotheses and
//! Cesàro averages of the coefficients and of the forcing.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::OperatorError;
use crate::profile::SpatialProfile;
use crate::quadrature::{integrate_adaptive, integrate_paneled, AdaptiveRule};
use crate::spectral::{Field, SpectralGrid};

/// Time structure of a coefficient or family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Structure {
    Constant,
    Periodic(f64),
    /// Angular frequencies of the constituent oscillations.
    Quasiperiodic(Vec<f64>),
    /// Tabulated data over one period, extended periodically.
    Sampled { period: f64 },
    /// No exploitable structure.
    General,
}

impl Structure {
    fn periodic_length(&self) -> Option<f64> {
        match self {
            Self::Periodic(p) => Some(*p),
            Self::Sampled { period } => Some(*period),
            _ => None,
        }
    }

    /// Combine the structures of several coefficients.
    pub fn combine<'a>(parts: impl IntoIterator<Item = &'a Structure>) -> Structure {
        let mut period: Option<f64> = None;
        let mut freqs: Vec<f64> = Vec::new();
        let mut general = false;
        let mut all_constant = true;
        for s in parts {
            match s {
                Self::Constant => {}
                Self::Periodic(p) | Self::Sampled { period: p } => {
                    all_constant = false;
                    freqs.push(2.0 * std::f64::consts::PI / p);
                    period = match period {
                        None => Some(*p),
                        Some(q) if (q - p).abs() <= 1e-12 * q => Some(q),
                        Some(_) => Some(f64::NAN),
                    };
                }
                Self::Quasiperiodic(f) => {
                    all_constant = false;
                    period = Some(f64::NAN);
                    freqs.extend_from_slice(f);
                }
                Self::General => {
                    all_constant = false;
                    general = true;
                }
            }
        }
        if general {
            Structure::General
        } else if all_constant {
            Structure::Constant
        } else {
            match period {
                Some(p) if p.is_finite() => Structure::Periodic(p),
                _ => {
                    freqs.sort_by(f64::total_cmp);
                    freqs.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());
                    Structure::Quasiperiodic(freqs)
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Linear,
    Cubic,
}

/// One period of tabulated data `(t_k, y_k)`, first and last values equal.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledTable {
    times: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    interpolation: Interpolation,
    period_integral: f64,
}

impl SampledTable {
    pub fn new(times: Vec<f64>, values: Vec<f64>, interpolation: Interpolation) -> Result<Self, OperatorError> {
        if times.len() != values.len() || times.len() < 3 {
            return Err(OperatorError::BadTable("need >= 3 (t, y) pairs".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(OperatorError::BadTable("times must be strictly increasing".into()));
        }
        if values.iter().chain(&times).any(|v| !v.is_finite()) {
            return Err(OperatorError::BadTable("non-finite entry".into()));
        }
        let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if (values[0] - values[values.len() - 1]).abs() > 1e-12 * scale {
            return Err(OperatorError::BadTable(
                "first and last values must agree (one closed period)".into(),
            ));
        }
        let n = times.len() - 1;
        let period = times[n] - times[0];
        let mut slopes = vec![0.0; n + 1];
        if interpolation == Interpolation::Cubic {
            // periodic Catmull–Rom slopes
            for i in 0..=n {
                let (prev_t, prev_y) = if i == 0 {
                    (times[n - 1] - period, values[n - 1])
                } else {
                    (times[i - 1], values[i - 1])
                };
                let (next_t, next_y) = if i == n {
                    (times[1] + period, values[1])
                } else {
                    (times[i + 1], values[i + 1])
                };
                slopes[i] = (next_y - prev_y) / (next_t - prev_t);
            }
        }
        let mut table = Self {
            times,
            values,
            slopes,
            interpolation,
            period_integral: 0.0,
        };
        table.period_integral = (0..n).map(|k| table.segment_integral(k, 1.0)).sum();
        Ok(table)
    }

    pub fn period(&self) -> f64 {
        self.times[self.times.len() - 1] - self.times[0]
    }

    fn locate(&self, t: f64) -> (f64, usize, f64) {
        let p = self.period();
        let shifted = t - self.times[0];
        let cycles = (shifted / p).floor();
        let local = self.times[0] + (shifted - cycles * p);
        let k = match self.times.binary_search_by(|x| x.total_cmp(&local)) {
            Ok(i) => i.min(self.times.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.times.len() - 2),
        };
        let h = self.times[k + 1] - self.times[k];
        (cycles, k, ((local - self.times[k]) / h).clamp(0.0, 1.0))
    }

    pub fn eval(&self, t: f64) -> f64 {
        let (_, k, tau) = self.locate(t);
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        match self.interpolation {
            Interpolation::Linear => y0 + (y1 - y0) * tau,
            Interpolation::Cubic => {
                let h = self.times[k + 1] - self.times[k];
                let t2 = tau * tau;
                let t3 = t2 * tau;
                (2.0 * t3 - 3.0 * t2 + 1.0) * y0
                    + (t3 - 2.0 * t2 + tau) * h * self.slopes[k]
                    + (-2.0 * t3 + 3.0 * t2) * y1
                    + (t3 - t2) * h * self.slopes[k + 1]
            }
        }
    }

    fn segment_integral(&self, k: usize, tau: f64) -> f64 {
        let h = self.times[k + 1] - self.times[k];
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        match self.interpolation {
            Interpolation::Linear => h * (y0 * tau + 0.5 * (y1 - y0) * tau * tau),
            Interpolation::Cubic => {
                let t2 = tau * tau;
                let t3 = t2 * tau;
                let t4 = t3 * tau;
                h * (y0 * (0.5 * t4 - t3 + tau)
                    + h * self.slopes[k] * (0.25 * t4 - 2.0 * t3 / 3.0 + 0.5 * t2)
                    + y1 * (-0.5 * t4 + t3)
                    + h * self.slopes[k + 1] * (0.25 * t4 - t3 / 3.0))
            }
        }
    }

    /// `∫_{t_0}^{t}` of the periodic extension.
    fn primitive_from_start(&self, t: f64) -> f64 {
        let (cycles, k, tau) = self.locate(t);
        let whole: f64 = (0..k).map(|j| self.segment_integral(j, 1.0)).sum();
        cycles * self.period_integral + whole + self.segment_integral(k, tau)
    }

    pub fn max_abs(&self) -> f64 {
        let nodes = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        match self.interpolation {
            Interpolation::Linear => nodes,
            // Hermite overshoot: sample each segment
            Interpolation::Cubic => (0..self.times.len() - 1)
                .flat_map(|k| {
                    (0..=16).map(move |j| {
                        let t = self.times[k] + (self.times[k + 1] - self.times[k]) * j as f64 / 16.0;
                        t
                    })
                })
                .fold(nodes, |m, t| m.max(self.eval(t).abs())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineTerm {
    pub amplitude: f64,
    /// Angular frequency.
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A scalar coefficient `t ↦ c(t)`.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    /// `mean + amplitude · cos(frequency · t + phase)`.
    Cosine {
        mean: f64,
        amplitude: f64,
        frequency: f64,
        phase: f64,
    },
    SumOfCosines {
        mean: f64,
        terms: Vec<CosineTerm>,
    },
    Sampled(Arc<SampledTable>),
    Custom {
        label: String,
        f: ScalarFn,
        structure: Structure,
    },
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::Cosine {
                mean,
                amplitude,
                frequency,
                phase,
            } => write!(f, "Cosine({mean} + {amplitude}·cos({frequency}t + {phase}))"),
            Self::SumOfCosines { mean, terms } => write!(f, "SumOfCosines({mean}, {terms:?})"),
            Self::Sampled(t) => write!(f, "Sampled(period {})", t.period()),
            Self::Custom { label, .. } => write!(f, "Custom({label})"),
        }
    }
}

impl Coefficient {
    pub fn custom(label: impl Into<String>, structure: Structure, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Custom {
            label: label.into(),
            f: Arc::new(f),
            structure,
        }
    }

    pub fn cosine(mean: f64, amplitude: f64, frequency: f64, phase: f64) -> Self {
        Self::Cosine {
            mean,
            amplitude,
            frequency,
            phase,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Constant(c) => *c,
            Self::Cosine {
                mean,
                amplitude,
                frequency,
                phase,
            } => mean + amplitude * (frequency * t + phase).cos(),
            Self::SumOfCosines { mean, terms } => {
                mean + terms
                    .iter()
                    .map(|c| c.amplitude * (c.frequency * t + c.phase).cos())
                    .sum::<f64>()
            }
            Self::Sampled(table) => table.eval(t),
            Self::Custom { f, .. } => f(t),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.structure(), Structure::Constant)
    }

    pub fn structure(&self) -> Structure {
        let tau = 2.0 * std::f64::consts::PI;
        match self {
            Self::Constant(_) => Structure::Constant,
            Self::Cosine {
                amplitude, frequency, ..
            } => {
                if *amplitude == 0.0 || *frequency == 0.0 {
                    Structure::Constant
                } else {
                    Structure::Periodic(tau / frequency.abs())
                }
            }
            Self::SumOfCosines { terms, .. } => {
                let freqs: Vec<f64> = terms
                    .iter()
                    .filter(|c| c.amplitude != 0.0 && c.frequency != 0.0)
                    .map(|c| c.frequency.abs())
                    .collect();
                match freqs.as_slice() {
                    [] => Structure::Constant,
                    [w] => Structure::Periodic(tau / w),
                    _ => {
                        let w0 = freqs[0];
                        if freqs.iter().all(|w| (w - w0).abs() <= 1e-12 * w0) {
                            Structure::Periodic(tau / w0)
                        } else {
                            Structure::Quasiperiodic(freqs)
                        }
                    }
                }
            }
            Self::Sampled(table) => Structure::Sampled {
                period: table.period(),
            },
            Self::Custom { structure, .. } => structure.clone(),
        }
    }

    /// Closed-form `∫_0^t c(ρ) dρ` where one exists.
    pub fn primitive(&self, t: f64) -> Option<f64> {
        let cos_primitive = |amp: f64, w: f64, phase: f64| {
            if w == 0.0 {
                amp * phase.cos() * t
            } else {
                amp / w * ((w * t + phase).sin() - phase.sin())
            }
        };
        match self {
            Self::Constant(c) => Some(c * t),
            Self::Cosine {
                mean,
                amplitude,
                frequency,
                phase,
            } => Some(mean * t + cos_primitive(*amplitude, *frequency, *phase)),
            Self::SumOfCosines { mean, terms } => Some(
                mean * t
                    + terms
                        .iter()
                        .map(|c| cos_primitive(c.amplitude, c.frequency, c.phase))
                        .sum::<f64>(),
            ),
            Self::Sampled(table) => Some(table.primitive_from_start(t) - table.primitive_from_start(0.0)),
            Self::Custom { .. } => None,
        }
    }

    /// Upper bound on `sup_t |c(t)|`, when cheaply known.
    pub fn sup_bound(&self) -> Option<f64> {
        match self {
            Self::Constant(c) => Some(c.abs()),
            Self::Cosine { mean, amplitude, .. } => Some(mean.abs() + amplitude.abs()),
            Self::SumOfCosines { mean, terms } => {
                Some(mean.abs() + terms.iter().map(|c| c.amplitude.abs()).sum::<f64>())
            }
            Self::Sampled(table) => Some(table.max_abs()),
            Self::Custom { .. } => None,
        }
    }
}

/// Constants the scenario claims for the family; every one is audited.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeclaredConstants {
    pub nu0: f64,
    pub c1: f64,
    pub c2: f64,
    pub holder_l: f64,
    pub holder_gamma: f64,
}

/// Coefficients `a_ij(t)` (row-major, `dim × dim`) and `g(t)` of `A(t)`.
#[derive(Debug, Clone)]
pub struct CoefficientFamily {
    dim: usize,
    a: Vec<Coefficient>,
    g: Coefficient,
    declared: DeclaredConstants,
}

impl CoefficientFamily {
    pub fn new(
        dim: usize,
        a: Vec<Coefficient>,
        g: Coefficient,
        declared: DeclaredConstants,
    ) -> Result<Self, OperatorError> {
        if dim == 0 || a.len() != dim * dim {
            return Err(OperatorError::DimensionMismatch {
                family: a.len(),
                grid: dim * dim,
            });
        }
        Ok(Self { dim, a, g, declared })
    }

    /// One-dimensional family `a(t) ∂²_x` plus `g(t)`.
    pub fn scalar(a: Coefficient, g: Coefficient, declared: DeclaredConstants) -> Self {
        Self {
            dim: 1,
            a: vec![a],
            g,
            declared,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn declared(&self) -> &DeclaredConstants {
        &self.declared
    }

    pub fn entry(&self, i: usize, j: usize) -> &Coefficient {
        &self.a[i * self.dim + j]
    }

    pub fn entries(&self) -> &[Coefficient] {
        &self.a
    }

    pub fn potential(&self) -> &Coefficient {
        &self.g
    }

    pub fn structure(&self) -> Structure {
        let parts: Vec<Structure> = self.a.iter().chain(std::iter::once(&self.g)).map(|c| c.structure()).collect();
        Structure::combine(parts.iter())
    }

    pub fn is_constant(&self) -> bool {
        self.structure() == Structure::Constant
    }

    pub fn eval_matrix(&self, t: f64) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.entry(i, j).eval(t))
    }

    pub fn eval_g(&self, t: f64) -> f64 {
        self.g.eval(t)
    }

    /// `p(t, ξ) = Σ a_ij(t) ξ_i ξ_j + g(t)`.
    pub fn eval_symbol(&self, t: f64, xi: &[f64]) -> Result<f64, OperatorError> {
        let a = self.eval_matrix(t);
        let g = self.eval_g(t);
        symbol_from(&a, g, xi).ok_or(OperatorError::NonFinite {
            name: "symbol".into(),
            t,
        })
    }

    /// Symbol values at every grid frequency, for one time.
    pub fn symbol_on_grid(&self, t: f64, grid: &SpectralGrid) -> Result<Vec<f64>, OperatorError> {
        if grid.dim() != self.dim {
            return Err(OperatorError::DimensionMismatch {
                family: self.dim,
                grid: grid.dim(),
            });
        }
        let a = self.eval_matrix(t);
        let g = self.eval_g(t);
        grid.frequencies()
            .map(|xi| symbol_from(&a, g, xi).ok_or(OperatorError::NonFinite { name: "symbol".into(), t }))
            .collect()
    }

    fn check_symmetric(&self, t: f64, a: &DMatrix<f64>) -> Result<(), OperatorError> {
        for i in 0..self.dim {
            for j in 0..self.dim {
                let (aij, aji) = (a[(i, j)], a[(j, i)]);
                if !aij.is_finite() {
                    return Err(OperatorError::NonFinite {
                        name: format!("a[{i}][{j}]"),
                        t,
                    });
                }
                if (aij - aji).abs() > 1e-14 * (1.0 + aij.abs()) {
                    return Err(OperatorError::NotSymmetric { t, i, j, aij, aji });
                }
            }
        }
        Ok(())
    }

    /// Smallest eigenvalue of `a(t)` over the mesh.
    pub fn audit_ellipticity(&self, time_mesh: &[f64]) -> Result<EllipticityAudit, OperatorError> {
        if time_mesh.is_empty() {
            return Err(OperatorError::EmptyMesh);
        }
        let mut measured = f64::INFINITY;
        let mut argmin = time_mesh[0];
        for &t in time_mesh {
            let a = self.eval_matrix(t);
            self.check_symmetric(t, &a)?;
            let lo = if self.dim == 1 {
                a[(0, 0)]
            } else {
                a.symmetric_eigenvalues().min()
            };
            if lo < measured {
                measured = lo;
                argmin = t;
            }
        }
        let declared = self.declared.nu0;
        Ok(EllipticityAudit {
            measured,
            declared,
            argmin,
            satisfied: measured >= declared * (1.0 - 1e-9),
            mesh: MeshTag::from_times(time_mesh),
        })
    }

    /// Range of `g` over the mesh against the declared `[c̄₁, c̄₂]`.
    pub fn audit_potential_bounds(&self, time_mesh: &[f64]) -> Result<PotentialAudit, OperatorError> {
        if time_mesh.is_empty() {
            return Err(OperatorError::EmptyMesh);
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &t in time_mesh {
            let g = self.eval_g(t);
            if !g.is_finite() {
                return Err(OperatorError::NonFinite { name: "g".into(), t });
            }
            lo = lo.min(g);
            hi = hi.max(g);
        }
        let d = &self.declared;
        Ok(PotentialAudit {
            min: lo,
            max: hi,
            declared: (d.c1, d.c2),
            satisfied: d.c1 > 0.0 && lo >= d.c1 * (1.0 - 1e-9) && hi <= d.c2 * (1.0 + 1e-9),
            mesh: MeshTag::from_times(time_mesh),
        })
    }

    /// Fit `|c(t+h) − c(t)| ≤ L̄ h^γ` for every coefficient.
    ///
    /// For each gap `h` the largest increment over base points in `time_mesh`
    /// is recorded; `γ` is the least-squares slope of log-increment against
    /// log-gap and `L̄` the smallest constant making the bound hold at every
    /// gap with that exponent.
    pub fn audit_holder(&self, time_mesh: &[f64], gaps: &[f64]) -> Result<HolderAudit, OperatorError> {
        if time_mesh.len() < 16 {
            return Err(OperatorError::ShortMesh(time_mesh.len()));
        }
        let first = time_mesh[0];
        if time_mesh.iter().all(|&t| t == first) || gaps.is_empty() || gaps.iter().all(|&h| h <= 0.0) {
            return Err(OperatorError::DegenerateMesh);
        }
        let declared = &self.declared;
        let mut entries = Vec::new();
        let named = self
            .a
            .iter()
            .enumerate()
            .map(|(k, c)| (format!("a[{}][{}]", k / self.dim, k % self.dim), c))
            .chain(std::iter::once(("g".to_string(), &self.g)));
        let mut declared_quotient: f64 = 0.0;
        for (name, coef) in named {
            let mut points = Vec::with_capacity(gaps.len());
            for &h in gaps.iter().filter(|h| **h > 0.0) {
                let mut worst: f64 = 0.0;
                for &t in time_mesh {
                    let d = (coef.eval(t + h) - coef.eval(t)).abs();
                    if !d.is_finite() {
                        return Err(OperatorError::NonFinite { name, t });
                    }
                    worst = worst.max(d);
                }
                declared_quotient = declared_quotient.max(worst / h.powf(declared.holder_gamma));
                points.push((h, worst));
            }
            let scale = points.iter().fold(0.0f64, |m, p| m.max(p.1));
            let fit: Vec<(f64, f64)> = points
                .iter()
                .filter(|p| p.1 > 1e-13 * scale.max(1.0))
                .map(|&(h, d)| (h.ln(), d.ln()))
                .collect();
            if fit.len() < 2 {
                entries.push(HolderEntry {
                    name,
                    l_fit: 0.0,
                    gamma_fit: None,
                });
                continue;
            }
            let (slope, _) = least_squares(&fit);
            let gamma = slope.clamp(f64::MIN_POSITIVE, 1.0);
            let l = points
                .iter()
                .map(|&(h, d)| d / h.powf(gamma))
                .fold(0.0f64, f64::max);
            entries.push(HolderEntry {
                name,
                l_fit: l,
                gamma_fit: Some(gamma),
            });
        }
        let trivially = entries.iter().all(|e| e.gamma_fit.is_none());
        let l_fit = entries.iter().map(|e| e.l_fit).fold(0.0, f64::max);
        let gamma_fit = entries.iter().filter_map(|e| e.gamma_fit).fold(None, |acc: Option<f64>, g| {
            Some(acc.map_or(g, |a| a.min(g)))
        });
        let mut notes = Vec::new();
        if trivially {
            notes.push("Hölder condition trivially satisfied, L̄ = 0".to_string());
        }
        if declared.holder_gamma >= 1.0 || gamma_fit.is_some_and(|g| g >= 1.0 - 1e-12) {
            notes.push(
                "exponent range differs between the coefficient condition (0 <= γ < 1) and the operator condition (0 < γ <= 1); γ = 1 accepted".to_string(),
            );
        }
        let gamma_ok = declared.holder_gamma > 0.0 && declared.holder_gamma <= 1.0;
        Ok(HolderAudit {
            l_fit,
            gamma_fit,
            entries,
            declared: (declared.holder_l, declared.holder_gamma),
            declared_quotient,
            satisfied: gamma_ok && declared_quotient <= declared.holder_l * (1.0 + 1e-9),
            trivially_satisfied: trivially,
            notes,
            mesh: MeshTag::from_times(time_mesh),
            gaps: gaps.len(),
        })
    }

    /// `M = max (1+|ζ|)·max_ξ 1/|ζ − p(t,ξ)|` over the ζ and time meshes.
    pub fn audit_resolvent(
        &self,
        grid: &SpectralGrid,
        zeta_mesh: &[(f64, f64)],
        time_mesh: &[f64],
    ) -> Result<ResolventAudit, OperatorError> {
        if zeta_mesh.is_empty() || time_mesh.is_empty() {
            return Err(OperatorError::EmptyMesh);
        }
        let mut m: f64 = 0.0;
        let mut at_zero: f64 = 0.0;
        for &t in time_mesh {
            let symbols = self.symbol_on_grid(t, grid)?;
            for &(re, im) in zeta_mesh {
                let mut worst: f64 = 0.0;
                for &p in &symbols {
                    let dist = ((re - p) * (re - p) + im * im).sqrt();
                    if dist == 0.0 {
                        return Err(OperatorError::ResolventCollision { zeta: (re, im), t });
                    }
                    worst = worst.max(1.0 / dist);
                }
                let modulus = (re * re + im * im).sqrt();
                m = m.max((1.0 + modulus) * worst);
                if modulus == 0.0 {
                    at_zero = at_zero.max(worst);
                }
            }
        }
        let c1 = self.declared.c1;
        let bound = std::f64::consts::SQRT_2 * (1.0f64).max(1.0 / c1);
        Ok(ResolventAudit {
            m,
            resolvent_at_zero: at_zero,
            analytic_bound: bound,
            satisfied: c1 > 0.0 && m <= bound * (1.0 + 1e-9),
            zeta_samples: zeta_mesh.len(),
            mesh: MeshTag::from_times(time_mesh),
        })
    }

    /// Mode-wise extremes of the norm-equivalence ratios.
    pub fn audit_norm_equivalence(
        &self,
        grid: &SpectralGrid,
        alpha: f64,
        time_mesh: &[f64],
    ) -> Result<NormEquivalence, OperatorError> {
        if time_mesh.is_empty() {
            return Err(OperatorError::EmptyMesh);
        }
        let base = self.symbol_on_grid(0.0, grid)?;
        let sob: Vec<f64> = grid.frequencies().map(|xi| 1.0 + xi.iter().map(|x| x * x).sum::<f64>()).collect();
        let mut out = NormEquivalence {
            c1: f64::INFINITY,
            c2: 0.0,
            c1_alpha: f64::INFINITY,
            c2_alpha: 0.0,
            h1_lower: f64::INFINITY,
            h1_upper: 0.0,
            h1_upper_bound: 0.0,
            alpha,
            mesh: MeshTag::from_times(time_mesh),
        };
        let mut a_inf: f64 = 0.0;
        for &t in time_mesh {
            let p = self.symbol_on_grid(t, grid)?;
            let a = self.eval_matrix(t);
            a_inf = a.iter().fold(a_inf, |m, v| m.max(v.abs()));
            for ((&pt, &p0), &s) in p.iter().zip(&base).zip(&sob) {
                let r = pt / p0;
                out.c1 = out.c1.min(r);
                out.c2 = out.c2.max(r);
                let ra = r.powf(alpha);
                out.c1_alpha = out.c1_alpha.min(ra);
                out.c2_alpha = out.c2_alpha.max(ra);
                let h = (pt / s).sqrt();
                out.h1_lower = out.h1_lower.min(h);
                out.h1_upper = out.h1_upper.max(h);
            }
        }
        let n = self.dim as f64;
        out.h1_upper_bound = (n * n * a_inf + self.declared.c2).sqrt();
        Ok(out)
    }
}

fn symbol_from(a: &DMatrix<f64>, g: f64, xi: &[f64]) -> Option<f64> {
    let mut s = g;
    for i in 0..xi.len() {
        for j in 0..xi.len() {
            s += a[(i, j)] * xi[i] * xi[j];
        }
    }
    s.is_finite().then_some(s)
}

fn least_squares(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Summary of a sample mesh, attached to every audit figure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshTag {
    pub count: usize,
    pub start: f64,
    pub end: f64,
}

impl MeshTag {
    pub fn from_times(times: &[f64]) -> Self {
        Self {
            count: times.len(),
            start: times.iter().copied().fold(f64::INFINITY, f64::min),
            end: times.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticityAudit {
    pub measured: f64,
    pub declared: f64,
    pub argmin: f64,
    pub satisfied: bool,
    pub mesh: MeshTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialAudit {
    pub min: f64,
    pub max: f64,
    pub declared: (f64, f64),
    pub satisfied: bool,
    pub mesh: MeshTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderEntry {
    pub name: String,
    pub l_fit: f64,
    /// `None` when the coefficient never changes on the mesh.
    pub gamma_fit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderAudit {
    pub l_fit: f64,
    pub gamma_fit: Option<f64>,
    pub entries: Vec<HolderEntry>,
    pub declared: (f64, f64),
    /// `max_h D(h) / h^γ_declared`, compared against the declared `L̄`.
    pub declared_quotient: f64,
    pub satisfied: bool,
    pub trivially_satisfied: bool,
    pub notes: Vec<String>,
    pub mesh: MeshTag,
    pub gaps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolventAudit {
    pub m: f64,
    pub resolvent_at_zero: f64,
    /// `√2 · max(1, 1/c̄₁)`.
    pub analytic_bound: f64,
    pub satisfied: bool,
    pub zeta_samples: usize,
    pub mesh: MeshTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormEquivalence {
    /// Extremes of `p(t,ξ)/p(0,ξ)` (graph-norm constants).
    pub c1: f64,
    pub c2: f64,
    /// Extremes of `(p(t,ξ)/p(0,ξ))^α`.
    pub c1_alpha: f64,
    pub c2_alpha: f64,
    /// Extremes of `√(p(t,ξ)/(1+|ξ|²))`: `‖A(t)^{1/2}u‖ / ‖u‖_{H¹}`.
    pub h1_lower: f64,
    pub h1_upper: f64,
    /// `(N² a_∞ + c̄₂)^{1/2}`.
    pub h1_upper_bound: f64,
    pub alpha: f64,
    pub mesh: MeshTag,
}

/// Audit meshes. Defaults: one structural period (or `[0, 64]`) sampled at
/// 257 points, 256 log-spaced Hölder gaps, and 129 resolvent points (ζ = 0,
/// 64 on the imaginary axis, 64 negative reals up to |ζ| = 10⁶).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditMesh {
    pub times: Vec<f64>,
    pub holder_gaps: Vec<f64>,
    pub zetas: Vec<(f64, f64)>,
}

impl AuditMesh {
    pub fn for_structure(structure: &Structure) -> Self {
        let span = match structure {
            Structure::Periodic(p) | Structure::Sampled { period: p } => *p,
            Structure::Quasiperiodic(f) => {
                let slowest = f.iter().copied().fold(f64::INFINITY, f64::min);
                (4.0 * std::f64::consts::PI / slowest).max(64.0)
            }
            Structure::Constant | Structure::General => 64.0,
        };
        let times = uniform_mesh(0.0, span, 257);
        let holder_gaps = log_mesh(span * 1e-5, span / 16.0, 256);
        Self {
            times,
            holder_gaps,
            zetas: default_zeta_mesh(),
        }
    }
}

pub fn uniform_mesh(a: f64, b: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![a];
    }
    let h = (b - a) / (count - 1) as f64;
    (0..count).map(|k| a + h * k as f64).collect()
}

pub fn log_mesh(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count)
        .map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp())
        .collect()
}

pub fn default_zeta_mesh() -> Vec<(f64, f64)> {
    let mut z = vec![(0.0, 0.0)];
    for y in log_mesh(1e-2, 1e6, 32) {
        z.push((0.0, y));
        z.push((0.0, -y));
    }
    for x in log_mesh(1e-2, 1e6, 64) {
        z.push((-x, 0.0));
    }
    z
}

/// Result of [`cesaro_average`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CesaroResult {
    pub value: f64,
    pub converged: bool,
    /// Averaging window used for `value` (one period when exploited).
    pub omega: f64,
    /// `(ω, mean)` at each schedule point.
    pub history: Vec<(f64, f64)>,
}

/// Cesàro mean `(1/ω)∫₀^ω h` with structure exploitation.
///
/// Periodic and sampled structures return the one-period mean directly.
/// Quasiperiodic structures move each schedule point to a nearby multiple of
/// the first period that is close to a common period of all the declared
/// frequencies.
pub fn cesaro_average(
    h: &dyn Fn(f64) -> f64,
    structure: &Structure,
    schedule: &[f64],
    tol: f64,
) -> Result<CesaroResult, OperatorError> {
    let rule = AdaptiveRule::default();
    match structure {
        Structure::Constant => {
            let v = h(0.0);
            return Ok(CesaroResult {
                value: v,
                converged: true,
                omega: 0.0,
                history: vec![],
            });
        }
        Structure::Periodic(_) | Structure::Sampled { .. } => {
            let p = structure.periodic_length().expect("periodic");
            let mean = integrate_adaptive(h, 0.0, p, rule)? / p;
            return Ok(CesaroResult {
                value: mean,
                converged: true,
                omega: p,
                history: vec![(p, mean)],
            });
        }
        _ => {}
    }
    if schedule.len() < 3 || schedule.windows(2).any(|w| !(w[1] > w[0])) || schedule[0] <= 0.0 {
        return Err(OperatorError::BadSchedule);
    }
    let (omegas, panel) = match structure {
        Structure::Quasiperiodic(freqs) if !freqs.is_empty() => {
            let fastest = freqs.iter().copied().fold(0.0, f64::max);
            (near_common_periods(schedule, freqs), (std::f64::consts::PI / fastest).min(1.0))
        }
        _ => (schedule.to_vec(), 1.0),
    };
    let mut integral = 0.0;
    let mut last = 0.0;
    let mut history = Vec::with_capacity(omegas.len());
    for &w in &omegas {
        integral += integrate_paneled(h, last, w, panel, rule)?;
        last = w;
        history.push((w, integral / w));
    }
    let n = history.len();
    let converged = (history[n - 1].1 - history[n - 2].1).abs() < tol;
    Ok(CesaroResult {
        value: history[n - 1].1,
        converged,
        omega: history[n - 1].0,
        history,
    })
}

fn near_common_periods(schedule: &[f64], freqs: &[f64]) -> Vec<f64> {
    let tau = 2.0 * std::f64::consts::PI;
    let base = tau / freqs[0];
    let score = |w: f64| -> f64 {
        freqs
            .iter()
            .map(|&nu| {
                let phase = (nu * w).rem_euclid(tau);
                phase.min(tau - phase) / nu
            })
            .sum()
    };
    let mut out = Vec::with_capacity(schedule.len());
    let mut floor = 0.0;
    for &target in schedule {
        let k0 = (target.max(floor) / base).ceil().max(1.0);
        let mut best = (f64::INFINITY, k0 * base);
        for j in 0..256 {
            let w = (k0 + j as f64) * base;
            if w <= floor {
                continue;
            }
            let s = score(w);
            if s < best.0 {
                best = (s, w);
            }
        }
        floor = best.1;
        out.push(best.1);
    }
    out
}

/// Constant family with the Cesàro means `â_ij`, `ĝ` of every entry.
pub fn averaged_family(
    family: &CoefficientFamily,
    schedule: &[f64],
    tol: f64,
) -> Result<CoefficientFamily, OperatorError> {
    let average = |name: String, c: &Coefficient| -> Result<Coefficient, OperatorError> {
        let r = cesaro_average(&|t| c.eval(t), &c.structure(), schedule, tol)?;
        if !r.converged {
            let n = r.history.len();
            return Err(OperatorError::NotConverged {
                entry: name,
                previous: r.history[n - 2].1,
                last: r.history[n - 1].1,
            });
        }
        Ok(Coefficient::Constant(r.value))
    };
    let dim = family.dim;
    let a = family
        .a
        .iter()
        .enumerate()
        .map(|(k, c)| average(format!("a[{}][{}]", k / dim, k % dim), c))
        .collect::<Result<Vec<_>, _>>()?;
    let g = average("g".into(), &family.g)?;
    Ok(CoefficientFamily {
        dim,
        a,
        g,
        declared: family.declared,
    })
}

pub type SpaceTimeFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type SpaceFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// The forcing `f(t, x)` with its envelope `k(x)`, `|f(t,x)| <= k(x)`.
#[derive(Clone)]
pub enum ForcingFamily {
    /// `f(t, x) = c(t) · h(x)`; the envelope is `sup|c| · |h(x)|`.
    Separable {
        time: Coefficient,
        space: SpatialProfile,
    },
    General {
        f: SpaceTimeFn,
        envelope: SpaceFn,
        structure: Structure,
    },
}

impl fmt::Debug for ForcingFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Separable { time, space } => f
                .debug_struct("Separable")
                .field("time", time)
                .field("space", space)
                .finish(),
            Self::General { structure, .. } => f.debug_struct("General").field("structure", structure).finish(),
        }
    }
}

impl ForcingFamily {
    pub fn structure(&self) -> Structure {
        match self {
            Self::Separable { time, .. } => time.structure(),
            Self::General { structure, .. } => structure.clone(),
        }
    }

    pub fn eval(&self, t: f64, x: &[f64], periods: &[f64]) -> f64 {
        match self {
            Self::Separable { time, space } => time.eval(t) * space.eval(x, periods),
            Self::General { f, .. } => f(t, x),
        }
    }

    pub fn envelope(&self, x: &[f64], periods: &[f64]) -> f64 {
        match self {
            Self::Separable { time, space } => {
                let sup = time.sup_bound().unwrap_or(f64::INFINITY);
                sup * space.eval(x, periods).abs()
            }
            Self::General { envelope, .. } => envelope(x),
        }
    }

    /// `f(t, ·)` sampled on the grid.
    pub fn field_at(&self, t: f64, grid: &Arc<SpectralGrid>) -> Field {
        let periods = grid.periods().to_vec();
        Field::from_real_fn(grid, |x| self.eval(t, x, &periods))
    }

    /// Check `|f(t,x)| <= k(x)` on the grid for every mesh time.
    pub fn audit_envelope(&self, grid: &Arc<SpectralGrid>, time_mesh: &[f64]) -> Result<EnvelopeAudit, OperatorError> {
        if time_mesh.is_empty() {
            return Err(OperatorError::EmptyMesh);
        }
        let periods = grid.periods().to_vec();
        let mut worst_excess: f64 = 0.0;
        let mut sup: f64 = 0.0;
        let env: Vec<f64> = (0..grid.len()).map(|m| self.envelope(&grid.point(m), &periods)).collect();
        for &t in time_mesh {
            for (m, &k) in env.iter().enumerate() {
                let v = self.eval(t, &grid.point(m), &periods).abs();
                if !v.is_finite() {
                    return Err(OperatorError::NonFinite { name: "f".into(), t });
                }
                sup = sup.max(v);
                worst_excess = worst_excess.max(v - k);
            }
        }
        let envelope_l2 = (env.iter().map(|k| k * k).sum::<f64>() * grid.cell_volume()).sqrt();
        Ok(EnvelopeAudit {
            sup_abs: sup,
            worst_excess,
            envelope_l2,
            satisfied: worst_excess <= 1e-12 * sup.max(1.0) && envelope_l2.is_finite(),
            mesh: MeshTag::from_times(time_mesh),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeAudit {
    pub sup_abs: f64,
    /// `max (|f| − k)`; non-positive when the envelope holds.
    pub worst_excess: f64,
    pub envelope_l2: f64,
    pub satisfied: bool,
    pub mesh: MeshTag,
}

/// Cesàro mean `f̂` of the forcing, sampled on the grid.
pub fn averaged_forcing(
    forcing: &ForcingFamily,
    grid: &Arc<SpectralGrid>,
    schedule: &[f64],
    tol: f64,
) -> Result<Field, OperatorError> {
    let periods = grid.periods().to_vec();
    match forcing {
        ForcingFamily::Separable { time, space } => {
            let r = cesaro_average(&|t| time.eval(t), &time.structure(), schedule, tol)?;
            if !r.converged {
                let n = r.history.len();
                return Err(OperatorError::NotConverged {
                    entry: "forcing time profile".into(),
                    previous: r.history[n - 2].1,
                    last: r.history[n - 1].1,
                });
            }
            let mean = r.value;
            Ok(Field::from_real_fn(grid, |x| mean * space.eval(x, &periods)))
        }
        ForcingFamily::General { f, structure, .. } => {
            let mut values = Vec::with_capacity(grid.len());
            for m in 0..grid.len() {
                let x = grid.point(m);
                let r = cesaro_average(&|t| f(t, &x), structure, schedule, tol)?;
                if !r.converged {
                    let n = r.history.len();
                    return Err(OperatorError::NotConverged {
                        entry: format!("f at node {m}"),
                        previous: r.history[n - 2].1,
                        last: r.history[n - 1].1,
                    });
                }
                values.push(num_complex::Complex64::new(r.value, 0.0));
            }
            Ok(Field::from_values(grid, values))
        }
    }
}

/// Complete audit of one scenario's operator data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub nu0: EllipticityAudit,
    pub potential: PotentialAudit,
    pub holder: HolderAudit,
    pub resolvent: ResolventAudit,
    pub norm_equivalence: NormEquivalence,
    pub envelope: Option<EnvelopeAudit>,
    /// Smoothing constant per λ, filled in by the evolution probes.
    pub smoothing_k: Vec<(f64, f64)>,
}

impl AuditReport {
    /// Human-readable findings for every failed check.
    pub fn findings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.nu0.satisfied {
            out.push(format!(
                "ellipticity: measured {} < declared {}",
                fmt_num(self.nu0.measured),
                fmt_num(self.nu0.declared)
            ));
        }
        if !self.potential.satisfied {
            out.push(format!(
                "potential bounds: g ranges over [{}, {}], declared [{}, {}]",
                fmt_num(self.potential.min),
                fmt_num(self.potential.max),
                fmt_num(self.potential.declared.0),
                fmt_num(self.potential.declared.1)
            ));
        }
        if !self.holder.satisfied {
            out.push(format!(
                "hölder: max increment quotient {} exceeds declared L̄ = {} at γ = {}",
                fmt_num(self.holder.declared_quotient),
                fmt_num(self.holder.declared.0),
                fmt_num(self.holder.declared.1)
            ));
        }
        if !self.resolvent.satisfied {
            out.push(format!(
                "resolvent: measured M = {} exceeds {}",
                fmt_num(self.resolvent.m),
                fmt_num(self.resolvent.analytic_bound)
            ));
        }
        if self.norm_equivalence.h1_upper > self.norm_equivalence.h1_upper_bound * (1.0 + 1e-12) {
            out.push(format!(
                "H1 equivalence: ratio {} exceeds (N² a_∞ + c̄₂)^1/2 = {}",
                fmt_num(self.norm_equivalence.h1_upper),
                fmt_num(self.norm_equivalence.h1_upper_bound)
            ));
        }
        if let Some(env) = &self.envelope {
            if !env.satisfied {
                out.push(format!("forcing envelope exceeded by {}", fmt_num(env.worst_excess)));
            }
        }
        out
    }

    pub fn consistent(&self) -> bool {
        self.findings().is_empty()
    }
}

fn fmt_num(v: f64) -> String {
    if v == v.round() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.6}")
    }
}

/// Run every operator audit on the given meshes.
pub fn audit_family(
    family: &CoefficientFamily,
    forcing: Option<&ForcingFamily>,
    grid: &Arc<SpectralGrid>,
    alpha: f64,
    mesh: &AuditMesh,
) -> Result<AuditReport, OperatorError> {
    Ok(AuditReport {
        nu0: family.audit_ellipticity(&mesh.times)?,
        potential: family.audit_potential_bounds(&mesh.times)?,
        holder: family.audit_holder(&mesh.times, &mesh.holder_gaps)?,
        resolvent: family.audit_resolvent(grid, &mesh.zetas, &mesh.times)?,
        norm_equivalence: family.audit_norm_equivalence(grid, alpha, &mesh.times)?,
        envelope: forcing.map(|f| f.audit_envelope(grid, &mesh.times)).transpose()?,
        smoothing_k: vec![],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::make_grid;
    use std::f64::consts::PI;

    fn declared(nu0: f64, c1: f64, c2: f64) -> DeclaredConstants {
        DeclaredConstants {
            nu0,
            c1,
            c2,
            holder_l: 1.0,
            holder_gamma: 1.0,
        }
    }

    fn cosine_family(g: Coefficient) -> CoefficientFamily {
        CoefficientFamily::scalar(Coefficient::cosine(2.0, 1.0, 1.0, 0.0), g, declared(1.0, 1.0, 1.0))
    }

    #[test]
    fn symbol_values() {
        let fam = cosine_family(Coefficient::Constant(1.0));
        assert_eq!(fam.eval_symbol(0.0, &[1.0]).unwrap(), 4.0);
        let v = fam.eval_symbol(PI / 2.0, &[2.0]).unwrap();
        assert!((v - 9.0).abs() < 1e-14);
        let id = CoefficientFamily::new(
            2,
            vec![
                Coefficient::Constant(1.0),
                Coefficient::Constant(0.0),
                Coefficient::Constant(0.0),
                Coefficient::Constant(1.0),
            ],
            Coefficient::Constant(0.0),
            declared(1.0, 0.0, 0.0),
        )
        .unwrap();
        assert_eq!(id.eval_symbol(3.3, &[1.5, -2.0]).unwrap(), 6.25);
    }

    #[test]
    fn symbol_non_finite_is_error() {
        let fam = cosine_family(Coefficient::custom("log", Structure::General, |t: f64| t.ln()));
        assert!(matches!(
            fam.eval_symbol(-1.0, &[1.0]),
            Err(OperatorError::NonFinite { .. })
        ));
    }

    #[test]
    fn ellipticity_examples() {
        let mesh = uniform_mesh(0.0, 2.0 * PI, 257);
        let fam = cosine_family(Coefficient::Constant(1.0));
        let a = fam.audit_ellipticity(&mesh).unwrap();
        assert_eq!(a.measured, 1.0);
        assert_eq!(a.argmin, PI);
        assert!(a.satisfied);

        let diag = CoefficientFamily::new(
            2,
            vec![
                Coefficient::Constant(2.0),
                Coefficient::Constant(0.0),
                Coefficient::Constant(0.0),
                Coefficient::custom("3+sin", Structure::Periodic(2.0 * PI), |t: f64| 3.0 + t.sin()),
            ],
            Coefficient::Constant(1.0),
            declared(2.0, 1.0, 1.0),
        )
        .unwrap();
        assert!((diag.audit_ellipticity(&mesh).unwrap().measured - 2.0).abs() < 1e-14);

        let coupled = CoefficientFamily::new(
            2,
            vec![
                Coefficient::Constant(2.0),
                Coefficient::Constant(1.0),
                Coefficient::Constant(1.0),
                Coefficient::Constant(2.0),
            ],
            Coefficient::Constant(1.0),
            declared(1.0, 1.0, 1.0),
        )
        .unwrap();
        assert!((coupled.audit_ellipticity(&mesh).unwrap().measured - 1.0).abs() < 1e-14);
    }

    #[test]
    fn ellipticity_violation_and_asymmetry() {
        let mesh = uniform_mesh(0.0, 2.0 * PI, 257);
        let mut fam = cosine_family(Coefficient::Constant(1.0));
        fam.declared.nu0 = 2.0;
        assert!(!fam.audit_ellipticity(&mesh).unwrap().satisfied);

        let skew = CoefficientFamily::new(
            2,
            vec![
                Coefficient::Constant(2.0),
                Coefficient::Constant(1.0),
                Coefficient::Constant(0.0),
                Coefficient::Constant(2.0),
            ],
            Coefficient::Constant(1.0),
            declared(1.0, 1.0, 1.0),
        )
        .unwrap();
        assert!(matches!(
            skew.audit_ellipticity(&mesh),
            Err(OperatorError::NotSymmetric { .. })
        ));
        assert_eq!(fam.audit_ellipticity(&[]).unwrap_err(), OperatorError::EmptyMesh);
    }

    #[test]
    fn holder_smooth_cosine() {
        let fam = cosine_family(Coefficient::Constant(1.0));
        let mesh = AuditMesh::for_structure(&fam.structure());
        let h = fam.audit_holder(&mesh.times, &mesh.holder_gaps).unwrap();
        assert!(h.gamma_fit.unwrap() >= 0.95, "{:?}", h.gamma_fit);
        assert!(h.l_fit <= 1.0 + 1e-12, "{}", h.l_fit);
        assert!(h.satisfied);
        assert!(!h.trivially_satisfied);
    }

    #[test]
    fn holder_constant_is_trivial() {
        let fam = CoefficientFamily::scalar(
            Coefficient::Constant(1.0),
            Coefficient::Constant(1.0),
            declared(1.0, 1.0, 1.0),
        );
        let mesh = AuditMesh::for_structure(&fam.structure());
        let h = fam.audit_holder(&mesh.times, &mesh.holder_gaps).unwrap();
        assert!(h.trivially_satisfied);
        assert_eq!(h.l_fit, 0.0);
        assert!(h.notes.iter().any(|n| n.contains("trivially satisfied")));
    }

    #[test]
    fn holder_square_root_cusp() {
        // oracle: local slope of log|c(h) − c(0)| on a log-spaced mesh
        let c = |t: f64| 2.0 + t.sin().abs().sqrt();
        let hs = log_mesh(1e-6, 1e-2, 9);
        let slopes: Vec<f64> = hs
            .windows(2)
            .map(|w| ((c(w[1]) - c(0.0)).ln() - (c(w[0]) - c(0.0)).ln()) / (w[1].ln() - w[0].ln()))
            .collect();
        let oracle = slopes.iter().sum::<f64>() / slopes.len() as f64;
        assert!((oracle - 0.5).abs() < 0.01);

        let fam = CoefficientFamily::scalar(
            Coefficient::custom("2+sqrt|sin|", Structure::Periodic(PI), c),
            Coefficient::Constant(1.0),
            declared(2.0, 1.0, 1.0),
        );
        let mesh = AuditMesh::for_structure(&fam.structure());
        let h = fam.audit_holder(&mesh.times, &mesh.holder_gaps).unwrap();
        let g = h.gamma_fit.unwrap();
        assert!((g - oracle).abs() < 0.05, "gamma {g} vs oracle {oracle}");
        // declared γ = 1 cannot hold for a cusp
        assert!(!h.satisfied);
    }

    #[test]
    fn holder_rejects_bad_meshes() {
        let fam = cosine_family(Coefficient::Constant(1.0));
        assert_eq!(
            fam.audit_holder(&[0.0; 4], &[0.1]).unwrap_err(),
            OperatorError::ShortMesh(4)
        );
        assert_eq!(
            fam.audit_holder(&[1.0; 20], &[0.1]).unwrap_err(),
            OperatorError::DegenerateMesh
        );
    }

    #[test]
    fn resolvent_examples() {
        let grid = make_grid(1, 64, 2.0 * PI).unwrap();
        let fam = cosine_family(Coefficient::Constant(1.0));
        let mesh = AuditMesh::for_structure(&fam.structure());
        let r = fam.audit_resolvent(&grid, &mesh.zetas, &mesh.times).unwrap();
        assert!(r.m <= std::f64::consts::SQRT_2 * (1.0 + 1e-6));
        assert!(r.satisfied);
        // ζ = 0 gives 1/min p = 1/c̄₁
        assert!((r.resolvent_at_zero - 1.0).abs() < 1e-14);

        // single mode ξ = 0 with a = 1, g = 1 and ζ = −1
        let unit = CoefficientFamily::scalar(
            Coefficient::Constant(1.0),
            Coefficient::Constant(1.0),
            declared(1.0, 1.0, 1.0),
        );
        let r = unit.audit_resolvent(&grid, &[(-1.0, 0.0)], &[0.0]).unwrap();
        // the zero mode dominates: (1+1)·1/|−1−1| = 1
        assert!((r.m - 1.0).abs() < 1e-14);
    }

    #[test]
    fn resolvent_collision_reported() {
        let grid = make_grid(1, 8, 2.0 * PI).unwrap();
        let fam = CoefficientFamily::scalar(
            Coefficient::Constant(1.0),
            Coefficient::Constant(0.0),
            declared(1.0, 0.0, 0.0),
        );
        assert!(matches!(
            fam.audit_resolvent(&grid, &[(0.0, 0.0)], &[0.0]),
            Err(OperatorError::ResolventCollision { .. })
        ));
    }

    #[test]
    fn cesaro_periodic_and_constant() {
        let r = cesaro_average(&|t| 2.0 + t.cos(), &Structure::Periodic(2.0 * PI), &[], 1e-9).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12);
        assert!(r.converged);
        let r = cesaro_average(&|_| 4.5, &Structure::Constant, &[], 1e-9).unwrap();
        assert_eq!(r.value, 4.5);
    }

    #[test]
    fn cesaro_quasiperiodic() {
        let s2 = 2f64.sqrt();
        let h = |t: f64| t.cos() + (s2 * t).cos();
        let schedule = [1e2, 1e3, 1e4];
        let r = cesaro_average(&h, &Structure::Quasiperiodic(vec![1.0, s2]), &schedule, 1e-3).unwrap();
        assert!(r.converged);
        // oracle: closed-form mean (sin ω + sin(√2 ω)/√2)/ω at the window used
        let w = r.omega;
        let oracle = (w.sin() + (s2 * w).sin() / s2) / w;
        assert!((r.value - oracle).abs() < 1e-10);
        assert!(r.value.abs() < 1e-3);

        let plain = cesaro_average(&h, &Structure::General, &schedule, 1e-3).unwrap();
        let w = plain.omega;
        assert_eq!(w, 1e4);
        let oracle = (w.sin() + (s2 * w).sin() / s2) / w;
        assert!((plain.value - oracle).abs() < 1e-10);
    }

    #[test]
    fn cesaro_nonconvergence_is_a_flag() {
        // slowly drifting mean never settles on a short schedule
        let r = cesaro_average(&|t: f64| (1.0 + t).ln(), &Structure::General, &[1.0, 2.0, 4.0], 1e-6).unwrap();
        assert!(!r.converged);
        assert_eq!(
            cesaro_average(&|t| t, &Structure::General, &[1.0, 1.0, 2.0], 1e-3).unwrap_err(),
            OperatorError::BadSchedule
        );
    }

    #[test]
    fn averaged_family_examples() {
        let fam = cosine_family(Coefficient::cosine(1.0, 0.5, 1.0, -PI / 2.0));
        let avg = averaged_family(&fam, &[], 1e-9).unwrap();
        assert!(avg.is_constant());
        assert!((avg.entry(0, 0).eval(0.0) - 2.0).abs() < 1e-12);
        assert!((avg.potential().eval(0.0) - 1.0).abs() < 1e-12);

        let constant = CoefficientFamily::scalar(
            Coefficient::Constant(1.5),
            Coefficient::Constant(0.25),
            declared(1.0, 0.25, 0.25),
        );
        let again = averaged_family(&constant, &[], 1e-9).unwrap();
        assert_eq!(again.entry(0, 0).eval(7.0), 1.5);
        assert_eq!(again.potential().eval(7.0), 0.25);
    }

    #[test]
    fn averaged_family_names_failing_entry() {
        let fam = cosine_family(Coefficient::custom("drift", Structure::General, |t: f64| (1.0 + t).ln()));
        let err = averaged_family(&fam, &[1.0, 2.0, 4.0], 1e-9).unwrap_err();
        match err {
            OperatorError::NotConverged { entry, .. } => assert_eq!(entry, "g"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn averaged_forcing_separable() {
        let grid = make_grid(1, 16, 2.0 * PI).unwrap();
        let forcing = ForcingFamily::Separable {
            time: Coefficient::cosine(1.0, 1.0, 1.0, 0.0),
            space: SpatialProfile::single_mode(vec![1], 1.0),
        };
        let mut fhat = averaged_forcing(&forcing, &grid, &[], 1e-9).unwrap();
        let mut h = SpatialProfile::single_mode(vec![1], 1.0).to_field(&grid);
        let diff = fhat.difference(&mut h).unwrap().l2_norm();
        assert!(diff < 1e-12);
    }

    #[test]
    fn averaged_forcing_general_matches_separable() {
        let grid = make_grid(1, 8, 2.0 * PI).unwrap();
        let forcing = ForcingFamily::General {
            f: Arc::new(|t: f64, x: &[f64]| x[0].sin() * (1.0 + t.cos())),
            envelope: Arc::new(|x: &[f64]| 2.0 * x[0].sin().abs()),
            structure: Structure::Periodic(2.0 * PI),
        };
        let mut fhat = averaged_forcing(&forcing, &grid, &[], 1e-9).unwrap();
        let mut h = Field::from_real_fn(&grid, |x| x[0].sin());
        assert!(fhat.difference(&mut h).unwrap().l2_norm() < 1e-12);
        assert!(forcing.audit_envelope(&grid, &uniform_mesh(0.0, 7.0, 50)).unwrap().satisfied);
    }

    #[test]
    fn sampled_tables_integrate_exactly() {
        let times = uniform_mesh(0.0, 2.0, 5);
        let values = vec![1.0, 2.0, 0.0, 3.0, 1.0];
        let lin = SampledTable::new(times.clone(), values.clone(), Interpolation::Linear).unwrap();
        let c = Coefficient::Sampled(Arc::new(lin));
        for &t in &[0.3, 1.7, 2.5, 5.25] {
            let q = integrate_adaptive(|s| c.eval(s), 0.0, t, AdaptiveRule::default()).unwrap();
            assert!((c.primitive(t).unwrap() - q).abs() < 1e-10, "t={t}");
        }
        let cub = SampledTable::new(times, values, Interpolation::Cubic).unwrap();
        let c = Coefficient::Sampled(Arc::new(cub));
        for &t in &[0.3, 1.7, 2.5, 5.25] {
            let q = integrate_adaptive(|s| c.eval(s), 0.0, t, AdaptiveRule::default()).unwrap();
            assert!((c.primitive(t).unwrap() - q).abs() < 1e-10, "t={t}");
        }
        assert_eq!(c.structure(), Structure::Sampled { period: 2.0 });
        assert!(SampledTable::new(vec![0.0, 1.0, 2.0], vec![1.0, 2.0, 3.0], Interpolation::Linear).is_err());
    }

    #[test]
    fn closed_form_primitives() {
        let c = Coefficient::SumOfCosines {
            mean: 0.5,
            terms: vec![
                CosineTerm {
                    amplitude: 1.0,
                    frequency: 3.0,
                    phase: 0.2,
                },
                CosineTerm {
                    amplitude: -0.4,
                    frequency: 2f64.sqrt(),
                    phase: 0.0,
                },
            ],
        };
        for &t in &[0.1, 1.0, 7.3] {
            let q = integrate_adaptive(|s| c.eval(s), 0.0, t, AdaptiveRule::default()).unwrap();
            assert!((c.primitive(t).unwrap() - q).abs() < 1e-11);
        }
        assert!(matches!(c.structure(), Structure::Quasiperiodic(_)));
    }

    #[test]
    fn norm_equivalence_cosine() {
        let grid = make_grid(1, 64, 2.0 * PI).unwrap();
        let fam = CoefficientFamily::scalar(
            Coefficient::cosine(2.0, 1.0, 1.0, 0.0),
            Coefficient::Constant(1.0),
            declared(1.0, 1.0, 1.0),
        );
        let mesh = AuditMesh::for_structure(&fam.structure());
        let ne = fam.audit_norm_equivalence(&grid, 0.5, &mesh.times).unwrap();
        assert!((ne.h1_upper_bound - 2.0).abs() < 1e-14); // (1·3 + 1)^{1/2}
        // sup over ξ of (3ξ²+1)/(ξ²+1) at the largest grid wavenumber
        assert!((ne.h1_upper - (3073.0f64 / 1025.0).sqrt()).abs() < 1e-14);
        assert!(ne.h1_upper <= ne.h1_upper_bound);
        assert!(ne.h1_lower >= 1.0 - 1e-14); // min(ν₀, c̄₁) = 1
        assert!((ne.c2 - 1.0).abs() < 1e-14); // p(0,ξ) is the largest symbol
    }

    #[test]
    fn structure_combination() {
        let s = Structure::combine([&Structure::Constant, &Structure::Periodic(2.0)]);
        assert_eq!(s, Structure::Periodic(2.0));
        let s = Structure::combine([&Structure::Periodic(1.0), &Structure::Periodic(2.0)]);
        assert!(matches!(s, Structure::Quasiperiodic(_)));
        assert_eq!(Structure::combine([&Structure::Constant]), Structure::Constant);
    }
}
