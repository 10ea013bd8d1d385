//! Scenario files: TOML with a fixed schema, converted to library types.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use timeavg::harness::{Perturbation, Scenario, SolverSpec};
use timeavg::mild::{ForcingKind, NonlinearForcing, Scheme};
use timeavg::operator::{
    Coefficient, CoefficientFamily, CosineTerm, DeclaredConstants, ForcingFamily, Interpolation, SampledTable,
};
use timeavg::profile::{ModeTerm, SpatialProfile};
use timeavg::spectral::make_grid;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("schema error in {path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("invalid scenario {path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub seed: u64,
    pub grid: GridSection,
    pub operator: OperatorSection,
    pub forcing: Option<ForcingSection>,
    pub initial: InitialSection,
    pub sweep: SweepSection,
    pub solver: SolverSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dim: usize,
    pub points: usize,
    pub period: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSection {
    pub nu0: f64,
    pub c1: f64,
    pub c2: f64,
    pub holder_l: f64,
    pub holder_gamma: f64,
    /// Row-major `dim × dim` diffusion coefficients.
    pub a: Vec<CoefficientSpec>,
    pub g: CoefficientSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoefficientSpec {
    Constant {
        value: f64,
    },
    Cosine {
        mean: f64,
        amplitude: f64,
        frequency: f64,
        #[serde(default)]
        phase: f64,
    },
    SumOfCosines {
        mean: f64,
        terms: Vec<CosineSpec>,
    },
    Sampled {
        path: PathBuf,
        interpolation: InterpolationSpec,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CosineSpec {
    pub amplitude: f64,
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterpolationSpec {
    Linear,
    Cubic,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProfileSpec {
    Zero,
    Modes {
        terms: Vec<ModeTerm>,
    },
    Gaussian {
        center: Vec<f64>,
        width: f64,
        amplitude: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ForcingSection {
    /// `f(t, x) = c(t) h(x)`.
    Separable {
        time: CoefficientSpec,
        space: ProfileSpec,
        growth_c: Option<f64>,
    },
    /// `F(t, u) = c(t) φ(u)` with a bounded-derivative map.
    Reaction {
        modulation: CoefficientSpec,
        map: ReactionMap,
        growth_c: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReactionMap {
    Sine,
    Tanh,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub profile: ProfileSpec,
    pub perturbation: Option<PerturbationSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PerturbationSpec {
    Bump {
        alpha_norm: f64,
        base_wavenumber: i64,
        wavenumber_step: i64,
    },
    Scaled {
        coefficient: f64,
        profile: ProfileSpec,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub lambdas: Vec<f64>,
    pub horizon: f64,
    pub delta: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub steps: usize,
    pub scheme: Scheme,
    pub substep_q: f64,
    pub node_budget: usize,
    pub mesh_per_lambda: f64,
    pub cesaro_schedule: Vec<f64>,
    pub cesaro_tol: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub directory: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<OutputFormat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Json,
    Tables,
}

fn default_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Json, OutputFormat::Tables]
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: None,
            formats: default_formats(),
        }
    }
}

/// A parsed scenario with its source hash and resolved library objects.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub sha256: String,
    pub file: ScenarioFile,
    pub scenario: Scenario,
}

pub fn load(path: &Path) -> Result<LoadedScenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let sha256 = hex::encode(Sha256::digest(text.as_bytes()));
    let file: ScenarioFile = toml::from_str(&text).map_err(|e| ScenarioError::Schema {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    let scenario = build(&file, base).map_err(|message| ScenarioError::Invalid {
        path: path.to_path_buf(),
        message,
    })?;
    Ok(LoadedScenario {
        sha256,
        file,
        scenario,
    })
}

fn read_table(path: &Path) -> Result<(Vec<f64>, Vec<f64>), String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read table {}: {e}", path.display()))?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        let parse = |s: &str| s.parse::<f64>().map_err(|e| format!("{}:{}: {e}", path.display(), n + 1));
        if cols.len() != 2 {
            return Err(format!("{}:{}: expected two columns", path.display(), n + 1));
        }
        times.push(parse(cols[0])?);
        values.push(parse(cols[1])?);
    }
    Ok((times, values))
}

fn coefficient(spec: &CoefficientSpec, base: &Path) -> Result<Coefficient, String> {
    Ok(match spec {
        CoefficientSpec::Constant { value } => Coefficient::Constant(*value),
        CoefficientSpec::Cosine {
            mean,
            amplitude,
            frequency,
            phase,
        } => Coefficient::cosine(*mean, *amplitude, *frequency, *phase),
        CoefficientSpec::SumOfCosines { mean, terms } => Coefficient::SumOfCosines {
            mean: *mean,
            terms: terms
                .iter()
                .map(|t| CosineTerm {
                    amplitude: t.amplitude,
                    frequency: t.frequency,
                    phase: t.phase,
                })
                .collect(),
        },
        CoefficientSpec::Sampled { path, interpolation } => {
            let (times, values) = read_table(&base.join(path))?;
            let interp = match interpolation {
                InterpolationSpec::Linear => Interpolation::Linear,
                InterpolationSpec::Cubic => Interpolation::Cubic,
            };
            Coefficient::Sampled(Arc::new(SampledTable::new(times, values, interp).map_err(|e| e.to_string())?))
        }
    })
}

fn profile(spec: &ProfileSpec) -> SpatialProfile {
    match spec {
        ProfileSpec::Zero => SpatialProfile::Zero,
        ProfileSpec::Modes { terms } => SpatialProfile::Modes(terms.clone()),
        ProfileSpec::Gaussian {
            center,
            width,
            amplitude,
        } => SpatialProfile::Gaussian {
            center: center.clone(),
            width: *width,
            amplitude: *amplitude,
        },
    }
}

fn forcing(spec: &ForcingSection, base: &Path) -> Result<NonlinearForcing, String> {
    Ok(match spec {
        ForcingSection::Separable { time, space, growth_c } => NonlinearForcing::pure(
            ForcingFamily::Separable {
                time: coefficient(time, base)?,
                space: profile(space),
            },
            *growth_c,
        ),
        ForcingSection::Reaction {
            modulation,
            map,
            growth_c,
        } => {
            let modulation = coefficient(modulation, base)?;
            let sup = modulation
                .sup_bound()
                .ok_or_else(|| "reaction modulation needs a known bound".to_string())?;
            let map: Arc<dyn Fn(f64) -> f64 + Send + Sync> = match map {
                ReactionMap::Sine => Arc::new(f64::sin),
                ReactionMap::Tanh => Arc::new(f64::tanh),
            };
            NonlinearForcing::new(
                ForcingKind::Reaction {
                    modulation,
                    map,
                    derivative_bound: 1.0,
                },
                *growth_c,
                move |_| sup,
            )
        }
    })
}

fn build(file: &ScenarioFile, base: &Path) -> Result<Scenario, String> {
    let g = &file.grid;
    let grid = make_grid(g.dim, g.points, g.period).map_err(|e| e.to_string())?;
    let op = &file.operator;
    if op.a.len() != g.dim * g.dim {
        return Err(format!("operator.a needs {} entries, got {}", g.dim * g.dim, op.a.len()));
    }
    let a = op.a.iter().map(|c| coefficient(c, base)).collect::<Result<Vec<_>, _>>()?;
    let family = CoefficientFamily::new(
        g.dim,
        a,
        coefficient(&op.g, base)?,
        DeclaredConstants {
            nu0: op.nu0,
            c1: op.c1,
            c2: op.c2,
            holder_l: op.holder_l,
            holder_gamma: op.holder_gamma,
        },
    )
    .map_err(|e| e.to_string())?;
    let initial = profile(&file.initial.profile).to_field(&grid);
    let perturbation = match &file.initial.perturbation {
        None => Perturbation::None,
        Some(PerturbationSpec::Bump {
            alpha_norm,
            base_wavenumber,
            wavenumber_step,
        }) => Perturbation::HighFrequencyBump {
            alpha_norm: *alpha_norm,
            base_wavenumber: *base_wavenumber,
            wavenumber_step: *wavenumber_step,
        },
        Some(PerturbationSpec::Scaled { coefficient, profile: p }) => Perturbation::Scaled {
            profile: profile(p),
            coefficient: *coefficient,
        },
    };
    let s = &file.solver;
    let scenario = Scenario {
        grid,
        family: Arc::new(family),
        forcing: file.forcing.as_ref().map(|f| forcing(f, base)).transpose()?,
        initial,
        perturbation,
        lambdas: file.sweep.lambdas.clone(),
        horizon: file.sweep.horizon,
        delta: file.sweep.delta,
        alpha: file.sweep.alpha,
        solver: SolverSpec {
            steps: s.steps,
            mesh_per_lambda: s.mesh_per_lambda,
            scheme: s.scheme,
            substep_q: s.substep_q,
            node_budget: s.node_budget,
            cesaro_schedule: s.cesaro_schedule.clone(),
            cesaro_tol: s.cesaro_tol,
        },
        seed: file.seed,
    };
    scenario.validate().map_err(|e| e.to_string())?;
    Ok(scenario)
}
