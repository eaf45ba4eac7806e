//! Declarative run configuration read from TOML. Every key has a default;
//! command-line flags are applied on top of the file.

use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;
use std::path::{Path, PathBuf};

use crate::dynamics::{CustomDensity, DynamicsModel, PhiTrajectory, WeightedOrientation};
use crate::error::{Result, SpadeError};
use crate::montecarlo::{EstimatorConfig, Likelihood};
use crate::optics::{Cutoff, CutoffKind, SourceGeometry};
use crate::quadrature::QuadratureSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Static,
    #[default]
    PhiRotation,
    PhiOscillation,
    ThetaRotation,
    UniformSphere,
    CustomDensity,
    ProportionalOscillation,
    FixedAmplitudeOscillation,
    /// Fixed amplitude `A₂ = A₁ x̄`, substituted at each `x̄`.
    ScaledAmplitudeOscillation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub phi: f64,
    pub theta: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub phi: f64,
    pub theta: f64,
    pub period: f64,
    pub phase: f64,
    /// Swing of `φ` for the azimuthal oscillation.
    pub amplitude: f64,
    pub a1: f64,
    pub a2: f64,
    pub density_table: Vec<DensityRow>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            kind: ScenarioKind::default(),
            phi: 0.0,
            theta: FRAC_PI_2,
            period: 1.0,
            phase: 0.0,
            amplitude: std::f64::consts::FRAC_PI_4,
            a1: 0.25,
            a2: 0.1,
            density_table: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    /// Model at mean separation `x`; only the scaled-amplitude oscillation
    /// depends on it.
    pub fn model_at(&self, x: f64) -> Result<DynamicsModel> {
        let model = match self.kind {
            ScenarioKind::Static => DynamicsModel::static_at(self.phi, self.theta),
            ScenarioKind::PhiRotation => DynamicsModel::PhiRotation {
                theta: self.theta,
                trajectory: PhiTrajectory::ConstantRate,
                period: self.period,
                phase: self.phase,
            },
            ScenarioKind::PhiOscillation => DynamicsModel::PhiRotation {
                theta: self.theta,
                trajectory: PhiTrajectory::Oscillating {
                    amplitude: self.amplitude,
                },
                period: self.period,
                phase: self.phase,
            },
            ScenarioKind::ThetaRotation => DynamicsModel::ThetaRotation {
                phi: self.phi,
                period: self.period,
                phase: self.phase,
            },
            ScenarioKind::UniformSphere => DynamicsModel::UniformSphere,
            ScenarioKind::CustomDensity => {
                let rows = self
                    .density_table
                    .iter()
                    .map(|r| WeightedOrientation {
                        phi: r.phi,
                        theta: r.theta,
                        weight: r.weight,
                    })
                    .collect();
                DynamicsModel::CustomDensity(CustomDensity::from_table(rows)?)
            }
            ScenarioKind::ProportionalOscillation => {
                DynamicsModel::proportional_oscillation(self.a1).with_angles_and_timing(self)
            }
            ScenarioKind::FixedAmplitudeOscillation => {
                DynamicsModel::fixed_amplitude_oscillation(self.a2).with_angles_and_timing(self)
            }
            ScenarioKind::ScaledAmplitudeOscillation => {
                DynamicsModel::fixed_amplitude_oscillation(self.a1 * x).with_angles_and_timing(self)
            }
        };
        model.validate()?;
        Ok(model)
    }

    pub fn is_oscillation(&self) -> bool {
        matches!(
            self.kind,
            ScenarioKind::ProportionalOscillation
                | ScenarioKind::FixedAmplitudeOscillation
                | ScenarioKind::ScaledAmplitudeOscillation
        )
    }
}

trait OscillationSetup {
    fn with_angles_and_timing(self, s: &ScenarioConfig) -> Self;
}

impl OscillationSetup for DynamicsModel {
    fn with_angles_and_timing(self, s: &ScenarioConfig) -> Self {
        match self {
            DynamicsModel::SeparationOscillation { kind, .. } => {
                DynamicsModel::SeparationOscillation {
                    kind,
                    phi: s.phi,
                    theta: s.theta,
                    period: s.period,
                    phase: s.phase,
                }
            }
            other => other,
        }
    }
}

/// Source parameters in units of `w`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct GeometryConfig {
    pub x: f64,
    pub v: f64,
    /// Axis offset; at most one of `xi` and `kappa` may be set.
    pub xi: Option<f64>,
    pub kappa: Option<f64>,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig {
            x: 0.2,
            v: 0.5,
            xi: None,
            kappa: None,
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.xi.is_some() && self.kappa.is_some() {
            return Err(SpadeError::invalid(
                "geometry",
                "set either `xi` or `kappa`, not both",
            ));
        }
        Ok(())
    }

    /// Geometry at separation `x`, with `w = 1`.
    pub fn at(&self, x: f64, scenario: &ScenarioConfig) -> SourceGeometry {
        let xi = match (self.xi, self.kappa) {
            (Some(xi), _) => xi,
            (None, Some(k)) => k * x,
            (None, None) => 0.0,
        };
        SourceGeometry::from_x(x, 1.0)
            .with_angles(scenario.phi, scenario.theta)
            .with_brightness(self.v)
            .with_axis_offset(xi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    #[default]
    Log,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    /// Dimensionless separation `x = d/2w`.
    #[default]
    X,
    Kappa,
    /// Mass of the first star in solar masses.
    M1,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub from: f64,
    pub to: f64,
    pub points: usize,
    pub spacing: Spacing,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            parameter: SweepParameter::X,
            from: 1e-3,
            to: 2.0,
            points: 200,
            spacing: Spacing::Log,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return Err(SpadeError::invalid(
                "sweep.points",
                "need at least 2 points",
            ));
        }
        if !(self.from.is_finite() && self.to.is_finite()) || self.from >= self.to {
            return Err(SpadeError::invalid("sweep", "need finite `from` < `to`"));
        }
        if self.spacing == Spacing::Log && self.from <= 0.0 {
            return Err(SpadeError::invalid(
                "sweep.from",
                "log spacing needs a positive start",
            ));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let n = self.points - 1;
        (0..=n)
            .map(|i| {
                let t = i as f64 / n as f64;
                match self.spacing {
                    Spacing::Linear => self.from + t * (self.to - self.from),
                    Spacing::Log => self.from * (self.to / self.from).powf(t),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    pub format: OutputFormat,
}

/// Settings for `simulate` and `estimate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentSection {
    pub photons: u64,
    pub runs: usize,
    pub likelihood: Likelihood,
    pub x_lo: f64,
    pub x_hi: f64,
    pub grid_points: usize,
    pub tolerance: f64,
    /// Counts file for `estimate`.
    pub counts: Option<PathBuf>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let e = EstimatorConfig::default();
        ExperimentSection {
            photons: 100_000,
            runs: 200,
            likelihood: e.likelihood,
            x_lo: e.x_lo,
            x_hi: e.x_hi,
            grid_points: e.grid_points,
            tolerance: e.tolerance,
            counts: None,
        }
    }
}

impl ExperimentSection {
    pub fn estimator(&self) -> EstimatorConfig {
        EstimatorConfig {
            x_lo: self.x_lo,
            x_hi: self.x_hi,
            grid_points: self.grid_points,
            tolerance: self.tolerance,
            likelihood: self.likelihood,
        }
    }
}

/// Settings for the small-separation limit tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct LimitSection {
    pub brightness: Vec<f64>,
    /// Angular factor `C`; computed from the scenario when absent.
    pub c: Option<f64>,
    /// Mass of the second star for the mass sweep.
    pub m2: f64,
}

impl Default for LimitSection {
    fn default() -> Self {
        LimitSection {
            brightness: vec![0.5, 0.75, 0.9],
            c: Some(1.0),
            m2: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct RunConfig {
    pub modes: usize,
    pub cutoff_kind: CutoffKind,
    pub seed: u64,
    pub jobs: Option<usize>,
    pub scenario: ScenarioConfig,
    pub geometry: GeometryConfig,
    pub sweep: SweepConfig,
    pub output: OutputConfig,
    pub quadrature: QuadratureSpec,
    pub experiment: ExperimentSection,
    pub limit: LimitSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            modes: Cutoff::DEFAULT_MAX,
            cutoff_kind: CutoffKind::PerIndex,
            seed: 2024,
            jobs: None,
            scenario: ScenarioConfig::default(),
            geometry: GeometryConfig::default(),
            sweep: SweepConfig::default(),
            output: OutputConfig::default(),
            quadrature: QuadratureSpec::default(),
            experiment: ExperimentSection::default(),
            limit: LimitSection::default(),
        }
    }
}

/// Failure to read or parse a configuration file.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> std::result::Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| ConfigError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn cutoff(&self) -> Cutoff {
        Cutoff {
            max: self.modes,
            kind: self.cutoff_kind,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cutoff().validate()?;
        self.quadrature.validate()?;
        self.sweep.validate()?;
        self.geometry.validate()?;
        self.experiment.estimator().validate()?;
        if self.jobs == Some(0) {
            return Err(SpadeError::invalid("jobs", "need at least one worker"));
        }
        self.scenario.model_at(self.geometry.x)?;
        self.geometry.at(self.geometry.x, &self.scenario).validate()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }
}
