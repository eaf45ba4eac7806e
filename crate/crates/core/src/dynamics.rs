//! Dynamics models and the averaging engine.
//!
//! Every model is reduced to a weighted set of configurations (orientation
//! angles plus an affine map from the estimated separation to the
//! instantaneous one). Trajectories use the periodic trapezoid rule;
//! orientation densities use a tensor Gauss-Legendre grid.

use rand::Rng;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};
use std::fmt;
use std::sync::Arc;

use crate::error::{ensure_finite, Result, SpadeError};
use crate::optics::{
    static_mode_probabilities, Cutoff, ModeIndex, ModeProbabilities, SourceGeometry,
};
use crate::quadrature::{periodic_trapezoid, GaussLegendre, QuadratureSpec};
use crate::special::FactorialTable;

/// Azimuthal trajectory for rotation in the imaging plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhiTrajectory {
    /// `φ(t) = 2πt/T`.
    ConstantRate,
    /// `φ(t) = amplitude · sin(2πt/T)`.
    Oscillating { amplitude: f64 },
}

impl PhiTrajectory {
    /// The `φ(t) = (π/4) sin(2πt/T)` trajectory.
    pub fn quarter_swing() -> Self {
        PhiTrajectory::Oscillating {
            amplitude: FRAC_PI_4,
        }
    }

    fn at(&self, frac: f64) -> f64 {
        match *self {
            PhiTrajectory::ConstantRate => TAU * frac,
            PhiTrajectory::Oscillating { amplitude } => amplitude * (TAU * frac).sin(),
        }
    }
}

/// How the separation oscillates about its mean `d̄`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OscillationKind {
    /// `x(t) = x̄ (1 + A₁ cos 2πt/T)`, `0 < A₁ < 1`.
    Proportional { a1: f64 },
    /// `x(t) = x̄ + A₂ cos 2πt/T`.
    FixedAmplitude { a2: f64 },
}

/// One orientation with a probability weight, used for tabulated densities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedOrientation {
    pub phi: f64,
    pub theta: f64,
    pub weight: f64,
}

pub type DensityFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum DensitySource {
    Function { f: DensityFn, envelope: f64 },
    Table(Vec<WeightedOrientation>),
}

/// User-supplied orientation density on `[0, 2π) × [0, π]`, with respect
/// to `dφ dθ`.
#[derive(Clone)]
pub struct CustomDensity {
    source: DensitySource,
    /// Factor applied to bring the density to unit mass.
    scale: f64,
    warnings: Vec<String>,
}

impl fmt::Debug for CustomDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.source {
            DensitySource::Function { .. } => "function".to_string(),
            DensitySource::Table(t) => format!("table[{}]", t.len()),
        };
        f.debug_struct("CustomDensity")
            .field("source", &kind)
            .field("scale", &self.scale)
            .finish()
    }
}

const RESCALE_THRESHOLD: f64 = 1e-6;
const REJECT_THRESHOLD: f64 = 1e-3;

fn normalisation_scale(mass: f64, warnings: &mut Vec<String>) -> Result<f64> {
    let off = (mass - 1.0).abs();
    if !mass.is_finite() || off > REJECT_THRESHOLD {
        return Err(SpadeError::invalid(
            "density-table",
            format!("density integrates to {mass}, expected 1"),
        ));
    }
    if off > RESCALE_THRESHOLD {
        warnings.push(format!(
            "density integrates to {mass:.9}; rescaled to unit mass"
        ));
        Ok(1.0 / mass)
    } else {
        Ok(1.0)
    }
}

impl CustomDensity {
    /// Continuous density; normalisation is checked on the quadrature grid.
    pub fn from_fn(f: DensityFn, q: &QuadratureSpec) -> Result<Self> {
        let gl_phi = GaussLegendre::new(q.phi_nodes);
        let gl_theta = GaussLegendre::new(q.theta_nodes);
        let mut mass = 0.0;
        let mut peak: f64 = 0.0;
        for (phi, wp) in gl_phi.on_interval(0.0, TAU) {
            for (theta, wt) in gl_theta.on_interval(0.0, PI) {
                let value = f(phi, theta);
                if value < 0.0 || !value.is_finite() {
                    return Err(SpadeError::invalid(
                        "density",
                        format!("density must be finite and non-negative, got {value} at ({phi}, {theta})"),
                    ));
                }
                mass += wp * wt * value;
                peak = peak.max(value);
            }
        }
        let mut warnings = Vec::new();
        let scale = normalisation_scale(mass, &mut warnings)?;
        Ok(CustomDensity {
            source: DensitySource::Function {
                f,
                // tabulated maximum with headroom for rejection sampling
                envelope: 1.25 * peak * scale,
            },
            scale,
            warnings,
        })
    }

    /// Discrete mixture of orientations.
    pub fn from_table(table: Vec<WeightedOrientation>) -> Result<Self> {
        if table.is_empty() {
            return Err(SpadeError::invalid("density-table", "table is empty"));
        }
        for row in &table {
            ensure_finite("density-table", row.phi)?;
            ensure_finite("density-table", row.theta)?;
            if row.weight < 0.0 || !row.weight.is_finite() {
                return Err(SpadeError::invalid(
                    "density-table",
                    format!("weight {} is negative", row.weight),
                ));
            }
        }
        let mass: f64 = table.iter().map(|r| r.weight).sum();
        let mut warnings = Vec::new();
        let scale = normalisation_scale(mass, &mut warnings)?;
        Ok(CustomDensity {
            source: DensitySource::Table(table),
            scale,
            warnings,
        })
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn table(&self) -> Option<&[WeightedOrientation]> {
        match &self.source {
            DensitySource::Table(t) => Some(t),
            DensitySource::Function { .. } => None,
        }
    }

    fn is_discrete(&self) -> bool {
        matches!(self.source, DensitySource::Table(_))
    }
}

/// How the two-source configuration evolves or is distributed.
#[derive(Debug, Clone)]
pub enum DynamicsModel {
    Static {
        phi: f64,
        theta: f64,
    },
    PhiRotation {
        theta: f64,
        trajectory: PhiTrajectory,
        period: f64,
        /// Starting point as a fraction of the period.
        phase: f64,
    },
    ThetaRotation {
        phi: f64,
        period: f64,
        phase: f64,
    },
    /// Density `sin θ / 4π`.
    UniformSphere,
    CustomDensity(CustomDensity),
    /// The geometry's separation is read as the mean separation `d̄`.
    SeparationOscillation {
        kind: OscillationKind,
        phi: f64,
        theta: f64,
        period: f64,
        phase: f64,
    },
}

/// A single instantaneous configuration. The instantaneous dimensionless
/// separation is `scale · x + offset`, where `x` is the estimated one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Configuration {
    pub phi: f64,
    pub theta: f64,
    pub scale: f64,
    pub offset: f64,
}

impl Configuration {
    pub fn oriented(phi: f64, theta: f64) -> Self {
        Configuration {
            phi,
            theta,
            scale: 1.0,
            offset: 0.0,
        }
    }
}

impl DynamicsModel {
    pub fn static_at(phi: f64, theta: f64) -> Self {
        DynamicsModel::Static { phi, theta }
    }

    /// Constant-rate rotation in the imaging plane at polar angle `theta`.
    pub fn phi_rotation(theta: f64) -> Self {
        DynamicsModel::PhiRotation {
            theta,
            trajectory: PhiTrajectory::ConstantRate,
            period: 1.0,
            phase: 0.0,
        }
    }

    pub fn phi_oscillation(theta: f64, amplitude: f64) -> Self {
        DynamicsModel::PhiRotation {
            theta,
            trajectory: PhiTrajectory::Oscillating { amplitude },
            period: 1.0,
            phase: 0.0,
        }
    }

    pub fn theta_rotation(phi: f64) -> Self {
        DynamicsModel::ThetaRotation {
            phi,
            period: 1.0,
            phase: 0.0,
        }
    }

    pub fn proportional_oscillation(a1: f64) -> Self {
        DynamicsModel::SeparationOscillation {
            kind: OscillationKind::Proportional { a1 },
            phi: 0.0,
            theta: FRAC_PI_2,
            period: 1.0,
            phase: 0.0,
        }
    }

    pub fn fixed_amplitude_oscillation(a2: f64) -> Self {
        DynamicsModel::SeparationOscillation {
            kind: OscillationKind::FixedAmplitude { a2 },
            phi: 0.0,
            theta: FRAC_PI_2,
            period: 1.0,
            phase: 0.0,
        }
    }

    /// Copy with the trajectory started `phase` periods later.
    pub fn with_phase(&self, new_phase: f64) -> Self {
        let mut m = self.clone();
        match &mut m {
            DynamicsModel::PhiRotation { phase, .. }
            | DynamicsModel::ThetaRotation { phase, .. }
            | DynamicsModel::SeparationOscillation { phase, .. } => *phase = new_phase,
            _ => {}
        }
        m
    }

    pub fn name(&self) -> &'static str {
        match self {
            DynamicsModel::Static { .. } => "static",
            DynamicsModel::PhiRotation {
                trajectory: PhiTrajectory::ConstantRate,
                ..
            } => "phi-rotation",
            DynamicsModel::PhiRotation { .. } => "phi-oscillation",
            DynamicsModel::ThetaRotation { .. } => "theta-rotation",
            DynamicsModel::UniformSphere => "uniform-sphere",
            DynamicsModel::CustomDensity(_) => "custom-density",
            DynamicsModel::SeparationOscillation {
                kind: OscillationKind::Proportional { .. },
                ..
            } => "oscillation-proportional",
            DynamicsModel::SeparationOscillation { .. } => "oscillation-fixed",
        }
    }

    pub fn is_oscillation(&self) -> bool {
        matches!(self, DynamicsModel::SeparationOscillation { .. })
    }

    /// Orientation-only models keep `θ` fixed in time.
    pub fn has_constant_theta(&self) -> bool {
        matches!(
            self,
            DynamicsModel::Static { .. } | DynamicsModel::PhiRotation { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        let check_period = |period: f64, phase: f64| -> Result<()> {
            ensure_finite("period", period)?;
            ensure_finite("phase", phase)?;
            if period <= 0.0 {
                return Err(SpadeError::invalid("period", "must be positive"));
            }
            Ok(())
        };
        match self {
            DynamicsModel::Static { phi, theta } => {
                ensure_finite("phi", *phi)?;
                ensure_finite("theta", *theta)
            }
            DynamicsModel::PhiRotation {
                theta,
                trajectory,
                period,
                phase,
            } => {
                ensure_finite("theta", *theta)?;
                if let PhiTrajectory::Oscillating { amplitude } = trajectory {
                    ensure_finite("amplitude", *amplitude)?;
                }
                check_period(*period, *phase)
            }
            DynamicsModel::ThetaRotation { phi, period, phase } => {
                ensure_finite("phi", *phi)?;
                check_period(*period, *phase)
            }
            DynamicsModel::UniformSphere | DynamicsModel::CustomDensity(_) => Ok(()),
            DynamicsModel::SeparationOscillation {
                kind,
                phi,
                theta,
                period,
                phase,
            } => {
                ensure_finite("phi", *phi)?;
                ensure_finite("theta", *theta)?;
                match *kind {
                    OscillationKind::Proportional { a1 } => {
                        if !(a1 > 0.0 && a1 < 1.0) {
                            return Err(SpadeError::invalid(
                                "a1",
                                format!("must lie in (0, 1), got {a1}"),
                            ));
                        }
                    }
                    OscillationKind::FixedAmplitude { a2 } => {
                        ensure_finite("a2", a2)?;
                        if a2 < 0.0 {
                            return Err(SpadeError::invalid(
                                "a2",
                                "amplitude must be non-negative",
                            ));
                        }
                    }
                }
                check_period(*period, *phase)
            }
        }
    }

    /// True when the oscillation swings the sources through each other,
    /// so `d̄` no longer reads as a mean separation.
    pub fn sources_interchange(&self, g: &SourceGeometry) -> bool {
        match self {
            DynamicsModel::SeparationOscillation {
                kind: OscillationKind::FixedAmplitude { a2 },
                ..
            } => *a2 > g.x(),
            _ => false,
        }
    }

    pub fn warnings(&self) -> &[String] {
        match self {
            DynamicsModel::CustomDensity(c) => c.warnings(),
            _ => &[],
        }
    }

    /// Configuration at time `frac · T` for trajectory models.
    pub fn configuration_at(&self, frac: f64) -> Option<Configuration> {
        match *self {
            DynamicsModel::Static { phi, theta } => Some(Configuration::oriented(phi, theta)),
            DynamicsModel::PhiRotation {
                theta,
                trajectory,
                phase,
                ..
            } => Some(Configuration::oriented(trajectory.at(frac + phase), theta)),
            DynamicsModel::ThetaRotation { phi, phase, .. } => {
                Some(Configuration::oriented(phi, TAU * (frac + phase)))
            }
            DynamicsModel::SeparationOscillation {
                kind,
                phi,
                theta,
                phase,
                ..
            } => {
                let c = (TAU * (frac + phase)).cos();
                let (scale, offset) = match kind {
                    OscillationKind::Proportional { a1 } => (1.0 + a1 * c, 0.0),
                    OscillationKind::FixedAmplitude { a2 } => (1.0, a2 * c),
                };
                Some(Configuration {
                    phi,
                    theta,
                    scale,
                    offset,
                })
            }
            DynamicsModel::UniformSphere | DynamicsModel::CustomDensity(_) => None,
        }
    }

    /// Weighted configurations realising the average at resolution `q`.
    pub fn node_set(&self, q: &QuadratureSpec) -> NodeSet {
        let mut nodes = Vec::new();
        match self {
            DynamicsModel::Static { phi, theta } => {
                nodes.push((1.0, Configuration::oriented(*phi, *theta)))
            }
            DynamicsModel::PhiRotation { .. }
            | DynamicsModel::ThetaRotation { .. }
            | DynamicsModel::SeparationOscillation { .. } => {
                for (frac, w) in periodic_trapezoid(q.trapezoid_nodes) {
                    nodes.push((w, self.configuration_at(frac).expect("trajectory model")));
                }
            }
            DynamicsModel::UniformSphere => {
                let gl_phi = GaussLegendre::new(q.phi_nodes);
                let gl_theta = GaussLegendre::new(q.theta_nodes);
                for (theta, wt) in gl_theta.on_interval(0.0, PI) {
                    let density = theta.sin() / (4.0 * PI);
                    for (phi, wp) in gl_phi.on_interval(0.0, TAU) {
                        nodes.push((wt * wp * density, Configuration::oriented(phi, theta)));
                    }
                }
            }
            DynamicsModel::CustomDensity(c) => match &c.source {
                DensitySource::Table(table) => {
                    for row in table {
                        nodes.push((
                            row.weight * c.scale,
                            Configuration::oriented(row.phi, row.theta),
                        ));
                    }
                }
                DensitySource::Function { f, .. } => {
                    let gl_phi = GaussLegendre::new(q.phi_nodes);
                    let gl_theta = GaussLegendre::new(q.theta_nodes);
                    for (theta, wt) in gl_theta.on_interval(0.0, PI) {
                        for (phi, wp) in gl_phi.on_interval(0.0, TAU) {
                            let weight = wt * wp * f(phi, theta) * c.scale;
                            if weight != 0.0 {
                                nodes.push((weight, Configuration::oriented(phi, theta)));
                            }
                        }
                    }
                }
            },
        }
        NodeSet { nodes }
    }

    /// Whether node doubling can change the result.
    pub fn is_discrete(&self) -> bool {
        match self {
            DynamicsModel::Static { .. } => true,
            DynamicsModel::CustomDensity(c) => c.is_discrete(),
            _ => false,
        }
    }

    /// Draw one configuration: uniform time for trajectories, exact
    /// sampling for densities.
    pub fn sample_configuration<R: Rng + ?Sized>(&self, rng: &mut R) -> Configuration {
        match self {
            DynamicsModel::UniformSphere => {
                let cos_theta: f64 = rng.random_range(-1.0..=1.0);
                let phi = rng.random_range(0.0..TAU);
                Configuration::oriented(phi, cos_theta.acos())
            }
            DynamicsModel::CustomDensity(c) => match &c.source {
                DensitySource::Table(table) => {
                    let total: f64 = table.iter().map(|r| r.weight).sum();
                    let mut target = rng.random_range(0.0..total);
                    for row in table {
                        if target < row.weight {
                            return Configuration::oriented(row.phi, row.theta);
                        }
                        target -= row.weight;
                    }
                    let last = table.last().expect("non-empty table");
                    Configuration::oriented(last.phi, last.theta)
                }
                DensitySource::Function { f, envelope } => loop {
                    let phi = rng.random_range(0.0..TAU);
                    let theta = rng.random_range(0.0..=PI);
                    let u: f64 = rng.random_range(0.0..*envelope);
                    if u < f(phi, theta) * c.scale {
                        break Configuration::oriented(phi, theta);
                    }
                },
            },
            _ => {
                let frac: f64 = rng.random_range(0.0..1.0);
                self.configuration_at(frac).expect("trajectory model")
            }
        }
    }
}

/// Weighted configurations; weights sum to one.
#[derive(Debug, Clone)]
pub struct NodeSet {
    pub nodes: Vec<(f64, Configuration)>,
}

/// Probability, its derivative in `x = d/2w`, and the Fisher term
/// `w² F = (∂ₓp)² / 4p` for one outcome category.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeTerm {
    pub probability: f64,
    pub derivative: f64,
    pub fisher: f64,
}

/// All resolved modes plus the overflow category at one separation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub cutoff: Cutoff,
    pub modes: Vec<(ModeIndex, OutcomeTerm)>,
    pub overflow: OutcomeTerm,
}

impl Evaluation {
    pub fn probabilities(&self) -> ModeProbabilities {
        ModeProbabilities {
            cutoff: self.cutoff,
            values: self
                .modes
                .iter()
                .map(|(m, t)| (*m, t.probability))
                .collect(),
            overflow: self.overflow.probability,
        }
    }
}

impl NodeSet {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Probabilities and analytic derivatives at the geometry's separation.
    ///
    /// When every configuration scales with `x` the common power `x^{2(n+m)}`
    /// is factored out of each mode, so `(∂ₓp)²/p` stays finite as `x → 0`
    /// and modes whose angular factor vanishes contribute exactly zero.
    pub fn evaluate(&self, g: &SourceGeometry, cutoff: Cutoff) -> Evaluation {
        let x = g.x();
        let xi = g.xi;
        let factorable = self.nodes.iter().all(|(_, c)| c.offset == 0.0);
        let ell = if factorable { x } else { 1.0 };
        let max = cutoff.max;
        let kmax = 2 * max;
        let fact = FactorialTable::new(max);
        let modes: Vec<ModeIndex> = cutoff.modes().collect();
        let inv_fact: Vec<f64> = modes
            .iter()
            .map(|md| 1.0 / (fact.get(md.n) * fact.get(md.m)))
            .collect();

        let mut g_acc = vec![0.0; modes.len()];
        let mut h_acc = vec![0.0; modes.len()];
        let mut over_p = 0.0;
        let mut over_dp = 0.0;

        let mut cos_pow = vec![0.0; max + 1];
        let mut sin_pow = vec![0.0; max + 1];
        let mut a_pow = vec![0.0; 2 * kmax + 2];

        for &(weight, cfg) in &self.nodes {
            let (sp, cp) = cfg.phi.sin_cos();
            let s = cfg.theta.sin();
            let (c2, s2) = (cp * cp, sp * sp);
            cos_pow[0] = 1.0;
            sin_pow[0] = 1.0;
            for j in 1..=max {
                cos_pow[j] = cos_pow[j - 1] * c2;
                sin_pow[j] = sin_pow[j - 1] * s2;
            }
            let mu = cfg.scale;
            for (source_weight, sign) in [(g.v, 1.0), (1.0 - g.v, -1.0)] {
                let u = cfg.scale * x + cfg.offset + sign * xi;
                let lambda = if factorable {
                    if x > 0.0 {
                        u / x
                    } else {
                        cfg.scale
                    }
                } else {
                    u
                };
                let a = lambda * s;
                let rho = ell * a;
                let e = (-rho * rho).exp();
                let wv = weight * source_weight;
                a_pow[0] = 1.0;
                for j in 1..a_pow.len() {
                    a_pow[j] = a_pow[j - 1] * a;
                }
                for (i, md) in modes.iter().enumerate() {
                    let k = md.order();
                    let ang = cos_pow[md.n] * sin_pow[md.m] * inv_fact[i];
                    if ang == 0.0 {
                        continue;
                    }
                    g_acc[i] += wv * ang * a_pow[2 * k] * e;
                    let slope = if k == 0 {
                        -2.0 * a
                    } else {
                        2.0 * k as f64 * a_pow[2 * k - 1] - 2.0 * ell * ell * a_pow[2 * k + 1]
                    };
                    h_acc[i] += wv * ang * mu * s * slope * e;
                }
                let r2 = rho * rho;
                let (po, gx, gy) = cutoff.overflow_with_gradient(r2 * c2, r2 * s2);
                over_p += wv * po;
                over_dp += wv * (gx * c2 + gy * s2) * 2.0 * rho * mu * s;
            }
        }

        let mode_terms = modes
            .iter()
            .enumerate()
            .map(|(i, md)| {
                let k = md.order() as i32;
                let (gv, hv) = (g_acc[i], h_acc[i]);
                let probability = ell.powi(2 * k) * gv;
                let (derivative, fisher) = if gv <= 0.0 {
                    (0.0, 0.0)
                } else if k == 0 {
                    (ell * hv, ell * ell * hv * hv / (4.0 * gv))
                } else {
                    (
                        ell.powi(2 * k - 1) * hv,
                        ell.powi(2 * k - 2) * hv * hv / (4.0 * gv),
                    )
                };
                (
                    *md,
                    OutcomeTerm {
                        probability,
                        derivative,
                        fisher,
                    },
                )
            })
            .collect();
        let over_fisher = if over_p > 0.0 {
            over_dp * over_dp / (4.0 * over_p)
        } else {
            0.0
        };
        Evaluation {
            cutoff,
            modes: mode_terms,
            overflow: OutcomeTerm {
                probability: over_p,
                derivative: over_dp,
                fisher: over_fisher,
            },
        }
    }
}

fn max_abs_difference(a: &ModeProbabilities, b: &ModeProbabilities) -> f64 {
    a.values
        .iter()
        .map(|(md, p)| (p - b.values.get(md).copied().unwrap_or(0.0)).abs())
        .fold((a.overflow - b.overflow).abs(), f64::max)
}

/// Node set at resolution `q`, after checking that doubling the nodes
/// moves the probabilities by less than the tolerance at `g`.
pub fn converged_node_set(
    model: &DynamicsModel,
    g: &SourceGeometry,
    cutoff: Cutoff,
    q: &QuadratureSpec,
) -> Result<NodeSet> {
    model.validate()?;
    g.validate()?;
    cutoff.validate()?;
    q.validate()?;
    let coarse = model.node_set(q);
    if model.is_discrete() {
        return Ok(coarse);
    }
    let fine = model.node_set(&q.refined());
    let diff = max_abs_difference(
        &coarse.evaluate(g, cutoff).probabilities(),
        &fine.evaluate(g, cutoff).probabilities(),
    );
    if diff > q.tolerance {
        return Err(SpadeError::QuadratureNotConverged {
            achieved: diff,
            tolerance: q.tolerance,
        });
    }
    Ok(fine)
}

/// Detection probabilities averaged over the dynamics.
pub fn averaged_mode_probabilities(
    model: &DynamicsModel,
    g: &SourceGeometry,
    cutoff: Cutoff,
    q: &QuadratureSpec,
) -> Result<ModeProbabilities> {
    if let DynamicsModel::Static { phi, theta } = *model {
        model.validate()?;
        return static_mode_probabilities(&g.with_angles(phi, theta), cutoff);
    }
    let nodes = converged_node_set(model, g, cutoff, q)?;
    Ok(nodes.evaluate(g, cutoff).probabilities())
}

/// `(1/T) ∫₀ᵀ f(q(t)) dt` by the periodic trapezoid rule; the trajectory
/// is sampled at `t ∈ [0, T)`.
pub fn time_average<C, Q, F>(
    period: f64,
    trajectory: Q,
    integrand: F,
    q: &QuadratureSpec,
) -> Result<f64>
where
    Q: Fn(f64) -> C,
    F: Fn(&C) -> f64,
{
    ensure_finite("period", period)?;
    if period <= 0.0 {
        return Err(SpadeError::invalid("period", "must be positive"));
    }
    q.validate()?;
    let rule = |n: usize| -> f64 {
        periodic_trapezoid(n)
            .map(|(frac, w)| w * integrand(&trajectory(frac * period)))
            .sum()
    };
    let coarse = rule(q.trapezoid_nodes);
    let fine = rule(2 * q.trapezoid_nodes);
    check_refinement(coarse, fine, q.tolerance)
}

fn check_refinement(coarse: f64, fine: f64, tolerance: f64) -> Result<f64> {
    let diff = (fine - coarse).abs();
    if !fine.is_finite() {
        return Err(SpadeError::NumericalHealth("non-finite average".into()));
    }
    if diff > tolerance {
        return Err(SpadeError::QuadratureNotConverged {
            achieved: diff,
            tolerance,
        });
    }
    Ok(fine)
}

/// Orientation density accepted by [`distribution_average`].
pub enum OrientationDensity<'a> {
    /// Point mass at one orientation.
    Delta { phi: f64, theta: f64 },
    /// `sin θ / 4π`.
    UniformSphere,
    /// Arbitrary density in `dφ dθ`, assumed normalised.
    Function(&'a dyn Fn(f64, f64) -> f64),
    /// Marginal in `θ` with `φ` uniform, density in `dθ`.
    Polar(&'a dyn Fn(f64) -> f64),
}

/// `∫∫ p(φ,θ) f(φ,θ) dφ dθ` on a tensor Gauss-Legendre grid.
pub fn distribution_average<F>(
    density: OrientationDensity<'_>,
    integrand: F,
    q: &QuadratureSpec,
) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    q.validate()?;
    let rule = |n_phi: usize, n_theta: usize| -> f64 {
        let gl_phi = GaussLegendre::new(n_phi);
        let gl_theta = GaussLegendre::new(n_theta);
        let mut acc = 0.0;
        for (theta, wt) in gl_theta.on_interval(0.0, PI) {
            for (phi, wp) in gl_phi.on_interval(0.0, TAU) {
                let p = match &density {
                    OrientationDensity::UniformSphere => theta.sin() / (4.0 * PI),
                    OrientationDensity::Function(f) => f(phi, theta),
                    OrientationDensity::Polar(f) => f(theta) / TAU,
                    OrientationDensity::Delta { .. } => unreachable!(),
                };
                acc += wt * wp * p * integrand(phi, theta);
            }
        }
        acc
    };
    match density {
        OrientationDensity::Delta { phi, theta } => Ok(integrand(phi, theta)),
        _ => {
            let coarse = rule(q.phi_nodes, q.theta_nodes);
            let fine = rule(2 * q.phi_nodes, 2 * q.theta_nodes);
            check_refinement(coarse, fine, q.tolerance)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// `J₀(z) = Σ (-1)^k (z/2)^{2k} / (k!)²`
    fn bessel_j0(z: f64) -> f64 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..40 {
            term *= -(z * z / 4.0) / (k as f64 * k as f64);
            sum += term;
        }
        sum
    }

    fn q() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn static_model_reduces_to_static_probabilities() {
        let g = SourceGeometry::from_x(0.5, 1.0);
        let model = DynamicsModel::static_at(0.0, FRAC_PI_2);
        let avg = averaged_mode_probabilities(&model, &g, Cutoff::per_index(3), &q()).unwrap();
        let direct = static_mode_probabilities(&g, Cutoff::per_index(3)).unwrap();
        assert_eq!(avg, direct);
        // the kernel path agrees as well
        let kernel = model
            .node_set(&q())
            .evaluate(&g, Cutoff::per_index(3))
            .probabilities();
        for (md, p) in &direct.values {
            assert!((kernel.values[md] - p).abs() < 1e-15);
        }
        assert!((kernel.overflow - direct.overflow).abs() < 1e-15);
    }

    #[test]
    fn phi_rotation_example() {
        let g = SourceGeometry::from_x(0.5, 1.0);
        let p = averaged_mode_probabilities(
            &DynamicsModel::phi_rotation(FRAC_PI_2),
            &g,
            Cutoff::per_index(1),
            &q(),
        )
        .unwrap();
        // cos²φ averages to 1/2
        let expect = 0.125 * (-0.25f64).exp();
        assert!((p.get(1, 0) - expect).abs() < 1e-14);
        assert!((p.get(0, 1) - expect).abs() < 1e-14);
        assert!((expect - 0.097_350_1).abs() < 1e-7);
    }

    #[test]
    fn sphere_at_zero_separation() {
        let g = SourceGeometry::new(0.0, 1.0);
        let p =
            averaged_mode_probabilities(&DynamicsModel::UniformSphere, &g, Cutoff::default(), &q())
                .unwrap();
        assert!((p.get(0, 0) - 1.0).abs() < 1e-13);
        assert_eq!(p.overflow, 0.0);
    }

    #[test]
    fn time_average_examples() {
        let c = time_average(2.0, |t| t, |_| 3.5, &q()).unwrap();
        assert!((c - 3.5).abs() < 1e-14);

        let period = 3.0;
        let v = time_average(
            period,
            |t| TAU * t / period,
            |phi: &f64| phi.cos().powi(2),
            &q(),
        )
        .unwrap();
        assert!((v - 0.5).abs() < 1e-14);

        let v = time_average(
            period,
            |t| FRAC_PI_4 * (TAU * t / period).sin(),
            |phi: &f64| phi.cos(),
            &q(),
        )
        .unwrap();
        let j0 = bessel_j0(FRAC_PI_4);
        assert!((v - j0).abs() < 1e-13);
        assert!((v - 0.851_632).abs() < 1e-6);
        // dense independent trapezoid
        let dense: f64 = (0..20000)
            .map(|j| (FRAC_PI_4 * (TAU * j as f64 / 20000.0).sin()).cos())
            .sum::<f64>()
            / 20000.0;
        assert!((dense - v).abs() < 1e-12);
    }

    #[test]
    fn distribution_average_examples() {
        let d = distribution_average(
            OrientationDensity::Delta {
                phi: 0.3,
                theta: 1.1,
            },
            |p, t| p + t,
            &q(),
        )
        .unwrap();
        assert!((d - 1.4).abs() < 1e-15);
        let v = distribution_average(
            OrientationDensity::UniformSphere,
            |_, t| t.sin().powi(2),
            &q(),
        )
        .unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-13);
        let theta_traj = time_average(1.0, |t| TAU * t, |th: &f64| th.sin().powi(2), &q()).unwrap();
        assert!((theta_traj - 0.5).abs() < 1e-14);
    }

    #[test]
    fn ergodic_consistency_for_constant_rate_rotation() {
        let integrand =
            |phi: f64| (phi.cos().powi(4) + 0.3 * phi.sin()) * (-phi.cos().powi(2)).exp();
        let t_avg = time_average(1.0, |t| TAU * t, |phi: &f64| integrand(*phi), &q()).unwrap();
        let density = |_phi: f64, _theta: f64| 1.0 / TAU;
        // uniform in φ, delta in θ: integrate φ only
        let d_avg = distribution_average(
            OrientationDensity::Function(&density),
            |phi, _| integrand(phi) / PI,
            &q(),
        )
        .unwrap();
        assert!((t_avg - d_avg).abs() < 1e-9, "{t_avg} vs {d_avg}");
    }

    #[test]
    fn averaged_probabilities_normalise() {
        let g = SourceGeometry::from_x(0.9, 1.0);
        let models = [
            DynamicsModel::phi_rotation(1.0),
            DynamicsModel::phi_oscillation(FRAC_PI_2, FRAC_PI_4),
            DynamicsModel::theta_rotation(0.4),
            DynamicsModel::UniformSphere,
            DynamicsModel::proportional_oscillation(0.25),
            DynamicsModel::fixed_amplitude_oscillation(0.1),
        ];
        for model in &models {
            for max in [1, 3, 5] {
                let p =
                    averaged_mode_probabilities(model, &g, Cutoff::per_index(max), &q()).unwrap();
                assert!((p.total() - 1.0).abs() < 1e-10, "{} M={max}", model.name());
                assert!(p.values.values().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }

    #[test]
    fn phase_shift_leaves_averages_unchanged() {
        let g = SourceGeometry::from_x(0.7, 1.0);
        for model in [
            DynamicsModel::phi_rotation(1.2),
            DynamicsModel::phi_oscillation(FRAC_PI_2, FRAC_PI_4),
            DynamicsModel::theta_rotation(0.2),
            DynamicsModel::proportional_oscillation(0.4),
        ] {
            let a = averaged_mode_probabilities(&model, &g, Cutoff::default(), &q()).unwrap();
            let b =
                averaged_mode_probabilities(&model.with_phase(0.137), &g, Cutoff::default(), &q())
                    .unwrap();
            assert!(max_abs_difference(&a, &b) < 1e-10, "{}", model.name());
        }
    }

    #[test]
    fn node_doubling_within_tolerance() {
        let g = SourceGeometry::from_x(1.3, 1.0);
        let spec = q();
        for model in [
            DynamicsModel::UniformSphere,
            DynamicsModel::theta_rotation(0.5),
        ] {
            let a = model
                .node_set(&spec)
                .evaluate(&g, Cutoff::default())
                .probabilities();
            let b = model
                .node_set(&spec.refined())
                .evaluate(&g, Cutoff::default())
                .probabilities();
            assert!(max_abs_difference(&a, &b) < spec.tolerance);
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        let g = SourceGeometry::from_x(1.0, 1.0);
        let tight = QuadratureSpec {
            trapezoid_nodes: 16,
            tolerance: 1e-300,
            ..q()
        };
        // a sharply peaked density that the coarse grid cannot resolve
        let f: DensityFn = Arc::new(|phi: f64, theta: f64| {
            let s = 0.05;
            (-((phi - 1.0).powi(2) + (theta - 1.0).powi(2)) / (2.0 * s * s)).exp() / (TAU * s * s)
        });
        let coarse = QuadratureSpec {
            phi_nodes: 16,
            theta_nodes: 16,
            tolerance: 1e-8,
            ..q()
        };
        assert!(
            CustomDensity::from_fn(f.clone(), &coarse).is_err() || {
                let model =
                    DynamicsModel::CustomDensity(CustomDensity::from_fn(f, &coarse).unwrap());
                matches!(
                    averaged_mode_probabilities(&model, &g, Cutoff::default(), &coarse),
                    Err(SpadeError::QuadratureNotConverged { .. })
                )
            }
        );
        let err = averaged_mode_probabilities(
            &DynamicsModel::theta_rotation(0.0),
            &g,
            Cutoff::default(),
            &tight,
        );
        assert!(matches!(
            err,
            Err(SpadeError::QuadratureNotConverged { .. })
        ));
    }

    #[test]
    fn custom_density_normalisation_rules() {
        let spec = q();
        let sphere: DensityFn = Arc::new(|_p: f64, t: f64| t.sin() / (4.0 * PI));
        let exact = CustomDensity::from_fn(sphere, &spec).unwrap();
        assert!(exact.warnings().is_empty());

        let slightly_off: DensityFn = Arc::new(|_p: f64, t: f64| 1.0001 * t.sin() / (4.0 * PI));
        let rescaled = CustomDensity::from_fn(slightly_off, &spec).unwrap();
        assert_eq!(rescaled.warnings().len(), 1);

        let way_off: DensityFn = Arc::new(|_p: f64, t: f64| 1.01 * t.sin() / (4.0 * PI));
        assert!(CustomDensity::from_fn(way_off, &spec).is_err());

        // custom sphere reproduces the built-in sphere
        let g = SourceGeometry::from_x(0.6, 1.0);
        let sphere: DensityFn = Arc::new(|_p: f64, t: f64| t.sin() / (4.0 * PI));
        let custom = DynamicsModel::CustomDensity(CustomDensity::from_fn(sphere, &spec).unwrap());
        let a = averaged_mode_probabilities(&custom, &g, Cutoff::default(), &spec).unwrap();
        let b = averaged_mode_probabilities(
            &DynamicsModel::UniformSphere,
            &g,
            Cutoff::default(),
            &spec,
        )
        .unwrap();
        assert!(max_abs_difference(&a, &b) < 1e-13);

        let table = vec![
            WeightedOrientation {
                phi: 0.0,
                theta: 1.0,
                weight: 0.5,
            },
            WeightedOrientation {
                phi: 1.0,
                theta: 2.0,
                weight: 0.5,
            },
        ];
        assert!(CustomDensity::from_table(table)
            .unwrap()
            .warnings()
            .is_empty());
        let bad = vec![WeightedOrientation {
            phi: 0.0,
            theta: 1.0,
            weight: 0.9,
        }];
        assert!(CustomDensity::from_table(bad).is_err());
    }

    #[test]
    fn proportional_amplitude_validated() {
        assert!(DynamicsModel::proportional_oscillation(1.0)
            .validate()
            .is_err());
        assert!(DynamicsModel::proportional_oscillation(0.0)
            .validate()
            .is_err());
        assert!(DynamicsModel::proportional_oscillation(0.5)
            .validate()
            .is_ok());
        // large fixed amplitudes are allowed but flagged
        let m = DynamicsModel::fixed_amplitude_oscillation(0.3);
        assert!(m.validate().is_ok());
        assert!(m.sources_interchange(&SourceGeometry::from_x(0.1, 1.0)));
        assert!(!m.sources_interchange(&SourceGeometry::from_x(0.5, 1.0)));
    }

    #[test]
    fn sphere_sampling_matches_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 200_000;
        let mean_sin2: f64 = (0..n)
            .map(|_| {
                DynamicsModel::UniformSphere
                    .sample_configuration(&mut rng)
                    .theta
                    .sin()
                    .powi(2)
            })
            .sum::<f64>()
            / n as f64;
        // Var(sin²θ) = 8/15 - 4/9 under the sphere measure
        let sd = ((8.0 / 15.0 - 4.0 / 9.0) / n as f64).sqrt();
        assert!((mean_sin2 - 2.0 / 3.0).abs() < 5.0 * sd);
    }
}
