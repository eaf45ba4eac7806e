//! Fisher information for the separation, Cramér-Rao bounds and the
//! closed-form limits the numerics are checked against.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::dynamics::{converged_node_set, Configuration, DynamicsModel, Evaluation, NodeSet};
use crate::error::{ensure_finite, Result, SpadeError};
use crate::optics::{Cutoff, ModeIndex, SourceGeometry};
use crate::quadrature::QuadratureSpec;

/// How `∂p/∂d` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DerivativeMethod {
    Analytic,
    /// Central difference with the given step in `d` (length units).
    CentralDifference {
        step: f64,
    },
}

/// Which quantity is being estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Parameter {
    Separation,
    MeanSeparation,
}

#[derive(Debug, Clone, Copy)]
pub struct FisherOptions {
    pub derivative: DerivativeMethod,
    pub quadrature: QuadratureSpec,
    /// Compare analytic and finite-difference totals when `x ≥ 0.01`.
    pub cross_check: bool,
}

impl Default for FisherOptions {
    fn default() -> Self {
        FisherOptions {
            derivative: DerivativeMethod::Analytic,
            quadrature: QuadratureSpec::default(),
            cross_check: false,
        }
    }
}

impl FisherOptions {
    pub fn checked() -> Self {
        FisherOptions {
            cross_check: true,
            ..Default::default()
        }
    }
}

/// Relative agreement required between the two derivative routes.
pub const CROSS_CHECK_TOLERANCE: f64 = 1e-4;

/// Per-mode Fisher information for the separation, in units of length⁻².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherResult {
    pub per_mode: BTreeMap<ModeIndex, f64>,
    /// Sum over resolved modes.
    pub total: f64,
    /// Contribution of the unresolved-overflow category, reported apart
    /// from `total`.
    pub overflow: f64,
    pub cutoff: Cutoff,
    pub derivative: DerivativeMethod,
    pub parameter: Parameter,
    pub w: f64,
}

impl FisherResult {
    /// `w² F`.
    pub fn scaled_total(&self) -> f64 {
        self.total * self.w * self.w
    }

    pub fn scaled_mode(&self, mode: ModeIndex) -> f64 {
        self.per_mode.get(&mode).copied().unwrap_or(0.0) * self.w * self.w
    }

    /// Information when the overflow count is observed as its own category.
    pub fn total_with_overflow(&self) -> f64 {
        self.total + self.overflow
    }

    fn from_scaled(
        scaled: impl IntoIterator<Item = (ModeIndex, f64)>,
        overflow: f64,
        cutoff: Cutoff,
        derivative: DerivativeMethod,
        parameter: Parameter,
        w: f64,
    ) -> Self {
        let inv_w2 = 1.0 / (w * w);
        let per_mode: BTreeMap<ModeIndex, f64> =
            scaled.into_iter().map(|(m, f)| (m, f * inv_w2)).collect();
        let total = per_mode.values().sum();
        FisherResult {
            per_mode,
            total,
            overflow: overflow * inv_w2,
            cutoff,
            derivative,
            parameter,
            w,
        }
    }
}

fn parameter_of(model: &DynamicsModel) -> Parameter {
    if model.is_oscillation() {
        Parameter::MeanSeparation
    } else {
        Parameter::Separation
    }
}

/// Default finite-difference step in `x`, `max(1e-5, 1e-4 x)`.
pub fn default_step_x(x: f64) -> f64 {
    (1e-4 * x).max(1e-5)
}

fn analytic_from_evaluation(
    ev: &Evaluation,
    g: &SourceGeometry,
    parameter: Parameter,
) -> FisherResult {
    FisherResult::from_scaled(
        ev.modes.iter().map(|(m, t)| (*m, t.fisher)),
        ev.overflow.fisher,
        ev.cutoff,
        DerivativeMethod::Analytic,
        parameter,
        g.w,
    )
}

fn finite_difference(
    nodes: &NodeSet,
    g: &SourceGeometry,
    cutoff: Cutoff,
    step_x: f64,
    parameter: Parameter,
) -> FisherResult {
    let x = g.x();
    let at = |dx: f64| nodes.evaluate(&g.with_x(x + dx), cutoff);
    let centre = at(0.0);
    let h = step_x;
    // one-sided stencil when the lower point would cross the axis offset
    let (derivs, over_deriv): (Vec<f64>, f64) = if x - h > g.xi.abs() {
        let (plus, minus) = (at(h), at(-h));
        (
            plus.modes
                .iter()
                .zip(&minus.modes)
                .map(|((_, a), (_, b))| (a.probability - b.probability) / (2.0 * h))
                .collect(),
            (plus.overflow.probability - minus.overflow.probability) / (2.0 * h),
        )
    } else {
        let (p1, p2) = (at(h), at(2.0 * h));
        let stencil = |c: f64, a: f64, b: f64| (-3.0 * c + 4.0 * a - b) / (2.0 * h);
        (
            centre
                .modes
                .iter()
                .zip(p1.modes.iter().zip(&p2.modes))
                .map(|((_, c), ((_, a), (_, b)))| {
                    stencil(c.probability, a.probability, b.probability)
                })
                .collect(),
            stencil(
                centre.overflow.probability,
                p1.overflow.probability,
                p2.overflow.probability,
            ),
        )
    };
    let term = |p: f64, dp: f64| if p > 0.0 { dp * dp / (4.0 * p) } else { 0.0 };
    FisherResult::from_scaled(
        centre
            .modes
            .iter()
            .zip(&derivs)
            .map(|((m, t), dp)| (*m, term(t.probability, *dp))),
        term(centre.overflow.probability, over_deriv),
        cutoff,
        DerivativeMethod::CentralDifference {
            step: 2.0 * g.w * h,
        },
        parameter,
        g.w,
    )
}

/// Fisher information for `d` (or `d̄` for oscillation models) from the
/// dynamics-averaged mode probabilities.
pub fn fisher_information(
    model: &DynamicsModel,
    g: &SourceGeometry,
    cutoff: Cutoff,
    options: &FisherOptions,
) -> Result<FisherResult> {
    let nodes = if let DynamicsModel::Static { .. } = model {
        model.validate()?;
        g.validate()?;
        cutoff.validate()?;
        model.node_set(&options.quadrature)
    } else {
        converged_node_set(model, g, cutoff, &options.quadrature)?
    };
    fisher_from_nodes(&nodes, model, g, cutoff, options)
}

/// Same as [`fisher_information`] on a prepared node set.
pub fn fisher_from_nodes(
    nodes: &NodeSet,
    model: &DynamicsModel,
    g: &SourceGeometry,
    cutoff: Cutoff,
    options: &FisherOptions,
) -> Result<FisherResult> {
    let parameter = parameter_of(model);
    let x = g.x();
    let result = match options.derivative {
        DerivativeMethod::Analytic => {
            analytic_from_evaluation(&nodes.evaluate(g, cutoff), g, parameter)
        }
        DerivativeMethod::CentralDifference { step } => {
            if step.is_nan() || step <= 0.0 {
                return Err(SpadeError::invalid(
                    "step",
                    "finite-difference step must be positive",
                ));
            }
            finite_difference(nodes, g, cutoff, step / (2.0 * g.w), parameter)
        }
    };
    if !result.total.is_finite() {
        return Err(SpadeError::NumericalHealth(format!(
            "non-finite Fisher information at x = {x}"
        )));
    }
    if options.cross_check && x >= 0.01 {
        let other = match options.derivative {
            DerivativeMethod::Analytic => {
                finite_difference(nodes, g, cutoff, default_step_x(x), parameter)
            }
            DerivativeMethod::CentralDifference { .. } => {
                analytic_from_evaluation(&nodes.evaluate(g, cutoff), g, parameter)
            }
        };
        let scale = result.total.abs().max(other.total.abs());
        if scale > 0.0 && (result.total - other.total).abs() > CROSS_CHECK_TOLERANCE * scale {
            return Err(SpadeError::NumericalHealth(format!(
                "analytic and finite-difference Fisher information disagree at x = {x}: {} vs {}",
                result.total, other.total
            )));
        }
    }
    Ok(result)
}

/// `Δd = 1/√(N F)`.
pub fn cramer_rao_bound(fisher: &FisherResult, photons: u64) -> Result<f64> {
    crb_from_total(fisher.total, photons)
}

pub fn crb_from_total(fisher_total: f64, photons: u64) -> Result<f64> {
    if photons == 0 {
        return Err(SpadeError::invalid("photons", "need at least one photon"));
    }
    ensure_finite("fisher", fisher_total)?;
    if fisher_total < 0.0 {
        return Err(SpadeError::invalid(
            "fisher",
            "Fisher information cannot be negative",
        ));
    }
    if fisher_total == 0.0 {
        return Err(SpadeError::UnboundedUncertainty);
    }
    Ok(1.0 / (photons as f64 * fisher_total).sqrt())
}

/// Limit of `w² F` as `d → 0` at fixed `κ`:
/// `C (1 - κ + 2κv)² / ((κ - 1)² + 4κv)`.
pub fn small_separation_limit(kappa: f64, v: f64, c: f64) -> Result<f64> {
    ensure_finite("kappa", kappa)?;
    if kappa.abs() >= 1.0 {
        return Err(SpadeError::invalid(
            "kappa",
            format!("|κ| must be below 1, got {kappa}"),
        ));
    }
    if !(v > 0.0 && v < 1.0) {
        return Err(SpadeError::invalid(
            "v",
            format!("brightness must lie in (0, 1), got {v}"),
        ));
    }
    if !(0.0..=1.0).contains(&c) {
        return Err(SpadeError::invalid(
            "c",
            format!("C must lie in [0, 1], got {c}"),
        ));
    }
    let num = 1.0 - kappa + 2.0 * kappa * v;
    Ok(c * num * num / ((kappa - 1.0).powi(2) + 4.0 * kappa * v))
}

fn angular_factor(cfg: &Configuration, n: usize, m: usize) -> f64 {
    let (sp, cp) = cfg.phi.sin_cos();
    cfg.theta.sin().powi(2 * (n + m) as i32) * sp.powi(2 * m as i32) * cp.powi(2 * n as i32)
}

/// `C_nm = ⟨sin^{2(n+m)}θ sin^{2m}φ cos^{2n}φ⟩` over the model's orientations.
pub fn c_coefficient(model: &DynamicsModel, n: usize, m: usize, q: &QuadratureSpec) -> Result<f64> {
    model.validate()?;
    q.validate()?;
    let nodes = if model.is_discrete() {
        model.node_set(q)
    } else {
        model.node_set(&q.refined())
    };
    Ok(nodes
        .nodes
        .iter()
        .map(|(w, cfg)| w * angular_factor(cfg, n, m))
        .sum())
}

/// `C = C₁₀ + C₀₁ = ⟨sin²θ⟩`.
pub fn c_total(model: &DynamicsModel, q: &QuadratureSpec) -> Result<f64> {
    Ok(c_coefficient(model, 1, 0, q)? + c_coefficient(model, 0, 1, q)?)
}

/// Closed-form and small-separation approximations to `w² F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "kebab-case")]
pub enum AsymptoticScenario {
    /// Constant-rate in-plane rotation at polar angle θ, modes `n, m ≤ 1`;
    /// exact for all `x`.
    PhiRotation {
        theta: f64,
    },
    /// Constant-rate rotation of θ at fixed φ, small `x`.
    ThetaRotation {
        phi: f64,
    },
    UniformSphere,
    /// `x(t) = x̄(1 + A₁ cos)`, small `x̄`.
    ProportionalOscillation {
        a1: f64,
    },
    /// Fixed amplitude `A₂ = A₁ x̄` substituted after differentiation.
    ScaledAmplitudeOscillation {
        a1: f64,
    },
    /// Fixed amplitude `A₂`, one branch each side of `x̄ ≈ A₂`.
    FixedAmplitudeOscillation {
        a2: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AmplitudeRegime {
    /// `x̄ ≫ A₂`.
    LargeSeparation,
    /// `x̄ ≪ A₂`; the sources swap places during the swing.
    SmallSeparation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticValue {
    pub value: f64,
    pub regime: Option<AmplitudeRegime>,
    /// Both branches, reported for the fixed-amplitude case.
    pub large_separation_branch: Option<f64>,
    pub small_separation_branch: Option<f64>,
}

impl AsymptoticValue {
    fn plain(value: f64) -> Self {
        AsymptoticValue {
            value,
            regime: None,
            large_separation_branch: None,
            small_separation_branch: None,
        }
    }
}

/// Ratio `x̄ / A₂` inside which neither fixed-amplitude branch is trusted.
pub const CROSSOVER_FACTOR: f64 = 2.0;

pub fn asymptotic_fi(scenario: AsymptoticScenario, x: f64) -> Result<AsymptoticValue> {
    ensure_finite("x", x)?;
    if x < 0.0 {
        return Err(SpadeError::invalid("x", "separation must be non-negative"));
    }
    let x2 = x * x;
    let value = match scenario {
        AsymptoticScenario::PhiRotation { theta } => {
            let s2 = theta.sin().powi(2);
            let r = x2 * s2;
            s2 * (-r).exp() * (r.powi(3) + 4.0 * r * r - 4.0 * r + 8.0) / 8.0
        }
        AsymptoticScenario::ThetaRotation { phi } => {
            0.5 - x2 * (3.0 * (4.0 * phi).cos() + 11.0) / 16.0
        }
        AsymptoticScenario::UniformSphere => 2.0 / 3.0 - 8.0 * x2 / 9.0,
        AsymptoticScenario::ProportionalOscillation { a1 } => {
            let a2 = a1 * a1;
            1.0 + a2 / 2.0 + (-7.0 * a2 * a2 - 64.0 * a2 - 16.0) * x2 / 8.0
        }
        AsymptoticScenario::ScaledAmplitudeOscillation { a1 } => {
            let a2 = a1 * a1;
            2.0 / (a2 + 2.0)
                + (-19.0 * a2 * a2 - 32.0 * a2 - 16.0) * x2 / (2.0 * (a2 + 2.0).powi(2))
        }
        AsymptoticScenario::FixedAmplitudeOscillation { a2 } => {
            ensure_finite("a2", a2)?;
            if a2 <= 0.0 {
                return Err(SpadeError::invalid("a2", "amplitude must be positive"));
            }
            let large = if x > 0.0 {
                1.0 - 2.0 * x2 + a2 * a2 * (x2 - 1.0 / (2.0 * x2) - 2.0)
            } else {
                f64::NEG_INFINITY
            };
            let small = (2.0 / (a2 * a2) - 19.0 / 2.0 + 85.0 * a2 * a2 / 8.0) * x2;
            let regime = if x >= CROSSOVER_FACTOR * a2 {
                AmplitudeRegime::LargeSeparation
            } else if x <= a2 / CROSSOVER_FACTOR {
                AmplitudeRegime::SmallSeparation
            } else {
                return Err(SpadeError::CrossoverRegime { x, amplitude: a2 });
            };
            return Ok(AsymptoticValue {
                value: match regime {
                    AmplitudeRegime::LargeSeparation => large,
                    AmplitudeRegime::SmallSeparation => small,
                },
                regime: Some(regime),
                large_separation_branch: Some(large),
                small_separation_branch: Some(small),
            });
        }
    };
    Ok(AsymptoticValue::plain(value))
}

/// Binary star with masses in solar units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StarPair {
    pub m1: f64,
    pub m2: f64,
}

/// Axis offset `κ` at the centre of mass and brightness `v` from the
/// quartic mass-luminosity relation.
pub fn star_parameters(s: StarPair) -> Result<(f64, f64)> {
    for (field, m) in [("m1", s.m1), ("m2", s.m2)] {
        ensure_finite(field, m)?;
        if m <= 0.0 {
            return Err(SpadeError::invalid(field, "mass must be positive"));
        }
    }
    let kappa = (s.m2 - s.m1) / (s.m1 + s.m2);
    let (l1, l2) = (s.m1.powi(4), s.m2.powi(4));
    Ok((kappa, l1 / (l1 + l2)))
}

/// Averaged-model Fisher information set against the orientation average
/// of the static Fisher information.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AverageComparison {
    pub lhs: FisherResult,
    /// Orientation-averaged static information, length⁻².
    pub rhs: f64,
    /// `|lhs - rhs| / rhs`.
    pub discrepancy: f64,
}

pub fn average_interchange_check(
    model: &DynamicsModel,
    g: &SourceGeometry,
    cutoff: Cutoff,
    q: &QuadratureSpec,
) -> Result<AverageComparison> {
    if model.is_oscillation() {
        return Err(SpadeError::invalid(
            "model",
            "requires an orientation model, not a separation oscillation",
        ));
    }
    let nodes = if model.is_discrete() {
        model.validate()?;
        g.validate()?;
        cutoff.validate()?;
        model.node_set(q)
    } else {
        converged_node_set(model, g, cutoff, q)?
    };
    let options = FisherOptions {
        quadrature: *q,
        ..Default::default()
    };
    let lhs = fisher_from_nodes(&nodes, model, g, cutoff, &options)?;
    let rhs_scaled: f64 = nodes
        .nodes
        .iter()
        .map(|&(w, cfg)| {
            let single = NodeSet {
                nodes: vec![(1.0, cfg)],
            };
            let ev = single.evaluate(g, cutoff);
            w * ev.modes.iter().map(|(_, t)| t.fisher).sum::<f64>()
        })
        .sum();
    let rhs = rhs_scaled / (g.w * g.w);
    let discrepancy = if rhs > 0.0 {
        (lhs.total - rhs).abs() / rhs
    } else {
        lhs.total.abs()
    };
    Ok(AverageComparison {
        lhs,
        rhs,
        discrepancy,
    })
}
