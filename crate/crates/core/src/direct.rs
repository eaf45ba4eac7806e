//! Perfect direct imaging as a baseline: the image-plane intensity of the
//! two sources, averaged over the dynamics, and its continuous-outcome
//! Fisher information.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_2_PI;

use crate::dynamics::{DynamicsModel, NodeSet};
use crate::error::{ensure_finite, Result, SpadeError};
use crate::optics::SourceGeometry;
use crate::quadrature::{GaussLegendre, QuadratureSpec};

pub const MIN_GRID_NODES: usize = 64;
pub const DEFAULT_GRID_NODES: usize = 200;
/// Margin beyond the outermost source position, in units of `w`.
pub const GRID_MARGIN: f64 = 6.0;
pub const REFINEMENT_TOLERANCE: f64 = 1e-4;

/// Square `[-L, L]²` grid (units of `w`) with a tensor Gauss-Legendre rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImagingGrid {
    pub half_width: f64,
    pub nodes: usize,
}

impl ImagingGrid {
    /// Default grid for a model and geometry.
    pub fn covering(model: &DynamicsModel, g: &SourceGeometry, q: &QuadratureSpec) -> Self {
        let r = max_radius(&model.node_set(q), g);
        ImagingGrid {
            half_width: r + GRID_MARGIN,
            nodes: DEFAULT_GRID_NODES,
        }
    }

    pub fn refined(&self) -> Self {
        ImagingGrid {
            nodes: 2 * self.nodes,
            ..*self
        }
    }

    fn validate_for(&self, radius: f64) -> Result<()> {
        if self.nodes < MIN_GRID_NODES {
            return Err(SpadeError::invalid(
                "grid.nodes",
                format!("need at least {MIN_GRID_NODES} nodes per axis"),
            ));
        }
        ensure_finite("grid.half_width", self.half_width)?;
        if self.half_width < radius + GRID_MARGIN {
            return Err(SpadeError::invalid(
                "grid.half_width",
                format!(
                    "must be at least {:.3} for this geometry",
                    radius + GRID_MARGIN
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DirectOptions {
    /// `None` picks [`ImagingGrid::covering`].
    pub grid: Option<ImagingGrid>,
    pub quadrature: QuadratureSpec,
    /// Recompute on a doubled grid and fail on disagreement.
    pub check_refinement: bool,
}

impl Default for DirectOptions {
    fn default() -> Self {
        DirectOptions {
            grid: None,
            quadrature: QuadratureSpec::default(),
            check_refinement: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectFisher {
    /// Length⁻².
    pub total: f64,
    pub w: f64,
    pub grid: ImagingGrid,
}

impl DirectFisher {
    pub fn scaled_total(&self) -> f64 {
        self.total * self.w * self.w
    }
}

/// A point source seen by the camera: weight, centre and the rate at which
/// the centre moves with `x`, all in units of `w`.
struct Emitter {
    weight: f64,
    centre: [f64; 2],
    velocity: [f64; 2],
}

fn emitters(nodes: &NodeSet, g: &SourceGeometry) -> Vec<Emitter> {
    let x = g.x();
    let mut out = Vec::with_capacity(2 * nodes.len());
    for &(w, cfg) in &nodes.nodes {
        let s = cfg.theta.sin();
        let dir = [cfg.phi.cos() * s, cfg.phi.sin() * s];
        for (bright, sign) in [(g.v, 1.0), (1.0 - g.v, -1.0)] {
            let u = cfg.scale * x + cfg.offset + sign * g.xi;
            out.push(Emitter {
                weight: w * bright,
                centre: [sign * u * dir[0], sign * u * dir[1]],
                velocity: [sign * cfg.scale * dir[0], sign * cfg.scale * dir[1]],
            });
        }
    }
    out
}

fn max_radius(nodes: &NodeSet, g: &SourceGeometry) -> f64 {
    emitters(nodes, g)
        .iter()
        .map(|e| e.centre[0].hypot(e.centre[1]))
        .fold(0.0, f64::max)
}

/// Intensity at `point` (length units), in length⁻².
pub fn di_density(
    model: &DynamicsModel,
    g: &SourceGeometry,
    point: [f64; 2],
    q: &QuadratureSpec,
) -> Result<f64> {
    model.validate()?;
    g.validate()?;
    ensure_finite("point.x", point[0])?;
    ensure_finite("point.y", point[1])?;
    let r = [point[0] / g.w, point[1] / g.w];
    let nodes = model.node_set(q);
    let p: f64 = emitters(&nodes, g)
        .iter()
        .map(|e| {
            let (dx, dy) = (r[0] - e.centre[0], r[1] - e.centre[1]);
            e.weight * FRAC_2_PI * (-2.0 * (dx * dx + dy * dy)).exp()
        })
        .sum();
    Ok(p / (g.w * g.w))
}

/// `∫ p` over the grid, for normalisation checks.
pub fn di_total_probability(
    model: &DynamicsModel,
    g: &SourceGeometry,
    grid: ImagingGrid,
    q: &QuadratureSpec,
) -> Result<f64> {
    let nodes = model.node_set(q);
    Ok(integrate(&emitters(&nodes, g), grid).0)
}

/// Returns `(∫ p, ∫ (∂ₓp)²/p)` in units of `w`.
fn integrate(sources: &[Emitter], grid: ImagingGrid) -> (f64, f64) {
    let rule: Vec<(f64, f64)> = GaussLegendre::new(grid.nodes)
        .on_interval(-grid.half_width, grid.half_width)
        .collect();
    let ns = sources.len();
    // separable factors: exp(-2(X-a)²) and (X-a)·exp(-2(X-a)²) per axis
    let table = |axis: usize| {
        let mut e = vec![0.0; rule.len() * ns];
        let mut de = vec![0.0; rule.len() * ns];
        for (k, &(t, _)) in rule.iter().enumerate() {
            for (i, s) in sources.iter().enumerate() {
                let dt = t - s.centre[axis];
                let v = (-2.0 * dt * dt).exp();
                e[k * ns + i] = v;
                de[k * ns + i] = dt * v;
            }
        }
        (e, de)
    };
    let (ex, dex) = table(0);
    let (ey, dey) = table(1);
    let cw: Vec<f64> = sources.iter().map(|s| s.weight * FRAC_2_PI).collect();
    let floor = 1e-300 * FRAC_2_PI;

    rule.par_iter()
        .enumerate()
        .map(|(kx, &(_, wx))| {
            let (exr, dexr) = (&ex[kx * ns..(kx + 1) * ns], &dex[kx * ns..(kx + 1) * ns]);
            let mut mass = 0.0;
            let mut info = 0.0;
            for (ky, &(_, wy)) in rule.iter().enumerate() {
                let (eyr, deyr) = (&ey[ky * ns..(ky + 1) * ns], &dey[ky * ns..(ky + 1) * ns]);
                let mut p = 0.0;
                let mut dp = 0.0;
                for i in 0..ns {
                    let c = cw[i];
                    p += c * exr[i] * eyr[i];
                    dp += c
                        * (sources[i].velocity[0] * dexr[i] * eyr[i]
                            + sources[i].velocity[1] * exr[i] * deyr[i]);
                }
                let w = wx * wy;
                mass += w * p;
                if p > floor {
                    let dp = 4.0 * dp;
                    info += w * dp * dp / p;
                }
            }
            (mass, info)
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1))
}

/// Continuous-outcome Fisher information of the dynamics-averaged image
/// for `d` (or `d̄`).
pub fn di_fisher_information(
    model: &DynamicsModel,
    g: &SourceGeometry,
    options: &DirectOptions,
) -> Result<DirectFisher> {
    model.validate()?;
    g.validate()?;
    options.quadrature.validate()?;
    let nodes = model.node_set(&options.quadrature);
    let sources = emitters(&nodes, g);
    let radius = sources
        .iter()
        .map(|e| e.centre[0].hypot(e.centre[1]))
        .fold(0.0, f64::max);
    let grid = options.grid.unwrap_or(ImagingGrid {
        half_width: radius + GRID_MARGIN,
        nodes: DEFAULT_GRID_NODES,
    });
    grid.validate_for(radius)?;
    let (_, info_x) = integrate(&sources, grid);
    // ∂/∂d = (1/2w) ∂/∂x
    let scaled = info_x / 4.0;
    if !scaled.is_finite() {
        return Err(SpadeError::NumericalHealth(
            "non-finite direct-imaging information".into(),
        ));
    }
    if options.check_refinement && g.x() >= 0.01 {
        let fine = integrate(&sources, grid.refined()).1 / 4.0;
        let scale = scaled.abs().max(fine.abs());
        if scale > 0.0 && (fine - scaled).abs() > REFINEMENT_TOLERANCE * scale {
            return Err(SpadeError::NumericalHealth(format!(
                "direct-imaging grid not converged: {scaled} vs {fine} on the doubled grid"
            )));
        }
    }
    Ok(DirectFisher {
        total: scaled / (g.w * g.w),
        w: g.w,
        grid,
    })
}

/// Small-separation forms of `w² F_D`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "kebab-case")]
pub enum DirectScenario {
    /// Static pair; `(2v-1)² sin²θ` for unequal brightness, `8x² sin⁴θ` for equal.
    Static {
        v: f64,
        theta: f64,
    },
    PhiRotation {
        theta: f64,
        kappa: f64,
        v: f64,
    },
    ThetaRotation {
        kappa: f64,
        v: f64,
    },
    UniformSphere,
    ProportionalOscillation {
        a1: f64,
    },
    FixedAmplitudeOscillation {
        a2: f64,
    },
}

pub fn di_asymptotics(scenario: DirectScenario, x: f64) -> Result<f64> {
    ensure_finite("x", x)?;
    let x2 = x * x;
    let shift = |kappa: f64, v: f64| (1.0 - kappa + 2.0 * kappa * v).powi(2);
    Ok(match scenario {
        DirectScenario::Static { v, theta } => {
            let s2 = theta.sin().powi(2);
            if v == 0.5 {
                8.0 * x2 * s2 * s2
            } else {
                (2.0 * v - 1.0).powi(2) * s2
            }
        }
        DirectScenario::PhiRotation { theta, kappa, v } => {
            4.0 * x2 * shift(kappa, v) * theta.sin().powi(4)
        }
        DirectScenario::ThetaRotation { kappa, v } => 2.0 * x2 * shift(kappa, v),
        DirectScenario::UniformSphere => 16.0 * x2 / 9.0,
        DirectScenario::ProportionalOscillation { a1 } => 2.0 * (2.0 + a1 * a1).powi(2) * x2,
        DirectScenario::FixedAmplitudeOscillation { a2 } => 8.0 * (1.0 - 4.0 * a2 * a2) * x2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn q() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    fn fd(model: &DynamicsModel, g: &SourceGeometry) -> f64 {
        di_fisher_information(model, g, &DirectOptions::default())
            .unwrap()
            .scaled_total()
    }

    #[test]
    fn density_examples() {
        let st = DynamicsModel::static_at(0.0, FRAC_PI_2);
        let p = di_density(&st, &SourceGeometry::new(0.0, 1.0), [0.0, 0.0], &q()).unwrap();
        assert!((p - 2.0 / PI).abs() < 1e-15);
        let g = SourceGeometry::from_x(0.5, 1.0);
        let p = di_density(&st, &g, [0.0, 0.0], &q()).unwrap();
        assert!((p - 2.0 / PI * (-0.5f64).exp()).abs() < 1e-15);
        assert!((p - 0.386_129_4).abs() < 1e-7);
        // length units: w = 2 spreads the same picture over four times the area
        let g2 = SourceGeometry::from_x(0.5, 2.0);
        let p2 = di_density(&st, &g2, [0.0, 0.0], &q()).unwrap();
        assert!((p2 - p / 4.0).abs() < 1e-15);
    }

    #[test]
    fn density_normalises() {
        let g = SourceGeometry::from_x(0.7, 1.0)
            .with_brightness(0.3)
            .with_axis_offset(0.2);
        for model in [
            DynamicsModel::static_at(0.4, 1.0),
            DynamicsModel::phi_rotation(1.2),
            DynamicsModel::UniformSphere,
            DynamicsModel::proportional_oscillation(0.25),
        ] {
            let grid = ImagingGrid::covering(&model, &g, &q());
            let total = di_total_probability(&model, &g, grid, &q()).unwrap();
            assert!((total - 1.0).abs() < 1e-8, "{}: {total}", model.name());
        }
    }

    #[test]
    fn static_small_separation_limits() {
        let st = DynamicsModel::static_at(0.0, FRAC_PI_2);
        let f = fd(&st, &SourceGeometry::from_x(1e-3, 1.0).with_brightness(0.7));
        assert!((f - 0.16).abs() < 1e-3);
        let f = fd(&st, &SourceGeometry::from_x(0.05, 1.0));
        assert!(((f - 0.02) / 0.02).abs() < 0.05);
    }

    #[test]
    fn rotation_removes_brightness_dependence() {
        let model = DynamicsModel::phi_rotation(FRAC_PI_2);
        let vals: Vec<f64> = [0.3, 0.5, 0.7]
            .iter()
            .map(|&v| {
                fd(
                    &model,
                    &SourceGeometry::from_x(0.05, 1.0).with_brightness(v),
                )
            })
            .collect();
        for v in &vals {
            assert!(((v - vals[1]) / vals[1]).abs() < 1e-10);
            assert!(((v - 0.01) / 0.01).abs() < 0.05);
        }
    }

    #[test]
    fn trajectory_derivative_commutes_with_average() {
        let model = DynamicsModel::phi_oscillation(1.1, 0.6);
        let g = SourceGeometry::from_x(0.3, 1.0).with_brightness(0.6);
        let opts = DirectOptions {
            check_refinement: false,
            ..Default::default()
        };
        let analytic = di_fisher_information(&model, &g, &opts).unwrap();
        // finite difference of the averaged density, integrated on the same grid
        let h = 1e-5;
        let rule: Vec<(f64, f64)> = GaussLegendre::new(120).on_interval(-7.0, 7.0).collect();
        let dens = |x: f64, r: [f64; 2]| di_density(&model, &g.with_x(x), r, &q()).unwrap();
        let mut info = 0.0;
        for &(a, wa) in &rule {
            for &(b, wb) in &rule {
                let p = dens(0.3, [a, b]);
                if p > 1e-300 {
                    let dp = (dens(0.3 + h, [a, b]) - dens(0.3 - h, [a, b])) / (2.0 * h);
                    info += wa * wb * dp * dp / p;
                }
            }
        }
        let fd = info / 4.0;
        assert!(((analytic.scaled_total() - fd) / fd).abs() < 1e-6);
    }

    #[test]
    fn grid_refinement_is_stable() {
        let g = SourceGeometry::from_x(0.4, 1.0);
        let model = DynamicsModel::theta_rotation(0.2);
        let base = di_fisher_information(&model, &g, &DirectOptions::default()).unwrap();
        let fine = di_fisher_information(
            &model,
            &g,
            &DirectOptions {
                grid: Some(base.grid.refined()),
                ..Default::default()
            },
        )
        .unwrap();
        assert!(((base.total - fine.total) / fine.total).abs() < 1e-4);
    }

    #[test]
    fn undersized_grid_rejected() {
        let g = SourceGeometry::from_x(2.0, 1.0);
        let model = DynamicsModel::static_at(0.0, FRAC_PI_2);
        for grid in [
            ImagingGrid {
                half_width: 4.0,
                nodes: 200,
            },
            ImagingGrid {
                half_width: 9.0,
                nodes: 32,
            },
        ] {
            let opts = DirectOptions {
                grid: Some(grid),
                ..Default::default()
            };
            assert!(di_fisher_information(&model, &g, &opts).is_err());
        }
    }

    #[test]
    fn asymptotic_lookup_examples() {
        let t = di_asymptotics(DirectScenario::ThetaRotation { kappa: 0.0, v: 0.5 }, 0.1).unwrap();
        assert!((t - 0.02).abs() < 1e-15);
        let s = di_asymptotics(DirectScenario::UniformSphere, 0.1).unwrap();
        assert!((s - 16.0 / 900.0).abs() < 1e-15);
        let o = di_asymptotics(DirectScenario::ProportionalOscillation { a1: 0.25 }, 0.1).unwrap();
        assert!((o - 0.085_078_125).abs() < 1e-12);
        let st = di_asymptotics(
            DirectScenario::Static {
                v: 0.7,
                theta: FRAC_PI_2,
            },
            1e-3,
        )
        .unwrap();
        assert!((st - 0.16).abs() < 1e-12);
    }

    #[test]
    fn shifted_axis_factor_enters_squared() {
        let x = 0.02;
        let (kappa, v) = (-0.4, 0.7);
        let g = SourceGeometry::from_x(x, 1.0)
            .with_brightness(v)
            .with_axis_offset(kappa * x);
        for (model, s) in [
            (
                DynamicsModel::phi_rotation(FRAC_PI_2),
                DirectScenario::PhiRotation {
                    theta: FRAC_PI_2,
                    kappa,
                    v,
                },
            ),
            (
                DynamicsModel::theta_rotation(0.0),
                DirectScenario::ThetaRotation { kappa, v },
            ),
        ] {
            let f = fd(&model, &g);
            let a = di_asymptotics(s, x).unwrap();
            assert!(((f - a) / a).abs() < 5e-3, "{}: {f} vs {a}", model.name());
        }
    }
}
