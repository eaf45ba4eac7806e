//! Hermite-Gauss mode machinery for two incoherent point sources imaged
//! through a Gaussian point-spread function.
//!
//! Lengths carry the PSF width `w`; internally everything is expressed in
//! the dimensionless separation `x = d / 2w` and radii in units of `w`.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{ensure_finite, Result, SpadeError};
use crate::special::{factorial, hermite, poisson_upper_tail};

/// Static two-source configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceGeometry {
    /// Separation between the sources.
    pub d: f64,
    /// PSF width.
    pub w: f64,
    /// Azimuthal orientation of the first source (radians).
    pub phi: f64,
    /// Polar orientation of the first source (radians).
    pub theta: f64,
    /// Relative brightness of the first source.
    pub v: f64,
    /// Rotation-axis offset in units of `w`; negative moves the axis
    /// towards the first source.
    pub xi: f64,
}

impl SourceGeometry {
    /// Equal-brightness pair in the imaging plane, axis centred, `φ = 0`.
    pub fn new(d: f64, w: f64) -> Self {
        SourceGeometry {
            d,
            w,
            phi: 0.0,
            theta: FRAC_PI_2,
            v: 0.5,
            xi: 0.0,
        }
    }

    /// Geometry from the dimensionless separation `x = d / 2w`.
    pub fn from_x(x: f64, w: f64) -> Self {
        Self::new(2.0 * w * x, w)
    }

    pub fn with_angles(mut self, phi: f64, theta: f64) -> Self {
        self.phi = phi;
        self.theta = theta;
        self
    }

    pub fn with_brightness(mut self, v: f64) -> Self {
        self.v = v;
        self
    }

    pub fn with_axis_offset(mut self, xi: f64) -> Self {
        self.xi = xi;
        self
    }

    /// Same geometry at a different separation.
    pub fn with_d(mut self, d: f64) -> Self {
        self.d = d;
        self
    }

    pub fn with_x(self, x: f64) -> Self {
        let w = self.w;
        self.with_d(2.0 * w * x)
    }

    pub fn x(&self) -> f64 {
        self.d / (2.0 * self.w)
    }

    /// `κ = 2ξw/d`; zero for a centred axis.
    pub fn kappa(&self) -> f64 {
        if self.xi == 0.0 {
            0.0
        } else {
            2.0 * self.xi * self.w / self.d
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (field, value) in [
            ("d", self.d),
            ("w", self.w),
            ("phi", self.phi),
            ("theta", self.theta),
            ("v", self.v),
            ("xi", self.xi),
        ] {
            ensure_finite(field, value)?;
        }
        if self.d < 0.0 {
            return Err(SpadeError::invalid("d", "separation must be non-negative"));
        }
        if self.w <= 0.0 {
            return Err(SpadeError::invalid("w", "PSF width must be positive"));
        }
        if !(self.v > 0.0 && self.v < 1.0) {
            return Err(SpadeError::invalid(
                "v",
                format!("brightness must lie in (0, 1), got {}", self.v),
            ));
        }
        if self.d > 0.0 {
            if (2.0 * self.xi * self.w).abs() >= self.d {
                return Err(SpadeError::invalid(
                    "xi",
                    format!(
                        "rotation axis must lie between the sources: |2ξw| = {} ≥ d = {}",
                        (2.0 * self.xi * self.w).abs(),
                        self.d
                    ),
                ));
            }
        } else if self.xi != 0.0 {
            return Err(SpadeError::invalid(
                "xi",
                "a non-zero axis offset requires d > 0",
            ));
        }
        Ok(())
    }
}

/// Hermite-Gauss mode label `(n, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ModeIndex {
    pub n: usize,
    pub m: usize,
}

impl ModeIndex {
    pub const fn new(n: usize, m: usize) -> Self {
        ModeIndex { n, m }
    }

    pub const fn order(&self) -> usize {
        self.n + self.m
    }
}

impl std::fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}{}", self.n, self.m)
    }
}

/// Which modes a demultiplexer resolves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CutoffKind {
    /// `n ≤ M` and `m ≤ M`.
    #[default]
    PerIndex,
    /// `n + m ≤ M`.
    TotalOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cutoff {
    pub max: usize,
    pub kind: CutoffKind,
}

impl Cutoff {
    pub const DEFAULT_MAX: usize = 5;

    pub fn per_index(max: usize) -> Self {
        Cutoff {
            max,
            kind: CutoffKind::PerIndex,
        }
    }

    pub fn total_order(max: usize) -> Self {
        Cutoff {
            max,
            kind: CutoffKind::TotalOrder,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max < 1 {
            return Err(SpadeError::invalid(
                "modes",
                "cutoff must be at least 1 so that modes 10 and 01 are resolved",
            ));
        }
        Ok(())
    }

    pub fn contains(&self, mode: ModeIndex) -> bool {
        match self.kind {
            CutoffKind::PerIndex => mode.n <= self.max && mode.m <= self.max,
            CutoffKind::TotalOrder => mode.order() <= self.max,
        }
    }

    /// Resolved modes in lexicographic order.
    pub fn modes(&self) -> impl Iterator<Item = ModeIndex> + '_ {
        (0..=self.max)
            .flat_map(move |n| (0..=self.max).map(move |m| ModeIndex::new(n, m)))
            .filter(move |mode| self.contains(*mode))
    }

    /// Probability that a source with Poisson means `(λx, λy)` falls
    /// outside the resolved modes, with its derivatives in each mean.
    pub(crate) fn overflow_with_gradient(&self, lambda_x: f64, lambda_y: f64) -> (f64, f64, f64) {
        use crate::special::poisson_pmf;
        match self.kind {
            CutoffKind::PerIndex => {
                let qx = poisson_upper_tail(self.max, lambda_x);
                let qy = poisson_upper_tail(self.max, lambda_y);
                let p = qx + qy - qx * qy;
                let dqx = poisson_pmf(self.max, lambda_x);
                let dqy = poisson_pmf(self.max, lambda_y);
                (p, (1.0 - qy) * dqx, (1.0 - qx) * dqy)
            }
            CutoffKind::TotalOrder => {
                let total = lambda_x + lambda_y;
                let p = poisson_upper_tail(self.max, total);
                let dq = poisson_pmf(self.max, total);
                (p, dq, dq)
            }
        }
    }
}

impl Default for Cutoff {
    fn default() -> Self {
        Cutoff::per_index(Self::DEFAULT_MAX)
    }
}

/// Detection probabilities over the resolved modes plus the mass that
/// lands outside them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeProbabilities {
    pub cutoff: Cutoff,
    pub values: BTreeMap<ModeIndex, f64>,
    pub overflow: f64,
}

impl ModeProbabilities {
    pub fn get(&self, n: usize, m: usize) -> f64 {
        self.values
            .get(&ModeIndex::new(n, m))
            .copied()
            .unwrap_or(0.0)
    }

    /// Sum over resolved modes.
    pub fn resolved(&self) -> f64 {
        self.values.values().sum()
    }

    pub fn total(&self) -> f64 {
        self.resolved() + self.overflow
    }
}

/// Hermite-Gauss mode `u_nm` at `point`, normalised to unit L² norm.
pub fn hg_mode_amplitude(n: usize, m: usize, point: [f64; 2], w: f64) -> Result<f64> {
    ensure_finite("point.x", point[0])?;
    ensure_finite("point.y", point[1])?;
    ensure_finite("w", w)?;
    if w <= 0.0 {
        return Err(SpadeError::invalid("w", "PSF width must be positive"));
    }
    let [x, y] = point;
    let r2 = (x * x + y * y) / (w * w);
    let norm = (FRAC_PI_2 * w * w * 2f64.powi((n + m) as i32) * factorial(n) * factorial(m)).sqrt();
    let s = std::f64::consts::SQRT_2 / w;
    Ok((-r2).exp() / norm * hermite(n, s * x) * hermite(m, s * y))
}

/// Overlap `β = coefficient · ρ^power` between `u_nm` and a PSF displaced
/// to radius `ρ w` at azimuth `φ`. The power of ρ is kept apart from the
/// coefficient so ratios of overlaps can cancel it exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Overlap {
    pub rho: f64,
    pub power: u32,
    pub coefficient: f64,
}

impl Overlap {
    pub fn value(&self) -> f64 {
        self.coefficient * self.rho.powi(self.power as i32)
    }

    pub fn squared(&self) -> f64 {
        let v = self.value();
        v * v
    }
}

/// Overlap of mode `(n, m)` with a PSF at `sign · ρ (cos φ, sin φ)`.
pub fn overlap_beta(n: usize, m: usize, rho: f64, phi: f64, sign: f64) -> Result<Overlap> {
    ensure_finite("rho", rho)?;
    ensure_finite("phi", phi)?;
    if rho < 0.0 {
        return Err(SpadeError::invalid("rho", "radius must be non-negative"));
    }
    if sign != 1.0 && sign != -1.0 {
        return Err(SpadeError::invalid("sign", "must be +1 or -1"));
    }
    let k = n + m;
    let parity = if k % 2 == 1 { sign } else { 1.0 };
    let coefficient =
        parity * phi.cos().powi(n as i32) * phi.sin().powi(m as i32) * (-0.5 * rho * rho).exp()
            / (factorial(n) * factorial(m)).sqrt();
    Ok(Overlap {
        rho,
        power: k as u32,
        coefficient,
    })
}

/// Image-plane positions of the two sources, in length units.
pub fn source_positions(g: &SourceGeometry) -> ([f64; 2], [f64; 2]) {
    let dir = [g.phi.cos() * g.theta.sin(), g.phi.sin() * g.theta.sin()];
    let a = 0.5 * (g.d + 2.0 * g.xi * g.w);
    let b = -0.5 * (g.d - 2.0 * g.xi * g.w);
    ([a * dir[0], a * dir[1]], [b * dir[0], b * dir[1]])
}

/// Detection probabilities for a static configuration.
pub fn static_mode_probabilities(g: &SourceGeometry, cutoff: Cutoff) -> Result<ModeProbabilities> {
    g.validate()?;
    cutoff.validate()?;
    let x = g.x();
    let s = g.theta.sin();
    // signed radii along the orientation direction, in units of w
    let rho1 = (x + g.xi) * s;
    let rho2 = (x - g.xi) * s;
    let mut values = BTreeMap::new();
    for mode in cutoff.modes() {
        let b1 = overlap_beta(mode.n, mode.m, rho1.abs(), g.phi, rho1.signum_or_one())?;
        let b2 = overlap_beta(mode.n, mode.m, rho2.abs(), g.phi, -rho2.signum_or_one())?;
        values.insert(mode, g.v * b1.squared() + (1.0 - g.v) * b2.squared());
    }
    let (c2, s2) = (g.phi.cos().powi(2), g.phi.sin().powi(2));
    let overflow = g.v
        * cutoff
            .overflow_with_gradient(rho1 * rho1 * c2, rho1 * rho1 * s2)
            .0
        + (1.0 - g.v)
            * cutoff
                .overflow_with_gradient(rho2 * rho2 * c2, rho2 * rho2 * s2)
                .0;
    Ok(ModeProbabilities {
        cutoff,
        values,
        overflow,
    })
}

trait SignumOrOne {
    fn signum_or_one(self) -> f64;
}

impl SignumOrOne for f64 {
    fn signum_or_one(self) -> f64 {
        if self < 0.0 {
            -1.0
        } else {
            1.0
        }
    }
}

/// `u_00` at the origin for unit width, `sqrt(2/π)`.
pub fn psf_peak_amplitude(w: f64) -> f64 {
    (2.0 / (PI * w * w)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::GaussLegendre;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn mode_amplitude_examples() {
        let a = hg_mode_amplitude(0, 0, [0.0, 0.0], 1.0).unwrap();
        assert!((a - 0.797_884_560_802_865_4).abs() < 1e-15);
        assert_eq!(hg_mode_amplitude(1, 0, [0.0, 0.0], 1.0).unwrap(), 0.0);
        let b = hg_mode_amplitude(0, 0, [1.0, 0.0], 1.0).unwrap();
        assert!((b - (2.0 / PI).sqrt() * (-1f64).exp()).abs() < 1e-15);
        assert!((b - 0.293_525_3).abs() < 1e-7);
        assert!(hg_mode_amplitude(0, 0, [f64::NAN, 0.0], 1.0).is_err());
    }

    #[test]
    fn modes_are_orthonormal() {
        let gl = GaussLegendre::new(80);
        let l = 7.0;
        let pairs = [
            ((0, 0), (0, 0)),
            ((2, 1), (2, 1)),
            ((1, 0), (3, 0)),
            ((2, 2), (0, 2)),
        ];
        for ((n1, m1), (n2, m2)) in pairs {
            let mut acc = 0.0;
            for (x, wx) in gl.on_interval(-l, l) {
                for (y, wy) in gl.on_interval(-l, l) {
                    acc += wx
                        * wy
                        * hg_mode_amplitude(n1, m1, [x, y], 1.0).unwrap()
                        * hg_mode_amplitude(n2, m2, [x, y], 1.0).unwrap();
                }
            }
            let expect = if (n1, m1) == (n2, m2) { 1.0 } else { 0.0 };
            assert!((acc - expect).abs() < 1e-12, "{n1}{m1}/{n2}{m2}: {acc}");
        }
    }

    #[test]
    fn closed_form_overlap_matches_quadrature() {
        // brute-force overlap integral against the closed form
        let gl = GaussLegendre::new(90);
        let l = 8.0;
        let (rho, phi) = (0.8f64, 0.6f64);
        let centre = [rho * phi.cos(), rho * phi.sin()];
        for (n, m) in [(0, 0), (1, 0), (0, 1), (2, 1), (3, 2)] {
            let mut acc = 0.0;
            for (x, wx) in gl.on_interval(-l, l) {
                for (y, wy) in gl.on_interval(-l, l) {
                    acc += wx
                        * wy
                        * hg_mode_amplitude(n, m, [x, y], 1.0).unwrap()
                        * hg_mode_amplitude(0, 0, [x - centre[0], y - centre[1]], 1.0).unwrap();
                }
            }
            let beta = overlap_beta(n, m, rho, phi, 1.0).unwrap().value();
            assert!(
                (acc - beta).abs() < 1e-12,
                "{n}{m}: quad {acc} closed {beta}"
            );
            let beta_minus = overlap_beta(n, m, rho, phi, -1.0).unwrap().value();
            let expect = if (n + m) % 2 == 0 { beta } else { -beta };
            assert_eq!(beta_minus, expect);
        }
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(overlap_beta(0, 0, 0.0, 1.234, 1.0).unwrap().value(), 1.0);
        let b = overlap_beta(1, 0, 0.5, 0.0, 1.0).unwrap().value();
        assert!((b - 0.5 * (-0.125f64).exp()).abs() < 1e-15);
        assert!((b - 0.441_248_5).abs() < 1e-7);
        let bm = overlap_beta(1, 0, 0.5, 0.0, -1.0).unwrap().value();
        assert_eq!(bm, -b);
        assert!(overlap_beta(0, 0, -0.1, 0.0, 1.0).is_err());
    }

    #[test]
    fn factored_overlap_matches_naive_evaluation() {
        for &rho in &[1e-3f64, 0.01, 0.3, 1.0, 2.0] {
            for (n, m) in [(0, 0), (1, 2), (4, 3), (5, 5)] {
                let phi: f64 = 0.37;
                let naive = rho.powi((n + m) as i32) / (factorial(n) * factorial(m)).sqrt()
                    * phi.cos().powi(n as i32)
                    * phi.sin().powi(m as i32)
                    * (-rho * rho / 2.0).exp();
                let factored = overlap_beta(n, m, rho, phi, 1.0).unwrap().value();
                assert!(((factored - naive) / naive).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn source_position_examples() {
        let g = SourceGeometry::new(1.0, 1.0);
        let (r1, r2) = source_positions(&g);
        assert!((r1[0] - 0.5).abs() < 1e-15 && r1[1].abs() < 1e-15);
        assert!((r2[0] + 0.5).abs() < 1e-15 && r2[1].abs() < 1e-15);

        let (r1, r2) = source_positions(&g.with_angles(0.0, 0.0));
        assert_eq!((r1, r2), ([0.0, 0.0], [-0.0, -0.0]));

        let (r1, r2) = source_positions(&g.with_axis_offset(0.1));
        assert!((r1[0].hypot(r1[1]) - 0.6).abs() < 1e-15);
        assert!((r2[0].hypot(r2[1]) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn static_probability_examples() {
        let p = static_mode_probabilities(&SourceGeometry::new(0.0, 1.0), Cutoff::per_index(1))
            .unwrap();
        assert_eq!(p.get(0, 0), 1.0);
        assert_eq!(p.get(1, 0), 0.0);
        assert_eq!(p.get(1, 1), 0.0);
        assert_eq!(p.overflow, 0.0);

        let g = SourceGeometry::from_x(0.5, 1.0);
        let p = static_mode_probabilities(&g, Cutoff::per_index(1)).unwrap();
        assert!((p.get(1, 0) - 0.25 * (-0.25f64).exp()).abs() < 1e-15);
        assert!((p.get(1, 0) - 0.194_700_2).abs() < 1e-7);
        assert_eq!(p.get(0, 1), 0.0);
        assert!((p.get(0, 0) - 0.778_800_8).abs() < 1e-7);
    }

    #[test]
    fn static_rejects_bad_inputs() {
        let g = SourceGeometry::from_x(0.5, 1.0);
        assert!(static_mode_probabilities(&g, Cutoff::per_index(0)).is_err());
        assert!(static_mode_probabilities(&g.with_axis_offset(0.5), Cutoff::default()).is_err());
        assert!(static_mode_probabilities(&g.with_brightness(1.0), Cutoff::default()).is_err());
        assert!(SourceGeometry::new(0.0, 1.0)
            .with_axis_offset(0.1)
            .validate()
            .is_err());
    }

    #[test]
    fn overflow_decreases_with_cutoff() {
        let g = SourceGeometry::from_x(0.8, 1.0)
            .with_angles(0.4, 1.1)
            .with_brightness(0.3)
            .with_axis_offset(0.2);
        let mut last = f64::INFINITY;
        for max in 1..=8 {
            let p = static_mode_probabilities(&g, Cutoff::per_index(max)).unwrap();
            assert!((p.total() - 1.0).abs() < 1e-12);
            assert!(p.overflow < last);
            last = p.overflow;
        }
    }

    #[test]
    fn total_order_cutoff_normalises() {
        let g = SourceGeometry::from_x(1.1, 1.0).with_angles(FRAC_PI_4, 1.2);
        let p = static_mode_probabilities(&g, Cutoff::total_order(3)).unwrap();
        assert_eq!(p.values.len(), 10);
        assert!((p.total() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn beta_completeness() {
        for &rho in &[0.0, 0.3, 1.0, 2.0] {
            let s: f64 = Cutoff::per_index(40)
                .modes()
                .map(|md| overlap_beta(md.n, md.m, rho, 0.7, 1.0).unwrap().squared())
                .sum();
            assert!((s - 1.0).abs() < 1e-10, "rho={rho} sum={s}");
        }
    }
}
