//! Photon-count simulation, maximum-likelihood estimation of the
//! separation, and repeated experiments that compare the estimator spread
//! with the Cramér-Rao bound.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::dynamics::{DynamicsModel, NodeSet};
use crate::error::{Result, SpadeError};
use crate::estimation::{crb_from_total, fisher_information, FisherOptions};
use crate::optics::{Cutoff, ModeIndex, SourceGeometry};
use crate::quadrature::QuadratureSpec;

/// Which outcomes the likelihood treats as observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Likelihood {
    /// Multinomial over the resolved modes plus one overflow category.
    #[default]
    WithOverflow,
    /// Independent Poisson counts in the resolved modes only; the overflow
    /// count enters only through the known photon number.
    DetectedOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct EstimatorConfig {
    pub x_lo: f64,
    pub x_hi: f64,
    pub grid_points: usize,
    pub tolerance: f64,
    pub likelihood: Likelihood,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            x_lo: 0.0,
            x_hi: 3.0,
            grid_points: 121,
            tolerance: 1e-6,
            likelihood: Likelihood::WithOverflow,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.x_lo >= 0.0 && self.x_lo < self.x_hi && self.x_hi.is_finite()) {
            return Err(SpadeError::invalid("estimator", "need 0 ≤ x_lo < x_hi"));
        }
        if self.grid_points < 3 {
            return Err(SpadeError::invalid(
                "estimator.grid_points",
                "need at least 3 grid points",
            ));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(SpadeError::invalid(
                "estimator.tolerance",
                "must be positive",
            ));
        }
        Ok(())
    }
}

/// One simulated experiment: true parameters, model and estimator.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub photons: u64,
    pub runs: usize,
    pub seed: u64,
    pub model: DynamicsModel,
    pub geometry: SourceGeometry,
    pub cutoff: Cutoff,
    pub estimator: EstimatorConfig,
    pub quadrature: QuadratureSpec,
}

impl ExperimentConfig {
    pub fn new(
        model: DynamicsModel,
        geometry: SourceGeometry,
        photons: u64,
        runs: usize,
        seed: u64,
    ) -> Self {
        ExperimentConfig {
            photons,
            runs,
            seed,
            model,
            geometry,
            cutoff: Cutoff::default(),
            estimator: EstimatorConfig::default(),
            quadrature: QuadratureSpec::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.photons == 0 {
            return Err(SpadeError::invalid("photons", "need at least one photon"));
        }
        if self.runs == 0 {
            return Err(SpadeError::invalid("runs", "need at least one run"));
        }
        self.model.validate()?;
        self.geometry.validate()?;
        self.cutoff.validate()?;
        self.quadrature.validate()?;
        self.estimator.validate()
    }
}

/// Detector counts from one experiment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhotonCounts {
    pub cutoff: Cutoff,
    #[serde(with = "mode_counts")]
    pub counts: BTreeMap<ModeIndex, u64>,
    pub overflow_count: u64,
}

mod mode_counts {
    use super::ModeIndex;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    #[derive(Serialize, Deserialize)]
    struct Entry {
        n: usize,
        m: usize,
        count: u64,
    }

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<ModeIndex, u64>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let entries: Vec<Entry> = map
            .iter()
            .map(|(k, &count)| Entry {
                n: k.n,
                m: k.m,
                count,
            })
            .collect();
        entries.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<ModeIndex, u64>, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        Ok(entries
            .into_iter()
            .map(|e| (ModeIndex::new(e.n, e.m), e.count))
            .collect())
    }
}

impl PhotonCounts {
    pub fn empty(cutoff: Cutoff) -> Self {
        PhotonCounts {
            cutoff,
            counts: cutoff.modes().map(|m| (m, 0)).collect(),
            overflow_count: 0,
        }
    }

    pub fn get(&self, n: usize, m: usize) -> u64 {
        self.counts.get(&ModeIndex::new(n, m)).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum::<u64>() + self.overflow_count
    }

    pub fn validate(&self) -> Result<()> {
        self.cutoff.validate()?;
        if let Some(m) = self.counts.keys().find(|m| !self.cutoff.contains(**m)) {
            return Err(SpadeError::invalid(
                "counts",
                format!("mode {m} lies outside the cutoff"),
            ));
        }
        if self.total() == 0 {
            return Err(SpadeError::invalid("counts", "no photons recorded"));
        }
        Ok(())
    }

    fn only_ground_mode(&self) -> bool {
        self.overflow_count == 0
            && self
                .counts
                .iter()
                .all(|(m, &c)| c == 0 || (m.n == 0 && m.m == 0))
    }
}

/// Per-run random stream derived from the experiment seed.
pub fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

fn poisson_draw<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda)
        .map(|p| p.sample(rng) as u64)
        .unwrap_or(0)
}

/// Simulate `photons` detections with the given random stream.
pub fn sample_counts_with<R: Rng + ?Sized>(
    model: &DynamicsModel,
    g: &SourceGeometry,
    cutoff: Cutoff,
    photons: u64,
    rng: &mut R,
) -> PhotonCounts {
    let x = g.x();
    let mut out = PhotonCounts::empty(cutoff);
    for _ in 0..photons {
        let cfg = model.sample_configuration(rng);
        let sign = if rng.random::<f64>() < g.v { 1.0 } else { -1.0 };
        let rho = (cfg.scale * x + cfg.offset + sign * g.xi) * cfg.theta.sin();
        let r2 = rho * rho;
        let (sp, cp) = cfg.phi.sin_cos();
        let n = poisson_draw(r2 * cp * cp, rng);
        let m = poisson_draw(r2 * sp * sp, rng);
        let mode = ModeIndex::new(n as usize, m as usize);
        match out.counts.get_mut(&mode) {
            Some(c) if cutoff.contains(mode) => *c += 1,
            _ => out.overflow_count += 1,
        }
    }
    out
}

/// Counts for the first run of an experiment.
pub fn sample_counts(cfg: &ExperimentConfig) -> Result<PhotonCounts> {
    cfg.validate()?;
    let mut rng = run_rng(cfg.seed, 0);
    Ok(sample_counts_with(
        &cfg.model,
        &cfg.geometry,
        cfg.cutoff,
        cfg.photons,
        &mut rng,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateFlag {
    /// Only the ground mode fired; the likelihood peaks at the lower bound.
    DegenerateLikelihood,
    AtLowerBound,
    AtUpperBound,
    /// Too few photons for the asymptotic theory to apply.
    SmallSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    pub x_hat: f64,
    pub d_hat: f64,
    pub log_likelihood: f64,
    pub flags: Vec<EstimateFlag>,
}

/// Log-likelihood of the counts as a function of `x`, all other geometry
/// fixed.
pub struct LogLikelihood<'a> {
    counts: &'a PhotonCounts,
    nodes: NodeSet,
    geometry: SourceGeometry,
    kind: Likelihood,
}

impl<'a> LogLikelihood<'a> {
    pub fn new(
        counts: &'a PhotonCounts,
        model: &DynamicsModel,
        known: &SourceGeometry,
        kind: Likelihood,
        q: &QuadratureSpec,
    ) -> Result<Self> {
        counts.validate()?;
        model.validate()?;
        known.validate()?;
        q.validate()?;
        let nodes = if model.is_discrete() {
            model.node_set(q)
        } else {
            model.node_set(&q.refined())
        };
        Ok(LogLikelihood {
            counts,
            nodes,
            geometry: *known,
            kind,
        })
    }

    pub fn at(&self, x: f64) -> f64 {
        let ev = self
            .nodes
            .evaluate(&self.geometry.with_x(x), self.counts.cutoff);
        let term = |c: u64, p: f64| {
            if c == 0 {
                0.0
            } else if p > 0.0 {
                c as f64 * p.ln()
            } else {
                f64::NEG_INFINITY
            }
        };
        let mut ll: f64 = ev
            .modes
            .iter()
            .map(|(m, t)| {
                term(
                    self.counts.counts.get(m).copied().unwrap_or(0),
                    t.probability,
                )
            })
            .sum();
        match self.kind {
            Likelihood::WithOverflow => {
                ll += term(self.counts.overflow_count, ev.overflow.probability)
            }
            Likelihood::DetectedOnly => {
                let resolved: f64 = ev.modes.iter().map(|(_, t)| t.probability).sum();
                ll -= self.counts.total() as f64 * resolved;
            }
        }
        ll
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximise `f` on `[a, b]` by golden-section search.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Maximum-likelihood estimate of the separation from one set of counts.
///
/// A coarse grid over `[x_lo, x_hi]` locates the peak, then golden-section
/// search refines it to `tolerance` in `x`.
pub fn mle_estimate(
    counts: &PhotonCounts,
    model: &DynamicsModel,
    known: &SourceGeometry,
    estimator: &EstimatorConfig,
    q: &QuadratureSpec,
) -> Result<MleResult> {
    estimator.validate()?;
    let ll = LogLikelihood::new(counts, model, known, estimator.likelihood, q)?;
    // positions must keep both sources on their own side of the axis
    let lo = estimator.x_lo.max(known.xi.abs());
    let hi = estimator.x_hi;
    if lo >= hi {
        return Err(SpadeError::invalid(
            "estimator",
            "search interval is empty after the axis offset",
        ));
    }
    let w = known.w;
    if counts.only_ground_mode() {
        return Ok(MleResult {
            x_hat: lo,
            d_hat: 2.0 * w * lo,
            log_likelihood: ll.at(lo),
            flags: vec![
                EstimateFlag::DegenerateLikelihood,
                EstimateFlag::AtLowerBound,
            ],
        });
    }
    let n = estimator.grid_points;
    let step = (hi - lo) / (n - 1) as f64;
    let (best, _) = (0..n).map(|i| (i, ll.at(lo + i as f64 * step))).fold(
        (0, f64::NEG_INFINITY),
        |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
    );
    let a = lo + best.saturating_sub(1) as f64 * step;
    let b = lo + (best + 1).min(n - 1) as f64 * step;
    let x_hat = golden_section_max(|x| ll.at(x), a, b, estimator.tolerance).clamp(lo, hi);
    let mut flags = Vec::new();
    if x_hat - lo < 2.0 * estimator.tolerance {
        flags.push(EstimateFlag::AtLowerBound);
    }
    if hi - x_hat < 2.0 * estimator.tolerance {
        flags.push(EstimateFlag::AtUpperBound);
    }
    let log_likelihood = ll.at(x_hat);
    if !log_likelihood.is_finite() {
        return Err(SpadeError::NumericalHealth(format!(
            "log-likelihood is not finite at the estimate x = {x_hat}"
        )));
    }
    Ok(MleResult {
        x_hat,
        d_hat: 2.0 * w * x_hat,
        log_likelihood,
        flags,
    })
}

/// Photon numbers below this are always treated as outside the asymptotic
/// regime.
pub const SMALL_SAMPLE_PHOTONS: u64 = 1000;

/// Summary of a repeated estimation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub scenario: String,
    pub photons: u64,
    pub runs: usize,
    pub seed: u64,
    pub modes: usize,
    pub likelihood: Likelihood,
    pub d_true: f64,
    pub d_hat: Vec<f64>,
    pub d_hat_mean: f64,
    pub d_hat_std: f64,
    pub bias: f64,
    /// Bound from the information of the categories the likelihood uses.
    pub crb: f64,
    /// Bound from the resolved modes alone.
    pub crb_truncated: f64,
    /// `(crb / d_hat_std)²`.
    pub efficiency: f64,
    pub flags: Vec<String>,
}

impl EstimateReport {
    pub fn std_over_crb(&self) -> f64 {
        self.d_hat_std / self.crb
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// CRB for `cfg` using the category structure of its likelihood, and the
/// resolved-modes-only bound.
pub fn experiment_crb(cfg: &ExperimentConfig) -> Result<(f64, f64)> {
    let opts = FisherOptions {
        quadrature: cfg.quadrature,
        ..Default::default()
    };
    let f = fisher_information(&cfg.model, &cfg.geometry, cfg.cutoff, &opts)?;
    let matched = match cfg.estimator.likelihood {
        Likelihood::WithOverflow => f.total_with_overflow(),
        Likelihood::DetectedOnly => f.total,
    };
    Ok((
        crb_from_total(matched, cfg.photons)?,
        crb_from_total(f.total, cfg.photons)?,
    ))
}

/// Run `runs` independent simulate-and-estimate cycles in parallel.
pub fn crb_consistency(cfg: &ExperimentConfig) -> Result<EstimateReport> {
    crb_consistency_with(cfg, &cfg.model)
}

/// As [`crb_consistency`], with counts drawn from `cfg.model` but
/// estimated under `estimation_model`.
pub fn crb_consistency_with(
    cfg: &ExperimentConfig,
    estimation_model: &DynamicsModel,
) -> Result<EstimateReport> {
    cfg.validate()?;
    estimation_model.validate()?;
    let (crb, crb_truncated) = experiment_crb(cfg)?;
    let results: Vec<MleResult> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = run_rng(cfg.seed, run as u64);
            let counts =
                sample_counts_with(&cfg.model, &cfg.geometry, cfg.cutoff, cfg.photons, &mut rng);
            mle_estimate(
                &counts,
                estimation_model,
                &cfg.geometry,
                &cfg.estimator,
                &cfg.quadrature,
            )
        })
        .collect::<Result<_>>()?;
    let d_hat: Vec<f64> = results.iter().map(|r| r.d_hat).collect();
    let (mean, std) = mean_std(&d_hat);
    let d_true = cfg.geometry.d;

    let mut tally: BTreeMap<EstimateFlag, usize> = BTreeMap::new();
    for f in results.iter().flat_map(|r| &r.flags) {
        *tally.entry(*f).or_default() += 1;
    }
    let mut flags: Vec<String> = tally
        .iter()
        .map(|(f, n)| {
            format!(
                "{}:{n}",
                serde_json::to_value(f)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default()
            )
        })
        .collect();
    if cfg.photons < SMALL_SAMPLE_PHOTONS || crb > 0.1 * d_true {
        flags.push("small-sample".into());
    }
    if cfg.runs < 100 {
        flags.push("few-runs".into());
    }
    Ok(EstimateReport {
        scenario: cfg.model.name().to_string(),
        photons: cfg.photons,
        runs: cfg.runs,
        seed: cfg.seed,
        modes: cfg.cutoff.max,
        likelihood: cfg.estimator.likelihood,
        d_true,
        d_hat,
        d_hat_mean: mean,
        d_hat_std: std,
        bias: mean - d_true,
        crb,
        crb_truncated,
        efficiency: if std > 0.0 {
            (crb / std).powi(2)
        } else {
            f64::INFINITY
        },
        flags,
    })
}

/// Model for an image rotated at constant rate during the measurement:
/// the orientation angle drops out of the parameter set.
pub fn rotating_basis_reduction(static_geometry: &SourceGeometry) -> DynamicsModel {
    DynamicsModel::phi_rotation(static_geometry.theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::averaged_mode_probabilities;
    use crate::estimation::fisher_information;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn q() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn zero_separation_fills_ground_mode() {
        let cfg = ExperimentConfig {
            cutoff: Cutoff::per_index(1),
            ..ExperimentConfig::new(
                DynamicsModel::phi_rotation(FRAC_PI_2),
                SourceGeometry::new(0.0, 1.0),
                1000,
                1,
                3,
            )
        };
        let c = sample_counts(&cfg).unwrap();
        assert_eq!(c.get(0, 0), 1000);
        assert_eq!(c.total(), 1000);
        assert_eq!(c.overflow_count, 0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let cfg = ExperimentConfig::new(
            DynamicsModel::UniformSphere,
            SourceGeometry::from_x(0.6, 1.0),
            5000,
            1,
            77,
        );
        assert_eq!(sample_counts(&cfg).unwrap(), sample_counts(&cfg).unwrap());
        let other = ExperimentConfig {
            seed: 78,
            ..cfg.clone()
        };
        assert_ne!(sample_counts(&cfg).unwrap(), sample_counts(&other).unwrap());
    }

    #[test]
    fn rotation_frequencies_match_averaged_probabilities() {
        let g = SourceGeometry::from_x(0.5, 1.0);
        let model = DynamicsModel::phi_rotation(FRAC_PI_2);
        let cfg = ExperimentConfig {
            cutoff: Cutoff::per_index(1),
            ..ExperimentConfig::new(model.clone(), g, 100_000, 1, 11)
        };
        let c = sample_counts(&cfg).unwrap();
        let p = averaged_mode_probabilities(&model, &g, Cutoff::per_index(1), &q()).unwrap();
        let n = 1e5;
        for (a, b) in [(1, 0), (0, 1)] {
            let pr = p.get(a, b);
            assert!((pr - 0.097_350_1).abs() < 1e-7);
            let sigma = (pr * (1.0 - pr) / n).sqrt();
            assert!((c.get(a, b) as f64 / n - pr).abs() < 5.0 * sigma);
        }
    }

    #[test]
    fn counts_roundtrip_through_json() {
        let cfg = ExperimentConfig::new(
            DynamicsModel::static_at(0.3, 1.0),
            SourceGeometry::from_x(0.9, 1.0),
            2000,
            1,
            5,
        );
        let c = sample_counts(&cfg).unwrap();
        let s = serde_json::to_string(&c).unwrap();
        let back: PhotonCounts = serde_json::from_str(&s).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn ground_mode_only_is_degenerate() {
        let mut c = PhotonCounts::empty(Cutoff::per_index(2));
        c.counts.insert(ModeIndex::new(0, 0), 500);
        let r = mle_estimate(
            &c,
            &DynamicsModel::phi_rotation(FRAC_PI_2),
            &SourceGeometry::from_x(0.2, 1.0),
            &EstimatorConfig::default(),
            &q(),
        )
        .unwrap();
        assert_eq!(r.x_hat, 0.0);
        assert!(r.flags.contains(&EstimateFlag::DegenerateLikelihood));
    }

    #[test]
    fn estimate_lands_near_truth() {
        let g = SourceGeometry::from_x(0.2, 1.0);
        let model = DynamicsModel::phi_rotation(FRAC_PI_2);
        let cfg = ExperimentConfig::new(model.clone(), g, 100_000, 1, 21);
        let c = sample_counts(&cfg).unwrap();
        let r = mle_estimate(&c, &model, &g, &EstimatorConfig::default(), &q()).unwrap();
        let (crb, _) = experiment_crb(&cfg).unwrap();
        assert!(
            (r.d_hat - 0.4).abs() < 3.0 * crb,
            "{} vs 0.4 (crb {crb})",
            r.d_hat
        );
        assert!(r.flags.is_empty());
    }

    #[test]
    fn true_value_beats_perturbed_value() {
        let g = SourceGeometry::from_x(0.2, 1.0);
        let model = DynamicsModel::phi_rotation(FRAC_PI_2);
        let mut wins = 0;
        for seed in 0..100 {
            let mut rng = run_rng(seed, 0);
            let c = sample_counts_with(&model, &g, Cutoff::default(), 100_000, &mut rng);
            let ll = LogLikelihood::new(&c, &model, &g, Likelihood::WithOverflow, &q()).unwrap();
            if ll.at(0.2) > ll.at(0.25) {
                wins += 1;
            }
        }
        assert!(wins >= 99);
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let x = golden_section_max(|x| -(x - 0.37f64).powi(2), 0.0, 1.0, 1e-9);
        assert!((x - 0.37).abs() < 1e-8);
    }

    #[test]
    fn detected_only_information_is_the_truncated_sum() {
        let g = SourceGeometry::from_x(0.2, 1.0);
        let cfg = ExperimentConfig {
            cutoff: Cutoff::per_index(1),
            estimator: EstimatorConfig {
                likelihood: Likelihood::DetectedOnly,
                ..Default::default()
            },
            ..ExperimentConfig::new(DynamicsModel::phi_rotation(FRAC_PI_2), g, 100_000, 1, 0)
        };
        let (crb, truncated) = experiment_crb(&cfg).unwrap();
        assert_eq!(crb, truncated);
        let f = fisher_information(&cfg.model, &g, cfg.cutoff, &FisherOptions::default()).unwrap();
        assert!(f.total_with_overflow() > f.total);
    }

    #[test]
    fn small_sample_is_flagged() {
        let cfg = ExperimentConfig::new(
            DynamicsModel::static_at(FRAC_PI_4, FRAC_PI_2),
            SourceGeometry::from_x(0.2, 1.0),
            100,
            100,
            9,
        );
        let r = crb_consistency(&cfg).unwrap();
        assert!(r.flags.iter().any(|f| f == "small-sample"));
        assert_eq!(r.d_hat.len(), 100);
    }

    #[test]
    fn reports_are_reproducible() {
        let cfg = ExperimentConfig::new(
            DynamicsModel::phi_rotation(1.2),
            SourceGeometry::from_x(0.3, 1.0),
            2000,
            8,
            4,
        );
        let a = serde_json::to_string(&crb_consistency(&cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&crb_consistency(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reduction_erases_orientation() {
        let a = SourceGeometry::from_x(0.5, 1.0).with_angles(0.3, FRAC_PI_2);
        let b = a.with_angles(1.9, FRAC_PI_2);
        let (ma, mb) = (rotating_basis_reduction(&a), rotating_basis_reduction(&b));
        assert_eq!(format!("{ma:?}"), format!("{mb:?}"));
        let f =
            fisher_information(&ma, &a, Cutoff::per_index(1), &FisherOptions::default()).unwrap();
        assert!((f.scaled_total() - 0.70731).abs() < 1e-5);
    }
}
