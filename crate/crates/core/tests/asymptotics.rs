use spade_core::estimation::{asymptotic_fi, AsymptoticScenario};
use spade_core::{fisher_information, Cutoff, DynamicsModel, FisherOptions, SourceGeometry};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_8};

fn numeric(model: &DynamicsModel, x: f64, max: usize) -> f64 {
    let g = SourceGeometry::from_x(x, 1.0);
    fisher_information(model, &g, Cutoff::per_index(max), &FisherOptions::default())
        .unwrap()
        .scaled_total()
}

fn closed(s: AsymptoticScenario, x: f64) -> f64 {
    asymptotic_fi(s, x).unwrap().value
}

fn cases() -> Vec<(DynamicsModel, AsymptoticScenario)> {
    let mut v = vec![
        (
            DynamicsModel::UniformSphere,
            AsymptoticScenario::UniformSphere,
        ),
        (
            DynamicsModel::proportional_oscillation(0.25),
            AsymptoticScenario::ProportionalOscillation { a1: 0.25 },
        ),
        (
            DynamicsModel::proportional_oscillation(0.6),
            AsymptoticScenario::ProportionalOscillation { a1: 0.6 },
        ),
    ];
    for phi in [0.0, 0.3, FRAC_PI_8] {
        v.push((
            DynamicsModel::theta_rotation(phi),
            AsymptoticScenario::ThetaRotation { phi },
        ));
    }
    v
}

#[test]
fn leading_terms_hold_for_any_cutoff() {
    let x = 1e-3;
    for (model, scenario) in cases() {
        for max in [1, 3, 5] {
            let f = numeric(&model, x, max);
            let a = closed(scenario, x);
            assert!(
                ((f - a) / a).abs() < 1e-4,
                "{scenario:?} M={max}: {f} vs {a}"
            );
        }
    }
}

#[test]
fn quadratic_terms_match_single_order_cutoff() {
    for (model, scenario) in cases() {
        for x in [0.02, 0.05] {
            let f = numeric(&model, x, 1);
            let a = closed(scenario, x);
            assert!(((f - a) / a).abs() < 1e-4, "{scenario:?} x={x}: {f} vs {a}");
        }
    }
}

#[test]
fn scaled_amplitude_is_substituted_after_differentiation() {
    let a1 = 0.25;
    for x in [1e-3, 0.02, 0.05] {
        let model = DynamicsModel::fixed_amplitude_oscillation(a1 * x);
        let f = numeric(&model, x, 1);
        let a = closed(AsymptoticScenario::ScaledAmplitudeOscillation { a1 }, x);
        assert!(((f - a) / a).abs() < 1e-4, "x={x}: {f} vs {a}");
    }
    let limit = closed(AsymptoticScenario::ScaledAmplitudeOscillation { a1 }, 0.0);
    assert!((limit - 2.0 / (2.0 + a1 * a1)).abs() < 1e-15);
}

#[test]
fn proportional_amplitude_beats_static_limit() {
    let f = numeric(&DynamicsModel::proportional_oscillation(0.25), 1e-3, 5);
    assert!(f > 1.0);
    assert!(
        (closed(
            AsymptoticScenario::ProportionalOscillation { a1: 0.25 },
            0.0
        ) - 1.03125)
            .abs()
            < 1e-15
    );
}

#[test]
fn fixed_amplitude_branches() {
    for (a2, x) in [(0.01, 0.05), (0.01, 0.1), (0.02, 0.1)] {
        let f = numeric(&DynamicsModel::fixed_amplitude_oscillation(a2), x, 1);
        let a = closed(AsymptoticScenario::FixedAmplitudeOscillation { a2 }, x);
        assert!(((f - a) / a).abs() < 5e-3, "A2={a2} x={x}: {f} vs {a}");
    }
    for (a2, x) in [(0.1, 0.005), (0.2, 0.02), (0.2, 0.01)] {
        let f = numeric(&DynamicsModel::fixed_amplitude_oscillation(a2), x, 1);
        let a = closed(AsymptoticScenario::FixedAmplitudeOscillation { a2 }, x);
        assert!(((f - a) / a).abs() < 2e-2, "A2={a2} x={x}: {f} vs {a}");
    }
}

#[test]
fn fixed_amplitude_information_vanishes_as_sources_merge() {
    let model = DynamicsModel::fixed_amplitude_oscillation(0.1);
    let mut last = f64::INFINITY;
    for x in [0.05, 0.02, 0.01, 0.005, 0.001] {
        let f = numeric(&model, x, 3);
        assert!(f < last);
        last = f;
    }
    assert!(last < 1e-3);
}

#[test]
fn phi_rotation_exact_in_plane() {
    for x in [0.0, 0.3, 0.9, 2.0] {
        let f = numeric(&DynamicsModel::phi_rotation(FRAC_PI_2), x, 1);
        let a = closed(AsymptoticScenario::PhiRotation { theta: FRAC_PI_2 }, x);
        assert!((f - a).abs() < 1e-12);
    }
}
