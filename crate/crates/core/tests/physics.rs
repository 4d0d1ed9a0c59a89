use std::f64::consts::PI;

use cavfeed::ensemble::{run_ensemble, EnsembleSpec};
use cavfeed::estimators::{
    conditional_ensemble, g2_curve, g2_values, unconditional_spec, BootstrapOptions, IntensityEstimator,
};
use cavfeed::trajectory::{measurement_stage, SimConfig, Stepping};
use cavfeed::validation::compare_with_oracle;
use cavfeed::{CavityParams, Complex64};
use proptest::prelude::*;

fn no_feedback(alpha_sq: f64, phi: f64, eta: f64) -> CavityParams {
    CavityParams::from_photon_number(alpha_sq, phi, eta)
        .unwrap()
        .with_beta(Complex64::new(0.0, 0.0))
}

#[test]
fn fixed_and_event_stepping_agree_without_feedback() {
    let prepared = no_feedback(4.0, 0.3 * PI, 0.5);
    let (params, initial) = measurement_stage(&prepared).unwrap();
    let counts = |stepping: Stepping, dt: f64| {
        let spec = EnsembleSpec {
            params,
            initial,
            config: SimConfig {
                dt,
                t_max: 5.0,
                n_traj: 20_000,
                master_seed: 21,
                stepping,
                sample_stride: 0.5,
                ..SimConfig::default()
            },
            bin_width: 0.5,
            conditional: false,
        };
        run_ensemble(&spec, 2).unwrap().moments()
    };
    let fixed = counts(Stepping::FixedStep, 1e-3);
    let event = counts(Stepping::EventDriven, 0.5);
    for b in 0..fixed.n_bins() {
        let mean = |m: &cavfeed::ensemble::Moments| m.emitted[b] / m.n_traj;
        let var = |m: &cavfeed::ensemble::Moments| (m.emitted_sq[b] / m.n_traj - mean(m).powi(2)) / m.n_traj;
        let se = (var(&fixed) + var(&event)).sqrt();
        let diff = (mean(&fixed) - mean(&event)).abs();
        assert!(diff <= 3.0 * se.max(1e-12), "bin {b}: {} vs {} (se {se})", mean(&fixed), mean(&event));
    }
}

#[test]
fn free_decay_counts_match_analytic_mean() {
    let prepared = no_feedback(4.0, 0.0, 1.0);
    let (params, initial) = measurement_stage(&prepared).unwrap();
    let spec = EnsembleSpec {
        params,
        initial,
        config: SimConfig {
            t_max: 5.0,
            n_traj: 20_000,
            master_seed: 5,
            stepping: Stepping::EventDriven,
            dt: 0.5,
            sample_stride: 0.5,
            ..SimConfig::default()
        },
        bin_width: 0.5,
        conditional: false,
    };
    let m = run_ensemble(&spec, 1).unwrap().moments();
    for b in 0..m.n_bins() {
        let t0 = b as f64 * 0.5;
        let expected = 4.0 * ((-t0).exp() - (-(t0 + 0.5)).exp());
        let mean = m.emitted[b] / m.n_traj;
        // Poisson counts: variance equals the mean.
        let se = (expected / m.n_traj).sqrt();
        assert!((mean - expected).abs() < 4.0 * se, "bin {b}: {mean} vs {expected}");
    }
}

#[test]
fn oracle_agrees_at_phi_pi() {
    let params = CavityParams::from_photon_number(1.0, PI, 0.5).unwrap();
    let config = SimConfig {
        n_traj: 30_000,
        master_seed: 9,
        sample_stride: 0.1,
        ..SimConfig::default()
    };
    for row in compare_with_oracle(&params, &[0.1, 0.5, 1.0], &config, 64, 1e-3, 2).unwrap() {
        assert!(row.agrees(3.5), "{row:?}");
    }
}

#[test]
fn oracle_reports_runaway_as_leakage() {
    let params = CavityParams::from_photon_number(4.0, 0.0, 1.0).unwrap();
    let config = SimConfig {
        n_traj: 100,
        sample_stride: 0.1,
        ..SimConfig::default()
    };
    let err = compare_with_oracle(&params, &[0.5], &config, 64, 1e-3, 1).unwrap_err();
    assert!(matches!(err, cavfeed::Error::TruncationLeakage { .. }), "{err}");
}

#[test]
fn without_feedback_conditioning_changes_nothing() {
    // beta = 0: the conditional ensemble starts from the same state and uses the
    // same random streams, so both ensembles coincide trajectory by trajectory.
    let prepared = no_feedback(4.0, 0.3 * PI, 0.5);
    let config = SimConfig {
        t_max: 1.0,
        n_traj: 5_000,
        master_seed: 13,
        ..SimConfig::default()
    };
    let uncond = run_ensemble(&unconditional_spec(&prepared, &config, 0.1).unwrap(), 2).unwrap();
    let cond = conditional_ensemble(&prepared, &config, 0.1, 2).unwrap();
    assert_eq!(uncond.total.detected_counts, cond.total.detected_counts);
    let rows = g2_curve(&cond, &uncond, IntensityEstimator::Detected, &BootstrapOptions::default()).unwrap();
    for r in rows {
        assert_eq!(r.g2, Some(1.0));
    }
}

#[test]
fn g2_without_feedback_does_not_depend_on_efficiency() {
    // Independent seeds for the two ensembles give a statistical test rather
    // than the identity above.
    for eta in [0.3, 1.0] {
        let prepared = no_feedback(4.0, 0.3 * PI, eta);
        let base = SimConfig {
            t_max: 1.0,
            n_traj: 20_000,
            ..SimConfig::default()
        };
        let uncond = run_ensemble(
            &unconditional_spec(&prepared, &SimConfig { master_seed: 1, ..base.clone() }, 0.25).unwrap(),
            2,
        )
        .unwrap();
        let cond = conditional_ensemble(&prepared, &SimConfig { master_seed: 2, ..base }, 0.25, 2).unwrap();
        let rows = g2_curve(&cond, &uncond, IntensityEstimator::Detected, &BootstrapOptions::default()).unwrap();
        for r in rows {
            let (g, se) = (r.g2.unwrap(), r.stderr.unwrap());
            assert!((g - 1.0).abs() < 4.0 * se, "eta {eta}, T {}: {g} +- {se}", r.t);
        }
    }
}

#[test]
fn g2_at_pi_vanishes_for_any_efficiency() {
    for eta in [0.2, 0.5, 1.0] {
        let prepared = CavityParams::from_photon_number(4.0, PI, eta).unwrap();
        let config = SimConfig {
            t_max: 1.0,
            n_traj: 5_000,
            master_seed: 3,
            ..SimConfig::default()
        };
        let uncond = run_ensemble(&unconditional_spec(&prepared, &config, 0.05).unwrap(), 1).unwrap();
        let cond = conditional_ensemble(&prepared, &config, 0.05, 1).unwrap();
        assert!(cond.total.emitted_counts.iter().all(|&c| c == 0));
        let g2 = g2_values(&cond.moments(), &uncond.moments(), IntensityEstimator::Emitted, 1.0);
        assert!(g2.iter().all(|g| *g == Some(0.0) || g.is_none()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn ensembles_are_worker_independent(seed in 0u64..1000, n_traj in 1u64..600, workers in 2usize..5) {
        let prepared = CavityParams::from_photon_number(2.0, 0.7 * PI, 0.5).unwrap();
        let config = SimConfig { t_max: 0.2, n_traj, master_seed: seed, ..SimConfig::default() };
        let spec = unconditional_spec(&prepared, &config, 0.02).unwrap();
        let one = run_ensemble(&spec, 1).unwrap();
        let many = run_ensemble(&spec, workers).unwrap();
        prop_assert_eq!(one.total, many.total);
    }
}
