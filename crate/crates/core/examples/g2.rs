//! Second-order correlation `g2(T, 0)` after a detection. At `phi = pi` with
//! `beta = |alpha_ss|` the detection empties the cavity, so no second photon
//! can follow in the same bin.
//!
//! Usage: `cargo run --release --example g2 [TRAJECTORIES]`

use std::f64::consts::PI;

use cavfeed::ensemble::run_ensemble;
use cavfeed::estimators::{conditional_ensemble, g2_curve, unconditional_spec, BootstrapOptions, IntensityEstimator};
use cavfeed::trajectory::SimConfig;
use cavfeed::CavityParams;

fn main() -> cavfeed::Result<()> {
    let n_traj = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50_000);
    let config = SimConfig {
        t_max: 2.0,
        n_traj,
        master_seed: 4,
        ..SimConfig::default()
    };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    for phi in [PI, 0.5 * PI] {
        let prepared = CavityParams::from_photon_number(4.0, phi, 0.5)?;
        let uncond = run_ensemble(&unconditional_spec(&prepared, &config, 0.25)?, workers)?;
        let cond = conditional_ensemble(&prepared, &config, 0.25, workers)?;
        let rows = g2_curve(&cond, &uncond, IntensityEstimator::Detected, &BootstrapOptions::default())?;
        println!("phi = {:.1} pi", phi / PI);
        for r in rows {
            match (r.g2, r.stderr) {
                (Some(g), Some(se)) => println!("  T = {:.2}  g2 = {g:.4} +- {se:.4}", r.t),
                _ => println!("  T = {:.2}  g2 undefined", r.t),
            }
        }
    }
    Ok(())
}
