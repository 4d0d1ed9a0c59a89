//! Photon emission rate during the measurement stage, from emitted counts,
//! detected counts and the mean of `kappa |alpha|^2`.
//!
//! Usage: `cargo run --release --example intensity [TRAJECTORIES]`

use std::f64::consts::PI;

use cavfeed::ensemble::run_ensemble;
use cavfeed::estimators::{intensity_curve, unconditional_spec};
use cavfeed::trajectory::SimConfig;
use cavfeed::CavityParams;

fn main() -> cavfeed::Result<()> {
    let n_traj = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50_000);
    let prepared = CavityParams::from_photon_number(4.0, 0.3 * PI, 0.5)?;
    let config = SimConfig {
        t_max: 2.0,
        n_traj,
        master_seed: 1,
        ..SimConfig::default()
    };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let ensemble = run_ensemble(&unconditional_spec(&prepared, &config, 0.1)?, workers)?;
    println!("{:>5} {:>10} {:>10} {:>10} {:>9}", "T", "detected", "emitted", "analytic", "stderr");
    for row in intensity_curve(&ensemble.total, &prepared)? {
        println!(
            "{:>5.2} {:>10.4} {:>10.4} {:>10.4} {:>9.4}",
            row.t, row.i_detected, row.i_emitted, row.i_analytic, row.stderr
        );
    }
    Ok(())
}
