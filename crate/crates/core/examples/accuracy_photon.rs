//! Window-averaged phase accuracy of the `g2` signal at `phi = pi` versus the
//! stationary photon number.
//!
//! Usage: `cargo run --release --example accuracy_photon [TRAJECTORIES]`

use std::f64::consts::PI;

use cavfeed::config::auto_stencil;
use cavfeed::estimators::{accuracy_photon_scan, AccuracySetup, IntensityEstimator, Signal};
use cavfeed::scaling::power_law_fit;
use cavfeed::trajectory::SimConfig;
use cavfeed::CavityParams;

fn main() -> cavfeed::Result<()> {
    let n_traj = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let prepared = CavityParams::from_photon_number(4.0, PI, 0.5)?;
    let config = SimConfig {
        t_max: 1.0,
        n_traj,
        master_seed: 6,
        ..SimConfig::default()
    };
    let mut setup = AccuracySetup::new(prepared, Signal::G2(IntensityEstimator::Detected), config);
    setup.stencil = auto_stencil(&prepared);
    setup.bin_width = 0.05;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let photons = [1.0, 2.0, 4.0, 6.0, 9.0];
    let points = accuracy_photon_scan(&setup, &photons, 0.2, 1.0, workers)?;
    for p in &points {
        let d = p.delta_phi.map_or("below noise floor".to_string(), |d| format!("{d:.4}"));
        println!("|alpha_ss|^2 = {:.0}  dphi = {d}", p.resource);
    }
    let pairs: Vec<(f64, f64)> = points.iter().filter_map(|p| Some((p.resource, p.delta_phi?))).collect();
    match power_law_fit(&pairs, None) {
        Ok(fit) => println!("\ndphi ~ n^{:.3}  (r^2 = {:.3})", fit.exponent, fit.r_squared),
        Err(e) => println!("\nno fit: {e}"),
    }
    Ok(())
}
