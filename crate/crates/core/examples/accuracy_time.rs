//! Phase accuracy versus measurement time for the intensity signal, and its
//! power-law fit.
//!
//! Usage: `cargo run --release --example accuracy_time [TRAJECTORIES]`

use std::f64::consts::PI;

use cavfeed::estimators::{accuracy_time_curve, AccuracySetup, IntensityEstimator, Signal};
use cavfeed::scaling::{power_law_fit, DEFAULT_FIT_START};
use cavfeed::trajectory::SimConfig;
use cavfeed::CavityParams;

fn main() -> cavfeed::Result<()> {
    let n_traj = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(50_000);
    let prepared = CavityParams::from_photon_number(4.0, 0.3 * PI, 0.5)?;
    let config = SimConfig {
        t_max: 2.0,
        n_traj,
        master_seed: 5,
        ..SimConfig::default()
    };
    let mut setup = AccuracySetup::new(prepared, Signal::Intensity(IntensityEstimator::Emitted), config);
    setup.bin_width = 0.05;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let curve = accuracy_time_curve(&setup, workers)?;
    for p in curve.iter().step_by(4) {
        match p.delta_phi {
            Some(d) => println!("T = {:.2}  M = {:.4}  dM = {:.4}  dphi = {d:.4}", p.resource, p.signal, p.signal_std),
            None => println!("T = {:.2}  below noise floor", p.resource),
        }
    }
    let points: Vec<(f64, f64)> = curve.iter().filter_map(|p| Some((p.resource, p.delta_phi?))).collect();
    let fit = power_law_fit(&points, Some((DEFAULT_FIT_START, f64::INFINITY)))?;
    println!("\ndphi ~ T^{:.3}  (r^2 = {:.3})", fit.exponent, fit.r_squared);
    if let Some(w) = fit.warning() {
        println!("warning: {w}");
    }
    Ok(())
}
