//! Trajectory-ensemble `<|alpha|^2>` against the Fock-basis master equation
//! with feedback. Configurations whose photon number runs away report the
//! truncation leakage instead of a comparison.
//!
//! Usage: `cargo run --release --example oracle_validate [TRAJECTORIES]`

use std::f64::consts::PI;

use cavfeed::trajectory::SimConfig;
use cavfeed::validation::compare_with_oracle;
use cavfeed::CavityParams;

fn main() -> cavfeed::Result<()> {
    let n_traj = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let config = SimConfig {
        n_traj,
        master_seed: 8,
        sample_stride: 0.1,
        ..SimConfig::default()
    };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    for (alpha_sq, phi, eta) in [(1.0, PI, 0.5), (1.0, PI, 1.0), (1.0, 0.0, 1.0)] {
        let params = CavityParams::from_photon_number(alpha_sq, phi, eta)?;
        println!("|alpha_ss|^2 = {alpha_sq}, phi = {:.1} pi, eta = {eta}", phi / PI);
        match compare_with_oracle(&params, &[0.1, 0.5, 1.0], &config, 64, 1e-3, workers) {
            Ok(rows) => {
                for r in rows {
                    println!(
                        "  t = {:.1}  trajectories {:.4} +- {:.4}  oracle {:.4}  ({:.1} SE)",
                        r.t,
                        r.trajectory_mean,
                        r.trajectory_se,
                        r.oracle_mean,
                        r.z()
                    );
                }
            }
            Err(e) => println!("  {e}"),
        }
    }
    Ok(())
}
