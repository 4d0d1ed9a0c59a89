//! Mean amplitude of cavities prepared on a half circle of phases, with and
//! without a detection forced at the start of the measurement stage.
//!
//! Usage: `cargo run --release --example phase_diagram [TRAJECTORIES]`

use std::f64::consts::PI;

use cavfeed::estimators::{max_pairwise_distance, phase_diagram_snapshot};
use cavfeed::trajectory::SimConfig;
use cavfeed::CavityParams;

fn main() -> cavfeed::Result<()> {
    let n_traj = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let template = CavityParams::from_photon_number(4.0, 0.0, 0.5)?;
    let phis: Vec<f64> = (0..=10).map(|i| (0.5 + 0.1 * i as f64) * PI).collect();
    let times = [0.0, 0.25, 0.5, 0.75, 1.0];
    let config = SimConfig {
        n_traj,
        master_seed: 2,
        sample_stride: 0.05,
        ..SimConfig::default()
    };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let free = phase_diagram_snapshot(&template, &phis, &times, false, &config, workers)?;
    let forced = phase_diagram_snapshot(&template, &phis, &times, true, &config, workers)?;

    println!("{:>6} {:>12} {:>12}", "t", "spread", "forced");
    for &t in &times {
        println!(
            "{t:>6.2} {:>12.4} {:>12.4}",
            max_pairwise_distance(&free, t),
            max_pairwise_distance(&forced, t)
        );
    }
    println!("\nphi/pi   <alpha>(t = 1)");
    for row in free.iter().filter(|r| r.t == 1.0) {
        println!("{:6.2}   {:+.4}{:+.4}i", row.phi / PI, row.mean_re_alpha, row.mean_im_alpha);
    }
    Ok(())
}
