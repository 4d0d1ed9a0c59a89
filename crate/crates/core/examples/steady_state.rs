//! Stationary amplitude of a driven cavity without feedback, and the measurement
//! stage that starts from it.

use std::f64::consts::PI;

use cavfeed::trajectory::{measurement_stage, steady_state_alpha};
use cavfeed::CavityParams;

fn main() -> cavfeed::Result<()> {
    for phi in [0.0, 0.3 * PI, 0.5 * PI, PI] {
        let prepared = CavityParams::from_photon_number(4.0, phi, 0.5)?;
        let alpha = steady_state_alpha(&prepared)?;
        let (measure, start) = measurement_stage(&prepared)?;
        println!(
            "phi = {:.2} pi  alpha_ss = {:+.4}{:+.4}i  |alpha_ss|^2 = {:.4}  measurement drive = {}  start = {:.4}",
            phi / PI,
            alpha.re(),
            alpha.im(),
            alpha.photons(),
            measure.omega,
            start.value()
        );
    }
    Ok(())
}
