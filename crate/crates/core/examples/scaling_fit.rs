//! Power-law fits in log-log space, with and without moving-window smoothing.

use cavfeed::scaling::{power_law_fit, time_average_smoothing};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> cavfeed::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let points: Vec<(f64, f64)> = (1..=200)
        .map(|i| {
            let t = i as f64 * 0.01;
            let noise = 1.0 + 0.3 * (rng.random::<f64>() - 0.5);
            (t, 0.8 * t.powf(-0.5) * noise)
        })
        .collect();
    let raw = power_law_fit(&points, Some((0.2, 2.0)))?;
    let smooth = power_law_fit(&time_average_smoothing(&points, 0.1)?, Some((0.2, 2.0)))?;
    println!("raw:      exponent {:.4}  A = {:.4}  r^2 = {:.4}", raw.exponent, raw.log_prefactor.exp(), raw.r_squared);
    println!("smoothed: exponent {:.4}  A = {:.4}  r^2 = {:.4}", smooth.exponent, smooth.log_prefactor.exp(), smooth.r_squared);
    Ok(())
}
