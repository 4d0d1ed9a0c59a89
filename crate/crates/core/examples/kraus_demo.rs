//! Repeated two-outcome measurements of one qubit produce the same statistics
//! as a single-shot measurement of an entangled n-party state.

use cavfeed::kraus::{
    entangled_equivalent_state, expand_product_state, sequential_measurement_distribution, single_shot_distribution,
    KrausPair,
};
use cavfeed::Complex64;
use nalgebra::Vector2;

fn main() -> cavfeed::Result<()> {
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let psi = Vector2::new(h, h);
    for (name, pair) in [("swap", KrausPair::swap()), ("projective", KrausPair::projective())] {
        for n in [2, 3] {
            let sequential = sequential_measurement_distribution(&pair, &psi, n)?;
            let coeffs = entangled_equivalent_state(&pair, &psi, n)?;
            let shot = single_shot_distribution(&pair, &expand_product_state(&pair, &coeffs, n), n);
            println!("{name}, n = {n}");
            for (i, (label, p)) in sequential.iter().enumerate() {
                if p > 1e-15 {
                    println!("  {label}: sequential {p:.4}  single shot {:.4}  amplitude {:.4}", shot[i], coeffs[i]);
                }
            }
        }
    }
    Ok(())
}
