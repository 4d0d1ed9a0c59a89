//! Cross-validation of the trajectory ensemble against the Fock-basis master
//! equation.

use crate::ensemble::{run_ensemble, EnsembleSpec};
use crate::error::{Error, Result};
use crate::fock::{coherent_state, mean_photon_curve, DEFAULT_LEAKAGE_THRESHOLD};
use crate::params::CavityParams;
use crate::trajectory::{steady_state_alpha, SimConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleRow {
    pub t: f64,
    pub trajectory_mean: f64,
    pub trajectory_se: f64,
    pub oracle_mean: f64,
}

impl OracleRow {
    /// Discrepancy in standard errors.
    pub fn z(&self) -> f64 {
        let d = (self.trajectory_mean - self.oracle_mean).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.trajectory_se
        }
    }

    pub fn agrees(&self, tolerance_se: f64) -> bool {
        self.z() <= tolerance_se
    }
}

/// Mean `|alpha|^2` of driven trajectories started from the no-feedback
/// steady state, next to `<c^dag c>` from the master equation with feedback.
/// `times` must lie on the `sample_stride` grid of `config`.
pub fn compare_with_oracle(
    params: &CavityParams,
    times: &[f64],
    config: &SimConfig,
    dim: usize,
    oracle_dt: f64,
    workers: usize,
) -> Result<Vec<OracleRow>> {
    if times.is_empty() {
        return Err(Error::invalid("times", "need at least one comparison time"));
    }
    let stride = config.sample_stride;
    let mut bins = Vec::with_capacity(times.len());
    for &t in times {
        let j = (t / stride).round();
        if !(t >= 0.0) || (j * stride - t).abs() > 1e-9 * stride.max(t) {
            return Err(Error::invalid(
                "times",
                format!("{t} is not on the sample grid of spacing {stride}"),
            ));
        }
        bins.push(j as usize);
    }
    let last = *bins.iter().max().unwrap_or(&0);
    let initial = steady_state_alpha(params)?;
    let spec = EnsembleSpec {
        params: *params,
        initial,
        config: SimConfig {
            t_max: (last + 1) as f64 * stride,
            ..config.clone()
        },
        bin_width: stride,
        conditional: false,
    };
    let ensemble = run_ensemble(&spec, workers)?;
    let m = ensemble.moments();

    let rho0 = coherent_state(initial.value(), dim)?;
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| times[i]).collect();
    let curve = mean_photon_curve(&rho0, params, &sorted, oracle_dt, true, DEFAULT_LEAKAGE_THRESHOLD)?;
    let mut oracle = vec![0.0; times.len()];
    for (k, &i) in order.iter().enumerate() {
        oracle[i] = curve[k];
    }

    let n = m.n_traj;
    Ok(times
        .iter()
        .zip(&bins)
        .zip(&oracle)
        .map(|((&t, &b), &oracle_mean)| {
            let mean = m.sum_alpha_sq[b] / n;
            let var = (m.sum_alpha_quad[b] / n - mean * mean).max(0.0) * n / (n - 1.0).max(1.0);
            OracleRow {
                t,
                trajectory_mean: mean,
                trajectory_se: (var / n).sqrt(),
                oracle_mean,
            }
        })
        .collect())
}
