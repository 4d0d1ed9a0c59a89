//! Power-law fits `dphi = A * resource^b` by least squares in log-log space.

use crate::error::{Error, Result};

/// Default start of the fitted time range; earlier points are dominated by
/// the initial transient.
pub const DEFAULT_FIT_START: f64 = 0.2;

/// `r^2` below which a fit is reported as a poor description of the data.
pub const POOR_FIT_R_SQUARED: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub exponent: f64,
    /// Natural log of the prefactor `A`.
    pub log_prefactor: f64,
    pub r_squared: f64,
    pub n_points: usize,
    pub resource_range: (f64, f64),
}

impl PowerLawFit {
    pub fn predict(&self, resource: f64) -> f64 {
        (self.log_prefactor + self.exponent * resource.ln()).exp()
    }

    pub fn is_poor(&self) -> bool {
        self.r_squared < POOR_FIT_R_SQUARED
    }

    /// A warning for fits that do not look like a single power law.
    pub fn warning(&self) -> Option<String> {
        self.is_poor().then(|| {
            format!(
                "r^2 = {:.3} over [{}, {}]: the data is not a clean power law",
                self.r_squared, self.resource_range.0, self.resource_range.1
            )
        })
    }
}

/// Fits the points whose resource lies in `range` (inclusive), or all of them.
pub fn power_law_fit(points: &[(f64, f64)], range: Option<(f64, f64)>) -> Result<PowerLawFit> {
    let selected: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|&(x, _)| range.is_none_or(|(lo, hi)| x >= lo && x <= hi))
        .collect();
    if selected.len() < 3 {
        return Err(Error::TooFewPoints(selected.len()));
    }
    for &(x, y) in &selected {
        if !(x > 0.0) || !x.is_finite() {
            return Err(Error::NonPositive { resource: x, value: y });
        }
        if !(y > 0.0) || !y.is_finite() {
            return Err(Error::NonPositive { resource: x, value: y });
        }
    }
    let n = selected.len() as f64;
    let lx: Vec<f64> = selected.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = selected.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my) * (y - my)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Validation("all resources are equal; no slope to fit".into()));
    }
    let exponent = sxy / sxx;
    let log_prefactor = my - exponent * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    let (lo, hi) = selected
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    Ok(PowerLawFit {
        exponent,
        log_prefactor,
        r_squared,
        n_points: selected.len(),
        resource_range: (lo, hi),
    })
}

/// Replaces each value by the mean over the points within `window / 2` of it
/// on the resource axis.
pub fn time_average_smoothing(points: &[(f64, f64)], window: f64) -> Result<Vec<(f64, f64)>> {
    if !(window > 0.0) || !window.is_finite() {
        return Err(Error::invalid("window", format!("must be > 0, got {window}")));
    }
    let half = 0.5 * window;
    Ok(points
        .iter()
        .map(|&(x, _)| {
            let (sum, count) = points
                .iter()
                .filter(|p| (p.0 - x).abs() <= half * (1.0 + 1e-12))
                .fold((0.0, 0usize), |(s, c), p| (s + p.1, c + 1));
            (x, sum / count as f64)
        })
        .collect())
}
