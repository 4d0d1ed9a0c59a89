//! Observables computed from trajectory ensembles: intensity, conditional
//! intensity, the renormalised correlation `g2(T, 0)`, phase-space snapshots
//! and the error-propagation accuracy `dphi = dM / |dM/dphi|`.

use std::fmt;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ensemble::{run_ensemble, Ensemble, EnsembleAccumulator, EnsembleSpec, Moments};
use crate::error::{Error, Result};
use crate::params::{CavityParams, CoherentAmplitude};
use crate::trajectory::{apply_emission, measurement_stage, SimConfig};

/// Default finite-difference offset for the phase gradient.
pub const DEFAULT_DPHI: f64 = 0.002 * std::f64::consts::PI;

/// Default number of standard errors the gradient must clear.
pub const DEFAULT_NOISE_FLOOR_Z: f64 = 2.0;

/// How the photon emission rate is read off an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IntensityEstimator {
    /// Emitted photons per unit time.
    #[default]
    Emitted,
    /// Detected photons per unit time; `eta` times the emitted rate.
    Detected,
    /// `kappa * mean |alpha|^2`, the expected emission rate of the sampled
    /// coherent states.
    Amplitude,
}

impl IntensityEstimator {
    pub fn name(&self) -> &'static str {
        match self {
            IntensityEstimator::Emitted => "emitted",
            IntensityEstimator::Detected => "detected",
            IntensityEstimator::Amplitude => "amplitude",
        }
    }
}

impl Moments {
    /// Ensemble-mean rate in bin `b`.
    pub fn intensity(&self, b: usize, estimator: IntensityEstimator, kappa: f64) -> f64 {
        let n = self.n_traj;
        match estimator {
            IntensityEstimator::Emitted => self.emitted[b] / (n * self.bin_width),
            IntensityEstimator::Detected => self.detected[b] / (n * self.bin_width),
            IntensityEstimator::Amplitude => kappa * self.sum_alpha_sq[b] / n,
        }
    }

    /// Single-trajectory standard deviation of the rate in bin `b`.
    pub fn intensity_spread(&self, b: usize, estimator: IntensityEstimator, kappa: f64) -> f64 {
        let n = self.n_traj;
        let mean = self.intensity(b, estimator, kappa);
        let second = match estimator {
            IntensityEstimator::Emitted => self.emitted_sq[b] / n / (self.bin_width * self.bin_width),
            IntensityEstimator::Detected => self.detected_sq[b] / n / (self.bin_width * self.bin_width),
            IntensityEstimator::Amplitude => kappa * kappa * self.sum_alpha_quad[b] / n,
        };
        (second - mean * mean).max(0.0).sqrt()
    }

    pub fn mean_alpha(&self, b: usize) -> Complex64 {
        self.sum_alpha[b] / self.n_traj
    }

    /// Standard deviations of `Re alpha` and `Im alpha` in bin `b`.
    pub fn alpha_spread(&self, b: usize) -> (f64, f64) {
        let mean = self.mean_alpha(b);
        let var_re = self.sum_re_sq[b] / self.n_traj - mean.re * mean.re;
        let var_im = self.sum_im_sq[b] / self.n_traj - mean.im * mean.im;
        (var_re.max(0.0).sqrt(), var_im.max(0.0).sqrt())
    }
}

/// One row of the intensity table; rates are in units of `kappa`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityRow {
    pub t: f64,
    pub i_detected: f64,
    pub i_emitted: f64,
    pub i_analytic: f64,
    /// Standard error of `i_emitted`.
    pub stderr: f64,
}

pub fn intensity_curve(ensemble: &EnsembleAccumulator, params: &CavityParams) -> Result<Vec<IntensityRow>> {
    if ensemble.n_traj == 0 {
        return Err(Error::EmptyEnsemble);
    }
    if ensemble.conditional {
        return Err(Error::IncompatibleEnsembles(
            "intensity needs an unconditional ensemble".into(),
        ));
    }
    let m = Moments::from(ensemble);
    let kappa = params.kappa;
    let root_n = m.n_traj.sqrt();
    Ok((0..m.n_bins())
        .map(|b| IntensityRow {
            t: ensemble.bin_start(b),
            i_detected: m.intensity(b, IntensityEstimator::Detected, kappa),
            i_emitted: m.intensity(b, IntensityEstimator::Emitted, kappa),
            i_analytic: m.intensity(b, IntensityEstimator::Amplitude, kappa),
            stderr: m.intensity_spread(b, IntensityEstimator::Emitted, kappa) / root_n,
        })
        .collect())
}

/// Ensemble starting from the stationary state prepared by `prepared`.
pub fn unconditional_spec(prepared: &CavityParams, config: &SimConfig, bin_width: f64) -> Result<EnsembleSpec> {
    let (params, initial) = measurement_stage(prepared)?;
    Ok(EnsembleSpec {
        params,
        initial,
        config: config.clone(),
        bin_width,
        conditional: false,
    })
}

/// Ensemble conditioned on a detection at `t = 0`: every trajectory starts
/// from `alpha_ss + beta`.
pub fn conditional_spec(prepared: &CavityParams, config: &SimConfig, bin_width: f64) -> Result<EnsembleSpec> {
    let (params, stationary) = measurement_stage(prepared)?;
    Ok(EnsembleSpec {
        params,
        initial: apply_emission(stationary, true, params.beta),
        config: config.clone(),
        bin_width,
        conditional: true,
    })
}

pub fn conditional_ensemble(
    prepared: &CavityParams,
    config: &SimConfig,
    bin_width: f64,
    workers: usize,
) -> Result<Ensemble> {
    run_ensemble(&conditional_spec(prepared, config, bin_width)?, workers)
}

/// Resampling settings for bootstrap error bars.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapOptions {
    pub replicates: usize,
    pub seed: u64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            replicates: 200,
            seed: 0,
        }
    }
}

impl BootstrapOptions {
    fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        // Trajectories use the even/odd streams counted from zero.
        rng.set_stream(u64::MAX);
        rng
    }
}

/// `g2 = I(T|0) / I(T)` per bin; `None` where the denominator vanishes.
pub fn g2_values(
    conditional: &Moments,
    unconditional: &Moments,
    estimator: IntensityEstimator,
    kappa: f64,
) -> Vec<Option<f64>> {
    (0..conditional.n_bins())
        .map(|b| {
            let den = unconditional.intensity(b, estimator, kappa);
            (den > 0.0).then(|| conditional.intensity(b, estimator, kappa) / den)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct G2Row {
    pub t: f64,
    pub g2: Option<f64>,
    pub stderr: Option<f64>,
    /// Detected photons in the bin, summed over each ensemble.
    pub n_conditional: u64,
    pub n_unconditional: u64,
}

fn check_pair(conditional: &Ensemble, unconditional: &Ensemble) -> Result<()> {
    if !conditional.total.conditional || unconditional.total.conditional {
        return Err(Error::IncompatibleEnsembles(
            "g2 needs a conditional and an unconditional ensemble, in that order".into(),
        ));
    }
    if conditional.total.n_bins() != unconditional.total.n_bins()
        || (conditional.total.bin_width - unconditional.total.bin_width).abs() > 1e-12
    {
        return Err(Error::IncompatibleEnsembles("g2 ensembles use different bin grids".into()));
    }
    if conditional.total.n_traj == 0 || unconditional.total.n_traj == 0 {
        return Err(Error::EmptyEnsemble);
    }
    Ok(())
}

/// Correlation table with bootstrap standard errors from block resampling.
pub fn g2_curve(
    conditional: &Ensemble,
    unconditional: &Ensemble,
    estimator: IntensityEstimator,
    bootstrap: &BootstrapOptions,
) -> Result<Vec<G2Row>> {
    check_pair(conditional, unconditional)?;
    let kappa = unconditional.spec.params.kappa;
    let values = g2_values(&conditional.moments(), &unconditional.moments(), estimator, kappa);
    let stderr = bootstrap_std(&[conditional, unconditional], bootstrap, |m| {
        g2_values(&m[0], &m[1], estimator, kappa)
    });
    Ok((0..values.len())
        .map(|b| G2Row {
            t: unconditional.bin_start(b),
            g2: values[b],
            stderr: values[b].and(stderr[b]),
            n_conditional: conditional.total.detected_counts[b],
            n_unconditional: unconditional.total.detected_counts[b],
        })
        .collect())
}

/// Per-bin bootstrap standard deviation of `f` over block resamples. When
/// the ensembles have the same block layout the same draw is used for all of
/// them, which keeps common-random-number pairs together.
pub fn bootstrap_std<F>(ensembles: &[&Ensemble], options: &BootstrapOptions, f: F) -> Vec<Option<f64>>
where
    F: Fn(&[Moments]) -> Vec<Option<f64>>,
{
    let n_bins = ensembles[0].total.n_bins();
    if options.replicates < 2 {
        return vec![None; n_bins];
    }
    let mut rng = options.rng();
    let mut sum = vec![0.0; n_bins];
    let mut sum_sq = vec![0.0; n_bins];
    let mut count = vec![0usize; n_bins];
    let paired = ensembles.windows(2).all(|w| w[0].blocks.len() == w[1].blocks.len());
    for _ in 0..options.replicates {
        let mut shared: Option<Vec<f64>> = None;
        let moments: Vec<Moments> = ensembles
            .iter()
            .map(|e| {
                let weights = match (&shared, paired) {
                    (Some(w), true) => w.clone(),
                    _ => {
                        let w = resample_weights(e.blocks.len(), &mut rng);
                        shared = Some(w.clone());
                        w
                    }
                };
                e.weighted_moments(&weights)
            })
            .collect();
        if moments.iter().any(|m| m.n_traj == 0.0) {
            continue;
        }
        for (b, v) in f(&moments).into_iter().enumerate() {
            if let Some(v) = v {
                sum[b] += v;
                sum_sq[b] += v * v;
                count[b] += 1;
            }
        }
    }
    (0..n_bins)
        .map(|b| {
            let k = count[b] as f64;
            (count[b] >= 2).then(|| {
                let mean = sum[b] / k;
                ((sum_sq[b] / k - mean * mean).max(0.0) * k / (k - 1.0)).sqrt()
            })
        })
        .collect()
}

fn resample_weights(n_blocks: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut w = vec![0.0; n_blocks];
    for _ in 0..n_blocks {
        w[rng.random_range(0..n_blocks)] += 1.0;
    }
    w
}

/// Ensemble mean and spread of the amplitude for one initial phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseRow {
    pub phi: f64,
    pub t: f64,
    pub mean_re_alpha: f64,
    pub mean_im_alpha: f64,
    pub std_re: f64,
    pub std_im: f64,
}

/// Mean amplitude at each of `times` for cavities prepared at each of `phis`
/// (all other parameters from `template`). Times must lie on the sample grid
/// of spacing `config.sample_stride`. With `forced_feedback_at_zero` every
/// trajectory starts with a detection.
pub fn phase_diagram_snapshot(
    template: &CavityParams,
    phis: &[f64],
    times: &[f64],
    forced_feedback_at_zero: bool,
    config: &SimConfig,
    workers: usize,
) -> Result<Vec<PhaseRow>> {
    let stride = config.sample_stride;
    let mut indices = Vec::with_capacity(times.len());
    for &t in times {
        let j = (t / stride).round();
        if !(t >= 0.0) || (j * stride - t).abs() > 1e-9 * stride.max(t) {
            return Err(Error::invalid("times", format!("{t} is not on the sample grid of spacing {stride}")));
        }
        indices.push(j as usize);
    }
    let last = indices.iter().copied().max().unwrap_or(0);
    let config = SimConfig {
        t_max: (last + 1) as f64 * stride,
        ..config.clone()
    };
    let mut rows = Vec::with_capacity(phis.len() * times.len());
    for &phi in phis {
        let prepared = template.with_phi(phi);
        let spec = if forced_feedback_at_zero {
            conditional_spec(&prepared, &config, stride)?
        } else {
            unconditional_spec(&prepared, &config, stride)?
        };
        let m = run_ensemble(&spec, workers)?.moments();
        for (&t, &j) in times.iter().zip(&indices) {
            let mean = m.mean_alpha(j);
            let (std_re, std_im) = m.alpha_spread(j);
            rows.push(PhaseRow {
                phi,
                t,
                mean_re_alpha: mean.re,
                mean_im_alpha: mean.im,
                std_re,
                std_im,
            });
        }
    }
    Ok(rows)
}

/// Largest distance between the mean amplitudes of any two phases at time `t`.
pub fn max_pairwise_distance(rows: &[PhaseRow], t: f64) -> f64 {
    let points: Vec<Complex64> = rows
        .iter()
        .filter(|r| (r.t - t).abs() < 1e-12)
        .map(|r| Complex64::new(r.mean_re_alpha, r.mean_im_alpha))
        .collect();
    let mut best = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max((a - b).norm());
        }
    }
    best
}

/// The measured signal `M(phi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Signal {
    Intensity(IntensityEstimator),
    G2(IntensityEstimator),
}

impl Signal {
    fn needs_conditional(&self) -> bool {
        matches!(self, Signal::G2(_))
    }

    /// Per-bin value from the unconditional moments and, for `g2`, the
    /// conditional ones.
    fn evaluate(&self, moments: &[Moments], kappa: f64) -> Vec<Option<f64>> {
        match *self {
            Signal::Intensity(est) => {
                let m = &moments[0];
                (0..m.n_bins()).map(|b| Some(m.intensity(b, est, kappa))).collect()
            }
            Signal::G2(est) => g2_values(&moments[1], &moments[0], est, kappa),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UncertaintyMode {
    /// Single-trajectory spread of the signal; intensity signals only.
    #[default]
    PerTrajectory,
    /// Bootstrap over trajectory blocks.
    Bootstrap,
}

impl UncertaintyMode {
    pub fn name(&self) -> &'static str {
        match self {
            UncertaintyMode::PerTrajectory => "per_trajectory",
            UncertaintyMode::Bootstrap => "bootstrap",
        }
    }
}

impl fmt::Display for UncertaintyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Where the two phases of the finite difference sit relative to `phi0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stencil {
    /// `phi0 - dphi/2` and `phi0 + dphi/2`.
    #[default]
    Centered,
    /// `phi0` and `phi0 + dphi`. Needed at points of mirror symmetry such as
    /// `phi = pi`, where the centered difference vanishes identically.
    Forward,
}

impl Stencil {
    fn phases(&self, phi0: f64, dphi: f64) -> (f64, f64) {
        match self {
            Stencil::Centered => (phi0 - 0.5 * dphi, phi0 + 0.5 * dphi),
            Stencil::Forward => (phi0, phi0 + dphi),
        }
    }
}

/// One point of an accuracy curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyPoint {
    /// Duration `T` or photon number `|alpha_ss|^2`.
    pub resource: f64,
    pub signal: f64,
    pub signal_std: f64,
    pub sensitivity: f64,
    /// `signal_std / sensitivity`; `None` when the gradient does not stand
    /// out from the Monte Carlo noise.
    pub delta_phi: Option<f64>,
    pub mode: UncertaintyMode,
    pub below_noise_floor: bool,
}

impl AccuracyPoint {
    /// `sensitivity_stderr` is the Monte Carlo standard error of the
    /// gradient; the point is flagged unless the gradient exceeds `z` of them.
    pub fn new(
        resource: f64,
        signal: f64,
        signal_std: f64,
        sensitivity: f64,
        sensitivity_stderr: f64,
        z: f64,
        mode: UncertaintyMode,
    ) -> Self {
        let below = !(sensitivity > 0.0 && sensitivity > z * sensitivity_stderr);
        AccuracyPoint {
            resource,
            signal,
            signal_std,
            sensitivity,
            delta_phi: if below { None } else { error_propagation(signal_std, sensitivity) },
            mode,
            below_noise_floor: below,
        }
    }
}

/// `dM / |dM/dphi|`, or `None` for a vanishing sensitivity.
pub fn error_propagation(signal_std: f64, sensitivity: f64) -> Option<f64> {
    (sensitivity.abs() > 0.0).then(|| signal_std / sensitivity.abs())
}

/// Everything that defines an accuracy-versus-time measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracySetup {
    /// Preparation parameters; the phase is replaced by the stencil phases.
    pub prepared: CavityParams,
    pub phi0: f64,
    pub dphi: f64,
    pub stencil: Stencil,
    pub signal: Signal,
    pub mode: UncertaintyMode,
    pub config: SimConfig,
    pub bin_width: f64,
    pub bootstrap: BootstrapOptions,
    pub noise_floor_z: f64,
}

impl AccuracySetup {
    pub fn new(prepared: CavityParams, signal: Signal, config: SimConfig) -> Self {
        let mode = match signal {
            Signal::Intensity(_) => UncertaintyMode::PerTrajectory,
            Signal::G2(_) => UncertaintyMode::Bootstrap,
        };
        AccuracySetup {
            phi0: prepared.phi(),
            prepared,
            dphi: DEFAULT_DPHI,
            stencil: Stencil::Centered,
            signal,
            mode,
            config,
            bin_width: crate::ensemble::DEFAULT_BIN_WIDTH,
            bootstrap: BootstrapOptions::default(),
            noise_floor_z: DEFAULT_NOISE_FLOOR_Z,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dphi > 0.0) || !self.dphi.is_finite() {
            return Err(Error::invalid("dphi", format!("must be > 0, got {}", self.dphi)));
        }
        if self.mode == UncertaintyMode::PerTrajectory && self.signal.needs_conditional() {
            return Err(Error::invalid(
                "uncertainty_mode",
                "g2 has no single-trajectory value; use bootstrap",
            ));
        }
        Ok(())
    }
}

/// The ensembles run at one stencil phase: unconditional first.
struct PhaseRun {
    ensembles: Vec<Ensemble>,
}

impl PhaseRun {
    fn run(setup: &AccuracySetup, phi: f64, workers: usize) -> Result<Self> {
        let prepared = setup.prepared.with_phi(phi);
        let mut ensembles = vec![run_ensemble(
            &unconditional_spec(&prepared, &setup.config, setup.bin_width)?,
            workers,
        )?];
        if setup.signal.needs_conditional() {
            ensembles.push(conditional_ensemble(&prepared, &setup.config, setup.bin_width, workers)?);
        }
        Ok(PhaseRun { ensembles })
    }

    fn moments(&self) -> Vec<Moments> {
        self.ensembles.iter().map(Ensemble::moments).collect()
    }

    fn leave_one_out(&self, j: usize) -> Vec<Moments> {
        self.ensembles.iter().map(|e| e.leave_one_out(j)).collect()
    }

    fn refs(&self) -> Vec<&Ensemble> {
        self.ensembles.iter().collect()
    }
}

/// Accuracy `dphi(T)` for every bin of the time grid.
pub fn accuracy_time_curve(setup: &AccuracySetup, workers: usize) -> Result<Vec<AccuracyPoint>> {
    let (lo, hi) = run_stencil(setup, workers)?;
    Ok(accuracy_from_runs(setup, &lo, &hi))
}

fn accuracy_from_runs(setup: &AccuracySetup, lo: &PhaseRun, hi: &PhaseRun) -> Vec<AccuracyPoint> {
    let kappa = setup.prepared.kappa;
    let signal = setup.signal;
    let m_lo = signal.evaluate(&lo.moments(), kappa);
    let m_hi = signal.evaluate(&hi.moments(), kappa);
    let n_bins = m_lo.len();

    let (std_lo, std_hi) = match setup.mode {
        UncertaintyMode::PerTrajectory => {
            let est = match signal {
                Signal::Intensity(est) => est,
                Signal::G2(_) => unreachable!("rejected by validate"),
            };
            let spread = |run: &PhaseRun| -> Vec<Option<f64>> {
                let m = run.ensembles[0].moments();
                (0..n_bins).map(|b| Some(m.intensity_spread(b, est, kappa))).collect()
            };
            (spread(lo), spread(hi))
        }
        UncertaintyMode::Bootstrap => {
            let f = |m: &[Moments]| signal.evaluate(m, kappa);
            (
                bootstrap_std(&lo.refs(), &setup.bootstrap, f),
                bootstrap_std(&hi.refs(), &setup.bootstrap, f),
            )
        }
    };

    let sens_se = jackknife_difference_se(setup, lo, hi, n_bins);

    let mut points = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let (Some(a), Some(c), Some(sa), Some(sc)) = (m_lo[b], m_hi[b], std_lo[b], std_hi[b]) else {
            continue;
        };
        let signal_value = match setup.stencil {
            Stencil::Centered => 0.5 * (a + c),
            Stencil::Forward => a,
        };
        let signal_std = (0.5 * (sa * sa + sc * sc)).sqrt();
        let mut diff = (c - a).abs();
        if diff <= 1e-12 * a.abs().max(c.abs()) {
            diff = 0.0;
        }
        let sensitivity = diff / setup.dphi;
        points.push(AccuracyPoint::new(
            lo.ensembles[0].bin_start(b),
            signal_value,
            signal_std,
            sensitivity,
            sens_se[b] / setup.dphi,
            setup.noise_floor_z,
            setup.mode,
        ));
    }
    points
}

/// Leave-one-block-out replicates of `M(hi) - M(lo)` per bin, with the same
/// block deleted from every ensemble so common random numbers stay matched.
/// Empty when the ensembles are too small or not block-aligned.
fn difference_replicates(setup: &AccuracySetup, lo: &PhaseRun, hi: &PhaseRun) -> Vec<Vec<Option<f64>>> {
    let kappa = setup.prepared.kappa;
    let n_blocks = lo.ensembles[0].blocks.len();
    let aligned = lo
        .ensembles
        .iter()
        .chain(&hi.ensembles)
        .all(|e| e.blocks.len() == n_blocks);
    if n_blocks < 2 || !aligned {
        return Vec::new();
    }
    (0..n_blocks)
        .map(|j| {
            let a = setup.signal.evaluate(&lo.leave_one_out(j), kappa);
            let c = setup.signal.evaluate(&hi.leave_one_out(j), kappa);
            a.iter().zip(&c).map(|(a, c)| Some((*c)? - (*a)?)).collect()
        })
        .collect()
}

fn jackknife_se(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return f64::INFINITY;
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    ((k - 1.0) / k * values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()).sqrt()
}

fn jackknife_difference_se(setup: &AccuracySetup, lo: &PhaseRun, hi: &PhaseRun, n_bins: usize) -> Vec<f64> {
    let reps = difference_replicates(setup, lo, hi);
    if reps.is_empty() {
        return vec![0.0; n_bins];
    }
    (0..n_bins)
        .map(|b| jackknife_se(&reps.iter().filter_map(|r| r[b]).collect::<Vec<_>>()))
        .collect()
}

fn run_stencil(setup: &AccuracySetup, workers: usize) -> Result<(PhaseRun, PhaseRun)> {
    setup.validate()?;
    let (phi_lo, phi_hi) = setup.stencil.phases(setup.phi0, setup.dphi);
    Ok((PhaseRun::run(setup, phi_lo, workers)?, PhaseRun::run(setup, phi_hi, workers)?))
}

/// The accuracy point of the bin containing time `t`.
pub fn delta_phi(setup: &AccuracySetup, t: f64, workers: usize) -> Result<AccuracyPoint> {
    let curve = accuracy_time_curve(setup, workers)?;
    let start = (t / setup.bin_width + 1e-9).floor() * setup.bin_width;
    curve
        .into_iter()
        .find(|p| (p.resource - start).abs() < 1e-9)
        .ok_or_else(|| Error::Validation(format!("no accuracy value at T = {t}")))
}

/// Accuracy over the time window `[t_from, t_to]`: the signal spread is the
/// window mean of the per-bin spreads and the sensitivity is the window mean
/// of the finite difference.
pub fn window_accuracy(setup: &AccuracySetup, t_from: f64, t_to: f64, workers: usize) -> Result<AccuracyPoint> {
    let (lo, hi) = run_stencil(setup, workers)?;
    let curve = accuracy_from_runs(setup, &lo, &hi);
    let in_window = |t: f64| t >= t_from - 1e-9 && t <= t_to + 1e-9;
    let window: Vec<&AccuracyPoint> = curve.iter().filter(|p| in_window(p.resource)).collect();
    if window.is_empty() {
        return Err(Error::Validation(format!("no time bins in [{t_from}, {t_to}]")));
    }
    let k = window.len() as f64;
    let mean = |f: fn(&AccuracyPoint) -> f64| window.iter().map(|p| f(p)).sum::<f64>() / k;

    let kappa = setup.prepared.kappa;
    let m_lo = setup.signal.evaluate(&lo.moments(), kappa);
    let m_hi = setup.signal.evaluate(&hi.moments(), kappa);
    let bins: Vec<usize> = (0..m_lo.len())
        .filter(|&b| in_window(lo.ensembles[0].bin_start(b)))
        .filter(|&b| window.iter().any(|p| (p.resource - lo.ensembles[0].bin_start(b)).abs() < 1e-12))
        .collect();
    let window_diff = |a: &[Option<f64>], c: &[Option<f64>]| -> Option<f64> {
        let mut sum = 0.0;
        for &b in &bins {
            sum += c[b]? - a[b]?;
        }
        Some(sum / bins.len() as f64)
    };
    let diff = window_diff(&m_lo, &m_hi).unwrap_or(0.0).abs();
    let reps: Vec<f64> = difference_replicates(setup, &lo, &hi)
        .iter()
        .filter_map(|r| {
            let mut sum = 0.0;
            for &b in &bins {
                sum += r[b]?;
            }
            Some(sum / bins.len() as f64)
        })
        .collect();
    let se = if reps.is_empty() { 0.0 } else { jackknife_se(&reps) };
    Ok(AccuracyPoint::new(
        0.5 * (t_from + t_to),
        mean(|p| p.signal),
        mean(|p| p.signal_std),
        diff / setup.dphi,
        se / setup.dphi,
        setup.noise_floor_z,
        setup.mode,
    ))
}

/// Accuracy versus `|alpha_ss|^2`, one window-averaged point per photon number.
pub fn accuracy_photon_scan(
    setup: &AccuracySetup,
    photon_numbers: &[f64],
    t_from: f64,
    t_to: f64,
    workers: usize,
) -> Result<Vec<AccuracyPoint>> {
    photon_numbers
        .iter()
        .map(|&n| {
            let point_setup = AccuracySetup {
                prepared: scale_photon_number(&setup.prepared, n)?,
                ..setup.clone()
            };
            Ok(AccuracyPoint {
                resource: n,
                ..window_accuracy(&point_setup, t_from, t_to, workers)?
            })
        })
        .collect()
}

/// Same preparation with the drive and feedback pulse rescaled so that
/// `|alpha_ss|^2 = photons` and `|beta| = |alpha_ss|`, keeping the direction
/// of `beta`.
pub fn scale_photon_number(prepared: &CavityParams, photons: f64) -> Result<CavityParams> {
    if !(photons > 0.0) || !photons.is_finite() {
        return Err(Error::invalid("alpha_sq", format!("must be > 0, got {photons}")));
    }
    let amplitude = photons.sqrt();
    let beta = if prepared.beta.norm() > 0.0 {
        prepared.beta / prepared.beta.norm() * amplitude
    } else {
        prepared.beta
    };
    CavityParams::new(
        prepared.kappa,
        amplitude * prepared.kappa,
        prepared.phi(),
        prepared.eta,
        beta,
    )
}

/// Initial amplitude used by a conditional ensemble.
pub fn conditional_start(prepared: &CavityParams) -> Result<CoherentAmplitude> {
    Ok(conditional_spec(prepared, &SimConfig::default(), crate::ensemble::DEFAULT_BIN_WIDTH)?.initial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn config(n_traj: u64, t_max: f64, seed: u64) -> SimConfig {
        SimConfig {
            t_max,
            n_traj,
            master_seed: seed,
            ..SimConfig::default()
        }
    }

    fn run(spec: EnsembleSpec) -> Ensemble {
        run_ensemble(&spec, 1).unwrap()
    }

    #[test]
    fn error_propagation_quotient() {
        assert_eq!(error_propagation(0.1, 2.0), Some(0.05));
        assert_eq!(error_propagation(0.1, 0.0), None);
        let p = AccuracyPoint::new(1.0, 3.0, 0.1, 2.0, 0.1, 2.0, UncertaintyMode::Bootstrap);
        assert_eq!(p.delta_phi, Some(0.05));
        let p = AccuracyPoint::new(1.0, 3.0, 0.1, 2.0, 1.5, 2.0, UncertaintyMode::Bootstrap);
        assert!(p.below_noise_floor);
        assert_eq!(p.delta_phi, None);
    }

    #[test]
    fn conditional_starts() {
        let pi = CavityParams::from_photon_number(4.0, PI, 0.5).unwrap();
        assert!(conditional_start(&pi).unwrap().photons() < 1e-24);
        let zero = CavityParams::from_photon_number(4.0, 0.0, 0.5).unwrap();
        let start = conditional_start(&zero).unwrap();
        assert!((start.value() - Complex64::new(4.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn initial_intensity_is_kappa_n() {
        let prep = CavityParams::from_photon_number(4.0, 0.3 * PI, 0.5).unwrap();
        let ens = run(unconditional_spec(&prep, &config(20_000, 0.05, 3), 0.01).unwrap());
        let rows = intensity_curve(&ens.total, &ens.spec.params).unwrap();
        assert!((rows[0].i_analytic - 4.0).abs() < 1e-9);
        assert!((rows[0].i_emitted - 4.0).abs() < 3.0 * rows[0].stderr + 0.05);
        assert!(rows[0].i_detected <= rows[0].i_emitted);
    }

    #[test]
    fn no_detection_means_free_decay() {
        let prep = CavityParams::from_photon_number(4.0, 0.0, 0.0).unwrap();
        let ens = run(unconditional_spec(&prep, &config(2000, 1.0, 1), 0.01).unwrap());
        let rows = intensity_curve(&ens.total, &ens.spec.params).unwrap();
        for r in rows {
            assert!((r.i_analytic - 4.0 * (-r.t).exp()).abs() < 1e-9);
            assert_eq!(r.i_detected, 0.0);
        }
    }

    #[test]
    fn rejects_conditional_or_empty() {
        let prep = CavityParams::from_photon_number(1.0, 0.0, 0.5).unwrap();
        let cond = conditional_ensemble(&prep, &config(10, 0.1, 1), 0.01, 1).unwrap();
        assert!(intensity_curve(&cond.total, &prep).is_err());
        let empty = EnsembleAccumulator::new(3, 0.01, false);
        assert!(matches!(intensity_curve(&empty, &prep), Err(Error::EmptyEnsemble)));
    }

    #[test]
    fn g2_vanishes_at_pi() {
        let prep = CavityParams::from_photon_number(4.0, PI, 0.5).unwrap();
        let cfg = config(5000, 0.5, 2);
        let cond = conditional_ensemble(&prep, &cfg, 0.01, 1).unwrap();
        let uncond = run(unconditional_spec(&prep, &cfg, 0.01).unwrap());
        let rows = g2_curve(&cond, &uncond, IntensityEstimator::Detected, &BootstrapOptions::default()).unwrap();
        for r in &rows {
            assert_eq!(r.n_conditional, 0);
            if let Some(g) = r.g2 {
                assert_eq!(g, 0.0);
            }
        }
    }

    #[test]
    fn zero_denominator_is_missing() {
        let prep = CavityParams::from_photon_number(4.0, 0.0, 0.0).unwrap();
        let cfg = config(100, 0.2, 2);
        let cond = conditional_ensemble(&prep, &cfg, 0.01, 1).unwrap();
        let uncond = run(unconditional_spec(&prep, &cfg, 0.01).unwrap());
        let rows = g2_curve(&cond, &uncond, IntensityEstimator::Detected, &BootstrapOptions::default()).unwrap();
        assert!(rows.iter().all(|r| r.g2.is_none() && r.stderr.is_none()));
    }

    #[test]
    fn g2_is_one_without_feedback_pulse() {
        let prep = CavityParams::from_photon_number(4.0, 0.4 * PI, 0.5)
            .unwrap()
            .with_beta(Complex64::new(0.0, 0.0));
        let cfg = config(4000, 0.3, 9);
        let cond = conditional_ensemble(&prep, &cfg, 0.01, 1).unwrap();
        let uncond = run(unconditional_spec(&prep, &cfg, 0.01).unwrap());
        // With beta = 0 both ensembles start in the same state and share
        // their random streams, so they coincide trajectory by trajectory.
        let rows = g2_curve(&cond, &uncond, IntensityEstimator::Amplitude, &BootstrapOptions::default()).unwrap();
        for r in rows {
            assert!((r.g2.unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bootstrap_is_reproducible() {
        let prep = CavityParams::from_photon_number(1.0, 0.5 * PI, 0.5).unwrap();
        let cfg = config(3000, 0.2, 4);
        let cond = conditional_ensemble(&prep, &cfg, 0.01, 1).unwrap();
        let uncond = run(unconditional_spec(&prep, &cfg, 0.01).unwrap());
        let opts = BootstrapOptions { replicates: 50, seed: 1 };
        let a = g2_curve(&cond, &uncond, IntensityEstimator::Detected, &opts).unwrap();
        let b = g2_curve(&cond, &uncond, IntensityEstimator::Detected, &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().any(|r| r.stderr.is_some_and(|s| s > 0.0)));
    }

    #[test]
    fn snapshot_at_zero_lies_on_circle() {
        let template = CavityParams::from_photon_number(4.0, 0.0, 0.5).unwrap();
        let phis = [0.5 * PI, PI, 1.5 * PI];
        let rows = phase_diagram_snapshot(&template, &phis, &[0.0], false, &config(10, 0.1, 1), 1).unwrap();
        for r in rows {
            let z = Complex64::new(r.mean_re_alpha, r.mean_im_alpha);
            assert!((z - Complex64::from_polar(2.0, -r.phi)).norm() < 1e-12);
            assert_eq!(r.std_re, 0.0);
        }
    }

    #[test]
    fn snapshot_without_detection_shrinks_uniformly() {
        let template = CavityParams::from_photon_number(4.0, 0.0, 0.0).unwrap();
        let phis = [0.5 * PI, 0.75 * PI, PI];
        let rows = phase_diagram_snapshot(&template, &phis, &[0.5], false, &config(5, 0.1, 1), 1).unwrap();
        for r in &rows {
            let radius = r.mean_re_alpha.hypot(r.mean_im_alpha);
            assert!((radius - 2.0 * (-0.25f64).exp()).abs() < 1e-12);
        }
        let d = max_pairwise_distance(&rows, 0.5);
        assert!((d - 2.0 * 2.0f64.sqrt() * (-0.25f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn snapshot_rejects_off_grid_time() {
        let template = CavityParams::from_photon_number(4.0, 0.0, 0.5).unwrap();
        assert!(phase_diagram_snapshot(&template, &[0.0], &[0.005], false, &config(5, 0.1, 1), 1).is_err());
    }

    #[test]
    fn accuracy_points_obey_quotient() {
        let prep = CavityParams::from_photon_number(4.0, 0.3 * PI, 0.5).unwrap();
        let mut setup = AccuracySetup::new(prep, Signal::Intensity(IntensityEstimator::Emitted), config(2000, 0.3, 5));
        setup.dphi = 0.05 * PI;
        let curve = accuracy_time_curve(&setup, 1).unwrap();
        assert_eq!(curve.len(), 30);
        for p in &curve {
            if let Some(d) = p.delta_phi {
                assert_eq!(d, p.signal_std / p.sensitivity);
                assert!(!p.below_noise_floor);
            } else {
                assert!(p.below_noise_floor);
            }
        }
    }

    #[test]
    fn centered_g2_gradient_vanishes_at_pi() {
        let prep = CavityParams::from_photon_number(4.0, PI, 0.5).unwrap();
        let mut setup = AccuracySetup::new(prep, Signal::G2(IntensityEstimator::Amplitude), config(500, 0.2, 5));
        setup.bootstrap.replicates = 10;
        let centered = accuracy_time_curve(&setup, 1).unwrap();
        assert!(centered.iter().all(|p| p.sensitivity == 0.0 && p.below_noise_floor));
        setup.stencil = Stencil::Forward;
        let forward = accuracy_time_curve(&setup, 1).unwrap();
        assert!(forward.iter().all(|p| p.sensitivity > 0.0));
    }

    #[test]
    fn per_trajectory_mode_rejected_for_g2() {
        let prep = CavityParams::from_photon_number(4.0, PI, 0.5).unwrap();
        let mut setup = AccuracySetup::new(prep, Signal::G2(IntensityEstimator::Detected), config(10, 0.1, 5));
        setup.mode = UncertaintyMode::PerTrajectory;
        assert!(accuracy_time_curve(&setup, 1).is_err());
    }

    #[test]
    fn photon_scaling_keeps_beta_direction() {
        let prep = CavityParams::from_photon_number(4.0, PI, 0.5)
            .unwrap()
            .with_beta(Complex64::new(0.0, -2.0));
        let scaled = scale_photon_number(&prep, 9.0).unwrap();
        assert!((scaled.steady_state_photons() - 9.0).abs() < 1e-12);
        assert!((scaled.beta - Complex64::new(0.0, -3.0)).norm() < 1e-12);
    }
}
