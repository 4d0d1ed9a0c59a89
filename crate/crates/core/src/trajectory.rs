//! Quantum trajectories of the cavity's coherent-state amplitude.
//!
//! A coherent state stays coherent under every piece of the dynamics: the
//! no-emission evolution only moves `alpha` along a deterministic path, an
//! undetected emission leaves it alone, and a detected emission displaces it by
//! the feedback pulse `beta`. A trajectory is therefore a single complex number
//! plus an event log.

use num_complex::Complex64;
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::params::{CavityParams, CoherentAmplitude};

/// Largest fixed step allowed, in units of `1/kappa`.
pub const MAX_FIXED_STEP: f64 = 0.01;

/// Default fixed step, in units of `1/kappa`.
pub const DEFAULT_DT: f64 = 1e-3;

/// Stationary amplitude of the driven cavity without feedback,
/// `(omega / kappa) e^{-i phi}`.
pub fn steady_state_alpha(params: &CavityParams) -> Result<CoherentAmplitude> {
    if !(params.kappa > 0.0) {
        return Err(Error::invalid("kappa", format!("must be > 0, got {}", params.kappa)));
    }
    let r = params.omega / params.kappa;
    CoherentAmplitude::new(Complex64::from_polar(r, -params.phi()))
}

/// Amplitude after a time `t` without any photon emission:
/// `e^{-kappa t/2} alpha0 + (omega/kappa)(1 - e^{-kappa t/2}) e^{-i phi}`.
pub fn propagate_no_jump(
    alpha0: CoherentAmplitude,
    params: &CavityParams,
    t: f64,
) -> Result<CoherentAmplitude> {
    params.validate()?;
    if !(t >= 0.0) {
        return Err(Error::invalid("t", format!("duration must be >= 0, got {t}")));
    }
    Ok(NoJumpStep::new(params, t).apply(alpha0))
}

/// Precomputed no-jump propagator over a fixed duration.
#[derive(Debug, Clone, Copy)]
struct NoJumpStep {
    decay: f64,
    drive: Complex64,
}

impl NoJumpStep {
    fn new(params: &CavityParams, t: f64) -> Self {
        let x = -0.5 * params.kappa * t;
        let decay = x.exp();
        let grow = -x.exp_m1();
        let drive = Complex64::from_polar(params.omega / params.kappa * grow, -params.phi());
        NoJumpStep { decay, drive }
    }

    #[inline]
    fn apply(&self, alpha: CoherentAmplitude) -> CoherentAmplitude {
        CoherentAmplitude::new_unchecked(self.advance(alpha.value()))
    }

    #[inline]
    fn advance(&self, alpha: Complex64) -> Complex64 {
        alpha * self.decay + self.drive
    }
}

/// Probability of no emission in a window `dt` starting from amplitude `alpha`,
/// `exp[-|alpha|^2 (1 - e^{-kappa dt})]`.
pub fn no_emission_probability(alpha: CoherentAmplitude, kappa: f64, dt: f64) -> f64 {
    let window = -(-kappa * dt).exp_m1();
    (-alpha.photons() * window).exp()
}

/// State right after an emission: unchanged if the photon escaped undetected,
/// displaced by `beta` if the detection triggered the feedback pulse.
pub fn apply_emission(alpha: CoherentAmplitude, detected: bool, beta: Complex64) -> CoherentAmplitude {
    if detected {
        CoherentAmplitude::new_unchecked(alpha.value() + beta)
    } else {
        alpha
    }
}

/// Outcome of inverting the free-decay survival function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WaitingTime {
    /// The draw lies below the asymptotic survival probability `e^{-|alpha0|^2}`.
    Never,
    After(f64),
}

/// Time to the next emission for a freely decaying cavity (`omega = 0`),
/// obtained by solving `exp[-|alpha0|^2 (1 - e^{-kappa t})] = u` for `t`.
pub fn sample_waiting_time(alpha0: CoherentAmplitude, kappa: f64, u: f64) -> Result<WaitingTime> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::UniformOutOfRange(u));
    }
    let n = alpha0.photons();
    if n == 0.0 {
        return Ok(WaitingTime::Never);
    }
    let log_u = u.ln();
    if log_u <= -n {
        return Ok(WaitingTime::Never);
    }
    Ok(WaitingTime::After(-(log_u / n).ln_1p() / kappa))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Stepping {
    /// Test for one emission per step of length `dt`.
    #[default]
    FixedStep,
    /// Sample exact waiting times between emissions; needs `omega = 0`.
    EventDriven,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_max: f64,
    pub n_traj: u64,
    pub master_seed: u64,
    pub stepping: Stepping,
    /// Spacing of the amplitude sample grid.
    pub sample_stride: f64,
    /// Emissions allowed per trajectory in event-driven mode before the run
    /// is declared divergent.
    pub max_events: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: DEFAULT_DT,
            t_max: 1.0,
            n_traj: 1,
            master_seed: 0,
            stepping: Stepping::FixedStep,
            sample_stride: 0.01,
            max_events: 1_000_000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, kappa: f64) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::invalid("dt", format!("must be > 0, got {}", self.dt)));
        }
        if self.stepping == Stepping::FixedStep && self.dt * kappa > MAX_FIXED_STEP * (1.0 + 1e-12) {
            return Err(Error::invalid(
                "dt",
                format!("fixed stepping needs dt <= {MAX_FIXED_STEP}/kappa, got {}", self.dt),
            ));
        }
        if !(self.t_max >= 0.0) || !self.t_max.is_finite() {
            return Err(Error::invalid("t_max", format!("must be finite and >= 0, got {}", self.t_max)));
        }
        if self.n_traj == 0 {
            return Err(Error::invalid("n_traj", "must be >= 1"));
        }
        if !(self.sample_stride > 0.0) || !self.sample_stride.is_finite() {
            return Err(Error::invalid("sample_stride", format!("must be > 0, got {}", self.sample_stride)));
        }
        if self.stepping == Stepping::FixedStep && self.sample_stride < self.dt * (1.0 - 1e-9) {
            return Err(Error::invalid("sample_stride", "must be at least one step"));
        }
        Ok(())
    }

    /// Number of fixed steps covering `[0, t_max]`.
    pub fn steps(&self) -> usize {
        (self.t_max / self.dt).round() as usize
    }

    /// Fixed steps per sample interval.
    pub fn stride_steps(&self) -> usize {
        ((self.sample_stride / self.dt).round() as usize).max(1)
    }

    /// Number of points on the amplitude sample grid, including `t = 0`.
    pub fn sample_count(&self) -> usize {
        match self.stepping {
            Stepping::FixedStep => self.steps() / self.stride_steps() + 1,
            Stepping::EventDriven => (self.t_max / self.sample_stride + 1e-9).floor() as usize + 1,
        }
    }

    /// Time of sample `j` on the amplitude grid.
    pub fn sample_time(&self, j: usize) -> f64 {
        match self.stepping {
            Stepping::FixedStep => (j * self.stride_steps()) as f64 * self.dt,
            Stepping::EventDriven => j as f64 * self.sample_stride,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmissionEvent {
    pub time: f64,
    pub detected: bool,
    pub feedback_applied: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub params: CavityParams,
    pub initial_alpha: CoherentAmplitude,
    pub events: Vec<EmissionEvent>,
    /// Amplitude on the grid `SimConfig::sample_time(j)`.
    pub alpha_samples: Vec<CoherentAmplitude>,
    pub rng_index: u64,
}

impl TrajectoryRecord {
    pub fn detections(&self) -> usize {
        self.events.iter().filter(|e| e.detected).count()
    }
}

/// Receives the output of one trajectory as it is generated.
pub trait TrajectorySink {
    /// Amplitude at grid point `j`.
    fn sample(&mut self, j: usize, alpha: Complex64);
    fn emission(&mut self, event: EmissionEvent);
}

/// The two random streams owned by one trajectory: one feeds the emission
/// tests, the other the detection tests. Keeping them apart means runs that
/// share a seed stay aligned event by event even when their emission times
/// drift apart.
pub struct TrajectoryStreams {
    emission: ChaCha8Rng,
    detection: ChaCha8Rng,
}

impl TrajectoryStreams {
    pub fn new(master_seed: u64, index: u64) -> Self {
        let mut emission = ChaCha8Rng::seed_from_u64(master_seed);
        emission.set_stream(2 * index);
        let mut detection = ChaCha8Rng::seed_from_u64(master_seed);
        detection.set_stream(2 * index + 1);
        TrajectoryStreams { emission, detection }
    }

    #[inline]
    fn emission_uniform(&mut self) -> f64 {
        self.emission.random::<f64>()
    }

    #[inline]
    fn emission_open01(&mut self) -> f64 {
        self.emission.sample(Open01)
    }

    #[inline]
    fn detected(&mut self, eta: f64) -> bool {
        self.detection.random::<f64>() < eta
    }
}

/// Simulates trajectory `index` from the given initial amplitude and returns
/// its full record. The result depends only on the arguments.
pub fn simulate_trajectory(
    params: &CavityParams,
    initial: CoherentAmplitude,
    config: &SimConfig,
    index: u64,
) -> Result<TrajectoryRecord> {
    if index >= config.n_traj {
        return Err(Error::invalid(
            "trajectory_index",
            format!("{index} out of range for n_traj = {}", config.n_traj),
        ));
    }
    let mut recorder = Recorder {
        events: Vec::new(),
        samples: Vec::with_capacity(config.sample_count()),
    };
    run_trajectory(params, initial, config, index, &mut recorder)?;
    Ok(TrajectoryRecord {
        params: *params,
        initial_alpha: initial,
        events: recorder.events,
        alpha_samples: recorder.samples,
        rng_index: index,
    })
}

struct Recorder {
    events: Vec<EmissionEvent>,
    samples: Vec<CoherentAmplitude>,
}

impl TrajectorySink for Recorder {
    fn sample(&mut self, j: usize, alpha: Complex64) {
        debug_assert_eq!(j, self.samples.len());
        self.samples.push(CoherentAmplitude::new_unchecked(alpha));
    }

    fn emission(&mut self, event: EmissionEvent) {
        self.events.push(event);
    }
}

/// Streams one trajectory into `sink` without storing it.
pub fn run_trajectory<S: TrajectorySink>(
    params: &CavityParams,
    initial: CoherentAmplitude,
    config: &SimConfig,
    index: u64,
    sink: &mut S,
) -> Result<()> {
    params.validate()?;
    config.validate(params.kappa)?;
    let mut streams = TrajectoryStreams::new(config.master_seed, index);
    match config.stepping {
        Stepping::FixedStep => {
            run_fixed_step(params, initial.value(), config, &mut streams, sink);
            Ok(())
        }
        Stepping::EventDriven => {
            if params.omega != 0.0 {
                return Err(Error::EventDrivenWithDrive(params.omega));
            }
            run_event_driven(params, initial.value(), config, index, &mut streams, sink)
        }
    }
}

fn run_fixed_step<S: TrajectorySink>(
    params: &CavityParams,
    mut alpha: Complex64,
    config: &SimConfig,
    streams: &mut TrajectoryStreams,
    sink: &mut S,
) {
    let dt = config.dt;
    let steps = config.steps();
    let stride = config.stride_steps();
    let window = -(-params.kappa * dt).exp_m1();
    let step = NoJumpStep::new(params, dt);
    let eta = params.eta;
    let beta = params.beta;

    let vacuum = Complex64::new(0.0, 0.0);
    let undriven = params.omega == 0.0;

    sink.sample(0, alpha);
    let mut next_sample = stride;
    for k in 0..steps {
        if undriven && alpha == vacuum {
            // An empty undriven cavity never emits again.
            for j in next_sample / stride..=steps / stride {
                sink.sample(j, vacuum);
            }
            return;
        }
        let emit = -(-alpha.norm_sqr() * window).exp_m1();
        if streams.emission_uniform() < emit {
            let detected = streams.detected(eta);
            if detected {
                alpha += beta;
            }
            sink.emission(EmissionEvent {
                time: k as f64 * dt,
                detected,
                feedback_applied: detected,
            });
        }
        alpha = step.advance(alpha);
        if k + 1 == next_sample {
            sink.sample((k + 1) / stride, alpha);
            next_sample += stride;
        }
    }
}

fn run_event_driven<S: TrajectorySink>(
    params: &CavityParams,
    mut alpha: Complex64,
    config: &SimConfig,
    index: u64,
    streams: &mut TrajectoryStreams,
    sink: &mut S,
) -> Result<()> {
    let kappa = params.kappa;
    let n_samples = config.sample_count();
    let mut t = 0.0;
    let mut next = 0usize;
    let mut events = 0usize;

    // Emits grid samples strictly before `until`, decaying from (t, alpha).
    let flush = |until: f64, t: f64, alpha: Complex64, next: &mut usize, sink: &mut S| {
        while *next < n_samples {
            let s = config.sample_time(*next);
            if s >= until {
                break;
            }
            sink.sample(*next, alpha * (-0.5 * kappa * (s - t)).exp());
            *next += 1;
        }
    };

    loop {
        let u = streams.emission_open01();
        let wait = match sample_waiting_time(CoherentAmplitude::new_unchecked(alpha), kappa, u)? {
            WaitingTime::Never => break,
            WaitingTime::After(w) => w,
        };
        let t_event = t + wait;
        if t_event >= config.t_max {
            break;
        }
        if t_event <= t && events > 0 {
            return Err(Error::EventBudgetExceeded {
                index,
                budget: events,
                time: t,
            });
        }
        flush(t_event, t, alpha, &mut next, sink);
        alpha *= (-0.5 * kappa * wait).exp();
        t = t_event;
        let detected = streams.detected(params.eta);
        if detected {
            alpha += params.beta;
        }
        sink.emission(EmissionEvent {
            time: t,
            detected,
            feedback_applied: detected,
        });
        events += 1;
        if events >= config.max_events {
            return Err(Error::EventBudgetExceeded {
                index,
                budget: config.max_events,
                time: t,
            });
        }
    }
    flush(f64::INFINITY, t, alpha, &mut next, sink);
    Ok(())
}

/// Dynamics and initial amplitude of the measurement stage for a cavity that
/// was driven to its stationary state with `prepared`.
pub fn measurement_stage(prepared: &CavityParams) -> Result<(CavityParams, CoherentAmplitude)> {
    let initial = steady_state_alpha(prepared)?;
    Ok((prepared.measurement_stage(), initial))
}
