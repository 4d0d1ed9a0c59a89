//! Binned ensemble statistics and the deterministic parallel runner.
//!
//! Trajectory indices are split into fixed blocks whose boundaries depend only
//! on the ensemble size. Each block is accumulated sequentially in index order
//! and the blocks are merged in block order, so the floating-point result does
//! not depend on how many workers ran or in which order blocks finished. The
//! per-block accumulators are kept: paired ensembles that share a seed can be
//! resampled block-by-block for jackknife and bootstrap error bars.

use std::ops::Range;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::params::{CavityParams, CoherentAmplitude};
use crate::trajectory::{run_trajectory, EmissionEvent, SimConfig, Stepping, TrajectorySink};

/// Upper bound on the number of blocks an ensemble is split into.
pub const MAX_BLOCKS: u64 = 256;

/// Default histogram bin width, in units of `1/kappa`.
pub const DEFAULT_BIN_WIDTH: f64 = 0.01;

/// Per-bin sums over a set of trajectories.
///
/// Counts are exact integers; amplitude moments are sampled at the start of
/// each bin.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleAccumulator {
    pub bin_width: f64,
    pub conditional: bool,
    pub n_traj: u64,
    pub emitted_counts: Vec<u64>,
    pub detected_counts: Vec<u64>,
    /// Sum over trajectories of the squared per-trajectory bin count.
    pub emitted_sq: Vec<u64>,
    pub detected_sq: Vec<u64>,
    pub sum_alpha: Vec<Complex64>,
    pub sum_re_sq: Vec<f64>,
    pub sum_im_sq: Vec<f64>,
    /// Sum of `|alpha|^2`.
    pub sum_alpha_sq: Vec<f64>,
    /// Sum of `|alpha|^4`.
    pub sum_alpha_quad: Vec<f64>,
    /// Detections over the whole run, summed and squared per trajectory.
    pub total_detections: u64,
    pub total_detections_sq: u64,
}

impl EnsembleAccumulator {
    pub fn new(n_bins: usize, bin_width: f64, conditional: bool) -> Self {
        EnsembleAccumulator {
            bin_width,
            conditional,
            n_traj: 0,
            emitted_counts: vec![0; n_bins],
            detected_counts: vec![0; n_bins],
            emitted_sq: vec![0; n_bins],
            detected_sq: vec![0; n_bins],
            sum_alpha: vec![Complex64::new(0.0, 0.0); n_bins],
            sum_re_sq: vec![0.0; n_bins],
            sum_im_sq: vec![0.0; n_bins],
            sum_alpha_sq: vec![0.0; n_bins],
            sum_alpha_quad: vec![0.0; n_bins],
            total_detections: 0,
            total_detections_sq: 0,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.emitted_counts.len()
    }

    /// Start time of bin `b`.
    pub fn bin_start(&self, b: usize) -> f64 {
        b as f64 * self.bin_width
    }

    pub fn is_compatible(&self, other: &Self) -> bool {
        self.n_bins() == other.n_bins()
            && (self.bin_width - other.bin_width).abs() <= 1e-12 * self.bin_width
            && self.conditional == other.conditional
    }

    /// Adds `other` into `self`; `merge(A, B)` equals accumulating the
    /// concatenated ensembles.
    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if !self.is_compatible(other) {
            return Err(Error::IncompatibleEnsembles(format!(
                "{} bins of width {} vs {} bins of width {}",
                self.n_bins(),
                self.bin_width,
                other.n_bins(),
                other.bin_width
            )));
        }
        self.n_traj += other.n_traj;
        add_all(&mut self.emitted_counts, &other.emitted_counts);
        add_all(&mut self.detected_counts, &other.detected_counts);
        add_all(&mut self.emitted_sq, &other.emitted_sq);
        add_all(&mut self.detected_sq, &other.detected_sq);
        add_all(&mut self.sum_alpha, &other.sum_alpha);
        add_all(&mut self.sum_re_sq, &other.sum_re_sq);
        add_all(&mut self.sum_im_sq, &other.sum_im_sq);
        add_all(&mut self.sum_alpha_sq, &other.sum_alpha_sq);
        add_all(&mut self.sum_alpha_quad, &other.sum_alpha_quad);
        self.total_detections += other.total_detections;
        self.total_detections_sq += other.total_detections_sq;
        Ok(())
    }

    /// A sink that folds one trajectory into this accumulator.
    pub fn sink(&mut self) -> AccumulatorSink<'_> {
        AccumulatorSink {
            acc: self,
            bin: usize::MAX,
            emitted: 0,
            detected: 0,
            detections: 0,
        }
    }

    fn to_moments(&self, weight: f64, into: &mut Moments) {
        into.n_traj += weight * self.n_traj as f64;
        for b in 0..self.n_bins() {
            into.emitted[b] += weight * self.emitted_counts[b] as f64;
            into.detected[b] += weight * self.detected_counts[b] as f64;
            into.emitted_sq[b] += weight * self.emitted_sq[b] as f64;
            into.detected_sq[b] += weight * self.detected_sq[b] as f64;
            into.sum_alpha[b] += self.sum_alpha[b] * weight;
            into.sum_re_sq[b] += weight * self.sum_re_sq[b];
            into.sum_im_sq[b] += weight * self.sum_im_sq[b];
            into.sum_alpha_sq[b] += weight * self.sum_alpha_sq[b];
            into.sum_alpha_quad[b] += weight * self.sum_alpha_quad[b];
        }
    }
}

fn add_all<T: Copy + std::ops::AddAssign>(dst: &mut [T], src: &[T]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += *s;
    }
}

pub struct AccumulatorSink<'a> {
    acc: &'a mut EnsembleAccumulator,
    bin: usize,
    emitted: u64,
    detected: u64,
    detections: u64,
}

impl AccumulatorSink<'_> {
    fn flush_bin(&mut self) {
        if self.bin < self.acc.n_bins() {
            self.acc.emitted_sq[self.bin] += self.emitted * self.emitted;
            self.acc.detected_sq[self.bin] += self.detected * self.detected;
        }
        self.emitted = 0;
        self.detected = 0;
    }

    /// Closes the current trajectory.
    pub fn finish(mut self) {
        self.flush_bin();
        self.acc.n_traj += 1;
        self.acc.total_detections += self.detections;
        self.acc.total_detections_sq += self.detections * self.detections;
    }
}

impl TrajectorySink for AccumulatorSink<'_> {
    fn sample(&mut self, j: usize, alpha: Complex64) {
        if j >= self.acc.n_bins() {
            return;
        }
        let n = alpha.norm_sqr();
        self.acc.sum_alpha[j] += alpha;
        self.acc.sum_re_sq[j] += alpha.re * alpha.re;
        self.acc.sum_im_sq[j] += alpha.im * alpha.im;
        self.acc.sum_alpha_sq[j] += n;
        self.acc.sum_alpha_quad[j] += n * n;
    }

    fn emission(&mut self, event: EmissionEvent) {
        if event.detected {
            self.detections += 1;
        }
        let b = (event.time / self.acc.bin_width + 1e-9).floor() as usize;
        if b >= self.acc.n_bins() {
            return;
        }
        if b != self.bin {
            self.flush_bin();
            self.bin = b;
        }
        self.acc.emitted_counts[b] += 1;
        self.emitted += 1;
        if event.detected {
            self.acc.detected_counts[b] += 1;
            self.detected += 1;
        }
    }
}

/// Weighted per-bin sums in floating point; the common input of all
/// estimators. Weights of one reproduce the accumulator; other weights give
/// jackknife and bootstrap replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub bin_width: f64,
    pub n_traj: f64,
    pub emitted: Vec<f64>,
    pub detected: Vec<f64>,
    pub emitted_sq: Vec<f64>,
    pub detected_sq: Vec<f64>,
    pub sum_alpha: Vec<Complex64>,
    pub sum_re_sq: Vec<f64>,
    pub sum_im_sq: Vec<f64>,
    pub sum_alpha_sq: Vec<f64>,
    pub sum_alpha_quad: Vec<f64>,
}

impl Moments {
    fn zeros(n_bins: usize, bin_width: f64) -> Self {
        Moments {
            bin_width,
            n_traj: 0.0,
            emitted: vec![0.0; n_bins],
            detected: vec![0.0; n_bins],
            emitted_sq: vec![0.0; n_bins],
            detected_sq: vec![0.0; n_bins],
            sum_alpha: vec![Complex64::new(0.0, 0.0); n_bins],
            sum_re_sq: vec![0.0; n_bins],
            sum_im_sq: vec![0.0; n_bins],
            sum_alpha_sq: vec![0.0; n_bins],
            sum_alpha_quad: vec![0.0; n_bins],
        }
    }

    pub fn n_bins(&self) -> usize {
        self.emitted.len()
    }
}

impl From<&EnsembleAccumulator> for Moments {
    fn from(acc: &EnsembleAccumulator) -> Self {
        let mut m = Moments::zeros(acc.n_bins(), acc.bin_width);
        acc.to_moments(1.0, &mut m);
        m
    }
}

/// Everything needed to run one ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    /// Measurement-stage dynamics.
    pub params: CavityParams,
    pub initial: CoherentAmplitude,
    pub config: SimConfig,
    pub bin_width: f64,
    /// Whether the ensemble is conditioned on a detection at `t = 0`.
    pub conditional: bool,
}

impl EnsembleSpec {
    /// Histogram bins covering `[0, t_max)`.
    pub fn n_bins(&self) -> usize {
        (self.config.t_max / self.bin_width).round() as usize
    }

    /// Configuration with the amplitude sample grid aligned to the bins.
    fn sim_config(&self) -> SimConfig {
        SimConfig {
            sample_stride: self.bin_width,
            ..self.config.clone()
        }
    }

    fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.config.validate(self.params.kappa)?;
        if !(self.bin_width > 0.0) || !self.bin_width.is_finite() {
            return Err(Error::invalid("bin_width", format!("must be > 0, got {}", self.bin_width)));
        }
        if self.config.stepping == Stepping::FixedStep {
            let ratio = self.bin_width / self.config.dt;
            if (ratio - ratio.round()).abs() > 1e-6 || ratio.round() < 1.0 {
                return Err(Error::invalid(
                    "bin_width",
                    format!("must be a whole number of steps (dt = {})", self.config.dt),
                ));
            }
        }
        Ok(())
    }
}

/// Fixed partition of `0..n_traj` into at most [`MAX_BLOCKS`] contiguous blocks.
pub fn block_ranges(n_traj: u64) -> Vec<Range<u64>> {
    let size = n_traj.div_ceil(MAX_BLOCKS).max(1);
    (0..n_traj)
        .step_by(size as usize)
        .map(|start| start..(start + size).min(n_traj))
        .collect()
}

/// Accumulates the trajectories in `range`, in index order.
pub fn accumulate_range(spec: &EnsembleSpec, range: Range<u64>) -> Result<EnsembleAccumulator> {
    let config = spec.sim_config();
    let mut acc = EnsembleAccumulator::new(spec.n_bins(), spec.bin_width, spec.conditional);
    for index in range {
        let mut sink = acc.sink();
        run_trajectory(&spec.params, spec.initial, &config, index, &mut sink)?;
        sink.finish();
    }
    Ok(acc)
}

/// The merged result of one ensemble run, with its block accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub spec: EnsembleSpec,
    pub blocks: Vec<EnsembleAccumulator>,
    pub total: EnsembleAccumulator,
}

impl Ensemble {
    pub fn moments(&self) -> Moments {
        Moments::from(&self.total)
    }

    /// Block-weighted sums; `weights[j]` multiplies block `j`.
    pub fn weighted_moments(&self, weights: &[f64]) -> Moments {
        debug_assert_eq!(weights.len(), self.blocks.len());
        let mut m = Moments::zeros(self.total.n_bins(), self.total.bin_width);
        for (block, &w) in self.blocks.iter().zip(weights) {
            if w != 0.0 {
                block.to_moments(w, &mut m);
            }
        }
        m
    }

    /// Sums over every block except block `j`.
    pub fn leave_one_out(&self, j: usize) -> Moments {
        let mut m = self.moments();
        self.blocks[j].to_moments(-1.0, &mut m);
        m
    }

    /// Time of the start of bin `b`.
    pub fn bin_start(&self, b: usize) -> f64 {
        self.total.bin_start(b)
    }
}

/// Runs the ensemble on `workers` threads. The result is bit-identical for
/// any worker count.
pub fn run_ensemble(spec: &EnsembleSpec, workers: usize) -> Result<Ensemble> {
    spec.validate()?;
    let ranges = block_ranges(spec.config.n_traj);
    let blocks: Vec<EnsembleAccumulator> = if workers <= 1 {
        ranges
            .into_iter()
            .map(|r| accumulate_range(spec, r))
            .collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Usage(format!("cannot start {workers} workers: {e}")))?;
        pool.install(|| {
            ranges
                .into_par_iter()
                .map(|r| accumulate_range(spec, r))
                .collect::<Result<_>>()
        })?
    };
    let mut total = EnsembleAccumulator::new(spec.n_bins(), spec.bin_width, spec.conditional);
    for block in &blocks {
        total.merge(block)?;
    }
    Ok(Ensemble {
        spec: spec.clone(),
        blocks,
        total,
    })
}
