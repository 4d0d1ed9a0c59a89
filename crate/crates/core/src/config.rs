//! Experiment configuration files.
//!
//! The format is line oriented:
//!
//! ```text
//! # comment
//! kind = g2
//! trajectories = 100000
//!
//! [cavity]
//! alpha_sq = 4
//! phi = 1.0          # units of pi
//! eta = 0.5
//! beta = 2, 0        # RE[, IM]
//!
//! [simulation]
//! t_max = 2
//! ```
//!
//! Keys before the first section header (or inside `[experiment]`) describe
//! the run itself. Unknown keys, unknown sections and repeated keys are
//! errors. Lists are comma separated. Phases are given in units of pi.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use num_complex::Complex64;

use crate::ensemble::DEFAULT_BIN_WIDTH;
use crate::error::{Error, Result};
use crate::estimators::{BootstrapOptions, IntensityEstimator, Signal, Stencil, UncertaintyMode, DEFAULT_NOISE_FLOOR_Z};
use crate::params::CavityParams;
use crate::scaling::DEFAULT_FIT_START;
use crate::trajectory::{SimConfig, Stepping, DEFAULT_DT};

/// Trajectories per ensemble unless configured otherwise.
pub const DEFAULT_TRAJECTORIES: u64 = 1_000_000;
pub const DEFAULT_ALPHA_SQ: f64 = 4.0;
pub const DEFAULT_ETA: f64 = 0.5;
pub const DEFAULT_T_MAX: f64 = 2.0;

const KEYS: &[(&str, &[&str])] = &[
    ("", &["kind", "seed", "trajectories", "workers", "out", "input"]),
    ("cavity", &["alpha_sq", "phi", "eta", "beta", "kappa"]),
    ("simulation", &["dt", "t_max", "mode", "bin_width", "max_events"]),
    (
        "accuracy",
        &[
            "signal",
            "estimator",
            "uncertainty",
            "dphi",
            "stencil",
            "bootstrap_replicates",
            "noise_floor_z",
            "fit_from",
            "fit_to",
            "window",
        ],
    ),
    ("sweep", &["phi", "alpha_sq", "t"]),
    ("phase_diagram", &["forced"]),
    ("oracle", &["dim", "dt", "tolerance_se"]),
    ("kraus", &["pair", "n", "psi"]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    SteadyState,
    PhaseDiagram,
    Intensity,
    G2,
    AccuracyTime,
    AccuracyPhoton,
    ScalingFit,
    OracleValidate,
    KrausDemo,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        ExperimentKind::SteadyState,
        ExperimentKind::PhaseDiagram,
        ExperimentKind::Intensity,
        ExperimentKind::G2,
        ExperimentKind::AccuracyTime,
        ExperimentKind::AccuracyPhoton,
        ExperimentKind::ScalingFit,
        ExperimentKind::OracleValidate,
        ExperimentKind::KrausDemo,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::SteadyState => "steady_state",
            ExperimentKind::PhaseDiagram => "phase_diagram",
            ExperimentKind::Intensity => "intensity",
            ExperimentKind::G2 => "g2",
            ExperimentKind::AccuracyTime => "accuracy_time",
            ExperimentKind::AccuracyPhoton => "accuracy_photon",
            ExperimentKind::ScalingFit => "scaling_fit",
            ExperimentKind::OracleValidate => "oracle_validate",
            ExperimentKind::KrausDemo => "kraus_demo",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = ExperimentKind::ALL.iter().map(|k| k.name()).collect();
                format!("unknown experiment kind `{s}` (expected one of {})", names.join(", "))
            })
    }
}

/// Where a value came from, for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Flag(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    origin: Origin,
}

/// Raw `key = value` pairs, keyed by `section.key` (bare `key` for the
/// experiment section).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigEntries {
    entries: BTreeMap<String, Entry>,
}

fn is_known(section: &str, key: &str) -> bool {
    KEYS.iter().any(|(s, keys)| *s == section && keys.contains(&key))
}

fn qualified(section: &str, key: &str) -> String {
    if section.is_empty() {
        key.to_string()
    } else {
        format!("{section}.{key}")
    }
}

pub fn parse_entries(text: &str) -> Result<ConfigEntries> {
    let mut out = ConfigEntries::default();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |message: String| Error::Config { line, message };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| err(format!("malformed section header `{content}`")))?
                .trim();
            let name = if name == "experiment" { "" } else { name };
            if !KEYS.iter().any(|(s, _)| *s == name) {
                return Err(err(format!("unknown section `[{name}]`")));
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got `{content}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(err("missing key before `=`".into()));
        }
        if value.is_empty() {
            return Err(err(format!("missing value for `{key}`")));
        }
        if !is_known(&section, key) {
            let place = if section.is_empty() {
                "at top level".to_string()
            } else {
                format!("in section [{section}]")
            };
            return Err(err(format!("unknown key `{key}` {place}")));
        }
        let full = qualified(&section, key);
        if let Some(prev) = out.entries.get(&full) {
            let first = match prev.origin {
                Origin::Line(l) => l,
                Origin::Flag(_) => 0,
            };
            return Err(err(format!("duplicate key `{key}` (first set on line {first})")));
        }
        out.entries.insert(
            full,
            Entry {
                value: value.to_string(),
                origin: Origin::Line(line),
            },
        );
    }
    Ok(out)
}

impl ConfigEntries {
    /// Sets `key` (`section.key` form) from a command-line flag, replacing
    /// any value from the file.
    pub fn set_override(&mut self, key: &str, value: impl Into<String>, flag: &'static str) -> Result<()> {
        let (section, bare) = key.split_once('.').unwrap_or(("", key));
        if !is_known(section, bare) {
            return Err(Error::Usage(format!("--{flag}: no configuration key `{key}`")));
        }
        self.entries.insert(
            key.to_string(),
            Entry {
                value: value.into(),
                origin: Origin::Flag(flag),
            },
        );
        Ok(())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.contains_key(key)
    }

    fn error(&self, key: &str, message: String) -> Error {
        let bare = key.rsplit('.').next().unwrap_or(key);
        match self.entries.get(key).map(|e| e.origin) {
            Some(Origin::Line(line)) => Error::Config {
                line,
                message: format!("`{bare}`: {message}"),
            },
            Some(Origin::Flag(flag)) => Error::Usage(format!("--{flag}: {message}")),
            None => Error::Config {
                line: 0,
                message: format!("`{bare}`: {message}"),
            },
        }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    fn parse<T: FromStr>(&self, key: &str, what: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| self.error(key, format!("expected {what}, got `{v}`"))),
        }
    }

    fn float(&self, key: &str) -> Result<Option<f64>> {
        let v: Option<f64> = self.parse(key, "a number")?;
        match v {
            Some(x) if !x.is_finite() => Err(self.error(key, format!("must be finite, got {x}"))),
            other => Ok(other),
        }
    }

    fn float_in(&self, key: &str, default: f64, ok: impl Fn(f64) -> bool, range: &str) -> Result<f64> {
        let v = self.float(key)?.unwrap_or(default);
        if ok(v) {
            Ok(v)
        } else {
            Err(self.error(key, format!("must be {range}, got {v}")))
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(raw) = self.raw(key) else {
            return Ok(None);
        };
        raw.split(',')
            .map(|s| {
                let s = s.trim();
                s.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| self.error(key, format!("expected a list of numbers, got `{s}`")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn choice<T: Copy>(&self, key: &str, options: &[(&str, T)]) -> Result<Option<T>> {
        let Some(raw) = self.raw(key) else {
            return Ok(None);
        };
        options
            .iter()
            .find(|(name, _)| *name == raw)
            .map(|(_, v)| Some(*v))
            .ok_or_else(|| {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.error(key, format!("expected one of {}, got `{raw}`", names.join(", ")))
            })
    }
}

/// The parameter values swept by an experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    /// Preparation phases (radians) and snapshot times.
    PhaseGrid { phis: Vec<f64>, times: Vec<f64> },
    PhotonNumbers(Vec<f64>),
    Times(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyOptions {
    pub signal: Signal,
    pub mode: UncertaintyMode,
    /// Finite-difference offset in radians.
    pub dphi: f64,
    pub stencil: Stencil,
    pub bootstrap: BootstrapOptions,
    pub noise_floor_z: f64,
    /// Resource range of the power-law fit; `None` fits every point.
    pub fit_range: Option<(f64, f64)>,
    /// Time window averaged over in a photon-number scan.
    pub window: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub dim: usize,
    pub dt: f64,
    /// Agreement threshold in combined standard errors.
    pub tolerance_se: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KrausPreset {
    Swap,
    Projective,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrausOptions {
    pub pair: KrausPreset,
    pub n: usize,
    /// Amplitudes of the input qubit in the computational basis.
    pub psi: [Complex64; 2],
}

/// A fully validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Preparation-stage parameters.
    pub params: CavityParams,
    pub config: SimConfig,
    pub sweep: Option<Sweep>,
    pub output_path: Option<PathBuf>,
    pub input_path: Option<PathBuf>,
    pub workers: Option<usize>,
    pub bin_width: f64,
    pub accuracy: AccuracyOptions,
    pub forced_feedback: bool,
    pub oracle: OracleOptions,
    pub kraus: KrausOptions,
}

pub fn parse_config(text: &str) -> Result<ExperimentSpec> {
    ExperimentSpec::from_entries(&parse_entries(text)?)
}

fn positive(x: f64) -> bool {
    x > 0.0
}

impl ExperimentSpec {
    pub fn from_entries(c: &ConfigEntries) -> Result<Self> {
        let kind = match c.raw("kind") {
            None => return Err(Error::Usage("no experiment kind: set `kind` in the config or pass --kind".into())),
            Some(raw) => raw.parse::<ExperimentKind>().map_err(|e| c.error("kind", e))?,
        };

        let alpha_sq = c.float_in("cavity.alpha_sq", DEFAULT_ALPHA_SQ, |x| x >= 0.0, ">= 0")?;
        let kappa = c.float_in("cavity.kappa", 1.0, positive, "> 0")?;
        let eta = c.float_in("cavity.eta", DEFAULT_ETA, |x| (0.0..=1.0).contains(&x), "in [0, 1]")?;

        let signal_kind = c.choice("accuracy.signal", &[("intensity", false), ("g2", true)])?;
        let g2_based = match kind {
            ExperimentKind::G2 => true,
            ExperimentKind::AccuracyPhoton => signal_kind.unwrap_or(true),
            ExperimentKind::AccuracyTime => signal_kind.unwrap_or(false),
            _ => false,
        };
        let phi = PI * c.float("cavity.phi")?.unwrap_or(if g2_based { 1.0 } else { 0.3 });

        let amplitude = alpha_sq.sqrt();
        let beta = match c.list("cavity.beta")? {
            None => Complex64::new(amplitude, 0.0),
            Some(v) if v.len() == 1 => Complex64::new(v[0], 0.0),
            Some(v) if v.len() == 2 => Complex64::new(v[0], v[1]),
            Some(_) => return Err(c.error("cavity.beta", "expected RE or RE, IM".into())),
        };
        let params = CavityParams::new(kappa, amplitude * kappa, phi, eta, beta)?;

        let stepping = c
            .choice("simulation.mode", &[("fixed", Stepping::FixedStep), ("event", Stepping::EventDriven)])?
            .unwrap_or_default();
        let dt = c.float_in("simulation.dt", DEFAULT_DT, positive, "> 0")?;
        if stepping == Stepping::FixedStep && dt * kappa > crate::trajectory::MAX_FIXED_STEP * (1.0 + 1e-12) {
            return Err(c.error("simulation.dt", format!("fixed stepping needs dt <= 0.01/kappa, got {dt}")));
        }
        let t_max = c.float_in("simulation.t_max", DEFAULT_T_MAX, |x| x >= 0.0, ">= 0")?;
        let bin_width = c.float_in("simulation.bin_width", DEFAULT_BIN_WIDTH, positive, "> 0")?;
        if stepping == Stepping::FixedStep {
            let ratio = bin_width / dt;
            if (ratio - ratio.round()).abs() > 1e-6 || ratio.round() < 1.0 {
                return Err(c.error("simulation.bin_width", format!("must be a whole number of steps of {dt}")));
            }
        }
        let n_traj: u64 = c.parse("trajectories", "a positive integer")?.unwrap_or(DEFAULT_TRAJECTORIES);
        if n_traj == 0 {
            return Err(c.error("trajectories", "must be >= 1".into()));
        }
        let master_seed: u64 = c.parse("seed", "a non-negative integer")?.unwrap_or(0);
        let max_events: usize = c
            .parse("simulation.max_events", "a positive integer")?
            .unwrap_or(SimConfig::default().max_events);
        let config = SimConfig {
            dt,
            t_max,
            n_traj,
            master_seed,
            stepping,
            sample_stride: bin_width,
            max_events,
        };

        let workers: Option<usize> = c.parse("workers", "a positive integer")?;
        if workers == Some(0) {
            return Err(c.error("workers", "must be >= 1".into()));
        }

        let sweep = Self::sweep(c, kind)?;
        let accuracy = Self::accuracy(c, kind, &params, g2_based, t_max)?;
        let forced_feedback = c
            .choice("phase_diagram.forced", &[("true", true), ("false", false)])?
            .unwrap_or(false);
        if c.contains("phase_diagram.forced") && kind != ExperimentKind::PhaseDiagram {
            return Err(c.error("phase_diagram.forced", format!("does not apply to kind {kind}")));
        }

        let oracle = OracleOptions {
            dim: c.parse("oracle.dim", "an integer")?.unwrap_or(64),
            dt: c.float_in("oracle.dt", 1e-3, positive, "> 0")?,
            tolerance_se: c.float_in("oracle.tolerance_se", 3.0, positive, "> 0")?,
        };
        if oracle.dim < 2 {
            return Err(c.error("oracle.dim", format!("must be >= 2, got {}", oracle.dim)));
        }

        let kraus = KrausOptions {
            pair: c
                .choice("kraus.pair", &[("swap", KrausPreset::Swap), ("projective", KrausPreset::Projective)])?
                .unwrap_or(KrausPreset::Swap),
            n: c.parse("kraus.n", "an integer")?.unwrap_or(2),
            psi: Self::psi(c)?,
        };
        if !(1..=16).contains(&kraus.n) {
            return Err(c.error("kraus.n", format!("must lie in 1..=16, got {}", kraus.n)));
        }

        let input_path = c.raw("input").map(PathBuf::from);
        if kind == ExperimentKind::ScalingFit && input_path.is_none() {
            return Err(Error::Usage("kind scaling_fit needs `input` (an accuracy CSV)".into()));
        }

        Ok(ExperimentSpec {
            kind,
            params,
            config,
            sweep,
            output_path: c.raw("out").map(PathBuf::from),
            input_path,
            workers,
            bin_width,
            accuracy,
            forced_feedback,
            oracle,
            kraus,
        })
    }

    fn sweep(c: &ConfigEntries, kind: ExperimentKind) -> Result<Option<Sweep>> {
        let allowed: &[&str] = match kind {
            ExperimentKind::PhaseDiagram => &["sweep.phi", "sweep.t"],
            ExperimentKind::AccuracyPhoton => &["sweep.alpha_sq"],
            ExperimentKind::OracleValidate => &["sweep.t"],
            _ => &[],
        };
        for key in ["sweep.phi", "sweep.alpha_sq", "sweep.t"] {
            if c.contains(key) && !allowed.contains(&key) {
                return Err(c.error(key, format!("not a sweep of kind {kind}")));
            }
        }
        let nonneg = |key: &str, v: Vec<f64>| -> Result<Vec<f64>> {
            if v.iter().any(|&x| x < 0.0) {
                Err(c.error(key, "values must be >= 0".into()))
            } else {
                Ok(v)
            }
        };
        Ok(match kind {
            ExperimentKind::PhaseDiagram => {
                let phis = c
                    .list("sweep.phi")?
                    .unwrap_or_else(|| (0..=10).map(|i| 0.5 + 0.1 * i as f64).collect());
                let times = nonneg("sweep.t", c.list("sweep.t")?.unwrap_or_else(|| vec![0.0, 0.25, 0.5, 0.75, 1.0]))?;
                Some(Sweep::PhaseGrid {
                    phis: phis.into_iter().map(|p| p * PI).collect(),
                    times,
                })
            }
            ExperimentKind::AccuracyPhoton => {
                let n = c
                    .list("sweep.alpha_sq")?
                    .unwrap_or_else(|| (1..=9).map(f64::from).collect());
                if n.iter().any(|&x| x <= 0.0) {
                    return Err(c.error("sweep.alpha_sq", "values must be > 0".into()));
                }
                Some(Sweep::PhotonNumbers(n))
            }
            ExperimentKind::OracleValidate => Some(Sweep::Times(nonneg(
                "sweep.t",
                c.list("sweep.t")?.unwrap_or_else(|| vec![0.1, 0.5, 1.0]),
            )?)),
            _ => None,
        })
    }

    fn accuracy(
        c: &ConfigEntries,
        kind: ExperimentKind,
        params: &CavityParams,
        g2_based: bool,
        t_max: f64,
    ) -> Result<AccuracyOptions> {
        let estimator = c.choice(
            "accuracy.estimator",
            &[
                ("emitted", IntensityEstimator::Emitted),
                ("detected", IntensityEstimator::Detected),
                ("amplitude", IntensityEstimator::Amplitude),
            ],
        )?;
        let signal = if g2_based {
            Signal::G2(estimator.unwrap_or(IntensityEstimator::Detected))
        } else {
            Signal::Intensity(estimator.unwrap_or(IntensityEstimator::Emitted))
        };
        let mode = c
            .choice(
                "accuracy.uncertainty",
                &[("per_trajectory", UncertaintyMode::PerTrajectory), ("bootstrap", UncertaintyMode::Bootstrap)],
            )?
            .unwrap_or(if g2_based {
                UncertaintyMode::Bootstrap
            } else {
                UncertaintyMode::PerTrajectory
            });
        if g2_based && mode == UncertaintyMode::PerTrajectory {
            return Err(c.error("accuracy.uncertainty", "g2 has no single-trajectory value; use bootstrap".into()));
        }
        let stencil = c
            .choice(
                "accuracy.stencil",
                &[("auto", None), ("centered", Some(Stencil::Centered)), ("forward", Some(Stencil::Forward))],
            )?
            .flatten()
            .unwrap_or_else(|| auto_stencil(params));
        let fit_from = c.float_in("accuracy.fit_from", DEFAULT_FIT_START, |x| x >= 0.0, ">= 0")?;
        let default_to = if kind == ExperimentKind::AccuracyTime { t_max } else { f64::INFINITY };
        let fit_to = match c.float("accuracy.fit_to")? {
            Some(x) if x <= fit_from => {
                return Err(c.error("accuracy.fit_to", format!("must be greater than fit_from, got {x}")));
            }
            Some(x) => x,
            None => default_to,
        };
        let window = match c.list("accuracy.window")? {
            None => (fit_from, t_max),
            Some(v) if v.len() == 2 && v[0] >= 0.0 && v[1] >= v[0] => (v[0], v[1]),
            Some(_) => return Err(c.error("accuracy.window", "expected FROM, TO with 0 <= FROM <= TO".into())),
        };
        let explicit = c.contains("accuracy.fit_from") || c.contains("accuracy.fit_to");
        let fit_range = (kind == ExperimentKind::AccuracyTime || explicit).then_some((fit_from, fit_to));
        Ok(AccuracyOptions {
            signal,
            mode,
            dphi: PI * c.float_in("accuracy.dphi", 0.002, positive, "> 0")?,
            stencil,
            bootstrap: BootstrapOptions {
                replicates: c
                    .parse("accuracy.bootstrap_replicates", "an integer")?
                    .unwrap_or(BootstrapOptions::default().replicates),
                seed: c.parse("seed", "a non-negative integer")?.unwrap_or(0),
            },
            noise_floor_z: c.float_in("accuracy.noise_floor_z", DEFAULT_NOISE_FLOOR_Z, |x| x >= 0.0, ">= 0")?,
            fit_range,
            window,
        })
    }

    fn psi(c: &ConfigEntries) -> Result<[Complex64; 2]> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let psi = match c.raw("kraus.psi") {
            None | Some("plus") => [Complex64::new(h, 0.0), Complex64::new(h, 0.0)],
            Some("zero") => [one, zero],
            Some("one") => [zero, one],
            Some(_) => {
                let v = c.list("kraus.psi")?.unwrap_or_default();
                if v.len() != 4 {
                    return Err(c.error(
                        "kraus.psi",
                        "expected plus, zero, one or RE0, IM0, RE1, IM1".into(),
                    ));
                }
                [Complex64::new(v[0], v[1]), Complex64::new(v[2], v[3])]
            }
        };
        let norm = (psi[0].norm_sqr() + psi[1].norm_sqr()).sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(c.error("kraus.psi", format!("state must be normalized, norm is {norm}")));
        }
        Ok(psi)
    }

    /// The measurement-stage accuracy setup described by this spec.
    pub fn accuracy_setup(&self) -> crate::estimators::AccuracySetup {
        let a = &self.accuracy;
        crate::estimators::AccuracySetup {
            prepared: self.params,
            phi0: self.params.phi(),
            dphi: a.dphi,
            stencil: a.stencil,
            signal: a.signal,
            mode: a.mode,
            config: self.config.clone(),
            bin_width: self.bin_width,
            bootstrap: a.bootstrap,
            noise_floor_z: a.noise_floor_z,
        }
    }
}

/// Forward differences at phases where the dynamics is mirror symmetric
/// (`phi = 0` or `pi` with a real feedback pulse); centered elsewhere.
pub fn auto_stencil(params: &CavityParams) -> Stencil {
    if params.phi().sin().abs() < 1e-9 && params.beta.im == 0.0 {
        Stencil::Forward
    } else {
        Stencil::Centered
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL_G2: &str = "kind = g2\n[cavity]\nphi = 1\nalpha_sq = 4\neta = 0.5\n[simulation]\nt_max = 2\n";

    #[test]
    fn minimal_g2_gets_defaults() {
        let spec = parse_config(MINIMAL_G2).unwrap();
        assert_eq!(spec.kind, ExperimentKind::G2);
        assert!((spec.params.phi() - PI).abs() < 1e-15);
        assert_eq!(spec.params.beta, Complex64::new(2.0, 0.0));
        assert_eq!(spec.config.n_traj, DEFAULT_TRAJECTORIES);
        assert_eq!(spec.config.dt, DEFAULT_DT);
        assert_eq!(spec.config.t_max, 2.0);
        assert_eq!(spec.bin_width, 0.01);
        assert_eq!(spec.accuracy.signal, Signal::G2(IntensityEstimator::Detected));
        assert_eq!(spec.accuracy.mode, UncertaintyMode::Bootstrap);
        assert_eq!(spec.accuracy.stencil, Stencil::Forward);
        assert!(spec.sweep.is_none());
    }

    #[test]
    fn eta_out_of_range_names_key_and_line() {
        let err = parse_config("kind = g2\n[cavity]\neta = 1.5\n").unwrap_err();
        assert_eq!(
            err,
            Error::Config {
                line: 3,
                message: "`eta`: must be in [0, 1], got 1.5".into()
            }
        );
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn duplicate_key_is_an_error() {
        let err = parse_config("kind = g2\n[cavity]\neta = 0.5\neta = 0.6\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 4, ref message } if message.contains("duplicate")));
    }

    #[test]
    fn unknown_keys_and_sections() {
        assert!(matches!(parse_config("kind = g2\ncolour = red\n"), Err(Error::Config { line: 2, .. })));
        assert!(matches!(parse_config("kind = g2\n[cavity]\nt_max = 1\n"), Err(Error::Config { line: 3, .. })));
        assert!(matches!(parse_config("[nowhere]\n"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(parse_config("kind = g3\n"), Err(Error::Config { line: 1, .. })));
        assert!(matches!(parse_config("seed = 1\n"), Err(Error::Usage(_))));
    }

    #[test]
    fn comments_lists_and_experiment_section() {
        let text = "# header\n[experiment]\nkind = phase_diagram # trailing\nseed = 9\n\n[sweep]\nphi = 0.5, 1.0, 1.5\nt = 0, 0.5\n";
        let spec = parse_config(text).unwrap();
        assert_eq!(spec.config.master_seed, 9);
        let Some(Sweep::PhaseGrid { phis, times }) = spec.sweep else {
            panic!("expected a phase grid");
        };
        assert_eq!(phis.len(), 3);
        assert!((phis[2] - 1.5 * PI).abs() < 1e-15);
        assert_eq!(times, vec![0.0, 0.5]);
    }

    #[test]
    fn sweep_must_match_kind() {
        let err = parse_config("kind = g2\n[sweep]\nalpha_sq = 1, 2\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 3, .. }));
    }

    #[test]
    fn beta_accepts_one_or_two_components() {
        let spec = parse_config("kind = intensity\n[cavity]\nbeta = 0, -2\n").unwrap();
        assert_eq!(spec.params.beta, Complex64::new(0.0, -2.0));
        let spec = parse_config("kind = intensity\n[cavity]\nbeta = 1.5\n").unwrap();
        assert_eq!(spec.params.beta, Complex64::new(1.5, 0.0));
        assert!(parse_config("kind = intensity\n[cavity]\nbeta = 1, 2, 3\n").is_err());
    }

    #[test]
    fn flag_overrides_file() {
        let mut entries = parse_entries(MINIMAL_G2).unwrap();
        entries.set_override("cavity.eta", "1", "eta").unwrap();
        let spec = ExperimentSpec::from_entries(&entries).unwrap();
        assert_eq!(spec.params.eta, 1.0);
        entries.set_override("cavity.eta", "2", "eta").unwrap();
        let err = ExperimentSpec::from_entries(&entries).unwrap_err();
        assert!(matches!(err, Error::Usage(ref m) if m.starts_with("--eta")));
    }

    #[test]
    fn coarse_step_rejected_for_fixed_mode() {
        assert!(parse_config("kind = intensity\n[simulation]\ndt = 0.05\n").is_err());
        let spec = parse_config("kind = intensity\n[simulation]\ndt = 0.05\nmode = event\nbin_width = 0.05\n").unwrap();
        assert_eq!(spec.config.stepping, Stepping::EventDriven);
    }

    #[test]
    fn g2_rejects_per_trajectory_uncertainty() {
        let text = "kind = accuracy_time\n[accuracy]\nsignal = g2\nuncertainty = per_trajectory\n";
        assert!(matches!(parse_config(text), Err(Error::Config { line: 4, .. })));
    }

    #[test]
    fn intensity_accuracy_defaults() {
        let spec = parse_config("kind = accuracy_time\n").unwrap();
        assert!((spec.params.phi() - 0.3 * PI).abs() < 1e-15);
        assert_eq!(spec.accuracy.signal, Signal::Intensity(IntensityEstimator::Emitted));
        assert_eq!(spec.accuracy.stencil, Stencil::Centered);
        assert_eq!(spec.accuracy.fit_range, Some((0.2, 2.0)));
        assert!((spec.accuracy.dphi - 0.002 * PI).abs() < 1e-18);
    }

    #[test]
    fn scaling_fit_needs_input() {
        assert!(parse_config("kind = scaling_fit\n").is_err());
        let spec = parse_config("kind = scaling_fit\ninput = acc.csv\n").unwrap();
        assert_eq!(spec.accuracy.fit_range, None);
        let spec = parse_config("kind = scaling_fit\ninput = acc.csv\n[accuracy]\nfit_from = 2\nfit_to = 8\n").unwrap();
        assert_eq!(spec.accuracy.fit_range, Some((2.0, 8.0)));
    }
}
