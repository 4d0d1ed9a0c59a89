//! Running configured experiments and writing their CSV tables.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use nalgebra::Vector2;

use crate::config::{ExperimentKind, ExperimentSpec, KrausPreset, Sweep};
use crate::ensemble::run_ensemble;
use crate::error::{Error, Result};
use crate::estimators::{
    accuracy_photon_scan, accuracy_time_curve, conditional_ensemble, g2_curve, intensity_curve,
    phase_diagram_snapshot, unconditional_spec, AccuracyPoint, Signal,
};
use crate::kraus::{
    entangled_equivalent_state, expand_product_state, sequential_measurement_distribution,
    single_shot_distribution, KrausPair, OutcomeTable,
};
use crate::scaling::{power_law_fit, PowerLawFit};
use crate::trajectory::{steady_state_alpha, Stepping};
use crate::validation::compare_with_oracle;
use crate::{Complex64, CoherentAmplitude};

pub const INTENSITY_COLUMNS: &[&str] = &["T", "I_detected", "I_emitted", "I_analytic", "stderr"];
pub const G2_COLUMNS: &[&str] = &["T", "g2", "stderr", "n_conditional", "n_unconditional"];
pub const PHASE_COLUMNS: &[&str] = &["phi", "t", "mean_re_alpha", "mean_im_alpha", "std_re", "std_im"];
pub const ACCURACY_COLUMNS: &[&str] = &[
    "resource",
    "signal",
    "signal_std",
    "sensitivity",
    "delta_phi",
    "uncertainty_mode",
];
pub const FIT_COLUMNS: &[&str] = &["exponent", "log_prefactor", "r_squared", "n_points", "range_min", "range_max"];
pub const ORACLE_COLUMNS: &[&str] = &["t", "trajectory_mean", "trajectory_se", "oracle_mean", "z"];
pub const KRAUS_COLUMNS: &[&str] = &["outcome", "sequential", "single_shot"];

/// A CSV table; cells are already formatted, missing values are empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: &'static [&'static str],
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(columns: &'static [&'static str]) -> Self {
        Table {
            columns,
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Header row and data rows, newline terminated.
    pub fn body(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.columns).expect("writing to memory");
        for row in &self.rows {
            w.write_record(row).expect("writing to memory");
        }
        String::from_utf8(w.into_inner().expect("writing to memory")).expect("cells are UTF-8")
    }
}

/// What an experiment produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub table: Option<Table>,
    /// Human-readable result lines.
    pub summary: Vec<String>,
    /// False when a validation experiment found a disagreement.
    pub passed: bool,
}

impl Report {
    fn table(table: Table, summary: Vec<String>) -> Self {
        Report {
            table: Some(table),
            summary,
            passed: true,
        }
    }
}

pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Amplitude with rounding residue below `1e-12 |alpha|` cleared.
pub fn format_amplitude(alpha: CoherentAmplitude) -> String {
    let z = alpha.value();
    let tol = 1e-12 * z.norm();
    let clean = |x: f64| if x.abs() <= tol { 0.0 } else { x };
    CoherentAmplitude::new_unchecked(Complex64::new(clean(z.re), clean(z.im))).to_string()
}

fn format_probability(p: f64) -> String {
    let s = format!("{:.12}", p);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_string() }
}

/// `{01:0.5, 10:0.5}`, listing outcomes with nonzero probability.
pub fn format_distribution(labels: impl Iterator<Item = (String, f64)>) -> String {
    let parts: Vec<String> = labels
        .filter(|(_, p)| p.abs() > 1e-15)
        .map(|(l, p)| format!("{l}:{}", format_probability(p)))
        .collect();
    format!("{{{}}}", parts.join(", "))
}

fn accuracy_table(points: &[AccuracyPoint]) -> Table {
    let mut t = Table::new(ACCURACY_COLUMNS);
    for p in points {
        t.push(vec![
            num(p.resource),
            num(p.signal),
            num(p.signal_std),
            num(p.sensitivity),
            opt(p.delta_phi),
            p.mode.name().into(),
        ]);
    }
    t
}

fn fit_row(fit: &PowerLawFit) -> Vec<String> {
    vec![
        num(fit.exponent),
        num(fit.log_prefactor),
        num(fit.r_squared),
        fit.n_points.to_string(),
        num(fit.resource_range.0),
        num(fit.resource_range.1),
    ]
}

fn describe_fit(points: &[AccuracyPoint], range: Option<(f64, f64)>, resource: &str) -> Vec<String> {
    let pairs: Vec<(f64, f64)> = points.iter().filter_map(|p| Some((p.resource, p.delta_phi?))).collect();
    let flagged = points.iter().filter(|p| p.below_noise_floor).count();
    let mut lines = vec![format!(
        "{} of {} points have a gradient below the noise floor",
        flagged,
        points.len()
    )];
    match power_law_fit(&pairs, range) {
        Ok(fit) => {
            lines.push(format!(
                "dphi ~ {resource}^{:.4} (r^2 = {:.4}, {} points over [{}, {}])",
                fit.exponent, fit.r_squared, fit.n_points, fit.resource_range.0, fit.resource_range.1
            ));
            lines.extend(fit.warning().map(|w| format!("warning: {w}")));
        }
        Err(e) => lines.push(format!("no power-law fit: {e}")),
    }
    lines
}

/// Reads `(resource, delta_phi)` pairs from an accuracy CSV, skipping rows
/// whose accuracy is missing.
pub fn read_accuracy_csv(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let bad = |line: u64, message: String| Error::Validation(format!("accuracy table line {line}: {message}"));
    let header = reader
        .headers()
        .map_err(|e| Error::Validation(format!("accuracy table: {e}")))?
        .clone();
    if header.is_empty() {
        return Err(Error::Validation("accuracy table is empty".into()));
    }
    if header.iter().ne(ACCURACY_COLUMNS.iter().copied()) {
        return Err(Error::Validation(format!(
            "accuracy table: expected header `{}`",
            ACCURACY_COLUMNS.join(",")
        )));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Validation(format!("accuracy table: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        if record[4].is_empty() {
            continue;
        }
        let parse = |s: &str| s.parse::<f64>().map_err(|_| bad(line, format!("`{s}` is not a number")));
        out.push((parse(&record[0])?, parse(&record[4])?));
    }
    Ok(out)
}

/// Runs the experiment and returns its table and summary.
pub fn run_experiment(spec: &ExperimentSpec, workers: usize) -> Result<Report> {
    let workers = workers.max(1);
    let params = &spec.params;
    let config = &spec.config;
    match spec.kind {
        ExperimentKind::SteadyState => {
            let alpha = steady_state_alpha(params)?;
            Ok(Report {
                table: None,
                summary: vec![format_amplitude(alpha)],
                passed: true,
            })
        }
        ExperimentKind::PhaseDiagram => {
            let Some(Sweep::PhaseGrid { phis, times }) = &spec.sweep else {
                return Err(Error::Validation("phase diagram needs a phase grid".into()));
            };
            let rows = phase_diagram_snapshot(params, phis, times, spec.forced_feedback, config, workers)?;
            let mut t = Table::new(PHASE_COLUMNS);
            for r in &rows {
                t.push(vec![
                    num(r.phi),
                    num(r.t),
                    num(r.mean_re_alpha),
                    num(r.mean_im_alpha),
                    num(r.std_re),
                    num(r.std_im),
                ]);
            }
            let summary = times
                .iter()
                .map(|&time| {
                    format!(
                        "t = {time}: max pairwise distance {:.6}",
                        crate::estimators::max_pairwise_distance(&rows, time)
                    )
                })
                .collect();
            Ok(Report::table(t, summary))
        }
        ExperimentKind::Intensity => {
            let ensemble = run_ensemble(&unconditional_spec(params, config, spec.bin_width)?, workers)?;
            let rows = intensity_curve(&ensemble.total, params)?;
            let mut t = Table::new(INTENSITY_COLUMNS);
            for r in &rows {
                t.push(vec![
                    num(r.t),
                    num(r.i_detected),
                    num(r.i_emitted),
                    num(r.i_analytic),
                    num(r.stderr),
                ]);
            }
            let detections = ensemble.total.total_detections as f64 / ensemble.total.n_traj as f64;
            Ok(Report::table(t, vec![format!("mean detections per trajectory: {detections:.6}")]))
        }
        ExperimentKind::G2 => {
            let estimator = match spec.accuracy.signal {
                Signal::G2(e) | Signal::Intensity(e) => e,
            };
            let uncond = run_ensemble(&unconditional_spec(params, config, spec.bin_width)?, workers)?;
            let cond = conditional_ensemble(params, config, spec.bin_width, workers)?;
            let rows = g2_curve(&cond, &uncond, estimator, &spec.accuracy.bootstrap)?;
            let mut t = Table::new(G2_COLUMNS);
            for r in &rows {
                t.push(vec![
                    num(r.t),
                    opt(r.g2),
                    opt(r.stderr),
                    r.n_conditional.to_string(),
                    r.n_unconditional.to_string(),
                ]);
            }
            let missing = rows.iter().filter(|r| r.g2.is_none()).count();
            Ok(Report::table(
                t,
                vec![format!("{missing} of {} bins have no defined g2", rows.len())],
            ))
        }
        ExperimentKind::AccuracyTime => {
            let points = accuracy_time_curve(&spec.accuracy_setup(), workers)?;
            let summary = describe_fit(&points, spec.accuracy.fit_range, "T");
            Ok(Report::table(accuracy_table(&points), summary))
        }
        ExperimentKind::AccuracyPhoton => {
            let Some(Sweep::PhotonNumbers(ns)) = &spec.sweep else {
                return Err(Error::Validation("photon scan needs photon numbers".into()));
            };
            let (from, to) = spec.accuracy.window;
            let points = accuracy_photon_scan(&spec.accuracy_setup(), ns, from, to, workers)?;
            let summary = describe_fit(&points, spec.accuracy.fit_range, "|alpha_ss|^2");
            Ok(Report::table(accuracy_table(&points), summary))
        }
        ExperimentKind::ScalingFit => {
            let path = spec
                .input_path
                .as_ref()
                .ok_or_else(|| Error::Usage("scaling_fit needs an input table".into()))?;
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
            let fit = power_law_fit(&read_accuracy_csv(&text)?, spec.accuracy.fit_range)?;
            let mut t = Table::new(FIT_COLUMNS);
            t.push(fit_row(&fit));
            let mut summary = vec![format!("exponent {:.4}, r^2 {:.4}", fit.exponent, fit.r_squared)];
            summary.extend(fit.warning().map(|w| format!("warning: {w}")));
            Ok(Report::table(t, summary))
        }
        ExperimentKind::OracleValidate => {
            let Some(Sweep::Times(times)) = &spec.sweep else {
                return Err(Error::Validation("oracle validation needs comparison times".into()));
            };
            let o = &spec.oracle;
            let rows = compare_with_oracle(params, times, config, o.dim, o.dt, workers)?;
            let mut t = Table::new(ORACLE_COLUMNS);
            let mut summary = Vec::new();
            for r in &rows {
                t.push(vec![
                    num(r.t),
                    num(r.trajectory_mean),
                    num(r.trajectory_se),
                    num(r.oracle_mean),
                    num(r.z()),
                ]);
                summary.push(format!(
                    "t = {}: trajectories {:.6} +- {:.6}, oracle {:.6}, {:.2} standard errors",
                    r.t,
                    r.trajectory_mean,
                    r.trajectory_se,
                    r.oracle_mean,
                    r.z()
                ));
            }
            let passed = rows.iter().all(|r| r.agrees(o.tolerance_se));
            summary.push(format!(
                "verdict: {} (tolerance {} standard errors)",
                if passed { "agree" } else { "disagree" },
                o.tolerance_se
            ));
            Ok(Report {
                table: Some(t),
                summary,
                passed,
            })
        }
        ExperimentKind::KrausDemo => {
            let k = &spec.kraus;
            let pair = match k.pair {
                KrausPreset::Swap => KrausPair::swap(),
                KrausPreset::Projective => KrausPair::projective(),
            };
            let psi = Vector2::new(k.psi[0], k.psi[1]);
            let sequential = sequential_measurement_distribution(&pair, &psi, k.n)?;
            let coeffs = entangled_equivalent_state(&pair, &psi, k.n)?;
            let state = expand_product_state(&pair, &coeffs, k.n);
            let shot = single_shot_distribution(&pair, &state, k.n);
            let single = OutcomeTable {
                n: k.n,
                probabilities: shot,
                warning: None,
            };
            let worst = sequential
                .probabilities
                .iter()
                .zip(&single.probabilities)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let mut t = Table::new(KRAUS_COLUMNS);
            for (i, (label, p)) in sequential.iter().enumerate() {
                t.push(vec![label, num(p), num(single.probabilities[i])]);
            }
            let mut summary = vec![
                format!("sequential:  {}", format_distribution(sequential.iter())),
                format!("single shot: {}", format_distribution(single.iter())),
                format!("largest difference: {worst:e}"),
            ];
            summary.extend(sequential.warning.clone().map(|w| format!("warning: {w}")));
            Ok(Report {
                table: Some(t),
                summary,
                passed: worst <= 1e-12,
            })
        }
    }
}

/// Header comment lines describing the run, without the wall time.
pub fn metadata(spec: &ExperimentSpec) -> Vec<String> {
    let p = &spec.params;
    let c = &spec.config;
    let a = &spec.accuracy;
    let pi = std::f64::consts::PI;
    match spec.kind {
        ExperimentKind::KrausDemo => {
            let k = &spec.kraus;
            return vec![
                format!("experiment = {}", spec.kind),
                format!("pair = {:?}", k.pair).to_lowercase(),
                format!("n = {}", k.n),
                format!(
                    "psi = {}, {}",
                    CoherentAmplitude::new_unchecked(k.psi[0]),
                    CoherentAmplitude::new_unchecked(k.psi[1])
                ),
            ];
        }
        ExperimentKind::ScalingFit => {
            let mut m = vec![format!("experiment = {}", spec.kind)];
            if let Some(input) = &spec.input_path {
                m.push(format!("input = {}", input.display()));
            }
            if let Some((lo, hi)) = a.fit_range {
                m.push(format!("fit_range = {lo}, {hi}"));
            }
            return m;
        }
        _ => {}
    }
    let mut m = vec![
        format!("experiment = {}", spec.kind),
        format!("kappa = {}", p.kappa),
        format!("omega = {}", p.omega),
        format!("phi_over_pi = {}", p.phi() / pi),
        format!("eta = {}", p.eta),
        format!("beta = {}", CoherentAmplitude::new_unchecked(p.beta)),
        format!("seed = {}", c.master_seed),
        format!(
            "mode = {}",
            match c.stepping {
                Stepping::FixedStep => "fixed",
                Stepping::EventDriven => "event",
            }
        ),
        format!("trajectories = {}", c.n_traj),
        format!("dt = {}", c.dt),
        format!("t_max = {}", c.t_max),
        format!("bin_width = {}", spec.bin_width),
    ];
    match spec.kind {
        ExperimentKind::G2 | ExperimentKind::AccuracyTime | ExperimentKind::AccuracyPhoton => {
            let (name, est) = match a.signal {
                Signal::Intensity(e) => ("intensity", e),
                Signal::G2(e) => ("g2", e),
            };
            m.push(format!("signal = {name}"));
            m.push(format!("estimator = {}", est.name()));
            m.push(format!("bootstrap_replicates = {}", a.bootstrap.replicates));
            if spec.kind != ExperimentKind::G2 {
                m.push(format!("uncertainty = {}", a.mode));
                m.push(format!("dphi_over_pi = {}", a.dphi / pi));
                m.push(format!("stencil = {:?}", a.stencil).to_lowercase());
                m.push(format!("noise_floor_z = {}", a.noise_floor_z));
            }
        }
        _ => {}
    }
    if let Some((lo, hi)) = a.fit_range {
        if matches!(spec.kind, ExperimentKind::AccuracyTime | ExperimentKind::AccuracyPhoton) {
            m.push(format!("fit_range = {lo}, {hi}"));
        }
    }
    match &spec.sweep {
        Some(Sweep::PhaseGrid { phis, times }) => {
            let ps: Vec<String> = phis.iter().map(|x| num(x / pi)).collect();
            let ts: Vec<String> = times.iter().map(|&x| num(x)).collect();
            m.push(format!("sweep_phi_over_pi = {}", ps.join(", ")));
            m.push(format!("sweep_t = {}", ts.join(", ")));
            m.push(format!("forced_feedback = {}", spec.forced_feedback));
        }
        Some(Sweep::PhotonNumbers(ns)) => {
            let ns: Vec<String> = ns.iter().map(|&x| num(x)).collect();
            m.push(format!("sweep_alpha_sq = {}", ns.join(", ")));
            m.push(format!("window = {}, {}", a.window.0, a.window.1));
        }
        Some(Sweep::Times(ts)) => {
            let ts: Vec<String> = ts.iter().map(|&x| num(x)).collect();
            m.push(format!("sweep_t = {}", ts.join(", ")));
            m.push(format!("oracle_dim = {}", spec.oracle.dim));
            m.push(format!("oracle_dt = {}", spec.oracle.dt));
        }
        None => {}
    }
    m
}

/// Full CSV text: `# key = value` header block, then the table.
pub fn render_csv(spec: &ExperimentSpec, table: &Table, wall_seconds: f64) -> String {
    let mut out = String::new();
    for line in metadata(spec) {
        let _ = writeln!(out, "# {line}");
    }
    let _ = writeln!(out, "# wall_time_s = {wall_seconds:.3}");
    out.push_str(&table.body());
    out
}

/// Strips the header comment block.
pub fn csv_body(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

/// Writes `text` to `path` through a temporary file in the same directory.
pub fn write_atomically(path: &Path, text: &str) -> Result<()> {
    let io = |e: std::io::Error| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let name = path
        .file_name()
        .ok_or_else(|| Error::Usage(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.partial", name.to_string_lossy()));
    let result = fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(text.as_bytes())?;
            f.sync_all()
        })
        .and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(io(e));
    }
    Ok(())
}

/// Runs `spec`, writes its table (to `output_path`, or to `stdout` when none
/// is set) and prints the summary. Returns the process exit code.
pub fn execute(spec: &ExperimentSpec, workers: usize, stdout: &mut dyn std::io::Write, stderr: &mut dyn std::io::Write) -> i32 {
    let start = Instant::now();
    let report = match run_experiment(spec, workers) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            return e.exit_code();
        }
    };
    let wall = start.elapsed().as_secs_f64();
    let table_to_stdout = report.table.is_some() && spec.output_path.is_none();
    let summary_sink: &mut dyn std::io::Write = if table_to_stdout { &mut *stderr } else { &mut *stdout };
    for line in &report.summary {
        let _ = writeln!(summary_sink, "{line}");
    }
    if let Some(table) = &report.table {
        let text = render_csv(spec, table, wall);
        match &spec.output_path {
            Some(path) => {
                if let Err(e) = write_atomically(path, &text) {
                    let _ = writeln!(stderr, "error: {e}");
                    return e.exit_code();
                }
            }
            None => {
                let _ = stdout.write_all(text.as_bytes());
            }
        }
    }
    if report.passed {
        0
    } else {
        2
    }
}
