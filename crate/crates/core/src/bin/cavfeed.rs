use std::path::PathBuf;
use std::process::ExitCode;

use cavfeed::config::{parse_entries, ConfigEntries, ExperimentSpec};
use cavfeed::experiment::execute;
use cavfeed::Error;
use clap::Parser;

/// Run a cavity feedback experiment described by a config file.
#[derive(Debug, Parser)]
#[command(name = "cavfeed", version)]
struct Cli {
    /// Experiment config (`key = value` lines with `[section]` headers).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Experiment kind, when not set in the config.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long, value_name = "N")]
    seed: Option<String>,
    #[arg(long, value_name = "N")]
    trajectories: Option<String>,
    /// Preparation phase in units of pi.
    #[arg(long, value_name = "X", allow_hyphen_values = true)]
    phi: Option<String>,
    /// Stationary photon number |alpha_ss|^2.
    #[arg(long, value_name = "X")]
    alpha_sq: Option<String>,
    /// Detection efficiency.
    #[arg(long, value_name = "X")]
    eta: Option<String>,
    /// Feedback displacement.
    #[arg(long, value_name = "RE[,IM]", allow_hyphen_values = true)]
    beta: Option<String>,
    #[arg(long, value_name = "X")]
    t_max: Option<String>,
    #[arg(long, value_name = "X")]
    dt: Option<String>,
    /// Time stepping: fixed or event.
    #[arg(long, value_name = "fixed|event")]
    mode: Option<String>,
    /// Worker threads; defaults to CAVFEED_WORKERS, then the core count.
    #[arg(long, value_name = "N")]
    workers: Option<String>,
    /// Output CSV; the table goes to stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<String>,
}

fn entries(cli: &Cli) -> Result<ConfigEntries, Error> {
    let mut entries = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Usage(format!("cannot read {}: {e}", path.display())))?;
            parse_entries(&text)?
        }
        None => ConfigEntries::default(),
    };
    let overrides = [
        ("kind", &cli.kind, "kind"),
        ("seed", &cli.seed, "seed"),
        ("trajectories", &cli.trajectories, "trajectories"),
        ("cavity.phi", &cli.phi, "phi"),
        ("cavity.alpha_sq", &cli.alpha_sq, "alpha-sq"),
        ("cavity.eta", &cli.eta, "eta"),
        ("cavity.beta", &cli.beta, "beta"),
        ("simulation.t_max", &cli.t_max, "t-max"),
        ("simulation.dt", &cli.dt, "dt"),
        ("simulation.mode", &cli.mode, "mode"),
        ("workers", &cli.workers, "workers"),
        ("out", &cli.out, "out"),
    ];
    for (key, value, flag) in overrides {
        if let Some(v) = value {
            entries.set_override(key, v.clone(), flag)?;
        }
    }
    Ok(entries)
}

fn workers(spec: &ExperimentSpec) -> Result<usize, Error> {
    if let Some(n) = spec.workers {
        return Ok(n);
    }
    match std::env::var("CAVFEED_WORKERS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Usage(format!("CAVFEED_WORKERS must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let spec = entries(&cli).and_then(|e| ExperimentSpec::from_entries(&e));
    let (spec, workers) = match spec.and_then(|s| workers(&s).map(|w| (s, w))) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let code = execute(&spec, workers, &mut std::io::stdout(), &mut std::io::stderr());
    ExitCode::from(code as u8)
}
