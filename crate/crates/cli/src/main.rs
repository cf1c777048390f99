use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cone_green_cli::commands::{self, Outcome, Report, Task};
use cone_green_cli::config;

/// Environment variable overriding the DP memory cap, in bytes.
const MEMCAP_ENV: &str = "CONE_GREEN_MEMCAP_BYTES";

#[derive(Parser)]
#[command(name = "cone-green", version, about = "Green functions of random walks killed on leaving a cone")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// RNG seed; overrides the `seed` key.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads for the numerical kernels.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Omit the timestamp line from CSV headers.
    #[arg(long, global = true)]
    deterministic: bool,
    /// CSV output path; overrides the `output` key. Without one, CSV goes to stdout.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Override a configuration key. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Exact killed-walk layers, survival and truncated Green function.
    GreenExact,
    /// Plain Monte Carlo Green estimate.
    GreenMc,
    /// Importance-sampled Green estimate under an exponential tilt.
    GreenTilted,
    /// Monte Carlo estimate of the harmonic function V(x).
    EstimateV,
    /// Ladder-height law and renewal function of the last coordinate.
    Ladder,
    /// Profile integral of z^(-p-d/2) exp(-1/(2z)) over (eps, inf).
    Integral {
        #[arg(long)]
        p: f64,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
    },
    /// Scaled Green ratios along an interior ray.
    VerifyInterior,
    /// Green decay along a path at fixed distance from the boundary.
    VerifyBoundary,
    /// Scaled Green ratios in a half-space.
    VerifyHalfspace,
    /// Ratio G(x,y)/G(x',y) against V(x)/V(x').
    VerifyMartin,
    /// Fit of one killed layer to the local-limit profile.
    VerifyLlt,
    /// Check a step law against the moment and lattice hypotheses.
    Validate,
}

impl Command {
    fn task(&self) -> Option<Task> {
        Some(match self {
            Command::GreenExact => Task::GreenExact,
            Command::GreenMc => Task::GreenMc,
            Command::GreenTilted => Task::GreenTilted,
            Command::EstimateV => Task::EstimateV,
            Command::Ladder => Task::Ladder,
            Command::Integral { .. } => return None,
            Command::VerifyInterior => Task::VerifyInterior,
            Command::VerifyBoundary => Task::VerifyBoundary,
            Command::VerifyHalfspace => Task::VerifyHalfspace,
            Command::VerifyMartin => Task::VerifyMartin,
            Command::VerifyLlt => Task::VerifyLlt,
            Command::Validate => Task::Validate,
        })
    }
}

fn load_config(cli: &Cli) -> Result<config::ExperimentConfig, Vec<String>> {
    let mut errors = Vec::new();
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| vec![format!("{}: {e}", path.display())])?,
        None => String::new(),
    };
    let mut map = config::parse_pairs(&text, &mut errors);
    for kv in &cli.set {
        match kv.split_once('=') {
            Some((k, v)) => {
                map.insert(k.trim().to_string(), v.trim().to_string());
            }
            None => errors.push(format!("--set {kv}: expected KEY=VALUE")),
        }
    }
    if let Some(seed) = cli.seed {
        map.insert("seed".into(), seed.to_string());
    }
    if let Ok(cap) = std::env::var(MEMCAP_ENV) {
        match cap.trim().parse::<u64>() {
            Ok(v) => {
                map.insert("memory_cap".into(), v.to_string());
            }
            Err(_) => errors.push(format!("{MEMCAP_ENV}: cannot parse `{cap}` as bytes")),
        }
    }
    config::from_map(&map, errors).map_err(|e| e.0)
}

fn execute(cli: &Cli) -> Result<(Report, Option<PathBuf>), ExitCode> {
    let fail = |msg: String| {
        eprintln!("error: {msg}");
        ExitCode::from(1)
    };
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| fail(format!("--threads: {e}")))?;
    }
    match (&cli.command, cli.command.task()) {
        (Command::Integral { p, d, eps }, _) => {
            let report = commands::integral(*p, *d, *eps).map_err(|e| fail(e.to_string()))?;
            Ok((report, cli.out.clone()))
        }
        (_, Some(task)) => {
            let cfg = load_config(cli).map_err(|errs| {
                eprintln!("error: {} configuration error(s):", errs.len());
                for e in &errs {
                    eprintln!("  - {e}");
                }
                ExitCode::from(1)
            })?;
            let report = commands::run(task, &cfg).map_err(|e| fail(e.to_string()))?;
            let out = commands::output_path(Some(&cfg), cli.out.clone());
            Ok((report, out))
        }
        (_, None) => unreachable!("only integral has no task"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (report, out) = match execute(&cli) {
        Ok(r) => r,
        Err(code) => return code,
    };
    // The integral prints only its value unless a CSV path is given.
    let skip_csv = matches!(cli.command, Command::Integral { .. }) && out.is_none();
    if !skip_csv {
        if let Err(e) = report.table.emit(out.as_deref(), cli.deterministic) {
            eprintln!("error: writing CSV: {e}");
            return ExitCode::from(1);
        }
    }
    println!("{}", report.summary);
    match report.outcome {
        Outcome::Done | Outcome::Pass => ExitCode::SUCCESS,
        Outcome::Fail => ExitCode::from(2),
    }
}
