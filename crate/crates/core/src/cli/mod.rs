//! Command-line front end.
//!
//! Exit codes: 0 success, 1 failed check, 2 usage or scenario error,
//! 3 numerical divergence, 4 I/O failure.

pub mod svg;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{check_gain_conditions, rayleigh_bounds, ultimate_bound, GainReport};
use crate::dynamics::DynamicsRegistry;
use crate::error::Error;
use crate::gnn::relative_error;
use crate::sim::{paper_scenario, RunOutput, RunSettings, ScenarioConfig, Simulator};

pub const EXIT_FAILED_CHECK: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Largest acceptable analytic-vs-finite-difference relative error.
pub const JACOBIAN_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(name = "lbgnn", version, about = "Adaptive GNN backstepping control of an indirectly influenced target")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario file and write trajectory.csv and metrics.txt.
    Run(RunArgs),
    /// Print the sufficient gain conditions for a scenario.
    CheckGains(GainArgs),
    /// Compare analytic GNN Jacobians against central differences.
    ValidateGnn(ValidateArgs),
    /// Run the built-in benchmark scenario over a range of seeds.
    Replicate(ReplicateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Overrides {
    /// Override the weight-initialization seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the integration step [s].
    #[arg(long)]
    pub dt: Option<f64>,
    /// Override the final time [s].
    #[arg(long)]
    pub horizon: Option<f64>,
}

impl Overrides {
    fn apply(&self, cfg: &mut ScenarioConfig) {
        if let Some(seed) = self.seed {
            cfg.weights.seed = seed;
        }
        if let Some(dt) = self.dt {
            cfg.integrator.dt = dt;
        }
        if let Some(h) = self.horizon {
            cfg.integrator.horizon = h;
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Also write trajectory.svg and tracking_error.svg.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Debug, Args)]
pub struct GainArgs {
    /// Scenario file (TOML); the built-in benchmark when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Scenario file whose graph and network shape are tested; the built-in
    /// benchmark when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of random weight/input draws.
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
    pub trials: u32,
    /// Seed for the random draws.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-6)]
    pub step: f64,
}

#[derive(Debug, Args)]
pub struct ReplicateArgs {
    /// Output directory; each seed writes to `seed_<k>/`.
    #[arg(long, default_value = "replicate")]
    pub out: PathBuf,
    /// Seeds as `a..b` (exclusive), `a..=b`, or a single value.
    #[arg(long, default_value = "0..10")]
    pub seeds: SeedRange,
    /// Override the integration step [s].
    #[arg(long)]
    pub dt: Option<f64>,
    /// Override the final time [s].
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Also write the SVG plots.
    #[arg(long)]
    pub plot: bool,
    /// Seeds simulated concurrently.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedRange(pub Range<u64>);

impl FromStr for SeedRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("bad seed `{t}`: {e}"));
        let range = if let Some((a, b)) = s.split_once("..=") {
            num(a)?..num(b)?.checked_add(1).ok_or("seed range overflows")?
        } else if let Some((a, b)) = s.split_once("..") {
            num(a)?..num(b)?
        } else {
            let a = num(s)?;
            a..a + 1
        };
        if range.is_empty() {
            return Err(format!("empty seed range `{s}`"));
        }
        Ok(SeedRange(range))
    }
}

/// A failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Divergence { .. } | Error::OutsideSearchSpace { .. } => EXIT_DIVERGENCE,
            Error::Io(_) => EXIT_IO,
            _ => EXIT_USAGE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

/// Parses `args` (including the program name) and executes; returns the
/// process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

pub fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run(args) => {
            let mut cfg = ScenarioConfig::load(&args.config)?;
            args.overrides.apply(&mut cfg);
            cfg.validate()?;
            let summary = run_to_dir(&cfg, &args.out, args.plot)?;
            println!("{summary}");
            Ok(0)
        }
        Command::CheckGains(args) => {
            let cfg = load_or_default(args.config.as_deref())?;
            print!("{}", gain_summary(&cfg)?);
            Ok(0)
        }
        Command::ValidateGnn(args) => {
            let cfg = load_or_default(args.config.as_deref())?;
            let worst = validate_gnn(&cfg, args.trials, args.seed, args.step)?;
            let verdict = worst < JACOBIAN_TOLERANCE;
            println!(
                "trials={} max_relative_error={worst:.3e} tolerance={JACOBIAN_TOLERANCE:.0e} {}",
                args.trials,
                if verdict { "PASS" } else { "FAIL" }
            );
            Ok(if verdict { 0 } else { EXIT_FAILED_CHECK })
        }
        Command::Replicate(args) => replicate(&args),
    }
}

fn load_or_default(path: Option<&Path>) -> Result<ScenarioConfig, CliError> {
    Ok(match path {
        Some(p) => ScenarioConfig::load(p)?,
        None => paper_scenario(),
    })
}

fn gain_report(cfg: &ScenarioConfig) -> Result<(Simulator, GainReport), CliError> {
    let sim = Simulator::from_config(cfg, &DynamicsRegistry::default())?;
    let report = check_gain_conditions(&sim.analysis_params(cfg.analysis.reconstruction_bound));
    Ok((sim, report))
}

/// Printed body of `check-gains`.
pub fn gain_summary(cfg: &ScenarioConfig) -> Result<String, CliError> {
    let (sim, report) = gain_report(cfg)?;
    let params = sim.analysis_params(cfg.analysis.reconstruction_bound);
    let p = sim.gnn().param_count();
    let (l1, l2) = rayleigh_bounds(&sim.gains().gamma.to_matrix(p))?;
    let bound = ultimate_bound(&params, l1, l2, report.lambda3);
    let mut out = format!("{report}\n");
    out += &format!("lambda1 = {l1:.6}\nlambda2 = {l2:.6}\nlambda4 = {:.6}\n", params.lambda4);
    out += &format!("upsilon = {:.6}\n", bound.upsilon);
    if bound.meaningful {
        out += &format!("ultimate bound radius = {:.6}\n", bound.radius);
    } else {
        out += &format!(
            "ultimate bound radius = {:.6} (not guaranteed: lambda4 >= lambda3)\n",
            bound.radius
        );
    }
    Ok(out)
}

/// Largest relative Jacobian error over `trials` random draws on the
/// graph and network shape of `cfg`.
pub fn validate_gnn(cfg: &ScenarioConfig, trials: u32, seed: u64, step: f64) -> Result<f64, CliError> {
    let graph = cfg.build_graph()?;
    let gnn = cfg.build_gnn()?;
    let nodes = graph.node_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let weights: Vec<_> = (0..nodes).map(|_| gnn.uniform_weights(&mut rng, -0.5, 0.5)).collect();
        let inputs: Vec<_> = (0..nodes)
            .map(|_| DVector::from_fn(gnn.input_dim(), |_, _| rng.gen_range(-1.0..1.0)))
            .collect();
        let i = rng.gen_range(0..nodes);
        let pass = gnn.forward(&graph, &weights, &inputs)?;
        let jac = gnn.jacobians(&graph, &weights, &pass, i)?;
        for (j, block) in jac.iter() {
            let fd = gnn.finite_diff_jacobian(&graph, &weights, &inputs, i, j, step)?;
            worst = worst.max(relative_error(block, &fd));
        }
    }
    Ok(worst)
}

/// Header block of `metrics.txt`.
fn metrics_text(cfg: &ScenarioConfig, out: &RunOutput, wall: f64, report: &GainReport) -> String {
    format!(
        "config_hash={}\nseed={}\ndt={}\nhorizon={}\nwall_time_s={wall:.3}\n{}\ngain_conditions={}\n",
        cfg.hash(),
        cfg.weights.seed,
        cfg.integrator.dt,
        cfg.integrator.horizon,
        out.metrics,
        if report.all_passed() { "PASS" } else { "FAILED" }
    )
}

/// One-line result of a completed run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub seed: u64,
    pub output: RunOutput,
    pub wall_time: f64,
}

impl std::fmt::Display for RunSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let m = &self.output.metrics;
        let opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_owned(), |x| format!("{x:.4}"));
        write!(
            f,
            "seed={} e_rms={} u_rms={} phi_tilde_rms={} max_e_after_settle={} max_theta={:.4} wall={:.1}s",
            self.seed,
            opt(m.tracking_error_rms),
            opt(m.control_rms),
            opt(m.approximation_error_rms),
            opt(m.max_error_after_settle),
            m.max_theta_norm,
            self.wall_time
        )
    }
}

/// Simulates `cfg` and writes the artifacts into `dir`.
pub fn run_to_dir(cfg: &ScenarioConfig, dir: &Path, plot: bool) -> Result<RunSummary, CliError> {
    let (sim, report) = gain_report(cfg)?;
    let initial = sim.scenario_state(cfg)?;
    let start = Instant::now();
    let output = sim.run(initial, &RunSettings::from_config(cfg))?;
    let wall_time = start.elapsed().as_secs_f64();

    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    let csv_path = dir.join("trajectory.csv");
    let file = File::create(&csv_path).map_err(|e| io_error(&csv_path, e))?;
    let mut w = BufWriter::new(file);
    output.log.write_csv(&mut w).map_err(|e| io_error(&csv_path, e))?;
    w.flush().map_err(|e| io_error(&csv_path, e))?;

    let write = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| io_error(&path, e))
    };
    write("metrics.txt", metrics_text(cfg, &output, wall_time, &report))?;
    if plot {
        write("trajectory.svg", svg::trajectory_svg(&output.log))?;
        write("tracking_error.svg", svg::tracking_error_svg(&output.log))?;
    }
    Ok(RunSummary {
        seed: cfg.weights.seed,
        output,
        wall_time,
    })
}

fn replicate(args: &ReplicateArgs) -> Result<i32, CliError> {
    let seeds: Vec<u64> = args.seeds.0.clone().collect();
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunSummary, CliError>>>> =
        Mutex::new((0..seeds.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..args.jobs.min(seeds.len() as u32) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::Relaxed);
                let Some(&seed) = seeds.get(k) else { break };
                let mut cfg = paper_scenario();
                Overrides {
                    seed: Some(seed),
                    dt: args.dt,
                    horizon: args.horizon,
                }
                .apply(&mut cfg);
                let result = cfg
                    .validate()
                    .map_err(CliError::from)
                    .and_then(|_| run_to_dir(&cfg, &args.out.join(format!("seed_{seed}")), args.plot));
                match &result {
                    Ok(s) => println!("{s}"),
                    Err(e) => eprintln!("seed={seed} error: {}", e.message),
                }
                results.lock().expect("no panics while holding the lock")[k] = Some(result);
            });
        }
    });
    let results = results.into_inner().expect("no panics while holding the lock");
    let mut code = 0;
    for r in results.into_iter().flatten() {
        if let Err(e) = r {
            code = code.max(e.code);
        }
    }
    Ok(code)
}
