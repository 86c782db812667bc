//! `chsh-verify`: sample planning, fidelity intervals, single verification
//! runs, parameter sweeps and plot-series presets.
//!
//! Exit codes: 0 success, 1 verification rejected (`verify` only), 2 usage
//! or configuration error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use chsh_verify::config::RunConfig;
use chsh_verify::harness::{self, ExperimentSpec, Manifest, Sweep, SweepParam};
use chsh_verify::netsim::network_pair_source;
use chsh_verify::protocols::{verify_ev, verify_pev};
use chsh_verify::stats;
use chsh_verify::Error;

/// Measurement randomness for `verify`, independent of the link's stream.
fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(harness::mix64(seed ^ 0x7665_7269_6679))
}

#[derive(Debug, Parser)]
#[command(name = "chsh-verify", version, about = "CHSH-based entanglement verification toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Copies per setting needed to estimate S within ±epsilon at confidence 1 − delta.
    Plan(PlanArgs),
    /// Fidelity interval implied by a CHSH estimate.
    Bounds(BoundsArgs),
    /// Run one verification over the simulated link (PEV with --n, otherwise EV).
    Verify(RunArgs),
    /// Sweep one parameter of the baseline experiment and emit CSV.
    Sweep(RunArgs),
    /// Emit the data series behind one of the standard plots.
    Figure(FigureArgs),
}

/// Flags shared by every subcommand. Each long name is also a config-file key.
#[derive(Debug, Clone, Default, Args)]
struct RunArgs {
    /// Flat TOML config file; keys are the flag names below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Estimation precision ε.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Failure probability δ.
    #[arg(long)]
    delta: Option<f64>,
    /// Fidelity threshold parameter α (accept when F ≥ 1 − α).
    #[arg(long)]
    alpha: Option<f64>,
    /// Fraction β of the pair budget spent on verification.
    #[arg(long)]
    beta: Option<f64>,
    /// Total pair budget per repetition.
    #[arg(long)]
    capacity: Option<usize>,
    /// Node separation in km.
    #[arg(long = "distance-km")]
    distance_km: Option<f64>,
    /// Channel depolarization rate in Hz.
    #[arg(long = "depolar-rate-hz")]
    depolar_rate_hz: Option<f64>,
    /// Signal speed in fiber, km/s.
    #[arg(long = "fiber-speed-km-per-s")]
    fiber_speed_km_per_s: Option<f64>,
    /// Fiber attenuation length in km.
    #[arg(long = "attenuation-length-km")]
    attenuation_length_km: Option<f64>,
    /// Memory depolarization rate in Hz.
    #[arg(long = "memory-depolar-rate-hz")]
    memory_depolar_rate_hz: Option<f64>,
    /// Entanglement generation attempt rate in Hz.
    #[arg(long = "attempt-rate-hz")]
    attempt_rate_hz: Option<f64>,
    /// Classical signal speed, km/s.
    #[arg(long = "classical-speed-km-per-s")]
    classical_speed_km_per_s: Option<f64>,
    /// Qubit slots per node.
    #[arg(long = "memory-capacity")]
    memory_capacity: Option<usize>,
    /// Pairs per CHSH setting (selects PEV for `verify`).
    #[arg(long)]
    n: Option<u64>,
    /// Repetitions per experiment point.
    #[arg(long)]
    repetitions: Option<usize>,
    /// Base random seed.
    #[arg(long, env = "CHSH_VERIFY_SEED")]
    seed: Option<u64>,
    /// Worker threads (default: all cores for sweeps, 1 otherwise).
    #[arg(long)]
    jobs: Option<usize>,
    /// Sweep parameter: beta, distance, depolar_rate or alpha.
    #[arg(long)]
    param: Option<String>,
    /// Comma-separated sweep grid (default: the parameter's standard grid).
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
}

impl RunArgs {
    fn as_config(&self) -> RunConfig {
        RunConfig {
            epsilon: self.epsilon,
            delta: self.delta,
            alpha: self.alpha,
            beta: self.beta,
            capacity: self.capacity,
            distance_km: self.distance_km,
            depolar_rate_hz: self.depolar_rate_hz,
            fiber_speed_km_per_s: self.fiber_speed_km_per_s,
            attenuation_length_km: self.attenuation_length_km,
            memory_depolar_rate_hz: self.memory_depolar_rate_hz,
            attempt_rate_hz: self.attempt_rate_hz,
            classical_speed_km_per_s: self.classical_speed_km_per_s,
            memory_capacity: self.memory_capacity,
            n: self.n,
            repetitions: self.repetitions,
            seed: self.seed,
            jobs: self.jobs,
            param: self.param.clone(),
            values: self.values.clone(),
        }
    }

    /// Config file first, flags on top.
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        cfg.overlay(&self.as_config());
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Force one concentration bound instead of the cheaper of the two.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// Chebyshev without the S ≥ 2 assumption (4/(δε²) instead of 3/(δε²)).
    #[arg(long)]
    no_nonlocal: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Chebyshev,
    Hoeffding,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Estimated CHSH value S̄.
    #[arg(long = "s-bar", allow_negative_numbers = true)]
    s_bar: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Preset {
    Fig2,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Fig8,
}

#[derive(Debug, Args)]
struct FigureArgs {
    /// Plot preset.
    #[arg(value_enum)]
    name: Preset,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Rejected,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(format!("i/o error: {e}"))
    }
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T, Failure> {
    value.ok_or_else(|| Failure::Usage(format!("missing --{flag}")))
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            Failure::Usage(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

fn write_manifest(out: Option<&Path>, spec: &ExperimentSpec) -> Result<(), Failure> {
    if let Some(out) = out {
        std::fs::write(manifest_path(out), Manifest::new(spec).to_json() + "\n")?;
    }
    Ok(())
}

fn cmd_plan(args: &PlanArgs) -> Result<(), Failure> {
    let cfg = args.run.resolve()?;
    let epsilon = required(cfg.epsilon, "epsilon")?;
    let delta = required(cfg.delta, "delta")?;
    let plan = match args.method {
        Some(MethodArg::Chebyshev) => stats::sample_size_chebyshev(epsilon, delta, !args.no_nonlocal)?,
        Some(MethodArg::Hoeffding) => stats::sample_size_hoeffding(epsilon, delta)?,
        None if args.no_nonlocal => {
            let cheb = stats::sample_size_chebyshev(epsilon, delta, false)?;
            let hoef = stats::sample_size_hoeffding(epsilon, delta)?;
            if hoef.n_per_setting < cheb.n_per_setting {
                hoef
            } else {
                cheb
            }
        }
        None => stats::sample_size_optimal(epsilon, delta)?,
    };
    let mut out = open_output(args.run.out.as_deref())?;
    writeln!(out, "{}", serde_json::to_string(&plan).expect("plan serialises"))?;
    out.flush()?;
    Ok(())
}

fn cmd_bounds(args: &BoundsArgs) -> Result<(), Failure> {
    let cfg = args.run.resolve()?;
    let epsilon = required(cfg.epsilon, "epsilon")?;
    let delta = required(cfg.delta, "delta")?;
    let ci = stats::fidelity_interval_from_estimate(args.s_bar, epsilon, delta)?;
    let mut out = open_output(args.run.out.as_deref())?;
    writeln!(out, "{}", serde_json::to_string(&ci).expect("interval serialises"))?;
    out.flush()?;
    Ok(())
}

fn cmd_verify(args: &RunArgs) -> Result<(), Failure> {
    let cfg = args.resolve()?;
    let spec = cfg.experiment_spec()?;
    spec.validate()?;
    let seed = spec.seed;
    let mut source = network_pair_source(spec.network, harness::mix64(seed))?;
    let mut rng = seeded_rng(seed);
    let outcome = match cfg.n {
        Some(n) => verify_pev(&mut source, n, spec.alpha, &mut rng)?,
        None => verify_ev(&mut source, spec.alpha, spec.delta, &mut rng)?,
    };
    let mut out = open_output(args.out.as_deref())?;
    writeln!(out, "{}", serde_json::to_string_pretty(&outcome).expect("outcome serialises"))?;
    out.flush()?;
    if outcome.decision.accepted() {
        Ok(())
    } else {
        Err(Failure::Rejected)
    }
}

fn run_sweep_to(spec: &ExperimentSpec, jobs: Option<usize>, out: Option<&Path>) -> Result<(), Failure> {
    let sweep = spec.sweep.as_ref().expect("sweep resolved");
    let points = harness::with_jobs(jobs, || harness::run_sweep(spec))?;
    let mut w = open_output(out)?;
    harness::write_sweep_csv(&mut w, sweep.param, spec.seed, &points)?;
    w.flush()?;
    write_manifest(out, spec)
}

fn cmd_sweep(args: &RunArgs) -> Result<(), Failure> {
    let cfg = args.resolve()?;
    if cfg.param.is_none() {
        return Err(Failure::Usage("missing --param (or `param` in the config file)".into()));
    }
    let spec = cfg.experiment_spec()?;
    run_sweep_to(&spec, cfg.jobs, args.out.as_deref())
}

fn preset_sweep(cfg: &RunConfig, param: SweepParam) -> Result<ExperimentSpec, Failure> {
    let mut spec = cfg.experiment_spec()?;
    spec.sweep = Some(Sweep {
        param,
        values: cfg.values.clone().unwrap_or_else(|| param.default_grid()),
    });
    Ok(spec)
}

fn cmd_figure(args: &FigureArgs) -> Result<(), Failure> {
    let cfg = args.run.resolve()?;
    let out = args.run.out.as_deref();
    match args.name {
        Preset::Fig2 => {
            let epsilon = cfg.epsilon.unwrap_or(0.05);
            let mut w = open_output(out)?;
            writeln!(w, "delta,n_chebyshev,n_hoeffding")?;
            for k in 10..=500u32 {
                let delta = f64::from(k) / 10_000.0;
                let cheb = stats::sample_size_chebyshev(epsilon, delta, true)?;
                let hoef = stats::sample_size_hoeffding(epsilon, delta)?;
                writeln!(w, "{delta},{},{}", cheb.n_per_setting, hoef.n_per_setting)?;
            }
            w.flush()?;
            Ok(())
        }
        Preset::Fig4 => run_sweep_to(&preset_sweep(&cfg, SweepParam::Beta)?, cfg.jobs, out),
        Preset::Fig5 => run_sweep_to(&preset_sweep(&cfg, SweepParam::Distance)?, cfg.jobs, out),
        Preset::Fig6 => run_sweep_to(&preset_sweep(&cfg, SweepParam::DepolarRate)?, cfg.jobs, out),
        Preset::Fig8 => run_sweep_to(&preset_sweep(&cfg, SweepParam::Alpha)?, cfg.jobs, out),
        Preset::Fig7 => {
            let spec = preset_sweep(&cfg, SweepParam::Distance)?;
            let points = harness::with_jobs(cfg.jobs, || harness::run_sweep(&spec))?;
            let mut w = open_output(out)?;
            writeln!(w, "distance_km,mean_s_bar,fidelity_lower,fidelity_upper,mean_fidelity,reps,seed")?;
            for p in &points {
                let m = &p.metrics;
                let s = m.mean_s_bar.clamp(-chsh_verify::quantum::TSIRELSON_BOUND, chsh_verify::quantum::TSIRELSON_BOUND);
                let b = stats::fidelity_bounds_exact(s)?;
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    p.value, m.mean_s_bar, b.lower, b.upper, m.mean_remaining_fidelity, m.repetitions, spec.seed
                )?;
            }
            w.flush()?;
            write_manifest(out, &spec)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Plan(a) => cmd_plan(a),
        Command::Bounds(a) => cmd_bounds(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Figure(a) => cmd_figure(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Rejected) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("chsh-verify: {msg}");
            ExitCode::from(2)
        }
    }
}
