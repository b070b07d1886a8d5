use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use acpose_cli::commands::{self, SynthParams};
use acpose_cli::{CliError, Dataset};
use acpose_core::experiments::NoiseSweep;
use acpose_core::{Motion, NoiseConfig, RansacConfig, SolveOptions};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Relative pose and focal length from two affine correspondences with known
/// vertical direction.
///
/// Exit codes: 0 success, 2 invalid flags, 3 I/O error, 4 dataset parse
/// error, 5 degenerate input, 6 degenerate null space, 7 eigen-decomposition
/// failure, 8 no model found, 9 too few correspondences, 10 invalid
/// configuration, 1 anything else.
#[derive(Debug, Parser)]
#[command(name = "acpose", version)]
struct Cli {
    /// Worker threads for parallel trials and RANSAC batches (0 = all cores).
    #[arg(long, global = true, env = "ACPOSE_THREADS", default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset file.
    Synth(SynthCmd),
    /// Run the minimal solver on one pair of correspondences; prints JSON.
    Solve(SolveCmd),
    /// Robust estimation over all correspondences; prints JSON.
    Estimate(EstimateCmd),
    /// Monte-Carlo benchmarks; prints CSV with columns
    /// sweep_value,metric,median,q25,q75.
    Bench(BenchCmd),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MotionArg {
    Random,
    Planar,
    Sideways,
    Forward,
}

impl From<MotionArg> for Motion {
    fn from(m: MotionArg) -> Self {
        match m {
            MotionArg::Random => Motion::Random,
            MotionArg::Planar => Motion::Planar,
            MotionArg::Sideways => Motion::Sideways,
            MotionArg::Forward => Motion::Forward,
        }
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(v),
        _ => Err(format!("expected a non-negative number, got '{s}'")),
    }
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() && v > 0.0 => Ok(v),
        _ => Err(format!("expected a positive number, got '{s}'")),
    }
}

fn fraction(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if (0.0..=1.0).contains(&v) => Ok(v),
        _ => Err(format!("expected a number in [0, 1], got '{s}'")),
    }
}

fn open_fraction(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v < 1.0 => Ok(v),
        _ => Err(format!("expected a number in (0, 1), got '{s}'")),
    }
}

#[derive(Debug, Args)]
struct SynthCmd {
    #[arg(long, value_enum, default_value = "random")]
    motion: MotionArg,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(usize))]
    n_points: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Image noise σ in pixels (points and affine patch corners).
    #[arg(long, default_value_t = 0.0, value_parser = non_negative)]
    noise_image: f64,
    /// Pitch noise σ in degrees, both views.
    #[arg(long, default_value_t = 0.0, value_parser = non_negative)]
    noise_pitch: f64,
    /// Roll noise σ in degrees, both views.
    #[arg(long, default_value_t = 0.0, value_parser = non_negative)]
    noise_roll: f64,
    /// Principal-point offset in pixels.
    #[arg(long, default_value_t = 0.0, value_parser = non_negative)]
    noise_principal: f64,
    /// Keep the exact affine matrices even with image noise.
    #[arg(long)]
    no_affine_noise: bool,
    /// Fraction of correspondences replaced by outliers.
    #[arg(long, default_value_t = 0.0, value_parser = fraction)]
    outliers: f64,
    /// Fixed focal length in pixels instead of a random one in [100, 1000].
    #[arg(long, value_parser = positive)]
    focal: Option<f64>,
    /// Output file; standard output if omitted.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SolverFlags {
    /// Solve with a single row assignment instead of both.
    #[arg(long)]
    no_swap: bool,
    #[arg(long, default_value_t = 50.0, value_parser = positive)]
    min_focal: f64,
    #[arg(long, default_value_t = 10_000.0, value_parser = positive)]
    max_focal: f64,
    /// Keep candidates that fail the cheirality check.
    #[arg(long)]
    keep_behind: bool,
}

impl SolverFlags {
    fn options(&self) -> SolveOptions {
        SolveOptions {
            run_both_row_assignments: !self.no_swap,
            min_focal_px: self.min_focal,
            max_focal_px: self.max_focal,
            require_cheirality: !self.keep_behind,
            ..SolveOptions::default()
        }
    }
}

#[derive(Debug, Args)]
struct SolveCmd {
    dataset: PathBuf,
    /// Indices of the two correspondences to use.
    #[arg(long, num_args = 2, value_names = ["I", "J"], default_values_t = [0, 1])]
    pair: Vec<usize>,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Debug, Args)]
struct EstimateCmd {
    dataset: PathBuf,
    /// Sampson inlier threshold in pixels.
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    threshold: f64,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    max_iterations: u64,
    #[arg(long, default_value_t = 0.999, value_parser = open_fraction)]
    confidence: f64,
    #[arg(long, default_value_t = 8)]
    min_inliers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Return the best sampled hypothesis without least-squares polishing.
    #[arg(long)]
    no_refine: bool,
    #[command(flatten)]
    solver: SolverFlags,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SweepArg {
    /// Image noise 0..1 px in steps of 0.2.
    Image,
    /// Pitch noise 0..0.2° in steps of 0.02, 1 px image noise.
    Pitch,
    /// Roll noise 0..0.2° in steps of 0.02, 1 px image noise.
    Roll,
}

#[derive(Debug, Subcommand)]
enum BenchKind {
    /// Noise-free trials; median ξ_f, ξ_R, ξ_t (metrics xi_f, xi_r, xi_t).
    Stability {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Error medians against noise; metrics `<motion>:eps_f|eps_r|eps_t`
    /// (relative focal error, rotation and translation error in degrees).
    Noise {
        #[arg(long, value_enum, default_value = "image")]
        sweep: SweepArg,
        /// Motion patterns to run; all four if omitted.
        #[arg(long, value_enum)]
        motion: Vec<MotionArg>,
        #[arg(long, default_value_t = 500)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
struct BenchCmd {
    #[command(subcommand)]
    kind: BenchKind,
    /// Output file; standard output if omitted.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
}

fn read_dataset(path: &Path) -> Result<Dataset, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
    Dataset::parse(&text)
}

fn emit(output: Option<&Path>, text: &str) -> Result<(), CliError> {
    match output {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Io { path: path.into(), source }),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|source| CliError::Io { path: "<stdout>".into(), source }),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    match cli.command {
        Command::Synth(c) => {
            let ds = commands::synth(&SynthParams {
                motion: c.motion.into(),
                n_points: c.n_points,
                seed: c.seed,
                noise: NoiseConfig {
                    image_px: c.noise_image,
                    pitch_deg: c.noise_pitch,
                    roll_deg: c.noise_roll,
                    principal_px: c.noise_principal,
                    affine: !c.no_affine_noise,
                },
                outliers: c.outliers,
                focal_px: c.focal,
            })?;
            emit(c.output.as_deref(), &ds.serialize())
        }
        Command::Solve(c) => {
            let ds = read_dataset(&c.dataset)?;
            let v = commands::solve(&ds, (c.pair[0], c.pair[1]), &c.solver.options())?;
            emit(None, &format!("{}\n", serde_json::to_string_pretty(&v).expect("valid JSON")))
        }
        Command::Estimate(c) => {
            let ds = read_dataset(&c.dataset)?;
            let cfg = RansacConfig {
                max_iterations: c.max_iterations as usize,
                confidence: c.confidence,
                inlier_threshold_px: c.threshold,
                min_inliers: c.min_inliers,
                seed: c.seed,
                refine: !c.no_refine,
                solve: c.solver.options(),
            };
            let (_, v) = commands::robust(&ds, &cfg)?;
            emit(None, &format!("{}\n", serde_json::to_string_pretty(&v).expect("valid JSON")))
        }
        Command::Bench(c) => {
            let opts = SolveOptions::default();
            let rows = match c.kind {
                BenchKind::Stability { trials, seed } => commands::bench_stability(trials, seed, &opts)?,
                BenchKind::Noise { sweep, motion, trials, seed } => {
                    let sweep = match sweep {
                        SweepArg::Image => NoiseSweep::Image,
                        SweepArg::Pitch => NoiseSweep::Pitch,
                        SweepArg::Roll => NoiseSweep::Roll,
                    };
                    let motions: Vec<Motion> = if motion.is_empty() {
                        Motion::ALL.to_vec()
                    } else {
                        motion.into_iter().map(Motion::from).collect()
                    };
                    commands::bench_noise(sweep, &motions, trials, seed, &opts)?
                }
            };
            emit(c.output.as_deref(), &commands::csv(&rows))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("acpose: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
