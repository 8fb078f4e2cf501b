//! `idarr` command-line tool.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use idarr::harness::{self, DeblurConfig, ExperimentConfig, Method, StopConfig};
use idarr::io::{self, OperatorDescriptor};
use idarr::oracle::{self, BatteryConfig};
use idarr::problems::{self, GrayImage, KernelId, PsfShape, TruthKind};
use idarr::rkhs::RkhsGeometry;
use idarr::{Error, Result};

const EXIT_PROPERTY: u8 = 4;

#[derive(Parser)]
#[command(name = "idarr", version, about = "Iterative data-adaptive RKHS regularization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem and write the estimate.
    Solve(SolveArgs),
    /// Write a noisy Fredholm test problem directory.
    Generate(GenerateArgs),
    /// Fredholm benchmark over an nsr ladder.
    FredholmBench(BenchArgs),
    /// Wall time of iDARR against DARTR as n grows.
    Timing(TimingArgs),
    /// Image deblurring with per-iteration relative errors.
    Deblur(DeblurArgs),
    /// Dense invariant battery on random instances.
    OracleCheck(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum StopKind {
    Lcurve,
    Dp,
    Fixed,
}

#[derive(Args)]
struct StopArgs {
    /// Stopping rule for iterative methods.
    #[arg(long, value_enum)]
    stop: Option<StopKind>,
    #[arg(long)]
    min_iters: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Use the three-point max-curvature corner instead of adaptive pruning.
    #[arg(long)]
    max_curvature: bool,
    /// Discrepancy safety factor.
    #[arg(long)]
    tau: Option<f64>,
    /// Iteration count for `--stop fixed`.
    #[arg(short, long)]
    k: Option<usize>,
}

impl StopArgs {
    /// Flags override `base` field by field.
    fn resolve(&self, base: StopConfig) -> Result<StopConfig> {
        let kind = match (self.stop, base) {
            (Some(kind), _) => kind,
            (None, StopConfig::Lcurve { .. }) => StopKind::Lcurve,
            (None, StopConfig::Discrepancy { .. }) => StopKind::Dp,
            (None, StopConfig::Fixed { .. }) => StopKind::Fixed,
        };
        Ok(match kind {
            StopKind::Lcurve => {
                let (min0, max0, curv0) = match base {
                    StopConfig::Lcurve {
                        min_iters,
                        max_iters,
                        max_curvature,
                    } => (min_iters, max_iters, max_curvature),
                    _ => match StopConfig::default() {
                        StopConfig::Lcurve {
                            min_iters,
                            max_iters,
                            max_curvature,
                        } => (min_iters, max_iters, max_curvature),
                        _ => unreachable!(),
                    },
                };
                StopConfig::Lcurve {
                    min_iters: self.min_iters.unwrap_or(min0),
                    max_iters: self.max_iters.unwrap_or(max0),
                    max_curvature: self.max_curvature || curv0,
                }
            }
            StopKind::Dp => StopConfig::Discrepancy {
                tau: self.tau.unwrap_or(match base {
                    StopConfig::Discrepancy { tau } => tau,
                    _ => harness::DP_TAU,
                }),
            },
            StopKind::Fixed => StopConfig::Fixed {
                k: match (self.k, base) {
                    (Some(k), _) | (None, StopConfig::Fixed { k }) => k,
                    _ => return Err(Error::Usage("--stop fixed needs --k".into())),
                },
            },
        })
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Problem directory written by `generate` (operator, data and truth).
    #[arg(long, conflicts_with_all = ["operator", "data"])]
    problem: Option<PathBuf>,
    /// Operator descriptor (TOML); relative file names resolve against its
    /// directory.
    #[arg(long, requires = "data")]
    operator: Option<PathBuf>,
    /// Observation vector (binary or text).
    #[arg(long, requires = "operator")]
    data: Option<PathBuf>,
    #[arg(long, default_value = "iDARR", value_parser = parse_method)]
    method: Method,
    #[command(flatten)]
    stop: StopArgs,
    /// Noise norm `||w||_2` for `--stop dp` without a problem directory.
    #[arg(long)]
    noise_norm: Option<f64>,
    /// Where to write the estimate.
    #[arg(short, long, default_value = "x.bin")]
    output: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value = "exp_decay")]
    kernel: KernelId,
    #[arg(long, default_value = "in_fsoi")]
    truth: TruthKind,
    #[arg(long, default_value_t = 500)]
    m: usize,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0.5)]
    nsr: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment manifest (TOML); flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    kernel: Option<KernelId>,
    #[arg(long)]
    truth: Option<TruthKind>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    nsr: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    stop: StopArgs,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TimingArgs {
    #[arg(long, value_delimiter = ',', default_value = "200,400,800")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 500)]
    m: usize,
    #[arg(short, long, default_value_t = 10)]
    k: usize,
    #[arg(long, default_value_t = harness::TIMING_REPLICAS)]
    replicas: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(short, long, default_value = "timing-out")]
    output: PathBuf,
}

#[derive(Args)]
struct DeblurArgs {
    /// Binary PGM (P5) input image.
    #[arg(long, conflicts_with_all = ["phantom", "checkerboard"])]
    image: Option<PathBuf>,
    /// Built-in ellipse phantom of this side length.
    #[arg(long, conflicts_with = "checkerboard")]
    phantom: Option<usize>,
    /// Built-in checkerboard of this side length (8-pixel cells).
    #[arg(long)]
    checkerboard: Option<usize>,
    /// Gaussian PSF width in pixels.
    #[arg(long, conflicts_with_all = ["psf_file", "delta"])]
    psf_width: Option<f64>,
    /// PSF as a whitespace-separated text grid.
    #[arg(long, conflicts_with = "delta")]
    psf_file: Option<PathBuf>,
    /// Unit PSF (no blur).
    #[arg(long)]
    delta: bool,
    #[arg(long)]
    nsr: Option<f64>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    #[command(flatten)]
    stop: StopArgs,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long, default_value = "deblur-out")]
    output: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 30)]
    m: usize,
    #[arg(long, default_value_t = 20)]
    n: usize,
    /// Rank of the rank-deficient instances (default min(m, n) / 4).
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Generate(a) => generate(a),
        Command::FredholmBench(a) => bench(a),
        Command::Timing(a) => timing(a),
        Command::Deblur(a) => deblur(a),
        Command::OracleCheck(a) => oracle_check(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn solve(a: SolveArgs) -> Result<ExitCode> {
    let (geom, b, truth, noise_norm) = match (&a.problem, &a.operator, &a.data) {
        (Some(dir), _, _) => {
            let p = io::load_problem(dir)?;
            let noise = p.noise_norm();
            (p.geom, p.b, Some(p.x_true), Some(noise))
        }
        (None, Some(op), Some(data)) => {
            let dir = op.parent().unwrap_or(Path::new("."));
            let map = OperatorDescriptor::load(op)?.build(dir)?;
            let b = io::read_vector(data)?;
            if b.len() != map.rows() {
                return Err(Error::Dimension {
                    context: "observation length",
                    expected: map.rows(),
                    got: b.len(),
                });
            }
            let geom = if a.method == Method::IrL2Euclidean {
                RkhsGeometry::identity(map)
            } else {
                RkhsGeometry::exploration(map)?
            };
            (geom, b, None, a.noise_norm)
        }
        _ => return Err(Error::Usage("give --problem or both --operator and --data".into())),
    };
    let stop = a.stop.resolve(StopConfig::default())?;
    if matches!(stop, StopConfig::Discrepancy { .. }) && noise_norm.is_none() {
        return Err(Error::Usage("--stop dp needs --noise-norm".into()));
    }
    let rule = stop.to_rule(noise_norm.unwrap_or(1.0));
    let problem = problems::TestProblem {
        x_true: truth.clone().unwrap_or_else(|| vec![0.0; geom.cols()]),
        b_clean: b.clone(),
        b,
        sigma: 0.0,
        dt: 1.0,
        nsr: 0.0,
        seed: 0,
        geom,
    };
    let run = harness::run_method(a.method, &problem, rule)?;
    io::write_vector(&a.output, &run.x)?;

    let fitted = problem.map().apply(&run.x)?;
    let residual = fitted
        .iter()
        .zip(&problem.b)
        .map(|(f, b)| (f - b) * (f - b))
        .sum::<f64>()
        .sqrt();
    let mut line = format!("method={} k_stop={} residual={residual:.6e}", a.method, run.k_stop);
    match a.method.metric() {
        Some(metric) => {
            let norm = run.history.get(run.k_stop.wrapping_sub(1)).map_or(0.0, |h| h.solution_norm);
            let label = match metric {
                idarr::Metric::Rkhs => "rkhs_norm",
                idarr::Metric::Basis => "l2rho_norm",
                idarr::Metric::Euclidean => "l2_norm",
            };
            line.push_str(&format!(" {label}={norm:.6e}"));
        }
        None => line.push_str(&format!(" lambda={:.6e}", run.lambda.unwrap_or(f64::NAN))),
    }
    if let Some(status) = run.status {
        line.push_str(&format!(" status={status:?}"));
    }
    if let Some(t) = truth {
        let err = problems::l2rho_error(&problem.geom, &run.x, &t)?;
        line.push_str(&format!(" l2rho_error={err:.6e}"));
    }
    println!("{line}");
    Ok(ExitCode::SUCCESS)
}

fn generate(a: GenerateArgs) -> Result<ExitCode> {
    let setup = problems::make_fredholm(a.kernel, a.m, a.n)?;
    let truth = problems::true_solution(a.truth, &setup)?;
    let clean = problems::CleanProblem::new(setup.geom.clone(), truth, setup.dt)?;
    let problem = problems::add_noise(&clean, a.nsr, a.seed)?;
    let descriptor = OperatorDescriptor::Fredholm {
        kernel: a.kernel,
        m: a.m,
        n: a.n,
    };
    io::save_problem(&a.output, &descriptor, &problem)?;
    println!(
        "wrote {} ({}x{}, nsr={}, sigma={:.6e})",
        a.output.display(),
        a.m,
        a.n,
        a.nsr,
        problem.sigma
    );
    Ok(ExitCode::SUCCESS)
}

fn bench(a: BenchArgs) -> Result<ExitCode> {
    let mut cfg = match &a.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = a.kernel {
        cfg.kernel = v;
    }
    if let Some(v) = a.truth {
        cfg.truth = v;
    }
    if let Some(v) = a.m {
        cfg.m = v;
    }
    if let Some(v) = a.n {
        cfg.n = v;
    }
    if let Some(v) = a.trials {
        cfg.trials = v;
    }
    if let Some(v) = a.nsr {
        cfg.nsr_ladder = v;
    }
    if let Some(v) = a.methods {
        cfg.methods = v;
    }
    if let Some(v) = a.seed {
        cfg.seed_base = v;
    }
    if let Some(v) = a.output {
        cfg.output_dir = v;
    }
    cfg.stop_rule = a.stop.resolve(cfg.stop_rule)?;
    cfg.validate()?;

    let out = harness::fredholm_bench(&cfg)?;
    harness::write_bench(&cfg.output_dir, &out)?;
    println!("{:<10} {:>7} {:>12} {:>12} {:>8}", "method", "nsr", "median_err", "iqr_err", "med_k");
    for &method in &cfg.methods {
        for &nsr in &cfg.nsr_ladder {
            let (Some(err), k) = (out.stat(method, nsr, "l2rho_error"), out.stat(method, nsr, "k_stop")) else {
                continue;
            };
            println!(
                "{:<10} {:>7} {:>12.4e} {:>12.4e} {:>8}",
                method.name(),
                nsr,
                err.median,
                err.q3 - err.q1,
                k.map_or("-".into(), |k| format!("{}", k.median))
            );
        }
    }
    if !out.failures.is_empty() {
        eprintln!("{} runs failed; see failures.csv", out.failures.len());
    }
    println!("wrote {}", cfg.output_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn timing(a: TimingArgs) -> Result<ExitCode> {
    let (rows, summary) = harness::timing_study(&a.n, a.m, a.k, a.replicas, a.seed)?;
    harness::write_timing(&a.output, &rows, &summary)?;
    println!("{:>6} {:>14} {:>14}", "n", "idarr_ms", "dartr_ms");
    for s in &summary {
        println!("{:>6} {:>14.3} {:>14.3}", s.n, s.idarr_median_ms, s.dartr_median_ms);
    }
    println!("wrote {}", a.output.display());
    Ok(ExitCode::SUCCESS)
}

fn deblur(a: DeblurArgs) -> Result<ExitCode> {
    let image = match (&a.image, a.phantom, a.checkerboard) {
        (Some(path), _, _) => GrayImage::load(path)?,
        (None, Some(side), _) => GrayImage::phantom(side),
        (None, None, Some(side)) => GrayImage::checkerboard(side, 8),
        (None, None, None) => GrayImage::phantom(64),
    };
    let mut cfg = DeblurConfig::default();
    if let Some(w) = a.psf_width {
        cfg.psf = PsfShape::Gaussian(w);
    } else if let Some(f) = a.psf_file {
        cfg.psf = PsfShape::FromFile(f);
    } else if a.delta {
        cfg.psf = PsfShape::Delta;
    }
    if let Some(v) = a.nsr {
        cfg.nsr = v;
    }
    if let Some(v) = a.method {
        cfg.method = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    cfg.stop = a.stop.resolve(cfg.stop)?;

    let out = harness::deblur(&image, &cfg)?;
    harness::write_deblur(&a.output, &out)?;
    let mut line = format!(
        "method={} k_stop={} relative_error={:.6e}",
        cfg.method, out.k_stop, out.relative_error
    );
    if let Some((k, e)) = out.best() {
        line.push_str(&format!(" best_k={k} best_error={e:.6e}"));
    }
    if let Some(e) = out.terminal_error() {
        line.push_str(&format!(" terminal_k={} terminal_error={e:.6e}", out.curve.len()));
    }
    println!("{line}");
    println!("wrote {}", a.output.display());
    Ok(ExitCode::SUCCESS)
}

fn oracle_check(a: OracleArgs) -> Result<ExitCode> {
    let checks = oracle::run_battery(&BatteryConfig {
        m: a.m,
        n: a.n,
        rank: a.rank,
        seed: a.seed,
    })?;
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    if failed > 0 {
        eprintln!("{failed} of {} properties violated", checks.len());
        return Ok(ExitCode::from(EXIT_PROPERTY));
    }
    println!("all {} properties hold", checks.len());
    Ok(ExitCode::SUCCESS)
}
