//! Experiment drivers behind the command-line tool.
//!
//! Every driver writes plain CSV (UTF-8, header row) into an output
//! directory. Rows are computed in parallel and written by a single
//! collector after sorting, so the files depend only on the configuration.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::problems::{
    self, add_noise, l2rho_error, make_deblur, CleanProblem, GrayImage, KernelId, PsfShape,
    TestProblem, TruthKind,
};
use crate::rkhs::{dartr_solve, tikhonov_solve};
use crate::solver::{
    dp_stop, ir_basis_l2_solve, irl2_solve, idarr_solve, krylov_solve, CornerRule, IterRecord,
    SolveOptions, SolveStatus, StopRule,
};
use crate::stats::{boxplot, BoxStats};
use crate::vector::{norm2, sub};
use crate::ggkb::Metric;

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "IDARR_THREADS";

/// Threshold factor of the discrepancy index recorded next to L-curve runs.
pub const DP_TAU: f64 = 1.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Idarr,
    IrL2Euclidean,
    IrL2Basis,
    L2Direct,
    BasisDirect,
    Dartr,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Idarr,
        Method::IrL2Euclidean,
        Method::IrL2Basis,
        Method::L2Direct,
        Method::BasisDirect,
        Method::Dartr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Idarr => "iDARR",
            Method::IrL2Euclidean => "IR-l2",
            Method::IrL2Basis => "IR-L2",
            Method::L2Direct => "l2-direct",
            Method::BasisDirect => "L2-direct",
            Method::Dartr => "DARTR",
        }
    }

    pub fn is_iterative(self) -> bool {
        matches!(self, Method::Idarr | Method::IrL2Euclidean | Method::IrL2Basis)
    }

    pub fn metric(self) -> Option<Metric> {
        match self {
            Method::Idarr => Some(Metric::Rkhs),
            Method::IrL2Basis => Some(Metric::Basis),
            Method::IrL2Euclidean => Some(Metric::Euclidean),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        // names are case-sensitive: IR-l2 and IR-L2 differ only by case
        let m = match s {
            "iDARR" | "idarr" => Method::Idarr,
            "IR-l2" | "irl2" | "lsqr" => Method::IrL2Euclidean,
            "IR-L2" | "irL2" => Method::IrL2Basis,
            "l2-direct" => Method::L2Direct,
            "L2-direct" => Method::BasisDirect,
            "DARTR" | "dartr" => Method::Dartr,
            other => return Err(Error::Usage(format!("unknown method '{other}'"))),
        };
        Ok(m)
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Stopping rule as written in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopConfig {
    Lcurve {
        #[serde(default = "default_min_iters")]
        min_iters: usize,
        #[serde(default = "default_max_iters")]
        max_iters: usize,
        #[serde(default)]
        max_curvature: bool,
    },
    /// Discrepancy principle against the realized noise norm.
    Discrepancy {
        #[serde(default = "default_tau")]
        tau: f64,
    },
    Fixed { k: usize },
}

fn default_min_iters() -> usize {
    StopRule::DEFAULT_MIN_ITERS
}

fn default_max_iters() -> usize {
    StopRule::DEFAULT_MAX_ITERS
}

fn default_tau() -> f64 {
    DP_TAU
}

impl Default for StopConfig {
    fn default() -> Self {
        StopConfig::Lcurve {
            min_iters: default_min_iters(),
            max_iters: default_max_iters(),
            max_curvature: false,
        }
    }
}

impl StopConfig {
    /// `noise_norm` is only read by the discrepancy rule.
    pub fn to_rule(self, noise_norm: f64) -> StopRule {
        match self {
            StopConfig::Lcurve {
                min_iters,
                max_iters,
                max_curvature,
            } => StopRule::LCurve {
                min_iters,
                max_iters,
                corner: if max_curvature {
                    CornerRule::MaxCurvature
                } else {
                    CornerRule::AdaptivePruning
                },
            },
            StopConfig::Discrepancy { tau } => StopRule::discrepancy(noise_norm, tau),
            StopConfig::Fixed { k } => StopRule::FixedIters(k),
        }
    }
}

/// Estimate returned by any method.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub x: Vec<f64>,
    /// Selected iteration; 0 for direct methods.
    pub k_stop: usize,
    pub status: Option<SolveStatus>,
    pub history: Vec<IterRecord>,
    pub iterates: Option<Vec<Vec<f64>>>,
    /// Selected Tikhonov parameter of direct methods.
    pub lambda: Option<f64>,
}

pub fn run_method(method: Method, problem: &TestProblem, stop: StopRule) -> Result<MethodRun> {
    let geom = &problem.geom;
    let b = &problem.b;
    let krylov = |out: crate::solver::SolveOutcome| MethodRun {
        x: out.x,
        k_stop: out.k_stop,
        status: Some(out.status),
        history: out.history,
        iterates: out.iterates,
        lambda: None,
    };
    let direct = |sol: crate::rkhs::DirectSolution| MethodRun {
        x: sol.x,
        k_stop: 0,
        status: None,
        history: Vec::new(),
        iterates: None,
        lambda: Some(sol.lambda_star),
    };
    Ok(match method {
        Method::Idarr => krylov(idarr_solve(geom, b, stop)?),
        Method::IrL2Euclidean => krylov(irl2_solve(geom.map_arc(), b, stop)?),
        Method::IrL2Basis => krylov(ir_basis_l2_solve(geom, b, stop)?),
        Method::Dartr => direct(dartr_solve(geom.map(), b, geom.basis())?),
        Method::L2Direct => direct(tikhonov_solve(geom.map(), b, &vec![1.0; geom.cols()])?),
        Method::BasisDirect => direct(tikhonov_solve(geom.map(), b, geom.basis())?),
    })
}

/// Fredholm benchmark configuration; loadable from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kernel: KernelId,
    pub m: usize,
    pub n: usize,
    pub truth: TruthKind,
    pub nsr_ladder: Vec<f64>,
    pub trials: usize,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub stop_rule: StopConfig,
    pub seed_base: u64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut ladder = problems::NSR_LADDER.to_vec();
        ladder.reverse();
        ExperimentConfig {
            kernel: KernelId::ExpDecay,
            m: 500,
            n: 100,
            truth: TruthKind::InFsoi,
            nsr_ladder: ladder,
            trials: 20,
            methods: Method::ALL.to_vec(),
            stop_rule: StopConfig::default(),
            seed_base: 20240101,
            output_dir: PathBuf::from("bench-out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::format(path, e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Usage("trials must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Usage("no methods selected".into()));
        }
        if self.nsr_ladder.is_empty() || self.nsr_ladder.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Usage("nsr values must be positive".into()));
        }
        if self.m < 2 || self.n < 2 {
            return Err(Error::Usage("m and n must be at least 2".into()));
        }
        self.stop_rule.to_rule(1.0).validate()
    }
}

/// splitmix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the dataset at ladder position `nsr_index`, trial `trial`.
pub fn row_seed(seed_base: u64, nsr_index: usize, trial: usize) -> u64 {
    seed_base ^ mix(((nsr_index as u64) << 32) | trial as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub nsr: f64,
    pub trial: usize,
    pub k_stop: usize,
    pub l2rho_error: f64,
    pub relative_error: f64,
    pub loss: f64,
    pub wall_time_ms: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub method: Method,
    pub nsr: f64,
    pub trial: usize,
    pub seed: u64,
    pub error: String,
}

/// L-curve and discrepancy indices of one iterative run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingRow {
    pub method: Method,
    pub nsr: f64,
    pub trial: usize,
    pub k_stop: usize,
    pub k_dp: Option<usize>,
    pub noise_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub method: Method,
    pub nsr: f64,
    pub quantity: String,
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub n_outliers: usize,
    /// Semicolon-separated.
    pub outliers: String,
}

#[derive(Debug, Clone, Default)]
pub struct BenchOutput {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<FailureRow>,
    pub stopping: Vec<StoppingRow>,
    pub stats: Vec<StatsRow>,
}

impl BenchOutput {
    /// Rows of one method in ladder order, then trial order.
    pub fn rows_for(&self, method: Method) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(move |r| r.method == method)
    }

    pub fn stat(&self, method: Method, nsr: f64, quantity: &str) -> Option<&StatsRow> {
        self.stats
            .iter()
            .find(|s| s.method == method && s.nsr == nsr && s.quantity == quantity)
    }
}

/// Worker pool honoring [`THREADS_ENV`].
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Usage(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
        if n == 0 {
            return Err(Error::Usage(format!("{THREADS_ENV} must be positive")));
        }
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))
}

enum Outcome {
    Row(ResultRow, Option<StoppingRow>),
    Failed(FailureRow),
}

fn evaluate(method: Method, problem: &TestProblem, stop: StopConfig, trial: usize) -> Outcome {
    let noise_norm = problem.noise_norm();
    let started = Instant::now();
    let run = run_method(method, problem, stop.to_rule(noise_norm.max(f64::MIN_POSITIVE)));
    let wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
    let fail = |error: String| {
        Outcome::Failed(FailureRow {
            method,
            nsr: problem.nsr,
            trial,
            seed: problem.seed,
            error,
        })
    };
    let run = match run {
        Ok(r) => r,
        Err(e) => return fail(e.to_string()),
    };
    let scores = (|| -> Result<(f64, f64, f64)> {
        let err = l2rho_error(&problem.geom, &run.x, &problem.x_true)?;
        let truth_norm = problem.geom.basis_norm(&problem.x_true)?;
        let fitted = problem.map().apply(&run.x)?;
        let loss: f64 = fitted.iter().zip(&problem.b).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok((err, err / truth_norm, loss))
    })();
    let (l2rho_error, relative_error, loss) = match scores {
        Ok(v) if v.0.is_finite() && v.1.is_finite() && v.2.is_finite() => v,
        Ok(_) => return fail("non-finite error metrics".into()),
        Err(e) => return fail(e.to_string()),
    };
    let stopping = method.is_iterative().then(|| StoppingRow {
        method,
        nsr: problem.nsr,
        trial,
        k_stop: run.k_stop,
        k_dp: dp_stop(
            &run.history.iter().map(|h| h.residual_norm).collect::<Vec<_>>(),
            noise_norm,
            DP_TAU,
        ),
        noise_norm,
    });
    Outcome::Row(
        ResultRow {
            method,
            nsr: problem.nsr,
            trial,
            k_stop: run.k_stop,
            l2rho_error,
            relative_error,
            loss,
            wall_time_ms,
            seed: problem.seed,
        },
        stopping,
    )
}

/// Runs every `(method, nsr, trial)` of `cfg` without touching the disk.
pub fn fredholm_bench(cfg: &ExperimentConfig) -> Result<BenchOutput> {
    cfg.validate()?;
    let setup = problems::make_fredholm(cfg.kernel, cfg.m, cfg.n)?;
    let x_true = problems::true_solution(cfg.truth, &setup)?;
    let clean = CleanProblem::new(setup.geom.clone(), x_true, setup.dt)?;
    let jobs: Vec<(usize, usize)> = (0..cfg.nsr_ladder.len())
        .flat_map(|i| (0..cfg.trials).map(move |t| (i, t)))
        .collect();
    let pool = thread_pool()?;
    let outcomes: Vec<Result<Vec<Outcome>>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, trial)| {
                let problem = add_noise(&clean, cfg.nsr_ladder[i], row_seed(cfg.seed_base, i, trial))?;
                Ok(cfg
                    .methods
                    .iter()
                    .map(|&m| evaluate(m, &problem, cfg.stop_rule, trial))
                    .collect())
            })
            .collect()
    });

    let mut out = BenchOutput::default();
    for batch in outcomes {
        for o in batch? {
            match o {
                Outcome::Row(r, s) => {
                    out.rows.push(r);
                    out.stopping.extend(s);
                }
                Outcome::Failed(f) => out.failures.push(f),
            }
        }
    }
    let ladder_pos = |nsr: f64| cfg.nsr_ladder.iter().position(|&v| v == nsr).unwrap_or(usize::MAX);
    let method_pos = |m: Method| cfg.methods.iter().position(|&v| v == m).unwrap_or(usize::MAX);
    out.rows
        .sort_by_key(|r| (method_pos(r.method), ladder_pos(r.nsr), r.trial));
    out.failures
        .sort_by_key(|r| (method_pos(r.method), ladder_pos(r.nsr), r.trial));
    out.stopping
        .sort_by_key(|r| (method_pos(r.method), ladder_pos(r.nsr), r.trial));

    for &method in &cfg.methods {
        for &nsr in &cfg.nsr_ladder {
            let group: Vec<&ResultRow> = out
                .rows
                .iter()
                .filter(|r| r.method == method && r.nsr == nsr)
                .collect();
            if group.is_empty() {
                continue;
            }
            type Getter = fn(&ResultRow) -> f64;
            let quantities: [(&str, Getter); 3] = [
                ("l2rho_error", |r| r.l2rho_error),
                ("loss", |r| r.loss),
                ("k_stop", |r| r.k_stop as f64),
            ];
            for (name, get) in quantities {
                let values: Vec<f64> = group.iter().map(|r| get(r)).collect();
                out.stats.push(stats_row(method, nsr, name, &boxplot(&values)?));
            }
        }
    }
    Ok(out)
}

fn stats_row(method: Method, nsr: f64, quantity: &str, b: &BoxStats) -> StatsRow {
    StatsRow {
        method,
        nsr,
        quantity: quantity.to_string(),
        count: b.count,
        median: b.median,
        q1: b.q1,
        q3: b.q3,
        whisker_lo: b.whisker_lo,
        whisker_hi: b.whisker_hi,
        n_outliers: b.outliers.len(),
        outliers: b
            .outliers
            .iter()
            .map(|v| format!("{v:e}"))
            .collect::<Vec<_>>()
            .join(";"),
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Like [`write_csv`] but writes `header` when `rows` is empty.
fn write_csv_with_header<T: Serialize>(path: &Path, header: &[&str], rows: &[T]) -> Result<()> {
    if rows.is_empty() {
        return fs::write(path, format!("{}\n", header.join(","))).map_err(|e| Error::io(path, e));
    }
    write_csv(path, rows)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!("checked io kind"),
        }
    } else {
        Error::format(path, e.to_string())
    }
}

/// Candlestick data for gnuplot: one block per quantity, one line per
/// `(method, nsr)` group.
pub fn gnuplot_boxes(stats: &[StatsRow]) -> String {
    let mut out = String::from("# x method nsr whisker_lo q1 median q3 whisker_hi\n");
    let mut quantities: Vec<&str> = Vec::new();
    for s in stats {
        if !quantities.contains(&s.quantity.as_str()) {
            quantities.push(&s.quantity);
        }
    }
    for (block, q) in quantities.iter().enumerate() {
        if block > 0 {
            out.push_str("\n\n");
        }
        out.push_str(&format!("# quantity {q}\n"));
        for (x, s) in stats.iter().filter(|s| s.quantity == *q).enumerate() {
            out.push_str(&format!(
                "{} \"{}\" {} {:e} {:e} {:e} {:e} {:e}\n",
                x + 1,
                s.method,
                s.nsr,
                s.whisker_lo,
                s.q1,
                s.median,
                s.q3,
                s.whisker_hi
            ));
        }
    }
    out
}

/// Writes `results.csv`, `stats.csv`, `stopping.csv`, `failures.csv` and
/// `boxplot.dat` into `dir`.
pub fn write_bench(dir: &Path, out: &BenchOutput) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv_with_header(
        &dir.join("results.csv"),
        &[
            "method",
            "nsr",
            "trial",
            "k_stop",
            "l2rho_error",
            "relative_error",
            "loss",
            "wall_time_ms",
            "seed",
        ],
        &out.rows,
    )?;
    write_csv_with_header(
        &dir.join("stats.csv"),
        &[
            "method",
            "nsr",
            "quantity",
            "count",
            "median",
            "q1",
            "q3",
            "whisker_lo",
            "whisker_hi",
            "n_outliers",
            "outliers",
        ],
        &out.stats,
    )?;
    write_csv_with_header(
        &dir.join("stopping.csv"),
        &["method", "nsr", "trial", "k_stop", "k_dp", "noise_norm"],
        &out.stopping,
    )?;
    write_csv_with_header(
        &dir.join("failures.csv"),
        &["method", "nsr", "trial", "seed", "error"],
        &out.failures,
    )?;
    let path = dir.join("boxplot.dat");
    fs::write(&path, gnuplot_boxes(&out.stats)).map_err(|e| Error::io(&path, e))
}

/// One timing replica.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub n: usize,
    pub replica: usize,
    pub idarr_ms: f64,
    pub dartr_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub n: usize,
    pub idarr_median_ms: f64,
    pub dartr_median_ms: f64,
}

pub const TIMING_REPLICAS: usize = 10;

/// Wall time of iDARR with `k_fixed` matrix-free iterations against DARTR
/// on the exponential-kernel problem, `replicas` times per `n`.
///
/// Both timings include building the exploration weights from the
/// operator; operator assembly and noise generation are excluded.
pub fn timing_study(
    n_ladder: &[usize],
    m: usize,
    k_fixed: usize,
    replicas: usize,
    seed_base: u64,
) -> Result<(Vec<TimingRow>, Vec<TimingSummary>)> {
    if k_fixed == 0 {
        return Err(Error::Usage("k_fixed must be positive".into()));
    }
    if replicas == 0 || n_ladder.is_empty() {
        return Err(Error::Usage("timing needs at least one n and one replica".into()));
    }
    if n_ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Usage("n values must be strictly ascending".into()));
    }
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for (i, &n) in n_ladder.iter().enumerate() {
        let setup = problems::make_fredholm(KernelId::ExpDecay, m, n)?;
        let x = problems::true_solution(TruthKind::OutFsoi, &setup)?;
        let clean = CleanProblem::new(setup.geom.clone(), x, setup.dt)?;
        let (mut ti, mut td) = (Vec::new(), Vec::new());
        for r in 0..replicas {
            let p = add_noise(&clean, 0.1, row_seed(seed_base, i, r))?;
            let map = setup.geom.map_arc();

            let t0 = Instant::now();
            let geom = crate::rkhs::RkhsGeometry::exploration(map.clone())?;
            let out = krylov_solve(
                &geom,
                &p.b,
                Metric::Rkhs,
                StopRule::FixedIters(k_fixed),
                SolveOptions::default(),
            )?;
            let idarr_ms = t0.elapsed().as_secs_f64() * 1e3;
            std::hint::black_box(&out.x);

            let t0 = Instant::now();
            let rho = crate::rkhs::compute_exploration_weights(map.as_ref())?;
            let sol = dartr_solve(map.as_ref(), &p.b, &rho)?;
            let dartr_ms = t0.elapsed().as_secs_f64() * 1e3;
            std::hint::black_box(&sol.x);

            ti.push(idarr_ms);
            td.push(dartr_ms);
            rows.push(TimingRow {
                n,
                replica: r,
                idarr_ms,
                dartr_ms,
            });
        }
        summary.push(TimingSummary {
            n,
            idarr_median_ms: boxplot(&ti)?.median,
            dartr_median_ms: boxplot(&td)?.median,
        });
    }
    Ok((rows, summary))
}

pub fn write_timing(dir: &Path, rows: &[TimingRow], summary: &[TimingSummary]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv(&dir.join("timing.csv"), rows)?;
    write_csv(&dir.join("timing_summary.csv"), summary)
}

/// Deblurring demo settings.
#[derive(Debug, Clone, PartialEq)]
pub struct DeblurConfig {
    pub psf: PsfShape,
    pub nsr: f64,
    pub method: Method,
    pub stop: StopConfig,
    pub seed: u64,
}

impl Default for DeblurConfig {
    fn default() -> Self {
        DeblurConfig {
            psf: PsfShape::Gaussian(2.0),
            nsr: 0.01,
            method: Method::Idarr,
            stop: StopConfig::Lcurve {
                min_iters: StopRule::DEFAULT_MIN_ITERS,
                max_iters: 500,
                max_curvature: false,
            },
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeblurRow {
    pub k: usize,
    pub relative_error: f64,
    pub residual_norm: f64,
    pub solution_norm: f64,
    pub selected: bool,
}

#[derive(Debug, Clone)]
pub struct DeblurOutput {
    pub problem: TestProblem,
    pub restored: GrayImage,
    pub k_stop: usize,
    pub status: Option<SolveStatus>,
    /// Per-iteration curve; empty for direct methods.
    pub curve: Vec<DeblurRow>,
    pub relative_error: f64,
}

impl DeblurOutput {
    /// Relative error of the last iterate of the run.
    pub fn terminal_error(&self) -> Option<f64> {
        self.curve.last().map(|r| r.relative_error)
    }

    /// `(k, error)` of the most accurate iterate.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.curve
            .iter()
            .min_by(|a, b| a.relative_error.total_cmp(&b.relative_error))
            .map(|r| (r.k, r.relative_error))
    }
}

fn relative_l2(x: &[f64], truth: &[f64]) -> f64 {
    norm2(&sub(x, truth)) / norm2(truth)
}

pub fn deblur(image: &GrayImage, cfg: &DeblurConfig) -> Result<DeblurOutput> {
    let problem = make_deblur(image, &cfg.psf, cfg.nsr, cfg.seed)?;
    let stop = cfg.stop.to_rule(problem.noise_norm().max(f64::MIN_POSITIVE));
    let (x, k_stop, status, curve) = match cfg.method.metric() {
        Some(metric) => {
            let out = krylov_solve(
                &problem.geom,
                &problem.b,
                metric,
                stop,
                SolveOptions {
                    keep_iterates: true,
                    ..SolveOptions::default()
                },
            )?;
            let iterates = out.iterates.as_deref().unwrap_or_default();
            let curve = out
                .history
                .iter()
                .zip(iterates)
                .map(|(h, xk)| DeblurRow {
                    k: h.k,
                    relative_error: relative_l2(xk, &problem.x_true),
                    residual_norm: h.residual_norm,
                    solution_norm: h.solution_norm,
                    selected: h.k == out.k_stop,
                })
                .collect();
            (out.x, out.k_stop, Some(out.status), curve)
        }
        None => {
            let run = run_method(cfg.method, &problem, stop)?;
            (run.x, 0, None, Vec::new())
        }
    };
    let relative_error = relative_l2(&x, &problem.x_true);
    let restored = GrayImage::new(image.side, x)?;
    Ok(DeblurOutput {
        problem,
        restored,
        k_stop,
        status,
        curve,
        relative_error,
    })
}

/// Writes `restored.pgm`, `observed.pgm` and `errors.csv` into `dir`.
pub fn write_deblur(dir: &Path, out: &DeblurOutput) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_pgm(&dir.join("restored.pgm"), &out.restored)?;
    let observed = GrayImage::new(out.restored.side, out.problem.b.clone())?;
    io::write_pgm(&dir.join("observed.pgm"), &observed)?;
    write_csv_with_header(
        &dir.join("errors.csv"),
        &["k", "relative_error", "residual_norm", "solution_norm", "selected"],
        &out.curve,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_roundtrip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("ir-l2".parse::<Method>().is_err());
    }

    #[test]
    fn row_seeds_are_distinct_and_stable() {
        let a = row_seed(1, 0, 0);
        assert_eq!(a, row_seed(1, 0, 0));
        assert_ne!(a, row_seed(1, 0, 1));
        assert_ne!(a, row_seed(1, 1, 0));
        assert_ne!(a, row_seed(2, 0, 0));
    }

    #[test]
    fn config_validation() {
        let mut c = ExperimentConfig::default();
        assert!(c.validate().is_ok());
        c.trials = 0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.methods.clear();
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.nsr_ladder = vec![0.5, 0.0];
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_toml_roundtrip() {
        let c = ExperimentConfig::default();
        let text = toml::to_string(&c).unwrap();
        let d: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn single_trial_single_method_row_count() {
        let cfg = ExperimentConfig {
            m: 60,
            n: 20,
            trials: 1,
            methods: vec![Method::Idarr],
            ..ExperimentConfig::default()
        };
        let out = fredholm_bench(&cfg).unwrap();
        assert_eq!(out.rows.len(), cfg.nsr_ladder.len());
        assert!(out.failures.is_empty());
    }

    #[test]
    fn timing_rejects_zero_iterations() {
        assert!(matches!(timing_study(&[10, 20], 30, 0, 1, 1), Err(Error::Usage(_))));
    }

    #[test]
    fn delta_psf_deblur_returns_input() {
        let img = GrayImage::phantom(16);
        let cfg = DeblurConfig {
            psf: PsfShape::Delta,
            nsr: 0.0,
            ..DeblurConfig::default()
        };
        let out = deblur(&img, &cfg).unwrap();
        for (a, b) in out.restored.pixels.iter().zip(&img.pixels) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
