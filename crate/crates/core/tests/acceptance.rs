//! Acceptance suite. Runs every criterion, prints one line each, and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use idarr::ggkb::Metric;
use idarr::harness::{self, DeblurConfig, ExperimentConfig, Method};
use idarr::linops::DenseMap;
use idarr::oracle::{self, dense_map, gaussian_matrix, gaussian_vector};
use idarr::problems::{self, GrayImage, KernelId, TruthKind};
use idarr::rkhs::RkhsGeometry;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn pass_if(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn exploration(a: &nalgebra::DMatrix<f64>) -> RkhsGeometry {
    RkhsGeometry::exploration(dense_map(a).unwrap()).unwrap()
}

fn orthogonality() -> Outcome {
    let mut worst_u = 0.0f64;
    let mut worst_z = 0.0f64;
    let mut bad_kt = 0;
    for seed in 0..5 {
        let mut r = rng(seed);
        let a = gaussian_matrix(50, 30, &mut r);
        let b = gaussian_vector(50, &mut r);
        let f = oracle::run_to_termination(&exploration(&a), &b, Metric::Rkhs).unwrap();
        if f.k_t() != Some(30) {
            bad_kt += 1;
        }
        let (du, dz) = oracle::orthogonality_defect(&f);
        worst_u = worst_u.max(du);
        worst_z = worst_z.max(dz);
    }
    pass_if(
        worst_u <= 1e-10 && worst_z <= 1e-10 && bad_kt == 0,
        format!("max|U'U-I| {worst_u:.2e}, max|Z'Zbar-I| {worst_z:.2e}, runs without k_t=30: {bad_kt}"),
    )
}

fn residual_identity() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..20u64 {
        let mut r = rng(100 + seed);
        let (m, n) = (20 + (seed as usize % 4) * 10, 10 + (seed as usize % 3) * 5);
        let a = if seed % 2 == 0 {
            gaussian_matrix(m, n, &mut r)
        } else {
            oracle::rank_deficient(m, n, n / 2, &mut r)
        };
        let b = gaussian_vector(m, &mut r);
        worst = worst.max(oracle::residual_identity_defect(&exploration(&a), &b, n + 1).unwrap());
    }
    let mut fredholm = Vec::new();
    for kernel in [KernelId::ExpDecay, KernelId::PolyDecay] {
        let setup = problems::make_fredholm(kernel, 500, 100).unwrap();
        let x = problems::true_solution(TruthKind::InFsoi, &setup).unwrap();
        let clean = problems::CleanProblem::new(setup.geom.clone(), x, setup.dt).unwrap();
        let p = problems::add_noise(&clean, 0.25, 11).unwrap();
        let d = oracle::residual_identity_defect(&p.geom, &p.b, 101).unwrap();
        fredholm.push(d);
        worst = worst.max(d);
    }
    pass_if(
        worst <= 1e-9,
        format!(
            "max relative defect {worst:.2e} (ExpDecay {:.2e}, PolyDecay {:.2e})",
            fredholm[0], fredholm[1]
        ),
    )
}

fn spectral_family(base: f64, seeds: u64) -> (usize, Vec<String>) {
    let mut cases = 0;
    let mut mismatches = Vec::new();
    for s in [1usize, 2, 3, 5] {
        for seed in 0..seeds {
            let mut r = rng(1000 * s as u64 + seed);
            let levels: Vec<(f64, usize)> =
                (0..s).map(|i| (base.powi(i as i32), 1 + (i + seed as usize) % 3)).collect();
            let active: Vec<bool> =
                (0..s).map(|i| i == 0 || (i + seed as usize) % 3 != 1).collect();
            let inst =
                oracle::spectral_instance(40, 25, &levels, &active, seed % 2 == 1, &mut r).unwrap();
            let f = oracle::run_to_termination(&inst.geom, &inst.b, Metric::Rkhs).unwrap();
            cases += 1;
            if f.k_t() != Some(inst.expected_k_t) || inst.expected_k_t > inst.rank {
                mismatches.push(format!("s={s} seed={seed}: k_t {:?} want {}", f.k_t(), inst.expected_k_t));
            }
        }
    }
    (cases, mismatches)
}

fn termination_count() -> Outcome {
    let (cases, mismatches) = spectral_family(0.9, 10);
    let (wide, wide_misses) = spectral_family(0.5, 10);
    let note = format!(
        "sigma_i = 0.5^i family (not graded) detects {}/{wide}",
        wide - wide_misses.len()
    );
    pass_if(
        mismatches.is_empty(),
        if mismatches.is_empty() {
            format!("{cases} instances with sigma_i = 0.9^i, k_t equals q and k_t <= rank; {note}")
        } else {
            format!("{}; {note}", mismatches.join("; "))
        },
    )
}

fn terminal_solution() -> Outcome {
    let mut worst = 0.0f64;
    let mut over_rank = 0;
    for seed in 0..10u64 {
        let mut r = rng(200 + seed);
        let n = 20 + 3 * seed as usize;
        let rank = 3 + (seed as usize * 7) % (n - 5);
        let a = oracle::rank_deficient(n + 10, n, rank, &mut r);
        let b = gaussian_vector(n + 10, &mut r);
        let t = oracle::terminal_solution_check(&exploration(&a), &b).unwrap();
        if t.k_t > t.rank {
            over_rank += 1;
        }
        worst = worst.max(t.relative_error);
    }
    pass_if(
        worst <= 1e-6 && over_rank == 0,
        format!("max relative error {worst:.2e}, k_t above rank in {over_rank} cases"),
    )
}

fn bench(kernel: KernelId, methods: Vec<Method>) -> harness::BenchOutput {
    let cfg = ExperimentConfig { kernel, methods, ..ExperimentConfig::default() };
    harness::fredholm_bench(&cfg).unwrap()
}

fn median(out: &harness::BenchOutput, method: Method, nsr: f64, q: &str) -> f64 {
    out.stat(method, nsr, q).map(|s| s.median).unwrap_or(f64::NAN)
}

fn error_trend(out: &harness::BenchOutput) -> Outcome {
    let ladder = ExperimentConfig::default().nsr_ladder;
    let idarr: Vec<f64> = ladder.iter().map(|&s| median(out, Method::Idarr, s, "l2rho_error")).collect();
    let irl2: Vec<f64> =
        ladder.iter().map(|&s| median(out, Method::IrL2Euclidean, s, "l2rho_error")).collect();
    let decreasing = idarr.windows(2).all(|w| w[1] < w[0]);
    let beats = idarr.iter().zip(&irl2).all(|(a, b)| a <= b);
    let fmt = |v: &[f64]| v.iter().map(|e| format!("{e:.3}")).collect::<Vec<_>>().join(" ");
    pass_if(
        decreasing && beats && out.failures.is_empty(),
        format!("iDARR medians [{}], IR-l2 medians [{}]", fmt(&idarr), fmt(&irl2)),
    )
}

fn stopping_stability(out: &harness::BenchOutput) -> Outcome {
    let ladder = ExperimentConfig::default().nsr_ladder;
    let iqr: Vec<f64> = ladder
        .iter()
        .map(|&s| out.stat(Method::Idarr, s, "k_stop").map(|r| r.q3 - r.q1).unwrap_or(f64::NAN))
        .collect();
    pass_if(
        iqr.iter().all(|&v| v <= 2.0),
        format!("k_stop IQR per nsr {iqr:?}"),
    )
}

fn poly_coverage(out: &harness::BenchOutput) -> Outcome {
    let mut notes = Vec::new();
    let mut ok = out.failures.is_empty();
    for &nsr in ExperimentConfig::default().nsr_ladder.iter().filter(|&&s| s <= 0.25) {
        let a = median(out, Method::Idarr, nsr, "l2rho_error");
        let b = median(out, Method::IrL2Euclidean, nsr, "l2rho_error");
        ok &= a <= b;
        notes.push(format!("nsr {nsr}: {a:.3} vs {b:.3}"));
    }
    let max_k = out.rows.iter().filter(|r| r.method.is_iterative()).map(|r| r.k_stop).max().unwrap_or(0);
    ok &= max_k <= 30;
    pass_if(ok, format!("{}; max iterative k_stop {max_k}", notes.join(", ")))
}

fn timing_scaling() -> Outcome {
    let (_, summary) = harness::timing_study(&[200, 400, 800], 500, 10, harness::TIMING_REPLICAS, 3).unwrap();
    let ratio = |f: fn(&harness::TimingSummary) -> f64, i: usize| f(&summary[i + 1]) / f(&summary[i]);
    let idarr: Vec<f64> = (0..2).map(|i| ratio(|s| s.idarr_median_ms, i)).collect();
    let dartr_last = ratio(|s| s.dartr_median_ms, 1);
    pass_if(
        idarr.iter().all(|&r| r <= 3.0) && dartr_last >= 3.0,
        format!("iDARR doubling ratios {:.2} {:.2}, DARTR last doubling {dartr_last:.2}", idarr[0], idarr[1]),
    )
}

fn interior_minimum(curve: &[harness::DeblurRow]) -> Option<(usize, f64)> {
    let (i, best) = curve
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.relative_error.total_cmp(&b.1.relative_error))?;
    (i > 0 && i + 1 < curve.len()).then_some((i + 1, best.relative_error))
}

fn deblur_semiconvergence() -> Outcome {
    let image = GrayImage::phantom(64);
    let out = harness::deblur(&image, &DeblurConfig::default()).unwrap();
    let terminal = out.terminal_error().unwrap_or(f64::NAN);
    let interior = interior_minimum(&out.curve);
    let baseline = harness::deblur(
        &image,
        &DeblurConfig { method: Method::IrL2Euclidean, ..DeblurConfig::default() },
    )
    .unwrap();
    let ok = interior.is_some() && out.relative_error <= terminal;
    pass_if(
        ok,
        format!(
            "iDARR minimum {interior:?} over {} iterations, k_stop {} error {:.4}, terminal {terminal:.4}; IR-l2 minimum {:?}",
            out.curve.len(),
            out.k_stop,
            out.relative_error,
            interior_minimum(&baseline.curve)
        ),
    )
}

fn baseline_equivalence() -> Outcome {
    let mut split = 0.0f64;
    let mut agree = 0.0f64;
    for seed in 0..10u64 {
        let mut r = rng(300 + seed);
        let n = 10 + 2 * seed as usize;
        let a = gaussian_matrix(n + 8, n, &mut r);
        let b = gaussian_vector(n + 8, &mut r);
        split = split.max(oracle::split_preconditioner_defect(&exploration(&a), &b, n).unwrap());
        let q = oracle::orthonormal_columns(n + 8, n, &mut r);
        let geom = RkhsGeometry::identity(Arc::new(DenseMap::from_matrix(&q).unwrap()));
        agree = agree.max(oracle::metric_agreement_defect(&geom, &b, n).unwrap());
    }
    pass_if(
        split <= 1e-10 && agree <= 1e-12,
        format!("IR-L2 vs split LSQR {split:.2e}, iDARR(B=I) vs IR-l2 {agree:.2e}"),
    )
}

fn report(failed: &mut usize, id: usize, name: &str, budget: Option<Duration>, run: impl FnOnce() -> Outcome) {
    let start = Instant::now();
    let mut o = run();
    let elapsed = start.elapsed();
    if let Some(limit) = budget {
        if elapsed > limit {
            o.passed = false;
            o.detail.push_str(&format!("; over budget {limit:?}"));
        }
    }
    if !o.passed {
        *failed += 1;
    }
    let verdict = if o.passed { "PASS" } else { "FAIL" };
    println!("criterion {id:>2} {verdict} {name}: {} [{:.2?}]", o.detail, elapsed);
}

fn main() -> ExitCode {
    std::env::set_var(harness::THREADS_ENV, "1");
    let mut failed = 0;
    let f = &mut failed;
    report(f, 1, "gGKB orthogonality", Some(Duration::from_secs(1)), orthogonality);
    report(f, 2, "residual identity", None, residual_identity);
    report(f, 3, "termination count", None, termination_count);
    report(f, 4, "terminal naive solution", None, terminal_solution);

    let mut exp = None;
    report(f, 5, "Fredholm error decay, single thread", Some(Duration::from_secs(300)), || {
        let out = bench(KernelId::ExpDecay, vec![Method::Idarr, Method::IrL2Euclidean]);
        let o = error_trend(&out);
        exp = Some(out);
        o
    });
    report(f, 6, "stopping stability", None, || stopping_stability(exp.as_ref().unwrap()));
    report(f, 7, "PolyDecay coverage", None, || {
        poly_coverage(&bench(KernelId::PolyDecay, vec![Method::Idarr, Method::IrL2Euclidean, Method::IrL2Basis]))
    });
    report(f, 8, "timing scaling", Some(Duration::from_secs(120)), timing_scaling);
    report(f, 9, "deblurring semi-convergence", Some(Duration::from_secs(120)), deblur_semiconvergence);
    report(f, 10, "baseline equivalences", None, baseline_equivalence);

    println!("{} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
