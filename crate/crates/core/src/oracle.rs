//! Dense oracles and the invariant battery.
//!
//! Everything here materializes the operator, so it is only meant for small
//! instances (`m, n <= 200`). The checks follow the properties of the
//! bidiagonalization: orthonormal bases, the recursive residual, the
//! termination count, the terminal least-squares solution and uniqueness of
//! the iterates.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::ggkb::{run_ggkb, BidiagFactors, GgkbOptions, Metric};
use crate::linops::{DenseMap, LinearMap};
use crate::rkhs::{generalized_eig, RkhsGeometry};
use crate::solver::{krylov_solve, SolveOptions, SolveOutcome, StopRule};
use crate::vector::{dot, norm2, sub};

/// Largest dimension accepted by the dense battery.
pub const MAX_ORACLE_DIM: usize = 200;

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..len).map(|_| rng.sample(StandardNormal)).collect()
}

/// `rows x cols` matrix with orthonormal columns (`cols <= rows`).
pub fn orthonormal_columns(rows: usize, cols: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let q = gaussian_matrix(rows, cols, rng).qr().q();
    q.columns(0, cols).into_owned()
}

/// Product of Gaussian `rows x rank` and `rank x cols` factors.
pub fn rank_deficient(rows: usize, cols: usize, rank: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    gaussian_matrix(rows, rank, rng) * gaussian_matrix(rank, cols, rng)
}

/// Positive weights in `[0.5, 1.5)`, normalized to sum to one.
pub fn random_weights(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut w: Vec<f64> = (0..len).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

pub fn dense_map(a: &DMatrix<f64>) -> Result<Arc<dyn LinearMap>> {
    Ok(Arc::new(DenseMap::from_matrix(a)?))
}

/// Runs the bidiagonalization with full reorthogonalization until it
/// terminates (or `min(m, n) + 1` steps).
pub fn run_to_termination(geom: &RkhsGeometry, b: &[f64], metric: Metric) -> Result<BidiagFactors> {
    let steps = geom.rows().min(geom.cols()) + 1;
    run_ggkb(
        geom,
        b,
        steps,
        GgkbOptions {
            metric,
            reorthogonalize: true,
            retain_vectors: true,
        },
    )
}

/// `(max |u_i^T u_j - d_ij|, max |z_i^T zbar_j - d_ij|)` over the retained
/// vectors.
pub fn orthogonality_defect(f: &BidiagFactors) -> (f64, f64) {
    let gram_defect = |left: &[Vec<f64>], right: &[Vec<f64>]| {
        let mut worst = 0.0f64;
        for (i, a) in left.iter().enumerate() {
            for (j, b) in right.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot(a, b) - target).abs());
            }
        }
        worst
    };
    (
        gram_defect(f.u_vectors(), f.u_vectors()),
        gram_defect(f.z_vectors(), f.zbar_vectors()),
    )
}

fn solve_fixed(geom: &RkhsGeometry, b: &[f64], metric: Metric, k: usize) -> Result<SolveOutcome> {
    krylov_solve(
        geom,
        b,
        metric,
        StopRule::FixedIters(k),
        SolveOptions {
            reorthogonalize: true,
            keep_iterates: true,
        },
    )
}

fn iterates(out: &SolveOutcome) -> &[Vec<f64>] {
    out.iterates.as_deref().unwrap_or_default()
}

/// `max_k |gamma_bar_{k+1} - ||A x_k - b||| / ||b||` over the first
/// `max_iters` iterations of iDARR.
pub fn residual_identity_defect(geom: &RkhsGeometry, b: &[f64], max_iters: usize) -> Result<f64> {
    let out = solve_fixed(geom, b, Metric::Rkhs, max_iters)?;
    let scale = norm2(b);
    let mut worst = 0.0f64;
    for (rec, x) in out.history.iter().zip(iterates(&out)) {
        let explicit = norm2(&sub(&geom.map().apply(x)?, b));
        worst = worst.max((rec.residual_norm - explicit).abs() / scale);
    }
    Ok(worst)
}

/// Operator with a prescribed spectrum of `A C_rkhs^+ A^T` and data with
/// chosen eigenspace projections.
#[derive(Debug, Clone)]
pub struct SpectralInstance {
    pub geom: RkhsGeometry,
    pub b: Vec<f64>,
    /// Distinct nonzero eigenvalues of `A C_rkhs^+ A^T`.
    pub distinct: usize,
    /// Eigenspaces that `b` touches; the expected `k_t`.
    pub expected_k_t: usize,
    pub rank: usize,
}

/// Builds `A = U S Q^T B^{1/2}` with orthonormal `U`, `Q` and a random
/// positive diagonal `B`, so that `A C_rkhs^+ A^T = U S^4 U^T`.
///
/// `levels` lists `(singular value, multiplicity)` groups with distinct
/// values; `active[g]` says whether `b` has a nonzero projection on group
/// `g`. With `null_part` the data also get a component outside `range(A)`.
pub fn spectral_instance(
    m: usize,
    n: usize,
    levels: &[(f64, usize)],
    active: &[bool],
    null_part: bool,
    rng: &mut impl Rng,
) -> Result<SpectralInstance> {
    if levels.len() != active.len() {
        return Err(Error::dim("spectral_instance activity flags", levels.len(), active.len()));
    }
    let rank: usize = levels.iter().map(|l| l.1).sum();
    if rank == 0 || rank > m.min(n) || (null_part && rank == m) {
        return Err(Error::Usage(format!("cannot place rank {rank} in a {m}x{n} operator")));
    }
    if levels.iter().any(|l| !(l.0 > 0.0)) {
        return Err(Error::Usage("singular values must be positive".into()));
    }
    let u = orthonormal_columns(m, m, rng);
    let q = orthonormal_columns(n, rank, rng);
    let basis = random_weights(n, rng);

    let mut sigma = Vec::with_capacity(rank);
    let mut b = DVector::zeros(m);
    for (&(value, mult), &on) in levels.iter().zip(active) {
        let first = sigma.len();
        sigma.extend(std::iter::repeat_n(value, mult));
        if on {
            for c in first..first + mult {
                let w: f64 = rng.random_range(0.5..1.5);
                b += u.column(c) * w;
            }
        }
    }
    if null_part {
        b += u.column(rank) * 0.3;
    }
    let us = DMatrix::from_fn(m, rank, |i, j| u[(i, j)] * sigma[j]);
    let mut a = us * q.transpose();
    for (j, mut col) in a.column_iter_mut().enumerate() {
        col *= basis[j].sqrt();
    }
    let geom = RkhsGeometry::with_basis(dense_map(&a)?, basis)?;
    Ok(SpectralInstance {
        geom,
        b: b.as_slice().to_vec(),
        distinct: levels.len(),
        expected_k_t: active.iter().filter(|&&on| on).count(),
        rank,
    })
}

/// Terminal iterate against the dense restricted least-squares solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalCheck {
    pub k_t: usize,
    pub rank: usize,
    /// `||x_{k_t} - x_oracle|| / ||x_oracle||`.
    pub relative_error: f64,
    /// `||P_range(C) A^T (A x_{k_t} - b)|| / ||A^T b||`.
    pub normal_defect: f64,
}

/// Runs iDARR to termination and compares with
/// `argmin_{x in range(C_rkhs)} ||A x - b||` from the generalized
/// eigendecomposition.
pub fn terminal_solution_check(geom: &RkhsGeometry, b: &[f64]) -> Result<TerminalCheck> {
    let decomp = generalized_eig(geom.map(), geom.basis())?;
    let oracle = decomp.restricted_least_squares(geom.map(), b)?;
    let out = solve_fixed(geom, b, Metric::Rkhs, geom.cols() + 1)?;
    let k_t = out.k_t.ok_or_else(|| {
        Error::NumericalBreakdown(format!("no termination within {} steps", geom.cols() + 1))
    })?;
    let x = &out.x;

    let range = decomp.range_basis().qr().q().columns(0, decomp.rank()).into_owned();
    let grad = DVector::from_vec(geom.map().apply_adjoint(&sub(&geom.map().apply(x)?, b))?);
    let projected = &range * range.tr_mul(&grad);
    let atb = norm2(&geom.map().apply_adjoint(b)?);
    Ok(TerminalCheck {
        k_t,
        rank: decomp.rank(),
        relative_error: norm2(&sub(x, &oracle)) / norm2(&oracle),
        normal_defect: projected.norm() / atb,
    })
}

/// Reruns `k` iDARR steps on the column-permuted problem
/// `A P`, `P^T B P` and returns `||P x'_k - x_k|| / ||x_k||`. The solution
/// space is the same, so unique iterates must coincide.
pub fn uniqueness_defect(geom: &RkhsGeometry, b: &[f64], k: usize, rng: &mut impl Rng) -> Result<f64> {
    let n = geom.cols();
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let a = geom.map().to_dense();
    let permuted = DMatrix::from_fn(a.nrows(), n, |i, j| a[(i, perm[j])]);
    let basis: Vec<f64> = perm.iter().map(|&p| geom.basis()[p]).collect();
    let other = RkhsGeometry::with_basis(dense_map(&permuted)?, basis)?;

    let x = solve_fixed(geom, b, Metric::Rkhs, k)?.x;
    let y = solve_fixed(&other, b, Metric::Rkhs, k)?.x;
    let mut unpermuted = vec![0.0; n];
    for (j, &p) in perm.iter().enumerate() {
        unpermuted[p] = y[j];
    }
    Ok(norm2(&sub(&unpermuted, &x)) / norm2(&x))
}

/// Textbook LSQR iterates `x_1..x_k` for `min ||A x - b||`: Golub-Kahan with
/// full reorthogonalization, then each projected problem
/// `min ||B_k y - beta_1 e_1||` solved densely.
pub fn lsqr_reference(a: &DMatrix<f64>, b: &[f64], max_iters: usize) -> Vec<DVector<f64>> {
    let (m, n) = a.shape();
    let mut us: Vec<DVector<f64>> = Vec::new();
    let mut vs: Vec<DVector<f64>> = Vec::new();
    let (mut alphas, mut betas) = (Vec::new(), Vec::new());
    let bv = DVector::from_column_slice(b);
    let beta1 = bv.norm();
    us.push(&bv / beta1);
    let mut v = a.tr_mul(&us[0]);
    let tol = m.max(n) as f64 * f64::EPSILON * a.norm();
    let mut out = Vec::new();
    for k in 1..=max_iters {
        for w in &vs {
            v -= w * w.dot(&v);
        }
        let alpha = v.norm();
        if alpha <= tol {
            break;
        }
        vs.push(&v / alpha);
        alphas.push(alpha);
        let mut u = a * &vs[k - 1] - &us[k - 1] * alpha;
        for _ in 0..2 {
            for w in &us {
                u -= w * w.dot(&u);
            }
        }
        let beta = u.norm();
        betas.push(beta);

        let bk = DMatrix::from_fn(k + 1, k, |i, j| {
            if i == j {
                alphas[j]
            } else if i == j + 1 {
                betas[j]
            } else {
                0.0
            }
        });
        let mut rhs = DVector::zeros(k + 1);
        rhs[0] = beta1;
        let y = bk.svd(true, true).solve(&rhs, 0.0).expect("svd solve");
        let vk = DMatrix::from_columns(&vs);
        out.push(vk * y);

        if beta <= tol {
            break;
        }
        us.push(u / beta);
        v = a.tr_mul(&us[k]) - &vs[k - 1] * beta;
    }
    out
}

/// Largest relative gap between IR-L2 iterates and LSQR on `A B^{-1/2}`
/// mapped back by `B^{-1/2}`, over the first `max_iters` iterations.
pub fn split_preconditioner_defect(geom: &RkhsGeometry, b: &[f64], max_iters: usize) -> Result<f64> {
    let inv_sqrt: Vec<f64> = geom.basis().iter().map(|w| 1.0 / w.sqrt()).collect();
    let mut a = geom.map().to_dense();
    for (j, mut col) in a.column_iter_mut().enumerate() {
        col *= inv_sqrt[j];
    }
    let reference = lsqr_reference(&a, b, max_iters);
    let out = solve_fixed(geom, b, Metric::Basis, max_iters)?;
    compare_iterates(iterates(&out), &reference, Some(&inv_sqrt))
}

/// Largest relative gap between iDARR and IR-l2 iterates on the same
/// problem (meant for `B = I` and orthogonal `A`, where the two coincide).
pub fn metric_agreement_defect(geom: &RkhsGeometry, b: &[f64], max_iters: usize) -> Result<f64> {
    let rkhs = solve_fixed(geom, b, Metric::Rkhs, max_iters)?;
    let euclid = solve_fixed(geom, b, Metric::Euclidean, max_iters)?;
    let reference: Vec<DVector<f64>> = iterates(&euclid)
        .iter()
        .map(|x| DVector::from_column_slice(x))
        .collect();
    compare_iterates(iterates(&rkhs), &reference, None)
}

fn compare_iterates(
    got: &[Vec<f64>],
    reference: &[DVector<f64>],
    scaling: Option<&[f64]>,
) -> Result<f64> {
    if got.len() != reference.len() {
        return Err(Error::dim("iterate count", reference.len(), got.len()));
    }
    let mut worst = 0.0f64;
    for (x, r) in got.iter().zip(reference) {
        let r: Vec<f64> = match scaling {
            Some(s) => r.iter().zip(s).map(|(a, b)| a * b).collect(),
            None => r.as_slice().to_vec(),
        };
        worst = worst.max(norm2(&sub(x, &r)) / norm2(&r));
    }
    Ok(worst)
}

/// One line of the battery report.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl PropertyCheck {
    fn new(name: &'static str, max_deviation: f64, tolerance: f64) -> Self {
        PropertyCheck {
            name,
            max_deviation,
            tolerance,
            passed: max_deviation <= tolerance,
        }
    }
}

impl fmt::Display for PropertyCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<22} {}  max deviation {:.3e} (tolerance {:.1e})",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.max_deviation,
            self.tolerance
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatteryConfig {
    pub m: usize,
    pub n: usize,
    /// Rank of the rank-deficient instances; `None` picks `min(m, n) / 4`.
    pub rank: Option<usize>,
    pub seed: u64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig {
            m: 30,
            n: 20,
            rank: None,
            seed: 1,
        }
    }
}

/// Runs every property on random instances of the configured size.
pub fn run_battery(cfg: &BatteryConfig) -> Result<Vec<PropertyCheck>> {
    let (m, n) = (cfg.m, cfg.n);
    if m < 2 || n < 2 || m > MAX_ORACLE_DIM || n > MAX_ORACLE_DIM {
        return Err(Error::Usage(format!(
            "oracle sizes must lie in 2..={MAX_ORACLE_DIM}, got {m}x{n}"
        )));
    }
    let full = m.min(n);
    let rank = cfg.rank.unwrap_or((full / 4).max(1));
    if rank == 0 || rank > full {
        return Err(Error::Usage(format!("rank must lie in 1..={full}, got {rank}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut checks = Vec::new();

    let a = gaussian_matrix(m, n, &mut rng);
    let geom = RkhsGeometry::exploration(dense_map(&a)?)?;
    let b = gaussian_vector(m, &mut rng);
    let f = run_to_termination(&geom, &b, Metric::Rkhs)?;
    let (du, dz) = orthogonality_defect(&f);
    checks.push(PropertyCheck::new("orthogonality U", du, 1e-10));
    checks.push(PropertyCheck::new("orthogonality Z", dz, 1e-10));
    checks.push(PropertyCheck::new(
        "residual identity",
        residual_identity_defect(&geom, &b, full)?,
        1e-9,
    ));
    let k_full = f.k_t().unwrap_or(f.len());
    checks.push(PropertyCheck::new(
        "uniqueness",
        uniqueness_defect(&geom, &b, (k_full / 2).max(1), &mut rng)?,
        1e-8,
    ));

    // Termination count on a prescribed spectrum with one silent group.
    let groups = rank.min(4);
    let mut levels = Vec::with_capacity(groups);
    let mut left = rank;
    for g in 0..groups {
        let mult = if g + 1 == groups { left } else { 1 };
        left -= mult;
        levels.push((0.75f64.powi(g as i32), mult));
    }
    let active: Vec<bool> = (0..groups).map(|g| groups == 1 || g != 1).collect();
    let inst = spectral_instance(m, n, &levels, &active, rank < m, &mut rng)?;
    let f = run_to_termination(&inst.geom, &inst.b, Metric::Rkhs)?;
    let k_t = f.k_t().unwrap_or(usize::MAX);
    checks.push(PropertyCheck::new(
        "k_t count",
        k_t.abs_diff(inst.expected_k_t) as f64,
        0.0,
    ));

    // Rank-deficient instance: k_t <= r and the terminal oracle.
    let a = rank_deficient(m, n, rank, &mut rng);
    let geom = RkhsGeometry::exploration(dense_map(&a)?)?;
    let b = gaussian_vector(m, &mut rng);
    let term = terminal_solution_check(&geom, &b)?;
    checks.push(PropertyCheck::new(
        "k_t <= rank",
        term.k_t.saturating_sub(rank) as f64,
        0.0,
    ));
    checks.push(PropertyCheck::new("terminal solution", term.relative_error, 1e-6));
    checks.push(PropertyCheck::new("terminal normal eq", term.normal_defect, 1e-8));

    // Identity operator with b = e_1 terminates after one step.
    let eye = RkhsGeometry::exploration(Arc::new(DenseMap::identity(n)?))?;
    let mut e1 = vec![0.0; n];
    e1[0] = 1.0;
    let f = run_to_termination(&eye, &e1, Metric::Rkhs)?;
    checks.push(PropertyCheck::new(
        "identity k_t = 1",
        f.k_t().unwrap_or(usize::MAX).abs_diff(1) as f64,
        0.0,
    ));
    Ok(checks)
}
