//! Krylov regularization drivers.
//!
//! [`idarr_solve`] interleaves the bidiagonalization with the Givens-rotation
//! update of [`SolverRun`]; the residual norm `||A x_k - b||` and the
//! solution norm `||x_k||_M` come out of the recursion without extra operator
//! applications. The iteration count is the regularization parameter and is
//! picked by a [`StopRule`].

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::ggkb::{ggkb_init, ggkb_step, BidiagFactors, GgkbOptions, Metric, StepOutcome};
use crate::linops::LinearMap;
use crate::rkhs::RkhsGeometry;
use crate::vector::{axpy, dot};

/// Values below this are clamped before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-300;

/// Curvature at or below this marks a corner as weak.
pub const WEAK_CORNER_CURVATURE: f64 = 1e-6;

/// How the corner of a discrete L-curve is located.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CornerRule {
    /// Corner candidates from successively pruned polylines
    /// ([`pruned_lcurve_corner`]).
    #[default]
    AdaptivePruning,
    /// Largest three-point curvature ([`lcurve_corner`]).
    MaxCurvature,
}

impl CornerRule {
    pub fn locate(self, points: &[(f64, f64)]) -> Result<Corner> {
        match self {
            CornerRule::AdaptivePruning => pruned_lcurve_corner(points),
            CornerRule::MaxCurvature => lcurve_corner(points),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    /// Run at least `min_iters` (unless the process terminates) and at most
    /// `max_iters` iterations, then stop at the corner of the L-curve
    /// `(log ||A x_k - b||, log ||x_k||_M)`.
    LCurve {
        min_iters: usize,
        max_iters: usize,
        corner: CornerRule,
    },
    /// First `k` with `||A x_k - b|| <= tau * noise_norm`.
    Discrepancy {
        noise_norm: f64,
        tau: f64,
        max_iters: usize,
    },
    FixedIters(usize),
}

impl StopRule {
    pub const DEFAULT_MIN_ITERS: usize = 10;
    pub const DEFAULT_MAX_ITERS: usize = 30;

    pub fn lcurve() -> Self {
        StopRule::LCurve {
            min_iters: Self::DEFAULT_MIN_ITERS,
            max_iters: Self::DEFAULT_MAX_ITERS,
            corner: CornerRule::default(),
        }
    }

    pub fn discrepancy(noise_norm: f64, tau: f64) -> Self {
        StopRule::Discrepancy {
            noise_norm,
            tau,
            max_iters: 10 * Self::DEFAULT_MAX_ITERS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StopRule::LCurve {
                min_iters,
                max_iters,
                ..
            } => {
                if min_iters < Self::DEFAULT_MIN_ITERS {
                    return Err(Error::Usage(format!(
                        "L-curve needs min_iters >= {}, got {min_iters}",
                        Self::DEFAULT_MIN_ITERS
                    )));
                }
                if max_iters < min_iters {
                    return Err(Error::Usage("L-curve max_iters below min_iters".into()));
                }
            }
            StopRule::Discrepancy {
                noise_norm,
                tau,
                max_iters,
            } => {
                if !(tau > 1.0) {
                    return Err(Error::Usage(format!("discrepancy tau must exceed 1, got {tau}")));
                }
                if !(noise_norm > 0.0 && noise_norm.is_finite()) {
                    return Err(Error::Usage("noise norm must be positive".into()));
                }
                if max_iters == 0 {
                    return Err(Error::Usage("max_iters must be positive".into()));
                }
            }
            StopRule::FixedIters(k) => {
                if k == 0 {
                    return Err(Error::Usage("fixed iteration count must be positive".into()));
                }
            }
        }
        Ok(())
    }

    pub fn max_iters(&self) -> usize {
        match *self {
            StopRule::LCurve { max_iters, .. } | StopRule::Discrepancy { max_iters, .. } => {
                max_iters
            }
            StopRule::FixedIters(k) => k,
        }
    }
}

/// Per-iteration bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub k: usize,
    /// `gamma_bar_{k+1} = ||A x_k - b||_2`.
    pub residual_norm: f64,
    /// `||x_k||_M = (x_k^T xbar_k)^{1/2}`.
    pub solution_norm: f64,
    pub elapsed: Duration,
}

/// LSQR-style recursive solution of the projected problems
/// `min_y ||B_k y - beta_1 e_1||`, with `x_k = Z_k y_k` and the shadow
/// `xbar_k = M x_k` updated in lockstep. Each step costs `O(n)`.
#[derive(Debug, Clone)]
pub struct SolverRun {
    x: Vec<f64>,
    xbar: Vec<f64>,
    w: Vec<f64>,
    wbar: Vec<f64>,
    rho_bar: f64,
    gamma_bar: f64,
    k: usize,
    history: Vec<IterRecord>,
    started: Instant,
}

impl SolverRun {
    /// `x_0 = 0`, `w_1 = z_1`, `wbar_1 = zbar_1`, `gamma_bar_1 = beta_1`,
    /// `rho_bar_1 = alpha_1`.
    pub fn new(alpha1: f64, beta1: f64, z1: &[f64], zbar1: &[f64]) -> Self {
        let n = z1.len();
        SolverRun {
            x: vec![0.0; n],
            xbar: vec![0.0; n],
            w: z1.to_vec(),
            wbar: zbar1.to_vec(),
            rho_bar: alpha1,
            gamma_bar: beta1,
            k: 0,
            history: Vec::new(),
            started: Instant::now(),
        }
    }

    /// Applies one Givens rotation and advances `x_{i-1} -> x_i`.
    ///
    /// `next` carries `(z_{i+1}, zbar_{i+1})`; pass `None` when the
    /// bidiagonalization has terminated (`alpha_next` must then be 0).
    pub fn update_step(
        &mut self,
        alpha_next: f64,
        beta_next: f64,
        next: Option<(&[f64], &[f64])>,
    ) -> Result<()> {
        let rho = self.rho_bar.hypot(beta_next);
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::NumericalBreakdown(format!(
                "Givens rotation degenerate at step {}",
                self.k + 1
            )));
        }
        let c = self.rho_bar / rho;
        let s = beta_next / rho;
        let theta = s * alpha_next;
        self.rho_bar = -c * alpha_next;
        let gamma = c * self.gamma_bar;
        self.gamma_bar *= s;

        let step = gamma / rho;
        axpy(step, &self.w, &mut self.x);
        axpy(step, &self.wbar, &mut self.xbar);
        let t = theta / rho;
        match next {
            Some((z, zbar)) => {
                for ((wi, zi), (wbi, zbi)) in self
                    .w
                    .iter_mut()
                    .zip(z)
                    .zip(self.wbar.iter_mut().zip(zbar))
                {
                    *wi = zi - t * *wi;
                    *wbi = zbi - t * *wbi;
                }
            }
            None => {
                self.w.fill(0.0);
                self.wbar.fill(0.0);
            }
        }

        self.k += 1;
        let norm_sq = dot(&self.x, &self.xbar).max(0.0);
        self.history.push(IterRecord {
            k: self.k,
            residual_norm: self.gamma_bar.abs(),
            solution_norm: norm_sq.sqrt(),
            elapsed: self.started.elapsed(),
        });
        Ok(())
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn xbar(&self) -> &[f64] {
        &self.xbar
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn residual_norm(&self) -> f64 {
        self.gamma_bar.abs()
    }

    pub fn history(&self) -> &[IterRecord] {
        &self.history
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// The stop rule fired.
    Stopped,
    /// The bidiagonalization terminated; the last iterate is the least-squares
    /// solution over the reachable Krylov space.
    Terminated,
    /// The discrepancy threshold was never reached; the last (smallest
    /// residual) iterate is returned.
    NotConverged,
    /// The L-curve had no clear corner.
    WeakCorner,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub x: Vec<f64>,
    pub k_stop: usize,
    pub history: Vec<IterRecord>,
    pub status: SolveStatus,
    /// `k_t` if the bidiagonalization terminated during the run.
    pub k_t: Option<usize>,
    /// `x_1, x_2, ...` when requested or needed by the stop rule.
    pub iterates: Option<Vec<Vec<f64>>>,
}

impl SolveOutcome {
    pub fn residual_norm(&self) -> f64 {
        self.record(self.k_stop).map_or(f64::NAN, |r| r.residual_norm)
    }

    pub fn solution_norm(&self) -> f64 {
        self.record(self.k_stop).map_or(0.0, |r| r.solution_norm)
    }

    fn record(&self, k: usize) -> Option<&IterRecord> {
        k.checked_sub(1).and_then(|i| self.history.get(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveOptions {
    /// Full reorthogonalization of both Krylov bases (on by default).
    pub reorthogonalize: bool,
    pub keep_iterates: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            reorthogonalize: true,
            keep_iterates: false,
        }
    }
}

/// Runs the Krylov regularization loop in the given metric.
pub fn krylov_solve(
    geom: &RkhsGeometry,
    b: &[f64],
    metric: Metric,
    stop: StopRule,
    options: SolveOptions,
) -> Result<SolveOutcome> {
    stop.validate()?;
    let keep_iterates = options.keep_iterates || matches!(stop, StopRule::LCurve { .. });
    let mut f = ggkb_init(
        geom,
        b,
        GgkbOptions {
            metric,
            reorthogonalize: options.reorthogonalize,
            retain_vectors: options.reorthogonalize,
        },
    )?;
    if f.k_t() == Some(0) {
        return Ok(SolveOutcome {
            x: vec![0.0; geom.cols()],
            k_stop: 0,
            history: Vec::new(),
            status: SolveStatus::Terminated,
            k_t: Some(0),
            iterates: keep_iterates.then(Vec::new),
        });
    }

    let mut run = SolverRun::new(f.alpha(1), f.beta(1), f.latest_z(), f.latest_zbar());
    let mut iterates = keep_iterates.then(Vec::new);
    let mut status = None;
    while status.is_none() {
        advance(&mut f, &mut run, geom)?;
        if let Some(store) = iterates.as_mut() {
            store.push(run.x().to_vec());
        }
        let k = run.k();
        status = match stop {
            StopRule::FixedIters(target) if k >= target => Some(SolveStatus::Stopped),
            StopRule::Discrepancy {
                noise_norm, tau, ..
            } if run.residual_norm() <= tau * noise_norm => Some(SolveStatus::Stopped),
            StopRule::Discrepancy { max_iters, .. } if k >= max_iters => {
                Some(SolveStatus::NotConverged)
            }
            StopRule::LCurve { max_iters, .. } if k >= max_iters => Some(SolveStatus::Stopped),
            _ if f.is_terminated() => Some(SolveStatus::Terminated),
            _ => None,
        };
    }
    let mut status = status.unwrap_or(SolveStatus::Stopped);
    let history = run.history().to_vec();
    let mut k_stop = run.k();
    let mut x = run.x().to_vec();

    if let StopRule::LCurve { corner: rule, .. } = stop {
        if history.len() >= 3 {
            let corner = rule.locate(&lcurve_points(&history))?;
            k_stop = history[corner.index].k;
            if corner.weak {
                status = SolveStatus::WeakCorner;
            } else if status == SolveStatus::Terminated && k_stop < run.k() {
                status = SolveStatus::Stopped;
            }
            if let Some(store) = iterates.as_ref() {
                x = store[k_stop - 1].clone();
            }
        }
    }
    Ok(SolveOutcome {
        x,
        k_stop,
        history,
        status,
        k_t: f.k_t(),
        iterates,
    })
}

/// One gGKB step followed by one update step.
fn advance(f: &mut BidiagFactors, run: &mut SolverRun, geom: &RkhsGeometry) -> Result<()> {
    let i = run.k() + 1;
    match ggkb_step(f, geom)? {
        StepOutcome::Extended => {
            let (alpha, beta) = (f.alpha(i + 1), f.beta(i + 1));
            run.update_step(alpha, beta, Some((f.latest_z(), f.latest_zbar())))
        }
        StepOutcome::Terminated(_) => run.update_step(0.0, f.beta(i + 1), None),
    }
}

/// `(log residual, log norm)` pairs with the `log(0)` guard applied.
pub fn lcurve_points(history: &[IterRecord]) -> Vec<(f64, f64)> {
    history
        .iter()
        .map(|r| {
            (
                r.residual_norm.max(LOG_FLOOR).ln(),
                r.solution_norm.max(LOG_FLOOR).ln(),
            )
        })
        .collect()
}

/// iDARR: Krylov regularization in the data-adaptive RKHS.
pub fn idarr_solve(geom: &RkhsGeometry, b: &[f64], stop: StopRule) -> Result<SolveOutcome> {
    krylov_solve(geom, b, Metric::Rkhs, stop, SolveOptions::default())
}

/// IR-l2 baseline: LSQR, i.e. Golub-Kahan in the Euclidean geometry.
pub fn irl2_solve(map: Arc<dyn LinearMap>, b: &[f64], stop: StopRule) -> Result<SolveOutcome> {
    let geom = RkhsGeometry::identity(map);
    krylov_solve(&geom, b, Metric::Euclidean, stop, SolveOptions::default())
}

/// IR-L2 baseline: the same machinery with the metric `x^T B x`, which is
/// LSQR preconditioned by `B^{1/2}`.
pub fn ir_basis_l2_solve(geom: &RkhsGeometry, b: &[f64], stop: StopRule) -> Result<SolveOutcome> {
    krylov_solve(geom, b, Metric::Basis, stop, SolveOptions::default())
}

/// Corner picked on a discrete L-curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corner {
    /// Index into the input points.
    pub index: usize,
    pub curvature: f64,
    /// No point turned with curvature above [`WEAK_CORNER_CURVATURE`].
    pub weak: bool,
}

/// Signed curvature of the circle through three points, positive for a
/// clockwise turn (the orientation of an L-curve corner traversed from the
/// large-residual end).
pub fn three_point_curvature(p0: (f64, f64), p1: (f64, f64), p2: (f64, f64)) -> f64 {
    let (ax, ay) = (p1.0 - p0.0, p1.1 - p0.1);
    let (bx, by) = (p2.0 - p1.0, p2.1 - p1.1);
    let (cx, cy) = (p2.0 - p0.0, p2.1 - p0.1);
    let denom = ax.hypot(ay) * bx.hypot(by) * cx.hypot(cy);
    if !(denom > 0.0) || !denom.is_finite() {
        return 0.0;
    }
    -2.0 * (ax * by - ay * bx) / denom
}

/// Index of maximal curvature on a log-log L-curve.
///
/// Points are `(log residual, log norm)` in iteration order. Leading points
/// whose norm is negligible (more than 12 decades below the largest) are
/// pruned first. Ties go to the smaller index.
pub fn lcurve_corner(points: &[(f64, f64)]) -> Result<Corner> {
    if points.len() < 3 {
        return Err(Error::InsufficientHistory(points.len()));
    }
    let mut start = leading_cutoff(points);
    if points.len() - start < 3 {
        start = points.len() - 3;
    }
    let mut best = Corner {
        index: start + 1,
        curvature: f64::NEG_INFINITY,
        weak: true,
    };
    for i in start + 1..points.len() - 1 {
        let kappa = three_point_curvature(points[i - 1], points[i], points[i + 1]);
        if kappa > best.curvature {
            best.index = i;
            best.curvature = kappa;
        }
    }
    best.weak = !(best.curvature > WEAK_CORNER_CURVATURE);
    Ok(best)
}

fn cross(a: (f64, f64), b: (f64, f64)) -> f64 {
    a.0 * b.1 - b.0 * a.1
}

fn direction(from: (f64, f64), to: (f64, f64)) -> (f64, f64) {
    let (dx, dy) = (to.0 - from.0, to.1 - from.1);
    let len = dx.hypot(dy);
    (dx / len, dy / len)
}

/// Sharpest convex turn of a pruned polyline; returns a point index.
fn turning_candidate(dirs: &[(f64, f64)], segs: &[usize]) -> Option<usize> {
    let mut best = (0.0, 0);
    for j in 0..dirs.len().saturating_sub(1) {
        let d = cross(dirs[j], dirs[j + 1]);
        if d < best.0 {
            best = (d, j);
        }
    }
    (best.0 < 0.0).then(|| segs[best.1] + 1)
}

/// Point closest to the intersection of the flattest segment with the
/// steepest later segment.
fn global_candidate(points: &[(f64, f64)], dirs: &[(f64, f64)], segs: &[usize]) -> Option<usize> {
    let ln = dirs.len();
    let mut order: Vec<usize> = (0..ln).collect();
    order.sort_by(|&a, &b| dirs[a].1.abs().total_cmp(&dirs[b].1.abs()));
    let (mut lo, mut hi) = (order[0], order[ln - 1]);
    let mut count = 1;
    while lo >= hi {
        if count >= ln {
            return None;
        }
        hi = hi.max(order[ln - 1 - count]);
        count += 1;
        lo = lo.min(order[count - 1]);
    }
    let (flat, steep) = if count > 1 {
        (0..count)
            .find_map(|a| {
                (ln - count..ln)
                    .rev()
                    .find(|&b| order[a] < order[b])
                    .map(|b| (order[a], order[b]))
            })?
    } else {
        (order[0], order[ln - 1])
    };
    let (p0, p1, ph) = (points[segs[steep]], points[segs[steep] + 1], points[segs[flat]]);
    let mut x = p1.0 + (ph.1 - p1.1) / (p1.1 - p0.1) * (p1.0 - p0.0);
    if !x.is_finite() {
        x = p0.0;
    }
    let origin = (x, ph.1);
    points
        .iter()
        .map(|q| (origin.0 - q.0).powi(2) + (origin.1 - q.1).powi(2))
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(i, _)| i)
}

/// Corner of a discrete L-curve by adaptive pruning.
///
/// The polyline is pruned to its 5, 10, 20, ... longest segments; each
/// pruned curve contributes the vertex with the sharpest convex turn and the
/// vertex nearest to the meeting point of its flat and steep parts. Among
/// the candidates the last one before the solution norm grows faster than
/// the residual shrinks wins. Trailing points whose residual fell 12 decades
/// below the first one (an exact fit at termination), leading points with a
/// zero norm and repeated points are dropped first. If no pruned curve is convex the
/// maximal-curvature point is returned with `weak` set.
pub fn pruned_lcurve_corner(points: &[(f64, f64)]) -> Result<Corner> {
    let fallback = || lcurve_corner(points).map(|c| Corner { weak: true, ..c });
    if points.len() < 3 {
        return Err(Error::InsufficientHistory(points.len()));
    }
    let tail_floor = points[0].0 - 12.0 * std::f64::consts::LN_10;
    let end = points.iter().rposition(|p| p.0 >= tail_floor).map_or(points.len(), |i| i + 1);
    let zero_norm = LOG_FLOOR.ln() + std::f64::consts::LN_10;
    let start = points[..end].iter().position(|p| p.1 > zero_norm).unwrap_or(0);
    let mut keep: Vec<usize> = Vec::with_capacity(points.len());
    for i in start..end {
        if keep.last().is_none_or(|&j| points[j] != points[i]) {
            keep.push(i);
        }
    }
    if keep.len() < 3 {
        return fallback();
    }
    let pts: Vec<(f64, f64)> = keep.iter().map(|&i| points[i]).collect();
    let lr = pts.len();
    let dirs: Vec<(f64, f64)> = pts.windows(2).map(|w| direction(w[0], w[1])).collect();
    let lengths: Vec<f64> = pts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
        .collect();
    let mut by_length: Vec<usize> = (0..lr - 1).collect();
    by_length.sort_by(|&a, &b| lengths[b].total_cmp(&lengths[a]));

    let mut candidates: Vec<usize> = Vec::new();
    let mut convex = false;
    let mut keep_segs = 5.min(lr - 1);
    while keep_segs < 2 * (lr - 1) {
        let mut segs = by_length[..keep_segs.min(lr - 1)].to_vec();
        segs.sort_unstable();
        let sub: Vec<(f64, f64)> = segs.iter().map(|&e| dirs[e]).collect();
        if let Some(c) = turning_candidate(&sub, &segs) {
            convex = true;
            if !candidates.contains(&c) {
                candidates.push(c);
            }
        }
        if let Some(c) = global_candidate(&pts, &sub, &segs) {
            if !candidates.contains(&c) {
                candidates.push(c);
            }
        }
        keep_segs *= 2;
    }
    if !convex {
        return fallback();
    }
    if !candidates.contains(&0) {
        candidates.push(0);
    }
    candidates.sort_unstable();

    let rising: Vec<usize> = (1..candidates.len() - 1)
        .filter(|&j| {
            let (a, b) = (pts[candidates[j]], pts[candidates[j + 1]]);
            b.1 - a.1 >= (b.0 - a.0).abs()
        })
        .collect();
    let chosen = match rising.last() {
        None => *candidates.last().expect("nonempty"),
        Some(&last) => {
            let turn = |j: usize| {
                cross(
                    direction(pts[candidates[j - 1]], pts[candidates[j]]),
                    direction(pts[candidates[j]], pts[candidates[j + 1]]),
                )
            };
            let j = rising.iter().copied().find(|&j| turn(j) <= 0.0).unwrap_or(last);
            candidates[j]
        }
    };
    let index = keep[chosen];
    let curvature = if index > 0 && index + 1 < points.len() {
        three_point_curvature(points[index - 1], points[index], points[index + 1])
    } else {
        0.0
    };
    Ok(Corner {
        index,
        curvature,
        weak: false,
    })
}

fn leading_cutoff(points: &[(f64, f64)]) -> usize {
    let top = points
        .iter()
        .map(|p| p.1)
        .fold(f64::NEG_INFINITY, f64::max);
    let cutoff = top - 12.0 * std::f64::consts::LN_10;
    points.iter().position(|p| p.1 >= cutoff).unwrap_or(0)
}

/// Smallest `k` (1-based) with `residual_k <= tau * noise_norm`.
pub fn dp_stop(residuals: &[f64], noise_norm: f64, tau: f64) -> Option<usize> {
    residuals
        .iter()
        .position(|&r| r <= tau * noise_norm)
        .map(|i| i + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{DenseMap, DiagonalMap};

    fn geom<M: LinearMap + 'static>(m: M) -> RkhsGeometry {
        RkhsGeometry::identity(Arc::new(m))
    }

    #[test]
    fn one_step_exact_solve() {
        let g = geom(DiagonalMap::new(vec![2.0, 1.0]).unwrap());
        for stop in [StopRule::FixedIters(1), StopRule::lcurve(), StopRule::discrepancy(0.1, 1.01)] {
            let out = idarr_solve(&g, &[1.0, 0.0], stop).unwrap();
            assert_eq!(out.k_stop, 1);
            assert!((out.x[0] - 0.5).abs() < 1e-15 && out.x[1].abs() < 1e-15);
            assert!(out.residual_norm() < 1e-15);
        }
    }

    #[test]
    fn identity_operator_fixed_one() {
        let g = geom(DenseMap::identity(3).unwrap());
        let out = idarr_solve(&g, &[1.0, 2.0, 3.0], StopRule::FixedIters(1)).unwrap();
        for (a, b) in out.x.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(out.residual_norm() < 1e-14);
    }

    #[test]
    fn lsqr_identity() {
        let out = irl2_solve(
            Arc::new(DenseMap::identity(4).unwrap()),
            &[1.0, 0.0, 0.0, 0.0],
            StopRule::lcurve(),
        )
        .unwrap();
        assert_eq!(out.k_stop, 1);
        assert_eq!(out.x, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn stop_rule_validation() {
        assert!(StopRule::FixedIters(0).validate().is_err());
        assert!(StopRule::discrepancy(1.0, 1.0).validate().is_err());
        assert!(StopRule::LCurve {
            min_iters: 5,
            max_iters: 30,
            corner: CornerRule::MaxCurvature,
        }
        .validate()
        .is_err());
        assert!(StopRule::lcurve().validate().is_ok());
    }

    #[test]
    fn right_angle_corner() {
        let mut pts: Vec<(f64, f64)> = (0..=4).map(|i| (-(i as f64), 0.0)).collect();
        pts.extend((1..=4).map(|j| (-4.0, j as f64)));
        let c = lcurve_corner(&pts).unwrap();
        assert_eq!(c.index, 4);
        assert!(!c.weak);
    }

    #[test]
    fn collinear_points_give_weak_corner() {
        let pts: Vec<(f64, f64)> = (0..6).map(|i| (-(i as f64), i as f64)).collect();
        let c = lcurve_corner(&pts).unwrap();
        assert!(c.weak);
        assert_eq!(c.index, 1);
    }

    #[test]
    fn corner_needs_three_points() {
        assert!(matches!(
            lcurve_corner(&[(0.0, 0.0), (1.0, 1.0)]),
            Err(Error::InsufficientHistory(2))
        ));
    }

    #[test]
    fn leading_zero_norms_are_pruned() {
        let floor = LOG_FLOOR.ln();
        let mut pts = vec![(1.0, floor), (0.9, floor)];
        pts.extend((0..=3).map(|i| (-(i as f64), 0.0)));
        pts.extend((1..=3).map(|j| (-3.0, j as f64)));
        assert_eq!(lcurve_corner(&pts).unwrap().index, 5);
    }

    #[test]
    fn pruned_right_angle_corner() {
        let mut pts: Vec<(f64, f64)> = (0..=4).map(|i| (-(i as f64), 0.0)).collect();
        pts.extend((1..=4).map(|j| (-4.0, j as f64)));
        let c = pruned_lcurve_corner(&pts).unwrap();
        assert_eq!(c.index, 4);
        assert!(!c.weak);
    }

    #[test]
    fn pruned_collinear_is_weak() {
        let pts: Vec<(f64, f64)> = (0..6).map(|i| (-(i as f64), i as f64)).collect();
        assert!(pruned_lcurve_corner(&pts).unwrap().weak);
    }

    #[test]
    fn pruned_corner_ignores_clustered_wiggles() {
        // long flat arm, corner at index 3, then a tight zigzag climbing slowly
        let mut pts = vec![(3.0, 0.0), (2.0, 0.05), (1.0, 0.1), (0.0, 0.15)];
        for j in 1..12 {
            let wiggle = if j % 2 == 0 { 1e-3 } else { -1e-3 };
            pts.push((-1e-3 * j as f64 + wiggle, 0.15 + 0.02 * j as f64));
        }
        pts.push((-0.02, 3.0));
        assert_eq!(pruned_lcurve_corner(&pts).unwrap().index, 3);
        assert_ne!(lcurve_corner(&pts).unwrap().index, 3);
    }

    #[test]
    fn pruned_corner_skips_repeats() {
        let mut pts: Vec<(f64, f64)> = (0..=4).map(|i| (-(i as f64), 0.0)).collect();
        pts.push((-4.0, 0.0));
        pts.extend((1..=4).map(|j| (-4.0, j as f64)));
        assert_eq!(pruned_lcurve_corner(&pts).unwrap().index, 4);
    }

    #[test]
    fn pruned_corner_drops_exact_fit_tail() {
        let mut pts: Vec<(f64, f64)> = (0..=4).map(|i| (-(i as f64), 0.0)).collect();
        pts.extend((1..=4).map(|j| (-4.0, j as f64)));
        pts.push((LOG_FLOOR.ln(), 5.0));
        assert_eq!(pruned_lcurve_corner(&pts).unwrap().index, 4);
    }

    #[test]
    fn discrepancy_first_crossing() {
        assert_eq!(dp_stop(&[0.5, 0.2, 0.09], 0.1, 1.01), Some(3));
        assert_eq!(dp_stop(&[0.5, 0.2, 0.15], 0.1, 1.01), None);
    }
}
