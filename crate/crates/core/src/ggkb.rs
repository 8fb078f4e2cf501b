//! Generalized Golub-Kahan bidiagonalization.
//!
//! Starting from `beta_1 u_1 = b`, the recursion
//!
//! ```text
//! beta_{i+1} u_{i+1}    = A z_i - alpha_i u_i
//! alpha_{i+1} zbar_{i+1} = A^T u_{i+1} - beta_{i+1} zbar_i
//! alpha_{i+1} z_{i+1}    = M^+ (alpha_{i+1} zbar_{i+1})
//! ```
//!
//! builds Euclidean-orthonormal `u_i` and `M`-orthonormal `z_i` together with
//! shadow vectors `zbar_i` standing in for `M z_i`. `M` is never formed: the
//! RKHS metric only needs `M^+ = C_rkhs^+ = B^-1 A^T A B^-1`, the L2 metric
//! `B^-1`, and the Euclidean metric nothing at all.

use crate::error::{Error, Result};
use crate::rkhs::{CrkhsWorkspace, RkhsGeometry};
use crate::vector::{axpy, dot, norm2, scale};

/// Which norm the solution subspace is orthonormalized in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    /// Data-adaptive RKHS norm `x^T C_rkhs x` (iDARR).
    #[default]
    Rkhs,
    /// Weighted norm `x^T B x` (IR-L2).
    Basis,
    /// Plain `x^T x` (IR-l2, i.e. LSQR).
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GgkbOptions {
    pub metric: Metric,
    /// Re-project every new `u` and `(z, zbar)` against all previous ones
    /// (two passes of modified Gram-Schmidt). Implies `retain_vectors`.
    pub reorthogonalize: bool,
    /// Keep every basis vector instead of only the latest.
    pub retain_vectors: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Extended,
    /// The process stopped; carries `k_t = max{k : alpha_k beta_k > 0}`.
    Terminated(usize),
}

/// State and output of the bidiagonalization.
///
/// `alphas[i-1]` and `betas[i-1]` hold `alpha_i`, `beta_i`. Once terminated,
/// the last entries hold the (zeroed) values that stopped the process, so
/// both vectors always have length `k + 1` where `k` is the number of
/// completed steps.
#[derive(Debug, Clone)]
pub struct BidiagFactors {
    alphas: Vec<f64>,
    betas: Vec<f64>,
    u: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    zbar: Vec<Vec<f64>>,
    options: GgkbOptions,
    terminated: Option<usize>,
    scale: f64,
    tol_factor: f64,
    work: Workspace,
}

#[derive(Debug, Clone)]
struct Workspace {
    r: Vec<f64>,
    p: Vec<f64>,
    s: Vec<f64>,
    crkhs: CrkhsWorkspace,
}

impl BidiagFactors {
    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// `alpha_i`, 1-based.
    pub fn alpha(&self, i: usize) -> f64 {
        self.alphas[i - 1]
    }

    /// `beta_i`, 1-based.
    pub fn beta(&self, i: usize) -> f64 {
        self.betas[i - 1]
    }

    pub fn options(&self) -> GgkbOptions {
        self.options
    }

    pub fn is_terminated(&self) -> bool {
        self.terminated.is_some()
    }

    pub fn k_t(&self) -> Option<usize> {
        self.terminated
    }

    /// Index of the most recent `z` vector.
    pub fn len(&self) -> usize {
        match self.terminated {
            Some(k) => k,
            None => self.alphas.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stored `u` vectors: all of them when retained, else the latest.
    pub fn u_vectors(&self) -> &[Vec<f64>] {
        &self.u
    }

    pub fn z_vectors(&self) -> &[Vec<f64>] {
        &self.z
    }

    pub fn zbar_vectors(&self) -> &[Vec<f64>] {
        &self.zbar
    }

    pub fn latest_u(&self) -> &[f64] {
        self.u.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn latest_z(&self) -> &[f64] {
        self.z.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn latest_zbar(&self) -> &[f64] {
        self.zbar.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Lower-bidiagonal `(k+1) x k` matrix `B_k` as row-major rows.
    pub fn bidiagonal(&self, k: usize) -> Vec<Vec<f64>> {
        let mut rows = vec![vec![0.0; k]; k + 1];
        for i in 0..k {
            rows[i][i] = self.alphas[i];
            rows[i + 1][i] = self.betas[i + 1];
        }
        rows
    }

    fn retains(&self) -> bool {
        self.options.retain_vectors || self.options.reorthogonalize
    }

    fn tolerance(&self) -> f64 {
        self.tol_factor * self.scale
    }

    fn push_vectors(&mut self, u: Vec<f64>, z: Vec<f64>, zbar: Vec<f64>) {
        if !self.retains() {
            self.u.clear();
            self.z.clear();
            self.zbar.clear();
        }
        self.u.push(u);
        self.z.push(z);
        self.zbar.push(zbar);
    }

    fn terminate(&mut self, k_t: usize, beta: f64) -> StepOutcome {
        self.betas.push(beta);
        self.alphas.push(0.0);
        self.terminated = Some(k_t);
        StepOutcome::Terminated(k_t)
    }

    fn apply_metric_pinv(&mut self, geom: &RkhsGeometry) {
        let w = &mut self.work;
        match self.options.metric {
            Metric::Rkhs => geom.crkhs_pinv_into(&w.p, &mut w.crkhs, &mut w.s),
            Metric::Basis => geom.basis_solve_into(&w.p, &mut w.s),
            Metric::Euclidean => w.s.copy_from_slice(&w.p),
        }
    }

    /// `alpha = (s^T p)^{1/2}`, or `None` if the quadratic form is at the
    /// roundoff level (including small negative values).
    fn quadratic_norm(&self) -> Result<Option<f64>> {
        let (s, p) = (&self.work.s, &self.work.p);
        let sp = dot(s, p);
        let floor = self.tolerance();
        let noise = (s.len() as f64 * f64::EPSILON * norm2(s) * norm2(p)).max(floor * floor);
        if sp < -noise {
            return Err(Error::NumericalBreakdown(format!(
                "metric quadratic form s^T p = {sp:e} is negative"
            )));
        }
        if sp <= noise {
            return Ok(None);
        }
        Ok(Some(sp.sqrt()))
    }
}

/// Starts the bidiagonalization from `b`.
pub fn ggkb_init(geom: &RkhsGeometry, b: &[f64], options: GgkbOptions) -> Result<BidiagFactors> {
    let (m, n) = (geom.rows(), geom.cols());
    if b.len() != m {
        return Err(Error::dim("ggkb observation", m, b.len()));
    }
    let beta1 = norm2(b);
    if !beta1.is_finite() {
        return Err(Error::NumericalBreakdown("observation is not finite".into()));
    }
    if beta1 == 0.0 {
        return Err(Error::TrivialData);
    }
    let mut f = BidiagFactors {
        alphas: Vec::new(),
        betas: vec![beta1],
        u: Vec::new(),
        z: Vec::new(),
        zbar: Vec::new(),
        options,
        terminated: None,
        scale: 0.0,
        tol_factor: m.max(n) as f64 * f64::EPSILON,
        work: Workspace {
            r: vec![0.0; m],
            p: vec![0.0; n],
            s: vec![0.0; n],
            crkhs: CrkhsWorkspace::new(m, n),
        },
    };
    let u1: Vec<f64> = b.iter().map(|x| x / beta1).collect();
    geom.map().apply_adjoint_into(&u1, &mut f.work.p);
    f.apply_metric_pinv(geom);
    match f.quadratic_norm()? {
        None => {
            f.alphas.push(0.0);
            f.u.push(u1);
            f.terminated = Some(0);
        }
        Some(alpha1) => {
            f.alphas.push(alpha1);
            f.scale = alpha1.max(beta1);
            let z1: Vec<f64> = f.work.s.iter().map(|x| x / alpha1).collect();
            let zbar1: Vec<f64> = f.work.p.iter().map(|x| x / alpha1).collect();
            f.push_vectors(u1, z1, zbar1);
        }
    }
    Ok(f)
}

/// Extends the factors by one step.
///
/// The process terminates once `alpha_i beta_{i+1}` or
/// `alpha_{i+1} beta_{i+1}` drops to `max(m, n) eps scale^2`, with `scale`
/// the largest of `||b||` and all `alpha`, `beta` seen so far. Both cases
/// record the computed `beta_{i+1}` together with `alpha_{i+1} = 0`.
pub fn ggkb_step(f: &mut BidiagFactors, geom: &RkhsGeometry) -> Result<StepOutcome> {
    if let Some(k) = f.terminated {
        return Err(Error::State(format!("bidiagonalization already terminated at k_t={k}")));
    }
    let i = f.alphas.len();
    let alpha_i = f.alphas[i - 1];

    // r = A z_i - alpha_i u_i
    geom.map().apply_into(f.z.last().expect("z"), &mut f.work.r);
    axpy(-alpha_i, f.u.last().expect("u"), &mut f.work.r);
    if f.options.reorthogonalize {
        for _ in 0..2 {
            for u in &f.u {
                let c = dot(u, &f.work.r);
                axpy(-c, u, &mut f.work.r);
            }
        }
    }
    let beta = norm2(&f.work.r);
    if !beta.is_finite() {
        return Err(Error::NumericalBreakdown(format!("beta_{} is not finite", i + 1)));
    }
    if beta * alpha_i <= f.tolerance() * f.scale.max(beta) {
        return Ok(f.terminate(i, beta));
    }
    let u_next: Vec<f64> = f.work.r.iter().map(|x| x / beta).collect();

    // p = A^T u_{i+1} - beta_{i+1} zbar_i, s = M^+ p
    geom.map().apply_adjoint_into(&u_next, &mut f.work.p);
    axpy(-beta, f.zbar.last().expect("zbar"), &mut f.work.p);
    f.apply_metric_pinv(geom);
    if f.options.reorthogonalize {
        for _ in 0..2 {
            for (z, zbar) in f.z.iter().zip(&f.zbar) {
                let c = dot(z, &f.work.p);
                axpy(-c, zbar, &mut f.work.p);
                axpy(-c, z, &mut f.work.s);
            }
        }
    }
    let alpha = match f.quadratic_norm()? {
        Some(a) if a * beta > f.tolerance() * f.scale.max(a).max(beta) => a,
        _ => return Ok(f.terminate(i, beta)),
    };
    f.scale = f.scale.max(alpha).max(beta);

    let mut z = f.work.s.clone();
    scale(1.0 / alpha, &mut z);
    let mut zbar = f.work.p.clone();
    scale(1.0 / alpha, &mut zbar);
    f.betas.push(beta);
    f.alphas.push(alpha);
    f.push_vectors(u_next, z, zbar);
    Ok(StepOutcome::Extended)
}

/// Runs up to `max_steps` steps or until termination.
pub fn run_ggkb(
    geom: &RkhsGeometry,
    b: &[f64],
    max_steps: usize,
    options: GgkbOptions,
) -> Result<BidiagFactors> {
    if max_steps == 0 {
        return Err(Error::Usage("max_steps must be at least 1".into()));
    }
    let mut f = ggkb_init(geom, b, options)?;
    for _ in 0..max_steps {
        if f.is_terminated() || ggkb_step(&mut f, geom)? != StepOutcome::Extended {
            break;
        }
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::linops::{DenseMap, DiagonalMap, LinearMap};

    fn geometry<M: LinearMap + 'static>(map: M) -> RkhsGeometry {
        RkhsGeometry::identity(Arc::new(map))
    }

    #[test]
    fn init_on_diagonal_example() {
        let g = geometry(DiagonalMap::new(vec![2.0, 1.0]).unwrap());
        let f = ggkb_init(&g, &[1.0, 0.0], GgkbOptions::default()).unwrap();
        assert_eq!(f.beta(1), 1.0);
        assert_eq!(f.latest_u(), &[1.0, 0.0]);
        assert_eq!(f.alpha(1), 4.0);
        assert_eq!(f.latest_z(), &[2.0, 0.0]);
        assert_eq!(f.latest_zbar(), &[0.5, 0.0]);
    }

    #[test]
    fn init_on_identity() {
        let g = geometry(DenseMap::identity(3).unwrap());
        let b = [0.6, 0.0, 0.8];
        let f = ggkb_init(&g, &b, GgkbOptions::default()).unwrap();
        assert!((f.alpha(1) - 1.0).abs() < 1e-15);
        for k in 0..3 {
            assert!((f.latest_z()[k] - b[k]).abs() < 1e-15);
            assert!((f.latest_zbar()[k] - b[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_data_is_rejected() {
        let g = geometry(DenseMap::identity(2).unwrap());
        assert!(matches!(
            ggkb_init(&g, &[0.0, 0.0], GgkbOptions::default()),
            Err(Error::TrivialData)
        ));
    }

    #[test]
    fn data_in_null_space_terminates_at_zero() {
        let g = geometry(DenseMap::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap());
        let f = ggkb_init(&g, &[0.0, 1.0], GgkbOptions::default()).unwrap();
        assert_eq!(f.k_t(), Some(0));
    }

    #[test]
    fn single_eigenspace_terminates_after_one_step() {
        let g = geometry(DiagonalMap::new(vec![2.0, 1.0]).unwrap());
        let mut f = ggkb_init(&g, &[1.0, 0.0], GgkbOptions::default()).unwrap();
        assert_eq!(ggkb_step(&mut f, &g).unwrap(), StepOutcome::Terminated(1));
        assert!(matches!(ggkb_step(&mut f, &g), Err(Error::State(_))));
    }

    #[test]
    fn two_eigenspaces_take_two_steps() {
        let g = geometry(DiagonalMap::new(vec![2.0, 1.0]).unwrap());
        let b = [1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt()];
        let f = run_ggkb(&g, &b, 10, GgkbOptions::default()).unwrap();
        assert_eq!(f.k_t(), Some(2));
    }

    #[test]
    fn identity_run_holds_single_pair() {
        let g = geometry(DenseMap::identity(4).unwrap());
        let f = run_ggkb(&g, &[1.0, 0.0, 0.0, 0.0], 5, GgkbOptions::default()).unwrap();
        assert_eq!(f.k_t(), Some(1));
        assert_eq!((f.alpha(1), f.beta(1)), (1.0, 1.0));
    }

    #[test]
    fn latest_only_storage_keeps_one_vector() {
        let g = geometry(DiagonalMap::new(vec![3.0, 2.0, 1.0]).unwrap());
        let f = run_ggkb(&g, &[1.0, 1.0, 1.0], 2, GgkbOptions::default()).unwrap();
        assert_eq!(f.z_vectors().len(), 1);
        assert_eq!(f.len(), 3);
    }

    #[test]
    fn zero_max_steps_is_rejected() {
        let g = geometry(DenseMap::identity(2).unwrap());
        assert!(run_ggkb(&g, &[1.0, 0.0], 0, GgkbOptions::default()).is_err());
    }
}
