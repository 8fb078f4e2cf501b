//! Data-adaptive RKHS geometry.
//!
//! The geometry is fixed by the exploration weights `rho` (normalized
//! absolute column sums of `A`) through the diagonal basis matrix
//! `B = diag(rho)`. The iterative solvers only ever need
//! `C_rkhs^+ = B^-1 A^T A B^-1`, which is applied matrix-free. The dense
//! generalized eigenproblem `A^T A V = B V Lambda`, `V^T B V = I` backs the
//! direct methods and the test oracles.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linops::LinearMap;
use crate::solver::lcurve_corner;
use crate::vector::norm2;

/// Normalized absolute column sums `rho_i = sum_j |A(j,i)| / Z`.
pub fn compute_exploration_weights(map: &dyn LinearMap) -> Result<Vec<f64>> {
    let mut sums = map.abs_column_sums();
    if let Some(i) = sums.iter().position(|s| !(*s > 0.0)) {
        return Err(Error::DegenerateColumn(i));
    }
    let total: f64 = sums.iter().sum();
    sums.iter_mut().for_each(|s| *s /= total);
    Ok(sums)
}

/// Operator plus diagonal basis matrix `B`.
#[derive(Debug, Clone)]
pub struct RkhsGeometry {
    map: Arc<dyn LinearMap>,
    basis: Vec<f64>,
}

impl RkhsGeometry {
    /// Geometry with `B = diag(rho)` from the exploration measure of `map`.
    pub fn exploration(map: Arc<dyn LinearMap>) -> Result<Self> {
        let rho = compute_exploration_weights(map.as_ref())?;
        Ok(RkhsGeometry { map, basis: rho })
    }

    /// Geometry with an arbitrary positive diagonal basis matrix.
    pub fn with_basis(map: Arc<dyn LinearMap>, basis: Vec<f64>) -> Result<Self> {
        if basis.len() != map.cols() {
            return Err(Error::dim("basis matrix diagonal", map.cols(), basis.len()));
        }
        if let Some(i) = basis.iter().position(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(Error::Geometry(format!(
                "basis entry {i} is {}, must be positive",
                basis[i]
            )));
        }
        Ok(RkhsGeometry { map, basis })
    }

    /// `B = I`.
    pub fn identity(map: Arc<dyn LinearMap>) -> Self {
        let n = map.cols();
        RkhsGeometry {
            map,
            basis: vec![1.0; n],
        }
    }

    pub fn map(&self) -> &dyn LinearMap {
        self.map.as_ref()
    }

    pub fn map_arc(&self) -> Arc<dyn LinearMap> {
        Arc::clone(&self.map)
    }

    /// Diagonal of `B`. For exploration geometries these are the weights
    /// `rho`.
    pub fn basis(&self) -> &[f64] {
        &self.basis
    }

    pub fn rows(&self) -> usize {
        self.map.rows()
    }

    pub fn cols(&self) -> usize {
        self.map.cols()
    }

    /// `s = B^-1 A^T A B^-1 p` using two operator applications.
    pub fn apply_crkhs_pinv(&self, p: &[f64]) -> Result<Vec<f64>> {
        if p.len() != self.cols() {
            return Err(Error::dim("apply_crkhs_pinv", self.cols(), p.len()));
        }
        let mut work = CrkhsWorkspace::new(self.rows(), self.cols());
        let mut out = vec![0.0; self.cols()];
        self.crkhs_pinv_into(p, &mut work, &mut out);
        Ok(out)
    }

    pub(crate) fn crkhs_pinv_into(&self, p: &[f64], work: &mut CrkhsWorkspace, out: &mut [f64]) {
        for ((t, pi), bi) in work.col.iter_mut().zip(p).zip(&self.basis) {
            *t = pi / bi;
        }
        self.map.apply_into(&work.col, &mut work.row);
        self.map.apply_adjoint_into(&work.row, out);
        for (o, bi) in out.iter_mut().zip(&self.basis) {
            *o /= bi;
        }
    }

    /// `s = B^-1 p`.
    pub(crate) fn basis_solve_into(&self, p: &[f64], out: &mut [f64]) {
        for ((o, pi), bi) in out.iter_mut().zip(p).zip(&self.basis) {
            *o = pi / bi;
        }
    }

    /// `(x^T B x)^{1/2}`, the discrete `L^2_rho` norm for exploration
    /// geometries.
    pub fn basis_norm(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.cols() {
            return Err(Error::dim("basis_norm", self.cols(), x.len()));
        }
        Ok(x.iter()
            .zip(&self.basis)
            .map(|(xi, bi)| bi * xi * xi)
            .sum::<f64>()
            .sqrt())
    }
}

#[derive(Debug, Clone)]
pub(crate) struct CrkhsWorkspace {
    row: Vec<f64>,
    col: Vec<f64>,
}

impl CrkhsWorkspace {
    pub(crate) fn new(rows: usize, cols: usize) -> Self {
        CrkhsWorkspace {
            row: vec![0.0; rows],
            col: vec![0.0; cols],
        }
    }
}

/// Solution of `A^T A V = B V Lambda` with `V^T B V = I`, eigenvalues sorted
/// in descending order.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    vectors: DMatrix<f64>,
    values: DVector<f64>,
    rank: usize,
    basis: Vec<f64>,
}

impl SpectralDecomposition {
    /// Generalized eigenvectors as columns.
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    /// Number of eigenvalues above `max(lambda) * n * eps`.
    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn basis(&self) -> &[f64] {
        &self.basis
    }

    /// `V^-1 x = V^T B x`.
    pub fn coordinates(&self, x: &[f64]) -> DVector<f64> {
        let bx = DVector::from_iterator(x.len(), x.iter().zip(&self.basis).map(|(a, b)| a * b));
        self.vectors.tr_mul(&bx)
    }

    /// Squared RKHS norm `sum_{i<=r} lambda_i^-1 (V^-1 x)_i^2`.
    pub fn rkhs_norm_sq(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.vectors.nrows() {
            return Err(Error::dim("rkhs_norm", self.vectors.nrows(), x.len()));
        }
        let c = self.coordinates(x);
        Ok((0..self.rank).map(|i| c[i] * c[i] / self.values[i]).sum())
    }

    pub fn rkhs_norm(&self, x: &[f64]) -> Result<f64> {
        self.rkhs_norm_sq(x).map(f64::sqrt)
    }

    /// Dense `C_rkhs^+ = V Lambda V^T`.
    pub fn crkhs_pinv_dense(&self) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.vectors.nrows(), self.vectors.ncols(), |i, j| {
            self.vectors[(i, j)] * self.values[j]
        });
        &scaled * self.vectors.transpose()
    }

    /// Columns `V_r` spanning the range of `C_rkhs`.
    pub fn range_basis(&self) -> DMatrix<f64> {
        self.vectors.columns(0, self.rank).into_owned()
    }

    /// `argmin_{x in range(C_rkhs)} ||A x - b||_2`. With the columns of
    /// `A V_r` mutually orthogonal this is `V_r Lambda_r^-1 V_r^T A^T b`.
    pub fn restricted_least_squares(&self, map: &dyn LinearMap, b: &[f64]) -> Result<Vec<f64>> {
        let atb = DVector::from_vec(map.apply_adjoint(b)?);
        let vr = self.range_basis();
        let mut c = vr.tr_mul(&atb);
        for i in 0..self.rank {
            c[i] /= self.values[i];
        }
        Ok((vr * c).as_slice().to_vec())
    }
}

/// Dense generalized eigendecomposition of `(A^T A, B)` for diagonal `B`.
///
/// Solves the symmetric problem `B^-1/2 A^T A B^-1/2 Q = Q Lambda` and maps
/// back with `V = B^-1/2 Q`.
pub fn generalized_eig(map: &dyn LinearMap, basis: &[f64]) -> Result<SpectralDecomposition> {
    let n = map.cols();
    if basis.len() != n {
        return Err(Error::dim("generalized_eig basis", n, basis.len()));
    }
    if let Some(i) = basis.iter().position(|b| !(*b > 0.0 && b.is_finite())) {
        return Err(Error::Geometry(format!(
            "basis entry {i} is {}, must be positive",
            basis[i]
        )));
    }
    let a = map.to_dense();
    let inv_sqrt: Vec<f64> = basis.iter().map(|b| 1.0 / b.sqrt()).collect();
    let mut scaled = a;
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= inv_sqrt[j];
    }
    let mut gram = scaled.tr_mul(&scaled);
    // Symmetrize against roundoff before the eigensolver.
    gram = (&gram + gram.transpose()) * 0.5;
    let eig = SymmetricEigen::new(gram);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i].max(0.0)));
    let vectors = DMatrix::from_fn(n, n, |row, k| inv_sqrt[row] * eig.eigenvectors[(row, order[k])]);

    let top = values.get(0).copied().unwrap_or(0.0);
    let threshold = top * n as f64 * f64::EPSILON;
    let rank = values.iter().filter(|&&l| l > threshold).count();
    Ok(SpectralDecomposition {
        vectors,
        values,
        rank,
        basis: basis.to_vec(),
    })
}

/// Squared RKHS norm of `x` under `decomp`.
pub fn rkhs_norm_direct(decomp: &SpectralDecomposition, x: &[f64]) -> Result<f64> {
    decomp.rkhs_norm_sq(x)
}

/// Output of a dense regularization-path solve.
#[derive(Debug, Clone)]
pub struct DirectSolution {
    pub x: Vec<f64>,
    pub lambda_star: f64,
    /// Regularization grid in the order it was traversed (descending).
    pub lambdas: Vec<f64>,
    /// `(||A x_lambda - b||_2^2, ||x_lambda||_*^2)` along the grid.
    pub path: Vec<(f64, f64)>,
    /// False when the L-curve corner was weak or the grid degenerate.
    pub sharp_corner: bool,
}

/// Number of grid points in the dense regularization paths.
pub const LAMBDA_GRID_POINTS: usize = 64;

fn log_grid_descending(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (lhi + (llo - lhi) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Picks the L-curve corner of a dense regularization path.
///
/// `filter(lambda)` returns spectral coefficients `y` (solution `V y`) and
/// the squared regularization norm. Returns the selected solution.
fn select_on_path<F>(
    map: &dyn LinearMap,
    decomp: &SpectralDecomposition,
    b: &[f64],
    lambdas: Vec<f64>,
    filter: F,
) -> Result<DirectSolution>
where
    F: Fn(f64) -> (DVector<f64>, f64),
{
    let v = decomp.vectors();
    let solution_at = |lambda: f64| -> (Vec<f64>, f64) {
        let (y, norm_sq) = filter(lambda);
        ((v * y).as_slice().to_vec(), norm_sq)
    };
    let mut path = Vec::with_capacity(lambdas.len());
    for &lambda in &lambdas {
        let (x, norm_sq) = solution_at(lambda);
        let ax = map.apply(&x)?;
        let res: f64 = ax.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
        path.push((res, norm_sq));
    }
    let (index, sharp) = if lambdas.len() >= 3 {
        let points: Vec<(f64, f64)> = path
            .iter()
            .map(|&(r, s)| (r.max(1e-300).ln(), s.max(1e-300).ln()))
            .collect();
        let corner = lcurve_corner(&points)?;
        (corner.index, !corner.weak)
    } else {
        (lambdas.len() - 1, false)
    };
    let lambda_star = lambdas[index];
    Ok(DirectSolution {
        x: solution_at(lambda_star).0,
        lambda_star,
        lambdas,
        path,
        sharp_corner: sharp,
    })
}

fn check_data(map: &dyn LinearMap, b: &[f64]) -> Result<()> {
    if b.len() != map.rows() {
        return Err(Error::dim("observation", map.rows(), b.len()));
    }
    if norm2(b) == 0.0 {
        return Err(Error::TrivialData);
    }
    Ok(())
}

/// Grid bounds `[max(lambda_r, 1e-14 lambda_1), lambda_1]`.
fn eigen_range(decomp: &SpectralDecomposition) -> Result<(f64, f64)> {
    if decomp.rank() == 0 {
        return Err(Error::NumericalBreakdown("operator has numerical rank 0".into()));
    }
    let top = decomp.values()[0];
    let floor = 1e-14 * top;
    Ok((decomp.values()[decomp.rank() - 1].max(floor), top))
}

/// DARTR: Tikhonov regularization in the data-adaptive RKHS norm with the
/// regularization strength picked by the L-curve.
///
/// With `C_* = V Lambda^{1/2}` the normal equations
/// `(C_*^T A^T A C_* + lambda I_r) x~ = C_*^T A^T b` are diagonal in the
/// eigenbasis (`C_*^T A^T A C_* = Lambda^2`), so every grid point costs
/// `O(n)` after the decomposition. Components beyond the numerical rank are
/// set to zero, which is the minimal-norm least-squares choice.
///
/// If the positive spectrum is flat the grid collapses to one point and no
/// L-curve exists; the solve then uses the grid floor `1e-14 lambda_1`.
pub fn dartr_solve(map: &dyn LinearMap, b: &[f64], basis: &[f64]) -> Result<DirectSolution> {
    check_data(map, b)?;
    let decomp = generalized_eig(map, basis)?;
    dartr_with(map, b, &decomp)
}

/// DARTR reusing a precomputed decomposition.
pub fn dartr_with(
    map: &dyn LinearMap,
    b: &[f64],
    decomp: &SpectralDecomposition,
) -> Result<DirectSolution> {
    check_data(map, b)?;
    let (lo, hi) = eigen_range(decomp)?;
    let c = decomp.vectors().tr_mul(&DVector::from_vec(map.apply_adjoint(b)?));
    let rank = decomp.rank();
    let values = decomp.values().clone();
    let filter = |lambda: f64| {
        let mut y = DVector::zeros(values.len());
        let mut norm_sq = 0.0;
        for i in 0..rank {
            let l = values[i];
            let xt = l.sqrt() * c[i] / (l * l + lambda);
            y[i] = l.sqrt() * xt;
            norm_sq += xt * xt;
        }
        (y, norm_sq)
    };
    let lambdas = if hi / lo <= 1.0 + 1e-8 {
        vec![1e-14 * hi]
    } else {
        log_grid_descending(lo, hi, LAMBDA_GRID_POINTS)
    };
    select_on_path(map, decomp, b, lambdas, filter)
}

/// Direct Tikhonov `(A^T A + lambda M) x = A^T b` for a diagonal metric `M`
/// (`M = I` gives the l2 method, `M = B` the L2 method), L-curve on
/// `(||A x - b||^2, x^T M x)`.
pub fn tikhonov_solve(map: &dyn LinearMap, b: &[f64], metric: &[f64]) -> Result<DirectSolution> {
    check_data(map, b)?;
    let decomp = generalized_eig(map, metric)?;
    tikhonov_with(map, b, &decomp)
}

/// Direct Tikhonov reusing a decomposition of `(A^T A, M)`.
pub fn tikhonov_with(
    map: &dyn LinearMap,
    b: &[f64],
    decomp: &SpectralDecomposition,
) -> Result<DirectSolution> {
    check_data(map, b)?;
    let (lo, hi) = eigen_range(decomp)?;
    let c = decomp.vectors().tr_mul(&DVector::from_vec(map.apply_adjoint(b)?));
    let values = decomp.values().clone();
    let filter = |lambda: f64| {
        let mut y = DVector::zeros(values.len());
        let mut norm_sq = 0.0;
        for i in 0..values.len() {
            y[i] = c[i] / (values[i] + lambda);
            norm_sq += y[i] * y[i];
        }
        (y, norm_sq)
    };
    let lambdas = if hi / lo <= 1.0 + 1e-8 {
        vec![1e-14 * hi]
    } else {
        log_grid_descending(lo, hi, LAMBDA_GRID_POINTS)
    };
    select_on_path(map, decomp, b, lambdas, filter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{DenseMap, DiagonalMap};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn arc<M: LinearMap + 'static>(m: M) -> Arc<dyn LinearMap> {
        Arc::new(m)
    }

    #[test]
    fn exploration_weights_small_cases() {
        let a = DenseMap::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let rho = compute_exploration_weights(&a).unwrap();
        assert!((rho[0] - 0.4).abs() < 1e-15 && (rho[1] - 0.6).abs() < 1e-15);
        let rho = compute_exploration_weights(&DenseMap::identity(4).unwrap()).unwrap();
        assert_eq!(rho, vec![0.25; 4]);
    }

    #[test]
    fn zero_column_is_degenerate() {
        let a = DenseMap::from_rows(&[vec![1.0, 0.0], vec![3.0, 0.0]]).unwrap();
        assert!(matches!(compute_exploration_weights(&a), Err(Error::DegenerateColumn(1))));
    }

    #[test]
    fn crkhs_pinv_small_cases() {
        let g = RkhsGeometry::identity(arc(DiagonalMap::new(vec![2.0, 0.0]).unwrap()));
        assert_eq!(g.apply_crkhs_pinv(&[1.0, 1.0]).unwrap(), vec![4.0, 0.0]);
        let g = RkhsGeometry::with_basis(arc(DenseMap::identity(2).unwrap()), vec![0.5, 0.5]).unwrap();
        assert_eq!(g.apply_crkhs_pinv(&[1.0, 0.0]).unwrap(), vec![4.0, 0.0]);
    }

    #[test]
    fn crkhs_pinv_matches_dense_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = DMatrix::from_fn(10, 6, |_, _| rng.random_range(-1.0..1.0));
        let basis: Vec<f64> = (0..6).map(|_| rng.random_range(0.1..2.0)).collect();
        let p: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let binv = DMatrix::from_diagonal(&DVector::from_iterator(6, basis.iter().map(|b| 1.0 / b)));
        let expected = &binv * a.transpose() * &a * &binv * DVector::from_vec(p.clone());
        let g = RkhsGeometry::with_basis(arc(DenseMap::from_matrix(&a).unwrap()), basis).unwrap();
        let got = g.apply_crkhs_pinv(&p).unwrap();
        for (x, y) in got.iter().zip(expected.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn generalized_eig_diagonal_cases() {
        let d = generalized_eig(&DenseMap::identity(2).unwrap(), &[1.0, 1.0]).unwrap();
        assert!((d.values()[0] - 1.0).abs() < 1e-14 && (d.values()[1] - 1.0).abs() < 1e-14);

        let a = DiagonalMap::new(vec![2.0, 1.0]).unwrap();
        let d = generalized_eig(&a, &[1.0, 1.0]).unwrap();
        assert!((d.values()[0] - 4.0).abs() < 1e-14 && (d.values()[1] - 1.0).abs() < 1e-14);
        assert!((d.vectors()[(0, 0)].abs() - 1.0).abs() < 1e-14);

        let d = generalized_eig(&a, &[4.0, 1.0]).unwrap();
        assert!((d.values()[0] - 1.0).abs() < 1e-14 && (d.values()[1] - 1.0).abs() < 1e-14);
        // V = diag(1/2, 1) up to sign and ordering of the repeated eigenvalue.
        let v = d.vectors();
        let mut cols: Vec<(f64, f64)> = (0..2).map(|k| (v[(0, k)].abs(), v[(1, k)].abs())).collect();
        cols.sort_by(|a, b| b.0.total_cmp(&a.0));
        assert!((cols[0].0 - 0.5).abs() < 1e-14 && cols[0].1 < 1e-14);
        assert!((cols[1].1 - 1.0).abs() < 1e-14 && cols[1].0 < 1e-14);
    }

    #[test]
    fn non_positive_basis_is_rejected() {
        let a = DenseMap::identity(2).unwrap();
        assert!(matches!(generalized_eig(&a, &[1.0, 0.0]), Err(Error::Geometry(_))));
        assert!(RkhsGeometry::with_basis(arc(a), vec![1.0, -1.0]).is_err());
    }

    #[test]
    fn rkhs_norm_small_cases() {
        let d = generalized_eig(&DiagonalMap::new(vec![2.0, 1.0]).unwrap(), &[1.0, 1.0]).unwrap();
        assert!((rkhs_norm_direct(&d, &[1.0, 0.0]).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(rkhs_norm_direct(&d, &[0.0, 0.0]).unwrap(), 0.0);
    }

    #[test]
    fn dartr_identity_recovers_data() {
        let a = DenseMap::identity(2).unwrap();
        let sol = dartr_solve(&a, &[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-3 && (sol.x[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn dartr_path_is_scalar_tikhonov() {
        // (A^T A + lambda C_rkhs) x = A^T b with C_rkhs = diag(1/4, 1):
        // x_lambda = (8 / (16 + lambda), 0), the l2 path (2 / (4 + mu), 0) at mu = lambda / 4.
        let a = DiagonalMap::new(vec![2.0, 1.0]).unwrap();
        let b = [1.0, 0.0];
        let sol = dartr_solve(&a, &b, &[1.0, 1.0]).unwrap();
        assert!(sol.lambda_star > 0.0);
        assert!((sol.x[0] - 8.0 / (16.0 + sol.lambda_star)).abs() < 1e-14);
        assert!(sol.x[1].abs() < 1e-15);
        for (&lambda, &(res, _)) in sol.lambdas.iter().zip(&sol.path) {
            let x0 = 2.0 / (4.0 + lambda / 4.0);
            assert!((res - (2.0 * x0 - 1.0).powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn dartr_rejects_zero_data() {
        let a = DenseMap::identity(2).unwrap();
        assert!(matches!(dartr_solve(&a, &[0.0, 0.0], &[1.0, 1.0]), Err(Error::TrivialData)));
    }

    #[test]
    fn tikhonov_path_matches_closed_form() {
        let a = DiagonalMap::new(vec![2.0, 1.0]).unwrap();
        let sol = tikhonov_solve(&a, &[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((sol.x[0] - 2.0 / (4.0 + sol.lambda_star)).abs() < 1e-14);
    }
}
