//! Forward/adjoint operator layer.
//!
//! Every solver in the crate touches the forward model only through
//! [`LinearMap::apply_into`] and [`LinearMap::apply_adjoint_into`], so dense
//! matrices, diagonal scalings and image blurs are interchangeable.

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::vector::{dot, norm2};

/// A real linear operator `A: R^cols -> R^rows` with its Euclidean adjoint.
///
/// Implementations are immutable after construction and may be shared across
/// threads.
pub trait LinearMap: Send + Sync + fmt::Debug {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;

    /// `out = A v`. Lengths are the caller's responsibility.
    fn apply_into(&self, v: &[f64], out: &mut [f64]);

    /// `out = A^T w`. Lengths are the caller's responsibility.
    fn apply_adjoint_into(&self, w: &[f64], out: &mut [f64]);

    fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.cols() {
            return Err(Error::dim("apply", self.cols(), v.len()));
        }
        let mut out = vec![0.0; self.rows()];
        self.apply_into(v, &mut out);
        Ok(out)
    }

    fn apply_adjoint(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.rows() {
            return Err(Error::dim("apply_adjoint", self.rows(), w.len()));
        }
        let mut out = vec![0.0; self.cols()];
        self.apply_adjoint_into(w, &mut out);
        Ok(out)
    }

    /// `sum_j |A(j, i)|` for every column `i`.
    ///
    /// The default probes the operator with canonical basis vectors, which
    /// costs `cols` forward applications.
    fn abs_column_sums(&self) -> Vec<f64> {
        let mut e = vec![0.0; self.cols()];
        let mut col = vec![0.0; self.rows()];
        (0..self.cols())
            .map(|i| {
                e[i] = 1.0;
                self.apply_into(&e, &mut col);
                e[i] = 0.0;
                col.iter().map(|c| c.abs()).sum()
            })
            .collect()
    }

    /// Materializes the operator. Only meant for small operators (oracles,
    /// direct methods).
    fn to_dense(&self) -> DMatrix<f64> {
        let (m, n) = (self.rows(), self.cols());
        let mut out = DMatrix::zeros(m, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; m];
        for i in 0..n {
            e[i] = 1.0;
            self.apply_into(&e, &mut col);
            e[i] = 0.0;
            out.column_mut(i).copy_from_slice(&col);
        }
        out
    }
}

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct DenseMap {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl fmt::Debug for DenseMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DenseMap")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish_non_exhaustive()
    }
}

impl DenseMap {
    pub fn from_row_major(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Usage("dense map needs positive dimensions".into()));
        }
        if entries.len() != rows * cols {
            return Err(Error::dim("DenseMap entries", rows * cols, entries.len()));
        }
        Ok(DenseMap {
            rows,
            cols,
            entries,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Usage("ragged rows".into()));
        }
        Self::from_row_major(m, n, rows.concat())
    }

    pub fn from_matrix(a: &DMatrix<f64>) -> Result<Self> {
        let entries = (0..a.nrows())
            .flat_map(|j| (0..a.ncols()).map(move |i| a[(j, i)]))
            .collect();
        Self::from_row_major(a.nrows(), a.ncols(), entries)
    }

    pub fn identity(n: usize) -> Result<Self> {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self::from_row_major(n, n, entries)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.cols + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.entries[row * self.cols..(row + 1) * self.cols]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.entries)
    }
}

impl LinearMap for DenseMap {
    fn rows(&self) -> usize {
        self.rows
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(j), v);
        }
    }

    fn apply_adjoint_into(&self, w: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (j, &wj) in w.iter().enumerate() {
            if wj != 0.0 {
                for (o, a) in out.iter_mut().zip(self.row(j)) {
                    *o += wj * a;
                }
            }
        }
    }

    fn abs_column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.cols];
        for j in 0..self.rows {
            for (s, a) in sums.iter_mut().zip(self.row(j)) {
                *s += a.abs();
            }
        }
        sums
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.to_matrix()
    }
}

/// Square diagonal operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalMap {
    diag: Vec<f64>,
}

impl DiagonalMap {
    pub fn new(diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::Usage("diagonal map needs at least one entry".into()));
        }
        Ok(DiagonalMap { diag })
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }
}

impl LinearMap for DiagonalMap {
    fn rows(&self) -> usize {
        self.diag.len()
    }

    fn cols(&self) -> usize {
        self.diag.len()
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        for ((o, d), x) in out.iter_mut().zip(&self.diag).zip(v) {
            *o = d * x;
        }
    }

    fn apply_adjoint_into(&self, w: &[f64], out: &mut [f64]) {
        self.apply_into(w, out);
    }

    fn abs_column_sums(&self) -> Vec<f64> {
        self.diag.iter().map(|d| d.abs()).collect()
    }
}

/// Spatially invariant blur of an `N x N` image with zero boundary.
///
/// Images are row-major vectors of length `N^2`. The PSF pixel at
/// `(center_row, center_col)` is the one that maps a pixel onto itself:
///
/// `(A x)[i, j] = sum_{k,l} psf[k, l] * x[i - k + cr, j - l + cc]`
///
/// with `x` treated as zero outside the image.
#[derive(Clone, PartialEq)]
pub struct PsfConvolutionMap {
    side: usize,
    psf: Vec<f64>,
    psf_rows: usize,
    psf_cols: usize,
    center: (usize, usize),
}

impl fmt::Debug for PsfConvolutionMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PsfConvolutionMap")
            .field("side", &self.side)
            .field("psf_rows", &self.psf_rows)
            .field("psf_cols", &self.psf_cols)
            .field("center", &self.center)
            .finish_non_exhaustive()
    }
}

impl PsfConvolutionMap {
    /// Builds the blur from a row-major PSF. The PSF must be nonnegative with
    /// a positive sum; it is rescaled to unit sum. The center defaults to
    /// `(psf_rows / 2, psf_cols / 2)`.
    pub fn new(side: usize, psf: Vec<f64>, psf_rows: usize, psf_cols: usize) -> Result<Self> {
        Self::with_center(side, psf, psf_rows, psf_cols, (psf_rows / 2, psf_cols / 2))
    }

    pub fn with_center(
        side: usize,
        mut psf: Vec<f64>,
        psf_rows: usize,
        psf_cols: usize,
        center: (usize, usize),
    ) -> Result<Self> {
        if side == 0 || psf_rows == 0 || psf_cols == 0 {
            return Err(Error::Usage("image side and PSF shape must be positive".into()));
        }
        if psf.len() != psf_rows * psf_cols {
            return Err(Error::dim("PSF entries", psf_rows * psf_cols, psf.len()));
        }
        if center.0 >= psf_rows || center.1 >= psf_cols {
            return Err(Error::Usage("PSF center outside the PSF".into()));
        }
        if psf.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Usage("PSF entries must be finite and nonnegative".into()));
        }
        let total: f64 = psf.iter().sum();
        if total <= 0.0 {
            return Err(Error::Usage("PSF must have a positive sum".into()));
        }
        psf.iter_mut().for_each(|p| *p /= total);
        Ok(PsfConvolutionMap {
            side,
            psf,
            psf_rows,
            psf_cols,
            center,
        })
    }

    /// Isotropic Gaussian PSF with standard deviation `width` pixels,
    /// truncated at radius `ceil(3 width)`.
    pub fn gaussian(side: usize, width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::Usage(format!("Gaussian PSF width must be positive, got {width}")));
        }
        let radius = (3.0 * width).ceil() as usize;
        let size = 2 * radius + 1;
        let mut psf = Vec::with_capacity(size * size);
        for k in 0..size {
            for l in 0..size {
                let dy = k as f64 - radius as f64;
                let dx = l as f64 - radius as f64;
                psf.push((-(dx * dx + dy * dy) / (2.0 * width * width)).exp());
            }
        }
        Self::new(side, psf, size, size)
    }

    /// The 1x1 unit PSF; the resulting operator is the identity.
    pub fn delta(side: usize) -> Result<Self> {
        Self::new(side, vec![1.0], 1, 1)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn psf(&self) -> (&[f64], usize, usize) {
        (&self.psf, self.psf_rows, self.psf_cols)
    }

    pub fn center(&self) -> (usize, usize) {
        self.center
    }
}

impl LinearMap for PsfConvolutionMap {
    fn rows(&self) -> usize {
        self.side * self.side
    }

    fn cols(&self) -> usize {
        self.side * self.side
    }

    fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        let n = self.side as isize;
        let (cr, cc) = (self.center.0 as isize, self.center.1 as isize);
        out.fill(0.0);
        // Scatter each PSF tap as a shifted, clipped image axpy.
        for k in 0..self.psf_rows {
            for l in 0..self.psf_cols {
                let p = self.psf[k * self.psf_cols + l];
                if p == 0.0 {
                    continue;
                }
                let dy = k as isize - cr;
                let dx = l as isize - cc;
                let (i0, i1) = (dy.max(0), (n + dy).min(n));
                let (j0, j1) = (dx.max(0), (n + dx).min(n));
                for i in i0..i1 {
                    let src = ((i - dy) * n) as usize;
                    let dst = (i * n) as usize;
                    for j in j0..j1 {
                        out[dst + j as usize] += p * v[src + (j - dx) as usize];
                    }
                }
            }
        }
    }

    fn apply_adjoint_into(&self, w: &[f64], out: &mut [f64]) {
        let n = self.side as isize;
        let (cr, cc) = (self.center.0 as isize, self.center.1 as isize);
        out.fill(0.0);
        for k in 0..self.psf_rows {
            for l in 0..self.psf_cols {
                let p = self.psf[k * self.psf_cols + l];
                if p == 0.0 {
                    continue;
                }
                let dy = k as isize - cr;
                let dx = l as isize - cc;
                let (i0, i1) = (dy.max(0), (n + dy).min(n));
                let (j0, j1) = (dx.max(0), (n + dx).min(n));
                for i in i0..i1 {
                    let src = ((i - dy) * n) as usize;
                    let dst = (i * n) as usize;
                    for j in j0..j1 {
                        out[src + (j - dx) as usize] += p * w[dst + j as usize];
                    }
                }
            }
        }
    }

    fn abs_column_sums(&self) -> Vec<f64> {
        // Nonnegative PSF: |A| = A, so the column sums are A^T 1.
        let ones = vec![1.0; self.rows()];
        let mut out = vec![0.0; self.cols()];
        self.apply_adjoint_into(&ones, &mut out);
        out
    }
}

/// Uniform Riemann grid `lo + i (hi - lo) / count` for `i = 1..=count`.
pub fn riemann_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let step = (hi - lo) / count as f64;
    (1..=count).map(|i| lo + i as f64 * step).collect()
}

/// Riemann-sum discretization of `y(t) = int_a^b K(t, s) phi(s) ds`.
///
/// `A(j, i) = K(t_j, s_i) * delta` with `s_i = a + i delta`, `delta = (b - a) / n`
/// and `t_j = c + j (d - c) / m` for `i = 1..=n`, `j = 1..=m`.
pub fn build_fredholm_map<K>(
    kernel: K,
    m: usize,
    n: usize,
    s_range: (f64, f64),
    t_range: (f64, f64),
) -> Result<DenseMap>
where
    K: Fn(f64, f64) -> f64,
{
    if m == 0 || n == 0 {
        return Err(Error::Usage("Fredholm grid needs m, n >= 1".into()));
    }
    if !(s_range.0 < s_range.1) || !(t_range.0 < t_range.1) {
        return Err(Error::Usage(format!(
            "empty Fredholm domain s={s_range:?} t={t_range:?}"
        )));
    }
    let delta = (s_range.1 - s_range.0) / n as f64;
    let s = riemann_grid(s_range.0, s_range.1, n);
    let t = riemann_grid(t_range.0, t_range.1, m);
    let mut entries = Vec::with_capacity(m * n);
    for &tj in &t {
        for &si in &s {
            let k = kernel(tj, si);
            if !k.is_finite() {
                return Err(Error::KernelEvaluation { t: tj, s: si });
            }
            entries.push(k * delta);
        }
    }
    DenseMap::from_row_major(m, n, entries)
}

/// Estimates `||A||_2` with `steps` power iterations on `A^T A` from a seeded
/// random start.
pub fn estimate_norm(map: &dyn LinearMap, steps: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<f64> = (0..map.cols()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut av = vec![0.0; map.rows()];
    let mut estimate = 0.0;
    for _ in 0..steps.max(1) {
        let nv = norm2(&v);
        if nv == 0.0 {
            return 0.0;
        }
        v.iter_mut().for_each(|x| *x /= nv);
        map.apply_into(&v, &mut av);
        estimate = norm2(&av);
        map.apply_adjoint_into(&av, &mut v);
    }
    estimate
}

/// Relative adjoint defect `|<A v, w> - <v, A^T w>| / (||v|| ||w|| norm)`.
pub fn adjoint_defect(map: &dyn LinearMap, v: &[f64], w: &[f64], norm: f64) -> Result<f64> {
    let av = map.apply(v)?;
    let atw = map.apply_adjoint(w)?;
    let scale = norm2(v) * norm2(w) * norm.max(f64::MIN_POSITIVE);
    Ok((dot(&av, w) - dot(v, &atw)).abs() / scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn dense_apply_extracts_columns_and_rows() {
        let a = DenseMap::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        assert_eq!(a.apply(&[1.0, 0.0]).unwrap(), vec![1.0, 3.0]);
        assert_eq!(a.apply_adjoint(&[1.0, 0.0]).unwrap(), vec![1.0, 2.0]);
        let id = DenseMap::identity(3).unwrap();
        assert_eq!(id.apply(&[5.0, -1.0, 2.0]).unwrap(), vec![5.0, -1.0, 2.0]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let a = DenseMap::identity(3).unwrap();
        assert!(matches!(a.apply(&[1.0]), Err(Error::Dimension { .. })));
        assert!(matches!(a.apply_adjoint(&[1.0; 4]), Err(Error::Dimension { .. })));
    }

    #[test]
    fn random_dense_adjoint_matches_inner_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = DenseMap::from_row_major(8, 5, random_vec(&mut rng, 40)).unwrap();
        let v = random_vec(&mut rng, 5);
        let w = random_vec(&mut rng, 8);
        let lhs = dot(&a.apply(&v).unwrap(), &w);
        let rhs = dot(&v, &a.apply_adjoint(&w).unwrap());
        assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn delta_psf_is_identity() {
        let blur = PsfConvolutionMap::delta(5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = random_vec(&mut rng, 25);
        assert_eq!(blur.apply(&img).unwrap(), img);
        assert_eq!(blur.apply_adjoint(&img).unwrap(), img);
    }

    #[test]
    fn symmetric_psf_is_self_adjoint() {
        let blur = PsfConvolutionMap::gaussian(9, 1.3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = random_vec(&mut rng, 81);
        let fwd = blur.apply(&img).unwrap();
        let adj = blur.apply_adjoint(&img).unwrap();
        for (a, b) in fwd.iter().zip(&adj) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_image_blurs_to_zero() {
        let blur = PsfConvolutionMap::gaussian(8, 2.0).unwrap();
        assert!(blur.apply(&[0.0; 64]).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn psf_is_normalized_and_validated() {
        let blur = PsfConvolutionMap::new(4, vec![1.0, 3.0], 1, 2).unwrap();
        assert_eq!(blur.psf().0, &[0.25, 0.75]);
        assert!(PsfConvolutionMap::new(4, vec![1.0, -1.0], 1, 2).is_err());
        assert!(PsfConvolutionMap::new(4, vec![0.0], 1, 1).is_err());
    }

    #[test]
    fn fredholm_constant_kernel() {
        let a = build_fredholm_map(|_, _| 1.0, 2, 2, (0.0, 1.0), (0.0, 1.0)).unwrap();
        assert_eq!(a.entries(), &[0.5; 4]);
    }

    #[test]
    fn fredholm_rejects_non_finite_kernel() {
        let err = build_fredholm_map(|_, s| 1.0 / (s - 1.0), 2, 2, (0.0, 2.0), (0.0, 1.0));
        assert!(matches!(err, Err(Error::KernelEvaluation { .. })));
    }

    #[test]
    fn fredholm_grid_drops_the_first_observation_point() {
        let a = build_fredholm_map(|t, s| t + 10.0 * s, 2, 1, (0.0, 1.0), (0.0, 1.0)).unwrap();
        // s_1 = 1, t_1 = 0.5, t_2 = 1, delta = 1
        assert_eq!(a.entries(), &[10.5, 11.0]);
    }

    #[test]
    fn default_column_sums_match_dense_pass() {
        let a = DenseMap::from_rows(&[vec![1.0, -2.0], vec![-3.0, 4.0], vec![0.5, 0.0]]).unwrap();
        #[derive(Debug)]
        struct Opaque(DenseMap);
        impl LinearMap for Opaque {
            fn rows(&self) -> usize {
                self.0.rows()
            }
            fn cols(&self) -> usize {
                self.0.cols()
            }
            fn apply_into(&self, v: &[f64], out: &mut [f64]) {
                self.0.apply_into(v, out)
            }
            fn apply_adjoint_into(&self, w: &[f64], out: &mut [f64]) {
                self.0.apply_adjoint_into(w, out)
            }
        }
        assert_eq!(Opaque(a.clone()).abs_column_sums(), a.abs_column_sums());
        assert_eq!(Opaque(a.clone()).to_dense(), a.to_matrix());
    }

    #[test]
    fn norm_estimate_of_diagonal() {
        let d = DiagonalMap::new(vec![3.0, 1.0, 0.5]).unwrap();
        let est = estimate_norm(&d, 10, 1);
        assert!((est - 3.0).abs() < 1e-3, "{est}");
    }
}
