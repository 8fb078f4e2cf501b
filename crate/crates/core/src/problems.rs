//! Test problems: discretized Fredholm equations and image deblurring.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::io;
use crate::linops::{build_fredholm_map, riemann_grid, DenseMap, LinearMap, PsfConvolutionMap};
use crate::rkhs::{generalized_eig, RkhsGeometry};
use crate::vector::norm2;

/// `(a, b, c, d)`: `s in [a, b]`, `t in [c, d]`.
pub const FREDHOLM_DOMAIN: (f64, f64, f64, f64) = (1.0, 5.0, 0.0, 5.0);

/// The noise-to-signal ladder of the Fredholm benchmark.
pub const NSR_LADDER: [f64; 5] = [0.0625, 0.125, 0.25, 0.5, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelId {
    /// `K(t, s) = s^-2 exp(-s t)`, exponentially decaying spectrum.
    ExpDecay,
    /// `K(t, s) = s^-1 |sin(s t + 1)|`, polynomially decaying spectrum.
    PolyDecay,
}

impl KernelId {
    pub fn eval(self, t: f64, s: f64) -> f64 {
        match self {
            KernelId::ExpDecay => (-s * t).exp() / (s * s),
            KernelId::PolyDecay => (s * t + 1.0).sin().abs() / s,
        }
    }
}

impl fmt::Display for KernelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelId::ExpDecay => "exp_decay",
            KernelId::PolyDecay => "poly_decay",
        })
    }
}

impl FromStr for KernelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "exp_decay" | "exp" | "a" => Ok(KernelId::ExpDecay),
            "poly_decay" | "poly" | "b" => Ok(KernelId::PolyDecay),
            other => Err(Error::Usage(format!("unknown kernel '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthKind {
    /// Second generalized eigenvector, inside the identifiable space.
    InFsoi,
    /// `phi(s) = s^2` sampled on the grid.
    OutFsoi,
}

impl fmt::Display for TruthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TruthKind::InFsoi => "in_fsoi",
            TruthKind::OutFsoi => "out_fsoi",
        })
    }
}

impl FromStr for TruthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "in_fsoi" | "in" => Ok(TruthKind::InFsoi),
            "out_fsoi" | "out" => Ok(TruthKind::OutFsoi),
            other => Err(Error::Usage(format!("unknown truth kind '{other}'"))),
        }
    }
}

/// A discretized Fredholm operator with its geometry and grids.
#[derive(Debug, Clone)]
pub struct FredholmSetup {
    pub kernel: KernelId,
    pub dense: Arc<DenseMap>,
    pub geom: RkhsGeometry,
    pub s_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    /// Observation spacing `(d - c) / m`.
    pub dt: f64,
}

pub fn make_fredholm(kernel: KernelId, m: usize, n: usize) -> Result<FredholmSetup> {
    if m < 2 || n < 2 {
        return Err(Error::Usage(format!("Fredholm problem needs m, n >= 2, got {m}x{n}")));
    }
    let (a, b, c, d) = FREDHOLM_DOMAIN;
    let dense = Arc::new(build_fredholm_map(|t, s| kernel.eval(t, s), m, n, (a, b), (c, d))?);
    let geom = RkhsGeometry::exploration(dense.clone())?;
    Ok(FredholmSetup {
        kernel,
        dense,
        geom,
        s_grid: riemann_grid(a, b, n),
        t_grid: riemann_grid(c, d, m),
        dt: (d - c) / m as f64,
    })
}

/// Ground truth for the Fredholm benchmark.
///
/// The in-FSOI truth is the second column of `V` in
/// `A^T A V = B V Lambda`, so it has unit `L^2_rho` norm; its sign is fixed
/// so that the largest-magnitude entry is positive.
pub fn true_solution(kind: TruthKind, setup: &FredholmSetup) -> Result<Vec<f64>> {
    let n = setup.geom.cols();
    if n < 2 {
        return Err(Error::dim("true_solution", 2, n));
    }
    match kind {
        TruthKind::OutFsoi => Ok(setup.s_grid.iter().map(|s| s * s).collect()),
        TruthKind::InFsoi => {
            let decomp = generalized_eig(setup.dense.as_ref(), setup.geom.basis())?;
            let mut v: Vec<f64> = decomp.vectors().column(1).iter().copied().collect();
            let lead = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            if lead < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            Ok(v)
        }
    }
}

/// A noise-free problem waiting for a noise realization.
#[derive(Debug, Clone)]
pub struct CleanProblem {
    pub geom: RkhsGeometry,
    pub x_true: Vec<f64>,
    pub b_clean: Vec<f64>,
    pub dt: f64,
}

impl CleanProblem {
    pub fn new(geom: RkhsGeometry, x_true: Vec<f64>, dt: f64) -> Result<Self> {
        let b_clean = geom.map().apply(&x_true)?;
        Ok(CleanProblem {
            geom,
            x_true,
            b_clean,
            dt,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TestProblem {
    pub geom: RkhsGeometry,
    pub x_true: Vec<f64>,
    pub b_clean: Vec<f64>,
    pub b: Vec<f64>,
    /// `||b_clean|| * nsr`.
    pub sigma: f64,
    pub dt: f64,
    pub nsr: f64,
    pub seed: u64,
}

impl TestProblem {
    pub fn map(&self) -> &dyn LinearMap {
        self.geom.map()
    }

    /// `||b - b_clean||_2`.
    pub fn noise_norm(&self) -> f64 {
        self.b
            .iter()
            .zip(&self.b_clean)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}

/// Gaussian noise `w ~ N(0, sigma^2 dt I_m)` with `sigma = ||b_clean|| nsr`.
pub fn add_noise(clean: &CleanProblem, nsr: f64, seed: u64) -> Result<TestProblem> {
    if !(nsr >= 0.0 && nsr.is_finite()) {
        return Err(Error::Usage(format!("nsr must be nonnegative, got {nsr}")));
    }
    let sigma = norm2(&clean.b_clean) * nsr;
    let amplitude = sigma * clean.dt.sqrt();
    let mut b = clean.b_clean.clone();
    if amplitude > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for bi in b.iter_mut() {
            let g: f64 = StandardNormal.sample(&mut rng);
            *bi += amplitude * g;
        }
    }
    Ok(TestProblem {
        geom: clean.geom.clone(),
        x_true: clean.x_true.clone(),
        b_clean: clean.b_clean.clone(),
        b,
        sigma,
        dt: clean.dt,
        nsr,
        seed,
    })
}

/// `((x_hat - x_true)^T B (x_hat - x_true))^{1/2}`.
pub fn l2rho_error(geom: &RkhsGeometry, x_hat: &[f64], x_true: &[f64]) -> Result<f64> {
    if x_hat.len() != x_true.len() {
        return Err(Error::dim("l2rho_error", x_true.len(), x_hat.len()));
    }
    let diff: Vec<f64> = x_hat.iter().zip(x_true).map(|(a, b)| a - b).collect();
    geom.basis_norm(&diff)
}

/// Point spread function for deblurring problems.
#[derive(Debug, Clone, PartialEq)]
pub enum PsfShape {
    /// Isotropic Gaussian with the given standard deviation in pixels.
    Gaussian(f64),
    /// Unit PSF, for identity checks.
    Delta,
    /// Whitespace-separated text grid.
    FromFile(std::path::PathBuf),
}

impl PsfShape {
    pub fn build(&self, side: usize) -> Result<PsfConvolutionMap> {
        match self {
            PsfShape::Gaussian(width) => PsfConvolutionMap::gaussian(side, *width),
            PsfShape::Delta => PsfConvolutionMap::delta(side),
            PsfShape::FromFile(path) => {
                let (psf, rows, cols) = io::read_psf_text(path)?;
                PsfConvolutionMap::new(side, psf, rows, cols)
            }
        }
    }
}

/// Square grayscale image with intensities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub side: usize,
    pub pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(side: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != side * side {
            return Err(Error::dim("image pixels", side * side, pixels.len()));
        }
        Ok(GrayImage { side, pixels })
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_pgm(path)
    }

    /// Alternating `cell x cell` blocks of 0 and 1.
    pub fn checkerboard(side: usize, cell: usize) -> Self {
        let cell = cell.max(1);
        let pixels = (0..side * side)
            .map(|p| {
                let (i, j) = (p / side, p % side);
                ((i / cell + j / cell) % 2) as f64
            })
            .collect();
        GrayImage { side, pixels }
    }

    /// Piecewise-smooth synthetic scene: a few ellipses and a bar on a dark
    /// background.
    pub fn phantom(side: usize) -> Self {
        let shapes: [(f64, f64, f64, f64, f64); 4] = [
            (0.0, 0.0, 0.70, 0.85, 0.6),
            (-0.25, 0.10, 0.18, 0.30, 0.4),
            (0.30, -0.20, 0.15, 0.15, -0.3),
            (0.10, 0.45, 0.25, 0.08, 0.3),
        ];
        let pixels = (0..side * side)
            .map(|p| {
                let (i, j) = (p / side, p % side);
                let y = 2.0 * (i as f64 + 0.5) / side as f64 - 1.0;
                let x = 2.0 * (j as f64 + 0.5) / side as f64 - 1.0;
                let mut v = 0.0;
                for &(cx, cy, rx, ry, val) in &shapes {
                    let (dx, dy) = ((x - cx) / rx, (y - cy) / ry);
                    if dx * dx + dy * dy <= 1.0 {
                        v += val;
                    }
                }
                let v: f64 = v;
                v.clamp(0.0, 1.0)
            })
            .collect();
        GrayImage { side, pixels }
    }

    /// Anisotropic total variation `sum |dx| + |dy|`.
    pub fn total_variation(&self) -> f64 {
        total_variation(&self.pixels, self.side)
    }
}

pub fn total_variation(pixels: &[f64], side: usize) -> f64 {
    let mut tv = 0.0;
    for i in 0..side {
        for j in 0..side {
            let p = pixels[i * side + j];
            if j + 1 < side {
                tv += (pixels[i * side + j + 1] - p).abs();
            }
            if i + 1 < side {
                tv += (pixels[(i + 1) * side + j] - p).abs();
            }
        }
    }
    tv
}

/// Blurred, noisy observation of `image` under a zero-boundary PSF.
///
/// The noise follows the same law as the Fredholm problems with the pixel
/// area `1 / N^2` as spacing, so `||w|| ~ nsr ||b_clean||`.
pub fn make_deblur(image: &GrayImage, psf: &PsfShape, nsr: f64, seed: u64) -> Result<TestProblem> {
    if image.side < 8 {
        return Err(Error::Usage(format!("image side must be at least 8, got {}", image.side)));
    }
    let blur: Arc<dyn LinearMap> = Arc::new(psf.build(image.side)?);
    let geom = RkhsGeometry::exploration(blur)?;
    let m = image.side * image.side;
    let clean = CleanProblem::new(geom, image.pixels.clone(), 1.0 / m as f64)?;
    add_noise(&clean, nsr, seed)
}
