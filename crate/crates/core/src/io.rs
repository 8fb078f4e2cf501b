//! File formats: P5 images, PSF text grids, binary vectors, problem directories.
//!
//! Vectors and matrices are stored as a one-line text header
//! `f64le <rows> <cols>` followed by `rows * cols` little-endian `f64` values
//! in row-major order. Readers also accept whitespace-separated text.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linops::{DenseMap, DiagonalMap, LinearMap, PsfConvolutionMap};
use crate::problems::{self, GrayImage, KernelId, TestProblem};
use crate::rkhs::RkhsGeometry;

const MAGIC: &str = "f64le";

/// Row-major matrix read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

pub fn write_matrix(path: &Path, rows: usize, cols: usize, data: &[f64]) -> Result<()> {
    if data.len() != rows * cols {
        return Err(Error::dim("write_matrix", rows * cols, data.len()));
    }
    let mut buf = format!("{MAGIC} {rows} {cols}\n").into_bytes();
    buf.reserve(8 * data.len());
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn write_vector(path: &Path, x: &[f64]) -> Result<()> {
    write_matrix(path, x.len(), 1, x)
}

pub fn read_matrix(path: &Path) -> Result<RawMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(MAGIC.as_bytes()) {
        let nl = bytes
            .iter()
            .position(|&c| c == b'\n')
            .ok_or_else(|| Error::format(path, "missing header newline"))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::format(path, "header is not UTF-8"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let parse = |s: Option<&&str>| -> Result<usize> {
            s.and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::format(path, format!("bad header '{header}'")))
        };
        let rows = parse(fields.get(1))?;
        let cols = parse(fields.get(2))?;
        let body = &bytes[nl + 1..];
        if body.len() != 8 * rows * cols {
            return Err(Error::format(
                path,
                format!("expected {} bytes of data, found {}", 8 * rows * cols, body.len()),
            ));
        }
        let data = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        return Ok(RawMatrix { rows, cols, data });
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::format(path, "neither binary vector nor text"))?;
    parse_text_grid(path, &text)
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let m = read_matrix(path)?;
    if m.rows != 1 && m.cols != 1 {
        return Err(Error::format(path, format!("expected a vector, found {}x{}", m.rows, m.cols)));
    }
    Ok(m.data)
}

fn parse_text_grid(path: &Path, text: &str) -> Result<RawMatrix> {
    let mut data = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        let row: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::format(path, format!("line {}: bad number '{s}'", lineno + 1)))
            })
            .collect::<Result<_>>()?;
        if row.is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(Error::format(
                    path,
                    format!("line {}: {} values, expected {c}", lineno + 1, row.len()),
                ))
            }
            _ => {}
        }
        rows += 1;
        data.extend(row);
    }
    let cols = cols.ok_or_else(|| Error::format(path, "no numeric data"))?;
    Ok(RawMatrix { rows, cols, data })
}

/// Reads a PSF grid; returns `(entries, rows, cols)`.
pub fn read_psf_text(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m = parse_text_grid(path, &text)?;
    Ok((m.data, m.rows, m.cols))
}

/// Reads an 8-bit P5 image scaled to `[0, 1]`. Only square images are accepted.
pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if !bytes.starts_with(b"P5") {
        return Err(Error::format(path, "not a binary graymap (P5)"));
    }
    let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Pnm)
        .map_err(|e| Error::format(path, e.to_string()))?;
    if img.color() != image::ColorType::L8 {
        return Err(Error::format(path, "only 8-bit graymaps are supported"));
    }
    let luma = img.into_luma8();
    let (w, h) = luma.dimensions();
    if w != h {
        return Err(Error::format(path, format!("image must be square, found {w}x{h}")));
    }
    let pixels = luma.into_raw().into_iter().map(|p| p as f64 / 255.0).collect();
    GrayImage::new(w as usize, pixels)
}

/// Writes an 8-bit P5 image, clamping intensities to `[0, 1]`.
pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    let side = img.side as u32;
    let raw: Vec<u8> = img
        .pixels
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let mut buf = Vec::new();
    image::codecs::pnm::PnmEncoder::new(&mut buf)
        .with_subtype(image::codecs::pnm::PnmSubtype::Graymap(image::codecs::pnm::SampleEncoding::Binary))
        .encode(raw.as_slice(), side, side, image::ExtendedColorType::L8)
        .map_err(|e| Error::format(path, e.to_string()))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Contents of `operator.toml` in a problem directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorDescriptor {
    Identity { n: usize },
    /// Diagonal entries stored as a vector file.
    Diagonal { values: PathBuf },
    /// Row-major entries stored as a matrix file.
    Dense { entries: PathBuf },
    Fredholm { kernel: KernelId, m: usize, n: usize },
    Psf {
        side: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gaussian_width: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        psf_file: Option<PathBuf>,
    },
}

pub const OPERATOR_FILE: &str = "operator.toml";

impl OperatorDescriptor {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::format(path, e.message().to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::format(path, e.to_string()))?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Builds the operator; relative file names resolve against `dir`.
    pub fn build(&self, dir: &Path) -> Result<Arc<dyn LinearMap>> {
        let map: Arc<dyn LinearMap> = match self {
            OperatorDescriptor::Identity { n } => Arc::new(DenseMap::identity(*n)?),
            OperatorDescriptor::Diagonal { values } => Arc::new(DiagonalMap::new(read_vector(&dir.join(values))?)?),
            OperatorDescriptor::Dense { entries } => {
                let m = read_matrix(&dir.join(entries))?;
                Arc::new(DenseMap::from_row_major(m.rows, m.cols, m.data)?)
            }
            OperatorDescriptor::Fredholm { kernel, m, n } => problems::make_fredholm(*kernel, *m, *n)?.dense,
            OperatorDescriptor::Psf {
                side,
                gaussian_width,
                psf_file,
            } => match (gaussian_width, psf_file) {
                (Some(w), None) => Arc::new(PsfConvolutionMap::gaussian(*side, *w)?),
                (None, Some(f)) => {
                    let (psf, r, c) = read_psf_text(&dir.join(f))?;
                    Arc::new(PsfConvolutionMap::new(*side, psf, r, c)?)
                }
                _ => {
                    return Err(Error::Usage(
                        "psf operator needs exactly one of gaussian_width, psf_file".into(),
                    ))
                }
            },
        };
        Ok(map)
    }
}

/// Loads `operator.toml` from `dir` and builds the map.
pub fn load_operator(dir: &Path) -> Result<Arc<dyn LinearMap>> {
    OperatorDescriptor::load(&dir.join(OPERATOR_FILE))?.build(dir)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ProblemMeta {
    nsr: f64,
    sigma: f64,
    dt: f64,
    seed: u64,
}

/// Writes `operator.toml`, `b.bin`, `b_clean.bin`, `x_true.bin`, `rho.bin`
/// and `meta.toml` into `dir`.
pub fn save_problem(dir: &Path, descriptor: &OperatorDescriptor, problem: &TestProblem) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let built = descriptor.build(dir)?;
    let map = problem.map();
    if (built.rows(), built.cols()) != (map.rows(), map.cols()) {
        return Err(Error::dim("operator descriptor", map.rows() * map.cols(), built.rows() * built.cols()));
    }
    descriptor.save(&dir.join(OPERATOR_FILE))?;
    write_vector(&dir.join("b.bin"), &problem.b)?;
    write_vector(&dir.join("b_clean.bin"), &problem.b_clean)?;
    write_vector(&dir.join("x_true.bin"), &problem.x_true)?;
    write_vector(&dir.join("rho.bin"), problem.geom.basis())?;
    let meta = ProblemMeta {
        nsr: problem.nsr,
        sigma: problem.sigma,
        dt: problem.dt,
        seed: problem.seed,
    };
    let path = dir.join("meta.toml");
    let text = toml::to_string(&meta).map_err(|e| Error::format(&path, e.to_string()))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn load_problem(dir: &Path) -> Result<TestProblem> {
    let map = load_operator(dir)?;
    let rho = read_vector(&dir.join("rho.bin"))?;
    let geom = RkhsGeometry::with_basis(map, rho)?;
    let path = dir.join("meta.toml");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: ProblemMeta = toml::from_str(&text).map_err(|e| Error::format(&path, e.message().to_string()))?;
    let b = read_vector(&dir.join("b.bin"))?;
    let b_clean = read_vector(&dir.join("b_clean.bin"))?;
    let x_true = read_vector(&dir.join("x_true.bin"))?;
    if b.len() != geom.rows() || b_clean.len() != geom.rows() {
        return Err(Error::dim("stored data", geom.rows(), b.len()));
    }
    if x_true.len() != geom.cols() {
        return Err(Error::dim("stored truth", geom.cols(), x_true.len()));
    }
    Ok(TestProblem {
        geom,
        x_true,
        b_clean,
        b,
        sigma: meta.sigma,
        dt: meta.dt,
        nsr: meta.nsr,
        seed: meta.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{add_noise, make_fredholm, true_solution, CleanProblem, TruthKind};

    #[test]
    fn vector_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.bin");
        let x = vec![1.0, -0.0, f64::MIN_POSITIVE, 1e300, std::f64::consts::PI];
        write_vector(&p, &x).unwrap();
        let y = read_vector(&p).unwrap();
        assert_eq!(x.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), y.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn text_vectors_are_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.txt");
        fs::write(&p, "1\n2 # comment\n3\n").unwrap();
        assert_eq!(read_vector(&p).unwrap(), vec![1.0, 2.0, 3.0]);
        fs::write(&p, "1 2\n3\n").unwrap();
        assert!(matches!(read_matrix(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.bin");
        let mut bytes = b"f64le 3 1\n".to_vec();
        bytes.extend_from_slice(&1.0f64.to_le_bytes());
        fs::write(&p, bytes).unwrap();
        assert!(matches!(read_vector(&p), Err(Error::Format { .. })));
    }

    #[test]
    fn pgm_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("img.pgm");
        let img = GrayImage::checkerboard(16, 4);
        write_pgm(&p, &img).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert!(bytes.starts_with(b"P5"));
        assert_eq!(read_pgm(&p).unwrap(), img);
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(read_vector(Path::new("/nonexistent/x.bin")), Err(Error::Io { .. })));
    }

    #[test]
    fn problem_directory_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let setup = make_fredholm(KernelId::ExpDecay, 40, 12).unwrap();
        let x = true_solution(TruthKind::OutFsoi, &setup).unwrap();
        let clean = CleanProblem::new(setup.geom.clone(), x, setup.dt).unwrap();
        let p = add_noise(&clean, 0.25, 3).unwrap();
        let descriptor = OperatorDescriptor::Fredholm {
            kernel: KernelId::ExpDecay,
            m: 40,
            n: 12,
        };
        save_problem(dir.path(), &descriptor, &p).unwrap();
        let q = load_problem(dir.path()).unwrap();
        assert_eq!(q.b, p.b);
        assert_eq!(q.x_true, p.x_true);
        assert_eq!(q.geom.basis(), p.geom.basis());
        assert_eq!(q.seed, 3);
        let e = vec![1.0; 12];
        assert_eq!(q.map().apply(&e).unwrap(), p.map().apply(&e).unwrap());
    }

    #[test]
    fn dense_descriptor_loads_entries() {
        let dir = tempfile::tempdir().unwrap();
        write_matrix(&dir.path().join("A.bin"), 2, 2, &[2.0, 0.0, 0.0, 1.0]).unwrap();
        OperatorDescriptor::Dense {
            entries: "A.bin".into(),
        }
        .save(&dir.path().join(OPERATOR_FILE))
        .unwrap();
        let a = load_operator(dir.path()).unwrap();
        assert_eq!(a.apply(&[1.0, 1.0]).unwrap(), vec![2.0, 1.0]);
    }
}
