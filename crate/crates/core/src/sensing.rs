//! Preconditioned sensing matrices, sparse signals and measurements.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::{sphere_weight, SphericalHarmonics, SphericalPoint};
use crate::sampling::{MeasureDescriptor, SampleSet, SamplingMeasure};
use crate::surface::{SpectrumTable, SurfaceProfile};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// The eigenfunction system whose coefficients are recovered.
#[derive(Clone, Debug)]
pub enum Basis {
    /// Spherical harmonics Y_ℓ^k with ℓ < bandlimit, N = bandlimit².
    Sphere { bandlimit: usize, harmonics: Arc<SphericalHarmonics> },
    /// The first N numerical eigenfunctions of a surface of revolution.
    Surface(Arc<SpectrumTable>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum BasisDescriptor {
    Sphere { bandlimit: usize },
    Surface { profile: String, modes: usize, grid_points: usize },
}

impl Basis {
    pub fn sphere(bandlimit: usize) -> Result<Self> {
        if bandlimit == 0 {
            return Err(Error::InvalidArgument("bandlimit must be at least 1".into()));
        }
        let harmonics = SphericalHarmonics::new(bandlimit - 1);
        Ok(Basis::Sphere { bandlimit, harmonics: Arc::new(harmonics) })
    }

    pub fn surface(table: SpectrumTable) -> Self {
        Basis::Surface(Arc::new(table))
    }

    pub fn len(&self) -> usize {
        match self {
            Basis::Sphere { bandlimit, .. } => bandlimit * bandlimit,
            Basis::Surface(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn descriptor(&self) -> BasisDescriptor {
        match self {
            Basis::Sphere { bandlimit, .. } => BasisDescriptor::Sphere { bandlimit: *bandlimit },
            Basis::Surface(t) => BasisDescriptor::Surface {
                profile: t
                    .profile
                    .builtin
                    .clone()
                    .unwrap_or_else(|| "table".to_string()),
                modes: t.len(),
                grid_points: t.grid_points,
            },
        }
    }

    /// ψ_j(r, φ) for every j, L²-normalized on the surface.
    pub fn eval_row_into(&self, r: f64, phi: f64, out: &mut [Complex64]) -> Result<()> {
        match self {
            Basis::Sphere { bandlimit, harmonics } => {
                harmonics.eval_row_into(*bandlimit, SphericalPoint::wrapped(r, phi)?, out)
            }
            Basis::Surface(t) => {
                if out.len() != t.len() {
                    return Err(Error::Dimension(format!(
                        "row buffer has {} entries, expected {}",
                        out.len(),
                        t.len()
                    )));
                }
                for (j, o) in out.iter_mut().enumerate() {
                    *o = t.eval(j, r, phi)?;
                }
                Ok(())
            }
        }
    }

    fn matches(&self, profile: &SurfaceProfile) -> bool {
        match self {
            Basis::Sphere { .. } => profile.is_sphere(),
            Basis::Surface(t) => t.profile == *profile.spec(),
        }
    }
}

/// How rows are scaled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Convention {
    /// A_ij = √(area) · ω(x_i)^{−1/2} ψ_j(x_i): the columns form a system that
    /// is orthonormal for the sampling measure.
    #[default]
    Orthonormal,
    /// The sphere-only literal entries |sin²θ cosθ|^{1/3} ψ_j(x_i), kept for
    /// comparison. Not orthonormal for any of the sampling measures.
    Literal,
}

/// ω^{−1/2} at radius r for the given sampling measure. On the sphere with
/// the preconditioned measure this is c₀ |sin²θ cosθ|^{1/6}.
pub fn weight(measure: &SamplingMeasure, r: f64) -> f64 {
    measure.weight(r)
}

#[derive(Clone, Debug)]
pub struct SensingProblem {
    pub matrix: DMatrix<Complex64>,
    pub points: SampleSet,
    /// Row scale factors, including the √(area) factor.
    pub weights: Vec<f64>,
    pub basis: BasisDescriptor,
    pub convention: Convention,
}

impl SensingProblem {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// Writes the matrix in the SCSMAT1 layout and a JSON manifest next to it.
    pub fn export(&self, path: &Path) -> Result<()> {
        write_matrix(path, &self.matrix)?;
        let manifest = MatrixManifest {
            rows: self.rows(),
            cols: self.cols(),
            basis: self.basis.clone(),
            measure: self.points.measure.clone(),
            seed: self.points.seed,
            convention: self.convention,
        };
        serde_json::to_writer_pretty(BufWriter::new(File::create(path.with_extension("json"))?), &manifest)?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MatrixManifest {
    pub rows: usize,
    pub cols: usize,
    pub basis: BasisDescriptor,
    pub measure: MeasureDescriptor,
    pub seed: u64,
    pub convention: Convention,
}

/// Fills A row by row. Rows are independent and assembled in parallel.
pub fn assemble(
    basis: &Basis,
    measure: &SamplingMeasure,
    samples: &SampleSet,
    convention: Convention,
) -> Result<SensingProblem> {
    if !basis.matches(measure.profile()) || samples.measure != measure.descriptor() {
        return Err(Error::Dimension(format!(
            "sample set drawn from {} on {} does not match basis {:?} / measure {}",
            samples.measure.kind,
            samples.measure.surface,
            basis.descriptor(),
            measure.kind()
        )));
    }
    if convention == Convention::Literal && !matches!(basis, Basis::Sphere { .. }) {
        return Err(Error::InvalidArgument("the literal convention exists only on the sphere".into()));
    }
    let n = basis.len();
    let m = samples.len();
    let area_scale = (2.0 * std::f64::consts::PI * measure.area_integral()).sqrt();
    let weights: Vec<f64> = samples
        .points
        .iter()
        .map(|&(r, _)| match convention {
            Convention::Orthonormal => area_scale * measure.weight(r),
            Convention::Literal => sphere_weight(r).powi(2),
        })
        .collect();
    let mut rows = vec![ZERO; m * n];
    rows.par_chunks_mut(n.max(1))
        .zip(samples.points.par_iter().zip(weights.par_iter()))
        .try_for_each(|(row, (&(r, phi), &w))| -> Result<()> {
            basis.eval_row_into(r, phi, row)?;
            row.iter_mut().for_each(|v| *v *= w);
            Ok(())
        })?;
    Ok(SensingProblem {
        matrix: DMatrix::from_row_slice(m, n, &rows),
        points: samples.clone(),
        weights,
        basis: basis.descriptor(),
        convention,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparseSignal {
    pub coefficients: Vec<Complex64>,
    /// Ascending.
    pub support: Vec<usize>,
}

impl SparseSignal {
    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn zeros(n: usize) -> Self {
        Self { coefficients: vec![ZERO; n], support: Vec::new() }
    }

    pub fn one_hot(n: usize, j: usize) -> Self {
        let mut coefficients = vec![ZERO; n];
        coefficients[j] = Complex64::new(1.0, 0.0);
        Self { coefficients, support: vec![j] }
    }
}

/// A uniformly random s-subset of [0, N) carrying i.i.d. standard complex
/// Gaussians (X + iY)/√2.
pub fn random_sparse(n: usize, s: usize, seed: u64) -> Result<SparseSignal> {
    if s == 0 || s > n {
        return Err(Error::InvalidArgument(format!("sparsity {s} outside [1, {n}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut support = rand::seq::index::sample(&mut rng, n, s).into_vec();
    support.sort_unstable();
    let mut coefficients = vec![ZERO; n];
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    for &j in &support {
        let re: f64 = StandardNormal.sample(&mut rng);
        let im: f64 = StandardNormal.sample(&mut rng);
        coefficients[j] = Complex64::new(re * scale, im * scale);
    }
    Ok(SparseSignal { coefficients, support })
}

/// y = A c, the weighted samples of f = Σ c_j ψ_j.
pub fn synthesize(signal: &SparseSignal, problem: &SensingProblem) -> Result<Vec<Complex64>> {
    if signal.len() != problem.cols() {
        return Err(Error::Dimension(format!(
            "signal of length {} for a matrix with {} columns",
            signal.len(),
            problem.cols()
        )));
    }
    let a = &problem.matrix;
    Ok((0..a.nrows())
        .map(|i| signal.support.iter().map(|&j| a[(i, j)] * signal.coefficients[j]).sum())
        .collect())
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Restricted isometry constant of order 2s: the largest deviation from 1 of
/// the singular values of (1/√m) A_T over all column sets T of size 2s
/// (all N columns when 2s ≥ N).
pub fn estimate_rip(matrix: &DMatrix<Complex64>, s: usize) -> Result<f64> {
    const BUDGET: u128 = 1_000_000;
    let (m, n) = matrix.shape();
    if s == 0 || m == 0 {
        return Err(Error::InvalidArgument("RIP needs s ≥ 1 and a non-empty matrix".into()));
    }
    let k = (2 * s).min(n);
    let needed = binomial(n, k);
    if needed > BUDGET {
        return Err(Error::Budget { needed, budget: BUDGET });
    }
    let scale = Complex64::new(1.0 / (m as f64).sqrt(), 0.0);
    let mut idx: Vec<usize> = (0..k).collect();
    let mut delta = 0.0f64;
    loop {
        let sub = matrix.select_columns(idx.iter()) * scale;
        let sv = sub.singular_values();
        // a tall-enough submatrix has k singular values; missing ones are 0
        let missing = if m < k { 1.0 } else { 0.0 };
        delta = sv.iter().fold(delta.max(missing), |d, &v| d.max((v - 1.0).abs()));
        // next k-combination in lexicographic order
        let mut i = k;
        loop {
            if i == 0 {
                return Ok(delta);
            }
            i -= 1;
            if idx[i] < n - k + i {
                break;
            }
        }
        idx[i] += 1;
        for q in i + 1..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

const MAGIC: &[u8; 8] = b"SCSMAT1\0";

/// Writes a complex matrix: 8-byte magic, u32 rows, u32 cols (little
/// endian), then row-major (re, im) pairs of little-endian f64.
pub fn write_matrix(path: &Path, a: &DMatrix<Complex64>) -> Result<()> {
    let (m, n) = a.shape();
    let dims = |v: usize| -> Result<u32> {
        u32::try_from(v).map_err(|_| Error::Dimension(format!("dimension {v} does not fit in 32 bits")))
    };
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&dims(m)?.to_le_bytes())?;
    w.write_all(&dims(n)?.to_le_bytes())?;
    for i in 0..m {
        for j in 0..n {
            let v = a[(i, j)];
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<Complex64>> {
    let mut raw = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut raw)?;
    if raw.len() < 16 || &raw[..8] != MAGIC {
        return Err(Error::Format(format!("{}: not an SCSMAT1 file", path.display())));
    }
    let m = u32::from_le_bytes(raw[8..12].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(raw[12..16].try_into().unwrap()) as usize;
    let body = &raw[16..];
    if body.len() != m * n * 16 {
        return Err(Error::Format(format!(
            "{}: header promises {m}x{n} entries, payload holds {} bytes",
            path.display(),
            body.len()
        )));
    }
    let vals: Vec<Complex64> = body
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    Ok(DMatrix::from_row_slice(m, n, &vals))
}
