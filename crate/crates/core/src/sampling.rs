//! Probability measures on the parameter rectangle [r−, r+] × [0, 2π) and
//! seeded inverse-CDF point generators.
//!
//! The radial CDF is tabulated in a parameter t rather than in r. Each half
//! [r−, r0] and [r0, r+] is mapped from t ∈ [0, 1] by
//! r = end + len · t³ / (t³ + (1 − t)³), which flattens the density near both
//! the equator r0 (where the preconditioned density blows up like
//! |r − r0|^{−1/3}) and the endpoints. In t every density is smooth and
//! vanishes at the ends of each half, so piecewise cubic Hermite
//! interpolation of F is accurate to O(h⁴).

use std::f64::consts::PI;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, integrate};
use crate::surface::SurfaceProfile;

/// Cells per half of the CDF table; the table has 2 · 2¹⁵ + 1 = 2¹⁶ + 1 nodes.
pub const DEFAULT_HALF_CELLS: usize = 1 << 15;
const CELL_QUADRATURE: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureKind {
    /// Riemannian volume, a(r) dr dφ (sphere: sinθ dθ dφ).
    Volume,
    /// Lebesgue measure on the rectangle, dr dφ.
    Uniform,
    /// (a(r) / |r − r0|)^{1/3} dr dφ; on the round sphere |r − r0| is
    /// replaced by |cos r|, giving |tanθ|^{1/3} dθ dφ.
    Preconditioned,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 3] = [MeasureKind::Volume, MeasureKind::Uniform, MeasureKind::Preconditioned];

    pub fn as_str(self) -> &'static str {
        match self {
            MeasureKind::Volume => "volume",
            MeasureKind::Uniform => "uniform",
            MeasureKind::Preconditioned => "preconditioned",
        }
    }

    /// Stable numeric tag used when deriving seeds.
    pub fn tag(self) -> u64 {
        match self {
            MeasureKind::Volume => 1,
            MeasureKind::Uniform => 2,
            MeasureKind::Preconditioned => 3,
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MeasureKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "volume" | "a" => Ok(MeasureKind::Volume),
            "uniform" | "b" => Ok(MeasureKind::Uniform),
            "preconditioned" | "c" => Ok(MeasureKind::Preconditioned),
            other => Err(Error::InvalidArgument(format!(
                "unknown measure `{other}` (expected volume, uniform or preconditioned)"
            ))),
        }
    }
}

/// A normalized density ρ(r) dr · dφ/2π with a tabulated CDF.
#[derive(Clone, Debug)]
pub struct SamplingMeasure {
    kind: MeasureKind,
    profile: SurfaceProfile,
    half_cells: usize,
    len: [f64; 2],
    // CDF and its t-derivative at the nodes t = i / half_cells, i ∈ [0, 2·half_cells]
    cdf: Vec<f64>,
    slope: Vec<f64>,
    z: f64,
    area_integral: f64,
}

/// r(t) for the global parameter t ∈ [0, 2], returned as (r, |r − r0|).
fn param_to_r(r_minus: f64, r0: f64, len: [f64; 2], t: f64) -> (f64, f64) {
    if t <= 1.0 {
        let (g, h) = split(t);
        let dist = len[0] * h;
        (if g <= 0.5 { r_minus + len[0] * g } else { r0 - dist }, dist)
    } else {
        let (g, _) = split(t - 1.0);
        let dist = len[1] * g;
        (r0 + dist, dist)
    }
}

/// (g(t), 1 − g(t)) with g(t) = t³ / (t³ + (1 − t)³), both without cancellation.
fn split(t: f64) -> (f64, f64) {
    let p = t * t * t;
    let q = (1.0 - t) * (1.0 - t) * (1.0 - t);
    (p / (p + q), q / (p + q))
}

fn split_derivative(t: f64) -> f64 {
    let s = 1.0 - t;
    let d = t * t * t + s * s * s;
    3.0 * t * t * s * s / (d * d)
}

/// Inverse of `split` given g and 1 − g.
fn unsplit(g: f64, h: f64) -> f64 {
    let (p, q) = (g.cbrt(), h.cbrt());
    p / (p + q)
}

impl SamplingMeasure {
    pub fn new(profile: &SurfaceProfile, kind: MeasureKind) -> Result<Self> {
        Self::with_resolution(profile, kind, DEFAULT_HALF_CELLS)
    }

    pub fn with_resolution(profile: &SurfaceProfile, kind: MeasureKind, half_cells: usize) -> Result<Self> {
        if half_cells < 16 {
            return Err(Error::InvalidArgument(format!("{half_cells} cells per half is too coarse")));
        }
        profile.validate()?;
        let len = [profile.r0() - profile.r_minus(), profile.r_plus() - profile.r0()];
        let mut m = Self {
            kind,
            profile: profile.clone(),
            half_cells,
            len,
            cdf: Vec::new(),
            slope: Vec::new(),
            z: 0.0,
            area_integral: 0.0,
        };
        m.tabulate()?;
        m.area_integral = integrate(|r| profile.a(r), profile.r_minus(), profile.r_plus(), 1e-13)?;
        Ok(m)
    }

    /// Unnormalized density with respect to t, exactly zero at the ends of
    /// each half (the limit, never a pointwise evaluation at r0 or r±).
    fn t_density(&self, t: f64) -> f64 {
        let local = if t <= 1.0 { t } else { t - 1.0 };
        if local <= 0.0 || local >= 1.0 {
            return 0.0;
        }
        let half = usize::from(t > 1.0);
        let (r, dist) = param_to_r(self.profile.r_minus(), self.profile.r0(), self.len, t);
        self.raw_density(r, dist) * self.len[half] * split_derivative(local)
    }

    fn raw_density(&self, r: f64, dist: f64) -> f64 {
        match self.kind {
            MeasureKind::Volume => self.profile.a(r).max(0.0),
            MeasureKind::Uniform => 1.0,
            MeasureKind::Preconditioned => {
                (self.profile.a(r).max(0.0) / self.profile.equator_factor(dist)).cbrt()
            }
        }
    }

    fn tabulate(&mut self) -> Result<()> {
        let n = self.half_cells;
        let h = 1.0 / n as f64;
        let (gx, gw) = gauss_legendre(CELL_QUADRATURE);
        let mut cum = Vec::with_capacity(2 * n + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for i in 0..2 * n {
            let t0 = i as f64 * h;
            let cell: f64 = gx
                .iter()
                .zip(&gw)
                .map(|(x, w)| w * self.t_density(t0 + 0.5 * h * (x + 1.0)))
                .sum::<f64>()
                * 0.5
                * h;
            acc += cell;
            cum.push(acc);
        }
        let total = acc;
        // Adaptive check of the table's normalization.
        let check = integrate(|t| self.t_density(t), 0.0, 1.0, 1e-13)?
            + integrate(|t| self.t_density(t), 1.0, 2.0, 1e-13)?;
        if !(total.is_finite() && total > 0.0) || (check - total).abs() > 1e-9 * total {
            return Err(Error::Quadrature { a: self.profile.r_minus(), b: self.profile.r_plus() });
        }
        self.cdf = cum.iter().map(|c| c / total).collect();
        *self.cdf.last_mut().unwrap() = 1.0;
        self.slope = (0..=2 * n).map(|i| self.t_density(i as f64 * h) / total).collect();
        self.z = total;
        Ok(())
    }

    pub fn kind(&self) -> MeasureKind {
        self.kind
    }

    pub fn profile(&self) -> &SurfaceProfile {
        &self.profile
    }

    /// Normalization constant Z = ∫ ρ̃(r) dr of the unnormalized density.
    pub fn normalization(&self) -> f64 {
        self.z
    }

    /// ∫ a(r) dr, so that the surface area is 2π times this.
    pub fn area_integral(&self) -> f64 {
        self.area_integral
    }

    pub fn table_len(&self) -> usize {
        self.cdf.len()
    }

    /// Normalized radial density ρ(r), so that ∫ ρ dr = 1. Infinite at r0 for
    /// the preconditioned measure.
    pub fn density(&self, r: f64) -> f64 {
        self.raw_density(r, (r - self.profile.r0()).abs()) / self.z
    }

    fn r_to_param(&self, r: f64) -> f64 {
        let (rm, r0) = (self.profile.r_minus(), self.profile.r0());
        if r <= r0 {
            let g = ((r - rm) / self.len[0]).clamp(0.0, 1.0);
            let h = ((r0 - r) / self.len[0]).clamp(0.0, 1.0);
            unsplit(g, h)
        } else {
            let g = ((r - r0) / self.len[1]).clamp(0.0, 1.0);
            let h = ((self.profile.r_plus() - r) / self.len[1]).clamp(0.0, 1.0);
            1.0 + unsplit(g, h)
        }
    }

    fn hermite(&self, i: usize, s: f64) -> (f64, f64) {
        let h = 1.0 / self.half_cells as f64;
        let (f0, f1) = (self.cdf[i], self.cdf[i + 1]);
        let (d0, d1) = (self.slope[i] * h, self.slope[i + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let v = (2.0 * s3 - 3.0 * s2 + 1.0) * f0
            + (s3 - 2.0 * s2 + s) * d0
            + (-2.0 * s3 + 3.0 * s2) * f1
            + (s3 - s2) * d1;
        let dv = (6.0 * s2 - 6.0 * s) * f0 + (3.0 * s2 - 4.0 * s + 1.0) * d0 + (-6.0 * s2 + 6.0 * s) * f1
            + (3.0 * s2 - 2.0 * s) * d1;
        (v, dv)
    }

    /// F(r) = ∫_{r−}^{r} ρ.
    pub fn cdf(&self, r: f64) -> f64 {
        if r <= self.profile.r_minus() {
            return 0.0;
        }
        if r >= self.profile.r_plus() {
            return 1.0;
        }
        let t = self.r_to_param(r) * self.half_cells as f64;
        let i = (t.floor() as usize).min(self.cdf.len() - 2);
        self.hermite(i, t - i as f64).0.clamp(0.0, 1.0)
    }

    /// F⁻¹(u) for u ∈ [0, 1].
    pub fn inverse(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        // first cell whose right end reaches u
        let i = self.cdf.partition_point(|&f| f < u).clamp(1, self.cdf.len() - 1) - 1;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let span = self.cdf[i + 1] - self.cdf[i];
        let mut s = if span > 0.0 { ((u - self.cdf[i]) / span).clamp(0.0, 1.0) } else { 0.0 };
        for _ in 0..100 {
            let (v, dv) = self.hermite(i, s);
            let resid = v - u;
            if resid > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            if resid.abs() <= 1e-16 || hi - lo <= 1e-16 {
                break;
            }
            let newton = s - resid / dv;
            s = if dv > 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        }
        let t = (i as f64 + s) / self.half_cells as f64;
        param_to_r(self.profile.r_minus(), self.profile.r0(), self.len, t).0
    }

    /// ω(r)^{−1/2}: the factor turning L²(volume)-normalized eigenfunctions
    /// into a system orthonormal for this measure once multiplied by the
    /// square root of the surface area. Equals sqrt(a / (∫a · ρ)).
    pub fn weight(&self, r: f64) -> f64 {
        let a = self.profile.a(r).max(0.0);
        match self.kind {
            MeasureKind::Volume => 1.0,
            MeasureKind::Uniform => {
                (a * (self.profile.r_plus() - self.profile.r_minus()) / self.area_integral).sqrt()
            }
            MeasureKind::Preconditioned => {
                let gap = self.profile.equator_factor((r - self.profile.r0()).abs());
                self.preconditioner_constant() * a.cbrt() * gap.powf(1.0 / 6.0)
            }
        }
    }

    /// c₀ = sqrt(Z / ∫a), the constant making ∫ ω dν = 1 for ν the
    /// normalized volume measure.
    pub fn preconditioner_constant(&self) -> f64 {
        (self.z / self.area_integral).sqrt()
    }

    /// Draws `m` points keyed on (seed, point index).
    pub fn draw(&self, m: usize, seed: u64) -> Result<SampleSet> {
        if m == 0 {
            return Err(Error::InvalidArgument("m must be at least 1".into()));
        }
        let points = (0..m)
            .map(|i| {
                let (u, v) = uniform_pair(seed, i as u64);
                (self.inverse(u), 2.0 * PI * v)
            })
            .collect();
        Ok(SampleSet { points, seed, measure: self.descriptor() })
    }

    pub fn descriptor(&self) -> MeasureDescriptor {
        MeasureDescriptor {
            kind: self.kind,
            surface: self.profile.name().to_string(),
            r_minus: self.profile.r_minus(),
            r_plus: self.profile.r_plus(),
            table_nodes: self.cdf.len(),
        }
    }
}

/// Builds the sampling measure of the given kind on a profile.
pub fn make_measure(profile: &SurfaceProfile, kind: MeasureKind) -> Result<SamplingMeasure> {
    SamplingMeasure::new(profile, kind)
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Order-sensitive hash of a tuple of integers, used to derive per-trial seeds.
pub fn mix_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x6A09_E667_F3BC_C908, |h, &p| splitmix64(h ^ splitmix64(p)))
}

/// Two uniforms in [0, 1) from the stream `index` of a ChaCha8 generator
/// keyed on `seed`.
pub fn uniform_pair(seed: u64, index: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    (rng.gen::<f64>(), rng.gen::<f64>())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureDescriptor {
    pub kind: MeasureKind,
    pub surface: String,
    pub r_minus: f64,
    pub r_plus: f64,
    pub table_nodes: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    /// (r, φ) pairs.
    pub points: Vec<(f64, f64)>,
    pub seed: u64,
    pub measure: MeasureDescriptor,
}

#[derive(Serialize, Deserialize)]
struct SampleManifest {
    seed: u64,
    count: usize,
    measure: MeasureDescriptor,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Sidecar manifest path for a CSV path: `points.csv` -> `points.json`.
    pub fn manifest_path(csv: &Path) -> PathBuf {
        csv.with_extension("json")
    }

    /// Writes `r,phi` rows with 17 significant digits and the JSON manifest.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "r,phi")?;
        for (r, phi) in &self.points {
            writeln!(w, "{r:.16e},{phi:.16e}")?;
        }
        w.flush()?;
        let manifest = SampleManifest { seed: self.seed, count: self.len(), measure: self.measure.clone() };
        let f = BufWriter::new(File::create(Self::manifest_path(path))?);
        serde_json::to_writer_pretty(f, &manifest)?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let manifest: SampleManifest =
            serde_json::from_reader(File::open(Self::manifest_path(path))?)?;
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["r", "phi"] {
            return Err(Error::Format(format!("expected header r,phi, found {:?}", headers)));
        }
        let mut points = Vec::with_capacity(manifest.count);
        for rec in reader.deserialize::<(f64, f64)>() {
            points.push(rec?);
        }
        if points.len() != manifest.count {
            return Err(Error::Format(format!(
                "manifest promises {} points, file holds {}",
                manifest.count,
                points.len()
            )));
        }
        Ok(Self { points, seed: manifest.seed, measure: manifest.measure })
    }
}
