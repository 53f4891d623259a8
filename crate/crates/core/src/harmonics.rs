//! L²-normalized complex spherical harmonics and orthonormal Legendre
//! polynomials.
//!
//! Harmonics follow the Condon–Shortley phase convention and are evaluated
//! through the fully normalized associated Legendre recurrence in increasing
//! degree at fixed order, so no factorial ratios are ever formed. Starting
//! values `P̄_k^k ∝ sin^k θ` are carried as a mantissa/exponent pair so that
//! high orders near the poles underflow only at the final step, if at all.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MAX_DEGREE: usize = 256;

const SCALE_EXP: i32 = 600;

/// A (degree ℓ, order k) label with |k| ≤ ℓ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisIndex {
    degree: usize,
    order: i64,
}

impl BasisIndex {
    pub fn new(degree: usize, order: i64) -> Result<Self> {
        if order.unsigned_abs() as usize > degree {
            return Err(Error::InvalidIndex { degree, order });
        }
        Ok(Self { degree, order })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn order(&self) -> i64 {
        self.order
    }

    /// Flat position ℓ² + ℓ + k.
    pub fn flat(&self) -> usize {
        ((self.degree * self.degree + self.degree) as i64 + self.order) as usize
    }

    pub fn from_flat(j: usize) -> Self {
        let degree = (j as f64).sqrt() as usize;
        // guard against rounding in the square root
        let degree = if (degree + 1) * (degree + 1) <= j {
            degree + 1
        } else if degree * degree > j {
            degree - 1
        } else {
            degree
        };
        let order = j as i64 - (degree * degree + degree) as i64;
        Self { degree, order }
    }
}

/// A point on the unit sphere: colatitude θ ∈ [0, π], azimuth φ ∈ [0, 2π).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphericalPoint {
    theta: f64,
    phi: f64,
}

impl SphericalPoint {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&theta) {
            return Err(Error::InvalidPoint(format!("colatitude {theta} outside [0, pi]")));
        }
        if !(0.0..2.0 * PI).contains(&phi) {
            return Err(Error::InvalidPoint(format!("azimuth {phi} outside [0, 2pi)")));
        }
        Ok(Self { theta, phi })
    }

    /// Builds a point with the azimuth reduced modulo 2π.
    pub fn wrapped(theta: f64, phi: f64) -> Result<Self> {
        let mut p = phi.rem_euclid(2.0 * PI);
        if p >= 2.0 * PI {
            p = 0.0;
        }
        Self::new(theta, p)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }
}

/// A harmonic value, optionally multiplied by the weight |sin²θ cosθ|^{1/6}.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarmonicValue {
    pub value: Complex64,
    pub weight: Option<f64>,
}

/// The weight |sin²θ cosθ|^{1/6} that makes harmonics uniformly bounded up
/// to a factor ℓ^{1/6}.
pub fn sphere_weight(theta: f64) -> f64 {
    let s = theta.sin();
    (s * s * theta.cos()).abs().powf(1.0 / 6.0)
}

/// Evaluator for spherical harmonics up to a fixed degree cap, with the
/// recurrence coefficients tabulated once.
#[derive(Clone, Debug)]
pub struct SphericalHarmonics {
    cap: usize,
    // a[ℓ][k], b[ℓ][k] flattened with stride cap + 1
    alpha: Vec<f64>,
    beta: Vec<f64>,
}

impl Default for SphericalHarmonics {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_DEGREE)
    }
}

impl SphericalHarmonics {
    pub fn new(cap: usize) -> Self {
        let stride = cap + 1;
        let mut alpha = vec![0.0; stride * stride];
        let mut beta = vec![0.0; stride * stride];
        for l in 2..=cap {
            let lf = l as f64;
            for k in 0..l - 1 {
                let kf = k as f64;
                alpha[l * stride + k] = ((4.0 * lf * lf - 1.0) / (lf * lf - kf * kf)).sqrt();
                let lm = lf - 1.0;
                beta[l * stride + k] = ((lm * lm - kf * kf) / (4.0 * lm * lm - 1.0)).sqrt();
            }
        }
        Self { cap, alpha, beta }
    }

    pub fn max_degree(&self) -> usize {
        self.cap
    }

    fn check_degree(&self, degree: usize) -> Result<()> {
        if degree > self.cap {
            return Err(Error::DegreeCap { degree, cap: self.cap });
        }
        Ok(())
    }

    /// Fills `out[ℓ - k]` with Θ_ℓ^k(θ) for ℓ = k..bandlimit-1, where
    /// Y_ℓ^k = Θ_ℓ^k(θ) e^{ikφ} and k ≥ 0.
    fn theta_column(&self, k: usize, bandlimit: usize, sin_t: f64, cos_t: f64, out: &mut [f64]) {
        let stride = self.cap + 1;
        // P̄_k^k = (-1)^k sqrt((2k+1)!! / (4π (2k)!!)) sin^k θ, scaled.
        let mut pkk = 1.0 / (4.0 * PI).sqrt();
        let mut exp = 0i32;
        for j in 1..=k {
            pkk *= -((2 * j + 1) as f64 / (2 * j) as f64).sqrt() * sin_t;
            if pkk != 0.0 && pkk.abs() < f64::powi(2.0, -SCALE_EXP) {
                pkk *= f64::powi(2.0, SCALE_EXP);
                exp -= SCALE_EXP;
            }
        }
        if k >= bandlimit {
            return;
        }
        out[0] = unscale(pkk, exp);
        if k + 1 >= bandlimit {
            return;
        }
        let mut p2 = pkk;
        let mut p1 = ((2 * k + 3) as f64).sqrt() * cos_t * pkk;
        out[1] = unscale(p1, exp);
        for l in k + 2..bandlimit {
            let p = self.alpha[l * stride + k] * (cos_t * p1 - self.beta[l * stride + k] * p2);
            p2 = p1;
            p1 = p;
            if exp < 0 && p1.abs() > f64::powi(2.0, SCALE_EXP) {
                p1 *= f64::powi(2.0, -SCALE_EXP);
                p2 *= f64::powi(2.0, -SCALE_EXP);
                exp += SCALE_EXP;
            }
            out[l - k] = unscale(p1, exp);
        }
    }

    /// Y_ℓ^k(φ, θ), L²-normalized over the sphere.
    pub fn eval(&self, index: BasisIndex, point: SphericalPoint) -> Result<Complex64> {
        self.check_degree(index.degree)?;
        let k = index.order.unsigned_abs() as usize;
        let mut col = vec![0.0; index.degree - k + 1];
        let (s, c) = point.theta.sin_cos();
        self.theta_column(k, index.degree + 1, s, c, &mut col);
        let theta_part = col[index.degree - k];
        let positive = Complex64::from_polar(theta_part, k as f64 * point.phi);
        Ok(if index.order >= 0 {
            positive
        } else if k.is_multiple_of(2) {
            positive.conj()
        } else {
            -positive.conj()
        })
    }

    /// Harmonic value together with the weight |sin²θ cosθ|^{1/6}.
    pub fn eval_weighted(&self, index: BasisIndex, point: SphericalPoint) -> Result<HarmonicValue> {
        let w = sphere_weight(point.theta);
        Ok(HarmonicValue { value: self.eval(index, point)? * w, weight: Some(w) })
    }

    /// All Y_ℓ^k with ℓ < `bandlimit` in flat order, one recurrence pass.
    pub fn eval_row(&self, bandlimit: usize, point: SphericalPoint) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::new(0.0, 0.0); bandlimit * bandlimit];
        self.eval_row_into(bandlimit, point, &mut out)?;
        Ok(out)
    }

    pub fn eval_row_into(
        &self,
        bandlimit: usize,
        point: SphericalPoint,
        out: &mut [Complex64],
    ) -> Result<()> {
        if bandlimit == 0 {
            return Err(Error::InvalidArgument("bandlimit must be at least 1".into()));
        }
        self.check_degree(bandlimit - 1)?;
        if out.len() != bandlimit * bandlimit {
            return Err(Error::Dimension(format!(
                "row buffer has {} entries, expected {}",
                out.len(),
                bandlimit * bandlimit
            )));
        }
        let (s, c) = point.theta.sin_cos();
        let mut col = vec![0.0; bandlimit];
        for k in 0..bandlimit {
            self.theta_column(k, bandlimit, s, c, &mut col);
            let e = Complex64::from_polar(1.0, k as f64 * point.phi);
            for l in k..bandlimit {
                let v = e * col[l - k];
                let base = l * l + l;
                out[base + k] = v;
                if k > 0 {
                    out[base - k] = if k % 2 == 0 { v.conj() } else { -v.conj() };
                }
            }
        }
        Ok(())
    }

    /// |Θ_ℓ^k(θ)| for all ℓ < bandlimit, k = 0..=ℓ, indexed [ℓ(ℓ+1)/2 + k].
    fn moduli_triangle(&self, bandlimit: usize, theta: f64, out: &mut [f64], col: &mut [f64]) {
        let (s, c) = theta.sin_cos();
        for k in 0..bandlimit {
            self.theta_column(k, bandlimit, s, c, col);
            for l in k..bandlimit {
                out[l * (l + 1) / 2 + k] = col[l - k].abs();
            }
        }
    }

    /// max over a uniform θ-grid on [0, π] of |sin²θ cosθ|^{1/6} |Y_ℓ^k(0, θ)|.
    pub fn weighted_sup(&self, index: BasisIndex, grid_size: usize) -> Result<f64> {
        self.check_degree(index.degree)?;
        if grid_size < 64 {
            return Err(Error::InvalidArgument(format!("grid size {grid_size} below 64")));
        }
        let k = index.order.unsigned_abs() as usize;
        let mut col = vec![0.0; index.degree - k + 1];
        let mut best: f64 = 0.0;
        for i in 0..grid_size {
            let theta = PI * i as f64 / (grid_size - 1) as f64;
            let (s, c) = theta.sin_cos();
            self.theta_column(k, index.degree + 1, s, c, &mut col);
            best = best.max(sphere_weight(theta) * col[index.degree - k].abs());
        }
        Ok(best)
    }

    /// Weighted sups for every (ℓ, k ≥ 0) with ℓ ≤ `max_degree`, sharing one
    /// recurrence pass per grid node. Indexed [ℓ(ℓ+1)/2 + k].
    pub fn weighted_sup_table(&self, max_degree: usize, grid_size: usize) -> Result<Vec<f64>> {
        self.check_degree(max_degree)?;
        if grid_size < 64 {
            return Err(Error::InvalidArgument(format!("grid size {grid_size} below 64")));
        }
        let band = max_degree + 1;
        let len = band * (band + 1) / 2;
        let mut best = vec![0.0f64; len];
        let mut vals = vec![0.0; len];
        let mut col = vec![0.0; band];
        for i in 0..grid_size {
            let theta = PI * i as f64 / (grid_size - 1) as f64;
            let w = sphere_weight(theta);
            self.moduli_triangle(band, theta, &mut vals, &mut col);
            for (b, v) in best.iter_mut().zip(&vals) {
                *b = b.max(w * v);
            }
        }
        Ok(best)
    }
}

fn unscale(mut p: f64, mut exp: i32) -> f64 {
    while exp < -1000 {
        p *= f64::powi(2.0, -1000);
        exp += 1000;
    }
    p * f64::powi(2.0, exp)
}

/// Summary of the weighted-bound sweep ℓ = 1..=max_degree.
#[derive(Clone, Debug, Serialize)]
pub struct BoundSweep {
    /// (ℓ, max_k weighted sup, argmax k ≥ 0)
    pub per_degree: Vec<(usize, f64, usize)>,
    /// max over ℓ of sup_ℓ / ℓ^{1/6}
    pub constant: f64,
    /// least-squares slope of log sup_ℓ against log ℓ
    pub slope: f64,
}

/// Sweeps the weighted sup over all orders for each degree 1..=max_degree.
pub fn theorem_sweep(
    harmonics: &SphericalHarmonics,
    max_degree: usize,
    grid_size: usize,
) -> Result<BoundSweep> {
    if max_degree < 2 {
        return Err(Error::InvalidArgument("sweep needs max degree >= 2".into()));
    }
    let table = harmonics.weighted_sup_table(max_degree, grid_size)?;
    let per_degree: Vec<(usize, f64, usize)> = (1..=max_degree)
        .map(|l| {
            let row = &table[l * (l + 1) / 2..l * (l + 1) / 2 + l + 1];
            let (k, v) = row
                .iter()
                .enumerate()
                .fold((0, 0.0f64), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
            (l, v, k)
        })
        .collect();
    let constant = per_degree
        .iter()
        .map(|&(l, v, _)| v / (l as f64).powf(1.0 / 6.0))
        .fold(0.0, f64::max);
    let pts: Vec<(f64, f64)> =
        per_degree.iter().map(|&(l, v, _)| ((l as f64).ln(), v.ln())).collect();
    Ok(BoundSweep { per_degree, constant, slope: ls_slope(&pts) })
}

/// Ordinary least-squares slope of y against x.
pub fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Legendre polynomial of degree `j` normalized in L²([-1, 1], dx), so
/// |P_j(1)| = (j + 1/2)^{1/2}.
pub fn legendre_normalized(j: usize, x: f64, cap: usize) -> Result<f64> {
    if j > cap {
        return Err(Error::DegreeCap { degree: j, cap });
    }
    if !(-1.0..=1.0).contains(&x) {
        return Err(Error::InvalidArgument(format!("argument {x} outside [-1, 1]")));
    }
    let mut p0 = (0.5f64).sqrt();
    if j == 0 {
        return Ok(p0);
    }
    let mut p1 = (1.5f64).sqrt() * x;
    for n in 1..j {
        let nf = n as f64;
        let a = ((2.0 * nf + 3.0) * (2.0 * nf + 1.0)).sqrt() / (nf + 1.0);
        let b = nf / (nf + 1.0) * ((2.0 * nf + 3.0) / (2.0 * nf - 1.0)).sqrt();
        let p2 = a * x * p1 - b * p0;
        p0 = p1;
        p1 = p2;
    }
    Ok(p1)
}
