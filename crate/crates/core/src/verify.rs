//! Numerical checks of the basis: discrete orthonormality on the sphere and
//! the weighted sup-norm sweeps on the sphere and on general surfaces.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::harmonics::{ls_slope, theorem_sweep, SphericalHarmonics, SphericalPoint};
use crate::quadrature::gauss_legendre;
use crate::surface::{SpectrumTable, SurfaceProfile};

#[derive(Clone, Debug, Serialize)]
pub struct OrthoReport {
    pub bandlimit: usize,
    pub theta_nodes: usize,
    pub phi_nodes: usize,
    /// max |G_jj' − δ_jj'| over the Gram matrix.
    pub max_deviation: f64,
    /// max |G_jj'| over j ≠ j'.
    pub max_off_diagonal: f64,
    /// max |G_jj − 1|.
    pub max_diagonal: f64,
    pub worst_entry: (usize, usize),
}

/// Gram matrix of the harmonics with ℓ < `bandlimit` under a product rule:
/// Gauss–Legendre in cos θ and the trapezoid rule in φ. The defaults (2L and
/// 4L nodes) integrate every product exactly.
pub fn orthocheck(bandlimit: usize, theta_nodes: Option<usize>, phi_nodes: Option<usize>) -> Result<OrthoReport> {
    if bandlimit == 0 {
        return Err(Error::InvalidArgument("bandlimit must be at least 1".into()));
    }
    let nt = theta_nodes.unwrap_or(2 * bandlimit);
    let np = phi_nodes.unwrap_or(4 * bandlimit);
    if nt == 0 || np == 0 {
        return Err(Error::InvalidArgument("quadrature needs at least one node per axis".into()));
    }
    let n = bandlimit * bandlimit;
    let harmonics = SphericalHarmonics::new(bandlimit - 1);
    let (x, w) = gauss_legendre(nt);
    let points = nt * np;
    // rows of sqrt(weight)·Y, split into real and imaginary parts
    let mut re = DMatrix::<f64>::zeros(points, n);
    let mut im = DMatrix::<f64>::zeros(points, n);
    let rows: Vec<Vec<num_complex::Complex64>> = (0..points)
        .into_par_iter()
        .map(|p| {
            let (i, k) = (p / np, p % np);
            let theta = x[i].clamp(-1.0, 1.0).acos();
            let phi = 2.0 * PI * k as f64 / np as f64;
            let scale = (w[i] * 2.0 * PI / np as f64).sqrt();
            let mut row = harmonics.eval_row(bandlimit, SphericalPoint::new(theta, phi)?)?;
            row.iter_mut().for_each(|v| *v *= scale);
            Ok(row)
        })
        .collect::<Result<_>>()?;
    for (p, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            re[(p, j)] = v.re;
            im[(p, j)] = v.im;
        }
    }
    let (rt, it) = (re.transpose(), im.transpose());
    let g_re = &rt * &re + &it * &im;
    let g_im = &rt * &im - &it * &re;
    let mut max_deviation = 0.0;
    let mut max_off_diagonal = 0.0f64;
    let mut max_diagonal = 0.0f64;
    let mut worst_entry = (0, 0);
    for a in 0..n {
        for b in 0..n {
            let target = if a == b { 1.0 } else { 0.0 };
            let dev = (g_re[(a, b)] - target).hypot(g_im[(a, b)]);
            if a == b {
                max_diagonal = max_diagonal.max(dev);
            } else {
                max_off_diagonal = max_off_diagonal.max(dev);
            }
            if dev > max_deviation {
                max_deviation = dev;
                worst_entry = (a, b);
            }
        }
    }
    Ok(OrthoReport {
        bandlimit,
        theta_nodes: nt,
        phi_nodes: np,
        max_deviation,
        max_off_diagonal,
        max_diagonal,
        worst_entry,
    })
}

/// One row of a weighted sup sweep. `level` is ℓ on the sphere and λ on a
/// general surface; `ratio` is the sup divided by ℓ^{1/6} or λ^{1/12}, absent
/// at level 0.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundRow {
    pub level: f64,
    pub order: i64,
    pub sup: f64,
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
    /// Largest ratio.
    pub constant: f64,
    /// Least-squares slope of log(max sup per band) against log(level).
    pub slope: f64,
    /// Exponent the slope is compared with (1/6 in ℓ, 1/12 in λ).
    pub exponent: f64,
}

impl BoundReport {
    pub fn write_csv(&self, path: &Path, level_name: &str) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{level_name},k,sup,ratio")?;
        for row in &self.rows {
            let ratio = row.ratio.map(|r| format!("{r:.12e}")).unwrap_or_default();
            writeln!(w, "{},{},{:.12e},{ratio}", row.level, row.order, row.sup)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Sweep of max_θ |sin²θ cosθ|^{1/6} |Y_ℓ^k| for every 0 ≤ k ≤ ℓ ≤ `max_degree`.
pub fn sphere_bounds(max_degree: usize, grid_size: usize) -> Result<BoundReport> {
    let harmonics = SphericalHarmonics::new(max_degree);
    let sweep = theorem_sweep(&harmonics, max_degree, grid_size)?;
    let table = harmonics.weighted_sup_table(max_degree, grid_size)?;
    let mut rows = Vec::with_capacity(table.len());
    for l in 0..=max_degree {
        for k in 0..=l {
            let sup = table[l * (l + 1) / 2 + k];
            let ratio = (l > 0).then(|| sup / (l as f64).powf(1.0 / 6.0));
            rows.push(BoundRow { level: l as f64, order: k as i64, sup, ratio });
        }
    }
    Ok(BoundReport { rows, constant: sweep.constant, slope: sweep.slope, exponent: 1.0 / 6.0 })
}

/// max over the grid nodes of a^{1/3} d^{1/6} |ψ_j| for every mode of the
/// table, with d the equatorial distance of the profile.
pub fn surface_sup(profile: &SurfaceProfile, table: &SpectrumTable, j: usize) -> f64 {
    let radial = table.radial(j);
    let r0 = profile.r0();
    radial
        .nodes()
        .zip(&radial.values)
        .map(|(r, u)| {
            let w = profile.a(r).powf(1.0 / 3.0) * profile.equator_factor((r - r0).abs()).powf(1.0 / 6.0);
            w * u.abs()
        })
        .fold(0.0, f64::max)
        / (2.0 * PI).sqrt()
}

/// Weighted sups over a spectrum. Bands group modes with equal ⌊√λ⌋; the
/// slope is fitted to the largest sup of each band with λ ≥ 1.
pub fn surface_bounds(profile: &SurfaceProfile, table: &SpectrumTable) -> Result<BoundReport> {
    if table.profile != *profile.spec() {
        return Err(Error::InvalidArgument("spectrum was computed for a different profile".into()));
    }
    let rows: Vec<BoundRow> = (0..table.len())
        .into_par_iter()
        .map(|j| {
            let e = &table.entries()[j];
            let sup = surface_sup(profile, table, j);
            let positive = e.lambda > 1e-9;
            let ratio = positive.then(|| sup / e.lambda.powf(1.0 / 12.0));
            BoundRow { level: e.lambda, order: e.order, sup, ratio }
        })
        .collect();
    let constant = rows.iter().filter_map(|r| r.ratio).fold(0.0, f64::max);
    let mut bands: Vec<(u64, f64, f64)> = Vec::new();
    for row in rows.iter().filter(|r| r.level >= 1.0) {
        let band = row.level.sqrt().floor() as u64;
        match bands.iter_mut().find(|b| b.0 == band) {
            Some(b) => {
                if row.sup > b.2 {
                    b.1 = row.level;
                    b.2 = row.sup;
                }
            }
            None => bands.push((band, row.level, row.sup)),
        }
    }
    if bands.len() < 2 {
        return Err(Error::InvalidArgument("slope needs at least two bands with λ ≥ 1".into()));
    }
    let pts: Vec<(f64, f64)> = bands.iter().map(|b| (b.1.ln(), b.2.ln())).collect();
    Ok(BoundReport { rows, constant, slope: ls_slope(&pts), exponent: 1.0 / 12.0 })
}

/// Spectrum as `rank,lambda,k`.
pub fn write_spectrum_csv(table: &SpectrumTable, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "rank,lambda,k")?;
    for (j, e) in table.entries().iter().enumerate() {
        writeln!(w, "{j},{:.15e},{}", e.lambda, e.order)?;
    }
    w.flush()?;
    Ok(())
}
