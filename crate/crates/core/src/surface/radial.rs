//! The separated radial problem −a⁻¹(a u′)′ + k² a⁻² u = λ u on a staggered
//! grid.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::profile::{EndpointKind, SurfaceProfile};
use super::tridiag::SymTridiagonal;
use crate::error::{Error, Result};

pub const MIN_GRID_POINTS: usize = 256;

/// Flux-conservative discretization of the radial operator for one order k.
///
/// Cell centers sit at r− + (i + ½)h; face i sits at r− + ih. Boundary faces
/// carry zero flux: at a pole a(r±) = 0 already, at a boundary this is the
/// Neumann condition.
#[derive(Clone, Debug)]
pub struct RadialOperator {
    r_minus: f64,
    h: f64,
    order: i64,
    cell_a: Vec<f64>,
    face_a: Vec<f64>,
}

impl RadialOperator {
    pub fn new(profile: &SurfaceProfile, order: i64, grid_points: usize) -> Result<Self> {
        if grid_points < MIN_GRID_POINTS {
            return Err(Error::InvalidArgument(format!(
                "grid of {grid_points} points is below the minimum {MIN_GRID_POINTS}"
            )));
        }
        let n = grid_points;
        let r_minus = profile.r_minus();
        let h = (profile.r_plus() - r_minus) / n as f64;
        let cell_a: Vec<f64> = (0..n).map(|i| profile.a(r_minus + (i as f64 + 0.5) * h)).collect();
        if let Some(i) = cell_a.iter().position(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::Profile(format!(
                "a({}) = {} is not positive",
                r_minus + (i as f64 + 0.5) * h,
                cell_a[i]
            )));
        }
        let mut face_a: Vec<f64> = (0..=n).map(|i| profile.a(r_minus + i as f64 * h)).collect();
        face_a[0] = 0.0;
        face_a[n] = 0.0;
        Ok(Self { r_minus, h, order, cell_a, face_a })
    }

    pub fn len(&self) -> usize {
        self.cell_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cell_a.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn cell_a(&self) -> &[f64] {
        &self.cell_a
    }

    pub fn center(&self, i: usize) -> f64 {
        self.r_minus + (i as f64 + 0.5) * self.h
    }

    /// Rows of the (non-symmetric) matrix M as (sub, diag, super) diagonals.
    pub fn matrix(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.len();
        let h2 = self.h * self.h;
        let k2 = (self.order * self.order) as f64;
        let mut sub = vec![0.0; n - 1];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n - 1];
        for i in 0..n {
            let a = self.cell_a[i];
            diag[i] = (self.face_a[i] + self.face_a[i + 1]) / (a * h2) + k2 / (a * a);
            if i + 1 < n {
                sup[i] = -self.face_a[i + 1] / (a * h2);
            }
            if i > 0 {
                sub[i - 1] = -self.face_a[i] / (a * h2);
            }
        }
        (sub, diag, sup)
    }

    /// D M D⁻¹ with D = diag(√(a_i h)), which is symmetric.
    pub fn symmetric(&self) -> Result<SymTridiagonal> {
        let (_, diag, _) = self.matrix();
        let h2 = self.h * self.h;
        let off = (0..self.len() - 1)
            .map(|i| -self.face_a[i + 1] / (h2 * (self.cell_a[i] * self.cell_a[i + 1]).sqrt()))
            .collect();
        SymTridiagonal::new(diag, off)
    }

    /// Rayleigh quotient in energy form, ⟨u, aMu⟩ / ⟨u, a u⟩, which stays
    /// accurate for eigenvalues that are small relative to the matrix norm.
    pub fn rayleigh(&self, u: &[f64]) -> f64 {
        let h2 = self.h * self.h;
        let k2 = (self.order * self.order) as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..self.len() {
            let a = self.cell_a[i];
            num += k2 * u[i] * u[i] / a;
            den += a * u[i] * u[i];
            if i + 1 < self.len() {
                let d = u[i + 1] - u[i];
                num += self.face_a[i + 1] * d * d / h2;
            }
        }
        num / den
    }
}

/// One separated eigenfunction u(r); the joint eigenfunction on the surface
/// is ψ(r, φ) = u(r) e^{ikφ} / √(2π), and ∫ u² a dr = 1.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadialEigenfunction {
    pub order: i64,
    pub eigenvalue: f64,
    pub radial_index: usize,
    pub r_minus: f64,
    pub r_plus: f64,
    pub step: f64,
    pub values: Vec<f64>,
    pub endpoints: [EndpointKind; 2],
}

impl RadialEigenfunction {
    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |i| self.r_minus + (i as f64 + 0.5) * self.step)
    }

    fn end_value(&self, left: bool) -> f64 {
        let n = self.values.len();
        let kind = self.endpoints[if left { 0 } else { 1 }];
        if kind == EndpointKind::Pole && self.order != 0 {
            return 0.0;
        }
        // u is even in the distance to the endpoint: fit α + β d² through the
        // two nearest centers (d = h/2, 3h/2).
        let (u0, u1) = if left { (self.values[0], self.values[1]) } else { (self.values[n - 1], self.values[n - 2]) };
        let beta = (u1 - u0) / (2.0 * self.step * self.step);
        u0 - beta * self.step * self.step / 4.0
    }

    /// u(r) by four-point cubic interpolation on the cell centers augmented
    /// with the endpoint limits.
    pub fn value_at(&self, r: f64) -> Result<f64> {
        if !(r >= self.r_minus && r <= self.r_plus) {
            return Err(Error::InvalidArgument(format!(
                "r = {r} outside [{}, {}]",
                self.r_minus, self.r_plus
            )));
        }
        let n = self.values.len();
        // augmented node j: 0 -> r−, j in 1..=n -> center j-1, n+1 -> r+
        let node = |j: usize| -> f64 {
            if j == 0 {
                self.r_minus
            } else if j == n + 1 {
                self.r_plus
            } else {
                self.r_minus + (j as f64 - 0.5) * self.step
            }
        };
        let value = |j: usize| -> f64 {
            if j == 0 {
                self.end_value(true)
            } else if j == n + 1 {
                self.end_value(false)
            } else {
                self.values[j - 1]
            }
        };
        // interval [node(j), node(j+1)] containing r
        let t = (r - self.r_minus) / self.step + 0.5;
        let j = (t.floor().max(0.0) as usize).min(n);
        let start = j.saturating_sub(1).min(n + 2 - 4);
        let xs: [f64; 4] = std::array::from_fn(|q| node(start + q));
        let ys: [f64; 4] = std::array::from_fn(|q| value(start + q));
        let mut acc = 0.0;
        for q in 0..4 {
            let mut w = 1.0;
            for p in 0..4 {
                if p != q {
                    w *= (r - xs[p]) / (xs[q] - xs[p]);
                }
            }
            acc += w * ys[q];
        }
        Ok(acc)
    }

    /// ψ(r, φ) = u(r) e^{ikφ} / √(2π).
    pub fn eval(&self, r: f64, phi: f64) -> Result<Complex64> {
        let u = self.value_at(r)?;
        Ok(Complex64::from_polar(u / (2.0 * PI).sqrt(), self.order as f64 * phi))
    }

    /// The same radial function relabelled with order −k.
    pub fn mirrored(&self) -> Self {
        Self { order: -self.order, ..self.clone() }
    }
}

/// ψ(r, φ) for a radial eigenfunction.
pub fn eval_eigenfunction(eig: &RadialEigenfunction, r: f64, phi: f64) -> Result<Complex64> {
    eig.eval(r, phi)
}

/// Builds the eigenfunction for a computed symmetric eigenvector.
pub(crate) fn eigenfunction_from_vector(
    op: &RadialOperator,
    profile: &SurfaceProfile,
    order: i64,
    radial_index: usize,
    v: &[f64],
) -> RadialEigenfunction {
    let mut u: Vec<f64> = v
        .iter()
        .zip(op.cell_a())
        .map(|(x, a)| x / (a * op.step()).sqrt())
        .collect();
    let norm = u
        .iter()
        .zip(op.cell_a())
        .map(|(x, a)| x * x * a * op.step())
        .sum::<f64>()
        .sqrt();
    let peak = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let first = u.iter().find(|x| x.abs() > 1e-12 * peak).copied().unwrap_or(1.0);
    let scale = first.signum() / norm;
    u.iter_mut().for_each(|x| *x *= scale);
    RadialEigenfunction {
        order,
        eigenvalue: op.rayleigh(&u),
        radial_index,
        r_minus: profile.r_minus(),
        r_plus: profile.r_plus(),
        step: op.step(),
        values: u,
        endpoints: profile.endpoints(),
    }
}

/// The `count` lowest eigenpairs of −a⁻¹(a u′)′ + k² a⁻² u on L²(a dr).
pub fn solve_radial(
    profile: &SurfaceProfile,
    order: i64,
    count: usize,
    grid_points: usize,
) -> Result<Vec<RadialEigenfunction>> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    if count > grid_points / 4 {
        return Err(Error::InvalidArgument(format!(
            "{count} eigenpairs requested from a {grid_points}-point grid (limit {})",
            grid_points / 4
        )));
    }
    profile.validate()?;
    let op = RadialOperator::new(profile, order, grid_points)?;
    let sym = op.symmetric()?;
    let values = sym.lowest(count)?;
    vectors_for(&op, &sym, profile, order, &values)
}

pub(crate) fn vectors_for(
    op: &RadialOperator,
    sym: &SymTridiagonal,
    profile: &SurfaceProfile,
    order: i64,
    values: &[f64],
) -> Result<Vec<RadialEigenfunction>> {
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(values.len());
    for (i, &lam) in values.iter().enumerate() {
        // deflate against neighbours that form a numerical multiplet
        let close: Vec<&[f64]> = (0..i)
            .filter(|&j| (values[j] - lam).abs() <= 1e-8 * lam.abs().max(1.0))
            .map(|j| vecs[j].as_slice())
            .collect();
        vecs.push(sym.eigenvector(lam, &close)?);
    }
    Ok(vecs
        .iter()
        .enumerate()
        .map(|(i, v)| eigenfunction_from_vector(op, profile, order, i, v))
        .collect())
}
