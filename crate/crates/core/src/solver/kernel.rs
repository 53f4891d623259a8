//! Dense complex kernels on split (real, imaginary) storage.
//!
//! Every reduction runs over four fixed lanes that are combined in a fixed
//! order, so results do not depend on thread count or scheduling.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Σ conj(a_i) b_i.
#[inline]
pub(crate) fn dotc(ar: &[f64], ai: &[f64], br: &[f64], bi: &[f64]) -> (f64, f64) {
    let n = ar.len();
    debug_assert!(ai.len() == n && br.len() == n && bi.len() == n);
    let mut sr = [0.0f64; 4];
    let mut si = [0.0f64; 4];
    let main = n - n % 4;
    let mut i = 0;
    while i < main {
        for l in 0..4 {
            let (xr, xi, yr, yi) = (ar[i + l], ai[i + l], br[i + l], bi[i + l]);
            sr[l] += xr * yr + xi * yi;
            si[l] += xr * yi - xi * yr;
        }
        i += 4;
    }
    let mut tr = 0.0;
    let mut ti = 0.0;
    for j in main..n {
        tr += ar[j] * br[j] + ai[j] * bi[j];
        ti += ar[j] * bi[j] - ai[j] * br[j];
    }
    (((sr[0] + sr[1]) + (sr[2] + sr[3])) + tr, ((si[0] + si[1]) + (si[2] + si[3])) + ti)
}

/// y += c x.
#[inline]
pub(crate) fn axpy(c: (f64, f64), xr: &[f64], xi: &[f64], yr: &mut [f64], yi: &mut [f64]) {
    let (cr, ci) = c;
    for (((yr, yi), &xr), &xi) in yr.iter_mut().zip(yi.iter_mut()).zip(xr).zip(xi) {
        *yr += cr * xr - ci * xi;
        *yi += cr * xi + ci * xr;
    }
}

pub(crate) fn norm_sq(re: &[f64], im: &[f64]) -> f64 {
    let mut s = [0.0f64; 4];
    let n = re.len();
    let main = n - n % 4;
    let mut i = 0;
    while i < main {
        for l in 0..4 {
            s[l] += re[i + l] * re[i + l] + im[i + l] * im[i + l];
        }
        i += 4;
    }
    let tail: f64 = (main..n).map(|j| re[j] * re[j] + im[j] * im[j]).sum();
    ((s[0] + s[1]) + (s[2] + s[3])) + tail
}

pub(crate) fn norm(re: &[f64], im: &[f64]) -> f64 {
    norm_sq(re, im).sqrt()
}

/// A complex vector with split storage.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct SplitVec {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl SplitVec {
    pub fn zeros(n: usize) -> Self {
        Self { re: vec![0.0; n], im: vec![0.0; n] }
    }

    pub fn from_complex(v: &[Complex64]) -> Self {
        Self { re: v.iter().map(|c| c.re).collect(), im: v.iter().map(|c| c.im).collect() }
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        self.re.iter().zip(&self.im).map(|(&r, &i)| Complex64::new(r, i)).collect()
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.re, &self.im)
    }
}

/// Column-major complex matrix with split storage.
#[derive(Clone, Debug)]
pub(crate) struct SplitMatrix {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl SplitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, re: vec![0.0; rows * cols], im: vec![0.0; rows * cols] }
    }

    /// The conjugate transpose A* of an m×N matrix, stored N×m.
    pub fn adjoint_of(a: &DMatrix<Complex64>) -> Self {
        let (m, n) = a.shape();
        let mut out = Self::zeros(n, m);
        for i in 0..m {
            for j in 0..n {
                let v = a[(i, j)];
                out.re[i * n + j] = v.re;
                out.im[i * n + j] = -v.im;
            }
        }
        out
    }

    #[inline]
    pub fn col(&self, j: usize) -> (&[f64], &[f64]) {
        let s = j * self.rows..(j + 1) * self.rows;
        (&self.re[s.clone()], &self.im[s])
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> (&mut [f64], &mut [f64]) {
        let s = j * self.rows..(j + 1) * self.rows;
        (&mut self.re[s.clone()], &mut self.im[s])
    }

    fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for i in 0..self.rows {
            self.re.swap(a * self.rows + i, b * self.rows + i);
            self.im.swap(a * self.rows + i, b * self.rows + i);
        }
    }

    /// out = M* x (length cols).
    pub fn adjoint_apply(&self, x: &SplitVec, out: &mut SplitVec) {
        for j in 0..self.cols {
            let (cr, ci) = self.col(j);
            let (r, i) = dotc(cr, ci, &x.re, &x.im);
            out.re[j] = r;
            out.im[j] = i;
        }
    }

    /// out += M t.
    pub fn apply_add(&self, t: &SplitVec, out: &mut SplitVec) {
        for j in 0..self.cols {
            let (cr, ci) = self.col(j);
            axpy((t.re[j], t.im[j]), cr, ci, &mut out.re, &mut out.im);
        }
    }
}

/// Householder QR with column pivoting, B P = Q R, truncated at numerical
/// rank. Applied to B = A*, the permutation orders the rows of A.
#[derive(Clone, Debug)]
pub(crate) struct PivotedQr {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    /// perm[k] = original column of B placed at position k.
    pub perm: Vec<usize>,
    /// Unit reflector vectors; column j is zero above row j.
    reflectors: SplitMatrix,
    /// R as a rank × cols row-major complex array (upper trapezoidal).
    pub r: Vec<Complex64>,
}

impl PivotedQr {
    /// Columns whose remaining norm falls below `rel_tol` times the largest
    /// initial column norm are treated as dependent.
    pub fn factor(mut b: SplitMatrix, rel_tol: f64) -> Self {
        let (n, m) = (b.rows, b.cols);
        let mut perm: Vec<usize> = (0..m).collect();
        let steps = n.min(m);
        let mut reflectors = SplitMatrix::zeros(n, steps);
        let mut norms: Vec<f64> = (0..m).map(|k| norm_sq(b.col(k).0, b.col(k).1)).collect();
        let first_max = norms.iter().fold(0.0f64, |a, &v| a.max(v)).sqrt();
        let mut rank = 0;
        for j in 0..steps {
            // recompute the trailing norms rather than downdating them
            for (k, nk) in norms.iter_mut().enumerate().skip(j) {
                let (cr, ci) = b.col(k);
                *nk = norm_sq(&cr[j..], &ci[j..]);
            }
            let (p, best) = (j..m).fold((j, -1.0f64), |acc, k| if norms[k] > acc.1 { (k, norms[k]) } else { acc });
            let best = best.sqrt();
            if best == 0.0 || best <= rel_tol * first_max {
                break;
            }
            b.swap_cols(j, p);
            norms.swap(j, p);
            perm.swap(j, p);

            let (xr, xi) = b.col(j);
            let (x0r, x0i) = (xr[j], xi[j]);
            let x0 = x0r.hypot(x0i);
            let (pr, pi) = if x0 > 0.0 { (x0r / x0, x0i / x0) } else { (1.0, 0.0) };
            let alpha = (-pr * best, -pi * best);
            {
                let (vr, vi) = reflectors.col_mut(j);
                vr[j..].copy_from_slice(&xr[j..]);
                vi[j..].copy_from_slice(&xi[j..]);
                vr[j] -= alpha.0;
                vi[j] -= alpha.1;
                let vn = norm(&vr[j..], &vi[j..]);
                vr[j..].iter_mut().for_each(|v| *v /= vn);
                vi[j..].iter_mut().for_each(|v| *v /= vn);
            }
            let (vr, vi) = reflectors.col(j);
            let (vr, vi) = (&vr[j..], &vi[j..]);
            for k in j + 1..m {
                let (cr, ci) = b.col_mut(k);
                let (sr, si) = dotc(vr, vi, &cr[j..], &ci[j..]);
                axpy((-2.0 * sr, -2.0 * si), vr, vi, &mut cr[j..], &mut ci[j..]);
            }
            let (cr, ci) = b.col_mut(j);
            cr[j] = alpha.0;
            ci[j] = alpha.1;
            for i in j + 1..n {
                cr[i] = 0.0;
                ci[i] = 0.0;
            }
            rank = j + 1;
        }
        let mut r = vec![Complex64::new(0.0, 0.0); rank * m];
        for i in 0..rank {
            for k in i..m {
                r[i * m + k] = Complex64::new(b.re[k * n + i], b.im[k * n + i]);
            }
        }
        Self { rows: n, cols: m, rank, perm, reflectors, r }
    }

    #[inline]
    pub fn r_at(&self, i: usize, k: usize) -> Complex64 {
        self.r[i * self.cols + k]
    }

    fn reflect(&self, j: usize, ur: &mut [f64], ui: &mut [f64]) {
        let (vr, vi) = self.reflectors.col(j);
        let (vr, vi) = (&vr[j..], &vi[j..]);
        let (sr, si) = dotc(vr, vi, &ur[j..], &ui[j..]);
        axpy((-2.0 * sr, -2.0 * si), vr, vi, &mut ur[j..], &mut ui[j..]);
    }

    /// u ← Q u.
    pub fn apply_q(&self, u: &mut SplitVec) {
        for j in (0..self.rank).rev() {
            self.reflect(j, &mut u.re, &mut u.im);
        }
    }

    /// Columns `range` of the full n×n unitary factor Q.
    pub fn q_columns(&self, range: std::ops::Range<usize>) -> SplitMatrix {
        let mut out = SplitMatrix::zeros(self.rows, range.len());
        for (c, k) in range.enumerate() {
            let (re, im) = out.col_mut(c);
            re[k] = 1.0;
            // reflectors after k do not touch e_k
            for j in (0..self.rank.min(k + 1)).rev() {
                self.reflect(j, re, im);
            }
        }
        out
    }

    /// Largest singular value of the leading rank×rank block of R by power
    /// iteration on R*R.
    pub fn sigma_max(&self, iterations: usize) -> f64 {
        let n = self.rank;
        if n == 0 {
            return 0.0;
        }
        let mut x = vec![Complex64::new(1.0, 0.0); n];
        let mut est = 0.0;
        for _ in 0..iterations {
            let y = self.r_mul(&x);
            let z = self.r_adj_mul(&y);
            let nz = z.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if nz == 0.0 {
                return 0.0;
            }
            let next = nz.sqrt();
            x = z.into_iter().map(|v| v / nz).collect();
            if (next - est).abs() <= 1e-12 * next {
                est = next;
                break;
            }
            est = next;
        }
        est
    }

    /// Smallest singular value of the leading block by inverse iteration.
    pub fn sigma_min(&self, iterations: usize) -> f64 {
        let n = self.rank;
        if n == 0 {
            return 0.0;
        }
        let mut x = vec![Complex64::new(1.0, 0.0); n];
        let mut est = f64::INFINITY;
        for _ in 0..iterations {
            // (R*R)^{-1} x = R^{-1} R^{-*} x
            let w = self.solve_r_adj(&x);
            let z = self.solve_r(&w);
            let nz = z.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if !nz.is_finite() || nz == 0.0 {
                return 0.0;
            }
            let next = 1.0 / nz.sqrt();
            x = z.into_iter().map(|v| v / nz).collect();
            if (next - est).abs() <= 1e-10 * next {
                return next;
            }
            est = next;
        }
        est
    }

    fn r_mul(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.rank)
            .map(|i| (i..self.rank).map(|k| self.r_at(i, k) * x[k]).sum())
            .collect()
    }

    fn r_adj_mul(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.rank)
            .map(|k| (0..=k).map(|i| self.r_at(i, k).conj() * x[i]).sum())
            .collect()
    }

    /// Solves R11* w = b for the leading block (forward substitution).
    pub fn solve_r_adj(&self, b: &[Complex64]) -> Vec<Complex64> {
        let mut w = vec![Complex64::new(0.0, 0.0); self.rank];
        for i in 0..self.rank {
            let mut acc = b[i];
            for (k, wk) in w.iter().enumerate().take(i) {
                acc -= self.r_at(k, i).conj() * wk;
            }
            w[i] = acc / self.r_at(i, i).conj();
        }
        w
    }

    fn solve_r(&self, b: &[Complex64]) -> Vec<Complex64> {
        let mut x = vec![Complex64::new(0.0, 0.0); self.rank];
        for i in (0..self.rank).rev() {
            let mut acc = b[i];
            for (k, xk) in x.iter().enumerate().skip(i + 1) {
                acc -= self.r_at(i, k) * xk;
            }
            x[i] = acc / self.r_at(i, i);
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn test_matrix() -> DMatrix<Complex64> {
        DMatrix::from_fn(3, 5, |i, j| c((i * 5 + j) as f64 * 0.37 % 1.3 - 0.5, ((i + 2 * j) as f64).sin()))
    }

    #[test]
    fn dot_and_axpy() {
        let a = SplitVec::from_complex(&[c(1.0, 2.0), c(-1.0, 0.5), c(0.0, 1.0), c(3.0, -1.0), c(2.0, 2.0)]);
        let b = SplitVec::from_complex(&[c(0.5, -1.0), c(2.0, 1.0), c(1.0, 1.0), c(-1.0, 0.0), c(0.0, 1.0)]);
        let exact: Complex64 =
            a.to_complex().iter().zip(b.to_complex()).map(|(x, y)| x.conj() * y).sum();
        let (r, i) = dotc(&a.re, &a.im, &b.re, &b.im);
        assert!((r - exact.re).abs() < 1e-14 && (i - exact.im).abs() < 1e-14);
        let mut y = b.clone();
        axpy((0.5, -2.0), &a.re, &a.im, &mut y.re, &mut y.im);
        for (k, v) in y.to_complex().iter().enumerate() {
            let e = b.to_complex()[k] + c(0.5, -2.0) * a.to_complex()[k];
            assert!((v - e).norm() < 1e-14);
        }
    }

    #[test]
    fn qr_reconstructs_adjoint() {
        let a = test_matrix();
        let b = SplitMatrix::adjoint_of(&a);
        let qr = PivotedQr::factor(b.clone(), 1e-13);
        assert_eq!(qr.rank, 3);
        let q = qr.q_columns(0..5);
        // (Q R)[:, k] equals column perm[k] of A*
        for k in 0..3 {
            let (br, bi) = b.col(qr.perm[k]);
            for row in 0..5 {
                let mut acc = c(0.0, 0.0);
                for i in 0..=k.min(qr.rank - 1) {
                    acc += c(q.re[i * 5 + row], q.im[i * 5 + row]) * qr.r_at(i, k);
                }
                assert!((acc - c(br[row], bi[row])).norm() < 1e-13);
            }
        }
        // Q is unitary
        for i in 0..5 {
            for j in 0..5 {
                let (ar, ai) = q.col(i);
                let (br, bi) = q.col(j);
                let (r, im) = dotc(ar, ai, br, bi);
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((r - e).abs() < 1e-14 && im.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rank_deficiency_is_detected() {
        let mut a = test_matrix();
        let row = a.row(0).clone_owned() * c(2.0, -1.0);
        a.set_row(2, &row);
        let qr = PivotedQr::factor(SplitMatrix::adjoint_of(&a), 1e-13);
        assert_eq!(qr.rank, 2);
        let zero = DMatrix::<Complex64>::zeros(2, 4);
        assert_eq!(PivotedQr::factor(SplitMatrix::adjoint_of(&zero), 1e-13).rank, 0);
    }

    #[test]
    fn singular_value_estimates() {
        let a = test_matrix();
        let sv = a.clone().singular_values();
        let qr = PivotedQr::factor(SplitMatrix::adjoint_of(&a), 1e-13);
        assert!((qr.sigma_max(500) - sv.max()).abs() < 1e-8 * sv.max());
        assert!((qr.sigma_min(500) - sv.min()).abs() < 1e-8 * sv.max());
    }
}
