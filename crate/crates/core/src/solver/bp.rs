//! min ‖z‖₁ subject to Az = y by Douglas–Rachford splitting.
//!
//! The affine constraint is handled by an exact projection built from a
//! pivoted QR factorization of A* = Q R: with w = R^{−*} y the feasible set is
//! {z : Q_r* z = w}. Depending on the rank r, the projection is applied either
//! through the r range columns of Q or through the N − r null-space columns,
//! whichever is smaller. One factorization serves any number of right-hand
//! sides.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::kernel::{PivotedQr, SplitMatrix, SplitVec};
use super::{l1, RecoveryResult, SolverConfig};
use crate::error::{Error, Result};

const RANK_TOL: f64 = 1e-13;

enum Projection {
    /// P(v) = v − Q_r Q_r* v + x_f
    Range(SplitMatrix),
    /// P(v) = Z Z* v + x_f
    Null(SplitMatrix),
}

/// A factored equality-constrained basis pursuit problem.
pub struct BasisPursuit {
    rows: usize,
    cols: usize,
    adjoint: SplitMatrix,
    qr: PivotedQr,
    projection: Projection,
    sigma_max: f64,
    condition: f64,
}

impl BasisPursuit {
    pub fn new(a: &DMatrix<Complex64>) -> Result<Self> {
        let (m, n) = a.shape();
        if m == 0 || n == 0 {
            return Err(Error::Dimension(format!("empty {m}x{n} matrix")));
        }
        if m > n {
            return Err(Error::Dimension(format!("basis pursuit needs m ≤ N, got {m}x{n}")));
        }
        if a.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
        }
        let adjoint = SplitMatrix::adjoint_of(a);
        let qr = PivotedQr::factor(adjoint.clone(), RANK_TOL);
        let rank = qr.rank;
        let projection = if 2 * rank <= n {
            Projection::Range(qr.q_columns(0..rank))
        } else {
            Projection::Null(qr.q_columns(rank..n))
        };
        let sigma_max = qr.sigma_max(200);
        let sigma_min = qr.sigma_min(200);
        let condition = if sigma_min > 0.0 { sigma_max / sigma_min } else { f64::INFINITY };
        Ok(Self { rows: m, cols: n, adjoint, qr, projection, sigma_max, condition })
    }

    pub fn rank(&self) -> usize {
        self.qr.rank
    }

    pub fn operator_norm(&self) -> f64 {
        self.sigma_max
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    /// A x.
    fn apply(&self, x: &SplitVec) -> SplitVec {
        let mut out = SplitVec::zeros(self.rows);
        self.adjoint.adjoint_apply(x, &mut out);
        out
    }

    fn residual(&self, x: &SplitVec, y: &SplitVec) -> f64 {
        let ax = self.apply(x);
        ax.re
            .iter()
            .zip(&ax.im)
            .zip(y.re.iter().zip(&y.im))
            .map(|((ar, ai), (yr, yi))| (ar - yr).powi(2) + (ai - yi).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Minimum-norm solution x_f = Q_r R^{−*} (P y), after checking that the
    /// equations dropped as dependent are consistent.
    fn particular(&self, y: &[Complex64]) -> Result<SplitVec> {
        let qr = &self.qr;
        let permuted: Vec<Complex64> = qr.perm.iter().map(|&i| y[i]).collect();
        let w = qr.solve_r_adj(&permuted[..qr.rank]);
        let y_norm = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let mut floor = 0.0f64;
        for (k, yk) in permuted.iter().enumerate().skip(qr.rank) {
            let pred: Complex64 = (0..qr.rank).map(|i| qr.r_at(i, k).conj() * w[i]).sum();
            floor = floor.max((pred - yk).norm());
        }
        if floor > 1e-8 * (1.0 + y_norm) {
            return Err(Error::Infeasible(floor));
        }
        let mut xf = SplitVec::zeros(self.cols);
        for (i, wi) in w.iter().enumerate() {
            xf.re[i] = wi.re;
            xf.im[i] = wi.im;
        }
        qr.apply_q(&mut xf);
        Ok(xf)
    }

    fn project(&self, v: &SplitVec, xf: &SplitVec, coeffs: &mut SplitVec, out: &mut SplitVec) {
        match &self.projection {
            Projection::Range(q) => {
                q.adjoint_apply(v, coeffs);
                out.re.copy_from_slice(&v.re);
                out.im.copy_from_slice(&v.im);
                coeffs.re.iter_mut().for_each(|c| *c = -*c);
                coeffs.im.iter_mut().for_each(|c| *c = -*c);
                q.apply_add(coeffs, out);
            }
            Projection::Null(z) => {
                z.adjoint_apply(v, coeffs);
                out.re.iter_mut().for_each(|c| *c = 0.0);
                out.im.iter_mut().for_each(|c| *c = 0.0);
                z.apply_add(coeffs, out);
            }
        }
        for i in 0..out.len() {
            out.re[i] += xf.re[i];
            out.im[i] += xf.im[i];
        }
    }

    pub fn solve(&self, y: &[Complex64], config: &SolverConfig) -> Result<RecoveryResult> {
        config.validate()?;
        if y.len() != self.rows {
            return Err(Error::Dimension(format!("y has {} entries, A has {} rows", y.len(), self.rows)));
        }
        if y.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(Error::InvalidArgument("y has non-finite entries".into()));
        }
        let n = self.cols;
        let y_norm = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if y_norm == 0.0 {
            return Ok(RecoveryResult {
                coefficients: vec![Complex64::new(0.0, 0.0); n],
                objective: 0.0,
                residual: 0.0,
                iterations: 0,
                converged: true,
                condition: Some(self.condition),
                operator_norm: self.sigma_max,
                objective_trace: Vec::new(),
            });
        }
        let run = self.iterate(y, config, n)?;
        let residual = self.residual(&run.x, &SplitVec::from_complex(y));
        let tol = config.feasibility * (1.0 + y_norm);
        let coefficients = run.x.to_complex();
        Ok(RecoveryResult {
            objective: l1(&coefficients),
            coefficients,
            residual,
            iterations: run.iterations,
            converged: run.converged && residual <= tol,
            condition: Some(self.condition),
            operator_norm: self.sigma_max,
            objective_trace: run.trace,
        })
    }

    /// Douglas–Rachford on min f(x) subject to Ax = y, where f is ‖·‖₁ on the
    /// first `l1_len` coordinates and the indicator of the unit ball on the
    /// block of remaining coordinates.
    pub(crate) fn iterate(&self, y: &[Complex64], config: &SolverConfig, l1_len: usize) -> Result<Iterate> {
        let n = self.cols;
        let y_norm = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let xf = self.particular(y)?;
        let gamma = config.threshold_scale * xf.norm() / (n as f64).sqrt();
        let tol = config.feasibility * (1.0 + y_norm);
        let basis_len = match &self.projection {
            Projection::Range(q) | Projection::Null(q) => q.cols,
        };

        let mut v = xf.clone();
        let mut x = SplitVec::zeros(n);
        let mut z = SplitVec::zeros(n);
        let mut reflected = SplitVec::zeros(n);
        let mut coeffs = SplitVec::zeros(basis_len);
        let mut window: VecDeque<f64> = VecDeque::with_capacity(config.stagnation_window + 1);
        let mut trace = Vec::new();
        let mut iterations = 0;
        let mut converged = false;
        let rho = config.relaxation;

        while iterations < config.max_iterations {
            iterations += 1;
            let mut objective = 0.0;
            for i in 0..l1_len {
                let (vr, vi) = (v.re[i], v.im[i]);
                let mag = vr.hypot(vi);
                let (xr, xi) = if mag <= gamma { (0.0, 0.0) } else { let s = 1.0 - gamma / mag; (vr * s, vi * s) };
                x.re[i] = xr;
                x.im[i] = xi;
                objective += (mag - gamma).max(0.0);
            }
            if l1_len < n {
                let block = super::kernel::norm(&v.re[l1_len..], &v.im[l1_len..]);
                let s = if block > 1.0 { 1.0 / block } else { 1.0 };
                for i in l1_len..n {
                    x.re[i] = v.re[i] * s;
                    x.im[i] = v.im[i] * s;
                }
            }
            for i in 0..n {
                reflected.re[i] = 2.0 * x.re[i] - v.re[i];
                reflected.im[i] = 2.0 * x.im[i] - v.im[i];
            }
            self.project(&reflected, &xf, &mut coeffs, &mut z);
            let mut gap = 0.0;
            for i in 0..n {
                let (dr, di) = (z.re[i] - x.re[i], z.im[i] - x.im[i]);
                gap += dr * dr + di * di;
                v.re[i] += rho * dr;
                v.im[i] += rho * di;
            }
            if config.record_objective {
                trace.push(objective);
            }
            window.push_back(objective);
            if window.len() > config.stagnation_window + 1 {
                window.pop_front();
            }
            // A(x − z) = Ax − y because z is feasible, and ‖A‖ ≤ σ_max.
            let feasible = self.sigma_max * gap.sqrt() <= tol;
            let stalled = window.len() == config.stagnation_window + 1
                && (window[0] - objective).abs() <= config.stagnation * objective.max(1.0);
            if feasible && stalled {
                converged = true;
                break;
            }
        }
        Ok(Iterate { x, iterations, converged, trace })
    }
}

pub(crate) struct Iterate {
    pub x: SplitVec,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

/// min ‖z‖₁ subject to Az = y.
pub fn basis_pursuit(a: &DMatrix<Complex64>, y: &[Complex64], config: &SolverConfig) -> Result<RecoveryResult> {
    BasisPursuit::new(a)?.solve(y, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn gaussian(m: usize, n: usize, seed: u64) -> DMatrix<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, n, |_, _| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
    }

    #[test]
    fn square_system_has_unique_solution() {
        let a = gaussian(8, 8, 1);
        let truth: Vec<Complex64> = (0..8).map(|j| c(j as f64 - 3.0, 0.5 * j as f64)).collect();
        let y: Vec<Complex64> = (0..8).map(|i| (0..8).map(|j| a[(i, j)] * truth[j]).sum()).collect();
        let res = basis_pursuit(&a, &y, &SolverConfig::default()).unwrap();
        assert!(res.converged);
        for (u, v) in res.coefficients.iter().zip(&truth) {
            assert!((u - v).norm() < 1e-8, "{u} vs {v}");
        }
    }

    #[test]
    fn zero_measurements_give_zero() {
        let a = gaussian(4, 10, 2);
        let res = basis_pursuit(&a, &[c(0.0, 0.0); 4], &SolverConfig::default()).unwrap();
        assert_eq!(res.iterations, 0);
        assert!(res.coefficients.iter().all(|v| *v == c(0.0, 0.0)));
    }

    #[test]
    fn recovers_sparse_complex_vector() {
        let a = gaussian(40, 100, 3);
        let mut truth = vec![c(0.0, 0.0); 100];
        truth[7] = c(1.0, -0.5);
        truth[42] = c(-0.3, 0.8);
        truth[91] = c(0.6, 0.1);
        let y: Vec<Complex64> = (0..40).map(|i| (0..100).map(|j| a[(i, j)] * truth[j]).sum()).collect();
        let res = basis_pursuit(&a, &y, &SolverConfig::default()).unwrap();
        assert!(res.converged);
        assert!(super::super::recovered(&truth, &res.coefficients, 1e-6).unwrap());
        assert!(res.residual <= 1e-9 * (1.0 + y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()));
    }

    #[test]
    fn zero_rows_are_tolerated() {
        let mut a = gaussian(6, 12, 4);
        a.row_mut(2).fill(c(0.0, 0.0));
        let mut x = [c(0.0, 0.0); 12];
        x[3] = c(1.0, 0.0);
        let y: Vec<Complex64> = (0..6).map(|i| a[(i, 3)]).collect();
        let bp = BasisPursuit::new(&a).unwrap();
        assert_eq!(bp.rank(), 5);
        let res = bp.solve(&y, &SolverConfig::default()).unwrap();
        assert!(res.converged);
        for (u, v) in res.coefficients.iter().zip(&x) {
            assert!((u - v).norm() < 1e-8);
        }
        let mut bad = y.clone();
        bad[2] = c(1.0, 0.0);
        assert!(matches!(bp.solve(&bad, &SolverConfig::default()), Err(Error::Infeasible(_))));
    }

    #[test]
    fn shape_errors() {
        assert!(BasisPursuit::new(&gaussian(5, 4, 1)).is_err());
        let bp = BasisPursuit::new(&gaussian(3, 4, 1)).unwrap();
        assert!(bp.solve(&[c(1.0, 0.0); 2], &SolverConfig::default()).is_err());
    }
}
