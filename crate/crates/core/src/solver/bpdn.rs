//! min ‖z‖₁ subject to (1/√m) ‖Az − y‖₂ ≤ ε by ADMM with residual balancing.
//!
//! The data-fit set C = {z : ‖Az − y‖₂ ≤ ε√m} is projected onto exactly from
//! a thin SVD A = U Σ V*: only the components V_r* z move, and the multiplier
//! of the ball constraint solves a monotone scalar equation. The shrinkage
//! step γ adapts while the primal and dual residuals are out of balance.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::bp::basis_pursuit;
use super::kernel::{SplitMatrix, SplitVec};
use super::{l1, RecoveryResult, SolverConfig};
use crate::error::{Error, Result};

const RANK_TOL: f64 = 1e-13;
/// γ changes by this factor when one residual exceeds the other by `BALANCE`.
const ADAPT_FACTOR: f64 = 2.0;
const BALANCE: f64 = 10.0;
const ADAPT_EVERY: usize = 10;
/// Iterations after which γ is frozen.
const ADAPT_UNTIL: usize = 10_000;

struct BallProjection {
    /// Right singular vectors V_r as an n×r split matrix.
    v: SplitMatrix,
    sigma: Vec<f64>,
    /// U_r* y.
    c: Vec<Complex64>,
    /// r² − ‖(I − U_r U_r*) y‖², the part of the budget left for the range.
    budget: f64,
}

impl BallProjection {
    /// Projects `point` onto C, writing into `out`. `coeffs` is scratch of length r.
    fn project(&self, point: &SplitVec, coeffs: &mut SplitVec, out: &mut SplitVec) {
        self.v.adjoint_apply(point, coeffs);
        let w0: Vec<Complex64> = (0..self.sigma.len()).map(|i| Complex64::new(coeffs.re[i], coeffs.im[i])).collect();
        let d: Vec<f64> = w0.iter().zip(&self.sigma).zip(&self.c).map(|((w, s), c)| (w * s - c).norm_sqr()).collect();
        let excess = |mu: f64| -> f64 {
            d.iter().zip(&self.sigma).map(|(di, s)| di / (1.0 + mu * s * s).powi(2)).sum::<f64>() - self.budget
        };
        out.re.copy_from_slice(&point.re);
        out.im.copy_from_slice(&point.im);
        if excess(0.0) <= 0.0 {
            return;
        }
        let mu = if self.budget <= 0.0 {
            f64::INFINITY
        } else {
            let smin = self.sigma.iter().copied().fold(f64::INFINITY, f64::min);
            let total: f64 = d.iter().sum();
            let (mut lo, mut hi) = (0.0, total.sqrt() / (self.budget.sqrt() * smin * smin));
            while excess(hi) > 0.0 {
                hi *= 2.0;
            }
            loop {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if excess(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            hi
        };
        for (i, ((&s, &c), &w0)) in self.sigma.iter().zip(&self.c).zip(&w0).enumerate() {
            let w = if mu.is_infinite() { c / s } else { (w0 + c * (mu * s)) / (1.0 + mu * s * s) };
            coeffs.re[i] = w.re - w0.re;
            coeffs.im[i] = w.im - w0.im;
        }
        self.v.apply_add(coeffs, out);
    }
}

fn distance(a: &SplitVec, b: &SplitVec) -> f64 {
    a.re.iter()
        .zip(&b.re)
        .chain(a.im.iter().zip(&b.im))
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

/// min ‖z‖₁ subject to (1/√m) ‖Az − y‖₂ ≤ ε. ε = 0 is [`basis_pursuit`].
pub fn basis_pursuit_denoise(
    a: &DMatrix<Complex64>,
    y: &[Complex64],
    epsilon: f64,
    config: &SolverConfig,
) -> Result<RecoveryResult> {
    config.validate()?;
    let (m, n) = a.shape();
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} must be finite and non-negative")));
    }
    if y.len() != m {
        return Err(Error::Dimension(format!("y has {} entries, A has {m} rows", y.len())));
    }
    if m == 0 || n == 0 {
        return Err(Error::Dimension(format!("empty {m}x{n} matrix")));
    }
    if a.iter().chain(y).any(|v| !(v.re.is_finite() && v.im.is_finite())) {
        return Err(Error::InvalidArgument("non-finite entries in A or y".into()));
    }
    if epsilon == 0.0 {
        return basis_pursuit(a, y, config);
    }
    let radius = epsilon * (m as f64).sqrt();
    let y_norm = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let tol = config.feasibility * (1.0 + y_norm);
    let svd = a.clone().svd(true, true);
    let (u, v_t) = (svd.u.expect("requested U"), svd.v_t.expect("requested V*"));
    let sigma_max = svd.singular_values.max();
    let keep: Vec<usize> =
        (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > RANK_TOL * sigma_max).collect();
    let sigma: Vec<f64> = keep.iter().map(|&i| svd.singular_values[i]).collect();
    let sigma_min = sigma.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = (!keep.is_empty()).then(|| sigma_max / sigma_min);
    let result = |coefficients: Vec<Complex64>, residual, iterations, converged, trace| RecoveryResult {
        objective: l1(&coefficients),
        coefficients,
        residual,
        iterations,
        converged,
        condition,
        operator_norm: sigma_max,
        objective_trace: trace,
    };
    if y_norm <= radius {
        return Ok(result(vec![Complex64::new(0.0, 0.0); n], y_norm, 0, true, Vec::new()));
    }
    let c: Vec<Complex64> = keep.iter().map(|&i| (0..m).map(|k| u[(k, i)].conj() * y[k]).sum()).collect();
    let floor = (y_norm * y_norm - c.iter().map(|v| v.norm_sqr()).sum::<f64>()).max(0.0).sqrt();
    if floor > radius + tol {
        return Err(Error::Infeasible(floor - radius));
    }
    let v_r = DMatrix::from_fn(n, keep.len(), |j, i| v_t[(keep[i], j)].conj());
    let ball = BallProjection {
        v: SplitMatrix::adjoint_of(&v_r.adjoint()),
        sigma,
        c,
        budget: radius * radius - floor * floor,
    };

    let mut coeffs = SplitVec::zeros(keep.len());
    // z ∈ C throughout; x carries the shrinkage; w is the scaled dual.
    let mut z = SplitVec::zeros(n);
    ball.project(&SplitVec::zeros(n), &mut coeffs, &mut z);
    let mut gamma = config.threshold_scale * z.norm() / (n as f64).sqrt();
    let mut x = SplitVec::zeros(n);
    let mut w = SplitVec::zeros(n);
    let mut point = SplitVec::zeros(n);
    let mut z_next = SplitVec::zeros(n);
    let mut window: VecDeque<f64> = VecDeque::with_capacity(config.stagnation_window + 1);
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let alpha = config.relaxation;

    while iterations < config.max_iterations {
        iterations += 1;
        let mut objective = 0.0;
        for i in 0..n {
            let (vr, vi) = (z.re[i] - w.re[i], z.im[i] - w.im[i]);
            let mag = vr.hypot(vi);
            let (xr, xi) = if mag <= gamma { (0.0, 0.0) } else { let s = 1.0 - gamma / mag; (vr * s, vi * s) };
            x.re[i] = xr;
            x.im[i] = xi;
            objective += (mag - gamma).max(0.0);
        }
        for i in 0..n {
            point.re[i] = alpha * x.re[i] + (1.0 - alpha) * z.re[i] + w.re[i];
            point.im[i] = alpha * x.im[i] + (1.0 - alpha) * z.im[i] + w.im[i];
        }
        ball.project(&point, &mut coeffs, &mut z_next);
        let (mut primal, mut change) = (0.0, 0.0);
        for i in 0..n {
            w.re[i] = point.re[i] - z_next.re[i];
            w.im[i] = point.im[i] - z_next.im[i];
            primal += (x.re[i] - z_next.re[i]).powi(2) + (x.im[i] - z_next.im[i]).powi(2);
            change += (z_next.re[i] - z.re[i]).powi(2) + (z_next.im[i] - z.im[i]).powi(2);
        }
        std::mem::swap(&mut z, &mut z_next);
        let (primal, dual) = (primal.sqrt(), change.sqrt() / gamma);
        if iterations <= ADAPT_UNTIL && iterations % ADAPT_EVERY == 0 {
            let scale = if primal > BALANCE * dual {
                1.0 / ADAPT_FACTOR
            } else if dual > BALANCE * primal {
                ADAPT_FACTOR
            } else {
                1.0
            };
            if scale != 1.0 {
                // keep the unscaled multiplier w / γ fixed
                gamma *= scale;
                w.re.iter_mut().chain(w.im.iter_mut()).for_each(|v| *v *= scale);
                window.clear();
            }
        }
        if config.record_objective {
            trace.push(objective);
        }
        window.push_back(objective);
        if window.len() > config.stagnation_window + 1 {
            window.pop_front();
        }
        // z ∈ C, so ‖Ax − y‖ ≤ radius + σ_max ‖x − z‖.
        let feasible = sigma_max * primal <= tol;
        let stalled = window.len() == config.stagnation_window + 1
            && (window[0] - objective).abs() <= config.stagnation * objective.max(1.0);
        if feasible && stalled {
            converged = true;
            break;
        }
    }
    let mut ax = SplitVec::zeros(m);
    SplitMatrix::adjoint_of(a).adjoint_apply(&x, &mut ax);
    let residual = distance(&ax, &SplitVec::from_complex(y));
    Ok(result(x.to_complex(), residual, iterations, converged && residual <= radius + tol, trace))
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
    fn huge_epsilon_gives_zero() {
        let a = gaussian(5, 9, 1);
        let y: Vec<Complex64> = (0..5).map(|i| c(i as f64, 1.0)).collect();
        let yn = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        let res = basis_pursuit_denoise(&a, &y, yn / 5f64.sqrt(), &SolverConfig::default()).unwrap();
        assert!(res.coefficients.iter().all(|v| *v == c(0.0, 0.0)));
        assert!(basis_pursuit_denoise(&a, &y, -1.0, &SolverConfig::default()).is_err());
    }

    #[test]
    fn zero_epsilon_is_basis_pursuit() {
        let a = gaussian(6, 12, 9);
        let mut truth = [c(0.0, 0.0); 12];
        truth[4] = c(1.0, 1.0);
        let y: Vec<Complex64> = (0..6).map(|i| a[(i, 4)] * truth[4]).collect();
        let cfg = SolverConfig::default();
        let bp = basis_pursuit(&a, &y, &cfg).unwrap();
        let dn = basis_pursuit_denoise(&a, &y, 0.0, &cfg).unwrap();
        assert_eq!(bp, dn);
    }

    #[test]
    fn noisy_constraint_is_met() {
        let a = gaussian(30, 60, 2);
        let mut truth = vec![c(0.0, 0.0); 60];
        truth[3] = c(1.0, 0.0);
        truth[17] = c(0.0, -2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y: Vec<Complex64> = (0..30)
            .map(|i| a[(i, 3)] * truth[3] + a[(i, 17)] * truth[17] + c(rng.gen::<f64>() - 0.5, 0.0) * 1e-3)
            .collect();
        let eps = 1e-3;
        let res = basis_pursuit_denoise(&a, &y, eps, &SolverConfig::default()).unwrap();
        assert!(res.converged);
        assert!(res.residual <= eps * 30f64.sqrt() * (1.0 + 1e-6) + 1e-8);
        let err: f64 = res.coefficients.iter().zip(&truth).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 0.05, "{err}");
    }
}
