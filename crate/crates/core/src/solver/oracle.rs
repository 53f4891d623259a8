//! Exact ℓ1 minimization for tiny real systems by enumerating supports.
//!
//! The real program min ‖z‖₁ s.t. Az = y is a linear program whose optimal
//! set contains a basic solution, i.e. one supported on a set of linearly
//! independent columns. Enumerating every independent column set of size at
//! most rank(A), solving for the unique coefficients on it and keeping the
//! feasible candidate of least ℓ1 norm therefore returns the exact optimum.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const MAX_COLS: usize = 16;
const MAX_ROWS: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSolution {
    pub coefficients: Vec<f64>,
    pub objective: f64,
    /// All optimal basic solutions coincide.
    pub unique: bool,
    /// Feasible basic solutions examined.
    pub candidates: usize,
}

/// Exact minimizer over supports of size at most `s_max` (pass m for the
/// unrestricted optimum).
pub fn oracle_bp(a: &DMatrix<f64>, y: &[f64], s_max: usize) -> Result<OracleSolution> {
    let (m, n) = a.shape();
    if n > MAX_COLS || m > MAX_ROWS {
        return Err(Error::Budget { needed: (m.max(1) * n) as u128, budget: (MAX_ROWS * MAX_COLS) as u128 });
    }
    if y.len() != m {
        return Err(Error::Dimension(format!("y has {} entries, A has {m} rows", y.len())));
    }
    let yv = DVector::from_column_slice(y);
    let y_norm = yv.norm();
    let feas_tol = 1e-10 * (1.0 + y_norm) * (1.0 + a.norm());
    if y_norm == 0.0 {
        return Ok(OracleSolution { coefficients: vec![0.0; n], objective: 0.0, unique: true, candidates: 1 });
    }
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs()));

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut optimal: Vec<Vec<f64>> = Vec::new();
    let mut candidates = 0;
    for mask in 1u32..(1u32 << n) {
        let size = mask.count_ones() as usize;
        if size > s_max.min(m) {
            continue;
        }
        let cols: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
        let sub = a.select_columns(cols.iter());
        let svd = sub.clone().svd(true, true);
        let smax = svd.singular_values.max();
        if svd.singular_values.min() <= 1e-12 * smax.max(scale) {
            continue; // dependent columns: not a basic solution
        }
        let coef = match svd.solve(&yv, 0.0) {
            Ok(c) => c,
            Err(_) => continue,
        };
        if (&sub * &coef - &yv).norm() > feas_tol {
            continue;
        }
        candidates += 1;
        let mut z = vec![0.0; n];
        for (k, &j) in cols.iter().enumerate() {
            z[j] = coef[k];
        }
        let obj: f64 = z.iter().map(|v| v.abs()).sum();
        match &best {
            Some((b, _)) if obj > *b + 1e-9 * b.max(1.0) => {}
            Some((b, _)) if obj >= *b - 1e-9 * b.max(1.0) => optimal.push(z),
            _ => {
                // strictly better: drop previous ties that are no longer optimal
                optimal.retain(|o| o.iter().map(|v| v.abs()).sum::<f64>() <= obj + 1e-9 * obj.max(1.0));
                optimal.push(z.clone());
                best = Some((obj, z));
            }
        }
    }
    let (objective, coefficients) = best.ok_or(Error::Infeasible(y_norm))?;
    let unique = optimal.iter().all(|o| {
        o.iter().zip(&coefficients).all(|(u, v)| (u - v).abs() <= 1e-9 * (1.0 + v.abs()))
    });
    Ok(OracleSolution { coefficients, objective, unique, candidates })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_invertible_system() {
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 3.0]);
        let y = [1.0, 2.0, 3.0];
        let sol = oracle_bp(&a, &y, 3).unwrap();
        let exact = a.clone().lu().solve(&DVector::from_column_slice(&y)).unwrap();
        for (u, v) in sol.coefficients.iter().zip(exact.iter()) {
            assert!((u - v).abs() < 1e-12);
        }
        assert!(sol.unique);
    }

    #[test]
    fn single_column_measurement() {
        let a = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 1.0, 0.5, 0.0, 1.0, 1.0, -0.5]);
        // y = column 2 = e0 + e1, but z = e2 has ℓ1 norm 1 < 2
        let sol = oracle_bp(&a, &[1.0, 1.0], 2).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-12);
        assert!((sol.coefficients[2] - 1.0).abs() < 1e-12);
        assert!(sol.unique);
    }

    #[test]
    fn ties_are_not_unique() {
        // a third column equal to e0 + e1 gives a unique optimum of norm 1
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        let sol = oracle_bp(&a, &[1.0, 1.0], 2).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-12);
        // with (e0 + e1)/2 instead, (1, 1, 0) and (0, 0, 2) tie at norm 2
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.5, 0.0, 1.0, 0.5]);
        let sol = oracle_bp(&a, &[1.0, 1.0], 2).unwrap();
        assert!((sol.objective - 2.0).abs() < 1e-12);
        assert!(!sol.unique);
    }

    #[test]
    fn limits() {
        assert!(oracle_bp(&DMatrix::zeros(9, 10), &[0.0; 9], 2).is_err());
        assert!(oracle_bp(&DMatrix::zeros(2, 17), &[0.0; 2], 2).is_err());
        let z = oracle_bp(&DMatrix::from_element(2, 3, 1.0), &[0.0, 0.0], 2).unwrap();
        assert_eq!(z.objective, 0.0);
        // inconsistent system
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(oracle_bp(&a, &[1.0, 2.0], 2).is_err());
    }
}
