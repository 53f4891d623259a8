//! ℓ1 recovery: equality-constrained basis pursuit, its noise-aware variant,
//! and an exhaustive oracle for tiny real instances.

mod bp;
mod bpdn;
pub(crate) mod kernel;
mod oracle;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bp::{basis_pursuit, BasisPursuit};
pub use bpdn::basis_pursuit_denoise;
pub use oracle::{oracle_bp, OracleSolution};

pub const DEFAULT_RECOVERY_TOL: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Relative primal feasibility: ‖Az − y‖ ≤ feasibility · (1 + ‖y‖).
    pub feasibility: f64,
    /// Relative change of ‖z‖₁ over `stagnation_window` iterations.
    pub stagnation: f64,
    pub stagnation_window: usize,
    /// Douglas–Rachford relaxation in (0, 2).
    pub relaxation: f64,
    /// Multiplies the default shrinkage step ‖x_f‖ / √N.
    pub threshold_scale: f64,
    /// Keep ‖z_k‖₁ for every iteration in the result.
    pub record_objective: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50_000,
            feasibility: 1e-9,
            stagnation: 1e-10,
            stagnation_window: 100,
            relaxation: 1.6,
            threshold_scale: 1.0,
            record_objective: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("solver config: {what}")));
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive");
        }
        if !(self.feasibility > 0.0 && self.stagnation > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.stagnation_window == 0 {
            return bad("stagnation_window must be positive");
        }
        if !(self.relaxation > 0.0 && self.relaxation < 2.0) {
            return bad("relaxation must lie in (0, 2)");
        }
        if !(self.threshold_scale > 0.0 && self.threshold_scale.is_finite()) {
            return bad("threshold_scale must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    pub coefficients: Vec<Complex64>,
    /// ‖c♯‖₁ = Σ |c♯_j|.
    pub objective: f64,
    /// ‖A c♯ − y‖₂.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// σ_max / σ_min of A restricted to its row space, when available.
    pub condition: Option<f64>,
    /// Power-iteration estimate of ‖A‖₂.
    pub operator_norm: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub objective_trace: Vec<f64>,
}

/// True iff ‖c − c♯‖₂ ≤ tol · ‖c‖₂.
pub fn recovered(c: &[Complex64], c_sharp: &[Complex64], tol: f64) -> Result<bool> {
    if c.len() != c_sharp.len() {
        return Err(Error::Dimension(format!("vectors of length {} and {}", c.len(), c_sharp.len())));
    }
    let err: f64 = c.iter().zip(c_sharp).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let scale: f64 = c.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    Ok(err <= tol * scale)
}

pub(crate) fn l1(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovery_criterion() {
        let c = vec![Complex64::new(3.0, 0.0), Complex64::new(0.0, 4.0)];
        assert!(recovered(&c, &c, DEFAULT_RECOVERY_TOL).unwrap());
        assert!(!recovered(&c, &[Complex64::new(0.0, 0.0); 2], DEFAULT_RECOVERY_TOL).unwrap());
        // ‖c‖ = 5, so a perturbation of exactly 5 · 2⁻⁴ sits on the boundary
        let tol = 0.0625;
        let mut d = c.clone();
        d[0].re += 5.0 * tol;
        assert!(recovered(&c, &d, tol).unwrap());
        d[0].re += 1e-12;
        assert!(!recovered(&c, &d, tol).unwrap());
        assert!(recovered(&c, &c[..1], tol).is_err());
    }

    #[test]
    fn config_checks() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig { relaxation: 2.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { threshold_scale: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let parsed: SolverConfig = serde_json::from_str(r#"{"max_iterations": 10}"#).unwrap();
        assert_eq!(parsed.max_iterations, 10);
        assert_eq!(parsed.relaxation, 1.6);
    }
}
