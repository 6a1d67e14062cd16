use super::{lu_solve_with_residual, SOLVE_RESIDUAL_LIMIT};
use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Outcome of an invertibility check. A failed check is reported, not
/// raised.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    /// LU factorization produced a finite solution.
    pub factorized: bool,
    /// Relative residual of solving against the identity.
    pub residual: f64,
    /// Smallest singular value of the checked matrix.
    pub min_singular: f64,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.factorized && self.residual < SOLVE_RESIDUAL_LIMIT && self.min_singular > 0.0
    }
}

fn report(matrix: &Mat) -> ConditionReport {
    let eye = Mat::identity(matrix.rows());
    let (factorized, residual) = match lu_solve_with_residual(matrix, &eye) {
        Ok((_, r)) => (true, r),
        Err(_) => (false, f64::INFINITY),
    };
    let min_singular = matrix
        .to_nalgebra()
        .singular_values()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    ConditionReport {
        factorized,
        residual,
        min_singular,
    }
}

/// Checks that `(1 − α)N − I` is invertible.
pub fn check_lemma1(n: &Mat, alpha: f64) -> Result<ConditionReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha {alpha} outside (0,1)")));
    }
    let m = n.scale(1.0 - alpha).sub(&Mat::identity(n.rows()));
    Ok(report(&m))
}

/// Checks that `ΛN + I` is invertible for a diagonal `Λ` given by `lambda`.
pub fn check_lemma2(n: &Mat, lambda: &[f64]) -> Result<ConditionReport> {
    if lambda.len() != n.rows() {
        return Err(Error::shape("lemma2", format!("{} entries for {} nodes", lambda.len(), n.rows())));
    }
    if let Some(v) = lambda.iter().find(|&&v| !(v > 0.0 && v < 1.0)) {
        return Err(Error::Domain(format!("Λ entry {v} outside (0,1)")));
    }
    let m = n.scale_rows(lambda).add(&Mat::identity(n.rows()));
    Ok(report(&m))
}
