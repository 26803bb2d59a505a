//! Thomas algorithm for tridiagonal systems.

use crate::error::{Error, Result};

/// Solves `A x = rhs` where `A` has sub-diagonal `lower` (length n-1),
/// diagonal `diag` (length n) and super-diagonal `upper` (length n-1).
///
/// No pivoting; stable for diagonally dominant or symmetric positive
/// definite matrices.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Ok(vec![]);
    }
    if lower.len() + 1 != n || upper.len() + 1 != n || rhs.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: rhs.len() });
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut denom = diag[0];
    if denom == 0.0 {
        return Err(Error::InvalidArgument("singular tridiagonal system".into()));
    }
    if n > 1 {
        c[0] = upper[0] / denom;
    }
    d[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag[i] - lower[i - 1] * c[i - 1];
        if denom == 0.0 {
            return Err(Error::InvalidArgument("singular tridiagonal system".into()));
        }
        if i < n - 1 {
            c[i] = upper[i] / denom;
        }
        d[i] = (rhs[i] - lower[i - 1] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_system() {
        // [2 -1 0; -1 2 -1; 0 -1 2] x = [1 0 1] -> x = [1 1 1]
        let x = solve_tridiagonal(&[-1.0, -1.0], &[2.0, 2.0, 2.0], &[-1.0, -1.0], &[1.0, 0.0, 1.0]).unwrap();
        for v in x {
            assert!((v - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn scalar_and_empty() {
        assert_eq!(solve_tridiagonal(&[], &[4.0], &[], &[2.0]).unwrap(), vec![0.5]);
        assert!(solve_tridiagonal(&[], &[], &[], &[]).unwrap().is_empty());
        assert!(solve_tridiagonal(&[], &[0.0], &[], &[1.0]).is_err());
        assert!(solve_tridiagonal(&[1.0], &[1.0], &[], &[1.0]).is_err());
    }
}
