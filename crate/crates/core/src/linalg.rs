//! Thin wrappers over LAPACK for the dense steps.

use ndarray::{Array1, Array2};
use ndarray_linalg::{EigVals, Solve, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

pub fn eigvals(m: &Array2<C64>) -> Result<Vec<C64>> {
    if m.is_empty() {
        return Ok(Vec::new());
    }
    m.eigvals()
        .map(|v| v.to_vec())
        .map_err(|e| Error::Linalg(e.to_string()))
}

pub fn solve(a: &Array2<C64>, b: &[C64]) -> Result<Vec<C64>> {
    let rhs = Array1::from(b.to_vec());
    a.solve(&rhs)
        .map(|v| v.to_vec())
        .map_err(|e| Error::Linalg(e.to_string()))
}

/// Singular values (descending) and the right singular vectors as rows of
/// `Vᴴ`.
pub fn svd(a: &Array2<C64>) -> Result<(Vec<f64>, Array2<C64>)> {
    let (_, s, vt) = a.svd(false, true).map_err(|e| Error::Linalg(e.to_string()))?;
    Ok((s.to_vec(), vt.expect("requested Vᴴ")))
}

/// Roots of `Σ coeffs[i] zⁱ` via the eigenvalues of the companion matrix.
pub fn poly_roots(coeffs: &[C64]) -> Result<Vec<C64>> {
    let mut c = coeffs.to_vec();
    while c.len() > 1 && c.last().is_some_and(|z| z.norm() == 0.0) {
        c.pop();
    }
    let deg = c.len() - 1;
    if deg == 0 {
        return Ok(Vec::new());
    }
    let lead = c[deg];
    let mut comp = Array2::from_elem((deg, deg), C64::new(0.0, 0.0));
    for i in 1..deg {
        comp[[i, i - 1]] = C64::new(1.0, 0.0);
    }
    for i in 0..deg {
        comp[[i, deg - 1]] = -c[i] / lead;
    }
    let mut roots = eigvals(&comp)?;
    // Newton polish for each root against the original coefficients.
    for r in roots.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = horner(&c, *r);
            if dp.norm() == 0.0 {
                break;
            }
            let step = p / dp;
            if !step.re.is_finite() || !step.im.is_finite() {
                break;
            }
            *r -= step;
        }
    }
    Ok(roots)
}

/// Value and derivative of a polynomial at `z`.
pub fn horner(coeffs: &[C64], z: C64) -> (C64, C64) {
    let mut p = C64::new(0.0, 0.0);
    let mut dp = C64::new(0.0, 0.0);
    for &a in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}
