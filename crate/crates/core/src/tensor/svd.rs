//! Singular values via one-sided Jacobi.
//!
//! The matrix is copied (transposed when wider than tall) and its columns are
//! orthogonalized by Jacobi plane rotations; the singular values are the final
//! column norms. Rotations stop once every pair satisfies
//! `|⟨cp, cq⟩| <= TOL * ‖cp‖ ‖cq‖`, which delivers at least ~1e-10 relative
//! accuracy on well-conditioned inputs.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const TOL: f64 = 1e-10;
const MAX_SWEEPS: usize = 100;

pub fn singular_values(a: &Tensor) -> Result<Vec<f64>> {
    if a.rank() != 2 {
        return Err(Error::Shape(format!("svd expects a matrix, got rank {}", a.rank())));
    }
    if !a.all_finite() {
        return Err(Error::Numeric("svd input contains non-finite entries".into()));
    }
    let work = if a.rows() >= a.cols() { a.clone() } else { a.transpose() };
    let m = work.rows();
    let n = work.cols();
    if n == 0 {
        return Ok(Vec::new());
    }
    // Columns as contiguous slices of the column-major buffer.
    let mut cols: Vec<Vec<f64>> = (0..n).map(|j| work.data()[j * m..(j + 1) * m].to_vec()).collect();

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&cols[p], &cols[q]);
                    let mut alpha = 0.0;
                    let mut beta = 0.0;
                    let mut gamma = 0.0;
                    for i in 0..m {
                        alpha += cp[i] * cp[i];
                        beta += cq[i] * cq[i];
                        gamma += cp[i] * cq[i];
                    }
                    (alpha, beta, gamma)
                };
                let scale = (alpha * beta).sqrt();
                if scale == 0.0 || gamma.abs() <= TOL * scale {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (left, right) = cols.split_at_mut(q);
                let cp = &mut left[p];
                let cq = &mut right[0];
                for i in 0..m {
                    let vp = cp[i];
                    let vq = cq[i];
                    cp[i] = c * vp - s * vq;
                    cq[i] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Numeric(format!("jacobi svd did not converge in {MAX_SWEEPS} sweeps")));
    }

    let mut values: Vec<f64> =
        cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    values.sort_by(|a, b| b.partial_cmp(a).unwrap());
    Ok(values)
}
