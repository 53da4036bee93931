//! Dense symmetric positive definite solves.
//!
//! Every linear system in this crate is of the form `(M^T M + c I) x = b`
//! with `c >= 0`, so a Cholesky factorization is all that is needed.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{AdpError, Result};
use crate::scalar::Real;

/// Lower-triangular Cholesky factor `L` with `L L^T = M`.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    factor: Array2<T>,
}

impl<T: Real> Cholesky<T> {
    /// Factorizes a symmetric matrix. Pivots below `n * eps * max|diag|`
    /// are reported as singular.
    pub fn new(matrix: ArrayView2<'_, T>, context: &str) -> Result<Self> {
        let n = matrix.nrows();
        if matrix.ncols() != n {
            return Err(AdpError::InvalidDimension(format!(
                "cholesky needs a square matrix, got {}x{}",
                n,
                matrix.ncols()
            )));
        }
        let max_diag = matrix
            .diag()
            .iter()
            .fold(T::zero(), |acc, &d| acc.max(d.abs()));
        let floor = T::from_usize_lossy(n.max(1)) * T::epsilon() * max_diag;

        let mut l = Array2::<T>::zeros((n, n));
        for j in 0..n {
            let mut d = matrix[[j, j]];
            for k in 0..j {
                d -= l[[j, k]] * l[[j, k]];
            }
            if !(d > floor) {
                return Err(AdpError::SingularMatrix {
                    context: format!("{context}: pivot {j} is {d:e}"),
                });
            }
            let d = d.sqrt();
            l[[j, j]] = d;
            for i in (j + 1)..n {
                let mut s = matrix[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / d;
            }
        }
        Ok(Self { factor: l })
    }

    pub fn dim(&self) -> usize {
        self.factor.nrows()
    }

    pub fn solve(&self, rhs: ArrayView1<'_, T>) -> Array1<T> {
        let n = self.dim();
        let l = &self.factor;
        let mut z = rhs.to_owned();
        for i in 0..n {
            let mut s = z[i];
            for k in 0..i {
                s -= l[[i, k]] * z[k];
            }
            z[i] = s / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in (i + 1)..n {
                s -= l[[k, i]] * z[k];
            }
            z[i] = s / l[[i, i]];
        }
        z
    }
}

/// Solves `(M + shift * I) x = rhs` for symmetric positive (semi)definite `M`.
pub fn solve_shifted_spd<T: Real>(
    matrix: ArrayView2<'_, T>,
    shift: T,
    rhs: ArrayView1<'_, T>,
    context: &str,
) -> Result<Array1<T>> {
    let mut shifted = matrix.to_owned();
    if shift != T::zero() {
        shifted.diag_mut().mapv_inplace(|d| d + shift);
    }
    Ok(Cholesky::new(shifted.view(), context)?.solve(rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_small_spd_system() {
        let m: Array2<f64> = array![[4.0, 1.0], [1.0, 3.0]];
        let x = solve_shifted_spd(m.view(), 0.0, array![1.0, 2.0].view(), "t").unwrap();
        let back = m.dot(&x);
        assert!((back[0] - 1.0).abs() < 1e-14);
        assert!((back[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn shift_is_applied_to_diagonal() {
        let m = Array2::<f64>::zeros((3, 3));
        let x = solve_shifted_spd(m.view(), 2.0, array![2.0, 4.0, 6.0].view(), "t").unwrap();
        for (v, e) in x.iter().zip([1.0, 2.0, 3.0]) {
            assert!((v - e).abs() < 1e-14);
        }
    }

    #[test]
    fn rank_deficient_is_singular() {
        let m = array![[1.0, 1.0], [1.0, 1.0]];
        let err = solve_shifted_spd(m.view(), 0.0, array![1.0, 1.0].view(), "gram").unwrap_err();
        assert!(matches!(err, AdpError::SingularMatrix { .. }));
    }
}
