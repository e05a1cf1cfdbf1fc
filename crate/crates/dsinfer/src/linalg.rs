//! Small dense linear-algebra helpers (Cholesky-based) for symmetric
//! positive-definite matrices. Everything here is O(p³) and meant for the
//! moderate dimensions this crate targets.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor `L` with `L·Lᵀ = a`.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let p = a.nrows();
    if a.ncols() != p {
        return Err(Error::dim("cholesky needs a square matrix"));
    }
    let mut l = Array2::<f64>::zeros((p, p));
    for i in 0..p {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 0.0 {
                    return Err(Error::degenerate(format!(
                        "matrix is not positive definite (pivot {s:.3e} at {i})"
                    )));
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solves `L·x = b` for lower-triangular `L`.
pub fn solve_lower(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let p = b.len();
    let mut x = b.clone();
    for i in 0..p {
        let mut s = x[i];
        for k in 0..i {
            s -= l[[i, k]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Solves `Lᵀ·x = b` for lower-triangular `L`.
pub fn solve_lower_t(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let p = b.len();
    let mut x = b.clone();
    for i in (0..p).rev() {
        let mut s = x[i];
        for k in i + 1..p {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(a: &Array2<f64>) -> Result<Array2<f64>> {
    let p = a.nrows();
    let l = cholesky(a)?;
    let mut inv = Array2::<f64>::zeros((p, p));
    let mut e = Array1::<f64>::zeros(p);
    for j in 0..p {
        e.fill(0.0);
        e[j] = 1.0;
        let z = solve_lower(&l, &e);
        let col = solve_lower_t(&l, &z);
        inv.column_mut(j).assign(&col);
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn inverse_of_two_by_two() {
        let a = array![[1.0, 0.3], [0.3, 1.0]];
        let inv = spd_inverse(&a).unwrap();
        let det = 1.0 - 0.09;
        assert_abs_diff_eq!(inv[[0, 0]], 1.0 / det, epsilon = 1e-12);
        assert_abs_diff_eq!(inv[[0, 1]], -0.3 / det, epsilon = 1e-12);
    }

    #[test]
    fn inverse_roundtrip() {
        let a = array![
            [4.0, 1.0, 0.5, 0.0],
            [1.0, 3.0, 0.2, 0.1],
            [0.5, 0.2, 2.0, 0.3],
            [0.0, 0.1, 0.3, 1.5]
        ];
        let inv = spd_inverse(&a).unwrap();
        let id = a.dot(&inv);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(id[[i, j]], want, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky(&a).is_err());
    }
}
