//! Small dense helpers that the solver needs and `ndarray` does not ship.

use ndarray::{Array1, Array2, ArrayBase, Data, Dimension};

use crate::error::{GlocalError, Result};

/// Squared Frobenius norm.
pub fn sq_norm<S, D>(a: &ArrayBase<S, D>) -> f64
where
    S: Data<Elem = f64>,
    D: Dimension,
{
    a.iter().map(|x| x * x).sum()
}

/// Frobenius inner product `<a, b>`.
pub fn inner<S, T, D>(a: &ArrayBase<S, D>, b: &ArrayBase<T, D>) -> f64
where
    S: Data<Elem = f64>,
    T: Data<Elem = f64>,
    D: Dimension,
{
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// In-place lower Cholesky factorisation of a symmetric positive definite
/// matrix. Fails when a pivot drops below a relative tolerance.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(GlocalError::Shape(format!(
            "cholesky needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let scale = (0..n).map(|i| a[[i, i]].abs()).fold(0.0_f64, f64::max);
    let tiny = f64::EPSILON * scale.max(f64::MIN_POSITIVE) * n as f64;
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for p in 0..j {
            d -= l[[j, p]] * l[[j, p]];
        }
        // also catches NaN
        if d.is_nan() || d <= tiny {
            return Err(GlocalError::Singular(format!(
                "pivot {j} is {d:e} (matrix not positive definite)"
            )));
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for p in 0..j {
                s -= l[[i, p]] * l[[j, p]];
            }
            l[[i, j]] = s / d;
        }
    }
    Ok(l)
}

/// Solve `L Lᵀ x = b` given the Cholesky factor `L`.
pub fn cholesky_solve(l: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut y = b.clone();
    for i in 0..n {
        let mut s = y[i];
        for p in 0..i {
            s -= l[[i, p]] * y[p];
        }
        y[i] = s / l[[i, i]];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for p in (i + 1)..n {
            s -= l[[p, i]] * y[p];
        }
        y[i] = s / l[[i, i]];
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn solves_spd_system() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0]];
        let x = array![1.0, -2.0, 0.5];
        let b = a.dot(&x);
        let l = cholesky(&a).unwrap();
        let got = cholesky_solve(&l, &b);
        for (g, e) in got.iter().zip(x.iter()) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_singular() {
        let a = array![[1.0, 1.0], [1.0, 1.0]];
        assert!(matches!(cholesky(&a), Err(GlocalError::Singular(_))));
        assert!(cholesky(&Array2::zeros((2, 2))).is_err());
    }
}
