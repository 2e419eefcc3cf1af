//! Sylvester equation `X S = M X + R` by Bartels-Stewart on real Schur forms.

use nalgebra::{DMatrix, DVector, Schur};

use super::spectral::{eigenvalues, set_distance};
use crate::error::{dim_err, Error, Result};
use crate::scalar::Real;

/// Solves `X S = M X + R` for `X` (`M` is n x n, `S` is r x r, `R` is n x r).
///
/// Fails when `sigma(M)` and `sigma(S)` come within `100 eps (|M| + |S| + 1)`
/// of each other, where the solution stops being unique.
pub fn solve_sylvester<T: Real>(m: &DMatrix<T>, s: &DMatrix<T>, r: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = m.nrows();
    let k = s.nrows();
    if !m.is_square() || !s.is_square() || r.shape() != (n, k) {
        return Err(dim_err(format!(
            "Sylvester: M {:?}, S {:?}, R {:?}",
            m.shape(),
            s.shape(),
            r.shape()
        )));
    }
    if n == 0 || k == 0 {
        return Ok(DMatrix::zeros(n, k));
    }
    let scale = m.norm() + s.norm() + T::one();
    let sep = set_distance(&eigenvalues(m)?, &eigenvalues(s)?)?;
    if sep <= T::lit(100.0) * T::eps() * scale {
        return Err(Error::SpectraOverlap { separation: sep.as_f64() });
    }

    let iters = 1000 * n.max(k);
    let (um, tm) = Schur::try_new(m.clone(), T::eps(), iters).ok_or(Error::EigenFailure)?.unpack();
    let (vs, ts) = Schur::try_new(s.clone(), T::eps(), iters).ok_or(Error::EigenFailure)?.unpack();
    let rt = um.transpose() * r * &vs;

    let mut y = DMatrix::<T>::zeros(n, k);
    let mut j = 0;
    while j < k {
        let block = if j + 1 < k && ts[(j + 1, j)] != T::zero() { 2 } else { 1 };
        let mut rhs = rt.columns(j, block).into_owned();
        for i in 0..j {
            for b in 0..block {
                let coeff = ts[(i, j + b)];
                if coeff != T::zero() {
                    let yi = y.column(i).into_owned();
                    rhs.column_mut(b).axpy(-coeff, &yi, T::one());
                }
            }
        }
        // vec(Yb Tb - Tm Yb) = (Tb^T (x) I - I (x) Tm) vec(Yb)
        let tb = ts.view((j, j), (block, block));
        let dim = n * block;
        let mut sys = DMatrix::<T>::zeros(dim, dim);
        for p in 0..block {
            for q in 0..block {
                let coeff = tb[(q, p)];
                for i in 0..n {
                    sys[(p * n + i, q * n + i)] += coeff;
                }
            }
            sys.view_mut((p * n, p * n), (n, n)).zip_apply(&tm, |a, b| *a -= b);
        }
        let rhs_vec = DVector::from_column_slice(rhs.as_slice());
        let sol = sys
            .lu()
            .solve(&rhs_vec)
            .ok_or_else(|| Error::Singular("Sylvester block system".into()))?;
        for b in 0..block {
            y.column_mut(j + b).copy_from(&sol.rows(b * n, n));
        }
        j += block;
    }
    Ok(&um * y * vs.transpose())
}

/// Continuous Lyapunov equation `A^T X + X A + Q = 0`.
pub fn solve_lyapunov<T: Real>(a: &DMatrix<T>, q: &DMatrix<T>) -> Result<DMatrix<T>> {
    let x = solve_sylvester(&(-a.transpose()), a, &(-q))?;
    Ok((&x + x.transpose()) * T::lit(0.5))
}

/// `|X S - M X - R|_F`.
pub fn sylvester_residual<T: Real>(m: &DMatrix<T>, s: &DMatrix<T>, r: &DMatrix<T>, x: &DMatrix<T>) -> T {
    (x * s - m * x - r).norm()
}
