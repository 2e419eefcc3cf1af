//! Minimal polynomial of a square matrix from the first linear dependency
//! among its powers.

use nalgebra::{Complex, DMatrix, DVector};

use super::spectral::{conjugate_pairs, eigenvalues, singular_values};
use crate::error::{dim_err, Error, Result};
use crate::scalar::Real;

/// Monic minimal polynomial `s^k + c_1 s^(k-1) + ... + c_k` with its roots.
#[derive(Clone, Debug, PartialEq)]
pub struct MinimalPolynomial<T: Real> {
    pub degree: usize,
    /// `[c_1, ..., c_k]`.
    pub coeffs: Vec<T>,
    /// Roots with multiplicity, conjugate pairs adjacent (positive imaginary
    /// part first), real roots last.
    pub roots: Vec<Complex<T>>,
}

/// Companion matrix with ones on the superdiagonal and last row
/// `[-c_k, ..., -c_1]`.
pub(crate) fn companion<T: Real>(c: &[T]) -> DMatrix<T> {
    let k = c.len();
    let mut g = DMatrix::zeros(k, k);
    for i in 0..k.saturating_sub(1) {
        g[(i, i + 1)] = T::one();
    }
    for j in 0..k {
        g[(k - 1, j)] = -c[k - 1 - j];
    }
    g
}

/// Computes the minimal polynomial of `s`.
///
/// The degree is the first `k` for which `vec(I), vec(S), ..., vec(S^k)` are
/// linearly dependent. Dependency is declared when the smallest singular
/// value of the column-normalized power matrix is below
/// `tol * max(dim) * sigma_max`; a ratio between that threshold and
/// `sqrt(tol)` is too close to call and is reported as inconclusive.
pub fn minimal_polynomial<T: Real>(s: &DMatrix<T>, tol: T) -> Result<MinimalPolynomial<T>> {
    let r = s.nrows();
    if !s.is_square() || r == 0 {
        return Err(dim_err(format!("minimal polynomial of a {:?} matrix", s.shape())));
    }
    let scale = s.norm();
    if scale == T::zero() {
        return Ok(MinimalPolynomial {
            degree: 1,
            coeffs: vec![T::zero()],
            roots: vec![Complex::new(T::zero(), T::zero())],
        });
    }
    let sn = s / scale;
    let band = tol.sqrt();

    let mut powers: Vec<DVector<T>> = vec![DVector::from_column_slice(DMatrix::<T>::identity(r, r).as_slice())];
    let mut current = DMatrix::<T>::identity(r, r);
    for k in 1..=r {
        current = &current * &sn;
        powers.push(DVector::from_column_slice(current.as_slice()));

        let mut v = DMatrix::<T>::zeros(r * r, k + 1);
        for (j, p) in powers.iter().enumerate() {
            let norm = p.norm();
            if norm > T::zero() {
                v.set_column(j, &(p / norm));
            }
        }
        let sv = singular_values(&v);
        let smax = sv[0];
        let smin = *sv.last().unwrap();
        let ratio = smin / smax;
        let thresh = tol * T::from_usize((r * r).max(k + 1)).unwrap();
        if ratio <= thresh {
            let coeffs = dependency_coeffs(&powers, scale)?;
            let roots = conjugate_pairs(&eigenvalues(&companion(&coeffs))?, T::eps().sqrt() * (T::one() + scale))?;
            return Ok(MinimalPolynomial {
                degree: k,
                coeffs,
                roots,
            });
        }
        if ratio < band || k == r {
            return Err(Error::RankInconclusive {
                degree: k,
                ratio: ratio.as_f64(),
                tol: thresh.as_f64(),
                band: band.as_f64(),
            });
        }
    }
    unreachable!("Cayley-Hamilton bounds the degree by the dimension")
}

/// Least-squares `c` with `P_k + c_1 P_(k-1) + ... + c_k P_0 = 0` on the
/// normalized powers, rescaled to the original matrix.
fn dependency_coeffs<T: Real>(powers: &[DVector<T>], scale: T) -> Result<Vec<T>> {
    let k = powers.len() - 1;
    let rows = powers[0].len();
    let mut lhs = DMatrix::<T>::zeros(rows, k);
    for j in 0..k {
        lhs.set_column(j, &powers[k - 1 - j]);
    }
    let rhs = -&powers[k];
    let sol = lhs
        .svd(true, true)
        .solve(&rhs, T::eps() * T::lit(100.0))
        .map_err(|e| Error::Singular(e.to_string()))?;
    let mut factor = T::one();
    Ok((0..k)
        .map(|j| {
            factor *= scale;
            sol[j] * factor
        })
        .collect())
}
