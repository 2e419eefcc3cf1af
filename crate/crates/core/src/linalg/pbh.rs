//! Popov-Belevitch-Hautus rank tests for stabilizability and detectability.

use nalgebra::{Complex, DMatrix};

use super::spectral::{complexify, eigenvalues, rank_complex};
use crate::error::{dim_err, Result};
use crate::scalar::Real;

/// `(A, B)` is stabilizable iff `rank [A - lambda I | B] = n` at every
/// eigenvalue with `Re(lambda) >= -tol`.
pub fn pbh_stabilizable<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, tol: T) -> Result<bool> {
    let n = a.nrows();
    if !a.is_square() || b.nrows() != n {
        return Err(dim_err(format!("PBH: A {:?}, B {:?}", a.shape(), b.shape())));
    }
    let ac = complexify(a);
    let bc = complexify(b);
    for lambda in eigenvalues(a)? {
        if lambda.re < -tol {
            continue;
        }
        let mut pencil = DMatrix::<Complex<T>>::zeros(n, n + b.ncols());
        pencil.view_mut((0, 0), (n, n)).copy_from(&ac);
        for i in 0..n {
            pencil[(i, i)] -= lambda;
        }
        pencil.view_mut((0, n), (n, b.ncols())).copy_from(&bc);
        if rank_complex(&pencil, T::lit(super::spectral::DEFAULT_RANK_TOL)) < n {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Dual test: `(C, A)` detectable iff `(A^T, C^T)` stabilizable.
pub fn pbh_detectable<T: Real>(c: &DMatrix<T>, a: &DMatrix<T>, tol: T) -> Result<bool> {
    if c.ncols() != a.nrows() {
        return Err(dim_err(format!("PBH: C {:?}, A {:?}", c.shape(), a.shape())));
    }
    pbh_stabilizable(&a.transpose(), &c.transpose(), tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral::rank;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    #[test]
    fn stabilizable_examples() {
        let a = dmatrix![1.0, 0.0; 0.0, -1.0];
        assert!(pbh_stabilizable(&a, &dmatrix![1.0; 0.0], 0.0).unwrap());
        assert!(!pbh_stabilizable(&a, &dmatrix![0.0; 1.0], 0.0).unwrap());
        let rot = dmatrix![0.0, 1.6; -1.6, 0.0];
        assert!(pbh_stabilizable(&rot, &dmatrix![0.0; 1.0], 0.0).unwrap());
    }

    #[test]
    fn detectable_examples() {
        let rot = dmatrix![0.0, 1.6; -1.6, 0.0];
        assert!(pbh_detectable(&dmatrix![1.0, 0.0], &rot, 0.0).unwrap());
        let a = dmatrix![1.0, 0.0; 0.0, -1.0];
        assert!(!pbh_detectable(&dmatrix![0.0, 1.0], &a, 0.0).unwrap());
        assert!(pbh_detectable(&DMatrix::identity(2, 2), &a, 0.0).unwrap());
    }

    #[test]
    fn dimension_errors() {
        assert!(pbh_stabilizable(&DMatrix::<f64>::zeros(2, 2), &DMatrix::zeros(3, 1), 0.0).is_err());
        assert!(pbh_detectable(&DMatrix::<f64>::zeros(1, 3), &DMatrix::zeros(2, 2), 0.0).is_err());
    }

    fn controllability(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let n = a.nrows();
        let m = b.ncols();
        let mut out = DMatrix::zeros(n, n * m);
        let mut blk = b.clone();
        for k in 0..n {
            out.view_mut((0, k * m), (n, m)).copy_from(&blk);
            blk = a * blk;
        }
        out
    }

    fn small_system() -> impl Strategy<Value = (DMatrix<f64>, DMatrix<f64>)> {
        (1usize..=5, 1usize..=2).prop_flat_map(|(n, m)| {
            (
                proptest::collection::vec(prop_oneof![1 => Just(0.0), 3 => -2.0f64..2.0], n * n),
                proptest::collection::vec(prop_oneof![1 => Just(0.0), 1 => -2.0f64..2.0], n * m),
            )
                .prop_map(move |(av, bv)| (DMatrix::from_row_slice(n, n, &av), DMatrix::from_row_slice(n, m, &bv)))
        })
    }

    proptest! {
        // controllable implies stabilizable; both tests see the same pair
        #[test]
        fn controllable_implies_stabilizable((a, b) in small_system()) {
            let ctrb = controllability(&a, &b);
            if rank(&ctrb, 1e-8) == a.nrows() {
                prop_assert!(pbh_stabilizable(&a, &b, 0.0).unwrap());
            }
            let obsv = controllability(&a.transpose(), &b);
            if b.ncols() <= a.nrows() && rank(&obsv, 1e-8) == a.nrows() {
                prop_assert!(pbh_detectable(&b.transpose(), &a, 0.0).unwrap());
            }
        }

        // with every mode unstable, stabilizability and controllability coincide
        #[test]
        fn unstable_modes_need_full_controllability((a, b) in small_system()) {
            let n = a.nrows();
            let shifted = &a + DMatrix::<f64>::identity(n, n) * 20.0;
            // the shift leaves the Krylov subspace unchanged
            let ctrb_full = rank(&controllability(&a, &b), 1e-8) == n;
            prop_assert_eq!(pbh_stabilizable(&shifted, &b, 0.0).unwrap(), ctrb_full);
        }
    }
}
