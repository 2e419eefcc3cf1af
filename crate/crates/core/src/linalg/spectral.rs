//! Eigenvalues, rank decisions and set distances.

use nalgebra::{Complex, DMatrix, Schur};

use crate::error::{Error, Result};
use crate::scalar::{modulus, Real};

/// Relative rank threshold factor: a singular value counts as zero when it is
/// below `DEFAULT_RANK_TOL * max(rows, cols) * sigma_max`.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

/// Eigenvalues of a real square matrix via the real Schur form.
pub fn eigenvalues<T: Real>(m: &DMatrix<T>) -> Result<Vec<Complex<T>>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("eigenvalues of a {}x{} matrix", m.nrows(), m.ncols())));
    }
    if m.is_empty() {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), T::eps(), 1000 * m.nrows()).ok_or(Error::EigenFailure)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest real part of the spectrum (`-inf` for an empty matrix).
pub fn spectral_abscissa<T: Real>(m: &DMatrix<T>) -> Result<T> {
    Ok(eigenvalues(m)?
        .into_iter()
        .map(|z| z.re)
        .fold(T::min_value().unwrap_or(-T::max_value().unwrap()), |a, b| a.max(b)))
}

/// True iff every eigenvalue satisfies `Re < -margin`.
pub fn is_hurwitz<T: Real>(m: &DMatrix<T>, margin: T) -> Result<bool> {
    Ok(spectral_abscissa(m)? < -margin)
}

/// `min |s1 - s2|` over all pairs.
pub fn set_distance<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut best = T::max_value().unwrap();
    for x in a {
        for y in b {
            let d = modulus(x - y);
            if d < best {
                best = d;
            }
        }
    }
    Ok(best)
}

/// Singular values of a complex matrix, largest first.
pub fn singular_values_complex<T: Real>(m: &DMatrix<Complex<T>>) -> Vec<T> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<T> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

/// Singular values of a real matrix, largest first.
pub fn singular_values<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<T> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    sv
}

/// Number of singular values above `rel_tol * max(dim) * sigma_max`.
pub fn rank_from_singular_values<T: Real>(sv: &[T], rows: usize, cols: usize, rel_tol: T) -> usize {
    let Some(&smax) = sv.first() else { return 0 };
    if smax == T::zero() {
        return 0;
    }
    let thresh = rel_tol * T::from_usize(rows.max(cols)).unwrap() * smax;
    sv.iter().filter(|&&s| s > thresh).count()
}

pub fn rank_complex<T: Real>(m: &DMatrix<Complex<T>>, rel_tol: T) -> usize {
    rank_from_singular_values(&singular_values_complex(m), m.nrows(), m.ncols(), rel_tol)
}

pub fn rank<T: Real>(m: &DMatrix<T>, rel_tol: T) -> usize {
    rank_from_singular_values(&singular_values(m), m.nrows(), m.ncols(), rel_tol)
}

/// Promotes a real matrix to complex.
pub fn complexify<T: Real>(m: &DMatrix<T>) -> DMatrix<Complex<T>> {
    m.map(|x| Complex::new(x, T::zero()))
}

/// Sorts a conjugate-closed list so each entry with positive imaginary part
/// is followed by its conjugate; real entries come last. Imaginary parts
/// below `tol` are snapped to zero and pairs are made exact conjugates.
pub fn conjugate_pairs<T: Real>(values: &[Complex<T>], tol: T) -> Result<Vec<Complex<T>>> {
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    let mut real = Vec::new();
    for &z in values {
        if z.im.abs() <= tol {
            real.push(Complex::new(z.re, T::zero()));
        } else if z.im > T::zero() {
            upper.push(z);
        } else {
            lower.push(z);
        }
    }
    if upper.len() != lower.len() {
        return Err(Error::NotConjugateSymmetric);
    }
    let by_desc = |a: &Complex<T>, b: &Complex<T>| {
        b.im.partial_cmp(&a.im)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.re.partial_cmp(&a.re).unwrap_or(std::cmp::Ordering::Equal))
    };
    upper.sort_by(by_desc);
    let mut out = Vec::with_capacity(values.len());
    for u in upper {
        // closest conjugate partner
        let (idx, d) = lower
            .iter()
            .enumerate()
            .map(|(i, l)| (i, modulus(l - u.conj())))
            .fold((0, T::max_value().unwrap()), |acc, x| if x.1 < acc.1 { x } else { acc });
        if d > tol.max(T::eps().sqrt()) * (T::one() + modulus(u)) {
            return Err(Error::NotConjugateSymmetric);
        }
        let l = lower.swap_remove(idx);
        let avg = Complex::new((u.re + l.re) / T::lit(2.0), (u.im - l.im) / T::lit(2.0));
        out.push(avg);
        out.push(avg.conj());
    }
    real.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap_or(std::cmp::Ordering::Equal));
    out.extend(real);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    #[test]
    fn hurwitz_examples() {
        assert!(is_hurwitz(&dmatrix![-1.0, 0.0; 0.0, -2.0], 0.1).unwrap());
        assert!(!is_hurwitz(&dmatrix![0.0, 1.0; -1.0, 0.0], 0.0).unwrap());
        assert!(!is_hurwitz(&dmatrix![-1.0, 0.0; 0.0, -2.0], 1.5).unwrap());
    }

    #[test]
    fn rotation_eigenvalues() {
        let mut ev = eigenvalues(&dmatrix![0.0, 2.0; -2.0, 0.0]).unwrap();
        ev.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert!((ev[0] - c(0.0, -2.0)).norm() < 1e-12);
        assert!((ev[1] - c(0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn distance_examples() {
        assert_eq!(set_distance(&[c(0.0, 0.0)], &[c(3.0, 4.0)]).unwrap(), 5.0);
        assert_eq!(set_distance(&[c(0.0, 1.0), c(0.0, -1.0)], &[c(0.0, 2.0)]).unwrap(), 1.0);
        assert_eq!(set_distance(&[c(1.0, 1.0), c(7.0, 0.0)], &[c(7.0, 0.0)]).unwrap(), 0.0);
        assert!(matches!(set_distance::<f64>(&[], &[c(1.0, 0.0)]), Err(Error::EmptySet)));
    }

    #[test]
    fn rank_threshold() {
        let m = dmatrix![1.0, 2.0; 2.0, 4.0 + 1e-14];
        assert_eq!(rank(&m, DEFAULT_RANK_TOL), 1);
        assert_eq!(rank(&DMatrix::<f64>::identity(3, 3), DEFAULT_RANK_TOL), 3);
        assert_eq!(rank(&DMatrix::<f64>::zeros(2, 3), DEFAULT_RANK_TOL), 0);
    }

    #[test]
    fn pairs_are_ordered() {
        let p = conjugate_pairs(&[c(0.0, -2.0), c(1.0, 0.0), c(0.0, 2.0), c(0.0, 1e-15)], 1e-12).unwrap();
        assert_eq!(p, vec![c(0.0, 2.0), c(0.0, -2.0), c(1.0, 0.0), c(0.0, 0.0)]);
        assert!(conjugate_pairs(&[c(0.0, 1.0)], 1e-12).is_err());
    }
}
