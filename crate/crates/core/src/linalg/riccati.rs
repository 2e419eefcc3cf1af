//! Continuous-time algebraic Riccati equation and the stabilizing gains built
//! on it.
//!
//! The stabilizing solution is read off the stable invariant subspace of the
//! Hamiltonian `[[A, -B R^-1 B^T], [-Q, -A^T]]`, obtained from its matrix sign
//! function, then polished with Newton-Kleinman steps.

use nalgebra::DMatrix;

use super::pbh::{pbh_detectable, pbh_stabilizable};
use super::spectral::{eigenvalues, spectral_abscissa};
use super::sylvester::solve_lyapunov;
use crate::error::{dim_err, Error, Result};
use crate::scalar::Real;

const MAX_SIGN_ITERS: usize = 100;
const REFINE_STEPS: usize = 3;

fn inverse<T: Real>(m: &DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular(format!("{what} not invertible")))
}

/// Matrix sign function by the scaled Newton iteration.
fn matrix_sign<T: Real>(h: &DMatrix<T>) -> Result<DMatrix<T>> {
    let dim = T::from_usize(h.nrows()).unwrap();
    let tol = T::lit(10.0) * T::eps() * dim;
    let mut z = h.clone();
    let mut scaling = true;
    for _ in 0..MAX_SIGN_ITERS {
        let lu = z.clone().lu();
        let c = if scaling {
            // |det Z|^(-1/dim), through logs to stay finite
            let logdet = lu.u().diagonal().iter().fold(T::zero(), |acc, d| acc + d.abs().ln());
            (-logdet / dim).exp()
        } else {
            T::one()
        };
        let zinv = lu
            .try_inverse()
            .ok_or_else(|| Error::Riccati("singular iterate in sign iteration".into()))?;
        let next = (&z * c + zinv * (T::one() / c)) * T::lit(0.5);
        let change = (&next - &z).norm();
        let size = next.norm();
        z = next;
        if change <= tol * size {
            return Ok(z);
        }
        if change <= T::lit(1e-2) * size {
            scaling = false;
        }
        if change <= T::eps().sqrt() * size {
            // quadratic convergence: one more step lands at machine precision
            let zinv = inverse(&z, "sign iterate")?;
            return Ok((&z + zinv) * T::lit(0.5));
        }
    }
    Err(Error::Riccati("sign iteration did not converge".into()))
}

/// `A^T X + X A - X B R^-1 B^T X + Q`.
pub fn care_residual<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    q: &DMatrix<T>,
    r: &DMatrix<T>,
    x: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let g = b * inverse(r, "R")? * b.transpose();
    Ok(a.transpose() * x + x * a - x * g * x + q)
}

/// Unique stabilizing solution of `A^T X + X A - X B R^-1 B^T X + Q = 0`.
pub fn solve_care<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>, q: &DMatrix<T>, r: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = a.nrows();
    let m = b.ncols();
    if !a.is_square() || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(dim_err(format!(
            "CARE: A {:?}, B {:?}, Q {:?}, R {:?}",
            a.shape(),
            b.shape(),
            q.shape(),
            r.shape()
        )));
    }
    let rinv = inverse(r, "R")?;
    let g = b * &rinv * b.transpose();
    let mut h = DMatrix::<T>::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(a);
    h.view_mut((0, n), (n, n)).copy_from(&(-&g));
    h.view_mut((n, 0), (n, n)).copy_from(&(-q));
    h.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));

    let axis_distance = eigenvalues(&h)?
        .into_iter()
        .map(|z| z.re.abs())
        .fold(T::max_value().unwrap(), |acc, x| acc.min(x));
    if axis_distance <= T::eps().sqrt() * (T::one() + h.norm()) {
        return Err(Error::HamiltonianImaginaryAxis {
            distance: axis_distance.as_f64(),
        });
    }

    let w = matrix_sign(&h)?;
    // Stable subspace is ker(W + I): [W12; W22 + I] X = -[W11 + I; W21].
    let mut lhs = DMatrix::<T>::zeros(2 * n, n);
    let mut rhs = DMatrix::<T>::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w.view((n, n), (n, n)) + DMatrix::identity(n, n)));
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w.view((0, 0), (n, n)) + DMatrix::identity(n, n))));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w.view((n, 0), (n, n))));
    let svd = lhs.svd(true, true);
    let mut x = svd
        .solve(&rhs, T::eps() * T::lit(100.0))
        .map_err(|e| Error::Riccati(e.to_string()))?;
    x = (&x + x.transpose()) * T::lit(0.5);

    // Newton-Kleinman polish: each step solves a Lyapunov equation for the
    // current closed loop; keep the iterate only while the residual shrinks.
    let mut best = care_residual(a, b, q, r, &x)?.norm();
    for _ in 0..REFINE_STEPS {
        let k = -(&rinv * b.transpose() * &x);
        let ak = a + b * &k;
        if spectral_abscissa(&ak)? >= T::zero() {
            break;
        }
        let rhs = q + k.transpose() * r * &k;
        let Ok(next) = solve_lyapunov(&ak, &rhs) else { break };
        let res = care_residual(a, b, q, r, &next)?.norm();
        if res < best {
            best = res;
            x = next;
        } else {
            break;
        }
    }
    Ok(x)
}

/// LQR state feedback `K = -B^T X` (weights `Q = I`, `R = I`) with `A + B K`
/// Hurwitz.
pub fn stabilizing_state_gain<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> Result<DMatrix<T>> {
    if !pbh_stabilizable(a, b, T::zero())? {
        return Err(Error::NotStabilizable);
    }
    let n = a.nrows();
    let m = b.ncols();
    let x = solve_care(a, b, &DMatrix::identity(n, n), &DMatrix::identity(m, m))?;
    let k = -(b.transpose() * x);
    let abscissa = spectral_abscissa(&(a + b * &k))?;
    if abscissa >= T::zero() {
        return Err(Error::NotHurwitz {
            abscissa: abscissa.as_f64(),
        });
    }
    Ok(k)
}

/// Observer gain `L` with `A - L C` Hurwitz, by duality with
/// [`stabilizing_state_gain`].
pub fn stabilizing_observer_gain<T: Real>(a: &DMatrix<T>, c: &DMatrix<T>) -> Result<DMatrix<T>> {
    if !pbh_detectable(c, a, T::zero())? {
        return Err(Error::NotDetectable);
    }
    let k = stabilizing_state_gain(&a.transpose(), &c.transpose()).map_err(|e| match e {
        Error::NotStabilizable => Error::NotDetectable,
        other => other,
    })?;
    Ok(-k.transpose())
}
