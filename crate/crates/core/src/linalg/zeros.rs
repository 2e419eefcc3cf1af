//! Transmission zeros: points where the Rosenbrock pencil
//! `[[A - sI, B], [C, D]]` loses rank below `n + q`.

use nalgebra::{Complex, DMatrix};

use super::spectral::{complexify, conjugate_pairs, eigenvalues, rank_complex, set_distance, singular_values};
use crate::error::{Error, Result};
use crate::model::AgentModel;
use crate::scalar::{modulus, Real};

/// Transmission zeros of one agent, with the purely imaginary subset and the
/// separation radius used by the eigenvalue-estimate projection.
#[derive(Clone, Debug, PartialEq)]
pub struct ZeroStructure<T: Real> {
    pub zeros: Vec<Complex<T>>,
    pub imag_zeros: Vec<Complex<T>>,
    /// Zero until [`ZeroStructure::with_delta`] fills it in.
    pub delta: T,
}

impl<T: Real> ZeroStructure<T> {
    /// Zeros off the imaginary axis.
    pub fn off_axis_zeros(&self) -> Vec<Complex<T>> {
        self.zeros
            .iter()
            .filter(|z| !self.imag_zeros.contains(z))
            .copied()
            .collect()
    }

    /// Imaginary parts of the purely imaginary zeros.
    pub fn imag_zero_imags(&self) -> Vec<T> {
        self.imag_zeros.iter().map(|z| z.im).collect()
    }

    pub fn with_delta(mut self, exo_spectrum: &[Complex<T>]) -> Result<Self> {
        self.delta = compute_delta(exo_spectrum, &self)?;
        Ok(self)
    }
}

/// Three-case separation radius:
/// zero without imaginary-axis zeros; otherwise the distance from the
/// exosystem spectrum to those zeros, further capped by their distance to
/// the remaining zeros when there are any.
pub fn compute_delta<T: Real>(exo_spectrum: &[Complex<T>], zs: &ZeroStructure<T>) -> Result<T> {
    if exo_spectrum.is_empty() {
        return Err(Error::EmptySet);
    }
    if zs.imag_zeros.is_empty() {
        return Ok(T::zero());
    }
    let to_exo = set_distance(exo_spectrum, &zs.imag_zeros)?;
    let rest = zs.off_axis_zeros();
    if rest.is_empty() {
        Ok(to_exo)
    } else {
        Ok(to_exo.min(set_distance(&zs.imag_zeros, &rest)?))
    }
}

fn rosenbrock<T: Real>(m: &AgentModel<T>) -> (DMatrix<T>, DMatrix<T>) {
    let n = m.states();
    let (q, k) = (m.outputs(), m.inputs());
    let mut big = DMatrix::zeros(n + q, n + k);
    big.view_mut((0, 0), (n, n)).copy_from(&m.a);
    big.view_mut((0, n), (n, k)).copy_from(&m.b);
    big.view_mut((n, 0), (q, n)).copy_from(&m.c);
    big.view_mut((n, n), (q, k)).copy_from(&m.d);
    let mut e = DMatrix::zeros(n + q, n + k);
    for i in 0..n {
        e[(i, i)] = T::one();
    }
    (big, e)
}

fn pencil_at<T: Real>(m: &DMatrix<T>, e: &DMatrix<T>, s: Complex<T>) -> DMatrix<Complex<T>> {
    complexify(m) - complexify(e) * s
}

/// Rank of `M - s E` with the relative singular-value threshold `tol`.
pub fn pencil_rank<T: Real>(model: &AgentModel<T>, s: Complex<T>, tol: T) -> usize {
    let (m, e) = rosenbrock(model);
    rank_complex(&pencil_at(&m, &e, s), tol)
}

/// Removes the nilpotent part of `t` by repeated orthogonal deflation of
/// its kernel: with `V = [V0 V1]`, `V0` spanning `ker t`, the similarity
/// `V^T t V` has a zero first block column, so the remaining spectrum is
/// that of the trailing block. Kernel decisions use `tol * dim * |t|`.
fn deflate_nilpotent<T: Real>(t: &DMatrix<T>, tol: T) -> DMatrix<T> {
    let dim = t.nrows();
    let thresh = tol * T::from_usize(dim.max(1)).unwrap() * t.norm();
    let mut cur = t.clone();
    while cur.nrows() > 0 {
        let svd = cur.clone().svd(false, true);
        let v_t = svd.v_t.expect("right singular vectors requested");
        let sv = svd.singular_values;
        let null: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] <= thresh).collect();
        if null.is_empty() {
            break;
        }
        let mut order = null.clone();
        order.extend((0..sv.len()).filter(|i| !null.contains(i)));
        let v = v_t.transpose().select_columns(order.iter());
        let rotated = v.transpose() * &cur * &v;
        let k = null.len();
        cur = rotated.view((k, k), (cur.nrows() - k, cur.ncols() - k)).into_owned();
    }
    cur
}

/// Fixed irrational shifts; a pencil singular at all of them (and at the
/// complex probe) is treated as identically singular.
const SHIFTS: [f64; 4] = [0.618_033_988_7, -1.324_717_957_2, 2.236_067_977_5, -0.577_215_664_9];

/// Finite generalized eigenvalues of a square pencil `(M, E)` via the
/// shift-invert map: with `P0 = M - s0 E` invertible, every finite
/// eigenvalue `s` corresponds to the eigenvalue `1 / (s - s0)` of `P0^-1 E`
/// and infinite ones to its nilpotent part, which is deflated first.
/// Returns `None` if the pencil is singular at every shift.
fn square_pencil_candidates<T: Real>(m: &DMatrix<T>, e: &DMatrix<T>, tol: T) -> Result<Option<Vec<Complex<T>>>> {
    let dim = m.nrows();
    let scale = T::one() + m.norm();
    for &shift in &SHIFTS {
        let s0 = T::lit(shift) * scale;
        let p0 = m - e * s0;
        let sv = singular_values(&p0);
        if sv.is_empty() || *sv.last().unwrap() <= tol * T::from_usize(dim).unwrap() * sv[0] {
            continue;
        }
        let Some(inv) = p0.try_inverse() else { continue };
        let finite = deflate_nilpotent(&(inv * e), tol);
        let out = eigenvalues(&finite)?
            .into_iter()
            .map(|nu| Complex::new(s0, T::zero()) + nu.inv())
            .collect();
        return Ok(Some(out));
    }
    Ok(None)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Transmission zeros of `model`.
///
/// Square systems (`m = q`) use the generalized eigenvalues of the
/// Rosenbrock pencil directly. Wide systems (`m > q`) harvest candidates
/// from square column-subpencils. Every candidate is kept only if the full
/// pencil's SVD rank drops below `n + q` there. Tall systems (`m < q`) and
/// pencils singular everywhere are degenerate.
pub fn transmission_zeros<T: Real>(model: &AgentModel<T>, tol: T) -> Result<ZeroStructure<T>> {
    let n = model.states();
    let (q, k) = (model.outputs(), model.inputs());
    let full_rank = n + q;
    let (m, e) = rosenbrock(model);

    let probe = Complex::new(T::lit(0.377_964_473), T::lit(1.133_893_419)) * (T::one() + m.norm());
    if k < q || rank_complex(&pencil_at(&m, &e, probe), tol) < full_rank {
        return Err(Error::DegeneratePencil);
    }

    let mut candidates = None;
    if k == q {
        candidates = square_pencil_candidates(&m, &e, tol)?;
    } else {
        for cols in combinations(n + k, full_rank) {
            let ms = m.select_columns(cols.iter());
            let es = e.select_columns(cols.iter());
            if let Some(c) = square_pencil_candidates(&ms, &es, tol)? {
                candidates = Some(c);
                break;
            }
        }
    }
    let Some(candidates) = candidates else {
        return Err(Error::DegeneratePencil);
    };

    let verified: Vec<Complex<T>> = candidates
        .into_iter()
        .filter(|s| rank_complex(&pencil_at(&m, &e, *s), tol) < full_rank)
        .collect();
    let zeros = conjugate_pairs(&verified, T::eps().sqrt() * (T::one() + m.norm()))?;
    let imag_tol = tol.sqrt();
    let imag_zeros = zeros
        .iter()
        .filter(|z| z.re.abs() <= imag_tol * (T::one() + modulus(**z)))
        .map(|z| Complex::new(T::zero(), z.im))
        .collect::<Vec<_>>();
    // snap the imaginary ones so membership tests against `zeros` are exact
    let zeros = zeros
        .into_iter()
        .map(|z| {
            if z.re.abs() <= imag_tol * (T::one() + modulus(z)) {
                Complex::new(T::zero(), z.im)
            } else {
                z
            }
        })
        .collect();
    Ok(ZeroStructure {
        zeros,
        imag_zeros,
        delta: T::zero(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn siso(a: DMatrix<f64>, b: DMatrix<f64>, cc: DMatrix<f64>, d: f64) -> AgentModel<f64> {
        let n = a.nrows();
        AgentModel::new(a, b, cc, dmatrix![d], DMatrix::zeros(n, 1), DMatrix::zeros(1, 1)).unwrap()
    }

    #[test]
    fn rotation_agent_has_no_zeros() {
        let m = siso(dmatrix![0.0, 1.6; -1.6, 0.0], dmatrix![0.0; 1.0], dmatrix![1.0, 0.0], 0.0);
        let zs = transmission_zeros(&m, 1e-8).unwrap();
        assert!(zs.zeros.is_empty());
        assert!(zs.imag_zeros.is_empty());
    }

    #[test]
    fn nonminimum_phase_zero() {
        // (s - 1) / (s + 2)^2 in controllable canonical form
        let m = siso(dmatrix![0.0, 1.0; -4.0, -4.0], dmatrix![0.0; 1.0], dmatrix![-1.0, 1.0], 0.0);
        let zs = transmission_zeros(&m, 1e-8).unwrap();
        assert_eq!(zs.zeros.len(), 1);
        assert!((zs.zeros[0] - c(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn invertible_feedthrough_matches_schur_complement() {
        let a = dmatrix![0.0, 1.0, 0.0; 0.0, 0.0, 1.0; -1.0, -3.0, -2.0];
        let b = dmatrix![0.0; 1.0; 1.0];
        let cc = dmatrix![1.0, 2.0, 0.5];
        let d = 2.0;
        let m = siso(a.clone(), b.clone(), cc.clone(), d);
        let zs = transmission_zeros(&m, 1e-8).unwrap();
        let mut expected = eigenvalues(&(&a - &b * &cc / d)).unwrap();
        expected.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap().then(x.im.partial_cmp(&y.im).unwrap()));
        let mut got = zs.zeros.clone();
        got.sort_by(|x, y| x.re.partial_cmp(&y.re).unwrap().then(x.im.partial_cmp(&y.im).unwrap()));
        assert_eq!(got.len(), 3);
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).norm() < 1e-9, "{g} vs {e}");
            assert!(pencil_rank(&m, *g, 1e-8) < 4);
        }
    }

    #[test]
    fn imaginary_axis_zeros_classified() {
        // (s^2 + 1) / (s + 1)^3
        let a = dmatrix![0.0, 1.0, 0.0; 0.0, 0.0, 1.0; -1.0, -3.0, -3.0];
        let m = siso(a, dmatrix![0.0; 0.0; 1.0], dmatrix![1.0, 0.0, 1.0], 0.0);
        let zs = transmission_zeros(&m, 1e-8).unwrap();
        assert_eq!(zs.zeros.len(), 2);
        assert_eq!(zs.imag_zeros.len(), 2);
        let mut imags = zs.imag_zero_imags();
        imags.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((imags[0] + 1.0).abs() < 1e-9 && (imags[1] - 1.0).abs() < 1e-9);
        let zs = zs.with_delta(&[c(0.0, 2.0), c(0.0, -2.0)]).unwrap();
        assert!((zs.delta - 1.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_pencils() {
        // output identically zero
        let m = siso(dmatrix![-1.0], dmatrix![1.0], dmatrix![0.0], 0.0);
        assert!(matches!(transmission_zeros(&m, 1e-8), Err(Error::DegeneratePencil)));
        // more outputs than inputs
        let tall = AgentModel::new(
            dmatrix![-1.0],
            dmatrix![1.0],
            dmatrix![1.0; 1.0],
            DMatrix::zeros(2, 1),
            DMatrix::zeros(1, 1),
            DMatrix::zeros(2, 1),
        )
        .unwrap();
        assert!(matches!(transmission_zeros(&tall, 1e-8), Err(Error::DegeneratePencil)));
    }

    #[test]
    fn wide_system_common_zero() {
        // wide pencil: whatever is reported must drop rank on the full pencil
        let a = dmatrix![-1.0, 0.0; 0.0, -2.0];
        let b = dmatrix![1.0, 2.0; 1.0, 1.0];
        let cc = dmatrix![1.0, 0.0];
        let m = AgentModel::new(a, b, cc, DMatrix::zeros(1, 2), DMatrix::zeros(2, 1), DMatrix::zeros(1, 1)).unwrap();
        let zs = transmission_zeros(&m, 1e-8).unwrap();
        for z in &zs.zeros {
            assert!(pencil_rank(&m, *z, 1e-8) < 3);
        }
    }

    #[test]
    fn delta_cases() {
        let exo = [c(0.0, 2.0), c(0.0, -2.0)];
        let none = ZeroStructure { zeros: vec![c(-3.0, 0.0)], imag_zeros: vec![], delta: 0.0 };
        assert_eq!(compute_delta(&exo, &none).unwrap(), 0.0);
        let only_imag = ZeroStructure {
            zeros: vec![c(0.0, 1.0), c(0.0, -1.0)],
            imag_zeros: vec![c(0.0, 1.0), c(0.0, -1.0)],
            delta: 0.0,
        };
        assert!((compute_delta(&exo, &only_imag).unwrap() - 1.0).abs() < 1e-15);
        let mixed = ZeroStructure {
            zeros: vec![c(0.0, 1.0), c(0.0, -1.0), c(-3.0, 0.0)],
            imag_zeros: vec![c(0.0, 1.0), c(0.0, -1.0)],
            delta: 0.0,
        };
        assert!((compute_delta(&exo, &mixed).unwrap() - 1.0).abs() < 1e-15);
        let close_rest = ZeroStructure {
            zeros: vec![c(0.0, 1.0), c(0.0, -1.0), c(-0.25, 1.0), c(-0.25, -1.0)],
            imag_zeros: vec![c(0.0, 1.0), c(0.0, -1.0)],
            delta: 0.0,
        };
        assert!((compute_delta(&exo, &close_rest).unwrap() - 0.25).abs() < 1e-15);
    }
}
