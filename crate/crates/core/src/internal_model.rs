//! Internal-model machinery: root/coefficient maps, companion blocks, the
//! separation projection and the consensus update of eigenvalue estimates.
//!
//! An estimate of degree `k` stores `floor(k/2)` pairs `(alpha_l, beta_l)`.
//! The assembled eigenvalue list is
//! `[alpha_1 + i beta_1, ..., alpha_h + i beta_h, alpha_1 - i beta_1, ..., alpha_h - i beta_h]`
//! followed by a single `0` when `k` is odd.

use nalgebra::{Complex, DMatrix};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graphnet::WeightedDigraph;
use crate::linalg::minpoly::companion;
use crate::scalar::{modulus, Real};

/// Number of retries before [`init_beta`] gives up.
pub const INIT_MAX_DRAWS: usize = 10_000;

/// Per-agent eigenvalue estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct InternalModelEstimate<T: Real> {
    pub degree: usize,
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
}

impl<T: Real> InternalModelEstimate<T> {
    pub fn new(degree: usize, alpha: Vec<T>, beta: Vec<T>) -> Result<Self> {
        let h = degree / 2;
        if alpha.len() != h || beta.len() != h {
            return Err(Error::Dimension(format!(
                "degree {degree} needs {h} alpha/beta entries, got {}/{}",
                alpha.len(),
                beta.len()
            )));
        }
        if alpha.iter().any(|a| *a < T::zero()) {
            return Err(Error::InvalidArgument("alpha entries must be nonnegative".into()));
        }
        Ok(Self { degree, alpha, beta })
    }

    /// True iff the degree is odd, i.e. the last eigenvalue is pinned at 0.
    pub fn has_zero_root(&self) -> bool {
        self.degree % 2 == 1
    }

    pub fn lambda(&self) -> Vec<Complex<T>> {
        assemble_lambda(self)
    }

    pub fn coeffs(&self) -> Result<Vec<T>> {
        coeffs_from_roots(&self.lambda())
    }
}

/// Eigenvalue list in the fixed layout described at module level.
pub fn assemble_lambda<T: Real>(est: &InternalModelEstimate<T>) -> Vec<Complex<T>> {
    let mut out: Vec<Complex<T>> = est
        .alpha
        .iter()
        .zip(&est.beta)
        .map(|(&a, &b)| Complex::new(a, b))
        .collect();
    let conj: Vec<_> = out.iter().map(|z| z.conj()).collect();
    out.extend(conj);
    if est.has_zero_root() {
        out.push(Complex::new(T::zero(), T::zero()));
    }
    out
}

/// Monic coefficients `[c_1, ..., c_k]` of `prod_l (s - lambda_l)`.
///
/// The roots must be closed under conjugation; the imaginary residue of
/// every coefficient is checked against `1e-12` relative to the coefficient
/// scale and then discarded.
pub fn coeffs_from_roots<T: Real>(lambda: &[Complex<T>]) -> Result<Vec<T>> {
    let scale = lambda.iter().fold(T::one(), |acc, z| acc.max(modulus(*z)));
    let unmatched = lambda.iter().any(|z| {
        !lambda
            .iter()
            .any(|w| modulus(w - z.conj()) <= T::lit(1e-12).max(T::eps() * T::lit(10.0)) * scale)
    });
    if unmatched {
        return Err(Error::NotConjugateSymmetric);
    }
    // poly[j] is the coefficient of s^(k - j)
    let mut poly = vec![Complex::new(T::one(), T::zero())];
    for &root in lambda {
        let mut next = poly.clone();
        next.push(Complex::new(T::zero(), T::zero()));
        for j in 1..next.len() {
            next[j] -= root * poly[j - 1];
        }
        poly = next;
    }
    let k = lambda.len();
    let bound = scale.powi(k as i32);
    let tol = T::lit(1e-12).max(T::eps() * T::lit(100.0)) * bound;
    if poly.iter().any(|c| c.im.abs() > tol) {
        return Err(Error::NotConjugateSymmetric);
    }
    Ok(poly[1..].iter().map(|c| c.re).collect())
}

/// Single-copy internal model `(G', H')`: companion matrix with last row
/// `[-c_k, ..., -c_1]` and `H' = e_k`.
pub fn build_one_copy<T: Real>(c: &[T]) -> (DMatrix<T>, DMatrix<T>) {
    let k = c.len();
    let mut h = DMatrix::zeros(k, 1);
    if k > 0 {
        h[(k - 1, 0)] = T::one();
    }
    (companion(c), h)
}

/// `q`-copy internal model: block-diagonal repetitions of `(G', H')`.
pub fn build_q_copy<T: Real>(c: &[T], q: usize) -> Result<(DMatrix<T>, DMatrix<T>)> {
    if q == 0 {
        return Err(Error::InvalidArgument("q-copy internal model needs q >= 1".into()));
    }
    let (g1, h1) = build_one_copy(c);
    let k = c.len();
    let mut g = DMatrix::zeros(q * k, q * k);
    let mut h = DMatrix::zeros(q * k, q);
    for b in 0..q {
        g.view_mut((b * k, b * k), (k, k)).copy_from(&g1);
        h.view_mut((b * k, b), (k, 1)).copy_from(&h1);
    }
    Ok((g, h))
}

/// Real part assigned to an estimate with imaginary part `beta`.
///
/// With `gamma` the imaginary part of the closest purely imaginary zero
/// (ties go to the smaller one), the point `alpha + i beta` is lifted onto
/// the circle of radius `delta` around `i gamma` whenever it would fall
/// inside it; otherwise `alpha = 0`. Without such zeros, or with
/// `delta = 0`, `alpha` is always `0` and no `gamma` is reported.
pub fn project_alpha<T: Real>(beta: T, imag_zero_imags: &[T], delta: T) -> (T, Option<T>) {
    if imag_zero_imags.is_empty() || delta <= T::zero() {
        return (T::zero(), None);
    }
    let mut gamma = imag_zero_imags[0];
    for &g in &imag_zero_imags[1..] {
        let (dg, dbest) = ((beta - g).abs(), (beta - gamma).abs());
        if dg < dbest || (dg == dbest && g < gamma) {
            gamma = g;
        }
    }
    let gap = (beta - gamma).abs();
    if gap >= delta {
        (T::zero(), Some(gamma))
    } else {
        ((delta * delta - gap * gap).sqrt(), Some(gamma))
    }
}

/// Leader payload: imaginary parts of the exosystem's minimal-polynomial
/// roots, one per conjugate pair, sorted descending. Roots on the real axis
/// pair up as zeros; the unpaired zero of an odd degree is dropped.
pub fn leader_imags<T: Real>(roots: &[Complex<T>]) -> Vec<T> {
    let k = roots.len();
    let mut positive: Vec<T> = roots.iter().filter(|z| z.im > T::zero()).map(|z| z.im).collect();
    positive.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    positive.resize(k / 2, T::zero());
    positive
}

/// Consensus state of every agent's estimate plus the agents' zero data.
///
/// Index `i` of `estimates`, `imag_zero_imags` and `deltas` refers to graph
/// node `i + 1`.
#[derive(Clone, Debug)]
pub struct EstimateNetwork<'a, T: Real> {
    pub imag_zero_imags: &'a [Vec<T>],
    pub deltas: &'a [T],
}

/// One explicit Euler step of `beta_i' = sum_j a_ij (beta_j - beta_i)` with
/// node 0 clamped at `leader`, followed by the alpha projection per agent.
pub fn eig_update_step<T: Real>(
    estimates: &[InternalModelEstimate<T>],
    leader: &[T],
    graph: &WeightedDigraph<T>,
    zeros: &EstimateNetwork<'_, T>,
    dt: T,
) -> Result<Vec<InternalModelEstimate<T>>> {
    let agents = estimates.len();
    if graph.node_count() != agents + 1 {
        return Err(Error::Dimension(format!(
            "graph has {} nodes for {agents} agents",
            graph.node_count()
        )));
    }
    if zeros.imag_zero_imags.len() != agents || zeros.deltas.len() != agents {
        return Err(Error::Dimension("zero data must be given per agent".into()));
    }
    if !(dt > T::zero()) {
        return Err(Error::InvalidArgument(format!("dt = {dt} must be positive")));
    }
    let product = dt * graph.max_in_degree();
    if product > T::one() {
        return Err(Error::EulerUnstable {
            product: product.as_f64(),
        });
    }
    let h = leader.len();
    for est in estimates {
        if est.beta.len() != h {
            return Err(Error::Dimension(format!(
                "estimate has {} components, leader broadcasts {h}",
                est.beta.len()
            )));
        }
    }
    let beta_of = |node: usize| -> &[T] {
        if node == 0 {
            leader
        } else {
            &estimates[node - 1].beta
        }
    };
    let mut out = Vec::with_capacity(agents);
    for (idx, est) in estimates.iter().enumerate() {
        let node = idx + 1;
        let mut beta = est.beta.clone();
        for (j, a) in graph.in_neighbors(node) {
            let other = beta_of(j);
            for l in 0..h {
                beta[l] += dt * a * (other[l] - est.beta[l]);
            }
        }
        let alpha = beta
            .iter()
            .map(|&b| project_alpha(b, &zeros.imag_zero_imags[idx], zeros.deltas[idx]).0)
            .collect();
        out.push(InternalModelEstimate {
            degree: est.degree,
            alpha,
            beta,
        });
    }
    Ok(out)
}

/// Draws `floor(k/2)` initial imaginary parts uniformly from `range`,
/// redrawing any component closer than `delta` to a purely imaginary zero.
pub fn init_beta<T: Real, R: Rng + ?Sized>(
    imag_zero_imags: &[T],
    delta: T,
    degree: usize,
    rng: &mut R,
    range: (T, T),
) -> Result<Vec<T>> {
    let (lo, hi) = range;
    if !(lo <= hi) {
        return Err(Error::InvalidArgument(format!("empty range [{lo}, {hi}]")));
    }
    let feasible = |b: T| imag_zero_imags.iter().all(|&g| (b - g).abs() >= delta);
    let (lo64, hi64) = (lo.as_f64(), hi.as_f64());
    let mut out = Vec::with_capacity(degree / 2);
    for _ in 0..degree / 2 {
        let mut draws = 0;
        loop {
            let u: f64 = rng.random();
            let b = T::lit(lo64 + u * (hi64 - lo64));
            draws += 1;
            if feasible(b) {
                out.push(b);
                break;
            }
            if draws >= INIT_MAX_DRAWS {
                return Err(Error::InfeasibleInit { attempts: draws });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigenvalues;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn no_zeros(n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        (vec![Vec::new(); n], vec![0.0; n])
    }

    #[test]
    fn coefficient_examples() {
        let v = coeffs_from_roots(&[c(0.0, 2.0), c(0.0, -2.0)]).unwrap();
        assert!(v[0].abs() < 1e-15 && (v[1] - 4.0).abs() < 1e-15);
        assert_eq!(coeffs_from_roots(&[c(0.0, 0.0)]).unwrap(), vec![0.0]);
        let v = coeffs_from_roots(&[c(1.0, 1.0), c(1.0, -1.0), c(0.0, 0.0)]).unwrap();
        assert_eq!(v, vec![-2.0, 2.0, 0.0]);
        assert!(matches!(coeffs_from_roots(&[c(0.0, 1.0)]), Err(Error::NotConjugateSymmetric)));
    }

    #[test]
    fn one_copy_examples() {
        let (g, h) = build_one_copy(&[0.0, 4.0]);
        assert_eq!(g, nalgebra::dmatrix![0.0, 1.0; -4.0, 0.0]);
        assert_eq!(h, nalgebra::dmatrix![0.0; 1.0]);
        let (g, h) = build_one_copy(&[1.0]);
        assert_eq!(g, nalgebra::dmatrix![-1.0]);
        assert_eq!(h, nalgebra::dmatrix![1.0]);
    }

    #[test]
    fn q_copy_examples() {
        let coeffs = [0.0, 4.0];
        let (g1, h1) = build_q_copy(&coeffs, 1).unwrap();
        assert_eq!((g1, h1), build_one_copy(&coeffs));
        let (g, h) = build_q_copy(&coeffs, 2).unwrap();
        assert_eq!(g.shape(), (4, 4));
        assert_eq!(h.shape(), (4, 2));
        assert_eq!(g.view((2, 2), (2, 2)), nalgebra::dmatrix![0.0, 1.0; -4.0, 0.0]);
        assert_eq!(g.view((0, 2), (2, 2)).norm(), 0.0);
        assert_eq!(h[(1, 0)], 1.0);
        assert_eq!(h[(3, 1)], 1.0);
        assert_eq!(h.sum(), 2.0);
        let mut ev = eigenvalues(&g).unwrap();
        ev.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        for (z, want) in ev.iter().zip([-2.0, -2.0, 2.0, 2.0]) {
            assert!((z - c(0.0, want)).norm() < 1e-7);
        }
        assert!(build_q_copy(&coeffs, 0).is_err());
    }

    #[test]
    fn projection_examples() {
        let (a, g) = project_alpha(1.2, &[1.0], 0.5);
        assert!((a - 0.21f64.sqrt()).abs() < 1e-15);
        assert!((a - 0.45826).abs() < 1e-5);
        assert_eq!(g, Some(1.0));
        assert_eq!(project_alpha(2.0, &[1.0], 0.5).0, 0.0);
        assert_eq!(project_alpha(1.2, &[], 0.5), (0.0, None));
        assert_eq!(project_alpha(1.2, &[1.0], 0.0), (0.0, None));
        // tie: smaller imaginary part wins
        assert_eq!(project_alpha(0.0, &[1.0, -1.0], 2.0).1, Some(-1.0));
    }

    #[test]
    fn lambda_layout() {
        let est = InternalModelEstimate::new(2, vec![0.0], vec![2.0]).unwrap();
        assert_eq!(assemble_lambda(&est), vec![c(0.0, 2.0), c(0.0, -2.0)]);
        let est = InternalModelEstimate::new(3, vec![1.0], vec![1.0]).unwrap();
        assert_eq!(assemble_lambda(&est), vec![c(1.0, 1.0), c(1.0, -1.0), c(0.0, 0.0)]);
        assert!(est.has_zero_root());
        assert!(InternalModelEstimate::new(2, vec![-0.1], vec![1.0]).is_err());
        assert!(InternalModelEstimate::<f64>::new(4, vec![0.0], vec![1.0]).is_err());
    }

    #[test]
    fn leader_payload() {
        assert_eq!(leader_imags(&[c(0.0, 2.0), c(0.0, -2.0)]), vec![2.0]);
        assert_eq!(leader_imags(&[c(0.0, 1.0), c(0.0, 3.0), c(0.0, -1.0), c(0.0, -3.0), c(0.0, 0.0)]), vec![3.0, 1.0]);
        assert_eq!(leader_imags(&[c(0.0, 0.0), c(0.0, 0.0)]), vec![0.0]);
    }

    fn edge01() -> WeightedDigraph<f64> {
        WeightedDigraph::from_edges(2, &[(0, 1, 1.0)], 0.1).unwrap()
    }

    #[test]
    fn single_euler_step() {
        let est = vec![InternalModelEstimate::new(2, vec![0.0], vec![0.0]).unwrap()];
        let (z, d) = no_zeros(1);
        let net = EstimateNetwork { imag_zero_imags: &z, deltas: &d };
        let next = eig_update_step(&est, &[2.0], &edge01(), &net, 0.1).unwrap();
        assert!((next[0].beta[0] - 0.2).abs() < 1e-15);
        assert_eq!(next[0].alpha[0], 0.0);
    }

    #[test]
    fn consensus_fixed_point() {
        let g = WeightedDigraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 0.5)], 0.1).unwrap();
        let est = vec![InternalModelEstimate::new(2, vec![0.0], vec![2.0]).unwrap(); 2];
        let (z, d) = no_zeros(2);
        let net = EstimateNetwork { imag_zero_imags: &z, deltas: &d };
        let next = eig_update_step(&est, &[2.0], &g, &net, 0.01).unwrap();
        assert_eq!(next, est);
    }

    #[test]
    fn euler_stability_guard() {
        let est = vec![InternalModelEstimate::new(2, vec![0.0], vec![0.0]).unwrap()];
        let (z, d) = no_zeros(1);
        let net = EstimateNetwork { imag_zero_imags: &z, deltas: &d };
        assert!(matches!(
            eig_update_step(&est, &[2.0], &edge01(), &net, 1.5),
            Err(Error::EulerUnstable { .. })
        ));
    }

    #[test]
    fn init_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = init_beta(&[], 0.0, 4, &mut rng, (-1.0, 1.0)).unwrap();
        assert_eq!(b.len(), 2);
        assert!(b.iter().all(|x| (-1.0..=1.0).contains(x)));
        // the feasible set {-1, 1} has measure zero
        assert!(matches!(
            init_beta(&[0.0], 1.0, 2, &mut rng, (-1.0, 1.0)),
            Err(Error::InfeasibleInit { .. })
        ));
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let first = init_beta(&[5.0], 1.0, 2, &mut a, (-1.0, 1.0)).unwrap();
        let u: f64 = rand::Rng::random(&mut b);
        assert_eq!(first, vec![-1.0 + 2.0 * u]);
    }

    fn random_lambda() -> impl Strategy<Value = InternalModelEstimate<f64>> {
        (1usize..=7).prop_flat_map(|k| {
            let h = k / 2;
            (
                proptest::collection::vec(0.0f64..3.0, h),
                proptest::collection::vec(-3.0f64..3.0, h),
            )
                .prop_map(move |(a, b)| InternalModelEstimate::new(k, a, b).unwrap())
        })
    }

    proptest! {
        #[test]
        fn coefficients_are_real_and_companion_roundtrips(est in random_lambda()) {
            let lambda = assemble_lambda(&est);
            for z in &lambda {
                prop_assert!(lambda.iter().any(|w| *w == z.conj()));
            }
            let c = coeffs_from_roots(&lambda).unwrap();
            prop_assert_eq!(c.len(), est.degree);
            let (g, _) = build_one_copy(&c);
            let ev = eigenvalues(&g).unwrap();
            // companion eigenvalues reproduce the coefficients
            let back = coeffs_from_roots(&crate::linalg::spectral::conjugate_pairs(&ev, 1e-6).unwrap()).unwrap();
            for (x, y) in c.iter().zip(&back) {
                prop_assert!((x - y).abs() <= 1e-8 * (1.0 + x.abs()));
            }
        }

        #[test]
        fn projection_keeps_distance(beta in -5.0f64..5.0, zs in proptest::collection::vec(-4.0f64..4.0, 1..4), delta in 0.0f64..2.0) {
            let (alpha, _) = project_alpha(beta, &zs, delta);
            prop_assert!(alpha >= 0.0);
            let lam = Complex::new(alpha, beta);
            for &g in &zs {
                prop_assert!((lam - Complex::new(0.0, g)).norm() >= delta - 1e-9);
            }
        }

        #[test]
        fn beta_stays_in_hull(b1 in -3.0f64..3.0, b2 in -3.0f64..3.0, b3 in -3.0f64..3.0, leader in -3.0f64..3.0, steps in 1usize..200) {
            let g = WeightedDigraph::from_edges(4, &[(0, 1, 1.0), (1, 2, 2.0), (3, 2, 1.0), (2, 3, 1.0)], 0.1).unwrap();
            let mut est: Vec<_> = [b1, b2, b3].iter().map(|&b| InternalModelEstimate::new(2, vec![0.0], vec![b]).unwrap()).collect();
            let lo = b1.min(b2).min(b3).min(leader);
            let hi = b1.max(b2).max(b3).max(leader);
            let (z, d) = no_zeros(3);
            let net = EstimateNetwork { imag_zero_imags: &z, deltas: &d };
            for _ in 0..steps {
                est = eig_update_step(&est, &[leader], &g, &net, 0.1).unwrap();
                for e in &est {
                    prop_assert!(e.beta[0] >= lo - 1e-12 && e.beta[0] <= hi + 1e-12);
                }
            }
        }
    }
}
