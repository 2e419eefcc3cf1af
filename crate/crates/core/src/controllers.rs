//! The two halves of each agent's controller: the exosystem generator that
//! reconstructs `(w0, S0)` by consensus, and the dynamic compensator
//! `xi' = E xi + F e`, `u = K xi` built around a q-copy internal model.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::integrate::Integrator;
use crate::internal_model::{build_q_copy, coeffs_from_roots, InternalModelEstimate};
use crate::linalg::{is_hurwitz, stabilizing_observer_gain, stabilizing_state_gain};
use crate::model::AgentModel;
use crate::scalar::{modulus, Real};

/// Default distance kept between an eigenvalue estimate and any transmission
/// zero when synthesizing gains.
pub const DEFAULT_ZERO_MARGIN: f64 = 1e-6;
/// Default change in the eigenvalue estimate (infinity norm) that triggers
/// re-synthesis.
pub const DEFAULT_RESYNTH_MARGIN: f64 = 1e-3;
/// Spectral abscissa must be below `-HURWITZ_MARGIN` for a design to count as
/// stable.
pub const HURWITZ_MARGIN: f64 = 1e-6;

/// Local copy of the exosystem held by one agent.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorState<T: Real> {
    pub w: DVector<T>,
    pub s: DMatrix<T>,
}

impl<T: Real> GeneratorState<T> {
    pub fn new(w: DVector<T>, s: DMatrix<T>) -> Result<Self> {
        if !s.is_square() || s.nrows() != w.len() {
            return Err(Error::Dimension(format!(
                "generator S is {}x{} but w has {} entries",
                s.nrows(),
                s.ncols(),
                w.len()
            )));
        }
        Ok(GeneratorState { w, s })
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// Packs `[w; vec(S)]` (column-major).
    pub fn pack(&self) -> DVector<T> {
        let r = self.dim();
        let mut v = DVector::zeros(r + r * r);
        v.rows_mut(0, r).copy_from(&self.w);
        v.rows_mut(r, r * r).copy_from_slice(self.s.as_slice());
        v
    }

    pub fn unpack(v: &DVector<T>, r: usize) -> Self {
        GeneratorState {
            w: v.rows(0, r).into_owned(),
            s: DMatrix::from_column_slice(r, r, &v.as_slice()[r..r + r * r]),
        }
    }
}

/// Right-hand side of the generator ODEs for one follower, writing
/// `[w'; vec(S')]` into `out`.
///
/// `w`, `s` are the agent's own state; `neighbors` yields `(w_j, S_j, a_ij)`.
pub(crate) fn generator_rhs<'a, T: Real>(
    w: &[T],
    s: &[T],
    neighbors: impl Iterator<Item = (&'a [T], &'a [T], T)>,
    out: &mut [T],
) {
    let r = w.len();
    let (dw, ds) = out.split_at_mut(r);
    for i in 0..r {
        let mut acc = T::zero();
        for j in 0..r {
            acc += s[j * r + i] * w[j];
        }
        dw[i] = acc;
    }
    ds.iter_mut().for_each(|x| *x = T::zero());
    for (wj, sj, a) in neighbors {
        for i in 0..r {
            dw[i] += a * (wj[i] - w[i]);
        }
        for (d, (x, y)) in ds.iter_mut().zip(sj.iter().zip(s)) {
            *d += a * (*x - *y);
        }
    }
}

/// One integrator step of a follower's generator with neighbour states frozen
/// over the step. Use [`exosystem_step`] for node 0.
pub fn generator_step<T: Real>(
    state: &GeneratorState<T>,
    neighbors: &[(&GeneratorState<T>, T)],
    dt: T,
    integrator: Integrator,
) -> Result<GeneratorState<T>> {
    check_dt(dt)?;
    let r = state.dim();
    for (nb, _) in neighbors {
        if nb.dim() != r {
            return Err(Error::Dimension("neighbour generator has a different dimension".into()));
        }
    }
    let packed: Vec<(DVector<T>, T)> = neighbors.iter().map(|(g, a)| (g.pack(), *a)).collect();
    let f = |_t: T, v: &DVector<T>| {
        let mut out = DVector::zeros(v.len());
        let nbs = packed
            .iter()
            .map(|(p, a)| (&p.as_slice()[..r], &p.as_slice()[r..], *a));
        generator_rhs(&v.as_slice()[..r], &v.as_slice()[r..], nbs, out.as_mut_slice());
        out
    };
    let next = integrator.step(f, &state.pack(), T::zero(), dt);
    Ok(GeneratorState::unpack(&next, r))
}

/// One integrator step of `w0' = S0 w0`.
pub fn exosystem_step<T: Real>(s0: &DMatrix<T>, w0: &DVector<T>, dt: T, integrator: Integrator) -> Result<DVector<T>> {
    check_dt(dt)?;
    Ok(integrator.step(|_, v: &DVector<T>| s0 * v, w0, T::zero(), dt))
}

fn check_dt<T: Real>(dt: T) -> Result<()> {
    if dt > T::zero() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("dt = {dt} must be positive")))
    }
}

/// Compensator matrices synthesized from the nominal model at one eigenvalue
/// estimate.
#[derive(Clone, Debug)]
pub struct CompensatorGains<T: Real> {
    pub k1: DMatrix<T>,
    pub k2: DMatrix<T>,
    pub l_obs: DMatrix<T>,
    /// Internal model `(G, H)` the gains were built around.
    pub g: DMatrix<T>,
    pub h: DMatrix<T>,
    pub e: DMatrix<T>,
    pub f: DMatrix<T>,
    pub k: DMatrix<T>,
    pub synth_lambda: Vec<Complex<T>>,
}

impl<T: Real> CompensatorGains<T> {
    pub fn order(&self) -> usize {
        self.e.nrows()
    }

    /// `[[A, 0], [H C, G]] + [B; H D] [K1 K2]` for the given plant data.
    pub fn design_matrix(&self, model: &AgentModel<T>) -> DMatrix<T> {
        let (a_aug, b_aug) = augmented_pair(model, &self.g, &self.h);
        a_aug + b_aug * &self.k
    }
}

/// The pair `([A 0; H C G], [B; H D])` the stabilizing gains are designed on.
pub fn augmented_pair<T: Real>(model: &AgentModel<T>, g: &DMatrix<T>, h: &DMatrix<T>) -> (DMatrix<T>, DMatrix<T>) {
    let n = model.states();
    let m = model.inputs();
    let kq = g.nrows();
    let mut a_aug = DMatrix::zeros(n + kq, n + kq);
    a_aug.view_mut((0, 0), (n, n)).copy_from(&model.a);
    a_aug.view_mut((n, 0), (kq, n)).copy_from(&(h * &model.c));
    a_aug.view_mut((n, n), (kq, kq)).copy_from(g);
    let mut b_aug = DMatrix::zeros(n + kq, m);
    b_aug.view_mut((0, 0), (n, m)).copy_from(&model.b);
    b_aug.view_mut((n, 0), (kq, m)).copy_from(&(h * &model.d));
    (a_aug, b_aug)
}

/// Builds the compensator for `nominal` with internal model at `lambda`.
///
/// `zeros` are the nominal transmission zeros; `lambda` must stay farther than
/// `zero_margin` from each of them and lie in the closed right half plane.
pub fn synthesize_gains<T: Real>(
    nominal: &AgentModel<T>,
    lambda: &[Complex<T>],
    zeros: &[Complex<T>],
    zero_margin: T,
) -> Result<CompensatorGains<T>> {
    nominal.validate()?;
    for &l in lambda {
        if l.re < -zero_margin {
            return Err(Error::InvalidArgument(format!("eigenvalue estimate {l} has negative real part")));
        }
        for &z in zeros {
            let distance = modulus(l - z);
            if distance <= zero_margin {
                return Err(Error::NearTransmissionZero {
                    distance: distance.as_f64(),
                    margin: zero_margin.as_f64(),
                });
            }
        }
    }
    let n = nominal.states();
    let q = nominal.outputs();
    let coeffs = coeffs_from_roots(lambda)?;
    let (g, h) = build_q_copy(&coeffs, q)?;
    let (a_aug, b_aug) = augmented_pair(nominal, &g, &h);
    let k = stabilizing_state_gain(&a_aug, &b_aug)?;
    let k1 = k.columns(0, n).into_owned();
    let k2 = k.columns(n, g.nrows()).into_owned();
    let l_obs = stabilizing_observer_gain(&nominal.a, &nominal.c)?;

    let design = &a_aug + &b_aug * &k;
    let margin = T::lit(HURWITZ_MARGIN);
    if !is_hurwitz(&design, margin)? {
        return Err(Error::NotHurwitz {
            abscissa: crate::linalg::spectral_abscissa(&design)?.as_f64(),
        });
    }
    let (e, f) = assemble_compensator(nominal, &g, &h, &k1, &k2, &l_obs);
    Ok(CompensatorGains {
        k1,
        k2,
        l_obs,
        g,
        h,
        e,
        f,
        k,
        synth_lambda: lambda.to_vec(),
    })
}

/// `E = [[A + (B - L D) K1 - L C, (B - L D) K2], [0, G]]`, `F = [L; H]`.
pub fn assemble_compensator<T: Real>(
    model: &AgentModel<T>,
    g: &DMatrix<T>,
    h: &DMatrix<T>,
    k1: &DMatrix<T>,
    k2: &DMatrix<T>,
    l_obs: &DMatrix<T>,
) -> (DMatrix<T>, DMatrix<T>) {
    let n = model.states();
    let q = model.outputs();
    let kq = g.nrows();
    let bld = &model.b - l_obs * &model.d;
    let mut e = DMatrix::zeros(n + kq, n + kq);
    e.view_mut((0, 0), (n, n))
        .copy_from(&(&model.a + &bld * k1 - l_obs * &model.c));
    e.view_mut((0, n), (n, kq)).copy_from(&(&bld * k2));
    e.view_mut((n, n), (kq, kq)).copy_from(g);
    let mut f = DMatrix::zeros(n + kq, q);
    f.view_mut((0, 0), (n, q)).copy_from(l_obs);
    f.view_mut((n, 0), (kq, q)).copy_from(h);
    (e, f)
}

/// `e = C x + D u + Q w` with the agent's local generator state `w`.
pub fn error_output<T: Real>(model: &AgentModel<T>, x: &DVector<T>, u: &DVector<T>, w_local: &DVector<T>) -> DVector<T> {
    &model.c * x + &model.d * u + &model.q * w_local
}

/// `z = C x + D u + Q w0`; for reporting only.
pub fn regulated_output<T: Real>(model: &AgentModel<T>, x: &DVector<T>, u: &DVector<T>, w0: &DVector<T>) -> DVector<T> {
    error_output(model, x, u, w0)
}

#[derive(Clone, Debug)]
pub struct CompensatorState<T: Real> {
    pub xi: DVector<T>,
    pub estimate: InternalModelEstimate<T>,
    pub gains: CompensatorGains<T>,
}

impl<T: Real> CompensatorState<T> {
    pub fn new(xi: DVector<T>, estimate: InternalModelEstimate<T>, gains: CompensatorGains<T>) -> Result<Self> {
        if xi.len() != gains.order() {
            return Err(Error::Dimension(format!(
                "compensator state has {} entries, gains have order {}",
                xi.len(),
                gains.order()
            )));
        }
        Ok(CompensatorState { xi, estimate, gains })
    }

    /// `u = K xi`.
    pub fn control(&self) -> DVector<T> {
        &self.gains.k * &self.xi
    }

    /// One step of `xi' = E xi + F e` with `e` held over the step.
    pub fn step(&self, e: &DVector<T>, dt: T, integrator: Integrator) -> Result<Self> {
        check_dt(dt)?;
        if e.len() != self.gains.f.ncols() {
            return Err(Error::Dimension("error signal length differs from F".into()));
        }
        let forcing = &self.gains.f * e;
        let xi = integrator.step(|_, v: &DVector<T>| &self.gains.e * v + &forcing, &self.xi, T::zero(), dt);
        Ok(CompensatorState { xi, ..self.clone() })
    }

    /// Rebuilds the internal-model block `G` of `E` from the current
    /// estimate, leaving the stabilizing gains as they are.
    pub fn track_estimate(&mut self) -> Result<()> {
        let q = self.gains.f.ncols();
        let (g, _) = build_q_copy(&self.estimate.coeffs()?, q)?;
        let kq = g.nrows();
        let n = self.gains.order() - kq;
        self.gains.e.view_mut((n, n), (kq, kq)).copy_from(&g);
        self.gains.g = g;
        Ok(())
    }

    /// Re-synthesizes the gains when the current estimate has moved more than
    /// `margin` (infinity norm) from the one the gains were built at. Returns
    /// whether it did.
    pub fn maybe_resynthesize(
        &mut self,
        nominal: &AgentModel<T>,
        zeros: &[Complex<T>],
        zero_margin: T,
        margin: T,
    ) -> Result<bool> {
        let lambda = self.estimate.lambda();
        let drift = lambda_distance(&lambda, &self.gains.synth_lambda);
        if drift <= margin {
            return Ok(false);
        }
        self.gains = synthesize_gains(nominal, &lambda, zeros, zero_margin)?;
        Ok(true)
    }
}

/// `max_l |a_l - b_l|`, infinite when the lengths differ.
pub fn lambda_distance<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> T {
    if a.len() != b.len() {
        return T::max_value().unwrap_or_else(T::one);
    }
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| acc.max(modulus(*x - *y)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eigenvalues, pbh_stabilizable, spectral_abscissa};
    use nalgebra::{dmatrix, dvector};

    fn rotation_agent(omega: f64) -> AgentModel<f64> {
        AgentModel::new(
            dmatrix![0.0, omega; -omega, 0.0],
            dmatrix![0.0; 1.0],
            dmatrix![1.0, 0.0],
            dmatrix![0.0],
            DMatrix::zeros(2, 2),
            dmatrix![-1.0, 0.0],
        )
        .unwrap()
    }

    fn pm2i() -> Vec<Complex<f64>> {
        vec![Complex::new(0.0, 2.0), Complex::new(0.0, -2.0)]
    }

    #[test]
    fn generator_without_neighbours_is_local() {
        let g = GeneratorState::new(dvector![1.0, 0.0], dmatrix![0.0, 2.0; -2.0, 0.0]).unwrap();
        let dt = 1e-3f64;
        let next = generator_step(&g, &[], dt, Integrator::Rk4).unwrap();
        assert_eq!(next.s, g.s);
        assert!((next.w[0] - (2.0 * dt).cos()).abs() < 1e-12);
        assert!((next.w[1] + (2.0 * dt).sin()).abs() < 1e-12);
    }

    #[test]
    fn synchronized_generators_stay_on_the_orbit() {
        let s0 = dmatrix![0.0, 2.0; -2.0, 0.0];
        let w0 = dvector![0.3, -0.4];
        let leader = GeneratorState::new(w0.clone(), s0.clone()).unwrap();
        let follower = leader.clone();
        let next = generator_step(&follower, &[(&leader, 1.0)], 1e-3, Integrator::Rk4).unwrap();
        let w0_next = exosystem_step(&s0, &w0, 1e-3, Integrator::Rk4).unwrap();
        // the neighbour is held over the step, so agreement is only O(dt^2)
        assert!((next.w - w0_next).norm() < 1e-5);
        assert_eq!(next.s, s0);
    }

    #[test]
    fn generator_consensus_pulls_toward_neighbour() {
        let leader = GeneratorState::new(dvector![1.0, 0.0], dmatrix![0.0, 2.0; -2.0, 0.0]).unwrap();
        let mut g = GeneratorState::new(dvector![0.0, 0.0], DMatrix::zeros(2, 2)).unwrap();
        let (s0, mut w0) = (leader.s.clone(), leader.w.clone());
        for _ in 0..20_000 {
            let lead = GeneratorState::new(w0.clone(), s0.clone()).unwrap();
            g = generator_step(&g, &[(&lead, 1.0)], 1e-3, Integrator::Rk4).unwrap();
            w0 = exosystem_step(&s0, &w0, 1e-3, Integrator::Rk4).unwrap();
        }
        assert!((&g.s - &s0).norm() < 1e-7);
        // lag from holding the leader over each step is O(dt)
        assert!((&g.w - &w0).norm() < 5e-3);
    }

    #[test]
    fn rejects_bad_dt() {
        let g = GeneratorState::new(dvector![1.0], dmatrix![0.0]).unwrap();
        assert!(generator_step(&g, &[], 0.0, Integrator::Rk4).is_err());
    }

    #[test]
    fn synthesis_at_exosystem_spectrum_is_stable() {
        for omega in [1.6, 1.7, 1.8, 2.5] {
            let agent = rotation_agent(omega);
            let gains = synthesize_gains(&agent, &pm2i(), &[], 1e-6).unwrap();
            assert!(spectral_abscissa(&gains.design_matrix(&agent)).unwrap() < -1e-6);
            assert!(spectral_abscissa(&(&agent.a - &gains.l_obs * &agent.c)).unwrap() < -1e-6);
            assert_eq!(gains.k1.shape(), (1, 2));
            assert_eq!(gains.k2.shape(), (1, 2));
            assert_eq!(gains.e.shape(), (4, 4));
            assert_eq!(gains.f.shape(), (4, 1));
        }
    }

    #[test]
    fn block_structure_reconstructs() {
        let agent = rotation_agent(1.7);
        let gains = synthesize_gains(&agent, &pm2i(), &[], 1e-6).unwrap();
        let (a, b, c, d) = (&agent.a, &agent.b, &agent.c, &agent.d);
        let l = &gains.l_obs;
        let top_left = a + (b - l * d) * &gains.k1 - l * c;
        let top_right = (b - l * d) * &gains.k2;
        assert!((gains.e.view((0, 0), (2, 2)) - top_left).norm() < 1e-14);
        assert!((gains.e.view((0, 2), (2, 2)) - top_right).norm() < 1e-14);
        assert_eq!(gains.e.view((2, 0), (2, 2)).norm(), 0.0);
        assert_eq!(gains.e.view((2, 2), (2, 2)), gains.g);
        assert_eq!(gains.f.view((0, 0), (2, 1)), *l);
        assert_eq!(gains.f.view((2, 0), (2, 1)), gains.h);
        assert_eq!(gains.k.columns(0, 2), gains.k1);
        assert_eq!(gains.k.columns(2, 2), gains.k2);
    }

    #[test]
    fn hurwitz_plant_with_zero_root() {
        let agent = AgentModel::new(
            dmatrix![-1.0, 0.5; 0.0, -2.0],
            dmatrix![1.0, 0.0; 0.0, 1.0],
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(2, 1),
        )
        .unwrap();
        let lambda = [Complex::new(0.0, 0.0)];
        let (g, h) = build_q_copy(&[0.0], 2).unwrap();
        let (aa, ba) = augmented_pair(&agent, &g, &h);
        assert!(pbh_stabilizable(&aa, &ba, 0.0).unwrap());
        let gains = synthesize_gains(&agent, &lambda, &[], 1e-6).unwrap();
        assert!(spectral_abscissa(&gains.design_matrix(&agent)).unwrap() < 0.0);
    }

    #[test]
    fn estimate_on_a_zero_is_rejected() {
        let agent = rotation_agent(1.6);
        let zeros = [Complex::new(0.0, 2.0)];
        let err = synthesize_gains(&agent, &pm2i(), &zeros, 1e-6).unwrap_err();
        assert!(matches!(err, Error::NearTransmissionZero { .. }));
    }

    #[test]
    fn outputs() {
        let agent = rotation_agent(1.6);
        let x = dvector![0.7, -0.2];
        let u = dvector![3.0];
        let w = dvector![0.25, 9.0];
        assert_eq!(error_output(&agent, &DVector::zeros(2), &DVector::zeros(1), &DVector::zeros(2)), dvector![0.0]);
        assert_eq!(error_output(&agent, &x, &u, &w), dvector![0.7 - 0.25]);
        let w0 = dvector![-0.5, 1.0];
        assert_eq!(regulated_output(&agent, &x, &u, &w0), dvector![0.7 + 0.5]);
        assert_eq!(regulated_output(&agent, &x, &u, &w), error_output(&agent, &x, &u, &w));
    }

    fn pm2i_state(agent: &AgentModel<f64>) -> CompensatorState<f64> {
        let est = InternalModelEstimate::new(2, vec![0.0], vec![2.0]).unwrap();
        let gains = synthesize_gains(agent, &est.lambda(), &[], 1e-6).unwrap();
        CompensatorState::new(DVector::zeros(4), est, gains).unwrap()
    }

    #[test]
    fn compensator_at_rest() {
        let agent = rotation_agent(1.8);
        let st = pm2i_state(&agent);
        let next = st.step(&dvector![0.0], 1e-3, Integrator::Rk4).unwrap();
        assert_eq!(next.xi, DVector::zeros(4));
        assert_eq!(next.control(), dvector![0.0]);
    }

    #[test]
    fn stable_compensator_decays() {
        let agent = rotation_agent(1.8);
        let mut st = pm2i_state(&agent);
        // replace the marginal internal model block with a stable one
        st.gains.e = DMatrix::from_diagonal(&dvector![-1.0, -2.0, -0.5, -0.3]);
        st.xi = dvector![1.0, 1.0, 1.0, 1.0];
        let start = st.xi.norm();
        for _ in 0..1000 {
            st = st.step(&dvector![0.0], 1e-2, Integrator::Rk4).unwrap();
        }
        assert!(st.xi.norm() < 1e-1 * start);
    }

    #[test]
    fn resynthesis_trigger() {
        let agent = rotation_agent(2.5);
        let mut st = pm2i_state(&agent);
        assert!(!st.maybe_resynthesize(&agent, &[], 1e-6, 1e-3).unwrap());
        st.estimate.beta[0] = 2.0 + 5e-4;
        assert!(!st.maybe_resynthesize(&agent, &[], 1e-6, 1e-3).unwrap());
        st.estimate.beta[0] = 1.5;
        assert!(st.maybe_resynthesize(&agent, &[], 1e-6, 1e-3).unwrap());
        assert_eq!(st.gains.synth_lambda, st.estimate.lambda());
        assert!(spectral_abscissa(&st.gains.design_matrix(&agent)).unwrap() < 0.0);
    }

    #[test]
    fn tracking_moves_only_the_internal_model() {
        let agent = rotation_agent(1.7);
        let mut st = pm2i_state(&agent);
        let before = st.gains.clone();
        st.estimate.beta[0] = 2.0005;
        st.track_estimate().unwrap();
        assert_eq!(st.gains.k, before.k);
        assert_eq!(st.gains.synth_lambda, before.synth_lambda);
        assert_eq!(st.gains.e.view((0, 0), (2, 4)), before.e.view((0, 0), (2, 4)));
        let fresh = synthesize_gains(&agent, &st.estimate.lambda(), &[], 1e-6).unwrap();
        assert!((&st.gains.g - &fresh.g).norm() < 1e-12);
        assert_eq!(st.gains.e.view((2, 2), (2, 2)), st.gains.g);
    }

    #[test]
    fn gains_converge_with_the_estimate() {
        let agent = rotation_agent(1.6);
        let target = synthesize_gains(&agent, &pm2i(), &[], 1e-6).unwrap().k;
        let mut last = f64::INFINITY;
        for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
            let lam = vec![Complex::new(0.0, 2.0 + eps), Complex::new(0.0, -2.0 - eps)];
            let k = synthesize_gains(&agent, &lam, &[], 1e-6).unwrap().k;
            let gap = (k - &target).norm();
            assert!(gap < last);
            last = gap;
        }
        assert!(last < 1e-2);
    }

    #[test]
    fn internal_model_block_carries_estimate() {
        let agent = rotation_agent(1.6);
        let gains = synthesize_gains(&agent, &pm2i(), &[], 1e-6).unwrap();
        let mut eig = eigenvalues(&gains.g).unwrap();
        eig.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert!((eig[0] - Complex::new(0.0, -2.0)).norm() < 1e-12);
        assert!((eig[1] - Complex::new(0.0, 2.0)).norm() < 1e-12);
    }
}
