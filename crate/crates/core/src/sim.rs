//! Fixed-step closed-loop simulation of the whole network.
//!
//! Each step of length `dt` runs one synchronous round:
//! read the topology active on `[t, t + dt)`, take an Euler step of the
//! eigenvalue-estimate consensus, rebuild each internal model from its
//! estimate (re-synthesizing the stabilizing gains once the estimate has
//! moved by more than the margin), then advance plant, compensator, generator and exosystem states together
//! with one RK4 (or Euler) step of the coupled vector field.

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::controllers::{
    error_output, lambda_distance, regulated_output, synthesize_gains, CompensatorState, DEFAULT_RESYNTH_MARGIN,
    DEFAULT_ZERO_MARGIN,
};
use crate::error::{Error, Result};
use crate::graphnet::{Segment, TopologySchedule, WeightedDigraph};
use crate::integrate::Integrator;
use crate::internal_model::{eig_update_step, init_beta, leader_imags, project_alpha, EstimateNetwork, InternalModelEstimate};
use crate::linalg::{eigenvalues, minimal_polynomial, transmission_zeros, MinimalPolynomial, ZeroStructure, DEFAULT_RANK_TOL};
use crate::model::{AgentModel, Exosystem};
use crate::scalar::Real;
use crate::verification::audit_assumptions;

/// Order in which the seeded generator is consumed when building the initial
/// state. Only components not given explicitly are drawn.
pub const DRAW_ORDER: &str =
    "w0[r]; then per agent in index order: x[n], w[r], xi[n+q*k], beta[floor(k/2)] (redrawn while within delta of an imaginary zero), alpha[floor(k/2)] (only when an alpha range is set)";

/// Additive uncertainty applied to the true plant. `None` leaves that matrix
/// at its nominal value.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationSpec<T: Real> {
    pub a: Option<DMatrix<T>>,
    pub b: Option<DMatrix<T>>,
    pub c: Option<DMatrix<T>>,
    pub d: Option<DMatrix<T>>,
    pub p: Option<DMatrix<T>>,
    pub q: Option<DMatrix<T>>,
}

impl<T: Real> Default for PerturbationSpec<T> {
    fn default() -> Self {
        Self {
            a: None,
            b: None,
            c: None,
            d: None,
            p: None,
            q: None,
        }
    }
}

impl<T: Real> PerturbationSpec<T> {
    pub fn is_empty(&self) -> bool {
        self.parts().iter().all(|m| m.is_none())
    }

    pub fn parts(&self) -> [&Option<DMatrix<T>>; 6] {
        [&self.a, &self.b, &self.c, &self.d, &self.p, &self.q]
    }

    fn parts_mut(&mut self) -> [&mut Option<DMatrix<T>>; 6] {
        [&mut self.a, &mut self.b, &mut self.c, &mut self.d, &mut self.p, &mut self.q]
    }

    /// Perturbation with every matrix of `delta` set.
    pub fn from_model(delta: &AgentModel<T>) -> Self {
        let mut out = Self::default();
        for (slot, m) in out.parts_mut().into_iter().zip(delta.matrices()) {
            *slot = Some(m.clone());
        }
        out
    }
}

/// Entrywise addition of the deltas in `spec` to `agent`.
pub fn perturb<T: Real>(agent: &AgentModel<T>, spec: &PerturbationSpec<T>) -> Result<AgentModel<T>> {
    let mut delta = agent.zeros_like();
    for (slot, m) in delta.matrices_mut().into_iter().zip(spec.parts()) {
        if let Some(m) = m {
            if m.shape() != slot.shape() {
                return Err(Error::Dimension(format!(
                    "perturbation is {}x{}, matrix is {}x{}",
                    m.nrows(),
                    m.ncols(),
                    slot.nrows(),
                    slot.ncols()
                )));
            }
            slot.copy_from(m);
        }
    }
    agent.offset_by(&delta)
}

/// Nominal model known to the controller and the perturbed model that
/// actually runs.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentSpec<T: Real> {
    pub nominal: AgentModel<T>,
    pub perturbation: PerturbationSpec<T>,
    pub true_model: AgentModel<T>,
}

impl<T: Real> AgentSpec<T> {
    pub fn new(nominal: AgentModel<T>, perturbation: PerturbationSpec<T>) -> Result<Self> {
        nominal.validate()?;
        let true_model = perturb(&nominal, &perturbation)?;
        Ok(Self {
            nominal,
            perturbation,
            true_model,
        })
    }

    pub fn unperturbed(nominal: AgentModel<T>) -> Result<Self> {
        Self::new(nominal, PerturbationSpec::default())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig<T: Real> {
    pub dt: T,
    pub t_final: T,
    pub integrator: Integrator,
    pub seed: u64,
    /// Infinity-norm change in an eigenvalue estimate that triggers gain
    /// re-synthesis.
    pub resynth_margin: T,
    /// Window for the uniform reachability audit; `None` uses one schedule
    /// period.
    pub a4_window: Option<T>,
    /// Minimum distance between an estimate and a transmission zero.
    pub zero_margin: T,
    /// Relative rank tolerance for PBH, zeros and the minimal polynomial.
    pub rank_tol: T,
    /// Record every `record_every`-th step (the initial and final states are
    /// always recorded).
    pub record_every: usize,
    /// When false the estimates stay at their initial values.
    pub learn_eigenvalues: bool,
    /// Simulate even when the assumption audit fails.
    pub force: bool,
}

impl<T: Real> Default for SimConfig<T> {
    fn default() -> Self {
        Self {
            dt: T::lit(1e-3),
            t_final: T::lit(200.0),
            integrator: Integrator::Rk4,
            seed: 0,
            resynth_margin: T::lit(DEFAULT_RESYNTH_MARGIN),
            a4_window: None,
            zero_margin: T::lit(DEFAULT_ZERO_MARGIN),
            rank_tol: T::lit(DEFAULT_RANK_TOL),
            record_every: 1,
            learn_eigenvalues: true,
            force: false,
        }
    }
}

/// Explicit initial values for one agent; missing entries are drawn.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentInit<T: Real> {
    pub x: Option<DVector<T>>,
    pub xi: Option<DVector<T>>,
    pub w: Option<DVector<T>>,
    /// Defaults to the nominal `A` when it is `r x r`, else to zero.
    pub s: Option<DMatrix<T>>,
    pub beta: Option<Vec<T>>,
    pub alpha: Option<Vec<T>>,
}

impl<T: Real> Default for AgentInit<T> {
    fn default() -> Self {
        Self {
            x: None,
            xi: None,
            w: None,
            s: None,
            beta: None,
            alpha: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitSpec<T: Real> {
    /// Range for `w0`, `x`, `w` and `xi` draws.
    pub range: (T, T),
    pub beta_range: (T, T),
    /// Range for initial real parts. `None` starts them at their projected
    /// value.
    pub alpha_range: Option<(T, T)>,
    /// Empty, or one entry per agent.
    pub agents: Vec<AgentInit<T>>,
}

impl<T: Real> Default for InitSpec<T> {
    fn default() -> Self {
        Self {
            range: (-T::one(), T::one()),
            beta_range: (-T::one(), T::one()),
            alpha_range: None,
            agents: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario<T: Real> {
    pub exosystem: Exosystem<T>,
    pub agents: Vec<AgentSpec<T>>,
    pub schedule: TopologySchedule<T>,
    pub sim: SimConfig<T>,
    pub init: InitSpec<T>,
}

impl<T: Real> Scenario<T> {
    pub fn validate(&self) -> Result<()> {
        let r = self.exosystem.dim();
        for (i, a) in self.agents.iter().enumerate() {
            if a.nominal.exo_dim() != r || a.true_model.exo_dim() != r {
                return Err(Error::Dimension(format!("agent {} has exosystem dimension != {r}", i + 1)));
            }
        }
        if self.schedule.node_count() != self.agents.len() + 1 {
            return Err(Error::Dimension(format!(
                "schedule has {} nodes for {} agents",
                self.schedule.node_count(),
                self.agents.len()
            )));
        }
        let sim = &self.sim;
        if !(sim.dt > T::zero()) || !(sim.t_final > T::zero()) {
            return Err(Error::InvalidArgument("dt and t_final must be positive".into()));
        }
        if sim.record_every == 0 {
            return Err(Error::InvalidArgument("record_every must be at least 1".into()));
        }
        for (k, s) in self.schedule.segments().iter().enumerate() {
            let steps = s.duration / sim.dt;
            if (steps - steps.round()).abs() > T::lit(1e-6) * steps.max(T::one()) {
                return Err(Error::InvalidArgument(format!(
                    "segment {k} duration {} is not a multiple of dt = {}",
                    s.duration, sim.dt
                )));
            }
        }
        if !self.init.agents.is_empty() && self.init.agents.len() != self.agents.len() {
            return Err(Error::Dimension("init needs one entry per agent or none".into()));
        }
        Ok(())
    }

    pub fn step_count(&self) -> usize {
        (self.sim.t_final / self.sim.dt).round().to_usize().unwrap_or(0)
    }
}

/// Scenario-level quantities every agent's controller is built from.
#[derive(Clone, Debug)]
pub struct ScenarioAnalysis<T: Real> {
    pub minpoly: MinimalPolynomial<T>,
    pub exo_spectrum: Vec<Complex<T>>,
    /// What node 0 broadcasts: `floor(k/2)` imaginary parts, descending.
    pub leader_imags: Vec<T>,
    /// `lambda_0` in the estimate layout.
    pub leader_lambda: Vec<Complex<T>>,
    /// Per agent, from the nominal model, with `delta` filled in.
    pub zeros: Vec<ZeroStructure<T>>,
}

pub fn analyze<T: Real>(scenario: &Scenario<T>) -> Result<ScenarioAnalysis<T>> {
    let tol = scenario.sim.rank_tol;
    let s0 = &scenario.exosystem.s0;
    let minpoly = minimal_polynomial(s0, tol)?;
    let exo_spectrum = eigenvalues(s0)?;
    let leader_imags = leader_imags(&minpoly.roots);
    let leader = InternalModelEstimate::new(minpoly.degree, vec![T::zero(); leader_imags.len()], leader_imags.clone())?;
    let zeros = scenario
        .agents
        .iter()
        .map(|a| transmission_zeros(&a.nominal, tol)?.with_delta(&exo_spectrum))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioAnalysis {
        leader_lambda: leader.lambda(),
        minpoly,
        exo_spectrum,
        leader_imags,
        zeros,
    })
}

/// Fixed-width rows stored contiguously.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Series<T> {
    width: usize,
    data: Vec<T>,
}

impl<T: Copy> Series<T> {
    pub fn new(width: usize) -> Self {
        Self { width, data: Vec::new() }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.width).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, row: &[T]) {
        debug_assert_eq!(row.len(), self.width);
        self.data.extend_from_slice(row);
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> + '_ {
        // chunks_exact panics on width 0
        self.data.chunks_exact(self.width.max(1))
    }
}

/// Recorded signals of one agent, one row per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentTrace<T: Real> {
    pub x: Series<T>,
    pub xi: Series<T>,
    pub w: Series<T>,
    pub u: Series<T>,
    pub e: Series<T>,
    pub z: Series<T>,
    /// `||w_i - w0||`.
    pub w_err: Vec<T>,
    /// `||S_i - S0||_F`.
    pub s_err: Vec<T>,
    /// Estimate as `[re_1, im_1, re_2, im_2, ...]` in the estimate layout.
    pub lambda: Series<T>,
    /// `max_l |lambda_il - lambda_0l|`.
    pub lambda_err: Vec<T>,
}

impl<T: Real> AgentTrace<T> {
    fn new(n: usize, order: usize, r: usize, m: usize, q: usize, k: usize) -> Self {
        Self {
            x: Series::new(n),
            xi: Series::new(order),
            w: Series::new(r),
            u: Series::new(m),
            e: Series::new(q),
            z: Series::new(q),
            w_err: Vec::new(),
            s_err: Vec::new(),
            lambda: Series::new(2 * k),
            lambda_err: Vec::new(),
        }
    }

    pub fn z_norm(&self) -> Vec<T> {
        self.z.rows().map(norm).collect()
    }

    pub fn lambda_at(&self, i: usize) -> Vec<Complex<T>> {
        self.lambda.row(i).chunks_exact(2).map(|c| Complex::new(c[0], c[1])).collect()
    }
}

fn norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, x| acc + *x * *x).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResynthEvent<T: Real> {
    pub time: T,
    /// Agent index (graph node `agent + 1`).
    pub agent: usize,
    pub lambda: Vec<Complex<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationTrace<T: Real> {
    pub seed: u64,
    pub dt: T,
    pub record_every: usize,
    pub draw_order: &'static str,
    pub times: Vec<T>,
    /// Segment active on the step starting at each sample.
    pub segment: Vec<usize>,
    pub w0: Series<T>,
    pub agents: Vec<AgentTrace<T>>,
    pub events: Vec<ResynthEvent<T>>,
    pub leader_lambda: Vec<Complex<T>>,
}

impl<T: Real> SimulationTrace<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn resynth_count(&self, agent: usize) -> usize {
        self.events.iter().filter(|e| e.agent == agent).count()
    }
}

/// Offsets of one agent's blocks in the packed state.
#[derive(Clone, Copy, Debug)]
struct Slots {
    x: usize,
    n: usize,
    xi: usize,
    order: usize,
    w: usize,
    s: usize,
}

/// Packed layout: `[w0; per agent (x, xi, w, vec S)]`.
#[derive(Clone, Debug)]
struct Layout {
    r: usize,
    agents: Vec<Slots>,
    len: usize,
}

impl Layout {
    fn new(r: usize, dims: &[(usize, usize)]) -> Self {
        let mut off = r;
        let agents = dims
            .iter()
            .map(|&(n, order)| {
                let s = Slots {
                    x: off,
                    n,
                    xi: off + n,
                    order,
                    w: off + n + order,
                    s: off + n + order + r,
                };
                off = s.s + r * r;
                s
            })
            .collect();
        Self { r, agents, len: off }
    }

    fn w_of<'a, T>(&self, y: &'a [T], node: usize) -> &'a [T] {
        if node == 0 {
            &y[..self.r]
        } else {
            let s = &self.agents[node - 1];
            &y[s.w..s.w + self.r]
        }
    }
}

/// Coupled vector field with topology and gains frozen over one step.
struct Field<'a, T: Real> {
    layout: &'a Layout,
    s0: &'a DMatrix<T>,
    models: &'a [AgentModel<T>],
    comps: &'a [CompensatorState<T>],
    graph: &'a WeightedDigraph<T>,
}

impl<T: Real> Field<'_, T> {
    fn eval(&self, y: &DVector<T>) -> DVector<T> {
        let lay = self.layout;
        let r = lay.r;
        let ys = y.as_slice();
        let mut out = DVector::zeros(lay.len);
        let w0 = y.rows(0, r);
        out.rows_mut(0, r).copy_from(&(self.s0 * w0));
        let s0_vec = self.s0.as_slice();
        for (i, sl) in lay.agents.iter().enumerate() {
            let model = &self.models[i];
            let gains = &self.comps[i].gains;
            let x = y.rows(sl.x, sl.n);
            let xi = y.rows(sl.xi, sl.order);
            let w = y.rows(sl.w, r);
            let u = &gains.k * xi;
            let e = &model.c * x + &model.d * &u + &model.q * w;
            let dx = &model.a * x + &model.b * &u + &model.p * w0;
            let dxi = &gains.e * xi + &gains.f * e;
            out.rows_mut(sl.x, sl.n).copy_from(&dx);
            out.rows_mut(sl.xi, sl.order).copy_from(&dxi);
            let node = i + 1;
            let neighbors = self.graph.in_neighbors(node).map(|(j, a)| {
                let sj = if j == 0 {
                    s0_vec
                } else {
                    let o = lay.agents[j - 1].s;
                    &ys[o..o + r * r]
                };
                (lay.w_of(ys, j), sj, a)
            });
            let (_, tail) = out.as_mut_slice().split_at_mut(sl.w);
            crate::controllers::generator_rhs(
                &ys[sl.w..sl.w + r],
                &ys[sl.s..sl.s + r * r],
                neighbors,
                &mut tail[..r + r * r],
            );
        }
        out
    }
}

fn draw<T: Real, R: Rng + ?Sized>(rng: &mut R, (lo, hi): (T, T)) -> T {
    let u: f64 = rng.random();
    T::lit(lo.as_f64() + u * (hi.as_f64() - lo.as_f64()))
}

fn draw_vec<T: Real, R: Rng + ?Sized>(rng: &mut R, len: usize, range: (T, T)) -> DVector<T> {
    DVector::from_iterator(len, (0..len).map(|_| draw(rng, range)))
}

fn given_or_draw<T: Real, R: Rng + ?Sized>(
    given: Option<&DVector<T>>,
    len: usize,
    range: (T, T),
    rng: &mut R,
    what: &str,
) -> Result<DVector<T>> {
    match given {
        Some(v) if v.len() == len => Ok(v.clone()),
        Some(v) => Err(Error::Dimension(format!("initial {what} has length {}, expected {len}", v.len()))),
        None => Ok(draw_vec(rng, len, range)),
    }
}

/// Everything needed to run, after the initial draws.
struct Setup<T: Real> {
    layout: Layout,
    y: DVector<T>,
    comps: Vec<CompensatorState<T>>,
}

fn setup<T: Real>(scenario: &Scenario<T>, analysis: &ScenarioAnalysis<T>) -> Result<Setup<T>> {
    let r = scenario.exosystem.dim();
    let k = analysis.minpoly.degree;
    let h = k / 2;
    let init = &scenario.init;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.sim.seed);

    let w0 = given_or_draw(scenario.exosystem.w0.as_ref(), r, init.range, &mut rng, "w0")?;
    let dims: Vec<(usize, usize)> = scenario
        .agents
        .iter()
        .map(|a| (a.nominal.states(), a.nominal.states() + a.nominal.outputs() * k))
        .collect();
    let layout = Layout::new(r, &dims);
    let mut y = DVector::zeros(layout.len);
    y.rows_mut(0, r).copy_from(&w0);

    let default_init = AgentInit::default();
    let mut comps = Vec::with_capacity(scenario.agents.len());
    for (i, (agent, sl)) in scenario.agents.iter().zip(&layout.agents).enumerate() {
        let ai = init.agents.get(i).unwrap_or(&default_init);
        let zs = &analysis.zeros[i];
        let x = given_or_draw(ai.x.as_ref(), sl.n, init.range, &mut rng, "x")?;
        let w = given_or_draw(ai.w.as_ref(), r, init.range, &mut rng, "w")?;
        let xi = given_or_draw(ai.xi.as_ref(), sl.order, init.range, &mut rng, "xi")?;
        let imag = zs.imag_zero_imags();
        let beta = match &ai.beta {
            Some(b) if b.len() == h => b.clone(),
            Some(b) => return Err(Error::Dimension(format!("initial beta has length {}, expected {h}", b.len()))),
            None => init_beta(&imag, zs.delta, k, &mut rng, init.beta_range)?,
        };
        let alpha = match (&ai.alpha, init.alpha_range) {
            (Some(a), _) if a.len() == h => a.clone(),
            (Some(a), _) => {
                return Err(Error::Dimension(format!("initial alpha has length {}, expected {h}", a.len())))
            }
            (None, Some(range)) => (0..h).map(|_| draw(&mut rng, range)).collect(),
            (None, None) => beta.iter().map(|&b| project_alpha(b, &imag, zs.delta).0).collect(),
        };
        let s = match &ai.s {
            Some(s) if s.shape() == (r, r) => s.clone(),
            Some(_) => return Err(Error::Dimension(format!("initial S must be {r}x{r}"))),
            None if agent.nominal.a.shape() == (r, r) => agent.nominal.a.clone(),
            None => DMatrix::zeros(r, r),
        };
        let estimate = InternalModelEstimate::new(k, alpha, beta)?;
        let gains = synthesize_gains(&agent.nominal, &estimate.lambda(), &zs.zeros, scenario.sim.zero_margin).map_err(
            |e| Error::Synthesis {
                agent: i + 1,
                time: 0.0,
                source: Box::new(e),
            },
        )?;
        y.rows_mut(sl.x, sl.n).copy_from(&x);
        y.rows_mut(sl.xi, sl.order).copy_from(&xi);
        y.rows_mut(sl.w, r).copy_from(&w);
        y.rows_mut(sl.s, r * r).copy_from_slice(s.as_slice());
        comps.push(CompensatorState::new(xi, estimate, gains)?);
    }
    Ok(Setup { layout, y, comps })
}

struct Recorder<'a, T: Real> {
    scenario: &'a Scenario<T>,
    layout: &'a Layout,
    trace: SimulationTrace<T>,
}

impl<T: Real> Recorder<'_, T> {
    fn record(&mut self, t: T, segment: usize, y: &DVector<T>, comps: &[CompensatorState<T>]) {
        let r = self.layout.r;
        let w0 = y.rows(0, r).into_owned();
        let s0 = &self.scenario.exosystem.s0;
        self.trace.times.push(t);
        self.trace.segment.push(segment);
        self.trace.w0.push(w0.as_slice());
        for (i, sl) in self.layout.agents.iter().enumerate() {
            let model = &self.scenario.agents[i].true_model;
            let comp = &comps[i];
            let x = y.rows(sl.x, sl.n).into_owned();
            let xi = y.rows(sl.xi, sl.order).into_owned();
            let w = y.rows(sl.w, r).into_owned();
            let s = DMatrix::from_column_slice(r, r, &y.as_slice()[sl.s..sl.s + r * r]);
            let u = &comp.gains.k * &xi;
            let e = error_output(model, &x, &u, &w);
            let z = regulated_output(model, &x, &u, &w0);
            let lambda = comp.estimate.lambda();
            let flat: Vec<T> = lambda.iter().flat_map(|c| [c.re, c.im]).collect();
            let tr = &mut self.trace.agents[i];
            tr.x.push(x.as_slice());
            tr.xi.push(xi.as_slice());
            tr.w.push(w.as_slice());
            tr.u.push(u.as_slice());
            tr.e.push(e.as_slice());
            tr.z.push(z.as_slice());
            tr.w_err.push((&w - &w0).norm());
            tr.s_err.push((s - s0).norm());
            tr.lambda.push(&flat);
            tr.lambda_err.push(lambda_distance(&lambda, &self.trace.leader_lambda));
        }
    }
}

/// Runs the scenario. Fails when the assumption audit fails unless
/// `sim.force` is set.
pub fn simulate<T: Real>(scenario: &Scenario<T>) -> Result<SimulationTrace<T>> {
    scenario.validate()?;
    if !scenario.sim.force {
        let audit = audit_assumptions(scenario);
        if !audit.passes() {
            return Err(Error::AuditFailed(audit.failures().join("; ")));
        }
    }
    let analysis = analyze(scenario)?;
    simulate_with(scenario, &analysis)
}

/// [`simulate`] without the audit, reusing a precomputed analysis.
pub fn simulate_with<T: Real>(scenario: &Scenario<T>, analysis: &ScenarioAnalysis<T>) -> Result<SimulationTrace<T>> {
    scenario.validate()?;
    let Setup { layout, mut y, mut comps } = setup(scenario, analysis)?;
    let sim = &scenario.sim;
    let dt = sim.dt;
    let half = dt * T::lit(0.5);
    let steps = scenario.step_count();
    let r = layout.r;
    let k = analysis.minpoly.degree;
    let models: Vec<AgentModel<T>> = scenario.agents.iter().map(|a| a.true_model.clone()).collect();
    let imag_zeros: Vec<Vec<T>> = analysis.zeros.iter().map(|z| z.imag_zero_imags()).collect();
    let deltas: Vec<T> = analysis.zeros.iter().map(|z| z.delta).collect();
    let network = EstimateNetwork {
        imag_zero_imags: &imag_zeros,
        deltas: &deltas,
    };

    let agent_traces = scenario
        .agents
        .iter()
        .zip(&layout.agents)
        .map(|(a, sl)| AgentTrace::new(sl.n, sl.order, r, a.nominal.inputs(), a.nominal.outputs(), k))
        .collect();
    let mut rec = Recorder {
        scenario,
        layout: &layout,
        trace: SimulationTrace {
            seed: sim.seed,
            dt,
            record_every: sim.record_every,
            draw_order: DRAW_ORDER,
            times: Vec::new(),
            segment: Vec::new(),
            w0: Series::new(r),
            agents: agent_traces,
            events: Vec::new(),
            leader_lambda: analysis.leader_lambda.clone(),
        },
    };
    let time_of = |step: usize| T::from_usize(step).unwrap() * dt;
    let segment_of = |step: usize| scenario.schedule.segment_index_at(time_of(step) + half);
    rec.record(T::zero(), segment_of(0), &y, &comps);

    for step in 0..steps {
        let t = time_of(step);
        let seg = segment_of(step);
        let graph = &scenario.schedule.segments()[seg].graph;

        if sim.learn_eigenvalues {
            let current: Vec<_> = comps.iter().map(|c| c.estimate.clone()).collect();
            let next = eig_update_step(&current, &analysis.leader_imags, graph, &network, dt)?;
            for (i, (comp, est)) in comps.iter_mut().zip(next).enumerate() {
                comp.estimate = est;
                let changed = comp
                    .maybe_resynthesize(
                        &scenario.agents[i].nominal,
                        &analysis.zeros[i].zeros,
                        sim.zero_margin,
                        sim.resynth_margin,
                    )
                    .map_err(|e| Error::Synthesis {
                        agent: i + 1,
                        time: t.as_f64(),
                        source: Box::new(e),
                    })?;
                if changed {
                    rec.trace.events.push(ResynthEvent {
                        time: t,
                        agent: i,
                        lambda: comp.gains.synth_lambda.clone(),
                    });
                }
                comp.track_estimate().map_err(|e| Error::Synthesis {
                    agent: i + 1,
                    time: t.as_f64(),
                    source: Box::new(e),
                })?;
            }
        }

        let field = Field {
            layout: &layout,
            s0: &scenario.exosystem.s0,
            models: &models,
            comps: &comps,
            graph,
        };
        y = sim.integrator.step(|_, v: &DVector<T>| field.eval(v), &y, t, dt);
        for (comp, sl) in comps.iter_mut().zip(&layout.agents) {
            comp.xi.copy_from(&y.rows(sl.xi, sl.order));
        }
        let done = step + 1;
        if done % sim.record_every == 0 || done == steps {
            rec.record(time_of(done), segment_of(done), &y, &comps);
        }
    }
    Ok(rec.trace)
}

/// Alternating pair of graphs used for the four-agent example: neither has a
/// globally reachable node, their union is rooted at node 0.
pub fn section5_schedule<T: Real>(segment: T) -> Result<TopologySchedule<T>> {
    let alpha_min = T::lit(crate::graphnet::DEFAULT_ALPHA_MIN);
    let one = T::one();
    let g1 = WeightedDigraph::from_edges(5, &[(0, 1, one), (2, 3, one)], alpha_min)?;
    let g2 = WeightedDigraph::from_edges(5, &[(1, 2, one), (3, 4, one)], alpha_min)?;
    TopologySchedule::new(
        vec![
            Segment {
                duration: segment,
                graph: g1,
            },
            Segment {
                duration: segment,
                graph: g2,
            },
        ],
        true,
    )
}

/// The four heterogeneous oscillators tracking `S0 = [[0, 2], [-2, 0]]`, with
/// the rotation-rate perturbation `[[0, 0.1], [-0.1, 0]]` on every `A`.
pub fn section5<T: Real>(seed: u64) -> Result<Scenario<T>> {
    let l = T::lit;
    let s0 = DMatrix::from_row_slice(2, 2, &[l(0.0), l(2.0), l(-2.0), l(0.0)]);
    let delta = DMatrix::from_row_slice(2, 2, &[l(0.0), l(0.1), l(-0.1), l(0.0)]);
    let agents = [1.6, 1.7, 1.8, 2.5]
        .iter()
        .map(|&omega| {
            let nominal = AgentModel::new(
                DMatrix::from_row_slice(2, 2, &[l(0.0), l(omega), l(-omega), l(0.0)]),
                DMatrix::from_row_slice(2, 1, &[l(0.0), l(1.0)]),
                DMatrix::from_row_slice(1, 2, &[l(1.0), l(0.0)]),
                DMatrix::zeros(1, 1),
                DMatrix::zeros(2, 2),
                DMatrix::from_row_slice(1, 2, &[l(-1.0), l(0.0)]),
            )?;
            AgentSpec::new(
                nominal,
                PerturbationSpec {
                    a: Some(delta.clone()),
                    ..Default::default()
                },
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Scenario {
        exosystem: Exosystem::new(s0, None)?,
        agents,
        schedule: section5_schedule(T::one())?,
        sim: SimConfig {
            seed,
            ..SimConfig::default()
        },
        init: InitSpec {
            alpha_range: Some((T::zero(), T::one())),
            ..InitSpec::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphnet::is_globally_reachable;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn perturb_examples() {
        let sc = section5::<f64>(0).unwrap();
        let a1 = &sc.agents[0];
        assert!((&a1.true_model.a - dmatrix![0.0, 1.7; -1.7, 0.0]).norm() < 1e-15);
        assert_eq!(a1.nominal.a, dmatrix![0.0, 1.6; -1.6, 0.0]);
        assert_eq!(perturb(&a1.nominal, &PerturbationSpec::default()).unwrap(), a1.nominal);
        let q_only = PerturbationSpec {
            q: Some(dmatrix![0.5, 0.0]),
            ..Default::default()
        };
        let shifted = perturb(&a1.nominal, &q_only).unwrap();
        assert_eq!(shifted.a, a1.nominal.a);
        assert_eq!(shifted.q, dmatrix![-0.5, 0.0]);
        let bad = PerturbationSpec {
            a: Some(DMatrix::zeros(3, 3)),
            ..Default::default()
        };
        assert!(perturb(&a1.nominal, &bad).is_err());
    }

    #[test]
    fn example_graphs_are_only_jointly_rooted() {
        let s = section5_schedule(1.0f64).unwrap();
        for seg in s.segments() {
            assert!(!is_globally_reachable(&seg.graph, 0));
        }
        let u = crate::graphnet::union_digraph(&s, 0.0, 2.0).unwrap();
        assert!(is_globally_reachable(&u, 0));
    }

    fn short(mut sc: Scenario<f64>, t_final: f64) -> Scenario<f64> {
        sc.sim.t_final = t_final;
        sc
    }

    #[test]
    fn deterministic_given_seed() {
        let sc = short(section5(7).unwrap(), 2.0);
        let a = simulate(&sc).unwrap();
        let b = simulate(&sc).unwrap();
        assert_eq!(a, b);
        let c = simulate(&short(section5(8).unwrap(), 2.0)).unwrap();
        assert_ne!(a.w0, c.w0);
    }

    #[test]
    fn segment_annotation_follows_schedule() {
        let mut sc = short(section5(1).unwrap(), 3.0);
        sc.sim.record_every = 250;
        let tr = simulate(&sc).unwrap();
        let expect: Vec<usize> = tr.times.iter().map(|t| sc.schedule.segment_index_at(t + 5e-4)).collect();
        assert_eq!(tr.segment, expect);
        assert_eq!(tr.times.len(), 13);
        assert_eq!(&tr.segment[..5], &[0, 0, 0, 0, 1]);
    }

    #[test]
    fn explicit_initial_values_are_used() {
        let mut sc = short(section5(3).unwrap(), 0.01);
        sc.exosystem.w0 = Some(dvector![1.0, 0.0]);
        sc.init.agents = vec![
            AgentInit {
                x: Some(dvector![0.5, 0.5]),
                beta: Some(vec![0.25]),
                alpha: Some(vec![0.0]),
                ..Default::default()
            };
            4
        ];
        let tr = simulate(&sc).unwrap();
        assert_eq!(tr.w0.row(0), &[1.0, 0.0]);
        assert_eq!(tr.agents[2].x.row(0), &[0.5, 0.5]);
        assert_eq!(tr.agents[2].lambda.row(0), &[0.0, 0.25, 0.0, -0.25]);
    }

    #[test]
    fn misaligned_switching_is_rejected() {
        let mut sc = section5::<f64>(0).unwrap();
        sc.sim.dt = 3e-3;
        sc.schedule = section5_schedule(0.0101).unwrap();
        assert!(matches!(sc.validate(), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn regulating_nothing() {
        let agent = AgentModel::new(
            dmatrix![-1.0, 0.0; 0.0, -2.0],
            dmatrix![1.0; 1.0],
            dmatrix![1.0, 1.0],
            dmatrix![0.0],
            DMatrix::zeros(2, 1),
            DMatrix::zeros(1, 1),
        )
        .unwrap();
        let g = WeightedDigraph::from_edges(2, &[(0, 1, 1.0)], 0.1).unwrap();
        let sc = Scenario {
            exosystem: Exosystem::new(dmatrix![0.0], Some(dvector![0.0])).unwrap(),
            agents: vec![AgentSpec::unperturbed(agent).unwrap()],
            schedule: TopologySchedule::constant(g),
            sim: SimConfig {
                t_final: 30.0,
                dt: 1e-2,
                ..Default::default()
            },
            init: InitSpec::default(),
        };
        let tr = simulate(&sc).unwrap();
        let z = tr.agents[0].z_norm();
        assert!(z.last().unwrap() < &1e-6, "{:?}", z.last());
    }
}
