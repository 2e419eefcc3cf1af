//! Numerical checks behind the regulation result: the assumption audit, the
//! closed-loop matrix and regulator equations, exponential-rate fits and the
//! robustness sweep.

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::controllers::{synthesize_gains, CompensatorGains, HURWITZ_MARGIN};
use crate::error::{Error, Result};
use crate::graphnet::check_uniform_reachability;
use crate::integrate::rk4_step;
use crate::linalg::{
    eigenvalues, is_hurwitz, pbh_detectable, pbh_stabilizable, set_distance, solve_sylvester, spectral_abscissa,
    sylvester_residual, transmission_zeros,
};
use crate::model::AgentModel;
use crate::scalar::Real;
use crate::sim::{analyze, Scenario};

/// Minimum separation between `sigma(S0)` and an agent's zeros for (A5).
pub const A5_MARGIN: f64 = 1e-6;
/// Output residual accepted at perturbed data points.
pub const PERTURBED_RESIDUAL_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct AgentAudit {
    pub stabilizable: bool,
    pub detectable: bool,
    /// `d(sigma(S0), zeros)`; infinite without zeros, `None` when the zeros
    /// could not be computed.
    pub zero_separation: Option<f64>,
    pub a5: bool,
    pub delta: Option<f64>,
    pub zeros: Vec<[f64; 2]>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct AssumptionReport {
    pub agents: Vec<AgentAudit>,
    /// `max |Re sigma(S0)|`.
    pub a3_max_real: f64,
    pub a3: bool,
    pub a4_window: f64,
    pub a4: bool,
    pub a4_note: Option<String>,
    pub a5_margin: f64,
}

impl AssumptionReport {
    pub fn a1(&self) -> bool {
        self.agents.iter().all(|a| a.stabilizable)
    }

    pub fn a2(&self) -> bool {
        self.agents.iter().all(|a| a.detectable)
    }

    pub fn a5(&self) -> bool {
        self.agents.iter().all(|a| a.a5)
    }

    /// Verdicts for A1..A5 in order.
    pub fn verdicts(&self) -> [bool; 5] {
        [self.a1(), self.a2(), self.a3, self.a4, self.a5()]
    }

    pub fn passes(&self) -> bool {
        self.verdicts().iter().all(|v| *v)
    }

    pub fn failures(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, a) in self.agents.iter().enumerate() {
            if !a.stabilizable {
                out.push(format!("A1: agent {} not stabilizable", i + 1));
            }
            if !a.detectable {
                out.push(format!("A2: agent {} not detectable", i + 1));
            }
        }
        if !self.a3 {
            out.push(format!("A3: exosystem eigenvalue with real part {:e}", self.a3_max_real));
        }
        if !self.a4 {
            let why = self.a4_note.clone().unwrap_or_else(|| "node 0 not uniformly globally reachable".into());
            out.push(format!("A4: {why} (window {})", self.a4_window));
        }
        for (i, a) in self.agents.iter().enumerate() {
            if !a.a5 {
                let why = match (&a.note, a.zero_separation) {
                    (Some(n), _) => n.clone(),
                    (None, Some(d)) => format!("separation {d:e}"),
                    (None, None) => "zeros unavailable".into(),
                };
                out.push(format!("A5: agent {}: {why}", i + 1));
            }
        }
        out
    }
}

/// Checks (A1)-(A5) on the nominal models. Never fails: problems become
/// report entries.
pub fn audit_assumptions<T: Real>(scenario: &Scenario<T>) -> AssumptionReport {
    let tol = scenario.sim.rank_tol;
    let s0 = &scenario.exosystem.s0;
    let spectrum = eigenvalues(s0).ok();
    let a3_max_real = spectrum
        .as_ref()
        .map(|s| s.iter().fold(0.0f64, |acc, z| acc.max(z.re.as_f64().abs())))
        .unwrap_or(f64::NAN);
    let a3_tol = tol.as_f64().sqrt() * (1.0 + s0.norm().as_f64());
    let a3 = a3_max_real <= a3_tol;

    let window = scenario.sim.a4_window.unwrap_or_else(|| scenario.schedule.period());
    let (a4, a4_note) = match check_uniform_reachability(&scenario.schedule, window) {
        Ok(ok) => (ok, None),
        Err(e) => (false, Some(e.to_string())),
    };

    let agents = scenario
        .agents
        .iter()
        .map(|agent| {
            let m = &agent.nominal;
            let stabilizable = pbh_stabilizable(&m.a, &m.b, tol).unwrap_or(false);
            let detectable = pbh_detectable(&m.c, &m.a, tol).unwrap_or(false);
            let zs = transmission_zeros(m, tol);
            let (zero_separation, delta, zeros, note) = match (&zs, &spectrum) {
                (Ok(zs), Some(spec)) => {
                    let sep = if zs.zeros.is_empty() {
                        f64::INFINITY
                    } else {
                        set_distance(spec, &zs.zeros).map(|d| d.as_f64()).unwrap_or(f64::NAN)
                    };
                    let delta = zs.clone().with_delta(spec).ok().map(|z| z.delta.as_f64());
                    (Some(sep), delta, zs.zeros.iter().map(|z| [z.re.as_f64(), z.im.as_f64()]).collect(), None)
                }
                (Err(e), _) => (None, None, Vec::new(), Some(e.to_string())),
                (_, None) => (None, None, Vec::new(), Some("exosystem spectrum unavailable".into())),
            };
            let a5 = zero_separation.is_some_and(|d| d > A5_MARGIN);
            AgentAudit {
                stabilizable,
                detectable,
                zero_separation,
                a5,
                delta,
                zeros,
                note,
            }
        })
        .collect();
    AssumptionReport {
        agents,
        a3_max_real,
        a3,
        a4_window: window.as_f64(),
        a4,
        a4_note,
        a5_margin: A5_MARGIN,
    }
}

/// `M = [[A, B K], [F C, E + F D K]]` for plant data `data` under `gains`.
pub fn closed_loop_matrix<T: Real>(data: &AgentModel<T>, gains: &CompensatorGains<T>) -> DMatrix<T> {
    let n = data.states();
    let o = gains.order();
    let mut m = DMatrix::zeros(n + o, n + o);
    m.view_mut((0, 0), (n, n)).copy_from(&data.a);
    m.view_mut((0, n), (n, o)).copy_from(&(&data.b * &gains.k));
    m.view_mut((n, 0), (o, n)).copy_from(&(&gains.f * &data.c));
    m.view_mut((n, n), (o, o))
        .copy_from(&(&gains.e + &gains.f * &data.d * &gains.k));
    m
}

#[derive(Clone, Debug)]
pub struct RegulatorSolution<T: Real> {
    pub m: DMatrix<T>,
    pub x: DMatrix<T>,
    pub sylvester_residual: T,
    /// Scale the Sylvester residual should be compared against:
    /// `(||M|| + ||S0||) ||X|| + ||R||`.
    pub scale: T,
    /// `||[C, D K] X + Q||_F`.
    pub output_residual: T,
}

/// Solves `X S0 = M X + [P; F Q]` and evaluates the output equation.
pub fn regulator_solution<T: Real>(
    data: &AgentModel<T>,
    gains: &CompensatorGains<T>,
    s0: &DMatrix<T>,
) -> Result<RegulatorSolution<T>> {
    let m = closed_loop_matrix(data, gains);
    if !is_hurwitz(&m, T::lit(HURWITZ_MARGIN))? {
        return Err(Error::NotHurwitz {
            abscissa: spectral_abscissa(&m)?.as_f64(),
        });
    }
    let n = data.states();
    let o = gains.order();
    let r = s0.nrows();
    let mut rhs = DMatrix::zeros(n + o, r);
    rhs.view_mut((0, 0), (n, r)).copy_from(&data.p);
    rhs.view_mut((n, 0), (o, r)).copy_from(&(&gains.f * &data.q));
    let x = solve_sylvester(&m, s0, &rhs)?;
    let sylvester_residual = sylvester_residual(&m, s0, &rhs, &x);
    let scale = (m.norm() + s0.norm()) * x.norm() + rhs.norm();
    let mut out_map = DMatrix::zeros(data.outputs(), n + o);
    out_map.view_mut((0, 0), (data.outputs(), n)).copy_from(&data.c);
    out_map
        .view_mut((0, n), (data.outputs(), o))
        .copy_from(&(&data.d * &gains.k));
    let output_residual = (out_map * &x + &data.q).norm();
    Ok(RegulatorSolution {
        m,
        x,
        sylvester_residual,
        scale,
        output_residual,
    })
}

/// Least-squares fit of `ln y = intercept + slope t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RateFit {
    /// Per second; `-inf` when the whole tail is exactly zero.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub samples: usize,
}

impl RateFit {
    pub fn decays(&self, max_slope: f64, min_r_squared: f64) -> bool {
        self.slope < max_slope && (self.slope == f64::NEG_INFINITY || self.r_squared >= min_r_squared)
    }
}

/// Fits the last `tail_fraction` of the samples (by time). Exact zeros are
/// skipped; negative or non-finite values are rejected.
pub fn exp_rate_fit<T: Real>(times: &[T], values: &[T], tail_fraction: f64) -> Result<RateFit> {
    if times.len() != values.len() {
        return Err(Error::Dimension("times and values differ in length".into()));
    }
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("tail fraction {tail_fraction} outside (0, 1]")));
    }
    let (Some(first), Some(last)) = (times.first(), times.last()) else {
        return Err(Error::InvalidArgument("empty series".into()));
    };
    let (t0, t1) = (first.as_f64(), last.as_f64());
    let start = t1 - tail_fraction * (t1 - t0);
    let mut pts = Vec::new();
    let mut seen = 0;
    for (t, v) in times.iter().zip(values) {
        let (t, v) = (t.as_f64(), v.as_f64());
        if t < start {
            continue;
        }
        seen += 1;
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidArgument(format!("sample {v} at t = {t} is not a nonnegative number")));
        }
        if v > 0.0 {
            pts.push((t, v.ln()));
        }
    }
    if seen == 0 {
        return Err(Error::InvalidArgument("tail window is empty".into()));
    }
    if pts.is_empty() {
        return Ok(RateFit {
            slope: f64::NEG_INFINITY,
            intercept: f64::NEG_INFINITY,
            r_squared: 1.0,
            samples: seen,
        });
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt = pts.iter().map(|p| (p.0 - mt).powi(2)).sum::<f64>();
    let sty = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum::<f64>();
    let syy = pts.iter().map(|p| (p.1 - my).powi(2)).sum::<f64>();
    let slope = if stt > 0.0 { sty / stt } else { 0.0 };
    let intercept = my - slope * mt;
    let r_squared = if syy > 0.0 { (sty * sty) / (stt * syy) } else { 1.0 };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
        samples: pts.len(),
    })
}

/// Running maximum of `values` over the trailing window `[t - window, t]`.
///
/// Oscillating decays have zero crossings that wreck a log-linear fit of the
/// raw signal; the envelope keeps only the decay.
pub fn trailing_max<T: Real>(times: &[T], values: &[T], window: T) -> Vec<T> {
    let mut out = Vec::with_capacity(values.len());
    let mut queue = std::collections::VecDeque::<usize>::new();
    for i in 0..values.len() {
        while queue.back().is_some_and(|&j| values[j] <= values[i]) {
            queue.pop_back();
        }
        queue.push_back(i);
        while queue.front().is_some_and(|&j| times[j] < times[i] - window) {
            queue.pop_front();
        }
        out.push(values[queue[0]]);
    }
    out
}

/// Decay fit of an oscillating signal that may bottom out at rounding level.
///
/// Takes the trailing-max envelope over `window`, cuts the horizon where the
/// envelope first drops below `floor`, and fits the last `tail_fraction` of
/// what is left.
pub fn envelope_rate_fit<T: Real>(times: &[T], values: &[T], window: T, floor: T, tail_fraction: f64) -> Result<RateFit> {
    let env = trailing_max(times, values, window);
    let cut = env.iter().position(|v| *v < floor).unwrap_or(env.len());
    if cut < 2 {
        return Err(Error::InvalidArgument(format!("signal starts below the floor {floor}")));
    }
    exp_rate_fit(&times[..cut], &env[..cut], tail_fraction)
}

/// Integrates `x' = (A1(t) + A2(t)) x + A3(t)` by RK4 over `[0, horizon]` and
/// fits the decay of `||x||` over the second half.
pub fn lemma2_probe<T: Real>(
    a1: impl Fn(T) -> DMatrix<T>,
    a2: impl Fn(T) -> DMatrix<T>,
    a3: impl Fn(T) -> DVector<T>,
    x0: &DVector<T>,
    horizon: T,
    dt: T,
) -> Result<RateFit> {
    if !(dt > T::zero()) || !(horizon > T::zero()) {
        return Err(Error::InvalidArgument("dt and horizon must be positive".into()));
    }
    let steps = (horizon / dt).round().to_usize().unwrap_or(0);
    let f = |t: T, x: &DVector<T>| (a1(t) + a2(t)) * x + a3(t);
    let mut x = x0.clone();
    let mut times = vec![T::zero()];
    let mut norms = vec![x.norm()];
    for s in 0..steps {
        let t = T::from_usize(s).unwrap() * dt;
        x = rk4_step(f, &x, t, dt);
        times.push(t + dt);
        norms.push(x.norm());
    }
    exp_rate_fit(&times, &norms, 0.5)
}

type SpectrumPair<T> = (Vec<Complex<T>>, Vec<Complex<T>>);

/// Spectrum of `M(lambda_0)` next to the union the block-triangular change of
/// coordinates predicts: `sigma(A - L C)` and the design closed loop.
pub fn triangularized_spectra<T: Real>(
    data: &AgentModel<T>,
    gains: &CompensatorGains<T>,
) -> Result<SpectrumPair<T>> {
    let m = eigenvalues(&closed_loop_matrix(data, gains))?;
    let mut pred = eigenvalues(&(&data.a - &gains.l_obs * &data.c))?;
    pred.extend(eigenvalues(&gains.design_matrix(data))?);
    Ok((m, pred))
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub radius: f64,
    /// Agent-sample pairs tried and passed.
    pub tried: usize,
    pub passed: usize,
    pub fraction: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Per agent: does the scenario's own true model pass?
    pub fixed_probe: Vec<bool>,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sample uniformly from the Frobenius ball of `radius` in the space of all
/// six plant matrices.
fn ball_sample<T: Real, R: Rng>(like: &AgentModel<T>, radius: f64, rng: &mut R) -> AgentModel<T> {
    let mut delta = like.zeros_like();
    let dim: usize = delta.matrices().iter().map(|m| m.len()).sum();
    let mut dirs: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let len = dirs.iter().map(|x| x * x).sum::<f64>().sqrt();
    let u: f64 = rng.random();
    let rho = radius * u.powf(1.0 / dim as f64);
    if len > 0.0 {
        dirs.iter_mut().for_each(|x| *x *= rho / len);
    }
    let mut it = dirs.into_iter();
    for m in delta.matrices_mut() {
        for v in m.iter_mut() {
            *v = T::lit(it.next().unwrap());
        }
    }
    delta
}

fn data_point_passes<T: Real>(data: &AgentModel<T>, gains: &CompensatorGains<T>, s0: &DMatrix<T>) -> bool {
    regulator_solution(data, gains, s0).is_ok_and(|sol| sol.output_residual <= T::lit(PERTURBED_RESIDUAL_TOL))
}

/// Fraction of random plant perturbations, per radius, under which the
/// nominal gains at `lambda_0` keep `M` Hurwitz and the regulator output
/// residual small. Deterministic given `seed`; each (radius, sample) pair
/// gets its own derived stream.
pub fn perturbation_sweep<T: Real>(
    scenario: &Scenario<T>,
    radius_grid: &[f64],
    samples_per_radius: usize,
    seed: u64,
) -> Result<SweepReport> {
    let analysis = analyze(scenario)?;
    let s0 = &scenario.exosystem.s0;
    let gains = scenario
        .agents
        .iter()
        .zip(&analysis.zeros)
        .map(|(a, zs)| synthesize_gains(&a.nominal, &analysis.leader_lambda, &zs.zeros, scenario.sim.zero_margin))
        .collect::<Result<Vec<_>>>()?;
    let fixed_probe = scenario
        .agents
        .iter()
        .zip(&gains)
        .map(|(a, g)| data_point_passes(&a.true_model, g, s0))
        .collect();
    let rows = radius_grid
        .iter()
        .enumerate()
        .map(|(ri, &radius)| {
            let passed: usize = (0..samples_per_radius)
                .into_par_iter()
                .map(|si| {
                    let stream = splitmix(seed ^ splitmix(((ri as u64) << 32) | si as u64));
                    let mut rng = ChaCha8Rng::seed_from_u64(stream);
                    scenario
                        .agents
                        .iter()
                        .zip(&gains)
                        .filter(|(a, g)| {
                            let delta = ball_sample(&a.nominal, radius, &mut rng);
                            a.nominal
                                .offset_by(&delta)
                                .is_ok_and(|data| data_point_passes(&data, g, s0))
                        })
                        .count()
                })
                .sum();
            let tried = samples_per_radius * scenario.agents.len();
            SweepRow {
                radius,
                tried,
                passed,
                fraction: if tried == 0 { 1.0 } else { passed as f64 / tried as f64 },
            }
        })
        .collect();
    Ok(SweepReport { rows, fixed_probe })
}
