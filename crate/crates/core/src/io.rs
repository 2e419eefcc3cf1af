//! Scenario files, trace CSVs, summary reports and plot scripts.
//!
//! Scenario files are JSON. Matrices are row-major nested arrays so they can
//! be checked against printed displays by eye.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphnet::{Segment, TopologySchedule, WeightedDigraph, DEFAULT_ALPHA_MIN};
use crate::integrate::Integrator;
use crate::model::{AgentModel, Exosystem};
use crate::scalar::Real;
use crate::sim::{AgentInit, AgentSpec, InitSpec, PerturbationSpec, Scenario, SimConfig, SimulationTrace};
use crate::verification::{envelope_rate_fit, AssumptionReport, RateFit};

/// The four-agent example shipped with the crate.
pub const SECTION5_SCENARIO: &str = include_str!("../scenarios/section5.scenario");

type Rows = Vec<Vec<f64>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub exosystem: ExosystemFile,
    pub agents: Vec<AgentFile>,
    pub topology: TopologyFile,
    #[serde(default)]
    pub sim: SimFile,
    #[serde(default)]
    pub init: InitFile,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExosystemFile {
    #[serde(rename = "S0")]
    pub s0: Rows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w0: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "C")]
    pub c: Rows,
    #[serde(rename = "D")]
    pub d: Rows,
    #[serde(rename = "P")]
    pub p: Rows,
    #[serde(rename = "Q")]
    pub q: Rows,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationFile {
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Rows>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Rows>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Rows>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<Rows>,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Rows>,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Rows>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentFile {
    pub nominal: ModelFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeFile {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentFile {
    pub duration: f64,
    pub edges: Vec<EdgeFile>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyFile {
    pub segments: Vec<SegmentFile>,
    #[serde(default = "yes")]
    pub repeat: bool,
    #[serde(default = "default_alpha_min")]
    pub alpha_min: f64,
}

fn yes() -> bool {
    true
}

fn default_alpha_min() -> f64 {
    DEFAULT_ALPHA_MIN
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimFile {
    pub dt: f64,
    pub t_final: f64,
    pub integrator: Integrator,
    pub seed: u64,
    pub resynth_margin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a4_window: Option<f64>,
    pub zero_margin: f64,
    pub rank_tol: f64,
    pub record_every: usize,
    pub learn_eigenvalues: bool,
    pub force: bool,
}

impl Default for SimFile {
    fn default() -> Self {
        Self::from_config(&SimConfig::<f64>::default())
    }
}

impl SimFile {
    fn from_config<T: Real>(c: &SimConfig<T>) -> Self {
        Self {
            dt: c.dt.as_f64(),
            t_final: c.t_final.as_f64(),
            integrator: c.integrator,
            seed: c.seed,
            resynth_margin: c.resynth_margin.as_f64(),
            a4_window: c.a4_window.map(Real::as_f64),
            zero_margin: c.zero_margin.as_f64(),
            rank_tol: c.rank_tol.as_f64(),
            record_every: c.record_every,
            learn_eigenvalues: c.learn_eigenvalues,
            force: c.force,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentInitFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<f64>>,
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub s: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitFile {
    pub range: [f64; 2],
    pub beta_range: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_range: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub agents: Vec<AgentInitFile>,
}

impl Default for InitFile {
    fn default() -> Self {
        Self {
            range: [-1.0, 1.0],
            beta_range: [-1.0, 1.0],
            alpha_range: None,
            agents: Vec::new(),
        }
    }
}

fn scenario_err(path: impl Into<String>, message: impl ToString) -> Error {
    Error::Scenario {
        path: path.into(),
        message: message.to_string(),
    }
}

fn matrix<T: Real>(rows: &Rows, path: &str) -> Result<DMatrix<T>> {
    let ncols = rows.first().map_or(0, Vec::len);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(scenario_err(
                format!("{path}[{i}]"),
                format!("dimension mismatch: row has {} entries, expected {ncols}", r.len()),
            ));
        }
    }
    for (i, r) in rows.iter().enumerate() {
        if let Some(j) = r.iter().position(|v| !v.is_finite()) {
            return Err(scenario_err(format!("{path}[{i}][{j}]"), "not a finite number"));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| T::lit(rows[i][j])))
}

fn vector<T: Real>(v: &[f64], path: &str) -> Result<DVector<T>> {
    if let Some(j) = v.iter().position(|x| !x.is_finite()) {
        return Err(scenario_err(format!("{path}[{j}]"), "not a finite number"));
    }
    Ok(DVector::from_iterator(v.len(), v.iter().map(|x| T::lit(*x))))
}

fn rows_of<T: Real>(m: &DMatrix<T>) -> Rows {
    m.row_iter().map(|r| r.iter().map(|x| x.as_f64()).collect()).collect()
}

fn vec_of<T: Real>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

fn model<T: Real>(f: &ModelFile, path: &str) -> Result<AgentModel<T>> {
    let m = AgentModel {
        a: matrix(&f.a, &format!("{path}.A"))?,
        b: matrix(&f.b, &format!("{path}.B"))?,
        c: matrix(&f.c, &format!("{path}.C"))?,
        d: matrix(&f.d, &format!("{path}.D"))?,
        p: matrix(&f.p, &format!("{path}.P"))?,
        q: matrix(&f.q, &format!("{path}.Q"))?,
    };
    m.validate().map_err(|e| scenario_err(path, e))?;
    Ok(m)
}

fn opt_matrix<T: Real>(m: &Option<Rows>, path: &str) -> Result<Option<DMatrix<T>>> {
    m.as_ref().map(|r| matrix(r, path)).transpose()
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            scenario_err(path, e.into_inner())
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn into_scenario<T: Real>(&self) -> Result<Scenario<T>> {
        let s0 = matrix(&self.exosystem.s0, "exosystem.S0")?;
        if !s0.is_square() || s0.nrows() == 0 {
            return Err(scenario_err(
                "exosystem.S0",
                format!("dimension mismatch: S0 is {}x{}, must be square", s0.nrows(), s0.ncols()),
            ));
        }
        let w0 = self
            .exosystem
            .w0
            .as_ref()
            .map(|w| vector(w, "exosystem.w0"))
            .transpose()?;
        let exosystem = Exosystem::new(s0, w0).map_err(|e| scenario_err("exosystem", e))?;

        if self.agents.is_empty() {
            return Err(scenario_err("agents", "at least one agent is required"));
        }
        let mut agents = Vec::with_capacity(self.agents.len());
        for (i, a) in self.agents.iter().enumerate() {
            let path = format!("agents[{i}]");
            let nominal = model(&a.nominal, &format!("{path}.nominal"))?;
            let pert = a.perturbation.clone().unwrap_or_default();
            let pp = format!("{path}.perturbation");
            let spec = PerturbationSpec {
                a: opt_matrix(&pert.a, &format!("{pp}.A"))?,
                b: opt_matrix(&pert.b, &format!("{pp}.B"))?,
                c: opt_matrix(&pert.c, &format!("{pp}.C"))?,
                d: opt_matrix(&pert.d, &format!("{pp}.D"))?,
                p: opt_matrix(&pert.p, &format!("{pp}.P"))?,
                q: opt_matrix(&pert.q, &format!("{pp}.Q"))?,
            };
            agents.push(AgentSpec::new(nominal, spec).map_err(|e| scenario_err(pp, e))?);
        }

        let nodes = agents.len() + 1;
        let topo = &self.topology;
        let mut segments = Vec::with_capacity(topo.segments.len());
        for (k, s) in topo.segments.iter().enumerate() {
            let path = format!("topology.segments[{k}]");
            for (e, edge) in s.edges.iter().enumerate() {
                if edge.from >= nodes || edge.to >= nodes {
                    return Err(scenario_err(
                        format!("{path}.edges[{e}]"),
                        format!("node index out of range 0..{nodes}"),
                    ));
                }
            }
            let edges: Vec<(usize, usize, T)> = s.edges.iter().map(|e| (e.from, e.to, T::lit(e.weight))).collect();
            let graph = WeightedDigraph::from_edges(nodes, &edges, T::lit(topo.alpha_min))
                .map_err(|e| scenario_err(format!("{path}.edges"), e))?;
            segments.push(Segment {
                duration: T::lit(s.duration),
                graph,
            });
        }
        let schedule = TopologySchedule::new(segments, topo.repeat).map_err(|e| scenario_err("topology", e))?;

        let s = &self.sim;
        let sim = SimConfig {
            dt: T::lit(s.dt),
            t_final: T::lit(s.t_final),
            integrator: s.integrator,
            seed: s.seed,
            resynth_margin: T::lit(s.resynth_margin),
            a4_window: s.a4_window.map(T::lit),
            zero_margin: T::lit(s.zero_margin),
            rank_tol: T::lit(s.rank_tol),
            record_every: s.record_every,
            learn_eigenvalues: s.learn_eigenvalues,
            force: s.force,
        };

        let ini = &self.init;
        let pair = |r: [f64; 2]| (T::lit(r[0]), T::lit(r[1]));
        let mut init_agents = Vec::with_capacity(ini.agents.len());
        for (i, a) in ini.agents.iter().enumerate() {
            let path = format!("init.agents[{i}]");
            let v = |x: &Option<Vec<f64>>, name: &str| x.as_ref().map(|x| vector(x, &format!("{path}.{name}"))).transpose();
            init_agents.push(AgentInit {
                x: v(&a.x, "x")?,
                xi: v(&a.xi, "xi")?,
                w: v(&a.w, "w")?,
                s: opt_matrix(&a.s, &format!("{path}.S"))?,
                beta: v(&a.beta, "beta")?.map(|b| b.iter().copied().collect()),
                alpha: v(&a.alpha, "alpha")?.map(|b| b.iter().copied().collect()),
            });
        }
        let init = InitSpec {
            range: pair(ini.range),
            beta_range: pair(ini.beta_range),
            alpha_range: ini.alpha_range.map(pair),
            agents: init_agents,
        };

        let scenario = Scenario {
            exosystem,
            agents,
            schedule,
            sim,
            init,
        };
        scenario.validate().map_err(|e| scenario_err("", e))?;
        Ok(scenario)
    }

    pub fn from_scenario<T: Real>(sc: &Scenario<T>) -> Self {
        let model_file = |m: &AgentModel<T>| ModelFile {
            a: rows_of(&m.a),
            b: rows_of(&m.b),
            c: rows_of(&m.c),
            d: rows_of(&m.d),
            p: rows_of(&m.p),
            q: rows_of(&m.q),
        };
        let agents = sc
            .agents
            .iter()
            .map(|a| {
                let p = &a.perturbation;
                let o = |m: &Option<DMatrix<T>>| m.as_ref().map(rows_of);
                AgentFile {
                    nominal: model_file(&a.nominal),
                    perturbation: (!p.is_empty()).then(|| PerturbationFile {
                        a: o(&p.a),
                        b: o(&p.b),
                        c: o(&p.c),
                        d: o(&p.d),
                        p: o(&p.p),
                        q: o(&p.q),
                    }),
                }
            })
            .collect();
        let segments = sc
            .schedule
            .segments()
            .iter()
            .map(|s| SegmentFile {
                duration: s.duration.as_f64(),
                edges: s
                    .graph
                    .edges()
                    .into_iter()
                    .map(|(from, to, w)| EdgeFile {
                        from,
                        to,
                        weight: w.as_f64(),
                    })
                    .collect(),
            })
            .collect();
        let min_weight = sc
            .schedule
            .segments()
            .iter()
            .flat_map(|s| s.graph.edges())
            .map(|e| e.2.as_f64())
            .fold(DEFAULT_ALPHA_MIN, f64::min);
        let pair = |r: (T, T)| [r.0.as_f64(), r.1.as_f64()];
        ScenarioFile {
            exosystem: ExosystemFile {
                s0: rows_of(&sc.exosystem.s0),
                w0: sc.exosystem.w0.as_ref().map(|w| vec_of(w.as_slice())),
            },
            agents,
            topology: TopologyFile {
                segments,
                repeat: sc.schedule.repeat(),
                alpha_min: min_weight,
            },
            sim: SimFile::from_config(&sc.sim),
            init: InitFile {
                range: pair(sc.init.range),
                beta_range: pair(sc.init.beta_range),
                alpha_range: sc.init.alpha_range.map(pair),
                agents: sc
                    .init
                    .agents
                    .iter()
                    .map(|a| AgentInitFile {
                        x: a.x.as_ref().map(|v| vec_of(v.as_slice())),
                        xi: a.xi.as_ref().map(|v| vec_of(v.as_slice())),
                        w: a.w.as_ref().map(|v| vec_of(v.as_slice())),
                        s: a.s.as_ref().map(rows_of),
                        beta: a.beta.as_deref().map(vec_of),
                        alpha: a.alpha.as_deref().map(vec_of),
                    })
                    .collect(),
            },
        }
    }
}

pub fn parse_scenario<T: Real>(text: &str) -> Result<Scenario<T>> {
    ScenarioFile::parse(text)?.into_scenario()
}

pub fn load_scenario<T: Real>(path: impl AsRef<Path>) -> Result<Scenario<T>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| scenario_err(path.display().to_string(), e))?;
    parse_scenario(&text)
}

pub fn scenario_to_json<T: Real>(sc: &Scenario<T>) -> Result<String> {
    ScenarioFile::from_scenario(sc).to_json()
}

/// Column names of the trace CSV, in order.
pub fn trace_columns<T: Real>(trace: &SimulationTrace<T>) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for (i, a) in trace.agents.iter().enumerate() {
        let i = i + 1;
        cols.extend((1..=a.z.width()).map(|c| format!("z{i}_{c}")));
        cols.extend((1..=a.e.width()).map(|c| format!("e{i}_{c}")));
        cols.extend((1..=a.u.width()).map(|c| format!("u{i}_{c}")));
        cols.extend((1..=a.w.width()).map(|c| format!("w{i}_{c}")));
        cols.push(format!("werr{i}"));
        cols.push(format!("serr{i}"));
        for l in 1..=a.lambda.width() / 2 {
            cols.push(format!("lam{i}_{l}_re"));
            cols.push(format!("lam{i}_{l}_im"));
        }
    }
    cols
}

/// Writes one row per `decimation`-th recorded sample.
pub fn write_trace_csv<T: Real>(trace: &SimulationTrace<T>, path: impl AsRef<Path>, decimation: usize) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(trace_csv(trace, decimation)?.as_bytes())?;
    out.flush()?;
    Ok(())
}

pub fn trace_csv<T: Real>(trace: &SimulationTrace<T>, decimation: usize) -> Result<String> {
    if decimation == 0 {
        return Err(Error::InvalidArgument("decimation must be at least 1".into()));
    }
    let mut s = String::new();
    let _ = writeln!(s, "# regsim trace");
    let _ = writeln!(s, "# seed = {}", trace.seed);
    let _ = writeln!(
        s,
        "# dt = {:e}, recorded every {} steps, written every {decimation} samples",
        trace.dt.as_f64(),
        trace.record_every
    );
    let _ = writeln!(s, "# initial draws: {}", trace.draw_order);
    let lam0: Vec<String> = trace
        .leader_lambda
        .iter()
        .map(|z| format!("{:e}{:+e}i", z.re.as_f64(), z.im.as_f64()))
        .collect();
    let _ = writeln!(s, "# exosystem eigenvalues (estimate layout): [{}]", lam0.join(", "));
    let _ = writeln!(s, "# t: time [s]");
    let _ = writeln!(s, "# zI_c: regulated output of agent I (against the true exosystem state w0)");
    let _ = writeln!(s, "# eI_c: error fed back by agent I (against its local generator state wI)");
    let _ = writeln!(s, "# uI_c: control input; wI_c: local generator state");
    let _ = writeln!(s, "# werrI: ||wI - w0||; serrI: ||SI - S0||_F (Frobenius)");
    let _ = writeln!(s, "# lamI_l_re, lamI_l_im: eigenvalue estimate l of agent I");
    let _ = writeln!(s, "{}", trace_columns(trace).join(","));
    let mut row: Vec<f64> = Vec::new();
    for k in (0..trace.len()).step_by(decimation) {
        row.clear();
        row.push(trace.times[k].as_f64());
        for a in &trace.agents {
            for series in [&a.z, &a.e, &a.u, &a.w] {
                row.extend(series.row(k).iter().map(|x| x.as_f64()));
            }
            row.push(a.w_err[k].as_f64());
            row.push(a.s_err[k].as_f64());
            row.extend(a.lambda.row(k).iter().map(|x| x.as_f64()));
        }
        let cells: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    Ok(s)
}

#[derive(Clone, Debug, Serialize)]
pub struct AgentSummary {
    pub agent: usize,
    pub final_z: f64,
    pub final_w_err: f64,
    pub final_s_err: f64,
    pub final_lambda_err: f64,
    pub z_fit: Option<RateFit>,
    pub w_fit: Option<RateFit>,
    pub s_fit: Option<RateFit>,
    pub resynth_count: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SummaryReport {
    pub audit: AssumptionReport,
    pub audit_passes: bool,
    pub failures: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub agents: Vec<AgentSummary>,
}

/// Absolute level below which a decaying norm is treated as rounding noise
/// by the summary fits.
pub const FIT_FLOOR: f64 = 1e-10;

/// Envelope window for fits: one period of the slowest exosystem
/// oscillation, or one second for a non-oscillating exosystem.
pub fn fit_window<T: Real>(trace: &SimulationTrace<T>) -> f64 {
    let slowest = trace
        .leader_lambda
        .iter()
        .map(|z| z.im.as_f64().abs())
        .filter(|w| *w > 0.0)
        .fold(f64::INFINITY, f64::min);
    if slowest.is_finite() {
        std::f64::consts::TAU / slowest
    } else {
        1.0
    }
}

pub fn summarize<T: Real>(trace: Option<&SimulationTrace<T>>, audit: &AssumptionReport) -> SummaryReport {
    let agents = trace
        .map(|tr| {
            let window = fit_window(tr);
            let times: Vec<f64> = tr.times.iter().map(|t| t.as_f64()).collect();
            let fit = |v: Vec<f64>| envelope_rate_fit(&times, &v, window, FIT_FLOOR, 0.5).ok();
            let f64s = |v: &[T]| v.iter().map(|x| x.as_f64()).collect::<Vec<_>>();
            let last = |v: &[T]| v.last().map_or(f64::NAN, |x| x.as_f64());
            tr.agents
                .iter()
                .enumerate()
                .map(|(i, a)| {
                    let z = a.z_norm();
                    AgentSummary {
                        agent: i + 1,
                        final_z: last(&z),
                        final_w_err: last(&a.w_err),
                        final_s_err: last(&a.s_err),
                        final_lambda_err: last(&a.lambda_err),
                        z_fit: fit(f64s(&z)),
                        w_fit: fit(f64s(&a.w_err)),
                        s_fit: fit(f64s(&a.s_err)),
                        resynth_count: tr.resynth_count(i),
                    }
                })
                .collect()
        })
        .unwrap_or_default();
    SummaryReport {
        audit: audit.clone(),
        audit_passes: audit.passes(),
        failures: audit.failures(),
        t_final: trace.and_then(|t| t.times.last()).map(|t| t.as_f64()),
        agents,
    }
}

/// Columns a generated plot script reads from `header`.
fn plot_columns(header: &[String]) -> (Vec<usize>, BTreeSet<String>) {
    let cols: BTreeSet<String> = header.iter().cloned().collect();
    let mut agents: Vec<usize> = header
        .iter()
        .filter_map(|c| c.strip_prefix("werr")?.parse().ok())
        .collect();
    agents.sort_unstable();
    (agents, cols)
}

/// Writes a matplotlib script plotting the CSV at `trace_path`: generator
/// states and synchronization errors, then regulated outputs.
pub fn emit_plot_script(trace_path: impl AsRef<Path>, out_path: impl AsRef<Path>) -> Result<()> {
    let trace_path = trace_path.as_ref();
    let text = fs::read_to_string(trace_path)?;
    let header_line = text
        .lines()
        .find(|l| !l.starts_with('#'))
        .ok_or_else(|| Error::InvalidArgument(format!("{} has no header row", trace_path.display())))?;
    let header: Vec<String> = header_line.split(',').map(|s| s.trim().to_string()).collect();
    fs::write(out_path, plot_script(&trace_path.display().to_string(), &header))?;
    Ok(())
}

pub fn plot_script(csv_path: &str, header: &[String]) -> String {
    let (agents, cols) = plot_columns(header);
    let pick = |prefix: String| -> Vec<String> {
        let mut v: Vec<String> = cols.iter().filter(|c| c.starts_with(&prefix)).cloned().collect();
        v.sort();
        v
    };
    let mut w_cols = Vec::new();
    let mut z_cols = Vec::new();
    let mut err_cols = Vec::new();
    for i in &agents {
        w_cols.extend(pick(format!("w{i}_")));
        z_cols.extend(pick(format!("z{i}_")));
        err_cols.push(format!("werr{i}"));
        err_cols.push(format!("serr{i}"));
    }
    let list = |v: &[String]| v.iter().map(|c| format!("{c:?}")).collect::<Vec<_>>().join(", ");
    let mut s = String::new();
    let _ = writeln!(s, "#!/usr/bin/env python3");
    let _ = writeln!(s, "# Generated by regsim: plots {csv_path}");
    let _ = writeln!(s, "import sys");
    let _ = writeln!(s, "import numpy as np");
    let _ = writeln!(s, "import matplotlib.pyplot as plt");
    let _ = writeln!(s);
    let _ = writeln!(s, "path = sys.argv[1] if len(sys.argv) > 1 else {csv_path:?}");
    let _ = writeln!(s, "data = np.genfromtxt(path, delimiter=',', names=True, comments='#')");
    let _ = writeln!(s, "t = data['t']");
    let _ = writeln!(s, "W_COLS = [{}]", list(&w_cols));
    let _ = writeln!(s, "Z_COLS = [{}]", list(&z_cols));
    let _ = writeln!(s, "ERR_COLS = [{}]", list(&err_cols));
    let _ = writeln!(s);
    let _ = writeln!(s, "fig, ax = plt.subplots(3, 1, sharex=True, figsize=(8, 9))");
    let _ = writeln!(s, "for c in W_COLS:");
    let _ = writeln!(s, "    ax[0].plot(t, data[c], label=c, lw=0.8)");
    let _ = writeln!(s, "ax[0].set_ylabel('generator states')");
    let _ = writeln!(s, "for c in ERR_COLS:");
    let _ = writeln!(s, "    ax[1].semilogy(t, np.maximum(data[c], 1e-16), label=c, lw=0.8)");
    let _ = writeln!(s, "ax[1].set_ylabel('synchronization error')");
    let _ = writeln!(s, "for c in Z_COLS:");
    let _ = writeln!(s, "    ax[2].plot(t, data[c], label=c, lw=0.8)");
    let _ = writeln!(s, "ax[2].set_ylabel('regulated output')");
    let _ = writeln!(s, "ax[2].set_xlabel('t [s]')");
    let _ = writeln!(s, "for a in ax:");
    let _ = writeln!(s, "    a.legend(fontsize='small', ncol=4)");
    let _ = writeln!(s, "fig.tight_layout()");
    let _ = writeln!(s, "out = path.rsplit('.', 1)[0] + '.png'");
    let _ = writeln!(s, "fig.savefig(out, dpi=150)");
    let _ = writeln!(s, "print(out)");
    s
}
