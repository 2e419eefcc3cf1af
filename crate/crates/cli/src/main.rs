use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use regsim::io::{emit_plot_script, parse_scenario, summarize, write_trace_csv, SECTION5_SCENARIO};
use regsim::sim::{analyze, simulate_with};
use regsim::verification::{audit_assumptions, perturbation_sweep};
use regsim::Scenario64;

const SEED_VAR: &str = "REGSIM_SEED";

/// Distributed output regulation simulator.
///
/// Exit status: 0 on success, 1 when the assumption audit fails, 2 on any
/// other error.
#[derive(Parser)]
#[command(name = "regsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Audit the standing assumptions and print the report as JSON.
    Check {
        /// Scenario file, or `section5` for the bundled example.
        scenario: String,
    },
    /// Simulate and write trace.csv, summary.json and plot_trace.py.
    Run {
        scenario: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Keep every N-th integration step.
        #[arg(long, default_value_t = 1)]
        decimate: usize,
        /// Simulate even if the audit fails.
        #[arg(long)]
        force: bool,
    },
    /// Robustness sweep over random plant perturbations.
    Sweep {
        scenario: String,
        /// Comma-separated Frobenius radii.
        #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
        radius_grid: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Defaults to the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Generate a matplotlib script for a trace CSV.
    Plot {
        trace: PathBuf,
        /// Defaults to the CSV path with a .py extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Failure {
    Audit(Vec<String>),
    Runtime(String),
}

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        let mut msg = e.to_string();
        let mut src = e.source();
        while let Some(s) = src {
            msg.push_str(&format!(": {s}"));
            src = s.source();
        }
        Failure::Runtime(msg)
    }
}

fn load(arg: &str) -> Result<Scenario64, Failure> {
    let path = Path::new(arg);
    let text = if !path.exists() && arg == "section5" {
        SECTION5_SCENARIO.to_string()
    } else {
        fs::read_to_string(path).map_err(|e| Failure::Runtime(format!("cannot read {arg}: {e}")))?
    };
    let mut sc: Scenario64 = parse_scenario(&text).map_err(|e| Failure::Runtime(format!("{arg}: {e}")))?;
    if let Ok(seed) = std::env::var(SEED_VAR) {
        sc.sim.seed = seed
            .trim()
            .parse()
            .map_err(|_| Failure::Runtime(format!("{SEED_VAR}={seed:?} is not an unsigned integer")))?;
    }
    Ok(sc)
}

fn check(arg: &str) -> Result<(), Failure> {
    let sc = load(arg)?;
    let audit = audit_assumptions(&sc);
    println!("{}", serde_json::to_string_pretty(&summarize::<f64>(None, &audit))?);
    if audit.passes() {
        Ok(())
    } else {
        Err(Failure::Audit(audit.failures()))
    }
}

fn run(arg: &str, out: &Path, decimate: usize, force: bool) -> Result<(), Failure> {
    if decimate == 0 {
        return Err(Failure::Runtime("--decimate must be at least 1".into()));
    }
    let mut sc = load(arg)?;
    sc.sim.record_every = decimate;
    sc.sim.force |= force;
    let audit = audit_assumptions(&sc);
    if !audit.passes() && !sc.sim.force {
        return Err(Failure::Audit(audit.failures()));
    }
    let analysis = analyze(&sc)?;
    let trace = simulate_with(&sc, &analysis)?;
    fs::create_dir_all(out)?;
    let csv = out.join("trace.csv");
    write_trace_csv(&trace, &csv, 1)?;
    emit_plot_script(&csv, out.join("plot_trace.py"))?;
    let summary = summarize(Some(&trace), &audit);
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    println!("seed {}  samples {}  t_final {}", trace.seed, trace.len(), summary.t_final.unwrap_or(0.0));
    println!("agent  final|z|   final|w-w0|  final|S-S0|  final|lam-lam0|  z slope  resynth");
    for a in &summary.agents {
        let slope = a.z_fit.map_or(f64::NAN, |f| f.slope);
        println!(
            "{:>5}  {:<9.2e}  {:<11.2e}  {:<11.2e}  {:<15.2e}  {:<7.3}  {}",
            a.agent, a.final_z, a.final_w_err, a.final_s_err, a.final_lambda_err, slope, a.resynth_count
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn sweep(arg: &str, radii: &[f64], samples: usize, seed: Option<u64>) -> Result<(), Failure> {
    let sc = load(arg)?;
    let audit = audit_assumptions(&sc);
    if !audit.passes() {
        return Err(Failure::Audit(audit.failures()));
    }
    if let Some(r) = radii.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(Failure::Runtime(format!("radius {r} must be a nonnegative number")));
    }
    let report = perturbation_sweep(&sc, radii, samples, seed.unwrap_or(sc.sim.seed))?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn plot(trace: &Path, out: Option<&Path>) -> Result<(), Failure> {
    let out = out.map_or_else(|| trace.with_extension("py"), Path::to_path_buf);
    emit_plot_script(trace, &out)?;
    println!("{}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Check { scenario } => check(scenario),
        Command::Run {
            scenario,
            out,
            decimate,
            force,
        } => run(scenario, out, *decimate, *force),
        Command::Sweep {
            scenario,
            radius_grid,
            samples,
            seed,
        } => sweep(scenario, radius_grid, *samples, *seed),
        Command::Plot { trace, out } => plot(trace, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Audit(failures)) => {
            for f in failures {
                eprintln!("audit: {f}");
            }
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
