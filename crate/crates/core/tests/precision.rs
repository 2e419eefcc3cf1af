use regsim::sim::{section5, simulate};
use regsim::verification::audit_assumptions;

#[test]
fn single_precision_example_regulates() {
    let mut sc = section5::<f32>(3).unwrap();
    sc.sim.t_final = 40.0;
    sc.sim.record_every = 100;
    sc.sim.rank_tol = 1e-5;
    assert!(audit_assumptions(&sc).passes());
    let trace = simulate(&sc).unwrap();
    for a in &trace.agents {
        let z = a.z_norm();
        let early = z[..z.len() / 4].iter().cloned().fold(0.0f32, f32::max);
        let late = *z.last().unwrap();
        assert!(late.is_finite() && late < 1e-2 * early, "{early:e} -> {late:e}");
        // increments dt * |S - S0| stop registering once they fall under
        // f32 rounding of |S|, which leaves a floor near 2e-4
        assert!(*a.s_err.last().unwrap() < 1e-3);
        assert!(*a.lambda_err.last().unwrap() < 1e-3);
    }
}
