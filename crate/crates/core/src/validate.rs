//! Self-check suite behind the CLI's validate command.
//!
//! Each check cross-verifies a structured computation against the dense
//! reference route (or a frozen hand value) on a small deterministic
//! instance, in a few seconds total. These are smoke-level versions of the
//! full test suite, runnable from an installed binary without the source
//! tree.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fixtures;
use crate::layout::PrimalLayout;
use crate::objective::{check_feasibility, gradient, BarrierConfig, PrimalPoint};
use crate::oracle;
use crate::primal::{invert_link_block, primal_direction, Direction, DualPoint};
use crate::runtime::{Phase, Runtime};
use crate::solver::{
    barrier_solve, initialize, newton_decrement, run_distributed, ExecutionMode, SolverConfig,
};
use crate::splitting::{
    assemble_dual_system, estimate_spectral_radius, local_dual_update, solve_duals,
    splitting_iterate, SplitConfig,
};
use crate::tol;

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    pub fn line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        format!("{status} {}: {}", self.name, self.detail)
    }
}

fn pass(name: &'static str, detail: String) -> CheckResult {
    CheckResult { name, passed: true, detail }
}

fn fail(name: &'static str, detail: String) -> CheckResult {
    CheckResult { name, passed: false, detail }
}

/// Runs every check; the order is fixed so output is reproducible.
pub fn run_all() -> Vec<CheckResult> {
    vec![
        check_link_inverse(),
        check_dual_assembly(),
        check_kkt_residual(),
        check_contraction(),
        check_one_hop_parity(),
        check_decrement_identity(),
        check_finite_differences(),
        check_barrier_end_to_end(),
        check_mode_equivalence(),
    ]
}

pub fn all_passed(results: &[CheckResult]) -> bool {
    results.iter().all(|r| r.passed)
}

fn check_link_inverse() -> CheckResult {
    let name = "link-block inverse";
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let fcount = rng.random_range(1..=6);
        let x = Array1::from_shape_fn(fcount, |_| rng.random_range(0.05..1.0));
        let slack = rng.random_range(0.05..1.0);
        let inv = match invert_link_block(&x, slack) {
            Ok(v) => v,
            Err(e) => return fail(name, e.to_string()),
        };
        let mut block = Array2::from_elem((fcount, fcount), 1.0 / (slack * slack));
        for f in 0..fcount {
            block[(f, f)] += 1.0 / (x[f] * x[f]);
        }
        let prod = inv.dot(&block);
        for i in 0..fcount {
            for j in 0..fcount {
                let target = f64::from(u8::from(i == j));
                worst = worst.max((prod[(i, j)] - target).abs());
            }
        }
    }
    let ok = worst < tol::EXACT;
    let detail = format!("max |X⁻¹X − I| = {worst:.3e} over 20 draws (bound {:.1e})", tol::EXACT);
    if ok { pass(name, detail) } else { fail(name, detail) }
}

fn interior_ring() -> (crate::net::Network, Vec<crate::net::Session>, PrimalPoint) {
    let (net, sessions) = fixtures::ring_five();
    let y = PrimalPoint::new(
        &net,
        ndarray::arr1(&[0.3, 0.2]),
        Array2::from_elem((net.link_count(), sessions.len()), 0.07),
    )
    .expect("fixture point is well-formed");
    (net, sessions, y)
}

fn check_dual_assembly() -> CheckResult {
    let name = "dual-system assembly";
    let (net, sessions, y) = interior_ring();
    let t = 2.0;
    let config = SplitConfig::default();
    let system = match assemble_dual_system(&net, &sessions, &y, t, &config) {
        Ok(s) => s,
        Err(e) => return fail(name, e.to_string()),
    };
    let h = match oracle::dense_hessian(&net, &sessions, &y, t) {
        Ok(h) => h,
        Err(e) => return fail(name, e.to_string()),
    };
    let (h_inv, _) = match oracle::dense_invert(&h) {
        Ok(v) => v,
        Err(e) => return fail(name, e.to_string()),
    };
    let m = oracle::dense_constraints(&net, &sessions);
    let g_dense = m.dot(&h_inv).dot(&m.t());
    let grad = match oracle::dense_gradient(&net, &sessions, &y, t) {
        Ok(g) => g,
        Err(e) => return fail(name, e.to_string()),
    };
    let rhs_dense = m.dot(&h_inv).dot(&grad);
    let mut worst: f64 = 0.0;
    for i in 0..system.dim() {
        worst = worst.max((system.rhs[i] - rhs_dense[i]).abs());
        for j in 0..system.dim() {
            worst = worst.max((system.g[(i, j)] - g_dense[(i, j)]).abs());
        }
    }
    let ok = worst < tol::EXACT;
    let detail = format!(
        "max structured-vs-dense deviation {worst:.3e} on a {}×{} system (bound {:.1e})",
        system.dim(),
        system.dim(),
        tol::EXACT
    );
    if ok { pass(name, detail) } else { fail(name, detail) }
}

fn check_kkt_residual() -> CheckResult {
    let name = "kkt residual";
    let (net, sessions, y) = interior_ring();
    let t = 2.0;
    let config = SplitConfig { inner_tol: tol::INNER_TOL_SOLVER, ..SplitConfig::default() };
    let system = match assemble_dual_system(&net, &sessions, &y, t, &config) {
        Ok(s) => s,
        Err(e) => return fail(name, e.to_string()),
    };
    let w0 = Array1::zeros(system.dim());
    let solve = match solve_duals(&system, &config, &w0) {
        Ok(s) => s,
        Err(e) => return fail(name, e.to_string()),
    };
    let w = DualPoint { w: system.layout.expand(&solve.w) };
    let dir = match primal_direction(&net, &sessions, &y, &w, t) {
        Ok(d) => d,
        Err(e) => return fail(name, e.to_string()),
    };
    let lay = PrimalLayout::new(net.link_count(), sessions.len());
    let residual = match oracle::kkt_residual(&net, &sessions, &y, t, &dir.flatten(&lay), &w.w) {
        Ok(r) => r,
        Err(e) => return fail(name, e.to_string()),
    };
    let ok = residual < tol::KKT_REL;
    let detail = format!(
        "relative KKT residual {residual:.3e} after {} inner rounds (bound {:.1e})",
        solve.iterations,
        tol::KKT_REL
    );
    if ok { pass(name, detail) } else { fail(name, detail) }
}

fn check_contraction() -> CheckResult {
    let name = "splitting contraction";
    let (net, sessions, y) = interior_ring();
    let system = match assemble_dual_system(&net, &sessions, &y, 2.0, &SplitConfig::default()) {
        Ok(s) => s,
        Err(e) => return fail(name, e.to_string()),
    };
    let rho = match estimate_spectral_radius(&system) {
        Ok(r) => r,
        Err(e) => return fail(name, e.to_string()),
    };
    let ok = rho < 1.0;
    let detail = format!("iteration-matrix spectral radius {rho:.6} at α = {}", system.alpha);
    if ok { pass(name, detail) } else { fail(name, detail) }
}

fn check_one_hop_parity() -> CheckResult {
    let name = "one-hop parity";
    let (net, sessions, y) = interior_ring();
    let t = 2.0;
    let config = SplitConfig::default();
    let system = match assemble_dual_system(&net, &sessions, &y, t, &config) {
        Ok(s) => s,
        Err(e) => return fail(name, e.to_string()),
    };
    let w0 = DualPoint::ones(&net, &sessions);
    let mut rt = match Runtime::new(&net, &sessions, &y, &w0) {
        Ok(r) => r,
        Err(e) => return fail(name, e.to_string()),
    };
    let mut central = system.layout.flatten(&w0.w);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        central = match splitting_iterate(&central, &system) {
            Ok(w) => w,
            Err(e) => return fail(name, e.to_string()),
        };
        rt.set_phase(Phase::DualSweep);
        rt.next_round();
        let mut next = rt.observe_duals().w;
        for (f, sess) in sessions.iter().enumerate() {
            for n in 0..net.node_count() {
                if n == sess.dst {
                    continue;
                }
                let state = rt.snapshot_one_hop(n, f, false);
                next[(n, f)] = match local_dual_update(&state, t, config.alpha) {
                    Ok(v) => v,
                    Err(e) => return fail(name, e.to_string()),
                };
            }
        }
        if let Err(e) = rt.commit_duals(next) {
            return fail(name, e.to_string());
        }
        let local = system.layout.flatten(&rt.observe_duals().w);
        for i in 0..system.dim() {
            worst = worst.max((local[i] - central[i]).abs());
        }
    }
    let report = rt.locality_report();
    let ok = worst < tol::EXACT && report.is_clean();
    let detail = format!(
        "max local-vs-central deviation {worst:.3e} over 5 rounds, {}",
        report.summary()
    );
    if ok { pass(name, detail) } else { fail(name, detail) }
}

fn check_decrement_identity() -> CheckResult {
    let name = "decrement identity";
    let (net, sessions, y) = interior_ring();
    let t = 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let dir = Direction {
        ds: Array1::from_shape_fn(sessions.len(), |_| rng.random_range(-0.02..0.02)),
        dx: Array2::from_shape_fn((net.link_count(), sessions.len()), |_| {
            rng.random_range(-0.02..0.02)
        }),
    };
    let lambda = newton_decrement(&net, &sessions, &y, &dir, t);
    let h = match oracle::dense_hessian(&net, &sessions, &y, t) {
        Ok(h) => h,
        Err(e) => return fail(name, e.to_string()),
    };
    let lay = PrimalLayout::new(net.link_count(), sessions.len());
    let flat = dir.flatten(&lay);
    let dense = flat.dot(&h.dot(&flat)).sqrt();
    let dev = (lambda - dense).abs() / (1.0 + dense);
    let ok = dev < tol::EXACT;
    let detail =
        format!("separable √(ΔᵀH̃Δ) deviates {dev:.3e} from dense (bound {:.1e})", tol::EXACT);
    if ok { pass(name, detail) } else { fail(name, detail) }
}

fn check_finite_differences() -> CheckResult {
    let name = "finite differences";
    let (net, sessions) = fixtures::two_node(2.0);
    let y = match PrimalPoint::new(&net, ndarray::arr1(&[0.5]), Array2::from_elem((1, 1), 0.5)) {
        Ok(y) => y,
        Err(e) => return fail(name, e.to_string()),
    };
    let t = 1.5;
    let g = match gradient(&net, &sessions, &y, t) {
        Ok(g) => g,
        Err(e) => return fail(name, e.to_string()),
    };
    let g_fd = match oracle::finite_diff_gradient(&net, &sessions, &y, t) {
        Ok(g) => g,
        Err(e) => return fail(name, e.to_string()),
    };
    let scale = 1.0 + oracle::max_abs(g.iter().copied());
    let dev = oracle::max_abs((&g - &g_fd).iter().copied()) / scale;
    let ok = dev < tol::GRAD_FD_REL;
    let detail = format!(
        "gradient vs central differences: relative deviation {dev:.3e} (bound {:.1e})",
        tol::GRAD_FD_REL
    );
    if ok { pass(name, detail) } else { fail(name, detail) }
}

fn check_barrier_end_to_end() -> CheckResult {
    let name = "barrier end-to-end";
    let (net, sessions) = fixtures::ring_five();
    let config = SolverConfig::default();
    let (solution, trace) = match barrier_solve(&net, &sessions, &config) {
        Ok(v) => v,
        Err(e) => return fail(name, e.to_string()),
    };
    let feas = match check_feasibility(&net, &sessions, &solution.y, tol::BALANCE) {
        Ok(f) => f,
        Err(e) => return fail(name, e.to_string()),
    };
    // Damped steps are Armijo-enforced, so they must strictly descend;
    // quadratic-zone unit steps are accepted without consulting f and may
    // blip by solve noise.
    let mut monotone = true;
    for stage in 1..=solution.stages {
        let rows = trace.stage_rows(stage);
        for pair in rows.windows(2) {
            let damped = pair[1].decrement > config.full_step_threshold;
            let slack = if damped {
                0.0
            } else {
                tol::OBJECTIVE_NOISE_REL * (1.0 + pair[0].objective.abs())
            };
            if pair[1].objective > pair[0].objective + slack {
                monotone = false;
            }
        }
    }
    let ok = feas.max_balance <= tol::BALANCE && solution.y.is_interior(&net) && monotone;
    let detail = format!(
        "{} stages, {} iterations, balance {:.3e}, objective monotone per stage: {monotone}",
        solution.stages,
        solution.iterations,
        feas.max_balance
    );
    if ok { pass(name, detail) } else { fail(name, detail) }
}

fn check_mode_equivalence() -> CheckResult {
    let name = "mode equivalence";
    let (net, sessions) = fixtures::ring_five();
    let config = SolverConfig {
        fixed_iterations: Some(3),
        barrier: BarrierConfig { t: 1.0, mu: 10.0, gap_tol: 50.0 },
        mode: ExecutionMode::Centralized,
        ..SolverConfig::default()
    };
    let (_, trace_c) = match barrier_solve(&net, &sessions, &config) {
        Ok(v) => v,
        Err(e) => return fail(name, e.to_string()),
    };
    let (_, trace_d, report) = match run_distributed(&net, &sessions, &config) {
        Ok(v) => v,
        Err(e) => return fail(name, e.to_string()),
    };
    if trace_c.rows.len() != trace_d.rows.len() {
        return fail(
            name,
            format!("row counts differ: {} vs {}", trace_c.rows.len(), trace_d.rows.len()),
        );
    }
    let mut worst: f64 = 0.0;
    for (a, b) in trace_c.rows.iter().zip(&trace_d.rows) {
        for (u, v) in [
            (a.objective, b.objective),
            (a.utility, b.utility),
            (a.decrement, b.decrement),
            (a.step, b.step),
        ] {
            worst = worst.max((u - v).abs() / (1.0 + u.abs()));
        }
    }
    let ok = worst <= tol::TRACE_MATCH && report.is_clean();
    let detail = format!(
        "largest trace divergence {worst:.3e} over {} rows (bound {:.1e}); {}",
        trace_c.rows.len(),
        tol::TRACE_MATCH,
        report.summary()
    );
    if ok { pass(name, detail) } else { fail(name, detail) }
}

// ---------------------------------------------------------------------------
// Per-instance checks
// ---------------------------------------------------------------------------

/// Runs the property suite's core identities on a caller-supplied instance,
/// at an interior point produced by the solver's initializer. Construction
/// problems and an empty barrier interior surface as the returned error
/// (they are properties of the input, not of the implementation); every
/// check in the returned list failing indicates an internal inconsistency.
pub fn run_instance(
    net: &crate::net::Network,
    sessions: &[crate::net::Session],
) -> Result<Vec<CheckResult>, crate::solver::SolveError> {
    let rates = Array1::from_elem(sessions.len(), 0.1 * net.min_capacity());
    let (y, _) = initialize(net, sessions, &rates)?;
    let (kkt, dec) = instance_kkt_and_decrement(net, sessions, &y);
    Ok(vec![
        instance_feasibility(net, sessions, &y),
        kkt,
        dec,
        instance_contraction(net, sessions, &y),
        instance_dominance(net, sessions, &y),
    ])
}

fn instance_feasibility(
    net: &crate::net::Network,
    sessions: &[crate::net::Session],
    y: &PrimalPoint,
) -> CheckResult {
    let name = "instance interior start";
    let report = match check_feasibility(net, sessions, y, tol::BALANCE) {
        Ok(r) => r,
        Err(e) => return fail(name, e.to_string()),
    };
    let ok = report.max_balance < tol::BALANCE
        && report.min_slack > 0.0
        && report.min_rate > 0.0
        && report.min_flow > 0.0
        && report.capacity_violations.is_empty();
    let detail = format!(
        "balance {:.3e} (bound {:.1e}), min slack {:.3e}, min rate {:.3e}, min flow {:.3e}",
        report.max_balance,
        tol::BALANCE,
        report.min_slack,
        report.min_rate,
        report.min_flow
    );
    if ok { pass(name, detail) } else { fail(name, detail) }
}

fn instance_direction(
    net: &crate::net::Network,
    sessions: &[crate::net::Session],
    y: &PrimalPoint,
    t: f64,
) -> Result<(DualPoint, Direction, usize), String> {
    let config = SplitConfig { inner_tol: tol::INNER_TOL_SOLVER, ..SplitConfig::default() };
    let system =
        assemble_dual_system(net, sessions, y, t, &config).map_err(|e| e.to_string())?;
    let w0 = Array1::zeros(system.dim());
    let solve = solve_duals(&system, &config, &w0).map_err(|e| e.to_string())?;
    let w = DualPoint { w: system.layout.expand(&solve.w) };
    let dir = primal_direction(net, sessions, y, &w, t).map_err(|e| e.to_string())?;
    Ok((w, dir, solve.iterations))
}

fn instance_kkt_and_decrement(
    net: &crate::net::Network,
    sessions: &[crate::net::Session],
    y: &PrimalPoint,
) -> (CheckResult, CheckResult) {
    let kkt_name = "instance kkt residual";
    let dec_name = "instance decrement identity";
    let t = 1.5;
    let (w, dir, inner) = match instance_direction(net, sessions, y, t) {
        Ok(v) => v,
        Err(e) => return (fail(kkt_name, e.clone()), fail(dec_name, e)),
    };
    let lay = PrimalLayout::new(net.link_count(), sessions.len());
    let flat = dir.flatten(&lay);
    let kkt = match oracle::kkt_residual(net, sessions, y, t, &flat, &w.w) {
        Ok(r) => {
            let ok = r < tol::KKT_REL;
            let detail = format!(
                "relative KKT residual {r:.3e} after {inner} inner rounds (bound {:.1e})",
                tol::KKT_REL
            );
            if ok { pass(kkt_name, detail) } else { fail(kkt_name, detail) }
        }
        Err(e) => fail(kkt_name, e.to_string()),
    };
    let dec = match oracle::dense_hessian(net, sessions, y, t) {
        Ok(h) => {
            let dense = flat.dot(&h.dot(&flat)).max(0.0).sqrt();
            let separable = newton_decrement(net, sessions, y, &dir, t);
            let diff = (separable - dense).abs() / (1.0 + dense);
            let ok = diff < tol::EXACT;
            let detail = format!(
                "separable vs dense decrement deviation {diff:.3e} (bound {:.1e})",
                tol::EXACT
            );
            if ok { pass(dec_name, detail) } else { fail(dec_name, detail) }
        }
        Err(e) => fail(dec_name, e.to_string()),
    };
    (kkt, dec)
}

fn instance_contraction(
    net: &crate::net::Network,
    sessions: &[crate::net::Session],
    y: &PrimalPoint,
) -> CheckResult {
    let name = "instance contraction";
    let system = match assemble_dual_system(net, sessions, y, 1.5, &SplitConfig::default()) {
        Ok(s) => s,
        Err(e) => return fail(name, e.to_string()),
    };
    let rho = match estimate_spectral_radius(&system) {
        Ok(r) => r,
        Err(e) => return fail(name, e.to_string()),
    };
    let ok = rho < 1.0;
    let detail = format!("iteration-matrix spectral radius {rho:.6} at α = {}", system.alpha);
    if ok { pass(name, detail) } else { fail(name, detail) }
}

fn instance_dominance(
    net: &crate::net::Network,
    sessions: &[crate::net::Session],
    y: &PrimalPoint,
) -> CheckResult {
    let name = "instance dominance margin";
    let system = match assemble_dual_system(net, sessions, y, 1.5, &SplitConfig::default()) {
        Ok(s) => s,
        Err(e) => return fail(name, e.to_string()),
    };
    let dim = system.dim();
    let mut worst_gap: f64 = f64::INFINITY;
    let mut worst_dev: f64 = 0.0;
    for i in 0..dim {
        // Row i of F₁ + F₂ = Λ + 2αΩ̄ − Ω: diagonal minus off-diagonal mass.
        let diag = system.lambda[i] + 2.0 * system.alpha * system.omega_bar[i]
            - system.omega[(i, i)];
        let mut off = 0.0;
        for j in 0..dim {
            if j != i {
                off += system.omega[(i, j)].abs();
            }
        }
        let margin = diag - off;
        let claimed = system.lambda[i] + (2.0 * system.alpha - 1.0) * system.omega_bar[i];
        worst_dev = worst_dev.max((margin - claimed).abs() / (1.0 + claimed.abs()));
        worst_gap = worst_gap.min(margin);
    }
    let ok = worst_gap > 0.0 && worst_dev < tol::CONSTRUCTION;
    let detail = format!(
        "smallest dominance margin {worst_gap:.3e} over {dim} rows, claim deviation {worst_dev:.3e}"
    );
    if ok { pass(name, detail) } else { fail(name, detail) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_check_passes() {
        let results = run_all();
        for r in &results {
            assert!(r.passed, "{}", r.line());
        }
        assert!(all_passed(&results));
        assert_eq!(results.len(), 9);
    }

    #[test]
    fn lines_are_prefixed_with_the_status() {
        let r = pass("example", "detail".into());
        assert_eq!(r.line(), "PASS example: detail");
        let f = fail("example", "detail".into());
        assert_eq!(f.line(), "FAIL example: detail");
    }

    #[test]
    fn instance_checks_pass_on_a_healthy_instance() {
        let (net, sessions) = fixtures::ring_five();
        let results = run_instance(&net, &sessions).expect("feasible instance");
        assert_eq!(results.len(), 5);
        for r in &results {
            assert!(r.passed, "{}", r.line());
        }
    }

    #[test]
    fn instance_checks_report_an_empty_interior_as_an_input_error() {
        // five_node has a session whose flow can never touch two of the
        // links, so no strictly positive flow pattern exists.
        let (net, sessions) = fixtures::five_node();
        assert!(run_instance(&net, &sessions).is_err());
    }
}
