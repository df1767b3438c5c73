//! Deterministic text serialization of run traces and solutions.
//!
//! Identical runs must produce byte-identical files, so everything here is
//! plain string assembly: fixed column order, fixed float formatting
//! (`{:.12e}`), no locale, no timestamps. Newton and subgradient traces
//! share one CSV shape for side-by-side comparison.

use crate::net::{Network, Session};
use crate::solver::{RunTrace, Solution};
use crate::splitting::InnerRecord;
use crate::subgradient::{SubgradSolution, SubgradTrace};

pub const TRACE_SCHEMA: &str = "mrfc-trace-v1";
pub const TRACE_HEADER: &str =
    "stage,iter,t,objective,utility,decrement,step,inner_iters,balance_residual,min_slack";

fn fmt_f(v: f64) -> String {
    format!("{v:.12e}")
}

fn trace_preamble() -> String {
    format!("# schema: {TRACE_SCHEMA}\n{TRACE_HEADER}\n")
}

/// Newton run trace as CSV, one row per accepted iteration.
pub fn newton_trace_csv(trace: &RunTrace) -> String {
    let mut out = trace_preamble();
    for r in &trace.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.stage,
            r.iter,
            fmt_f(r.t),
            fmt_f(r.objective),
            fmt_f(r.utility),
            fmt_f(r.decrement),
            fmt_f(r.step),
            r.inner_iters,
            fmt_f(r.balance_residual),
            fmt_f(r.min_slack),
        ));
    }
    out
}

/// Subgradient trace in the same columns. The mapping: stage and t are 0
/// (no barrier schedule), objective carries the dual value, utility the
/// recovered running-average utility, decrement the best dual bound so far,
/// inner_iters is 0, balance_residual the largest balance violation of the
/// subproblem solutions, and min_slack is 0 because winner-take-all routing
/// saturates every link it uses.
pub fn subgradient_trace_csv(trace: &SubgradTrace) -> String {
    let mut out = trace_preamble();
    for r in &trace.rows {
        out.push_str(&format!(
            "0,{},{},{},{},{},{},0,{},{}\n",
            r.iteration,
            fmt_f(0.0),
            fmt_f(r.dual_value),
            fmt_f(r.recovered_utility),
            fmt_f(r.best_dual),
            fmt_f(r.step),
            fmt_f(r.residual_norm),
            fmt_f(0.0),
        ));
    }
    out
}

/// Inner splitting-iteration residual trace.
pub fn inner_trace_csv(rows: &[InnerRecord]) -> String {
    let mut out = String::from("iteration,residual,alpha\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.iteration, fmt_f(r.residual), fmt_f(r.alpha)));
    }
    out
}

/// Deterministic line-oriented solution summary: run counters, the final
/// barrier weight and Newton decrement, per-session rates, per-link flows,
/// and the dual prices per (node, session).
pub fn solution_text(net: &Network, sessions: &[Session], solution: &Solution) -> String {
    let mut out = String::from("schema mrfc-solution-v1\n");
    out.push_str(&format!("stages {}\n", solution.stages));
    out.push_str(&format!("iterations {}\n", solution.iterations));
    out.push_str(&format!("barrier_weight {}\n", fmt_f(solution.t)));
    out.push_str(&format!("decrement {}\n", fmt_f(solution.decrement)));
    out.push_str(&format!("utility {}\n", fmt_f(solution.utility)));
    out.push_str(&format!("objective {}\n", fmt_f(solution.objective)));
    for (f, sess) in sessions.iter().enumerate() {
        out.push_str(&format!(
            "session {f} src {} dst {} rate {}\n",
            sess.src,
            sess.dst,
            fmt_f(solution.y.s[f])
        ));
    }
    for (l, link) in net.links().iter().enumerate() {
        let flows: Vec<String> =
            (0..sessions.len()).map(|f| fmt_f(solution.y.x[(l, f)])).collect();
        out.push_str(&format!(
            "link {l} tx {} rx {} capacity {} slack {} flows {}\n",
            link.tx,
            link.rx,
            fmt_f(link.capacity),
            fmt_f(solution.y.slack[l]),
            flows.join(" ")
        ));
    }
    for n in 0..net.node_count() {
        let prices: Vec<String> =
            (0..sessions.len()).map(|f| fmt_f(solution.w.w[(n, f)])).collect();
        out.push_str(&format!("dual node {n} prices {}\n", prices.join(" ")));
    }
    out
}

/// Deterministic summary of a subgradient run.
pub fn subgradient_text(sessions: &[Session], solution: &SubgradSolution) -> String {
    let mut out = String::from("schema mrfc-subgradient-v1\n");
    out.push_str(&format!("iterations {}\n", solution.iterations));
    out.push_str(&format!("best_dual {}\n", fmt_f(solution.best_dual)));
    out.push_str(&format!("recovered_utility {}\n", fmt_f(solution.recovered_utility)));
    for (f, sess) in sessions.iter().enumerate() {
        out.push_str(&format!(
            "session {f} src {} dst {} avg_rate {}\n",
            sess.src,
            sess.dst,
            fmt_f(solution.avg_rates[f])
        ));
    }
    out
}
