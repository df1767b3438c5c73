//! Barrier-method driver: damped Newton iterations whose dual systems are
//! solved by the one-hop splitting sweep and whose primal directions come
//! from the per-entity closed forms, repeated over a geometric schedule of
//! barrier weights. Two execution modes produce the same iterates: a
//! centralized reference working on dense state, and a distributed mode that
//! routes every dual sweep and direction kernel through the instrumented
//! runtime and audits its read ledger afterwards.

use ndarray::{Array1, Array2};
use std::fmt;

use crate::layout::PrimalLayout;
use crate::net::{Network, Session};
use crate::objective::{
    check_feasibility, gradient, node_balance, objective_value, BarrierConfig, PrimalPoint,
};
use crate::oracle;
use crate::primal::{link_direction, primal_direction, source_direction, Direction, DualPoint};
use crate::runtime::{LocalityReport, Phase, Runtime};
use crate::splitting::{
    assemble_dual_system, local_dual_update, solve_duals_quiet, SplitConfig, SplitError,
    SplitSystem,
};
use crate::tol;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutionMode {
    /// Dense state, matrix-form dual sweeps.
    Centralized,
    /// The same algorithm driven through the one-hop runtime, with locality
    /// auditing.
    Distributed,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub barrier: BarrierConfig,
    pub split: SplitConfig,
    /// Armijo slope fraction, in (0, ½).
    pub sigma: f64,
    /// Backtracking shrink factor, in (0, 1).
    pub beta: f64,
    /// Fraction of the distance to the nearest positivity boundary a step may
    /// take, in (0, 1).
    pub boundary_frac: f64,
    /// Decrement level at or below which a unit step is attempted first.
    pub full_step_threshold: f64,
    /// A barrier stage ends when the Newton decrement drops below this.
    pub decrement_tol: f64,
    /// Iteration cap per barrier stage.
    pub max_outer: usize,
    /// When set, run exactly this many iterations per stage and skip the
    /// decrement test.
    pub fixed_iterations: Option<usize>,
    pub mode: ExecutionMode,
    /// Per-session injection rate for the initializer; None picks a tenth of
    /// the smallest capacity.
    pub seed_rate: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            barrier: BarrierConfig::default(),
            split: SplitConfig::default(),
            sigma: 0.1,
            beta: 0.5,
            boundary_frac: 0.99,
            full_step_threshold: 0.25,
            decrement_tol: tol::DECREMENT_STOP,
            max_outer: 200,
            fixed_iterations: None,
            mode: ExecutionMode::Centralized,
            seed_rate: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        self.barrier.validate().map_err(|e| SolveError::Input(e.to_string()))?;
        self.split.validate().map_err(|e| SolveError::Input(e.to_string()))?;
        if !(self.sigma > 0.0 && self.sigma < 0.5) {
            return Err(SolveError::Input(format!(
                "armijo fraction must lie in (0, 1/2), got {}",
                self.sigma
            )));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(SolveError::Input(format!(
                "backtracking factor must lie in (0, 1), got {}",
                self.beta
            )));
        }
        if !(self.boundary_frac > 0.0 && self.boundary_frac < 1.0) {
            return Err(SolveError::Input(format!(
                "boundary fraction must lie in (0, 1), got {}",
                self.boundary_frac
            )));
        }
        if !(self.full_step_threshold.is_finite() && self.full_step_threshold > 0.0) {
            return Err(SolveError::Input(format!(
                "full-step threshold must be positive, got {}",
                self.full_step_threshold
            )));
        }
        if !(self.decrement_tol.is_finite() && self.decrement_tol > 0.0) {
            return Err(SolveError::Input(format!(
                "decrement tolerance must be positive, got {}",
                self.decrement_tol
            )));
        }
        if self.max_outer == 0 {
            return Err(SolveError::Input("iteration cap must be at least 1".into()));
        }
        if self.fixed_iterations == Some(0) {
            return Err(SolveError::Input("fixed iteration count must be at least 1".into()));
        }
        if let Some(eps) = self.seed_rate {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(SolveError::Input(format!(
                    "seed rate must be positive, got {eps}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum SolveError {
    Input(String),
    /// No strictly positive balanced flow exists; each pair names a link and
    /// the session whose flow on it cannot be made positive.
    Infeasible { pairs: Vec<(usize, usize)> },
    /// The computed direction does not descend; the barrier calculus was
    /// handed an inconsistent state.
    Ascent { slope: f64 },
    /// Backtracking shrank past the minimum step without an acceptable point.
    Stall { step: f64 },
    Dual { stage: usize, iteration: usize, source: SplitError },
    IterationLimit { stage: usize, decrement: f64 },
    Locality(String),
    Internal(String),
}

impl fmt::Display for SolveError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveError::Input(m) => write!(f, "invalid solver input: {m}"),
            SolveError::Infeasible { pairs } => {
                let listed: Vec<String> = pairs
                    .iter()
                    .map(|(l, s)| format!("(link {l}, session {s})"))
                    .collect();
                write!(
                    f,
                    "no strictly positive balanced routing exists; blocked pairs: {}",
                    listed.join(", ")
                )
            }
            SolveError::Ascent { slope } => {
                write!(f, "search direction is not a descent direction (slope {slope:.3e})")
            }
            SolveError::Stall { step } => {
                write!(f, "line search stalled below step {step:.3e} without an acceptable point")
            }
            SolveError::Dual { stage, iteration, source } => {
                write!(f, "dual solve failed at stage {stage}, iteration {iteration}: {source}")
            }
            SolveError::IterationLimit { stage, decrement } => {
                write!(f, "stage {stage} hit its iteration cap with decrement {decrement:.3e}")
            }
            SolveError::Locality(m) => write!(f, "one-hop locality violated: {m}"),
            SolveError::Internal(m) => write!(f, "internal solver error: {m}"),
        }
    }
}

impl std::error::Error for SolveError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            SolveError::Dual { source, .. } => Some(source),
            _ => None,
        }
    }
}

/// One row of a run trace; all measured values are post-step, the decrement
/// belongs to the direction the step was taken along.
#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub stage: usize,
    pub iter: usize,
    pub t: f64,
    pub objective: f64,
    pub utility: f64,
    pub decrement: f64,
    pub step: f64,
    pub inner_iters: usize,
    pub balance_residual: f64,
    pub min_slack: f64,
}

#[derive(Debug, Clone, Default)]
pub struct RunTrace {
    pub rows: Vec<IterRecord>,
}

impl RunTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn stage_rows(&self, stage: usize) -> Vec<&IterRecord> {
        self.rows.iter().filter(|r| r.stage == stage).collect()
    }

    pub fn stages(&self) -> usize {
        self.rows.iter().map(|r| r.stage).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub y: PrimalPoint,
    pub w: DualPoint,
    /// Newton decrement at the returned iterate: the value that met the final
    /// stage's tolerance, or the last measured value on fixed-iteration runs.
    pub decrement: f64,
    /// Final barrier weight; m/t bounds the utility gap to the true optimum.
    pub t: f64,
    pub stages: usize,
    pub iterations: usize,
    pub objective: f64,
    pub utility: f64,
}

/// The state a Newton iteration advances: primal iterate, warm-started
/// duals, and the current barrier weight.
#[derive(Debug, Clone)]
pub struct NewtonState {
    pub y: PrimalPoint,
    pub w: DualPoint,
    pub t: f64,
}

#[derive(Debug)]
pub struct IterOutcome {
    pub record: IterRecord,
    /// The decrement test passed before stepping; the primal state is
    /// unchanged and the record carries step 0.
    pub converged: bool,
}

/// Σ_f U_f(s_f).
pub fn total_utility(sessions: &[Session], s: &Array1<f64>) -> f64 {
    sessions
        .iter()
        .zip(s.iter())
        .map(|(sess, &v)| sess.utility.value(v))
        .sum()
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

/// Builds a strictly interior balanced starting point, one session at a
/// time: an equal-split absorbing walk covers every link that can lie on a
/// source→destination path with positive flow, and small circulations cover
/// the remaining links when a directed cycle through them exists. Sessions
/// with links on no path and no cycle admit no strictly positive balanced
/// flow at all, which is reported rather than papered over. A final uniform
/// rescale keeps every link's total load at or below half its capacity.
///
/// Duals start at one everywhere, zero at each session's destination.
pub fn initialize(
    net: &Network,
    sessions: &[Session],
    seed_rates: &Array1<f64>,
) -> Result<(PrimalPoint, DualPoint), SolveError> {
    net.check_sessions(sessions).map_err(|e| SolveError::Input(e.to_string()))?;
    if seed_rates.len() != sessions.len() {
        return Err(SolveError::Input(format!(
            "{} seed rates for {} sessions",
            seed_rates.len(),
            sessions.len()
        )));
    }
    for &eps in seed_rates {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(SolveError::Input(format!("seed rates must be positive, got {eps}")));
        }
    }
    let lcount = net.link_count();
    let mut x = Array2::zeros((lcount, sessions.len()));
    let mut infeasible = Vec::new();
    for (f, sess) in sessions.iter().enumerate() {
        let col = equal_split_flows(net, sess, seed_rates[f])?;
        for l in 0..lcount {
            x[(l, f)] = col[l];
        }
        let circ = seed_rates[f] / (4.0 * lcount as f64);
        for l in 0..lcount {
            if x[(l, f)] > 0.0 {
                continue;
            }
            let link = net.link(l);
            match directed_path(net, link.rx, link.tx) {
                Some(path) => {
                    // Circulating around the cycle feeds the link without
                    // disturbing any node's balance.
                    x[(l, f)] += circ;
                    for p in path {
                        x[(p, f)] += circ;
                    }
                }
                None => infeasible.push((l, f)),
            }
        }
    }
    if !infeasible.is_empty() {
        return Err(SolveError::Infeasible { pairs: infeasible });
    }
    let mut s = seed_rates.clone();
    let mut worst: f64 = 0.0;
    for l in 0..lcount {
        worst = worst.max(x.row(l).sum() / net.capacity(l));
    }
    if worst > 0.5 {
        let scale = 0.5 / worst;
        x *= scale;
        s *= scale;
    }
    let y = PrimalPoint::new(net, s, x)
        .map_err(|e| SolveError::Internal(format!("initial point: {e}")))?;
    y.require_interior(net)
        .map_err(|e| SolveError::Internal(format!("initial point: {e}")))?;
    let feas = check_feasibility(net, sessions, &y, tol::BALANCE_INIT)
        .map_err(|e| SolveError::Internal(e.to_string()))?;
    if feas.max_balance > tol::BALANCE_INIT {
        return Err(SolveError::Internal(format!(
            "initializer balance residual {:.3e} exceeds {:.1e}",
            feas.max_balance,
            tol::BALANCE_INIT
        )));
    }
    Ok((y, DualPoint::ones(net, sessions)))
}

/// Equal-split absorbing-walk flows for one session. The walk injects at the
/// source, forwards each node's flux in equal shares over its useful
/// out-links, and absorbs at the destination — so flux reaches exactly the
/// nodes with a destination-avoiding path from the source along links whose
/// receiver can still reach the destination. A link is useful when its
/// transmitter carries such flux and its receiver can reach the destination;
/// every useful link then ends up strictly positive. Links the walk cannot
/// feed (for instance behind a destination that cuts the graph) stay at zero
/// here and are covered by the caller's cycle-circulation pass.
fn equal_split_flows(net: &Network, sess: &Session, eps: f64) -> Result<Array1<f64>, SolveError> {
    let n = net.node_count();
    let coreach = net.coreachable_to(sess.dst);
    let mut walk_reach = vec![false; n];
    walk_reach[sess.src] = true;
    let mut queue = std::collections::VecDeque::from([sess.src]);
    while let Some(u) = queue.pop_front() {
        if u == sess.dst {
            // Absorbed: flux never continues out of the destination.
            continue;
        }
        for &l in net.out_links(u) {
            let v = net.link(l).rx;
            if coreach[v] && !walk_reach[v] {
                walk_reach[v] = true;
                queue.push_back(v);
            }
        }
    }
    let useful: Vec<bool> = net
        .links()
        .iter()
        .map(|l| l.tx != sess.dst && walk_reach[l.tx] && coreach[l.rx])
        .collect();
    let row = |node: usize| if node < sess.dst { node } else { node - 1 };
    let dim = n - 1;
    let mut m = Array2::eye(dim);
    let mut fanout = vec![0usize; n];
    for node in 0..n {
        if node == sess.dst {
            continue;
        }
        let outs: Vec<usize> = net
            .out_links(node)
            .iter()
            .copied()
            .filter(|&l| useful[l])
            .collect();
        fanout[node] = outs.len();
        if outs.is_empty() {
            continue;
        }
        let share = 1.0 / outs.len() as f64;
        for l in outs {
            let rx = net.link(l).rx;
            if rx != sess.dst {
                m[(row(rx), row(node))] -= share;
            }
        }
    }
    let mut b = Array1::zeros(dim);
    b[row(sess.src)] = eps;
    let phi = oracle::lu_solve(&m, &b)
        .map_err(|e| SolveError::Internal(format!("equal-split flux solve: {e}")))?;
    let mut x = Array1::zeros(net.link_count());
    for node in 0..n {
        if node == sess.dst || fanout[node] == 0 {
            continue;
        }
        let share_flow = phi[row(node)] / fanout[node] as f64;
        for &l in net.out_links(node) {
            if useful[l] {
                x[l] = share_flow;
            }
        }
    }
    for l in 0..net.link_count() {
        if useful[l] && !(x[l] > 0.0) {
            return Err(SolveError::Internal(format!(
                "useful link {l} received nonpositive walk flow {}",
                x[l]
            )));
        }
    }
    Ok(x)
}

/// Shortest directed path between two nodes, as link indices; `None` when no
/// path exists.
fn directed_path(net: &Network, from: usize, to: usize) -> Option<Vec<usize>> {
    let n = net.node_count();
    let mut prev: Vec<Option<usize>> = vec![None; n];
    let mut seen = vec![false; n];
    seen[from] = true;
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(from);
    while let Some(u) = queue.pop_front() {
        if u == to {
            break;
        }
        for &l in net.out_links(u) {
            let v = net.link(l).rx;
            if !seen[v] {
                seen[v] = true;
                prev[v] = Some(l);
                queue.push_back(v);
            }
        }
    }
    if !seen[to] {
        return None;
    }
    let mut path = Vec::new();
    let mut node = to;
    while node != from {
        let l = prev[node].expect("reconstruction only visits discovered nodes");
        path.push(l);
        node = net.link(l).tx;
    }
    path.reverse();
    Some(path)
}

// ---------------------------------------------------------------------------
// Newton machinery
// ---------------------------------------------------------------------------

/// Newton decrement λ(y) = √(Δᵀ∇²f(y)Δ), accumulated from the same
/// per-entity pieces both execution modes use: S_ff·Δs_f² per source and
/// Σ_f(Δx_l^(f)/x_l^(f))² + (Σ_f Δx_l^(f))²/δ_l² per link.
///
/// Callers must pass a strictly interior point.
pub fn newton_decrement(
    net: &Network,
    sessions: &[Session],
    y: &PrimalPoint,
    dir: &Direction,
    t: f64,
) -> f64 {
    debug_assert!(y.is_interior(net));
    let mut total = 0.0;
    for (f, sess) in sessions.iter().enumerate() {
        let s = y.s[f];
        let s_ff = -t * sess.utility.d2(s) + 1.0 / (s * s);
        total += s_ff * dir.ds[f] * dir.ds[f];
    }
    for l in 0..net.link_count() {
        let mut along = 0.0;
        let mut squared = 0.0;
        for f in 0..sessions.len() {
            let r = dir.dx[(l, f)] / y.x[(l, f)];
            squared += r * r;
            along += dir.dx[(l, f)];
        }
        let scaled = along / y.slack[l];
        total += squared + scaled * scaled;
    }
    total.max(0.0).sqrt()
}

/// Backtracking line search along Δ. The step is capped at `boundary_frac`
/// of the distance to the nearest positivity boundary over rates, flows, and
/// slacks. In the quadratic zone (decrement at or below the threshold) a
/// unit step is accepted when it keeps the point interior; the decrement
/// bounds every relative coordinate move by λ < 1, so that acceptance always
/// fires and descent is guaranteed without consulting f. In the damped phase
/// the measured slope ∇fᵀΔ must be strictly negative — there λ² ≥ η² stands
/// far above solve noise, so the sign is meaningful — and the step shrinks
/// geometrically until the Armijo bound f(y+πΔ) ≤ f(y) + σ·π·∇fᵀΔ holds at
/// an interior point. Near a stage optimum the measured slope is dominated
/// by the noise of the inexact dual solve and the drift correction (the true
/// value −λ² sinks below both), which is why the quadratic zone never reads
/// it; inside the zone any backtracking falls back to the model slope −λ².
pub fn line_search(
    net: &Network,
    sessions: &[Session],
    y: &PrimalPoint,
    dir: &Direction,
    t: f64,
    decrement: f64,
    config: &SolverConfig,
) -> Result<f64, SolveError> {
    let lay = PrimalLayout::new(net.link_count(), sessions.len());
    let g = gradient(net, sessions, y, t).map_err(|e| SolveError::Internal(e.to_string()))?;
    let flat = dir.flatten(&lay);
    let quadratic_zone = decrement <= config.full_step_threshold;
    let measured = g.dot(&flat);
    if !quadratic_zone && !(measured < 0.0) {
        return Err(SolveError::Ascent { slope: measured });
    }
    let slope = if quadratic_zone { -decrement * decrement } else { measured };
    let f0 = objective_value(net, sessions, y, t)
        .map_err(|e| SolveError::Internal(e.to_string()))?;
    let mut ratio = f64::INFINITY;
    for f in 0..sessions.len() {
        if dir.ds[f] < 0.0 {
            ratio = ratio.min(y.s[f] / -dir.ds[f]);
        }
    }
    for l in 0..net.link_count() {
        let mut along = 0.0;
        for f in 0..sessions.len() {
            let d = dir.dx[(l, f)];
            if d < 0.0 {
                ratio = ratio.min(y.x[(l, f)] / -d);
            }
            along += d;
        }
        // The slack shrinks when the link's total flow grows.
        if along > 0.0 {
            ratio = ratio.min(y.slack[l] / along);
        }
    }
    let cap = config.boundary_frac * ratio;
    if decrement <= config.full_step_threshold && cap >= 1.0 {
        if let Ok(trial) = y.stepped(net, &dir.ds, &dir.dx, 1.0) {
            if trial.is_interior(net) {
                return Ok(1.0);
            }
        }
    }
    let mut step = cap.min(1.0);
    while step >= tol::STEP_MIN {
        let bound = f0 + config.sigma * step * slope;
        if let Ok(trial) = y.stepped(net, &dir.ds, &dir.dx, step) {
            if trial.is_interior(net) {
                if let Ok(f1) = objective_value(net, sessions, &trial, t) {
                    if f1 <= bound {
                        return Ok(step);
                    }
                }
            }
        }
        step *= config.beta;
    }
    Err(SolveError::Stall { step })
}

/// The splitting configuration Newton iterations use: the configured α and
/// round cap with the inner tolerance tightened, so dual error never limits
/// outer convergence.
fn solver_split(config: &SolverConfig) -> SplitConfig {
    SplitConfig { inner_tol: tol::INNER_TOL_SOLVER, ..config.split }
}

/// Subtracts each row's flow-balance residual from its dual target, so the
/// resulting direction contracts accumulated drift instead of carrying it
/// along.
fn apply_drift_correction(
    system: &mut SplitSystem,
    net: &Network,
    sessions: &[Session],
    y: &PrimalPoint,
) {
    for (f, sess) in sessions.iter().enumerate() {
        for n in 0..net.node_count() {
            if n == sess.dst {
                continue;
            }
            let i = system.layout.index(f, n).expect("non-destination rows are present");
            system.rhs[i] -= node_balance(net, sessions, y, n, f);
        }
    }
}

fn measure(
    net: &Network,
    sessions: &[Session],
    y: &PrimalPoint,
    t: f64,
    stage: usize,
    iter: usize,
    decrement: f64,
    step: f64,
    inner_iters: usize,
) -> Result<IterRecord, SolveError> {
    let objective =
        objective_value(net, sessions, y, t).map_err(|e| SolveError::Internal(e.to_string()))?;
    let feas = check_feasibility(net, sessions, y, tol::BALANCE)
        .map_err(|e| SolveError::Internal(e.to_string()))?;
    Ok(IterRecord {
        stage,
        iter,
        t,
        objective,
        utility: total_utility(sessions, &y.s),
        decrement,
        step,
        inner_iters,
        balance_residual: feas.max_balance,
        min_slack: feas.min_slack,
    })
}

/// One damped Newton iteration at fixed t: assemble the dual system with the
/// drift correction, solve it warm-started from the previous duals, take the
/// closed-form primal direction, test the decrement, and step. On
/// convergence the state is left untouched and the record carries step 0.
pub fn newton_iteration(
    net: &Network,
    sessions: &[Session],
    state: &mut NewtonState,
    stage: usize,
    iter: usize,
    config: &SolverConfig,
) -> Result<IterOutcome, SolveError> {
    let split = solver_split(config);
    let mut system = assemble_dual_system(net, sessions, &state.y, state.t, &split)
        .map_err(|e| SolveError::Internal(format!("dual assembly: {e}")))?;
    apply_drift_correction(&mut system, net, sessions, &state.y);
    let w0 = system.layout.flatten(&state.w.w);
    let solve = solve_duals_quiet(&system, &split, &w0)
        .map_err(|source| SolveError::Dual { stage, iteration: iter, source })?;
    state.w = DualPoint { w: system.layout.expand(&solve.w) };
    let dir = primal_direction(net, sessions, &state.y, &state.w, state.t)
        .map_err(|e| SolveError::Internal(format!("primal direction: {e}")))?;
    let lambda = newton_decrement(net, sessions, &state.y, &dir, state.t);
    if config.fixed_iterations.is_none() && lambda < config.decrement_tol {
        let record =
            measure(net, sessions, &state.y, state.t, stage, iter, lambda, 0.0, solve.iterations)?;
        return Ok(IterOutcome { record, converged: true });
    }
    let step = line_search(net, sessions, &state.y, &dir, state.t, lambda, config)?;
    state.y = state
        .y
        .stepped(net, &dir.ds, &dir.dx, step)
        .map_err(|e| SolveError::Internal(format!("step: {e}")))?;
    state
        .y
        .require_interior(net)
        .map_err(|e| SolveError::Internal(format!("post-step point: {e}")))?;
    let record =
        measure(net, sessions, &state.y, state.t, stage, iter, lambda, step, solve.iterations)?;
    if record.balance_residual > tol::BALANCE {
        return Err(SolveError::Internal(format!(
            "flow balance drifted to {:.3e} after the step (stage {stage}, iteration {iter})",
            record.balance_residual
        )));
    }
    Ok(IterOutcome { record, converged: false })
}

// ---------------------------------------------------------------------------
// Outer loops
// ---------------------------------------------------------------------------

/// Number of inequality constraints m = L + F + L·F; after a stage at weight
/// t the utility gap to the true optimum is at most m/t.
fn constraint_count(net: &Network, sessions: &[Session]) -> f64 {
    let l = net.link_count() as f64;
    let f = sessions.len() as f64;
    l + f + l * f
}

fn seed_rates(net: &Network, sessions: &[Session], config: &SolverConfig) -> Array1<f64> {
    let eps = config.seed_rate.unwrap_or(0.1 * net.min_capacity());
    Array1::from_elem(sessions.len(), eps)
}

/// Full barrier solve in the configured execution mode.
pub fn barrier_solve(
    net: &Network,
    sessions: &[Session],
    config: &SolverConfig,
) -> Result<(Solution, RunTrace), SolveError> {
    match config.mode {
        ExecutionMode::Centralized => solve_centralized(net, sessions, config),
        ExecutionMode::Distributed => {
            let (solution, trace, _) = run_distributed(net, sessions, config)?;
            Ok((solution, trace))
        }
    }
}

fn solve_centralized(
    net: &Network,
    sessions: &[Session],
    config: &SolverConfig,
) -> Result<(Solution, RunTrace), SolveError> {
    config.validate()?;
    net.check_sessions(sessions).map_err(|e| SolveError::Input(e.to_string()))?;
    let (y, w) = initialize(net, sessions, &seed_rates(net, sessions, config))?;
    let mut state = NewtonState { y, w, t: config.barrier.t };
    let m = constraint_count(net, sessions);
    let mut rows = Vec::new();
    let mut stage = 0;
    let mut final_dec = f64::INFINITY;
    loop {
        stage += 1;
        let budget = config.fixed_iterations.unwrap_or(config.max_outer);
        let mut last = f64::INFINITY;
        let mut converged = false;
        for iter in 1..=budget {
            let outcome = newton_iteration(net, sessions, &mut state, stage, iter, config)?;
            final_dec = outcome.record.decrement;
            if outcome.converged {
                converged = true;
                break;
            }
            last = outcome.record.decrement;
            rows.push(outcome.record);
        }
        if !converged && config.fixed_iterations.is_none() {
            return Err(SolveError::IterationLimit { stage, decrement: last });
        }
        if m / state.t < config.barrier.gap_tol {
            break;
        }
        state.t *= config.barrier.mu;
    }
    let solution = finish(net, sessions, state, stage, rows.len(), final_dec)?;
    Ok((solution, RunTrace { rows }))
}

fn finish(
    net: &Network,
    sessions: &[Session],
    state: NewtonState,
    stages: usize,
    iterations: usize,
    decrement: f64,
) -> Result<Solution, SolveError> {
    let objective = objective_value(net, sessions, &state.y, state.t)
        .map_err(|e| SolveError::Internal(e.to_string()))?;
    let utility = total_utility(sessions, &state.y.s);
    Ok(Solution {
        y: state.y,
        w: state.w,
        decrement,
        t: state.t,
        stages,
        iterations,
        objective,
        utility,
    })
}

/// Runs the barrier method with every dual sweep and direction kernel
/// executed entity by entity against the instrumented runtime, then audits
/// the read ledger: a single non-one-hop read fails the run. Convergence
/// tests, step control, and trace rows come from observed state; those are
/// scalar reductions of per-entity quantities, not neighbor state reads.
pub fn run_distributed(
    net: &Network,
    sessions: &[Session],
    config: &SolverConfig,
) -> Result<(Solution, RunTrace, LocalityReport), SolveError> {
    config.validate()?;
    net.check_sessions(sessions).map_err(|e| SolveError::Input(e.to_string()))?;
    let (y0, w0) = initialize(net, sessions, &seed_rates(net, sessions, config))?;
    let mut rt = Runtime::new(net, sessions, &y0, &w0)
        .map_err(|e| SolveError::Input(e.to_string()))?;
    let m = constraint_count(net, sessions);
    let mut t = config.barrier.t;
    let mut rows = Vec::new();
    let mut stage = 0;
    let mut final_dec = f64::INFINITY;
    loop {
        stage += 1;
        let budget = config.fixed_iterations.unwrap_or(config.max_outer);
        let mut last = f64::INFINITY;
        let mut converged = false;
        for iter in 1..=budget {
            let outcome =
                distributed_iteration(&mut rt, net, sessions, t, stage, iter, config)?;
            final_dec = outcome.record.decrement;
            if outcome.converged {
                converged = true;
                break;
            }
            last = outcome.record.decrement;
            rows.push(outcome.record);
        }
        if !converged && config.fixed_iterations.is_none() {
            return Err(SolveError::IterationLimit { stage, decrement: last });
        }
        if m / t < config.barrier.gap_tol {
            break;
        }
        t *= config.barrier.mu;
    }
    let report = rt.locality_report();
    if !report.is_clean() {
        return Err(SolveError::Locality(report.summary()));
    }
    let state = NewtonState { y: rt.observe_primal(), w: rt.observe_duals(), t };
    let solution = finish(net, sessions, state, stage, rows.len(), final_dec)?;
    Ok((solution, RunTrace { rows }, report))
}

/// The distributed twin of [`newton_iteration`]: dual rounds advance through
/// per-node one-hop updates committed at round barriers, directions come
/// from per-entity kernels over instrumented reads. A control-plane copy of
/// the dual system exists only to decide stopping; iterates never touch it.
fn distributed_iteration(
    rt: &mut Runtime,
    net: &Network,
    sessions: &[Session],
    t: f64,
    stage: usize,
    iter: usize,
    config: &SolverConfig,
) -> Result<IterOutcome, SolveError> {
    let split = solver_split(config);
    rt.set_phase(Phase::Measure);
    let y = rt.observe_primal();
    let mut system = assemble_dual_system(net, sessions, &y, t, &split)
        .map_err(|e| SolveError::Internal(format!("dual assembly: {e}")))?;
    apply_drift_correction(&mut system, net, sessions, &y);
    let threshold = system.residual_threshold(split.inner_tol);
    let mut w_flat = system.layout.flatten(&rt.observe_duals().w);
    let mut inner = 0;
    if system.residual_inf(&w_flat) > threshold {
        let mut settled = false;
        for k in 1..=split.max_inner {
            rt.set_phase(Phase::DualSweep);
            rt.next_round();
            let mut next = rt.observe_duals().w;
            for (f, sess) in sessions.iter().enumerate() {
                for n in 0..net.node_count() {
                    if n == sess.dst {
                        continue;
                    }
                    let local = rt.snapshot_one_hop(n, f, true);
                    next[(n, f)] = local_dual_update(&local, t, split.alpha)
                        .map_err(|source| SolveError::Dual { stage, iteration: iter, source })?;
                }
            }
            rt.commit_duals(next).map_err(|e| SolveError::Internal(e.to_string()))?;
            rt.set_phase(Phase::Measure);
            w_flat = system.layout.flatten(&rt.observe_duals().w);
            inner = k;
            if system.residual_inf(&w_flat) <= threshold {
                settled = true;
                break;
            }
        }
        if !settled {
            return Err(SolveError::Dual {
                stage,
                iteration: iter,
                source: SplitError::Convergence {
                    iterations: split.max_inner,
                    residual: system.residual_inf(&w_flat),
                },
            });
        }
    }
    rt.set_phase(Phase::SourceDirection);
    let mut ds = Array1::zeros(sessions.len());
    for (f, sess) in sessions.iter().enumerate() {
        let (s, w_src) = rt.source_direction_inputs(f);
        ds[f] = source_direction(&sess.utility, s, t, w_src)
            .map_err(|e| SolveError::Internal(format!("source direction: {e}")))?;
    }
    rt.set_phase(Phase::LinkDirection);
    let mut dx = Array2::zeros((net.link_count(), sessions.len()));
    for l in 0..net.link_count() {
        let (x_row, slack, dw) = rt.link_direction_inputs(l);
        let row = link_direction(&x_row, slack, &dw)
            .map_err(|e| SolveError::Internal(format!("link direction: {e}")))?;
        dx.row_mut(l).assign(&row);
    }
    let dir = Direction { ds, dx };
    rt.set_phase(Phase::Measure);
    let lambda = newton_decrement(net, sessions, &y, &dir, t);
    if config.fixed_iterations.is_none() && lambda < config.decrement_tol {
        let record = measure(net, sessions, &y, t, stage, iter, lambda, 0.0, inner)?;
        return Ok(IterOutcome { record, converged: true });
    }
    let step = line_search(net, sessions, &y, &dir, t, lambda, config)?;
    let y_new = y
        .stepped(net, &dir.ds, &dir.dx, step)
        .map_err(|e| SolveError::Internal(e.to_string()))?;
    y_new
        .require_interior(net)
        .map_err(|e| SolveError::Internal(format!("post-step point: {e}")))?;
    rt.commit_primal(&y_new).map_err(|e| SolveError::Internal(e.to_string()))?;
    let record = measure(net, sessions, &y_new, t, stage, iter, lambda, step, inner)?;
    if record.balance_residual > tol::BALANCE {
        return Err(SolveError::Internal(format!(
            "flow balance drifted to {:.3e} after the step (stage {stage}, iteration {iter})",
            record.balance_residual
        )));
    }
    Ok(IterOutcome { record, converged: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use ndarray::arr1;

    #[test]
    fn equal_split_walk_matches_the_hand_computed_fluxes() {
        let (net, sessions) = fixtures::five_node();
        let eps = 0.4;
        let (y, w) = initialize(&net, &sessions[..1], &arr1(&[eps])).unwrap();
        // Source splits over two links, node 1 again over two, node 4
        // collects three quarters of the injection.
        let expected = [0.2, 0.2, 0.2, 0.1, 0.1, 0.3];
        for (l, want) in expected.iter().enumerate() {
            assert!(
                (y.x[(l, 0)] - want).abs() < 1e-12,
                "link {l}: {} vs {want}",
                y.x[(l, 0)]
            );
        }
        assert_eq!(y.s[0], eps);
        assert_eq!(w.w[(2, 0)], 0.0);
        assert_eq!(w.w[(0, 0)], 1.0);
    }

    #[test]
    fn infeasible_sessions_name_the_blocked_links() {
        let (net, sessions) = fixtures::five_node();
        let err = initialize(&net, &sessions, &arr1(&[0.1, 0.1])).unwrap_err();
        match err {
            SolveError::Infeasible { pairs } => assert_eq!(pairs, vec![(4, 1), (5, 1)]),
            other => panic!("expected infeasibility, got {other}"),
        }
    }

    #[test]
    fn ring_initialization_is_interior_balanced_and_covers_cycle_links() {
        let (net, sessions) = fixtures::ring_five();
        let (y, _) = initialize(&net, &sessions, &arr1(&[0.1, 0.1])).unwrap();
        for l in 0..net.link_count() {
            for f in 0..sessions.len() {
                assert!(y.x[(l, f)] > 0.0, "flow ({l}, {f}) is {}", y.x[(l, f)]);
            }
        }
        assert!(y.is_interior(&net));
        let feas = check_feasibility(&net, &sessions, &y, tol::BALANCE_INIT).unwrap();
        assert!(feas.max_balance <= tol::BALANCE_INIT, "balance {:.3e}", feas.max_balance);
    }

    #[test]
    fn oversized_seed_rates_are_rescaled_to_half_load() {
        let (net, sessions) = fixtures::two_node(1.0);
        let (y, _) = initialize(&net, &sessions, &arr1(&[0.8])).unwrap();
        assert!((y.x[(0, 0)] - 0.5).abs() < 1e-15);
        assert!((y.s[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn decrement_matches_the_dense_quadratic_form() {
        let (net, sessions) = fixtures::five_node();
        let y = PrimalPoint::new(
            &net,
            arr1(&[0.3, 0.2]),
            Array2::from_elem((6, 2), 0.11),
        )
        .unwrap();
        let t = 2.0;
        // An arbitrary direction: the identity must hold for any Δ, not just
        // Newton directions.
        let mut dx = Array2::zeros((6, 2));
        for l in 0..6 {
            for f in 0..2 {
                dx[(l, f)] = 0.001 * ((l + 2 * f) as f64 - 2.5);
            }
        }
        let dir = Direction { ds: arr1(&[0.01, -0.02]), dx };
        let lambda = newton_decrement(&net, &sessions, &y, &dir, t);
        let h = crate::oracle::dense_hessian(&net, &sessions, &y, t).unwrap();
        let lay = PrimalLayout::new(6, 2);
        let flat = dir.flatten(&lay);
        let dense = flat.dot(&h.dot(&flat)).sqrt();
        assert!(
            (lambda - dense).abs() <= 1e-10 * (1.0 + dense),
            "{lambda} vs {dense}"
        );
    }

    #[test]
    fn decrement_has_the_single_link_closed_form() {
        let (net, sessions) = fixtures::two_node(2.0);
        let y =
            PrimalPoint::new(&net, arr1(&[0.5]), Array2::from_elem((1, 1), 0.5)).unwrap();
        let dir = Direction { ds: arr1(&[0.0]), dx: Array2::from_elem((1, 1), 0.5) };
        let lambda = newton_decrement(&net, &sessions, &y, &dir, 1.0);
        // (Δx/x)² + (Δx/δ)² with x = Δx = 1/2 and δ = 3/2.
        let expected = (1.0 + (0.5f64 / 1.5).powi(2)).sqrt();
        assert!((lambda - expected).abs() < 1e-14, "{lambda} vs {expected}");
    }

    #[test]
    fn ascent_directions_are_rejected() {
        let (net, sessions) = fixtures::two_node(2.0);
        let y =
            PrimalPoint::new(&net, arr1(&[0.5]), Array2::from_elem((1, 1), 0.5)).unwrap();
        let lay = PrimalLayout::new(1, 1);
        let g = gradient(&net, &sessions, &y, 1.0).unwrap();
        let dir = Direction {
            ds: arr1(&[g[lay.s(0)]]),
            dx: Array2::from_elem((1, 1), g[lay.x(0, 0)]),
        };
        match line_search(&net, &sessions, &y, &dir, 1.0, 1.0, &SolverConfig::default()) {
            Err(SolveError::Ascent { slope }) => assert!(slope > 0.0),
            other => panic!("expected ascent rejection, got {other:?}"),
        }
    }

    #[test]
    fn newton_iterations_descend_and_stay_balanced() {
        let (net, sessions) = fixtures::ring_five();
        let config = SolverConfig::default();
        let (y, w) = initialize(&net, &sessions, &seed_rates(&net, &sessions, &config)).unwrap();
        let mut state = NewtonState { y, w, t: 1.0 };
        let mut prev = objective_value(&net, &sessions, &state.y, state.t).unwrap();
        for iter in 1..=5 {
            let out = newton_iteration(&net, &sessions, &mut state, 1, iter, &config).unwrap();
            if out.converged {
                break;
            }
            assert!(
                out.record.objective < prev,
                "iteration {iter} did not descend: {} vs {prev}",
                out.record.objective
            );
            assert!(out.record.balance_residual <= tol::BALANCE);
            assert!(out.record.step > 0.0 && out.record.step <= 1.0);
            assert!(out.record.inner_iters > 0);
            prev = out.record.objective;
        }
    }

    #[test]
    fn barrier_stages_approach_the_known_single_link_optimum() {
        // One session on one link of capacity 2 with log utility: the true
        // optimum pushes the rate to capacity, and the final stage's duality
        // bound m/t caps the remaining utility gap.
        let (net, sessions) = fixtures::two_node(2.0);
        let config = SolverConfig::default();
        let (solution, trace) = barrier_solve(&net, &sessions, &config).unwrap();
        assert!(solution.y.s[0] < 2.0);
        assert!(
            2.0 - solution.y.s[0] < 4e-3,
            "rate {} is too far from capacity",
            solution.y.s[0]
        );
        assert!((solution.utility - solution.y.s[0].ln()).abs() < 1e-12);
        assert!(2.0f64.ln() - solution.utility < 1.5e-3);
        let m = 3.0;
        assert!(m / solution.t < config.barrier.gap_tol);
        assert_eq!(trace.rows.len(), solution.iterations);
        assert!(solution.stages >= 4);
        assert!(trace.rows.iter().any(|r| r.step == 1.0), "no full step was ever taken");
        for pair in trace.rows.windows(2) {
            assert!(pair[1].stage >= pair[0].stage);
        }
    }

    #[test]
    fn fixed_iteration_stopping_runs_exactly_that_many_rows() {
        let (net, sessions) = fixtures::two_node(2.0);
        let config = SolverConfig {
            fixed_iterations: Some(3),
            barrier: BarrierConfig { t: 1.0, mu: 10.0, gap_tol: 10.0 },
            ..SolverConfig::default()
        };
        let (solution, trace) = barrier_solve(&net, &sessions, &config).unwrap();
        assert_eq!(trace.rows.len(), 3);
        assert_eq!(solution.stages, 1);
        assert_eq!(trace.stage_rows(1).len(), 3);
    }

    #[test]
    fn distributed_mode_matches_centralized_row_for_row() {
        let (net, sessions) = fixtures::ring_five();
        let config = SolverConfig {
            fixed_iterations: Some(4),
            barrier: BarrierConfig { t: 1.0, mu: 10.0, gap_tol: 50.0 },
            ..SolverConfig::default()
        };
        let (sol_c, trace_c) = barrier_solve(&net, &sessions, &config).unwrap();
        let (sol_d, trace_d, report) = run_distributed(&net, &sessions, &config).unwrap();
        assert!(report.is_clean(), "{}", report.summary());
        assert!(report.foreign_reads > 0);
        assert_eq!(trace_c.rows.len(), trace_d.rows.len());
        for (a, b) in trace_c.rows.iter().zip(&trace_d.rows) {
            assert_eq!(a.stage, b.stage);
            assert_eq!(a.iter, b.iter);
            assert_eq!(a.inner_iters, b.inner_iters);
            for (u, v) in [
                (a.objective, b.objective),
                (a.utility, b.utility),
                (a.decrement, b.decrement),
                (a.step, b.step),
                (a.balance_residual, b.balance_residual),
                (a.min_slack, b.min_slack),
            ] {
                assert!(
                    (u - v).abs() <= tol::TRACE_MATCH * (1.0 + u.abs()),
                    "trace divergence: {u} vs {v}"
                );
            }
        }
        for f in 0..sessions.len() {
            assert!((sol_c.y.s[f] - sol_d.y.s[f]).abs() <= tol::TRACE_MATCH);
        }
    }

    #[test]
    fn config_validation_rejects_bad_search_parameters() {
        let ok = SolverConfig::default();
        assert!(ok.validate().is_ok());
        let cases = [
            SolverConfig { sigma: 0.5, ..ok.clone() },
            SolverConfig { sigma: 0.0, ..ok.clone() },
            SolverConfig { beta: 1.0, ..ok.clone() },
            SolverConfig { boundary_frac: 1.0, ..ok.clone() },
            SolverConfig { decrement_tol: 0.0, ..ok.clone() },
            SolverConfig { max_outer: 0, ..ok.clone() },
            SolverConfig { fixed_iterations: Some(0), ..ok.clone() },
            SolverConfig { seed_rate: Some(0.0), ..ok.clone() },
        ];
        for bad in cases {
            assert!(bad.validate().is_err(), "{bad:?} should be rejected");
        }
    }
}
