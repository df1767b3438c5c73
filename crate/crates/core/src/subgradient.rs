//! Dual-decomposition subgradient baseline.
//!
//! Relaxing the flow-balance constraints with prices u_n^(f) ≥ 0 splits the
//! problem into per-session flow-control subproblems (maximize
//! U_f(s) − u_src·s) and per-link routing subproblems (give the capacity to
//! the session with the largest positive price drop u_tx − u_rx). The dual
//! function Θ(u) is the sum of those subproblem optima; it is minimized by a
//! projected subgradient descent whose search direction at each (node,
//! session) is that node's flow-balance residual under the subproblem
//! solutions. Destination rows carry no constraint and their prices stay
//! pinned at zero.
//!
//! This method is the convergence yardstick the Newton solver is compared
//! against; it shares no formulas with the barrier path beyond the utility
//! definitions.

use ndarray::{Array1, Array2};
use std::fmt;

use crate::net::{Network, Session, UtilitySpec};
use crate::solver::total_utility;

#[derive(Debug, Clone, PartialEq)]
pub enum SubgradError {
    Input(String),
}

impl fmt::Display for SubgradError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubgradError::Input(m) => write!(f, "invalid subgradient input: {m}"),
        }
    }
}

impl std::error::Error for SubgradError {}

#[derive(Debug, Clone)]
pub struct SubgradConfig {
    /// Diminishing step rule π_k = a/(b+k).
    pub a: f64,
    pub b: f64,
    /// Fixed step size overriding the diminishing rule.
    pub constant_step: Option<f64>,
    pub max_iters: usize,
    /// Window length for the early-stopping test on dual improvement.
    pub window: usize,
    /// Stop when the best dual value improved by less than this (relative)
    /// over the last window; zero disables early stopping.
    pub improvement_tol: f64,
    /// Rate cap as a multiple of the largest capacity; the flow-control
    /// subproblem is unbounded at zero price without it.
    pub s_max_factor: f64,
}

impl Default for SubgradConfig {
    fn default() -> Self {
        SubgradConfig {
            a: 2.0,
            b: 10.0,
            constant_step: None,
            max_iters: 50_000,
            window: 1000,
            improvement_tol: 1e-12,
            s_max_factor: 10.0,
        }
    }
}

impl SubgradConfig {
    pub fn validate(&self) -> Result<(), SubgradError> {
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(SubgradError::Input(format!("step numerator must be positive, got {}", self.a)));
        }
        if !(self.b.is_finite() && self.b >= 0.0) {
            return Err(SubgradError::Input(format!(
                "step offset must be nonnegative, got {}",
                self.b
            )));
        }
        if let Some(step) = self.constant_step {
            if !(step.is_finite() && step > 0.0) {
                return Err(SubgradError::Input(format!(
                    "constant step must be positive, got {step}"
                )));
            }
        }
        if self.max_iters == 0 {
            return Err(SubgradError::Input("iteration cap must be at least 1".into()));
        }
        if self.window == 0 {
            return Err(SubgradError::Input("stopping window must be at least 1".into()));
        }
        if !(self.improvement_tol.is_finite() && self.improvement_tol >= 0.0) {
            return Err(SubgradError::Input(format!(
                "improvement tolerance must be nonnegative, got {}",
                self.improvement_tol
            )));
        }
        if !(self.s_max_factor.is_finite() && self.s_max_factor > 0.0) {
            return Err(SubgradError::Input(format!(
                "rate cap factor must be positive, got {}",
                self.s_max_factor
            )));
        }
        Ok(())
    }
}

/// Nonnegative prices per (node, session); destination rows are identically
/// zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceVector {
    pub u: Array2<f64>,
}

impl PriceVector {
    pub fn zeros(net: &Network, sessions: &[Session]) -> Self {
        PriceVector { u: Array2::zeros((net.node_count(), sessions.len())) }
    }

    pub fn validate(&self, net: &Network, sessions: &[Session]) -> Result<(), SubgradError> {
        if self.u.nrows() != net.node_count() || self.u.ncols() != sessions.len() {
            return Err(SubgradError::Input(format!(
                "price matrix is {:?}, instance needs {}×{}",
                self.u.dim(),
                net.node_count(),
                sessions.len()
            )));
        }
        for ((n, f), &v) in self.u.indexed_iter() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SubgradError::Input(format!(
                    "price at (node {n}, session {f}) is {v}; prices must be nonnegative"
                )));
            }
            if sessions[f].dst == n && v != 0.0 {
                return Err(SubgradError::Input(format!(
                    "price at destination node {n} of session {f} is {v}, expected 0"
                )));
            }
        }
        Ok(())
    }
}

/// Maximizer of U(s) − u·s over [0, s_max]. For weighted-log utility the
/// stationary point is weight/u, capped; zero price sends the rate to the
/// cap because the objective is then increasing.
pub fn flow_control_subproblem(utility: &UtilitySpec, u_src: f64, s_max: f64) -> f64 {
    debug_assert!(u_src >= 0.0 && s_max > 0.0);
    match *utility {
        UtilitySpec::WeightedLog { weight } => {
            if u_src <= 0.0 {
                s_max
            } else {
                (weight / u_src).min(s_max)
            }
        }
    }
}

/// Winner-take-all capacity allocation: the session with the largest
/// strictly positive price drop receives the whole capacity, ties go to the
/// lowest session index, and no positive drop leaves the link idle.
pub fn routing_subproblem(capacity: f64, diffs: &Array1<f64>) -> Array1<f64> {
    let mut best: Option<(usize, f64)> = None;
    for (f, &d) in diffs.iter().enumerate() {
        if d > 0.0 && best.is_none_or(|(_, bd)| d > bd) {
            best = Some((f, d));
        }
    }
    let mut x = Array1::zeros(diffs.len());
    if let Some((f, _)) = best {
        x[f] = capacity;
    }
    x
}

/// One projected price update u⁺ = max{u − π·d, 0}.
pub fn subgradient_step(u: f64, d: f64, step: f64) -> f64 {
    debug_assert!(step > 0.0);
    (u - step * d).max(0.0)
}

/// Dual function Θ(u), evaluated separably: one flow-control optimum per
/// session plus one routing optimum per link.
pub fn dual_value(
    net: &Network,
    sessions: &[Session],
    prices: &PriceVector,
    s_max: f64,
) -> f64 {
    let mut theta = 0.0;
    for (f, sess) in sessions.iter().enumerate() {
        let u_src = prices.u[(sess.src, f)];
        let s = flow_control_subproblem(&sess.utility, u_src, s_max);
        theta += sess.utility.value(s) - u_src * s;
    }
    for (l, link) in net.links().iter().enumerate() {
        let mut best: f64 = 0.0;
        for f in 0..sessions.len() {
            best = best.max(prices.u[(link.tx, f)] - prices.u[(link.rx, f)]);
        }
        theta += net.capacity(l) * best;
    }
    theta
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubgradRecord {
    pub iteration: usize,
    pub step: f64,
    pub dual_value: f64,
    pub best_dual: f64,
    /// Utility of the running-average rates.
    pub recovered_utility: f64,
    /// Largest flow-balance violation of the current subproblem solutions.
    pub residual_norm: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SubgradTrace {
    pub rows: Vec<SubgradRecord>,
}

#[derive(Debug, Clone)]
pub struct SubgradSolution {
    pub prices: PriceVector,
    pub avg_rates: Array1<f64>,
    pub avg_flows: Array2<f64>,
    pub iterations: usize,
    pub best_dual: f64,
    pub recovered_utility: f64,
}

/// Projected subgradient descent on Θ(u) with running-average primal
/// recovery. Stops at the iteration cap, or earlier when the best dual value
/// stopped improving over the configured window.
pub fn subgradient_solve(
    net: &Network,
    sessions: &[Session],
    config: &SubgradConfig,
) -> Result<(SubgradSolution, SubgradTrace), SubgradError> {
    config.validate()?;
    net.check_sessions(sessions).map_err(|e| SubgradError::Input(e.to_string()))?;
    let fcount = sessions.len();
    let lcount = net.link_count();
    let s_max = config.s_max_factor * net.max_capacity();
    let mut prices = PriceVector::zeros(net, sessions);
    let mut avg_s: Array1<f64> = Array1::zeros(fcount);
    let mut avg_x: Array2<f64> = Array2::zeros((lcount, fcount));
    let mut rows: Vec<SubgradRecord> = Vec::new();
    let mut best_dual = f64::INFINITY;
    for k in 1..=config.max_iters {
        let step = config.constant_step.unwrap_or(config.a / (config.b + k as f64));
        let mut theta = 0.0;
        let mut s_star = Array1::zeros(fcount);
        for (f, sess) in sessions.iter().enumerate() {
            let u_src = prices.u[(sess.src, f)];
            let s = flow_control_subproblem(&sess.utility, u_src, s_max);
            s_star[f] = s;
            theta += sess.utility.value(s) - u_src * s;
        }
        let mut x_star = Array2::zeros((lcount, fcount));
        for (l, link) in net.links().iter().enumerate() {
            let mut diffs = Array1::zeros(fcount);
            for f in 0..fcount {
                diffs[f] = prices.u[(link.tx, f)] - prices.u[(link.rx, f)];
            }
            let alloc = routing_subproblem(net.capacity(l), &diffs);
            theta += net.capacity(l) * diffs.iter().fold(0.0f64, |m, &d| m.max(d));
            x_star.row_mut(l).assign(&alloc);
        }
        best_dual = best_dual.min(theta);
        let kf = k as f64;
        avg_s = (&avg_s * (kf - 1.0) + &s_star) / kf;
        avg_x = (&avg_x * (kf - 1.0) + &x_star) / kf;
        let recovered = total_utility(sessions, &avg_s);
        let mut residual: f64 = 0.0;
        let mut next = prices.u.clone();
        for (f, sess) in sessions.iter().enumerate() {
            for node in 0..net.node_count() {
                if node == sess.dst {
                    continue;
                }
                let mut d = 0.0;
                for &l in net.out_links(node) {
                    d += x_star[(l, f)];
                }
                for &l in net.in_links(node) {
                    d -= x_star[(l, f)];
                }
                if node == sess.src {
                    d -= s_star[f];
                }
                residual = residual.max(d.abs());
                next[(node, f)] = subgradient_step(prices.u[(node, f)], d, step);
            }
        }
        prices.u = next;
        rows.push(SubgradRecord {
            iteration: k,
            step,
            dual_value: theta,
            best_dual,
            recovered_utility: recovered,
            residual_norm: residual,
        });
        if config.improvement_tol > 0.0 && k >= 2 * config.window {
            let earlier = rows[k - 1 - config.window].best_dual;
            if earlier - best_dual < config.improvement_tol * (1.0 + best_dual.abs()) {
                break;
            }
        }
    }
    let iterations = rows.len();
    let recovered_utility = rows.last().map_or(0.0, |r| r.recovered_utility);
    Ok((
        SubgradSolution {
            prices,
            avg_rates: avg_s,
            avg_flows: avg_x,
            iterations,
            best_dual,
            recovered_utility,
        },
        SubgradTrace { rows },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use ndarray::arr1;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn flow_control_solves_the_scalar_problem() {
        let log = UtilitySpec::log();
        assert_eq!(flow_control_subproblem(&log, 2.0, 10.0), 0.5);
        assert_eq!(flow_control_subproblem(&log, 0.0, 10.0), 10.0);
        assert_eq!(flow_control_subproblem(&log, 0.1, 10.0), 10.0);
        let weighted = UtilitySpec::WeightedLog { weight: 2.0 };
        assert_eq!(flow_control_subproblem(&weighted, 1.0, 10.0), 2.0);
    }

    #[test]
    fn routing_gives_the_link_to_the_strongest_positive_drop() {
        let x = routing_subproblem(5.0, &arr1(&[3.0, 1.0]));
        assert_eq!(x, arr1(&[5.0, 0.0]));
        let idle = routing_subproblem(5.0, &arr1(&[-1.0, -2.0]));
        assert_eq!(idle, arr1(&[0.0, 0.0]));
        let tie = routing_subproblem(4.0, &arr1(&[2.0, 2.0]));
        assert_eq!(tie, arr1(&[4.0, 0.0]));
    }

    #[test]
    fn routing_never_exceeds_capacity_and_saturates_winners() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let diffs = Array1::from_shape_fn(4, |_| rng.random_range(-2.0..2.0));
            let x = routing_subproblem(3.0, &diffs);
            let used: f64 = x.sum();
            if diffs.iter().any(|&d| d > 0.0) {
                assert_eq!(used, 3.0);
            } else {
                assert_eq!(used, 0.0);
            }
        }
    }

    #[test]
    fn price_updates_project_onto_the_nonnegative_axis() {
        assert!((subgradient_step(1.0, 2.0, 0.1) - 0.8).abs() < 1e-15);
        assert_eq!(subgradient_step(0.1, 2.0, 0.1), 0.0);
        assert_eq!(subgradient_step(0.7, 0.0, 0.1), 0.7);
    }

    #[test]
    fn dual_value_matches_a_monolithic_lagrangian_evaluation() {
        let (net, sessions) = fixtures::five_node();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut prices = PriceVector::zeros(&net, &sessions);
        for (f, session) in sessions.iter().enumerate() {
            for n in 0..net.node_count() {
                if n != session.dst {
                    prices.u[(n, f)] = rng.random_range(0.0..2.0);
                }
            }
        }
        prices.validate(&net, &sessions).unwrap();
        let s_max = 10.0 * net.max_capacity();
        let separable = dual_value(&net, &sessions, &prices, s_max);
        // Monolithic: evaluate the Lagrangian at the subproblem maximizers.
        let mut value = 0.0;
        for (f, sess) in sessions.iter().enumerate() {
            let s = flow_control_subproblem(&sess.utility, prices.u[(sess.src, f)], s_max);
            value += sess.utility.value(s) - prices.u[(sess.src, f)] * s;
        }
        for (l, link) in net.links().iter().enumerate() {
            let mut diffs = Array1::zeros(sessions.len());
            for f in 0..sessions.len() {
                diffs[f] = prices.u[(link.tx, f)] - prices.u[(link.rx, f)];
            }
            let alloc = routing_subproblem(net.capacity(l), &diffs);
            value += alloc.dot(&diffs);
        }
        assert!((separable - value).abs() < 1e-10, "{separable} vs {value}");
    }

    #[test]
    fn single_link_run_approaches_the_analytic_optimum() {
        // max log s subject to s ≤ 2: optimum ln 2, attained with the price
        // at the source settling near U′(2) = 1/2.
        let (net, sessions) = fixtures::two_node(2.0);
        let config = SubgradConfig {
            max_iters: 5000,
            improvement_tol: 0.0,
            ..SubgradConfig::default()
        };
        let (solution, trace) = subgradient_solve(&net, &sessions, &config).unwrap();
        let opt = 2.0f64.ln();
        assert!(solution.best_dual >= opt - 1e-9, "dual {} below optimum", solution.best_dual);
        assert!(solution.best_dual - opt < 0.05, "dual bound too loose: {}", solution.best_dual);
        assert!(
            (solution.recovered_utility - opt).abs() < 0.1,
            "recovered {} vs {opt}",
            solution.recovered_utility
        );
        assert_eq!(trace.rows.len(), 5000);
        assert!((solution.avg_rates[0] - 2.0).abs() < 0.3);
    }

    #[test]
    fn prices_remain_nonnegative_with_pinned_destinations() {
        let (net, sessions) = fixtures::ring_five();
        let config = SubgradConfig { max_iters: 200, ..SubgradConfig::default() };
        let (solution, _) = subgradient_solve(&net, &sessions, &config).unwrap();
        solution.prices.validate(&net, &sessions).unwrap();
    }

    #[test]
    fn early_stopping_truncates_a_plateaued_run() {
        let (net, sessions) = fixtures::two_node(1.0);
        let config = SubgradConfig {
            max_iters: 20_000,
            window: 50,
            improvement_tol: 1e-6,
            ..SubgradConfig::default()
        };
        let (solution, trace) = subgradient_solve(&net, &sessions, &config).unwrap();
        assert!(solution.iterations < 20_000, "run never plateaued");
        assert_eq!(trace.rows.len(), solution.iterations);
    }

    #[test]
    fn config_validation_rejects_degenerate_rules() {
        let ok = SubgradConfig::default();
        assert!(ok.validate().is_ok());
        assert!(SubgradConfig { a: 0.0, ..ok.clone() }.validate().is_err());
        assert!(SubgradConfig { b: -1.0, ..ok.clone() }.validate().is_err());
        assert!(SubgradConfig { constant_step: Some(0.0), ..ok.clone() }.validate().is_err());
        assert!(SubgradConfig { max_iters: 0, ..ok.clone() }.validate().is_err());
        assert!(SubgradConfig { window: 0, ..ok.clone() }.validate().is_err());
        assert!(SubgradConfig { improvement_tol: -1.0, ..ok.clone() }.validate().is_err());
        assert!(SubgradConfig { s_max_factor: 0.0, ..ok }.validate().is_err());
    }
}
