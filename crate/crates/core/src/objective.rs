//! The barrier-augmented objective in the link-rearranged ordering: value,
//! gradient, block Hessian, and feasibility reporting.
//!
//! For barrier weight t > 0 the objective is
//!
//! ```text
//! f(ỹ) = −t·Σ_f U_f(s_f) − Σ_l log δ_l − Σ_f log s_f − Σ_{l,f} log x_l^(f)
//! ```
//!
//! with δ_l = C_l − Σ_f x_l^(f) the unused capacity of link l. Its Hessian is
//! block diagonal in the link-major ordering: one scalar S_ff per source and
//! one F×F block X_l per link, where X_l is diagonal plus the rank-one matrix
//! (1/δ_l²)·11ᵀ.

use ndarray::{Array1, Array2};
use std::fmt;

use crate::layout::PrimalLayout;
use crate::net::{Network, Session};
use crate::tol;

#[derive(Debug, Clone, PartialEq)]
pub enum ObjError {
    /// The point is on or outside the barrier domain boundary.
    NotInterior(String),
    /// Malformed inputs (shapes, parameter ranges).
    Input(String),
}

impl fmt::Display for ObjError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjError::NotInterior(m) => write!(f, "point not strictly interior: {m}"),
            ObjError::Input(m) => write!(f, "invalid input: {m}"),
        }
    }
}

impl std::error::Error for ObjError {}

/// Barrier schedule parameters: current weight t, stage multiplier mu, and
/// the target bound on the duality gap estimate m/t (m = number of inequality
/// constraints).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierConfig {
    pub t: f64,
    pub mu: f64,
    pub gap_tol: f64,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        BarrierConfig { t: 1.0, mu: 10.0, gap_tol: 1e-3 }
    }
}

impl BarrierConfig {
    pub fn validate(&self) -> Result<(), ObjError> {
        if !(self.t.is_finite() && self.t > 0.0) {
            return Err(ObjError::Input(format!("barrier weight t must be positive, got {}", self.t)));
        }
        if !(self.mu.is_finite() && self.mu > 1.0) {
            return Err(ObjError::Input(format!("barrier multiplier mu must exceed 1, got {}", self.mu)));
        }
        if !(self.gap_tol.is_finite() && self.gap_tol > 0.0) {
            return Err(ObjError::Input(format!("gap tolerance must be positive, got {}", self.gap_tol)));
        }
        Ok(())
    }
}

/// A primal iterate: session rates s (length F) and per-link per-session
/// flows x (L×F), with the derived slacks δ_l and squared norms
/// ‖x̂_l‖² = Σ_f (x_l^(f))² + δ_l². Derived values are always recomputed from
/// s and x, never updated incrementally.
///
/// Construction does not require strict interiority — feasibility reporting
/// and line-search probing must be able to represent boundary points — but
/// every calculus operation checks [`PrimalPoint::require_interior`] first.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalPoint {
    pub s: Array1<f64>,
    pub x: Array2<f64>,
    pub slack: Array1<f64>,
    pub sq_norm: Array1<f64>,
}

impl PrimalPoint {
    pub fn new(net: &Network, s: Array1<f64>, x: Array2<f64>) -> Result<Self, ObjError> {
        if x.nrows() != net.link_count() {
            return Err(ObjError::Input(format!(
                "flow matrix has {} rows for {} links",
                x.nrows(),
                net.link_count()
            )));
        }
        if x.ncols() != s.len() {
            return Err(ObjError::Input(format!(
                "flow matrix has {} columns for {} session rates",
                x.ncols(),
                s.len()
            )));
        }
        if s.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(ObjError::Input("non-finite entry in primal point".into()));
        }
        let mut point = PrimalPoint {
            s,
            x,
            slack: Array1::zeros(net.link_count()),
            sq_norm: Array1::zeros(net.link_count()),
        };
        point.refresh_derived(net);
        Ok(point)
    }

    /// Recomputes δ and ‖x̂‖² from s and x.
    fn refresh_derived(&mut self, net: &Network) {
        for l in 0..net.link_count() {
            let used: f64 = self.x.row(l).sum();
            let delta = net.capacity(l) - used;
            self.slack[l] = delta;
            let sq: f64 = self.x.row(l).iter().map(|v| v * v).sum();
            self.sq_norm[l] = sq + delta * delta;
        }
    }

    pub fn session_count(&self) -> usize {
        self.s.len()
    }

    /// Interiority threshold for this network: a fixed fraction of the
    /// largest capacity, guarding the log evaluations.
    pub fn interior_tol(net: &Network) -> f64 {
        tol::INTERIOR_SCALE * net.max_capacity()
    }

    /// Smallest of all rates, flows, and slacks.
    pub fn interior_margin(&self) -> f64 {
        let mut m = f64::INFINITY;
        for &v in self.s.iter().chain(self.x.iter()).chain(self.slack.iter()) {
            m = m.min(v);
        }
        m
    }

    pub fn is_interior(&self, net: &Network) -> bool {
        self.interior_margin() > Self::interior_tol(net)
    }

    pub fn require_interior(&self, net: &Network) -> Result<(), ObjError> {
        if !self.is_interior(net) {
            return Err(ObjError::NotInterior(format!(
                "margin {:.3e} at or below threshold {:.3e}",
                self.interior_margin(),
                Self::interior_tol(net)
            )));
        }
        Ok(())
    }

    /// The point s + step·Δs, x + step·Δx with derived values recomputed.
    pub fn stepped(
        &self,
        net: &Network,
        ds: &Array1<f64>,
        dx: &Array2<f64>,
        step: f64,
    ) -> Result<PrimalPoint, ObjError> {
        let s = &self.s + &(ds * step);
        let x = &self.x + &(dx * step);
        PrimalPoint::new(net, s, x)
    }

    /// Flat vector in the shared link-major ordering.
    pub fn flatten(&self, lay: &PrimalLayout) -> Array1<f64> {
        let mut v = Array1::zeros(lay.dim());
        for f in 0..self.session_count() {
            v[lay.s(f)] = self.s[f];
        }
        for l in 0..self.x.nrows() {
            for f in 0..self.session_count() {
                v[lay.x(l, f)] = self.x[(l, f)];
            }
        }
        v
    }
}

fn check_shapes(net: &Network, sessions: &[Session], y: &PrimalPoint) -> Result<(), ObjError> {
    if y.session_count() != sessions.len() {
        return Err(ObjError::Input(format!(
            "point has {} sessions, instance has {}",
            y.session_count(),
            sessions.len()
        )));
    }
    if y.x.nrows() != net.link_count() {
        return Err(ObjError::Input(format!(
            "point has {} links, network has {}",
            y.x.nrows(),
            net.link_count()
        )));
    }
    Ok(())
}

fn check_t(t: f64) -> Result<(), ObjError> {
    if !(t.is_finite() && t > 0.0) {
        return Err(ObjError::Input(format!("barrier weight t must be positive, got {t}")));
    }
    Ok(())
}

/// Barrier objective value f(ỹ).
pub fn objective_value(
    net: &Network,
    sessions: &[Session],
    y: &PrimalPoint,
    t: f64,
) -> Result<f64, ObjError> {
    check_shapes(net, sessions, y)?;
    check_t(t)?;
    y.require_interior(net)?;
    let mut val = 0.0;
    for (f, sess) in sessions.iter().enumerate() {
        val -= t * sess.utility.value(y.s[f]);
        val -= y.s[f].ln();
    }
    for l in 0..net.link_count() {
        val -= y.slack[l].ln();
        for f in 0..sessions.len() {
            val -= y.x[(l, f)].ln();
        }
    }
    Ok(val)
}

/// Gradient of f in the link-major ordering: −t·U′(s_f) − 1/s_f per source,
/// 1/δ_l − 1/x_l^(f) per flow.
pub fn gradient(
    net: &Network,
    sessions: &[Session],
    y: &PrimalPoint,
    t: f64,
) -> Result<Array1<f64>, ObjError> {
    check_shapes(net, sessions, y)?;
    check_t(t)?;
    y.require_interior(net)?;
    let lay = PrimalLayout::new(net.link_count(), sessions.len());
    let mut g = Array1::zeros(lay.dim());
    for (f, sess) in sessions.iter().enumerate() {
        g[lay.s(f)] = -t * sess.utility.d1(y.s[f]) - 1.0 / y.s[f];
    }
    for l in 0..net.link_count() {
        let inv_slack = 1.0 / y.slack[l];
        for f in 0..sessions.len() {
            g[lay.x(l, f)] = inv_slack - 1.0 / y.x[(l, f)];
        }
    }
    Ok(g)
}

/// Hessian blocks: the F source scalars S_ff = −t·U″(s_f) + 1/s_f², and one
/// F×F link block per link with diagonal 1/δ² + 1/x² and off-diagonal 1/δ².
pub fn hessian_blocks(
    net: &Network,
    sessions: &[Session],
    y: &PrimalPoint,
    t: f64,
) -> Result<(Array1<f64>, Vec<Array2<f64>>), ObjError> {
    check_shapes(net, sessions, y)?;
    check_t(t)?;
    y.require_interior(net)?;
    let ns = sessions.len();
    let mut s_diag = Array1::zeros(ns);
    for (f, sess) in sessions.iter().enumerate() {
        s_diag[f] = -t * sess.utility.d2(y.s[f]) + 1.0 / (y.s[f] * y.s[f]);
    }
    let mut blocks = Vec::with_capacity(net.link_count());
    for l in 0..net.link_count() {
        let inv_sq_slack = 1.0 / (y.slack[l] * y.slack[l]);
        let mut block = Array2::from_elem((ns, ns), inv_sq_slack);
        for f in 0..ns {
            let xf = y.x[(l, f)];
            block[(f, f)] = inv_sq_slack + 1.0 / (xf * xf);
        }
        blocks.push(block);
    }
    Ok((s_diag, blocks))
}

/// Feasibility report: per-session flow-balance residuals, the worst slack
/// and variable values, and any capacity-violating links.
#[derive(Debug, Clone)]
pub struct FeasReport {
    /// ‖balance residual‖∞ for each session.
    pub per_session_balance: Vec<f64>,
    pub max_balance: f64,
    pub min_slack: f64,
    pub min_rate: f64,
    pub min_flow: f64,
    /// Links whose slack is below −tol.
    pub capacity_violations: Vec<usize>,
}

impl FeasReport {
    pub fn is_feasible(&self, tol: f64) -> bool {
        self.max_balance <= tol
            && self.capacity_violations.is_empty()
            && self.min_slack >= -tol
            && self.min_rate >= 0.0
            && self.min_flow >= 0.0
    }

    pub fn summary(&self) -> String {
        format!(
            "max balance residual {:.3e}, min slack {:.3e}, min rate {:.3e}, \
             min flow {:.3e}, capacity violations {:?}",
            self.max_balance, self.min_slack, self.min_rate, self.min_flow,
            self.capacity_violations
        )
    }
}

/// Balance residual of one (node, session) pair: outgoing flow minus incoming
/// flow minus the source injection. Zero at every non-destination node of a
/// balanced point.
pub fn node_balance(net: &Network, sessions: &[Session], y: &PrimalPoint, n: usize, f: usize) -> f64 {
    let mut r = 0.0;
    for &l in net.out_links(n) {
        r += y.x[(l, f)];
    }
    for &l in net.in_links(n) {
        r -= y.x[(l, f)];
    }
    if sessions[f].src == n {
        r -= y.s[f];
    }
    r
}

pub fn check_feasibility(
    net: &Network,
    sessions: &[Session],
    y: &PrimalPoint,
    tol: f64,
) -> Result<FeasReport, ObjError> {
    check_shapes(net, sessions, y)?;
    let mut per_session = Vec::with_capacity(sessions.len());
    for (f, sess) in sessions.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for n in 0..net.node_count() {
            if n == sess.dst {
                // The destination row is not a constraint; it absorbs flow.
                continue;
            }
            worst = worst.max(node_balance(net, sessions, y, n, f).abs());
        }
        per_session.push(worst);
    }
    let max_balance = per_session.iter().copied().fold(0.0, f64::max);
    let min_slack = y.slack.iter().copied().fold(f64::INFINITY, f64::min);
    let min_rate = y.s.iter().copied().fold(f64::INFINITY, f64::min);
    let min_flow = y.x.iter().copied().fold(f64::INFINITY, f64::min);
    let capacity_violations = (0..net.link_count())
        .filter(|&l| y.slack[l] < -tol)
        .collect();
    Ok(FeasReport {
        per_session_balance: per_session,
        max_balance,
        min_slack,
        min_rate,
        min_flow,
        capacity_violations,
    })
}
