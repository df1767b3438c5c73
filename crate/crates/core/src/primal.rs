//! Closed-form Hessian block inverses and the per-source/per-link primal
//! Newton direction, given dual variables.
//!
//! The Hessian is block diagonal, so inverting it splits into F scalar
//! source blocks and L link blocks of size F×F. Each link block is diagonal
//! plus a rank-one slack coupling, and its inverse has the closed form
//!
//! ```text
//! (X_l⁻¹)_ff   = (x_l^(f))²·(1 − (x_l^(f))²/‖x̂_l‖²)
//! (X_l⁻¹)_ff′ = −(x_l^(f)·x_l^(f′))²/‖x̂_l‖²          (f ≠ f′)
//! ```
//!
//! with ‖x̂_l‖² = Σ_f (x_l^(f))² + δ_l². Directions therefore need only
//! quantities owned by one source or one link plus the duals at its two
//! endpoints, which is what makes the whole Newton step one-hop local.
//!
//! Dual sign convention: w̃ is stored in "pressure" form, the negation of the
//! raw KKT multiplier, so that flow moves from high to low pressure. Under it
//! the direction is Δỹ = −H̃⁻¹(∇f − M̃ᵀw̃), the source coupling enters as
//! −s_f·w̃_src, and a link's own-session coupling is w̃_tx − w̃_rx.

use ndarray::{Array1, Array2};
use std::fmt;

use crate::layout::PrimalLayout;
use crate::net::{Network, Session, UtilitySpec};
use crate::objective::PrimalPoint;

#[derive(Debug, Clone, PartialEq)]
pub enum PrimalError {
    /// Inputs outside the operation's mathematical domain (nonpositive
    /// block diagonal, boundary point, degenerate slack).
    Domain(String),
    Input(String),
}

impl fmt::Display for PrimalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrimalError::Domain(m) => write!(f, "domain error: {m}"),
            PrimalError::Input(m) => write!(f, "invalid input: {m}"),
        }
    }
}

impl std::error::Error for PrimalError {}

/// Per-(node, session) flow-balance multipliers, stored N×F with the
/// convention that each session's destination entry is exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint {
    pub w: Array2<f64>,
}

impl DualPoint {
    pub fn new(
        net: &Network,
        sessions: &[Session],
        w: Array2<f64>,
    ) -> Result<Self, PrimalError> {
        let point = DualPoint { w };
        point.validate(net, sessions)?;
        Ok(point)
    }

    /// All-ones start with destination entries pinned to zero.
    pub fn ones(net: &Network, sessions: &[Session]) -> Self {
        let mut w = Array2::ones((net.node_count(), sessions.len()));
        for (f, sess) in sessions.iter().enumerate() {
            w[(sess.dst, f)] = 0.0;
        }
        DualPoint { w }
    }

    pub fn validate(&self, net: &Network, sessions: &[Session]) -> Result<(), PrimalError> {
        if self.w.nrows() != net.node_count() || self.w.ncols() != sessions.len() {
            return Err(PrimalError::Input(format!(
                "dual point is {}×{}, instance needs {}×{}",
                self.w.nrows(),
                self.w.ncols(),
                net.node_count(),
                sessions.len()
            )));
        }
        if self.w.iter().any(|v| !v.is_finite()) {
            return Err(PrimalError::Input("non-finite dual entry".into()));
        }
        for (f, sess) in sessions.iter().enumerate() {
            if self.w[(sess.dst, f)] != 0.0 {
                return Err(PrimalError::Input(format!(
                    "dual at session {f}'s destination (node {}) must be exactly 0, got {}",
                    sess.dst,
                    self.w[(sess.dst, f)]
                )));
            }
        }
        Ok(())
    }
}

/// Inverse of the diagonal source block: entry f is 1/S_ff with
/// S_ff = −t·U″_f(s_f) + 1/s_f².
pub fn invert_source_block(s_diag: &Array1<f64>) -> Result<Array1<f64>, PrimalError> {
    let mut inv = Array1::zeros(s_diag.len());
    for (f, &v) in s_diag.iter().enumerate() {
        if !(v.is_finite() && v > 0.0) {
            return Err(PrimalError::Domain(format!(
                "source block entry {f} is {v}; must be positive \
                 (non-concave utility or non-interior point)"
            )));
        }
        inv[f] = 1.0 / v;
    }
    Ok(inv)
}

/// Closed-form inverse of one link's Hessian block, from the link's flows and
/// slack alone.
pub fn invert_link_block(x_row: &Array1<f64>, slack: f64) -> Result<Array2<f64>, PrimalError> {
    if !(slack.is_finite() && slack > 0.0) {
        return Err(PrimalError::Domain(format!("slack must be positive, got {slack}")));
    }
    for (f, &x) in x_row.iter().enumerate() {
        if !(x.is_finite() && x > 0.0) {
            return Err(PrimalError::Domain(format!("flow {f} must be positive, got {x}")));
        }
    }
    let ns = x_row.len();
    let sq_norm: f64 = x_row.iter().map(|v| v * v).sum::<f64>() + slack * slack;
    let mut inv = Array2::zeros((ns, ns));
    for f1 in 0..ns {
        for f2 in 0..ns {
            let prod = x_row[f1] * x_row[f1] * x_row[f2] * x_row[f2];
            inv[(f1, f2)] = if f1 == f2 {
                x_row[f1] * x_row[f1] - prod / sq_norm
            } else {
                -prod / sq_norm
            };
        }
    }
    Ok(inv)
}

/// One source's Newton direction:
/// Δs_f = s_f(t·s_f·U′(s_f) + 1 − s_f·w̃_src) / (1 − t·s_f²·U″(s_f)).
pub fn source_direction(
    utility: &UtilitySpec,
    s: f64,
    t: f64,
    w_src: f64,
) -> Result<f64, PrimalError> {
    if !(s.is_finite() && s > 0.0) {
        return Err(PrimalError::Domain(format!("rate must be positive, got {s}")));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(PrimalError::Input(format!("barrier weight t must be positive, got {t}")));
    }
    let denom = 1.0 - t * s * s * utility.d2(s);
    if !(denom.is_finite() && denom > 0.0) {
        return Err(PrimalError::Domain(format!(
            "source block denominator is {denom}; utility must be concave"
        )));
    }
    Ok(s * (t * s * utility.d1(s) + 1.0 - s * w_src) / denom)
}

/// One link's Newton direction from its own flows, slack, and the dual
/// pressure difference dw_f = w̃_tx^(f) − w̃_rx^(f) of each session:
///
/// ```text
/// v_f  = 1/x_l^(f) − 1/δ_l + dw_f
/// Δx_l^(f) = (x_l^(f))²·(v_f − Σ_{f′}(x_l^(f′))²·v_{f′} / ‖x̂_l‖²)
/// ```
///
/// which is exactly X_l⁻¹·v without forming the matrix.
pub fn link_direction(
    x_row: &Array1<f64>,
    slack: f64,
    dw: &Array1<f64>,
) -> Result<Array1<f64>, PrimalError> {
    if dw.len() != x_row.len() {
        return Err(PrimalError::Input(format!(
            "dual difference length {} does not match flow count {}",
            dw.len(),
            x_row.len()
        )));
    }
    if !(slack.is_finite() && slack > 0.0) {
        return Err(PrimalError::Domain(format!("slack must be positive, got {slack}")));
    }
    for (f, &x) in x_row.iter().enumerate() {
        if !(x.is_finite() && x > 0.0) {
            return Err(PrimalError::Domain(format!("flow {f} must be positive, got {x}")));
        }
    }
    let ns = x_row.len();
    let sq_norm: f64 = x_row.iter().map(|v| v * v).sum::<f64>() + slack * slack;
    let mut v = Array1::zeros(ns);
    for f in 0..ns {
        v[f] = 1.0 / x_row[f] - 1.0 / slack + dw[f];
    }
    let cross: f64 = (0..ns).map(|f| x_row[f] * x_row[f] * v[f]).sum();
    let mut dx = Array1::zeros(ns);
    for f in 0..ns {
        dx[f] = x_row[f] * x_row[f] * (v[f] - cross / sq_norm);
    }
    Ok(dx)
}

/// A primal Newton direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction {
    pub ds: Array1<f64>,
    pub dx: Array2<f64>,
}

impl Direction {
    pub fn flatten(&self, lay: &PrimalLayout) -> Array1<f64> {
        let mut v = Array1::zeros(lay.dim());
        for f in 0..self.ds.len() {
            v[lay.s(f)] = self.ds[f];
        }
        for l in 0..self.dx.nrows() {
            for f in 0..self.dx.ncols() {
                v[lay.x(l, f)] = self.dx[(l, f)];
            }
        }
        v
    }
}

/// Full primal direction: every source and link kernel applied over an
/// immutable (y, w) snapshot. Each link reads only its own flows and slack
/// plus the duals at its two endpoints; each source reads its rate and the
/// dual at its own node.
pub fn primal_direction(
    net: &Network,
    sessions: &[Session],
    y: &PrimalPoint,
    w: &DualPoint,
    t: f64,
) -> Result<Direction, PrimalError> {
    w.validate(net, sessions)?;
    if y.session_count() != sessions.len() || y.x.nrows() != net.link_count() {
        return Err(PrimalError::Input("point shape does not match instance".into()));
    }
    y.require_interior(net)
        .map_err(|e| PrimalError::Domain(e.to_string()))?;
    let mut ds = Array1::zeros(sessions.len());
    for (f, sess) in sessions.iter().enumerate() {
        ds[f] = source_direction(&sess.utility, y.s[f], t, w.w[(sess.src, f)])?;
    }
    let mut dx = Array2::zeros((net.link_count(), sessions.len()));
    for (l, link) in net.links().iter().enumerate() {
        let x_row = y.x.row(l).to_owned();
        let mut dw = Array1::zeros(sessions.len());
        for f in 0..sessions.len() {
            dw[f] = w.w[(link.tx, f)] - w.w[(link.rx, f)];
        }
        let row = link_direction(&x_row, y.slack[l], &dw)?;
        for f in 0..sessions.len() {
            dx[(l, f)] = row[f];
        }
    }
    Ok(Direction { ds, dx })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::net::UtilitySpec;
    use crate::oracle;
    use ndarray::{arr1, arr2, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn source_block_inverse_matches_hand_values() {
        // U=log, s=1, t=1: S = 2 → 0.5.
        let inv = invert_source_block(&arr1(&[2.0])).unwrap();
        assert_eq!(inv[0], 0.5);
        let inv = invert_source_block(&arr1(&[1.0, 1.0, 1.0])).unwrap();
        assert_eq!(inv.to_vec(), vec![1.0, 1.0, 1.0]);
        assert!(matches!(
            invert_source_block(&arr1(&[-1.0])),
            Err(PrimalError::Domain(_))
        ));
    }

    #[test]
    fn source_block_general_log_form() {
        // U=log, any s, t: S = (t+1)/s², inverse s²/(t+1).
        for (s, t) in [(0.5, 1.0), (2.0, 10.0), (0.1, 100.0)] {
            let u = UtilitySpec::log();
            let s_ff = -t * u.d2(s) + 1.0 / (s * s);
            let inv = invert_source_block(&arr1(&[s_ff])).unwrap();
            assert!((inv[0] - s * s / (t + 1.0)).abs() < 1e-15 * inv[0].abs());
        }
    }

    #[test]
    fn link_block_inverse_scalar_and_two_session_cases() {
        // F=1, x=1, δ=1: block is [2], inverse [0.5].
        let inv = invert_link_block(&arr1(&[1.0]), 1.0).unwrap();
        assert!((inv[(0, 0)] - 0.5).abs() < 1e-15);
        // F=2, x=(1,1), δ=1: block [[2,1],[1,2]], inverse [[2/3,−1/3],[−1/3,2/3]].
        let inv = invert_link_block(&arr1(&[1.0, 1.0]), 1.0).unwrap();
        let expected = arr2(&[
            [2.0 / 3.0, -1.0 / 3.0],
            [-1.0 / 3.0, 2.0 / 3.0],
        ]);
        for i in 0..2 {
            for j in 0..2 {
                assert!((inv[(i, j)] - expected[(i, j)]).abs() < 1e-15);
            }
        }
        assert!(matches!(
            invert_link_block(&arr1(&[1.0]), 0.0),
            Err(PrimalError::Domain(_))
        ));
    }

    #[test]
    fn link_block_inverse_agrees_with_dense_inversion() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let ns = rng.random_range(1..=8usize);
            let x = Array1::from_iter((0..ns).map(|_| rng.random_range(0.05..2.0)));
            let slack: f64 = rng.random_range(0.05..2.0);
            let closed = invert_link_block(&x, slack).unwrap();
            // Assemble the block densely and invert with the oracle.
            let coupling = 1.0 / (slack * slack);
            let mut block = Array2::from_elem((ns, ns), coupling);
            for f in 0..ns {
                block[(f, f)] += 1.0 / (x[f] * x[f]);
            }
            let (dense, residual) = oracle::dense_invert(&block).unwrap();
            assert!(residual < 1e-10);
            for i in 0..ns {
                for j in 0..ns {
                    assert!(
                        (closed[(i, j)] - dense[(i, j)]).abs() < 1e-10,
                        "entry ({i},{j}): closed {} dense {}",
                        closed[(i, j)],
                        dense[(i, j)]
                    );
                }
            }
        }
    }

    #[test]
    fn source_direction_matches_hand_values() {
        let u = UtilitySpec::log();
        // w̃_src = (t+1)/s = 2 makes the source stationary.
        assert_eq!(source_direction(&u, 1.0, 1.0, 2.0).unwrap(), 0.0);
        // w̃_src = 0: Δs = (1+1)/2 = 1.
        assert_eq!(source_direction(&u, 1.0, 1.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn dual_point_requires_zero_at_destinations() {
        let (net, sessions) = fixtures::five_node();
        let w = DualPoint::ones(&net, &sessions);
        w.validate(&net, &sessions).unwrap();
        assert_eq!(w.w[(sessions[0].dst, 0)], 0.0);
        assert_eq!(w.w[(sessions[1].dst, 1)], 0.0);
        let bad = Array2::ones((net.node_count(), sessions.len()));
        assert!(matches!(
            DualPoint::new(&net, &sessions, bad),
            Err(PrimalError::Input(_))
        ));
    }

    #[test]
    fn direction_with_dense_duals_matches_dense_newton_step() {
        let (net, sessions) = fixtures::five_node();
        let y = PrimalPoint::new(
            &net,
            arr1(&[0.3, 0.2]),
            Array2::from_elem((6, 2), 0.11),
        )
        .unwrap();
        let t = 2.0;
        let sol = oracle::dense_kkt_solve(&net, &sessions, &y, t).unwrap();
        let w = DualPoint::new(&net, &sessions, sol.w.clone()).unwrap();
        let dir = primal_direction(&net, &sessions, &y, &w, t).unwrap();
        let lay = PrimalLayout::new(net.link_count(), sessions.len());
        let flat = dir.flatten(&lay);
        let scale = oracle::max_abs(sol.dy.iter().copied()).max(1.0);
        for i in 0..lay.dim() {
            assert!(
                (flat[i] - sol.dy[i]).abs() < 1e-8 * scale,
                "direction entry {i}: closed {} dense {}",
                flat[i],
                sol.dy[i]
            );
        }
        // Null-space property: the step preserves flow balance.
        let m = oracle::dense_constraints(&net, &sessions);
        let r = m.dot(&flat);
        assert!(oracle::max_abs(r.iter().copied()) < 1e-8);
        // And the pair passes the full KKT residual evaluator.
        let rel = oracle::kkt_residual(&net, &sessions, &y, t, &flat, &w.w).unwrap();
        assert!(rel < 1e-8);
    }

    #[test]
    fn boundary_points_are_domain_errors() {
        let (net, sessions) = fixtures::two_node(1.0);
        let y = PrimalPoint::new(&net, arr1(&[1.0]), Array2::from_elem((1, 1), 1.0)).unwrap();
        let w = DualPoint::ones(&net, &sessions);
        assert!(matches!(
            primal_direction(&net, &sessions, &y, &w, 1.0),
            Err(PrimalError::Domain(_))
        ));
    }
}
