//! The dual linear system of each Newton step, its matrix splitting, the
//! centralized fixed-point iterate, the per-(node, session) one-hop update,
//! and spectral-radius diagnostics.
//!
//! Eliminating the primal direction from the KKT conditions leaves one linear
//! system for the flow-balance duals, G·w̃ = rhs with G = M̃H̃⁻¹M̃ᵀ. Because
//! H̃⁻¹ is block diagonal with closed-form blocks, G has network structure:
//! (N−1)F × (N−1)F in session-major blocks, where a row (n, f) couples only
//! to (m, f′) for m a one-hop neighbor of n (or m = n). The system is solved
//! by the splitting G = (Λ + αΩ̄) − (αΩ̄ − Ω):
//!
//! ```text
//! w̃⁺ = (Λ + αΩ̄)⁻¹·[(αΩ̄ − Ω)·w̃ + rhs]
//! ```
//!
//! with Λ = diag(G), Ω = G − Λ, Ω̄ diagonal holding the absolute row sums of
//! Ω, and α > ½. The leading matrix is diagonal, so one iterate is a single
//! exchange of duals between neighbors; [`local_dual_update`] is that same
//! iterate written as a computation each node runs from its own one-hop
//! state, and equality with the matrix form is the module's central contract.
//!
//! Sign convention: duals are stored in pressure form (see the primal
//! module), under which rhs = +M̃H̃⁻¹∇f, assembled per entity as
//! rhs_(n,f) = Σ_{l∈Out(n)} h_l^(f) − Σ_{l∈In(n)} h_l^(f) − 1_{n=src(f)}·v_f
//! with h_l^(f) = (x_l^(f))²·C_l/‖x̂_l‖² − x_l^(f) and v_f = g_{s_f}/S_ff.

use ndarray::linalg::general_mat_vec_mul;
use ndarray::{Array1, Array2};
use std::fmt;

use crate::layout::DualLayout;
use crate::net::{Network, Session, UtilitySpec};
use crate::objective::PrimalPoint;
use crate::oracle;
use crate::primal::invert_link_block;
use crate::tol;

#[derive(Debug, Clone, PartialEq)]
pub enum SplitError {
    Domain(String),
    Input(String),
    /// One-hop snapshot lacks a field the update needs.
    MissingState(String),
    /// Inner iteration cap reached; carries the last residual.
    Convergence { iterations: usize, residual: f64 },
}

impl fmt::Display for SplitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitError::Domain(m) => write!(f, "domain error: {m}"),
            SplitError::Input(m) => write!(f, "invalid input: {m}"),
            SplitError::MissingState(m) => write!(f, "missing one-hop state: {m}"),
            SplitError::Convergence { iterations, residual } => write!(
                f,
                "dual iteration did not converge in {iterations} iterations \
                 (last residual {residual:.3e})"
            ),
        }
    }
}

impl std::error::Error for SplitError {}

/// Splitting parameters. `alpha` must exceed ½ strictly; ½ + ε with small ε
/// converges fastest, and 0.55 is the default.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    pub alpha: f64,
    /// Relative residual tolerance on G·w̃ − rhs.
    pub inner_tol: f64,
    pub max_inner: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        // The cap is a safety valve, not a working budget: the iteration's
        // contraction factor approaches 1 as the barrier parameter grows
        // (the dual system picks up widely mixed scales), so late barrier
        // stages legitimately spend millions of cheap rounds.
        SplitConfig { alpha: 0.55, inner_tol: tol::INNER_TOL_DEFAULT, max_inner: 5_000_000 }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<(), SplitError> {
        if !(self.alpha.is_finite() && self.alpha > 0.5) {
            return Err(SplitError::Input(format!(
                "alpha must exceed 1/2 strictly, got {}",
                self.alpha
            )));
        }
        if !(self.inner_tol.is_finite() && self.inner_tol > 0.0) {
            return Err(SplitError::Input(format!(
                "inner tolerance must be positive, got {}",
                self.inner_tol
            )));
        }
        if self.max_inner == 0 {
            return Err(SplitError::Input("max_inner must be at least 1".into()));
        }
        Ok(())
    }
}

/// The assembled dual system and its splitting, in session-major block form:
/// row `layout.index(f, n)` is the (node n, session f) balance constraint.
#[derive(Debug, Clone)]
pub struct SplitSystem {
    pub layout: DualLayout,
    /// G = M̃H̃⁻¹M̃ᵀ.
    pub g: Array2<f64>,
    /// rhs = M̃H̃⁻¹∇f (pressure-form sign).
    pub rhs: Array1<f64>,
    /// diag(G).
    pub lambda: Array1<f64>,
    /// G − Λ.
    pub omega: Array2<f64>,
    /// Absolute row sums of Ω.
    pub omega_bar: Array1<f64>,
    pub alpha: f64,
}

impl SplitSystem {
    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    /// ‖G·w − rhs‖∞.
    pub fn residual_inf(&self, w: &Array1<f64>) -> f64 {
        let mut buf = Array1::zeros(self.dim());
        self.residual_inf_with(w, &mut buf)
    }

    /// Same as [`residual_inf`](Self::residual_inf) but writes G·w into the
    /// caller's buffer, so tight loops pay no allocation per call.
    pub fn residual_inf_with(&self, w: &Array1<f64>, buf: &mut Array1<f64>) -> f64 {
        general_mat_vec_mul(1.0, &self.g, w, 0.0, buf);
        buf.iter()
            .zip(self.rhs.iter())
            .fold(0.0f64, |m, (gw, r)| m.max((gw - r).abs()))
    }

    /// Stopping threshold for a given relative tolerance.
    pub fn residual_threshold(&self, inner_tol: f64) -> f64 {
        inner_tol * (1.0 + inf_norm(&self.rhs))
    }
}

fn inf_norm(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Source-block diagonal entry S_ff and the source's contribution
/// v_f = g_{s_f}/S_ff to the right-hand side.
fn source_terms(utility: &UtilitySpec, s: f64, t: f64) -> Result<(f64, f64), SplitError> {
    let s_ff = -t * utility.d2(s) + 1.0 / (s * s);
    if !(s_ff.is_finite() && s_ff > 0.0) {
        return Err(SplitError::Domain(format!(
            "source block entry is {s_ff}; utility must be concave and the rate positive"
        )));
    }
    let g_s = -t * utility.d1(s) - 1.0 / s;
    Ok((s_ff, g_s / s_ff))
}

/// Builds the dual system at an interior point, block by block: the source
/// augmentation 1/S_ff at each (src(f), f) diagonal entry, plus each link's
/// closed-form inverse block scattered through its two incidence entries.
pub fn assemble_dual_system(
    net: &Network,
    sessions: &[Session],
    y: &PrimalPoint,
    t: f64,
    config: &SplitConfig,
) -> Result<SplitSystem, SplitError> {
    config.validate()?;
    if y.session_count() != sessions.len() || y.x.nrows() != net.link_count() {
        return Err(SplitError::Input("point shape does not match instance".into()));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(SplitError::Input(format!("barrier weight t must be positive, got {t}")));
    }
    y.require_interior(net)
        .map_err(|e| SplitError::Domain(e.to_string()))?;
    let ns = sessions.len();
    let dl = DualLayout::new(net.node_count(), sessions.iter().map(|s| s.dst).collect());
    let dim = dl.dim();
    let mut g = Array2::zeros((dim, dim));
    let mut rhs = Array1::zeros(dim);
    for (f, sess) in sessions.iter().enumerate() {
        let (s_ff, v) = source_terms(&sess.utility, y.s[f], t)?;
        let i = dl.index(f, sess.src).expect("src is never the destination");
        g[(i, i)] += 1.0 / s_ff;
        rhs[i] -= v;
    }
    for (l, link) in net.links().iter().enumerate() {
        let x_row = y.x.row(l).to_owned();
        let inv = invert_link_block(&x_row, y.slack[l])
            .map_err(|e| SplitError::Domain(e.to_string()))?;
        // Incidence entries of this link's column: +1 at tx, −1 at rx,
        // dropped where the row is a session's destination.
        let ends = [(link.tx, 1.0), (link.rx, -1.0)];
        for f1 in 0..ns {
            for f2 in 0..ns {
                let val = inv[(f1, f2)];
                for &(n1, sign1) in &ends {
                    let Some(i) = dl.index(f1, n1) else { continue };
                    for &(n2, sign2) in &ends {
                        let Some(j) = dl.index(f2, n2) else { continue };
                        g[(i, j)] += sign1 * sign2 * val;
                    }
                }
            }
        }
        let capacity = net.capacity(l);
        for f in 0..ns {
            let x = x_row[f];
            let h = x * x * capacity / y.sq_norm[l] - x;
            if let Some(i) = dl.index(f, link.tx) {
                rhs[i] += h;
            }
            if let Some(i) = dl.index(f, link.rx) {
                rhs[i] -= h;
            }
        }
    }
    let (lambda, omega, omega_bar) = split_matrices(&g, config.alpha);
    Ok(SplitSystem { layout: dl, g, rhs, lambda, omega, omega_bar, alpha: config.alpha })
}

/// Λ = diag(G), Ω = G − Λ, Ω̄ = diag of absolute row sums of Ω. `alpha` is
/// unused in the values but kept in the signature to mirror the splitting's
/// definition site; G must be symmetric.
pub fn split_matrices(g: &Array2<f64>, _alpha: f64) -> (Array1<f64>, Array2<f64>, Array1<f64>) {
    let dim = g.nrows();
    let mut lambda = Array1::zeros(dim);
    let mut omega = g.clone();
    let mut omega_bar = Array1::zeros(dim);
    for i in 0..dim {
        lambda[i] = g[(i, i)];
        omega[(i, i)] = 0.0;
        omega_bar[i] = (0..dim).map(|j| omega[(i, j)].abs()).sum();
    }
    (lambda, omega, omega_bar)
}

/// One centralized splitting iterate: w̃⁺ = (Λ+αΩ̄)⁻¹[(αΩ̄−Ω)w̃ + rhs].
pub fn splitting_iterate(w: &Array1<f64>, system: &SplitSystem) -> Result<Array1<f64>, SplitError> {
    let mut ow = Array1::zeros(system.dim());
    let mut next = Array1::zeros(system.dim());
    iterate_into(w, system, &mut ow, &mut next)?;
    Ok(next)
}

/// The iterate with caller-owned scratch (`ow` for Ω·w̃) and output buffers;
/// [`splitting_iterate`] and the solve loop both delegate here so every
/// caller runs the identical arithmetic.
fn iterate_into(
    w: &Array1<f64>,
    system: &SplitSystem,
    ow: &mut Array1<f64>,
    next: &mut Array1<f64>,
) -> Result<(), SplitError> {
    let dim = system.dim();
    if w.len() != dim {
        return Err(SplitError::Input(format!(
            "dual vector length {} does not match system dimension {dim}",
            w.len()
        )));
    }
    general_mat_vec_mul(1.0, &system.omega, w, 0.0, ow);
    for i in 0..dim {
        let denom = system.lambda[i] + system.alpha * system.omega_bar[i];
        if !(denom.is_finite() && denom > 0.0) {
            let rows = system.layout.rows_per_session();
            let (f, n) = (i / rows, i % rows);
            return Err(SplitError::Domain(format!(
                "nonpositive splitting diagonal {denom:.3e} at row {i} \
                 (session-major block {f}, reduced row {n}): isolated node/session pairing"
            )));
        }
        next[i] =
            (system.alpha * system.omega_bar[i] * w[i] - ow[i] + system.rhs[i]) / denom;
    }
    Ok(())
}

/// One inner-iteration trace row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerRecord {
    pub iteration: usize,
    pub residual: f64,
    pub alpha: f64,
}

/// Outcome of a dual solve.
#[derive(Debug, Clone)]
pub struct DualSolve {
    pub w: Array1<f64>,
    pub iterations: usize,
    pub trace: Vec<InnerRecord>,
}

/// Runs the splitting iteration from `w0` until the residual satisfies
/// ‖G·w̃ − rhs‖∞ ≤ inner_tol·(1+‖rhs‖∞). A start that already satisfies the
/// bound returns untouched with zero iterations.
pub fn solve_duals(
    system: &SplitSystem,
    config: &SplitConfig,
    w0: &Array1<f64>,
) -> Result<DualSolve, SplitError> {
    solve_duals_impl(system, config, w0, true)
}

/// [`solve_duals`] without the per-round trace, for callers that only need
/// the solution and the count: late barrier stages run millions of rounds
/// and recording each one would dominate memory for nothing.
pub(crate) fn solve_duals_quiet(
    system: &SplitSystem,
    config: &SplitConfig,
    w0: &Array1<f64>,
) -> Result<DualSolve, SplitError> {
    solve_duals_impl(system, config, w0, false)
}

fn solve_duals_impl(
    system: &SplitSystem,
    config: &SplitConfig,
    w0: &Array1<f64>,
    record_trace: bool,
) -> Result<DualSolve, SplitError> {
    config.validate()?;
    let threshold = system.residual_threshold(config.inner_tol);
    let mut w = w0.clone();
    let mut next = Array1::zeros(system.dim());
    let mut scratch = Array1::zeros(system.dim());
    let mut residual = system.residual_inf_with(&w, &mut scratch);
    let mut trace = Vec::new();
    if residual <= threshold {
        return Ok(DualSolve { w, iterations: 0, trace });
    }
    for k in 1..=config.max_inner {
        iterate_into(&w, system, &mut scratch, &mut next)?;
        std::mem::swap(&mut w, &mut next);
        residual = system.residual_inf_with(&w, &mut scratch);
        if record_trace {
            trace.push(InnerRecord { iteration: k, residual, alpha: system.alpha });
        }
        if residual <= threshold {
            return Ok(DualSolve { w, iterations: k, trace });
        }
    }
    Err(SplitError::Convergence { iterations: config.max_inner, residual })
}

// ---------------------------------------------------------------------------
// One-hop element-wise form
// ---------------------------------------------------------------------------

/// What a node sees of one incident link when updating its duals: the link's
/// own state plus the previous-round duals at the link's other endpoint.
#[derive(Debug, Clone)]
pub struct LinkLocal {
    pub link: usize,
    /// The link's endpoint that is not the updating node.
    pub other: usize,
    /// True when the updating node transmits on this link.
    pub outgoing: bool,
    pub capacity: f64,
    /// Flows of all sessions on this link.
    pub x: Array1<f64>,
    pub slack: f64,
    /// ‖x̂_l‖² = Σ_f x² + δ².
    pub sq_norm: f64,
    /// Previous-round duals w̃_other^(·), all sessions.
    pub w_other: Array1<f64>,
}

/// Everything node n may read when updating w̃_n^(f): its own previous-round
/// duals, the state of its incident links and their far endpoints' duals,
/// its own rate when it is the session's source, and static session data
/// (destinations, the session's utility). `rhs_extra` is an optional
/// correction added to this row's right-hand side; the solver uses it to
/// cancel accumulated balance drift.
#[derive(Debug, Clone)]
pub struct OneHopState {
    pub node: usize,
    pub session: usize,
    /// w̃_n^(·) from the previous round, all sessions.
    pub w_self: Array1<f64>,
    pub links: Vec<LinkLocal>,
    /// s_f, present exactly when this node is session f's source.
    pub src_rate: Option<f64>,
    pub utility: UtilitySpec,
    /// Destination node of every session.
    pub dst: Vec<usize>,
    pub rhs_extra: f64,
}

/// The splitting iterate for one (node, session) row, computed entirely from
/// one-hop state. Writing d(l) for +1 on outgoing and −1 on incoming links,
/// q_l = (x_l^(f))²(1 − (x_l^(f))²/‖x̂_l‖²) and c_l^(ff′) = (x_l^(f)x_l^(f′))²/‖x̂_l‖²,
/// the row's pieces are
///
/// ```text
/// Λ  = Σ_{l∈Φ(n)} q_l + 1_src·1/S_ff
/// Ω̄  = Σ_{l: other(l)≠dst(f)} q_l
///      + Σ_{f′≠f} Σ_{l∈Φ(n)} (1_{n≠dst(f′)} + 1_{other(l)≠dst(f′)})·c_l^(ff′)
/// num = αΩ̄·w̃_n^(f) + Σ_l q_l·w̃_other^(f)
///      + Σ_{f′≠f} Σ_l c_l^(ff′)·(w̃_n^(f′) − w̃_other^(f′))
///      + Σ_l d(l)·h_l^(f) − 1_src·v_f + rhs_extra
/// ```
///
/// and the update is num/(Λ + αΩ̄). The indicator factors in Ω̄ account for
/// the deleted destination columns; the dual terms need no indicators
/// because destination duals are stored as exact zeros.
pub fn local_dual_update(state: &OneHopState, t: f64, alpha: f64) -> Result<f64, SplitError> {
    let ns = state.dst.len();
    let f = state.session;
    if f >= ns {
        return Err(SplitError::Input(format!("session {f} out of range for {ns} sessions")));
    }
    if state.node == state.dst[f] {
        return Err(SplitError::Input(format!(
            "node {} is session {f}'s destination; it has no dual to update",
            state.node
        )));
    }
    if state.w_self.len() != ns {
        return Err(SplitError::MissingState(format!(
            "own duals cover {} sessions, need {ns}",
            state.w_self.len()
        )));
    }
    if !(alpha.is_finite() && alpha > 0.5) {
        return Err(SplitError::Input(format!("alpha must exceed 1/2 strictly, got {alpha}")));
    }
    let (mut lambda, mut rhs) = (0.0, state.rhs_extra);
    if let Some(s) = state.src_rate {
        if !(s.is_finite() && s > 0.0) {
            return Err(SplitError::Domain(format!("source rate must be positive, got {s}")));
        }
        let (s_ff, v) = source_terms(&state.utility, s, t)?;
        lambda += 1.0 / s_ff;
        rhs -= v;
    }
    let mut omega_bar = 0.0;
    let mut neighbor = 0.0;
    for link in &state.links {
        if link.x.len() != ns || link.w_other.len() != ns {
            return Err(SplitError::MissingState(format!(
                "link {} snapshot covers {} sessions, need {ns}",
                link.link,
                link.x.len()
            )));
        }
        if !(link.slack > 0.0 && link.sq_norm > 0.0) {
            return Err(SplitError::Domain(format!(
                "link {} snapshot is not interior (slack {:.3e})",
                link.link, link.slack
            )));
        }
        let x = link.x[f];
        if x <= 0.0 {
            return Err(SplitError::Domain(format!(
                "link {} flow for session {f} must be positive, got {x}",
                link.link
            )));
        }
        let q = x * x * (1.0 - x * x / link.sq_norm);
        lambda += q;
        if link.other != state.dst[f] {
            omega_bar += q;
        }
        neighbor += q * link.w_other[f];
        let h = x * x * link.capacity / link.sq_norm - x;
        rhs += if link.outgoing { h } else { -h };
        for f2 in 0..ns {
            if f2 == f {
                continue;
            }
            let x2 = link.x[f2];
            let c = (x * x2) * (x * x2) / link.sq_norm;
            if state.node != state.dst[f2] {
                omega_bar += c;
            }
            if link.other != state.dst[f2] {
                omega_bar += c;
            }
            neighbor += c * (state.w_self[f2] - link.w_other[f2]);
        }
    }
    let denom = lambda + alpha * omega_bar;
    if !(denom.is_finite() && denom > 0.0) {
        return Err(SplitError::Domain(format!(
            "node {} has no incident links and is not session {f}'s source \
             (splitting diagonal {denom:.3e})",
            state.node
        )));
    }
    Ok((alpha * omega_bar * state.w_self[f] + neighbor + rhs) / denom)
}

// ---------------------------------------------------------------------------
// Spectral radius
// ---------------------------------------------------------------------------

/// Power-iteration estimate of ρ((Λ+αΩ̄)⁻¹(αΩ̄−Ω)), the splitting's
/// convergence rate. The iteration matrix is similar to the symmetric
/// D^(−1/2)(αΩ̄−Ω)D^(−1/2) with D = Λ+αΩ̄, so the estimate runs on that
/// form (squared per step, which handles ±λ pairs of equal magnitude) and
/// falls back to the dense symmetric eigensolver if it stagnates too slowly.
pub fn estimate_spectral_radius(system: &SplitSystem) -> Result<f64, SplitError> {
    let dim = system.dim();
    let mut d_inv_sqrt = Array1::zeros(dim);
    for i in 0..dim {
        let d = system.lambda[i] + system.alpha * system.omega_bar[i];
        if !(d.is_finite() && d > 0.0) {
            return Err(SplitError::Domain(format!(
                "nonpositive splitting diagonal {d:.3e} at row {i}"
            )));
        }
        d_inv_sqrt[i] = 1.0 / d.sqrt();
    }
    let mut t_hat = Array2::zeros((dim, dim));
    for i in 0..dim {
        for j in 0..dim {
            let b = system.alpha * system.omega_bar[i] * f64::from(u8::from(i == j))
                - system.omega[(i, j)];
            t_hat[(i, j)] = d_inv_sqrt[i] * b * d_inv_sqrt[j];
        }
    }
    let mut v = Array1::from_iter((0..dim).map(|i| 1.0 + i as f64));
    let norm = v.dot(&v).sqrt();
    v /= norm;
    let mut prev = f64::NAN;
    let mut stable = 0usize;
    for _ in 0..20_000 {
        let tv = t_hat.dot(&v);
        // With ‖v‖ = 1, ‖T̂v‖² is the Rayleigh quotient of T̂², so the
        // estimate's error is quadratic in the eigenvector error.
        let rho = tv.dot(&tv).sqrt();
        if rho == 0.0 {
            return Ok(0.0);
        }
        if (rho - prev).abs() <= 1e-13 * rho.max(1.0) {
            stable += 1;
            if stable >= 3 {
                return Ok(rho);
            }
        } else {
            stable = 0;
        }
        prev = rho;
        let t2v = t_hat.dot(&tv);
        let norm = t2v.dot(&t2v).sqrt();
        if norm == 0.0 {
            // T̂²v vanished; the radius is the last Rayleigh value.
            return Ok(rho);
        }
        v = t2v / norm;
    }
    let eig = oracle::sym_eigen(&t_hat).map_err(|e| SplitError::Domain(e.to_string()))?;
    Ok(eig
        .iter()
        .fold(0.0f64, |m, &lam| m.max(lam.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::primal::DualPoint;
    use ndarray::{arr1, arr2};

    fn five_node_system(alpha: f64) -> (crate::net::Network, Vec<Session>, PrimalPoint, f64, SplitSystem)
    {
        let (net, sessions) = fixtures::five_node();
        let y = PrimalPoint::new(
            &net,
            arr1(&[0.3, 0.2]),
            Array2::from_elem((6, 2), 0.11),
        )
        .unwrap();
        let t = 2.0;
        let config = SplitConfig { alpha, ..SplitConfig::default() };
        let system = assemble_dual_system(&net, &sessions, &y, t, &config).unwrap();
        (net, sessions, y, t, system)
    }

    #[test]
    fn single_link_system_has_the_hand_computed_entries() {
        // Capacity 2, s = x = 1, t = 1: the 1×1 system is G = q + 1/S with
        // q = x²(1−x²/‖x̂‖²) = 1/2 and 1/S = 1/2, rhs = h + s = 0 + 1.
        let (net, sessions) = fixtures::two_node(2.0);
        let y = PrimalPoint::new(&net, arr1(&[1.0]), Array2::from_elem((1, 1), 1.0)).unwrap();
        let system =
            assemble_dual_system(&net, &sessions, &y, 1.0, &SplitConfig::default()).unwrap();
        assert_eq!(system.dim(), 1);
        assert!((system.g[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((system.rhs[0] - 1.0).abs() < 1e-15);
        // The solution w̃ = 1 makes the source stationary: Δs = 0 per the
        // closed form with w̃_src = (t·s·U′+1)/s = 2... here (1+1−1)/2 = 1/2.
        let solve = solve_duals(&system, &SplitConfig::default(), &arr1(&[0.0])).unwrap();
        assert!((solve.w[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn structured_assembly_matches_dense_product() {
        let (net, sessions, y, t, system) = five_node_system(0.55);
        let h = oracle::dense_hessian(&net, &sessions, &y, t).unwrap();
        let (h_inv, res) = oracle::dense_invert(&h).unwrap();
        assert!(res < 1e-10);
        let m = oracle::dense_constraints(&net, &sessions);
        let g_dense = m.dot(&h_inv).dot(&m.t());
        assert_eq!(system.dim(), 8);
        for i in 0..system.dim() {
            for j in 0..system.dim() {
                assert!(
                    (system.g[(i, j)] - g_dense[(i, j)]).abs() < 1e-10,
                    "G entry ({i},{j}): structured {} dense {}",
                    system.g[(i, j)],
                    g_dense[(i, j)]
                );
            }
        }
        let g_vec = oracle::dense_gradient(&net, &sessions, &y, t).unwrap();
        let rhs_dense = m.dot(&h_inv.dot(&g_vec));
        for i in 0..system.dim() {
            assert!(
                (system.rhs[i] - rhs_dense[i]).abs() < 1e-10,
                "rhs entry {i}: structured {} dense {}",
                system.rhs[i],
                rhs_dense[i]
            );
        }
        // Symmetry by construction.
        for i in 0..system.dim() {
            for j in 0..system.dim() {
                assert!((system.g[(i, j)] - system.g[(j, i)]).abs() < 1e-12);
            }
        }
        // Positive definite at interior points.
        oracle::cholesky(&system.g).unwrap();
    }

    #[test]
    fn split_matrices_recover_the_textbook_decomposition() {
        let g = arr2(&[[2.0, 1.0], [1.0, 2.0]]);
        let (lambda, omega, omega_bar) = split_matrices(&g, 0.55);
        assert_eq!(lambda.to_vec(), vec![2.0, 2.0]);
        assert_eq!(omega, arr2(&[[0.0, 1.0], [1.0, 0.0]]));
        assert_eq!(omega_bar.to_vec(), vec![1.0, 1.0]);
        // Λ + Ω = G exactly.
        for i in 0..2 {
            for j in 0..2 {
                let back = omega[(i, j)] + if i == j { lambda[i] } else { 0.0 };
                assert_eq!(back, g[(i, j)]);
            }
        }
    }

    #[test]
    fn exact_solution_is_a_fixed_point() {
        let (_, _, _, _, system) = five_node_system(0.55);
        let w_star = oracle::lu_solve(&system.g, &system.rhs).unwrap();
        let next = splitting_iterate(&w_star, &system).unwrap();
        for i in 0..system.dim() {
            assert!((next[i] - w_star[i]).abs() < 1e-12);
        }
        let solve = solve_duals(&system, &SplitConfig::default(), &w_star).unwrap();
        assert_eq!(solve.iterations, 0);
    }

    #[test]
    fn solve_reaches_the_dense_solution() {
        let (_, _, _, _, system) = five_node_system(0.55);
        let config = SplitConfig { inner_tol: 1e-10, ..SplitConfig::default() };
        let w0 = Array1::ones(system.dim());
        let solve = solve_duals(&system, &config, &w0).unwrap();
        assert!(system.residual_inf(&solve.w) <= system.residual_threshold(1e-10));
        let w_star = oracle::lu_solve(&system.g, &system.rhs).unwrap();
        // Forward error is the residual amplified by at most ‖G⁻¹‖∞.
        let (g_inv, _) = oracle::dense_invert(&system.g).unwrap();
        let inv_norm = (0..system.dim())
            .map(|i| g_inv.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let bound = inv_norm * system.residual_threshold(1e-10);
        for i in 0..system.dim() {
            assert!(
                (solve.w[i] - w_star[i]).abs() <= bound,
                "coordinate {i} off by {:.3e}, bound {:.3e} (‖G⁻¹‖∞ = {:.3e})",
                (solve.w[i] - w_star[i]).abs(),
                bound,
                inv_norm
            );
        }
        assert_eq!(solve.trace.len(), solve.iterations);
        // Residuals never increase in the tail of the trace.
        let n = solve.trace.len();
        assert!(solve.trace[n - 1].residual <= solve.trace[0].residual);
    }

    #[test]
    fn small_alpha_needs_no_more_iterations_than_large() {
        for seed_alpha in [(0.55, 1.0), (0.6, 0.9)] {
            let (_, _, _, _, fast) = five_node_system(seed_alpha.0);
            let (_, _, _, _, slow) = five_node_system(seed_alpha.1);
            let config = SplitConfig { inner_tol: 1e-8, ..SplitConfig::default() };
            let w0 = Array1::ones(fast.dim());
            let a = solve_duals(&fast, &config, &w0).unwrap();
            let b = solve_duals(&slow, &config, &w0).unwrap();
            assert!(
                a.iterations <= b.iterations,
                "alpha {} took {} iterations, alpha {} took {}",
                seed_alpha.0,
                a.iterations,
                seed_alpha.1,
                b.iterations
            );
        }
    }

    #[test]
    fn config_rejects_alpha_at_or_below_one_half() {
        for alpha in [0.5, 0.3, f64::NAN] {
            let config = SplitConfig { alpha, ..SplitConfig::default() };
            assert!(matches!(config.validate(), Err(SplitError::Input(_))));
        }
        SplitConfig::default().validate().unwrap();
    }

    fn gather_states(
        net: &crate::net::Network,
        sessions: &[Session],
        y: &PrimalPoint,
        w: &DualPoint,
    ) -> Vec<(usize, usize, OneHopState)> {
        let dst: Vec<usize> = sessions.iter().map(|s| s.dst).collect();
        let mut states = Vec::new();
        for (f, sess) in sessions.iter().enumerate() {
            for n in 0..net.node_count() {
                if n == sess.dst {
                    continue;
                }
                let links = net
                    .incident(n)
                    .iter()
                    .map(|&l| {
                        let other = net.other_endpoint(l, n);
                        LinkLocal {
                            link: l,
                            other,
                            outgoing: net.link(l).tx == n,
                            capacity: net.capacity(l),
                            x: y.x.row(l).to_owned(),
                            slack: y.slack[l],
                            sq_norm: y.sq_norm[l],
                            w_other: w.w.row(other).to_owned(),
                        }
                    })
                    .collect();
                let state = OneHopState {
                    node: n,
                    session: f,
                    w_self: w.w.row(n).to_owned(),
                    links,
                    src_rate: (sess.src == n).then(|| y.s[f]),
                    utility: sess.utility,
                    dst: dst.clone(),
                    rhs_extra: 0.0,
                };
                states.push((n, f, state));
            }
        }
        states
    }

    #[test]
    fn local_updates_equal_the_centralized_iterate() {
        let (net, sessions, y, t, system) = five_node_system(0.55);
        let w = DualPoint::ones(&net, &sessions);
        let w_flat = system.layout.flatten(&w.w);
        let central = splitting_iterate(&w_flat, &system).unwrap();
        for (n, f, state) in gather_states(&net, &sessions, &y, &w) {
            let local = local_dual_update(&state, t, 0.55).unwrap();
            let i = system.layout.index(f, n).unwrap();
            assert!(
                (local - central[i]).abs() < 1e-10,
                "row (node {n}, session {f}): local {local} central {}",
                central[i]
            );
        }
    }

    #[test]
    fn local_update_rejects_destinations_and_degenerate_rows() {
        let (net, sessions) = fixtures::five_node();
        let y = PrimalPoint::new(&net, arr1(&[0.3, 0.2]), Array2::from_elem((6, 2), 0.11))
            .unwrap();
        let w = DualPoint::ones(&net, &sessions);
        let states = gather_states(&net, &sessions, &y, &w);
        let (_, _, sample) = &states[0];
        // Destination row.
        let mut at_dst = sample.clone();
        at_dst.node = sessions[0].dst;
        at_dst.session = 0;
        assert!(matches!(local_dual_update(&at_dst, 1.0, 0.55), Err(SplitError::Input(_))));
        // No links and not the source: the row's diagonal vanishes.
        let mut isolated = sample.clone();
        isolated.links.clear();
        isolated.src_rate = None;
        assert!(matches!(local_dual_update(&isolated, 1.0, 0.55), Err(SplitError::Domain(_))));
        // Truncated neighbor state.
        let mut short = sample.clone();
        short.links[0].w_other = arr1(&[1.0]);
        assert!(matches!(
            local_dual_update(&short, 1.0, 0.55),
            Err(SplitError::MissingState(_))
        ));
    }

    #[test]
    fn spectral_radius_is_zero_for_diagonal_systems() {
        let (net, sessions) = fixtures::two_node(2.0);
        let y = PrimalPoint::new(&net, arr1(&[1.0]), Array2::from_elem((1, 1), 1.0)).unwrap();
        let system =
            assemble_dual_system(&net, &sessions, &y, 1.0, &SplitConfig::default()).unwrap();
        assert_eq!(estimate_spectral_radius(&system).unwrap(), 0.0);
    }

    #[test]
    fn spectral_radius_matches_dense_eigenvalues_and_is_contractive() {
        let mut last = -1.0;
        for alpha in [0.55, 0.75, 1.0] {
            let (_, _, _, _, system) = five_node_system(alpha);
            let rho = estimate_spectral_radius(&system).unwrap();
            assert!(rho < 1.0, "alpha {alpha}: rho {rho}");
            // Dense check on the symmetrized iteration matrix.
            let dim = system.dim();
            let mut t_hat = Array2::zeros((dim, dim));
            for i in 0..dim {
                for j in 0..dim {
                    let b = system.alpha * system.omega_bar[i] * f64::from(u8::from(i == j))
                        - system.omega[(i, j)];
                    let di = (system.lambda[i] + system.alpha * system.omega_bar[i]).sqrt();
                    let dj = (system.lambda[j] + system.alpha * system.omega_bar[j]).sqrt();
                    t_hat[(i, j)] = b / (di * dj);
                }
            }
            let eig = oracle::sym_eigen(&t_hat).unwrap();
            let dense_rho = eig.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
            assert!(
                (rho - dense_rho).abs() < 1e-6,
                "alpha {alpha}: power {rho} dense {dense_rho}"
            );
            // Monotone in alpha.
            assert!(rho + 1e-9 >= last, "alpha {alpha}: rho {rho} after {last}");
            last = rho;
        }
    }

    #[test]
    fn splitting_diagonal_is_strictly_positive() {
        let (_, _, _, _, system) = five_node_system(0.55);
        for i in 0..system.dim() {
            assert!(system.lambda[i] + system.alpha * system.omega_bar[i] > 0.0);
            assert!(system.lambda[i] > 0.0);
        }
    }
}
