//! Centralized dense ground truth: hand-rolled factorizations, finite
//! differences, and straight-line assemblies of the objective, gradient,
//! Hessian, constraint matrix, and KKT system.
//!
//! Everything here is written independently of the structured fast paths —
//! no closed-form inverse, no per-entity formula, no incremental slack — so
//! that agreement between the two routes is evidence rather than tautology.
//! The only shared pieces are problem data ([`Network`], [`UtilitySpec`])
//! and the flat-vector index arithmetic, which is deliberately centralized.
//!
//! All routines target desk scale (N ≤ 30, L ≤ 120, F ≤ 6); cost is
//! irrelevant there, so solves use partial-pivoting LU with one step of
//! iterative refinement to keep residuals near roundoff.

use ndarray::{Array1, Array2};
use std::fmt;

use crate::layout::{DualLayout, PrimalLayout};
use crate::net::{Network, Session};
use crate::objective::PrimalPoint;
use crate::tol;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    Singular(String),
    NotSpd(String),
    NotSymmetric(String),
    /// Point too close to the barrier boundary for the requested operation.
    Boundary(String),
    Input(String),
    Convergence(String),
}

impl fmt::Display for OracleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleError::Singular(m) => write!(f, "singular matrix: {m}"),
            OracleError::NotSpd(m) => write!(f, "matrix not positive definite: {m}"),
            OracleError::NotSymmetric(m) => write!(f, "matrix not symmetric: {m}"),
            OracleError::Boundary(m) => write!(f, "too close to the domain boundary: {m}"),
            OracleError::Input(m) => write!(f, "invalid input: {m}"),
            OracleError::Convergence(m) => write!(f, "iteration failed to converge: {m}"),
        }
    }
}

impl std::error::Error for OracleError {}

/// Desk-scale bounds for the dense routines.
pub const MAX_NODES: usize = 30;
pub const MAX_LINKS: usize = 120;
pub const MAX_SESSIONS: usize = 6;

pub fn check_desk_scale(net: &Network, sessions: &[Session]) -> Result<(), OracleError> {
    if net.node_count() > MAX_NODES
        || net.link_count() > MAX_LINKS
        || sessions.len() > MAX_SESSIONS
    {
        return Err(OracleError::Input(format!(
            "instance (N={}, L={}, F={}) exceeds the dense oracle's desk scale \
             (N ≤ {MAX_NODES}, L ≤ {MAX_LINKS}, F ≤ {MAX_SESSIONS})",
            net.node_count(),
            net.link_count(),
            sessions.len()
        )));
    }
    Ok(())
}

pub fn max_abs(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

// ---------------------------------------------------------------------------
// Factorizations
// ---------------------------------------------------------------------------

/// Partial-pivoting LU factors, LAPACK-style: `lu` packs the unit-lower and
/// upper factors, `pivots[k]` is the row swapped with row k at step k.
pub struct LuFactors {
    lu: Array2<f64>,
    pivots: Vec<usize>,
}

pub fn lu_factor(a: &Array2<f64>) -> Result<LuFactors, OracleError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(OracleError::Input(format!("matrix is {}×{}, not square", n, a.ncols())));
    }
    let mut lu = a.clone();
    let mut pivots = vec![0usize; n];
    let scale = max_abs(a.iter().copied()).max(1.0);
    let tiny = f64::EPSILON * scale * n as f64;
    for k in 0..n {
        let mut p = k;
        let mut best = lu[(k, k)].abs();
        for i in (k + 1)..n {
            let v = lu[(i, k)].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best <= tiny {
            return Err(OracleError::Singular(format!(
                "no usable pivot in column {k} (best {best:.3e} vs threshold {tiny:.3e})"
            )));
        }
        pivots[k] = p;
        if p != k {
            for j in 0..n {
                lu.swap((k, j), (p, j));
            }
        }
        let piv = lu[(k, k)];
        for i in (k + 1)..n {
            let m = lu[(i, k)] / piv;
            lu[(i, k)] = m;
            for j in (k + 1)..n {
                lu[(i, j)] -= m * lu[(k, j)];
            }
        }
    }
    Ok(LuFactors { lu, pivots })
}

impl LuFactors {
    pub fn solve(&self, b: &Array1<f64>) -> Array1<f64> {
        let n = self.lu.nrows();
        debug_assert_eq!(b.len(), n);
        let mut x = b.clone();
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                x.swap(k, p);
            }
        }
        for i in 0..n {
            let mut sum = x[i];
            for j in 0..i {
                sum -= self.lu[(i, j)] * x[j];
            }
            x[i] = sum;
        }
        for i in (0..n).rev() {
            let mut sum = x[i];
            for j in (i + 1)..n {
                sum -= self.lu[(i, j)] * x[j];
            }
            x[i] = sum / self.lu[(i, i)];
        }
        x
    }
}

/// Direct solve with one step of iterative refinement.
pub fn lu_solve(a: &Array2<f64>, b: &Array1<f64>) -> Result<Array1<f64>, OracleError> {
    if b.len() != a.nrows() {
        return Err(OracleError::Input(format!(
            "rhs length {} does not match matrix order {}",
            b.len(),
            a.nrows()
        )));
    }
    let factors = lu_factor(a)?;
    let mut x = factors.solve(b);
    let r = b - &a.dot(&x);
    x += &factors.solve(&r);
    Ok(x)
}

/// Dense inverse via column solves; also reports ‖A·A⁻¹ − I‖∞.
pub fn dense_invert(a: &Array2<f64>) -> Result<(Array2<f64>, f64), OracleError> {
    let n = a.nrows();
    let factors = lu_factor(a)?;
    let mut inv = Array2::zeros((n, n));
    for j in 0..n {
        let mut e = Array1::zeros(n);
        e[j] = 1.0;
        let mut col = factors.solve(&e);
        let r = &e - &a.dot(&col);
        col += &factors.solve(&r);
        for i in 0..n {
            inv[(i, j)] = col[i];
        }
    }
    let product = a.dot(&inv);
    let mut residual = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let want = if i == j { 1.0 } else { 0.0 };
            residual = residual.max((product[(i, j)] - want).abs());
        }
    }
    Ok((inv, residual))
}

fn require_symmetric(a: &Array2<f64>, context: &str) -> Result<(), OracleError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(OracleError::Input(format!("{context}: matrix is not square")));
    }
    let scale = 1.0 + max_abs(a.iter().copied());
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-9 * scale {
                return Err(OracleError::NotSymmetric(format!(
                    "{context}: entries ({i},{j}) and ({j},{i}) differ by {:.3e}",
                    (a[(i, j)] - a[(j, i)]).abs()
                )));
            }
        }
    }
    Ok(())
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>, OracleError> {
    require_symmetric(a, "cholesky")?;
    let n = a.nrows();
    let mut l = Array2::zeros((n, n));
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 0.0 {
            return Err(OracleError::NotSpd(format!("pivot {d:.3e} at row {j}")));
        }
        l[(j, j)] = d.sqrt();
        for i in (j + 1)..n {
            let mut v = a[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / l[(j, j)];
        }
    }
    Ok(l)
}

/// Eigenvalues of a symmetric matrix via cyclic Jacobi rotations, ascending.
pub fn sym_eigen(a: &Array2<f64>) -> Result<Array1<f64>, OracleError> {
    require_symmetric(a, "sym_eigen")?;
    let n = a.nrows();
    let mut m = a.clone();
    if n == 1 {
        return Ok(Array1::from_vec(vec![m[(0, 0)]]));
    }
    let frob: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let stop = 1e-14 * (1.0 + frob);
    for _sweep in 0..200 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += 2.0 * m[(p, q)] * m[(p, q)];
            }
        }
        if off.sqrt() <= stop {
            let mut eig: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
            eig.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
            return Ok(Array1::from_vec(eig));
        }
        for p in 0..(n - 1) {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    -1.0 / (-theta + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                m[(p, p)] = app - t * apq;
                m[(q, q)] = aqq + t * apq;
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = m[(k, p)];
                    let akq = m[(k, q)];
                    m[(k, p)] = akp - s * (akq + tau * akp);
                    m[(p, k)] = m[(k, p)];
                    m[(k, q)] = akq + s * (akp - tau * akq);
                    m[(q, k)] = m[(k, q)];
                }
            }
        }
    }
    Err(OracleError::Convergence("Jacobi eigenvalue sweeps exhausted".into()))
}

// ---------------------------------------------------------------------------
// Straight-line problem assemblies
// ---------------------------------------------------------------------------

fn check_problem_shapes(
    net: &Network,
    sessions: &[Session],
    y: &PrimalPoint,
) -> Result<(), OracleError> {
    if y.session_count() != sessions.len() || y.x.nrows() != net.link_count() {
        return Err(OracleError::Input(format!(
            "point shape ({} sessions, {} links) does not match instance ({}, {})",
            y.session_count(),
            y.x.nrows(),
            sessions.len(),
            net.link_count()
        )));
    }
    Ok(())
}

fn dual_layout(net: &Network, sessions: &[Session]) -> DualLayout {
    DualLayout::new(net.node_count(), sessions.iter().map(|s| s.dst).collect())
}

/// Barrier objective recomputed from scratch (slacks from capacities, not
/// from the point's cached values).
pub fn dense_objective(
    net: &Network,
    sessions: &[Session],
    y: &PrimalPoint,
    t: f64,
) -> Result<f64, OracleError> {
    check_problem_shapes(net, sessions, y)?;
    if !(t.is_finite() && t > 0.0) {
        return Err(OracleError::Input(format!("barrier weight t must be positive, got {t}")));
    }
    let mut total = 0.0;
    for (f, sess) in sessions.iter().enumerate() {
        let s = y.s[f];
        if s <= 0.0 {
            return Err(OracleError::Boundary(format!("rate {f} is {s:.3e}")));
        }
        total -= t * sess.utility.value(s);
        total -= s.ln();
    }
    for l in 0..net.link_count() {
        let mut used = 0.0;
        for f in 0..sessions.len() {
            let x = y.x[(l, f)];
            if x <= 0.0 {
                return Err(OracleError::Boundary(format!("flow ({l},{f}) is {x:.3e}")));
            }
            used += x;
            total -= x.ln();
        }
        let slack = net.capacity(l) - used;
        if slack <= 0.0 {
            return Err(OracleError::Boundary(format!("slack of link {l} is {slack:.3e}")));
        }
        total -= slack.ln();
    }
    Ok(total)
}

/// Gradient assembled entry-by-entry from the partial-derivative definitions.
pub fn dense_gradient(
    net: &Network,
    sessions: &[Session],
    y: &PrimalPoint,
    t: f64,
) -> Result<Array1<f64>, OracleError> {
    check_problem_shapes(net, sessions, y)?;
    let lay = PrimalLayout::new(net.link_count(), sessions.len());
    let mut g = Array1::zeros(lay.dim());
    for (f, sess) in sessions.iter().enumerate() {
        let s = y.s[f];
        if s <= 0.0 {
            return Err(OracleError::Boundary(format!("rate {f} is {s:.3e}")));
        }
        g[lay.s(f)] = -t * sess.utility.d1(s) - 1.0 / s;
    }
    for l in 0..net.link_count() {
        let mut used = 0.0;
        for f in 0..sessions.len() {
            used += y.x[(l, f)];
        }
        let slack = net.capacity(l) - used;
        if slack <= 0.0 {
            return Err(OracleError::Boundary(format!("slack of link {l} is {slack:.3e}")));
        }
        for f in 0..sessions.len() {
            let x = y.x[(l, f)];
            if x <= 0.0 {
                return Err(OracleError::Boundary(format!("flow ({l},{f}) is {x:.3e}")));
            }
            g[lay.x(l, f)] = 1.0 / slack - 1.0 / x;
        }
    }
    Ok(g)
}

/// Full dense Hessian assembled entry-by-entry.
pub fn dense_hessian(
    net: &Network,
    sessions: &[Session],
    y: &PrimalPoint,
    t: f64,
) -> Result<Array2<f64>, OracleError> {
    check_problem_shapes(net, sessions, y)?;
    let lay = PrimalLayout::new(net.link_count(), sessions.len());
    let mut h = Array2::zeros((lay.dim(), lay.dim()));
    for (f, sess) in sessions.iter().enumerate() {
        let s = y.s[f];
        if s <= 0.0 {
            return Err(OracleError::Boundary(format!("rate {f} is {s:.3e}")));
        }
        h[(lay.s(f), lay.s(f))] = -t * sess.utility.d2(s) + 1.0 / (s * s);
    }
    for l in 0..net.link_count() {
        let mut used = 0.0;
        for f in 0..sessions.len() {
            used += y.x[(l, f)];
        }
        let slack = net.capacity(l) - used;
        if slack <= 0.0 {
            return Err(OracleError::Boundary(format!("slack of link {l} is {slack:.3e}")));
        }
        let coupling = 1.0 / (slack * slack);
        for f1 in 0..sessions.len() {
            for f2 in 0..sessions.len() {
                let mut v = coupling;
                if f1 == f2 {
                    let x = y.x[(l, f1)];
                    if x <= 0.0 {
                        return Err(OracleError::Boundary(format!("flow ({l},{f1}) is {x:.3e}")));
                    }
                    v += 1.0 / (x * x);
                }
                h[(lay.x(l, f1), lay.x(l, f2))] = v;
            }
        }
    }
    Ok(h)
}

/// Stacked reduced constraint matrix: one row per (session, non-destination
/// node), flow-balance coefficients in the link-major primal ordering.
pub fn dense_constraints(net: &Network, sessions: &[Session]) -> Array2<f64> {
    let lay = PrimalLayout::new(net.link_count(), sessions.len());
    let dl = dual_layout(net, sessions);
    let mut m = Array2::zeros((dl.dim(), lay.dim()));
    for (f, sess) in sessions.iter().enumerate() {
        for (l, link) in net.links().iter().enumerate() {
            if let Some(i) = dl.index(f, link.tx) {
                m[(i, lay.x(l, f))] += 1.0;
            }
            if let Some(i) = dl.index(f, link.rx) {
                m[(i, lay.x(l, f))] -= 1.0;
            }
        }
        let src_row = dl.index(f, sess.src).expect("src is never the destination");
        m[(src_row, lay.s(f))] = -1.0;
    }
    m
}

/// Stacked balance residual M̃·ỹ of a point.
pub fn dense_balance_residual(net: &Network, sessions: &[Session], y: &PrimalPoint) -> Array1<f64> {
    let lay = PrimalLayout::new(net.link_count(), sessions.len());
    dense_constraints(net, sessions).dot(&y.flatten(&lay))
}

/// Direct solve of the Newton KKT system.
///
/// The raw system is `[[H̃, M̃ᵀ], [M̃, 0]]·[Δỹ; ŵ] = [−∇f; 0]`. The duals are
/// returned in the pressure-form sign convention used throughout this crate,
/// w̃ = −ŵ, under which `Δỹ = −H̃⁻¹(∇f − M̃ᵀw̃)` and the dual system reads
/// `(M̃H̃⁻¹M̃ᵀ)w̃ = M̃H̃⁻¹∇f`.
pub struct KktSolution {
    pub dy: Array1<f64>,
    /// Duals expanded to N×F with explicit zeros at each session's destination.
    pub w: Array2<f64>,
    /// The same duals in stacked reduced form.
    pub w_reduced: Array1<f64>,
    /// Relative ∞-norm residual of the raw system at the returned pair.
    pub residual: f64,
}

pub fn dense_kkt_solve(
    net: &Network,
    sessions: &[Session],
    y: &PrimalPoint,
    t: f64,
) -> Result<KktSolution, OracleError> {
    check_desk_scale(net, sessions)?;
    let h = dense_hessian(net, sessions, y, t)?;
    let g = dense_gradient(net, sessions, y, t)?;
    let m = dense_constraints(net, sessions);
    let dim = h.nrows();
    let rows = m.nrows();
    let order = dim + rows;
    let mut k = Array2::zeros((order, order));
    for i in 0..dim {
        for j in 0..dim {
            k[(i, j)] = h[(i, j)];
        }
    }
    for i in 0..rows {
        for j in 0..dim {
            k[(dim + i, j)] = m[(i, j)];
            k[(j, dim + i)] = m[(i, j)];
        }
    }
    let mut rhs = Array1::zeros(order);
    for i in 0..dim {
        rhs[i] = -g[i];
    }
    // Symmetric equilibration before factoring: at large barrier weights the
    // Hessian block spans many orders of magnitude (slack terms blow up as
    // links saturate) while the constraint rows stay O(1), and raw LU
    // pivoting would reject locally fine pivots against the global scale.
    // Scaling row and column i by 1/√‖K_i·‖∞ keeps the system symmetric and
    // brings every row to unit scale; the solution is recovered by rescaling.
    let mut d = Array1::zeros(order);
    for i in 0..order {
        let row_max = (0..order).fold(0.0_f64, |m, j| m.max(k[(i, j)].abs()));
        if !(row_max.is_finite() && row_max > 0.0) {
            return Err(OracleError::Singular(format!(
                "KKT row {i} is identically zero or non-finite"
            )));
        }
        d[i] = 1.0 / row_max.sqrt();
    }
    let mut k_scaled = Array2::zeros((order, order));
    for i in 0..order {
        for j in 0..order {
            k_scaled[(i, j)] = d[i] * k[(i, j)] * d[j];
        }
    }
    let rhs_scaled = Array1::from_shape_fn(order, |i| d[i] * rhs[i]);
    let sol_scaled = lu_solve(&k_scaled, &rhs_scaled).map_err(|e| match e {
        OracleError::Singular(m) => OracleError::Singular(format!(
            "KKT coefficient matrix is singular (is the graph connected and the point interior?): {m}"
        )),
        other => other,
    })?;
    let sol = Array1::from_shape_fn(order, |i| d[i] * sol_scaled[i]);
    let resid_vec = &k.dot(&sol) - &rhs;
    let residual = max_abs(resid_vec.iter().copied()) / (1.0 + max_abs(rhs.iter().copied()));
    let dy = sol.slice(ndarray::s![..dim]).to_owned();
    let w_hat = sol.slice(ndarray::s![dim..]).to_owned();
    let w_reduced = -w_hat;
    let dl = dual_layout(net, sessions);
    let w = dl.expand(&w_reduced);
    Ok(KktSolution { dy, w, w_reduced, residual })
}

/// Relative ∞-norm residual of the full KKT system at an arbitrary pair
/// (Δỹ, w̃), with w̃ in the pressure-form convention.
pub fn kkt_residual(
    net: &Network,
    sessions: &[Session],
    y: &PrimalPoint,
    t: f64,
    dy: &Array1<f64>,
    w: &Array2<f64>,
) -> Result<f64, OracleError> {
    let h = dense_hessian(net, sessions, y, t)?;
    let g = dense_gradient(net, sessions, y, t)?;
    let m = dense_constraints(net, sessions);
    let dl = dual_layout(net, sessions);
    let w_red = dl.flatten(w);
    // Raw duals are the negated pressure-form duals.
    let r1 = &h.dot(dy) - &m.t().dot(&w_red) + &g;
    let r2 = m.dot(dy);
    let num = max_abs(r1.iter().copied()).max(max_abs(r2.iter().copied()));
    Ok(num / (1.0 + max_abs(g.iter().copied())))
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

/// Generic central difference of a scalar function of a flat vector.
pub fn central_diff(
    f: &mut dyn FnMut(&Array1<f64>) -> Result<f64, OracleError>,
    v: &Array1<f64>,
    h: &Array1<f64>,
) -> Result<Array1<f64>, OracleError> {
    let mut g = Array1::zeros(v.len());
    for i in 0..v.len() {
        let mut plus = v.clone();
        plus[i] += h[i];
        let mut minus = v.clone();
        minus[i] -= h[i];
        g[i] = (f(&plus)? - f(&minus)?) / (2.0 * h[i]);
    }
    Ok(g)
}

fn fd_steps(lay: &PrimalLayout, v: &Array1<f64>) -> Array1<f64> {
    let mut h = Array1::zeros(lay.dim());
    for i in 0..lay.dim() {
        h[i] = tol::FD_STEP_SCALE * (1.0 + v[i].abs());
    }
    h
}

fn point_from_flat(
    net: &Network,
    sessions: &[Session],
    v: &Array1<f64>,
) -> Result<PrimalPoint, OracleError> {
    let lay = PrimalLayout::new(net.link_count(), sessions.len());
    let mut s = Array1::zeros(sessions.len());
    for f in 0..sessions.len() {
        s[f] = v[lay.s(f)];
    }
    let mut x = Array2::zeros((net.link_count(), sessions.len()));
    for l in 0..net.link_count() {
        for f in 0..sessions.len() {
            x[(l, f)] = v[lay.x(l, f)];
        }
    }
    PrimalPoint::new(net, s, x).map_err(|e| OracleError::Input(e.to_string()))
}

/// Guard that every perturbed evaluation stays inside the barrier domain.
fn check_fd_margin(
    net: &Network,
    sessions: &[Session],
    y: &PrimalPoint,
    h: &Array1<f64>,
) -> Result<(), OracleError> {
    let max_h = max_abs(h.iter().copied());
    let mut margin = f64::INFINITY;
    for &v in y.s.iter().chain(y.x.iter()) {
        margin = margin.min(v);
    }
    for l in 0..net.link_count() {
        let used: f64 = (0..sessions.len()).map(|f| y.x[(l, f)]).sum();
        margin = margin.min(net.capacity(l) - used);
    }
    // A single coordinate perturbation moves any slack by at most one step.
    if margin <= 2.0 * max_h {
        return Err(OracleError::Boundary(format!(
            "interior margin {margin:.3e} too small for finite-difference step {max_h:.3e}"
        )));
    }
    Ok(())
}

/// Central-difference gradient of the barrier objective.
pub fn finite_diff_gradient(
    net: &Network,
    sessions: &[Session],
    y: &PrimalPoint,
    t: f64,
) -> Result<Array1<f64>, OracleError> {
    let lay = PrimalLayout::new(net.link_count(), sessions.len());
    let v = y.flatten(&lay);
    let h = fd_steps(&lay, &v);
    check_fd_margin(net, sessions, y, &h)?;
    central_diff(
        &mut |u: &Array1<f64>| dense_objective(net, sessions, &point_from_flat(net, sessions, u)?, t),
        &v,
        &h,
    )
}

/// Central-difference Hessian: differences of the straight-line gradient.
pub fn finite_diff_hessian(
    net: &Network,
    sessions: &[Session],
    y: &PrimalPoint,
    t: f64,
) -> Result<Array2<f64>, OracleError> {
    let lay = PrimalLayout::new(net.link_count(), sessions.len());
    let v = y.flatten(&lay);
    let h = fd_steps(&lay, &v);
    check_fd_margin(net, sessions, y, &h)?;
    let dim = lay.dim();
    let mut hess = Array2::zeros((dim, dim));
    for i in 0..dim {
        let mut plus = v.clone();
        plus[i] += h[i];
        let mut minus = v.clone();
        minus[i] -= h[i];
        let gp = dense_gradient(net, sessions, &point_from_flat(net, sessions, &plus)?, t)?;
        let gm = dense_gradient(net, sessions, &point_from_flat(net, sessions, &minus)?, t)?;
        for j in 0..dim {
            hess[(j, i)] = (gp[j] - gm[j]) / (2.0 * h[i]);
        }
    }
    Ok(hess)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use ndarray::{arr1, arr2};

    #[test]
    fn lu_solves_a_known_system() {
        let a = arr2(&[[2.0, 1.0], [1.0, 3.0]]);
        let b = arr1(&[5.0, 10.0]);
        let x = lu_solve(&a, &b).unwrap();
        // Solution of 2x+y=5, x+3y=10 is (1, 3).
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn lu_detects_singularity() {
        let a = arr2(&[[1.0, 2.0], [2.0, 4.0]]);
        assert!(matches!(lu_factor(&a), Err(OracleError::Singular(_))));
    }

    #[test]
    fn invert_identity_and_frozen_two_by_two() {
        let (inv, residual) = dense_invert(&Array2::eye(4)).unwrap();
        assert!(residual < 1e-15);
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(inv[(i, j)], if i == j { 1.0 } else { 0.0 });
            }
        }
        let a = arr2(&[[2.0, 1.0], [1.0, 2.0]]);
        let (inv, residual) = dense_invert(&a).unwrap();
        let expected = arr2(&[
            [2.0 / 3.0, -1.0 / 3.0],
            [-1.0 / 3.0, 2.0 / 3.0],
        ]);
        for i in 0..2 {
            for j in 0..2 {
                assert!((inv[(i, j)] - expected[(i, j)]).abs() < 1e-14);
            }
        }
        assert!(residual < 1e-14);
    }

    #[test]
    fn cholesky_factors_spd_and_rejects_indefinite() {
        let a = arr2(&[[4.0, 2.0], [2.0, 3.0]]);
        let l = cholesky(&a).unwrap();
        let back = l.dot(&l.t());
        for i in 0..2 {
            for j in 0..2 {
                assert!((back[(i, j)] - a[(i, j)]).abs() < 1e-14);
            }
        }
        let ind = arr2(&[[1.0, 2.0], [2.0, 1.0]]);
        assert!(matches!(cholesky(&ind), Err(OracleError::NotSpd(_))));
    }

    #[test]
    fn jacobi_eigenvalues_match_known_spectra() {
        let d = arr2(&[[3.0, 0.0], [0.0, -1.0]]);
        let eig = sym_eigen(&d).unwrap();
        assert_eq!(eig.to_vec(), vec![-1.0, 3.0]);
        let a = arr2(&[[2.0, 1.0], [1.0, 2.0]]);
        let eig = sym_eigen(&a).unwrap();
        assert!((eig[0] - 1.0).abs() < 1e-12);
        assert!((eig[1] - 3.0).abs() < 1e-12);
        let asym = arr2(&[[0.0, 1.0], [0.0, 0.0]]);
        assert!(matches!(sym_eigen(&asym), Err(OracleError::NotSymmetric(_))));
    }

    #[test]
    fn central_diff_is_exact_on_linear_functions() {
        let v = arr1(&[1.0, -2.0, 3.0]);
        // A linear function has zero truncation error, so a large step keeps
        // the difference quotient free of cancellation noise as well.
        let h = arr1(&[0.25, 0.25, 0.25]);
        let g = central_diff(
            &mut |u: &Array1<f64>| Ok(2.0 * u[0] - 5.0 * u[1] + 0.5 * u[2] + 7.0),
            &v,
            &h,
        )
        .unwrap();
        assert!((g[0] - 2.0).abs() < 1e-12);
        assert!((g[1] + 5.0).abs() < 1e-12);
        assert!((g[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn kkt_solve_has_tiny_residual_and_preserves_balance() {
        let (net, sessions) = fixtures::two_node(2.0);
        let y = PrimalPoint::new(&net, arr1(&[0.5]), Array2::from_elem((1, 1), 0.5)).unwrap();
        let sol = dense_kkt_solve(&net, &sessions, &y, 1.0).unwrap();
        assert!(sol.residual < crate::tol::DENSE_SOLVE_REL);
        // Second block row: M̃·Δỹ = 0, here Δx − Δs = 0.
        let m = dense_constraints(&net, &sessions);
        let r = m.dot(&sol.dy);
        assert!(max_abs(r.iter().copied()) < 1e-9);
        // Destination dual is pinned to zero in the expanded form.
        assert_eq!(sol.w[(1, 0)], 0.0);
        // And the reported pair passes the residual evaluator.
        let rel = kkt_residual(&net, &sessions, &y, 1.0, &sol.dy, &sol.w).unwrap();
        assert!(rel < crate::tol::DENSE_SOLVE_REL);
    }

    #[test]
    fn boundary_points_are_rejected_by_dense_evaluations() {
        let (net, sessions) = fixtures::two_node(1.0);
        let y = PrimalPoint::new(&net, arr1(&[1.0]), Array2::from_elem((1, 1), 1.0)).unwrap();
        assert!(matches!(
            dense_objective(&net, &sessions, &y, 1.0),
            Err(OracleError::Boundary(_))
        ));
        assert!(matches!(
            finite_diff_gradient(&net, &sessions, &y, 1.0),
            Err(OracleError::Boundary(_))
        ));
    }

    #[test]
    fn desk_scale_guard_rejects_oversized_instances() {
        let p = crate::gen::GenParams { nodes: 12, sessions: 7, ..Default::default() };
        let (net, sessions) = crate::gen::generate(&p, 5).unwrap();
        assert!(matches!(check_desk_scale(&net, &sessions), Err(OracleError::Input(_))));
    }
}
