//! Pinned numeric tolerances used across the library and its test suites.
//!
//! Every constant documents what it guards and why the value is what it is.
//! Tests reference these constants instead of re-inventing literals so a
//! tolerance change is a single reviewed edit.

// ---------------------------------------------------------------------------
// Agreement between structured closed forms and dense oracles
// ---------------------------------------------------------------------------

/// Closed-form results (block inverses, structured dual-system assembly,
/// element-wise dual updates, separable Newton decrement) must match their
/// dense oracle counterparts to this absolute/∞-norm error. Desk-scale
/// problems keep conditioning mild, so 1e-10 is attainable and tight enough
/// to catch any formula error.
pub const EXACT: f64 = 1e-10;

/// Symmetry and other identities that hold by construction, checked only to
/// guard against assembly bugs (summation order may differ between halves).
pub const CONSTRUCTION: f64 = 1e-12;

/// Relative residual of the full Newton KKT system evaluated at the
/// structured (direction, duals) pair when the inner dual iteration is run to
/// `INNER_TOL_SOLVER`. Looser than `EXACT` because it accumulates the inner
/// solve residual through a matrix product.
pub const KKT_REL: f64 = 1e-8;

/// Relative residual of a direct dense linear solve (with one step of
/// iterative refinement) on desk-scale systems.
pub const DENSE_SOLVE_REL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Derivative checks
// ---------------------------------------------------------------------------

/// Analytic gradient vs central finite differences, relative ∞-norm error.
/// Central differencing with step `FD_STEP_SCALE` leaves roughly this much
/// truncation + roundoff error on well-scaled interior points.
pub const GRAD_FD_REL: f64 = 1e-6;

/// Analytic Hessian blocks vs finite differences of the gradient. One order
/// looser than `GRAD_FD_REL`: the second differencing doubles the noise.
pub const HESS_FD_REL: f64 = 1e-5;

/// Relative step used by central finite differences: `h_i` is this times a
/// per-coordinate scale. Balances truncation (h²) and roundoff (eps/h).
pub const FD_STEP_SCALE: f64 = 1e-6;

// ---------------------------------------------------------------------------
// Feasibility and interiority
// ---------------------------------------------------------------------------

/// Flow-balance residual the solver must maintain at every iterate and at the
/// final solution.
pub const BALANCE: f64 = 1e-8;

/// Flow-balance residual of the initializer's output. Tighter than `BALANCE`:
/// the initial flows come from one linear solve with no accumulation.
pub const BALANCE_INIT: f64 = 1e-10;

/// A point is treated as strictly interior when every coordinate and every
/// slack exceeds this fraction of the largest link capacity. Guards the log
/// evaluations in the barrier.
pub const INTERIOR_SCALE: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Iteration controls
// ---------------------------------------------------------------------------

/// Default Newton-decrement stopping threshold per barrier stage.
pub const DECREMENT_STOP: f64 = 1e-6;

/// Default inner (dual splitting) residual tolerance for standalone use.
pub const INNER_TOL_DEFAULT: f64 = 1e-6;

/// Inner residual tolerance used inside the Newton solver, where the primal
/// direction's KKT residual (`KKT_REL`) budget requires near-exact duals.
pub const INNER_TOL_SOLVER: f64 = 1e-10;

/// Smallest admissible line-search step; below this the search reports a
/// stall instead of returning a uselessly small step.
pub const STEP_MIN: f64 = 1e-12;

/// Slack allowed when asserting that the splitting spectral radius is
/// monotone in its parameter: the two radii come from separate eigenvalue
/// computations, each good to well below this.
pub const RHO_MONOTONE_SLACK: f64 = 1e-9;

/// Relative scale below which objective-value comparisons are noise. Unit
/// steps in the quadratic zone are accepted without consulting f, so a
/// near-converged iteration may move the recorded objective by roughly the
/// measured-slope noise — the inexact dual solve and drift correction leave
/// about this much times (1 + |f|) at the pinned inner tolerance. Damped
/// steps are Armijo-enforced and need no slack.
pub const OBJECTIVE_NOISE_REL: f64 = 1e-7;

/// Per-iteration agreement between the distributed-runtime execution mode and
/// the centralized reference mode. Looser than `EXACT` because both modes
/// accumulate their own rounding over a whole iteration's pipeline.
pub const TRACE_MATCH: f64 = 1e-9;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerances_are_positive_and_ordered() {
        for &v in &[
            EXACT,
            CONSTRUCTION,
            KKT_REL,
            DENSE_SOLVE_REL,
            GRAD_FD_REL,
            HESS_FD_REL,
            FD_STEP_SCALE,
            BALANCE,
            BALANCE_INIT,
            INTERIOR_SCALE,
            DECREMENT_STOP,
            INNER_TOL_DEFAULT,
            INNER_TOL_SOLVER,
            STEP_MIN,
            RHO_MONOTONE_SLACK,
            OBJECTIVE_NOISE_REL,
            TRACE_MATCH,
        ] {
            assert!(v > 0.0 && v.is_finite());
        }
        // Construction-level identities are the tightest checks we make.
        assert!(CONSTRUCTION < EXACT);
        // The KKT residual budget must absorb the inner solve residual.
        assert!(INNER_TOL_SOLVER < KKT_REL);
        assert!(KKT_REL < GRAD_FD_REL);
        // Second differences are noisier than first differences.
        assert!(GRAD_FD_REL < HESS_FD_REL);
        // The initializer is held to a tighter balance than the running solver.
        assert!(BALANCE_INIT < BALANCE);
        // A stalled step is far below anything the solver should accept.
        assert!(STEP_MIN < DECREMENT_STOP);
    }
}
