//! Joint multi-path routing and flow control (MRFC) on capacitated directed
//! networks, solved by a barrier interior-point method whose Newton direction
//! is computed entirely from per-node and per-link closed forms.
//!
//! The library has three layers:
//!
//! * problem data and calculus: [`net`] (graphs, sessions, utilities,
//!   incidence matrices), [`objective`] (barrier objective, gradient, block
//!   Hessian), [`layout`] (the flat-vector orderings every dense path shares);
//! * the structured solver: [`primal`] (closed-form Hessian-block inverses and
//!   the per-entity Newton direction), [`splitting`] (the dual system, its
//!   matrix splitting, the element-wise one-hop update, spectral-radius
//!   diagnostics), [`solver`] (initialization, line search, Newton decrement,
//!   the barrier schedule, and a distributed execution mode), [`runtime`] (the
//!   round-based message-passing simulation with a one-hop read ledger), and
//!   [`subgradient`] (a dual-decomposition baseline for comparison);
//! * ground truth: [`oracle`] (hand-rolled dense factorizations, finite
//!   differences, and independent straight-line assemblies used to validate
//!   every closed form), plus [`validate`] (a runnable property suite) and
//!   [`trace`] (stable CSV/solution serialization).
//!
//! Every structured computation is checked against an oracle that shares no
//! formula code with it; the test suites treat agreement between the two
//! routes as the definition of correctness.

pub mod fixtures;
pub mod gen;
pub mod layout;
pub mod net;
pub mod objective;
pub mod oracle;
pub mod primal;
pub mod runtime;
pub mod solver;
pub mod splitting;
pub mod subgradient;
pub mod tol;
pub mod trace;
pub mod validate;
