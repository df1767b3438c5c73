//! Lockstep round-based simulation of the one-hop message-passing model,
//! with read instrumentation.
//!
//! State is partitioned by owner: each link owns its flows, slack, squared
//! norm, and capacity; each node owns its duals and, when it is a session's
//! source, that session's rate. Entity computations (dual sweeps, direction
//! kernels) obtain foreign state only through the instrumented read methods
//! here, and every foreign read lands in an append-only ledger. A run is
//! locality-clean when every recorded read is one-hop: reader and owner are
//! the same node and one of its incident links, or two nodes joined by a
//! link.
//!
//! Scalar control decisions (residual stopping, step size, decrement) are
//! driver-side reductions of per-entity local quantities, obtained through
//! the uninstrumented `observe_*` methods; they model spanning-tree
//! aggregation rather than neighbor state reads, and the locality claims are
//! about the latter. Commits happen at round barriers: all updates within a
//! round read the previous round's state (Jacobi style), so the order of
//! entity updates inside a round cannot matter.

use ndarray::{Array1, Array2};
use std::fmt;

use crate::net::{Network, Session};
use crate::objective::PrimalPoint;
use crate::primal::DualPoint;
use crate::splitting::{LinkLocal, OneHopState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntityId {
    Node(usize),
    Link(usize),
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntityId::Node(n) => write!(f, "node {n}"),
            EntityId::Link(l) => write!(f, "link {l}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldId {
    LinkFlows(usize),
    LinkSlack(usize),
    LinkSqNorm(usize),
    LinkCapacity(usize),
    NodeDuals(usize),
    /// A session's rate, owned by its source node.
    SourceRate(usize),
}

impl fmt::Display for FieldId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldId::LinkFlows(l) => write!(f, "flows of link {l}"),
            FieldId::LinkSlack(l) => write!(f, "slack of link {l}"),
            FieldId::LinkSqNorm(l) => write!(f, "squared norm of link {l}"),
            FieldId::LinkCapacity(l) => write!(f, "capacity of link {l}"),
            FieldId::NodeDuals(n) => write!(f, "duals of node {n}"),
            FieldId::SourceRate(s) => write!(f, "rate of session {s}"),
        }
    }
}

/// What kind of computation a read served; lets tests assert, for example,
/// that source-direction computations perform no foreign reads at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Setup,
    DualSweep,
    SourceDirection,
    LinkDirection,
    Measure,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Phase::Setup => "setup",
            Phase::DualSweep => "dual sweep",
            Phase::SourceDirection => "source direction",
            Phase::LinkDirection => "link direction",
            Phase::Measure => "measurement",
        };
        write!(f, "{name}")
    }
}

/// One foreign read: who read what from whom, and when.
#[derive(Debug, Clone, PartialEq)]
pub struct AccessRecord {
    pub reader: EntityId,
    pub owner: EntityId,
    pub field: FieldId,
    pub phase: Phase,
    pub round: usize,
}

impl fmt::Display for AccessRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} read {} (owned by {}) during {} of round {}",
            self.reader, self.field, self.owner, self.phase, self.round
        )
    }
}

#[derive(Debug, Clone)]
pub struct LocalityReport {
    pub foreign_reads: usize,
    pub rounds: usize,
    pub violations: Vec<AccessRecord>,
}

impl LocalityReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn summary(&self) -> String {
        if self.is_clean() {
            format!(
                "{} foreign reads over {} rounds, all one-hop",
                self.foreign_reads, self.rounds
            )
        } else {
            format!(
                "{} foreign reads over {} rounds, {} locality violations (first: {})",
                self.foreign_reads,
                self.rounds,
                self.violations.len(),
                self.violations[0]
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RuntimeError {
    Input(String),
}

impl fmt::Display for RuntimeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuntimeError::Input(m) => write!(f, "invalid runtime input: {m}"),
        }
    }
}

impl std::error::Error for RuntimeError {}

pub struct Runtime {
    net: Network,
    sessions: Vec<Session>,
    dst: Vec<usize>,
    /// Link-owned flows, L×F.
    x: Array2<f64>,
    slack: Array1<f64>,
    sq_norm: Array1<f64>,
    /// Node-owned duals, N×F.
    w: Array2<f64>,
    /// Session rates, owned by each session's source node.
    s: Array1<f64>,
    ledger: Vec<AccessRecord>,
    round: usize,
    phase: Phase,
}

impl Runtime {
    pub fn new(
        net: &Network,
        sessions: &[Session],
        y: &PrimalPoint,
        w: &DualPoint,
    ) -> Result<Self, RuntimeError> {
        if y.session_count() != sessions.len() || y.x.nrows() != net.link_count() {
            return Err(RuntimeError::Input("primal point shape does not match instance".into()));
        }
        if w.w.nrows() != net.node_count() || w.w.ncols() != sessions.len() {
            return Err(RuntimeError::Input("dual point shape does not match instance".into()));
        }
        Ok(Runtime {
            net: net.clone(),
            sessions: sessions.to_vec(),
            dst: sessions.iter().map(|s| s.dst).collect(),
            x: y.x.clone(),
            slack: y.slack.clone(),
            sq_norm: y.sq_norm.clone(),
            w: w.w.clone(),
            s: y.s.clone(),
            ledger: Vec::new(),
            round: 0,
            phase: Phase::Setup,
        })
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    /// Advances the round counter; updates committed afterwards belong to
    /// the new round.
    pub fn next_round(&mut self) -> usize {
        self.round += 1;
        self.round
    }

    fn record(&mut self, reader: EntityId, owner: EntityId, field: FieldId) {
        if reader != owner {
            self.ledger.push(AccessRecord {
                reader,
                owner,
                field,
                phase: self.phase,
                round: self.round,
            });
        }
    }

    // -- instrumented reads --------------------------------------------------

    pub fn read_link_flows(&mut self, reader: EntityId, l: usize) -> Array1<f64> {
        self.record(reader, EntityId::Link(l), FieldId::LinkFlows(l));
        self.x.row(l).to_owned()
    }

    pub fn read_link_slack(&mut self, reader: EntityId, l: usize) -> f64 {
        self.record(reader, EntityId::Link(l), FieldId::LinkSlack(l));
        self.slack[l]
    }

    pub fn read_link_sq_norm(&mut self, reader: EntityId, l: usize) -> f64 {
        self.record(reader, EntityId::Link(l), FieldId::LinkSqNorm(l));
        self.sq_norm[l]
    }

    pub fn read_link_capacity(&mut self, reader: EntityId, l: usize) -> f64 {
        self.record(reader, EntityId::Link(l), FieldId::LinkCapacity(l));
        self.net.capacity(l)
    }

    pub fn read_duals(&mut self, reader: EntityId, n: usize) -> Array1<f64> {
        self.record(reader, EntityId::Node(n), FieldId::NodeDuals(n));
        self.w.row(n).to_owned()
    }

    pub fn read_rate(&mut self, reader: EntityId, f: usize) -> f64 {
        let owner = EntityId::Node(self.sessions[f].src);
        self.record(reader, owner, FieldId::SourceRate(f));
        self.s[f]
    }

    // -- entity computations' input gathering --------------------------------

    /// Gathers everything node n may read to update w̃_n^(f): its own duals
    /// and rate, plus flows/slack/norms of incident links and duals at their
    /// far endpoints. With `with_drift` the snapshot also carries the row's
    /// balance-drift correction −(Σ_out x − Σ_in x − 1_src·s_f), computed
    /// from the same one-hop reads.
    pub fn snapshot_one_hop(&mut self, n: usize, f: usize, with_drift: bool) -> OneHopState {
        let me = EntityId::Node(n);
        let w_self = self.read_duals(me, n);
        let mut drift = 0.0;
        let incident: Vec<usize> = self.net.incident(n).to_vec();
        let mut links = Vec::with_capacity(incident.len());
        for l in incident {
            let other = self.net.other_endpoint(l, n);
            let outgoing = self.net.link(l).tx == n;
            let x = self.read_link_flows(me, l);
            drift += if outgoing { x[f] } else { -x[f] };
            links.push(LinkLocal {
                link: l,
                other,
                outgoing,
                capacity: self.read_link_capacity(me, l),
                x,
                slack: self.read_link_slack(me, l),
                sq_norm: self.read_link_sq_norm(me, l),
                w_other: self.read_duals(me, other),
            });
        }
        let src_rate = (self.sessions[f].src == n).then(|| self.read_rate(me, f));
        if let Some(s) = src_rate {
            drift -= s;
        }
        OneHopState {
            node: n,
            session: f,
            w_self,
            links,
            src_rate,
            utility: self.sessions[f].utility,
            dst: self.dst.clone(),
            rhs_extra: if with_drift { -drift } else { 0.0 },
        }
    }

    /// Inputs of one source's direction kernel. Both values live at the
    /// source node itself, so this performs no foreign reads.
    pub fn source_direction_inputs(&mut self, f: usize) -> (f64, f64) {
        let src = self.sessions[f].src;
        let me = EntityId::Node(src);
        let s = self.read_rate(me, f);
        let w_src = self.read_duals(me, src)[f];
        (s, w_src)
    }

    /// Inputs of one link's direction kernel: its own flows and slack plus
    /// the dual pressure difference across it, per session.
    pub fn link_direction_inputs(&mut self, l: usize) -> (Array1<f64>, f64, Array1<f64>) {
        let me = EntityId::Link(l);
        let link = self.net.link(l);
        let x = self.read_link_flows(me, l);
        let slack = self.read_link_slack(me, l);
        let w_tx = self.read_duals(me, link.tx);
        let w_rx = self.read_duals(me, link.rx);
        (x, slack, &w_tx - &w_rx)
    }

    // -- commits (entities writing their own state) --------------------------

    /// Round barrier for the dual sweep: all nodes' new duals take effect at
    /// once.
    pub fn commit_duals(&mut self, next: Array2<f64>) -> Result<(), RuntimeError> {
        if next.dim() != self.w.dim() {
            return Err(RuntimeError::Input(format!(
                "dual commit has shape {:?}, state is {:?}",
                next.dim(),
                self.w.dim()
            )));
        }
        self.w = next;
        Ok(())
    }

    /// After an accepted step every link and source updates its own state.
    pub fn commit_primal(&mut self, y: &PrimalPoint) -> Result<(), RuntimeError> {
        if y.x.dim() != self.x.dim() || y.s.len() != self.s.len() {
            return Err(RuntimeError::Input(format!(
                "primal commit has shapes {:?}/{}, state is {:?}/{}",
                y.x.dim(),
                y.s.len(),
                self.x.dim(),
                self.s.len()
            )));
        }
        self.x = y.x.clone();
        self.slack = y.slack.clone();
        self.sq_norm = y.sq_norm.clone();
        self.s = y.s.clone();
        Ok(())
    }

    // -- measurement plane ----------------------------------------------------

    /// Uninstrumented full view of the primal state, for driver-side control
    /// and traces.
    pub fn observe_primal(&self) -> PrimalPoint {
        PrimalPoint::new(&self.net, self.s.clone(), self.x.clone())
            .expect("runtime state is always shape-consistent")
    }

    /// Uninstrumented full view of the duals.
    pub fn observe_duals(&self) -> DualPoint {
        DualPoint { w: self.w.clone() }
    }

    // -- ledger ---------------------------------------------------------------

    pub fn ledger(&self) -> &[AccessRecord] {
        &self.ledger
    }

    pub fn reads_in_phase(&self, phase: Phase) -> Vec<&AccessRecord> {
        self.ledger.iter().filter(|r| r.phase == phase).collect()
    }

    /// Whether two entities may exchange state directly: a node and an
    /// incident link, two endpoints of some link, or two links sharing an
    /// endpoint.
    pub fn one_hop(&self, a: EntityId, b: EntityId) -> bool {
        match (a, b) {
            (EntityId::Node(n), EntityId::Node(m)) => {
                n == m || !self.net.joining(n, m).is_empty()
            }
            (EntityId::Node(n), EntityId::Link(l)) | (EntityId::Link(l), EntityId::Node(n)) => {
                let link = self.net.link(l);
                link.tx == n || link.rx == n
            }
            (EntityId::Link(a), EntityId::Link(b)) => {
                if a == b {
                    return true;
                }
                let la = self.net.link(a);
                let lb = self.net.link(b);
                la.tx == lb.tx || la.tx == lb.rx || la.rx == lb.tx || la.rx == lb.rx
            }
        }
    }

    pub fn locality_report(&self) -> LocalityReport {
        let violations = self
            .ledger
            .iter()
            .filter(|r| !self.one_hop(r.reader, r.owner))
            .cloned()
            .collect();
        LocalityReport {
            foreign_reads: self.ledger.len(),
            rounds: self.round,
            violations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::objective::node_balance;
    use crate::splitting::{
        assemble_dual_system, local_dual_update, splitting_iterate, SplitConfig,
    };
    use ndarray::arr1;

    fn ring_runtime() -> (Network, Vec<Session>, PrimalPoint, DualPoint, Runtime) {
        let (net, sessions) = fixtures::ring_five();
        let y = PrimalPoint::new(
            &net,
            arr1(&[0.3, 0.2]),
            Array2::from_elem((net.link_count(), 2), 0.07),
        )
        .unwrap();
        let w = DualPoint::ones(&net, &sessions);
        let rt = Runtime::new(&net, &sessions, &y, &w).unwrap();
        (net, sessions, y, w, rt)
    }

    #[test]
    fn full_sweep_reads_are_all_one_hop() {
        let (net, sessions, _, _, mut rt) = ring_runtime();
        rt.set_phase(Phase::DualSweep);
        rt.next_round();
        for (f, sess) in sessions.iter().enumerate() {
            for n in 0..net.node_count() {
                if n != sess.dst {
                    let _ = rt.snapshot_one_hop(n, f, true);
                }
            }
        }
        rt.set_phase(Phase::SourceDirection);
        for f in 0..sessions.len() {
            let _ = rt.source_direction_inputs(f);
        }
        rt.set_phase(Phase::LinkDirection);
        for l in 0..net.link_count() {
            let _ = rt.link_direction_inputs(l);
        }
        let report = rt.locality_report();
        assert!(report.is_clean(), "{}", report.summary());
        assert!(report.foreign_reads > 0);
        // Source kernels touch only their own node's state.
        assert_eq!(rt.reads_in_phase(Phase::SourceDirection).len(), 0);
        // Link kernels read exactly their two endpoints' duals.
        let link_reads = rt.reads_in_phase(Phase::LinkDirection);
        assert_eq!(link_reads.len(), 2 * net.link_count());
        for r in link_reads {
            let EntityId::Link(l) = r.reader else {
                panic!("link-direction read from {}", r.reader)
            };
            let link = net.link(l);
            let EntityId::Node(n) = r.owner else {
                panic!("link-direction read owned by {}", r.owner)
            };
            assert!(n == link.tx || n == link.rx);
        }
    }

    #[test]
    fn far_reads_are_flagged_with_full_context() {
        let (_, _, _, _, mut rt) = ring_runtime();
        rt.set_phase(Phase::DualSweep);
        rt.next_round();
        // Nodes 0 and 2 are not adjacent on the five-ring.
        let _ = rt.read_duals(EntityId::Node(0), 2);
        let report = rt.locality_report();
        assert_eq!(report.violations.len(), 1);
        let v = &report.violations[0];
        assert_eq!(v.reader, EntityId::Node(0));
        assert_eq!(v.owner, EntityId::Node(2));
        assert_eq!(v.field, FieldId::NodeDuals(2));
        assert_eq!(v.round, 1);
        assert!(v.to_string().contains("node 0"));
    }

    #[test]
    fn runtime_sweep_equals_centralized_iterate() {
        let (net, sessions, y, w, mut rt) = ring_runtime();
        let t = 1.5;
        let config = SplitConfig::default();
        let system = assemble_dual_system(&net, &sessions, &y, t, &config).unwrap();
        let w_flat = system.layout.flatten(&w.w);
        let central = splitting_iterate(&w_flat, &system).unwrap();
        rt.set_phase(Phase::DualSweep);
        rt.next_round();
        let mut next = w.w.clone();
        for (f, sess) in sessions.iter().enumerate() {
            for n in 0..net.node_count() {
                if n == sess.dst {
                    continue;
                }
                let state = rt.snapshot_one_hop(n, f, false);
                next[(n, f)] = local_dual_update(&state, t, config.alpha).unwrap();
            }
        }
        rt.commit_duals(next).unwrap();
        let observed = system.layout.flatten(&rt.observe_duals().w);
        for i in 0..system.dim() {
            assert!(
                (observed[i] - central[i]).abs() < 1e-10,
                "row {i}: runtime {} central {}",
                observed[i],
                central[i]
            );
        }
        assert!(rt.locality_report().is_clean());
    }

    #[test]
    fn drift_correction_is_the_negated_balance_residual() {
        let (net, sessions) = fixtures::ring_five();
        // Deliberately unbalanced flows.
        let mut x = Array2::from_elem((net.link_count(), 2), 0.07);
        x[(0, 0)] = 0.12;
        let y = PrimalPoint::new(&net, arr1(&[0.3, 0.2]), x).unwrap();
        let w = DualPoint::ones(&net, &sessions);
        let mut rt = Runtime::new(&net, &sessions, &y, &w).unwrap();
        for (f, sess) in sessions.iter().enumerate() {
            for n in 0..net.node_count() {
                if n == sess.dst {
                    continue;
                }
                let state = rt.snapshot_one_hop(n, f, true);
                let expected = -node_balance(&net, &sessions, &y, n, f);
                assert!(
                    (state.rhs_extra - expected).abs() < 1e-15,
                    "drift at (node {n}, session {f}): {} vs {}",
                    state.rhs_extra,
                    expected
                );
            }
        }
    }

    #[test]
    fn commits_are_visible_and_shape_checked() {
        let (net, sessions, y, w, mut rt) = ring_runtime();
        let y2 = y.stepped(&net, &arr1(&[0.01, 0.01]), &Array2::zeros((10, 2)), 1.0).unwrap();
        rt.commit_primal(&y2).unwrap();
        let seen = rt.observe_primal();
        assert_eq!(seen.s, y2.s);
        assert_eq!(seen.slack, y2.slack);
        let bad = Array2::zeros((3, 3));
        assert!(rt.commit_duals(bad).is_err());
        let mut w2 = w.w.clone();
        w2[(0, 0)] = 7.0;
        rt.commit_duals(w2).unwrap();
        assert_eq!(rt.observe_duals().w[(0, 0)], 7.0);
        let _ = sessions;
    }
}
