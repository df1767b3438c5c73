//! Directed capacitated networks, sessions, utility functions, incidence
//! matrices, and a seeded random instance generator.
//!
//! Conventions: nodes, links, and sessions use dense 0-based indices. A link
//! is an ordered pair (tx, rx) with a strictly positive capacity; parallel
//! links between the same node pair are allowed, self-loops are not. The
//! full node-arc incidence matrix A is N×L with +1 at a link's transmitter
//! row and −1 at its receiver row; a session's reduced matrix deletes the
//! destination row, which restores full row rank on a connected graph.

use ndarray::{Array1, Array2};
use std::collections::VecDeque;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum NetError {
    InvalidInput(String),
    Disconnected(String),
    Unreachable(String),
    Generation(String),
}

impl fmt::Display for NetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetError::InvalidInput(m) => write!(f, "invalid input: {m}"),
            NetError::Disconnected(m) => write!(f, "disconnected network: {m}"),
            NetError::Unreachable(m) => write!(f, "unreachable destination: {m}"),
            NetError::Generation(m) => write!(f, "generation failed: {m}"),
        }
    }
}

impl std::error::Error for NetError {}

/// Utility function family of a session. Exposes value and first/second
/// derivatives; every member must be strictly increasing and strictly concave
/// on s > 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UtilitySpec {
    /// w·log(s). The default family; weight must be strictly positive.
    WeightedLog { weight: f64 },
}

impl UtilitySpec {
    /// Plain logarithm, the common case.
    pub fn log() -> Self {
        UtilitySpec::WeightedLog { weight: 1.0 }
    }

    pub fn value(&self, s: f64) -> f64 {
        match self {
            UtilitySpec::WeightedLog { weight } => weight * s.ln(),
        }
    }

    /// First derivative U′(s).
    pub fn d1(&self, s: f64) -> f64 {
        match self {
            UtilitySpec::WeightedLog { weight } => weight / s,
        }
    }

    /// Second derivative U″(s).
    pub fn d2(&self, s: f64) -> f64 {
        match self {
            UtilitySpec::WeightedLog { weight } => -weight / (s * s),
        }
    }

    pub fn validate(&self) -> Result<(), NetError> {
        match self {
            UtilitySpec::WeightedLog { weight } => {
                if !(weight.is_finite() && *weight > 0.0) {
                    return Err(NetError::InvalidInput(format!(
                        "log utility weight must be positive and finite, got {weight}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub tx: usize,
    pub rx: usize,
    pub capacity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Session {
    pub src: usize,
    pub dst: usize,
    pub utility: UtilitySpec,
}

/// Immutable directed network with adjacency indexes.
#[derive(Debug, Clone)]
pub struct Network {
    node_count: usize,
    links: Vec<Link>,
    out: Vec<Vec<usize>>,
    inn: Vec<Vec<usize>>,
    phi: Vec<Vec<usize>>,
}

impl Network {
    pub fn new(node_count: usize, links: Vec<Link>) -> Result<Self, NetError> {
        if node_count < 2 {
            return Err(NetError::InvalidInput(format!(
                "need at least 2 nodes, got {node_count}"
            )));
        }
        if links.is_empty() {
            return Err(NetError::InvalidInput("need at least one link".into()));
        }
        for (l, link) in links.iter().enumerate() {
            if link.tx >= node_count || link.rx >= node_count {
                return Err(NetError::InvalidInput(format!(
                    "link {l} endpoints ({}, {}) out of range for {node_count} nodes",
                    link.tx, link.rx
                )));
            }
            if link.tx == link.rx {
                return Err(NetError::InvalidInput(format!(
                    "link {l} is a self-loop at node {}",
                    link.tx
                )));
            }
            if !(link.capacity.is_finite() && link.capacity > 0.0) {
                return Err(NetError::InvalidInput(format!(
                    "link {l} capacity must be positive and finite, got {}",
                    link.capacity
                )));
            }
        }
        let mut out = vec![Vec::new(); node_count];
        let mut inn = vec![Vec::new(); node_count];
        let mut phi = vec![Vec::new(); node_count];
        for (l, link) in links.iter().enumerate() {
            out[link.tx].push(l);
            inn[link.rx].push(l);
            phi[link.tx].push(l);
            phi[link.rx].push(l);
        }
        let net = Network { node_count, links, out, inn, phi };
        net.check_weakly_connected()?;
        Ok(net)
    }

    fn check_weakly_connected(&self) -> Result<(), NetError> {
        let mut seen = vec![false; self.node_count];
        let mut queue = VecDeque::new();
        seen[0] = true;
        queue.push_back(0);
        while let Some(n) = queue.pop_front() {
            for &l in &self.phi[n] {
                let m = self.other_endpoint(l, n);
                if !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
        if let Some(n) = seen.iter().position(|&s| !s) {
            return Err(NetError::Disconnected(format!(
                "node {n} is not connected to node 0 (even ignoring directions)"
            )));
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, l: usize) -> Link {
        self.links[l]
    }

    pub fn capacity(&self, l: usize) -> f64 {
        self.links[l].capacity
    }

    pub fn max_capacity(&self) -> f64 {
        self.links.iter().map(|l| l.capacity).fold(0.0, f64::max)
    }

    pub fn min_capacity(&self) -> f64 {
        self.links.iter().map(|l| l.capacity).fold(f64::INFINITY, f64::min)
    }

    /// Out(n): links transmitted by node n.
    pub fn out_links(&self, n: usize) -> &[usize] {
        &self.out[n]
    }

    /// In(n): links received by node n.
    pub fn in_links(&self, n: usize) -> &[usize] {
        &self.inn[n]
    }

    /// Φ(n) = In(n) ∪ Out(n): all links incident to node n.
    pub fn incident(&self, n: usize) -> &[usize] {
        &self.phi[n]
    }

    /// Γ(n1, n2): links joining n1 and n2 in either direction. Symmetric.
    pub fn joining(&self, n1: usize, n2: usize) -> Vec<usize> {
        self.phi[n1]
            .iter()
            .copied()
            .filter(|&l| {
                let link = self.links[l];
                (link.tx == n1 && link.rx == n2) || (link.tx == n2 && link.rx == n1)
            })
            .collect()
    }

    /// The endpoint of link l that is not n. n must be an endpoint of l.
    pub fn other_endpoint(&self, l: usize, n: usize) -> usize {
        let link = self.links[l];
        debug_assert!(link.tx == n || link.rx == n);
        if link.tx == n {
            link.rx
        } else {
            link.tx
        }
    }

    /// Nodes reachable from `from` along directed links (including `from`).
    pub fn reachable_from(&self, from: usize) -> Vec<bool> {
        let mut seen = vec![false; self.node_count];
        let mut queue = VecDeque::new();
        seen[from] = true;
        queue.push_back(from);
        while let Some(n) = queue.pop_front() {
            for &l in &self.out[n] {
                let m = self.links[l].rx;
                if !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
        seen
    }

    /// Nodes from which `to` is reachable along directed links (including `to`).
    pub fn coreachable_to(&self, to: usize) -> Vec<bool> {
        let mut seen = vec![false; self.node_count];
        let mut queue = VecDeque::new();
        seen[to] = true;
        queue.push_back(to);
        while let Some(n) = queue.pop_front() {
            for &l in &self.inn[n] {
                let m = self.links[l].tx;
                if !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
        seen
    }

    /// Validates a session set against this network: indices in range,
    /// src ≠ dst, destination reachable from the source, utility well-formed.
    pub fn check_sessions(&self, sessions: &[Session]) -> Result<(), NetError> {
        if sessions.is_empty() {
            return Err(NetError::InvalidInput("need at least one session".into()));
        }
        for (f, sess) in sessions.iter().enumerate() {
            if sess.src >= self.node_count || sess.dst >= self.node_count {
                return Err(NetError::InvalidInput(format!(
                    "session {f} endpoints ({}, {}) out of range",
                    sess.src, sess.dst
                )));
            }
            if sess.src == sess.dst {
                return Err(NetError::InvalidInput(format!(
                    "session {f} has identical source and destination {}",
                    sess.src
                )));
            }
            sess.utility.validate()?;
            if !self.reachable_from(sess.src)[sess.dst] {
                return Err(NetError::Unreachable(format!(
                    "session {f}: destination {} not reachable from source {}",
                    sess.dst, sess.src
                )));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Incidence matrices
// ---------------------------------------------------------------------------

/// Full node-arc incidence matrix: +1 at the transmitter row, −1 at the
/// receiver row of each link's column.
pub fn build_incidence(net: &Network) -> Array2<f64> {
    let mut a = Array2::zeros((net.node_count(), net.link_count()));
    for (l, link) in net.links().iter().enumerate() {
        a[(link.tx, l)] = 1.0;
        a[(link.rx, l)] = -1.0;
    }
    a
}

/// Per-session reduced incidence: the full matrix with the destination row
/// deleted, plus the source indicator vector in the same row ordering.
#[derive(Debug, Clone)]
pub struct ReducedIncidence {
    /// (N−1)×L reduced matrix.
    pub a: Array2<f64>,
    /// (N−1) source indicator: 1 at the source's reduced row.
    pub b: Array1<f64>,
    pub node_count: usize,
    pub dst: usize,
}

impl ReducedIncidence {
    /// Reduced row of node n, or `None` for the deleted destination row.
    pub fn row_of(&self, n: usize) -> Option<usize> {
        if n == self.dst {
            None
        } else if n < self.dst {
            Some(n)
        } else {
            Some(n - 1)
        }
    }

    /// Node occupying reduced row r.
    pub fn node_at(&self, r: usize) -> usize {
        if r < self.dst {
            r
        } else {
            r + 1
        }
    }
}

pub fn reduced_incidence(net: &Network, session: &Session) -> Result<ReducedIncidence, NetError> {
    net.check_sessions(std::slice::from_ref(session))?;
    let n = net.node_count();
    let dst = session.dst;
    let row_of = |node: usize| -> Option<usize> {
        if node == dst {
            None
        } else if node < dst {
            Some(node)
        } else {
            Some(node - 1)
        }
    };
    let mut a = Array2::zeros((n - 1, net.link_count()));
    for (l, link) in net.links().iter().enumerate() {
        if let Some(r) = row_of(link.tx) {
            a[(r, l)] = 1.0;
        }
        if let Some(r) = row_of(link.rx) {
            a[(r, l)] = -1.0;
        }
    }
    let mut b = Array1::zeros(n - 1);
    b[row_of(session.src).expect("src != dst was validated")] = 1.0;
    Ok(ReducedIncidence { a, b, node_count: n, dst })
}

/// Sparse column a_l^(f) of a reduced incidence matrix: at most two entries,
/// returned as (reduced row, ±1) pairs.
pub fn link_column(red: &ReducedIncidence, net: &Network, l: usize) -> Vec<(usize, f64)> {
    let link = net.link(l);
    let mut col = Vec::with_capacity(2);
    if let Some(r) = red.row_of(link.tx) {
        col.push((r, 1.0));
    }
    if let Some(r) = red.row_of(link.rx) {
        col.push((r, -1.0));
    }
    col
}
