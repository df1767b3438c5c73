//! Flat-vector layouts shared by every dense code path.
//!
//! Primal vectors use the link-major ordering
//! `[s_1 … s_F | x_1^(1..F) | … | x_L^(1..F)]` — the ordering under which the
//! objective's Hessian is block diagonal (one scalar per source, one F×F block
//! per link). Dual vectors stack per-session blocks `[w^(1) | … | w^(F)]`,
//! each of length N−1: a session's destination node carries no flow-balance
//! constraint, so its row is deleted and its multiplier is fixed at zero.

use ndarray::{Array1, Array2};

/// Index arithmetic for the primal ordering. All offsets into flat primal
/// vectors go through this type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrimalLayout {
    pub link_count: usize,
    pub session_count: usize,
}

impl PrimalLayout {
    pub fn new(link_count: usize, session_count: usize) -> Self {
        PrimalLayout { link_count, session_count }
    }

    /// Total number of primal variables, F + L·F.
    pub fn dim(&self) -> usize {
        self.session_count + self.link_count * self.session_count
    }

    /// Position of the session rate s_f.
    pub fn s(&self, f: usize) -> usize {
        debug_assert!(f < self.session_count);
        f
    }

    /// Position of the flow x_l^(f).
    pub fn x(&self, l: usize, f: usize) -> usize {
        debug_assert!(l < self.link_count && f < self.session_count);
        self.session_count + l * self.session_count + f
    }
}

/// Index arithmetic for stacked reduced dual vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DualLayout {
    pub node_count: usize,
    /// Destination node of each session, in session order.
    pub dst: Vec<usize>,
}

impl DualLayout {
    pub fn new(node_count: usize, dst: Vec<usize>) -> Self {
        debug_assert!(dst.iter().all(|&d| d < node_count));
        DualLayout { node_count, dst }
    }

    pub fn session_count(&self) -> usize {
        self.dst.len()
    }

    pub fn rows_per_session(&self) -> usize {
        self.node_count - 1
    }

    /// Total length of the stacked reduced vector, (N−1)·F.
    pub fn dim(&self) -> usize {
        self.rows_per_session() * self.session_count()
    }

    /// Row of node `n` inside session `f`'s reduced block, or `None` at the
    /// session's destination (whose row is deleted).
    pub fn reduced_row(&self, f: usize, n: usize) -> Option<usize> {
        let d = self.dst[f];
        if n == d {
            None
        } else if n < d {
            Some(n)
        } else {
            Some(n - 1)
        }
    }

    /// Position of (node `n`, session `f`) in the stacked vector, or `None`
    /// at the destination.
    pub fn index(&self, f: usize, n: usize) -> Option<usize> {
        self.reduced_row(f, n).map(|r| f * self.rows_per_session() + r)
    }

    /// Node whose reduced row is `r` in session `f`'s block.
    pub fn node_at(&self, f: usize, r: usize) -> usize {
        debug_assert!(r < self.rows_per_session());
        if r < self.dst[f] {
            r
        } else {
            r + 1
        }
    }

    /// Flatten an N×F per-node array into the stacked reduced vector.
    /// Destination entries are dropped (they are identically zero).
    pub fn flatten(&self, w: &Array2<f64>) -> Array1<f64> {
        debug_assert_eq!(w.nrows(), self.node_count);
        debug_assert_eq!(w.ncols(), self.session_count());
        let mut v = Array1::zeros(self.dim());
        for f in 0..self.session_count() {
            for n in 0..self.node_count {
                if let Some(i) = self.index(f, n) {
                    v[i] = w[(n, f)];
                }
            }
        }
        v
    }

    /// Expand a stacked reduced vector into an N×F array with explicit zeros
    /// at each session's destination.
    pub fn expand(&self, v: &Array1<f64>) -> Array2<f64> {
        debug_assert_eq!(v.len(), self.dim());
        let mut w = Array2::zeros((self.node_count, self.session_count()));
        for f in 0..self.session_count() {
            for n in 0..self.node_count {
                if let Some(i) = self.index(f, n) {
                    w[(n, f)] = v[i];
                }
            }
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primal_offsets_cover_the_vector_exactly_once() {
        let lay = PrimalLayout::new(3, 2);
        assert_eq!(lay.dim(), 2 + 6);
        let mut seen = vec![false; lay.dim()];
        for f in 0..2 {
            seen[lay.s(f)] = true;
        }
        for l in 0..3 {
            for f in 0..2 {
                seen[lay.x(l, f)] = true;
            }
        }
        assert!(seen.iter().all(|&b| b));
        // Link-major: x_1^(1) directly follows x_0^(last).
        assert_eq!(lay.x(1, 0), lay.x(0, 1) + 1);
    }

    #[test]
    fn reduced_rows_skip_the_destination() {
        let lay = DualLayout::new(5, vec![2, 4]);
        assert_eq!(lay.reduced_row(0, 1), Some(1));
        assert_eq!(lay.reduced_row(0, 2), None);
        assert_eq!(lay.reduced_row(0, 3), Some(2));
        assert_eq!(lay.index(1, 0), Some(4));
        assert_eq!(lay.index(1, 4), None);
        for f in 0..2 {
            for r in 0..4 {
                let n = lay.node_at(f, r);
                assert_eq!(lay.reduced_row(f, n), Some(r));
            }
        }
    }

    #[test]
    fn flatten_then_expand_round_trips() {
        let lay = DualLayout::new(4, vec![3, 0]);
        let mut w = Array2::zeros((4, 2));
        for n in 0..4 {
            for f in 0..2 {
                w[(n, f)] = (n * 2 + f) as f64 + 0.5;
            }
        }
        // Destination entries must be zero for a round trip.
        w[(3, 0)] = 0.0;
        w[(0, 1)] = 0.0;
        let v = lay.flatten(&w);
        assert_eq!(v.len(), 6);
        let back = lay.expand(&v);
        assert_eq!(back, w);
    }
}
