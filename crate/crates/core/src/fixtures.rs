//! Small reference instances shared by the test suites, the validation
//! command, and documentation examples.

use crate::net::{Link, Network, Session, UtilitySpec};

/// The 5-node, 6-link network used throughout the incidence and structure
/// tests, with two sessions 0→2 and 0→4.
///
/// Links (tx → rx): 0→3, 0→1, 3→4, 1→4, 1→2, 4→2, capacities 1.
///
/// Note that session 1 (0→4) has no strictly interior point on this topology:
/// node 2 is a sink off every 0→4 route, so links 4 (1→2) and 5 (4→2) can
/// only carry zero session-1 flow in any balanced solution, while the barrier
/// needs every flow strictly positive. Tests use session 0 for feasible runs
/// and session 1 to exercise the interiority diagnostics.
pub fn five_node() -> (Network, Vec<Session>) {
    let links = vec![
        Link { tx: 0, rx: 3, capacity: 1.0 },
        Link { tx: 0, rx: 1, capacity: 1.0 },
        Link { tx: 3, rx: 4, capacity: 1.0 },
        Link { tx: 1, rx: 4, capacity: 1.0 },
        Link { tx: 1, rx: 2, capacity: 1.0 },
        Link { tx: 4, rx: 2, capacity: 1.0 },
    ];
    let net = Network::new(5, links).expect("fixture is valid");
    let sessions = vec![
        Session { src: 0, dst: 2, utility: UtilitySpec::log() },
        Session { src: 0, dst: 4, utility: UtilitySpec::log() },
    ];
    (net, sessions)
}

/// A 5-node bidirected ring with unit capacities and two sessions (3→0 and
/// 4→2). Every link lies on a directed 2-cycle, so a strictly interior point
/// exists for any session pair; this is the standard end-to-end instance.
pub fn ring_five() -> (Network, Vec<Session>) {
    let mut links = Vec::new();
    for i in 0..5 {
        let j = (i + 1) % 5;
        links.push(Link { tx: i, rx: j, capacity: 1.0 });
        links.push(Link { tx: j, rx: i, capacity: 1.0 });
    }
    let net = Network::new(5, links).expect("fixture is valid");
    let sessions = vec![
        Session { src: 3, dst: 0, utility: UtilitySpec::log() },
        Session { src: 4, dst: 2, utility: UtilitySpec::log() },
    ];
    (net, sessions)
}

/// The smallest instance: two nodes, one link, one session across it.
pub fn two_node(capacity: f64) -> (Network, Vec<Session>) {
    let net = Network::new(2, vec![Link { tx: 0, rx: 1, capacity }]).expect("fixture is valid");
    let sessions = vec![Session { src: 0, dst: 1, utility: UtilitySpec::log() }];
    (net, sessions)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_construct_and_validate() {
        let (net, sessions) = five_node();
        net.check_sessions(&sessions).unwrap();
        assert_eq!(net.node_count(), 5);
        assert_eq!(net.link_count(), 6);
        let (net, sessions) = ring_five();
        net.check_sessions(&sessions).unwrap();
        assert_eq!(net.link_count(), 10);
        let (net, sessions) = two_node(2.0);
        net.check_sessions(&sessions).unwrap();
    }
}
