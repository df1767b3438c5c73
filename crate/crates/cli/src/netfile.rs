//! On-disk network instance format (TOML, schema `mrfc-net-v1`).
//!
//! The file carries exactly what the solver needs: a node count, directed
//! capacitated links, and sessions with their utility family. Parsing is
//! strict — unknown keys and unknown schema strings are rejected so a typo
//! cannot silently change an experiment.

use mrfc::net::{Link, Network, Session, UtilitySpec};
use serde::{Deserialize, Serialize};

pub const NET_SCHEMA: &str = "mrfc-net-v1";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetFile {
    pub schema: String,
    pub node_count: usize,
    #[serde(rename = "link", default)]
    pub links: Vec<LinkRow>,
    #[serde(rename = "session", default)]
    pub sessions: Vec<SessionRow>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkRow {
    pub tx: usize,
    pub rx: usize,
    pub capacity: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRow {
    pub src: usize,
    pub dst: usize,
    pub utility: UtilityRow,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityRow {
    pub family: String,
    pub weight: f64,
}

/// Serializes an instance; the output is a deterministic function of the
/// instance (fixed key order, round-trip float formatting).
pub fn to_toml(net: &Network, sessions: &[Session]) -> String {
    let file = NetFile {
        schema: NET_SCHEMA.to_string(),
        node_count: net.node_count(),
        links: net
            .links()
            .iter()
            .map(|l| LinkRow { tx: l.tx, rx: l.rx, capacity: l.capacity })
            .collect(),
        sessions: sessions
            .iter()
            .map(|s| {
                let UtilitySpec::WeightedLog { weight } = s.utility;
                SessionRow {
                    src: s.src,
                    dst: s.dst,
                    utility: UtilityRow { family: "weighted-log".to_string(), weight },
                }
            })
            .collect(),
    };
    toml::to_string(&file).expect("network serialization cannot fail")
}

/// Parses and fully validates an instance file: schema string, link and
/// session indices, capacities, connectivity, and utility weights all checked
/// before anything is returned.
pub fn parse(text: &str) -> Result<(Network, Vec<Session>), String> {
    let file: NetFile = toml::from_str(text).map_err(|e| format!("network file: {e}"))?;
    if file.schema != NET_SCHEMA {
        return Err(format!(
            "network file: unsupported schema {:?} (expected {NET_SCHEMA:?})",
            file.schema
        ));
    }
    let links = file
        .links
        .iter()
        .map(|l| Link { tx: l.tx, rx: l.rx, capacity: l.capacity })
        .collect();
    let net = Network::new(file.node_count, links).map_err(|e| e.to_string())?;
    let mut sessions = Vec::with_capacity(file.sessions.len());
    for (i, row) in file.sessions.iter().enumerate() {
        let utility = match row.utility.family.as_str() {
            "weighted-log" => UtilitySpec::WeightedLog { weight: row.utility.weight },
            other => {
                return Err(format!(
                    "network file: session {i} has unknown utility family {other:?} \
                     (supported: \"weighted-log\")"
                ))
            }
        };
        utility.validate().map_err(|e| format!("network file: session {i}: {e}"))?;
        sessions.push(Session { src: row.src, dst: row.dst, utility });
    }
    if sessions.is_empty() {
        return Err("network file: at least one session is required".to_string());
    }
    net.check_sessions(&sessions).map_err(|e| e.to_string())?;
    Ok((net, sessions))
}

#[cfg(test)]
mod tests {
    use super::*;
    use mrfc::gen::{self, GenParams};

    #[test]
    fn round_trips_a_generated_instance() {
        let (net, sessions) = gen::generate(&GenParams::default(), 7).unwrap();
        let text = to_toml(&net, &sessions);
        let (net2, sessions2) = parse(&text).unwrap();
        assert_eq!(net.links(), net2.links());
        assert_eq!(sessions, sessions2);
        assert_eq!(text, to_toml(&net2, &sessions2));
    }

    #[test]
    fn rejects_wrong_schema_and_unknown_keys() {
        let (net, sessions) = gen::generate(&GenParams::default(), 7).unwrap();
        let text = to_toml(&net, &sessions);
        let wrong = text.replacen(NET_SCHEMA, "mrfc-net-v0", 1);
        assert!(parse(&wrong).unwrap_err().contains("unsupported schema"));
        let extra = format!("{text}\nmystery = 1\n");
        assert!(parse(&extra).is_err());
    }

    #[test]
    fn rejects_zero_capacity() {
        let text = r#"
schema = "mrfc-net-v1"
node_count = 2

[[link]]
tx = 0
rx = 1
capacity = 0.0

[[link]]
tx = 1
rx = 0
capacity = 1.0

[[session]]
src = 0
dst = 1

[session.utility]
family = "weighted-log"
weight = 1.0
"#;
        let err = parse(text).unwrap_err();
        assert!(err.contains("capacity"), "{err}");
    }
}
