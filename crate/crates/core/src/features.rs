//! The sixteen per-flow traffic features.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::capture::nanos_to_secs;
use crate::dataset::ClassLabel;
use crate::flow::{Direction, FlowRecord};
use std::net::SocketAddr;

pub const NUM_FEATURES: usize = 16;

/// Identifier of one of the features `F1..F16`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FeatureId(u8);

const NAMES: [&str; NUM_FEATURES] = [
    "Average_packet_size",
    "Time_interval_between_packets_sent",
    "Time_interval_between_packets_received",
    "Flow_duration",
    "Ratio_of_incoming_to_outgoing_packets",
    "Ratio_of_incoming_to_outgoing_bytes",
    "Packet_size_sent",
    "Packets_sent_per_flow",
    "Packets_sent_per_second",
    "Packets_received_per_second",
    "Packets_received_per_flow",
    "Packet_size_received",
    "Bytes_sent",
    "Bytes_sent_per_second",
    "Bytes_received",
    "Bytes_received_per_second",
];

impl FeatureId {
    pub const F1: FeatureId = FeatureId(1);
    pub const F2: FeatureId = FeatureId(2);
    pub const F3: FeatureId = FeatureId(3);
    pub const F4: FeatureId = FeatureId(4);
    pub const F5: FeatureId = FeatureId(5);
    pub const F6: FeatureId = FeatureId(6);
    pub const F7: FeatureId = FeatureId(7);
    pub const F8: FeatureId = FeatureId(8);
    pub const F9: FeatureId = FeatureId(9);
    pub const F10: FeatureId = FeatureId(10);
    pub const F11: FeatureId = FeatureId(11);
    pub const F12: FeatureId = FeatureId(12);
    pub const F13: FeatureId = FeatureId(13);
    pub const F14: FeatureId = FeatureId(14);
    pub const F15: FeatureId = FeatureId(15);
    pub const F16: FeatureId = FeatureId(16);

    /// `n` in `1..=16`.
    pub fn new(n: u8) -> Option<Self> {
        (1..=NUM_FEATURES as u8).contains(&n).then_some(FeatureId(n))
    }

    pub fn all() -> impl Iterator<Item = FeatureId> + Clone {
        (1..=NUM_FEATURES as u8).map(FeatureId)
    }

    pub fn number(self) -> u8 {
        self.0
    }

    /// Zero-based position in a full feature row.
    pub fn index(self) -> usize {
        usize::from(self.0) - 1
    }

    pub fn name(self) -> &'static str {
        NAMES[self.index()]
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "F{}", self.0)
    }
}

impl fmt::Debug for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown feature {0:?}; expected F1..F16")]
pub struct UnknownFeature(pub String);

impl FromStr for FeatureId {
    type Err = UnknownFeature;

    /// Accepts `F12`, `f12` or `12`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let digits = t.strip_prefix(['F', 'f']).unwrap_or(t);
        digits
            .parse::<u8>()
            .ok()
            .and_then(FeatureId::new)
            .ok_or_else(|| UnknownFeature(s.to_string()))
    }
}

impl Serialize for FeatureId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FeatureId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parses a comma- or whitespace-separated feature list such as `F3,F12`.
pub fn parse_feature_list(s: &str) -> Result<Vec<FeatureId>, UnknownFeature> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(str::parse)
        .collect()
}

/// Formats features as `F3 F12`.
pub fn format_feature_list(features: &[FeatureId]) -> String {
    features.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

/// The sixteen feature values of one flow, indexed by [`FeatureId`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureValues(pub [f64; NUM_FEATURES]);

impl FeatureValues {
    pub fn get(&self, id: FeatureId) -> f64 {
        self.0[id.index()]
    }

    fn set(&mut self, id: FeatureId, value: f64) {
        self.0[id.index()] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Feature values of one flow together with its class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub flow_id: String,
    pub values: FeatureValues,
    pub label: ClassLabel,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Mean gap between consecutive timestamps; zero with fewer than two.
fn mean_gap(times: &[i64]) -> f64 {
    match (times.first(), times.last()) {
        (Some(first), Some(last)) if times.len() >= 2 => {
            nanos_to_secs(last - first) / (times.len() - 1) as f64
        }
        _ => 0.0,
    }
}

/// Computes `F1..F16` for a flow.
///
/// Packet bytes are network-layer lengths; "sent" is the initiator's direction.
/// Rates are zero for zero-duration flows so that every value stays finite.
pub fn compute_features(flow: &FlowRecord) -> FeatureValues {
    let mut sent_times = Vec::new();
    let mut recv_times = Vec::new();
    let mut bytes_sent = 0u64;
    let mut bytes_recv = 0u64;
    for event in &flow.events {
        let t = event.timestamp.as_nanos();
        match event.direction {
            Direction::Sent => {
                sent_times.push(t);
                bytes_sent += u64::from(event.ip_total_length);
            }
            Direction::Received => {
                recv_times.push(t);
                bytes_recv += u64::from(event.ip_total_length);
            }
        }
    }
    let duration = match (flow.events.first(), flow.events.last()) {
        (Some(first), Some(last)) => nanos_to_secs(last.timestamp.as_nanos() - first.timestamp.as_nanos()),
        _ => 0.0,
    };

    let n_sent = sent_times.len() as f64;
    let n_recv = recv_times.len() as f64;
    let bytes_sent = bytes_sent as f64;
    let bytes_recv = bytes_recv as f64;

    let mut v = FeatureValues::default();
    v.set(FeatureId::F1, ratio(bytes_sent + bytes_recv, n_sent + n_recv));
    v.set(FeatureId::F2, mean_gap(&sent_times));
    v.set(FeatureId::F3, mean_gap(&recv_times));
    v.set(FeatureId::F4, duration);
    v.set(FeatureId::F5, ratio(n_recv, n_sent));
    v.set(FeatureId::F6, ratio(bytes_recv, bytes_sent));
    v.set(FeatureId::F7, ratio(bytes_sent, n_sent));
    v.set(FeatureId::F8, n_sent);
    v.set(FeatureId::F9, ratio(n_sent, duration));
    v.set(FeatureId::F10, ratio(n_recv, duration));
    v.set(FeatureId::F11, n_recv);
    v.set(FeatureId::F12, ratio(bytes_recv, n_recv));
    v.set(FeatureId::F13, bytes_sent);
    v.set(FeatureId::F14, ratio(bytes_sent, duration));
    v.set(FeatureId::F15, bytes_recv);
    v.set(FeatureId::F16, ratio(bytes_recv, duration));
    v
}

/// `initiator>responder@start`, e.g. `10.0.0.1:40000>10.0.0.2:80@1600000000.000000000`.
pub fn flow_id(flow: &FlowRecord) -> String {
    let (a, b) = flow.key.endpoints();
    let responder = if a == flow.initiator { b } else { a };
    let start = flow.first_timestamp().as_nanos();
    format!(
        "{}>{}@{}.{:09}",
        SocketAddr::new(flow.initiator.addr, flow.initiator.port),
        SocketAddr::new(responder.addr, responder.port),
        start.div_euclid(1_000_000_000),
        start.rem_euclid(1_000_000_000)
    )
}

/// Feature vectors of `flows`, all labelled `label`.
pub fn flow_vectors(flows: &[FlowRecord], label: ClassLabel) -> Vec<FeatureVector> {
    flows
        .iter()
        .map(|flow| FeatureVector {
            flow_id: flow_id(flow),
            values: compute_features(flow),
            label,
        })
        .collect()
}
