//! Bidirectional TCP flow assembly.

use std::collections::HashMap;
use std::net::IpAddr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::capture::{RawPacket, TcpFlags, Timestamp};

/// Default idle gap after which a flow is expired.
pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::from_secs(600);

/// One side of a TCP conversation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Endpoint {
    pub addr: IpAddr,
    pub port: u16,
}

/// Direction-insensitive identity of a TCP conversation.
///
/// The two endpoints are stored in ascending order so that a packet and its
/// reply map to the same key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowKey {
    low: Endpoint,
    high: Endpoint,
}

impl FlowKey {
    pub fn new(a: Endpoint, b: Endpoint) -> Self {
        if a <= b {
            FlowKey { low: a, high: b }
        } else {
            FlowKey { low: b, high: a }
        }
    }

    pub fn of(packet: &RawPacket) -> Self {
        let (src, dst) = endpoints(packet);
        FlowKey::new(src, dst)
    }

    pub fn endpoints(&self) -> (Endpoint, Endpoint) {
        (self.low, self.high)
    }
}

fn endpoints(packet: &RawPacket) -> (Endpoint, Endpoint) {
    (
        Endpoint {
            addr: packet.src_addr,
            port: packet.src_port,
        },
        Endpoint {
            addr: packet.dst_addr,
            port: packet.dst_port,
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// Initiator to responder.
    Sent,
    /// Responder to initiator.
    Received,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowEvent {
    pub timestamp: Timestamp,
    pub direction: Direction,
    pub ip_total_length: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpenReason {
    Syn,
    FirstSeen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CloseReason {
    FinHandshake,
    Rst,
    IdleTimeout,
    CaptureEnd,
}

/// An assembled TCP conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub key: FlowKey,
    pub initiator: Endpoint,
    /// Ordered by timestamp; ties keep capture order.
    pub events: Vec<FlowEvent>,
    pub open_reason: OpenReason,
    pub close_reason: CloseReason,
}

impl FlowRecord {
    pub fn first_timestamp(&self) -> Timestamp {
        self.events[0].timestamp
    }
}

/// Flow expiry policy. The idle timeout is always strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdleTimeout(Duration);

impl IdleTimeout {
    pub fn new(timeout: Duration) -> Option<Self> {
        (!timeout.is_zero()).then_some(IdleTimeout(timeout))
    }

    pub fn from_secs_f64(secs: f64) -> Option<Self> {
        if secs.is_finite() && secs > 0.0 {
            Duration::try_from_secs_f64(secs).ok().and_then(Self::new)
        } else {
            None
        }
    }

    fn as_nanos(self) -> i64 {
        i64::try_from(self.0.as_nanos()).unwrap_or(i64::MAX)
    }
}

impl Default for IdleTimeout {
    fn default() -> Self {
        IdleTimeout(DEFAULT_IDLE_TIMEOUT)
    }
}

struct Building {
    seq: usize,
    key: FlowKey,
    first_sender: Endpoint,
    syn_sender: Option<Endpoint>,
    open_reason: OpenReason,
    /// (timestamp, sender, ip_total_length)
    events: Vec<(Timestamp, Endpoint, u32)>,
    fin_low: bool,
    fin_high: bool,
    last: Timestamp,
}

impl Building {
    fn open(seq: usize, key: FlowKey, packet: &RawPacket) -> Self {
        let (src, _) = endpoints(packet);
        let syn = packet.tcp_flags.is_syn_only();
        Building {
            seq,
            key,
            first_sender: src,
            syn_sender: syn.then_some(src),
            open_reason: if syn { OpenReason::Syn } else { OpenReason::FirstSeen },
            events: Vec::new(),
            fin_low: false,
            fin_high: false,
            last: packet.timestamp,
        }
    }

    fn push(&mut self, packet: &RawPacket) {
        let (src, _) = endpoints(packet);
        if packet.tcp_flags.is_syn_only() && self.syn_sender.is_none() {
            self.syn_sender = Some(src);
        }
        if packet.tcp_flags.contains(TcpFlags::FIN) {
            if src == self.key.low {
                self.fin_low = true;
            } else {
                self.fin_high = true;
            }
        }
        self.events.push((packet.timestamp, src, packet.ip_total_length));
        self.last = packet.timestamp;
    }

    fn fin_complete(&self) -> bool {
        self.fin_low && self.fin_high
    }

    fn finish(self, reason: CloseReason) -> (usize, FlowRecord) {
        let close_reason = if self.fin_complete() {
            CloseReason::FinHandshake
        } else {
            reason
        };
        let initiator = self.syn_sender.unwrap_or(self.first_sender);
        let events = self
            .events
            .into_iter()
            .map(|(timestamp, sender, ip_total_length)| FlowEvent {
                timestamp,
                direction: if sender == initiator {
                    Direction::Sent
                } else {
                    Direction::Received
                },
                ip_total_length,
            })
            .collect();
        (
            self.seq,
            FlowRecord {
                key: self.key,
                initiator,
                events,
                open_reason: self.open_reason,
                close_reason,
            },
        )
    }
}

/// Groups packets into flows.
///
/// Packets are stably sorted by timestamp first. A flow ends when both sides
/// have sent FIN (it lingers to absorb the final ACKs until a new SYN or the
/// idle timeout), when a RST is seen, when the gap to the previous packet
/// exceeds `idle_timeout`, or at the end of the input. Flows are returned in
/// the order they were opened.
pub fn assemble_flows<I>(packets: I, idle_timeout: IdleTimeout) -> Vec<FlowRecord>
where
    I: IntoIterator<Item = RawPacket>,
{
    let mut packets: Vec<RawPacket> = packets.into_iter().collect();
    packets.sort_by_key(|p| p.timestamp);

    let timeout = idle_timeout.as_nanos();
    let mut active: HashMap<FlowKey, Building> = HashMap::new();
    let mut finished: Vec<(usize, FlowRecord)> = Vec::new();
    let mut next_seq = 0usize;

    for packet in &packets {
        let key = FlowKey::of(packet);
        let expired = match active.get(&key) {
            Some(flow) if packet.timestamp.as_nanos().saturating_sub(flow.last.as_nanos()) > timeout => {
                Some(CloseReason::IdleTimeout)
            }
            Some(flow) if flow.fin_complete() && packet.tcp_flags.is_syn_only() => Some(CloseReason::FinHandshake),
            _ => None,
        };
        if let Some(reason) = expired {
            let flow = active.remove(&key).expect("flow present");
            finished.push(flow.finish(reason));
        }
        let flow = active.entry(key).or_insert_with(|| {
            next_seq += 1;
            Building::open(next_seq - 1, key, packet)
        });
        flow.push(packet);
        if packet.tcp_flags.contains(TcpFlags::RST) {
            let flow = active.remove(&key).expect("flow present");
            finished.push(flow.finish(CloseReason::Rst));
        }
    }
    finished.extend(active.into_values().map(|flow| flow.finish(CloseReason::CaptureEnd)));
    finished.sort_by_key(|(seq, _)| *seq);
    finished.into_iter().map(|(_, flow)| flow).collect()
}
