//! Packet capture ingestion.
//!
//! [`CaptureReader`] walks a classic pcap or pcapng byte stream and yields one
//! [`RawPacket`] per TCP segment carried over IPv4 or IPv6. Everything else is
//! skipped and tallied in [`ReadStats`].

mod decode;
mod file;

use std::fmt;
use std::fs::File;
use std::io::{BufReader, Read};
use std::net::IpAddr;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use decode::{decode_frame, Decoded, LinkType};
pub use file::CaptureReader;

/// Errors raised while reading a capture.
#[derive(Debug, thiserror::Error)]
pub enum CaptureError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed capture at byte offset {offset}: {reason}")]
    Malformed { offset: u64, reason: String },
    #[error("unsupported link type {linktype} at byte offset {offset}")]
    UnsupportedLinkType { linktype: u32, offset: u64 },
}

/// Capture timestamp in nanoseconds since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Timestamp(pub i64);

impl Timestamp {
    pub fn from_secs_micros(secs: i64, micros: i64) -> Self {
        Timestamp(secs * 1_000_000_000 + micros * 1_000)
    }

    pub fn as_nanos(self) -> i64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        nanos_to_secs(self.0)
    }
}

/// Converts a nanosecond count to seconds.
pub fn nanos_to_secs(nanos: i64) -> f64 {
    nanos as f64 / 1e9
}

/// TCP control bits.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct TcpFlags(pub u8);

impl TcpFlags {
    pub const FIN: TcpFlags = TcpFlags(0x01);
    pub const SYN: TcpFlags = TcpFlags(0x02);
    pub const RST: TcpFlags = TcpFlags(0x04);
    pub const PSH: TcpFlags = TcpFlags(0x08);
    pub const ACK: TcpFlags = TcpFlags(0x10);
    pub const URG: TcpFlags = TcpFlags(0x20);

    pub fn contains(self, other: TcpFlags) -> bool {
        self.0 & other.0 == other.0
    }

    /// A connection request: SYN without ACK.
    pub fn is_syn_only(self) -> bool {
        self.contains(Self::SYN) && !self.contains(Self::ACK)
    }
}

impl std::ops::BitOr for TcpFlags {
    type Output = TcpFlags;
    fn bitor(self, rhs: TcpFlags) -> TcpFlags {
        TcpFlags(self.0 | rhs.0)
    }
}

impl fmt::Debug for TcpFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const NAMES: [(TcpFlags, &str); 6] = [
            (TcpFlags::SYN, "SYN"),
            (TcpFlags::ACK, "ACK"),
            (TcpFlags::FIN, "FIN"),
            (TcpFlags::RST, "RST"),
            (TcpFlags::PSH, "PSH"),
            (TcpFlags::URG, "URG"),
        ];
        let set: Vec<&str> = NAMES
            .iter()
            .filter(|(flag, _)| self.contains(*flag))
            .map(|(_, name)| *name)
            .collect();
        write!(f, "[{}]", set.join("|"))
    }
}

/// One TCP segment observed in a capture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawPacket {
    pub timestamp: Timestamp,
    pub src_addr: IpAddr,
    pub dst_addr: IpAddr,
    pub src_port: u16,
    pub dst_port: u16,
    pub tcp_flags: TcpFlags,
    /// Network-layer datagram length (IPv4 total length, or 40 + IPv6 payload length).
    pub ip_total_length: u32,
    pub payload_length: u32,
}

/// Counters accumulated while reading a capture.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadStats {
    /// Packet records seen in the file.
    pub records: u64,
    /// Records yielded as TCP packets.
    pub tcp: u64,
    /// Records skipped for any reason (sum of the three counters below).
    pub skipped: u64,
    pub non_tcp: u64,
    /// IPv4/IPv6 fragments other than the first.
    pub fragments: u64,
    /// Records whose headers could not be decoded.
    pub malformed: u64,
    /// Set when the final record was cut short.
    pub truncated: bool,
}

impl ReadStats {
    fn note(&mut self, decoded: &Decoded) {
        self.records += 1;
        match decoded {
            Decoded::Tcp(_) => self.tcp += 1,
            Decoded::NonTcp => {
                self.skipped += 1;
                self.non_tcp += 1;
            }
            Decoded::Fragment => {
                self.skipped += 1;
                self.fragments += 1;
            }
            Decoded::Malformed(_) => {
                self.skipped += 1;
                self.malformed += 1;
            }
        }
    }
}

/// All TCP packets of one capture, in file order, plus read counters.
#[derive(Debug, Clone, Default)]
pub struct Capture {
    pub packets: Vec<RawPacket>,
    pub stats: ReadStats,
}

/// Parses a complete capture held in memory.
pub fn parse_capture(bytes: &[u8]) -> Result<Capture, CaptureError> {
    collect(CaptureReader::new(bytes)?)
}

/// Reads every TCP packet of the capture at `path`.
pub fn read_pcap(path: impl AsRef<Path>) -> Result<Capture, CaptureError> {
    let file = File::open(path)?;
    collect(CaptureReader::new(BufReader::new(file))?)
}

fn collect<R: Read>(mut reader: CaptureReader<R>) -> Result<Capture, CaptureError> {
    let mut packets = Vec::new();
    for packet in reader.by_ref() {
        packets.push(packet?);
    }
    Ok(Capture {
        packets,
        stats: reader.stats(),
    })
}
