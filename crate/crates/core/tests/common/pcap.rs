//! Byte-level capture builders.

use std::net::Ipv4Addr;

pub const LINKTYPE_ETHERNET: u32 = 1;
pub const LINKTYPE_RAW: u32 = 101;

pub const FIN: u8 = 0x01;
pub const SYN: u8 = 0x02;
pub const RST: u8 = 0x04;
pub const PSH: u8 = 0x08;
pub const ACK: u8 = 0x10;

/// One IPv4 datagram to be framed into a capture record.
#[derive(Debug, Clone, Copy)]
pub struct Segment {
    pub secs: u32,
    pub micros: u32,
    pub src: (Ipv4Addr, u16),
    pub dst: (Ipv4Addr, u16),
    pub flags: u8,
    /// IPv4 total length; the rest of the datagram is zero padding.
    pub total_length: u16,
    /// 6 for TCP, 17 for UDP.
    pub protocol: u8,
}

impl Segment {
    pub fn tcp(secs: u32, micros: u32, src: (Ipv4Addr, u16), dst: (Ipv4Addr, u16), flags: u8, total_length: u16) -> Self {
        Segment {
            secs,
            micros,
            src,
            dst,
            flags,
            total_length,
            protocol: 6,
        }
    }

    pub fn udp(secs: u32, micros: u32, src: (Ipv4Addr, u16), dst: (Ipv4Addr, u16), total_length: u16) -> Self {
        Segment {
            protocol: 17,
            flags: 0,
            ..Segment::tcp(secs, micros, src, dst, 0, total_length)
        }
    }

    pub fn ipv4(&self) -> Vec<u8> {
        let len = usize::from(self.total_length);
        assert!(len >= 40, "datagram too short for IPv4 + TCP/UDP headers");
        let mut ip = vec![0u8; len];
        ip[0] = 0x45;
        ip[2..4].copy_from_slice(&self.total_length.to_be_bytes());
        ip[6] = 0x40;
        ip[8] = 64;
        ip[9] = self.protocol;
        ip[12..16].copy_from_slice(&self.src.0.octets());
        ip[16..20].copy_from_slice(&self.dst.0.octets());
        let checksum = ipv4_checksum(&ip[..20]);
        ip[10..12].copy_from_slice(&checksum.to_be_bytes());
        ip[20..22].copy_from_slice(&self.src.1.to_be_bytes());
        ip[22..24].copy_from_slice(&self.dst.1.to_be_bytes());
        if self.protocol == 6 {
            ip[32] = 5 << 4;
            ip[33] = self.flags;
            ip[34..36].copy_from_slice(&64240u16.to_be_bytes());
        } else {
            ip[24..26].copy_from_slice(&(self.total_length - 20).to_be_bytes());
        }
        ip
    }

    pub fn ethernet(&self) -> Vec<u8> {
        let mut frame = vec![0x02, 0, 0, 0, 0, 0x02, 0x02, 0, 0, 0, 0, 0x01, 0x08, 0x00];
        frame.extend_from_slice(&self.ipv4());
        frame
    }
}

fn ipv4_checksum(header: &[u8]) -> u16 {
    let sum: u32 = header
        .chunks(2)
        .map(|w| u32::from(u16::from_be_bytes([w[0], w[1]])))
        .sum();
    let folded = (sum & 0xffff) + (sum >> 16);
    !((folded & 0xffff) + (folded >> 16)) as u16
}

/// A little-endian microsecond pcap file.
pub fn pcap(linktype: u32, records: &[(u32, u32, Vec<u8>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&0xa1b2_c3d4u32.to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&4u16.to_le_bytes());
    out.extend_from_slice(&0i32.to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    out.extend_from_slice(&65535u32.to_le_bytes());
    out.extend_from_slice(&linktype.to_le_bytes());
    for (secs, micros, data) in records {
        out.extend_from_slice(&secs.to_le_bytes());
        out.extend_from_slice(&micros.to_le_bytes());
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(data);
    }
    out
}

/// A big-endian nanosecond pcap file.
pub fn pcap_nanos_be(linktype: u32, records: &[(u32, u32, Vec<u8>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&0xa1b2_3c4du32.to_be_bytes());
    out.extend_from_slice(&2u16.to_be_bytes());
    out.extend_from_slice(&4u16.to_be_bytes());
    out.extend_from_slice(&[0; 8]);
    out.extend_from_slice(&65535u32.to_be_bytes());
    out.extend_from_slice(&linktype.to_be_bytes());
    for (secs, nanos, data) in records {
        out.extend_from_slice(&secs.to_be_bytes());
        out.extend_from_slice(&nanos.to_be_bytes());
        out.extend_from_slice(&(data.len() as u32).to_be_bytes());
        out.extend_from_slice(&(data.len() as u32).to_be_bytes());
        out.extend_from_slice(data);
    }
    out
}

fn block(block_type: u32, body: &[u8]) -> Vec<u8> {
    let padded = body.len().div_ceil(4) * 4;
    let total = (12 + padded) as u32;
    let mut out = Vec::with_capacity(total as usize);
    out.extend_from_slice(&block_type.to_le_bytes());
    out.extend_from_slice(&total.to_le_bytes());
    out.extend_from_slice(body);
    out.resize(8 + padded, 0);
    out.extend_from_slice(&total.to_le_bytes());
    out
}

/// A little-endian pcapng file with one interface at microsecond resolution.
pub fn pcapng(linktype: u16, records: &[(u32, u32, Vec<u8>)]) -> Vec<u8> {
    let mut shb = Vec::new();
    shb.extend_from_slice(&0x1a2b_3c4du32.to_le_bytes());
    shb.extend_from_slice(&1u16.to_le_bytes());
    shb.extend_from_slice(&0u16.to_le_bytes());
    shb.extend_from_slice(&(-1i64).to_le_bytes());
    let mut out = block(0x0a0d_0d0a, &shb);

    let mut idb = Vec::new();
    idb.extend_from_slice(&linktype.to_le_bytes());
    idb.extend_from_slice(&0u16.to_le_bytes());
    idb.extend_from_slice(&65535u32.to_le_bytes());
    out.extend(block(1, &idb));

    for (secs, micros, data) in records {
        let ts = u64::from(*secs) * 1_000_000 + u64::from(*micros);
        let mut epb = Vec::new();
        epb.extend_from_slice(&0u32.to_le_bytes());
        epb.extend_from_slice(&((ts >> 32) as u32).to_le_bytes());
        epb.extend_from_slice(&(ts as u32).to_le_bytes());
        epb.extend_from_slice(&(data.len() as u32).to_le_bytes());
        epb.extend_from_slice(&(data.len() as u32).to_le_bytes());
        epb.extend_from_slice(data);
        out.extend(block(6, &epb));
    }
    out
}

pub fn ethernet_records(segments: &[Segment]) -> Vec<(u32, u32, Vec<u8>)> {
    segments.iter().map(|s| (s.secs, s.micros, s.ethernet())).collect()
}

pub const GOLDEN_BASE_SECS: u32 = 1_600_000_000;

pub fn client() -> (Ipv4Addr, u16) {
    (Ipv4Addr::new(192, 168, 1, 10), 51514)
}

pub fn server() -> (Ipv4Addr, u16) {
    (Ipv4Addr::new(93, 184, 216, 34), 80)
}

/// The golden session: five TCP segments of one handshake-to-FIN exchange and
/// a DNS datagram that the reader must skip.
pub fn golden_segments() -> Vec<Segment> {
    let b = GOLDEN_BASE_SECS;
    let (c, s) = (client(), server());
    let dns = (Ipv4Addr::new(192, 168, 1, 1), 53);
    vec![
        Segment::tcp(b, 0, c, s, SYN, 60),
        Segment::tcp(b, 100_000, s, c, SYN | ACK, 60),
        Segment::tcp(b, 200_000, c, s, PSH | ACK, 100),
        Segment::udp(b, 300_000, c, dns, 72),
        Segment::tcp(b, 500_000, s, c, PSH | ACK, 1000),
        Segment::tcp(b, 600_000, c, s, FIN | ACK, 140),
    ]
}

pub fn golden_capture() -> Vec<u8> {
    pcap(LINKTYPE_ETHERNET, &ethernet_records(&golden_segments()))
}

pub const GOLDEN_FILE: &str = "golden_handshake.pcap";
