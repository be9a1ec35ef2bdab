use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use super::{RawPacket, TcpFlags, Timestamp};

const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_IPV6: u16 = 0x86dd;
const ETHERTYPE_VLAN: [u16; 3] = [0x8100, 0x88a8, 0x9100];
const IPPROTO_TCP: u8 = 6;
const TCP_MIN_HEADER: usize = 20;

/// Link-layer header type as recorded in the capture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LinkType(pub u32);

impl LinkType {
    pub const NULL: LinkType = LinkType(0);
    pub const ETHERNET: LinkType = LinkType(1);
    /// DLT_RAW as written by some BSDs.
    pub const RAW_BSD: LinkType = LinkType(12);
    pub const RAW_OPENBSD: LinkType = LinkType(14);
    pub const RAW: LinkType = LinkType(101);
    pub const LINUX_SLL: LinkType = LinkType(113);
    pub const IPV4: LinkType = LinkType(228);
    pub const IPV6: LinkType = LinkType(229);
    pub const LINUX_SLL2: LinkType = LinkType(276);

    pub fn is_supported(self) -> bool {
        matches!(self.0, 0 | 1 | 12 | 14 | 101 | 113 | 228 | 229 | 276)
    }
}

/// Outcome of decoding one captured frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    Tcp(RawPacket),
    NonTcp,
    /// A non-first IP fragment; it carries no TCP header.
    Fragment,
    Malformed(&'static str),
}

/// Decodes a captured frame down to its TCP header.
pub fn decode_frame(linktype: LinkType, frame: &[u8], timestamp: Timestamp) -> Decoded {
    let network = match linktype {
        LinkType::ETHERNET => ethernet(frame),
        LinkType::LINUX_SLL => {
            if frame.len() < 16 {
                return Decoded::Malformed("short SLL header");
            }
            by_ethertype(be16(frame, 14), &frame[16..])
        }
        LinkType::LINUX_SLL2 => {
            if frame.len() < 20 {
                return Decoded::Malformed("short SLL2 header");
            }
            by_ethertype(be16(frame, 0), &frame[20..])
        }
        LinkType::NULL => {
            if frame.len() < 4 {
                return Decoded::Malformed("short loopback header");
            }
            // Address family is in the writer's byte order; both orders are tried.
            let family = u32::from_le_bytes([frame[0], frame[1], frame[2], frame[3]]);
            let family = if family > 0xffff { family.swap_bytes() } else { family };
            match family {
                2 => Network::V4(&frame[4..]),
                24 | 28 | 30 => Network::V6(&frame[4..]),
                _ => Network::Other,
            }
        }
        LinkType::RAW | LinkType::RAW_BSD | LinkType::RAW_OPENBSD => by_version(frame),
        LinkType::IPV4 => Network::V4(frame),
        LinkType::IPV6 => Network::V6(frame),
        _ => Network::Other,
    };
    match network {
        Network::V4(bytes) => ipv4(bytes, timestamp),
        Network::V6(bytes) => ipv6(bytes, timestamp),
        Network::Other => Decoded::NonTcp,
        Network::Bad(reason) => Decoded::Malformed(reason),
    }
}

enum Network<'a> {
    V4(&'a [u8]),
    V6(&'a [u8]),
    Other,
    Bad(&'static str),
}

fn be16(bytes: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([bytes[at], bytes[at + 1]])
}

fn ethernet(frame: &[u8]) -> Network<'_> {
    if frame.len() < 14 {
        return Network::Bad("short ethernet header");
    }
    let mut ethertype = be16(frame, 12);
    let mut offset = 14;
    while ETHERTYPE_VLAN.contains(&ethertype) {
        if frame.len() < offset + 4 {
            return Network::Bad("short VLAN tag");
        }
        ethertype = be16(frame, offset + 2);
        offset += 4;
    }
    by_ethertype(ethertype, &frame[offset..])
}

fn by_ethertype(ethertype: u16, payload: &[u8]) -> Network<'_> {
    match ethertype {
        ETHERTYPE_IPV4 => Network::V4(payload),
        ETHERTYPE_IPV6 => Network::V6(payload),
        _ => Network::Other,
    }
}

fn by_version(payload: &[u8]) -> Network<'_> {
    match payload.first().map(|b| b >> 4) {
        Some(4) => Network::V4(payload),
        Some(6) => Network::V6(payload),
        Some(_) => Network::Other,
        None => Network::Bad("empty frame"),
    }
}

fn ipv4(bytes: &[u8], timestamp: Timestamp) -> Decoded {
    if bytes.len() < 20 {
        return Decoded::Malformed("short IPv4 header");
    }
    if bytes[0] >> 4 != 4 {
        return Decoded::Malformed("IPv4 version mismatch");
    }
    let header_len = usize::from(bytes[0] & 0x0f) * 4;
    if header_len < 20 || bytes.len() < header_len {
        return Decoded::Malformed("bad IPv4 header length");
    }
    if bytes[9] != IPPROTO_TCP {
        return Decoded::NonTcp;
    }
    let fragment_offset = be16(bytes, 6) & 0x1fff;
    if fragment_offset != 0 {
        return Decoded::Fragment;
    }
    let mut total_length = u32::from(be16(bytes, 2));
    if total_length == 0 {
        // Segmentation offload leaves the field zeroed; fall back to what was captured.
        total_length = bytes.len() as u32;
    }
    if (total_length as usize) < header_len + TCP_MIN_HEADER {
        return Decoded::Malformed("IPv4 total length too small for TCP");
    }
    let src = Ipv4Addr::new(bytes[12], bytes[13], bytes[14], bytes[15]);
    let dst = Ipv4Addr::new(bytes[16], bytes[17], bytes[18], bytes[19]);
    tcp(
        &bytes[header_len..],
        IpAddr::V4(src),
        IpAddr::V4(dst),
        total_length,
        header_len as u32,
        timestamp,
    )
}

fn ipv6(bytes: &[u8], timestamp: Timestamp) -> Decoded {
    if bytes.len() < 40 {
        return Decoded::Malformed("short IPv6 header");
    }
    if bytes[0] >> 4 != 6 {
        return Decoded::Malformed("IPv6 version mismatch");
    }
    let payload_length = u32::from(be16(bytes, 4));
    let total_length = if payload_length == 0 {
        // Jumbogram or offload: use the captured size.
        bytes.len() as u32
    } else {
        40 + payload_length
    };
    let mut next = bytes[6];
    let mut offset = 40usize;
    // Walk extension headers only as far as needed to find TCP.
    loop {
        match next {
            IPPROTO_TCP => break,
            0 | 43 | 60 => {
                if bytes.len() < offset + 8 {
                    return Decoded::Malformed("short IPv6 extension header");
                }
                next = bytes[offset];
                offset += (usize::from(bytes[offset + 1]) + 1) * 8;
            }
            44 => {
                if bytes.len() < offset + 8 {
                    return Decoded::Malformed("short IPv6 fragment header");
                }
                if be16(bytes, offset + 2) >> 3 != 0 {
                    return Decoded::Fragment;
                }
                next = bytes[offset];
                offset += 8;
            }
            51 => {
                if bytes.len() < offset + 8 {
                    return Decoded::Malformed("short IPv6 authentication header");
                }
                next = bytes[offset];
                offset += (usize::from(bytes[offset + 1]) + 2) * 4;
            }
            _ => return Decoded::NonTcp,
        }
    }
    if offset > bytes.len() || (total_length as usize) < offset + TCP_MIN_HEADER {
        return Decoded::Malformed("IPv6 length too small for TCP");
    }
    let mut src = [0u8; 16];
    let mut dst = [0u8; 16];
    src.copy_from_slice(&bytes[8..24]);
    dst.copy_from_slice(&bytes[24..40]);
    tcp(
        &bytes[offset..],
        IpAddr::V6(Ipv6Addr::from(src)),
        IpAddr::V6(Ipv6Addr::from(dst)),
        total_length,
        offset as u32,
        timestamp,
    )
}

fn tcp(
    segment: &[u8],
    src_addr: IpAddr,
    dst_addr: IpAddr,
    ip_total_length: u32,
    ip_header_length: u32,
    timestamp: Timestamp,
) -> Decoded {
    // Ports, offset and flags live in the first 14 bytes; snaplen may cut the rest.
    if segment.len() < 14 {
        return Decoded::Malformed("short TCP header");
    }
    let data_offset = u32::from(segment[12] >> 4) * 4;
    if data_offset < TCP_MIN_HEADER as u32 {
        return Decoded::Malformed("bad TCP data offset");
    }
    Decoded::Tcp(RawPacket {
        timestamp,
        src_addr,
        dst_addr,
        src_port: be16(segment, 0),
        dst_port: be16(segment, 2),
        tcp_flags: TcpFlags(segment[13] & 0x3f),
        ip_total_length,
        payload_length: ip_total_length.saturating_sub(ip_header_length + data_offset),
    })
}
