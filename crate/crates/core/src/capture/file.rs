//! Classic pcap and pcapng container parsing.

use std::io::{ErrorKind, Read};

use super::decode::{decode_frame, Decoded, LinkType};
use super::{CaptureError, RawPacket, ReadStats, Timestamp};

const PCAPNG_SHB: [u8; 4] = [0x0a, 0x0d, 0x0d, 0x0a];
const PCAPNG_BOM_LE: [u8; 4] = [0x4d, 0x3c, 0x2b, 0x1a];
const PCAPNG_BOM_BE: [u8; 4] = [0x1a, 0x2b, 0x3c, 0x4d];

const BLOCK_IDB: u32 = 1;
const BLOCK_OPB: u32 = 2;
const BLOCK_SPB: u32 = 3;
const BLOCK_EPB: u32 = 6;

/// Upper bound on a single record or block; anything larger is treated as corruption.
const MAX_RECORD: u32 = 64 * 1024 * 1024;

#[derive(Debug, Clone, Copy)]
enum Endian {
    Little,
    Big,
}

impl Endian {
    fn u16(self, b: &[u8]) -> u16 {
        let b = [b[0], b[1]];
        match self {
            Endian::Little => u16::from_le_bytes(b),
            Endian::Big => u16::from_be_bytes(b),
        }
    }

    fn u32(self, b: &[u8]) -> u32 {
        let b = [b[0], b[1], b[2], b[3]];
        match self {
            Endian::Little => u32::from_le_bytes(b),
            Endian::Big => u32::from_be_bytes(b),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Resolution {
    /// Units of 10^-n seconds.
    Decimal(u8),
    /// Units of 2^-n seconds.
    Binary(u8),
}

impl Resolution {
    fn to_nanos(self, units: u64) -> i64 {
        let nanos: u128 = match self {
            Resolution::Decimal(n) if n <= 9 => u128::from(units) * 10u128.pow(u32::from(9 - n)),
            Resolution::Decimal(n) => u128::from(units) / 10u128.pow(u32::from(n.min(38) - 9)),
            Resolution::Binary(n) => (u128::from(units) * 1_000_000_000) >> n.min(127),
        };
        i64::try_from(nanos).unwrap_or(i64::MAX)
    }
}

#[derive(Debug, Clone, Copy)]
struct Interface {
    linktype: LinkType,
    resolution: Resolution,
}

#[derive(Debug)]
enum Format {
    Pcap {
        endian: Endian,
        nanos: bool,
        linktype: LinkType,
    },
    PcapNg {
        endian: Endian,
        interfaces: Vec<Interface>,
    },
}

/// Streaming reader over a pcap or pcapng capture.
///
/// Yields TCP packets in file order. A record cut short at the end of the
/// input ends the stream with a warning; structural corruption anywhere else
/// is an error carrying the byte offset of the offending header.
pub struct CaptureReader<R> {
    reader: R,
    offset: u64,
    format: Format,
    stats: ReadStats,
    last_timestamp: Timestamp,
    done: bool,
}

enum Fill {
    Full,
    Empty,
    Partial,
}

impl<R: Read> CaptureReader<R> {
    /// Reads and validates the file header.
    pub fn new(mut reader: R) -> Result<Self, CaptureError> {
        let mut magic = [0u8; 4];
        match fill(&mut reader, &mut magic)? {
            Fill::Full => {}
            _ => return Err(malformed(0, "file shorter than a capture magic number")),
        }
        let (format, offset) = match magic {
            [0xd4, 0xc3, 0xb2, 0xa1] => (pcap_header(&mut reader, Endian::Little, false)?, 24),
            [0xa1, 0xb2, 0xc3, 0xd4] => (pcap_header(&mut reader, Endian::Big, false)?, 24),
            [0x4d, 0x3c, 0xb2, 0xa1] => (pcap_header(&mut reader, Endian::Little, true)?, 24),
            [0xa1, 0xb2, 0x3c, 0x4d] => (pcap_header(&mut reader, Endian::Big, true)?, 24),
            PCAPNG_SHB => {
                let (endian, total) = section_header(&mut reader)?;
                let format = Format::PcapNg {
                    endian,
                    interfaces: Vec::new(),
                };
                (format, u64::from(total))
            }
            _ => return Err(malformed(0, "unrecognised magic number")),
        };
        Ok(CaptureReader {
            reader,
            offset,
            format,
            stats: ReadStats::default(),
            last_timestamp: Timestamp::default(),
            done: false,
        })
    }

    pub fn stats(&self) -> ReadStats {
        self.stats
    }

    fn truncated(&mut self) {
        log::warn!("capture truncated at byte offset {}; ignoring the partial record", self.offset);
        self.stats.truncated = true;
        self.done = true;
    }

    /// Reads one packet record; `Ok(None)` at end of input.
    fn next_frame(&mut self) -> Result<Option<(LinkType, Vec<u8>, Timestamp)>, CaptureError> {
        match self.format {
            Format::Pcap { endian, nanos, linktype } => {
                let mut header = [0u8; 16];
                match fill(&mut self.reader, &mut header)? {
                    Fill::Full => {}
                    Fill::Empty => return Ok(None),
                    Fill::Partial => {
                        self.truncated();
                        return Ok(None);
                    }
                }
                let secs = endian.u32(&header[0..4]);
                let frac = endian.u32(&header[4..8]);
                let caplen = endian.u32(&header[8..12]);
                if caplen > MAX_RECORD {
                    return Err(malformed(self.offset, format!("record length {caplen} exceeds limit")));
                }
                let mut data = vec![0u8; caplen as usize];
                match fill(&mut self.reader, &mut data)? {
                    Fill::Full => {}
                    _ if caplen == 0 => {}
                    _ => {
                        self.truncated();
                        return Ok(None);
                    }
                }
                self.offset += 16 + u64::from(caplen);
                let frac_nanos = if nanos { i64::from(frac) } else { i64::from(frac) * 1_000 };
                let ts = Timestamp(i64::from(secs) * 1_000_000_000 + frac_nanos);
                Ok(Some((linktype, data, ts)))
            }
            Format::PcapNg { .. } => self.next_pcapng_frame(),
        }
    }

    fn next_pcapng_frame(&mut self) -> Result<Option<(LinkType, Vec<u8>, Timestamp)>, CaptureError> {
        loop {
            let block_offset = self.offset;
            let mut head = [0u8; 8];
            match fill(&mut self.reader, &mut head)? {
                Fill::Full => {}
                Fill::Empty => return Ok(None),
                Fill::Partial => {
                    self.truncated();
                    return Ok(None);
                }
            }
            if head[0..4] == PCAPNG_SHB {
                let (endian, len) = section_header_after_type(&mut self.reader, &head[4..8], block_offset)?;
                self.format = Format::PcapNg {
                    endian,
                    interfaces: Vec::new(),
                };
                self.offset += u64::from(len);
                continue;
            }
            let Format::PcapNg { endian, ref mut interfaces } = self.format else {
                unreachable!("pcapng reader in pcap mode")
            };
            let block_type = endian.u32(&head[0..4]);
            let total_len = endian.u32(&head[4..8]);
            if total_len < 12 || total_len % 4 != 0 || total_len > MAX_RECORD {
                return Err(malformed(block_offset, format!("invalid block length {total_len}")));
            }
            let mut body = vec![0u8; total_len as usize - 8];
            match fill(&mut self.reader, &mut body)? {
                Fill::Full => {}
                _ => {
                    self.truncated();
                    return Ok(None);
                }
            }
            self.offset += u64::from(total_len);
            let trailer = endian.u32(&body[body.len() - 4..]);
            if trailer != total_len {
                return Err(malformed(block_offset, "block trailer length mismatch"));
            }
            let body = &body[..body.len() - 4];
            match block_type {
                BLOCK_IDB => {
                    if body.len() < 8 {
                        return Err(malformed(block_offset, "short interface description block"));
                    }
                    let linktype = LinkType(u32::from(endian.u16(&body[0..2])));
                    if !linktype.is_supported() {
                        log::warn!(
                            "interface {} has unsupported link type {}; its packets are skipped",
                            interfaces.len(),
                            linktype.0
                        );
                    }
                    interfaces.push(Interface {
                        linktype,
                        resolution: if_tsresol(endian, &body[8..]),
                    });
                }
                BLOCK_EPB | BLOCK_OPB => {
                    if body.len() < 20 {
                        return Err(malformed(block_offset, "short packet block"));
                    }
                    let iface = if block_type == BLOCK_EPB {
                        endian.u32(&body[0..4]) as usize
                    } else {
                        usize::from(endian.u16(&body[0..2]))
                    };
                    let Some(interface) = interfaces.get(iface).copied() else {
                        return Err(malformed(block_offset, format!("packet references undeclared interface {iface}")));
                    };
                    let units = (u64::from(endian.u32(&body[4..8])) << 32) | u64::from(endian.u32(&body[8..12]));
                    let caplen = endian.u32(&body[12..16]) as usize;
                    if body.len() < 20 + caplen {
                        return Err(malformed(block_offset, "packet data overruns block"));
                    }
                    let ts = Timestamp(interface.resolution.to_nanos(units));
                    self.last_timestamp = ts;
                    return Ok(Some((interface.linktype, body[20..20 + caplen].to_vec(), ts)));
                }
                BLOCK_SPB => {
                    if body.len() < 4 {
                        return Err(malformed(block_offset, "short simple packet block"));
                    }
                    let Some(interface) = interfaces.first().copied() else {
                        return Err(malformed(block_offset, "simple packet before any interface"));
                    };
                    let original = endian.u32(&body[0..4]) as usize;
                    let caplen = original.min(body.len() - 4);
                    // Simple packet blocks carry no timestamp.
                    return Ok(Some((interface.linktype, body[4..4 + caplen].to_vec(), self.last_timestamp)));
                }
                _ => {}
            }
        }
    }
}

impl<R: Read> Iterator for CaptureReader<R> {
    type Item = Result<RawPacket, CaptureError>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            let (linktype, data, ts) = match self.next_frame() {
                Ok(Some(frame)) => frame,
                Ok(None) => {
                    self.done = true;
                    return None;
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            };
            let decoded = if linktype.is_supported() {
                decode_frame(linktype, &data, ts)
            } else {
                Decoded::NonTcp
            };
            self.stats.note(&decoded);
            match decoded {
                Decoded::Tcp(packet) => return Some(Ok(packet)),
                Decoded::Fragment => log::warn!("dropping non-first IP fragment at {}", ts.as_secs_f64()),
                Decoded::Malformed(reason) => log::debug!("skipping malformed packet: {reason}"),
                Decoded::NonTcp => {}
            }
        }
        None
    }
}

fn malformed(offset: u64, reason: impl Into<String>) -> CaptureError {
    CaptureError::Malformed {
        offset,
        reason: reason.into(),
    }
}

/// Fills `buf` completely, reporting whether the input ended first.
fn fill<R: Read>(reader: &mut R, buf: &mut [u8]) -> Result<Fill, CaptureError> {
    let mut read = 0;
    while read < buf.len() {
        match reader.read(&mut buf[read..]) {
            Ok(0) => break,
            Ok(n) => read += n,
            Err(e) if e.kind() == ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(if read == buf.len() {
        Fill::Full
    } else if read == 0 {
        Fill::Empty
    } else {
        Fill::Partial
    })
}

fn pcap_header<R: Read>(reader: &mut R, endian: Endian, nanos: bool) -> Result<Format, CaptureError> {
    let mut rest = [0u8; 20];
    match fill(reader, &mut rest)? {
        Fill::Full => {}
        _ => return Err(malformed(4, "truncated pcap global header")),
    }
    let major = endian.u16(&rest[0..2]);
    if major != 2 {
        return Err(malformed(4, format!("unsupported pcap version {major}")));
    }
    // Upper bits of the link-type field carry FCS metadata.
    let linktype = LinkType(endian.u32(&rest[16..20]) & 0x03ff_ffff);
    if !linktype.is_supported() {
        return Err(CaptureError::UnsupportedLinkType {
            linktype: linktype.0,
            offset: 20,
        });
    }
    Ok(Format::Pcap { endian, nanos, linktype })
}

fn section_header<R: Read>(reader: &mut R) -> Result<(Endian, u32), CaptureError> {
    let mut len = [0u8; 4];
    match fill(reader, &mut len)? {
        Fill::Full => {}
        _ => return Err(malformed(4, "truncated section header block")),
    }
    section_header_after_type(reader, &len, 0)
}

/// Parses the remainder of a section header block whose type and length
/// fields have been read. Returns the byte order and the block's total length.
fn section_header_after_type<R: Read>(
    reader: &mut R,
    len_bytes: &[u8],
    offset: u64,
) -> Result<(Endian, u32), CaptureError> {
    let mut bom = [0u8; 4];
    match fill(reader, &mut bom)? {
        Fill::Full => {}
        _ => return Err(malformed(offset + 8, "truncated section header block")),
    }
    let endian = match bom {
        PCAPNG_BOM_LE => Endian::Little,
        PCAPNG_BOM_BE => Endian::Big,
        _ => return Err(malformed(offset + 8, "bad pcapng byte-order magic")),
    };
    let total = endian.u32(len_bytes);
    if total < 28 || total % 4 != 0 || total > MAX_RECORD {
        return Err(malformed(offset + 4, format!("invalid section header length {total}")));
    }
    let mut rest = vec![0u8; total as usize - 12];
    match fill(reader, &mut rest)? {
        Fill::Full => {}
        _ => return Err(malformed(offset, "truncated section header block")),
    }
    let major = endian.u16(&rest[0..2]);
    if major != 1 {
        return Err(malformed(offset + 12, format!("unsupported pcapng version {major}")));
    }
    if endian.u32(&rest[rest.len() - 4..]) != total {
        return Err(malformed(offset, "section header trailer length mismatch"));
    }
    Ok((endian, total))
}

fn if_tsresol(endian: Endian, mut options: &[u8]) -> Resolution {
    let mut resolution = Resolution::Decimal(6);
    while options.len() >= 4 {
        let code = endian.u16(&options[0..2]);
        let len = usize::from(endian.u16(&options[2..4]));
        if code == 0 || options.len() < 4 + len {
            break;
        }
        if code == 9 && len >= 1 {
            let raw = options[4];
            resolution = if raw & 0x80 == 0 {
                Resolution::Decimal(raw)
            } else {
                Resolution::Binary(raw & 0x7f)
            };
        }
        let padded = (len + 3) & !3;
        options = &options[(4 + padded).min(options.len())..];
    }
    resolution
}
