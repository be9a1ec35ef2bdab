#![no_main]

use corrnet::capture::{decode_frame, Decoded, LinkType, Timestamp};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&selector, frame)) = data.split_first() else {
        return;
    };
    const LINKTYPES: [LinkType; 9] = [
        LinkType::NULL,
        LinkType::ETHERNET,
        LinkType::RAW_OPENBSD,
        LinkType::RAW_BSD,
        LinkType::RAW,
        LinkType::LINUX_SLL,
        LinkType::IPV4,
        LinkType::IPV6,
        LinkType::LINUX_SLL2,
    ];
    let linktype = LINKTYPES[selector as usize % LINKTYPES.len()];
    if let Decoded::Tcp(p) = decode_frame(linktype, frame, Timestamp(0)) {
        assert_eq!(p.timestamp, Timestamp(0));
    }
});
