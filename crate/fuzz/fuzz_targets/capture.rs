#![no_main]

use corrnet::capture::parse_capture;
use corrnet::features::compute_features;
use corrnet::flow::{assemble_flows, IdleTimeout};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(capture) = parse_capture(data) else {
        return;
    };
    let packets = capture.packets.len();
    let flows = assemble_flows(capture.packets, IdleTimeout::default());
    let events: usize = flows.iter().map(|f| f.events.len()).sum();
    assert_eq!(events, packets);
    for flow in &flows {
        assert!(!flow.events.is_empty());
        assert!(flow.events.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        for v in compute_features(flow).0 {
            assert!(v.is_finite() && v >= 0.0, "{v}");
        }
    }
});
