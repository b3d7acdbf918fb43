#![no_main]

use leoroute::topology::parse_edge_list;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(rows) = parse_edge_list(text) {
        for r in rows {
            assert!(r.latency_s.is_finite() && r.latency_s > 0.0);
        }
    }
});
