#![no_main]

use leoroute::segmentation::parse_plan_dump;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(dump) = parse_plan_dump(text) {
        for (&(a, b), _) in &dump.borders {
            assert!(a < b);
        }
    }
});
