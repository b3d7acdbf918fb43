#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    match leoroute::parse_config(text) {
        Ok(cfg) => assert!(cfg.validate().is_ok()),
        Err(e) => {
            if let Some(line) = e.line() {
                assert!(line >= 1 && line <= text.lines().count() + 1);
            }
        }
    }
});
