#![no_main]
use dualopt::path::protocol::parse_response;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(r) = parse_response(text) {
            assert!(r.order.is_some() != r.error.is_some());
        }
    }
});
