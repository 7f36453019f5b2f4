#![no_main]
use dualopt::tsplib::{parse_tsplib, write_tsplib};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(inst) = parse_tsplib(data) {
        // Anything accepted must survive a write/parse cycle unchanged.
        let again = parse_tsplib(&write_tsplib(&inst)).expect("re-parse of written instance");
        assert_eq!(again.nodes(), inst.nodes());
    }
});
