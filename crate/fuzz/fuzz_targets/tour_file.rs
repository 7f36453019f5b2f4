#![no_main]
use dualopt::tour::{parse_tour_file, write_tour_file};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(f) = parse_tour_file(data) {
        let again = parse_tour_file(&write_tour_file(&f.order, f.length)).expect("re-parse of written tour");
        assert_eq!(again.order, f.order);
    }
});
