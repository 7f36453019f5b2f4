#![no_main]
use dualopt::subsolver::parse_lkh_tour;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|input: (u8, &str)| {
    let (dimension, text) = input;
    if let Ok(order) = parse_lkh_tour(text, dimension as usize) {
        let mut seen = vec![false; dimension as usize];
        for v in order {
            assert!(!std::mem::replace(&mut seen[v], true));
        }
        assert!(seen.into_iter().all(|s| s));
    }
});
