#![no_main]
use dualopt::path::protocol::{handle_line, parse_request};
use dualopt::path::HeuristicSubPathSolver;
use dualopt::subsolver::Budget;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(req) = parse_request(data) {
        if req.coords.len() > 64 {
            return;
        }
        let _ = req.to_problem();
    }
    if data.len() > 4096 {
        return;
    }
    // The server must answer every line, including garbage, without panicking.
    let solver = HeuristicSubPathSolver {
        budget: Budget::sweeps(5),
        seed: 0,
    };
    let resp = handle_line(&solver, data);
    assert!(resp.order.is_some() != resp.error.is_some());
});
