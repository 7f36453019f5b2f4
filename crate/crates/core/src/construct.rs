//! Whole-instance construction heuristics used as baselines and initial tours.

use rand::seq::SliceRandom;

use crate::instance::{rng_from_seed, Instance, InstanceError};
use crate::tour::Tour;

/// Random insertion: nodes are taken in a seeded random order and each is
/// inserted at the cheapest position of the growing cycle. O(n^2).
pub fn random_insertion(inst: &Instance, seed: u64) -> Result<Tour, InstanceError> {
    inst.require_solvable()?;
    let n = inst.len();
    let mut pending: Vec<usize> = (0..n).collect();
    pending.shuffle(&mut rng_from_seed(seed));
    let mut cycle: Vec<usize> = Vec::with_capacity(n);
    cycle.extend_from_slice(&pending[..3]);
    for &v in &pending[3..] {
        let m = cycle.len();
        let mut best = (f64::INFINITY, 0);
        for i in 0..m {
            let a = cycle[i];
            let b = cycle[(i + 1) % m];
            let delta = inst.dist(a, v) + inst.dist(v, b) - inst.dist(a, b);
            if delta < best.0 {
                best = (delta, i + 1);
            }
        }
        cycle.insert(best.1, v);
    }
    Ok(Tour::from_order_unchecked(cycle))
}

/// Nearest-neighbor tour starting from `start`. O(n^2).
pub fn nearest_neighbor(inst: &Instance, start: usize) -> Result<Tour, InstanceError> {
    inst.require_solvable()?;
    let n = inst.len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut cur = start % n;
    visited[cur] = true;
    order.push(cur);
    for _ in 1..n {
        let mut best = (f64::INFINITY, usize::MAX);
        for (j, &seen) in visited.iter().enumerate() {
            if !seen {
                let d = inst.dist(cur, j);
                if d < best.0 {
                    best = (d, j);
                }
            }
        }
        cur = best.1;
        visited[cur] = true;
        order.push(cur);
    }
    Ok(Tour::from_order_unchecked(order))
}
