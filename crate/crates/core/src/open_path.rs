//! Fixed-endpoint open-path solvers: cheapest insertion plus path 2-opt, and
//! an exhaustive variant for small paths.

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use thiserror::Error;

use crate::geom::{path_length, Point};
use crate::instance::rng_from_seed;
use crate::subsolver::Budget;

const EPS: f64 = 1e-12;

/// Largest path the exhaustive solver accepts.
pub const OPEN_PATH_EXHAUSTIVE_MAX: usize = 10;

/// Hamiltonian path problem over `coords` from `start` to `end`.
#[derive(Clone, Debug, PartialEq)]
pub struct OpenPathProblem {
    pub coords: Vec<Point>,
    pub start: usize,
    pub end: usize,
}

impl OpenPathProblem {
    /// Problem whose endpoints are the first and last coordinates.
    pub fn with_fixed_ends(coords: Vec<Point>) -> Self {
        let end = coords.len().saturating_sub(1);
        Self { coords, start: 0, end }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    fn check(&self) -> Result<(), OpenPathError> {
        let k = self.len();
        if self.start >= k || self.end >= k {
            return Err(OpenPathError::EndpointOutOfRange {
                start: self.start,
                end: self.end,
                k,
            });
        }
        if k >= 2 && self.start == self.end {
            return Err(OpenPathError::SameEndpoints(self.start));
        }
        Ok(())
    }

    fn d(&self, a: usize, b: usize) -> f64 {
        self.coords[a].dist(&self.coords[b])
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpenPathError {
    #[error("endpoints ({start}, {end}) out of range for {k} nodes")]
    EndpointOutOfRange { start: usize, end: usize, k: usize },
    #[error("start and end are both {0}")]
    SameEndpoints(usize),
    #[error("{0} nodes exceed the exhaustive limit")]
    TooLarge(usize),
    #[error("budget must be positive")]
    InvalidBudget,
}

/// Pass-through ordering for paths too short to optimize.
fn trivial(p: &OpenPathProblem) -> Option<Vec<usize>> {
    match p.len() {
        0 => Some(Vec::new()),
        1 => Some(vec![p.start]),
        2 => Some(vec![p.start, p.end]),
        3 => Some(vec![p.start, 3 - p.start - p.end, p.end]),
        _ => None,
    }
}

/// Cheapest insertion between consecutive path nodes, then sweeps of 2-opt
/// and segment moves until a local optimum or the budget runs out.
/// The seed only breaks ties between equally cheap insertions.
pub fn solve_open_path(p: &OpenPathProblem, budget: &Budget, seed: u64) -> Result<Vec<usize>, OpenPathError> {
    p.check()?;
    budget.validate().map_err(|_| OpenPathError::InvalidBudget)?;
    if let Some(t) = trivial(p) {
        return Ok(t);
    }
    let mut path = cheapest_insertion(p, seed);
    two_opt_path(p, &mut path, budget);
    Ok(path)
}

fn cheapest_insertion(p: &OpenPathProblem, seed: u64) -> Vec<usize> {
    let k = p.len();
    let mut rest: Vec<usize> = (0..k).filter(|&v| v != p.start && v != p.end).collect();
    rest.shuffle(&mut rng_from_seed(seed));
    // Path kept as a successor list; best[v] caches v's cheapest edge (tail node).
    let mut succ = vec![usize::MAX; k];
    succ[p.start] = p.end;
    let insertion = |a: usize, b: usize, v: usize| p.d(a, v) + p.d(v, b) - p.d(a, b);
    let mut best: Vec<(f64, usize)> = rest.iter().map(|&v| (insertion(p.start, p.end, v), p.start)).collect();
    while !rest.is_empty() {
        let mut pick = 0;
        for i in 1..rest.len() {
            if best[i].0 < best[pick].0 {
                pick = i;
            }
        }
        let v = rest.swap_remove(pick);
        let (_, a) = best.swap_remove(pick);
        let b = succ[a];
        succ[a] = v;
        succ[v] = b;
        for (i, &u) in rest.iter().enumerate() {
            if best[i].1 == a {
                // The cached edge (a, b) no longer exists.
                let mut x = p.start;
                let mut bx = (f64::INFINITY, p.start);
                while x != p.end {
                    let c = insertion(x, succ[x], u);
                    if c < bx.0 {
                        bx = (c, x);
                    }
                    x = succ[x];
                }
                best[i] = bx;
            } else {
                for (x, y) in [(a, v), (v, b)] {
                    let c = insertion(x, y, u);
                    if c < best[i].0 {
                        best[i] = (c, x);
                    }
                }
            }
        }
    }
    let mut path = Vec::with_capacity(k);
    let mut x = p.start;
    path.push(x);
    while x != p.end {
        x = succ[x];
        path.push(x);
    }
    path
}

fn two_opt_path(p: &OpenPathProblem, path: &mut Vec<usize>, budget: &Budget) {
    let k = path.len();
    let started = Instant::now();
    for _ in 0..budget.max_sweeps {
        let mut improved = false;
        for i in 1..k - 1 {
            for j in i + 1..k - 1 {
                let (a, b, c, d) = (path[i - 1], path[i], path[j], path[j + 1]);
                let delta = p.d(a, c) + p.d(b, d) - p.d(a, b) - p.d(c, d);
                if delta < -EPS {
                    path[i..=j].reverse();
                    improved = true;
                }
            }
        }
        improved |= or_opt_path(p, path);
        if !improved || budget.time_limit.is_some_and(|t| started.elapsed() >= t) {
            break;
        }
    }
}

/// One pass moving interior segments of 1 to 3 nodes, possibly reversed, to
/// a cheaper gap. Returns whether anything moved.
fn or_opt_path(p: &OpenPathProblem, path: &mut Vec<usize>) -> bool {
    let k = path.len();
    let mut moved = false;
    for seg in 1..=3 {
        let mut i = 1;
        while i + seg < k {
            let j = i + seg - 1;
            let (prev, next) = (path[i - 1], path[j + 1]);
            let (sa, sb) = (path[i], path[j]);
            let gain = p.d(prev, sa) + p.d(sb, next) - p.d(prev, next);
            let mut best: Option<(f64, usize, bool)> = None;
            for q in 0..k - 1 {
                if q + 1 >= i && q <= j {
                    continue;
                }
                let (x, y) = (path[q], path[q + 1]);
                let base = p.d(x, y);
                for rev in [false, true] {
                    let (h, t) = if rev { (sb, sa) } else { (sa, sb) };
                    let delta = p.d(x, h) + p.d(t, y) - base - gain;
                    if delta < -EPS && best.is_none_or(|b| delta < b.0) {
                        best = Some((delta, q, rev));
                    }
                }
            }
            if let Some((_, q, rev)) = best {
                let mut segment: Vec<usize> = path.drain(i..=j).collect();
                if rev {
                    segment.reverse();
                }
                let at = if q < i { q + 1 } else { q + 1 - seg };
                path.splice(at..at, segment);
                moved = true;
            }
            i += 1;
        }
    }
    moved
}

/// Elementwise [`solve_open_path`], in parallel, output in input order.
pub fn solve_open_path_batch(
    problems: &[OpenPathProblem],
    budget: &Budget,
    seed: u64,
) -> Vec<Result<Vec<usize>, OpenPathError>> {
    problems
        .par_iter()
        .map(|p| solve_open_path(p, budget, seed))
        .collect()
}

/// Optimal ordering by depth-first enumeration with length pruning.
pub fn solve_open_path_exhaustive(p: &OpenPathProblem) -> Result<Vec<usize>, OpenPathError> {
    p.check()?;
    if p.len() > OPEN_PATH_EXHAUSTIVE_MAX {
        return Err(OpenPathError::TooLarge(p.len()));
    }
    if let Some(t) = trivial(p) {
        return Ok(t);
    }
    struct Search<'a> {
        p: &'a OpenPathProblem,
        used: Vec<bool>,
        cur: Vec<usize>,
        best: Vec<usize>,
        best_len: f64,
    }
    impl Search<'_> {
        fn go(&mut self, len: f64) {
            if len >= self.best_len {
                return;
            }
            let last = *self.cur.last().unwrap();
            if self.cur.len() == self.p.len() - 1 {
                let total = len + self.p.d(last, self.p.end);
                if total < self.best_len {
                    self.best_len = total;
                    self.best = self.cur.clone();
                    self.best.push(self.p.end);
                }
                return;
            }
            for v in 0..self.p.len() {
                if self.used[v] {
                    continue;
                }
                self.used[v] = true;
                self.cur.push(v);
                self.go(len + self.p.d(last, v));
                self.cur.pop();
                self.used[v] = false;
            }
        }
    }
    let mut used = vec![false; p.len()];
    used[p.start] = true;
    used[p.end] = true;
    let mut s = Search {
        p,
        used,
        cur: vec![p.start],
        best: Vec::new(),
        best_len: f64::INFINITY,
    };
    s.go(0.0);
    Ok(s.best)
}

/// Length of `order` through `p.coords`.
pub fn open_path_length(p: &OpenPathProblem, order: &[usize]) -> f64 {
    path_length(&p.coords, order)
}
