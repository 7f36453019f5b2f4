//! Closed-tour sub-problem solvers that honor mandatory fixed edges.
//!
//! A [`SubProblem`] names nodes by their global instance index. Fixed edges
//! must form vertex-disjoint simple paths; solvers treat each such path as an
//! indivisible unit and return a closed route (global ids) in which every fixed
//! edge appears between consecutive positions.

mod exhaustive;
mod lkh;
mod local_search;

use std::collections::HashMap;
use std::time::Duration;

use thiserror::Error;

use crate::geom::Point;

pub use exhaustive::{solve_exhaustive, ExhaustiveSolver, EXHAUSTIVE_MAX_NODES};
pub use lkh::{parse_lkh_tour, write_lkh_problem, ExternalError, LkhSolver, LKH_ENV_VAR};
pub use local_search::{solve_local_search, LocalSearchSolver, DEFAULT_CANDIDATES};

/// A mandatory edge between two global node ids. `cost` is what traversing it
/// contributes to the route length; for a compressed partial route this is the
/// length of the hidden chain, not the straight-line distance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedEdge {
    pub a: usize,
    pub b: usize,
    pub cost: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SubProblem {
    pub node_ids: Vec<usize>,
    pub coords: Vec<Point>,
    pub fixed_edges: Vec<FixedEdge>,
}

impl SubProblem {
    pub fn new(node_ids: Vec<usize>, coords: Vec<Point>, fixed_edges: Vec<FixedEdge>) -> Self {
        Self {
            node_ids,
            coords,
            fixed_edges,
        }
    }

    /// Builds a problem over `node_ids` taking coordinates from `points` (indexed globally).
    pub fn from_points(points: &[Point], node_ids: Vec<usize>, fixed_edges: Vec<FixedEdge>) -> Self {
        let coords = node_ids.iter().map(|&i| points[i]).collect();
        Self::new(node_ids, coords, fixed_edges)
    }

    pub fn len(&self) -> usize {
        self.node_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_ids.is_empty()
    }
}

/// Work limit for one solver call. Iteration budgets are deterministic;
/// wall-clock limits are not.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Budget {
    /// Upper bound on improvement sweeps.
    pub max_sweeps: usize,
    pub time_limit: Option<Duration>,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            max_sweeps: 1_000,
            time_limit: None,
        }
    }
}

impl Budget {
    pub fn sweeps(max_sweeps: usize) -> Self {
        Self {
            max_sweeps,
            time_limit: None,
        }
    }

    /// 50 ms per 100 nodes, with the default sweep cap.
    pub fn scaled_time(nodes: usize) -> Self {
        let ms = (50 * nodes as u64).div_ceil(100).max(1);
        Self {
            time_limit: Some(Duration::from_millis(ms)),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        if self.max_sweeps == 0 || self.time_limit == Some(Duration::ZERO) {
            return Err(SolveError::InvalidBudget);
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("budget must be positive")]
    InvalidBudget,
    #[error("malformed sub-problem: {0}")]
    Malformed(String),
    #[error("infeasible fixed edges: {0}")]
    InfeasibleFixedEdges(String),
    #[error("sub-problem has {size} nodes, exhaustive search allows at most {max}")]
    TooLarge { size: usize, max: usize },
    #[error("solver output violates contract: {0}")]
    Contract(String),
    #[error(transparent)]
    External(#[from] ExternalError),
}

/// Closed-tour solver over a [`SubProblem`]. Implementations are called
/// concurrently and must not rely on shared mutable state.
pub trait SubSolver: Send + Sync {
    fn solve(&self, problem: &SubProblem, budget: &Budget, seed: u64) -> Result<Vec<usize>, SolveError>;

    fn name(&self) -> &str;
}

const NONE: usize = usize::MAX;

/// Sub-problem in local indices with its fixed-path structure resolved.
#[derive(Debug)]
pub(crate) struct LocalProblem<'a> {
    pub pts: &'a [Point],
    /// Up to two fixed partners per local node, `NONE` when absent.
    pub partners: Vec<[usize; 2]>,
    /// Free nodes as singletons and fixed paths end to end, in local indices.
    pub atoms: Vec<Vec<usize>>,
}

impl LocalProblem<'_> {
    #[inline]
    pub fn is_fixed(&self, a: usize, b: usize) -> bool {
        let p = &self.partners[a];
        p[0] == b || p[1] == b
    }

    #[inline]
    pub fn d(&self, a: usize, b: usize) -> f64 {
        self.pts[a].dist(&self.pts[b])
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }
}

pub(crate) fn analyze(p: &SubProblem) -> Result<LocalProblem<'_>, SolveError> {
    let m = p.node_ids.len();
    if p.coords.len() != m {
        return Err(SolveError::Malformed(format!(
            "{} node ids but {} coordinates",
            m,
            p.coords.len()
        )));
    }
    let mut local: HashMap<usize, usize> = HashMap::with_capacity(m);
    for (i, &g) in p.node_ids.iter().enumerate() {
        if local.insert(g, i).is_some() {
            return Err(SolveError::Malformed(format!("node {g} listed twice")));
        }
    }
    let mut partners = vec![[NONE; 2]; m];
    for e in &p.fixed_edges {
        let (Some(&a), Some(&b)) = (local.get(&e.a), local.get(&e.b)) else {
            return Err(SolveError::InfeasibleFixedEdges(format!(
                "edge ({}, {}) references a node outside the sub-problem",
                e.a, e.b
            )));
        };
        if a == b {
            return Err(SolveError::InfeasibleFixedEdges(format!("self-loop at {}", e.a)));
        }
        if partners[a].contains(&b) {
            return Err(SolveError::InfeasibleFixedEdges(format!(
                "edge ({}, {}) listed twice",
                e.a, e.b
            )));
        }
        for (x, y) in [(a, b), (b, a)] {
            let slot = partners[x].iter().position(|&s| s == NONE).ok_or_else(|| {
                SolveError::InfeasibleFixedEdges(format!(
                    "node {} has three or more fixed edges",
                    p.node_ids[x]
                ))
            })?;
            partners[x][slot] = y;
        }
    }
    let degree = |v: usize| partners[v].iter().filter(|&&s| s != NONE).count();
    let mut seen = vec![false; m];
    let mut atoms = Vec::new();
    for v in 0..m {
        if seen[v] || degree(v) == 2 {
            continue;
        }
        let mut path = vec![v];
        seen[v] = true;
        let (mut prev, mut cur) = (NONE, v);
        loop {
            let next = partners[cur].iter().copied().find(|&s| s != NONE && s != prev);
            match next {
                Some(nx) => {
                    seen[nx] = true;
                    path.push(nx);
                    prev = cur;
                    cur = nx;
                }
                None => break,
            }
        }
        atoms.push(path);
    }
    if let Some(v) = seen.iter().position(|s| !s) {
        return Err(SolveError::InfeasibleFixedEdges(format!(
            "fixed edges close a cycle through node {}",
            p.node_ids[v]
        )));
    }
    Ok(LocalProblem {
        pts: &p.coords,
        partners,
        atoms,
    })
}

/// Checks that `route` visits exactly the problem's nodes and contains every
/// fixed edge between cyclically consecutive positions.
pub fn verify_route(p: &SubProblem, route: &[usize]) -> Result<(), SolveError> {
    let m = p.node_ids.len();
    if route.len() != m {
        return Err(SolveError::Contract(format!(
            "route has {} nodes, expected {m}",
            route.len()
        )));
    }
    let mut pos: HashMap<usize, usize> = HashMap::with_capacity(m);
    for (i, &g) in route.iter().enumerate() {
        if pos.insert(g, i).is_some() {
            return Err(SolveError::Contract(format!("node {g} visited twice")));
        }
    }
    if let Some(g) = p.node_ids.iter().find(|g| !pos.contains_key(g)) {
        return Err(SolveError::Contract(format!("node {g} not visited")));
    }
    for e in &p.fixed_edges {
        let (i, j) = (pos[&e.a], pos[&e.b]);
        if (i + 1) % m != j && (j + 1) % m != i {
            return Err(SolveError::Contract(format!(
                "fixed edge ({}, {}) not consecutive",
                e.a, e.b
            )));
        }
    }
    Ok(())
}

/// Route cost: Euclidean between consecutive nodes, except that fixed pairs
/// are charged their stored cost.
pub fn route_cost(p: &SubProblem, route: &[usize]) -> f64 {
    let coord: HashMap<usize, Point> = p.node_ids.iter().copied().zip(p.coords.iter().copied()).collect();
    let fixed: HashMap<(usize, usize), f64> = p
        .fixed_edges
        .iter()
        .flat_map(|e| [((e.a, e.b), e.cost), ((e.b, e.a), e.cost)])
        .collect();
    let m = route.len();
    if m < 2 {
        return 0.0;
    }
    let edges = if m == 2 { 1 } else { m };
    (0..edges)
        .map(|i| {
            let (a, b) = (route[i], route[(i + 1) % m]);
            fixed
                .get(&(a, b))
                .copied()
                .unwrap_or_else(|| coord[&a].dist(&coord[&b]))
        })
        .sum()
}

/// Expands local atom orders into a global route.
pub(crate) fn to_global(p: &SubProblem, local_order: &[usize]) -> Vec<usize> {
    local_order.iter().map(|&i| p.node_ids[i]).collect()
}
