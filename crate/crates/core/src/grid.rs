//! Grid-based divide and conquer.
//!
//! The plane is tiled into `4^(n_iter - iter)` equal cells. Each cell's free
//! nodes and frozen partial routes are solved as an independent closed-tour
//! problem (partial routes compressed to their endpoints plus one fixed edge).
//! Between iterations, each cell route is cut back to the chains that lie
//! strictly inside the cell's internal rectangle; everything else returns to
//! the free-node pool. The last iteration has a single cell whose route,
//! expanded, is the tour.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::geom::{Point, Rect};
use crate::instance::{Instance, InstanceError};
use crate::subsolver::{verify_route, Budget, FixedEdge, SolveError, SubProblem, SubSolver};
use crate::tour::Tour;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("iteration {iter} outside 1..={n_iter}")]
    IterOutOfRange { iter: u32, n_iter: u32 },
    #[error("grid count {0} is not a power of 4")]
    BadGridCount(usize),
    #[error("invalid grid configuration: {0}")]
    BadConfig(String),
    #[error("partial route starting at node {first} spans cells {a} and {b}; margin too small")]
    RouteSpansCells { first: usize, a: usize, b: usize },
    #[error("bad partial route: {0}")]
    BadPartialRoute(String),
    #[error("cell {cell}: {source}")]
    CellSolve {
        cell: usize,
        #[source]
        source: SolveError,
    },
    #[error("node conservation violated after iteration {iter}: {detail}")]
    Conservation { iter: u32, detail: String },
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

/// An open chain of distinct nodes whose internal edges are frozen.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PartialRoute {
    chain: Vec<usize>,
    internal_length: f64,
}

impl PartialRoute {
    pub fn new(chain: Vec<usize>, points: &[Point]) -> Result<Self, GridError> {
        if chain.len() < 2 {
            return Err(GridError::BadPartialRoute(format!(
                "chain needs at least 2 nodes, got {}",
                chain.len()
            )));
        }
        let internal_length = crate::geom::path_length(points, &chain);
        Ok(Self {
            chain,
            internal_length,
        })
    }

    pub fn chain(&self) -> &[usize] {
        &self.chain
    }

    pub fn internal_length(&self) -> f64 {
        self.internal_length
    }

    pub fn first(&self) -> usize {
        self.chain[0]
    }

    pub fn last(&self) -> usize {
        self.chain[self.chain.len() - 1]
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GridCell {
    pub index: usize,
    pub bounds: Rect,
    pub free_nodes: Vec<usize>,
    pub partial_routes: Vec<PartialRoute>,
}

impl GridCell {
    pub fn is_empty(&self) -> bool {
        self.free_nodes.is_empty() && self.partial_routes.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.free_nodes.len() + self.partial_routes.iter().map(|r| r.chain.len()).sum::<usize>()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
pub struct GridConfig {
    pub n_iter: u32,
    /// Multiplier on the default internal-rectangle spacing.
    pub margin_scale: f64,
}

impl GridConfig {
    /// Iteration count by instance size: 2 below 5k nodes, 3 below 20k,
    /// 4 below 100k, 5 otherwise.
    pub fn for_size(n: usize) -> Self {
        let n_iter = match n {
            0..5_000 => 2,
            5_000..20_000 => 3,
            20_000..100_000 => 4,
            _ => 5,
        };
        Self {
            n_iter,
            margin_scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.n_iter == 0 || self.n_iter > 16 {
            return Err(GridError::BadConfig(format!("n_iter {} outside 1..=16", self.n_iter)));
        }
        if !(self.margin_scale.is_finite() && self.margin_scale > 0.0) {
            return Err(GridError::BadConfig(format!(
                "margin_scale {} must be positive",
                self.margin_scale
            )));
        }
        Ok(())
    }
}

/// `4^(n_iter - iter)` cells at iteration `iter` (1-based).
pub fn grid_count(n_iter: u32, iter: u32) -> Result<usize, GridError> {
    if iter == 0 || iter > n_iter {
        return Err(GridError::IterOutOfRange { iter, n_iter });
    }
    let side = 1usize
        .checked_shl(n_iter - iter)
        .ok_or(GridError::BadConfig("grid too fine".into()))?;
    side.checked_mul(side).ok_or(GridError::BadConfig("grid too fine".into()))
}

fn side_of(k: usize) -> Result<usize, GridError> {
    if k == 0 || !k.is_power_of_two() || k.trailing_zeros() % 2 != 0 {
        return Err(GridError::BadGridCount(k));
    }
    Ok(1 << (k.trailing_zeros() / 2))
}

/// Cell geometry over a bounding box. Shared-border points go to the cell
/// with the larger column, then row, index.
#[derive(Clone, Copy, Debug)]
struct Tiling {
    bbox: Rect,
    side: usize,
}

impl Tiling {
    fn axis_index(v: f64, lo: f64, extent: f64, side: usize) -> usize {
        if extent <= 0.0 {
            return 0;
        }
        // side is a power of two, so scaling by it is exact and finer/coarser
        // tilings agree on containment.
        let t = (v - lo) / extent;
        ((t * side as f64).floor().max(0.0) as usize).min(side - 1)
    }

    fn cell_of(&self, p: &Point) -> usize {
        let col = Self::axis_index(p.x, self.bbox.x_min, self.bbox.width(), self.side);
        let row = Self::axis_index(p.y, self.bbox.y_min, self.bbox.height(), self.side);
        row * self.side + col
    }

    fn bounds(&self, cell: usize) -> Rect {
        let (row, col) = (cell / self.side, cell % self.side);
        let s = self.side as f64;
        let (w, h) = (self.bbox.width(), self.bbox.height());
        Rect {
            x_min: self.bbox.x_min + w * col as f64 / s,
            x_max: self.bbox.x_min + w * (col + 1) as f64 / s,
            y_min: self.bbox.y_min + h * row as f64 / s,
            y_max: self.bbox.y_min + h * (row + 1) as f64 / s,
        }
    }
}

/// Splits free nodes and partial routes into `k` cells tiling the instance's
/// bounding box, row-major from the lower-left corner.
pub fn partition(
    routes: Vec<PartialRoute>,
    nodes: &[usize],
    k: usize,
    inst: &Instance,
) -> Result<Vec<GridCell>, GridError> {
    let side = side_of(k)?;
    let tiling = Tiling {
        bbox: inst.bbox(),
        side,
    };
    let mut cells: Vec<GridCell> = (0..k)
        .map(|index| GridCell {
            index,
            bounds: tiling.bounds(index),
            free_nodes: Vec::new(),
            partial_routes: Vec::new(),
        })
        .collect();
    for &v in nodes {
        cells[tiling.cell_of(&inst.node(v))].free_nodes.push(v);
    }
    for r in routes {
        let a = tiling.cell_of(&inst.node(r.first()));
        if let Some(b) = r
            .chain
            .iter()
            .map(|&v| tiling.cell_of(&inst.node(v)))
            .find(|&c| c != a)
        {
            return Err(GridError::RouteSpansCells {
                first: r.first(),
                a,
                b,
            });
        }
        cells[a].partial_routes.push(r);
    }
    Ok(cells)
}

/// Partial routes reduced to endpoint pairs joined by fixed edges.
#[derive(Clone, Debug)]
pub struct Compression {
    pub reduced_nodes: Vec<usize>,
    pub fixed_edges: Vec<FixedEdge>,
    routes: Vec<PartialRoute>,
    /// endpoint -> index into `routes`
    route_at: HashMap<usize, usize>,
}

pub fn compress_partial_routes(routes: &[PartialRoute]) -> Result<Compression, GridError> {
    let mut reduced_nodes = Vec::with_capacity(2 * routes.len());
    let mut fixed_edges = Vec::with_capacity(routes.len());
    let mut route_at = HashMap::with_capacity(2 * routes.len());
    for (i, r) in routes.iter().enumerate() {
        let (a, b) = (r.first(), r.last());
        if a == b {
            return Err(GridError::BadPartialRoute(format!(
                "chain starting at {a} is closed"
            )));
        }
        for v in [a, b] {
            if route_at.insert(v, i).is_some() {
                return Err(GridError::BadPartialRoute(format!(
                    "node {v} is an endpoint of two chains"
                )));
            }
        }
        reduced_nodes.extend([a, b]);
        fixed_edges.push(FixedEdge {
            a,
            b,
            cost: r.internal_length,
        });
    }
    Ok(Compression {
        reduced_nodes,
        fixed_edges,
        routes: routes.to_vec(),
        route_at,
    })
}

impl Compression {
    /// Replaces every traversal of a compressed fixed edge in the closed
    /// `route` by the chain it stands for, in the direction traversed.
    pub fn expand(&self, route: &[usize]) -> Vec<usize> {
        let m = route.len();
        let extra: usize = self.routes.iter().map(|r| r.chain.len() - 2).sum();
        let mut out = Vec::with_capacity(m + extra);
        let mut used = vec![false; self.routes.len()];
        for i in 0..m {
            let u = route[i];
            let v = route[(i + 1) % m];
            match self.route_at.get(&u) {
                Some(&ri) if !used[ri] && self.route_at.get(&v) == Some(&ri) && u != v => {
                    used[ri] = true;
                    let chain = &self.routes[ri].chain;
                    if chain[0] == u {
                        out.extend_from_slice(&chain[..chain.len() - 1]);
                    } else {
                        out.extend(chain[1..].iter().rev());
                    }
                }
                _ => out.push(u),
            }
        }
        out
    }
}

/// Route through every node of one cell, partial routes expanded.
#[derive(Clone, Debug)]
pub struct CellRoute {
    pub cell: usize,
    pub route: Vec<usize>,
}

/// Hooks into the grid loop for tracing and independent checking.
pub trait GridObserver: Sync {
    fn on_partition(&self, _iter: u32, _cells: &[GridCell]) {}
    /// `route` is the raw solver output over the compressed problem.
    fn on_cell_solved(&self, _iter: u32, _cell: usize, _problem: &SubProblem, _route: &[usize]) {}
    fn on_edges_broken(&self, _iter: u32, _routes: &[PartialRoute], _free: &[usize]) {}
}

impl GridObserver for () {}

/// How each cell's solver budget is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetPolicy {
    Fixed(Budget),
    /// 50 ms per 100 sub-problem nodes.
    ScaledTime,
}

impl BudgetPolicy {
    pub fn for_nodes(&self, nodes: usize) -> Budget {
        match self {
            BudgetPolicy::Fixed(b) => *b,
            BudgetPolicy::ScaledTime => Budget::scaled_time(nodes),
        }
    }
}

impl Default for BudgetPolicy {
    fn default() -> Self {
        BudgetPolicy::Fixed(Budget::default())
    }
}

pub(crate) fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn solve_cell(
    cell: &GridCell,
    inst: &Instance,
    solver: &dyn SubSolver,
    budget: &BudgetPolicy,
    seed: u64,
    iter: u32,
    observer: &dyn GridObserver,
) -> Result<Option<CellRoute>, GridError> {
    if cell.is_empty() {
        return Ok(None);
    }
    let wrap = |source| GridError::CellSolve {
        cell: cell.index,
        source,
    };
    let comp = compress_partial_routes(&cell.partial_routes)?;
    let mut ids = cell.free_nodes.clone();
    ids.extend_from_slice(&comp.reduced_nodes);
    let problem = SubProblem::from_points(inst.nodes(), ids, comp.fixed_edges.clone());
    let route = solver
        .solve(&problem, &budget.for_nodes(problem.len()), mix_seed(seed, iter as u64, cell.index as u64))
        .map_err(wrap)?;
    verify_route(&problem, &route).map_err(wrap)?;
    observer.on_cell_solved(iter, cell.index, &problem, &route);
    Ok(Some(CellRoute {
        cell: cell.index,
        route: comp.expand(&route),
    }))
}

/// Solves every nonempty cell concurrently. Output follows cell order.
pub fn solve_grids_parallel(
    cells: &[GridCell],
    inst: &Instance,
    solver: &dyn SubSolver,
    budget: &BudgetPolicy,
    seed: u64,
) -> Result<Vec<CellRoute>, GridError> {
    solve_cells(cells, inst, solver, budget, seed, 1, &())
}

fn solve_cells(
    cells: &[GridCell],
    inst: &Instance,
    solver: &dyn SubSolver,
    budget: &BudgetPolicy,
    seed: u64,
    iter: u32,
    observer: &dyn GridObserver,
) -> Result<Vec<CellRoute>, GridError> {
    let solved: Vec<Option<CellRoute>> = cells
        .par_iter()
        .map(|c| solve_cell(c, inst, solver, budget, seed, iter, observer))
        .collect::<Result<_, _>>()?;
    Ok(solved.into_iter().flatten().collect())
}

/// Internal rectangle of a cell: its bounds moved inward on every side by
/// `margin_scale * width / 2^(n_iter + 2)`.
pub fn internal_rect(bounds: &Rect, n_iter: u32, margin_scale: f64) -> Rect {
    let spacing = bounds.width() / 2f64.powi(n_iter as i32 + 2);
    bounds.shrink(spacing * margin_scale)
}

/// Keeps route edges whose endpoints both lie strictly inside the cell's
/// internal rectangle. Maximal runs of kept edges become partial routes; all
/// other nodes are returned as free. A route kept whole is opened at its
/// longest edge.
pub fn break_edges(
    route: &[usize],
    bounds: &Rect,
    n_iter: u32,
    margin_scale: f64,
    inst: &Instance,
) -> (Vec<PartialRoute>, Vec<usize>) {
    let m = route.len();
    if m < 2 {
        return (Vec::new(), route.to_vec());
    }
    let inner = internal_rect(bounds, n_iter, margin_scale);
    let inside: Vec<bool> = route
        .iter()
        .map(|&v| inner.strictly_contains(&inst.node(v)))
        .collect();
    // kept[i]: edge route[i] -> route[i + 1]
    let mut kept: Vec<bool> = (0..m).map(|i| inside[i] && inside[(i + 1) % m]).collect();
    if kept.iter().all(|&k| k) {
        let longest = (0..m)
            .max_by(|&i, &j| {
                let di = inst.dist(route[i], route[(i + 1) % m]);
                let dj = inst.dist(route[j], route[(j + 1) % m]);
                di.total_cmp(&dj).then(j.cmp(&i))
            })
            .unwrap();
        kept[longest] = false;
    }
    // Start right after a broken edge so no chain wraps the seam.
    let start = (0..m).find(|&i| !kept[(i + m - 1) % m]).unwrap();
    let mut chains = Vec::new();
    let mut free = Vec::new();
    let mut current = vec![route[start]];
    for step in 0..m {
        let i = (start + step) % m;
        if kept[i] && step + 1 < m {
            current.push(route[(i + 1) % m]);
            continue;
        }
        if current.len() >= 2 {
            let pr = PartialRoute::new(std::mem::take(&mut current), inst.nodes())
                .expect("chains have at least two nodes");
            chains.push(pr);
        } else {
            free.append(&mut current);
        }
        if step + 1 < m {
            current = vec![route[(i + 1) % m]];
        }
    }
    (chains, free)
}

#[derive(Clone, Debug, Serialize)]
pub struct CellTrace {
    pub index: usize,
    pub bounds: Rect,
    pub free_nodes: usize,
    pub partial_routes: usize,
    pub subproblem_nodes: usize,
}

/// Per-iteration summary, serializable as a debug dump.
#[derive(Clone, Debug, Serialize)]
pub struct IterationTrace {
    pub iter: u32,
    pub grid_count: usize,
    pub cells: Vec<CellTrace>,
    /// Chains and free nodes after edge breaking (absent on the last iteration).
    pub chains_after: Option<usize>,
    pub free_after: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct GridOutcome {
    pub tour: Tour,
    pub trace: Vec<IterationTrace>,
}

fn check_conservation(n: usize, routes: &[PartialRoute], free: &[usize], iter: u32) -> Result<(), GridError> {
    let mut seen = vec![false; n];
    for &v in routes.iter().flat_map(|r| r.chain.iter()).chain(free) {
        if v >= n || std::mem::replace(&mut seen[v], true) {
            return Err(GridError::Conservation {
                iter,
                detail: format!("node {v} covered twice or out of range"),
            });
        }
    }
    if let Some(v) = seen.iter().position(|s| !s) {
        return Err(GridError::Conservation {
            iter,
            detail: format!("node {v} lost"),
        });
    }
    Ok(())
}

pub fn run_grid_phase(
    inst: &Instance,
    cfg: &GridConfig,
    solver: &dyn SubSolver,
    budget: &BudgetPolicy,
    seed: u64,
) -> Result<GridOutcome, GridError> {
    run_grid_phase_observed(inst, cfg, solver, budget, seed, &())
}

pub fn run_grid_phase_observed(
    inst: &Instance,
    cfg: &GridConfig,
    solver: &dyn SubSolver,
    budget: &BudgetPolicy,
    seed: u64,
    observer: &dyn GridObserver,
) -> Result<GridOutcome, GridError> {
    inst.require_solvable()?;
    cfg.validate()?;
    let n = inst.len();
    let mut routes: Vec<PartialRoute> = Vec::new();
    let mut free: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(cfg.n_iter as usize);
    for iter in 1..=cfg.n_iter {
        let k = grid_count(cfg.n_iter, iter)?;
        let cells = partition(std::mem::take(&mut routes), &free, k, inst)?;
        observer.on_partition(iter, &cells);
        let mut it = IterationTrace {
            iter,
            grid_count: k,
            cells: cells
                .iter()
                .map(|c| CellTrace {
                    index: c.index,
                    bounds: c.bounds,
                    free_nodes: c.free_nodes.len(),
                    partial_routes: c.partial_routes.len(),
                    subproblem_nodes: c.free_nodes.len() + 2 * c.partial_routes.len(),
                })
                .collect(),
            chains_after: None,
            free_after: None,
        };
        let solved = solve_cells(&cells, inst, solver, budget, seed, iter, observer)?;
        if iter == cfg.n_iter {
            trace.push(it);
            let route = solved.into_iter().next().map(|c| c.route).unwrap_or_default();
            let tour = Tour::new(route, n).map_err(|r| GridError::Conservation {
                iter,
                detail: r.to_string(),
            })?;
            return Ok(GridOutcome { tour, trace });
        }
        let broken: Vec<(Vec<PartialRoute>, Vec<usize>)> = solved
            .par_iter()
            .map(|c| break_edges(&c.route, &cells[c.cell].bounds, cfg.n_iter, cfg.margin_scale, inst))
            .collect();
        free.clear();
        for (r, f) in broken {
            routes.extend(r);
            free.extend(f);
        }
        check_conservation(n, &routes, &free, iter)?;
        observer.on_edges_broken(iter, &routes, &free);
        it.chains_after = Some(routes.len());
        it.free_after = Some(free.len());
        trace.push(it);
    }
    unreachable!("loop returns on its last iteration")
}
