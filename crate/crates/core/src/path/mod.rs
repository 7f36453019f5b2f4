//! Path phase: slide non-overlapping windows over a closed tour, re-solve each
//! window as an open path with fixed endpoints, and keep strict improvements.

pub mod protocol;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{path_length, Point};
use crate::instance::{Instance, InstanceError};
use crate::open_path::{solve_open_path_batch, solve_open_path_exhaustive, OpenPathProblem};
use crate::subsolver::Budget;
use crate::tour::{check_permutation, Tour};

/// Candidates must beat the current window by more than this to be accepted.
pub const ACCEPT_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum PathError {
    #[error("window length {0} is below 3")]
    BadLength(usize),
    #[error("offset {kappa} outside 1..={n}")]
    BadOffset { kappa: usize, n: usize },
    #[error("lengths and iteration counts differ in arity ({lengths} vs {iters})")]
    ScheduleArity { lengths: usize, iters: usize },
    #[error("iteration count must be positive")]
    ZeroIterations,
    #[error("bounding box is degenerate")]
    DegenerateBBox,
    #[error("tour is not a permutation: {0}")]
    InvalidTour(#[from] crate::tour::ViolationReport),
    #[error("windows overlap at position {0}")]
    Overlap(usize),
    #[error("position {0} not covered by any window")]
    Gap(usize),
    #[error("solver returned {got} results for {expected} problems")]
    BatchSize { expected: usize, got: usize },
    #[error("sub-path solver failed: {0}")]
    Solver(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

/// Solves batches of open paths whose endpoints are the first and last
/// coordinates. Orders come back as local indices; a fully reversed order is
/// tolerated by the caller. Per-problem failures are reported inline, while
/// `Err` means the whole batch failed.
pub trait SubPathSolver: Send + Sync {
    fn solve_batch(&self, problems: &[OpenPathProblem]) -> Result<Vec<Result<Vec<usize>, String>>, PathError>;
    fn name(&self) -> &str;
}

/// Insertion plus 2-opt, run in parallel over the batch.
#[derive(Clone, Debug, Default)]
pub struct HeuristicSubPathSolver {
    pub budget: Budget,
    pub seed: u64,
}

impl SubPathSolver for HeuristicSubPathSolver {
    fn solve_batch(&self, problems: &[OpenPathProblem]) -> Result<Vec<Result<Vec<usize>, String>>, PathError> {
        Ok(solve_open_path_batch(problems, &self.budget, self.seed)
            .into_iter()
            .map(|r| r.map_err(|e| e.to_string()))
            .collect())
    }

    fn name(&self) -> &str {
        "heuristic"
    }
}

/// Exact enumeration; fails per problem above the exhaustive size limit.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExhaustiveSubPathSolver;

impl SubPathSolver for ExhaustiveSubPathSolver {
    fn solve_batch(&self, problems: &[OpenPathProblem]) -> Result<Vec<Result<Vec<usize>, String>>, PathError> {
        Ok(problems
            .iter()
            .map(|p| solve_open_path_exhaustive(p).map_err(|e| e.to_string()))
            .collect())
    }

    fn name(&self) -> &str {
        "exhaustive"
    }
}

/// A window of consecutive tour positions starting at `offset` (0-based,
/// wrapping). Windows shorter than the requested length are passed through.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubPath {
    pub offset: usize,
    pub nodes: Vec<usize>,
    pub pass_through: bool,
}

impl SubPath {
    pub fn length(&self, inst: &Instance) -> f64 {
        path_length(inst.nodes(), &self.nodes)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathPhaseConfig {
    pub lengths: Vec<usize>,
    pub iters: Vec<usize>,
}

impl Default for PathPhaseConfig {
    fn default() -> Self {
        Self {
            lengths: vec![50, 20, 10],
            iters: vec![25, 10, 5],
        }
    }
}

impl PathPhaseConfig {
    pub fn validate(&self) -> Result<(), PathError> {
        if self.lengths.len() != self.iters.len() {
            return Err(PathError::ScheduleArity {
                lengths: self.lengths.len(),
                iters: self.iters.len(),
            });
        }
        if let Some(&l) = self.lengths.iter().find(|&&l| l < 3) {
            return Err(PathError::BadLength(l));
        }
        if self.iters.contains(&0) {
            return Err(PathError::ZeroIterations);
        }
        Ok(())
    }

    /// Offset advance between rounds for a given length and iteration count.
    pub fn step(len: usize, iters: usize) -> usize {
        (len / iters).max(1)
    }
}

/// Splits `tour` into windows of `len` nodes starting at 1-based position
/// `kappa`. A trailing window shorter than `len` is marked pass-through.
pub fn divide_solution(tour: &[usize], len: usize, kappa: usize) -> Result<Vec<SubPath>, PathError> {
    let n = tour.len();
    if len < 3 {
        return Err(PathError::BadLength(len));
    }
    if kappa == 0 || kappa > n {
        return Err(PathError::BadOffset { kappa, n });
    }
    let start = kappa - 1;
    let mut out = Vec::with_capacity(n.div_ceil(len));
    let mut off = 0;
    while off < n {
        let size = len.min(n - off);
        let offset = (start + off) % n;
        out.push(SubPath {
            offset,
            nodes: (0..size).map(|j| tour[(offset + j) % n]).collect(),
            pass_through: size < len,
        });
        off += size;
    }
    Ok(out)
}

/// Coordinates of the window rescaled by the global bounding box into the
/// unit square, preserving aspect ratio.
pub fn normalize_subpath(sp: &SubPath, inst: &Instance) -> Result<Vec<Point>, PathError> {
    let b = inst.bbox();
    let scale = b.width().max(b.height());
    if !(scale > 0.0) {
        return Err(PathError::DegenerateBBox);
    }
    Ok(sp
        .nodes
        .iter()
        .map(|&v| {
            let p = inst.node(v);
            Point::new((p.x - b.x_min) / scale, (p.y - b.y_min) / scale)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct BatchStats {
    pub submitted: usize,
    pub accepted: usize,
    pub contract_violations: usize,
}

/// Checks a returned local order and orients it start-to-end.
fn oriented(order: Vec<usize>, k: usize) -> Result<Vec<usize>, String> {
    check_permutation(&order, k).map_err(|r| r.to_string())?;
    match (order[0], order[k - 1]) {
        (0, e) if e == k - 1 => Ok(order),
        (s, 0) if s == k - 1 => Ok(order.into_iter().rev().collect()),
        (s, e) => Err(format!("endpoints {s}..{e}, expected 0..{}", k - 1)),
    }
}

/// Re-solves every non-pass-through window with one batched solver call and
/// replaces a window only if the new order is strictly shorter.
pub fn optimize_subpath_batch(
    subpaths: Vec<SubPath>,
    solver: &dyn SubPathSolver,
    inst: &Instance,
) -> Result<(Vec<SubPath>, BatchStats), PathError> {
    // Three-node windows have a single ordering with fixed ends.
    let picked: Vec<usize> = (0..subpaths.len())
        .filter(|&i| !subpaths[i].pass_through && subpaths[i].nodes.len() > 3)
        .collect();
    let mut stats = BatchStats {
        submitted: picked.len(),
        ..BatchStats::default()
    };
    if picked.is_empty() {
        return Ok((subpaths, stats));
    }
    let problems = picked
        .iter()
        .map(|&i| normalize_subpath(&subpaths[i], inst).map(OpenPathProblem::with_fixed_ends))
        .collect::<Result<Vec<_>, _>>()?;
    let results = solver.solve_batch(&problems)?;
    if results.len() != problems.len() {
        return Err(PathError::BatchSize {
            expected: problems.len(),
            got: results.len(),
        });
    }
    let mut subpaths = subpaths;
    for (&i, res) in picked.iter().zip(results) {
        let sp = &mut subpaths[i];
        let k = sp.nodes.len();
        match res.and_then(|o| oriented(o, k)) {
            Ok(order) => {
                let cand: Vec<usize> = order.iter().map(|&j| sp.nodes[j]).collect();
                if path_length(inst.nodes(), &cand) < path_length(inst.nodes(), &sp.nodes) - ACCEPT_EPS {
                    sp.nodes = cand;
                    stats.accepted += 1;
                }
            }
            Err(msg) => {
                log::warn!("{} solver: window at {} rejected: {msg}", solver.name(), sp.offset);
                stats.contract_violations += 1;
            }
        }
    }
    Ok((subpaths, stats))
}

/// Writes windows back into their tour positions. The windows must cover
/// every position exactly once.
pub fn merge_subpaths(subpaths: &[SubPath], n: usize) -> Result<Tour, PathError> {
    let mut out = vec![usize::MAX; n];
    for sp in subpaths {
        for (j, &v) in sp.nodes.iter().enumerate() {
            let pos = (sp.offset + j) % n;
            if out[pos] != usize::MAX {
                return Err(PathError::Overlap(pos));
            }
            out[pos] = v;
        }
    }
    if let Some(pos) = out.iter().position(|&v| v == usize::MAX) {
        return Err(PathError::Gap(pos));
    }
    Ok(Tour::new(out, n)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RoundInfo {
    pub len: usize,
    pub round: usize,
    pub kappa: usize,
    pub stats: BatchStats,
    pub length: f64,
}

#[derive(Clone, Debug)]
pub struct PathOutcome {
    pub tour: Tour,
    pub rounds: Vec<RoundInfo>,
}

pub fn run_path_phase(
    inst: &Instance,
    tour: &Tour,
    cfg: &PathPhaseConfig,
    solver: &dyn SubPathSolver,
) -> Result<PathOutcome, PathError> {
    run_path_phase_observed(inst, tour, cfg, solver, &mut |_, _| {})
}

/// Runs every (length, iterations) pair in order. `observer` sees each
/// round's summary and the tour after it.
pub fn run_path_phase_observed(
    inst: &Instance,
    tour: &Tour,
    cfg: &PathPhaseConfig,
    solver: &dyn SubPathSolver,
    observer: &mut dyn FnMut(&RoundInfo, &Tour),
) -> Result<PathOutcome, PathError> {
    inst.require_solvable()?;
    cfg.validate()?;
    let n = inst.len();
    check_permutation(tour.order(), n)?;
    let mut cur = tour.clone();
    let mut rounds = Vec::new();
    for (&len, &iters) in cfg.lengths.iter().zip(&cfg.iters) {
        let step = PathPhaseConfig::step(len, iters);
        let mut kappa = 1;
        for round in 0..iters {
            let windows = divide_solution(cur.order(), len, kappa)?;
            let (windows, stats) = optimize_subpath_batch(windows, solver, inst)?;
            cur = merge_subpaths(&windows, n)?;
            let length = crate::geom::cycle_length(inst.nodes(), cur.order());
            let info = RoundInfo {
                len,
                round,
                kappa,
                stats,
                length,
            };
            log::debug!("path len {len} round {round}: kappa {kappa}, accepted {}, length {length}", stats.accepted);
            observer(&info, &cur);
            rounds.push(info);
            kappa = (kappa - 1 + step) % n + 1;
        }
    }
    Ok(PathOutcome { tour: cur, rounds })
}
