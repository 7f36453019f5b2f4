//! End-to-end driver: build the initial tour, run the enabled phases,
//! validate, persist, and collect report rows.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::construct::random_insertion;
use crate::grid::{run_grid_phase, BudgetPolicy, GridConfig, GridError, IterationTrace};
use crate::instance::{generate_random, Instance, InstanceError};
use crate::path::protocol::{ProcessSubPathSolver, TcpSubPathSolver};
use crate::path::{
    run_path_phase, ExhaustiveSubPathSolver, HeuristicSubPathSolver, PathError, PathPhaseConfig, RoundInfo,
    SubPathSolver,
};
use crate::report::{compute_gap, PhaseTimes, RunReport, RunRow};
use crate::subsolver::{Budget, ExhaustiveSolver, LkhSolver, LocalSearchSolver, SolveError, SubProblem, SubSolver};
use crate::tour::{parse_tour_file, tour_length, write_tour_file, Tour, TourFileError, ViolationReport};
use crate::tsplib::{parse_tsplib, ParseError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: ParseError },
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("grid phase: {0}")]
    Grid(#[from] GridError),
    #[error("path phase: {0}")]
    Path(#[from] PathError),
    #[error("final tour invalid: {0}")]
    InvalidTour(#[from] ViolationReport),
    #[error("cannot start solver: {0}")]
    SolverSetup(std::io::Error),
    #[error("cannot persist tour to {path}: {source}")]
    Persist { path: PathBuf, source: std::io::Error },
    #[error("persisted tour {path} failed re-check: {detail}")]
    Recheck { path: PathBuf, detail: String },
    #[error("baseline: {0}")]
    Baseline(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Full,
    /// Grid phase only, no path refinement.
    GridOnly,
    /// Random-insertion tour refined by the path phase only.
    PathOnly,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Full, Mode::GridOnly, Mode::PathOnly];

    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Full => "full",
            Mode::GridOnly => "grid_only",
            Mode::PathOnly => "path_only",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s.replace('-', "_"))
            .ok_or_else(|| format!("unknown mode {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSource {
    File { path: PathBuf },
    Random { n: usize, seed: u64 },
}

impl InstanceSource {
    pub fn load(&self) -> Result<Instance, PipelineError> {
        match self {
            InstanceSource::File { path } => {
                let text = std::fs::read_to_string(path).map_err(|source| PipelineError::Read {
                    path: path.clone(),
                    source,
                })?;
                parse_tsplib(&text).map_err(|source| PipelineError::Parse {
                    path: path.clone(),
                    source,
                })
            }
            InstanceSource::Random { n, seed } => Ok(generate_random(*n, *seed)?),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SubSolverChoice {
    #[default]
    Builtin,
    Exhaustive,
    Lkh { exe: PathBuf },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SubPathChoice {
    #[default]
    Heuristic,
    Exhaustive,
    /// Child process speaking the line protocol on stdin/stdout.
    Command { argv: Vec<String> },
    Tcp { addr: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    /// `None` picks the iteration count from the instance size.
    pub grid: Option<GridConfig>,
    pub path: PathPhaseConfig,
    pub subsolver: SubSolverChoice,
    pub subpath: SubPathChoice,
    pub seed: u64,
    pub grid_budget: BudgetPolicy,
    pub path_budget: Budget,
    /// Directory for validated tour files.
    pub tour_dir: Option<PathBuf>,
    pub parallel_instances: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Full,
            grid: None,
            path: PathPhaseConfig::default(),
            subsolver: SubSolverChoice::Builtin,
            subpath: SubPathChoice::Heuristic,
            seed: 0,
            grid_budget: BudgetPolicy::default(),
            path_budget: Budget::default(),
            tour_dir: None,
            parallel_instances: false,
        }
    }
}

/// Solver instances built once per run, so external processes and
/// connections are reused across instances.
pub struct Solvers {
    pub sub: Box<dyn SubSolver>,
    pub path: Box<dyn SubPathSolver>,
}

impl Solvers {
    pub fn from_config(cfg: &RunConfig) -> Result<Self, PipelineError> {
        let sub: Box<dyn SubSolver> = match &cfg.subsolver {
            SubSolverChoice::Builtin => Box::new(LocalSearchSolver::default()),
            SubSolverChoice::Exhaustive => Box::new(ExhaustiveSolver),
            SubSolverChoice::Lkh { exe } => Box::new(LkhSolver::new(exe)),
        };
        let path: Box<dyn SubPathSolver> = match &cfg.subpath {
            SubPathChoice::Heuristic => Box::new(HeuristicSubPathSolver {
                budget: cfg.path_budget,
                seed: cfg.seed,
            }),
            SubPathChoice::Exhaustive => Box::new(ExhaustiveSubPathSolver),
            SubPathChoice::Command { argv } => {
                let (prog, args) = argv.split_first().ok_or_else(|| {
                    PipelineError::SolverSetup(std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty command"))
                })?;
                let mut cmd = Command::new(prog);
                cmd.args(args);
                Box::new(ProcessSubPathSolver::spawn(cmd).map_err(PipelineError::SolverSetup)?)
            }
            SubPathChoice::Tcp { addr } => {
                Box::new(TcpSubPathSolver::connect(addr.as_str()).map_err(PipelineError::SolverSetup)?)
            }
        };
        Ok(Self { sub, path })
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub tour: Tour,
    pub obj: f64,
    /// Length before the path phase, if it ran.
    pub pre_path_obj: Option<f64>,
    pub phases: PhaseTimes,
    pub grid_trace: Vec<IterationTrace>,
    pub path_rounds: Vec<RoundInfo>,
}

/// Runs the phases selected by `cfg.mode` on one instance.
pub fn solve_instance(inst: &Instance, cfg: &RunConfig, solvers: &Solvers) -> Result<Solution, PipelineError> {
    inst.require_solvable()?;
    let mut phases = PhaseTimes::default();
    let mut grid_trace = Vec::new();
    let t = Instant::now();
    let initial = match cfg.mode {
        Mode::Full | Mode::GridOnly => {
            let grid_cfg = cfg.grid.unwrap_or_else(|| GridConfig::for_size(inst.len()));
            let out = run_grid_phase(inst, &grid_cfg, solvers.sub.as_ref(), &cfg.grid_budget, cfg.seed)?;
            phases.grid_s = t.elapsed().as_secs_f64();
            grid_trace = out.trace;
            out.tour
        }
        Mode::PathOnly => {
            let tour = random_insertion(inst, cfg.seed)?;
            phases.init_s = t.elapsed().as_secs_f64();
            tour
        }
    };
    let (tour, pre_path_obj, path_rounds) = if cfg.mode == Mode::GridOnly {
        (initial, None, Vec::new())
    } else {
        let before = tour_length(inst, initial.order())?;
        let t = Instant::now();
        let out = run_path_phase(inst, &initial, &cfg.path, solvers.path.as_ref())?;
        phases.path_s = t.elapsed().as_secs_f64();
        (out.tour, Some(before), out.rounds)
    };
    let obj = tour_length(inst, tour.order())?;
    Ok(Solution {
        tour,
        obj,
        pre_path_obj,
        phases,
        grid_trace,
        path_rounds,
    })
}

/// Where a reference objective for the gap column comes from.
#[derive(Clone, Debug, Default)]
pub enum Baseline {
    #[default]
    None,
    /// The same configuration run in grid-only mode.
    GridOnly,
    /// A direct run of an external LKH executable on the whole instance.
    Lkh(LkhSolver),
    /// Known objectives keyed by instance name.
    Known(std::collections::HashMap<String, f64>),
}

impl Baseline {
    fn objective(&self, inst: &Instance, cfg: &RunConfig, solvers: &Solvers) -> Result<Option<f64>, PipelineError> {
        match self {
            Baseline::None => Ok(None),
            Baseline::Known(m) => Ok(m.get(inst.name()).copied()),
            Baseline::GridOnly => {
                let cfg = RunConfig {
                    mode: Mode::GridOnly,
                    ..cfg.clone()
                };
                Ok(Some(solve_instance(inst, &cfg, solvers)?.obj))
            }
            Baseline::Lkh(lkh) => {
                let p = SubProblem::from_points(inst.nodes(), (0..inst.len()).collect(), Vec::new());
                let route = lkh
                    .solve(&p, &Budget::default(), cfg.seed)
                    .map_err(|e: SolveError| PipelineError::Baseline(e.to_string()))?;
                Ok(Some(tour_length(inst, &route)?))
            }
        }
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

/// Writes the tour, then reads it back and checks it against the instance
/// and the claimed objective.
pub fn persist_and_recheck(dir: &Path, inst: &Instance, mode: Mode, sol: &Solution) -> Result<PathBuf, PipelineError> {
    let path = dir.join(format!("{}.{}.tour", sanitize(inst.name()), mode));
    std::fs::write(&path, write_tour_file(sol.tour.order(), sol.obj)).map_err(|source| PipelineError::Persist {
        path: path.clone(),
        source,
    })?;
    let recheck = |detail: String| PipelineError::Recheck {
        path: path.clone(),
        detail,
    };
    let text = std::fs::read_to_string(&path).map_err(|e| recheck(e.to_string()))?;
    let file = parse_tour_file(&text).map_err(|e: TourFileError| recheck(e.to_string()))?;
    let len = tour_length(inst, &file.order).map_err(|e| recheck(e.to_string()))?;
    if len != sol.obj || file.length != sol.obj {
        return Err(recheck(format!("length {len} (header {}) vs objective {}", file.length, sol.obj)));
    }
    Ok(path)
}

fn run_one(
    dataset: &str,
    source: &InstanceSource,
    cfg: &RunConfig,
    solvers: &Solvers,
    baseline: &Baseline,
) -> RunRow {
    let mut row = RunRow {
        dataset: dataset.to_string(),
        name: String::new(),
        n: 0,
        mode: cfg.mode.to_string(),
        seed: cfg.seed,
        obj: None,
        baseline: None,
        gap: None,
        time_s: 0.0,
        phases: PhaseTimes::default(),
        tour_file: None,
        error: None,
    };
    let result = (|| -> Result<(), PipelineError> {
        let inst = source.load()?;
        row.name = inst.name().to_string();
        row.n = inst.len();
        let t = Instant::now();
        let sol = solve_instance(&inst, cfg, solvers)?;
        row.time_s = t.elapsed().as_secs_f64();
        row.phases = sol.phases;
        if let Some(dir) = &cfg.tour_dir {
            row.tour_file = Some(persist_and_recheck(dir, &inst, cfg.mode, &sol)?);
        }
        row.obj = Some(sol.obj);
        row.baseline = baseline.objective(&inst, cfg, solvers)?;
        row.gap = row.baseline.and_then(|b| compute_gap(sol.obj, b).ok());
        Ok(())
    })();
    if let Err(e) = result {
        log::error!("{dataset}/{}: {e}", row.name);
        row.error = Some(e.to_string());
    }
    row
}

/// Runs every `(dataset, source)` pair; failures are recorded in their row
/// and do not stop the run.
pub fn run_pipeline(
    sources: &[(String, InstanceSource)],
    cfg: &RunConfig,
    solvers: &Solvers,
    baseline: &Baseline,
) -> RunReport {
    let rows = if cfg.parallel_instances {
        sources
            .par_iter()
            .map(|(d, s)| run_one(d, s, cfg, solvers, baseline))
            .collect()
    } else {
        sources.iter().map(|(d, s)| run_one(d, s, cfg, solvers, baseline)).collect()
    };
    RunReport {
        config: serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null),
        rows,
    }
}

/// Conventional dataset label for a node count, e.g. `TSP1K`.
pub fn dataset_label(n: usize) -> String {
    if n >= 1000 && n % 1000 == 0 {
        format!("TSP{}K", n / 1000)
    } else {
        format!("TSP{n}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(mode: Mode) -> RunConfig {
        RunConfig {
            mode,
            path: PathPhaseConfig {
                lengths: vec![20, 10],
                iters: vec![4, 2],
            },
            seed: 7,
            ..RunConfig::default()
        }
    }

    #[test]
    fn modes_parse_and_print() {
        for m in Mode::ALL {
            assert_eq!(m.to_string().parse::<Mode>().unwrap(), m);
        }
        assert_eq!("grid-only".parse::<Mode>().unwrap(), Mode::GridOnly);
        assert!("both".parse::<Mode>().is_err());
    }

    #[test]
    fn full_is_no_worse_than_grid_only() {
        let inst = generate_random(400, 3).unwrap();
        let full_cfg = small_cfg(Mode::Full);
        let solvers = Solvers::from_config(&full_cfg).unwrap();
        let full = solve_instance(&inst, &full_cfg, &solvers).unwrap();
        let grid = solve_instance(&inst, &small_cfg(Mode::GridOnly), &solvers).unwrap();
        assert_eq!(full.pre_path_obj, Some(grid.obj));
        assert!(full.obj <= grid.obj);
        assert!(grid.path_rounds.is_empty());
        assert_eq!(full.path_rounds.len(), 6);
    }

    #[test]
    fn path_only_improves_random_insertion() {
        let inst = generate_random(300, 4).unwrap();
        let cfg = small_cfg(Mode::PathOnly);
        let solvers = Solvers::from_config(&cfg).unwrap();
        let sol = solve_instance(&inst, &cfg, &solvers).unwrap();
        let ri = random_insertion(&inst, cfg.seed).unwrap();
        assert_eq!(sol.pre_path_obj, Some(tour_length(&inst, ri.order()).unwrap()));
        assert!(sol.obj < sol.pre_path_obj.unwrap());
        assert!(sol.grid_trace.is_empty());
    }

    #[test]
    fn errors_are_recorded_and_run_continues() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            tour_dir: Some(dir.path().to_path_buf()),
            ..small_cfg(Mode::Full)
        };
        let solvers = Solvers::from_config(&cfg).unwrap();
        let sources = vec![
            ("bad".to_string(), InstanceSource::File { path: dir.path().join("missing.tsp") }),
            ("tiny".to_string(), InstanceSource::Random { n: 2, seed: 1 }),
            ("ok".to_string(), InstanceSource::Random { n: 120, seed: 1 }),
        ];
        let report = run_pipeline(&sources, &cfg, &solvers, &Baseline::GridOnly);
        assert!(report.rows[0].error.as_deref().unwrap().contains("missing.tsp"));
        assert!(report.rows[1].error.is_some());
        let ok = &report.rows[2];
        assert!(ok.error.is_none(), "{:?}", ok.error);
        assert!(ok.gap.unwrap() <= 0.0);
        let text = std::fs::read_to_string(ok.tour_file.as_ref().unwrap()).unwrap();
        let inst = generate_random(120, 1).unwrap();
        let file = parse_tour_file(&text).unwrap();
        assert_eq!(tour_length(&inst, &file.order).unwrap(), ok.obj.unwrap());
        assert_eq!(report.config["mode"], "full");
    }

    #[test]
    fn recheck_catches_tampered_objective() {
        let dir = tempfile::tempdir().unwrap();
        let inst = generate_random(50, 2).unwrap();
        let cfg = small_cfg(Mode::GridOnly);
        let solvers = Solvers::from_config(&cfg).unwrap();
        let mut sol = solve_instance(&inst, &cfg, &solvers).unwrap();
        persist_and_recheck(dir.path(), &inst, cfg.mode, &sol).unwrap();
        sol.obj += 1e-6;
        assert!(matches!(
            persist_and_recheck(dir.path(), &inst, cfg.mode, &sol),
            Err(PipelineError::Recheck { .. })
        ));
    }

    #[test]
    fn deterministic_under_sweep_budgets() {
        let cfg = RunConfig {
            parallel_instances: true,
            ..small_cfg(Mode::Full)
        };
        let solvers = Solvers::from_config(&cfg).unwrap();
        let sources: Vec<_> = (0..4)
            .map(|s| ("r".to_string(), InstanceSource::Random { n: 250, seed: s }))
            .collect();
        let a = run_pipeline(&sources, &cfg, &solvers, &Baseline::None);
        let b = run_pipeline(&sources, &cfg, &solvers, &Baseline::None);
        let objs = |r: &RunReport| r.rows.iter().map(|x| x.obj.unwrap()).collect::<Vec<_>>();
        assert_eq!(objs(&a), objs(&b));
    }

    #[test]
    fn labels() {
        assert_eq!(dataset_label(1000), "TSP1K");
        assert_eq!(dataset_label(100_000), "TSP100K");
        assert_eq!(dataset_label(1500), "TSP1500");
    }
}
