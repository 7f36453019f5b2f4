use std::io::{self, BufReader};
use std::net::TcpListener;
use std::path::PathBuf;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dualopt::grid::{BudgetPolicy, GridConfig};
use dualopt::path::protocol::{serve, serve_tcp};
use dualopt::path::{HeuristicSubPathSolver, PathPhaseConfig};
use dualopt::pipeline::{
    dataset_label, run_pipeline, solve_instance, Baseline, InstanceSource, Mode, RunConfig, Solvers,
    SubPathChoice, SubSolverChoice,
};
use dualopt::report::{emit_report, render_report, PhaseTimes, ReportFormat, RunReport, RunRow};
use dualopt::subsolver::{Budget, LkhSolver, LKH_ENV_VAR};
use dualopt::tour::write_tour_file;
use dualopt::tsplib::write_tsplib;
use dualopt::{construct, generate_random, tour_length};

#[derive(Parser)]
#[command(name = "dualopt", version, about = "Grid and path decomposition solver for large Euclidean TSP")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve a single instance.
    Solve(SolveArgs),
    /// Solve a sweep of instances and report per-dataset means.
    Bench(BenchArgs),
    /// Write uniform random instances as TSPLIB files.
    Gen(GenArgs),
    /// Compare full, grid-only and path-only modes on the same instances.
    Ablate(AblateArgs),
    /// Serve the heuristic sub-path solver over the line protocol.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SubSolverKind {
    Builtin,
    Exhaustive,
    Lkh,
}

#[derive(Clone, Copy, ValueEnum)]
enum SubPathKind {
    Heuristic,
    Exhaustive,
    Command,
    Tcp,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = "full")]
    mode: Mode,
    /// Grid iterations; chosen from the instance size when omitted.
    #[arg(long)]
    n_iter: Option<u32>,
    #[arg(long, default_value_t = 1.0)]
    margin_scale: f64,
    /// Window lengths for the path phase.
    #[arg(long, value_delimiter = ',', default_value = "50,20,10")]
    lengths: Vec<usize>,
    /// Rounds per window length.
    #[arg(long, value_delimiter = ',', default_value = "25,10,5")]
    iters: Vec<usize>,
    #[arg(long, value_enum, default_value = "builtin")]
    subsolver: SubSolverKind,
    #[arg(long, env = LKH_ENV_VAR)]
    lkh_exe: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "heuristic")]
    subpath: SubPathKind,
    /// Command line of an external sub-path solver (whitespace separated).
    #[arg(long, env = "DUALOPT_SUBPATH_CMD")]
    subpath_cmd: Option<String>,
    #[arg(long, env = "DUALOPT_SUBPATH_ADDR")]
    subpath_addr: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Improvement sweeps per cell solve.
    #[arg(long, default_value_t = 1000)]
    sweeps: usize,
    /// Wall-clock cell budgets (50 ms per 100 nodes) instead of sweep limits.
    #[arg(long)]
    scaled_time: bool,
    /// Improvement sweeps per open-path solve.
    #[arg(long, default_value_t = 1000)]
    path_sweeps: usize,
    /// Optional wall-clock limit per open-path solve, in milliseconds.
    #[arg(long)]
    path_time_ms: Option<u64>,
    /// Directory for validated tour files.
    #[arg(long)]
    tour_dir: Option<PathBuf>,
    /// Solve instances concurrently.
    #[arg(long)]
    parallel: bool,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let subsolver = match self.subsolver {
            SubSolverKind::Builtin => SubSolverChoice::Builtin,
            SubSolverKind::Exhaustive => SubSolverChoice::Exhaustive,
            SubSolverKind::Lkh => SubSolverChoice::Lkh {
                exe: self.lkh_exe.clone().context("--subsolver lkh needs --lkh-exe or DUALOPT_LKH")?,
            },
        };
        let subpath = match self.subpath {
            SubPathKind::Heuristic => SubPathChoice::Heuristic,
            SubPathKind::Exhaustive => SubPathChoice::Exhaustive,
            SubPathKind::Command => SubPathChoice::Command {
                argv: self
                    .subpath_cmd
                    .as_deref()
                    .context("--subpath command needs --subpath-cmd")?
                    .split_whitespace()
                    .map(String::from)
                    .collect(),
            },
            SubPathKind::Tcp => SubPathChoice::Tcp {
                addr: self.subpath_addr.clone().context("--subpath tcp needs --subpath-addr")?,
            },
        };
        let grid = self.n_iter.map(|n_iter| GridConfig {
            n_iter,
            margin_scale: self.margin_scale,
        });
        if let Some(g) = &grid {
            g.validate()?;
        }
        let path = PathPhaseConfig {
            lengths: self.lengths.clone(),
            iters: self.iters.clone(),
        };
        path.validate()?;
        let grid_budget = if self.scaled_time {
            BudgetPolicy::ScaledTime
        } else {
            BudgetPolicy::Fixed(Budget::sweeps(self.sweeps))
        };
        let path_budget = Budget {
            max_sweeps: self.path_sweeps,
            time_limit: self.path_time_ms.map(Duration::from_millis),
        };
        grid_budget.for_nodes(1).validate()?;
        path_budget.validate()?;
        if let Some(dir) = &self.tour_dir {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        Ok(RunConfig {
            mode: self.mode,
            grid,
            path,
            subsolver,
            subpath,
            seed: self.seed,
            grid_budget,
            path_budget,
            tour_dir: self.tour_dir.clone(),
            parallel_instances: self.parallel,
        })
    }
}

#[derive(Args)]
struct SolveArgs {
    /// TSPLIB instance file.
    #[arg(long, conflicts_with = "random")]
    input: Option<PathBuf>,
    /// Solve a random instance with this many nodes instead.
    #[arg(long)]
    random: Option<usize>,
    /// Seed for the random instance.
    #[arg(long, default_value_t = 0)]
    instance_seed: u64,
    /// Where to write the tour file.
    #[arg(long)]
    tour_out: Option<PathBuf>,
    /// JSON dump of the grid phase, one entry per iteration.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Report file; format follows the extension unless --format is given.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    format: Option<ReportFormat>,
}

impl ReportArgs {
    fn emit(&self, report: &RunReport) -> Result<()> {
        match &self.report {
            Some(path) => {
                let format = self
                    .format
                    .or_else(|| ReportFormat::from_path(path))
                    .unwrap_or(ReportFormat::Json);
                emit_report(report, format, path)?;
            }
            None => print!("{}", render_report(report, self.format.unwrap_or(ReportFormat::Markdown))?),
        }
        Ok(())
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    None,
    GridOnly,
    Lkh,
}

#[derive(Args)]
struct BenchArgs {
    /// TSPLIB files to solve; each file is its own dataset.
    inputs: Vec<PathBuf>,
    /// Random instance sizes, one dataset per size.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    /// Random instances per size.
    #[arg(long, default_value_t = 16)]
    count: u64,
    /// Seed of the first random instance; later ones count up.
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    #[arg(long, value_enum, default_value = "none")]
    baseline: BaselineKind,
    #[command(flatten)]
    out: ReportArgs,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 16)]
    count: u64,
    #[arg(long, default_value_t = 0)]
    seed_base: u64,
    #[command(flatten)]
    out: ReportArgs,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Transport {
    Stdio,
    Tcp,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, value_enum, default_value = "stdio")]
    transport: Transport,
    #[arg(long, default_value = "127.0.0.1:7878")]
    addr: String,
    #[arg(long, default_value_t = 1000)]
    sweeps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().cmd {
        Cmd::Solve(a) => solve(a),
        Cmd::Bench(a) => bench(a),
        Cmd::Gen(a) => gen(a),
        Cmd::Ablate(a) => ablate(a),
        Cmd::Serve(a) => serve_cmd(a),
    }
}

fn solve(a: SolveArgs) -> Result<()> {
    let source = match (&a.input, a.random) {
        (Some(path), _) => InstanceSource::File { path: path.clone() },
        (None, Some(n)) => InstanceSource::Random {
            n,
            seed: a.instance_seed,
        },
        (None, None) => bail!("give --input FILE or --random N"),
    };
    let inst = source.load()?;
    let cfg = a.run.config()?;
    let solvers = Solvers::from_config(&cfg)?;
    let t = std::time::Instant::now();
    let sol = solve_instance(&inst, &cfg, &solvers)?;
    let secs = t.elapsed().as_secs_f64();
    if let Some(path) = &a.tour_out {
        std::fs::write(path, write_tour_file(sol.tour.order(), sol.obj))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &a.trace_out {
        std::fs::write(path, serde_json::to_string_pretty(&sol.grid_trace)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    println!(
        "{} n={} mode={} obj={:.6} time={secs:.3}s grid={:.3}s path={:.3}s",
        inst.name(),
        inst.len(),
        cfg.mode,
        sol.obj,
        sol.phases.grid_s,
        sol.phases.path_s
    );
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let mut sources: Vec<(String, InstanceSource)> = a
        .inputs
        .iter()
        .map(|p| {
            let label = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into());
            (label, InstanceSource::File { path: p.clone() })
        })
        .collect();
    for &n in &a.sizes {
        for i in 0..a.count {
            sources.push((
                dataset_label(n),
                InstanceSource::Random {
                    n,
                    seed: a.seed_base + i,
                },
            ));
        }
    }
    if sources.is_empty() {
        bail!("nothing to run: give instance files or --sizes");
    }
    let cfg = a.run.config()?;
    let baseline = match a.baseline {
        BaselineKind::None => Baseline::None,
        BaselineKind::GridOnly => Baseline::GridOnly,
        BaselineKind::Lkh => Baseline::Lkh(LkhSolver::new(
            a.run.lkh_exe.clone().context("--baseline lkh needs --lkh-exe or DUALOPT_LKH")?,
        )),
    };
    let solvers = Solvers::from_config(&cfg)?;
    let report = run_pipeline(&sources, &cfg, &solvers, &baseline);
    a.out.emit(&report)?;
    let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        bail!("{failed} of {} instances failed", report.rows.len());
    }
    Ok(())
}

fn gen(a: GenArgs) -> Result<()> {
    std::fs::create_dir_all(&a.out_dir)?;
    for i in 0..a.count {
        let inst = generate_random(a.n, a.seed + i)?;
        let path = a.out_dir.join(format!("{}.tsp", inst.name()));
        std::fs::write(&path, write_tsplib(&inst)).with_context(|| format!("writing {}", path.display()))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn ablate(a: AblateArgs) -> Result<()> {
    let base = a.run.config()?;
    let sources: Vec<(String, InstanceSource)> = (0..a.count)
        .map(|i| {
            (
                String::new(),
                InstanceSource::Random {
                    n: a.n,
                    seed: a.seed_base + i,
                },
            )
        })
        .collect();
    let mut report = RunReport {
        config: serde_json::to_value(&base)?,
        rows: Vec::new(),
    };
    for mode in Mode::ALL {
        let cfg = RunConfig { mode, ..base.clone() };
        let solvers = Solvers::from_config(&cfg)?;
        let labelled: Vec<_> = sources.iter().map(|(_, s)| (mode.to_string(), s.clone())).collect();
        report.rows.extend(run_pipeline(&labelled, &cfg, &solvers, &Baseline::None).rows);
    }
    // Random insertion as the starting point of the path-only variant.
    for (_, s) in &sources {
        let inst = s.load()?;
        let t = std::time::Instant::now();
        let tour = construct::random_insertion(&inst, base.seed)?;
        let row = RunRow {
            dataset: "random_insertion".into(),
            name: inst.name().into(),
            n: inst.len(),
            mode: "random_insertion".into(),
            seed: base.seed,
            obj: Some(tour_length(&inst, tour.order())?),
            baseline: None,
            gap: None,
            time_s: t.elapsed().as_secs_f64(),
            phases: PhaseTimes::default(),
            tour_file: None,
            error: None,
        };
        report.rows.push(row);
    }
    a.out.emit(&report)
}

fn serve_cmd(a: ServeArgs) -> Result<()> {
    let solver = HeuristicSubPathSolver {
        budget: Budget::sweeps(a.sweeps),
        seed: a.seed,
    };
    match a.transport {
        Transport::Stdio => serve(&solver, BufReader::new(io::stdin().lock()), io::stdout().lock())?,
        Transport::Tcp => {
            let listener = TcpListener::bind(&a.addr).with_context(|| format!("binding {}", a.addr))?;
            eprintln!("listening on {}", listener.local_addr()?);
            serve_tcp(&solver, listener, None)?;
        }
    }
    Ok(())
}
