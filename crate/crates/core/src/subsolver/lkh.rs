//! Adapter for an external LKH-3 executable.
//!
//! Each call writes a TSPLIB problem (with `FIXED_EDGES_SECTION`) and a
//! parameter file into a fresh temporary directory, runs the binary, and reads
//! back the TSPLIB tour it writes.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::Command;

use thiserror::Error;

use super::{analyze, Budget, SolveError, SubProblem, SubSolver};
use crate::geom::Rect;

/// Environment variable naming the LKH executable.
pub const LKH_ENV_VAR: &str = "DUALOPT_LKH";

/// Coordinates are scaled so the larger bounding-box side spans this many
/// units, since LKH rounds `EUC_2D` distances to integers.
const DEFAULT_SCALE_EXTENT: f64 = 1_000_000.0;

#[derive(Debug, Error)]
pub enum ExternalError {
    #[error("executable {0:?} not found")]
    MissingBinary(PathBuf),
    #[error("i/o error talking to external solver: {0}")]
    Io(#[from] std::io::Error),
    #[error("external solver exited with {status}: {stderr}")]
    NonZeroExit { status: String, stderr: String },
    #[error("unparsable tour output: {0}")]
    UnparsableTour(String),
    #[error("fixed edge ({a}, {b}) absent from returned tour")]
    FixedEdgeMissing { a: usize, b: usize },
}

#[derive(Clone, Debug)]
pub struct LkhSolver {
    pub exe: PathBuf,
    /// Larger bounding-box side after scaling.
    pub scale_extent: f64,
    /// Extra `KEY = VALUE` lines appended to the parameter file.
    pub extra_params: Vec<(String, String)>,
}

impl LkhSolver {
    pub fn new(exe: impl Into<PathBuf>) -> Self {
        Self {
            exe: exe.into(),
            scale_extent: DEFAULT_SCALE_EXTENT,
            extra_params: Vec::new(),
        }
    }

    /// Solver for the executable named by [`LKH_ENV_VAR`], if set.
    pub fn from_env() -> Option<Self> {
        std::env::var_os(LKH_ENV_VAR).map(Self::new)
    }

    fn run(&self, p: &SubProblem, budget: &Budget, seed: u64) -> Result<Vec<usize>, ExternalError> {
        if !self.exe.is_file() {
            return Err(ExternalError::MissingBinary(self.exe.clone()));
        }
        let dir = tempfile::Builder::new().prefix("dualopt-lkh").tempdir()?;
        let problem_path = dir.path().join("problem.tsp");
        let tour_path = dir.path().join("out.tour");
        let par_path = dir.path().join("problem.par");
        fs::write(&problem_path, write_lkh_problem(p, self.scale_extent))?;

        let mut par = String::new();
        let _ = writeln!(par, "PROBLEM_FILE = {}", problem_path.display());
        let _ = writeln!(par, "OUTPUT_TOUR_FILE = {}", tour_path.display());
        let _ = writeln!(par, "SEED = {}", seed % (i32::MAX as u64));
        if let Some(t) = budget.time_limit {
            let _ = writeln!(par, "TIME_LIMIT = {}", t.as_secs_f64());
        }
        for (k, v) in &self.extra_params {
            let _ = writeln!(par, "{k} = {v}");
        }
        fs::write(&par_path, par)?;

        let out = Command::new(&self.exe)
            .arg(&par_path)
            .current_dir(dir.path())
            .output()?;
        if !out.status.success() {
            return Err(ExternalError::NonZeroExit {
                status: out.status.to_string(),
                stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
            });
        }
        let text = fs::read_to_string(&tour_path)
            .map_err(|e| ExternalError::UnparsableTour(format!("cannot read output tour: {e}")))?;
        let local = parse_lkh_tour(&text, p.len())?;
        let m = p.len();
        let mut pos = vec![0; m];
        for (i, &l) in local.iter().enumerate() {
            pos[l] = i;
        }
        let local_of: std::collections::HashMap<usize, usize> =
            p.node_ids.iter().enumerate().map(|(i, &g)| (g, i)).collect();
        for e in &p.fixed_edges {
            let (i, j) = (pos[local_of[&e.a]], pos[local_of[&e.b]]);
            if (i + 1) % m != j && (j + 1) % m != i {
                return Err(ExternalError::FixedEdgeMissing { a: e.a, b: e.b });
            }
        }
        let route: Vec<usize> = local.iter().map(|&i| p.node_ids[i]).collect();
        Ok(route)
    }
}

impl SubSolver for LkhSolver {
    fn solve(&self, problem: &SubProblem, budget: &Budget, seed: u64) -> Result<Vec<usize>, SolveError> {
        budget.validate()?;
        analyze(problem)?;
        if problem.len() <= 3 {
            // Every cyclic order of three nodes contains all edges; LKH needs more.
            return Ok(problem.node_ids.clone());
        }
        Ok(self.run(problem, budget, seed)?)
    }

    fn name(&self) -> &str {
        "lkh"
    }
}

/// TSPLIB problem text for `p` using 1-based local indices, coordinates
/// scaled so the larger bounding-box side equals `scale_extent`.
pub fn write_lkh_problem(p: &SubProblem, scale_extent: f64) -> String {
    let bbox = Rect::bounding(&p.coords).unwrap_or(Rect {
        x_min: 0.0,
        x_max: 1.0,
        y_min: 0.0,
        y_max: 1.0,
    });
    let extent = bbox.width().max(bbox.height());
    let scale = if extent > 0.0 { scale_extent / extent } else { 1.0 };
    let index: std::collections::HashMap<usize, usize> =
        p.node_ids.iter().enumerate().map(|(i, &g)| (g, i + 1)).collect();
    let mut out = String::new();
    let _ = writeln!(out, "NAME : subproblem");
    let _ = writeln!(out, "TYPE : TSP");
    let _ = writeln!(out, "DIMENSION : {}", p.len());
    let _ = writeln!(out, "EDGE_WEIGHT_TYPE : EUC_2D");
    let _ = writeln!(out, "NODE_COORD_SECTION");
    for (i, c) in p.coords.iter().enumerate() {
        let x = (c.x - bbox.x_min) * scale;
        let y = (c.y - bbox.y_min) * scale;
        let _ = writeln!(out, "{} {:.3} {:.3}", i + 1, x, y);
    }
    if !p.fixed_edges.is_empty() {
        let _ = writeln!(out, "FIXED_EDGES_SECTION");
        for e in &p.fixed_edges {
            let _ = writeln!(out, "{} {}", index[&e.a], index[&e.b]);
        }
        let _ = writeln!(out, "-1");
    }
    out.push_str("EOF\n");
    out
}

/// Parses a TSPLIB tour file into 0-based local indices and checks it is a
/// permutation of `0..dimension`.
pub fn parse_lkh_tour(text: &str, dimension: usize) -> Result<Vec<usize>, ExternalError> {
    let bad = |msg: String| ExternalError::UnparsableTour(msg);
    let mut lines = text.lines().map(str::trim);
    if !lines.by_ref().any(|l| l == "TOUR_SECTION") {
        return Err(bad("missing TOUR_SECTION".into()));
    }
    let mut order = Vec::with_capacity(dimension);
    let mut terminated = false;
    'outer: for line in lines {
        for tok in line.split_whitespace() {
            if tok == "-1" || tok == "EOF" {
                terminated = true;
                break 'outer;
            }
            let id: usize = tok.parse().map_err(|_| bad(format!("bad node id {tok:?}")))?;
            if id == 0 || id > dimension {
                return Err(bad(format!("node id {id} outside 1..={dimension}")));
            }
            order.push(id - 1);
            if order.len() > dimension {
                return Err(bad("more nodes than DIMENSION".into()));
            }
        }
    }
    if !terminated {
        return Err(bad("TOUR_SECTION not terminated by -1".into()));
    }
    crate::tour::check_permutation(&order, dimension).map_err(|r| bad(r.to_string()))?;
    Ok(order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::generate_random;
    use crate::subsolver::FixedEdge;

    #[test]
    fn problem_file_uses_local_one_based_ids() {
        let inst = generate_random(4, 1).unwrap();
        let p = SubProblem::from_points(
            inst.nodes(),
            vec![3, 2, 1, 0],
            vec![FixedEdge { a: 2, b: 0, cost: 1.0 }],
        );
        let text = write_lkh_problem(&p, 1000.0);
        assert!(text.contains("DIMENSION : 4"));
        assert!(text.contains("FIXED_EDGES_SECTION\n2 4\n-1\n"));
        let parsed = crate::tsplib::parse_tsplib(&text).unwrap();
        assert_eq!(parsed.len(), 4);
        let b = parsed.bbox();
        assert!((b.width().max(b.height()) - 1000.0).abs() < 1e-2);
    }

    #[test]
    fn tour_parse_round_trip_50() {
        let perm: Vec<usize> = (0..50).map(|i| (i * 7) % 50).collect();
        let mut text = String::from("NAME : x\nTYPE : TOUR\nDIMENSION : 50\nTOUR_SECTION\n");
        for i in &perm {
            text.push_str(&format!("{}\n", i + 1));
        }
        text.push_str("-1\nEOF\n");
        assert_eq!(parse_lkh_tour(&text, 50).unwrap(), perm);
    }

    #[test]
    fn tour_parse_errors() {
        assert!(parse_lkh_tour("1\n2\n3\n-1\n", 3).is_err());
        assert!(parse_lkh_tour("TOUR_SECTION\n1\n2\n2\n-1\n", 3).is_err());
        assert!(parse_lkh_tour("TOUR_SECTION\n1\n2\n3\n", 3).is_err());
        assert!(parse_lkh_tour("TOUR_SECTION\n1\n2\n9\n-1\n", 3).is_err());
        assert!(parse_lkh_tour("TOUR_SECTION\n1 2 3 -1\n", 3).is_ok());
    }

    #[test]
    fn missing_binary() {
        let inst = generate_random(6, 1).unwrap();
        let p = SubProblem::from_points(inst.nodes(), (0..6).collect(), vec![]);
        let s = LkhSolver::new("/nonexistent/LKH");
        assert!(matches!(
            s.solve(&p, &Budget::default(), 1),
            Err(SolveError::External(ExternalError::MissingBinary(_)))
        ));
    }

    #[cfg(unix)]
    fn fake_lkh(dir: &std::path::Path, body: &str) -> LkhSolver {
        use std::os::unix::fs::PermissionsExt;
        let path = dir.join("fake-lkh");
        let script = format!(
            "#!/bin/sh\nout=$(sed -n 's/^OUTPUT_TOUR_FILE = //p' \"$1\")\nprob=$(sed -n 's/^PROBLEM_FILE = //p' \"$1\")\nn=$(sed -n 's/^DIMENSION : //p' \"$prob\")\n{body}\n"
        );
        fs::write(&path, script).unwrap();
        fs::set_permissions(&path, fs::Permissions::from_mode(0o755)).unwrap();
        LkhSolver::new(path)
    }

    #[cfg(unix)]
    #[test]
    fn fake_binary_outcomes() {
        let dir = tempfile::tempdir().unwrap();
        let inst = generate_random(6, 2).unwrap();
        let ids: Vec<usize> = vec![10, 11, 12, 13, 14, 15];
        let pts: Vec<_> = inst.nodes().to_vec();
        let mk = |fixed: Vec<FixedEdge>| SubProblem::new(ids.clone(), pts.clone(), fixed);
        let identity = r#"{ echo TOUR_SECTION; seq 1 "$n"; echo -1; echo EOF; } > "$out""#;

        let ok = fake_lkh(dir.path(), identity);
        let fixed_ok = mk(vec![FixedEdge { a: 11, b: 12, cost: 0.0 }]);
        assert_eq!(ok.solve(&fixed_ok, &Budget::default(), 1).unwrap(), ids);

        let missing = mk(vec![FixedEdge { a: 10, b: 12, cost: 0.0 }]);
        assert!(matches!(
            ok.solve(&missing, &Budget::default(), 1),
            Err(SolveError::External(ExternalError::FixedEdgeMissing { a: 10, b: 12 }))
        ));

        let failing = fake_lkh(dir.path(), "echo broken >&2; exit 3");
        match failing.solve(&mk(vec![]), &Budget::default(), 1) {
            Err(SolveError::External(ExternalError::NonZeroExit { stderr, .. })) => assert_eq!(stderr, "broken"),
            other => panic!("unexpected {other:?}"),
        }

        let garbage = fake_lkh(dir.path(), r#"echo nonsense > "$out""#);
        assert!(matches!(
            garbage.solve(&mk(vec![]), &Budget::default(), 1),
            Err(SolveError::External(ExternalError::UnparsableTour(_)))
        ));

        let silent = fake_lkh(dir.path(), "true");
        assert!(matches!(
            silent.solve(&mk(vec![]), &Budget::default(), 1),
            Err(SolveError::External(ExternalError::UnparsableTour(_)))
        ));
    }

    #[test]
    fn real_binary_when_available() {
        let Some(lkh) = LkhSolver::from_env() else {
            eprintln!("{LKH_ENV_VAR} not set; skipping");
            return;
        };
        let inst = generate_random(40, 5).unwrap();
        let pts = inst.nodes();
        let fixed = vec![
            FixedEdge { a: 0, b: 1, cost: pts[0].dist(&pts[1]) },
            FixedEdge { a: 1, b: 2, cost: pts[1].dist(&pts[2]) },
        ];
        let p = SubProblem::from_points(pts, (0..40).collect(), fixed);
        let r = lkh.solve(&p, &Budget::default(), 1).unwrap();
        crate::subsolver::verify_route(&p, &r).unwrap();
    }
}
