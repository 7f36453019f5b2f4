//! Exact solver by enumeration, for tiny sub-problems and as a test oracle.

use super::{analyze, to_global, Budget, LocalProblem, SolveError, SubProblem, SubSolver};

pub const EXHAUSTIVE_MAX_NODES: usize = 10;

#[derive(Clone, Copy, Debug, Default)]
pub struct ExhaustiveSolver;

impl SubSolver for ExhaustiveSolver {
    fn solve(&self, problem: &SubProblem, _budget: &Budget, _seed: u64) -> Result<Vec<usize>, SolveError> {
        solve_exhaustive(problem)
    }

    fn name(&self) -> &str {
        "exhaustive"
    }
}

/// Optimal closed route honoring the fixed edges. Fixed paths are contracted
/// and enumerated in both orientations; the first atom is pinned.
pub fn solve_exhaustive(problem: &SubProblem) -> Result<Vec<usize>, SolveError> {
    if problem.len() > EXHAUSTIVE_MAX_NODES {
        return Err(SolveError::TooLarge {
            size: problem.len(),
            max: EXHAUSTIVE_MAX_NODES,
        });
    }
    let lp = analyze(problem)?;
    if lp.atoms.is_empty() {
        return Ok(Vec::new());
    }
    let mut dfs = Dfs {
        lp: &lp,
        used: vec![false; lp.atoms.len()],
        chosen: vec![(0, false)],
        best_cost: f64::INFINITY,
        best: Vec::new(),
    };
    dfs.used[0] = true;
    let tail = *lp.atoms[0].last().unwrap();
    dfs.go(tail, 0.0);
    let mut order = Vec::with_capacity(problem.len());
    for &(a, rev) in &dfs.best {
        let atom = &lp.atoms[a];
        if rev {
            order.extend(atom.iter().rev());
        } else {
            order.extend_from_slice(atom);
        }
    }
    Ok(to_global(problem, &order))
}

struct Dfs<'a, 'p> {
    lp: &'a LocalProblem<'p>,
    used: Vec<bool>,
    chosen: Vec<(usize, bool)>,
    best_cost: f64,
    best: Vec<(usize, bool)>,
}

impl Dfs<'_, '_> {
    fn go(&mut self, tail: usize, cost: f64) {
        if cost >= self.best_cost {
            return;
        }
        let atoms = &self.lp.atoms;
        if self.chosen.len() == atoms.len() {
            let total = cost + self.lp.d(tail, atoms[0][0]);
            if total < self.best_cost {
                self.best_cost = total;
                self.best = self.chosen.clone();
            }
            return;
        }
        for a in 1..atoms.len() {
            if self.used[a] {
                continue;
            }
            self.used[a] = true;
            let atom = &atoms[a];
            let (head, end) = (atom[0], *atom.last().unwrap());
            let orientations: &[bool] = if atom.len() == 1 { &[false] } else { &[false, true] };
            for &rev in orientations {
                let (enter, exit) = if rev { (end, head) } else { (head, end) };
                self.chosen.push((a, rev));
                self.go(exit, cost + self.lp.d(tail, enter));
                self.chosen.pop();
            }
            self.used[a] = false;
        }
    }
}
