//! Built-in sub-solver: nearest-neighbor construction over fixed-path atoms,
//! 2-opt and Or-opt descent on candidate lists, then iterated local search
//! with segment-swap kicks. No move ever removes a fixed edge.

use std::collections::VecDeque;
use std::time::Instant;

use rand::Rng;

use super::{analyze, to_global, Budget, LocalProblem, SolveError, SubProblem, SubSolver};
use crate::instance::rng_from_seed;

pub const DEFAULT_CANDIDATES: usize = 10;
pub const DEFAULT_KICKS_PER_NODE: f64 = 2.0;

/// Longest segment moved by one kick.
const KICK_SEGMENT: usize = 50;

const EPS: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct LocalSearchSolver {
    /// Candidate-list size per node for 2-opt and Or-opt.
    pub candidates: usize,
    /// Kicks after the first descent, as a multiple of the problem size.
    /// Zero gives plain descent.
    pub kicks_per_node: f64,
}

impl Default for LocalSearchSolver {
    fn default() -> Self {
        Self {
            candidates: DEFAULT_CANDIDATES,
            kicks_per_node: DEFAULT_KICKS_PER_NODE,
        }
    }
}

impl LocalSearchSolver {
    /// 2-opt and Or-opt descent only.
    pub fn descent_only() -> Self {
        Self {
            kicks_per_node: 0.0,
            ..Self::default()
        }
    }
}

impl SubSolver for LocalSearchSolver {
    fn solve(&self, problem: &SubProblem, budget: &Budget, seed: u64) -> Result<Vec<usize>, SolveError> {
        let kicks = (self.kicks_per_node.max(0.0) * problem.len() as f64).round() as usize;
        solve_with(problem, budget, seed, self.candidates, kicks, &mut |_| {})
    }

    fn name(&self) -> &str {
        "local-search"
    }
}

pub fn solve_local_search(problem: &SubProblem, budget: &Budget, seed: u64) -> Result<Vec<usize>, SolveError> {
    LocalSearchSolver::default().solve(problem, budget, seed)
}

/// Runs the solver, reporting the local order after construction, after
/// every descent sweep, and after every accepted kick to `on_sweep`.
pub(crate) fn solve_with(
    problem: &SubProblem,
    budget: &Budget,
    seed: u64,
    candidates: usize,
    kicks: usize,
    on_sweep: &mut dyn FnMut(&[usize]),
) -> Result<Vec<usize>, SolveError> {
    budget.validate()?;
    let lp = analyze(problem)?;
    let m = lp.len();
    let mut rng = rng_from_seed(seed);
    let start_atom = if lp.atoms.is_empty() {
        0
    } else {
        rng.random_range(0..lp.atoms.len())
    };
    let tour = construct(&lp, start_atom);
    if m <= 3 {
        on_sweep(&tour);
        return Ok(to_global(problem, &tour));
    }
    let mut ls = Search::new(&lp, tour, candidates.max(1));
    on_sweep(&ls.tour);
    let started = Instant::now();
    let out_of_time = || budget.time_limit.is_some_and(|t| started.elapsed() >= t);
    for _ in 0..budget.max_sweeps {
        let improved = ls.sweep();
        on_sweep(&ls.tour);
        if !improved || out_of_time() {
            break;
        }
    }
    ls.queue.clear();
    ls.queued.fill(false);
    if m >= 8 {
        for _ in 0..kicks {
            if out_of_time() {
                break;
            }
            if ls.kick(&mut rng) {
                on_sweep(&ls.tour);
            }
        }
    }
    Ok(to_global(problem, &ls.tour))
}

/// Greedy nearest neighbor where each fixed path is entered at its closer
/// end and traversed whole.
fn construct(lp: &LocalProblem<'_>, start_atom: usize) -> Vec<usize> {
    let m = lp.len();
    let mut order = Vec::with_capacity(m);
    if lp.atoms.is_empty() {
        return order;
    }
    // atom_of[v] = atom index for every atom endpoint
    let mut atom_of = vec![usize::MAX; m];
    for (i, atom) in lp.atoms.iter().enumerate() {
        atom_of[atom[0]] = i;
        atom_of[*atom.last().unwrap()] = i;
    }
    let ends: Vec<usize> = (0..m).filter(|&v| atom_of[v] != usize::MAX).collect();
    let mut used = vec![false; lp.atoms.len()];
    used[start_atom] = true;
    order.extend_from_slice(&lp.atoms[start_atom]);
    for _ in 1..lp.atoms.len() {
        let tail = *order.last().unwrap();
        let mut best = (f64::INFINITY, usize::MAX);
        for &v in &ends {
            if !used[atom_of[v]] {
                let d = lp.d(tail, v);
                if d < best.0 {
                    best = (d, v);
                }
            }
        }
        let v = best.1;
        let a = atom_of[v];
        used[a] = true;
        let atom = &lp.atoms[a];
        if atom[0] == v {
            order.extend_from_slice(atom);
        } else {
            order.extend(atom.iter().rev());
        }
    }
    order
}

fn neighbor_lists(lp: &LocalProblem<'_>, k: usize) -> Vec<Vec<usize>> {
    let m = lp.len();
    let k = k.min(m - 1);
    let mut buf: Vec<(f64, usize)> = Vec::with_capacity(m);
    (0..m)
        .map(|a| {
            buf.clear();
            buf.extend((0..m).filter(|&b| b != a).map(|b| (lp.d(a, b), b)));
            if k < buf.len() {
                buf.select_nth_unstable_by(k, |x, y| x.0.total_cmp(&y.0));
                buf.truncate(k);
            }
            buf.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            buf.iter().map(|&(_, b)| b).collect()
        })
        .collect()
}

struct Search<'a, 'p> {
    lp: &'a LocalProblem<'p>,
    tour: Vec<usize>,
    pos: Vec<usize>,
    neighbors: Vec<Vec<usize>>,
    /// Nodes whose neighborhood changed since they were last examined.
    queue: VecDeque<usize>,
    queued: Vec<bool>,
}

impl<'a, 'p> Search<'a, 'p> {
    fn new(lp: &'a LocalProblem<'p>, tour: Vec<usize>, k: usize) -> Self {
        let mut pos = vec![0; tour.len()];
        for (i, &v) in tour.iter().enumerate() {
            pos[v] = i;
        }
        let neighbors = neighbor_lists(lp, k);
        let m = tour.len();
        Self {
            lp,
            tour,
            pos,
            neighbors,
            queue: VecDeque::new(),
            queued: vec![false; m],
        }
    }

    fn touch(&mut self, v: usize) {
        if !std::mem::replace(&mut self.queued[v], true) {
            self.queue.push_back(v);
        }
    }

    /// Applies improving moves around queued nodes until none remain.
    /// Returns the total change in length.
    fn descend(&mut self) -> f64 {
        let mut total = 0.0;
        while let Some(a) = self.queue.pop_front() {
            self.queued[a] = false;
            while let Some(d) = self.two_opt(a).or_else(|| self.or_opt(a)) {
                total += d;
            }
        }
        total
    }

    /// Swaps two adjacent random segments, repairs by descent, and keeps the
    /// result only if the tour got strictly shorter.
    fn kick(&mut self, rng: &mut impl Rng) -> bool {
        let lp = self.lp;
        let m = self.tour.len();
        let max_seg = KICK_SEGMENT.min((m - 2) / 2);
        let p = rng.random_range(0..m);
        let l1 = rng.random_range(1..=max_seg);
        let l2 = rng.random_range(1..=max_seg);
        let at = |k: usize| self.tour[(p + k) % m];
        let (a, b0, b1, c0, c1, d) = (at(0), at(1), at(l1), at(l1 + 1), at(l1 + l2), at(l1 + l2 + 1));
        if lp.is_fixed(a, b0) || lp.is_fixed(b1, c0) || lp.is_fixed(c1, d) {
            return false;
        }
        let delta = lp.d(a, c0) + lp.d(c1, b0) + lp.d(b1, d) - lp.d(a, b0) - lp.d(b1, c0) - lp.d(c1, d);
        let saved = (self.tour.clone(), self.pos.clone());
        let window: Vec<usize> = (l1 + 1..=l1 + l2).chain(1..=l1).map(at).collect();
        for (k, v) in window.into_iter().enumerate() {
            let i = (p + 1 + k) % m;
            self.tour[i] = v;
            self.pos[v] = i;
        }
        for v in [a, b0, b1, c0, c1, d] {
            self.touch(v);
        }
        if delta + self.descend() < -EPS {
            true
        } else {
            (self.tour, self.pos) = saved;
            false
        }
    }

    #[inline]
    fn next(&self, v: usize) -> usize {
        let i = self.pos[v] + 1;
        self.tour[if i == self.tour.len() { 0 } else { i }]
    }

    #[inline]
    fn prev(&self, v: usize) -> usize {
        let i = self.pos[v];
        self.tour[if i == 0 { self.tour.len() - 1 } else { i - 1 }]
    }

    fn sweep(&mut self) -> bool {
        let mut improved = false;
        for a in 0..self.tour.len() {
            improved |= self.two_opt(a).is_some();
            improved |= self.or_opt(a).is_some();
        }
        improved
    }

    /// Reverses the cyclic stretch of positions `i..=j`, or its complement when shorter.
    fn reverse(&mut self, i: usize, j: usize) {
        let m = self.tour.len();
        let len = (j + m - i) % m + 1;
        let (mut i, mut j, len) = if 2 * len > m {
            ((j + 1) % m, (i + m - 1) % m, m - len)
        } else {
            (i, j, len)
        };
        for _ in 0..len / 2 {
            self.tour.swap(i, j);
            self.pos[self.tour[i]] = i;
            self.pos[self.tour[j]] = j;
            i = if i + 1 == m { 0 } else { i + 1 };
            j = if j == 0 { m - 1 } else { j - 1 };
        }
    }

    fn two_opt(&mut self, a: usize) -> Option<f64> {
        let lp = self.lp;
        for forward in [true, false] {
            let a2 = if forward { self.next(a) } else { self.prev(a) };
            if lp.is_fixed(a, a2) {
                continue;
            }
            let d_a = lp.d(a, a2);
            for ci in 0..self.neighbors[a].len() {
                let c = self.neighbors[a][ci];
                let d_ac = lp.d(a, c);
                if d_ac >= d_a - EPS {
                    break;
                }
                let c2 = if forward { self.next(c) } else { self.prev(c) };
                if c == a2 || c2 == a || lp.is_fixed(c, c2) {
                    continue;
                }
                let delta = d_ac + lp.d(a2, c2) - d_a - lp.d(c, c2);
                if delta < -EPS {
                    if forward {
                        self.reverse(self.pos[a2], self.pos[c]);
                    } else {
                        self.reverse(self.pos[c], self.pos[a2]);
                    }
                    for v in [a, a2, c, c2] {
                        self.touch(v);
                    }
                    return Some(delta);
                }
            }
        }
        None
    }

    /// Moves the segment of 1..=3 nodes starting at `a` between a candidate
    /// neighbor and its successor or predecessor, possibly reversed.
    fn or_opt(&mut self, a: usize) -> Option<f64> {
        let lp = self.lp;
        let m = self.tour.len();
        for seg_len in 1..=3usize {
            if m < seg_len + 3 {
                break;
            }
            let start = self.pos[a];
            let s1 = a;
            let sl = self.tour[(start + seg_len - 1) % m];
            let p = self.prev(s1);
            let nx = self.next(sl);
            if lp.is_fixed(p, s1) || lp.is_fixed(sl, nx) {
                continue;
            }
            let gain = lp.d(p, s1) + lp.d(sl, nx) - lp.d(p, nx);
            if gain <= EPS {
                continue;
            }
            let in_seg = |pos: &[usize], v: usize| (pos[v] + m - start) % m < seg_len;
            let mut best: Option<(f64, usize, bool)> = None;
            for end in [s1, sl] {
                for &c in &self.neighbors[end] {
                    if in_seg(&self.pos, c) {
                        continue;
                    }
                    for (u, v) in [(c, self.next(c)), (self.prev(c), c)] {
                        if in_seg(&self.pos, u) || in_seg(&self.pos, v) || lp.is_fixed(u, v) {
                            continue;
                        }
                        let base = lp.d(u, v);
                        let fwd = lp.d(u, s1) + lp.d(sl, v) - base;
                        let rev = lp.d(u, sl) + lp.d(s1, v) - base;
                        let (add, reversed) = if rev < fwd { (rev, true) } else { (fwd, false) };
                        let delta = add - gain;
                        if delta < -EPS && best.is_none_or(|b| delta < b.0) {
                            best = Some((delta, u, reversed));
                        }
                    }
                }
            }
            if let Some((delta, u, reversed)) = best {
                let v = self.next(u);
                self.move_segment(start, seg_len, u, reversed);
                for x in [p, nx, s1, sl, u, v] {
                    self.touch(x);
                }
                return Some(delta);
            }
        }
        None
    }

    fn move_segment(&mut self, start: usize, seg_len: usize, after: usize, reversed: bool) {
        let m = self.tour.len();
        let mut seg: Vec<usize> = (0..seg_len).map(|k| self.tour[(start + k) % m]).collect();
        if reversed {
            seg.reverse();
        }
        let mut out = Vec::with_capacity(m);
        for k in seg_len..m {
            let v = self.tour[(start + k) % m];
            out.push(v);
            if v == after {
                out.extend_from_slice(&seg);
            }
        }
        self.tour = out;
        for (i, &v) in self.tour.iter().enumerate() {
            self.pos[v] = i;
        }
    }
}
