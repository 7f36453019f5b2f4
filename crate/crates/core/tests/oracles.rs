//! Solver quality and contract checks against independent enumeration oracles.

use dualopt::construct::random_insertion;
use dualopt::geom::{cycle_length, path_length, Point};
use dualopt::open_path::{open_path_length, solve_open_path, solve_open_path_exhaustive, OpenPathProblem};
use dualopt::path::{
    divide_solution, merge_subpaths, normalize_subpath, optimize_subpath_batch, HeuristicSubPathSolver, PathError,
    SubPath, SubPathSolver,
};
use dualopt::subsolver::{route_cost, solve_exhaustive, Budget, LocalSearchSolver, SubProblem, SubSolver};
use dualopt::{generate_random, validate_tour, Instance};

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let x = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, x);
            out.push(p);
        }
    }
    out
}

fn brute_cycle(pts: &[Point]) -> f64 {
    let rest: Vec<usize> = (1..pts.len()).collect();
    permutations(&rest)
        .into_iter()
        .map(|p| {
            let mut order = vec![0];
            order.extend(p);
            cycle_length(pts, &order)
        })
        .fold(f64::INFINITY, f64::min)
}

fn brute_open(pts: &[Point]) -> f64 {
    let k = pts.len();
    let interior: Vec<usize> = (1..k - 1).collect();
    permutations(&interior)
        .into_iter()
        .map(|p| {
            let mut order = vec![0];
            order.extend(p);
            order.push(k - 1);
            path_length(pts, &order)
        })
        .fold(f64::INFINITY, f64::min)
}

#[test]
fn local_search_matches_enumeration_at_n8() {
    let solver = LocalSearchSolver::default();
    let mut hits = 0;
    for seed in 0..100 {
        let inst = generate_random(8, 50_000 + seed).unwrap();
        let p = SubProblem::from_points(inst.nodes(), (0..8).collect(), vec![]);
        let got = route_cost(&p, &solver.solve(&p, &Budget::default(), seed).unwrap());
        let opt = brute_cycle(inst.nodes());
        assert!(got >= opt - 1e-9);
        if got <= opt + 1e-9 {
            hits += 1;
        }
    }
    assert!(hits >= 95, "optimal on {hits}/100");
}

#[test]
fn exhaustive_subsolver_agrees_with_enumeration() {
    for seed in 0..20 {
        let inst = generate_random(7, 51_000 + seed).unwrap();
        let p = SubProblem::from_points(inst.nodes(), (0..7).collect(), vec![]);
        let got = route_cost(&p, &solve_exhaustive(&p).unwrap());
        assert!((got - brute_cycle(inst.nodes())).abs() < 1e-9);
    }
}

#[test]
fn random_insertion_is_bounded_by_the_optimum() {
    for seed in 0..30 {
        let inst = generate_random(8, 52_000 + seed).unwrap();
        let t = random_insertion(&inst, seed).unwrap();
        assert!(cycle_length(inst.nodes(), t.order()) >= brute_cycle(inst.nodes()) - 1e-9);
    }
    let tri = generate_random(3, 1).unwrap();
    for seed in 0..5 {
        let order = random_insertion(&tri, seed).unwrap().into_order();
        assert!((cycle_length(tri.nodes(), &order) - cycle_length(tri.nodes(), &[0, 1, 2])).abs() < 1e-12);
    }
}

#[test]
fn open_path_heuristic_within_two_percent_at_k10() {
    let mut hits = 0;
    for seed in 0..100 {
        let inst = generate_random(10, 53_000 + seed).unwrap();
        let p = OpenPathProblem::with_fixed_ends(inst.nodes().to_vec());
        let got = open_path_length(&p, &solve_open_path(&p, &Budget::default(), seed).unwrap());
        let opt = brute_open(&p.coords);
        assert!(got >= opt - 1e-9);
        if got <= opt * 1.02 {
            hits += 1;
        }
    }
    assert!(hits >= 95, "within 2% on {hits}/100");
}

#[test]
fn open_path_exhaustive_matches_enumeration_and_is_symmetric() {
    for seed in 0..20 {
        let inst = generate_random(9, 54_000 + seed).unwrap();
        let p = OpenPathProblem::with_fixed_ends(inst.nodes().to_vec());
        let fwd = open_path_length(&p, &solve_open_path_exhaustive(&p).unwrap());
        assert!((fwd - brute_open(&p.coords)).abs() < 1e-9);
        let rev = OpenPathProblem {
            start: p.end,
            end: p.start,
            ..p.clone()
        };
        let back = open_path_length(&rev, &solve_open_path_exhaustive(&rev).unwrap());
        assert!((fwd - back).abs() < 1e-9);
    }
}

#[test]
fn normalization_examples() {
    let inst = Instance::new("two", vec![Point::new(2.0, 3.0), Point::new(4.0, 7.0)]).unwrap();
    let sp = SubPath {
        offset: 0,
        nodes: vec![0, 1],
        pass_through: true,
    };
    assert_eq!(
        normalize_subpath(&sp, &inst).unwrap(),
        vec![Point::new(0.0, 0.0), Point::new(0.5, 1.0)]
    );

    let big = generate_random(60, 3).unwrap();
    let scaled = Instance::new(
        "scaled",
        big.nodes().iter().map(|p| Point::new(5.0 + 40.0 * p.x, -2.0 + 40.0 * p.y)).collect(),
    )
    .unwrap();
    let sp = SubPath {
        offset: 0,
        nodes: (10..30).collect(),
        pass_through: false,
    };
    let pts = normalize_subpath(&sp, &scaled).unwrap();
    assert!(pts.iter().all(|p| (0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y)));
    let orig: Vec<Point> = sp.nodes.iter().map(|&v| scaled.node(v)).collect();
    let ratio = pts[0].dist(&pts[1]) / orig[0].dist(&orig[1]);
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            let r = pts[i].dist(&pts[j]) / orig[i].dist(&orig[j]);
            assert!((r - ratio).abs() <= 1e-12 * ratio.max(1.0));
        }
    }
}

#[test]
fn accepted_windows_respect_the_oracle_and_edit_locally() {
    let inst = generate_random(200, 8).unwrap();
    let tour = random_insertion(&inst, 8).unwrap();
    let before = cycle_length(inst.nodes(), tour.order());
    let windows = divide_solution(tour.order(), 10, 1).unwrap();
    let (after, stats) = optimize_subpath_batch(windows.clone(), &HeuristicSubPathSolver::default(), &inst).unwrap();
    assert!(stats.accepted > 0);
    let mut saved = 0.0;
    for (old, new) in windows.iter().zip(&after) {
        assert_eq!(old.nodes.first(), new.nodes.first());
        assert_eq!(old.nodes.last(), new.nodes.last());
        let mut a = old.nodes.clone();
        let mut b = new.nodes.clone();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        let pts: Vec<Point> = old.nodes.iter().map(|&v| inst.node(v)).collect();
        assert!(new.length(&inst) >= brute_open(&pts) - 1e-9);
        saved += old.length(&inst) - new.length(&inst);
    }
    let merged = merge_subpaths(&after, inst.len()).unwrap();
    let now = cycle_length(inst.nodes(), merged.order());
    assert!((before - now - saved).abs() < 1e-9);
}

/// Reverses every answer, which the phase must accept as a valid orientation.
struct Reversing(HeuristicSubPathSolver);

impl SubPathSolver for Reversing {
    fn solve_batch(&self, ps: &[OpenPathProblem]) -> Result<Vec<Result<Vec<usize>, String>>, PathError> {
        Ok(self
            .0
            .solve_batch(ps)?
            .into_iter()
            .map(|r| r.map(|o| o.into_iter().rev().collect()))
            .collect())
    }
    fn name(&self) -> &str {
        "reversing"
    }
}

#[test]
fn many_rounds_stay_valid_and_reversed_answers_count() {
    let inst = generate_random(150, 21).unwrap();
    let mut tour = random_insertion(&inst, 21).unwrap();
    let solver = Reversing(HeuristicSubPathSolver::default());
    let mut accepted = 0;
    for round in 0..100 {
        let len = 3 + round % 20;
        let kappa = (round * 7) % inst.len() + 1;
        let w = divide_solution(tour.order(), len, kappa).unwrap();
        let (w, stats) = optimize_subpath_batch(w, &solver, &inst).unwrap();
        assert_eq!(stats.contract_violations, 0);
        accepted += stats.accepted;
        tour = merge_subpaths(&w, inst.len()).unwrap();
        validate_tour(&inst, tour.order()).unwrap();
    }
    assert!(accepted > 0);
}
