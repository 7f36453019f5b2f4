use dualopt::construct::random_insertion;
use dualopt::geom::{cycle_length, Point};
use dualopt::open_path::{solve_open_path, OpenPathProblem};
use dualopt::path::protocol::{parse_request, Request};
use dualopt::path::{divide_solution, merge_subpaths};
use dualopt::subsolver::{route_cost, solve_local_search, verify_route, Budget, FixedEdge, SubProblem};
use dualopt::tour::{parse_tour_file, write_tour_file};
use dualopt::tsplib::{parse_tsplib, write_tsplib};
use dualopt::{tour_length, Instance};
use proptest::prelude::*;

fn coords(min: usize, max: usize) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), min..max)
        .prop_map(|v| v.into_iter().map(Point::from).collect())
}

fn instance(min: usize, max: usize) -> impl Strategy<Value = Instance> {
    coords(min, max).prop_map(|c| Instance::new("p", c).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn length_ignores_rotation_and_direction(inst in instance(3, 40), shift in 0usize..40) {
        let n = inst.len();
        let order: Vec<usize> = (0..n).collect();
        let base = tour_length(&inst, &order).unwrap();
        let mut rotated = order.clone();
        rotated.rotate_left(shift % n);
        let reversed: Vec<usize> = order.iter().rev().copied().collect();
        prop_assert!((tour_length(&inst, &rotated).unwrap() - base).abs() <= 1e-9 * base.max(1.0));
        prop_assert!((tour_length(&inst, &reversed).unwrap() - base).abs() <= 1e-9 * base.max(1.0));
    }

    #[test]
    fn random_insertion_is_a_permutation(inst in instance(3, 80), seed in any::<u64>()) {
        let t = random_insertion(&inst, seed).unwrap();
        let mut s = t.order().to_vec();
        s.sort();
        prop_assert_eq!(s, (0..inst.len()).collect::<Vec<_>>());
    }

    #[test]
    fn local_search_keeps_fixed_chains(
        inst in instance(6, 60),
        cut in prop::collection::vec(2usize..6, 1..6),
        seed in any::<u64>(),
    ) {
        // Consecutive id runs become fixed chains, with gaps of free nodes.
        let n = inst.len();
        let pts = inst.nodes();
        let mut fixed = Vec::new();
        let mut at = 0;
        for len in cut {
            if at + len > n {
                break;
            }
            for v in at..at + len - 1 {
                fixed.push(FixedEdge { a: v, b: v + 1, cost: pts[v].dist(&pts[v + 1]) });
            }
            at += len + 1;
        }
        let p = SubProblem::from_points(pts, (0..n).collect(), fixed);
        let r = solve_local_search(&p, &Budget::sweeps(50), seed).unwrap();
        prop_assert!(verify_route(&p, &r).is_ok());
        prop_assert!((route_cost(&p, &r) - cycle_length(pts, &r)).abs() < 1e-6);
    }

    #[test]
    fn divide_merge_round_trip(n in 3usize..200, len in 3usize..60, k in any::<usize>(), seed in any::<u64>()) {
        let inst = dualopt::generate_random(n, seed).unwrap();
        let tour = random_insertion(&inst, seed).unwrap();
        let kappa = k % n + 1;
        let w = divide_solution(tour.order(), len, kappa).unwrap();
        prop_assert!(w.iter().rev().skip(1).all(|s| !s.pass_through && s.nodes.len() == len));
        prop_assert_eq!(merge_subpaths(&w, n).unwrap(), tour);
    }

    #[test]
    fn open_path_respects_endpoints(c in coords(2, 30), s in any::<usize>(), e in any::<usize>(), seed in any::<u64>()) {
        let k = c.len();
        let (start, mut end) = (s % k, e % k);
        if end == start {
            end = (start + 1) % k;
        }
        let p = OpenPathProblem { coords: c, start, end };
        let o = solve_open_path(&p, &Budget::default(), seed).unwrap();
        prop_assert_eq!(o[0], start);
        prop_assert_eq!(o[k - 1], end);
        let mut sorted = o.clone();
        sorted.sort();
        prop_assert_eq!(sorted, (0..k).collect::<Vec<_>>());
    }

    #[test]
    fn tsplib_round_trip(c in coords(1, 50)) {
        let inst = Instance::new("rt", c).unwrap();
        let back = parse_tsplib(&write_tsplib(&inst)).unwrap();
        prop_assert_eq!(back.nodes(), inst.nodes());
    }

    #[test]
    fn tour_file_round_trip(n in 1usize..100, seed in any::<u64>(), len in 0f64..1e6) {
        let inst = dualopt::generate_random(n.max(3), seed).unwrap();
        let order = random_insertion(&inst, seed).unwrap().into_order();
        let f = parse_tour_file(&write_tour_file(&order, len)).unwrap();
        prop_assert_eq!(f.order, order);
        prop_assert_eq!(f.length, len);
    }

    #[test]
    fn request_round_trip(c in coords(1, 30), id in any::<u64>()) {
        let p = OpenPathProblem::with_fixed_ends(c);
        let req = Request::from_problem(id, &p);
        let back = parse_request(&serde_json::to_string(&req).unwrap()).unwrap();
        prop_assert_eq!(back.to_problem().unwrap(), p);
    }
}
