//! Cross-checks the A* planner against an independent uniform-cost search
//! on randomized maps: identical reachability, exactly equal costs, and no
//! Obstacle cell in any returned path.

use agriroute_core::geometry::{GridIndex, WorldPoint};
use agriroute_core::occupancy::{CellState, CostScheme, GridMap, Metric};
use agriroute_core::oracle::uniform_cost_search;
use agriroute_core::planner::{astar_with, PlanQuery, Workspace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SIDE: usize = 20;
const MAPS_PER_METRIC: usize = 1000;

/// A 20x20 map with a seeded mix of every cell state. The obstacle share
/// varies per map so the sweep covers both easy fields and mostly-sealed
/// ones.
fn random_map(rng: &mut ChaCha8Rng) -> GridMap {
    let p_obstacle = rng.gen_range(0.05..0.35);
    let mut map = GridMap::new(SIDE, SIDE, 0.1, WorldPoint::new(0.0, 0.0), CellState::Free);
    for v in 0..SIDE {
        for u in 0..SIDE {
            let roll: f64 = rng.gen();
            let state = if roll < p_obstacle {
                CellState::Obstacle
            } else if roll < p_obstacle + 0.10 {
                CellState::SafetyArea
            } else if roll < p_obstacle + 0.18 {
                CellState::GlobalPath
            } else if roll < p_obstacle + 0.30 {
                CellState::Unknown
            } else {
                CellState::Free
            };
            map.set_state(GridIndex::new(u, v), state);
        }
    }
    map
}

fn non_obstacle_cells(map: &GridMap) -> Vec<GridIndex> {
    let mut open = Vec::new();
    for v in 0..map.height() {
        for u in 0..map.width() {
            let i = GridIndex::new(u, v);
            if map.state(i) != CellState::Obstacle {
                open.push(i);
            }
        }
    }
    open
}

/// Exact cost of a path as the integer pair (a, b) in a + b*sqrt(2).
///
/// Straight steps cost 1, diagonal steps sqrt(2), and Weighted adds the
/// integer cell cost of each entered cell, so every path cost has this
/// form. Since sqrt(2) is irrational, two paths have the same real cost
/// exactly when their pairs match; comparing pairs sidesteps the
/// summation-order rounding that makes two equal-cost f64 totals differ in
/// the last bit.
fn exact_cost(map: &GridMap, scheme: &CostScheme, path: &[GridIndex], metric: Metric) -> (i64, i64) {
    let mut a = 0i64;
    let mut b = 0i64;
    for w in path.windows(2) {
        let diagonal = w[0].u != w[1].u && w[0].v != w[1].v;
        if diagonal {
            b += 1;
        } else {
            a += 1;
        }
        if metric == Metric::Weighted {
            let c = scheme
                .cell_cost(map.state(w[1]))
                .expect("paths never enter obstacles");
            assert_eq!(c.fract(), 0.0, "the default scheme has integer costs");
            a += c as i64;
        }
    }
    (a, b)
}

#[test]
fn astar_matches_uniform_cost_search_on_random_maps() {
    let scheme = CostScheme::default();
    let mut ws = Workspace::new();
    for (metric, seed) in [
        (Metric::Weighted, 0x5EED_0001u64),
        (Metric::Shortest, 0x5EED_0002u64),
    ] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut reachable = 0usize;
        let mut unreachable = 0usize;
        for case in 0..MAPS_PER_METRIC {
            let map = random_map(&mut rng);
            let open = non_obstacle_cells(&map);
            let source = open[rng.gen_range(0..open.len())];
            // Any destination, Obstacle included: both searches must agree
            // that those are unreachable.
            let destination =
                GridIndex::new(rng.gen_range(0..SIDE), rng.gen_range(0..SIDE));

            let plan = astar_with(
                &mut ws,
                &PlanQuery {
                    map: &map,
                    scheme: &scheme,
                    source,
                    destination,
                    metric,
                },
            );
            let truth = uniform_cost_search(&map, &scheme, source, destination, metric);

            match (plan, truth) {
                (Some(p), Some(t)) => {
                    let plan_pair = exact_cost(&map, &scheme, &p.path, metric);
                    let truth_pair = exact_cost(&map, &scheme, &t.path, metric);
                    assert_eq!(
                        plan_pair, truth_pair,
                        "case {case} ({metric:?}): astar cost {} != ucs cost {}",
                        p.total_cost, t.cost
                    );
                    // The reported floating-point totals must agree with the
                    // exact value up to summation-order rounding.
                    let exact =
                        plan_pair.0 as f64 + plan_pair.1 as f64 * core::f64::consts::SQRT_2;
                    for (who, got) in [("astar", p.total_cost), ("ucs", t.cost)] {
                        assert!(
                            (got - exact).abs() <= 1e-9 * (1.0 + exact),
                            "case {case} ({metric:?}): {who} reports {got}, exact {exact}"
                        );
                    }
                    assert_eq!(p.path.first(), Some(&source), "case {case}");
                    assert_eq!(p.path.last(), Some(&destination), "case {case}");
                    for &c in p.path.iter().chain(t.path.iter()) {
                        assert_ne!(
                            map.state(c),
                            CellState::Obstacle,
                            "case {case} ({metric:?}): path crosses obstacle {c:?}"
                        );
                    }
                    reachable += 1;
                }
                (None, None) => unreachable += 1,
                (p, t) => panic!(
                    "case {case} ({metric:?}): reachability disagrees, astar {} ucs {}",
                    p.is_some(),
                    t.is_some()
                ),
            }
        }
        // The sweep only means something if it exercises both outcomes.
        assert!(
            reachable >= MAPS_PER_METRIC / 3,
            "{metric:?}: only {reachable} reachable cases"
        );
        assert!(
            unreachable >= 20,
            "{metric:?}: only {unreachable} unreachable cases"
        );
    }
}

#[test]
fn astar_ties_break_deterministically() {
    // Same query twice on the same map must give the identical path, not
    // just the same cost, or downstream runs would lose reproducibility.
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let scheme = CostScheme::default();
    for _ in 0..50 {
        let map = random_map(&mut rng);
        let open = non_obstacle_cells(&map);
        let source = open[rng.gen_range(0..open.len())];
        let destination = open[rng.gen_range(0..open.len())];
        for metric in [Metric::Weighted, Metric::Shortest] {
            let q = PlanQuery {
                map: &map,
                scheme: &scheme,
                source,
                destination,
                metric,
            };
            let a = astar_with(&mut Workspace::new(), &q);
            let b = astar_with(&mut Workspace::new(), &q);
            assert_eq!(a.map(|r| r.path), b.map(|r| r.path));
        }
    }
}
