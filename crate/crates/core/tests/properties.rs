use proptest::prelude::*;

use threatprop::laplacian::{fiedler, fiedler_bounds, laplacian, threshold_sets_connected, LaplacianKind};
use threatprop::linsolve::SolverOptions;
use threatprop::roc::{roc, Thresholds};
use threatprop::spacetime::{assemble_spacetime, kernel, solve_spacetime, EdgeMode, SpaceTimeVariant, TimeGrid};
use threatprop::spatial::solve_harmonic;
use threatprop::spectral::ModularityOperator;
use threatprop::{Graph, GraphBuilder, ObservationSet};

/// Connected graph on `n` vertices: a random spanning tree plus extra edges.
fn connected_graph(max_n: usize) -> impl Strategy<Value = Graph> {
    (3..max_n).prop_flat_map(|n| {
        let parents = (1..n).map(|v| 0..v).collect::<Vec<_>>();
        let extra = proptest::collection::vec((0..n, 0..n, 0.1f64..3.0), 0..2 * n);
        (Just(n), parents, extra).prop_map(|(n, parents, extra)| {
            let mut b = GraphBuilder::new(n);
            for (v, p) in parents.into_iter().enumerate() {
                b = b.edge(p, v + 1, 1.0);
            }
            for (u, v, w) in extra {
                if u != v {
                    b = b.edge(u, v, w);
                }
            }
            b.build().unwrap()
        })
    })
}

fn unweighted(g: &Graph) -> Graph {
    let mut b = GraphBuilder::new(g.order());
    for e in g.edges() {
        b = b.edge(e.u, e.v, 1.0);
    }
    b.build().unwrap()
}

fn mat_vec(g: &Graph, kind: LaplacianKind, x: &[f64]) -> Vec<f64> {
    let m = laplacian(g, kind).unwrap().matrix;
    let mut y = vec![0.0; x.len()];
    m.mul_vec_into(x, &mut y);
    y
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn threat_stays_between_boundary_extremes(
        g in connected_graph(30),
        psi in 0.05f64..=1.0,
        picks in proptest::collection::vec((any::<prop::sample::Index>(), 0.0f64..=1.0), 1..4),
    ) {
        let n = g.order();
        let mut pairs: Vec<(usize, f64)> = Vec::new();
        for (i, p) in picks {
            let v = i.index(n);
            if pairs.iter().all(|&(u, _)| u != v) {
                pairs.push((v, p));
            }
        }
        let obs = ObservationSet::ideal(&pairs).unwrap();
        let t = solve_harmonic(&g, &vec![psi; n], &obs, &SolverOptions::default()).unwrap();
        let hi = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
        let lo = pairs.iter().map(|p| p.1).fold(1.0, f64::min);
        for (v, &x) in t.theta.iter().enumerate() {
            prop_assert!(x <= hi + 1e-9, "vertex {v}: {x} > {hi}");
            if psi == 1.0 {
                prop_assert!(x >= lo - 1e-9, "vertex {v}: {x} < {lo}");
            } else {
                prop_assert!(x >= -1e-12);
            }
        }
        for &(v, p) in &pairs {
            prop_assert_eq!(t.theta[v], p);
        }
    }

    #[test]
    fn laplacian_and_modularity_annihilate_constants(g in connected_graph(40)) {
        let ones = vec![1.0; g.order()];
        let scale = g.degrees().iter().sum::<f64>();
        for y in mat_vec(&g, LaplacianKind::Kirchhoff, &ones) {
            prop_assert!(y.abs() <= 1e-12 * scale);
        }
        let m = ModularityOperator::new(&g).unwrap();
        let mut y = vec![0.0; g.order()];
        threatprop::eigen::SymmetricOperator::apply(&m, &ones, &mut y);
        for v in y {
            prop_assert!(v.abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn fiedler_vector_within_bounds_and_threshold_connected(g in connected_graph(25)) {
        let g = unweighted(&g);
        let f = fiedler(&g).unwrap();
        prop_assert!(f.connected);
        let (lo, hi) = fiedler_bounds(&g).unwrap();
        prop_assert!(f.value >= lo - 1e-8 && f.value <= hi + 1e-8, "{lo} ≤ {} ≤ {hi}", f.value);
        let sum: f64 = f.vector.iter().sum();
        prop_assert!(sum.abs() < 1e-6);
        prop_assert!(threshold_sets_connected(&g, &f.vector));
    }

    #[test]
    fn roc_ignores_increasing_transforms(
        data in proptest::collection::vec((0.0f64..1.0, any::<bool>()), 4..60),
    ) {
        prop_assume!(data.iter().any(|d| d.1) && data.iter().any(|d| !d.1));
        let scores: Vec<f64> = data.iter().map(|d| d.0).collect();
        let truth: Vec<bool> = data.iter().map(|d| d.1).collect();
        let base = roc(&scores, &truth, Thresholds::AllUnique).unwrap();
        let cubed: Vec<f64> = scores.iter().map(|s| s * s * s + 2.0 * s).collect();
        let odds: Vec<f64> = scores.iter().map(|s| s / (1.0 - s)).collect();
        for other in [cubed, odds] {
            let c = roc(&other, &truth, Thresholds::AllUnique).unwrap();
            prop_assert_eq!(c.points.len(), base.points.len());
            for (a, b) in c.points.iter().zip(&base.points) {
                prop_assert_eq!((a.pfa, a.pd), (b.pfa, b.pd));
            }
            prop_assert_eq!(c.auc, base.auc);
        }
    }

    #[test]
    fn kernel_is_unit_at_zero_and_decreasing(rate in 0.01f64..100.0, t in 0.0f64..10.0, dt in 0.001f64..5.0) {
        prop_assert_eq!(kernel(rate, 0.0), 1.0);
        let k = kernel(rate, t);
        prop_assert!((0.0..=1.0).contains(&k));
        prop_assert_eq!(k, kernel(rate, -t));
        prop_assert!(kernel(rate, t + dt) < k || k < 1e-300);
    }

    #[test]
    fn single_bin_clique_matches_spatial(g in connected_graph(20), psi in 0.1f64..=0.95, v in any::<prop::sample::Index>()) {
        let obs = ObservationSet::ideal(&[(v.index(g.order()), 1.0)]).unwrap();
        let opts = SolverOptions::default();
        let spatial = solve_harmonic(&g, &vec![psi; g.order()], &obs, &opts).unwrap();
        let sys = assemble_spacetime(&g, TimeGrid::new(0.0, 1.0, 1).unwrap(), &[1.0], &[EdgeMode::Clique]).unwrap();
        let st = solve_spacetime(&sys, &obs, &SpaceTimeVariant::Weighted { psi }, &opts).unwrap();
        for (a, b) in st.theta.iter().zip(&spatial.theta) {
            prop_assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
        }
    }
}
