#![allow(dead_code)]

use proptest::prelude::*;
use rigidity_core::graph::{Graph, WeightedGraph};
use rigidity_core::{Dim, Framework, Point, ProximityParams, Weighting};

pub fn p2(x: f64, y: f64) -> Point {
    Point::new(x, y, 0.0)
}

pub fn proximity() -> ProximityParams {
    ProximityParams::new(10.0, 0.01).unwrap()
}

fn planar_points(n: usize) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec((0.0..10.0f64, 0.0..10.0f64), n)
        .prop_map(|v| v.into_iter().map(|(x, y)| p2(x, y)).collect())
}

fn spatial_points(n: usize) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec((0.0..10.0f64, 0.0..10.0f64, 0.0..10.0f64), n)
        .prop_map(|v| v.into_iter().map(|(x, y, z)| Point::new(x, y, z)).collect())
}

pub fn points(dim: Dim, n: usize) -> BoxedStrategy<Vec<Point>> {
    match dim {
        Dim::Planar => planar_points(n).boxed(),
        Dim::Spatial => spatial_points(n).boxed(),
    }
}

/// Random graph on `n` nodes from an edge mask, with weights in `[0.1, 2]`.
pub fn weighted_graph(n: usize) -> impl Strategy<Value = WeightedGraph> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let m = pairs.len();
    (
        prop::collection::vec(any::<bool>(), m),
        prop::collection::vec(0.1..2.0f64, m),
    )
        .prop_map(move |(mask, w)| {
            let mut chosen = Vec::new();
            let mut weights = Vec::new();
            for (k, keep) in mask.iter().enumerate() {
                if *keep {
                    chosen.push(pairs[k]);
                    weights.push(w[k]);
                }
            }
            WeightedGraph::new(Graph::new(n, chosen).unwrap(), weights).unwrap()
        })
}

/// Fixed-weight framework with a random edge set; often flexible.
pub fn framework(dim: Dim, nodes: std::ops::Range<usize>) -> impl Strategy<Value = Framework> {
    nodes.prop_flat_map(move |n| {
        (points(dim, n), weighted_graph(n))
            .prop_map(move |(pos, g)| Framework::new(dim, pos, g, Weighting::Fixed).unwrap())
    })
}

/// Planar proximity framework (`κ = 10`, `σ' = 0.01`) in a 10 x 10 box.
pub fn proximity_framework(nodes: std::ops::Range<usize>) -> impl Strategy<Value = Framework> {
    nodes.prop_flat_map(|n| {
        planar_points(n).prop_map(|pos| Framework::from_proximity(Dim::Planar, pos, proximity()).unwrap().0)
    })
}

/// Henneberg type-I construction: a triangle plus nodes attached by two
/// edges each, so `m = 2n − 3`.
pub fn laman_framework(nodes: std::ops::Range<usize>) -> impl Strategy<Value = Framework> {
    nodes.prop_flat_map(|n| {
        let attach: Vec<_> = (3..n).map(|k| (0..k, 0..k - 1)).collect();
        (planar_points(n), attach).prop_map(move |(pos, attach)| {
            let mut edges = vec![(0, 1), (1, 2), (0, 2)];
            for (k, (a, b)) in attach.into_iter().enumerate() {
                let node = k + 3;
                let b = if b >= a { b + 1 } else { b };
                edges.push((a, node));
                edges.push((b, node));
            }
            Framework::unit(Dim::Planar, pos, &edges).unwrap()
        })
    })
}
