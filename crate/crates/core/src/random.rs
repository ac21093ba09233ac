//! Random instances for audits, benchmarks and property tests.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::measure::{DiscreteMeasure, PointId};
use crate::scalar::Scalar;
use crate::tree::{MetricTree, Vertex};

/// Uniform random recursive tree on `n >= 1` vertices with shuffled labels,
/// rooted at 0, with weights uniform in `[lo, hi)`.
pub fn random_tree<S: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    lo: f64,
    hi: f64,
) -> MetricTree<S> {
    let mut labels: Vec<Vertex> = (0..n).collect();
    // Fisher-Yates keeps label 0 free to land anywhere
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        labels.swap(i, j);
    }
    let edges: Vec<(Vertex, Vertex, S)> = (1..n)
        .map(|v| {
            let parent = rng.random_range(0..v);
            let w = S::from_f64(rng.random_range(lo..hi)).expect("finite weight");
            (labels[parent], labels[v], w)
        })
        .collect();
    MetricTree::from_edges(&edges, labels[0]).expect("random recursive tree is a tree")
}

/// Random measure on points `0..n`: support size uniform in
/// `[1, min(n, max_support)]`, masses from a flat Dirichlet.
pub fn random_measure<S: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    max_support: usize,
) -> DiscreteMeasure<S> {
    let size = rng.random_range(1..=n.min(max_support).max(1));
    let points = sample(rng, n, size).into_vec();
    let raw: Vec<S> = points
        .iter()
        .map(|_| {
            let g: f64 = Exp1.sample(rng);
            // Exp1 can return exactly zero; keep every drawn point in the support
            S::from_f64(g.max(f64::MIN_POSITIVE)).expect("finite sample")
        })
        .collect();
    let total: S = raw.iter().cloned().sum();
    let pairs: Vec<(PointId, S)> = points
        .into_iter()
        .zip(raw)
        .map(|(p, g)| (p, g / total.clone()))
        .collect();
    DiscreteMeasure::from_pairs(pairs).expect("normalized by construction")
}

/// `count` independent pairs of [`random_measure`]s.
pub fn random_measure_pairs<S: Scalar, R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    max_support: usize,
    count: usize,
) -> Vec<(DiscreteMeasure<S>, DiscreteMeasure<S>)> {
    (0..count)
        .map(|_| {
            (
                random_measure(rng, n, max_support),
                random_measure(rng, n, max_support),
            )
        })
        .collect()
}

/// `n` points uniform in the unit cube of dimension `dim`.
pub fn random_points<R: Rng + ?Sized>(rng: &mut R, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random::<f64>()).collect())
        .collect()
}
