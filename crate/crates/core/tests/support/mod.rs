//! Test-only helpers: an exhaustive transportation solver and instance
//! generators shared by the integration tests.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasstree::random::{random_measure, random_tree};
use wasstree::{DiscreteMeasure, FiniteMetric, MetricTree, PointId, Scalar};

pub fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Minimum transport cost by enumerating every basic feasible solution.
///
/// Bases of the `s x t` transportation polytope are the spanning trees of the
/// complete bipartite graph on supply and demand points; each determines a
/// unique flow, found by repeatedly peeling leaves. Only practical for
/// supports of a handful of points.
pub fn brute_force_transport<S: Scalar>(
    m: &FiniteMetric<S>,
    mu: &DiscreteMeasure<S>,
    nu: &DiscreteMeasure<S>,
) -> S {
    let sources: Vec<(PointId, S)> = mu.iter().map(|(p, x)| (p, x.clone())).collect();
    let sinks: Vec<(PointId, S)> = nu.iter().map(|(p, x)| (p, x.clone())).collect();
    let (s, t) = (sources.len(), sinks.len());
    assert!(s * t <= 16, "brute force is limited to tiny supports");
    let cells = s * t;
    let k = s + t - 1;
    let mut best: Option<S> = None;
    for mask in 0u32..(1 << cells) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let chosen: Vec<(usize, usize)> = (0..cells)
            .filter(|c| mask & (1 << c) != 0)
            .map(|c| (c / t, c % t))
            .collect();
        if let Some(flow) = solve_basis(&chosen, &sources, &sinks) {
            let cost: S = chosen
                .iter()
                .zip(&flow)
                .map(|(&(i, j), f)| f.clone() * m.dist(sources[i].0, sinks[j].0).clone())
                .sum();
            if best.as_ref().is_none_or(|b| cost < *b) {
                best = Some(cost);
            }
        }
    }
    best.expect("the polytope is non-empty")
}

/// Leaf peeling on a candidate basis; `None` unless it is a spanning tree
/// with a non-negative flow.
fn solve_basis<S: Scalar>(
    cells: &[(usize, usize)],
    sources: &[(PointId, S)],
    sinks: &[(PointId, S)],
) -> Option<Vec<S>> {
    let (s, t) = (sources.len(), sinks.len());
    let mut supply: Vec<S> = sources.iter().map(|(_, x)| x.clone()).collect();
    let mut demand: Vec<S> = sinks.iter().map(|(_, x)| x.clone()).collect();
    let mut flow: Vec<Option<S>> = vec![None; cells.len()];
    let mut open = cells.len();
    while open > 0 {
        let mut progressed = false;
        for node in 0..s + t {
            let incident: Vec<usize> = (0..cells.len())
                .filter(|&c| flow[c].is_none())
                .filter(|&c| {
                    if node < s {
                        cells[c].0 == node
                    } else {
                        cells[c].1 == node - s
                    }
                })
                .collect();
            if incident.len() == 1 {
                let c = incident[0];
                let (i, j) = cells[c];
                let value = if node < s {
                    supply[i].clone()
                } else {
                    demand[j].clone()
                };
                supply[i] -= value.clone();
                demand[j] -= value.clone();
                flow[c] = Some(value);
                open -= 1;
                progressed = true;
            }
        }
        if !progressed {
            return None; // contains a cycle
        }
    }
    let tol = S::tol(1e-12);
    if supply.iter().chain(&demand).any(|r| r.abs() > tol) {
        return None;
    }
    let flow: Vec<S> = flow.into_iter().map(Option::unwrap).collect();
    if flow.iter().any(|f| *f < -tol.clone()) {
        return None;
    }
    Some(flow)
}

/// Random tree with weights in `[0.1, 10)` and a random measure pair on it.
pub fn tree_instance<S: Scalar>(
    seed: u64,
    n: usize,
    max_support: usize,
) -> (MetricTree<S>, DiscreteMeasure<S>, DiscreteMeasure<S>) {
    let mut r = rng(seed);
    let t = random_tree(&mut r, n, 0.1, 10.0);
    let mu = random_measure(&mut r, n, max_support);
    let nu = random_measure(&mut r, n, max_support);
    (t, mu, nu)
}
