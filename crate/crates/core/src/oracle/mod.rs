//! Ground truth for small instances.
//!
//! [`transport_lp`] solves the discrete transportation problem over an
//! arbitrary finite metric with successive shortest paths, and
//! [`kr_dual`] solves the Kantorovich–Rubinstein dual (maximize
//! `sum f (mu - nu)` over 1-Lipschitz `f`) with a dense simplex. Neither
//! uses the tree structure, so both serve as independent checks of the
//! closed formula and of the coupling construction.

pub mod simplex;

use thiserror::Error;

use crate::measure::{DiscreteMeasure, PointId};
use crate::scalar::{definitely_greater, within, Scalar};
use crate::tree::{MetricTree, TreeError};
use crate::tree_ot::{Coupling, CouplingError};
use simplex::LpOutcome;

pub const DEFAULT_ORACLE_CAP: usize = 256;
/// Absolute slack allowed in the triangle inequality of a [`FiniteMetric`].
pub const TRIANGLE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("distance matrix is empty")]
    Empty,
    #[error("row {row} has {len} entries, expected {expected}")]
    NotSquare {
        row: usize,
        len: usize,
        expected: usize,
    },
    #[error("d({i},{j}) is negative or not finite")]
    Negative { i: usize, j: usize },
    #[error("d({i},{i}) is not zero")]
    NonZeroDiagonal { i: usize },
    #[error("d({i},{j}) is zero for distinct points")]
    ZeroDistance { i: usize, j: usize },
    #[error("d({i},{j}) != d({j},{i})")]
    Asymmetric { i: usize, j: usize },
    #[error("d({i},{k}) > d({i},{j}) + d({j},{k})")]
    TriangleViolated { i: usize, j: usize, k: usize },
    #[error("point {row} has {len} coordinates, expected {expected}")]
    RaggedPoints {
        row: usize,
        len: usize,
        expected: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("instance of size {size} exceeds the oracle cap {cap}")]
    TooLarge { size: usize, cap: usize },
    #[error("marginals have masses {left} and {right}, both must be 1")]
    InfeasibleMarginals { left: f64, right: f64 },
    #[error("point {point} is outside the metric of {n} points")]
    PointOutOfRange { point: PointId, n: usize },
    #[error("shortest-path augmentation did not converge")]
    NoConvergence,
    #[error("recovered potential violates |f({i}) - f({j})| <= d({i},{j})")]
    DualInfeasible { i: PointId, j: PointId },
    #[error("linear program is {0}")]
    Lp(&'static str),
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// Dense symmetric distance matrix on points `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMetric<S> {
    n: usize,
    dist: Vec<S>,
}

impl<S: Scalar> FiniteMetric<S> {
    /// Validates the metric axioms (triangle inequality up to
    /// [`TRIANGLE_TOLERANCE`]).
    pub fn new(rows: Vec<Vec<S>>) -> Result<Self, MetricError> {
        let n = rows.len();
        if n == 0 {
            return Err(MetricError::Empty);
        }
        for (row, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(MetricError::NotSquare {
                    row,
                    len: r.len(),
                    expected: n,
                });
            }
        }
        let dist: Vec<S> = rows.into_iter().flatten().collect();
        let metric = Self { n, dist };
        metric.validate()?;
        Ok(metric)
    }

    /// Euclidean metric on `points`.
    pub fn from_points(points: &[Vec<f64>]) -> Result<Self, MetricError> {
        let n = points.len();
        let dim = points.first().ok_or(MetricError::Empty)?.len();
        for (row, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(MetricError::RaggedPoints {
                    row,
                    len: p.len(),
                    expected: dim,
                });
            }
        }
        let mut dist = vec![S::zero(); n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = points[i]
                    .iter()
                    .zip(&points[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let d = S::from_f64(d).ok_or(MetricError::Negative { i, j })?;
                dist[i * n + j] = d.clone();
                dist[j * n + i] = d;
            }
        }
        let metric = Self { n, dist };
        metric.validate()?;
        Ok(metric)
    }

    fn validate(&self) -> Result<(), MetricError> {
        let n = self.n;
        for i in 0..n {
            if !self.dist(i, i).is_zero() {
                return Err(MetricError::NonZeroDiagonal { i });
            }
            for j in 0..n {
                let d = self.dist(i, j);
                if *d < S::zero() || !d.to_f64().is_finite() {
                    return Err(MetricError::Negative { i, j });
                }
                if i != j && d.is_zero() {
                    return Err(MetricError::ZeroDistance { i, j });
                }
                if d != self.dist(j, i) {
                    return Err(MetricError::Asymmetric { i, j });
                }
            }
        }
        let slack = S::from_f64(TRIANGLE_TOLERANCE).expect("finite");
        for i in 0..n {
            for j in 0..n {
                for k in i + 1..n {
                    let via = self.dist(i, j).clone() + self.dist(j, k).clone() + slack.clone();
                    if *self.dist(i, k) > via {
                        return Err(MetricError::TriangleViolated { i, j, k });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dist(&self, i: PointId, j: PointId) -> &S {
        &self.dist[i * self.n + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[S]> + '_ {
        self.dist.chunks(self.n)
    }

    /// Smallest and largest distance between distinct points.
    pub fn distance_range(&self) -> Option<(S, S)> {
        let mut out: Option<(S, S)> = None;
        for i in 0..self.n {
            for j in i + 1..self.n {
                let d = self.dist(i, j).clone();
                out = Some(match out {
                    None => (d.clone(), d),
                    Some((lo, hi)) => (S::min_of(lo, d.clone()), S::max_of(hi, d)),
                });
            }
        }
        out
    }
}

/// Path-distance matrix of a tree with at most `cap` vertices.
pub fn pairwise_distances<S: Scalar>(
    t: &MetricTree<S>,
    cap: usize,
) -> Result<FiniteMetric<S>, OracleError> {
    let n = t.len();
    if n > cap {
        return Err(OracleError::TooLarge { size: n, cap });
    }
    let mut dist = vec![S::zero(); n * n];
    for u in 0..n {
        for v in u + 1..n {
            let d = t.path_distance(u, v)?;
            dist[u * n + v] = d.clone();
            dist[v * n + u] = d;
        }
    }
    Ok(FiniteMetric { n, dist })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportSolution<S> {
    pub value: S,
    pub coupling: Coupling<S>,
}

fn check_instance<S: Scalar>(
    m: &FiniteMetric<S>,
    mu: &DiscreteMeasure<S>,
    nu: &DiscreteMeasure<S>,
    cap: usize,
) -> Result<(), OracleError> {
    for measure in [mu, nu] {
        if let Some(point) = measure.max_point().filter(|&p| p >= m.len()) {
            return Err(OracleError::PointOutOfRange { point, n: m.len() });
        }
        if measure.support_len() > cap {
            return Err(OracleError::TooLarge {
                size: measure.support_len(),
                cap,
            });
        }
    }
    let (left, right) = (mu.total(), nu.total());
    if !within(&left, &S::one(), 1e-12) || !within(&right, &S::one(), 1e-12) {
        return Err(OracleError::InfeasibleMarginals {
            left: left.to_f64(),
            right: right.to_f64(),
        });
    }
    Ok(())
}

/// Exact optimal transport between `mu` and `nu` over `m`.
pub fn transport_lp<S: Scalar>(
    m: &FiniteMetric<S>,
    mu: &DiscreteMeasure<S>,
    nu: &DiscreteMeasure<S>,
) -> Result<TransportSolution<S>, OracleError> {
    transport_lp_with_cap(m, mu, nu, DEFAULT_ORACLE_CAP)
}

/// Successive shortest augmenting paths on the bipartite residual network
/// `supply(mu) -> demand(nu)` with Bellman–Ford distances.
pub fn transport_lp_with_cap<S: Scalar>(
    m: &FiniteMetric<S>,
    mu: &DiscreteMeasure<S>,
    nu: &DiscreteMeasure<S>,
    cap: usize,
) -> Result<TransportSolution<S>, OracleError> {
    check_instance(m, mu, nu, cap)?;
    let sources: Vec<(PointId, S)> = mu.iter().map(|(p, x)| (p, x.clone())).collect();
    let sinks: Vec<(PointId, S)> = nu.iter().map(|(p, x)| (p, x.clone())).collect();
    let (s, t) = (sources.len(), sinks.len());
    let cost = |i: usize, j: usize| m.dist(sources[i].0, sinks[j].0).clone();
    let tol = S::tol(1e-12);

    let mut supply: Vec<S> = sources.iter().map(|(_, x)| x.clone()).collect();
    let mut demand: Vec<S> = sinks.iter().map(|(_, x)| x.clone()).collect();
    let mut flow = vec![S::zero(); s * t];

    // nodes: sources 0..s, sinks s..s+t
    let max_rounds = 64 * (s + t) * (s + t) + 64;
    for _ in 0..max_rounds {
        if supply.iter().all(|x| *x <= tol) {
            break;
        }
        let mut dist: Vec<Option<S>> = vec![None; s + t];
        let mut pred: Vec<Option<usize>> = vec![None; s + t];
        for i in 0..s {
            if supply[i] > tol {
                dist[i] = Some(S::zero());
            }
        }
        let mut changed = true;
        let mut sweeps = 0;
        while changed {
            changed = false;
            sweeps += 1;
            if sweeps > s + t + 1 {
                return Err(OracleError::NoConvergence);
            }
            for i in 0..s {
                for j in 0..t {
                    // forward arc i -> j
                    if let Some(di) = dist[i].clone() {
                        let cand = di + cost(i, j);
                        if dist[s + j]
                            .as_ref()
                            .is_none_or(|dj| definitely_greater(dj, &cand, 1e-12))
                        {
                            dist[s + j] = Some(cand);
                            pred[s + j] = Some(i);
                            changed = true;
                        }
                    }
                    // residual arc j -> i
                    if flow[i * t + j] > tol {
                        if let Some(dj) = dist[s + j].clone() {
                            let cand = dj - cost(i, j);
                            if dist[i]
                                .as_ref()
                                .is_none_or(|di| definitely_greater(di, &cand, 1e-12))
                            {
                                dist[i] = Some(cand);
                                pred[i] = Some(s + j);
                                changed = true;
                            }
                        }
                    }
                }
            }
        }

        let mut target: Option<usize> = None;
        for j in 0..t {
            if demand[j] > tol {
                if let Some(dj) = &dist[s + j] {
                    let better = match target {
                        None => true,
                        Some(k) => dj < dist[s + k].as_ref().unwrap(),
                    };
                    if better {
                        target = Some(j);
                    }
                }
            }
        }
        let j_end = target.ok_or(OracleError::NoConvergence)?;

        // walk back to the originating source
        let mut path = vec![s + j_end];
        let mut node = s + j_end;
        while let Some(p) = pred[node] {
            path.push(p);
            node = p;
            if path.len() > 2 * (s + t) + 2 {
                return Err(OracleError::NoConvergence);
            }
        }
        let start = node;
        let mut delta = S::min_of(supply[start].clone(), demand[j_end].clone());
        for w in path.windows(2) {
            let (head, tail) = (w[0], w[1]);
            if tail >= s {
                // residual arc sink(tail) -> source(head) cancels flow
                delta = S::min_of(delta, flow[head * t + (tail - s)].clone());
            }
        }
        for w in path.windows(2) {
            let (head, tail) = (w[0], w[1]);
            if tail < s {
                flow[tail * t + (head - s)] += delta.clone();
            } else {
                let f = &mut flow[head * t + (tail - s)];
                *f -= delta.clone();
                if *f <= tol {
                    *f = S::zero();
                }
            }
        }
        supply[start] -= delta.clone();
        demand[j_end] -= delta;
    }
    if supply.iter().any(|x| *x > tol) {
        return Err(OracleError::NoConvergence);
    }

    let mut entries = std::collections::BTreeMap::new();
    let mut value = S::zero();
    for i in 0..s {
        for j in 0..t {
            let f = flow[i * t + j].clone();
            if f > S::zero() {
                value += f.clone() * cost(i, j);
                entries.insert((sources[i].0, sinks[j].0), f);
            }
        }
    }
    let coupling = Coupling::new(entries, mu.clone(), nu.clone())?;
    Ok(TransportSolution { value, coupling })
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrDualSolution<S> {
    pub value: S,
    /// A 1-Lipschitz witness on the union of the supports.
    pub potential: Vec<(PointId, S)>,
}

/// Maximizes `sum_x f(x) (mu(x) - nu(x))` over 1-Lipschitz `f`.
///
/// The potential is read from the optimal simplex basis of the uncapacitated
/// transshipment problem on the union of the supports (with `f` pinned to 0
/// at the first point), then checked for the Lipschitz constraints before its
/// objective is returned.
pub fn kr_dual<S: Scalar>(
    m: &FiniteMetric<S>,
    mu: &DiscreteMeasure<S>,
    nu: &DiscreteMeasure<S>,
) -> Result<KrDualSolution<S>, OracleError> {
    check_instance(m, mu, nu, DEFAULT_ORACLE_CAP)?;
    let mut points: Vec<PointId> = mu.support().chain(nu.support()).collect();
    points.sort_unstable();
    points.dedup();
    let k = points.len();
    if k == 1 {
        return Ok(KrDualSolution {
            value: S::zero(),
            potential: vec![(points[0], S::zero())],
        });
    }

    let mut arcs = Vec::with_capacity(k * (k - 1));
    for a in 0..k {
        for b in 0..k {
            if a != b {
                arcs.push((a, b));
            }
        }
    }
    // one conservation row per point except the pinned first one
    let mut rows = vec![vec![S::zero(); arcs.len()]; k - 1];
    for (col, &(a, b)) in arcs.iter().enumerate() {
        if a > 0 {
            rows[a - 1][col] = S::one();
        }
        if b > 0 {
            rows[b - 1][col] = -S::one();
        }
    }
    let net = |p: PointId| mu.mass(p) - nu.mass(p);
    let rhs: Vec<S> = points[1..].iter().map(|&p| net(p)).collect();
    let costs: Vec<S> = arcs
        .iter()
        .map(|&(a, b)| m.dist(points[a], points[b]).clone())
        .collect();

    let solution = match simplex::minimize(&rows, &rhs, &costs) {
        LpOutcome::Optimal(s) => s,
        LpOutcome::Infeasible => return Err(OracleError::Lp("infeasible")),
        LpOutcome::Unbounded => return Err(OracleError::Lp("unbounded")),
    };
    let mut f = vec![S::zero(); k];
    f[1..].clone_from_slice(&solution.duals);

    for &(a, b) in &arcs {
        let slack = m.dist(points[a], points[b]).clone() + S::tol(1e-9);
        if f[a].clone() - f[b].clone() > slack {
            return Err(OracleError::DualInfeasible {
                i: points[a],
                j: points[b],
            });
        }
    }
    let value = (0..k).map(|i| f[i].clone() * net(points[i])).sum();
    Ok(KrDualSolution {
        value,
        potential: points.into_iter().zip(f).collect(),
    })
}

pub fn kr_dual_value<S: Scalar>(
    m: &FiniteMetric<S>,
    mu: &DiscreteMeasure<S>,
    nu: &DiscreteMeasure<S>,
) -> Result<S, OracleError> {
    kr_dual(m, mu, nu).map(|s| s.value)
}
