//! Stochastic embeddings of finite metrics into families of trees.
//!
//! A family `{(p_i, T_i, f_i)}` embeds a finite metric `(X, d)` with
//! distortion `D` when every `f_i` is non-contracting and
//! `sum_i p_i d_i(f_i x, f_i y) <= D d(x, y)` for all pairs. Pushing measures
//! forward along the `f_i` and concatenating the `p_i`-scaled edge embeddings
//! of each tree gives a map `F` into `l1` with
//! `W_X(mu, nu) <= |F(mu) - F(nu)|_1 <= D W_X(mu, nu)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::measure::{DiscreteMeasure, MeasureError, PointId};
use crate::oracle::{pairwise_distances, transport_lp, FiniteMetric, OracleError};
use crate::scalar::{within, Scalar};
use crate::tree::{MetricTree, TreeError, Vertex};
use crate::tree_ot::{embed_measure, l1_distance, tree_wasserstein, EmbeddingVector};

/// Slack allowed when checking that a map does not contract distances.
pub const NONCONTRACTION_TOLERANCE: f64 = 1e-9;
/// Relative slack in the distortion sandwich.
pub const SANDWICH_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EmbeddingError {
    #[error("embedding has no components")]
    NoComponents,
    #[error("component weights sum to {total}, expected 1")]
    WeightsNotNormalized { total: f64 },
    #[error("component {component} has negative weight")]
    NegativeWeight { component: usize },
    #[error("component {component} maps {len} points, source has {expected}")]
    MapLength {
        component: usize,
        len: usize,
        expected: usize,
    },
    #[error("component {component} maps point {point} to unknown vertex {vertex}")]
    MapOutOfRange {
        component: usize,
        point: PointId,
        vertex: Vertex,
    },
    #[error("distortion is undefined on a single point")]
    SinglePoint,
    #[error(
        "component {component} contracts ({x}, {y}): tree distance {tree_distance} < {source_distance}"
    )]
    NonContractionViolated {
        component: usize,
        x: PointId,
        y: PointId,
        tree_distance: f64,
        source_distance: f64,
    },
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingComponent<S> {
    pub p: S,
    pub tree: MetricTree<S>,
    /// `map[x]` is the tree vertex hosting source point `x`.
    pub map: Vec<Vertex>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticTreeEmbedding<S> {
    components: Vec<EmbeddingComponent<S>>,
    source: FiniteMetric<S>,
}

impl<S: Scalar> StochasticTreeEmbedding<S> {
    /// Checks weights and maps; non-contraction is audited separately by
    /// [`validate_embedding`].
    pub fn new(
        components: Vec<EmbeddingComponent<S>>,
        source: FiniteMetric<S>,
    ) -> Result<Self, EmbeddingError> {
        if components.is_empty() {
            return Err(EmbeddingError::NoComponents);
        }
        let mut total = S::zero();
        for (i, c) in components.iter().enumerate() {
            if c.p < S::zero() {
                return Err(EmbeddingError::NegativeWeight { component: i });
            }
            total += c.p.clone();
            if c.map.len() != source.len() {
                return Err(EmbeddingError::MapLength {
                    component: i,
                    len: c.map.len(),
                    expected: source.len(),
                });
            }
            if let Some((point, &vertex)) =
                c.map.iter().enumerate().find(|(_, &v)| !c.tree.contains(v))
            {
                return Err(EmbeddingError::MapOutOfRange {
                    component: i,
                    point,
                    vertex,
                });
            }
        }
        if !within(&total, &S::one(), 1e-12) {
            return Err(EmbeddingError::WeightsNotNormalized {
                total: total.to_f64(),
            });
        }
        Ok(Self { components, source })
    }

    /// The tree metric of `t` embedded into `t` itself by the identity.
    pub fn identity(t: MetricTree<S>, cap: usize) -> Result<Self, EmbeddingError> {
        let source = pairwise_distances(&t, cap)?;
        let map = (0..t.len()).collect();
        Self::new(
            vec![EmbeddingComponent {
                p: S::one(),
                tree: t,
                map,
            }],
            source,
        )
    }

    pub fn components(&self) -> &[EmbeddingComponent<S>] {
        &self.components
    }

    pub fn source(&self) -> &FiniteMetric<S> {
        &self.source
    }

    /// `sum_i p_i d_i(f_i x, f_i y)`.
    pub fn expected_distance(&self, x: PointId, y: PointId) -> Result<S, EmbeddingError> {
        let mut total = S::zero();
        for c in &self.components {
            total += c.p.clone() * c.tree.path_distance(c.map[x], c.map[y])?;
        }
        Ok(total)
    }
}

/// Extreme stretch ratios over a set of audited pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionReport<S, P = (PointId, PointId)> {
    pub min_ratio: S,
    pub max_ratio: S,
    pub argmax_pair: P,
    pub mean_ratio: f64,
    pub pairs: usize,
    pub per_component_noncontraction: Vec<bool>,
}

impl<S: Scalar, P> DistortionReport<S, P> {
    /// `min >= 1 - tol` and `max <= bound (1 + tol)`.
    pub fn within_sandwich(&self, bound: &S) -> bool {
        let lower = S::one() - S::tol(SANDWICH_TOLERANCE);
        let upper = bound.clone() * (S::one() + S::tol(SANDWICH_TOLERANCE));
        self.min_ratio >= lower && self.max_ratio <= upper
    }
}

struct RatioAccumulator<S, P> {
    best: Option<(S, S, P)>,
    sum: f64,
    count: usize,
}

impl<S: Scalar, P: Clone> RatioAccumulator<S, P> {
    fn new() -> Self {
        Self {
            best: None,
            sum: 0.0,
            count: 0,
        }
    }

    fn push(&mut self, ratio: S, pair: P) {
        self.sum += ratio.to_f64();
        self.count += 1;
        self.best = Some(match self.best.take() {
            None => (ratio.clone(), ratio, pair),
            Some((lo, hi, arg)) => {
                let lo = S::min_of(lo, ratio.clone());
                if ratio > hi {
                    (lo, ratio, pair)
                } else {
                    (lo, hi, arg)
                }
            }
        });
    }

    fn finish(self, flags: Vec<bool>, empty: P) -> DistortionReport<S, P> {
        let (min_ratio, max_ratio, argmax_pair) = self.best.unwrap_or((S::one(), S::one(), empty));
        DistortionReport {
            min_ratio,
            max_ratio,
            argmax_pair,
            mean_ratio: if self.count == 0 {
                1.0
            } else {
                self.sum / self.count as f64
            },
            pairs: self.count,
            per_component_noncontraction: flags,
        }
    }
}

/// Exhaustive audit over all point pairs.
///
/// Fails on the first contracted pair; otherwise `max_ratio` is the
/// distortion of this embedding instance.
pub fn validate_embedding<S: Scalar>(
    e: &StochasticTreeEmbedding<S>,
) -> Result<DistortionReport<S>, EmbeddingError> {
    let n = e.source.len();
    if n < 2 {
        return Err(EmbeddingError::SinglePoint);
    }
    let slack = S::tol(NONCONTRACTION_TOLERANCE);
    let mut acc = RatioAccumulator::new();
    for x in 0..n {
        for y in x + 1..n {
            let d = e.source.dist(x, y).clone();
            let mut expected = S::zero();
            for (i, c) in e.components.iter().enumerate() {
                let td = c.tree.path_distance(c.map[x], c.map[y])?;
                if td < d.clone() - slack.clone() {
                    return Err(EmbeddingError::NonContractionViolated {
                        component: i,
                        x,
                        y,
                        tree_distance: td.to_f64(),
                        source_distance: d.to_f64(),
                    });
                }
                expected += c.p.clone() * td;
            }
            acc.push(expected / d, (x, y));
        }
    }
    Ok(acc.finish(vec![true; e.components.len()], (0, 0)))
}

/// Samples `count` FRT trees, each with weight `1 / count`. A one-point
/// metric yields its single trivial tree.
///
/// Distances are rescaled so the smallest is 1 and `L = max(1, ceil(log2 Δ))`
/// where `Δ` is the rescaled diameter. A radius scale `β = 2^U`, `U ~ U[0,1)`
/// and a uniformly random ordering of the points are drawn per tree. Starting
/// from the whole set at level `L`, each level-`(i+1)` cluster is split by
/// assigning every point to the first point in the ordering within rescaled
/// distance `β 2^(i-1)`; level 0 clusters are singletons. A level-`i` cluster
/// hangs from its parent by an edge of rescaled length `2^(i+1)`. Component
/// `k` uses ChaCha8 stream `k` of `seed`, so the result is deterministic.
pub fn frt_sample<S: Scalar>(
    m: &FiniteMetric<S>,
    seed: u64,
    count: usize,
) -> Result<StochasticTreeEmbedding<S>, EmbeddingError> {
    if count == 0 {
        return Err(EmbeddingError::NoComponents);
    }
    // a single point has exactly one tree
    let count = if m.len() == 1 { 1 } else { count };
    let p = S::one() / S::from_usize(count);
    let components = (0..count)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let (tree, map) = frt_tree(m, &mut rng)?;
            Ok(EmbeddingComponent {
                p: p.clone(),
                tree,
                map,
            })
        })
        .collect::<Result<Vec<_>, EmbeddingError>>()?;
    StochasticTreeEmbedding::new(components, m.clone())
}

fn frt_tree<S: Scalar, R: Rng>(
    m: &FiniteMetric<S>,
    rng: &mut R,
) -> Result<(MetricTree<S>, Vec<Vertex>), TreeError> {
    let n = m.len();
    let Some((dmin, dmax)) = m.distance_range() else {
        return Ok((MetricTree::from_edges(&[], 0)?, vec![0]));
    };
    let diameter = dmax / dmin.clone();
    let mut top = 0i32;
    while S::pow2(top) < diameter {
        top += 1;
    }
    let top = top.max(1);

    // β must stay below 2 so that level-0 clusters are singletons
    let beta = 2f64.powf(rng.random::<f64>()).min(2.0 - f64::EPSILON);
    let beta = S::from_f64(beta).expect("finite");
    let mut ordering: Vec<PointId> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        ordering.swap(i, j);
    }

    let mut edges: Vec<(Vertex, Vertex, S)> = Vec::new();
    let mut next_vertex = 1usize;
    let mut clusters: Vec<(Vertex, Vec<PointId>)> = vec![(0, (0..n).collect())];
    for level in (0..top).rev() {
        let radius = beta.clone() * S::pow2(level - 1) * dmin.clone();
        let weight = S::pow2(level + 1) * dmin.clone();
        let mut children = Vec::new();
        for (parent, mut members) in clusters {
            for &center in &ordering {
                if members.is_empty() {
                    break;
                }
                let (inside, outside): (Vec<_>, Vec<_>) = members
                    .into_iter()
                    .partition(|&x| *m.dist(x, center) <= radius);
                members = outside;
                if !inside.is_empty() {
                    edges.push((parent, next_vertex, weight.clone()));
                    children.push((next_vertex, inside));
                    next_vertex += 1;
                }
            }
        }
        clusters = children;
    }

    let mut map = vec![0; n];
    for (vertex, members) in clusters {
        debug_assert_eq!(members.len(), 1, "level-0 clusters are singletons");
        for x in members {
            map[x] = vertex;
        }
    }
    Ok((MetricTree::from_edges(&edges, 0)?, map))
}

/// `[(f_i)_* m]_i`.
pub fn lift_measure<S: Scalar>(
    e: &StochasticTreeEmbedding<S>,
    m: &DiscreteMeasure<S>,
) -> Result<Vec<DiscreteMeasure<S>>, EmbeddingError> {
    e.components
        .iter()
        .map(|c| Ok(m.pushforward_by(&c.map)?))
        .collect()
}

/// Key of a coordinate of [`wasserstein_l1_map`]: `(component, edge)`.
pub type BlockEdge = (usize, Vertex);

/// Concatenation over components of `p_i * embed_measure(T_i, (f_i)_* m)`.
pub fn wasserstein_l1_map<S: Scalar>(
    e: &StochasticTreeEmbedding<S>,
    m: &DiscreteMeasure<S>,
) -> Result<EmbeddingVector<S, BlockEdge>, EmbeddingError> {
    let mut out = Vec::new();
    for (i, (c, lifted)) in e.components.iter().zip(lift_measure(e, m)?).enumerate() {
        for (&edge, value) in embed_measure(&c.tree, &lifted)?.iter() {
            out.push(((i, edge), c.p.clone() * value.clone()));
        }
    }
    Ok(out.into_iter().collect())
}

/// Per-component tree distances `W_{T_i}((f_i)_* mu, (f_i)_* nu)`.
pub fn component_distances<S: Scalar>(
    e: &StochasticTreeEmbedding<S>,
    mu: &DiscreteMeasure<S>,
    nu: &DiscreteMeasure<S>,
) -> Result<Vec<S>, EmbeddingError> {
    let lifted_mu = lift_measure(e, mu)?;
    let lifted_nu = lift_measure(e, nu)?;
    e.components
        .iter()
        .zip(lifted_mu.iter().zip(&lifted_nu))
        .map(|(c, (a, b))| Ok(tree_wasserstein(&c.tree, a, b)?))
        .collect()
}

/// Ratios `|F(mu) - F(nu)|_1 / W_X(mu, nu)` over sample pairs, with `W_X`
/// from the transport oracle. `argmax_pair` is an index into `samples`;
/// pairs with `W_X = 0` are skipped. The per-component flags record whether
/// every pushforward distance stayed above `W_X`.
pub fn wasserstein_distortion_audit<S: Scalar>(
    e: &StochasticTreeEmbedding<S>,
    samples: &[(DiscreteMeasure<S>, DiscreteMeasure<S>)],
) -> Result<DistortionReport<S, usize>, EmbeddingError> {
    let slack = S::tol(NONCONTRACTION_TOLERANCE);
    let mut flags = vec![true; e.components.len()];
    let mut acc = RatioAccumulator::new();
    for (k, (mu, nu)) in samples.iter().enumerate() {
        let base = transport_lp(&e.source, mu, nu)?.value;
        for (flag, d) in flags.iter_mut().zip(component_distances(e, mu, nu)?) {
            if d < base.clone() - slack.clone() {
                *flag = false;
            }
        }
        if base.is_zero() {
            continue;
        }
        let image = l1_distance(&wasserstein_l1_map(e, mu)?, &wasserstein_l1_map(e, nu)?);
        acc.push(image / base, k);
    }
    Ok(acc.finish(flags, 0))
}
