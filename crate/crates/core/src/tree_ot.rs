//! Optimal transport on rooted metric trees.
//!
//! With `T_e` the vertex set hanging below edge `e`, the 1-Wasserstein
//! distance between two probability measures on a finite tree is
//!
//! ```text
//! W(mu, nu) = sum_e  w_e * |mu(T_e) - nu(T_e)|
//! ```
//!
//! and the map `mu -> (e -> w_e * mu(T_e))` is an isometric embedding into
//! `l1(E)`. [`optimal_coupling`] constructs an explicit coupling attaining the
//! formula by first lifting every subtree surplus towards the root, then
//! letting every subtree deficit fall back down, one edge at a time.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::measure::{DiscreteMeasure, PointId};
use crate::scalar::{definitely_greater, within, Scalar};
use crate::tree::{MetricTree, TreeError, Vertex};

/// Float-mode tolerance on coupling marginals.
pub const MARGINAL_TOLERANCE: f64 = 1e-10;
/// Float-mode tolerance for surplus/deficit comparisons during the sweeps.
pub const SWEEP_TOLERANCE: f64 = 1e-12;
/// Float-mode threshold below which split provenance entries are dropped.
pub const DUST: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CouplingError {
    #[error("row sum at {point} is {found}, left marginal is {expected}")]
    LeftMarginal {
        point: PointId,
        found: f64,
        expected: f64,
    },
    #[error("column sum at {point} is {found}, right marginal is {expected}")]
    RightMarginal {
        point: PointId,
        found: f64,
        expected: f64,
    },
    #[error("entry ({0}, {1}) is not positive")]
    NonPositiveEntry(PointId, PointId),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeOtError {
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("mass leak of {amount} during {phase} at depth {depth}")]
    MassLeak {
        phase: &'static str,
        depth: usize,
        amount: f64,
    },
    #[error("constructed coupling is invalid: {0}")]
    InvalidCoupling(#[from] CouplingError),
}

/// A joint measure with prescribed marginals, stored sparsely as
/// `(source, destination) -> mass`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling<S> {
    entries: BTreeMap<(PointId, PointId), S>,
    left: DiscreteMeasure<S>,
    right: DiscreteMeasure<S>,
}

impl<S: Scalar> Coupling<S> {
    /// Validates that row sums match `left` and column sums match `right`
    /// (exactly in exact mode, within [`MARGINAL_TOLERANCE`] otherwise).
    pub fn new(
        entries: BTreeMap<(PointId, PointId), S>,
        left: DiscreteMeasure<S>,
        right: DiscreteMeasure<S>,
    ) -> Result<Self, CouplingError> {
        let mut rows: BTreeMap<PointId, S> = BTreeMap::new();
        let mut cols: BTreeMap<PointId, S> = BTreeMap::new();
        for (&(x, y), m) in &entries {
            if *m <= S::zero() {
                return Err(CouplingError::NonPositiveEntry(x, y));
            }
            *rows.entry(x).or_insert_with(S::zero) += m.clone();
            *cols.entry(y).or_insert_with(S::zero) += m.clone();
        }
        for x in rows.keys().copied().chain(left.support()) {
            let found = rows.get(&x).cloned().unwrap_or_else(S::zero);
            let expected = left.mass(x);
            if !within(&found, &expected, MARGINAL_TOLERANCE) {
                return Err(CouplingError::LeftMarginal {
                    point: x,
                    found: found.to_f64(),
                    expected: expected.to_f64(),
                });
            }
        }
        for y in cols.keys().copied().chain(right.support()) {
            let found = cols.get(&y).cloned().unwrap_or_else(S::zero);
            let expected = right.mass(y);
            if !within(&found, &expected, MARGINAL_TOLERANCE) {
                return Err(CouplingError::RightMarginal {
                    point: y,
                    found: found.to_f64(),
                    expected: expected.to_f64(),
                });
            }
        }
        Ok(Self {
            entries,
            left,
            right,
        })
    }

    /// The product coupling `mu ⊗ nu`.
    pub fn independent(left: &DiscreteMeasure<S>, right: &DiscreteMeasure<S>) -> Self {
        let entries = left
            .iter()
            .flat_map(|(x, a)| {
                right
                    .iter()
                    .map(move |(y, b)| ((x, y), a.clone() * b.clone()))
            })
            .collect();
        Self {
            entries,
            left: left.clone(),
            right: right.clone(),
        }
    }

    pub fn entries(&self) -> &BTreeMap<(PointId, PointId), S> {
        &self.entries
    }

    pub fn left(&self) -> &DiscreteMeasure<S> {
        &self.left
    }

    pub fn right(&self) -> &DiscreteMeasure<S> {
        &self.right
    }

    pub fn mass(&self, x: PointId, y: PointId) -> S {
        self.entries.get(&(x, y)).cloned().unwrap_or_else(S::zero)
    }

    /// `sum mass * cost(x, y)` for an arbitrary ground cost.
    pub fn cost_with<E, F>(&self, mut cost: F) -> Result<S, E>
    where
        F: FnMut(PointId, PointId) -> Result<S, E>,
    {
        let mut total = S::zero();
        for (&(x, y), m) in &self.entries {
            if x != y {
                total += m.clone() * cost(x, y)?;
            }
        }
        Ok(total)
    }
}

/// Sparse real vector indexed by `K` (tree edges by default).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector<S, K: Ord = Vertex> {
    entries: BTreeMap<K, S>,
}

impl<S: Scalar, K: Ord + Clone> EmbeddingVector<S, K> {
    pub fn new() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// Zero entries are discarded.
    pub fn from_entries<I: IntoIterator<Item = (K, S)>>(entries: I) -> Self {
        Self {
            entries: entries.into_iter().filter(|(_, v)| !v.is_zero()).collect(),
        }
    }

    pub fn get(&self, key: &K) -> S {
        self.entries.get(key).cloned().unwrap_or_else(S::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&K, &S)> + '_ {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn l1_norm(&self) -> S {
        self.entries.values().map(|v| v.abs()).sum()
    }
}

impl<S: Scalar, K: Ord + Clone> Default for EmbeddingVector<S, K> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar, K: Ord + Clone> FromIterator<(K, S)> for EmbeddingVector<S, K> {
    fn from_iter<I: IntoIterator<Item = (K, S)>>(iter: I) -> Self {
        Self::from_entries(iter)
    }
}

/// `sum_k |a[k] - b[k]|`, missing entries read as zero.
pub fn l1_distance<S: Scalar, K: Ord + Clone>(
    a: &EmbeddingVector<S, K>,
    b: &EmbeddingVector<S, K>,
) -> S {
    let mut total = S::zero();
    let mut lhs = a.entries.iter().peekable();
    let mut rhs = b.entries.iter().peekable();
    loop {
        match (lhs.peek(), rhs.peek()) {
            (Some((ka, va)), Some((kb, vb))) => match ka.cmp(kb) {
                std::cmp::Ordering::Less => {
                    total += va.abs();
                    lhs.next();
                }
                std::cmp::Ordering::Greater => {
                    total += vb.abs();
                    rhs.next();
                }
                std::cmp::Ordering::Equal => {
                    total += ((*va).clone() - (*vb).clone()).abs();
                    lhs.next();
                    rhs.next();
                }
            },
            (Some((_, va)), None) => {
                total += va.abs();
                lhs.next();
            }
            (None, Some((_, vb))) => {
                total += vb.abs();
                rhs.next();
            }
            (None, None) => return total,
        }
    }
}

#[cfg(debug_assertions)]
thread_local! {
    static VISITS: std::cell::Cell<usize> = const { std::cell::Cell::new(0) };
}

/// Vertex visits recorded by the linear-time passes since the last call
/// (debug builds only).
#[cfg(debug_assertions)]
pub fn take_vertex_visits() -> usize {
    VISITS.with(|c| c.replace(0))
}

#[inline]
fn record_visits(_count: usize) {
    #[cfg(debug_assertions)]
    VISITS.with(|c| c.set(c.get() + _count));
}

/// Rank-indexed point masses of a signed combination of measures given as
/// `(vertex, mass)` pairs, before any propagation.
fn ranked_masses<S: Scalar>(
    t: &MetricTree<S>,
    point_masses: impl Iterator<Item = (Vertex, S)>,
) -> Result<Vec<S>, TreeError> {
    let mut acc = vec![S::zero(); t.len()];
    let mut visits = 0usize;
    for (v, m) in point_masses {
        t.check(v)?;
        acc[t.rank(v)] += m;
        visits += 1;
    }
    record_visits(visits);
    Ok(acc)
}

/// Dense `v -> sum of point masses over the subtree of v`. The sweep runs in
/// rank space so reads stay sequential.
fn accumulate<S: Scalar>(
    t: &MetricTree<S>,
    point_masses: impl Iterator<Item = (Vertex, S)>,
) -> Result<Vec<S>, TreeError> {
    let mut acc = ranked_masses(t, point_masses)?;
    let parents = t.parent_ranks();
    for k in 0..t.len().saturating_sub(1) {
        let below = acc[k].clone();
        acc[parents[k]] += below;
    }
    let mut out = vec![S::zero(); t.len()];
    for (&v, x) in t.order().iter().zip(acc) {
        out[v] = x;
    }
    record_visits(2 * t.len());
    Ok(out)
}

fn subtree_totals<S: Scalar>(
    t: &MetricTree<S>,
    m: &DiscreteMeasure<S>,
) -> Result<Vec<S>, TreeError> {
    accumulate(t, m.iter().map(|(v, x)| (v, x.clone())))
}

/// `mu(T_e)` for every edge `e` (keyed by its lower endpoint); zeros omitted.
pub fn subtree_masses<S: Scalar>(
    t: &MetricTree<S>,
    m: &DiscreteMeasure<S>,
) -> Result<BTreeMap<Vertex, S>, TreeError> {
    let acc = subtree_totals(t, m)?;
    Ok(acc
        .into_iter()
        .enumerate()
        .filter(|(v, x)| *v != t.root() && !x.is_zero())
        .collect())
}

/// Wasserstein-1 distance on `t` by the closed edge formula, in `O(n)`.
pub fn tree_wasserstein<S: Scalar>(
    t: &MetricTree<S>,
    mu: &DiscreteMeasure<S>,
    nu: &DiscreteMeasure<S>,
) -> Result<S, TreeError> {
    let signed = mu
        .iter()
        .map(|(v, x)| (v, x.clone()))
        .chain(nu.iter().map(|(v, x)| (v, -x.clone())));
    let mut diff = ranked_masses(t, signed)?;
    let parents = t.parent_ranks();
    let weights = t.ranked_weights();
    let mut total = S::zero();
    for k in 0..t.len().saturating_sub(1) {
        let below = std::mem::replace(&mut diff[k], S::zero());
        if !below.is_zero() {
            total += weights[k].clone() * below.abs();
            diff[parents[k]] += below;
        }
    }
    record_visits(t.len());
    Ok(total)
}

/// Isometric `l1` image of `m`: edge `e` maps to `w_e * m(T_e)`.
pub fn embed_measure<S: Scalar>(
    t: &MetricTree<S>,
    m: &DiscreteMeasure<S>,
) -> Result<EmbeddingVector<S>, TreeError> {
    Ok(subtree_masses(t, m)?
        .into_iter()
        .map(|(e, mass)| (e, t.weight(e).clone() * mass))
        .collect())
}

/// `sum mass * d_T(x, y)` over the entries of `c`.
pub fn coupling_cost<S: Scalar>(t: &MetricTree<S>, c: &Coupling<S>) -> Result<S, TreeError> {
    c.cost_with(|x, y| t.path_distance(x, y))
}

/// Provenance table: for each holder vertex, `(rank of origin, mass)` sorted
/// by rank.
type Holdings<S> = Vec<Vec<(usize, S)>>;

/// Moves `amount` of mass held at `from` to `to`, taking provenance entries
/// in increasing rank and splitting the boundary entry. Returns the mass
/// actually moved.
fn transfer<S: Scalar>(held: &mut Holdings<S>, from: Vertex, to: Vertex, amount: S) -> S {
    let dust = S::tol(DUST);
    let mut remaining = amount.clone();
    let mut moved: Vec<(usize, S)> = Vec::new();
    let mut kept: Vec<(usize, S)> = Vec::new();
    for (origin, mass) in std::mem::take(&mut held[from]) {
        if remaining <= dust {
            kept.push((origin, mass));
        } else if mass <= remaining {
            remaining -= mass.clone();
            moved.push((origin, mass));
        } else {
            let rest = mass - remaining.clone();
            moved.push((origin, remaining.clone()));
            remaining = S::zero();
            if rest > dust {
                kept.push((origin, rest));
            }
        }
    }
    held[from] = kept;

    let target = std::mem::take(&mut held[to]);
    let mut merged = Vec::with_capacity(target.len() + moved.len());
    let mut a = target.into_iter().peekable();
    let mut b = moved.into_iter().peekable();
    loop {
        let next = match (a.peek(), b.peek()) {
            (Some(x), Some(y)) if x.0 < y.0 => a.next(),
            (Some(x), Some(y)) if x.0 > y.0 => b.next(),
            (Some(_), Some(_)) => {
                let (r, m1) = a.next().unwrap();
                let (_, m2) = b.next().unwrap();
                Some((r, m1 + m2))
            }
            (Some(_), None) => a.next(),
            (None, Some(_)) => b.next(),
            (None, None) => None,
        };
        match next {
            Some(entry) => merged.push(entry),
            None => break,
        }
    }
    held[to] = merged;
    amount - remaining
}

fn audit_level<S: Scalar>(leak: &S, phase: &'static str, depth: usize) -> Result<(), TreeOtError> {
    if within(leak, &S::zero(), MARGINAL_TOLERANCE) {
        Ok(())
    } else {
        Err(TreeOtError::MassLeak {
            phase,
            depth,
            amount: leak.to_f64(),
        })
    }
}

/// Explicit optimal coupling between `mu` and `nu` on `t`.
///
/// Starts from the diagonal coupling of `mu` with itself and reshapes the
/// working measure into `nu`. The first sweep visits depths from the deepest
/// up to 1 and lifts every subtree surplus `mu'(T_v) - nu(T_v)` from `v` to
/// its parent. The second sweep visits depths from 0 down and lets every
/// child deficit `nu(T_s) - mu'(T_s)` fall from the parent into `s`. Each
/// move carries its provenance, oldest (lowest rank) first, so the result
/// records where each unit of `nu` came from in `mu`. Every move crosses a
/// single edge in the direction the formula charges it, hence the cost of the
/// returned coupling equals [`tree_wasserstein`].
pub fn optimal_coupling<S: Scalar>(
    t: &MetricTree<S>,
    mu: &DiscreteMeasure<S>,
    nu: &DiscreteMeasure<S>,
) -> Result<Coupling<S>, TreeOtError> {
    let mu_sub = subtree_totals(t, mu)?;
    let nu_sub = subtree_totals(t, nu)?;
    let mut current_sub = mu_sub;

    let mut held: Holdings<S> = vec![Vec::new(); t.len()];
    for (v, m) in mu.iter() {
        held[v].push((t.rank(v), m.clone()));
    }

    // surplus goes up, deepest level first
    for depth in (1..=t.height()).rev() {
        let mut leak = S::zero();
        for &v in t.level(depth) {
            if definitely_greater(&current_sub[v], &nu_sub[v], SWEEP_TOLERANCE) {
                let surplus = current_sub[v].clone() - nu_sub[v].clone();
                let parent = t.parent(v).expect("non-root vertex");
                let moved = transfer(&mut held, v, parent, surplus.clone());
                leak += surplus - moved;
                current_sub[v] = nu_sub[v].clone();
            }
        }
        audit_level(&leak, "lift", depth)?;
    }

    // deficits fall, shallowest level first
    for depth in 0..t.height() {
        let mut leak = S::zero();
        for &r in t.level(depth) {
            for &s in t.children(r) {
                if definitely_greater(&nu_sub[s], &current_sub[s], SWEEP_TOLERANCE) {
                    let deficit = nu_sub[s].clone() - current_sub[s].clone();
                    let moved = transfer(&mut held, r, s, deficit.clone());
                    leak += deficit - moved;
                    current_sub[s] = nu_sub[s].clone();
                }
            }
        }
        audit_level(&leak, "fall", depth)?;
    }

    let mut entries = BTreeMap::new();
    for (holder, list) in held.into_iter().enumerate() {
        for (origin_rank, mass) in list {
            if mass > S::zero() {
                entries.insert((t.order()[origin_rank], holder), mass);
            }
        }
    }
    Ok(Coupling::new(entries, mu.clone(), nu.clone())?)
}
