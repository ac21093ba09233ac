//! Finitely supported probability measures.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::scalar::{within, Scalar};

/// Identifier of a point (a tree vertex or a point of a finite metric).
pub type PointId = usize;

/// Absolute tolerance on the total mass in float mode.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MeasureError {
    #[error("negative mass {mass} at point {point}")]
    NegativeMass { point: PointId, mass: f64 },
    #[error("masses sum to {total}, expected 1")]
    NotNormalized { total: f64 },
    #[error("point {0} has no image")]
    UnmappedPoint(PointId),
}

/// A probability measure with finite support; zero masses are never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure<S> {
    masses: BTreeMap<PointId, S>,
}

impl<S: Scalar> DiscreteMeasure<S> {
    /// Builds a measure from `(point, mass)` pairs; duplicate points are summed.
    pub fn from_pairs<I>(pairs: I) -> Result<Self, MeasureError>
    where
        I: IntoIterator<Item = (PointId, S)>,
    {
        let mut masses: BTreeMap<PointId, S> = BTreeMap::new();
        for (point, mass) in pairs {
            if mass < S::zero() {
                return Err(MeasureError::NegativeMass {
                    point,
                    mass: mass.to_f64(),
                });
            }
            let slot = masses.entry(point).or_insert_with(S::zero);
            *slot = slot.clone() + mass;
        }
        masses.retain(|_, m| !m.is_zero());
        let total: S = masses.values().cloned().sum();
        if !within(&total, &S::one(), NORMALIZATION_TOLERANCE) {
            return Err(MeasureError::NotNormalized {
                total: total.to_f64(),
            });
        }
        Ok(Self { masses })
    }

    pub fn dirac(point: PointId) -> Self {
        Self {
            masses: BTreeMap::from([(point, S::one())]),
        }
    }

    /// Uniform measure over distinct `points`.
    pub fn uniform(points: &[PointId]) -> Result<Self, MeasureError> {
        let share = S::one() / S::from_usize(points.len());
        Self::from_pairs(points.iter().map(|&p| (p, share.clone())))
    }

    pub fn mass(&self, point: PointId) -> S {
        self.masses.get(&point).cloned().unwrap_or_else(S::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (PointId, &S)> + '_ {
        self.masses.iter().map(|(&p, m)| (p, m))
    }

    pub fn support(&self) -> impl Iterator<Item = PointId> + '_ {
        self.masses.keys().copied()
    }

    pub fn support_len(&self) -> usize {
        self.masses.len()
    }

    pub fn total(&self) -> S {
        self.masses.values().cloned().sum()
    }

    /// Largest point id in the support.
    pub fn max_point(&self) -> Option<PointId> {
        self.masses.keys().next_back().copied()
    }

    /// Image measure under `f`: the mass of `y` is the mass of `f⁻¹(y)`.
    pub fn pushforward<F>(&self, f: F) -> Result<Self, MeasureError>
    where
        F: Fn(PointId) -> Option<PointId>,
    {
        let mut masses: BTreeMap<PointId, S> = BTreeMap::new();
        for (&x, m) in &self.masses {
            let y = f(x).ok_or(MeasureError::UnmappedPoint(x))?;
            let slot = masses.entry(y).or_insert_with(S::zero);
            *slot = slot.clone() + m.clone();
        }
        Ok(Self { masses })
    }

    /// Pushforward along a dense map `point -> map[point]`.
    pub fn pushforward_by(&self, map: &[PointId]) -> Result<Self, MeasureError> {
        self.pushforward(|x| map.get(x).copied())
    }
}
