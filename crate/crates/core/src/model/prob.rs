use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use super::activity::{ActivityType, NUM_ACTIVITIES};
use crate::error::{Error, Result};

/// Absolute tolerance for probability comparisons.
pub const PROB_TOLERANCE: f64 = 1e-9;

/// Non-negative weights over the 15 activity types, indexed by [`ActivityType`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbVector(pub [f64; NUM_ACTIVITIES]);

impl Default for ProbVector {
    fn default() -> Self {
        ProbVector([0.0; NUM_ACTIVITIES])
    }
}

impl ProbVector {
    pub fn zeros() -> Self {
        Self::default()
    }

    pub fn uniform() -> Self {
        ProbVector([1.0 / NUM_ACTIVITIES as f64; NUM_ACTIVITIES])
    }

    /// Point mass on a single activity.
    pub fn unit(activity: ActivityType) -> Self {
        let mut v = Self::zeros();
        v[activity] = 1.0;
        v
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; NUM_ACTIVITIES] = values.try_into().map_err(|_| {
            Error::Schema(format!(
                "expected {NUM_ACTIVITIES} activity weights, got {}",
                values.len()
            ))
        })?;
        Ok(ProbVector(arr))
    }

    pub fn values(&self) -> &[f64; NUM_ACTIVITIES] {
        &self.0
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_normalized(&self) -> bool {
        self.0.iter().all(|&x| x >= 0.0 && x.is_finite()) && (self.sum() - 1.0).abs() <= PROB_TOLERANCE
    }

    /// Rescale to unit sum, preserving proportions.
    pub fn normalize(&self) -> Result<Self> {
        normalize_slice(&self.0).map(|v| ProbVector(v.try_into().expect("length preserved")))
    }

    /// `self += weight * other`
    pub fn add_scaled(&mut self, other: &ProbVector, weight: f64) {
        for (a, b) in self.0.iter_mut().zip(other.0.iter()) {
            *a += weight * b;
        }
    }

    /// Activity with the largest weight; ties go to the lowest code.
    pub fn argmax(&self) -> ActivityType {
        let mut best = 0;
        for i in 1..NUM_ACTIVITIES {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        ActivityType::ALL[best]
    }
}

impl Index<ActivityType> for ProbVector {
    type Output = f64;

    fn index(&self, a: ActivityType) -> &f64 {
        &self.0[a.index()]
    }
}

impl IndexMut<ActivityType> for ProbVector {
    fn index_mut(&mut self, a: ActivityType) -> &mut f64 {
        &mut self.0[a.index()]
    }
}

/// Normalize an arbitrary-length histogram. Fails on all-zero, negative or non-finite input.
pub fn normalize_slice(values: &[f64]) -> Result<Vec<f64>> {
    if values.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::DegenerateDistribution);
    }
    let total: f64 = values.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::DegenerateDistribution);
    }
    Ok(values.iter().map(|x| x / total).collect())
}
