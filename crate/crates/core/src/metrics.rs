//! Registration and correspondence quality metrics.
//!
//! All indicator thresholds are strict: a correspondence at exactly τ₁ is not
//! an inlier, a pair at exactly IR = τ₂ is not a feature-matching success and
//! a pair at exactly 15° is not registered.

use serde::{Deserialize, Serialize};

use crate::geometry::RigidTransform;
use crate::matching::CorrespondenceSet;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricThresholds {
    /// Inlier distance τ₁ in meters.
    pub tau1: f64,
    /// Inlier-ratio cutoff τ₂ for feature matching recall.
    pub tau2: f64,
    /// Rotation error bound in degrees.
    pub re_max: f64,
    /// Translation error bound in meters.
    pub te_max: f64,
    /// RMSE bound in meters for the homologous protocol.
    pub rmse_max: f64,
}

impl Default for MetricThresholds {
    fn default() -> Self {
        Self {
            tau1: 0.1,
            tau2: 0.05,
            re_max: 15.0,
            te_max: 0.3,
            rmse_max: 0.2,
        }
    }
}

impl MetricThresholds {
    pub fn validate(&self) -> Result<()> {
        let all = [self.tau1, self.tau2, self.re_max, self.te_max, self.rmse_max];
        if all.iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Config("metric thresholds must be positive".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecallMode {
    /// `RE < re_max ∧ TE < te_max`.
    #[default]
    CrossSource,
    /// `RMSE < rmse_max`.
    Rmse,
}

/// Per-pair outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairEvaluation {
    pub ir: f64,
    /// Degrees.
    pub re: f64,
    /// Meters.
    pub te: f64,
    pub rmse: Option<f64>,
    pub registered: bool,
}

impl PairEvaluation {
    pub fn success(&self, thresholds: &MetricThresholds, mode: RecallMode) -> Option<bool> {
        match mode {
            RecallMode::CrossSource => Some(self.re < thresholds.re_max && self.te < thresholds.te_max),
            RecallMode::Rmse => self.rmse.map(|r| r < thresholds.rmse_max),
        }
    }
}

/// Fraction of correspondences with `‖T(p) − q‖ < τ₁`.
pub fn inlier_ratio<T: Real>(correspondences: &CorrespondenceSet<T>, gt: &RigidTransform<T>, tau1: T) -> Result<f64> {
    if correspondences.is_empty() {
        return Err(Error::invalid("inlier ratio of an empty correspondence set"));
    }
    let hits = correspondences
        .iter()
        .filter(|c| (gt.transform_point(&c.source) - c.target).norm() < tau1)
        .count();
    Ok(hits as f64 / correspondences.len() as f64)
}

/// Fraction of pairs with `IR > τ₂`.
pub fn feature_matching_recall(inlier_ratios: &[f64], tau2: f64) -> Result<f64> {
    if inlier_ratios.is_empty() {
        return Err(Error::invalid("feature matching recall of an empty list"));
    }
    let hits = inlier_ratios.iter().filter(|&&ir| ir > tau2).count();
    Ok(hits as f64 / inlier_ratios.len() as f64)
}

/// Geodesic angle in degrees between the two rotations, in `[0, 180]`.
///
/// Evaluated as `atan2(sin θ, cos θ)` with `cos θ = (tr(R̂ᵀR) − 1)/2` clamped
/// to `[−1, 1]`; this is the arccos form without its loss of precision near 0°.
pub fn rotation_error<T: Real>(est: &RigidTransform<T>, gt: &RigidTransform<T>) -> T {
    let rel = est.rotation().transpose() * gt.rotation();
    let cos = ((rel.trace() - T::one()) / T::lit(2.0)).max(-T::one()).min(T::one());
    let sin = nalgebra::Vector3::new(
        rel[(2, 1)] - rel[(1, 2)],
        rel[(0, 2)] - rel[(2, 0)],
        rel[(1, 0)] - rel[(0, 1)],
    )
    .norm()
        / T::lit(2.0);
    sin.atan2(cos) * T::lit(180.0) / T::pi()
}

/// `‖t̂ − t‖₂` in meters.
pub fn translation_error<T: Real>(est: &RigidTransform<T>, gt: &RigidTransform<T>) -> T {
    (est.translation() - gt.translation()).norm()
}

/// Fraction of pairs that pass the mode's success predicate.
pub fn registration_recall(
    evaluations: &[PairEvaluation],
    thresholds: &MetricThresholds,
    mode: RecallMode,
) -> Result<f64> {
    if evaluations.is_empty() {
        return Err(Error::invalid("registration recall of an empty list"));
    }
    let mut hits = 0usize;
    for (i, e) in evaluations.iter().enumerate() {
        match e.success(thresholds, mode) {
            Some(true) => hits += 1,
            Some(false) => {}
            None => {
                return Err(Error::invalid(format!("pair {i} has no RMSE value")));
            }
        }
    }
    Ok(hits as f64 / evaluations.len() as f64)
}

/// `sqrt(mean ‖T̂(pᵢ) − qᵢ‖²)` over ground-truth pairs.
pub fn correspondence_rmse<T: Real>(pairs: &CorrespondenceSet<T>, est: &RigidTransform<T>) -> Result<T> {
    if pairs.is_empty() {
        return Err(Error::invalid("RMSE of an empty pair set"));
    }
    let sum = pairs
        .iter()
        .map(|c| (est.transform_point(&c.source) - c.target).norm_squared())
        .fold(T::zero(), |a, b| a + b);
    Ok((sum / T::from_usize_lossy(pairs.len())).sqrt())
}
