//! Rigid transform estimation from correspondences: weighted Kabsch and RANSAC.

use nalgebra::{Matrix3, Vector3, SVD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::filtering::FilterTrace;
use crate::geometry::RigidTransform;
use crate::matching::CorrespondenceSet;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMethod {
    #[default]
    WeightedSvd,
    Ransac,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub method: EstimatorMethod,
    pub ransac_iterations: usize,
    /// Residual bound (meters) for a correspondence to count as an inlier.
    pub ransac_inlier_threshold: f64,
    pub ransac_sample_size: usize,
    /// Early-exit confidence; 1.0 disables early exit.
    pub ransac_confidence: f64,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            method: EstimatorMethod::WeightedSvd,
            ransac_iterations: 50_000,
            ransac_inlier_threshold: 0.05,
            ransac_sample_size: 3,
            ransac_confidence: 0.999,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ransac_sample_size < 3 {
            return Err(Error::Config("ransac sample size must be at least 3".into()));
        }
        if self.ransac_iterations == 0 {
            return Err(Error::Config("ransac needs at least one iteration".into()));
        }
        if !(self.ransac_inlier_threshold > 0.0 && self.ransac_inlier_threshold.is_finite()) {
            return Err(Error::Config("ransac inlier threshold must be positive".into()));
        }
        if !(self.ransac_confidence > 0.0 && self.ransac_confidence <= 1.0) {
            return Err(Error::Config("ransac confidence must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

fn degeneracy_tolerance<T: Real>() -> T {
    T::lit(1e-12).max(T::default_epsilon() * T::lit(100.0))
}

/// Weighted least-squares rigid alignment (Kabsch with reflection guard):
/// minimizes `Σ wᵢ ‖R·pᵢ + t − qᵢ‖²`.
pub fn weighted_svd<T: Real>(correspondences: &CorrespondenceSet<T>, weights: &[T]) -> Result<RigidTransform<T>> {
    let n = correspondences.len();
    if n < 3 {
        return Err(Error::EstimationDegenerate(format!(
            "{n} correspondences, at least 3 required"
        )));
    }
    if weights.len() != n {
        return Err(Error::invalid(format!(
            "{} weights for {n} correspondences",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= T::zero()) || !w.is_finite_value()) {
        return Err(Error::invalid("weights must be finite and nonnegative"));
    }
    let total = weights.iter().fold(T::zero(), |a, &w| a + w);
    if !(total > T::zero()) {
        return Err(Error::EstimationDegenerate("all weights are zero".into()));
    }
    if weights.iter().filter(|w| **w > T::zero()).count() < 3 {
        return Err(Error::EstimationDegenerate(
            "fewer than 3 correspondences carry weight".into(),
        ));
    }

    let mut src_mean = Vector3::zeros();
    let mut tgt_mean = Vector3::zeros();
    for (c, &w) in correspondences.iter().zip(weights) {
        let w = w / total;
        src_mean += c.source.coords * w;
        tgt_mean += c.target.coords * w;
    }

    let mut cross = Matrix3::zeros();
    let mut src_cov = Matrix3::zeros();
    for (c, &w) in correspondences.iter().zip(weights) {
        let w = w / total;
        let p = c.source.coords - src_mean;
        let q = c.target.coords - tgt_mean;
        cross += p * q.transpose() * w;
        src_cov += p * p.transpose() * w;
    }

    let spread = SVD::new(src_cov, false, false).singular_values;
    let (mut sv, largest) = (spread.as_slice().to_vec(), spread.max());
    sv.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    if !(largest > T::zero()) || sv[1] <= degeneracy_tolerance::<T>() * largest {
        return Err(Error::EstimationDegenerate(
            "weighted source points are collinear or coincident".into(),
        ));
    }

    let svd = SVD::new(cross, true, true);
    let u = svd.u.expect("left singular vectors");
    let v = svd.v_t.expect("right singular vectors").transpose();
    let d = (v * u.transpose()).determinant();
    let mut correction = Matrix3::identity();
    if d < T::zero() {
        correction[(2, 2)] = -T::one();
    }
    let rotation = v * correction * u.transpose();
    let translation = tgt_mean - rotation * src_mean;
    RigidTransform::new(rotation, translation)
        .map_err(|e| Error::EstimationDegenerate(format!("non-rigid solution: {e}")))
}

/// Unweighted Kabsch.
pub fn kabsch<T: Real>(correspondences: &CorrespondenceSet<T>) -> Result<RigidTransform<T>> {
    weighted_svd(correspondences, &vec![T::one(); correspondences.len()])
}

/// Indices of correspondences whose residual under `t` is within `threshold`.
pub fn inliers_of<T: Real>(correspondences: &CorrespondenceSet<T>, t: &RigidTransform<T>, threshold: T) -> Vec<usize> {
    correspondences
        .iter()
        .enumerate()
        .filter(|(_, c)| (t.transform_point(&c.source) - c.target).norm() <= threshold)
        .map(|(i, _)| i)
        .collect()
}

fn required_iterations(inlier_ratio: f64, sample_size: usize, confidence: f64) -> f64 {
    if confidence >= 1.0 {
        return f64::INFINITY;
    }
    let all_good = inlier_ratio.powi(sample_size as i32);
    if all_good >= 1.0 {
        return 0.0;
    }
    if all_good <= 0.0 {
        return f64::INFINITY;
    }
    (1.0 - confidence).ln() / (1.0 - all_good).ln()
}

/// Hypothesize-and-verify over minimal samples, then a uniform-weight refit
/// on the best consensus set. Deterministic for a fixed seed.
pub fn ransac<T: Real>(
    correspondences: &CorrespondenceSet<T>,
    config: &EstimatorConfig,
) -> Result<(RigidTransform<T>, Vec<usize>)> {
    config.validate()?;
    let n = correspondences.len();
    let s = config.ransac_sample_size;
    if n < s {
        return Err(Error::invalid(format!(
            "ransac needs at least {s} correspondences, got {n}"
        )));
    }
    let threshold = T::lit(config.ransac_inlier_threshold);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<(usize, RigidTransform<T>)> = None;
    let mut sample = Vec::with_capacity(s);
    let mut iteration = 0usize;
    while iteration < config.ransac_iterations {
        iteration += 1;
        sample.clear();
        while sample.len() < s {
            let i = rng.random_range(0..n);
            if !sample.contains(&i) {
                sample.push(i);
            }
        }
        // collinear samples fail the degeneracy check inside and are skipped
        let Ok(model) = kabsch(&correspondences.select(&sample)) else {
            continue;
        };
        let count = inliers_of(correspondences, &model, threshold).len();
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            best = Some((count, model));
            let needed = required_iterations(count as f64 / n as f64, s, config.ransac_confidence);
            if (iteration as f64) >= needed {
                break;
            }
        }
    }

    let Some((count, model)) = best.filter(|(c, _)| *c >= s) else {
        return Err(Error::EstimationFailed(format!(
            "no hypothesis reached {s} inliers in {iteration} iterations"
        )));
    };
    let consensus = inliers_of(correspondences, &model, threshold);
    debug_assert_eq!(consensus.len(), count);
    let refit = kabsch(&correspondences.select(&consensus)).unwrap_or(model);
    let mut inliers = inliers_of(correspondences, &refit, threshold);
    let final_model = if inliers.len() >= consensus.len() {
        refit
    } else {
        inliers = consensus;
        model
    };
    Ok((final_model, inliers))
}

/// Estimates the transform with the configured method. The SVD path weights
/// each survivor by its last-layer second-order score (normalized to sum 1);
/// without filter layers the weights are uniform.
pub fn estimate<T: Real>(
    correspondences: &CorrespondenceSet<T>,
    trace: &FilterTrace,
    config: &EstimatorConfig,
) -> Result<RigidTransform<T>> {
    config.validate()?;
    match config.method {
        EstimatorMethod::Ransac => ransac(correspondences, config).map(|(t, _)| t),
        EstimatorMethod::WeightedSvd => {
            let weights = match trace.final_scores() {
                Some(scores) if scores.len() == correspondences.len() => {
                    let total: u64 = scores.iter().sum();
                    scores
                        .iter()
                        .map(|&s| T::lit(s as f64 / total as f64))
                        .collect()
                }
                _ => vec![T::one(); correspondences.len()],
            };
            weighted_svd(correspondences, &weights)
        }
    }
}
