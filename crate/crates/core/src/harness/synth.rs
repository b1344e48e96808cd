//! Synthetic cross-source pairs: one base cloud, two independent voxel
//! downsamplings, Gaussian noise, a rigid motion and a half-space crop.

use std::path::PathBuf;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use super::ply::read_point_cloud;
use super::scene::{procedural_cloud, SceneKind};
use crate::geometry::{apply_transform, voxel_downsample, KdTree, PointCloud, RigidTransform};
use crate::matching::{Correspondence, CorrespondenceSet};
use crate::{Error, Result};

/// Fewest points either cloud may keep after generation.
pub const MIN_PAIR_POINTS: usize = 100;

/// Ground-truth pairs are mutual nearest neighbours closer than this.
pub const GT_PAIR_RADIUS: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseCloud {
    Procedural { generator: SceneKind, points: usize },
    File(PathBuf),
}

impl Default for BaseCloud {
    fn default() -> Self {
        BaseCloud::Procedural {
            generator: SceneKind::Room,
            points: 30_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticPairSpec {
    pub base: BaseCloud,
    /// Upper bound of the rotation angle, degrees.
    pub max_rotation_deg: f64,
    /// Upper bound of the translation norm, meters.
    pub max_translation: f64,
    /// Voxel side lengths are drawn from `U(lo, hi)`, independently per cloud.
    pub downsample_range: [f64; 2],
    pub noise_sigma: f64,
    /// Fraction of the target kept by the crop; `1.0` disables cropping.
    pub overlap: f64,
    pub seed: u64,
}

impl Default for SyntheticPairSpec {
    fn default() -> Self {
        Self {
            base: BaseCloud::default(),
            max_rotation_deg: 60.0,
            max_translation: 1.0,
            downsample_range: [0.0, 0.1],
            noise_sigma: 0.005,
            overlap: 0.6,
            seed: 0,
        }
    }
}

impl SyntheticPairSpec {
    /// No motion, noise, downsampling or crop: source and target coincide.
    pub fn identity() -> Self {
        Self {
            max_rotation_deg: 0.0,
            max_translation: 0.0,
            downsample_range: [0.0, 0.0],
            noise_sigma: 0.0,
            overlap: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.downsample_range;
        let checks = [
            (lo >= 0.0 && lo <= hi && hi.is_finite(), "downsample_range must satisfy 0 <= lo <= hi"),
            ((0.0..=180.0).contains(&self.max_rotation_deg), "max_rotation_deg must lie in [0, 180]"),
            (
                self.max_translation >= 0.0 && self.max_translation.is_finite(),
                "max_translation must be non-negative",
            ),
            (
                self.noise_sigma >= 0.0 && self.noise_sigma.is_finite(),
                "noise_sigma must be non-negative",
            ),
            (self.overlap > 0.0 && self.overlap <= 1.0, "overlap must lie in (0, 1]"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::Config(msg.into()));
            }
        }
        if let BaseCloud::Procedural { points, .. } = self.base {
            if points == 0 {
                return Err(Error::Config("procedural base needs at least one point".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub source: PointCloud,
    pub target: PointCloud,
    /// Maps source coordinates onto target coordinates.
    pub gt: RigidTransform,
    /// Source/target point pairs that survive in both clouds.
    pub gt_pairs: CorrespondenceSet,
    /// Voxel sides drawn for the source and the target.
    pub voxel_sizes: [f64; 2],
}

// independent ChaCha streams per random component
const STREAM_SCENE: u64 = 0;
const STREAM_MOTION: u64 = 1;
const STREAM_VOXEL: u64 = 2;
const STREAM_NOISE_SOURCE: u64 = 3;
const STREAM_NOISE_TARGET: u64 = 4;
const STREAM_CROP: u64 = 5;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn random_motion(spec: &SyntheticPairSpec, rng: &mut ChaCha8Rng) -> Result<RigidTransform> {
    let axis: [f64; 3] = UnitSphere.sample(rng);
    let dir: [f64; 3] = UnitSphere.sample(rng);
    let angle = rng.random::<f64>() * spec.max_rotation_deg.to_radians();
    let dist = rng.random::<f64>() * spec.max_translation;
    if spec.max_rotation_deg == 0.0 && spec.max_translation == 0.0 {
        return Ok(RigidTransform::identity());
    }
    RigidTransform::from_axis_angle(&Vector3::from(axis), angle, Vector3::from(dir) * dist)
}

fn draw_voxel(range: [f64; 2], rng: &mut ChaCha8Rng) -> f64 {
    let [lo, hi] = range;
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn add_noise(cloud: PointCloud, sigma: f64, rng: &mut ChaCha8Rng) -> Result<PointCloud> {
    if sigma == 0.0 {
        return Ok(cloud);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?;
    let pts = cloud
        .into_points()
        .into_iter()
        .map(|p| p + Vector3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng)))
        .collect();
    PointCloud::new(pts)
}

/// Keeps the `fraction` of points lying on one side of a random plane; the
/// plane normal is uniform on the sphere and its offset is the matching
/// quantile of the projections about the centroid.
fn crop(cloud: PointCloud, fraction: f64, rng: &mut ChaCha8Rng) -> PointCloud {
    if fraction >= 1.0 || cloud.is_empty() {
        return cloud;
    }
    let n: [f64; 3] = UnitSphere.sample(rng);
    let n = Vector3::from(n);
    let c = cloud.centroid().unwrap_or_else(Point3::origin);
    let d: Vec<f64> = cloud.iter().map(|p| n.dot(&(p - c))).collect();
    let mut sorted = d.clone();
    sorted.sort_by(f64::total_cmp);
    let keep = ((fraction * d.len() as f64).ceil() as usize).clamp(1, d.len());
    let cut = sorted[keep - 1];
    let idx: Vec<usize> = (0..d.len()).filter(|&i| d[i] <= cut).collect();
    cloud.select(&idx)
}

/// Mutual nearest neighbours between `gt(source)` and `target` closer than
/// `radius`.
pub fn ground_truth_pairs(
    source: &PointCloud,
    target: &PointCloud,
    gt: &RigidTransform,
    radius: f64,
) -> CorrespondenceSet {
    let moved = apply_transform(source, gt);
    let src_tree = KdTree::build(&moved);
    let tgt_tree = KdTree::build(target);
    let pairs = moved
        .iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let (j, d) = tgt_tree.nearest(p)?;
            if d >= radius || src_tree.nearest(&target.points()[j])?.0 != i {
                return None;
            }
            Some(Correspondence {
                source: source.points()[i],
                target: target.points()[j],
                score: 1.0,
                source_index: i,
                target_index: j,
            })
        })
        .collect();
    CorrespondenceSet::new(pairs)
}

fn load_base(spec: &SyntheticPairSpec) -> Result<PointCloud> {
    match &spec.base {
        BaseCloud::Procedural { generator, points } => {
            procedural_cloud(*generator, *points, &mut stream(spec.seed, STREAM_SCENE))
        }
        BaseCloud::File(path) => read_point_cloud(path),
    }
}

/// Builds one pair. Source is `noise(downsample_a(base))`; target is
/// `crop(noise(downsample_b(gt(base))))`. Fully determined by the spec.
pub fn generate_pair(spec: &SyntheticPairSpec) -> Result<SyntheticPair> {
    spec.validate()?;
    let base = load_base(spec)?;
    let gt = random_motion(spec, &mut stream(spec.seed, STREAM_MOTION))?;
    let mut vrng = stream(spec.seed, STREAM_VOXEL);
    let voxel_sizes = [
        draw_voxel(spec.downsample_range, &mut vrng),
        draw_voxel(spec.downsample_range, &mut vrng),
    ];

    let source = voxel_downsample(&base, voxel_sizes[0])?;
    let source = add_noise(source, spec.noise_sigma, &mut stream(spec.seed, STREAM_NOISE_SOURCE))?;

    let moved = apply_transform(&base, &gt);
    let target = voxel_downsample(&moved, voxel_sizes[1])?;
    let target = add_noise(target, spec.noise_sigma, &mut stream(spec.seed, STREAM_NOISE_TARGET))?;
    let target = crop(target, spec.overlap, &mut stream(spec.seed, STREAM_CROP));

    for (name, cloud) in [("source", &source), ("target", &target)] {
        if cloud.len() < MIN_PAIR_POINTS {
            return Err(Error::SpecTooAggressive(format!(
                "{name} keeps {} points, at least {MIN_PAIR_POINTS} required",
                cloud.len()
            )));
        }
    }
    let gt_pairs = ground_truth_pairs(&source, &target, &gt, GT_PAIR_RADIUS);
    Ok(SyntheticPair {
        source,
        target,
        gt,
        gt_pairs,
        voxel_sizes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SyntheticPairSpec {
        SyntheticPairSpec {
            base: BaseCloud::Procedural {
                generator: SceneKind::Room,
                points: 3000,
            },
            seed,
            ..SyntheticPairSpec::default()
        }
    }

    #[test]
    fn identity_spec_reproduces_the_base() {
        let spec = SyntheticPairSpec {
            base: BaseCloud::Procedural {
                generator: SceneKind::Room,
                points: 1500,
            },
            ..SyntheticPairSpec::identity()
        };
        let pair = generate_pair(&spec).unwrap();
        assert_eq!(pair.source.points(), pair.target.points());
        assert_eq!(pair.gt, RigidTransform::identity());
        assert_eq!(pair.gt_pairs.len(), 1500);
    }

    #[test]
    fn bitwise_deterministic() {
        let a = generate_pair(&small(8)).unwrap();
        let b = generate_pair(&small(8)).unwrap();
        assert_eq!(a.source.points(), b.source.points());
        assert_eq!(a.target.points(), b.target.points());
        assert_eq!(a.gt, b.gt);
        assert_eq!(a.voxel_sizes, b.voxel_sizes);
    }

    #[test]
    fn motion_respects_bounds() {
        for seed in 0..20 {
            let pair = generate_pair(&small(seed)).unwrap();
            let re = crate::metrics::rotation_error(&pair.gt, &RigidTransform::identity());
            assert!(re <= 60.0 + 1e-9);
            assert!(pair.gt.translation().norm() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn crop_keeps_requested_fraction() {
        let spec = SyntheticPairSpec {
            downsample_range: [0.0, 0.0],
            ..small(2)
        };
        let pair = generate_pair(&spec).unwrap();
        assert_eq!(pair.source.len(), 3000);
        assert_eq!(pair.target.len(), 1800);
    }

    #[test]
    fn voxel_draws_average_to_the_midpoint() {
        let mut draws = Vec::new();
        for seed in 0..100 {
            let mut rng = stream(seed, STREAM_VOXEL);
            draws.push(draw_voxel([0.0, 0.1], &mut rng));
            draws.push(draw_voxel([0.0, 0.1], &mut rng));
        }
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((0.045..=0.055).contains(&mean), "{mean}");
        assert!(draws.iter().all(|&v| (0.0..0.1).contains(&v)));
    }

    #[test]
    fn over_aggressive_crop_is_rejected() {
        let spec = SyntheticPairSpec {
            overlap: 0.01,
            ..small(1)
        };
        assert!(matches!(generate_pair(&spec), Err(Error::SpecTooAggressive(_))));
    }

    #[test]
    fn gt_pairs_are_close_under_gt() {
        let pair = generate_pair(&small(5)).unwrap();
        assert!(!pair.gt_pairs.is_empty());
        for c in pair.gt_pairs.iter() {
            assert!((pair.gt.transform_point(&c.source) - c.target).norm() < GT_PAIR_RADIUS);
        }
    }

    #[test]
    fn invalid_specs_are_config_errors() {
        let bad = [
            SyntheticPairSpec { overlap: 0.0, ..small(0) },
            SyntheticPairSpec { downsample_range: [0.1, 0.0], ..small(0) },
            SyntheticPairSpec { noise_sigma: -1.0, ..small(0) },
            SyntheticPairSpec { max_rotation_deg: 200.0, ..small(0) },
        ];
        for spec in bad {
            assert!(matches!(generate_pair(&spec), Err(Error::Config(_))));
        }
    }
}
