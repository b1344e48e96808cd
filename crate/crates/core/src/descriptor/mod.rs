//! Spherical voxel descriptors.
//!
//! Every keypoint gets a patch (points within a radius, re-centered on the
//! keypoint), a local reference frame, an N×M×K occupancy grid over longitude,
//! latitude and radius, a normalization, an optional azimuth canonicalization
//! and finally a refinement step that turns the grid into a feature vector.

mod frame;
mod grid;

use nalgebra::Point3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{KdTree, PointCloud};
use crate::{Error, Real, Result};

pub use frame::{compute_local_frame, LocalFrame};
pub use grid::{
    azimuth_canonicalize, canonical_azimuth_shift, cube_voxelize,
    normalize_multiscale, normalize_whole, spherical_coordinates, spherical_voxelize, PatchParams,
    SphericalVoxelGrid,
};

pub const DEFAULT_MIN_PATCH_POINTS: usize = 8;

/// Feature vector of one keypoint.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelDescriptor<T: Real = f64> {
    pub values: Vec<T>,
    pub keypoint: Point3<T>,
}

impl<T: Real> VoxelDescriptor<T> {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> T {
        self.values.iter().fold(T::zero(), |a, &v| a + v * v).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Whole,
    #[default]
    Multiscale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Voxelization {
    #[default]
    Spherical,
    Cube,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DescriptorOptions {
    pub normalization: Normalization,
    pub voxelization: Voxelization,
    pub canonicalize: bool,
    pub min_patch_points: usize,
}

impl Default for DescriptorOptions {
    fn default() -> Self {
        Self {
            normalization: Normalization::Multiscale,
            voxelization: Voxelization::Spherical,
            canonicalize: true,
            min_patch_points: DEFAULT_MIN_PATCH_POINTS,
        }
    }
}

/// Turns a normalized grid into the final feature vector.
///
/// The default is [`FlattenRefiner`]; a learned network can be plugged in
/// without touching matching or filtering.
pub trait DescriptorRefiner<T: Real>: Send + Sync {
    fn refine(&self, grid: &SphericalVoxelGrid<T>) -> Vec<T>;
}

/// Identity refinement: the grid flattened θ-major.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlattenRefiner;

impl<T: Real> DescriptorRefiner<T> for FlattenRefiner {
    fn refine(&self, grid: &SphericalVoxelGrid<T>) -> Vec<T> {
        grid.values().to_vec()
    }
}

/// Points of `cloud` within `radius` of `keypoint`, translated so the keypoint
/// is the origin, in ascending cloud-index order.
pub fn extract_patch<T: Real>(
    cloud: &PointCloud<T>,
    index: &KdTree<T>,
    keypoint: &Point3<T>,
    radius: T,
    min_points: usize,
) -> Result<PointCloud<T>> {
    if !(radius > T::zero()) {
        return Err(Error::invalid("patch radius must be positive"));
    }
    debug_assert_eq!(cloud.len(), index.len());
    let mut ids = index.within_radius(keypoint, radius);
    if ids.len() < min_points {
        return Err(Error::PatchTooSparse {
            found: ids.len(),
            required: min_points,
        });
    }
    ids.sort_unstable();
    PointCloud::new(
        ids.iter()
            .map(|&i| Point3::from(cloud.points()[i] - keypoint))
            .collect(),
    )
}

/// Builds the normalized (and optionally canonicalized) grid of one keypoint.
pub fn keypoint_grid<T: Real>(
    cloud: &PointCloud<T>,
    index: &KdTree<T>,
    keypoint: &Point3<T>,
    params: &PatchParams<T>,
    options: &DescriptorOptions,
) -> Result<SphericalVoxelGrid<T>> {
    let patch = extract_patch(cloud, index, keypoint, params.radius, options.min_patch_points)?;
    let frame = compute_local_frame(&patch)?;
    let raw = match options.voxelization {
        Voxelization::Spherical => spherical_voxelize(&patch, &frame, params)?,
        Voxelization::Cube => cube_voxelize(&patch, &frame, params)?,
    };
    let normalized = match options.normalization {
        Normalization::Whole => normalize_whole(&raw)?,
        Normalization::Multiscale => normalize_multiscale(&raw)?,
    };
    let grid = if options.canonicalize {
        azimuth_canonicalize(&normalized)?
    } else {
        normalized
    };
    Ok(grid::with_center(grid, *keypoint))
}

/// Descriptors for every keypoint whose patch passes the sparsity and
/// degeneracy checks, plus the indices (into `keypoints`) that were kept.
///
/// Runs in parallel; output order always follows `keypoints`.
pub fn describe_keypoints<T: Real>(
    cloud: &PointCloud<T>,
    keypoints: &[Point3<T>],
    params: &PatchParams<T>,
    options: &DescriptorOptions,
) -> Result<(Vec<VoxelDescriptor<T>>, Vec<usize>)> {
    let index = KdTree::build(cloud);
    describe_keypoints_with(cloud, &index, keypoints, params, options, &FlattenRefiner)
}

pub fn describe_keypoints_with<T: Real>(
    cloud: &PointCloud<T>,
    index: &KdTree<T>,
    keypoints: &[Point3<T>],
    params: &PatchParams<T>,
    options: &DescriptorOptions,
    refiner: &dyn DescriptorRefiner<T>,
) -> Result<(Vec<VoxelDescriptor<T>>, Vec<usize>)> {
    params.validate()?;
    let results: Vec<Option<VoxelDescriptor<T>>> = keypoints
        .par_iter()
        .map(|kp| {
            let grid = keypoint_grid(cloud, index, kp, params, options).ok()?;
            let values = refiner.refine(&grid);
            let desc = VoxelDescriptor {
                values,
                keypoint: *kp,
            };
            let ok = desc.dim() > 0
                && desc.values.iter().all(|v| v.is_finite_value())
                && desc.norm() > T::zero();
            ok.then_some(desc)
        })
        .collect();

    let mut descriptors = Vec::with_capacity(results.len());
    let mut kept = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        if let Some(d) = r {
            descriptors.push(d);
            kept.push(i);
        }
    }
    if descriptors.is_empty() {
        return Err(Error::NoDescriptors);
    }
    Ok((descriptors, kept))
}
