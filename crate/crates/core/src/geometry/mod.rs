//! Point clouds, rigid transforms, spatial search and sampling.

mod cloud;
mod kdtree;
mod sampling;
mod transform;

pub use cloud::PointCloud;
pub use kdtree::KdTree;
pub use sampling::{farthest_point_sample, farthest_point_sample_from, voxel_downsample};
pub use transform::{apply_transform, RigidTransform, TransformRecord};
pub(crate) use transform::is_rotation;

/// Name used throughout the pipeline for the acceleration structure over a cloud.
pub type SpatialIndex<T = f64> = KdTree<T>;

/// Radius search returning the indices of every point within `radius` of `center`.
///
/// Order is unspecified; the set equals a brute-force scan.
pub fn radius_neighbors<T: crate::Real>(
    index: &KdTree<T>,
    center: &nalgebra::Point3<T>,
    radius: T,
) -> crate::Result<Vec<usize>> {
    if !(radius > T::zero()) {
        return Err(crate::Error::invalid("radius must be positive"));
    }
    Ok(index.within_radius(center, radius))
}
