//! Cross-source point cloud registration.
//!
//! The pipeline samples keypoints with farthest point sampling, describes each
//! keypoint by a spherical voxel occupancy grid normalized shell by shell,
//! matches descriptors with a dual softmax and element-wise top-k selection,
//! prunes the matches with stacked second-order consistency filters and
//! finally solves for the rigid transform with weighted SVD or RANSAC.
//!
//! The numeric modules are generic over [`Real`] (`f32` or `f64`); the
//! harness, file formats and CLI work in `f64`. Concrete aliases for both
//! precisions live at the crate root.
//!
//! ```
//! use xsreg::harness::{generate_pair, run_pipeline, PipelineConfig, SyntheticPairSpec};
//!
//! let spec = SyntheticPairSpec { seed: 3, ..SyntheticPairSpec::identity() };
//! let pair = generate_pair(&spec).unwrap();
//! let config = PipelineConfig { keypoints: 256, ..PipelineConfig::default() };
//! let out = run_pipeline(&pair.source, &pair.target, &config).unwrap();
//! assert!(xsreg::metrics::translation_error(&out.transform, &pair.gt) < 0.05);
//! ```

pub mod descriptor;
pub mod error;
pub mod estimation;
pub mod filtering;
pub mod geometry;
pub mod harness;
pub mod matching;
pub mod metrics;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub use descriptor::{LocalFrame, PatchParams, SphericalVoxelGrid, VoxelDescriptor};
pub use filtering::{FilterConfig, FilterTrace};
pub use geometry::{KdTree, PointCloud, RigidTransform};
pub use matching::{Correspondence, CorrespondenceSet, SimilarityMatrix, SoftAssignment};

pub type PointCloudF32 = PointCloud<f32>;
pub type PointCloudF64 = PointCloud<f64>;
pub type RigidTransformF32 = RigidTransform<f32>;
pub type RigidTransformF64 = RigidTransform<f64>;
pub type KdTreeF32 = KdTree<f32>;
pub type KdTreeF64 = KdTree<f64>;
pub type VoxelDescriptorF32 = VoxelDescriptor<f32>;
pub type VoxelDescriptorF64 = VoxelDescriptor<f64>;
pub type SphericalVoxelGridF32 = SphericalVoxelGrid<f32>;
pub type SphericalVoxelGridF64 = SphericalVoxelGrid<f64>;
pub type CorrespondenceF32 = Correspondence<f32>;
pub type CorrespondenceF64 = Correspondence<f64>;
pub type CorrespondenceSetF32 = CorrespondenceSet<f32>;
pub type CorrespondenceSetF64 = CorrespondenceSet<f64>;
