use nalgebra::{Matrix3, Matrix4, Point3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::PointCloud;
use crate::{Error, Real, Result};

/// Rotation followed by translation: `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform<T: Real = f64> {
    rotation: Matrix3<T>,
    translation: Vector3<T>,
}

/// Orthonormality tolerance: 1e-9 in f64, loosened to a few hundred ulps for f32.
pub(crate) fn rotation_tolerance<T: Real>() -> T {
    let eps = T::default_epsilon() * T::lit(1000.0);
    eps.max(T::lit(1e-9))
}

pub(crate) fn is_rotation<T: Real>(m: &Matrix3<T>) -> bool {
    let tol = rotation_tolerance::<T>();
    let gram = m.transpose() * m - Matrix3::identity();
    gram.iter().all(|v| v.abs() <= tol) && (m.determinant() - T::one()).abs() <= tol
}

impl<T: Real> Default for RigidTransform<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> RigidTransform<T> {
    /// Validates `RᵀR = I` and `det R = +1` within tolerance.
    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|c| c.is_finite_value()) {
            return Err(Error::invalid("transform has non-finite entries"));
        }
        if !is_rotation(&rotation) {
            return Err(Error::invalid("rotation matrix is not a proper rotation"));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    #[cfg(test)]
    pub(crate) fn from_parts_unchecked(rotation: Matrix3<T>, translation: Vector3<T>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Rotation of `angle` radians about `axis`, then translation.
    pub fn from_axis_angle(axis: &Vector3<T>, angle: T, translation: Vector3<T>) -> Result<Self> {
        let norm = axis.norm();
        if !(norm > T::zero()) {
            return Err(Error::invalid("rotation axis must be nonzero"));
        }
        let rot = Rotation3::from_axis_angle(&Unit::new_normalize(*axis), angle);
        Ok(Self {
            rotation: rot.into_inner(),
            translation,
        })
    }

    pub fn from_translation(translation: Vector3<T>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<T> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<T> {
        &self.translation
    }

    pub fn transform_point(&self, p: &Point3<T>) -> Point3<T> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn to_homogeneous(&self) -> Matrix4<T> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn cast<U: Real>(&self) -> RigidTransform<U> {
        RigidTransform {
            rotation: self.rotation.map(|c| U::lit(c.as_f64())),
            translation: self.translation.map(|c| U::lit(c.as_f64())),
        }
    }
}

/// Serialized form: row-major rotation and translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl<T: Real> From<&RigidTransform<T>> for TransformRecord {
    fn from(t: &RigidTransform<T>) -> Self {
        let mut rotation = [[0.0; 3]; 3];
        for (r, row) in rotation.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = t.rotation[(r, c)].as_f64();
            }
        }
        let translation = [
            t.translation[0].as_f64(),
            t.translation[1].as_f64(),
            t.translation[2].as_f64(),
        ];
        Self {
            rotation,
            translation,
        }
    }
}

impl TryFrom<&TransformRecord> for RigidTransform<f64> {
    type Error = Error;

    fn try_from(r: &TransformRecord) -> Result<Self> {
        let rot = Matrix3::from_fn(|i, j| r.rotation[i][j]);
        RigidTransform::new(rot, Vector3::from(r.translation))
    }
}

/// `output[i] = R·cloud[i] + t`, same cardinality and order.
pub fn apply_transform<T: Real>(cloud: &PointCloud<T>, t: &RigidTransform<T>) -> PointCloud<T> {
    PointCloud::from_trusted(cloud.iter().map(|p| t.transform_point(p)).collect())
}
