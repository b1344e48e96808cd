use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};

use crate::geometry::PointCloud;
use crate::{Error, Real, Result};

/// Orthonormal basis of a patch; rows are the x, y and z axes, so
/// `frame.matrix() * v` expresses a world vector in patch coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFrame<T: Real = f64>(Matrix3<T>);

impl<T: Real> LocalFrame<T> {
    pub fn from_axes(x: Vector3<T>, y: Vector3<T>, z: Vector3<T>) -> Result<Self> {
        let m = Matrix3::from_rows(&[x.transpose(), y.transpose(), z.transpose()]);
        if !crate::geometry::is_rotation(&m) {
            return Err(Error::invalid("frame axes are not a right-handed orthonormal basis"));
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<T> {
        &self.0
    }

    pub fn x_axis(&self) -> Vector3<T> {
        self.0.row(0).transpose()
    }

    pub fn y_axis(&self) -> Vector3<T> {
        self.0.row(1).transpose()
    }

    pub fn z_axis(&self) -> Vector3<T> {
        self.0.row(2).transpose()
    }

    pub fn to_local(&self, p: &Point3<T>) -> Point3<T> {
        Point3::from(self.0 * p.coords)
    }
}

fn rank_tolerance<T: Real>() -> T {
    T::lit(1e-12).max(T::default_epsilon() * T::lit(100.0))
}

/// Flips `axis` so that most patch points lie on its nonnegative side.
/// An exact split falls back to the sign of the summed projections.
fn majority_sign<T: Real>(axis: Vector3<T>, patch: &[Point3<T>]) -> Vector3<T> {
    let (mut pos, mut neg) = (0usize, 0usize);
    let mut sum = T::zero();
    for p in patch {
        let d = axis.dot(&p.coords);
        sum += d;
        if d >= T::zero() {
            pos += 1;
        } else {
            neg += 1;
        }
    }
    if neg > pos || (neg == pos && sum < T::zero()) {
        -axis
    } else {
        axis
    }
}

/// Sum of the points' tangent-plane projections, weighted by squared height
/// above the plane and squared closeness to the keypoint. `None` when the sum
/// is negligible (flat patches).
fn height_weighted_direction<T: Real>(z: &Vector3<T>, patch: &[Point3<T>]) -> Option<Vector3<T>> {
    let reach = patch.iter().map(|p| p.coords.norm()).fold(T::zero(), T::max);
    let mut sum = Vector3::zeros();
    let mut scale = T::zero();
    for p in patch {
        let h = z.dot(&p.coords);
        let closeness = reach - p.coords.norm();
        let w = closeness * closeness * h * h;
        let tangent = p.coords - *z * h;
        sum += tangent * w;
        scale += w * tangent.norm();
    }
    (scale > T::zero() && sum.norm() > T::lit(1e-6) * scale).then(|| sum.normalize())
}

/// Local reference frame of a patch expressed around its keypoint (the origin).
///
/// z is the smallest-eigenvalue eigenvector of the patch covariance, oriented
/// towards the majority of points; x is the height-weighted tangent direction
/// (falling back to the projected centroid, then the dominant eigenvector, on
/// flat or symmetric patches); y = z × x.
pub fn compute_local_frame<T: Real>(patch: &PointCloud<T>) -> Result<LocalFrame<T>> {
    let pts = patch.points();
    if pts.len() < 3 {
        return Err(Error::DegeneratePatch(format!(
            "{} points, at least 3 required",
            pts.len()
        )));
    }
    let centroid = patch.centroid().expect("non-empty patch").coords;
    let mut cov = Matrix3::zeros();
    for p in pts {
        let d = p.coords - centroid;
        cov += d * d.transpose();
    }
    cov /= T::from_usize_lossy(pts.len());

    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .expect("finite eigenvalues")
    });
    let (small, mid, large) = (order[0], order[1], order[2]);
    let lambda_max = eig.eigenvalues[large];
    if !(lambda_max > T::zero()) || eig.eigenvalues[mid] <= rank_tolerance::<T>() * lambda_max {
        return Err(Error::DegeneratePatch("covariance rank below 2".into()));
    }

    let z = majority_sign(eig.eigenvectors.column(small).normalize(), pts);
    let x = if let Some(x) = height_weighted_direction(&z, pts) {
        x
    } else if (centroid - z * z.dot(&centroid)).norm() > T::lit(1e-9) {
        (centroid - z * z.dot(&centroid)).normalize()
    } else {
        let dominant = eig.eigenvectors.column(large).into_owned();
        let dominant = (dominant - z * z.dot(&dominant)).normalize();
        majority_sign(dominant, pts)
    };
    let y = z.cross(&x);
    // re-orthogonalize against drift from the eigen solver
    let x = y.cross(&z).normalize();
    let y = z.cross(&x);
    LocalFrame::from_axes(x, y, z)
}
