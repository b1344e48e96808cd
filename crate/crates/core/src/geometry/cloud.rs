use nalgebra::{Point3, Vector3};

use crate::{Error, Real, Result};

/// Ordered list of 3D points in meters. Every coordinate is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud<T: Real = f64> {
    points: Vec<Point3<T>>,
}

impl<T: Real> Default for PointCloud<T> {
    fn default() -> Self {
        Self { points: Vec::new() }
    }
}

impl<T: Real> PointCloud<T> {
    /// Builds a cloud, rejecting NaN or infinite coordinates.
    pub fn new(points: Vec<Point3<T>>) -> Result<Self> {
        if let Some(i) = points
            .iter()
            .position(|p| !p.coords.iter().all(|c| c.is_finite_value()))
        {
            return Err(Error::invalid(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self { points })
    }

    pub fn from_xyz(coords: &[[T; 3]]) -> Result<Self> {
        Self::new(coords.iter().map(|c| Point3::new(c[0], c[1], c[2])).collect())
    }

    /// Caller guarantees finiteness (e.g. points derived from an already valid cloud).
    pub(crate) fn from_trusted(points: Vec<Point3<T>>) -> Self {
        debug_assert!(points
            .iter()
            .all(|p| p.coords.iter().all(|c| c.is_finite_value())));
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point3<T>] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point3<T>> {
        self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3<T>> {
        self.points.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Point3<T>> {
        self.points.get(i)
    }

    /// Arithmetic mean of the points, `None` for an empty cloud.
    pub fn centroid(&self) -> Option<Point3<T>> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self
            .points
            .iter()
            .fold(Vector3::zeros(), |acc, p| acc + p.coords);
        Some(Point3::from(sum / T::from_usize_lossy(self.points.len())))
    }

    /// Sub-cloud made of the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self::from_trusted(indices.iter().map(|&i| self.points[i]).collect())
    }

    /// Converts the scalar type, e.g. to run the f32 pipeline on f64 input.
    pub fn cast<U: Real>(&self) -> PointCloud<U> {
        PointCloud::from_trusted(
            self.points
                .iter()
                .map(|p| p.map(|c| U::lit(c.as_f64())))
                .collect(),
        )
    }

    pub(crate) fn reject_empty(&self, what: &str) -> Result<()> {
        if self.is_empty() {
            Err(Error::invalid(format!("{what} point cloud is empty")))
        } else {
            Ok(())
        }
    }
}

impl<'a, T: Real> IntoIterator for &'a PointCloud<T> {
    type Item = &'a Point3<T>;
    type IntoIter = std::slice::Iter<'a, Point3<T>>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}
