use std::cmp::Ordering;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use super::LocalFrame;
use crate::geometry::PointCloud;
use crate::{Error, Real, Result};

/// Patch radius and bin counts along longitude (N), latitude (M) and radius (K).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchParams<T = f64> {
    pub radius: T,
    pub azimuth_bins: usize,
    pub polar_bins: usize,
    pub radial_bins: usize,
}

impl Default for PatchParams<f64> {
    fn default() -> Self {
        Self {
            radius: 0.3,
            azimuth_bins: 8,
            polar_bins: 4,
            radial_bins: 3,
        }
    }
}

impl<T: Real> PatchParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > T::zero()) || !self.radius.is_finite_value() {
            return Err(Error::invalid("patch radius must be positive and finite"));
        }
        if self.azimuth_bins == 0 || self.polar_bins == 0 || self.radial_bins == 0 {
            return Err(Error::invalid("every bin count must be at least 1"));
        }
        Ok(())
    }

    /// Flattened descriptor dimension `N·M·K`.
    pub fn dim(&self) -> usize {
        self.azimuth_bins * self.polar_bins * self.radial_bins
    }

    pub fn cast<U: Real>(&self) -> PatchParams<U> {
        PatchParams {
            radius: U::lit(self.radius.as_f64()),
            azimuth_bins: self.azimuth_bins,
            polar_bins: self.polar_bins,
            radial_bins: self.radial_bins,
        }
    }
}

/// N×M×K occupancy grid around a keypoint, stored θ-major:
/// entry `(n, m, k)` lives at `(n·M + m)·K + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalVoxelGrid<T: Real = f64> {
    values: Vec<T>,
    shape: [usize; 3],
    normalized: bool,
    center: Point3<T>,
}

impl<T: Real> SphericalVoxelGrid<T> {
    pub fn zeros(shape: [usize; 3], center: Point3<T>) -> Self {
        Self {
            values: vec![T::zero(); shape[0] * shape[1] * shape[2]],
            shape,
            normalized: false,
            center,
        }
    }

    /// Raw grid from explicit values; entries must be nonnegative integers.
    pub fn from_counts(shape: [usize; 3], values: Vec<T>) -> Result<Self> {
        if values.len() != shape[0] * shape[1] * shape[2] || values.is_empty() {
            return Err(Error::invalid("grid values do not match the shape"));
        }
        if values
            .iter()
            .any(|v| *v < T::zero() || v.fract() != T::zero() || !v.is_finite_value())
        {
            return Err(Error::invalid("raw grid entries must be nonnegative integers"));
        }
        Ok(Self {
            values,
            shape,
            normalized: false,
            center: Point3::origin(),
        })
    }

    /// Normalized grid from explicit values in `[0, 1]`.
    pub fn normalized_from_values(shape: [usize; 3], values: Vec<T>) -> Result<Self> {
        if values.len() != shape[0] * shape[1] * shape[2] || values.is_empty() {
            return Err(Error::invalid("grid values do not match the shape"));
        }
        if values.iter().any(|v| !(*v >= T::zero() && *v <= T::one())) {
            return Err(Error::invalid("normalized grid entries must lie in [0, 1]"));
        }
        Ok(Self {
            values,
            shape,
            normalized: true,
            center: Point3::origin(),
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn center(&self) -> &Point3<T> {
        &self.center
    }

    #[inline]
    pub fn offset(&self, n: usize, m: usize, k: usize) -> usize {
        (n * self.shape[1] + m) * self.shape[2] + k
    }

    pub fn get(&self, n: usize, m: usize, k: usize) -> T {
        self.values[self.offset(n, m, k)]
    }

    pub fn total(&self) -> T {
        self.values.iter().fold(T::zero(), |a, &v| a + v)
    }

    /// Sum of radial shell `k` over all angular bins.
    pub fn shell_total(&self, k: usize) -> T {
        let [n_az, n_pol, _] = self.shape;
        let mut s = T::zero();
        for n in 0..n_az {
            for m in 0..n_pol {
                s += self.get(n, m, k);
            }
        }
        s
    }

    /// Sum of the θ-slice `n`.
    pub fn azimuth_slice_total(&self, n: usize) -> T {
        let len = self.shape[1] * self.shape[2];
        self.values[n * len..(n + 1) * len]
            .iter()
            .fold(T::zero(), |a, &v| a + v)
    }

    fn bump(&mut self, n: usize, m: usize, k: usize) {
        let o = self.offset(n, m, k);
        self.values[o] += T::one();
    }
}

fn boundary_slack<T: Real>(radius: T) -> T {
    T::lit(1e-9).max(T::default_epsilon() * T::lit(100.0)) * radius.max(T::one())
}

#[inline]
fn bin_index<T: Real>(value: T, extent: T, bins: usize) -> usize {
    let b = (value * T::from_usize_lossy(bins) / extent).floor();
    if b <= T::zero() {
        0
    } else {
        (b.as_f64() as usize).min(bins - 1)
    }
}

/// Longitude, latitude (polar angle from +z) and radius of a frame-local point.
pub fn spherical_coordinates<T: Real>(p: &Point3<T>) -> (T, T, T) {
    let rho = p.coords.norm();
    let mut theta = p.y.atan2(p.x);
    if theta < T::zero() {
        theta += T::two_pi();
    }
    if theta >= T::two_pi() {
        theta -= T::two_pi();
    }
    let phi = if rho > T::zero() {
        (p.z / rho).max(-T::one()).min(T::one()).acos()
    } else {
        T::zero()
    };
    (theta, phi, rho)
}

/// Counts patch points per spherical voxel after rotating them into `frame`.
///
/// Bins are uniform in θ ∈ [0, 2π), φ ∈ [0, π] and ρ ∈ [0, r]; a point on a
/// boundary goes to the lower bin, the domain maximum is clamped into the last.
pub fn spherical_voxelize<T: Real>(
    patch: &PointCloud<T>,
    frame: &LocalFrame<T>,
    params: &PatchParams<T>,
) -> Result<SphericalVoxelGrid<T>> {
    params.validate()?;
    let (n_az, n_pol, n_rad) = (params.azimuth_bins, params.polar_bins, params.radial_bins);
    let mut grid = SphericalVoxelGrid::zeros([n_az, n_pol, n_rad], Point3::origin());
    let limit = params.radius + boundary_slack(params.radius);
    for (i, p) in patch.iter().enumerate() {
        let local = frame.to_local(p);
        let (theta, phi, rho) = spherical_coordinates(&local);
        if rho > limit {
            return Err(Error::invalid(format!(
                "patch point {i} lies {} from the center, beyond radius {}",
                rho.as_f64(),
                params.radius.as_f64()
            )));
        }
        grid.bump(
            bin_index(theta, T::two_pi(), n_az),
            bin_index(phi, T::pi(), n_pol),
            bin_index(rho, params.radius, n_rad),
        );
    }
    Ok(grid)
}

/// Plain cube occupancy over `[-r, r]³` in the patch frame with the same N×M×K
/// layout as the spherical grid (x → N, y → M, z → K). Used only to compare
/// against spherical voxelization.
pub fn cube_voxelize<T: Real>(
    patch: &PointCloud<T>,
    frame: &LocalFrame<T>,
    params: &PatchParams<T>,
) -> Result<SphericalVoxelGrid<T>> {
    params.validate()?;
    let r = params.radius;
    let side = r + r;
    let limit = r + boundary_slack(r);
    let mut grid = SphericalVoxelGrid::zeros(
        [params.azimuth_bins, params.polar_bins, params.radial_bins],
        Point3::origin(),
    );
    for (i, p) in patch.iter().enumerate() {
        let local = frame.to_local(p);
        if local.coords.norm() > limit {
            return Err(Error::invalid(format!("patch point {i} lies beyond the patch radius")));
        }
        grid.bump(
            bin_index(local.x + r, side, params.azimuth_bins),
            bin_index(local.y + r, side, params.polar_bins),
            bin_index(local.z + r, side, params.radial_bins),
        );
    }
    Ok(grid)
}

fn require_raw<T: Real>(grid: &SphericalVoxelGrid<T>) -> Result<()> {
    if grid.normalized {
        Err(Error::invalid("grid is already normalized"))
    } else {
        Ok(())
    }
}

/// Divides every entry by the grand total so the grid sums to one.
pub fn normalize_whole<T: Real>(grid: &SphericalVoxelGrid<T>) -> Result<SphericalVoxelGrid<T>> {
    require_raw(grid)?;
    let total = grid.total();
    if !(total > T::zero()) {
        return Err(Error::ZeroPatch);
    }
    Ok(SphericalVoxelGrid {
        values: grid.values.iter().map(|&v| v / total).collect(),
        shape: grid.shape,
        normalized: true,
        center: grid.center,
    })
}

/// Divides shell `k` by the cumulative count of shells `0..=k`.
///
/// Inner shells never see outer counts, so changes confined to outer shells
/// leave inner entries bitwise identical. Shells with a zero cumulative count
/// stay zero.
pub fn normalize_multiscale<T: Real>(grid: &SphericalVoxelGrid<T>) -> Result<SphericalVoxelGrid<T>> {
    require_raw(grid)?;
    let [n_az, n_pol, n_rad] = grid.shape;
    let mut cumulative = Vec::with_capacity(n_rad);
    let mut running = T::zero();
    for k in 0..n_rad {
        running += grid.shell_total(k);
        cumulative.push(running);
    }
    let mut values = grid.values.clone();
    for n in 0..n_az {
        for m in 0..n_pol {
            for (k, &denom) in cumulative.iter().enumerate() {
                let o = grid.offset(n, m, k);
                values[o] = if denom > T::zero() {
                    grid.values[o] / denom
                } else {
                    T::zero()
                };
            }
        }
    }
    Ok(SphericalVoxelGrid {
        values,
        shape: grid.shape,
        normalized: true,
        center: grid.center,
    })
}

/// Circular θ shift that [`azimuth_canonicalize`] applies: slice `s` moves to index 0.
///
/// The heaviest θ-slice wins. Equal masses are broken by comparing the whole
/// rotated grids lexicographically (largest first), then by the smallest
/// shift, so the result depends only on the θ-rotation orbit.
pub fn canonical_azimuth_shift<T: Real>(grid: &SphericalVoxelGrid<T>) -> usize {
    let n_az = grid.shape[0];
    let masses: Vec<T> = (0..n_az).map(|n| grid.azimuth_slice_total(n)).collect();
    let best = masses.iter().copied().fold(T::min_value().expect("bounded"), T::max);
    let slice = grid.shape[1] * grid.shape[2];
    let rotated = |s: usize| (0..grid.values.len()).map(move |i| grid.values[(i + s * slice) % grid.values.len()]);
    let mut chosen: Option<usize> = None;
    for s in (0..n_az).filter(|&s| masses[s] == best) {
        chosen = match chosen {
            None => Some(s),
            Some(c) => {
                let ord = rotated(s)
                    .zip(rotated(c))
                    .map(|(a, b)| a.partial_cmp(&b).unwrap_or(Ordering::Equal))
                    .find(|o| *o != Ordering::Equal)
                    .unwrap_or(Ordering::Equal);
                if ord == Ordering::Greater {
                    Some(s)
                } else {
                    Some(c)
                }
            }
        };
    }
    chosen.unwrap_or(0)
}

/// Rotates a normalized grid about the patch z-axis so its heaviest θ-slice is first.
pub fn azimuth_canonicalize<T: Real>(grid: &SphericalVoxelGrid<T>) -> Result<SphericalVoxelGrid<T>> {
    if !grid.normalized {
        return Err(Error::invalid("azimuth canonicalization expects a normalized grid"));
    }
    let shift = canonical_azimuth_shift(grid);
    let slice = grid.shape[1] * grid.shape[2];
    let len = grid.values.len();
    Ok(SphericalVoxelGrid {
        values: (0..len).map(|i| grid.values[(i + shift * slice) % len]).collect(),
        shape: grid.shape,
        normalized: true,
        center: grid.center,
    })
}

pub(crate) fn with_center<T: Real>(mut grid: SphericalVoxelGrid<T>, center: Point3<T>) -> SphericalVoxelGrid<T> {
    grid.center = center;
    grid
}
