use std::collections::HashMap;

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::PointCloud;
use crate::{Error, Real, Result};

/// Greedy farthest point sampling.
///
/// The first index is drawn uniformly from a ChaCha8 stream seeded with `seed`;
/// every later pick maximizes the distance to the nearest already-chosen
/// point, ties going to the lowest index.
pub fn farthest_point_sample<T: Real>(cloud: &PointCloud<T>, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = cloud.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "farthest point sampling needs 1 <= k <= {n}, got k = {k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = rng.random_range(0..n);
    Ok(farthest_point_sample_from(cloud, k, first))
}

/// Farthest point sampling with an explicit first index.
pub fn farthest_point_sample_from<T: Real>(cloud: &PointCloud<T>, k: usize, first: usize) -> Vec<usize> {
    let pts = cloud.points();
    let k = k.min(pts.len());
    let mut chosen = Vec::with_capacity(k);
    if k == 0 {
        return chosen;
    }
    let mut min_d2 = vec![T::max_value().expect("bounded scalar"); pts.len()];
    let mut current = first;
    chosen.push(current);
    // chosen points sit below every real distance so duplicates never repeat an index
    min_d2[current] = -T::one();
    while chosen.len() < k {
        let c = pts[current];
        let mut best = 0usize;
        let mut best_d = -T::one();
        for (i, (p, d)) in pts.iter().zip(min_d2.iter_mut()).enumerate() {
            let d2 = (p - c).norm_squared();
            if d2 < *d {
                *d = d2;
            }
            if *d > best_d {
                best_d = *d;
                best = i;
            }
        }
        current = best;
        chosen.push(current);
        min_d2[current] = -T::one();
    }
    chosen
}

/// Replaces the points of every occupied cubic voxel of edge `side` by their
/// centroid. The grid is anchored at the origin; `side == 0` returns the input.
///
/// Output order follows the first occurrence of each voxel in the input.
pub fn voxel_downsample<T: Real>(cloud: &PointCloud<T>, side: T) -> Result<PointCloud<T>> {
    if side < T::zero() || !side.is_finite_value() {
        return Err(Error::invalid("voxel side must be finite and nonnegative"));
    }
    if side == T::zero() {
        return Ok(cloud.clone());
    }
    let mut slots: HashMap<[i64; 3], usize> = HashMap::new();
    let mut sums: Vec<(Vector3<T>, usize)> = Vec::new();
    for p in cloud {
        let key = voxel_key(p, side);
        let slot = *slots.entry(key).or_insert_with(|| {
            sums.push((Vector3::zeros(), 0));
            sums.len() - 1
        });
        sums[slot].0 += p.coords;
        sums[slot].1 += 1;
    }
    Ok(PointCloud::from_trusted(
        sums.into_iter()
            .map(|(s, n)| Point3::from(s / T::from_usize_lossy(n)))
            .collect(),
    ))
}

pub(crate) fn voxel_key<T: Real>(p: &Point3<T>, side: T) -> [i64; 3] {
    let cell = |c: T| (c / side).floor().as_f64() as i64;
    [cell(p.x), cell(p.y), cell(p.z)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_point() {
        let c = PointCloud::from_xyz(&[[1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(farthest_point_sample(&c, 1, 99).unwrap(), vec![0]);
    }

    #[test]
    fn collinear_picks_far_end() {
        let c = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [10.0, 0.0, 0.0]])
            .unwrap();
        assert_eq!(farthest_point_sample_from(&c, 2, 0), vec![0, 3]);
    }

    #[test]
    fn k_out_of_range() {
        let c = random_cloud(5, 1);
        assert!(farthest_point_sample(&c, 0, 0).is_err());
        assert!(farthest_point_sample(&c, 6, 0).is_err());
    }

    #[test]
    fn indices_distinct_and_deterministic() {
        let c = random_cloud(300, 2);
        let a = farthest_point_sample(&c, 40, 7).unwrap();
        let b = farthest_point_sample(&c, 40, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().collect::<HashSet<_>>().len(), 40);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        // points 1 and 2 are both at distance 1 from point 0
        let c = PointCloud::from_xyz(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]).unwrap();
        assert_eq!(farthest_point_sample_from(&c, 2, 0), vec![0, 1]);
    }

    #[test]
    fn duplicates_still_yield_distinct_indices() {
        let c = PointCloud::from_xyz(&[[0.0, 0.0, 0.0]; 4]).unwrap();
        assert_eq!(farthest_point_sample_from(&c, 4, 2), vec![2, 0, 1, 3]);
    }

    #[test]
    fn downsample_identity_and_separation() {
        let c = random_cloud(50, 5);
        assert_eq!(voxel_downsample(&c, 0.0).unwrap(), c);
        let two = PointCloud::from_xyz(&[[0.05, 0.05, 0.05], [1.05, 0.05, 0.05]]).unwrap();
        assert_eq!(voxel_downsample(&two, 0.1).unwrap().len(), 2);
        assert!(voxel_downsample(&two, -0.1).is_err());
    }

    #[test]
    fn downsample_uses_centroids() {
        let c = PointCloud::from_xyz(&[[0.01, 0.01, 0.01], [0.03, 0.05, 0.07], [0.5, 0.5, 0.5]]).unwrap();
        let d = voxel_downsample(&c, 0.1).unwrap();
        assert_eq!(d.len(), 2);
        assert!((d.points()[0] - Point3::new(0.02, 0.03, 0.04)).norm() < 1e-15);
        assert_eq!(d.points()[1], Point3::new(0.5, 0.5, 0.5));
    }
}
