//! Descriptor matching: cosine similarity, dual softmax, element-wise top-k
//! selection, and mutual nearest neighbors as the strict alternative.

use std::cmp::Ordering;

use nalgebra::{DMatrix, Point3};

use crate::descriptor::VoxelDescriptor;
use crate::{Error, Real, Result};

/// Pairwise cosine similarities, rows = source descriptors, columns = target.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix<T: Real = f64>(pub DMatrix<T>);

/// Product of row-wise and column-wise softmaxes of a similarity matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftAssignment<T: Real = f64>(pub DMatrix<T>);

impl<T: Real> SimilarityMatrix<T> {
    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }
}

impl<T: Real> SoftAssignment<T> {
    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }
}

/// A putative match between a source keypoint and a target keypoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence<T: Real = f64> {
    pub source: Point3<T>,
    pub target: Point3<T>,
    pub score: T,
    /// Row of the source keypoint in the matching matrices.
    pub source_index: usize,
    /// Column of the target keypoint in the matching matrices.
    pub target_index: usize,
}

impl<T: Real> Correspondence<T> {
    pub fn new(source: Point3<T>, target: Point3<T>) -> Self {
        Self {
            source,
            target,
            score: T::one(),
            source_index: 0,
            target_index: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet<T: Real = f64> {
    pub pairs: Vec<Correspondence<T>>,
}

impl<T: Real> Default for CorrespondenceSet<T> {
    fn default() -> Self {
        Self { pairs: Vec::new() }
    }
}

impl<T: Real> CorrespondenceSet<T> {
    pub fn new(pairs: Vec<Correspondence<T>>) -> Self {
        Self { pairs }
    }

    /// Unit-score correspondences from parallel point lists.
    pub fn from_points(source: &[Point3<T>], target: &[Point3<T>]) -> Result<Self> {
        if source.len() != target.len() {
            return Err(Error::invalid("source and target lists differ in length"));
        }
        Ok(Self::new(
            source
                .iter()
                .zip(target)
                .enumerate()
                .map(|(i, (p, q))| Correspondence {
                    source: *p,
                    target: *q,
                    score: T::one(),
                    source_index: i,
                    target_index: i,
                })
                .collect(),
        ))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Correspondence<T>> {
        self.pairs.iter()
    }

    /// Sub-set made of the given positions, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self::new(indices.iter().map(|&i| self.pairs[i]).collect())
    }

    pub fn sources(&self) -> Vec<Point3<T>> {
        self.pairs.iter().map(|c| c.source).collect()
    }

    pub fn targets(&self) -> Vec<Point3<T>> {
        self.pairs.iter().map(|c| c.target).collect()
    }
}

fn normalized_rows<T: Real>(descs: &[VoxelDescriptor<T>], dim: usize, side: &str) -> Result<DMatrix<T>> {
    let mut m = DMatrix::zeros(descs.len(), dim);
    for (i, d) in descs.iter().enumerate() {
        if d.dim() != dim {
            return Err(Error::invalid(format!(
                "{side} descriptor {i} has dimension {}, expected {dim}",
                d.dim()
            )));
        }
        let norm = d.norm();
        if !(norm > T::zero()) {
            return Err(Error::invalid(format!("{side} descriptor {i} has zero norm")));
        }
        for (j, v) in d.values.iter().enumerate() {
            m[(i, j)] = *v / norm;
        }
    }
    Ok(m)
}

/// `S[i, j] = ⟨aᵢ/‖aᵢ‖, bⱼ/‖bⱼ‖⟩`.
pub fn cosine_similarity_matrix<T: Real>(
    source: &[VoxelDescriptor<T>],
    target: &[VoxelDescriptor<T>],
) -> Result<SimilarityMatrix<T>> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::invalid("descriptor lists must be non-empty"));
    }
    let dim = source[0].dim();
    if dim == 0 {
        return Err(Error::invalid("descriptors must have positive dimension"));
    }
    let a = normalized_rows(source, dim, "source")?;
    let b = normalized_rows(target, dim, "target")?;
    Ok(SimilarityMatrix(a * b.transpose()))
}

/// `M[i, j] = softmaxⱼ(S[i, ·]/τ)[j] · softmaxᵢ(S[·, j]/τ)[i]`.
pub fn dual_softmax<T: Real>(sim: &SimilarityMatrix<T>, temperature: T) -> Result<SoftAssignment<T>> {
    if !(temperature > T::zero()) {
        return Err(Error::invalid("softmax temperature must be positive"));
    }
    let s = &sim.0;
    let (rows, cols) = s.shape();
    let scaled = s.map(|v| v / temperature);

    let mut row_soft = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        let row = scaled.row(i);
        let max = row.max();
        let mut total = T::zero();
        for j in 0..cols {
            let e = (row[j] - max).exp();
            row_soft[(i, j)] = e;
            total += e;
        }
        for j in 0..cols {
            row_soft[(i, j)] /= total;
        }
    }

    let mut out = row_soft;
    for j in 0..cols {
        let col = scaled.column(j);
        let max = col.max();
        let total = col.iter().fold(T::zero(), |a, &v| a + (v - max).exp());
        for i in 0..rows {
            out[(i, j)] *= (col[i] - max).exp() / total;
        }
    }
    Ok(SoftAssignment(out))
}

/// Descending score, then lexicographically smallest `(row, col)`.
fn rank_entries<T: Real>(m: &DMatrix<T>, a: usize, b: usize) -> Ordering {
    let cols = m.ncols();
    let va = m[(a / cols, a % cols)];
    let vb = m[(b / cols, b % cols)];
    vb.partial_cmp(&va).unwrap_or(Ordering::Equal).then(a.cmp(&b))
}

/// The `k` largest entries of the soft assignment as correspondences, best first.
///
/// A keypoint may appear in several pairs.
pub fn topk_correspondences<T: Real>(
    assign: &SoftAssignment<T>,
    source_keypoints: &[Point3<T>],
    target_keypoints: &[Point3<T>],
    k: usize,
) -> Result<CorrespondenceSet<T>> {
    let m = &assign.0;
    let (rows, cols) = m.shape();
    check_keypoints(rows, cols, source_keypoints, target_keypoints)?;
    let total = rows * cols;
    if k == 0 || k > total {
        return Err(Error::invalid(format!("top-k needs 1 <= k <= {total}, got {k}")));
    }
    let mut order: Vec<usize> = (0..total).collect();
    if k < total {
        order.select_nth_unstable_by(k - 1, |&a, &b| rank_entries(m, a, b));
        order.truncate(k);
    }
    order.sort_unstable_by(|&a, &b| rank_entries(m, a, b));
    Ok(CorrespondenceSet::new(
        order
            .into_iter()
            .map(|lin| {
                let (i, j) = (lin / cols, lin % cols);
                Correspondence {
                    source: source_keypoints[i],
                    target: target_keypoints[j],
                    score: m[(i, j)],
                    source_index: i,
                    target_index: j,
                }
            })
            .collect(),
    ))
}

fn check_keypoints<T: Real>(
    rows: usize,
    cols: usize,
    src: &[Point3<T>],
    tgt: &[Point3<T>],
) -> Result<()> {
    if src.len() != rows || tgt.len() != cols {
        return Err(Error::invalid(format!(
            "matrix is {rows}x{cols} but {} source and {} target keypoints were given",
            src.len(),
            tgt.len()
        )));
    }
    Ok(())
}

fn argmax_first<T: Real>(values: impl Iterator<Item = T>) -> usize {
    let mut best = 0;
    let mut best_v: Option<T> = None;
    for (i, v) in values.enumerate() {
        if best_v.is_none_or(|b| v > b) {
            best = i;
            best_v = Some(v);
        }
    }
    best
}

/// Pairs that are each other's best match; ties go to the lowest index.
/// May be empty.
pub fn mutual_nearest_neighbor<T: Real>(
    sim: &SimilarityMatrix<T>,
    source_keypoints: &[Point3<T>],
    target_keypoints: &[Point3<T>],
) -> Result<CorrespondenceSet<T>> {
    let s = &sim.0;
    let (rows, cols) = s.shape();
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("similarity matrix is empty"));
    }
    check_keypoints(rows, cols, source_keypoints, target_keypoints)?;
    let col_best: Vec<usize> = (0..cols)
        .map(|j| argmax_first(s.column(j).iter().copied()))
        .collect();
    let pairs = (0..rows)
        .filter_map(|i| {
            let j = argmax_first(s.row(i).iter().copied());
            (col_best[j] == i).then(|| Correspondence {
                source: source_keypoints[i],
                target: target_keypoints[j],
                score: s[(i, j)],
                source_index: i,
                target_index: j,
            })
        })
        .collect();
    Ok(CorrespondenceSet::new(pairs))
}
