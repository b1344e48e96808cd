use nalgebra::Point3;

use super::PointCloud;
use crate::Real;

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
enum Node<T> {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: T,
        left: usize,
        right: usize,
    },
}

/// Axis-aligned kd-tree over a snapshot of a cloud's points.
///
/// Built once per cloud and immutable afterwards, so shared read-only queries
/// from several threads are fine.
#[derive(Debug, Clone)]
pub struct KdTree<T: Real = f64> {
    points: Vec<Point3<T>>,
    order: Vec<usize>,
    nodes: Vec<Node<T>>,
}

impl<T: Real> KdTree<T> {
    pub fn build(cloud: &PointCloud<T>) -> Self {
        let points = cloud.points().to_vec();
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build_node(&points, &mut order, 0, &mut nodes);
        }
        Self {
            points,
            order,
            nodes,
        }
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

    /// Indices of all points with `‖p − center‖ ≤ radius`.
    pub fn within_radius(&self, center: &Point3<T>, radius: T) -> Vec<usize> {
        let mut out = Vec::new();
        if self.nodes.is_empty() || radius < T::zero() {
            return out;
        }
        let r2 = radius * radius;
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            match &self.nodes[id] {
                Node::Leaf { start, end } => {
                    for &i in &self.order[*start..*end] {
                        if (self.points[i] - center).norm_squared() <= r2 {
                            out.push(i);
                        }
                    }
                }
                Node::Split {
                    axis,
                    value,
                    left,
                    right,
                } => {
                    let c = center[*axis];
                    if c - radius <= *value {
                        stack.push(*left);
                    }
                    if c + radius >= *value {
                        stack.push(*right);
                    }
                }
            }
        }
        out
    }

    /// Closest point and its distance; ties go to the lower index.
    pub fn nearest(&self, query: &Point3<T>) -> Option<(usize, T)> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: (usize, T) = (usize::MAX, T::max_value().expect("bounded scalar"));
        self.nearest_in(0, query, &mut best);
        Some((best.0, best.1.sqrt()))
    }

    fn nearest_in(&self, id: usize, q: &Point3<T>, best: &mut (usize, T)) {
        match &self.nodes[id] {
            Node::Leaf { start, end } => {
                for &i in &self.order[*start..*end] {
                    let d2 = (self.points[i] - q).norm_squared();
                    if d2 < best.1 || (d2 == best.1 && i < best.0) {
                        *best = (i, d2);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[*axis] - *value;
                let (near, far) = if diff <= T::zero() {
                    (*left, *right)
                } else {
                    (*right, *left)
                };
                self.nearest_in(near, q, best);
                if diff * diff <= best.1 {
                    self.nearest_in(far, q, best);
                }
            }
        }
    }
}

fn build_node<T: Real>(
    points: &[Point3<T>],
    order: &mut [usize],
    offset: usize,
    nodes: &mut Vec<Node<T>>,
) -> usize {
    let id = nodes.len();
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return id;
    }

    let mut lo = points[order[0]];
    let mut hi = lo;
    for &i in order.iter() {
        let p = &points[i];
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let spread = hi - lo;
    let axis = spread.imax();
    if spread[axis] <= T::zero() {
        // every point coincides; nothing to split on
        nodes.push(Node::Leaf {
            start: offset,
            end: offset + order.len(),
        });
        return id;
    }

    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis]
            .partial_cmp(&points[b][axis])
            .expect("finite coordinates")
    });
    let value = points[order[mid]][axis];

    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (left_part, right_part) = order.split_at_mut(mid);
    let left = build_node(points, left_part, offset, nodes);
    let right = build_node(points, right_part, offset + mid, nodes);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}
