use super::mesh::Vec3;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Node {
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

/// Static 3-d tree for exact nearest-neighbor queries.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    nodes: Vec<Node>,
    root: usize,
}

fn sq_dist(a: Vec3, b: Vec3) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

impl KdTree {
    pub fn build(points: &[Vec3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("cannot build a kd-tree over zero points"));
        }
        let mut tree = Self {
            points: points.to_vec(),
            nodes: Vec::with_capacity(points.len()),
            root: 0,
        };
        let mut order: Vec<usize> = (0..points.len()).collect();
        tree.root = tree.build_rec(&mut order).expect("nonempty");
        Ok(tree)
    }

    fn build_rec(&mut self, idx: &mut [usize]) -> Option<usize> {
        if idx.is_empty() {
            return None;
        }
        let axis = self.widest_axis(idx);
        let mid = idx.len() / 2;
        let pts = &self.points;
        idx.select_nth_unstable_by(mid, |&a, &b| pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b)));
        let point = idx[mid];
        let (lo, hi) = idx.split_at_mut(mid);
        let left = self.build_rec(lo);
        let right = self.build_rec(&mut hi[1..]);
        self.nodes.push(Node {
            point,
            axis,
            left,
            right,
        });
        Some(self.nodes.len() - 1)
    }

    fn widest_axis(&self, idx: &[usize]) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for axis in 0..3 {
            let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = self.points[i][axis];
                (lo.min(v), hi.max(v))
            });
            if hi - lo > best.1 {
                best = (axis, hi - lo);
            }
        }
        best.0
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the closest stored point and its squared distance. Ties go to the lowest index.
    pub fn nearest(&self, q: Vec3) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(Some(self.root), q, &mut best);
        best
    }

    fn search(&self, node: Option<usize>, q: Vec3, best: &mut (usize, f64)) {
        let Some(n) = node else { return };
        let node = &self.nodes[n];
        let p = self.points[node.point];
        let d = sq_dist(p, q);
        if d < best.1 || (d == best.1 && node.point < best.0) {
            *best = (node.point, d);
        }
        let diff = q[node.axis] - p[node.axis];
        let (near, far) = if diff < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        self.search(near, q, best);
        if diff * diff <= best.1 {
            self.search(far, q, best);
        }
    }
}
