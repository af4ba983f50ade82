use serde::{Deserialize, Serialize};

use super::kdtree::KdTree;
use super::mesh::{dot3, norm3, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    /// Unit normals, one per point.
    pub normals: Option<Vec<Vec3>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, normals: Option<Vec<Vec3>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("point cloud is empty"));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("point coordinates must be finite"));
        }
        if let Some(ns) = &normals {
            if ns.len() != points.len() {
                return Err(Error::dim("point normals", points.len(), ns.len()));
            }
            if ns.iter().any(|n| !((norm3(*n) - 1.0).abs() <= 1e-6)) {
                return Err(Error::invalid("normals must be unit length"));
            }
        }
        Ok(Self { points, normals })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bbox(&self) -> (Vec3, Vec3) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.points {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    /// Applies `p ↦ R p + t` to points and `n ↦ R n` to normals.
    pub fn transformed(&self, rotation: [[f64; 3]; 3], translation: Vec3) -> Self {
        let apply = |v: &Vec3| [0, 1, 2].map(|r| dot3(rotation[r], *v));
        Self {
            points: self
                .points
                .iter()
                .map(|p| {
                    let q = apply(p);
                    [q[0] + translation[0], q[1] + translation[1], q[2] + translation[2]]
                })
                .collect(),
            normals: self.normals.as_ref().map(|ns| ns.iter().map(apply).collect()),
        }
    }
}

/// Divides coordinates by a tenth of the cloud's own largest bounding-box edge,
/// so that edge measures 10 units afterwards.
pub fn rescale_to_units(cloud: &PointCloud) -> Result<PointCloud> {
    let (lo, hi) = cloud.bbox();
    let edge = (0..3).map(|k| hi[k] - lo[k]).fold(0.0, f64::max);
    if !(edge > 0.0) {
        return Err(Error::invalid("bounding box has zero extent"));
    }
    let unit = edge / 10.0;
    Ok(PointCloud {
        points: cloud.points.iter().map(|p| p.map(|v| v / unit)).collect(),
        normals: cloud.normals.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeMetrics {
    /// `(tau, F1 percentage)` per threshold.
    pub f1: Vec<(f64, f64)>,
    pub chamfer: f64,
    pub normal_consistency: Option<f64>,
}

impl ShapeMetrics {
    pub fn f1_at(&self, tau: f64) -> Option<f64> {
        self.f1.iter().find(|(t, _)| *t == tau).map(|(_, v)| *v)
    }
}

struct Directed {
    /// Per source point: `(target index, squared distance)`.
    nn: Vec<(usize, f64)>,
}

fn directed(from: &PointCloud, to: &KdTree) -> Directed {
    Directed {
        nn: from.points.iter().map(|&p| to.nearest(p)).collect(),
    }
}

fn fraction_within(d: &Directed, tau: f64) -> f64 {
    d.nn.iter().filter(|(_, d2)| d2.sqrt() <= tau).count() as f64 / d.nn.len() as f64
}

fn mean_sq(d: &Directed) -> f64 {
    d.nn.iter().map(|(_, d2)| d2).sum::<f64>() / d.nn.len() as f64
}

fn mean_abs_cos(d: &Directed, from: &[Vec3], to: &[Vec3]) -> f64 {
    d.nn.iter()
        .enumerate()
        .map(|(i, &(j, _))| dot3(from[i], to[j]).abs())
        .sum::<f64>()
        / d.nn.len() as f64
}

fn f1_from(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        100.0 * 2.0 * precision * recall / (precision + recall)
    }
}

/// Computes nearest neighbors once in each direction and derives every metric.
/// Normal consistency is `None` unless both clouds carry normals.
pub fn compare_clouds(gt: &PointCloud, ret: &PointCloud, taus: &[f64]) -> Result<ShapeMetrics> {
    let gt_tree = KdTree::build(&gt.points)?;
    let ret_tree = KdTree::build(&ret.points)?;
    let gt_to_ret = directed(gt, &ret_tree);
    let ret_to_gt = directed(ret, &gt_tree);
    let f1 = taus
        .iter()
        .map(|&tau| {
            let precision = fraction_within(&ret_to_gt, tau);
            let recall = fraction_within(&gt_to_ret, tau);
            (tau, f1_from(precision, recall))
        })
        .collect();
    let normal_consistency = match (&gt.normals, &ret.normals) {
        (Some(gn), Some(rn)) => Some(0.5 * (mean_abs_cos(&gt_to_ret, gn, rn) + mean_abs_cos(&ret_to_gt, rn, gn))),
        _ => None,
    };
    Ok(ShapeMetrics {
        f1,
        chamfer: mean_sq(&gt_to_ret) + mean_sq(&ret_to_gt),
        normal_consistency,
    })
}

/// F1 of point-wise precision and recall at distance `tau` (inclusive), as a percentage.
pub fn f1_tau(gt: &PointCloud, ret: &PointCloud, tau: f64) -> Result<f64> {
    Ok(compare_clouds(gt, ret, &[tau])?.f1[0].1)
}

/// Sum of the mean squared nearest-neighbor distances in both directions.
pub fn chamfer(gt: &PointCloud, ret: &PointCloud) -> Result<f64> {
    Ok(compare_clouds(gt, ret, &[])?.chamfer)
}

/// Mean `|n_p · n_NN(p)|` over both directions, averaged.
pub fn normal_consistency(gt: &PointCloud, ret: &PointCloud) -> Result<f64> {
    compare_clouds(gt, ret, &[])?
        .normal_consistency
        .ok_or_else(|| Error::invalid("normal consistency needs normals on both clouds"))
}
