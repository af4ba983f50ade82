//! Ranking metrics over ground-truth ranks and geometry metrics over sampled
//! surface point clouds.

mod geometry;
mod kdtree;
mod mesh;
mod ranking;
mod report;

pub use geometry::{chamfer, compare_clouds, f1_tau, normal_consistency, rescale_to_units, PointCloud, ShapeMetrics};
pub use kdtree::KdTree;
pub use mesh::{load_obj, parse_obj, sample_mesh_points, TriangleMesh};
pub use ranking::{expected_random, harmonic, mrr, ndcg_at_k, recall_rate, RandomBaseline, RankingSummary};
pub use report::{format_csv, format_table, parse_csv, ReportRow, Stat, REPORT_COLUMNS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricConfig {
    /// F1 distance thresholds, in rescaled units.
    pub tau_geo: Vec<f64>,
    /// Points sampled per mesh.
    pub n_samples: usize,
    /// Cutoffs for RR@k and NDCG@k.
    pub k: Vec<usize>,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            tau_geo: vec![0.1, 0.3, 0.5],
            n_samples: 10_000,
            k: vec![1, 5],
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau_geo.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return Err(Error::Config("geometry thresholds must be positive".into()));
        }
        if self.n_samples == 0 {
            return Err(Error::Config("n_samples must be positive".into()));
        }
        if self.k.is_empty() || self.k.contains(&0) {
            return Err(Error::Config("k list must be nonempty with k >= 1".into()));
        }
        Ok(())
    }
}
