use serde::{Deserialize, Serialize};

use super::{check_batch, normalize_rows, similarity_backward, LossOutput};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::space::cosine_similarity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TripletConfig {
    /// Hinge margin in cosine-distance units.
    pub margin: f64,
}

impl Default for TripletConfig {
    fn default() -> Self {
        Self { margin: 0.025 }
    }
}

impl TripletConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::Config(format!("margin must be positive, got {}", self.margin)));
        }
        Ok(())
    }
}

/// `1 − cos(a, b)`.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(1.0 - cosine_similarity(a, b)?)
}

fn in_band(d_pos: f64, d: f64, margin: f64) -> bool {
    d_pos < d && d < d_pos + margin
}

/// Indices of `candidates` whose distance to `anchor` lies strictly inside
/// `(d_pos, d_pos + margin)`.
pub fn mine_semihard(anchor: &[f64], positive: &[f64], candidates: &[&[f64]], margin: f64) -> Result<Vec<usize>> {
    let d_pos = cosine_distance(anchor, positive)?;
    let mut out = Vec::new();
    for (k, c) in candidates.iter().enumerate() {
        if in_band(d_pos, cosine_distance(anchor, c)?, margin) {
            out.push(k);
        }
    }
    Ok(out)
}

/// Triplet loss over a fixed set of negatives: `negatives[j]` lists the rows
/// of `positives` used as negatives for anchor `j`. The sets are constants
/// for the gradient.
pub fn triplet_loss_with_negatives(
    anchors: &Matrix,
    positives: &Matrix,
    negatives: &[Vec<usize>],
    margin: f64,
) -> Result<LossOutput> {
    check_batch(&[("anchors", anchors), ("positives", positives)])?;
    let n = anchors.rows();
    if negatives.len() != n {
        return Err(Error::dim("negative sets", n, negatives.len()));
    }
    let (a_hat, a_norms) = normalize_rows(anchors, "anchors")?;
    let (p_hat, p_norms) = normalize_rows(positives, "positives")?;
    let sim = a_hat.mul_transpose(&p_hat);

    let active: Vec<usize> = (0..n).filter(|&j| !negatives[j].is_empty()).collect();
    let mut dsim = Matrix::zeros(n, n);
    if active.is_empty() {
        return Ok(LossOutput {
            value: 0.0,
            grads: vec![Matrix::zeros(n, anchors.cols()), Matrix::zeros(n, positives.cols())],
        });
    }
    let scale = 1.0 / active.len() as f64;
    let mut total = 0.0;
    for &j in &active {
        let d_pos = 1.0 - sim[(j, j)];
        for &k in &negatives[j] {
            if k >= n || k == j {
                return Err(Error::invalid(format!("negative {k} invalid for anchor {j}")));
            }
            let hinge = d_pos - (1.0 - sim[(j, k)]) + margin;
            if hinge > 0.0 {
                total += hinge;
                // d = 1 − s, so the hinge moves with −s_jj and +s_jk
                dsim[(j, j)] -= scale;
                dsim[(j, k)] += scale;
            }
        }
    }
    let (ga, gp) = similarity_backward(&dsim, &a_hat, &a_norms, &p_hat, &p_norms);
    Ok(LossOutput {
        value: total * scale,
        grads: vec![ga, gp],
    })
}

/// Semi-hard negatives for every anchor, mined from the other positives in the batch.
pub fn mine_batch(anchors: &Matrix, positives: &Matrix, margin: f64) -> Result<Vec<Vec<usize>>> {
    let n = anchors.rows();
    (0..n)
        .map(|j| {
            let others: Vec<usize> = (0..n).filter(|&k| k != j).collect();
            let cands: Vec<&[f64]> = others.iter().map(|&k| positives.row(k)).collect();
            let picked = mine_semihard(anchors.row(j), positives.row(j), &cands, margin)?;
            Ok(picked.into_iter().map(|i| others[i]).collect())
        })
        .collect()
}

/// Online semi-hard triplet loss with in-batch negatives.
pub fn triplet_semihard_loss(anchors: &Matrix, positives: &Matrix, cfg: &TripletConfig) -> Result<LossOutput> {
    cfg.validate()?;
    check_batch(&[("anchors", anchors), ("positives", positives)])?;
    if anchors.rows() < 2 {
        return Err(Error::invalid("triplet loss needs at least 2 rows"));
    }
    let negatives = mine_batch(anchors, positives, cfg.margin)?;
    triplet_loss_with_negatives(anchors, positives, &negatives, cfg.margin)
}

/// Triplet counterpart of the trimodal loss: text anchors against voxel and
/// image, image anchors against voxel. Gradients in `[voxel, image, text]` order.
pub fn trimodal_triplet_loss(voxel: &Matrix, image: &Matrix, text: &Matrix, cfg: &TripletConfig) -> Result<LossOutput> {
    check_batch(&[("voxel", voxel), ("image", image), ("text", text)])?;
    let tv = triplet_semihard_loss(text, voxel, cfg)?;
    let ti = triplet_semihard_loss(text, image, cfg)?;
    let iv = triplet_semihard_loss(image, voxel, cfg)?;
    let mut gv = tv.grads[1].clone();
    gv.add_assign(&iv.grads[1]);
    let mut gi = ti.grads[1].clone();
    gi.add_assign(&iv.grads[0]);
    let mut gt = tv.grads[0].clone();
    gt.add_assign(&ti.grads[0]);
    Ok(LossOutput {
        value: tv.value + ti.value + iv.value,
        grads: vec![gv, gi, gt],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_loss_gradients, random_matrix};
    use crate::rng::rng_stream;

    /// Unit vector at cosine distance `d` from `(1, 0)`.
    fn at_distance(d: f64) -> Vec<f64> {
        let c = 1.0 - d;
        vec![c, (1.0 - c * c).sqrt()]
    }

    #[test]
    fn band_membership() {
        let a = [1.0, 0.0];
        let p = at_distance(0.2);
        let c1 = at_distance(0.21);
        let c2 = at_distance(0.18);
        let c3 = at_distance(0.3);
        let picked = mine_semihard(&a, &p, &[&c1, &c2, &c3], 0.025).unwrap();
        assert_eq!(picked, vec![0]);
    }

    #[test]
    fn hinge_arithmetic() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        // second anchor's positive is far from everything in its band
        let p = Matrix::from_rows(&[at_distance(0.2), at_distance(0.21)]).unwrap();
        let negs = mine_batch(&a, &p, 0.025).unwrap();
        assert_eq!(negs, vec![vec![1], vec![]]);
        let out = triplet_loss_with_negatives(&a, &p, &negs, 0.025).unwrap();
        assert!((out.value - 0.015).abs() < 1e-12, "{}", out.value);
    }

    #[test]
    fn empty_band_is_zero() {
        let a = Matrix::identity(3);
        let out = triplet_semihard_loss(&a, &a, &TripletConfig::default()).unwrap();
        assert_eq!(out.value, 0.0);
        assert!(out.grads.iter().all(|g| g.as_slice().iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn needs_two_rows() {
        let a = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(triplet_semihard_loss(&a, &a, &TripletConfig::default()).is_err());
        assert!(TripletConfig { margin: 0.0 }.validate().is_err());
    }

    #[test]
    fn gradients_with_frozen_mining() {
        let mut rng = rng_stream(7, "triplet-test");
        let margin = 0.5;
        let mut checked = 0;
        for _ in 0..20 {
            let inputs = vec![random_matrix(6, 3, &mut rng), random_matrix(6, 3, &mut rng)];
            let negs = mine_batch(&inputs[0], &inputs[1], margin).unwrap();
            if negs.iter().all(Vec::is_empty) {
                continue;
            }
            let err = check_loss_gradients(&inputs, |m| {
                triplet_loss_with_negatives(&m[0], &m[1], &negs, margin).unwrap()
            });
            assert!(err < 1e-5, "{err}");
            checked += 1;
        }
        assert!(checked > 5);
    }

    #[test]
    fn trimodal_triplet_is_sum() {
        let mut rng = rng_stream(8, "triplet-test");
        let cfg = TripletConfig { margin: 0.3 };
        let (v, i, t) = (
            random_matrix(8, 4, &mut rng),
            random_matrix(8, 4, &mut rng),
            random_matrix(8, 4, &mut rng),
        );
        let out = trimodal_triplet_loss(&v, &i, &t, &cfg).unwrap();
        let sum = triplet_semihard_loss(&t, &v, &cfg).unwrap().value
            + triplet_semihard_loss(&t, &i, &cfg).unwrap().value
            + triplet_semihard_loss(&i, &v, &cfg).unwrap().value;
        assert!((out.value - sum).abs() < 1e-12);
        assert!(out.value >= 0.0);
    }
}
