//! Contrastive objectives over batches of row-aligned embeddings, with exact
//! gradients with respect to every input row.
//!
//! All similarities are cosine similarities: rows are normalized inside the
//! loss and gradients are propagated back through the normalization.

mod ntxent;
mod triplet;

pub use ntxent::{bimodal_loss, ntxent_directional, trimodal_loss, ContrastiveConfig};
pub use triplet::{
    cosine_distance, mine_batch, mine_semihard, trimodal_triplet_loss, triplet_loss_with_negatives,
    triplet_semihard_loss, TripletConfig,
};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::space::norm;

/// A loss value and one gradient matrix per input, shaped like that input.
#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grads: Vec<Matrix>,
}

/// Row-normalized copy of `m` plus the original row norms.
pub(crate) fn normalize_rows(m: &Matrix, what: &str) -> Result<(Matrix, Vec<f64>)> {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let n = norm(m.row(i));
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroNorm(format!("row {i} of {what}")));
        }
        out.row_mut(i).iter_mut().for_each(|v| *v /= n);
        norms.push(n);
    }
    Ok((out, norms))
}

/// Maps a gradient w.r.t. normalized rows `x̂ = x/‖x‖` to one w.r.t. `x`:
/// `(g − x̂(x̂·g)) / ‖x‖`.
pub(crate) fn unnormalize_grad(dhat: &Matrix, hat: &Matrix, norms: &[f64]) -> Matrix {
    let mut out = dhat.clone();
    for (i, &n) in norms.iter().enumerate() {
        let h = hat.row(i);
        let proj: f64 = h.iter().zip(dhat.row(i)).map(|(a, b)| a * b).sum();
        for (o, hv) in out.row_mut(i).iter_mut().zip(h) {
            *o = (*o - hv * proj) / n;
        }
    }
    out
}

/// Given `dL/dS` for `S = ÛV̂ᵀ`, returns `(dL/dU, dL/dV)`.
pub(crate) fn similarity_backward(
    dsim: &Matrix,
    u_hat: &Matrix,
    u_norms: &[f64],
    v_hat: &Matrix,
    v_norms: &[f64],
) -> (Matrix, Matrix) {
    let du_hat = dsim.matmul(v_hat);
    let dv_hat = dsim.transpose().matmul(u_hat);
    (
        unnormalize_grad(&du_hat, u_hat, u_norms),
        unnormalize_grad(&dv_hat, v_hat, v_norms),
    )
}

pub(crate) fn check_batch(mats: &[(&str, &Matrix)]) -> Result<()> {
    let (first_name, first) = mats[0];
    if first.rows() == 0 {
        return Err(Error::invalid(format!("{first_name} batch is empty")));
    }
    for (name, m) in &mats[1..] {
        if m.rows() != first.rows() {
            return Err(Error::dim(
                format!("{name} rows vs {first_name}"),
                first.rows(),
                m.rows(),
            ));
        }
        if m.cols() != first.cols() {
            return Err(Error::dim(
                format!("{name} cols vs {first_name}"),
                first.cols(),
                m.cols(),
            ));
        }
    }
    Ok(())
}
