use serde::{Deserialize, Serialize};

use super::{check_batch, normalize_rows, similarity_backward, LossOutput};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContrastiveConfig {
    /// Softmax temperature.
    pub tau: f64,
    /// Weight of the `U→V` direction; `1 − alpha` weighs `V→U`.
    pub alpha: f64,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self { tau: 0.1, alpha: 0.5 }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must be in [0, 1], got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Max-shifted log-softmax probabilities of `logits`, plus `log Σ exp`.
fn softmax_with_lse(logits: impl Iterator<Item = f64> + Clone) -> (Vec<f64>, f64) {
    let max = logits.clone().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let lse = max + sum.ln();
    (exps.into_iter().map(|e| e / sum).collect(), lse)
}

struct Directional {
    /// Row-wise softmax of `S/τ` (U anchors).
    p_rows: Matrix,
    /// Column-wise softmax of `S/τ` (V anchors), stored in `S` layout.
    p_cols: Matrix,
    loss_uv: Vec<f64>,
    loss_vu: Vec<f64>,
}

fn directional_terms(sim: &Matrix, tau: f64) -> Directional {
    let n = sim.rows();
    let mut p_rows = Matrix::zeros(n, n);
    let mut p_cols = Matrix::zeros(n, n);
    let mut loss_uv = Vec::with_capacity(n);
    let mut loss_vu = Vec::with_capacity(n);
    for j in 0..n {
        let row = sim.row(j).iter().map(|s| s / tau);
        let (p, lse) = softmax_with_lse(row);
        p_rows.row_mut(j).copy_from_slice(&p);
        loss_uv.push(lse - sim[(j, j)] / tau);

        let col = (0..n).map(|k| sim[(k, j)] / tau);
        let (q, lse) = softmax_with_lse(col);
        for (k, qk) in q.into_iter().enumerate() {
            p_cols[(k, j)] = qk;
        }
        loss_vu.push(lse - sim[(j, j)] / tau);
    }
    Directional {
        p_rows,
        p_cols,
        loss_uv,
        loss_vu,
    }
}

/// Per-example `l_j = −log softmax_k(cos(u_j, v_k)/τ)[j]`.
pub fn ntxent_directional(u: &Matrix, v: &Matrix, tau: f64) -> Result<Vec<f64>> {
    check_batch(&[("U", u), ("V", v)])?;
    if !(tau > 0.0) {
        return Err(Error::invalid("tau must be positive"));
    }
    let (u_hat, _) = normalize_rows(u, "U")?;
    let (v_hat, _) = normalize_rows(v, "V")?;
    let sim = u_hat.mul_transpose(&v_hat);
    Ok(directional_terms(&sim, tau).loss_uv)
}

/// `L(U,V) = (1/N) Σ_j [α l_j(U→V) + (1−α) l_j(V→U)]` with gradients for both inputs.
pub fn bimodal_loss(u: &Matrix, v: &Matrix, cfg: &ContrastiveConfig) -> Result<LossOutput> {
    check_batch(&[("U", u), ("V", v)])?;
    cfg.validate()?;
    let n = u.rows();
    let (u_hat, u_norms) = normalize_rows(u, "U")?;
    let (v_hat, v_norms) = normalize_rows(v, "V")?;
    let sim = u_hat.mul_transpose(&v_hat);
    let d = directional_terms(&sim, cfg.tau);
    let (a, b) = (cfg.alpha, 1.0 - cfg.alpha);
    let value = d
        .loss_uv
        .iter()
        .zip(&d.loss_vu)
        .map(|(x, y)| a * x + b * y)
        .sum::<f64>()
        / n as f64;

    // dL/dS_jk = [α(P_jk − δ_jk) + (1−α)(Q_jk − δ_jk)] / (Nτ)
    let scale = 1.0 / (n as f64 * cfg.tau);
    let mut dsim = Matrix::zeros(n, n);
    for j in 0..n {
        for k in 0..n {
            let delta = if j == k { 1.0 } else { 0.0 };
            dsim[(j, k)] = scale * (a * (d.p_rows[(j, k)] - delta) + b * (d.p_cols[(j, k)] - delta));
        }
    }
    let (gu, gv) = similarity_backward(&dsim, &u_hat, &u_norms, &v_hat, &v_norms);
    Ok(LossOutput {
        value,
        grads: vec![gu, gv],
    })
}

/// `L(v,i) + L(v,t) + L(i,t)`; gradients are returned in `[voxel, image, text]` order.
pub fn trimodal_loss(voxel: &Matrix, image: &Matrix, text: &Matrix, cfg: &ContrastiveConfig) -> Result<LossOutput> {
    check_batch(&[("voxel", voxel), ("image", image), ("text", text)])?;
    let vi = bimodal_loss(voxel, image, cfg)?;
    let vt = bimodal_loss(voxel, text, cfg)?;
    let it = bimodal_loss(image, text, cfg)?;
    let mut gv = vi.grads[0].clone();
    gv.add_assign(&vt.grads[0]);
    let mut gi = vi.grads[1].clone();
    gi.add_assign(&it.grads[0]);
    let mut gt = vt.grads[1].clone();
    gt.add_assign(&it.grads[1]);
    Ok(LossOutput {
        value: vi.value + vt.value + it.value,
        grads: vec![gv, gi, gt],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_loss_gradients, random_matrix};
    use crate::rng::rng_stream;
    use crate::space::cosine_similarity;

    fn naive_directional(u: &Matrix, v: &Matrix, tau: f64) -> Vec<f64> {
        let n = u.rows();
        (0..n)
            .map(|j| {
                let num = (cosine_similarity(u.row(j), v.row(j)).unwrap() / tau).exp();
                let den: f64 = (0..n)
                    .map(|k| (cosine_similarity(u.row(j), v.row(k)).unwrap() / tau).exp())
                    .sum();
                -(num / den).ln()
            })
            .collect()
    }

    #[test]
    fn single_pair_is_zero() {
        let u = Matrix::from_rows(&[vec![0.3, -1.2, 2.0]]).unwrap();
        let v = Matrix::from_rows(&[vec![5.0, 0.1, 0.0]]).unwrap();
        assert_eq!(ntxent_directional(&u, &v, 0.07).unwrap(), vec![0.0]);
    }

    #[test]
    fn orthogonal_pair_example() {
        let u = Matrix::identity(2);
        let l = ntxent_directional(&u, &u, 1.0).unwrap();
        let expect = (1.0 + (-1.0f64).exp()).ln();
        assert!((expect - 0.313_261_687_518_222_8).abs() < 1e-15);
        for lj in l {
            assert!((lj - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_rows_give_log_n() {
        let row = vec![0.4, -0.1, 0.9];
        let u = Matrix::from_rows(&vec![row; 4]).unwrap();
        for lj in ntxent_directional(&u, &u, 0.1).unwrap() {
            assert!((lj - 4f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn matches_naive_enumeration() {
        let mut rng = rng_stream(1, "ntxent-test");
        for &n in &[1, 2, 7, 32] {
            for &tau in &[0.05, 0.1, 1.0] {
                let u = random_matrix(n, 6, &mut rng);
                let v = random_matrix(n, 6, &mut rng);
                let fast = ntxent_directional(&u, &v, tau).unwrap();
                let slow = naive_directional(&u, &v, tau);
                for (a, b) in fast.iter().zip(&slow) {
                    assert!((a - b).abs() < 1e-10, "n={n} tau={tau}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn zero_row_rejected() {
        let u = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert!(ntxent_directional(&u, &Matrix::identity(2), 0.1).is_err());
        assert!(bimodal_loss(
            &Matrix::identity(2),
            &Matrix::identity(3),
            &ContrastiveConfig::default()
        )
        .is_err());
    }

    #[test]
    fn bimodal_degenerate_weights() {
        let mut rng = rng_stream(2, "ntxent-test");
        let u = random_matrix(5, 4, &mut rng);
        let v = random_matrix(5, 4, &mut rng);
        let cfg = ContrastiveConfig { tau: 0.2, alpha: 1.0 };
        let l = bimodal_loss(&u, &v, &cfg).unwrap();
        let mean = ntxent_directional(&u, &v, 0.2).unwrap().iter().sum::<f64>() / 5.0;
        assert!((l.value - mean).abs() < 1e-12);

        // symmetric inputs: value independent of alpha
        let a = bimodal_loss(&u, &u, &ContrastiveConfig { tau: 0.2, alpha: 0.1 }).unwrap();
        let b = bimodal_loss(&u, &u, &ContrastiveConfig { tau: 0.2, alpha: 0.9 }).unwrap();
        assert!((a.value - b.value).abs() < 1e-12);

        // swapping inputs mirrors alpha
        let c = bimodal_loss(&v, &u, &ContrastiveConfig { tau: 0.2, alpha: 0.0 }).unwrap();
        assert!((c.value - l.value).abs() < 1e-12);
    }

    #[test]
    fn trimodal_composes() {
        let mut rng = rng_stream(3, "ntxent-test");
        let cfg = ContrastiveConfig { tau: 0.3, alpha: 0.4 };
        let (v, i, t) = (
            random_matrix(4, 6, &mut rng),
            random_matrix(4, 6, &mut rng),
            random_matrix(4, 6, &mut rng),
        );
        let tri = trimodal_loss(&v, &i, &t, &cfg).unwrap();
        let sum = bimodal_loss(&v, &i, &cfg).unwrap().value
            + bimodal_loss(&v, &t, &cfg).unwrap().value
            + bimodal_loss(&i, &t, &cfg).unwrap().value;
        assert!((tri.value - sum).abs() < 1e-12);
        let same = trimodal_loss(&v, &v, &v, &cfg).unwrap();
        assert!((same.value - 3.0 * bimodal_loss(&v, &v, &cfg).unwrap().value).abs() < 1e-12);
        assert!(trimodal_loss(&v, &i, &random_matrix(3, 6, &mut rng), &cfg).is_err());
    }

    #[test]
    fn large_tau_tends_to_log_n() {
        let mut rng = rng_stream(4, "ntxent-test");
        let u = random_matrix(6, 3, &mut rng);
        let v = random_matrix(6, 3, &mut rng);
        for l in ntxent_directional(&u, &v, 1e6).unwrap() {
            assert!((l - 6f64.ln()).abs() < 1e-3);
        }
    }

    #[test]
    fn small_tau_is_stable() {
        let mut rng = rng_stream(5, "ntxent-test");
        let u = random_matrix(8, 4, &mut rng);
        let v = random_matrix(8, 4, &mut rng);
        let out = bimodal_loss(&u, &v, &ContrastiveConfig { tau: 1e-4, alpha: 0.5 }).unwrap();
        assert!(out.value.is_finite());
        assert!(out.grads.iter().all(Matrix::is_finite));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = rng_stream(6, "ntxent-test");
        for &alpha in &[0.0, 0.3, 0.5, 1.0] {
            let cfg = ContrastiveConfig { tau: 0.5, alpha };
            let inputs = vec![random_matrix(5, 8, &mut rng), random_matrix(5, 8, &mut rng)];
            let err = check_loss_gradients(&inputs, |m| bimodal_loss(&m[0], &m[1], &cfg).unwrap());
            assert!(err < 1e-5, "alpha {alpha}: {err}");
        }
        let cfg = ContrastiveConfig { tau: 0.2, alpha: 0.5 };
        let inputs: Vec<Matrix> = (0..3).map(|_| random_matrix(4, 6, &mut rng)).collect();
        let err = check_loss_gradients(&inputs, |m| trimodal_loss(&m[0], &m[1], &m[2], &cfg).unwrap());
        assert!(err < 1e-5, "trimodal: {err}");
    }
}
