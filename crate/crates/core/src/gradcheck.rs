//! Central finite-difference checks shared by unit tests.

use crate::linalg::Matrix;
use crate::losses::LossOutput;
use crate::rng::Rng;

pub const FD_EPS: f64 = 1e-6;

pub fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.normal()).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

/// `‖a − n‖ / max(‖a‖, ‖n‖)` with a floor on the denominator.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).powi(2))
        .sum::<f64>()
        .sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    diff / na.max(nn).max(1e-12)
}

/// Worst per-input relative error between `f`'s analytic gradients and
/// central differences.
pub fn check_loss_gradients(inputs: &[Matrix], f: impl Fn(&[Matrix]) -> LossOutput) -> f64 {
    let analytic = f(inputs).grads;
    let mut worst = 0.0f64;
    let mut work = inputs.to_vec();
    for (t, grad) in analytic.iter().enumerate() {
        let mut numeric = vec![0.0; grad.as_slice().len()];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = work[t].as_slice()[i];
            work[t].as_mut_slice()[i] = orig + FD_EPS;
            let up = f(&work).value;
            work[t].as_mut_slice()[i] = orig - FD_EPS;
            let down = f(&work).value;
            work[t].as_mut_slice()[i] = orig;
            *slot = (up - down) / (2.0 * FD_EPS);
        }
        worst = worst.max(relative_error(grad.as_slice(), &numeric));
    }
    worst
}
