use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::Rng;

static NEXT_GENERATION: AtomicU64 = AtomicU64::new(1);

fn next_generation() -> u64 {
    NEXT_GENERATION.fetch_add(1, Ordering::Relaxed)
}

/// Two-layer projection head `y = W2·relu(W1·x + b1) + b2`.
///
/// Every mutable borrow of the parameters stamps a fresh generation, and
/// caches remember the generation they were produced under, so a backward
/// pass against parameters that changed after the forward pass is rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpHead {
    w1: Matrix,
    b1: Vec<f64>,
    w2: Matrix,
    b2: Vec<f64>,
    generation: u64,
}

/// Gradients with the same shapes as an [`MlpHead`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
}

/// Values retained by [`MlpHead::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    input: Vec<f64>,
    pre: Vec<f64>,
    hidden: Vec<f64>,
    generation: u64,
}

impl MlpCache {
    pub fn hidden(&self) -> &[f64] {
        &self.hidden
    }
}

impl MlpHead {
    pub fn from_parts(w1: Matrix, b1: Vec<f64>, w2: Matrix, b2: Vec<f64>) -> Result<Self> {
        if b1.len() != w1.rows() {
            return Err(Error::dim("mlp b1", w1.rows(), b1.len()));
        }
        if w2.cols() != w1.rows() {
            return Err(Error::dim("mlp w2 columns", w1.rows(), w2.cols()));
        }
        if b2.len() != w2.rows() {
            return Err(Error::dim("mlp b2", w2.rows(), b2.len()));
        }
        let head = Self {
            w1,
            b1,
            w2,
            b2,
            generation: next_generation(),
        };
        if !head.is_finite() {
            return Err(Error::invalid("mlp parameters must be finite"));
        }
        Ok(head)
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            w1: Matrix::zeros(hidden, input),
            b1: vec![0.0; hidden],
            w2: Matrix::zeros(output, hidden),
            b2: vec![0.0; output],
            generation: next_generation(),
        }
    }

    /// Weights `U(-1/√fan_in, 1/√fan_in)`, biases zero.
    pub fn init(input: usize, hidden: usize, output: usize, rng: &mut Rng) -> Self {
        let mut head = Self::zeros(input, hidden, output);
        let a1 = 1.0 / (input.max(1) as f64).sqrt();
        head.w1
            .as_mut_slice()
            .iter_mut()
            .for_each(|w| *w = rng.uniform_range(-a1, a1));
        let a2 = 1.0 / (hidden.max(1) as f64).sqrt();
        head.w2
            .as_mut_slice()
            .iter_mut()
            .for_each(|w| *w = rng.uniform_range(-a2, a2));
        head
    }

    pub fn input_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.rows()
    }

    pub fn w1(&self) -> &Matrix {
        &self.w1
    }

    pub fn b1(&self) -> &[f64] {
        &self.b1
    }

    pub fn w2(&self) -> &Matrix {
        &self.w2
    }

    pub fn b2(&self) -> &[f64] {
        &self.b2
    }

    pub fn is_finite(&self) -> bool {
        self.w1.is_finite() && self.w2.is_finite() && self.b1.iter().chain(&self.b2).all(|v| v.is_finite())
    }

    /// `[w1, b1, w2, b2]`, invalidating outstanding caches.
    pub fn tensors_mut(&mut self) -> [&mut [f64]; 4] {
        self.generation = next_generation();
        [
            self.w1.as_mut_slice(),
            &mut self.b1,
            self.w2.as_mut_slice(),
            &mut self.b2,
        ]
    }

    pub fn tensors(&self) -> [(&'static str, Vec<usize>, &[f64]); 4] {
        [
            ("w1", vec![self.w1.rows(), self.w1.cols()], self.w1.as_slice()),
            ("b1", vec![self.b1.len()], &self.b1),
            ("w2", vec![self.w2.rows(), self.w2.cols()], self.w2.as_slice()),
            ("b2", vec![self.b2.len()], &self.b2),
        ]
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            w1: Matrix::zeros(self.w1.rows(), self.w1.cols()),
            b1: vec![0.0; self.b1.len()],
            w2: Matrix::zeros(self.w2.rows(), self.w2.cols()),
            b2: vec![0.0; self.b2.len()],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
        if x.len() != self.input_dim() {
            return Err(Error::dim("mlp input", self.input_dim(), x.len()));
        }
        let mut pre = self.w1.matvec(x);
        for (p, b) in pre.iter_mut().zip(&self.b1) {
            *p += b;
        }
        let hidden: Vec<f64> = pre.iter().map(|&p| if p > 0.0 { p } else { 0.0 }).collect();
        let mut y = self.w2.matvec(&hidden);
        for (o, b) in y.iter_mut().zip(&self.b2) {
            *o += b;
        }
        Ok((
            y,
            MlpCache {
                input: x.to_vec(),
                pre,
                hidden,
                generation: self.generation,
            },
        ))
    }

    /// Accumulates the gradients of `y·dy` into `grads` and returns `∂(y·dy)/∂x`.
    /// The ReLU derivative at exactly zero is taken as zero.
    pub fn backward(&self, cache: &MlpCache, dy: &[f64], grads: &mut MlpGrads) -> Result<Vec<f64>> {
        if cache.generation != self.generation || cache.input.len() != self.input_dim() {
            return Err(Error::StaleCache);
        }
        if dy.len() != self.output_dim() {
            return Err(Error::dim("mlp output gradient", self.output_dim(), dy.len()));
        }
        grads.w2.add_outer(dy, &cache.hidden, 1.0);
        for (g, d) in grads.b2.iter_mut().zip(dy) {
            *g += d;
        }
        let mut dpre = self.w2.matvec_t(dy);
        for (d, &p) in dpre.iter_mut().zip(&cache.pre) {
            if p <= 0.0 {
                *d = 0.0;
            }
        }
        grads.w1.add_outer(&dpre, &cache.input, 1.0);
        for (g, d) in grads.b1.iter_mut().zip(&dpre) {
            *g += d;
        }
        Ok(self.w1.matvec_t(&dpre))
    }
}

impl MlpGrads {
    pub fn tensors(&self) -> [&[f64]; 4] {
        [self.w1.as_slice(), &self.b1, self.w2.as_slice(), &self.b2]
    }

    pub fn zero(&mut self) {
        self.w1.fill(0.0);
        self.w2.fill(0.0);
        self.b1.iter_mut().for_each(|v| *v = 0.0);
        self.b2.iter_mut().for_each(|v| *v = 0.0);
    }
}

pub fn mlp_forward(head: &MlpHead, x: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
    head.forward(x)
}

/// Fresh gradients of `y·dy` for one cache plus the input gradient.
pub fn mlp_backward(head: &MlpHead, cache: &MlpCache, dy: &[f64]) -> Result<(MlpGrads, Vec<f64>)> {
    let mut grads = head.zero_grads();
    let dx = head.backward(cache, dy, &mut grads)?;
    Ok((grads, dx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_stream;

    #[test]
    fn identity_weights_clamp_negatives() {
        let head = MlpHead::from_parts(Matrix::identity(2), vec![0.0; 2], Matrix::identity(2), vec![0.0; 2]).unwrap();
        let (y, _) = head.forward(&[1.0, -2.0]).unwrap();
        assert_eq!(y, vec![1.0, 0.0]);
    }

    #[test]
    fn bias_only_head() {
        let head = MlpHead::from_parts(
            Matrix::zeros(3, 2),
            vec![0.0; 3],
            Matrix::zeros(4, 3),
            vec![5.0, 1.0, -2.0, 0.5],
        )
        .unwrap();
        let (y, _) = head.forward(&[0.3, 0.7]).unwrap();
        assert_eq!(y, vec![5.0, 1.0, -2.0, 0.5]);
    }

    #[test]
    fn forward_matches_formula_reevaluation() {
        let mut rng = rng_stream(3, "mlp-test");
        let head = MlpHead::init(5, 7, 4, &mut rng);
        let x: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
        let (y, _) = head.forward(&x).unwrap();
        // independent triple loop
        let mut hidden = [0.0; 7];
        for (h, hv) in hidden.iter_mut().enumerate() {
            let mut s = head.b1()[h];
            for (i, xi) in x.iter().enumerate() {
                s += head.w1()[(h, i)] * xi;
            }
            *hv = s.max(0.0);
        }
        for (o, yo) in y.iter().enumerate() {
            let mut s = head.b2()[o];
            for (h, hv) in hidden.iter().enumerate() {
                s += head.w2()[(o, h)] * hv;
            }
            assert!((s - yo).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = rng_stream(4, "mlp-test");
        let head = MlpHead::init(3, 4, 2, &mut rng);
        let (_, cache) = head.forward(&[0.5, -1.0, 2.0]).unwrap();
        let (g, dx) = mlp_backward(&head, &cache, &[0.0, 0.0]).unwrap();
        assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
        assert!(dx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_regime_dw2_is_outer_product() {
        // W1 = I with positive inputs keeps every unit active.
        let mut rng = rng_stream(5, "mlp-test");
        let w2 = Matrix::from_vec(2, 3, (0..6).map(|_| rng.normal()).collect()).unwrap();
        let head = MlpHead::from_parts(Matrix::identity(3), vec![0.1; 3], w2, vec![0.0; 2]).unwrap();
        let (_, cache) = head.forward(&[1.0, 2.0, 3.0]).unwrap();
        let dy = [0.7, -1.3];
        let (g, _) = mlp_backward(&head, &cache, &dy).unwrap();
        let hidden = [1.1, 2.1, 3.1];
        for o in 0..2 {
            for h in 0..3 {
                assert!((g.w2[(o, h)] - dy[o] * hidden[h]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn stale_cache_rejected() {
        let mut rng = rng_stream(6, "mlp-test");
        let mut head = MlpHead::init(2, 2, 2, &mut rng);
        let (_, cache) = head.forward(&[1.0, 1.0]).unwrap();
        head.tensors_mut()[3][0] += 1.0;
        assert!(matches!(
            mlp_backward(&head, &cache, &[1.0, 0.0]),
            Err(Error::StaleCache)
        ));
        let other = MlpHead::init(2, 2, 2, &mut rng);
        assert!(matches!(
            mlp_backward(&other, &cache, &[1.0, 0.0]),
            Err(Error::StaleCache)
        ));
    }

    #[test]
    fn shape_errors() {
        let head = MlpHead::zeros(3, 2, 2);
        assert!(head.forward(&[1.0]).is_err());
        assert!(MlpHead::from_parts(Matrix::zeros(2, 3), vec![0.0; 3], Matrix::zeros(2, 2), vec![0.0; 2]).is_err());
        assert!(MlpHead::from_parts(Matrix::zeros(2, 3), vec![0.0; 2], Matrix::zeros(2, 3), vec![0.0; 2]).is_err());
    }

    #[test]
    fn init_bounds_and_zero_biases() {
        let mut rng = rng_stream(8, "mlp-test");
        let head = MlpHead::init(16, 9, 4, &mut rng);
        assert!(head.w1().as_slice().iter().all(|w| w.abs() <= 0.25));
        assert!(head.w2().as_slice().iter().all(|w| w.abs() <= 1.0 / 3.0));
        assert!(head.b1().iter().chain(head.b2()).all(|&b| b == 0.0));
    }
}
