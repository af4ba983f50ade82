use super::mlp::{MlpCache, MlpGrads, MlpHead};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Masked-mean bag of words followed by a projection head.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoder {
    pub word_embeddings: Matrix,
    pub head: MlpHead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextGrads {
    pub word_embeddings: Matrix,
    pub head: MlpGrads,
}

#[derive(Debug, Clone)]
pub struct TextCache {
    tokens: Vec<u32>,
    head: MlpCache,
}

impl TextEncoder {
    pub fn new(word_embeddings: Matrix, head: MlpHead) -> Result<Self> {
        if head.input_dim() != word_embeddings.cols() {
            return Err(Error::dim("text head input", word_embeddings.cols(), head.input_dim()));
        }
        Ok(Self { word_embeddings, head })
    }

    pub fn vocab_size(&self) -> usize {
        self.word_embeddings.rows()
    }

    pub fn word_dim(&self) -> usize {
        self.word_embeddings.cols()
    }

    pub fn zero_grads(&self) -> TextGrads {
        TextGrads {
            word_embeddings: Matrix::zeros(self.word_embeddings.rows(), self.word_embeddings.cols()),
            head: self.head.zero_grads(),
        }
    }

    /// Mean of the word rows at non-pad positions, fed through the head.
    pub fn encode(&self, token_ids: &[u32], pad_id: u32) -> Result<(Vec<f64>, TextCache)> {
        let tokens: Vec<u32> = token_ids.iter().copied().filter(|&t| t != pad_id).collect();
        if tokens.is_empty() {
            return Err(Error::invalid("text input has no non-pad tokens"));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= self.vocab_size()) {
            return Err(Error::invalid(format!(
                "token id {bad} outside vocabulary of {}",
                self.vocab_size()
            )));
        }
        let mut mean = vec![0.0; self.word_dim()];
        for &t in &tokens {
            for (m, w) in mean.iter_mut().zip(self.word_embeddings.row(t as usize)) {
                *m += w;
            }
        }
        let n = tokens.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        let (y, head) = self.head.forward(&mean)?;
        Ok((y, TextCache { tokens, head }))
    }

    pub fn backward(&self, cache: &TextCache, dy: &[f64], grads: &mut TextGrads) -> Result<()> {
        let dmean = self.head.backward(&cache.head, dy, &mut grads.head)?;
        let n = cache.tokens.len() as f64;
        for &t in &cache.tokens {
            for (g, d) in grads.word_embeddings.row_mut(t as usize).iter_mut().zip(&dmean) {
                *g += d / n;
            }
        }
        Ok(())
    }
}

impl TextGrads {
    pub fn zero(&mut self) {
        self.word_embeddings.fill(0.0);
        self.head.zero();
    }
}

pub fn encode_text(enc: &TextEncoder, token_ids: &[u32], pad_id: u32) -> Result<(Vec<f64>, TextCache)> {
    enc.encode(token_ids, pad_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_stream;

    fn encoder() -> TextEncoder {
        let mut rng = rng_stream(10, "text-test");
        let emb = Matrix::from_vec(6, 4, (0..24).map(|_| rng.normal()).collect()).unwrap();
        TextEncoder::new(emb, MlpHead::init(4, 5, 3, &mut rng)).unwrap()
    }

    #[test]
    fn single_token_is_head_of_row() {
        let enc = encoder();
        let (y, _) = enc.encode(&[3], 0).unwrap();
        let (expect, _) = enc.head.forward(enc.word_embeddings.row(3)).unwrap();
        assert_eq!(y, expect);
    }

    #[test]
    fn pads_are_masked() {
        let enc = encoder();
        assert_eq!(enc.encode(&[2, 0, 0], 0).unwrap().0, enc.encode(&[2], 0).unwrap().0);
        assert!(enc.encode(&[0, 0], 0).is_err());
        assert!(enc.encode(&[9], 0).is_err());
    }

    #[test]
    fn two_token_mean() {
        let enc = encoder();
        let (y, _) = enc.encode(&[1, 4, 0], 0).unwrap();
        let mid: Vec<f64> = enc
            .word_embeddings
            .row(1)
            .iter()
            .zip(enc.word_embeddings.row(4))
            .map(|(a, b)| (a + b) / 2.0)
            .collect();
        let (expect, _) = enc.head.forward(&mid).unwrap();
        for (a, b) in y.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pad_row_gets_no_gradient() {
        let enc = encoder();
        let (_, cache) = enc.encode(&[1, 1, 5, 0, 0], 0).unwrap();
        let mut g = enc.zero_grads();
        enc.backward(&cache, &[1.0, -0.5, 0.25], &mut g).unwrap();
        assert!(g.word_embeddings.row(0).iter().all(|&v| v == 0.0));
        assert!(g.word_embeddings.row(2).iter().all(|&v| v == 0.0));
        // the repeated token receives twice the single-occurrence share
        for (a, b) in g.word_embeddings.row(1).iter().zip(g.word_embeddings.row(5)) {
            assert!((a - 2.0 * b).abs() < 1e-12);
        }
    }
}
