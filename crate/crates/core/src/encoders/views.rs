use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::mlp::{MlpCache, MlpGrads, MlpHead};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Mean,
    Max,
}

impl Pooling {
    pub fn code(self) -> u32 {
        match self {
            Pooling::Mean => 0,
            Pooling::Max => 1,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Pooling::Mean),
            1 => Some(Pooling::Max),
            _ => None,
        }
    }
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Mean => "mean",
            Pooling::Max => "max",
        })
    }
}

impl FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Pooling::Mean),
            "max" => Ok(Pooling::Max),
            other => Err(Error::invalid(format!("unknown pooling {other:?}"))),
        }
    }
}

/// Shared per-view head followed by view pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewEncoder {
    pub head: MlpHead,
    pub pooling: Pooling,
}

#[derive(Debug, Clone)]
pub struct ViewsCache {
    heads: Vec<MlpCache>,
    /// For max pooling, the winning view of each output component.
    argmax: Vec<usize>,
}

impl ViewEncoder {
    pub fn new(head: MlpHead, pooling: Pooling) -> Self {
        Self { head, pooling }
    }

    pub fn encode<V: AsRef<[f64]>>(&self, views: &[V]) -> Result<(Vec<f64>, ViewsCache)> {
        if views.is_empty() {
            return Err(Error::invalid("view encoder needs at least one view"));
        }
        let mut outputs = Vec::with_capacity(views.len());
        let mut heads = Vec::with_capacity(views.len());
        for v in views {
            let (y, c) = self.head.forward(v.as_ref())?;
            outputs.push(y);
            heads.push(c);
        }
        let d = self.head.output_dim();
        let (pooled, argmax) = match self.pooling {
            Pooling::Mean => {
                let m = views.len() as f64;
                let mut acc = vec![0.0; d];
                for y in &outputs {
                    for (a, v) in acc.iter_mut().zip(y) {
                        *a += v;
                    }
                }
                acc.iter_mut().for_each(|a| *a /= m);
                (acc, Vec::new())
            }
            Pooling::Max => {
                let mut best = outputs[0].clone();
                let mut arg = vec![0usize; d];
                for (m, y) in outputs.iter().enumerate().skip(1) {
                    for c in 0..d {
                        // strict comparison keeps ties at the lowest view index
                        if y[c] > best[c] {
                            best[c] = y[c];
                            arg[c] = m;
                        }
                    }
                }
                (best, arg)
            }
        };
        Ok((pooled, ViewsCache { heads, argmax }))
    }

    pub fn backward(&self, cache: &ViewsCache, dy: &[f64], grads: &mut MlpGrads) -> Result<()> {
        let m = cache.heads.len();
        match self.pooling {
            Pooling::Mean => {
                let share: Vec<f64> = dy.iter().map(|g| g / m as f64).collect();
                for c in &cache.heads {
                    self.head.backward(c, &share, grads)?;
                }
            }
            Pooling::Max => {
                let mut routed = vec![vec![0.0; dy.len()]; m];
                for (comp, (&view, &g)) in cache.argmax.iter().zip(dy).enumerate() {
                    routed[view][comp] = g;
                }
                for (c, r) in cache.heads.iter().zip(&routed) {
                    if r.iter().any(|&g| g != 0.0) {
                        self.head.backward(c, r, grads)?;
                    }
                }
            }
        }
        Ok(())
    }
}

pub fn encode_views<V: AsRef<[f64]>>(enc: &ViewEncoder, views: &[V]) -> Result<(Vec<f64>, ViewsCache)> {
    enc.encode(views)
}
